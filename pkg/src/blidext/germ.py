"""Local maps and their extension to global representatives.

A :class:`LocalMap` is only defined on a ball around 0. Composing it with
a blid map whose image fits inside that ball gives a total map which
agrees with the local one near 0 (:func:`extend`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .blid import BlidMap, blid_metric_scale, blid_scale
from .errors import ArgumentError, DomainFault
from .funcspace import (
    GridFunction,
    JetGridFunction,
    NormFamilyDescriptor,
    element_norm,
    frechet_metric,
    iterated_integral_grid,
    reconstruct,
    zeros_like,
)

__all__ = [
    "LocalMap",
    "GlobalMap",
    "extend",
    "apply_global",
    "CATALOG",
    "catalog_map",
    "compose_pointwise",
]


@dataclass(frozen=True)
class LocalMap:
    """Representative of a germ at 0, defined on ``{norm(x) < domain_radius}``.

    ``rule`` must be pure; calling the map outside its ball raises
    :class:`DomainFault`.
    """

    domain_radius: float
    rule: Callable
    norm: Callable = element_norm
    name: str = ""
    norm_kind: str = "natural"

    def __post_init__(self):
        if not self.domain_radius > 0:
            raise ArgumentError("domain_radius must be positive")

    def __call__(self, x):
        size = self.norm(x)
        if not size < self.domain_radius:
            raise DomainFault(f"{self.name or 'local map'} applied at norm {size:g} >= {self.domain_radius:g}")
        return self.rule(x)


@dataclass(frozen=True)
class GlobalMap:
    """``F(x) = f(H(x))``."""

    inner: BlidMap
    outer: LocalMap

    def __post_init__(self):
        reach = self.inner.metric_radius if self.inner.metric_radius is not None else self.inner.bound_N
        if reach is None or not reach < self.outer.domain_radius:
            raise ArgumentError(f"blid image radius {reach} does not fit in domain radius {self.outer.domain_radius}")

    def __call__(self, x):
        return apply_global(self, x)


def apply_global(F: GlobalMap, x):
    return F.outer(F.inner(x))


def extend(f: LocalMap, base, margin: float = 0.5, descriptor: NormFamilyDescriptor | None = None) -> GlobalMap:
    """Global representative of the germ of ``f``.

    ``base`` is either a blid map of a normed space (rescaled with
    :func:`blid_scale`) or a windowed family for a Frechet space (rescaled
    with :func:`blid_metric_scale`; ``descriptor`` required, and ``f.norm``
    should then be the metric distance to 0).
    """
    if not 0.0 < margin < 1.0:
        raise ArgumentError("margin must lie in (0, 1)")
    c = margin * f.domain_radius
    if isinstance(base, BlidMap):
        H = blid_scale(base, c)
    else:
        if descriptor is None:
            raise ArgumentError("a windowed family needs its norm descriptor")
        H = blid_metric_scale(list(base), c, descriptor)
    return GlobalMap(H, f)


def metric_norm(descriptor: NormFamilyDescriptor) -> Callable:
    """``x -> d(x, 0)`` for use as a LocalMap norm on a Frechet space."""
    return lambda x: frechet_metric(x, zeros_like(x), descriptor)


# ---------------------------------------------------------------------------
# demo catalog


def _poly_mul(a, b, order):
    out = np.zeros_like(a)
    for i in range(order + 1):
        for j in range(order + 1 - i):
            out[i + j] += a[i] * b[j]
    return out


def compose_pointwise(phi_derivs: Callable, x: JetGridFunction) -> JetGridFunction:
    """Jet of ``t -> phi(x(t))`` from the jet of x by truncated Taylor composition.

    ``phi_derivs(u, q)`` returns ``[phi(u), phi'(u), ..., phi^(q)(u)]``.
    """
    q = x.q
    derivs = np.array([reconstruct(x, j).samples for j in range(q + 1)])
    coeffs = derivs / np.array([math.factorial(j) for j in range(q + 1)])[:, None]
    delta = coeffs.copy()
    delta[0] = 0.0
    phis = phi_derivs(coeffs[0], q)
    total = np.zeros_like(coeffs)
    power = np.zeros_like(coeffs)
    power[0] = 1.0
    for m in range(q + 1):
        total += phis[m] / math.factorial(m) * power
        power = _poly_mul(power, delta, q)
    out = total * np.array([math.factorial(j) for j in range(q + 1)])[:, None]
    i0 = x.top.node_index(0.0)
    return JetGridFunction(q, out[:q, i0], x.top.with_samples(out[q]))


def _square_derivs(u, q):
    return [u * u, 2.0 * u, 2.0 * np.ones_like(u)] + [np.zeros_like(u)] * max(0, q - 1)


def _expm1_derivs(u, q):
    e = np.exp(u)
    return [np.expm1(u)] + [e] * q


def _abs_derivs(u, q):
    return [np.abs(u), np.sign(u)] + [np.zeros_like(u)] * q


def _pointwise(phi, derivs):
    def rule(x):
        if isinstance(x, GridFunction):
            return x.with_samples(phi(x.samples))
        if isinstance(x, JetGridFunction):
            return compose_pointwise(derivs, x)
        return phi(np.asarray(x, dtype=float))

    return rule


def _integral_square(x):
    """``t -> int_0^t x(s)^2 ds``."""
    if isinstance(x, GridFunction):
        return iterated_integral_grid(x.with_samples(x.samples**2), 1)
    if isinstance(x, JetGridFunction):
        if x.q == 0:
            return JetGridFunction(0, [], _integral_square(x.top))
        sq = compose_pointwise(_square_derivs, x)
        jet = [0.0] + [reconstruct(sq, j).samples[x.top.node_index(0.0)] for j in range(x.q - 1)]
        return JetGridFunction(x.q, jet, reconstruct(sq, x.q - 1))
    raise ArgumentError("integral_square acts on function-space elements only")


def _quadratic_swap(x):
    x = np.asarray(x, dtype=float)
    return np.stack([x[..., 1] ** 2, x[..., 0] ** 2], axis=-1)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    rule: Callable
    differentiable: bool
    description: str


CATALOG = {
    e.name: e
    for e in (
        CatalogEntry("square", _pointwise(np.square, _square_derivs), True, "pointwise square x(t)^2"),
        CatalogEntry("expm1", _pointwise(np.expm1, _expm1_derivs), True, "pointwise exp(x(t)) - 1"),
        CatalogEntry("integral_square", _integral_square, True, "t -> int_0^t x(s)^2 ds"),
        CatalogEntry("abs", _pointwise(np.abs, _abs_derivs), False, "pointwise |x(t)| (not differentiable at 0)"),
        CatalogEntry("quadratic_swap", _quadratic_swap, True, "(x1, x2) -> (x2^2, x1^2) on R^2"),
        CatalogEntry("identity", lambda x: x, True, "identity"),
    )
}


def catalog_map(name: str, domain_radius: float = 1.0, norm: Callable = element_norm) -> LocalMap:
    try:
        entry = CATALOG[name]
    except KeyError:
        raise ArgumentError(f"unknown catalog map {name!r}; known: {sorted(CATALOG)}") from None
    return LocalMap(domain_radius, entry.rule, norm, name)
