"""Blid maps: bounded, globally defined maps that equal the identity near 0.

Constructions
-------------
* ``PointwiseC0``: ``H(x)(t) = h(x(t)) x(t)`` on grid functions.
* ``JetCq``: bump applied to every jet entry and pointwise to the top
  derivative; reconstructing the result gives the polynomial part plus the
  iterated integral of ``h(x^(q)) x^(q)``.
* ``WindowedFamilyMember``: the k-th map of a family for a Frechet space
  with countably many norms, bounded by ``a e^k`` in the k-th norm.
* ``FiniteDim``: ``H(x) = h(|x|) x`` on R^n.
* ``Scaled``: ``x -> scale_out * H(scale_in * x)``.

Every map carries an ``identity_radius`` (H(x) = x whenever the governing
norm of x is below it) and a ``bound_N`` on the output norm.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .bump import BumpFunction
from .errors import ArgumentError, CapacityError, StateError
from .funcspace import (
    DEFAULT_NODES,
    GridFunction,
    JetGridFunction,
    NormFamilyDescriptor,
    NormKind,
    as_order,
    frechet_metric,
    jet_sup,
    norm_q,
    norm_sup,
    norm_windowed,
    random_grid_function,
    random_jet,
)

__all__ = [
    "BlidKind",
    "BlidMap",
    "CertificationReport",
    "pointwise_c0_blid",
    "jet_cq_blid",
    "bump_to_blid",
    "blid_c0_apply",
    "blid_cq_apply",
    "blid_scale",
    "metric_scale_index",
    "blid_metric_scale",
    "blid_windowed_family",
    "certify_blid",
    "identity_deviation",
    "sample_element",
    "metric_containment",
]

IDENTITY_TOL = 1e-12
BOUND_TOL = 1e-9
AMPLITUDES = tuple(10.0**p for p in range(-2, 7))


class BlidKind(str, enum.Enum):
    POINTWISE_C0 = "PointwiseC0"
    JET_CQ = "JetCq"
    SCALED = "Scaled"
    WINDOWED = "WindowedFamilyMember"
    FINITE_DIM = "FiniteDim"


@dataclass(frozen=True)
class BlidMap:
    kind: BlidKind
    bump: BumpFunction
    q: int = 0
    k: int = 0
    scale_in: float = 1.0
    scale_out: float = 1.0
    bound_N: float | None = None
    identity_radius: float = 1.0
    base_kind: BlidKind | None = None
    descriptor: NormFamilyDescriptor | None = None
    grid: tuple[float, float, int] | None = None
    dim: int | None = None
    # set by blid_metric_scale: the image lies in the metric ball of this radius
    metric_radius: float | None = None
    empirical_bound: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", BlidKind(self.kind))
        if self.identity_radius <= 0:
            raise ArgumentError("identity_radius must be positive")
        if self.bound_N is not None and not math.isfinite(self.bound_N):
            raise ArgumentError("bound_N must be finite")

    @property
    def effective_kind(self) -> BlidKind:
        return self.base_kind if self.kind is BlidKind.SCALED else self.kind

    @property
    def order(self) -> int:
        """Jet order the map reads and writes (function-space kinds)."""
        if self.effective_kind is BlidKind.WINDOWED:
            d = self.descriptor
            return d.q_cap if d.kind is NormKind.CQ_REAL_LINE else min(self.k, d.q_cap)
        return self.q

    def __call__(self, x):
        kind = self.effective_kind
        if kind is BlidKind.POINTWISE_C0:
            return blid_c0_apply(self, x)
        if kind is BlidKind.FINITE_DIM:
            return _finite_apply(self, x)
        return _jet_apply(self, x)

    # norms ---------------------------------------------------------------

    def governing_norm(self, x) -> float:
        """Norm of x in which ``identity_radius`` is stated."""
        kind = self.effective_kind
        if kind is BlidKind.POINTWISE_C0:
            return norm_sup(x)
        if kind is BlidKind.FINITE_DIM:
            return float(np.linalg.norm(x))
        return jet_sup(as_order(x, self.order))

    def output_norm(self, y) -> float:
        """Norm of an output in which ``bound_N`` is stated."""
        kind = self.effective_kind
        if kind is BlidKind.POINTWISE_C0:
            return norm_sup(y)
        if kind is BlidKind.FINITE_DIM:
            return float(np.linalg.norm(y))
        if kind is BlidKind.JET_CQ:
            return norm_q(y)
        return norm_windowed(y, self.k, self.descriptor)

    def parameters(self) -> dict:
        out = {
            "kind": self.kind.value,
            "base_kind": self.base_kind.value if self.base_kind else None,
            "bump": self.bump.to_dict(),
            "q": self.q,
            "k": self.k,
            "scale_in": self.scale_in,
            "scale_out": self.scale_out,
            "bound_N": self.bound_N,
            "identity_radius": self.identity_radius,
        }
        if self.descriptor is not None:
            out["descriptor"] = self.descriptor.to_dict()
        if self.grid is not None:
            out["grid"] = list(self.grid)
        if self.dim is not None:
            out["dim"] = self.dim
        if self.metric_radius is not None:
            out["metric_radius"] = self.metric_radius
        return out


def _pointwise(H: BlidMap, u: np.ndarray) -> np.ndarray:
    """``scale_out * h(scale_in u) * scale_in u``, returning u itself where h == 1."""
    v = H.scale_in * u
    hv = H.bump(v)
    return np.where(hv == 1.0, u, H.scale_out * (hv * v))


def _check_kind(H: BlidMap, kind: BlidKind):
    if H.effective_kind is not kind:
        raise ArgumentError(f"blid map of kind {H.effective_kind.value} cannot act as {kind.value}")


def blid_c0_apply(H: BlidMap, x: GridFunction) -> GridFunction:
    """``H(x)(t) = h(x(t)) x(t)`` node by node."""
    _check_kind(H, BlidKind.POINTWISE_C0)
    if isinstance(x, JetGridFunction) and x.q == 0:
        return JetGridFunction(0, [], blid_c0_apply(H, x.top))
    return x.with_samples(_pointwise(H, x.samples))


def blid_cq_apply(H: BlidMap, x: JetGridFunction) -> JetGridFunction:
    """Jet blid map on C^q: bump on the jet entries and on the top derivative."""
    _check_kind(H, BlidKind.JET_CQ)
    if x.q != H.q:
        raise ArgumentError(f"order mismatch: map has q={H.q}, element has q={x.q}")
    return _jet_core(H, x)


def _jet_core(H: BlidMap, x: JetGridFunction) -> JetGridFunction:
    return JetGridFunction(x.q, _pointwise(H, x.jet), x.top.with_samples(_pointwise(H, x.top.samples)))


def _jet_apply(H: BlidMap, x: JetGridFunction) -> JetGridFunction:
    if H.effective_kind is BlidKind.JET_CQ:
        return blid_cq_apply(H, x)
    if isinstance(x, GridFunction):
        x = JetGridFunction(0, [], x)
    if x.q < H.order:
        raise ArgumentError(f"element of order {x.q} cannot feed family member of order {H.order}")
    return _jet_core(H, as_order(x, H.order))


def _finite_apply(H: BlidMap, x):
    x = np.asarray(x, dtype=float)
    if H.dim is not None and x.shape[-1] != H.dim:
        raise ArgumentError(f"expected vectors of dimension {H.dim}, got shape {x.shape}")
    r = H.scale_in * np.linalg.norm(x, axis=-1)
    hr = np.asarray(H.bump(r))[..., None]
    return np.where(hr == 1.0, x, H.scale_out * H.scale_in * hr * x)


# ---------------------------------------------------------------------------
# constructions


def pointwise_c0_blid(bump: BumpFunction | None = None, lo=0.0, hi=1.0, n=DEFAULT_NODES) -> BlidMap:
    bump = bump or BumpFunction()
    return BlidMap(BlidKind.POINTWISE_C0, bump, bound_N=bump.a, identity_radius=bump.r_in, grid=(lo, hi, n))


def jet_cq_blid(q: int, bump: BumpFunction | None = None, lo=0.0, hi=1.0, n=DEFAULT_NODES) -> BlidMap:
    """Blid map on C^q[lo, hi]; the C^q norm of any output is below ``a e^{max|t|}``."""
    if q < 1:
        raise ArgumentError("jet blid map needs q >= 1")
    bump = bump or BumpFunction()
    bound = bump.a * math.exp(max(abs(lo), abs(hi)))
    return BlidMap(BlidKind.JET_CQ, bump, q=q, bound_N=bound, identity_radius=bump.r_in, grid=(lo, hi, n))


def bump_to_blid(bump: BumpFunction | None = None, n: int = 2) -> BlidMap:
    """``H(x) = h(|x|) x`` on R^n (Euclidean norm)."""
    if n < 1:
        raise ArgumentError("dimension must be >= 1")
    bump = bump or BumpFunction()
    return BlidMap(BlidKind.FINITE_DIM, bump, bound_N=bump.a, identity_radius=bump.r_in, dim=n)


def blid_windowed_family(
    descriptor: NormFamilyDescriptor,
    bump: BumpFunction | None = None,
    n: int = DEFAULT_NODES,
    certify_samples: int = 0,
    rng_seed: int = 0,
) -> list[BlidMap]:
    """Members ``H_0 .. H_{k_max}`` with bounds ``||H_k(x)||_k < a e^k``.

    For ``k > q_cap`` the member reuses order ``q_cap``; the norms of index
    ``k >= q_cap`` all see derivatives up to ``q_cap`` only, so the bound
    still holds. With ``certify_samples > 0`` each member also gets an
    empirical bound from amplitude-stratified sampling.
    """
    if descriptor.kind not in (NormKind.CINF_INTERVAL, NormKind.WINDOWED_REAL_LINE, NormKind.CQ_REAL_LINE):
        raise ArgumentError(f"no windowed family for {descriptor.kind.value}")
    bump = bump or BumpFunction()
    lo, hi = descriptor.domain()
    family = []
    for k in range(descriptor.k_max + 1):
        H = BlidMap(
            BlidKind.WINDOWED,
            bump,
            q=descriptor.q_cap,
            k=k,
            bound_N=bump.a * math.exp(k),
            identity_radius=bump.r_in,
            descriptor=descriptor,
            grid=(lo, hi, n),
        )
        if certify_samples:
            report = certify_blid(H, certify_samples, rng_seed + 1000 * k)
            H = replace(H, empirical_bound=report.empirical_bound)
        family.append(H)
    return family


# ---------------------------------------------------------------------------
# scaling


def blid_scale(H: BlidMap, c: float) -> BlidMap:
    """``H_c(x) = (c/N) H((N/c) x)``: a blid map with image in the ball of radius c."""
    if H.bound_N is None:
        raise StateError("blid map has no certified bound N")
    if not c > 0:
        raise ArgumentError("c must be positive")
    N = H.bound_N
    if c == N:
        return H
    return replace(
        H,
        kind=BlidKind.SCALED,
        base_kind=H.effective_kind,
        scale_in=H.scale_in * N / c,
        scale_out=H.scale_out * c / N,
        bound_N=float(c),
        identity_radius=H.identity_radius * c / N,
        empirical_bound=None,
    )


def metric_scale_index(c: float) -> int:
    """Smallest window index admissible for metric radius ``c``.

    The tail ``sum_{j>k} 2^-j`` must not exceed ``c/2``, i.e.
    ``k >= 1 - log2 c``; indices start at 1.
    """
    if not c > 0:
        raise ArgumentError("c must be positive")
    threshold = 1.0 - math.log2(c)
    return max(1, math.ceil(threshold - 1e-12))


def blid_metric_scale(family: list[BlidMap], c: float, descriptor: NormFamilyDescriptor) -> BlidMap:
    """``H_c(x) = c/(4N) H_k(4N x / c)`` with image in ``{d(., 0) < c}``."""
    k = metric_scale_index(c)
    if k > descriptor.k_max or k >= len(family):
        raise CapacityError(f"metric radius {c} needs window index {k} > k_max={descriptor.k_max}", needed=k)
    H = family[k]
    if H.bound_N is None:
        raise StateError(f"family member {k} has no certified bound")
    N = H.bound_N
    return replace(
        H,
        kind=BlidKind.SCALED,
        base_kind=H.effective_kind,
        scale_in=H.scale_in * 4.0 * N / c,
        scale_out=H.scale_out * c / (4.0 * N),
        bound_N=c / 4.0,
        identity_radius=H.identity_radius * c / (4.0 * N),
        metric_radius=float(c),
        empirical_bound=None,
    )


# ---------------------------------------------------------------------------
# certification


@dataclass
class CertificationReport:
    construction: str
    parameters: dict
    empirical_identity_radius: float
    identity_deviation: float
    empirical_bound: float
    claimed_bound: float | None
    samples: int
    seed: int
    passed: bool
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def identity_deviation(H: BlidMap, x, y=None) -> float:
    """Max deviation between ``H(x)`` and ``x`` in the map's own representation."""
    y = H(x) if y is None else y
    if isinstance(y, JetGridFunction):
        if isinstance(x, GridFunction):
            x = JetGridFunction(0, [], x)
        ref = as_order(x, y.q)
        jet_dev = float(np.max(np.abs(y.jet - ref.jet), initial=0.0))
        return max(jet_dev, float(np.max(np.abs(y.top.samples - ref.top.samples))))
    if isinstance(y, GridFunction):
        return float(np.max(np.abs(y.samples - x.samples)))
    return float(np.max(np.abs(np.asarray(y) - np.asarray(x)), initial=0.0))


def sample_element(H: BlidMap, rng: np.random.Generator):
    """Random unit-scale element of the space H acts on."""
    kind = H.effective_kind
    if kind is BlidKind.FINITE_DIM:
        v = rng.normal(size=H.dim)
        return v / np.linalg.norm(v)
    lo, hi, n = H.grid
    if kind is BlidKind.POINTWISE_C0:
        return random_grid_function(rng, 1.0, lo, hi, n)
    q = H.q
    return random_jet(rng, q, 1.0, lo, hi, n)


def _scaled_to(H: BlidMap, x, target: float):
    g = H.governing_norm(x)
    return x * (target / g)


def certify_blid(H: BlidMap, sample_budget: int = 200, rng_seed: int = 0) -> CertificationReport:
    """Sample-based check of the identity radius and the output bound.

    Half of the budget goes to inputs below the claimed identity radius,
    the other half to amplitudes ``1e-2 .. 1e6`` (in the governing norm).
    Sample ``i`` uses its own generator seeded with ``rng_seed + i``.
    """
    n_identity = max(1, sample_budget // 2)
    worst_dev = 0.0
    worst_bound = 0.0
    # (governing norm, deviation) pairs for the empirical identity radius
    seen = []
    for i in range(sample_budget):
        rng = np.random.default_rng(rng_seed + i)
        x = sample_element(H, rng)
        if i < n_identity:
            target = H.identity_radius * rng.uniform(0.0, 1.0) * (1.0 - 1e-9)
        else:
            target = AMPLITUDES[(i - n_identity) % len(AMPLITUDES)] * rng.uniform(0.5, 1.0)
        x = _scaled_to(H, x, target)
        y = H(x)
        dev = identity_deviation(H, x, y)
        if i < n_identity:
            worst_dev = max(worst_dev, dev)
        worst_bound = max(worst_bound, H.output_norm(y))
        seen.append((H.governing_norm(x), dev))
    seen.sort()
    radius = 0.0
    for g, dev in seen:
        if dev > IDENTITY_TOL:
            break
        radius = g
    notes = []
    if H.metric_radius is not None and H.descriptor is not None:
        notes.append(f"image contained in metric ball of radius {H.metric_radius}")
    ok_identity = worst_dev <= IDENTITY_TOL
    ok_bound = H.bound_N is None or worst_bound <= H.bound_N + BOUND_TOL
    return CertificationReport(
        construction=H.kind.value if H.kind is not BlidKind.SCALED else f"Scaled({H.base_kind.value})",
        parameters=H.parameters(),
        empirical_identity_radius=radius,
        identity_deviation=worst_dev,
        empirical_bound=worst_bound,
        claimed_bound=H.bound_N,
        samples=sample_budget,
        seed=rng_seed,
        passed=bool(ok_identity and ok_bound),
        notes=notes,
    )


def metric_containment(H: BlidMap, xs, descriptor: NormFamilyDescriptor) -> float:
    """Largest ``d(H(x), 0)`` over the given inputs."""
    worst = 0.0
    for x in xs:
        y = H(x)
        worst = max(worst, frechet_metric(y, y * 0.0, descriptor))
    return worst
