"""Smooth bump functions on the real line.

``h(u) = sigma((r_out - |u|) / (r_out - r_in))`` with the classical smooth
step ``sigma(v) = g(v) / (g(v) + g(1 - v))``, ``g(v) = exp(-1/v)`` for
``v > 0``. ``h`` is C-infinity, equals 1 exactly on ``|u| <= r_in`` and 0
exactly on ``|u| >= r_out``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ArgumentError

__all__ = ["BumpFunction", "bump_eval", "bump_deriv", "bump_linear_bound"]


def _g(v):
    pos = v > 0
    safe = np.where(pos, v, 1.0)
    return np.where(pos, np.exp(-1.0 / safe), 0.0)


def _dg(v):
    pos = v > 0
    safe = np.where(pos, v, 1.0)
    return np.where(pos, np.exp(-1.0 / safe) / safe**2, 0.0)


def _sigma(v):
    a, b = _g(v), _g(1.0 - v)
    return np.where(v >= 1.0, 1.0, np.where(v <= 0.0, 0.0, a / np.where(a + b > 0, a + b, 1.0)))


def _dsigma(v):
    inside = (v > 0.0) & (v < 1.0)
    vs = np.where(inside, v, 0.5)
    a, b = _g(vs), _g(1.0 - vs)
    da, db = _dg(vs), _dg(1.0 - vs)
    return np.where(inside, (da * b + a * db) / (a + b) ** 2, 0.0)


@dataclass(frozen=True)
class BumpFunction:
    """Radial smooth bump with identity radius ``r_in`` and support radius ``r_out``.

    ``a`` is the certified linear bound ``sup_u h(u) u``; it is computed on
    construction when not given.
    """

    r_in: float = 1.0
    r_out: float = 2.0
    a: float | None = None

    def __post_init__(self):
        if not 0.0 < self.r_in < self.r_out:
            raise ArgumentError(f"need 0 < r_in < r_out, got r_in={self.r_in}, r_out={self.r_out}")
        object.__setattr__(self, "r_in", float(self.r_in))
        object.__setattr__(self, "r_out", float(self.r_out))
        if self.a is None:
            object.__setattr__(self, "a", bump_linear_bound(self))
        else:
            object.__setattr__(self, "a", float(self.a))

    def __call__(self, u):
        return bump_eval(self, u)

    def deriv(self, u):
        return bump_deriv(self, u)

    def to_dict(self) -> dict:
        return {"r_in": self.r_in, "r_out": self.r_out, "a": self.a}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "BumpFunction":
        return cls(d.get("r_in", 1.0), d.get("r_out", 2.0), d.get("a"))

    @classmethod
    def from_json(cls, text: str) -> "BumpFunction":
        return cls.from_dict(json.loads(text))


def _as_output(values, u):
    return float(values) if np.ndim(u) == 0 else values


def bump_eval(h: BumpFunction, u):
    """h(u); exact 1 inside ``r_in`` and exact 0 outside ``r_out``."""
    au = np.abs(np.asarray(u, dtype=float))
    v = (h.r_out - au) / (h.r_out - h.r_in)
    out = np.where(au <= h.r_in, 1.0, np.where(au >= h.r_out, 0.0, _sigma(v)))
    return _as_output(out, u)


def bump_deriv(h: BumpFunction, u):
    """Closed-form h'(u)."""
    uu = np.asarray(u, dtype=float)
    au = np.abs(uu)
    width = h.r_out - h.r_in
    v = (h.r_out - au) / width
    inside = (au > h.r_in) & (au < h.r_out)
    out = np.where(inside, -np.sign(uu) * _dsigma(v) / width, 0.0)
    return _as_output(out, u)


def bump_linear_bound(h: BumpFunction, scan_points: int = 10_000) -> float:
    """``a = max_{u in [0, r_out]} h(u) u`` by dense scan plus golden-section refinement."""
    u = np.linspace(0.0, h.r_out, scan_points)
    vals = bump_eval(h, u) * u
    i = int(np.argmax(vals))
    if i == 0 or i == scan_points - 1:
        return float(vals[i])
    neg = lambda s: -float(bump_eval(h, s)) * s  # noqa: E731
    res = optimize.minimize_scalar(neg, bracket=(u[i - 1], u[i], u[i + 1]), method="golden", tol=1e-12)
    return float(max(vals[i], -res.fun))
