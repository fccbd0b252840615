"""Discretized function spaces.

Elements of C(T) are :class:`GridFunction` samples on a uniform grid.
Elements of C^q are :class:`JetGridFunction` objects: the jet
``(x(0), ..., x^(q-1)(0))`` plus samples of the top derivative ``x^(q)``.
Lower derivatives are always rebuilt by integration (Cauchy kernel), never
by numerical differentiation.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ArgumentError, DomainError

__all__ = [
    "GridFunction",
    "JetGridFunction",
    "NormKind",
    "NormFamilyDescriptor",
    "eval_at",
    "iterated_integral",
    "iterated_integral_grid",
    "reconstruct",
    "as_order",
    "norm_sup",
    "norm_q",
    "norm_windowed",
    "jet_sup",
    "frechet_metric",
    "frechet_tail_bound",
    "element_norm",
    "zeros_like",
    "random_grid_function",
    "random_jet",
    "random_direction",
]

DEFAULT_NODES = 1024


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real function sampled at ``n + 1`` uniform nodes on ``[lo, hi]``.

    With ``discrete=True`` the grid stands for a finite set T and may only
    be evaluated at its nodes.
    """

    lo: float
    hi: float
    samples: np.ndarray
    discrete: bool = False

    def __post_init__(self):
        samples = _readonly(self.samples)
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "samples", samples)
        if not self.lo < self.hi:
            raise ArgumentError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if samples.ndim != 1 or samples.size < 3:
            raise ArgumentError("samples must be a 1-D sequence of length >= 3")
        if not np.all(np.isfinite(samples)):
            raise ArgumentError("samples must be finite")

    @classmethod
    def from_callable(cls, fn, lo=0.0, hi=1.0, n=DEFAULT_NODES, discrete=False):
        nodes = np.linspace(lo, hi, n + 1)
        return cls(lo, hi, np.broadcast_to(np.asarray(fn(nodes), dtype=float), nodes.shape), discrete)

    @classmethod
    def constant(cls, value, lo=0.0, hi=1.0, n=DEFAULT_NODES):
        return cls(lo, hi, np.full(n + 1, float(value)))

    @property
    def n(self) -> int:
        return self.samples.size - 1

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n + 1)

    def same_grid(self, other: "GridFunction") -> bool:
        return (
            isinstance(other, GridFunction)
            and self.lo == other.lo
            and self.hi == other.hi
            and self.n == other.n
            and self.discrete == other.discrete
        )

    def node_index(self, t: float) -> int | None:
        """Index of the node at ``t`` (to round-off), or None."""
        pos = (t - self.lo) / self.spacing
        i = int(round(pos))
        if 0 <= i <= self.n and abs(pos - i) <= 1e-9:
            return i
        return None

    def with_samples(self, samples) -> "GridFunction":
        return GridFunction(self.lo, self.hi, samples, self.discrete)

    def __call__(self, t):
        return eval_at(self, t)

    def _check(self, other):
        if not self.same_grid(other):
            raise ArgumentError("grid functions live on different grids")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return self.with_samples(self.samples + other.samples)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return self.with_samples(self.samples - other.samples)
        return NotImplemented

    def __mul__(self, scalar):
        if isinstance(scalar, (int, float, np.floating, np.integer)):
            return self.with_samples(float(scalar) * self.samples)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __neg__(self):
        return self.with_samples(-self.samples)

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = {"lo": self.lo, "hi": self.hi, "samples": self.samples.tolist()}
        if self.discrete:
            d["discrete"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GridFunction":
        return cls(d["lo"], d["hi"], d["samples"], bool(d.get("discrete", False)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GridFunction":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["node", "value"])
        for t, v in zip(self.nodes, self.samples):
            writer.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, discrete=False) -> "GridFunction":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip().lower() for c in rows[0]] != ["node", "value"]:
            raise ArgumentError("CSV must start with header 'node,value'")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        nodes, values = data[:, 0], data[:, 1]
        steps = np.diff(nodes)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ArgumentError("CSV nodes must be uniform and increasing")
        return cls(nodes[0], nodes[-1], values, discrete)


def eval_at(f: GridFunction, t):
    """Piecewise-linear interpolant of ``f`` at ``t`` (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    span = f.hi - f.lo
    if np.any(t_arr < f.lo - 1e-12 * span) or np.any(t_arr > f.hi + 1e-12 * span):
        raise DomainError(f"t outside [{f.lo}, {f.hi}]")
    if f.discrete:
        pos = (t_arr - f.lo) / f.spacing
        idx = np.rint(pos)
        if np.any(np.abs(pos - idx) > 1e-9):
            raise DomainError("finite index set: evaluation allowed only at nodes")
        out = f.samples[idx.astype(int)]
    else:
        out = np.interp(t_arr, f.nodes, f.samples)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# iterated integrals


def _check_order(m):
    if int(m) != m or m < 1:
        raise ArgumentError(f"integration order must be a positive integer, got {m}")
    return int(m)


def iterated_integral(g: GridFunction, m: int, t: float) -> float:
    """m-fold iterated integral of ``g`` from 0 to ``t``.

    Uses the single-integral form ``int_0^t (t-s)^(m-1)/(m-1)! g(s) ds``
    with composite trapezoid quadrature on the grid nodes between 0 and t
    (plus the two endpoints, interpolated).
    """
    m = _check_order(m)
    t = float(t)
    eval_at(g, 0.0)
    eval_at(g, t)
    if t == 0.0:
        return 0.0
    a, b = (0.0, t) if t > 0 else (t, 0.0)
    nodes = g.nodes
    inner = nodes[(nodes > a) & (nodes < b)]
    s = np.concatenate(([a], inner, [b]))
    vals = np.interp(s, nodes, g.samples) * (t - s) ** (m - 1) / math.factorial(m - 1)
    integral = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(s)))
    return integral if t > 0 else -integral


@lru_cache(maxsize=16)
def _cauchy_matrix(lo: float, hi: float, n: int, m: int, i0: int) -> np.ndarray:
    t = np.linspace(lo, hi, n + 1)
    h = (hi - lo) / n
    rows = np.arange(n + 1)[:, None]
    cols = np.arange(n + 1)[None, :]
    first = np.minimum(rows, i0)
    last = np.maximum(rows, i0)
    inside = (cols >= first) & (cols <= last)
    ends = (cols == first) | (cols == last)
    weights = h * inside * np.where(ends, 0.5, 1.0) * np.sign(rows - i0)
    kernel = (t[:, None] - t[None, :]) ** (m - 1) / math.factorial(m - 1)
    mat = weights * kernel
    mat.setflags(write=False)
    return mat


def _zero_index(g: GridFunction) -> int:
    i0 = g.node_index(0.0)
    if i0 is None:
        raise ArgumentError("0 must be a grid node for jet representations")
    return i0


def iterated_integral_grid(g: GridFunction, m: int) -> GridFunction:
    """``iterated_integral(g, m, t)`` at every node of ``g`` at once."""
    m = _check_order(m)
    mat = _cauchy_matrix(g.lo, g.hi, g.n, m, _zero_index(g))
    return g.with_samples(mat @ g.samples)


# ---------------------------------------------------------------------------
# jets


@dataclass(frozen=True, eq=False)
class JetGridFunction:
    """Element of a discretized C^q space.

    ``jet[j]`` holds ``x^(j)(0)`` for ``j < q`` and ``top`` samples
    ``x^(q)``. Order 0 is allowed and means ``top`` is the function itself.
    """

    q: int
    jet: np.ndarray
    top: GridFunction

    def __post_init__(self):
        jet = _readonly(np.atleast_1d(np.asarray(self.jet, dtype=float)) if len(self.jet) else [])
        object.__setattr__(self, "jet", jet)
        if int(self.q) != self.q or self.q < 0:
            raise ArgumentError(f"order q must be a non-negative integer, got {self.q}")
        object.__setattr__(self, "q", int(self.q))
        if jet.size != self.q:
            raise ArgumentError(f"jet must have q={self.q} entries, got {jet.size}")
        if not (self.top.lo <= 0.0 <= self.top.hi):
            raise ArgumentError("domain of top must contain 0")
        if not np.all(np.isfinite(jet)):
            raise ArgumentError("jet must be finite")
        _zero_index(self.top)

    @classmethod
    def polynomial(cls, coeffs, q, lo=0.0, hi=1.0, n=DEFAULT_NODES):
        """Element for the polynomial ``sum coeffs[i] t^i``."""
        poly = np.polynomial.Polynomial(coeffs)
        jet = [poly.deriv(j)(0.0) if j else poly(0.0) for j in range(q)]
        top = GridFunction.from_callable(poly.deriv(q) if q else poly, lo, hi, n)
        return cls(q, jet, top)

    @classmethod
    def zero(cls, q, lo=0.0, hi=1.0, n=DEFAULT_NODES):
        return cls(q, np.zeros(q), GridFunction.constant(0.0, lo, hi, n))

    def compatible(self, other) -> bool:
        return isinstance(other, JetGridFunction) and self.q == other.q and self.top.same_grid(other.top)

    def _check(self, other):
        if not self.compatible(other):
            raise ArgumentError("jet functions have different orders or grids")

    def __add__(self, other):
        if isinstance(other, JetGridFunction):
            self._check(other)
            return JetGridFunction(self.q, self.jet + other.jet, self.top + other.top)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, JetGridFunction):
            self._check(other)
            return JetGridFunction(self.q, self.jet - other.jet, self.top - other.top)
        return NotImplemented

    def __mul__(self, scalar):
        if isinstance(scalar, (int, float, np.floating, np.integer)):
            return JetGridFunction(self.q, float(scalar) * self.jet, self.top * float(scalar))
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __neg__(self):
        return self * -1.0

    def to_dict(self) -> dict:
        return {"q": self.q, "jet": self.jet.tolist(), "top": self.top.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "JetGridFunction":
        return cls(int(d["q"]), d["jet"], GridFunction.from_dict(d["top"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "JetGridFunction":
        return cls.from_dict(json.loads(text))


def reconstruct(x: JetGridFunction, j: int) -> GridFunction:
    """Samples of the j-th derivative of ``x``."""
    if j < 0 or j > x.q:
        raise ArgumentError(f"derivative order {j} outside 0..{x.q}")
    if j == x.q:
        return x.top
    t = x.top.nodes
    poly = np.zeros_like(t)
    for i in range(j, x.q):
        poly += t ** (i - j) / math.factorial(i - j) * x.jet[i]
    return x.top.with_samples(poly + iterated_integral_grid(x.top, x.q - j).samples)


def as_order(x: JetGridFunction, k: int) -> JetGridFunction:
    """Same element seen in the order-k representation (``k <= x.q``)."""
    if k > x.q:
        raise ArgumentError(f"cannot raise order {x.q} to {k} without differentiating")
    if k == x.q:
        return x
    return JetGridFunction(k, x.jet[:k], reconstruct(x, k))


# ---------------------------------------------------------------------------
# norms and the Frechet metric


class NormKind(str, enum.Enum):
    SUP_ON_T = "SupOnT"
    CQ_INTERVAL = "CqInterval"
    CINF_INTERVAL = "CInfInterval"
    WINDOWED_REAL_LINE = "WindowedRealLine"
    CQ_REAL_LINE = "CqRealLine"


@dataclass(frozen=True)
class NormFamilyDescriptor:
    """Which norm family a space carries, and where it is truncated.

    ``q_cap`` caps the derivative order, ``k_max`` the number of norms
    entering the metric (and the half-width of real-line domains).
    """

    kind: NormKind
    q_cap: int = 6
    k_max: int = 20

    def __post_init__(self):
        object.__setattr__(self, "kind", NormKind(self.kind))
        if self.k_max < 1:
            raise ArgumentError("k_max must be >= 1")
        if self.q_cap < 0:
            raise ArgumentError("q_cap must be >= 0")

    @property
    def real_line(self) -> bool:
        return self.kind in (NormKind.WINDOWED_REAL_LINE, NormKind.CQ_REAL_LINE)

    def domain(self) -> tuple[float, float]:
        return (-float(self.k_max), float(self.k_max)) if self.real_line else (0.0, 1.0)

    def orders(self, k: int, available: int) -> int:
        """Highest derivative order seen by the k-th norm."""
        if self.kind is NormKind.SUP_ON_T:
            top = 0
        elif self.kind in (NormKind.CINF_INTERVAL, NormKind.WINDOWED_REAL_LINE):
            top = min(k, self.q_cap)
        else:
            top = self.q_cap
        return min(top, available)

    def window(self, k: int) -> tuple[float, float] | None:
        return (-float(k), float(k)) if self.real_line else None

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "q_cap": self.q_cap, "k_max": self.k_max}


def norm_sup(f: GridFunction) -> float:
    """Sup norm; exact for the piecewise-linear interpolant."""
    return float(np.max(np.abs(f.samples)))


def _window_sup(f: GridFunction, a: float, b: float) -> float:
    a, b = max(a, f.lo), min(f.hi, b)
    nodes = f.nodes
    inside = f.samples[(nodes >= a) & (nodes <= b)]
    ends = np.interp([a, b], nodes, f.samples)
    return float(max(np.max(np.abs(ends)), np.max(np.abs(inside), initial=0.0)))


def norm_q(x: JetGridFunction) -> float:
    """``max_{j <= q} sup_t |x^(j)(t)|``."""
    return max(norm_sup(reconstruct(x, j)) for j in range(x.q + 1))


def jet_sup(x: JetGridFunction) -> float:
    """``max(|x^(j)(0)| for j < q, sup |x^(q)|)``: the norm governing jet blid maps."""
    return max(float(np.max(np.abs(x.jet), initial=0.0)), norm_sup(x.top))


def norm_windowed(x, k: int, descriptor: NormFamilyDescriptor | None = None) -> float:
    """k-th norm of a countable family.

    Default family is the real-line one, ``max_{j <= k} max_{|t| <= k}``.
    Windows are clamped to the represented domain and derivative orders to
    both ``q_cap`` and the order of ``x``.
    """
    if k < 0:
        raise ArgumentError("norm index k must be >= 0")
    d = descriptor or NormFamilyDescriptor(NormKind.WINDOWED_REAL_LINE)
    if isinstance(x, GridFunction):
        x = JetGridFunction(0, [], x)
    return _windowed_from(d, k, [reconstruct(x, j) for j in range(d.orders(k, x.q) + 1)])


def _windowed_from(d: NormFamilyDescriptor, k: int, derivs: list) -> float:
    top = d.orders(k, len(derivs) - 1)
    win = d.window(k)
    return max(_window_sup(f, *win) if win else norm_sup(f) for f in derivs[: top + 1])


def frechet_tail_bound(descriptor: NormFamilyDescriptor) -> float:
    """Upper bound on the metric terms dropped by truncating at ``k_max``."""
    return 2.0 ** (1 - descriptor.k_max)


def frechet_metric(x, y, descriptor: NormFamilyDescriptor) -> float:
    """``sum_{k < k_max} 2^-k ||x-y||_k / (1 + ||x-y||_k)``."""
    if isinstance(x, JetGridFunction) and isinstance(y, JetGridFunction):
        if not x.top.same_grid(y.top):
            raise ArgumentError("metric needs elements on the same grid")
        if x.q != y.q:
            q = min(x.q, y.q)
            x, y = as_order(x, q), as_order(y, q)
    elif not (isinstance(x, GridFunction) and isinstance(y, GridFunction) and x.same_grid(y)):
        raise ArgumentError("metric needs elements of the same representation")
    diff = x - y
    if isinstance(diff, GridFunction):
        diff = JetGridFunction(0, [], diff)
    # derivatives are shared by all norms of the family
    derivs = [reconstruct(diff, j) for j in range(descriptor.orders(descriptor.k_max - 1, diff.q) + 1)]
    total = 0.0
    for k in range(descriptor.k_max):
        nk = _windowed_from(descriptor, k, derivs)
        total += 2.0 ** (-k) * nk / (1.0 + nk)
    return total


def element_norm(x) -> float:
    """Natural norm of an element: sup, the C^q norm, or Euclidean."""
    if isinstance(x, GridFunction):
        return norm_sup(x)
    if isinstance(x, JetGridFunction):
        return norm_q(x)
    return float(np.linalg.norm(np.asarray(x, dtype=float)))


def zeros_like(x):
    if isinstance(x, GridFunction):
        return x.with_samples(np.zeros_like(x.samples))
    if isinstance(x, JetGridFunction):
        return x * 0.0
    return np.zeros_like(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# random elements


def _smooth_profile(rng: np.random.Generator, s: np.ndarray, modes: int) -> np.ndarray:
    k = np.arange(1, modes + 1)
    a = rng.normal(size=modes) / k
    b = rng.normal(size=modes) / k
    c = rng.normal()
    out = c + np.sin(np.pi * np.outer(s, k)) @ a + np.cos(np.pi * np.outer(s, k)) @ b
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else np.ones_like(s)


def random_grid_function(rng, amplitude=1.0, lo=0.0, hi=1.0, n=DEFAULT_NODES, modes=4, discrete=False):
    """Random smooth grid function with sup norm exactly ``amplitude``."""
    nodes = np.linspace(lo, hi, n + 1)
    s = (nodes - lo) / (hi - lo)
    return GridFunction(lo, hi, amplitude * _smooth_profile(rng, s, modes), discrete)


def random_jet(rng, q, amplitude=1.0, lo=0.0, hi=1.0, n=DEFAULT_NODES, modes=4):
    """Random jet element with ``jet_sup`` exactly ``amplitude``."""
    top = random_grid_function(rng, 1.0, lo, hi, n, modes)
    jet = rng.uniform(-1.0, 1.0, size=q)
    x = JetGridFunction(q, jet, top)
    return x * (amplitude / jet_sup(x))


def random_direction(template, rng):
    """Random element shaped like ``template`` with unit natural norm."""
    if isinstance(template, GridFunction):
        v = random_grid_function(rng, 1.0, template.lo, template.hi, template.n, discrete=template.discrete)
    elif isinstance(template, JetGridFunction):
        top = template.top
        v = random_jet(rng, template.q, 1.0, top.lo, top.hi, top.n)
    else:
        shape = np.shape(template)
        v = rng.normal(size=shape)
    return v * (1.0 / element_norm(v))
