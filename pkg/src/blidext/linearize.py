"""Blid-based globalization of a local perturbation of a hyperbolic linear map.

Pieces:

* :func:`globalize_perturbation` turns a perturbation f defined near 0 into
  the total map ``f~(x) = f(delta * H(x / delta))``.
* :func:`verify_condition_7_6` estimates the two bounds required by the
  linearization theorem: a global bound on ``||Df~||`` and a Hoelder-type
  bound on ``||Df~(x)|| / ||x||^alpha`` near 0.
* :func:`conjugacy_iterate` computes ``Phi = id + u`` with
  ``Phi o F = Lambda o Phi`` for ``F = Lambda + f~`` on a box grid, and
  :func:`fit_beta` fits the exponent in ``|Phi(x) - x| ~ |x|^(1 + beta)``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .blid import AMPLITUDES, BlidKind, BlidMap, bump_to_blid, sample_element
from .bump import BumpFunction
from .diffcheck import directional_derivative
from .errors import ConfigurationError, ConvergenceError, DomainFault
from .funcspace import element_norm, random_direction

__all__ = [
    "HyperbolicLinear",
    "PerturbationSpec",
    "GlobalizedPerturbation",
    "ConjugacyResult",
    "BetaFit",
    "Condition76Report",
    "LinearizationProblem",
    "PERTURBATIONS",
    "perturbation",
    "numerical_jacobian",
    "operator_norm",
    "globalize_perturbation",
    "blid_derivative_bounds",
    "verify_condition_7_6",
    "conjugacy_iterate",
    "fit_beta",
    "run_linearization",
    "validation_residual",
    "koenigs_limit",
    "delta_halving",
]

POWER_ITERATIONS = 20


@dataclass(frozen=True, eq=False)
class HyperbolicLinear:
    """Linear part Lambda, with no eigenvalue modulus inside ``[1 - gap, 1 + gap]``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ConfigurationError(f"matrix must be square, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.gap <= 0:
            raise ConfigurationError("matrix is not hyperbolic: an eigenvalue has modulus 1")

    @classmethod
    def diagonal(cls, values):
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)

    @property
    def gap(self) -> float:
        return float(np.min(np.abs(np.abs(self.eigenvalues) - 1.0)))

    @property
    def is_diagonal(self) -> bool:
        m = self.matrix
        return bool(np.all(m == np.diag(np.diag(m))))

    @property
    def stable_indices(self) -> tuple[int, ...]:
        """Coordinates (diagonal case) or eigen-indices with modulus below 1."""
        vals = np.diag(self.matrix) if self.is_diagonal else self.eigenvalues
        return tuple(int(i) for i in np.flatnonzero(np.abs(vals) < 1.0))

    @property
    def unstable_indices(self) -> tuple[int, ...]:
        vals = np.diag(self.matrix) if self.is_diagonal else self.eigenvalues
        return tuple(int(i) for i in np.flatnonzero(np.abs(vals) > 1.0))

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "gap": self.gap,
            "stable_indices": list(self.stable_indices),
            "unstable_indices": list(self.unstable_indices),
        }


# ---------------------------------------------------------------------------
# perturbations


def _square1(x):
    return np.asarray(x, dtype=float) ** 2


def _square1_jac(x):
    return np.diag(2.0 * np.asarray(x, dtype=float))


def _swap(x):
    x = np.asarray(x, dtype=float)
    return np.stack([x[..., 1] ** 2, x[..., 0] ** 2], axis=-1)


def _swap_jac(x):
    return np.array([[0.0, 2.0 * x[1]], [2.0 * x[0], 0.0]])


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


# name -> (rule, analytic jacobian or None, dimension or None for any)
PERTURBATIONS = {
    "square": (_square1, _square1_jac, None),
    "quadratic_swap": (_swap, _swap_jac, 2),
    "zero": (_zero, lambda x: np.zeros((len(x), len(x))), None),
}


@dataclass(frozen=True)
class PerturbationSpec:
    """Local perturbation ``f = F - Lambda`` with ``f(0) = 0`` and ``Df(0) = 0``."""

    f_rule: Callable
    domain_radius: float
    alpha: float
    delta: float
    template: object = None
    holder_constant_local: float | None = None
    jacobian: Callable | None = None
    name: str = ""

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.delta > 0:
            raise ConfigurationError("delta must be positive")
        if not self.domain_radius > 0:
            raise ConfigurationError("domain_radius must be positive")
        zero = self.template if self.template is not None else np.zeros(1)
        object.__setattr__(self, "template", zero)
        if element_norm(self.f_rule(zero)) > 1e-12:
            raise ConfigurationError("perturbation must vanish at 0")
        for i in range(4):
            v = random_direction(zero, np.random.default_rng(i))
            if element_norm(directional_derivative(self.f_rule, zero, v)) > 1e-8:
                raise ConfigurationError("perturbation must have zero derivative at 0")

    def df(self, y):
        if self.jacobian is not None and isinstance(y, np.ndarray):
            return self.jacobian(y)
        return None


def perturbation(name, dimension, domain_radius=0.3, alpha=1.0, delta=0.1, **kw) -> PerturbationSpec:
    try:
        rule, jac, dim = PERTURBATIONS[name]
    except KeyError:
        raise ConfigurationError(f"unknown perturbation {name!r}; known: {sorted(PERTURBATIONS)}") from None
    if dim is not None and dim != dimension:
        raise ConfigurationError(f"perturbation {name!r} lives in dimension {dim}, matrix has {dimension}")
    return PerturbationSpec(rule, domain_radius, alpha, delta, np.zeros(dimension), jacobian=jac, name=name, **kw)


@dataclass(frozen=True)
class GlobalizedPerturbation:
    """``f~(x) = f(delta * H(x / delta))``; vectorized over leading axes for arrays."""

    spec: PerturbationSpec
    H: BlidMap

    @property
    def delta(self) -> float:
        return self.spec.delta

    @property
    def support_radius(self) -> float:
        """f~ vanishes outside this radius (the blid map is 0 there)."""
        return self.delta * self.H.bump.r_out / self.H.scale_in

    def inner(self, x):
        return self.H(x * (1.0 / self.delta)) * self.delta

    def __call__(self, x):
        y = self.inner(x)
        if isinstance(y, np.ndarray):
            reach = float(np.max(np.linalg.norm(np.atleast_1d(y).reshape(-1, y.shape[-1]), axis=-1), initial=0.0))
        else:
            reach = element_norm(y)
        if not reach < self.spec.domain_radius:
            raise DomainFault(f"globalized argument of norm {reach:g} leaves the local domain")
        return self.spec.f_rule(y)


def globalize_perturbation(spec: PerturbationSpec, H: BlidMap) -> GlobalizedPerturbation:
    """Check the blid requirements and build ``f~``.

    H must be the identity on the unit ball and satisfy ``delta * c0 <
    domain_radius`` with ``c0 = H.bound_N``.
    """
    if H.bound_N is None:
        raise ConfigurationError("blid map needs a certified bound c0")
    if H.identity_radius < 1.0:
        raise ConfigurationError(f"blid map must be the identity on the unit ball (radius {H.identity_radius})")
    if not spec.delta * H.bound_N < spec.domain_radius:
        raise ConfigurationError(
            f"delta * c0 = {spec.delta * H.bound_N:g} must stay below the domain radius {spec.domain_radius:g}"
        )
    return GlobalizedPerturbation(spec, H)


# ---------------------------------------------------------------------------
# derivative estimates


def numerical_jacobian(fn, x, step=None) -> np.ndarray:
    """Central-difference Jacobian of ``fn: R^n -> R^m`` at a point."""
    x = np.asarray(x, dtype=float)
    s = step if step is not None else 1e-5 * max(float(np.linalg.norm(x)), 1e-7)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = s
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2.0 * s))
    return np.stack(cols, axis=-1)


def operator_norm(J, iterations: int = POWER_ITERATIONS, max_iterations: int = 2000, rtol: float = 1e-14) -> float:
    """Spectral norm by power iteration on ``J^T J``.

    Runs at least ``iterations`` steps, then continues until the estimate
    settles; power iteration only ever underestimates the norm.
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    n = J.shape[1]
    # golden-ratio start vector, then the basis vectors as fallbacks
    starts = [np.array([(0.618034**i) for i in range(n)])] + list(np.eye(n))
    for v in starts:
        v = v / np.linalg.norm(v)
        est = 0.0
        for i in range(max_iterations):
            w = J.T @ (J @ v)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            v = w / nw
            new = float(np.linalg.norm(J @ v))
            if i >= iterations and new - est <= rtol * new:
                est = new
                break
            est = new
        if est > 0.0:
            return est
    return 0.0


def _derivative_norm(fn, x, rng, jac=None, n_dirs=8) -> float:
    if isinstance(x, np.ndarray):
        return operator_norm(jac(x) if jac is not None else numerical_jacobian(fn, x))
    best = 0.0
    for _ in range(n_dirs):
        v = random_direction(x, rng)
        best = max(best, element_norm(directional_derivative(fn, x, v)) / element_norm(v))
    return best


def _norm(x) -> float:
    return float(np.linalg.norm(x)) if isinstance(x, np.ndarray) else element_norm(x)


def blid_derivative_bounds(H: BlidMap, sample_budget: int = 1000, rng_seed: int = 0) -> dict:
    """Empirical ``c0 = sup ||H(x)||`` and ``c1 = sup ||DH(x)||``.

    Half of the samples cover the transition shell radially
    (``|x| <= 1.2 r_out`` in input units), the rest are amplitude strata.
    """
    shell = 1.2 * H.bump.r_out / H.scale_in
    c0 = c1 = 0.0
    for i in range(sample_budget):
        rng = np.random.default_rng(rng_seed + i)
        u = sample_element(H, rng)
        u = u * (1.0 / H.governing_norm(u))
        if i % 2 == 0:
            r = shell * rng.uniform(0.0, 1.0)
        else:
            r = AMPLITUDES[(i // 2) % len(AMPLITUDES)] * rng.uniform(0.5, 1.0)
        x = u * r
        c0 = max(c0, H.output_norm(H(x)))
        c1 = max(c1, _derivative_norm(H, x, rng))
    return {"c0": c0, "c1": c1, "samples": sample_budget, "seed": rng_seed}


# ---------------------------------------------------------------------------
# condition (7.6)


@dataclass
class Condition76Report:
    delta: float
    alpha: float
    c0: float
    c1: float
    delta_eta: float
    local_sup_df: float
    global_sup: float
    global_bound: float
    global_ok: bool
    holder_M: float
    m_estimate: float
    m_small_branch: float
    m_large_branch: float
    m_large_branch_bound: float
    epsilon: float
    holder_sup: float
    holder_bound: float
    holder_ok: bool
    samples: int
    seed: int
    passed: bool
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def _log_uniform_points(template, lo, hi, count, seed):
    pts = []
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        u = random_direction(template, rng)
        r = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        pts.append((u * (r / _norm(u)), rng))
    return pts


def verify_condition_7_6(
    f_tilde: GlobalizedPerturbation,
    spec: PerturbationSpec | None = None,
    delta_eta: float | None = None,
    sample_budget: int = 1000,
    rng_seed: int = 0,
) -> Condition76Report:
    """Sampled estimates of both inequalities of condition (7.6) for ``f~``.

    ``delta_eta`` defaults to the sampled ``sup ||Df||`` over the ball of
    radius ``delta * c0`` (the smallest constant f itself satisfies).
    """
    spec = spec or f_tilde.spec
    H, delta, alpha = f_tilde.H, spec.delta, spec.alpha
    zero = spec.template
    bounds = blid_derivative_bounds(H, sample_budget, rng_seed)
    c0, c1 = max(bounds["c0"], H.bound_N), bounds["c1"]
    eps_id = H.identity_radius

    def df_norm(fn, x, rng, jac=None):
        return _derivative_norm(fn, x, rng, jac)

    # local hypotheses on f over the ball of radius delta * c0
    ball = delta * c0
    local_sup = 0.0
    M = 0.0
    n_local = max(8, sample_budget // 2)
    for i in range(n_local):
        rng = np.random.default_rng(rng_seed + 10_000 + i)
        u = random_direction(zero, rng)
        u = u * (1.0 / _norm(u))
        r_uniform = ball * (1.0 if i == 0 else rng.uniform(0.0, 1.0)) * (1.0 - 1e-12)
        r_log = math.exp(rng.uniform(math.log(1e-6 * delta), math.log(ball * (1.0 - 1e-12))))
        local_sup = max(local_sup, df_norm(spec.f_rule, u * r_uniform, rng, spec.jacobian))
        y = u * r_log
        M = max(M, df_norm(spec.f_rule, y, rng, spec.jacobian) / _norm(y) ** alpha)
    if spec.holder_constant_local is not None:
        M = max(M, spec.holder_constant_local)
    d_eta = local_sup if delta_eta is None else float(delta_eta)
    notes = []
    if local_sup > d_eta * (1 + 1e-12):
        notes.append(f"f violates sup ||Df|| <= delta_eta on the ball: {local_sup:g} > {d_eta:g}")

    # global and Hoelder estimates for f~
    holder_pts = _log_uniform_points(zero, 1e-6 * delta, 1e3 * delta, sample_budget, rng_seed + 20_000)
    global_sup = holder_sup = m_est = m_small = m_large = 0.0
    for x, rng in holder_pts:
        nx = _norm(x)
        d = df_norm(f_tilde, x, rng)
        global_sup = max(global_sup, d)
        holder_sup = max(holder_sup, d / nx**alpha)
        ratio = _norm(f_tilde.inner(x)) / nx
        m_est = max(m_est, ratio)
        if nx / delta < eps_id:
            m_small = max(m_small, ratio)
        else:
            m_large = max(m_large, ratio)
    for i in range(sample_budget // 2):
        rng = np.random.default_rng(rng_seed + 30_000 + i)
        u = random_direction(zero, rng)
        x = u * (f_tilde.support_radius * rng.uniform(0.0, 1.0) / _norm(u))
        if _norm(x) > 0:
            global_sup = max(global_sup, df_norm(f_tilde, x, rng))

    global_bound = d_eta * c1
    holder_bound = M * c1 * m_est**alpha
    global_ok = global_sup <= global_bound * (1 + 1e-12)
    holder_ok = holder_sup <= holder_bound * (1 + 1e-12)
    return Condition76Report(
        delta=delta,
        alpha=alpha,
        c0=c0,
        c1=c1,
        delta_eta=d_eta,
        local_sup_df=local_sup,
        global_sup=global_sup,
        global_bound=global_bound,
        global_ok=bool(global_ok),
        holder_M=M,
        m_estimate=m_est,
        m_small_branch=m_small,
        m_large_branch=m_large,
        m_large_branch_bound=c0 / eps_id,
        epsilon=eps_id,
        holder_sup=holder_sup,
        holder_bound=holder_bound,
        holder_ok=bool(holder_ok),
        samples=sample_budget,
        seed=rng_seed,
        passed=bool(global_ok and holder_ok and not notes),
        notes=notes,
    )


# ---------------------------------------------------------------------------
# conjugacy


@dataclass
class ConjugacyResult:
    axes: list
    phi_table: np.ndarray  # Phi - id, shape (grid_n,)*n + (n,)
    iterations: int
    residual: float
    residual_history: list
    converged: bool
    stable_indices: tuple
    unstable_indices: tuple
    box_radius: float
    tol: float
    beta_hat: float | None = None
    fit_window: tuple | None = None

    @property
    def dimension(self) -> int:
        return len(self.axes)

    @property
    def spacing(self) -> float:
        return float(self.axes[0][1] - self.axes[0][0])

    def displacement(self, points) -> np.ndarray:
        """Interpolated ``Phi(x) - x`` at points inside the box."""
        return _interpolate(self.axes, self.phi_table, np.atleast_2d(points), self.box_radius,
                            self.stable_indices, self.unstable_indices)

    def phi(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts + self.displacement(pts)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "grid_n": len(self.axes[0]),
            "box_radius": self.box_radius,
            "iterations": self.iterations,
            "residual": self.residual,
            "residual_history": self.residual_history,
            "converged": self.converged,
            "tol": self.tol,
            "beta_hat": self.beta_hat,
            "fit_window": list(self.fit_window) if self.fit_window else None,
            "phi_at_zero": self.displacement(np.zeros(self.dimension))[0].tolist(),
        }

    def table_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        n = self.dimension
        writer.writerow([f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(n)])
        grids = np.meshgrid(*self.axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        vals = self.phi_table.reshape(-1, n)
        for p, v in zip(pts, vals):
            writer.writerow([repr(float(c)) for c in p] + [repr(float(c)) for c in v])
        return buf.getvalue()


def _interpolate(axes, table, points, radius, stable, unstable):
    """Multilinear interpolation of the table; outside the box a component
    vanishes once an orbit can no longer reach the perturbation's support."""
    n = len(axes)
    clipped = np.clip(points, -radius, radius)
    out = np.empty((points.shape[0], n))
    outside = np.abs(points) > radius
    for c in range(n):
        interp = RegularGridInterpolator(axes, table[..., c], method="linear")
        vals = interp(clipped)
        block = unstable if c in unstable else stable
        if block:
            vals = np.where(np.any(outside[:, list(block)], axis=1), 0.0, vals)
        out[:, c] = vals
    return out


def _invert(F, lam, jac, points, max_iter=60):
    """Damped Newton for ``F(y) = p`` at every point at once."""
    y = points / lam
    target_scale = 1.0 + np.linalg.norm(points, axis=1)
    for _ in range(max_iter):
        res = F(y) - points
        err = np.linalg.norm(res, axis=1)
        if np.all(err <= 1e-14 * target_scale):
            return y
        J = jac(y)
        step = np.linalg.solve(J, res[..., None])[..., 0]
        t = np.ones(len(y))
        for _ in range(30):
            trial = y - t[:, None] * step
            worse = np.linalg.norm(F(trial) - points, axis=1) > err
            if not np.any(worse):
                break
            t = np.where(worse, t / 2.0, t)
        y = y - t[:, None] * step
    res = np.linalg.norm(F(y) - points, axis=1)
    if np.any(res > 1e-12 * target_scale):
        raise ConvergenceError(f"Newton inversion of F failed (max residual {res.max():.3g})")
    return y


def _batched_jacobian(fn, y, step=1e-6):
    cols = []
    for j in range(y.shape[1]):
        e = np.zeros(y.shape[1])
        e[j] = step
        cols.append((fn(y + e) - fn(y - e)) / (2.0 * step))
    return np.stack(cols, axis=-1)


def conjugacy_iterate(
    Lambda: HyperbolicLinear,
    f_tilde,
    box_radius: float,
    grid_n: int,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> ConjugacyResult:
    """Solve ``Phi o F = Lambda o Phi`` for ``Phi = id + u`` on a box grid.

    Unstable block: ``u_u <- Lambda_u^-1 (u_u o F + f~_u)``.
    Stable block: ``u_s <- Lambda_s (u_s o F^-1) - f~_s o F^-1``.
    Both sweeps contract in the sup norm; u is tabulated on a uniform grid
    and read between nodes by multilinear interpolation. See :func:`_residual`
    for where the reported residual is measured.
    """
    if not Lambda.is_diagonal:
        raise ConfigurationError("conjugacy iteration needs a diagonal linear part")
    n = Lambda.dimension
    if n > 3:
        raise ConfigurationError("conjugacy iteration is limited to dimension <= 3")
    support = getattr(f_tilde, "support_radius", None)
    if support is None:
        raise ConfigurationError("f~ must expose a support radius")
    if box_radius < support:
        raise ConfigurationError(f"box radius {box_radius:g} must cover the support radius {support:g}")
    lam = np.diag(Lambda.matrix).copy()
    stable, unstable = Lambda.stable_indices, Lambda.unstable_indices
    axes = [np.linspace(-box_radius, box_radius, grid_n) for _ in range(n)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    shape = (grid_n,) * n + (n,)

    def ft(y):
        return np.asarray(f_tilde(y), dtype=float).reshape(y.shape)

    def F(y):
        return y * lam + ft(y)

    Fp = F(pts)
    ft_p = ft(pts)
    if stable:
        jac = lambda y: np.diag(lam)[None] + _batched_jacobian(ft, y)  # noqa: E731
        Finv = _invert(F, lam, jac, pts)
        ft_inv = ft(Finv)
    u = np.zeros((pts.shape[0], n))
    history = []
    iterations = 0
    converged = False
    for _ in range(max_iter):
        table = u.reshape(shape)
        new = np.empty_like(u)
        if unstable:
            ui = list(unstable)
            at_F = _interpolate(axes, table, Fp, box_radius, stable, unstable)
            new[:, ui] = (at_F[:, ui] + ft_p[:, ui]) / lam[ui]
        if stable:
            si = list(stable)
            at_Finv = _interpolate(axes, table, Finv, box_radius, stable, unstable)
            new[:, si] = lam[si] * at_Finv[:, si] - ft_inv[:, si]
        change = float(np.max(np.abs(new - u)))
        u = new
        history.append(change)
        if change < tol:
            converged = True
            break
        iterations += 1
    table = u.reshape(shape)
    residual = _residual(axes, table, pts, Fp, ft_p, lam, box_radius, stable, unstable,
                         Finv if stable else None, ft_inv if stable else None)
    result = ConjugacyResult(
        axes=axes,
        phi_table=table,
        iterations=iterations,
        residual=residual,
        residual_history=history,
        converged=converged,
        stable_indices=stable,
        unstable_indices=unstable,
        box_radius=box_radius,
        tol=tol,
    )
    if not converged:
        raise ConvergenceError(f"no convergence in {max_iter} sweeps (last change {history[-1]:.3g})", history)
    return result


def _residual(axes, table, pts, Fp, ft_p, lam, radius, stable, unstable, Finv=None, ft_inv=None) -> float:
    """Defect of ``Phi(F(y)) - Lambda Phi(y)``, block by block.

    The unstable block is checked at the nodes y, the stable block at the
    preimages ``y = F^-1(node)``; there ``F(y)`` is a node, so no read leaves
    the region where the outside rule is exact.
    """
    n = len(axes)
    u_nodes = table.reshape(-1, n)
    worst = np.zeros(pts.shape[0])
    if unstable:
        ui = list(unstable)
        u_F = _interpolate(axes, table, Fp, radius, stable, unstable)
        d = ft_p[:, ui] + u_F[:, ui] - lam[ui] * u_nodes[:, ui]
        worst = np.maximum(worst, np.linalg.norm(d, axis=1))
    if stable:
        si = list(stable)
        u_pre = _interpolate(axes, table, Finv, radius, stable, unstable)
        d = ft_inv[:, si] + u_nodes[:, si] - lam[si] * u_pre[:, si]
        worst = np.maximum(worst, np.linalg.norm(d, axis=1))
    return float(np.max(worst))


def validation_residual(result: ConjugacyResult, f_tilde, lam, refine: int = 2) -> float:
    """Conjugacy defect between nodes: on a grid ``refine`` times finer than
    the solve grid, at the points whose image stays inside the box."""
    n = result.dimension
    m = (len(result.axes[0]) - 1) * refine + 1
    axes = [np.linspace(-result.box_radius, result.box_radius, m) for _ in range(n)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    lam = np.asarray(lam, dtype=float)
    ft_p = np.asarray(f_tilde(pts), dtype=float).reshape(pts.shape)
    Fp = pts * lam + ft_p
    inside = np.all(np.abs(Fp) <= result.box_radius, axis=1)
    pts, Fp, ft_p = pts[inside], Fp[inside], ft_p[inside]
    defect = ft_p + result.displacement(Fp) - lam * result.displacement(pts)
    return float(np.max(np.linalg.norm(defect, axis=1)))


@dataclass
class BetaFit:
    beta_hat: float | None
    slope: float | None
    fit_residual: float | None
    radii: list
    maxima: list
    indeterminate: bool
    exceeds_alpha: bool
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _sphere_directions(n: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        ang = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    k = np.arange(128) + 0.5
    phi = np.arccos(1 - 2 * k / 128)
    theta = np.pi * (1 + 5**0.5) * k
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=-1)


def fit_beta(result: ConjugacyResult, radii=None, alpha: float = 1.0, noise_floor: float = 1e-14) -> BetaFit:
    """Least-squares slope of ``log max_{|x|=r} |Phi(x) - x|`` against ``log r``, minus one."""
    if radii is None:
        h = result.spacing
        radii = np.geomspace(result.box_radius / 4.0, 8.0 * h, 10)
    radii = [float(r) for r in radii]
    dirs = _sphere_directions(result.dimension)
    maxima = []
    for r in radii:
        disp = result.displacement(dirs * r)
        maxima.append(float(np.max(np.linalg.norm(disp, axis=1))))
    if max(maxima) <= noise_floor:
        result.beta_hat, result.fit_window = None, (min(radii), max(radii))
        return BetaFit(None, None, None, radii, maxima, True, False, "beta indeterminate, Phi ~ id")
    live = [(r, m) for r, m in zip(radii, maxima) if m > noise_floor]
    if len(live) < 2:
        return BetaFit(None, None, None, radii, maxima, True, False, "too few resolvable radii")
    lr = np.log([r for r, _ in live])
    lm = np.log([m for _, m in live])
    coeffs, res, *_ = np.polyfit(lr, lm, 1, full=True)
    slope = float(coeffs[0])
    beta = slope - 1.0
    fit_res = float(np.sqrt(res[0] / len(live))) if len(res) else 0.0
    result.beta_hat = beta
    result.fit_window = (min(radii), max(radii))
    return BetaFit(beta, slope, fit_res, radii, maxima, False, beta > alpha,
                   "beta above alpha" if beta > alpha else "")


def koenigs_limit(lam: float, f_tilde, x, escape_radius: float, max_iter: int = 2000) -> float:
    """``lim lam^-n F^n(x)`` for scalar ``F = lam x + f~`` with ``|lam| > 1``.

    Once the orbit leaves the support of f~ the map is linear and the
    normalized iterate is constant, so the loop stops there.
    """
    if not abs(lam) > 1.0:
        raise ConfigurationError("Koenigs limit needs an expanding multiplier")
    y = np.array([float(x)])
    scale = 1.0
    for _ in range(max_iter):
        if abs(y[0]) > escape_radius or y[0] == 0.0:
            return float(scale * y[0])
        y = lam * y + np.asarray(f_tilde(y), dtype=float).reshape(1)
        scale /= lam
    raise ConvergenceError(f"orbit of {x} did not leave radius {escape_radius} in {max_iter} steps")


def delta_halving(spec: PerturbationSpec, H: BlidMap, halvings: int = 2, sample_budget: int = 200,
                  rng_seed: int = 0) -> dict:
    """Condition (7.6) estimates at ``delta, delta/2, ...``.

    The global estimate scales with delta and must strictly drop. The
    Hoelder quotient of a homogeneous f is invariant under the rescaling, so
    it is only required not to grow (relative slack 1e-9).
    """
    rows = []
    for j in range(halvings + 1):
        s = PerturbationSpec(spec.f_rule, spec.domain_radius, spec.alpha, spec.delta / 2**j, spec.template,
                             spec.holder_constant_local, spec.jacobian, spec.name)
        rep = verify_condition_7_6(globalize_perturbation(s, H), s, None, sample_budget, rng_seed)
        rows.append({"delta": s.delta, "global_sup": rep.global_sup, "holder_sup": rep.holder_sup,
                     "pass": rep.passed})
    g = [r["global_sup"] for r in rows]
    q = [r["holder_sup"] for r in rows]
    global_drops = all(b < a for a, b in zip(g, g[1:]))
    holder_keeps = all(b <= a * (1 + 1e-9) for a, b in zip(q, q[1:]))
    return {"rows": rows, "global_decreasing": global_drops, "holder_non_increasing": holder_keeps,
            "pass": bool(global_drops and holder_keeps and all(r["pass"] for r in rows))}


# ---------------------------------------------------------------------------
# configured problems


@dataclass
class LinearizationProblem:
    matrix: list
    f_name: str
    alpha: float = 1.0
    delta: float = 0.1
    bump: dict = field(default_factory=lambda: {"r_in": 1.0, "r_out": 2.0})
    box_radius: float = 0.25
    grid_n: int = 201
    tol: float = 1e-12
    domain_radius: float = 0.3
    delta_eta: float | None = None
    max_iter: int = 500
    samples: int = 400
    residual_threshold: float = 1e-8
    oracle_window: float = 0.1
    oracle_points: int = 401
    oracle_tol: float = 1e-6
    name: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "LinearizationProblem":
        if not isinstance(d, dict):
            raise ConfigurationError("linearize: each problem must be a JSON object")
        for key in ("matrix", "f_name"):
            if key not in d:
                raise ConfigurationError(f"linearize: missing field {key!r}")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"linearize: unknown field(s) {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def run_linearization(problem: LinearizationProblem, seed: int = 0):
    """Globalize, check condition (7.6), iterate the conjugacy and fit beta.

    Returns the report dict and the :class:`ConjugacyResult` (None when the
    iteration failed). In 1-D with an expanding multiplier the conjugacy is
    also compared with the Koenigs limit on ``[-oracle_window, oracle_window]``.
    """
    Lam = HyperbolicLinear(problem.matrix)
    spec = perturbation(problem.f_name, Lam.dimension, problem.domain_radius, problem.alpha, problem.delta)
    bump = BumpFunction(problem.bump.get("r_in", 1.0), problem.bump.get("r_out", 2.0))
    H = bump_to_blid(bump, Lam.dimension)
    ft = globalize_perturbation(spec, H)
    cond = verify_condition_7_6(ft, spec, problem.delta_eta, problem.samples, seed)
    halving = delta_halving(spec, H, 2, max(50, problem.samples // 2), seed)
    out = {"problem": problem.to_dict(), "linear_part": Lam.to_dict(), "condition_7_6": cond.to_dict(),
           "delta_halving": halving}
    try:
        res = conjugacy_iterate(Lam, ft, problem.box_radius, problem.grid_n, problem.tol, problem.max_iter)
    except ConvergenceError as exc:
        out["conjugacy"] = {"converged": False, "error": str(exc), "residual_history": exc.history}
        out["pass"] = False
        return out, None
    lam = np.diag(Lam.matrix)
    fit = fit_beta(res, alpha=problem.alpha)
    out["conjugacy"] = res.to_dict()
    out["conjugacy"]["validation_residual"] = validation_residual(res, ft, lam)
    out["beta_fit"] = fit.to_dict()
    checks = {
        "condition_7_6": cond.passed,
        "delta_halving": halving["pass"],
        "converged": res.converged,
        "residual": res.residual < problem.residual_threshold,
        "beta_in_range": fit.beta_hat is not None and 0.0 < fit.beta_hat <= problem.alpha + 0.1,
    }
    if Lam.dimension == 1 and abs(lam[0]) > 1.0:
        xs = np.linspace(-problem.oracle_window, problem.oracle_window, problem.oracle_points)
        ref = np.array([koenigs_limit(lam[0], ft, x, ft.support_radius) for x in xs])
        err = float(np.max(np.abs(res.phi(xs[:, None])[:, 0] - ref)))
        out["koenigs"] = {"max_error": err, "window": problem.oracle_window, "points": problem.oracle_points}
        checks["koenigs"] = err <= problem.oracle_tol
    out["checks"] = {k: bool(v) for k, v in checks.items()}
    out["pass"] = all(checks.values())
    return out, res
