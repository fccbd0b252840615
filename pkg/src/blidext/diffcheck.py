"""Numerical evidence for bounded, compact (Hadamard) and Frechet differentiability.

Each check estimates the derivative along the probe directions, measures
the remainder ``r = f(x + t h) - f(x) - t A h`` relative to the step, and
fits the log-log decay of that ratio as the step shrinks. A pass means the
ratio decays at least linearly (slope >= 0.9) and ends below 1e-4. These
are numerical observations, not proofs.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .funcspace import element_norm, random_direction

__all__ = [
    "DEFAULT_SCHEDULE",
    "SLOPE_THRESHOLD",
    "RATIO_THRESHOLD",
    "DerivativeEstimate",
    "DifferentiabilityReport",
    "ChainRuleReport",
    "directional_derivative",
    "default_directions",
    "check_bounded",
    "check_compact",
    "default_compact_sequences",
    "check_frechet",
    "check_chain_rule",
    "reports_to_csv",
]

DEFAULT_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
SLOPE_THRESHOLD = 0.9
RATIO_THRESHOLD = 1e-4
EVIDENCE_NOTE = "numerical evidence only; a pass is not a proof of differentiability"
_EPS = np.finfo(float).eps


@dataclass
class DerivativeEstimate:
    base_point: object
    directions: list
    values: list
    step_schedule: tuple
    richardson_order: int = 1

    def __post_init__(self):
        steps = np.asarray(self.step_schedule, dtype=float)
        if np.any(steps <= 0) or np.any(np.diff(steps) >= 0):
            raise ValueError("step schedule must be positive and strictly decreasing")
        if any(element_norm(v) == 0 for v in self.directions):
            raise ValueError("directions must be nonzero")


def _finest_step(x, v, schedule) -> float:
    floor = math.sqrt(_EPS) * max(1.0, element_norm(x)) / max(element_norm(v), 1e-300)
    return max(float(schedule[-1]), floor)


def _call(f, y, what):
    try:
        return f(y)
    except Exception as exc:  # annotate and re-raise
        exc.args = (f"{exc.args[0] if exc.args else exc} [while evaluating {what}]",) + tuple(exc.args[1:])
        raise


def directional_derivative(f: Callable, x, v, schedule: Sequence[float] = DEFAULT_SCHEDULE):
    """Central difference along v with one Richardson level: ``(4 D(t/2) - D(t)) / 3``."""
    t = _finest_step(x, v, schedule)

    def central(s):
        plus = _call(f, x + v * s, f"f(x + {s:g} v)")
        minus = _call(f, x - v * s, f"f(x - {s:g} v)")
        return (plus - minus) * (1.0 / (2.0 * s))

    coarse, fine = central(t), central(t / 2.0)
    return (fine * 4.0 - coarse) * (1.0 / 3.0)


def default_directions(x, count: int = 16, seed: int = 0) -> list:
    """``count`` deterministic pseudo-random unit directions shaped like x."""
    return [random_direction(x, np.random.default_rng(seed + i)) for i in range(count)]


@dataclass
class DifferentiabilityReport:
    notion: str
    ratios: list  # rows: {"direction": int, "t": float, "ratio": float}
    decay_slopes: list
    max_ratios: list
    slope: float
    final_ratio: float
    verdict: bool
    schedule: list
    slope_threshold: float = SLOPE_THRESHOLD
    ratio_threshold: float = RATIO_THRESHOLD
    radius: float | None = None
    details: dict = field(default_factory=dict)
    note: str = EVIDENCE_NOTE

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = "pass" if self.verdict else "fail"
        d["slope"] = _json_float(self.slope)
        d["decay_slopes"] = [_json_float(s) for s in self.decay_slopes]
        return d

    def csv_rows(self):
        for row in self.ratios:
            yield (self.notion, row["direction"], row["t"], row["ratio"])


def _json_float(x):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _fit(steps, ratios, floors):
    """Log-log slope of ratio vs step over the points above round-off."""
    steps, ratios, floors = map(np.asarray, (steps, ratios, floors))
    live = ratios > floors
    if live.sum() < 2:
        # remainder is zero to round-off, or only one resolvable point
        return math.inf if ratios[-1] <= floors[-1] else 0.0
    return float(np.polyfit(np.log(steps[live]), np.log(ratios[live]), 1)[0])


def _remainder_table(f, x, fx, steps, probes, norm, derivs):
    """Ratios ``||f(x + t h_t) - f(x) - t A h|| / |t|`` for every probe and step.

    A probe is either a fixed direction or a list holding one direction per step.
    """
    fx_norm = norm(fx)
    rows, per_dir = [], []
    for d, probe in enumerate(probes):
        ratios, floors = [], []
        Ah = derivs[d]
        ah_norm = norm(Ah)
        for i, t in enumerate(steps):
            h_t = probe[i] if isinstance(probe, list) else probe
            ft = _call(f, x + h_t * t, "f(x + t h)")
            r = ft - fx - Ah * t
            ratio = norm(r) / abs(t)
            floor = 64 * _EPS * (fx_norm + norm(ft)) / abs(t) + 64 * _EPS * ah_norm
            ratios.append(ratio)
            floors.append(floor)
            rows.append({"direction": d, "t": float(t), "ratio": float(ratio)})
        per_dir.append((ratios, floors))
    return rows, per_dir


def _report(notion, steps, rows, per_dir, radius=None, details=None):
    abs_steps = np.abs(np.asarray(steps, dtype=float))
    slopes = [_fit(abs_steps, r, fl) for r, fl in per_dir]
    ratios = np.array([r for r, _ in per_dir])
    floors = np.array([fl for _, fl in per_dir])
    worst = ratios.max(axis=0)
    worst_floor = floors.max(axis=0)
    slope = _fit(abs_steps, worst, worst_floor)
    final = float(worst[-1])
    verdict = slope >= SLOPE_THRESHOLD and final <= RATIO_THRESHOLD
    return DifferentiabilityReport(
        notion=notion,
        ratios=rows,
        decay_slopes=slopes,
        max_ratios=[float(w) for w in worst],
        slope=slope,
        final_ratio=final,
        verdict=bool(verdict),
        schedule=[float(s) for s in steps],
        radius=radius,
        details=details or {},
    )


def check_bounded(f, x, S, schedule=DEFAULT_SCHEDULE, norm=element_norm) -> DifferentiabilityReport:
    """Uniform decay of ``||r(t h)|| / t`` over the directions in S."""
    S = list(S)
    fx = f(x)
    derivs = [directional_derivative(f, x, h, schedule) for h in S]
    rows, per_dir = _remainder_table(f, x, fx, schedule, S, norm, derivs)
    radius = max(element_norm(h) for h in S)
    return _report("Bounded", schedule, rows, per_dir, radius=radius)


def default_compact_sequences(directions, perturbations, schedule=DEFAULT_SCHEDULE):
    """``h_n = h + (1/n) w`` with ``1/n`` running through the step schedule."""
    return [([h + w * t for t in schedule], h) for h, w in zip(directions, perturbations)]


def check_compact(f, x, h_sequences, t_sequence=DEFAULT_SCHEDULE, norm=element_norm) -> DifferentiabilityReport:
    """Decay of ``||f(x + t_n h_n) - f(x) - t_n A h|| / |t_n|`` along ``h_n -> h``.

    ``t_sequence`` may alternate in sign; only ``|t_n|`` enters the fit.
    """
    t_sequence = list(t_sequence)
    fx = f(x)
    derivs, probes, tails = [], [], []
    for seq, h in h_sequences:
        seq = list(seq)
        if len(seq) != len(t_sequence):
            raise ValueError("each h-sequence needs one term per t_n")
        derivs.append(directional_derivative(f, x, h))
        probes.append(seq)
        tails.append(float(element_norm(seq[-1] - h)))
    rows, per_dir = _remainder_table(f, x, fx, t_sequence, probes, norm, derivs)
    return _report("Compact", t_sequence, rows, per_dir, details={"tail_distances": tails})


def check_frechet(
    f,
    x,
    norm_pair=(element_norm, element_norm),
    sample_budget: int = 16,
    rng_seed: int = 0,
    radii=DEFAULT_SCHEDULE,
) -> DifferentiabilityReport:
    """Decay of ``||r(h)||_2 / ||h||_1`` over random h with shrinking norm."""
    norm_in, norm_out = norm_pair
    fx = f(x)
    units = []
    for i in range(sample_budget):
        u = random_direction(x, np.random.default_rng(rng_seed + i))
        units.append(u * (1.0 / norm_in(u)))
    derivs = [directional_derivative(f, x, u) for u in units]
    rows, per_dir = _remainder_table(f, x, fx, radii, units, norm_out, derivs)
    return _report("Frechet", radii, rows, per_dir, details={"rng_seed": rng_seed, "samples": sample_budget})


@dataclass
class ChainRuleReport:
    errors: list
    max_relative_error: float
    rtol: float
    verdict: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = "pass" if self.verdict else "fail"
        return d


def check_chain_rule(f, g, x, directions, rtol: float = 1e-6, norm=element_norm) -> ChainRuleReport:
    """Compare ``D(f o g)(x) v`` with ``Df(g(x)) (Dg(x) v)`` direction by direction."""
    gx = g(x)
    errors = []
    for v in directions:
        lhs = directional_derivative(lambda y: f(g(y)), x, v)
        inner = directional_derivative(g, x, v)
        if norm(inner) == 0:
            rhs = lhs * 0.0
        else:
            rhs = directional_derivative(f, gx, inner)
        scale = max(norm(lhs), norm(rhs))
        err = norm(lhs - rhs)
        errors.append(float(err / scale) if scale > 1e-12 else float(err))
    worst = max(errors, default=0.0)
    return ChainRuleReport(errors=errors, max_relative_error=worst, rtol=rtol, verdict=worst <= rtol)


def reports_to_csv(reports) -> str:
    """Flat ``notion,direction_id,t,ratio`` table for plotting."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["notion", "direction_id", "t", "ratio"])
    for rep in reports:
        for row in rep.csv_rows():
            writer.writerow([row[0], row[1], repr(row[2]), repr(row[3])])
    return buf.getvalue()
