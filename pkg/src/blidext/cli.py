"""Batch front end: ``blidext <command> [--config FILE] [--seed N] [--output DIR] [--quiet]``.

Every run writes ``report.json`` (schema ``SCHEMA_VERSION``) and CSV side
tables into the output directory. Exit status: 0 when every verdict passes,
2 when any verdict fails, 1 on a configuration error.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .blid import (
    AMPLITUDES,
    BlidMap,
    blid_metric_scale,
    blid_scale,
    blid_windowed_family,
    bump_to_blid,
    certify_blid,
    jet_cq_blid,
    metric_containment,
    metric_scale_index,
    pointwise_c0_blid,
)
from .bump import BumpFunction
from .diffcheck import (
    check_bounded,
    check_chain_rule,
    check_compact,
    check_frechet,
    default_compact_sequences,
    default_directions,
    reports_to_csv,
)
from .errors import ArgumentError, CapacityError, ConfigurationError, DomainFault
from .funcspace import (
    GridFunction,
    JetGridFunction,
    NormFamilyDescriptor,
    NormKind,
    random_grid_function,
    random_jet,
)
from .germ import CATALOG, catalog_map, extend
from .linearize import LinearizationProblem, run_linearization

SCHEMA_VERSION = "1.0"
OUTPUT_ENV = "BLIDEXT_OUTPUT_DIR"
COMMANDS = ("certify-blid", "extend-demo", "diffcheck", "linearize", "full-suite")
COMMON_KEYS = {"seed", "space", "bump", "budgets", "output_dir", "nodes"}
SECTION_KEYS = {"extend", "diffcheck", "linearize"}
DEFAULT_BUDGETS = {"certify": 200, "fuzz": 1000, "directions": 8, "containment": 200}
SPACES = ("C0", "C2", "R2")

DEFAULT_PROBLEMS = [
    {"name": "scalar_square", "matrix": [[2.0]], "f_name": "square", "grid_n": 16001},
    {"name": "saddle_swap", "matrix": [[2.0, 0.0], [0.0, 0.5]], "f_name": "quadratic_swap", "grid_n": 201},
]


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    command: str
    seed: int = 0
    space: dict | None = None
    bump: dict = field(default_factory=lambda: {"r_in": 1.0, "r_out": 2.0})
    budgets: dict = field(default_factory=lambda: dict(DEFAULT_BUDGETS))
    output_dir: str | None = None
    nodes: int = 1024
    sections: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, command: str) -> "ExperimentConfig":
        if command not in COMMANDS:
            raise ConfigurationError(f"command: unknown command {command!r}")
        if not isinstance(d, dict):
            raise ConfigurationError("config: top level must be a JSON object")
        d = dict(d)
        if "command" in d and d.pop("command") != command:
            raise ConfigurationError("command: config names a different command")
        sections = {k: d.pop(k) for k in list(d) if k in SECTION_KEYS}
        if command == "linearize" and "linearize" not in sections:
            # a bare problem at top level
            problem = {k: d.pop(k) for k in list(d) if k not in COMMON_KEYS}
            if problem:
                sections["linearize"] = problem
        unknown = set(d) - COMMON_KEYS
        if unknown:
            raise ConfigurationError(f"config: unknown field(s) {sorted(unknown)}")
        budgets = dict(DEFAULT_BUDGETS)
        extra = d.get("budgets", {})
        if set(extra) - set(DEFAULT_BUDGETS):
            raise ConfigurationError(f"budgets: unknown field(s) {sorted(set(extra) - set(DEFAULT_BUDGETS))}")
        budgets.update(extra)
        for k, v in budgets.items():
            if not isinstance(v, int) or v < 1:
                raise ConfigurationError(f"budgets.{k}: must be a positive integer")
        seed = d.get("seed", 0)
        if not isinstance(seed, int):
            raise ConfigurationError("seed: must be an integer")
        bump = d.get("bump", {"r_in": 1.0, "r_out": 2.0})
        try:
            BumpFunction(bump.get("r_in", 1.0), bump.get("r_out", 2.0))
        except (ArgumentError, AttributeError) as exc:
            raise ConfigurationError(f"bump: {exc}") from None
        space = d.get("space")
        if space is not None:
            _parse_space(space)
        cfg = cls(command, seed, space, bump, budgets, d.get("output_dir"), int(d.get("nodes", 1024)), sections)
        cfg._validate_sections()
        return cfg

    def _validate_sections(self):
        for name in self.sections.get("extend", {}).get("maps", []):
            if name not in CATALOG:
                raise ConfigurationError(f"extend.maps: unknown catalog name {name!r}")
        dc = self.sections.get("diffcheck", {})
        for key in ("maps", "controls"):
            for name in dc.get(key, []):
                if name not in CATALOG:
                    raise ConfigurationError(f"diffcheck.{key}: unknown catalog name {name!r}")
        for key in ("extend", "diffcheck"):
            for sp in self.sections.get(key, {}).get("spaces", []):
                if sp not in SPACES:
                    raise ConfigurationError(f"{key}.spaces: unknown space {sp!r}; known: {list(SPACES)}")
        if self.command in ("linearize", "full-suite") and "linearize" in self.sections:
            self.problems()

    def bump_function(self) -> BumpFunction:
        return BumpFunction(self.bump.get("r_in", 1.0), self.bump.get("r_out", 2.0))

    def problems(self) -> list[LinearizationProblem]:
        raw = self.sections.get("linearize", DEFAULT_PROBLEMS)
        if isinstance(raw, dict):
            raw = raw.get("problems", [raw]) if "problems" in raw else [raw]
        out = []
        for i, p in enumerate(raw):
            p = dict(p)
            p.setdefault("bump", dict(self.bump))
            p.setdefault("name", f"problem{i}")
            out.append(LinearizationProblem.from_dict(p))
        return out

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "seed": self.seed,
            "space": self.space,
            "bump": self.bump,
            "budgets": self.budgets,
            "nodes": self.nodes,
            "sections": self.sections,
        }


def _parse_space(space: dict):
    if not isinstance(space, dict) or "kind" not in space:
        raise ConfigurationError("space.kind: missing")
    kind = space["kind"]
    if kind == "Euclidean":
        n = space.get("n", 2)
        if not isinstance(n, int) or n < 1:
            raise ConfigurationError("space.n: must be a positive integer")
        return None
    try:
        return NormFamilyDescriptor(NormKind(kind), space.get("q_cap", 6), space.get("k_max", 20))
    except ValueError:
        known = [k.value for k in NormKind] + ["Euclidean"]
        raise ConfigurationError(f"space.kind: unknown space {kind!r}; known: {known}") from None


# ---------------------------------------------------------------------------
# commands


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _constructions(cfg: ExperimentConfig) -> list[tuple[str, BlidMap]]:
    bump, n = cfg.bump_function(), cfg.nodes
    out = []
    kinds = None if cfg.space is None else cfg.space["kind"]
    if kinds in (None, "SupOnT"):
        H = pointwise_c0_blid(bump, n=n)
        out.append(("PointwiseC0", H))
        for c in (1.0, 0.1, 0.01):
            out.append((f"PointwiseC0 scaled c={c:g}", blid_scale(H, c)))
    if kinds in (None, "CqInterval"):
        qs = (1, 2, 3) if kinds is None else (max(1, cfg.space.get("q_cap", 6)),)
        for q in qs:
            out.append((f"JetCq q={q}", jet_cq_blid(q, bump, n=n)))
    windowed = ("CInfInterval", "WindowedRealLine") if kinds is None else ()
    if kinds in ("CInfInterval", "WindowedRealLine", "CqRealLine"):
        windowed = (kinds,)
    for kind in windowed:
        desc = _parse_space(cfg.space) if kinds is not None else NormFamilyDescriptor(NormKind(kind))
        fam = blid_windowed_family(desc, bump, n=n)
        for k in range(min(4, desc.k_max) + 1):
            out.append((f"{kind} k={k}", fam[k]))
    if kinds in (None, "Euclidean"):
        dims = (1, 2, 3) if kinds is None else (cfg.space.get("n", 2),)
        for d in dims:
            out.append((f"FiniteDim n={d}", bump_to_blid(bump, d)))
    return out


def _containment(cfg: ExperimentConfig) -> list[dict]:
    """Metric-ball containment of the rescaled windowed family."""
    kind = "CInfInterval" if cfg.space is None else cfg.space["kind"]
    if kind not in ("CInfInterval", "WindowedRealLine", "CqRealLine"):
        return []
    desc = _parse_space(cfg.space) if cfg.space is not None else NormFamilyDescriptor(NormKind.CINF_INTERVAL)
    fam = blid_windowed_family(desc, cfg.bump_function(), n=cfg.nodes)
    lo, hi = desc.domain()
    rows = []
    for c in (2.0, 0.5, 0.1, 0.01):
        H = blid_metric_scale(fam, c, desc)
        xs = []
        for i in range(cfg.budgets["containment"]):
            rng = np.random.default_rng(cfg.seed + i)
            amp = AMPLITUDES[i % len(AMPLITUDES)] * rng.uniform(0.5, 1.0)
            xs.append(random_jet(rng, desc.q_cap, amp, lo, hi, cfg.nodes))
        worst = metric_containment(H, xs, desc)
        rows.append({"c": c, "k": metric_scale_index(c), "max_metric": worst, "pass": worst < c})
    return rows


def cmd_certify(cfg: ExperimentConfig) -> tuple[dict, dict, list]:
    results, rows, verdicts = [], [], []
    for i, (name, H) in enumerate(_constructions(cfg)):
        rep = certify_blid(H, cfg.budgets["certify"], cfg.seed + 7919 * i)
        d = rep.to_dict()
        d["name"] = name
        results.append(d)
        rows.append((name, rep.identity_deviation, rep.empirical_bound, rep.claimed_bound,
                     rep.empirical_identity_radius, "pass" if rep.passed else "fail"))
        verdicts.append((f"certify:{name}", rep.passed))
    containment = _containment(cfg)
    for r in containment:
        verdicts.append((f"metric_containment:c={r['c']:g}", r["pass"]))
    tables = {
        "certify.csv": _table(["construction", "identity_deviation", "empirical_bound", "claimed_bound",
                               "empirical_identity_radius", "verdict"], rows),
    }
    if containment:
        tables["metric_containment.csv"] = _table(
            ["c", "k", "max_metric", "verdict"],
            [(r["c"], r["k"], r["max_metric"], "pass" if r["pass"] else "fail") for r in containment])
    return {"constructions": results, "metric_containment": containment}, tables, verdicts


def _space_setup(space: str, bump: BumpFunction, nodes: int):
    """(blid map, sampler(rng, amplitude), zero element) for a named demo space."""
    if space == "C0":
        H = pointwise_c0_blid(bump, n=nodes)
        return H, lambda rng, a: random_grid_function(rng, a, 0.0, 1.0, nodes), GridFunction.constant(0.0, n=nodes)
    if space == "C2":
        H = jet_cq_blid(2, bump, n=nodes)
        return H, lambda rng, a: random_jet(rng, 2, a, 0.0, 1.0, nodes), JetGridFunction.zero(2, n=nodes)
    H = bump_to_blid(bump, 2)

    def sample(rng, a):
        v = rng.normal(size=2)
        return v * (a / np.linalg.norm(v))

    return H, sample, np.zeros(2)


def _map_spaces(name: str, spaces) -> list[str]:
    if name == "quadratic_swap":
        return [s for s in spaces if s == "R2"]
    if name == "integral_square":
        return [s for s in spaces if s != "R2"]
    return list(spaces)


def _diff(a, b) -> float:
    if isinstance(a, JetGridFunction):
        return float(max(np.max(np.abs(a.jet - b.jet), initial=0.0), np.max(np.abs(a.top.samples - b.top.samples))))
    if isinstance(a, GridFunction):
        return float(np.max(np.abs(a.samples - b.samples)))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def cmd_extend(cfg: ExperimentConfig) -> tuple[dict, dict, list]:
    sec = cfg.sections.get("extend", {})
    maps = sec.get("maps", ["square", "expm1", "integral_square", "quadratic_swap"])
    spaces = sec.get("spaces", list(SPACES))
    radius = float(sec.get("domain_radius", 1.0))
    bump = cfg.bump_function()
    results, rows, verdicts = [], [], []
    for name in maps:
        for space in _map_spaces(name, spaces):
            H, sample, _ = _space_setup(space, bump, cfg.nodes)
            f = catalog_map(name, radius)
            F = extend(f, H)
            worst, faults = 0.0, 0
            n_id = max(1, cfg.budgets["fuzz"] // 10)
            for i in range(n_id):
                rng = np.random.default_rng(cfg.seed + i)
                x = sample(rng, 1.0)
                x = x * (F.inner.identity_radius * rng.uniform(0.0, 1.0) * (1 - 1e-9) / F.inner.governing_norm(x))
                worst = max(worst, _diff(F(x), f(x)))
            for i in range(cfg.budgets["fuzz"]):
                rng = np.random.default_rng(cfg.seed + 100_000 + i)
                amp = AMPLITUDES[i % len(AMPLITUDES)] * rng.uniform(0.5, 1.0)
                try:
                    F(sample(rng, amp))
                except DomainFault:
                    faults += 1
            ok = worst <= 1e-12 and faults == 0
            case = f"{name}@{space}"
            results.append({"case": case, "identity_region_deviation": worst, "fuzz_inputs": cfg.budgets["fuzz"],
                            "domain_faults": faults, "blid": F.inner.parameters(), "pass": ok})
            rows.append((name, space, worst, cfg.budgets["fuzz"], faults, "pass" if ok else "fail"))
            verdicts.append((f"extend:{case}", ok))
    tables = {"extend.csv": _table(["map", "space", "identity_region_deviation", "fuzz_inputs", "domain_faults",
                                    "verdict"], rows)}
    return {"cases": results}, tables, verdicts


def _diff_case(label, fn, x0, count, seed, expected, reports):
    dirs = default_directions(x0, count, seed)
    perts = default_directions(x0, count, seed + 10_000)
    b = check_bounded(fn, x0, dirs)
    c = check_compact(fn, x0, default_compact_sequences(dirs, perts))
    fr = check_frechet(fn, x0, sample_budget=count, rng_seed=seed)
    verdicts = {"Bounded": b.verdict, "Compact": c.verdict, "Frechet": fr.verdict}
    implication = (not b.verdict) or c.verdict
    observed = all(verdicts.values())
    if expected == "pass":
        ok = observed and implication
    else:
        ok = not any(verdicts.values()) and implication
    for rep in (b, c, fr):
        rep.details["case"] = label
        reports.append(rep)
    return {
        "case": label,
        "expected": expected,
        "verdicts": {k: "pass" if v else "fail" for k, v in verdicts.items()},
        "slopes": {r.notion: r.to_dict()["slope"] for r in (b, c, fr)},
        "final_ratios": {r.notion: r.final_ratio for r in (b, c, fr)},
        "implication_consistent": implication,
        "pass": bool(ok),
    }


def cmd_diffcheck(cfg: ExperimentConfig) -> tuple[dict, dict, list]:
    sec = cfg.sections.get("diffcheck", {})
    custom = "maps" in sec
    maps = sec.get("maps", ["square", "expm1", "integral_square", "quadratic_swap"])
    controls = sec.get("controls", [] if custom else ["abs"])
    with_blids = sec.get("blids", not custom)
    spaces = sec.get("spaces", list(SPACES))
    count = cfg.budgets["directions"]
    bump = cfg.bump_function()
    cases, reports, chains, verdicts = [], [], [], []
    if with_blids:
        blids = [(s, *_space_setup(s, bump, cfg.nodes)[::2]) for s in SPACES]
        desc = NormFamilyDescriptor(NormKind.CINF_INTERVAL)
        fam = blid_windowed_family(desc, bump, n=cfg.nodes)
        blids.append(("CInfInterval k=2", fam[2], JetGridFunction.zero(desc.q_cap, n=cfg.nodes)))
        for label, H, x0 in blids:
            cases.append(_diff_case(f"blid@{label}", H, x0, count, cfg.seed, "pass", reports))
    for expected, names in (("pass", maps), ("fail", controls)):
        for name in names:
            for space in _map_spaces(name, spaces):
                H, _, x0 = _space_setup(space, bump, cfg.nodes)
                f = catalog_map(name, 1.0)
                F = extend(f, H)
                label = f"{name}@{space}"
                cases.append(_diff_case(label, F, x0, count, cfg.seed, expected, reports))
                if expected == "pass":
                    ch = check_chain_rule(f, F.inner, x0, default_directions(x0, count, cfg.seed))
                    chains.append({"case": label, **ch.to_dict()})
                    verdicts.append((f"chain_rule:{label}", ch.verdict))
    for c in cases:
        verdicts.append((f"diffcheck:{c['case']}", c["pass"]))
    tables = {
        "diffcheck_ratios.csv": reports_to_csv(reports),
        "diffcheck_summary.csv": _table(
            ["case", "expected", "bounded", "compact", "frechet", "verdict"],
            [(c["case"], c["expected"], c["verdicts"]["Bounded"], c["verdicts"]["Compact"],
              c["verdicts"]["Frechet"], "pass" if c["pass"] else "fail") for c in cases]),
    }
    return {"cases": cases, "chain_rule": chains}, tables, verdicts


def cmd_linearize(cfg: ExperimentConfig) -> tuple[dict, dict, list]:
    results, tables, verdicts = [], {}, []
    for p in cfg.problems():
        rep, res = run_linearization(p, cfg.seed)
        results.append(rep)
        verdicts.append((f"linearize:{p.name}", rep["pass"]))
        if res is not None:
            tables[f"conjugacy_{p.name}.csv"] = res.table_csv()
            fit = rep["beta_fit"]
            tables[f"beta_fit_{p.name}.csv"] = _table(["radius", "max_displacement"],
                                                       list(zip(fit["radii"], fit["maxima"])))
        tables[f"residual_history_{p.name}.csv"] = _table(
            ["sweep", "change"], list(enumerate(rep["conjugacy"]["residual_history"])))
    return {"problems": results}, tables, verdicts


RUNNERS = {
    "certify-blid": [("certify", cmd_certify)],
    "extend-demo": [("extend", cmd_extend)],
    "diffcheck": [("diffcheck", cmd_diffcheck)],
    "linearize": [("linearize", cmd_linearize)],
}
RUNNERS["full-suite"] = [r for k in ("certify-blid", "extend-demo", "diffcheck", "linearize") for r in RUNNERS[k]]


# ---------------------------------------------------------------------------
# reports


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars plain."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    return obj


def run(cfg: ExperimentConfig) -> tuple[dict, dict]:
    results, tables, verdicts = {}, {}, []
    for key, fn in RUNNERS[cfg.command]:
        res, tab, ver = fn(cfg)
        results[key] = res
        tables.update(tab)
        verdicts.extend(ver)
    failed = [name for name, ok in verdicts if not ok]
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "results": results,
        "verdicts": {name: "pass" if ok else "fail" for name, ok in verdicts},
        "summary": {"cases": len(verdicts), "passed": len(verdicts) - len(failed), "failed": failed},
        "verdict": "fail" if failed else "pass",
    }
    return _clean(report), tables


def write_report(report: dict, tables: dict, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    body = dict(report)
    body["metadata"] = {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
    path = out_dir / "report.json"
    path.write_text(json.dumps(body, indent=2, sort_keys=True, allow_nan=False) + "\n")
    for name, text in tables.items():
        (out_dir / name).write_text(text)
    return path


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors: one line on stderr, exit 1."""

    def error(self, message):
        self.exit(1, f"blidext: configuration error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="blidext", description="Blid-map experiments with JSON/CSV reports.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON configuration file")
    p.add_argument("--seed", type=int, help="overrides the seed in the config")
    p.add_argument("--output", type=Path, help=f"output directory (default ${OUTPUT_ENV} or ./blidext-out)")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = {}
        if args.config is not None:
            try:
                raw = json.loads(args.config.read_text())
            except OSError as exc:
                raise ConfigurationError(f"config: cannot read {args.config}: {exc.strerror}") from None
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"config: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if args.seed is not None:
            raw = dict(raw, seed=args.seed)
        cfg = ExperimentConfig.from_dict(raw, args.command)
    except (ConfigurationError, TypeError) as exc:
        print(f"blidext: configuration error: {exc}", file=sys.stderr)
        return 1
    out_dir = args.output or Path(cfg.output_dir or os.environ.get(OUTPUT_ENV, "blidext-out"))
    try:
        report, tables = run(cfg)
    except (ConfigurationError, ArgumentError, CapacityError) as exc:
        print(f"blidext: configuration error: {exc}", file=sys.stderr)
        return 1
    path = write_report(report, tables, out_dir)
    if not args.quiet:
        s = report["summary"]
        print(f"{cfg.command}: {s['passed']}/{s['cases']} passed -> {path}")
        for name in s["failed"]:
            print(f"  FAIL {name}")
    return 0 if report["verdict"] == "pass" else 2


if __name__ == "__main__":
    sys.exit(main())
