"""Batch experiment runner: simulate | moments | criterion | verify | orbits.

Configuration comes from an optional JSON file plus flag overrides; every
subcommand is a pure function of (config, seed) and writes machine-readable
tables (CSV with '.' decimals and LF endings, or JSON) into the output
directory. Exit codes: 0 success, 1 verification failure, 2 usage or config
error, 3 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import jsonschema

from .cascade import (
    DEFAULT_OUTCOME_CAP,
    MomentOrder,
    exact_moment_discrete,
    exact_moment_integer,
    mc_mass_table,
    mc_moment,
    outcome_count,
)
from .criteria import (
    criterion_profile,
    fit_geometric_bound,
    moment_bound_report,
    necessity_check,
    verify_census_bounds,
    verify_class_bound,
    verify_mass_identity,
    verify_orbit_bound,
    verify_power_bound,
)
from .errors import CascadeLabError, ConfigError, ResourceCapError, VerdictError
from .laws import WeightModel
from .orbits import (
    build_census,
    census_sum_bound,
    enumerate_classes,
    enumerate_marked_classes,
    marked_census_sum_bound,
)
from .words import BaseMeasure, TreeShape

CHECK_IDS = (
    "mass-identity",
    "power-bound",
    "orbit-bound",
    "class-bound",
    "census-bound",
    "moment-cap",
    "growth-check",
)

_NUMBER = {"type": ["number", "string"]}
_LAW = {
    "type": "object",
    "properties": {
        "type": {"enum": ["constant", "two_point", "discrete", "lognormal"]},
        "a": _NUMBER,
        "b": _NUMBER,
        "p": _NUMBER,
        "values": {"type": "array", "items": _NUMBER},
        "probs": {"type": "array", "items": _NUMBER},
        "sigma": {"type": "number"},
    },
    "required": ["type"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "shape": {
            "type": "object",
            "properties": {"m": {"type": "integer"}, "k": {"type": "integer"}},
            "required": ["m", "k"],
            "additionalProperties": False,
        },
        "measure": {
            "type": "object",
            "properties": {
                "splitting": {
                    "anyOf": [
                        {"const": "uniform"},
                        {
                            "type": "object",
                            "properties": {
                                "per_depth": {"type": "array"},
                                "per_vertex": {"type": "object"},
                            },
                            "additionalProperties": False,
                        },
                    ]
                }
            },
            "required": ["splitting"],
            "additionalProperties": False,
        },
        "model": {
            "type": "object",
            "properties": {
                "assignment": {"enum": ["homogeneous", "per_depth", "per_vertex"]},
                "laws": {
                    "anyOf": [
                        {"type": "array", "items": _LAW},
                        {"type": "object", "additionalProperties": _LAW},
                    ]
                },
            },
            "required": ["assignment", "laws"],
            "additionalProperties": False,
        },
        "q": {"type": "array", "items": {"type": "number"}},
        "k": {"type": ["integer", "null"]},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "engine": {"enum": ["auto", "mc", "exact_integer", "exact_discrete"]},
        "caps": {
            "type": "object",
            "properties": {
                "outcomes": {"type": "integer", "minimum": 1},
                "tuples": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "out": {"type": "string"},
        "format": {"enum": ["csv", "json"]},
        "threads": {"type": ["integer", "null"], "minimum": 1},
        "orbits": {
            "type": "object",
            "properties": {
                "n": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "lambdas": {"type": "array", "items": {"type": "number"}},
                "epsilons": {"type": "array", "items": {"type": "number"}},
            },
            "additionalProperties": False,
        },
        "verify": {
            "type": "object",
            "properties": {
                "checks": {"type": "array", "items": {"enum": list(CHECK_IDS)}},
                "perturb_rhs": {"type": "number"},
                "max_root_depth": {"type": ["integer", "null"]},
                "epsilons": {"type": "array", "items": {"type": "number"}},
                "census_n": {"type": "array", "items": {"type": "integer"}},
                "lambdas": {"type": "array", "items": {"type": "number"}},
            },
            "additionalProperties": False,
        },
        "criterion": {
            "type": "object",
            "properties": {"delta": {"type": "number"}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

DEFAULT_CONFIG = {
    "shape": {"m": 2, "k": 2},
    "measure": {"splitting": "uniform"},
    "model": {
        "assignment": "homogeneous",
        "laws": [{"type": "two_point", "a": "1/2", "b": "3/2", "p": "1/2"}],
    },
    "q": [2, 2.5],
    "k": None,
    "trials": 10_000,
    "seed": 0,
    "engine": "auto",
    "caps": {"outcomes": DEFAULT_OUTCOME_CAP, "tuples": DEFAULT_OUTCOME_CAP},
    "out": "out",
    "format": "csv",
    "threads": None,
    "orbits": {"n": [2, 3], "lambdas": [0.3, 0.6, 0.9], "epsilons": [0.25, 0.5, 0.75]},
    "verify": {
        "checks": list(CHECK_IDS),
        "perturb_rhs": 0.0,
        "max_root_depth": None,
        "epsilons": [0.25, 0.5, 0.75],
        "census_n": [2, 3],
        "lambdas": [0.3, 0.6],
    },
    "criterion": {"delta": 0.01},
}


@dataclass
class ExperimentConfig:
    """Validated experiment settings; unknown fields are rejected."""

    data: dict

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(doc, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"invalid config: {exc.message} (at {list(exc.path)})") from exc
        merged = copy.deepcopy(DEFAULT_CONFIG)
        for key, value in doc.items():
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key].update(value)
            else:
                merged[key] = value
        try:
            jsonschema.validate(merged, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"invalid config: {exc.message}") from exc
        return cls(merged)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    @property
    def shape(self) -> TreeShape:
        return TreeShape(self.data["shape"]["m"], self.data["shape"]["k"])

    @property
    def measure(self) -> BaseMeasure:
        doc = {"shape": self.data["shape"], "splitting": self.data["measure"]["splitting"]}
        try:
            return BaseMeasure.from_json_dict(doc)
        except ValueError as exc:
            raise ConfigError(f"invalid measure: {exc}") from exc

    @property
    def model(self) -> WeightModel:
        try:
            model = WeightModel.from_json_dict(self.data["model"])
            model.validate_for(self.shape)
            return model
        except ValueError as exc:
            raise ConfigError(f"invalid model: {exc}") from exc

    @property
    def k_range(self) -> int:
        return self.data["k"] if self.data["k"] is not None else self.data["shape"]["k"]


def _load_config(path: str | None, overrides: argparse.Namespace) -> ExperimentConfig:
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
    cfg = ExperimentConfig.from_dict(doc)
    data = cfg.data
    if overrides.seed is not None:
        data["seed"] = overrides.seed
    if overrides.out is not None:
        data["out"] = overrides.out
    if overrides.engine is not None:
        data["engine"] = overrides.engine
    if overrides.q is not None:
        try:
            data["q"] = [float(x) for x in overrides.q.split(",") if x]
        except ValueError as exc:
            raise ConfigError(f"bad --q list {overrides.q!r}") from exc
    if overrides.k is not None:
        data["k"] = overrides.k
    if overrides.trials is not None:
        data["trials"] = overrides.trials
    if overrides.cap is not None:
        data["caps"]["outcomes"] = overrides.cap
        data["caps"]["tuples"] = overrides.cap
    if overrides.format is not None:
        data["format"] = overrides.format
    if overrides.threads is not None:
        data["threads"] = overrides.threads
    if getattr(overrides, "perturb_rhs", None) is not None:
        data["verify"]["perturb_rhs"] = overrides.perturb_rhs
    if getattr(overrides, "n", None) is not None:
        data["orbits"]["n"] = [int(x) for x in overrides.n.split(",") if x]
    return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# Table output
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (Fraction, float)):
        return repr(float(value))
    return str(value)


def write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence], fmt: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        out = path.with_suffix(".csv")
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    else:
        out = path.with_suffix(".json")
        payload = [dict(zip(header, [_fmt(v) for v in row])) for row in rows]
        out.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return out


def _report_rows(report):
    for row in report.rows:
        yield (
            row.check,
            row.instance,
            float(row.lhs),
            float(row.rhs),
            float(row.margin),
            row.mode,
            row.passed,
        )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: ExperimentConfig) -> int:
    shape = cfg.shape
    table = mc_mass_table(
        cfg.model,
        cfg.measure,
        list(range(1, shape.k + 1)),
        cfg.data["trials"],
        cfg.data["seed"],
        threads=cfg.data["threads"],
    )
    rows = [
        (trial, level, table[trial, level - 1])
        for trial in range(cfg.data["trials"])
        for level in range(1, shape.k + 1)
    ]
    out = write_table(
        Path(cfg.data["out"]) / "simulate", ["trial", "level", "Z"], rows, cfg.data["format"]
    )
    print(f"simulate: {len(rows)} rows -> {out}")
    return 0


def _auto_engine(cfg: ExperimentConfig, order_q: float) -> str:
    if float(order_q).is_integer():
        return "exact_integer"
    try:
        if outcome_count(cfg.model, cfg.shape, cfg.shape.k) <= cfg.data["caps"]["outcomes"]:
            return "exact_discrete"
    except CascadeLabError:
        pass
    return "mc"


def cmd_moments(cfg: ExperimentConfig) -> int:
    shape = cfg.shape
    model, mu = cfg.model, cfg.measure
    rows = []
    for q in cfg.data["q"]:
        engine = cfg.data["engine"]
        if engine == "auto":
            engine = _auto_engine(cfg, q)
        for level in range(1, shape.k + 1):
            if engine == "exact_integer":
                if not float(q).is_integer():
                    raise ConfigError(
                        f"engine exact_integer requires integer q, got {q}"
                    )
                value = float(exact_moment_integer(model, mu, int(q), level))
                stderr = ""
            elif engine == "exact_discrete":
                value = float(
                    exact_moment_discrete(
                        model, mu, q, level, cap=cfg.data["caps"]["outcomes"]
                    )
                )
                stderr = ""
            else:
                value, se = mc_moment(
                    model,
                    mu,
                    q,
                    level,
                    cfg.data["trials"],
                    cfg.data["seed"],
                    threads=cfg.data["threads"],
                )
                stderr = se
            rows.append((level, q, engine, value, stderr))
    out = write_table(
        Path(cfg.data["out"]) / "moments",
        ["level", "q", "engine", "value", "stderr"],
        rows,
        cfg.data["format"],
    )
    print(f"moments: {len(rows)} rows -> {out}")
    return 0


def cmd_criterion(cfg: ExperimentConfig) -> int:
    model, mu = cfg.model, cfg.measure
    k_max = cfg.k_range
    delta = cfg.data["criterion"]["delta"]
    prof_rows = []
    fit_rows = []
    for q in cfg.data["q"]:
        if not float(q) > 1:
            raise ConfigError(f"criterion profiles need q > 1, got {q}")
        # the profile's level sums use a measure/model extended to depth k_max
        shape = TreeShape(cfg.shape.m, k_max)
        mu_ext = _extend_measure(mu, shape)
        model_ext = _extend_model(model, shape)
        profile = criterion_profile(model_ext, mu_ext, q, k_max, delta=delta)
        for l, S, s in zip(profile.levels, profile.S, profile.s):
            prof_rows.append((q, l, float(S), s))
        if profile.verdict == "satisfied":
            bound = fit_geometric_bound(profile)
            fit_rows.append((q, delta, profile.verdict, bound.c, bound.lam))
        else:
            fit_rows.append((q, delta, profile.verdict, "", ""))
        print(f"criterion q={q}: verdict={profile.verdict}")
    out1 = write_table(
        Path(cfg.data["out"]) / "criterion",
        ["q", "level", "S", "s"],
        prof_rows,
        cfg.data["format"],
    )
    out2 = write_table(
        Path(cfg.data["out"]) / "criterion_fit",
        ["q", "delta", "verdict", "c", "lambda"],
        fit_rows,
        cfg.data["format"],
    )
    print(f"criterion: {len(prof_rows)} rows -> {out1}, fit -> {out2}")
    return 0


def _extend_measure(mu: BaseMeasure, shape: TreeShape) -> BaseMeasure:
    """Reuse a depth-homogeneous splitting on a deeper tree (cycling rows)."""
    if shape.k == mu.shape.k:
        return mu
    if mu.kind == "uniform":
        return BaseMeasure.uniform(shape)
    if mu.kind == "per_depth":
        rows = [mu.depth_row(d % mu.shape.k) for d in range(shape.k)]
        return BaseMeasure.per_depth(shape, rows)
    raise ConfigError("per-vertex measures cannot be extended to a deeper tree; set k = shape.k")


def _extend_model(model: WeightModel, shape: TreeShape) -> WeightModel:
    if model.kind == "homogeneous":
        return model
    if model.kind == "per_depth":
        base = model.depth_laws
        laws = [base[d % len(base)] for d in range(shape.k)]
        return WeightModel.per_depth(laws)
    raise ConfigError("per-vertex models cannot be extended to a deeper tree; set k = shape.k")


def cmd_verify(cfg: ExperimentConfig) -> int:
    model, mu, shape = cfg.model, cfg.measure, cfg.shape
    vopts = cfg.data["verify"]
    checks = vopts["checks"]
    shift = vopts["perturb_rhs"]
    cap = cfg.data["caps"]["outcomes"]
    reports = []
    skipped = []

    def run(check, fn):
        if check not in checks:
            return
        try:
            result = fn()
            reports.extend(result if isinstance(result, list) else [result])
        except ResourceCapError as exc:
            skipped.append((check, str(exc)))

    run(
        "mass-identity",
        lambda: verify_mass_identity(
            model, mu, max_root_depth=vopts["max_root_depth"], cap=cap
        ),
    )
    run(
        "power-bound",
        lambda: [
            verify_power_bound(
                model, mu, eps, max_root_depth=vopts["max_root_depth"], cap=cap
            )
            for eps in vopts["epsilons"]
        ],
    )

    def orbit_reports():
        out = []
        for q in cfg.data["q"]:
            order = MomentOrder.of(q)
            if order.is_integer:
                for cls, _rep in enumerate_classes(shape, order.n, cap=cfg.data["caps"]["tuples"]):
                    out.append(verify_orbit_bound(model, mu, q, cls, cap=cap))
            else:
                for mcls, _rep in enumerate_marked_classes(
                    shape, order.n, cap=cfg.data["caps"]["tuples"]
                ):
                    out.append(verify_orbit_bound(model, mu, q, mcls, cap=cap))
        return out

    run("orbit-bound", orbit_reports)

    def class_reports():
        out = []
        for q in cfg.data["q"]:
            order = MomentOrder.of(q)
            for cls, _rep in enumerate_classes(shape, order.n, cap=cfg.data["caps"]["tuples"]):
                out.append(verify_class_bound(model, mu, q, cls, cap=cap))
        return out

    run("class-bound", class_reports)
    run(
        "census-bound",
        lambda: [
            verify_census_bounds(
                TreeShape(shape.m, max(shape.k, 6)),
                n,
                vopts["lambdas"],
                vopts["epsilons"],
            )
            for n in vopts["census_n"]
        ],
    )

    def moment_cap_reports():
        out = []
        k_deep = max(cfg.k_range, 4)
        shape_deep = TreeShape(shape.m, k_deep)
        mu_deep = _extend_measure(mu, shape_deep)
        model_deep = _extend_model(model, shape_deep)
        for q in cfg.data["q"]:
            k_eval = k_deep if float(q).is_integer() else min(k_deep, 3)
            shape_eval = TreeShape(shape.m, max(k_eval, 2))
            out.append(
                moment_bound_report(
                    _extend_model(model, shape_eval),
                    _extend_measure(mu, shape_eval),
                    q,
                    shape_eval.k,
                    trials=cfg.data["trials"],
                    seed=cfg.data["seed"],
                    cap=cap,
                )
            )
        return out

    run("moment-cap", moment_cap_reports)

    def growth_report():
        k_deep = max(cfg.k_range, 40)
        shape_deep = TreeShape(shape.m, k_deep)
        return necessity_check(
            _extend_model(model, shape_deep),
            _extend_measure(mu, shape_deep),
            2,
            k_deep,
        )

    run("growth-check", growth_report)

    if shift:
        reports = [r.perturbed(shift) for r in reports]

    rows = [row for report in reports for row in _report_rows(report)]
    out = write_table(
        Path(cfg.data["out"]) / "verify",
        ["check", "instance", "lhs", "rhs", "margin", "mode", "pass"],
        rows,
        cfg.data["format"],
    )
    by_check: dict[str, list] = {}
    for report in reports:
        by_check.setdefault(report.check, []).append(report)
    all_pass = True
    for check in checks:
        group = by_check.get(check, [])
        if not group:
            reason = next((msg for c, msg in skipped if c == check), "not run")
            print(f"{check}: SKIPPED ({reason})")
            continue
        ok = all(r.passed for r in group)
        all_pass = all_pass and ok
        worst = min(float(row.margin) for r in group for row in r.rows)
        print(
            f"{check}: {'pass' if ok else 'FAIL'} "
            f"({sum(len(r.rows) for r in group)} instances, worst margin {worst:.3e})"
        )
    print(f"verify: {len(rows)} rows -> {out}")
    return 0 if all_pass else 1


def cmd_orbits(cfg: ExperimentConfig) -> int:
    shape = cfg.shape
    opts = cfg.data["orbits"]
    plain_rows = []
    marked_rows = []
    sum_rows = []
    for n in opts["n"]:
        census = build_census(shape, n, cap=cfg.data["caps"]["tuples"])
        for levels, count in sorted(census.plain.items()):
            plain_rows.append((n, "-".join(map(str, levels)), count))
        for (levels, l0), count in sorted(census.marked.items()):
            marked_rows.append((n, "-".join(map(str, levels)), l0, count))
        for lam in opts["lambdas"]:
            s = census.geometric_sum(lam)
            bound = census_sum_bound(lam, n)
            sum_rows.append((n, lam, "", s, bound, s <= bound))
            for eps in opts["epsilons"]:
                sp = census.marked_geometric_sum(lam, eps)
                bp = marked_census_sum_bound(lam, eps, n)
                sum_rows.append((n, lam, eps, sp, bp, sp <= bp))
    fmt = cfg.data["format"]
    out1 = write_table(Path(cfg.data["out"]) / "orbits", ["n", "levels", "N"], plain_rows, fmt)
    out2 = write_table(
        Path(cfg.data["out"]) / "orbits_marked",
        ["n", "levels", "mark_level", "N_plus"],
        marked_rows,
        fmt,
    )
    out3 = write_table(
        Path(cfg.data["out"]) / "orbits_sums",
        ["n", "lambda", "epsilon", "sum", "bound", "pass"],
        sum_rows,
        fmt,
    )
    print(f"orbits: {len(plain_rows)} classes, {len(marked_rows)} marked -> {out1}, {out2}, {out3}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascade-lab",
        description="Multiplicative cascade martingales: simulation, exact moments, and criterion verification.",
    )
    parser.add_argument("--config", metavar="PATH", help="JSON experiment config")
    parser.add_argument("--seed", type=int, metavar="U64", help="RNG seed")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument(
        "--engine",
        choices=["auto", "mc", "exact_integer", "exact_discrete"],
        help="moment engine",
    )
    parser.add_argument("--q", metavar="LIST", help="comma-separated moment orders")
    parser.add_argument("--k", type=int, metavar="INT", help="level range / profile depth")
    parser.add_argument("--trials", type=int, metavar="INT", help="Monte Carlo trials")
    parser.add_argument("--cap", type=int, metavar="INT", help="resource caps (outcomes and tuples)")
    parser.add_argument("--format", choices=["csv", "json"], help="output table format")
    parser.add_argument(
        "--threads",
        type=int,
        help="worker threads (default: CASCADE_LAB_THREADS or available parallelism)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", help="emit per-trial, per-level total masses")
    sub.add_parser("moments", help="emit a moment table for the configured q list")
    sub.add_parser("criterion", help="emit the level moment profile and fitted envelope")
    p_verify = sub.add_parser("verify", help="run the verification suite")
    p_verify.add_argument(
        "--perturb-rhs",
        type=float,
        dest="perturb_rhs",
        metavar="SHIFT",
        help="testing hook: scale every right-hand side by (1 + SHIFT)",
    )
    p_orbits = sub.add_parser("orbits", help="emit class censuses and census sums")
    p_orbits.add_argument("--n", metavar="LIST", help="comma-separated tuple sizes")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config, args)
        command = {
            "simulate": cmd_simulate,
            "moments": cmd_moments,
            "criterion": cmd_criterion,
            "verify": cmd_verify,
            "orbits": cmd_orbits,
        }[args.command]
        return command(cfg)
    except ResourceCapError as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, VerdictError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
