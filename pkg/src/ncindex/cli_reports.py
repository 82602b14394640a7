"""Command-line driver: experiment configs in, deterministic JSON reports out."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from math import pi
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigInvalid, NcIndexError, SchemaMismatch

REPORT_SCHEMA = 1


@dataclass(frozen=True)
class Param:
    kind: type
    default: object
    help: str = ""


@dataclass(frozen=True)
class Suite:
    name: str
    params: dict
    runner: object = field(repr=False)
    randomized: bool = False
    summary: str = ""

    def schema(self) -> dict:
        return {
            "summary": self.summary,
            "randomized": self.randomized,
            "params": {k: {"type": p.kind.__name__, "default": p.default, "help": p.help}
                       for k, p in self.params.items()},
        }


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    parameters: dict
    seed: int | None = None
    output_path: str | None = None

    @classmethod
    def from_dict(cls, cfg: dict, seed: int | None = None, output_path: str | None = None) -> ExperimentConfig:
        if not cfg:
            raise ConfigInvalid("empty config")
        cfg = dict(cfg)
        command = cfg.pop("command", None)
        if command not in SUITES:
            raise ConfigInvalid(f"unknown command {command!r}")
        suite = SUITES[command]
        cfg_seed = cfg.pop("seed", None)
        seed = seed if seed is not None else cfg_seed
        unknown = sorted(set(cfg) - set(suite.params))
        if unknown:
            raise ConfigInvalid(f"unknown keys for {command}: {unknown}")
        params = {}
        for name, spec in suite.params.items():
            value = cfg.get(name, spec.default)
            if value is not None and spec.kind is not object:
                try:
                    value = spec.kind(value)
                except (TypeError, ValueError) as exc:
                    raise ConfigInvalid(f"{name}: expected {spec.kind.__name__}") from exc
            params[name] = value
        if suite.randomized and seed is None:
            raise ConfigInvalid(f"{command} is randomized and needs a seed")
        if seed is not None:
            seed = int(seed)
            if not 0 <= seed < 2 ** 64:
                raise ConfigInvalid("seed must be an unsigned 64-bit integer")
        return cls(command, params, seed, output_path)

    def hash(self) -> str:
        blob = json.dumps({"command": self.command, "parameters": self.parameters, "seed": self.seed},
                          sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Check:
    name: str
    value: object
    target: object
    tolerance: float
    passed: bool
    error: str | None = None


def _encode(x):
    if isinstance(x, (complex, np.complexfloating)):
        return [float(np.real(x)), float(np.imag(x))]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def check(name: str, value, target, tolerance: float) -> Check:
    ok = bool(abs(complex(value) - complex(target)) <= tolerance)
    return Check(name, _encode(value), _encode(target), tolerance, ok)


def bound(name: str, value: float, limit: float) -> Check:
    """value <= limit, recorded as |value - 0| <= limit for nonnegative residuals."""
    return check(name, float(value), 0.0, limit)


@dataclass
class Report:
    command: dict
    version: str
    config_hash: str
    checks: list
    tables: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def payload(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "command": self.command,
            "version": self.version,
            "config_hash": self.config_hash,
            "checks": [asdict(c) for c in self.checks],
            "passed": self.passed,
        }

    def to_json(self) -> str:
        body = self.payload()
        body["wall_time"] = round(self.wall_time, 3)
        return json.dumps(body, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# suites


def _algebra(name: str):
    from .algebra_core import cyclic_group_table, make_group_algebra, make_matrix_algebra

    if name.startswith("m") and name[1:].isdigit():
        return make_matrix_algebra(int(name[1:]))
    if name.startswith("z") and name[1:].isdigit():
        return make_group_algebra(cyclic_group_table(int(name[1:])))
    raise ConfigInvalid(f"unknown algebra {name!r} (use m<n> or z<n>)")


def _forms_identities(p, seed):
    from .nc_forms import identity_sweep

    res = identity_sweep(_algebra(p["algebra"]), p["N"], p["count"], seed)
    return [bound(k, res[k], 1e-12) for k in ("b2", "B2", "bB+Bb", "d2")], {}


def _toeplitz(p, seed):
    from .fredholm_pairing import CircleModule, TrigPoly, index_pairing, operator_index_oracle

    m = CircleModule(p["window"])
    u = TrigPoly.monomial(p["k"])
    return [check("index_pairing", index_pairing(m, u, "invertible"), p["k"], 1e-9),
            check("minus_operator_index", -operator_index_oracle(m, u), p["k"], 0)], {}


def _jlo(p, seed):
    from .fredholm_pairing import TrigPoly
    from .spectral_heat import SpectralTriple, jlo_pairing

    triple = SpectralTriple.circle(p["window"])
    u = TrigPoly.monomial(p["k"])
    out = [check(f"jlo_t={t:g}", jlo_pairing(triple, u, "invertible", t=t), p["k"], 1e-6)
           for t in (0.5, 1.0, 2.0)]
    return out, {}


def _residue(p, seed):
    from .fredholm_pairing import TrigPoly
    from .spectral_heat import SpectralTriple, residue_pairing

    triple = SpectralTriple.circle(p["window"])
    return [check("residue_pairing", residue_pairing(triple, TrigPoly.monomial(p["k"]), "invertible"), p["k"], 1e-9)], {}


def _anomaly(p, seed):
    from .gauge_anomaly import anomaly, loop_from_config

    cfg = {"kind": p["kind"], "k": p["k"], "grid": p["grid"], "window": p["window"], "s": p["s"]}
    if p["kind"] == "bott":
        cfg["projector"] = p["projector"]
    loop = loop_from_config(cfg)
    res = anomaly(loop)
    target = p["k"]
    if p["kind"] == "bott":
        target = p["k"] * int(round(np.trace(np.asarray(p["projector"], dtype=complex)).real))
    idx_d = complex(np.sum(res.derivative) / loop.grid / (2j * pi))
    idx_r = complex(np.sum(res.residue) / loop.grid / (2j * pi))
    table = {"theta": res.theta.tolist(), "derivative_re": res.derivative.real.tolist(),
             "derivative_im": res.derivative.imag.tolist(), "residue_re": res.residue.real.tolist(),
             "residue_im": res.residue.imag.tolist()}
    return [check("index_derivative_route", idx_d, target, 1e-4),
            check("index_residue_route", idx_r, target, 1e-4),
            bound("pointwise_route_gap", res.max_gap(), 1e-5)], {"anomaly": table}


def _determinant(p, seed):
    from .gauge_anomaly import hs_determinant

    theta = np.linspace(0, 1, p["grid"] + 1)
    loop = np.exp(2j * pi * theta)[:, None, None]
    return [check("scalar_loop", hs_determinant(loop).value, 1.0, 1e-10)], {}


def _lefschetz(p, seed):
    from .conformal_lefschetz import (ConformalMap, Region, TestFunction, cauchy_quadrature_oracle,
                                      find_fixed_points, lefschetz_contribution, localized_sum)

    g = ConformalMap.from_dict(p["map"])
    a = TestFunction.from_dict(p["function"])
    region = Region(0j, p["radius"])
    jets = sum(lefschetz_contribution(g, fp, a) for fp in find_fixed_points(g, region))
    return [check("jet_vs_closed_form", jets, localized_sum(g, a, region), 1e-12),
            check("jet_vs_cauchy_quadrature", jets, cauchy_quadrature_oracle(g, a, region), 1e-4)], {}


def _trace_check(p, seed):
    from .conformal_lefschetz import random_pair_trace_residual

    rng = np.random.default_rng(seed)
    worst = max(random_pair_trace_residual(rng) for _ in range(p["trials"]))
    return [bound("max_trace_residual", worst, 1e-8)], {}


def _todd(p, seed):
    from .conformal_lefschetz import MatrixField, cocycle_property_check, todd_pair

    rng = np.random.default_rng(seed)
    a = [MatrixField.random(rng) for _ in range(3)]
    split = todd_pair("todd_split", *a)
    return [bound("cocycle_residual", cocycle_property_check("todd", p["trials"], seed), 1e-6),
            check("todd_split_vs_nabla", split, todd_pair("todd", *a), 1e-8)], {}


def _bott(p, seed):
    from .conformal_lefschetz import bott_pairing

    return [check("bott_abs", abs(bott_pairing()), 1.0, 1e-6)], {}


def _schatten(p, seed):
    from .conformal_lefschetz import TestFunction, schatten_decay_check, schatten_refinement_ratios

    reports = schatten_decay_check(None, TestFunction.gaussian(p["alpha_g"]), p["weight"], box=p["box"])
    ratios = schatten_refinement_ratios(reports)
    checks = [bound(f"p={q:g}_refinement_change", abs(ratios[q]), 0.02) for q in (2.5, 3.0, 4.0)]
    checks.append(check("p=2_refinement_growth", ratios[2.0], 0.0, np.inf))
    checks[-1].passed = bool(ratios[2.0] > 0.10)
    checks[-1].target, checks[-1].tolerance = "> 0.10", 0.10
    return checks, {}


SUITES = {
    s.name: s for s in [
        Suite("forms-identities", {"algebra": Param(str, "m2"), "N": Param(int, 6), "count": Param(int, 200)},
              _forms_identities, True, "b^2, B^2, bB + Bb and d^2 on random forms"),
        Suite("toeplitz", {"k": Param(int, 1), "window": Param(int, 64)},
              _toeplitz, False, "circle index pairing with e^(ik theta)"),
        Suite("jlo", {"k": Param(int, 1), "window": Param(int, 64)},
              _jlo, False, "JLO pairing on the circle at t = 0.5, 1, 2"),
        Suite("residue", {"k": Param(int, 1), "window": Param(int, 64)},
              _residue, False, "residue cocycle pairing on the circle"),
        Suite("anomaly", {"kind": Param(str, "winding"), "k": Param(int, 1), "grid": Param(int, 128),
                          "window": Param(int, 64), "s": Param(float, 0.15), "projector": Param(object, None)},
              _anomaly, False, "index from the integrated anomaly, both evaluation routes"),
        Suite("determinant", {"grid": Param(int, 256)},
              _determinant, False, "de la Harpe-Skandalis determinant of e^(2 pi i theta)"),
        Suite("lefschetz", {"map": Param(object, {"kind": "moebius", "abcd": [2, 0, 0, 1]}),
                            "function": Param(object, {"terms": [{"alpha": 1.0}]}),
                            "radius": Param(float, 5.0)},
              _lefschetz, False, "fixed-point contributions against the Cauchy-kernel quadrature"),
        Suite("trace-check", {"trials": Param(int, 20)},
              _trace_check, True, "trace property of the Lefschetz functional on Moebius pairs"),
        Suite("todd", {"trials": Param(int, 20)},
              _todd, True, "Todd cocycle: Hochschild and cyclic residuals, split vs nabla form"),
        Suite("bott", {}, _bott, False, "Bott projector pairing"),
        Suite("schatten", {"alpha_g": Param(float, 1.0), "weight": Param(float, -2.0), "box": Param(float, 2.0)},
              _schatten, False, "Schatten partial sums of the Cauchy operator under grid refinement"),
    ]
}


def list_suites() -> str:
    return json.dumps({name: s.schema() for name, s in SUITES.items()}, indent=2, sort_keys=True)


def run(config: ExperimentConfig, strict: bool = False) -> Report:
    suite = SUITES[config.command]
    start = time.perf_counter()
    tables = {}
    try:
        checks, tables = suite.runner(config.parameters, config.seed)
    except NcIndexError as exc:
        if strict:
            raise
        checks = [Check("suite", None, None, 0.0, False, f"{type(exc).__name__}: {exc}")]
    report = Report({"command": config.command, "parameters": config.parameters, "seed": config.seed},
                    __version__, config.hash(), checks, tables, time.perf_counter() - start)
    if config.output_path:
        out = Path(config.output_path)
        out.write_text(report.to_json() + "\n")
        for name, table in tables.items():
            _write_csv(out.with_name(f"{out.stem}.{name}.csv"), table)
    return report


def _write_csv(path: Path, table: dict) -> None:
    cols = list(table)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in zip(*(table[c] for c in cols)):
            w.writerow([repr(float(x)) for x in row])


# ---------------------------------------------------------------------------
# regression


@dataclass(frozen=True)
class Drift:
    name: str
    baseline: object
    current: object
    drift: float | None
    tolerance: float
    flagged: bool


def _load_report(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"cannot read report {path}: {exc}") from exc
    if not isinstance(data, dict) or data.get("schema") != REPORT_SCHEMA or "checks" not in data:
        raise SchemaMismatch(f"{path} is not a version {REPORT_SCHEMA} report")
    return data


def _as_complex(v):
    if isinstance(v, list) and len(v) == 2:
        return complex(v[0], v[1])
    if isinstance(v, (int, float)):
        return complex(v)
    return None


def regress(baseline_path, report_path) -> list:
    """Per-check drift between two reports of the same experiment.

    A check is flagged when it newly fails or when its value moved by more
    than its tolerance.  Library versions are not compared.
    """
    base, cur = _load_report(baseline_path), _load_report(report_path)
    if base["config_hash"] != cur["config_hash"]:
        raise SchemaMismatch("reports come from different configurations")
    base_checks = {c["name"]: c for c in base["checks"]}
    out = []
    for c in cur["checks"]:
        b = base_checks.get(c["name"])
        if b is None:
            out.append(Drift(c["name"], None, c["value"], None, c["tolerance"], not c["passed"]))
            continue
        bv, cv = _as_complex(b["value"]), _as_complex(c["value"])
        drift = None if bv is None or cv is None else abs(cv - bv)
        moved = drift is not None and drift > c["tolerance"]
        newly_failed = b["passed"] and not c["passed"]
        out.append(Drift(c["name"], b["value"], c["value"], drift, c["tolerance"], moved or newly_failed))
    return out


# ---------------------------------------------------------------------------
# command line


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncindex", description="index-theory experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUITES:
        sp = sub.add_parser(name, help=SUITES[name].summary)
        sp.add_argument("--config", help="JSON file with suite parameters")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="report path (JSON)")
        sp.add_argument("--strict", action="store_true", help="raise suite errors instead of recording them")
    rp = sub.add_parser("regress", help="compare a report against a baseline")
    rp.add_argument("baseline")
    rp.add_argument("report")
    sub.add_parser("list", help="print suites and parameter schemas")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigInvalid, SchemaMismatch) as exc:
        print(f"ncindex: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "list":
        print(list_suites())
        return 0
    if args.command == "regress":
        rows = regress(args.baseline, args.report)
        print(json.dumps([asdict(r) for r in rows], indent=2, default=str))
        return 1 if any(r.flagged for r in rows) else 0
    cfg = {"command": args.command}
    if args.config:
        loaded = json.loads(Path(args.config).read_text())
        if loaded.get("command", args.command) != args.command:
            raise ConfigInvalid("config command differs from the subcommand")
        cfg.update(loaded)
    report = run(ExperimentConfig.from_dict(cfg, args.seed, args.out), strict=args.strict)
    print(report.to_json())
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
