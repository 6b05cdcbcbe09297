"""Command-line experiment runner.

Usage::

    specflow sf --config run.json --out results/ --format csv
    specflow verify --seed 42
    specflow demo lattice-shift --n 5 --mu 0.5

A config is a JSON object with the fields of :class:`ExperimentConfig`; any
field left out takes its default, and command-line flags override it.  Reports
are written as ``report.json`` or as one CSV file per table.  They are
byte-identical for a fixed config and seed; wall-clock time goes to stderr only.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import instances as inst
from .algebra import BlockOperator, TraceContext, kappa, matrix_function
from .doi import PiRegionQuadrature, doi_fourier, doi_schur
from .quad import PiecewisePath, QuadratureSpec
from .sflow import (
    eta_eps,
    eta_eps_quadrature,
    kernel_trace,
    sf_bounded_formula,
    sf_crossing,
    sf_from_ssf,
    sf_summable,
    sf_theta,
    unitarily_equivalent,
)
from .ssf import fmt, ssf_profile
from .verify import CHECKS, run_checks
from .weights import from_spec

TASKS = ("ssf", "sf", "eta", "doi", "verify", "demo")
INSTANCE_KINDS = ("explicit", "random", "gauge", "lattice_shift")
DEFAULT_TOL = {"ssf": 1e-12, "sf": 1e-6, "eta": 1e-8, "doi": 1e-3, "demo": 1e-12}

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    seed: int = 42
    algebra: list | None = None
    instance: dict = field(default_factory=lambda: {"kind": "random"})
    task: str = "sf"
    parameters: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - {"seed", "algebra", "instance", "task", "parameters", "output"}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if not isinstance(self.instance, dict) or self.instance.get("kind") not in INSTANCE_KINDS:
            raise ConfigError(f"instance.kind must be one of {INSTANCE_KINDS}")
        if not isinstance(self.parameters, dict) or not isinstance(self.output, dict):
            raise ConfigError("parameters and output must be JSON objects")
        fmt_ = self.output.get("format", "json")
        if fmt_ not in ("json", "csv"):
            raise ConfigError(f"output.format must be json or csv, got {fmt_!r}")

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "algebra": self.algebra,
            "instance": self.instance,
            "task": self.task,
            "parameters": self.parameters,
            "output": self.output,
        }


@dataclass
class Instance:
    h0: BlockOperator
    h1: BlockOperator
    path: PiecewisePath


def _context(cfg: ExperimentConfig, rng) -> TraceContext:
    if cfg.algebra is not None:
        try:
            return TraceContext.from_json(cfg.algebra)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad algebra: {exc}") from exc
    dim = cfg.instance.get("total_dim", [2, 12])
    if max(dim) > 64:
        raise ConfigError("total dimension above 64 is not supported")
    return inst.random_context(rng, tuple(dim))


def generate_instance(cfg: ExperimentConfig) -> Instance:
    """Endpoints and path described by ``cfg.instance``; deterministic in ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    spec = cfg.instance
    kind = spec["kind"]
    try:
        if kind == "lattice_shift":
            h0, h1 = inst.lattice_shift(int(spec.get("n", 5)))
        elif kind == "explicit":
            h0 = BlockOperator.from_json(spec["h0"])
            h1 = BlockOperator.from_json(spec["h1"])
            h0._check(h1)
        else:
            ctx = _context(cfg, rng)
            lo, hi = spec.get("spectrum_range", [-3.0, 3.0])
            h0 = inst.random_hermitian(ctx, rng, (float(lo), float(hi)))
            if kind == "gauge":
                h1 = inst.gauge(h0, inst.random_unitary(ctx, rng))
            else:
                h1 = inst.random_hermitian(ctx, rng, (float(lo), float(hi)))
        mids = [BlockOperator.from_json(m) for m in spec.get("path", [])]
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad {kind} instance: {exc}") from exc
    return Instance(h0, h1, PiecewisePath((h0, *mids, h1)))


# -- reports ---------------------------------------------------------------


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(x) for x in row])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"columns": self.columns, "rows": [[_jsonable(x) for x in r] for r in self.rows]}


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return fmt(float(x))
    return str(x)


def _jsonable(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


@dataclass
class Report:
    config: ExperimentConfig
    tolerance: float | None
    tables: list[Table] = field(default_factory=list)
    passed: bool = True

    def add(self, table: Table):
        self.tables.append(table)

    def to_json(self) -> dict:
        return {
            "inputs": self.config.to_json(),
            "tolerance": self.tolerance,
            "passed": self.passed,
            "tables": {t.name: t.to_json() for t in self.tables},
        }

    def dumps(self) -> str:
        return json.dumps(_jsonable(self.to_json()), indent=2, sort_keys=True) + "\n"


def _grid(params: dict, key: str, default: list[float]) -> list[float]:
    if key in params:
        vals = params[key]
        if isinstance(vals, dict):
            try:
                return [float(x) for x in np.linspace(vals["lo"], vals["hi"], int(vals["points"]))]
            except KeyError as exc:
                raise ConfigError(f"{key} range needs lo, hi and points") from exc
        return [float(x) for x in vals]
    return default


def _weight(params: dict, key: str, default: dict):
    try:
        return from_spec(params.get(key, default))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad weight function {key}: {exc}") from exc


def _ssf_oracle(h0, h1, lam: float) -> float:
    # xi = sf - ker(H1 - lam)/2 + ker(H0 - lam)/2, with sf from endpoint counts
    tol = kappa(h0, h1)
    return sf_crossing(h0, h1, lam).value - 0.5 * kernel_trace(h1, lam, tol) + 0.5 * kernel_trace(h0, lam, tol)


def _task_ssf(instance: Instance, params: dict, tol: float, report: Report):
    h0, h1 = instance.h0, instance.h1
    profile = ssf_profile(h0, h1)
    default = sorted(set(profile.locations)) or [0.0]
    grid = _grid(params, "lambdas", default)
    table = Table("ssf", ["lambda", "xi_half", "oracle", "residual", "method", "pass"])
    for lam in grid:
        val = profile.value(lam)
        oracle = _ssf_oracle(h0, h1, lam)
        res = abs(val - oracle)
        table.rows.append([lam, val, oracle, res, "ssf_profile", res <= tol])
    report.add(table)
    jumps = Table("ssf_jumps", ["lambda", "jump"], [[x, float(j)] for x, j in zip(profile.locations, profile.exact_jumps)])
    report.add(jumps)


def _task_sf(instance: Instance, params: dict, tol: float, spec: QuadratureSpec, report: Report):
    h0, h1 = instance.h0, instance.h1
    grid = _grid(params, "mu", [0.0])
    eps_list = [float(e) for e in params.get("eps", [0.5])]
    methods = params.get("methods", ["ssf", "theta", "bounded", "summable"])
    summable_w = _weight(params, "weight", {"kind": "gaussian", "eps": 1.0})
    gauge = unitarily_equivalent(h0, h1)
    table = Table("sf", ["mu", "sf", "method", "oracle", "residual", "pass"])
    for mu in grid:
        oracle = sf_crossing(h0, h1, mu).value
        results = [sf_crossing(h0, h1, mu)]
        if "ssf" in methods:
            results.append(sf_from_ssf(h0, h1, mu))
        if "theta" in methods:
            results += [sf_theta(h0 - mu, h1 - mu, e, spec) for e in eps_list]
        if "bounded" in methods:
            # bounded picture: window (-1, 1) after x -> x / sqrt(1 + x^2)
            from .algebra import f_map

            m = mu / math.sqrt(1 + mu * mu)
            results.append(sf_bounded_formula(f_map(h0), f_map(h1), lambda s: s, -1.0, 1.0, spec, mu=m))
        if "summable" in methods and gauge:
            results.append(sf_summable(h0, h1, summable_w, mu, spec))
        for r in results:
            res = abs(r.value - oracle)
            table.rows.append([mu, r.value, r.method, oracle, res, res <= tol])
    report.add(table)


def _task_eta(instance: Instance, params: dict, tol: float, report: Report):
    eps_list = [float(e) for e in params.get("eps", [0.01, 0.1, 1.0])]
    table = Table("eta", ["operator", "eps", "eta", "method", "oracle", "residual", "pass"])
    for name, h in (("h0", instance.h0), ("h1", instance.h1)):
        for e in eps_list:
            val = eta_eps(h, e)
            oracle = eta_eps_quadrature(h, e)
            res = abs(val - oracle)
            table.rows.append([name, e, val, "closed_form", oracle, res, res <= tol])
    report.add(table)


def _task_doi(instance: Instance, params: dict, tol: float, report: Report):
    h0, h1 = instance.h0, instance.h1
    f = _weight(params, "weight", {"kind": "mollifier", "eps": 2.0, "center": 0.0})
    q = params.get("quadrature", {})
    try:
        quad = PiRegionQuadrature(**q)
    except TypeError as exc:
        raise ConfigError(f"bad DOI quadrature: {exc}") from exc
    v = h1 - h0
    schur = doi_schur(h1, h0, v, f)
    diff = matrix_function(h1, f.fn) - matrix_function(h0, f.fn)
    table = Table("doi", ["method", "norm", "oracle", "oracle_norm", "residual", "pass"])
    dk = (diff - schur).norm() / max(diff.norm(), 1e-300)
    table.rows.append(["schur", schur.norm(), "f(H1)-f(H0)", diff.norm(), dk, dk <= tol])
    if f.compact:
        four = doi_fourier(h1, h0, v, f, quad)
        rel = (four - schur).norm() / max(schur.norm(), 1e-300)
        table.rows.append(["fourier", four.norm(), "schur", schur.norm(), rel, rel <= tol])
    report.add(table)


def _task_demo(cfg: ExperimentConfig, params: dict, tol: float, report: Report):
    n = int(params.get("n", cfg.instance.get("n", 5)))
    mu = float(params.get("mu", 0.5))
    h0, h1 = inst.lattice_shift(n)
    sf = Table("demo_sf", ["mu", "sf", "method", "oracle", "residual", "pass"])
    for r in (sf_crossing(h0, h1, mu), sf_from_ssf(h0, h1, mu)):
        res = abs(r.value - 1.0)
        sf.rows.append([mu, r.value, r.method, 1.0, res, res <= tol])
    report.add(sf)
    profile = ssf_profile(h0, h1)
    xi = Table("demo_ssf", ["lambda", "xi_half", "oracle", "residual", "method", "pass"])
    for lam in np.linspace(-n + 0.5, n + 0.5, 4 * n + 3)[1:-1]:
        val = profile.value(float(lam))
        res = abs(val - 1.0)
        xi.rows.append([float(lam), val, 1.0, res, "ssf_profile", res <= tol])
    report.add(xi)


def _task_verify(cfg: ExperimentConfig, params: dict, report: Report):
    names = params.get("checks")
    if names is not None:
        bad = set(names) - set(CHECKS)
        if bad:
            raise ConfigError(f"unknown checks: {sorted(bad)}")
    scale = float(params.get("scale", 1.0))
    table = Table("verify", ["check", "passed", "worst", "tolerance", "count"])
    for r in run_checks(cfg.seed, names, scale):
        table.rows.append([r.name, r.passed, r.worst, r.tolerance, r.count])
    report.add(table)


def run(cfg: ExperimentConfig, tol: float | None = None) -> Report:
    """Dispatch ``cfg.task``; a row fails when its residual exceeds the tolerance."""
    cfg.validate()
    params = cfg.parameters
    tol = float(tol if tol is not None else params.get("tol", DEFAULT_TOL.get(cfg.task, 1e-6)))
    report = Report(cfg, None if cfg.task == "verify" else tol)
    try:
        spec = QuadratureSpec.from_json(params.get("quadrature_spec"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad quadrature spec: {exc}") from exc
    if cfg.task == "verify":
        _task_verify(cfg, params, report)
    elif cfg.task == "demo":
        _task_demo(cfg, params, tol, report)
    else:
        instance = generate_instance(cfg)
        if cfg.task == "ssf":
            _task_ssf(instance, params, tol, report)
        elif cfg.task == "sf":
            _task_sf(instance, params, tol, spec, report)
        elif cfg.task == "eta":
            _task_eta(instance, params, tol, report)
        elif cfg.task == "doi":
            _task_doi(instance, params, tol, report)
    report.passed = all(_row_passed(t, r) for t in report.tables for r in t.rows)
    return report


def _row_passed(table: Table, row: list) -> bool:
    for key in ("pass", "passed"):
        if key in table.columns:
            return bool(row[table.columns.index(key)])
    return True


def write_report(report: Report, out: str | None, fmt_: str) -> None:
    if out is None:
        if fmt_ == "json":
            sys.stdout.write(report.dumps())
        else:
            sys.stdout.write(report.tables[0].to_csv())
        return
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    if fmt_ == "json":
        (path / "report.json").write_text(report.dumps(), newline="")
    else:
        for t in report.tables:
            (path / f"{t.name}.csv").write_text(t.to_csv(), newline="")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--out", help="output directory (stdout if omitted)")
    common.add_argument("--format", choices=("json", "csv"), help="report format")
    common.add_argument("--tol", type=float, help="residual tolerance for pass/fail")
    common.add_argument("--seed", type=int, help="random seed")
    parser = argparse.ArgumentParser(prog="specflow", description="Spectral flow and spectral shift experiments.")
    sub = parser.add_subparsers(dest="task", required=True)
    for task in ("ssf", "sf", "eta", "doi", "verify"):
        sub.add_parser(task, parents=[common])
    demo = sub.add_parser("demo", parents=[common])
    demo.add_argument("name", choices=("lattice-shift",))
    demo.add_argument("--n", type=int, help="lattice half-width")
    demo.add_argument("--mu", type=float, help="level")
    return parser


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    cfg = ExperimentConfig.from_json(data)
    cfg.task = args.task
    if args.seed is not None:
        cfg.seed = args.seed
    if args.format:
        cfg.output = {**cfg.output, "format": args.format}
    if args.out:
        cfg.output = {**cfg.output, "dir": args.out}
    if args.task == "demo":
        cfg.instance = {"kind": "lattice_shift", "n": cfg.instance.get("n", 5)}
        if args.n is not None:
            cfg.parameters = {**cfg.parameters, "n": args.n}
        if args.mu is not None:
            cfg.parameters = {**cfg.parameters, "mu": args.mu}
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        cfg = load_config(args)
        report = run(cfg, args.tol)
        write_report(report, cfg.output.get("dir"), cfg.output.get("format", "json"))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure in {args.task}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"{args.task} failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.task}: {'pass' if report.passed else 'FAIL'} in {time.perf_counter() - start:.2f}s", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
