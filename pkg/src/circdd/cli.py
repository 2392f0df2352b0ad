"""Batch driver: ``circdd solve --config run.json`` and ``circdd inspect --matrix C.mtx``.

A run builds the cover, assembles ``C u = r``, solves it with RAS-preconditioned
GMRES and writes

    system.mtx  rhs.txt  solution.txt  knots.csv  errors.csv  mc_rows.csv
    stats.json  residuals.csv

into the output directory. The environment variable ``CIRCDD_SEED`` overrides
the configured Monte Carlo seed.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .assembly import (MODES, SpectralConfig, assemble_system, export_system, import_matrix)
from .cover import make_cover, validate_cover
from .diagnostics import (RunStats, knot_errors, matrix_stats, write_errors_csv)
from .errors import CircddError, ConfigurationError, GeometryError
from .feynmankac import GM_CONSTANT, McConfig
from .interp import DEFAULT_C2, arc_interpolants
from .krylov import build_ras, gmres, partition_graph
from .problem import RectDomain, builtin_problem, problem_from_expressions

log = logging.getLogger("circdd")

SEED_ENV = "CIRCDD_SEED"


@dataclass
class RunConfig:
    problem: Union[str, dict] = "paper46"
    domain: List[float] = field(default_factory=lambda: [-50.0, 50.0, -50.0, 50.0])
    m_per_side: int = 10
    rho: float = 0.9
    n_per_circle: int = 44
    n_r: int = 22
    c2: float = DEFAULT_C2
    n_paths: int = 5000
    h: float = 0.015
    seed: int = 12345
    c0: float = GM_CONSTANT
    max_steps: Optional[int] = None
    parts: int = 16
    tol: float = 1e-10
    max_iter: int = 500
    mode: str = "standard"
    out: str = "circdd_out"
    workers: int = 1
    condition_number: bool = True

    def __post_init__(self):
        if len(self.domain) != 4:
            raise ConfigurationError("domain must be [x0, x1, y0, y1]")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("m_per_side", "n_per_circle", "n_r", "n_paths", "parts", "max_iter",
                     "workers"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if not 0 < self.tol < 1:
            raise ConfigurationError(f"tol must lie in (0, 1), got {self.tol}")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(f"invalid configuration value: {exc}") from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def make_problem(self):
        if isinstance(self.problem, dict):
            return problem_from_expressions(self.problem)
        return builtin_problem(self.problem)

    def mc(self) -> McConfig:
        return McConfig(n_paths=self.n_paths, h=self.h, seed=self.seed, c0=self.c0,
                        max_steps=self.max_steps)


@dataclass
class RunResult:
    config: RunConfig
    cover: object
    system: object
    report: object
    errors: object
    stats: RunStats
    out_dir: Path


def _write_vector(path, v):
    np.savetxt(path, np.asarray(v, dtype=float), fmt="%.17g")


def run(config: RunConfig, write: bool = True) -> RunResult:
    timings = {}
    t0 = time.perf_counter()
    problem = config.make_problem()
    domain = RectDomain(*map(float, config.domain))
    cover = make_cover(domain, config.m_per_side, config.rho, config.n_per_circle)
    check = validate_cover(cover)
    if not check:
        raise GeometryError(f"invalid cover: {check.message}")
    problem.check_coefficients(cover.knot_xy[:, 0], cover.knot_xy[:, 1])
    interps = arc_interpolants(cover, config.c2)
    timings["cover"] = time.perf_counter() - t0

    system = assemble_system(cover, problem, interps, SpectralConfig(config.n_r), config.mc(),
                             config.mode, config.workers)
    timings["assembly_spectral"] = system.timings["spectral"]
    timings["assembly_monte_carlo"] = system.timings["monte_carlo"]
    timings["assembly"] = system.timings["total"]

    t1 = time.perf_counter()
    parts = partition_graph(system.matrix, cover.knot_xy, min(config.parts, system.n))
    prec = build_ras(system.matrix, parts)
    timings["preconditioner"] = time.perf_counter() - t1
    report = gmres(system.matrix, system.rhs, prec, config.tol, config.max_iter)
    timings["gmres"] = report.timings["gmres"]

    t2 = time.perf_counter()
    errs = knot_errors(report.solution, problem, cover.knot_xy)
    ms = matrix_stats(system.matrix, condition=config.condition_number)
    timings["diagnostics"] = time.perf_counter() - t2
    timings["total"] = time.perf_counter() - t0
    rows = {}
    for tag in system.provenance:
        rows[tag] = rows.get(tag, 0) + 1
    stats = RunStats(
        n=ms.n, nnz=ms.nnz, sparsity_percent=ms.sparsity_percent,
        max_offdiagonal=ms.max_offdiagonal, rho_c_minus_i=ms.rho_c_minus_i,
        rho_approximate=ms.rho_approximate, condition_2=ms.condition_2,
        rms_error=None if errs is None else errs.rms,
        max_error=None if errs is None else errs.max,
        gmres_iterations=report.iterations, gmres_converged=report.converged,
        final_residual=report.residuals[-1], n_subdomains=len(cover.subdomains),
        n_floating=len(cover.floating_ids()), n_perimeter=len(cover.perimeter_ids()),
        rows=rows, timings=timings)
    out = Path(config.out)
    result = RunResult(config, cover, system, report, errs, stats, out)
    if write:
        write_artifacts(result)
    return result


def write_artifacts(result: RunResult) -> None:
    out = result.out_dir
    out.mkdir(parents=True, exist_ok=True)
    system, cover = result.system, result.cover
    export_system(system, out / "system.mtx", out / "rhs.txt")
    _write_vector(out / "solution.txt", result.report.solution)
    with open(out / "knots.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "host", "arc", "theta", "on_boundary", "owner", "depth",
                    "provenance"])
        for k in cover.knots:
            w.writerow([k.id, repr(k.x), repr(k.y), k.host, k.arc, repr(k.theta),
                        int(k.on_boundary), "" if k.owner is None else k.owner,
                        repr(k.depth), system.provenance[k.id]])
    write_errors_csv(out / "errors.csv", cover.knot_xy,
                     None if result.errors is None else result.errors.errors, system.provenance)
    with open(out / "mc_rows.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["knot", "subdomain", "rhs_stderr", "max_coefficient_stderr",
                    "payoff_stderr", "interface_fraction", "mean_steps"])
        for knot in sorted(system.mc_stderr):
            for rep in system.mc_stderr[knot]:
                w.writerow([rep.knot, rep.subdomain, repr(rep.rhs_stderr),
                            repr(rep.max_coefficient_stderr),
                            "" if rep.payoff_stderr is None else repr(rep.payoff_stderr),
                            repr(rep.interface_fraction), repr(rep.mean_steps)])
    with open(out / "residuals.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "relative_residual"])
        for i, r in enumerate(result.report.residuals):
            w.writerow([i, repr(float(r))])
    payload = {"config": result.config.to_dict(), "stats": result.stats.to_dict()}
    (out / "stats.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def summary(result: RunResult) -> str:
    s = result.stats
    lines = [
        f"problem        {result.config.problem if isinstance(result.config.problem, str) else 'inline'}",
        f"subdomains     {s.n_subdomains} ({s.n_floating} floating, {s.n_perimeter} perimeter)",
        f"knots N        {s.n}   rows {s.rows}",
        f"sparsity       {s.sparsity_percent:.3f}%   nnz {s.nnz}",
        f"rho(C - I)     {s.rho_c_minus_i:.4f}{' (approximate)' if s.rho_approximate else ''}",
        f"max C_ij       {s.max_offdiagonal:.4f}" if s.max_offdiagonal is not None
        else "max C_ij       none",
        f"kappa_2(C)     {s.condition_2:.4g}" if s.condition_2 is not None
        else "kappa_2(C)     not computed",
        f"GMRES          {s.gmres_iterations} iterations, residual {s.final_residual:.2e}"
        f"{'' if s.gmres_converged else ' (NOT converged)'}",
    ]
    if s.rms_error is not None:
        lines.append(f"knot error     RMS {s.rms_error:.3e}   max {s.max_error:.3e}")
    lines.append(f"time           {s.timings.get('total', 0.0):.1f} s "
                 f"(assembly {s.timings.get('assembly', 0.0):.1f} s)")
    lines.append(f"artifacts      {result.out_dir}")
    return "\n".join(lines)


def _cmd_solve(args) -> int:
    config = RunConfig.load(args.config)
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out is not None:
        overrides["out"] = args.out
    env_seed = os.environ.get(SEED_ENV)
    if env_seed:
        try:
            overrides["seed"] = int(env_seed, 0)
        except ValueError:
            raise ConfigurationError(f"{SEED_ENV}={env_seed!r} is not an integer") from None
    if overrides:
        config = RunConfig.from_dict({**config.to_dict(), **overrides})
    result = run(config)
    print(summary(result))
    return 0 if result.report.converged else 3


def _cmd_inspect(args) -> int:
    try:
        c = import_matrix(args.matrix)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read matrix {args.matrix}: {exc}") from exc
    ms = matrix_stats(c, condition=not args.no_condition)
    print(json.dumps(dataclasses.asdict(ms), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="circdd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="run the full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_solve)
    p = sub.add_parser("inspect", help="matrix statistics of a Matrix Market file")
    p.add_argument("--matrix", required=True)
    p.add_argument("--no-condition", action="store_true", help="skip the dense condition number")
    p.set_defaults(func=_cmd_inspect)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CircddError as exc:
        print(f"error [{exc.module}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
