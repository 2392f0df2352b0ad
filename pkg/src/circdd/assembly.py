"""Assembly of the skeletal system ``C u = r`` on the interface knots.

Each non-boundary knot gets one row, computed inside its owner subdomain:

* floating owner: ``C_ij = G_j(x_i)`` and ``r_i = B(x_i)`` from the local
  pseudospectral solves (one factorization per subdomain);
* perimeter owner: the Monte Carlo estimate of the same expectations.

Knots on the domain boundary get identity rows with ``r_i = g(x_i)``. In
averaged mode every subdomain containing the knot contributes a row and the
contributions are summed, so the diagonal becomes the number of contributors.
"""
from __future__ import annotations

import csv
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp

from .cover import Cover, subdomain_depths
from .errors import ConfigurationError, GeometryError
from .feynmankac import McConfig, estimate_rows
from .interp import arc_interpolants
from .localspectral import (assemble_operator, build_grid, eval_weights, factorize,
                            solve_cardinal_bvps, solve_source_bvp)
from .problem import EllipticProblem

SPECTRAL = "spectral"
MONTE_CARLO = "monte_carlo"
BOUNDARY = "boundary_identity"
MODES = ("standard", "averaged")


@dataclass(frozen=True)
class SpectralConfig:
    n_r: int = 22

    def __post_init__(self):
        if self.n_r < 4:
            raise ConfigurationError(f"n_r must be >= 4, got {self.n_r}")


@dataclass
class McRowReport:
    """Standard errors of one Monte Carlo row."""
    knot: int
    subdomain: int
    rhs_stderr: float
    max_coefficient_stderr: float
    payoff_stderr: Optional[float]
    interface_fraction: float
    mean_steps: float


@dataclass
class SkeletalSystem:
    n: int
    matrix: sp.csr_matrix
    rhs: np.ndarray
    provenance: List[str]
    mode: str = "standard"
    mc_stderr: Dict[int, List[McRowReport]] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    def rows_with(self, tag: str) -> np.ndarray:
        return np.array([i for i, p in enumerate(self.provenance) if p == tag], dtype=int)


@dataclass
class _Contribution:
    """Rows produced inside one subdomain (dense in the subdomain's stencil)."""
    subdomain: int
    knots: np.ndarray
    columns: np.ndarray
    values: np.ndarray  # (len(knots), len(columns)), off-diagonal part only
    rhs: np.ndarray
    tag: str
    seconds: float
    reports: List[McRowReport] = field(default_factory=list)


def _is_constant(fn) -> bool:
    return hasattr(fn, "constant_value")


def constant_coefficients(problem: EllipticProblem) -> bool:
    """True when a, b and c are constant, so equal discs share one factorization."""
    return all(_is_constant(getattr(problem, n))
               for n in ("a_xx", "a_xy", "a_yy", "b_x", "b_y", "c"))


def _spectral_rows(cover: Cover, problem: EllipticProblem, sid: int, knots: Sequence[int],
                   spectral: SpectralConfig, cache: Optional[dict]) -> _Contribution:
    t0 = time.perf_counter()
    sub = cover.subdomains[sid]
    grid = build_grid(sub, len(sub.stencil), spectral.n_r)
    key = (grid.n_theta, grid.n_r, grid.radius)
    if cache is not None and key in cache:
        fact_ref, g_ref = cache[key]
    else:
        fact_ref = factorize(assemble_operator(grid, problem), sid, grid)
        g_ref = solve_cardinal_bvps(fact_ref)
        if cache is not None:
            cache[key] = (fact_ref, g_ref)
    # with constant coefficients the operator only depends on the radius
    fact = fact_ref if fact_ref.grid is grid else fact_ref.rebind(grid, sid)
    b = solve_source_bvp(fact, problem)
    knots = np.asarray(knots, dtype=int)
    w = eval_weights(grid, cover.knot_xy[knots])
    return _Contribution(sid, knots, np.asarray(sub.stencil, dtype=int), w @ g_ref, w @ b,
                         SPECTRAL, time.perf_counter() - t0)


def _mc_rows(cover: Cover, problem: EllipticProblem, sid: int, knots: Sequence[int],
             interps, mc: McConfig, stream_offset: int) -> _Contribution:
    t0 = time.perf_counter()
    sub = cover.subdomains[sid]
    knots = np.asarray(knots, dtype=int)
    streams = knots + stream_offset
    rows = estimate_rows(problem, cover, sid, knots, interps, mc, stream_ids=streams)
    cols = np.asarray(sub.stencil, dtype=int)
    pos = {c: i for i, c in enumerate(cols)}
    vals = np.zeros((len(knots), len(cols)))
    rhs = np.empty(len(knots))
    reports = []
    for i, (k, row) in enumerate(zip(knots, rows)):
        for c, v in zip(row.columns, row.coefficients):
            vals[i, pos[int(c)]] += v
        rhs[i] = row.rhs
        reports.append(McRowReport(int(k), sid, row.rhs_stderr,
                                   float(row.coefficient_stderr.max(initial=0.0)),
                                   row.payoff_stderr, row.interface_fraction, row.mean_steps))
    return _Contribution(sid, knots, cols, vals, rhs, MONTE_CARLO,
                         time.perf_counter() - t0, reports)


# -- task plumbing -------------------------------------------------------------

_STATE: dict = {}


def _run_task(task):
    s = _STATE
    sid, knots = task
    sub = s["cover"].subdomains[sid]
    if sub.floating:
        return _spectral_rows(s["cover"], s["problem"], sid, knots, s["spectral"], s["cache"])
    return _mc_rows(s["cover"], s["problem"], sid, knots, s["interps"], s["mc"],
                    s["stream_offset"](sid))


def _tasks(cover: Cover, mode: str):
    """(subdomain id, knot ids) pairs in subdomain order."""
    rows = [k for k in cover.knots if not k.on_boundary]
    per: Dict[int, List[int]] = {s.id: [] for s in cover.subdomains}
    if mode == "standard":
        for k in rows:
            if k.owner is None:
                raise GeometryError(f"knot {k.id} has no owner subdomain")
            per[k.owner].append(k.id)
    else:
        ids = np.array([k.id for k in rows], dtype=int)
        depth = subdomain_depths(cover, cover.knot_xy[ids])
        hosts = np.array([k.host for k in rows], dtype=int)
        depth[np.arange(len(ids)), hosts] = -np.inf
        for i, kid in enumerate(ids):
            inside = np.flatnonzero(depth[i] > 0)
            if not len(inside):
                raise GeometryError(f"knot {kid} lies in the interior of no subdomain")
            for sid in inside:
                per[int(sid)].append(int(kid))
    return [(sid, ks) for sid, ks in per.items() if ks]


def assemble_system(cover: Cover, problem: EllipticProblem, interps=None,
                    spectral: SpectralConfig = SpectralConfig(), mc: McConfig = McConfig(),
                    mode: str = "standard", workers: int = 1,
                    c2: float = 1.5) -> SkeletalSystem:
    """Assemble ``C u = r``; results do not depend on ``workers``."""
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
    if workers < 1:
        raise ConfigurationError(f"workers must be >= 1, got {workers}")
    t_start = time.perf_counter()
    if interps is None:
        interps = arc_interpolants(cover, c2)
    n = cover.n_knots
    tasks = _tasks(cover, mode)
    _STATE.clear()
    _STATE.update(cover=cover, problem=problem, spectral=spectral, mc=mc, interps=interps,
                  cache={} if constant_coefficients(problem) else None,
                  stream_offset=(lambda sid: 0) if mode == "standard"
                  else (lambda sid: (sid + 1) * n))
    try:
        if workers == 1:
            parts = [_run_task(t) for t in tasks]
        else:
            ctx = multiprocessing.get_context("fork")
            # longest tasks first keeps the pool busy; results are re-sorted below
            order = sorted(range(len(tasks)),
                           key=lambda i: (cover.subdomains[tasks[i][0]].floating, i))
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                done = list(pool.map(_run_task, [tasks[i] for i in order], chunksize=1))
            parts = [None] * len(tasks)
            for i, part in zip(order, done):
                parts[i] = part
    finally:
        _STATE.clear()

    diag = np.zeros(n)
    rhs = np.zeros(n)
    provenance = [BOUNDARY] * n
    rows, cols, vals = [], [], []
    mc_stderr: Dict[int, List[McRowReport]] = {}
    timings = {SPECTRAL: 0.0, MONTE_CARLO: 0.0}
    for part in parts:  # subdomain-id order: deterministic summation
        timings[part.tag] += part.seconds
        diag[part.knots] += 1.0
        rhs[part.knots] += part.rhs
        rr = np.repeat(part.knots, len(part.columns))
        cc = np.tile(part.columns, len(part.knots))
        rows.append(rr)
        cols.append(cc)
        vals.append(part.values.ravel())
        for k in part.knots:
            provenance[k] = part.tag if provenance[k] in (BOUNDARY, part.tag) else "mixed"
        for rep in part.reports:
            mc_stderr.setdefault(rep.knot, []).append(rep)
    boundary = np.array([k.id for k in cover.knots if k.on_boundary], dtype=int)
    if len(boundary):
        diag[boundary] = 1.0
        gx, gy = cover.knot_xy[boundary].T
        rhs[boundary] = np.broadcast_to(problem.g(gx, gy), gx.shape)
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    coo = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n, n))
    # duplicates are summed in a fixed order by tocsr (row-major, stable)
    c = coo.tocsr()
    c.eliminate_zeros()
    c.sort_indices()
    timings["total"] = time.perf_counter() - t_start
    return SkeletalSystem(n, c, rhs, provenance, mode, mc_stderr, timings)


# -- export ------------------------------------------------------------------

def export_system(system: SkeletalSystem, matrix_path, rhs_path=None) -> None:
    """Matrix Market coordinate file for ``C`` and a plain text vector for ``r``.

    Values are printed with 17 significant digits, which round-trips doubles.
    """
    coo = system.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(matrix_path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row[order] + 1, coo.col[order] + 1, coo.data[order]):
            fh.write(f"{i} {j} {v:.17g}\n")
    if rhs_path is not None:
        np.savetxt(rhs_path, system.rhs, fmt="%.17g")


def import_matrix(path) -> sp.csr_matrix:
    m = scipy.io.mmread(str(path))
    m = sp.csr_matrix(m)
    m.sort_indices()
    return m


def import_vector(path) -> np.ndarray:
    return np.atleast_1d(np.loadtxt(path, dtype=float))


def write_provenance_csv(system: SkeletalSystem, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["knot", "provenance", "nnz", "rhs", "rhs_stderr",
                    "max_coefficient_stderr", "payoff_stderr"])
        indptr = system.matrix.indptr
        for i, tag in enumerate(system.provenance):
            reps = system.mc_stderr.get(i, [])
            rse = max((r.rhs_stderr for r in reps), default="")
            cse = max((r.max_coefficient_stderr for r in reps), default="")
            pse = max((r.payoff_stderr for r in reps if r.payoff_stderr is not None),
                      default="")
            w.writerow([i, tag, indptr[i + 1] - indptr[i], repr(float(system.rhs[i])),
                        rse, cse, pse])
