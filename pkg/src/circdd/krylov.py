"""Right-preconditioned GMRES with a one-level restricted additive Schwarz
preconditioner.

Parts come from recursive coordinate bisection of the knot positions, each
extended by one layer of neighbours in the graph of ``C + C^T``. With
restriction ``R_p`` onto part ``p`` and diagonal weights ``D_p`` equal to one
over the number of parts sharing a knot,

    M^{-1} = sum_p R_p^T D_p (R_p C R_p^T)^{-1} R_p .
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, PreconditionerError, SolverError

DENSE_LOCAL_LIMIT = 2000
DENSE_SOLVE_LIMIT = 20000


# -- partitioning ------------------------------------------------------------

def _bisect(ids: np.ndarray, xy: np.ndarray, parts: int, out: List[np.ndarray]) -> None:
    if parts == 1 or len(ids) <= 1:
        out.append(np.sort(ids))
        for _ in range(parts - 1):
            out.append(np.empty(0, dtype=int))
        return
    pts = xy[ids]
    span = pts.max(axis=0) - pts.min(axis=0)
    axis = 0 if span[0] >= span[1] else 1
    # stable sort: ties at the median are split by knot id
    order = ids[np.lexsort((ids, pts[:, axis]))]
    half = len(order) // 2
    _bisect(order[:half], xy, parts // 2, out)
    _bisect(order[half:], xy, parts // 2, out)


@dataclass
class Partition:
    cores: List[np.ndarray]
    parts: List[np.ndarray]
    requested: int


def partition_graph(c: sp.spmatrix, xy, n_parts: int) -> Partition:
    """Recursive coordinate bisection cores, each grown by one adjacency layer."""
    n = c.shape[0]
    if c.shape[0] != c.shape[1]:
        raise ConfigurationError("matrix must be square")
    if n_parts < 1:
        raise ConfigurationError(f"part count must be >= 1, got {n_parts}")
    if n_parts > n:
        raise ConfigurationError(f"part count {n_parts} exceeds the {n} unknowns")
    xy = np.asarray(xy, dtype=float)
    p2 = 1 << (n_parts - 1).bit_length()
    cores: List[np.ndarray] = []
    _bisect(np.arange(n), xy, p2, cores)
    cores = [cr for cr in cores if len(cr)]
    pattern = sp.csr_matrix(c, copy=True)
    pattern.data[:] = 1.0
    adj = (pattern + pattern.T).tocsr()
    parts = []
    for cr in cores:
        mask = np.zeros(n, dtype=bool)
        mask[cr] = True
        mask[adj[cr].indices] = True
        parts.append(np.flatnonzero(mask))
    return Partition(cores, parts, n_parts)


# -- preconditioner ----------------------------------------------------------

class _LocalSolver:
    def __init__(self, block, part_id: int):
        size = block.shape[0]
        try:
            if size <= DENSE_LOCAL_LIMIT:
                dense = block.toarray()
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", sla.LinAlgWarning)
                    self._lu = sla.lu_factor(dense, check_finite=True)
                diag = np.abs(np.diag(self._lu[0]))
                if not np.all(diag > 1e-14 * max(diag.max(), 1.0)):
                    raise PreconditionerError(f"local matrix of part {part_id} is singular")
                self._solve = lambda v: sla.lu_solve(self._lu, v)
            else:
                self._lu = spla.splu(sp.csc_matrix(block))
                self._solve = self._lu.solve
        except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            raise PreconditionerError(f"local matrix of part {part_id} is singular: {exc}") from exc

    def solve(self, v):
        return self._solve(v)


@dataclass
class RasPreconditioner:
    n: int
    cores: List[np.ndarray]
    parts: List[np.ndarray]
    weights: List[np.ndarray]
    counts: np.ndarray
    solvers: list = field(repr=False, default_factory=list)
    setup_seconds: float = 0.0

    @property
    def n_parts(self) -> int:
        return len(self.parts)

    def partition_of_unity(self) -> np.ndarray:
        """``sum_p R_p^T D_p R_p`` as a vector (the operator is diagonal)."""
        out = np.zeros(self.n)
        for idx, w in zip(self.parts, self.weights):
            out[idx] += w
        return out

    def partition_of_unity_exact(self) -> bool:
        """Exact rational check that the weights of every knot sum to one."""
        total = [Fraction(0)] * self.n
        for idx, w in zip(self.parts, self.weights):
            for i, wi in zip(idx, w):
                if Fraction(1, int(self.counts[i])) != Fraction(1, round(1.0 / wi)):
                    return False
                total[i] += Fraction(1, int(self.counts[i]))
        return all(t == 1 for t in total)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return apply_ras(self, v)


def build_ras(c: sp.spmatrix, partition: Partition) -> RasPreconditioner:
    t0 = time.perf_counter()
    c = sp.csr_matrix(c)
    n = c.shape[0]
    counts = np.zeros(n, dtype=int)
    for idx in partition.parts:
        counts[idx] += 1
    covered = np.zeros(n, dtype=bool)
    for cr in partition.cores:
        if covered[cr].any():
            raise PreconditionerError("core parts overlap")
        covered[cr] = True
    if not covered.all():
        raise PreconditionerError("core parts do not cover every unknown")
    weights = [1.0 / counts[idx] for idx in partition.parts]
    solvers = [_LocalSolver(c[idx][:, idx], p) for p, idx in enumerate(partition.parts)]
    return RasPreconditioner(n, partition.cores, partition.parts, weights, counts, solvers,
                             time.perf_counter() - t0)


def apply_ras(m: RasPreconditioner, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    w = np.zeros(m.n)
    for idx, d, solver in zip(m.parts, m.weights, m.solvers):
        w[idx] += d * solver.solve(v[idx])
    return w


# -- GMRES -------------------------------------------------------------------

@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    residuals: List[float]
    converged: bool
    true_residual: float
    timings: dict = field(default_factory=dict)


def gmres(c, r, m: Optional[RasPreconditioner] = None, tol: float = 1e-10,
          max_iter: int = 500) -> SolveReport:
    """Full GMRES on ``C M^{-1} y = r`` with modified Gram-Schmidt, ``u = M^{-1} y``.

    Residuals are relative to ``||r||``; the history starts with 1 at iteration 0.
    """
    t0 = time.perf_counter()
    r = np.asarray(r, dtype=float)
    n = len(r)
    beta = float(np.linalg.norm(r))
    if beta == 0.0:
        raise SolverError("right-hand side is zero")
    if max_iter < 1:
        raise ConfigurationError("max_iter must be >= 1")
    prec = (lambda v: v) if m is None else m.apply
    k_max = min(max_iter, n)
    v = np.zeros((k_max + 1, n))
    hess = np.zeros((k_max + 1, k_max))
    cs = np.zeros(k_max)
    sn = np.zeros(k_max)
    g = np.zeros(k_max + 1)
    g[0] = beta
    v[0] = r / beta
    history = [1.0]
    k = 0
    converged = False
    while k < k_max:
        w = c @ prec(v[k])
        for i in range(k + 1):  # modified Gram-Schmidt
            hess[i, k] = w @ v[i]
            w -= hess[i, k] * v[i]
        h_next = float(np.linalg.norm(w))
        hess[k + 1, k] = h_next
        for i in range(k):
            a, b = hess[i, k], hess[i + 1, k]
            hess[i, k] = cs[i] * a + sn[i] * b
            hess[i + 1, k] = -sn[i] * a + cs[i] * b
        rot = np.hypot(hess[k, k], hess[k + 1, k])
        if rot == 0.0:
            raise SolverError(f"GMRES breakdown at iteration {k + 1}: C M^-1 v is zero")
        cs[k], sn[k] = hess[k, k] / rot, hess[k + 1, k] / rot
        hess[k, k] = rot
        hess[k + 1, k] = 0.0
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]
        k += 1
        history.append(abs(g[k]) / beta)
        if history[-1] <= tol:
            converged = True
            break
        if h_next <= 1e-14 * beta:
            raise SolverError(
                f"GMRES breakdown at iteration {k} with relative residual {history[-1]:.3e}")
        v[k] = w / h_next
    y = sla.solve_triangular(hess[:k, :k], g[:k])
    u = prec(v[:k].T @ y)
    true_res = float(np.linalg.norm(r - c @ u) / beta)
    return SolveReport(u, k, history, converged, true_res,
                       {"gmres": time.perf_counter() - t0})


def dense_solve(c, r) -> np.ndarray:
    """Partial-pivoted LU of the densified system (validation oracle)."""
    n = c.shape[0]
    if n > DENSE_SOLVE_LIMIT:
        raise SolverError(f"dense solve refused for N = {n} > {DENSE_SOLVE_LIMIT}")
    a = c.toarray() if sp.issparse(c) else np.asarray(c, dtype=float)
    with warnings.catch_warnings():
        # singularity is reported as SolverError below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a)
    if np.any(np.diag(lu) == 0.0):
        raise SolverError("matrix is singular")
    return sla.lu_solve((lu, piv), np.asarray(r, dtype=float))
