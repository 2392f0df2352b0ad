"""Knot errors, matrix statistics and interior reconstruction."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .localspectral import (assemble_operator, build_grid, eval_field, factorize,
                            solve_dirichlet)

log = logging.getLogger(__name__)

DENSE_CONDITION_LIMIT = 4000


@dataclass
class KnotErrors:
    errors: np.ndarray
    rms: float
    max: float


def knot_errors(u, problem, knots_xy) -> Optional[KnotErrors]:
    """``e_i = u_i - u_exact(x_i)``; None (with a notice) if there is no exact solution."""
    if problem.u_exact is None:
        log.warning("problem %s has no exact solution; knot errors skipped", problem.name)
        return None
    xy = np.asarray(knots_xy, dtype=float)
    exact = np.broadcast_to(problem.u_exact(xy[:, 0], xy[:, 1]), len(xy))
    e = np.asarray(u, dtype=float) - exact
    return KnotErrors(e, float(np.sqrt(np.mean(e * e))), float(np.abs(e).max()))


def write_errors_csv(path, knots_xy, errors: Optional[np.ndarray], provenance: Sequence[str]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "error", "provenance"])
        for i, (x, y) in enumerate(knots_xy):
            err = "" if errors is None else repr(float(errors[i]))
            w.writerow([i, repr(float(x)), repr(float(y)), err, provenance[i]])


@dataclass
class SpectralRadius:
    value: float
    iterations: int
    approximate: bool


def spectral_radius(a, iters: int = 200, tol: float = 1e-6, seed: int = 0) -> SpectralRadius:
    """Power-iteration estimate of the dominant eigenvalue magnitude.

    Each step applies ``a`` twice and takes a square root, so a dominant pair
    ``+lambda, -lambda`` converges instead of oscillating.
    """
    n = a.shape[0]
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for k in range(1, iters + 1):
        w = a @ (a @ v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            # nilpotent direction: the estimate collapses to 0
            return SpectralRadius(0.0, k, True)
        est = math.sqrt(norm)
        if k > 1 and abs(est - lam) <= tol * est:
            return SpectralRadius(est, k, False)
        lam = est
        v = w / norm
    return SpectralRadius(lam, iters, True)


@dataclass
class MatrixStats:
    n: int
    nnz: int
    sparsity_percent: float
    max_offdiagonal: Optional[float]
    rho_c_minus_i: float
    rho_iterations: int
    rho_approximate: bool
    condition_2: Optional[float]


def matrix_stats(c, power_iters: int = 200, tol: float = 1e-6,
                 condition: bool = True) -> MatrixStats:
    c = sp.csr_matrix(c)
    n = c.shape[0]
    coo = c.tocoo()
    off = coo.data[coo.row != coo.col]
    rho = spectral_radius(c - sp.identity(n, format="csr"), power_iters, tol)
    kappa = None
    if condition and n <= DENSE_CONDITION_LIMIT:
        s = np.linalg.svd(c.toarray(), compute_uv=False)
        kappa = float(s[0] / s[-1]) if s[-1] > 0 else math.inf
    return MatrixStats(n=n, nnz=int(c.nnz), sparsity_percent=100.0 * c.nnz / n ** 2,
                       max_offdiagonal=float(off.max()) if len(off) else None,
                       rho_c_minus_i=rho.value, rho_iterations=rho.iterations,
                       rho_approximate=rho.approximate, condition_2=kappa)


@dataclass
class RunStats:
    n: int
    nnz: int
    sparsity_percent: float
    max_offdiagonal: Optional[float]
    rho_c_minus_i: float
    rho_approximate: bool
    condition_2: Optional[float]
    rms_error: Optional[float]
    max_error: Optional[float]
    gmres_iterations: int
    gmres_converged: bool
    final_residual: float
    n_subdomains: int = 0
    n_floating: int = 0
    n_perimeter: int = 0
    rows: Dict[str, int] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def error_geography(errors, knots_xy, domain, near: float, far: float):
    """Mean |error| of knots within ``near`` of the boundary and beyond ``far``."""
    xy = np.asarray(knots_xy, dtype=float)
    d = domain.distance_to_boundary(xy[:, 0], xy[:, 1])
    e = np.abs(np.asarray(errors, dtype=float))
    close, deep = e[d <= near], e[d > far]
    return (float(close.mean()) if len(close) else math.nan,
            float(deep.mean()) if len(deep) else math.nan)


def reconstruct_field(cover, problem, u_hat, subdomain_id: int, points, n_r: int = 22):
    """Interior values on a floating subdomain from the interfacial solution."""
    sub = cover.subdomains[subdomain_id]
    if not sub.floating:
        raise ConfigurationError(
            f"reconstruction is only supported on floating subdomains; {subdomain_id} is perimeter")
    grid = build_grid(sub, len(sub.stencil), n_r)
    fact = factorize(assemble_operator(grid, problem), subdomain_id, grid)
    # boundary nodes coincide with the stencil knots, so the interpolant is nodal
    boundary = np.asarray(u_hat, dtype=float)[sub.stencil]
    field_values = solve_dirichlet(fact, problem, boundary)
    return eval_field(grid, field_values, points)
