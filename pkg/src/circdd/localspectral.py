"""Polar pseudospectral collocation on discs.

The radial coordinate runs over a full diameter of ``2 n_r`` Chebyshev points
(an odd Chebyshev degree, so no node sits at the center) and the angle over
``n_theta`` equispaced nodes; the symmetry ``u(-r, t) = u(r, t + pi)`` folds
the diameter back onto ``r > 0``. Stored nodes are ``n_r`` rings (ring 0 is
the circumference) times ``n_theta`` angles, ring-major.

Cartesian derivative matrices come from the polar ones by the chain rule, so
any operator with a mixed ``d_xy`` term is supported.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import ConfigurationError, FactorizationError, InterpolationError
from .interp import FourierInterpolant
from .problem import EllipticProblem

TWO_PI = 2.0 * np.pi


def cheb(n: int):
    """Chebyshev points ``cos(pi j / n)`` and differentiation matrix."""
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.hstack([2.0, np.ones(n - 1), 2.0]) * (-1.0) ** np.arange(n + 1)
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    d -= np.diag(d.sum(axis=1))
    return x, d


def fourier_diff(n: int):
    """First and second periodic spectral differentiation matrices (n even)."""
    h = TWO_PI / n
    k = np.arange(1, n)
    sign = (-1.0) ** k
    col1 = np.zeros(n)
    col1[1:] = 0.5 * sign / np.tan(0.5 * k * h)
    d1 = sla.toeplitz(col1, np.r_[col1[0], col1[:0:-1]])
    col2 = np.empty(n)
    col2[0] = -np.pi ** 2 / (3.0 * h * h) - 1.0 / 6.0
    col2[1:] = -0.5 * sign / np.sin(0.5 * k * h) ** 2
    return d1, sla.toeplitz(col2)


@lru_cache(maxsize=8)
def _reference_operators(n_theta: int, n_r: int, radius: float):
    n = 2 * n_r - 1
    xc, d = cheb(n)
    d2 = d @ d
    pos = np.arange(n_r)
    mirror = n - pos
    half = np.roll(np.eye(n_theta), n_theta // 2, axis=1)
    eye_t = np.eye(n_theta)
    dr = (np.kron(d[np.ix_(pos, pos)], eye_t) + np.kron(d[np.ix_(pos, mirror)], half)) / radius
    drr = (np.kron(d2[np.ix_(pos, pos)], eye_t) + np.kron(d2[np.ix_(pos, mirror)], half)) / radius ** 2
    f1, f2 = fourier_diff(n_theta)
    dt = np.kron(np.eye(n_r), f1)
    dtt = np.kron(np.eye(n_r), f2)
    drt = dr @ dt

    r = np.repeat(xc[:n_r] * radius, n_theta)
    t = np.tile(TWO_PI * np.arange(n_theta) / n_theta, n_r)
    c, s = np.cos(t), np.sin(t)
    cc, ss, sc, c2 = c * c, s * s, s * c, c * c - s * s

    def rows(v, m):
        return v[:, None] * m

    dx = rows(c, dr) - rows(s / r, dt)
    dy = rows(s, dr) + rows(c / r, dt)
    dxx = (rows(cc, drr) + rows(ss / r ** 2, dtt) - rows(2 * sc / r, drt)
           + rows(ss / r, dr) + rows(2 * sc / r ** 2, dt))
    dyy = (rows(ss, drr) + rows(cc / r ** 2, dtt) + rows(2 * sc / r, drt)
           + rows(cc / r, dr) - rows(2 * sc / r ** 2, dt))
    dxy = (rows(sc, drr) - rows(sc / r ** 2, dtt) + rows(c2 / r, drt)
           - rows(sc / r, dr) - rows(c2 / r ** 2, dt))
    ops = dict(dx=dx, dy=dy, dxx=dxx, dyy=dyy, dxy=dxy)
    for m in ops.values():
        m.setflags(write=False)
    return xc, r, t, ops


@dataclass(frozen=True)
class SpectralGrid:
    n_theta: int
    n_r: int
    center: tuple
    radius: float
    theta0: float
    cheb_nodes: np.ndarray  # full-diameter Chebyshev points on [-1, 1]
    r: np.ndarray
    theta: np.ndarray
    x: np.ndarray
    y: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    dxx: np.ndarray
    dyy: np.ndarray
    dxy: np.ndarray

    @property
    def size(self) -> int:
        return self.n_theta * self.n_r

    @property
    def boundary(self) -> np.ndarray:
        return np.arange(self.n_theta)

    def sample(self, field) -> np.ndarray:
        return np.broadcast_to(field(self.x, self.y), self.x.shape).astype(float)


def build_grid(subdomain, n_theta: int, n_r: int, stencil_size: Optional[int] = None) -> SpectralGrid:
    """Grid on a floating circle; boundary nodes sit on the stencil angles."""
    if stencil_size is None and getattr(subdomain, "arc_stencils", None):
        stencil_size = len(subdomain.stencil)
    if stencil_size is not None and stencil_size != n_theta:
        raise ConfigurationError(
            f"n_theta={n_theta} differs from stencil size {stencil_size} of circle {subdomain.id}")
    if n_theta < 4 or n_theta % 2:
        raise ConfigurationError(f"n_theta must be even and >= 4, got {n_theta}")
    if n_r < 4:
        raise ConfigurationError(f"n_r must be >= 4, got {n_r}")
    if getattr(subdomain, "kind", "floating") != "floating":
        raise ConfigurationError(f"circle {subdomain.id} is not floating")
    theta0 = 0.0
    if getattr(subdomain, "arcs", None):
        theta0 = float(subdomain.arcs[0][0])
    xc, r, t, ops = _reference_operators(n_theta, n_r, float(subdomain.radius))
    if theta0 != 0.0:
        raise ConfigurationError("floating stencils must start at angle 0")
    cx, cy = subdomain.center
    return SpectralGrid(n_theta, n_r, (float(cx), float(cy)), float(subdomain.radius), theta0,
                        xc, r, t, cx + r * np.cos(t), cy + r * np.sin(t), **ops)


def assemble_operator(grid: SpectralGrid, problem: EllipticProblem) -> np.ndarray:
    """Collocation matrix of ``L + c`` with identity rows on the circumference."""
    s = grid.sample
    a = (0.5 * s(problem.a_xx)[:, None] * grid.dxx + s(problem.a_xy)[:, None] * grid.dxy
         + 0.5 * s(problem.a_yy)[:, None] * grid.dyy + s(problem.b_x)[:, None] * grid.dx
         + s(problem.b_y)[:, None] * grid.dy)
    a[np.diag_indices_from(a)] += s(problem.c)
    bnd = grid.boundary
    a[bnd] = 0.0
    a[bnd, bnd] = 1.0
    return a


class LocalFactorization:
    """QR factors of a collocation matrix; ``solve`` handles many right-hand sides.

    Each solve applies one step of iterative refinement against the stored
    matrix and then pins the Dirichlet nodes to their data, which the identity
    rows prescribe exactly.
    """

    def __init__(self, matrix: np.ndarray, subdomain_id: Optional[int] = None, grid=None):
        self.matrix = np.array(matrix, dtype=float)
        self.q, self.r = sla.qr(self.matrix)
        diag = np.abs(np.diag(self.r))
        if diag.min() <= 1e-14 * diag.max():
            raise FactorizationError(
                f"collocation matrix of subdomain {subdomain_id} is numerically rank deficient")
        self.subdomain_id = subdomain_id
        self.grid = grid
        for a in (self.matrix, self.q, self.r):
            a.setflags(write=False)

    def _apply_inverse(self, rhs):
        return sla.solve_triangular(self.r, self.q.T @ rhs)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        x = self._apply_inverse(rhs)
        x += self._apply_inverse(rhs - self.matrix @ x)
        if self.grid is not None:
            x[self.grid.boundary] = rhs[self.grid.boundary]
        return x

    def rebind(self, grid, subdomain_id) -> "LocalFactorization":
        """Same factors attached to a translated grid (constant coefficients)."""
        out = copy.copy(self)
        out.grid = grid
        out.subdomain_id = subdomain_id
        return out


def factorize(matrix: np.ndarray, subdomain_id=None, grid=None) -> LocalFactorization:
    return LocalFactorization(matrix, subdomain_id, grid)


def solve_cardinal_bvps(fact: LocalFactorization, interp: Optional[FourierInterpolant] = None) -> np.ndarray:
    """Fields ``G_j`` (columns) with ``(L + c) G_j = 0`` and ``G_j = -H_j`` on the circle.

    The delta property makes the boundary data of ``G_j`` exactly ``-e_j``.
    """
    grid = fact.grid
    if interp is not None and interp.n != grid.n_theta:
        raise ConfigurationError("interpolant size does not match the grid")
    rhs = np.zeros((grid.size, grid.n_theta))
    rhs[grid.boundary, np.arange(grid.n_theta)] = -1.0
    return fact.solve(rhs)


def solve_source_bvp(fact: LocalFactorization, problem: EllipticProblem) -> np.ndarray:
    """Field ``B`` with ``(L + c) B + f = 0`` and zero boundary data."""
    return solve_dirichlet(fact, problem, np.zeros(fact.grid.n_theta))


def solve_dirichlet(fact: LocalFactorization, problem: EllipticProblem, boundary_values) -> np.ndarray:
    """Local solution with source ``f`` and the given values on the boundary nodes."""
    grid = fact.grid
    rhs = -grid.sample(problem.f)
    rhs[grid.boundary] = boundary_values
    return fact.solve(rhs)


def _barycentric_matrix(nodes: np.ndarray, s: np.ndarray) -> np.ndarray:
    n = len(nodes) - 1
    w = (-1.0) ** np.arange(n + 1)
    w[[0, -1]] *= 0.5
    diff = s[:, None] - nodes[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = w[None, :] / diff
        out = t / t.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    out[hit] = exact[hit].astype(float)
    return out


def eval_weights(grid: SpectralGrid, points) -> np.ndarray:
    """Rows ``w(p)`` with ``field(p) = w(p) @ field`` for interior points ``p``."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    dx = p[:, 0] - grid.center[0]
    dy = p[:, 1] - grid.center[1]
    rho = np.hypot(dx, dy) / grid.radius
    if np.any(rho > 1.0 + 1e-12):
        i = int(np.argmax(rho))
        raise InterpolationError(f"point {tuple(p[i])} outside the disc of radius {grid.radius}")
    phi = np.arctan2(dy, dx)
    beta = _barycentric_matrix(grid.cheb_nodes, np.minimum(rho, 1.0))
    ang = FourierInterpolant(grid.n_theta, grid.theta0)
    h0 = ang.cardinals(phi)
    h1 = ang.cardinals(phi + np.pi)
    n = len(grid.cheb_nodes) - 1
    pos = np.arange(grid.n_r)
    w = (beta[:, pos, None] * h0[:, None, :] + beta[:, n - pos, None] * h1[:, None, :])
    return w.reshape(len(p), grid.size)


def eval_field(grid: SpectralGrid, field: np.ndarray, points) -> np.ndarray:
    return eval_weights(grid, points) @ field
