"""Cardinal functions on circle interfaces.

Full circumferences use trigonometric cardinals on equispaced angles; arcs use
inverse multiquadric (IMQ) RBF cardinals. The arc Gram matrix is badly
conditioned (~1e12 at the default shape parameter), so cardinal values are
obtained by solving ``K w = phi(theta)`` with iterative refinement whose
residual is accumulated in double-double arithmetic. This keeps the Kronecker
delta property exact to rounding at the nodes.
"""
from __future__ import annotations

import numba
import numpy as np
import scipy.linalg as sla

from .errors import InterpolationError

TWO_PI = 2.0 * np.pi
DEFAULT_C2 = 1.5


def fourier_cardinal(n: int, j: int, theta, theta0: float = 0.0):
    """``H_j(theta) = (1/n) sum_{k=-n/2}^{n/2-1} cos k(theta - theta_j)``, 0-based j."""
    if n % 2:
        raise InterpolationError(f"Fourier cardinals need an even node count, got {n}")
    theta = np.asarray(theta, dtype=float)
    theta_j = theta0 + TWO_PI * j / n
    k = np.arange(-n // 2, n // 2)
    return np.cos(np.multiply.outer(theta - theta_j, k)).sum(-1) / n


class FourierInterpolant:
    kind = "fourier"

    def __init__(self, n: int, theta0: float = 0.0):
        if n < 2 or n % 2:
            raise InterpolationError(f"Fourier cardinals need an even node count, got {n}")
        self.n = n
        self.theta0 = float(theta0)
        self.angles = self.theta0 + TWO_PI * np.arange(n) / n
        self._k = np.arange(-n // 2, n // 2)
        self._cos_nodes = np.cos(np.outer(self._k, self.angles))
        self._sin_nodes = np.sin(np.outer(self._k, self.angles))

    def cardinals(self, theta) -> np.ndarray:
        """All cardinals at each angle, shape ``theta.shape + (n,)``.

        Same cosine sum as ``fourier_cardinal``, expanded with the angle
        difference identity so all ``n`` functions share the trig evaluations.
        """
        theta = np.asarray(theta, dtype=float)
        kt = np.multiply.outer(theta.ravel(), self._k)
        h = (np.cos(kt) @ self._cos_nodes + np.sin(kt) @ self._sin_nodes) / self.n
        return h.reshape(theta.shape + (self.n,))


@numba.njit(cache=False)
def _residual_dd(K, W, B):
    """``B - K @ W`` accumulated in double-double, rounded to double.

    Products are split exactly (Dekker) and summed with error-free
    transformations, so the residual is accurate even when ``K @ W`` cancels
    ``B`` to many digits.
    """
    n, m = B.shape
    out = np.empty_like(B)
    for i in range(n):
        for j in range(m):
            s = B[i, j]
            comp = 0.0
            for k in range(K.shape[1]):
                a = -K[i, k]
                b = W[k, j]
                p = a * b
                t = 134217729.0 * a
                ah = t - (t - a)
                al = a - ah
                t = 134217729.0 * b
                bh = t - (t - b)
                bl = b - bh
                e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
                t = s + p
                z = t - s
                comp += ((s - (t - z)) + (p - z)) + e
                s = t
            out[i, j] = s + comp
    return out


class RbfInterpolant:
    kind = "rbf"

    def __init__(self, angles, c2: float = DEFAULT_C2, refine: int = 2):
        angles = np.asarray(angles, dtype=float)
        if angles.ndim != 1 or len(angles) < 2:
            raise InterpolationError("RBF interpolation needs at least two nodes")
        if np.any(np.diff(angles) <= 0):
            raise InterpolationError("RBF node angles must be strictly increasing")
        if not c2 > 0:
            raise InterpolationError(f"shape parameter c^2 must be positive, got {c2}")
        self.angles = angles
        self.n = len(angles)
        self.c2 = float(c2)
        self.refine = refine
        self.K = self.basis(angles)
        cond = np.linalg.cond(self.K)
        if not cond < 1e14:
            raise InterpolationError(
                f"IMQ matrix numerically singular (cond {cond:.2e}); "
                "use a larger c^2 or fewer nodes")
        self.condition = cond
        self._lu = sla.lu_factor(self.K)

    def basis(self, theta) -> np.ndarray:
        """``phi_l(theta_t)`` with shape ``(n, len(theta))``."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        d = self.angles[:, None] - theta[None, :]
        return 1.0 / np.sqrt(d * d + self.c2)

    def cardinals(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        flat = theta.ravel()
        lo, hi = self.angles[0], self.angles[-1]
        tol = 1e-9
        if flat.size and (flat.min() < lo - tol or flat.max() > hi + tol):
            bad = flat[(flat < lo - tol) | (flat > hi + tol)][0]
            raise InterpolationError(f"angle {bad} outside the arc [{lo}, {hi}]")
        phi = self.basis(flat)
        w = sla.lu_solve(self._lu, phi)
        for _ in range(self.refine):
            w += sla.lu_solve(self._lu, _residual_dd(self.K, w, np.ascontiguousarray(phi)))
        return w.T.reshape(theta.shape + (self.n,))


def rbf_cardinal_basis(angles, c2: float = DEFAULT_C2) -> RbfInterpolant:
    return RbfInterpolant(angles, c2)


def eval_cardinal(interp, j: int, theta):
    """Cardinal ``H_j`` (0-based) at ``theta``."""
    if not 0 <= j < interp.n:
        raise InterpolationError(f"node index {j} outside stencil of size {interp.n}")
    return interp.cardinals(theta)[..., j]


def interpolate(interp, values, theta):
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != interp.n:
        raise InterpolationError(f"expected {interp.n} nodal values, got {values.shape[-1]}")
    return interp.cardinals(theta) @ values


def arc_interpolants(cover, c2: float = DEFAULT_C2):
    """Interpolant per (subdomain id, arc index) for every interface of a cover."""
    out = {}
    for sub in cover.subdomains:
        for a, ids in enumerate(sub.arc_stencils):
            if sub.floating:
                out[sub.id, a] = FourierInterpolant(len(ids), theta0=cover.knots[ids[0]].theta)
            else:
                out[sub.id, a] = RbfInterpolant([cover.knots[k].theta for k in ids], c2)
    return out
