"""Monte Carlo rows for perimeter subdomains.

Each trajectory integrates, by Euler-Maruyama with coefficients frozen at the
start of the step,

    dX = b dt + sigma dW,   dY = c Y dt,   dZ = f Y dt,

and stops when X leaves the subdomain shrunk by the Gobet-Menozzi shift
``c0 * sigma_n * sqrt(h)``. The exit point is projected back onto the true
boundary (radially onto the circle, orthogonally onto a rectangle edge).

Randomness is counter based: trajectory ``t`` of knot ``k`` runs its own
SplitMix64 stream seeded with ``mix(seed, k, t)``, so results do not depend on
how trajectories are batched or scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numba
import numpy as np

from .errors import ConfigurationError, TrajectoryError
from .problem import EllipticProblem, RectDomain

GOLDEN = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1
GM_CONSTANT = 0.5826

INTERFACE = 0
DOMAIN_BOUNDARY = 1
_STALLED = -1


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 5000
    h: float = 0.015
    seed: int = 12345
    c0: float = GM_CONSTANT
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigurationError(f"n_paths must be >= 1, got {self.n_paths}")
        if not self.h > 0:
            raise ConfigurationError(f"timestep h must be positive, got {self.h}")
        if not 0 <= self.seed <= MASK64:
            raise ConfigurationError("seed must fit in 64 unsigned bits")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")


# -- counter-based seeding (pure Python reference, mirrored in the kernel) --

def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trajectory_seed(seed: int, knot: int, t: int) -> int:
    s = mix64(seed + GOLDEN)
    s = mix64(s + (knot + 1) * GOLDEN)
    return mix64(s + (t + 1) * GOLDEN)


_G = np.uint64(GOLDEN)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)
_ONE = np.uint64(1)


@numba.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit
def _seeds(seed, knots, n_paths):
    out = np.empty(len(knots) * n_paths, dtype=np.uint64)
    base = _mix(np.uint64(seed) + _G)
    for i in range(len(knots)):
        s = _mix(base + (np.uint64(knots[i]) + _ONE) * _G)
        for t in range(n_paths):
            out[i * n_paths + t] = _mix(s + (np.uint64(t) + _ONE) * _G)
    return out


@numba.njit(inline="always")
def _uniform(state):
    state = state + _G
    return state, (float(_mix(state) >> _S11) + 1.0) * (1.0 / 9007199254740992.0)


def _make_kernel(a_xx, a_xy, a_yy, b_x, b_y, c, f):
    """Trajectory kernel specialised to one set of coefficient fields.

    The fields are closure constants, so numba calls (and usually inlines)
    them directly instead of going through first-class function pointers.
    """

    @numba.njit(error_model="numpy")
    def simulate(x0, y0, seeds, circle, rect, h, c0, max_steps):
        n = len(x0)
        ex = np.empty(n)
        ey = np.empty(n)
        yy = np.empty(n)
        zz = np.empty(n)
        tag = np.empty(n, dtype=np.int64)
        steps = np.empty(n, dtype=np.int64)
        cx, cy, rad = circle[0], circle[1], circle[2]
        x_lo, x_hi, y_lo, y_hi = rect[0], rect[1], rect[2], rect[3]
        sqh = math.sqrt(h)
        for t in range(n):
            state = seeds[t]
            x = x0[t]
            y = y0[t]
            yv = 1.0
            zv = 0.0
            k = 0
            code = _STALLED
            px = x
            py = y
            while True:
                axx = a_xx(x, y)
                axy = a_xy(x, y)
                ayy = a_yy(x, y)
                dx = x - cx
                dy = y - cy
                d = math.sqrt(dx * dx + dy * dy)
                if d > 0.0:
                    nx = dx / d
                    ny = dy / d
                else:
                    nx = 1.0
                    ny = 0.0
                shift_c = c0 * math.sqrt(nx * nx * axx + 2.0 * nx * ny * axy + ny * ny * ayy) * sqh
                shift_x = c0 * math.sqrt(axx) * sqh
                shift_y = c0 * math.sqrt(ayy) * sqh
                # nearest crossed rectangle edge, by back-projection distance
                edge = -1
                back_e = np.inf
                if x <= x_lo + shift_x and abs(x - x_lo) < back_e:
                    edge, back_e = 0, abs(x - x_lo)
                if x >= x_hi - shift_x and abs(x_hi - x) < back_e:
                    edge, back_e = 1, abs(x_hi - x)
                if y <= y_lo + shift_y and abs(y - y_lo) < back_e:
                    edge, back_e = 2, abs(y - y_lo)
                if y >= y_hi - shift_y and abs(y_hi - y) < back_e:
                    edge, back_e = 3, abs(y_hi - y)
                hit_c = d >= rad - shift_c
                if hit_c and (edge < 0 or abs(d - rad) < back_e):
                    px = cx + rad * nx
                    py = cy + rad * ny
                    tol = 1e-12 * rad
                    if (x_lo - tol <= px <= x_hi + tol) and (y_lo - tol <= py <= y_hi + tol):
                        code = INTERFACE
                        break
                    if edge < 0:
                        # radial projection left the domain: use the nearest edge
                        edge, back_e = 0, abs(x - x_lo)
                        if abs(x_hi - x) < back_e:
                            edge, back_e = 1, abs(x_hi - x)
                        if abs(y - y_lo) < back_e:
                            edge, back_e = 2, abs(y - y_lo)
                        if abs(y_hi - y) < back_e:
                            edge, back_e = 3, abs(y_hi - y)
                if edge >= 0:
                    px = min(max(x, x_lo), x_hi)
                    py = min(max(y, y_lo), y_hi)
                    if edge == 0:
                        px = x_lo
                    elif edge == 1:
                        px = x_hi
                    elif edge == 2:
                        py = y_lo
                    else:
                        py = y_hi
                    code = DOMAIN_BOUNDARY
                    break
                if k >= max_steps:
                    code = _STALLED
                    break
                s11 = math.sqrt(axx)
                s21 = axy / s11
                s22 = math.sqrt(ayy - s21 * s21)
                state, u1 = _uniform(state)
                state, u2 = _uniform(state)
                rr = math.sqrt(-2.0 * math.log(u1))
                z1 = rr * math.cos(2.0 * math.pi * u2)
                z2 = rr * math.sin(2.0 * math.pi * u2)
                bx = b_x(x, y)
                by = b_y(x, y)
                cv = c(x, y)
                zv += f(x, y) * yv * h
                yv *= 1.0 + cv * h
                x += bx * h + s11 * sqh * z1
                y += by * h + (s21 * z1 + s22 * z2) * sqh
                k += 1
            ex[t] = px
            ey[t] = py
            yy[t] = yv
            zz[t] = zv
            tag[t] = code
            steps[t] = k
        return ex, ey, yy, zz, tag, steps

    return simulate


_JIT_CACHE: Dict[int, object] = {}


def _jit(fn):
    if isinstance(fn, numba.core.registry.CPUDispatcher):
        return fn
    key = id(fn)
    hit = _JIT_CACHE.get(key)
    if hit is None or hit[0] is not fn:
        hit = (fn, numba.njit(fn))
        _JIT_CACHE[key] = hit
    return hit[1]


_KERNELS: Dict[tuple, object] = {}


def _kernel(problem: EllipticProblem):
    fields = tuple(_jit(getattr(problem, name))
                   for name in ("a_xx", "a_xy", "a_yy", "b_x", "b_y", "c", "f"))
    key = tuple(id(fn) for fn in fields)
    hit = _KERNELS.get(key)
    if hit is None or hit[0] != fields:
        hit = (fields, _make_kernel(*fields))
        _KERNELS[key] = hit
    return hit[1]


def gm_shift(problem: EllipticProblem, x, normal, h: float, c0: float = GM_CONSTANT) -> float:
    """Inward boundary shift ``c0 * sqrt(n^T a(x) n) * sqrt(h)``."""
    if h <= 0:
        return 0.0
    n = np.asarray(normal, dtype=float)
    a = problem.coefficient_matrix(float(x[0]), float(x[1]))
    return float(c0 * math.sqrt(n @ a @ n) * math.sqrt(h))


def default_max_steps(problem: EllipticProblem, subdomain, h: float) -> int:
    cx, cy = subdomain.center
    lam = float(np.linalg.eigvalsh(problem.coefficient_matrix(cx, cy))[0])
    return 100 * int(math.ceil(subdomain.radius ** 2 / (lam * h)))


@dataclass
class ExitBatch:
    """Per-trajectory exit data, trajectory-major within each knot."""
    x: np.ndarray
    y: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    tag: np.ndarray
    steps: np.ndarray


@dataclass(frozen=True)
class ExitEvent:
    x: float
    y: float
    Y: float
    Z: float
    tag: str
    theta: Optional[float]
    steps: int


def simulate_exits(problem: EllipticProblem, subdomain, domain: RectDomain, starts,
                   knot_ids, mc: McConfig) -> ExitBatch:
    """Run ``mc.n_paths`` trajectories from each start point (one per knot id)."""
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    knot_ids = np.atleast_1d(np.asarray(knot_ids, dtype=np.int64))
    n = mc.n_paths
    max_steps = mc.max_steps or default_max_steps(problem, subdomain, mc.h)
    seeds = _seeds(np.uint64(mc.seed), knot_ids, n)
    x0 = np.repeat(starts[:, 0], n)
    y0 = np.repeat(starts[:, 1], n)
    circle = np.array([subdomain.center[0], subdomain.center[1], subdomain.radius], dtype=float)
    rect = np.array([domain.x0, domain.x1, domain.y0, domain.y1], dtype=float)
    out = ExitBatch(*_kernel(problem)(x0, y0, seeds, circle, rect, float(mc.h),
                                       float(mc.c0), int(max_steps)))
    stalled = np.flatnonzero(out.tag == _STALLED)
    if len(stalled):
        knot = int(knot_ids[stalled[0] // n])
        raise TrajectoryError(
            f"trajectory {stalled[0] % n} of knot {knot} did not exit within "
            f"{max_steps} steps (h={mc.h})")
    return out


def integrate_trajectory(problem: EllipticProblem, subdomain, domain: RectDomain, x0,
                         h: float, seed: int, knot: int = 0, path: int = 0,
                         c0: float = GM_CONSTANT, max_steps: Optional[int] = None) -> ExitEvent:
    """A single trajectory; the same kernel and seeding as the batched path."""
    max_steps = max_steps or default_max_steps(problem, subdomain, h)
    seeds = np.array([trajectory_seed(seed, knot, path)], dtype=np.uint64)
    circle = np.array([subdomain.center[0], subdomain.center[1], subdomain.radius], dtype=float)
    rect = np.array([domain.x0, domain.x1, domain.y0, domain.y1], dtype=float)
    ex, ey, yy, zz, tag, steps = _kernel(problem)(
        np.array([x0[0]], dtype=float), np.array([x0[1]], dtype=float), seeds, circle, rect,
        float(h), float(c0), int(max_steps))
    if tag[0] == _STALLED:
        raise TrajectoryError(f"trajectory from {tuple(x0)} did not exit within {max_steps} steps")
    theta = None
    label = "domain_boundary"
    if tag[0] == INTERFACE:
        label = "interface"
        theta = math.atan2(ey[0] - subdomain.center[1], ex[0] - subdomain.center[0])
    return ExitEvent(float(ex[0]), float(ey[0]), float(yy[0]), float(zz[0]), label, theta,
                     int(steps[0]))


def exit_arcs(subdomain, ex, ey):
    """Arc index and arc-frame angle of interface exit points."""
    two_pi = 2.0 * np.pi
    theta = np.arctan2(ey - subdomain.center[1], ex - subdomain.center[0])
    best = np.full(theta.shape, -1)
    best_gap = np.full(theta.shape, np.inf)
    local = np.zeros_like(theta)
    for a, (ta, tb) in enumerate(subdomain.arcs):
        t = ta + np.mod(theta - ta, two_pi)
        past_end = t - tb
        before_start = ta + two_pi - t
        gap = np.where(t <= tb, 0.0, np.minimum(past_end, before_start))
        snapped = np.where(t <= tb, t, np.where(past_end < before_start, tb, ta))
        take = gap < best_gap
        best[take] = a
        best_gap[take] = gap[take]
        local[take] = snapped[take]
    if np.any(best_gap > 1e-6):
        raise TrajectoryError("interface exit point lies outside every arc")
    return best, local


@dataclass
class RowEstimate:
    knot: int
    columns: np.ndarray
    coefficients: np.ndarray
    coefficient_stderr: np.ndarray
    rhs: float
    rhs_stderr: float
    n_paths: int
    interface_fraction: float
    mean_steps: float
    payoff_stderr: Optional[float] = None


def _row_from_exits(problem, subdomain, interps, knot, batch: ExitBatch, sl: slice,
                    u_exact_values: Optional[Dict[int, float]] = None) -> RowEstimate:
    ex, ey = batch.x[sl], batch.y[sl]
    Y, Z, tag = batch.Y[sl], batch.Z[sl], batch.tag[sl]
    n = len(Y)
    on_arc = tag == INTERFACE
    cols: List[int] = []
    contrib = []
    arc_idx, local = exit_arcs(subdomain, ex[on_arc], ey[on_arc])
    rows_on_arc = np.flatnonzero(on_arc)
    for a, ids in enumerate(subdomain.arc_stencils):
        sel = arc_idx == a
        per_path = np.zeros((n, len(ids)))
        if sel.any():
            h = interps[subdomain.id, a].cardinals(local[sel])
            per_path[rows_on_arc[sel]] = -h * Y[rows_on_arc[sel], None]
        cols.extend(ids)
        contrib.append(per_path)
    per_path = np.hstack(contrib) if contrib else np.zeros((n, 0))
    g_term = np.where(on_arc, 0.0, problem.g(ex, ey) * Y)
    rhs_path = g_term + Z
    denom = math.sqrt(n)
    coef = per_path.mean(axis=0)
    coef_se = per_path.std(axis=0, ddof=1) / denom if n > 1 else np.zeros(len(cols))
    payoff_se = None
    if u_exact_values is not None:
        u = np.array([u_exact_values[k] for k in cols])
        payoff = rhs_path - per_path @ u
        payoff_se = float(payoff.std(ddof=1) / denom) if n > 1 else 0.0
    return RowEstimate(
        knot=knot, columns=np.asarray(cols, dtype=np.int64), coefficients=coef,
        coefficient_stderr=coef_se, rhs=float(rhs_path.mean()),
        rhs_stderr=float(rhs_path.std(ddof=1) / denom) if n > 1 else 0.0,
        n_paths=n, interface_fraction=float(on_arc.mean()),
        mean_steps=float(batch.steps[sl].mean()), payoff_stderr=payoff_se)


def estimate_rows(problem: EllipticProblem, cover, subdomain_id: int, knot_ids, interps,
                  mc: McConfig, stream_ids=None) -> List[RowEstimate]:
    """Monte Carlo rows for knots estimated inside one subdomain (batched).

    ``stream_ids`` (default: the knot ids) select the random streams.
    """
    sub = cover.subdomains[subdomain_id]
    knot_ids = [int(k) for k in knot_ids]
    if not knot_ids:
        return []
    streams = knot_ids if stream_ids is None else [int(s) for s in stream_ids]
    starts = np.array([(cover.knots[k].x, cover.knots[k].y) for k in knot_ids])
    try:
        batch = simulate_exits(problem, sub, cover.domain, starts, streams, mc)
    except TrajectoryError as exc:
        raise TrajectoryError(f"subdomain {subdomain_id}: {exc}") from exc
    exact = None
    if problem.u_exact is not None:
        xy = cover.knot_xy[sub.stencil]
        exact = dict(zip(sub.stencil, np.broadcast_to(problem.u_exact(xy[:, 0], xy[:, 1]), len(xy))))
    n = mc.n_paths
    return [_row_from_exits(problem, sub, interps, k, batch, slice(i * n, (i + 1) * n), exact)
            for i, k in enumerate(knot_ids)]


def estimate_row(problem: EllipticProblem, cover, subdomain_id: int, knot: int, interps,
                 mc: McConfig) -> RowEstimate:
    return estimate_rows(problem, cover, subdomain_id, [knot], interps, mc)[0]
