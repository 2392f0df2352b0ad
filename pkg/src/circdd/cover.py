"""Overlapping circle covers of a rectangle, interface arcs, knots and owners."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError, GeometryError
from .problem import RectDomain

TWO_PI = 2.0 * math.pi
FLOATING = "floating"
PERIMETER = "perimeter"


@dataclass
class Subdomain:
    id: int
    center: Tuple[float, float]
    radius: float
    kind: str = "unclassified"
    # closed angle intervals (theta_min, theta_max) with theta_min in [0, 2pi)
    arcs: List[Tuple[float, float]] = field(default_factory=list)
    # knot ids per arc, increasing angle; ``stencil`` is their concatenation
    arc_stencils: List[List[int]] = field(default_factory=list)

    @property
    def floating(self) -> bool:
        return self.kind == FLOATING

    @property
    def stencil(self) -> List[int]:
        return [k for arc in self.arc_stencils for k in arc]

    def point(self, theta):
        cx, cy = self.center
        return cx + self.radius * np.cos(theta), cy + self.radius * np.sin(theta)


@dataclass
class Knot:
    id: int
    x: float
    y: float
    host: int
    arc: int
    theta: float
    on_boundary: bool
    owner: Optional[int] = None
    depth: float = 0.0


@dataclass
class Cover:
    domain: RectDomain
    subdomains: List[Subdomain]
    knots: List[Knot] = field(default_factory=list)
    m_per_side: Optional[int] = None
    rho: Optional[float] = None
    n_per_circle: Optional[int] = None

    @classmethod
    def from_circles(cls, domain: RectDomain, centers: Sequence, radii) -> "Cover":
        radii = np.broadcast_to(np.asarray(radii, dtype=float), (len(centers),))
        subs = [Subdomain(i, (float(c[0]), float(c[1])), float(r))
                for i, (c, r) in enumerate(zip(centers, radii))]
        return cls(domain, subs)

    @property
    def n_knots(self) -> int:
        return len(self.knots)

    @property
    def knot_xy(self) -> np.ndarray:
        return np.array([(k.x, k.y) for k in self.knots], dtype=float).reshape(-1, 2)

    @property
    def centers(self) -> np.ndarray:
        return np.array([s.center for s in self.subdomains], dtype=float).reshape(-1, 2)

    @property
    def radii(self) -> np.ndarray:
        return np.array([s.radius for s in self.subdomains], dtype=float)

    def floating_ids(self) -> List[int]:
        return [s.id for s in self.subdomains if s.floating]

    def perimeter_ids(self) -> List[int]:
        return [s.id for s in self.subdomains if s.kind == PERIMETER]

    def owned_knots(self, subdomain_id: int) -> List[int]:
        return [k.id for k in self.knots if k.owner == subdomain_id]


def build_cover(domain: RectDomain, m_per_side: int, rho: float) -> Cover:
    """Square lattice of ``m_per_side**2`` circles of radius ``rho * spacing``.

    The rectangle must be a square for the lattice to be uniform; for a
    general rectangle the spacing follows each axis and the radius uses the
    larger spacing.
    """
    if m_per_side < 2:
        raise ConfigurationError(f"m_per_side must be >= 2, got {m_per_side}")
    if not (1.0 / math.sqrt(2.0) < rho < 1.0):
        raise ConfigurationError(
            f"overlap ratio rho={rho} outside (1/sqrt(2), 1): a square lattice "
            "of circles covers the plane only for rho > 1/sqrt(2) ~ 0.7071")
    sx = domain.width / m_per_side
    sy = domain.height / m_per_side
    radius = rho * max(sx, sy)
    xs = domain.x0 + sx * (np.arange(m_per_side) + 0.5)
    ys = domain.y0 + sy * (np.arange(m_per_side) + 0.5)
    centers = [(x, y) for y in ys for x in xs]
    cover = Cover.from_circles(domain, centers, radius)
    cover.m_per_side = m_per_side
    cover.rho = rho
    return cover


def _circle_rect_arcs(center, radius, domain: RectDomain) -> List[Tuple[float, float]]:
    """Maximal angle intervals of the circumference lying in the closed rectangle."""
    cx, cy = center
    cuts = []
    for edge in (domain.x0, domain.x1):
        t = (edge - cx) / radius
        if abs(t) <= 1.0:
            a = math.acos(t)
            cuts += [a, -a]
    for edge in (domain.y0, domain.y1):
        t = (edge - cy) / radius
        if abs(t) <= 1.0:
            a = math.asin(t)
            cuts += [a, math.pi - a]
    cuts = np.unique(np.mod(cuts, TWO_PI))
    tol = 1e-12 * max(radius, 1.0)

    def inside(theta):
        x = cx + radius * math.cos(theta)
        y = cy + radius * math.sin(theta)
        return (domain.x0 - tol <= x <= domain.x1 + tol) and (domain.y0 - tol <= y <= domain.y1 + tol)

    if len(cuts) == 0:
        return [(0.0, TWO_PI)] if inside(0.0) else []
    pieces = []
    for i, a in enumerate(cuts):
        b = cuts[i + 1] if i + 1 < len(cuts) else cuts[0] + TWO_PI
        if b - a > 0 and inside(0.5 * (a + b)):
            pieces.append([a, b])
    if not pieces:
        return []
    # merge pieces that meet at a cut (tangency or coinciding crossings)
    merged = [pieces[0]]
    for a, b in pieces[1:]:
        if abs(a - merged[-1][1]) < 1e-14:
            merged[-1][1] = b
        else:
            merged.append([a, b])
    if len(merged) > 1 and abs(merged[-1][1] - (merged[0][0] + TWO_PI)) < 1e-14:
        merged[0] = [merged[-1][0], merged[0][1] + TWO_PI]
        merged.pop()
    if len(merged) == 1 and merged[0][1] - merged[0][0] >= TWO_PI - 1e-14:
        return [(0.0, TWO_PI)]
    arcs = []
    for a, b in merged:
        a0 = a % TWO_PI
        arcs.append((a0, a0 + (b - a)))
    arcs.sort()
    return arcs


def classify_and_clip(cover: Cover) -> Cover:
    """Tag circles floating or perimeter and clip perimeter circles to arcs."""
    dom = cover.domain
    for sub in cover.subdomains:
        cx, cy = sub.center
        inside = dom.contains(cx, cy, closed=False)
        clearance = float(dom.distance_to_boundary(cx, cy)) if inside else -1.0
        if clearance > sub.radius:
            sub.kind = FLOATING
            sub.arcs = [(0.0, TWO_PI)]
            continue
        sub.kind = PERIMETER
        arcs = _circle_rect_arcs(sub.center, sub.radius, dom)
        if not arcs:
            raise GeometryError(
                f"circle {sub.id} (center {sub.center}, r={sub.radius}) has no "
                "circumference inside the closed domain: empty interface")
        if len(arcs) == 1 and arcs[0][1] - arcs[0][0] >= TWO_PI:
            raise GeometryError(
                f"circle {sub.id} is tangent to the boundary; perturb rho")
        sub.arcs = arcs
    return cover


def arc_knot_count(length: float, n_per_circle: int) -> int:
    return max(5, int(math.floor(length / (TWO_PI / n_per_circle) + 0.5)) + 1)


def _snap_to_edge(x, y, domain: RectDomain, tol):
    on = False
    for edge in (domain.x0, domain.x1):
        if abs(x - edge) <= tol:
            x, on = edge, True
    for edge in (domain.y0, domain.y1):
        if abs(y - edge) <= tol:
            y, on = edge, True
    return x, y, on


def place_knots(cover: Cover, n_per_circle: int) -> Cover:
    """Equispaced knots on circumferences and, endpoints included, on arcs."""
    if n_per_circle < 4 or n_per_circle % 2:
        raise ConfigurationError(f"n_per_circle must be even and >= 4, got {n_per_circle}")
    knots: List[Knot] = []
    dom = cover.domain
    for sub in cover.subdomains:
        if sub.kind not in (FLOATING, PERIMETER):
            raise GeometryError("classify_and_clip must run before place_knots")
        sub.arc_stencils = []
        for a_idx, (ta, tb) in enumerate(sub.arcs):
            if sub.floating:
                thetas = TWO_PI * np.arange(n_per_circle) / n_per_circle
                ends = np.zeros(n_per_circle, dtype=bool)
            else:
                count = arc_knot_count(tb - ta, n_per_circle)
                thetas = ta + (tb - ta) * np.arange(count) / (count - 1)
                thetas[-1] = tb  # exact endpoint: no rounding past the arc
                ends = np.zeros(count, dtype=bool)
                ends[[0, -1]] = True
            ids = []
            for theta, end in zip(thetas, ends):
                x, y = sub.point(theta)
                x, y = float(x), float(y)
                on = False
                if end:
                    x, y, on = _snap_to_edge(x, y, dom, 1e-9 * sub.radius)
                    if not on:
                        raise GeometryError(
                            f"arc endpoint of circle {sub.id} at angle {theta} is not on the boundary")
                knots.append(Knot(len(knots), x, y, sub.id, a_idx, float(theta), on))
                ids.append(len(knots) - 1)
            sub.arc_stencils.append(ids)
    cover.knots = knots
    cover.n_per_circle = n_per_circle
    _check_duplicates(cover)
    return cover


def _check_duplicates(cover: Cover) -> None:
    xy = cover.knot_xy
    tol = 1e-9 * float(cover.radii.min())
    pairs = cKDTree(xy).query_pairs(tol)
    for i, j in sorted(pairs):
        ki, kj = cover.knots[i], cover.knots[j]
        if ki.host != kj.host:
            raise GeometryError(
                f"knots {i} (circle {ki.host}) and {j} (circle {kj.host}) coincide "
                f"at ({ki.x:.6g}, {ki.y:.6g}); perturb rho slightly")


def subdomain_depths(cover: Cover, xy: np.ndarray) -> np.ndarray:
    """Depth of each point in each subdomain, shape (n_points, n_subdomains).

    Floating: ``r - |x - c|``. Perimeter: also capped by the distance to the
    rectangle boundary. Positive depth means strictly interior.
    """
    xy = np.atleast_2d(xy)
    d = cover.radii[None, :] - np.hypot(xy[:, :1] - cover.centers[None, :, 0],
                                        xy[:, 1:] - cover.centers[None, :, 1])
    per = np.array([s.kind == PERIMETER for s in cover.subdomains])
    if per.any():
        wall = cover.domain.distance_to_boundary(xy[:, 0], xy[:, 1])
        d[:, per] = np.minimum(d[:, per], wall[:, None])
    return d


def _owners(cover: Cover):
    xy = cover.knot_xy
    depth = subdomain_depths(cover, xy)
    hosts = np.array([k.host for k in cover.knots], dtype=int)
    depth[np.arange(len(hosts)), hosts] = -np.inf
    owner = np.argmax(depth, axis=1)
    best = depth[np.arange(len(hosts)), owner]
    return owner, best


def assign_owner(cover: Cover) -> Cover:
    """Owner = deepest subdomain (other than the host) strictly containing the knot."""
    owner, best = _owners(cover)
    for k, o, d in zip(cover.knots, owner, best):
        if k.on_boundary:
            k.owner, k.depth = None, 0.0
            continue
        if not d > 0:
            raise GeometryError(
                f"knot {k.id} at ({k.x:.6g}, {k.y:.6g}) on circle {k.host} lies in "
                "the interior of no other subdomain")
        k.owner, k.depth = int(o), float(d)
    return cover


def make_cover(domain: RectDomain, m_per_side: int, rho: float, n_per_circle: int) -> Cover:
    cover = build_cover(domain, m_per_side, rho)
    classify_and_clip(cover)
    place_knots(cover, n_per_circle)
    return assign_owner(cover)


@dataclass
class CoverReport:
    ok: bool
    message: str = "ok"
    knot: Optional[int] = None
    point: Optional[Tuple[float, float]] = None

    def __bool__(self):
        return self.ok


def validate_cover(cover: Cover, samples: int = 400) -> CoverReport:
    """Check covering, knot ownership, arcs and stencil ordering."""
    dom = cover.domain
    xs = dom.x0 + dom.width * (np.arange(samples) + 0.5) / samples
    ys = dom.y0 + dom.height * (np.arange(samples) + 0.5) / samples
    centers, radii = cover.centers, cover.radii
    tree = cKDTree(centers)
    rmax = float(radii.max())
    for y in ys:
        pts = np.column_stack([xs, np.full_like(xs, y)])
        covered = np.zeros(len(xs), dtype=bool)
        for i, cand in enumerate(tree.query_ball_point(pts, rmax)):
            if cand:
                c = np.asarray(cand)
                covered[i] = np.any(np.hypot(*(pts[i] - centers[c]).T) < radii[c])
        if not covered.all():
            i = int(np.flatnonzero(~covered)[0])
            p = (float(pts[i, 0]), float(pts[i, 1]))
            return CoverReport(False, f"uncovered sample point {p}", point=p)
    for sub in cover.subdomains:
        if sub.kind == PERIMETER and not sub.arcs:
            return CoverReport(False, f"perimeter circle {sub.id} has an empty interface")
        for (ta, tb), ids in zip(sub.arcs, sub.arc_stencils):
            th = np.array([cover.knots[k].theta for k in ids])
            if np.any(np.diff(th) <= 0):
                return CoverReport(False, f"stencil of circle {sub.id} not increasing")
            limit = ta + TWO_PI if sub.floating else tb
            if len(th) and (th[-1] > limit or (sub.floating and th[-1] >= limit)):
                return CoverReport(False, f"stencil of circle {sub.id} exceeds its arc")
    if cover.knots:
        owner, best = _owners(cover)
        for k, d in zip(cover.knots, best):
            if not k.on_boundary and not d > 0:
                return CoverReport(False, f"knot {k.id} at ({k.x:.6g}, {k.y:.6g}) has no owner",
                                   knot=k.id, point=(k.x, k.y))
    return CoverReport(True)


def write_cover_csv(cover: Cover, subdomain_path, knot_path) -> None:
    with open(subdomain_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "cx", "cy", "radius", "kind", "n_arcs", "stencil_size"])
        for s in cover.subdomains:
            w.writerow([s.id, repr(s.center[0]), repr(s.center[1]), repr(s.radius), s.kind,
                        len(s.arcs), len(s.stencil)])
    with open(knot_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "host", "theta", "on_boundary", "owner", "depth"])
        for k in cover.knots:
            w.writerow([k.id, repr(k.x), repr(k.y), k.host, repr(k.theta), int(k.on_boundary),
                        "" if k.owner is None else k.owner, repr(k.depth)])
