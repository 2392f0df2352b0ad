import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from circdd.cover import (Cover, arc_knot_count, assign_owner, build_cover, classify_and_clip,
                          make_cover, place_knots, subdomain_depths, validate_cover,
                          write_cover_csv)
from circdd.errors import ConfigurationError, GeometryError
from circdd.problem import RectDomain


def test_ref_lattice(ref_domain):
    cover = build_cover(ref_domain, 10, 0.9)
    assert len(cover.subdomains) == 100
    assert np.allclose(cover.radii, 9.0)
    grid = np.arange(-45, 46, 10)
    assert sorted(set(cover.centers[:, 0])) == pytest.approx(grid)
    assert sorted(set(cover.centers[:, 1])) == pytest.approx(grid)


def test_rho_below_covering_bound(ref_domain):
    with pytest.raises(ConfigurationError, match="1/sqrt"):
        build_cover(ref_domain, 10, 0.7)


def test_unit_square_lattice():
    cover = build_cover(RectDomain(0, 1, 0, 1), 2, 0.9)
    assert np.allclose(cover.radii, 0.45)
    assert sorted(map(tuple, cover.centers)) == [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25),
                                                 (0.75, 0.75)]


def test_classification(ref_cover):
    by_center = {tuple(np.round(s.center, 9)): s for s in ref_cover.subdomains}
    assert by_center[(-5.0, -5.0)].kind == "floating"
    corner = by_center[(45.0, 45.0)]
    assert corner.kind == "perimeter"
    assert len(corner.arcs) == 1
    ta, tb = corner.arcs[0]
    assert ta == pytest.approx(math.pi - math.asin(5 / 9), abs=1e-12)
    assert tb == pytest.approx(2 * math.pi - math.acos(5 / 9), abs=1e-12)
    assert len(ref_cover.floating_ids()) == 64 and len(ref_cover.perimeter_ids()) == 36


def test_circle_outside_domain_is_rejected(ref_domain):
    cover = Cover.from_circles(ref_domain, [(0.0, 0.0)], 90.0)
    with pytest.raises(GeometryError, match="empty interface"):
        classify_and_clip(cover)


def test_knot_placement(ref_cover):
    sub = ref_cover.subdomains[ref_cover.floating_ids()[0]]
    th = np.array([ref_cover.knots[k].theta for k in sub.stencil])
    assert len(th) == 44
    assert np.allclose(th, 2 * np.pi * np.arange(44) / 44)
    assert arc_knot_count(math.pi, 44) == 23
    assert arc_knot_count(0.01, 44) == 5
    for sid in ref_cover.perimeter_ids():
        for ids in ref_cover.subdomains[sid].arc_stencils:
            flags = [ref_cover.knots[k].on_boundary for k in ids]
            assert flags[0] and flags[-1] and not any(flags[1:-1])


def test_owner_depth_example():
    cover = Cover.from_circles(RectDomain.square(100), [(0.0, 0.0), (10.0, 0.0)], 9.0)
    d = subdomain_depths(cover, np.array([[9.0, 0.0]]))
    assert d[0, 1] == pytest.approx(8.0)
    classify_and_clip(cover)
    place_knots(cover, 4)
    # knots such as (-9, 0) on circle 0 are interior to no other circle
    with pytest.raises(GeometryError, match="on circle 0 lies in the interior of no other"):
        assign_owner(cover)


def test_owner_is_deepest_containing_circle(ref_cover):
    depth = subdomain_depths(ref_cover, ref_cover.knot_xy)
    for k in ref_cover.knots:
        if k.on_boundary:
            assert k.owner is None
            continue
        assert k.owner != k.host and k.depth > 0
        d = depth[k.id].copy()
        d[k.host] = -np.inf
        assert k.depth == pytest.approx(d.max())
        assert k.owner == int(np.argmax(d))


def test_inner_circle_knots_have_floating_owners(ref_cover):
    # circles none of whose lattice neighbours is a perimeter circle
    floating = set(ref_cover.floating_ids())
    centers = ref_cover.centers
    inner = [s.id for s in ref_cover.subdomains if s.id in floating and all(
        j in floating for j in range(len(centers))
        if 0 < np.hypot(*(centers[j] - centers[s.id])) < 2 * s.radius)]
    assert inner
    for k in ref_cover.knots:
        if k.host in inner:
            assert ref_cover.subdomains[k.owner].floating


def test_ref_cover_counts(ref_cover):
    n = ref_cover.n_knots
    assert 3000 <= n <= 4600
    assert n == 3888  # frozen: 64*44 floating knots + 1072 arc knots
    assert sum(k.on_boundary for k in ref_cover.knots) == 72


def test_validate(ref_cover, ref_domain):
    assert validate_cover(ref_cover)
    holes = Cover.from_circles(ref_domain, ref_cover.centers[1:], 9.0)
    report = validate_cover(holes, samples=100)
    assert not report and "uncovered" in report.message


def test_weak_overlap_reports_instead_of_raising(ref_domain):
    cover = build_cover(ref_domain, 10, 0.75)
    classify_and_clip(cover)
    place_knots(cover, 44)
    report = validate_cover(cover, samples=100)
    assert isinstance(report.ok, bool)
    if not report:
        assert report.knot is not None or report.point is not None


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 6), st.floats(0.72, 0.98), st.floats(5.0, 60.0))
def test_lattice_covers_and_orders(m, rho, half):
    cover = make_cover(RectDomain.square(half), m, rho, 16)
    report = validate_cover(cover, samples=60)
    assert report, report.message
    for sub in cover.subdomains:
        if sub.floating:
            assert len(sub.stencil) == 16


def test_csv_export(ref_cover, tmp_path):
    write_cover_csv(ref_cover, tmp_path / "subs.csv", tmp_path / "knots.csv")
    lines = (tmp_path / "knots.csv").read_text().splitlines()
    assert len(lines) == ref_cover.n_knots + 1
