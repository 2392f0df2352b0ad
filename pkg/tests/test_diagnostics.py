import csv
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from circdd.diagnostics import (error_geography, knot_errors, matrix_stats,
                                reconstruct_field, spectral_radius, write_errors_csv)
from circdd.errors import ConfigurationError
from circdd.problem import RectDomain, builtin_problem


def test_knot_errors_examples():
    p = builtin_problem("harmonic_xy")
    xy = np.array([[1.0, 2.0], [3.0, -1.0], [0.0, 0.0]])
    e = knot_errors([2.0, -3.0, 0.0], p, xy)
    assert e.rms == 0.0 and e.max == 0.0
    e = knot_errors([3.0, -3.0, 0.0], p, xy)
    assert np.array_equal(e.errors, [1.0, 0.0, 0.0])
    assert e.rms == pytest.approx(1 / math.sqrt(3)) and e.max == 1.0
    # constant exact solutions are broadcast to every knot
    e = knot_errors([1.5, 1.0, 1.0], builtin_problem("constant"), xy)
    assert np.array_equal(e.errors, [0.5, 0.0, 0.0])


def test_knot_errors_without_exact_solution(caplog):
    assert knot_errors([0.0], builtin_problem("disc_exit_time"), [[0.0, 0.0]]) is None
    assert "no exact solution" in caplog.text


def test_errors_csv(tmp_path):
    path = tmp_path / "errors.csv"
    write_errors_csv(path, [[0.0, 1.0], [2.0, 3.0]], np.array([1e-3, -2e-3]),
                     ["spectral", "boundary_identity"])
    rows = list(csv.DictReader(open(path)))
    assert [r["provenance"] for r in rows] == ["spectral", "boundary_identity"]
    assert float(rows[1]["error"]) == -2e-3
    write_errors_csv(path, [[0.0, 1.0]], None, ["spectral"])
    assert list(csv.DictReader(open(path)))[0]["error"] == ""


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3), min_size=2, max_size=30))
def test_spectral_radius_of_diagonal(values):
    values = np.array(values)
    mags = np.sort(np.abs(values))
    if mags[-2] > 0.9 * mags[-1]:  # keep the power iteration well separated
        return
    est = spectral_radius(sp.diags(values), iters=2000, tol=1e-12)
    assert not est.approximate
    assert abs(est.value - mags[-1]) <= 1e-6 * mags[-1]


def test_spectral_radius_nilpotent():
    shift = sp.diags([np.ones(4)], [1], shape=(5, 5))
    est = spectral_radius(shift)
    assert est.value == 0.0 and est.approximate


def test_identity_stats():
    st_ = matrix_stats(sp.identity(100, format="csr"))
    assert st_.n == 100 and st_.nnz == 100
    assert st_.sparsity_percent == 1.0
    assert st_.max_offdiagonal is None
    assert st_.rho_c_minus_i == 0.0 and st_.rho_approximate
    assert st_.condition_2 == 1.0


def test_stats_of_small_matrix():
    c = sp.csr_matrix(np.array([[1.0, -0.25, 0.0], [-0.5, 1.0, 0.2], [0.0, 0.0, 1.0]]))
    s = matrix_stats(c, power_iters=1000, tol=1e-12)
    assert s.nnz == 6 and s.sparsity_percent == pytest.approx(600 / 9)
    assert s.max_offdiagonal == 0.2
    assert s.rho_c_minus_i == pytest.approx(math.sqrt(0.125), rel=1e-6)
    assert s.condition_2 == pytest.approx(np.linalg.cond(c.toarray()))
    assert matrix_stats(c, condition=False).condition_2 is None


def test_error_geography():
    dom = RectDomain.square(50.0)
    xy = np.array([[49.0, 0.0], [0.0, -45.0], [0.0, 0.0], [10.0, 5.0], [30.0, 0.0]])
    errs = np.array([-4.0, 2.0, 1.0, -0.5, 7.0])
    near, far = error_geography(errs, xy, dom, 9.0, 27.0)
    assert near == 3.0 and far == 0.75
    near, far = error_geography(errs[:2], xy[:2], dom, 9.0, 27.0)
    assert math.isnan(far)


def test_reconstruct_harmonic_field(ref_cover):
    p = builtin_problem("harmonic_xy")
    u_hat = ref_cover.knot_xy[:, 0] * ref_cover.knot_xy[:, 1]
    sid = ref_cover.floating_ids()[0]
    sub = ref_cover.subdomains[sid]
    cx, cy = sub.center
    r = np.array([0.0, 0.3, 0.6, 0.9]) * sub.radius
    t = np.array([0.1, 1.7, 3.3, 5.0])
    pts = np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])
    vals = reconstruct_field(ref_cover, p, u_hat, sid, pts)
    assert np.abs(vals - pts[:, 0] * pts[:, 1]).max() <= 1e-7


def test_reconstruct_rejects_perimeter(ref_cover):
    sid = ref_cover.perimeter_ids()[0]
    with pytest.raises(ConfigurationError, match="perimeter"):
        reconstruct_field(ref_cover, builtin_problem("constant"),
                          np.ones(ref_cover.n_knots), sid, [[0.0, 0.0]])
