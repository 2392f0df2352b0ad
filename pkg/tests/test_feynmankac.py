import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from circdd.cover import Subdomain
from circdd.errors import ConfigurationError, TrajectoryError
from circdd.feynmankac import (McConfig, _seeds, estimate_row, estimate_rows, gm_shift,
                               integrate_trajectory, mix64, simulate_exits, trajectory_seed)
from circdd.interp import FourierInterpolant
from circdd.problem import RectDomain, builtin_problem, problem_from_expressions

UNIT_DISC = Subdomain(0, (0.0, 0.0), 1.0, "floating", [(0.0, 2 * np.pi)])
BIG = RectDomain.square(10.0)


def test_config_validation():
    for bad in (dict(n_paths=0), dict(h=0.0), dict(seed=-1), dict(max_steps=0)):
        with pytest.raises(ConfigurationError):
            McConfig(**bad)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 10 ** 6), st.integers(0, 10 ** 4))
def test_kernel_seeds_match_reference(seed, knot, t):
    out = _seeds(np.uint64(seed), np.array([knot], dtype=np.int64), t + 1)
    assert int(out[t]) == trajectory_seed(seed, knot, t)


def test_mix64_is_a_bijection_sample():
    vals = {mix64(i) for i in range(10000)}
    assert len(vals) == 10000


def test_gm_shift_examples():
    p46 = builtin_problem("paper46")
    assert gm_shift(p46, (0.0, 0.0), (1.0, 0.0), 0.0) == 0.0
    assert gm_shift(p46, (0.0, 0.0), (0.6, 0.8), 0.015) == pytest.approx(
        0.5826 * math.sqrt(2 * 0.015), rel=1e-14)
    # 0.1009093..., quoted as 0.10090 (truncated to five digits)
    assert gm_shift(p46, (0.0, 0.0), (1.0, 0.0), 0.015) == pytest.approx(0.10090, abs=1e-5)
    unit = builtin_problem("disc_exit_time")
    assert gm_shift(unit, (0.3, 0.1), (0.0, 1.0), 0.01) == pytest.approx(0.05826, rel=1e-14)


def test_constant_payoff_is_exact():
    p = builtin_problem("constant")
    for path in range(20):
        ev = integrate_trajectory(p, UNIT_DISC, BIG, (0.2, -0.1), 0.01, seed=3, path=path)
        assert p.g(ev.x, ev.y) * ev.Y + ev.Z == 1.0
        assert ev.tag == "interface"
        assert math.hypot(ev.x, ev.y) == pytest.approx(1.0, abs=1e-12)


def test_discount_factor_bounds():
    p = problem_from_expressions({"a_xx": "1", "a_yy": "1", "c": "-1", "g": "0"})
    h = 0.01
    for path in range(20):
        ev = integrate_trajectory(p, UNIT_DISC, BIG, (0.0, 0.0), h, seed=5, path=path)
        assert 0 < ev.Y <= 1
        assert ev.Y == pytest.approx((1 - h) ** ev.steps, rel=1e-12)


def test_domain_boundary_exit_is_projected():
    sub = Subdomain(0, (0.0, 0.0), 1.0, "perimeter", [(0.0, 2 * np.pi)])
    dom = RectDomain(-0.3, 5.0, -5.0, 5.0)
    p = builtin_problem("disc_exit_time")
    tags = set()
    for path in range(40):
        ev = integrate_trajectory(p, sub, dom, (0.0, 0.0), 1e-3, seed=1, path=path)
        tags.add(ev.tag)
        if ev.tag == "domain_boundary":
            assert ev.x == -0.3
    assert tags == {"interface", "domain_boundary"}


def test_exit_time_oracle():
    batch = simulate_exits(builtin_problem("disc_exit_time"), UNIT_DISC, BIG, [[0.0, 0.0]], [0],
                           McConfig(n_paths=100_000, h=1e-3))
    est, se = batch.Z.mean(), batch.Z.std(ddof=1) / math.sqrt(len(batch.Z))
    assert abs(est - 0.5) <= 3 * se + 0.01


def test_stalled_trajectory_names_the_knot():
    with pytest.raises(TrajectoryError, match="knot 17"):
        simulate_exits(builtin_problem("disc_exit_time"), UNIT_DISC, BIG, [[0.0, 0.0]], [17],
                       McConfig(n_paths=4, h=1e-3, max_steps=1))


def _floating_as_perimeter(cover):
    sid = cover.floating_ids()[27]
    sub = cover.subdomains[sid]
    interps = {(sid, 0): FourierInterpolant(len(sub.stencil))}
    return sid, interps, cover.owned_knots(sid)


@pytest.mark.parametrize("n_paths", [1, 7, 200])
def test_fourier_rows_sum_to_minus_one(ref_cover, n_paths):
    sid, interps, knots = _floating_as_perimeter(ref_cover)
    for p in (builtin_problem("paper46"), builtin_problem("constant")):
        rows = estimate_rows(p, ref_cover, sid, knots[:3], interps,
                             McConfig(n_paths=n_paths, h=0.02))
        for row in rows:
            assert abs(row.coefficients.sum() + 1) <= 1e-12
            if p.name == "constant":
                # C row applied to u = 1: 1 + sum(coefficients) - rhs = 0
                assert abs(1 + row.coefficients.sum() - row.rhs) <= 1e-12


def test_rows_are_independent_of_batching(ref_cover, ref_interps):
    sid = ref_cover.perimeter_ids()[5]
    knots = ref_cover.owned_knots(sid)[:3]
    p = builtin_problem("paper46")
    mc = McConfig(n_paths=50, h=0.03, seed=99)
    together = estimate_rows(p, ref_cover, sid, knots, ref_interps, mc)
    alone = estimate_row(p, ref_cover, sid, knots[2], ref_interps, mc)
    assert np.array_equal(together[2].coefficients, alone.coefficients)
    assert together[2].rhs == alone.rhs
    other = estimate_row(p, ref_cover, sid, knots[2], ref_interps,
                         McConfig(n_paths=50, h=0.03, seed=100))
    assert other.rhs != alone.rhs


def test_perimeter_row_consistent_with_constant(ref_cover, ref_interps):
    sid = ref_cover.perimeter_ids()[5]
    knot = ref_cover.owned_knots(sid)[0]
    row = estimate_row(builtin_problem("constant"), ref_cover, sid, knot, ref_interps,
                       McConfig(n_paths=400, h=0.02))
    assert row.columns.tolist() == ref_cover.subdomains[sid].stencil
    # RBF cardinals are only approximately a partition of unity
    assert abs(1 + row.coefficients.sum() - row.rhs) <= 1e-3
    assert 0 < row.interface_fraction < 1


def test_mc_row_matches_spectral_row_cheaply(ref_cover):
    """Small-budget version of the MC/spectral equivalence oracle."""
    from circdd.localspectral import (assemble_operator, build_grid, eval_weights, factorize,
                                      solve_cardinal_bvps)
    sid, interps, knots = _floating_as_perimeter(ref_cover)
    sub = ref_cover.subdomains[sid]
    p = builtin_problem("paper46")
    grid = build_grid(sub, 44, 22)
    g = solve_cardinal_bvps(factorize(assemble_operator(grid, p), sid, grid))
    k = max(knots, key=lambda i: -ref_cover.knots[i].depth)  # shallowest: short paths
    spectral = eval_weights(grid, ref_cover.knot_xy[[k]]) @ g
    row = estimate_row(p, ref_cover, sid, k, interps, McConfig(n_paths=2000, h=4e-3))
    assert np.all(np.abs(row.coefficients - spectral[0])
                  <= 3 * row.coefficient_stderr + 0.02)
