import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import ndtri
from scipy.stats import multivariate_normal

from macran.analytics import PowerPair, capacity, dispersion_matrix, dispersions
from macran.mac_regions import (
    boundary_rate_pair,
    compare_regions,
    default_split_grid,
    jnn_unified_point,
    mac_jnn_curve,
    mac_jnn_region,
    mac_sic_region,
    sic_exact_min_l2,
)
from macran.mvnormal import mvn_lower_prob, q_inv

PP = PowerPair(5.0, 2.0)
FIG_EPS = 0.2
FIG_XI = 3.0


# ---------------------------------------------------------------------------
# first-order boundary rate pairs
# ---------------------------------------------------------------------------


def test_rate_pair_case_ii_is_corner_point():
    rp = boundary_rate_pair("ii", PP)
    assert rp.r1_star == pytest.approx(capacity(5.0 / 3.0))
    assert rp.r2_star == pytest.approx(capacity(2.0))
    # corner sits on both the sum constraint and the user-2 constraint
    assert rp.r1_star + rp.r2_star == pytest.approx(capacity(7.0), abs=1e-12)


@pytest.mark.parametrize("case,alpha", [("i", 0.3), ("ii", None), ("iii", 0.5), ("iv", None), ("v", 0.7)])
def test_rate_pairs_respect_first_order_constraints(case, alpha):
    rp = boundary_rate_pair(case, PP, alpha=alpha)
    c1, c2, c12 = capacity(5.0), capacity(2.0), capacity(7.0)
    assert rp.r1_star <= c1 + 1e-12
    assert rp.r2_star <= c2 + 1e-12
    assert rp.r1_star + rp.r2_star <= c12 + 1e-12


def test_time_sharing_cases_need_alpha():
    for case in ("i", "iii", "v"):
        with pytest.raises(ValueError, match="alpha"):
            boundary_rate_pair(case, PP)
        with pytest.raises(ValueError, match="alpha"):
            mac_jnn_region(case, PP, FIG_XI, FIG_EPS, alpha=1.0)


# ---------------------------------------------------------------------------
# JNN regions
# ---------------------------------------------------------------------------


def test_jnn_case_i_halfspace_threshold():
    region = mac_jnn_region("i", PP, FIG_XI, FIG_EPS, alpha=0.5)
    assert region.threshold == pytest.approx(
        math.sqrt(4.0 / 9.0) * 0.8416212335729143, abs=1e-9
    )
    assert region.threshold == pytest.approx(0.56108, abs=1e-5)
    # L1 is unconstrained
    assert region.min_l2(-100.0) == region.min_l2(100.0) == region.threshold
    assert region.contains(-50.0, 0.6)


def test_jnn_case_iii_sum_halfspace():
    region = mac_jnn_region("iii", PP, FIG_XI, FIG_EPS, alpha=0.5)
    expected = math.sqrt(dispersions(PP, FIG_XI).v_sum) * q_inv(FIG_EPS)
    assert region.threshold == pytest.approx(expected, abs=1e-12)
    assert region.min_l2(0.3) == pytest.approx(expected - 0.3)


def test_jnn_case_v_halfspace_on_l1():
    region = mac_jnn_region("v", PP, FIG_XI, FIG_EPS, alpha=0.5)
    thr = math.sqrt(dispersions(PP, FIG_XI).v_p1) * q_inv(FIG_EPS)
    assert region.min_l2(thr + 0.1) == -math.inf
    assert math.isnan(region.min_l2(thr - 0.1))


def test_jnn_case_ii_large_l1_approaches_case_i_threshold():
    region = mac_jnn_region("ii", PP, FIG_XI, FIG_EPS)
    assert region.min_l2(50.0) == pytest.approx(0.56108, abs=1e-3)


def test_jnn_case_ii_boundary_reevaluates_to_target():
    region = mac_jnn_region("ii", PP, FIG_XI, FIG_EPS)
    v1 = dispersion_matrix("V1", PP, FIG_XI)
    for l1 in (0.6, 1.0, 1.5):
        l2 = region.min_l2(l1)
        prob = mvn_lower_prob((l2, l1 + l2), v1, 1e-8)
        assert abs(prob - (1.0 - FIG_EPS)) <= 1e-5


def test_jnn_case_ii_min_l2_matches_scipy_root_oracle():
    v1 = dispersion_matrix("V1", PP, FIG_XI).entries
    mvn = multivariate_normal(mean=np.zeros(2), cov=v1)
    region = mac_jnn_region("ii", PP, FIG_XI, FIG_EPS)
    for l1 in (0.7, 1.2):
        oracle = brentq(
            lambda l2: mvn.cdf(np.array([l2, l1 + l2])) - 0.8, -5.0, 5.0, xtol=1e-10
        )
        assert region.min_l2(l1) == pytest.approx(oracle, abs=1e-5)


def test_jnn_curve_mapping_consistent_with_min_l2():
    region = mac_jnn_region("ii", PP, FIG_XI, FIG_EPS)
    pts = mac_jnn_curve(region, np.linspace(0.6, 1.1, 5))
    for l1, l2 in pts:
        assert region.min_l2(l1) == pytest.approx(l2, abs=1e-5)


def test_jnn_case_symmetry_ii_vs_iv():
    swapped = PowerPair(PP.p2, PP.p1)
    r_ii = mac_jnn_region("ii", PP, FIG_XI, FIG_EPS)
    r_iv = mac_jnn_region("iv", swapped, FIG_XI, FIG_EPS)
    for l1 in (0.7, 1.0, 1.4):
        l2 = r_ii.min_l2(l1)
        assert r_iv.min_l2(l2) == pytest.approx(l1, abs=1e-5)


def test_jnn_case_ii_nested_in_case_iii():
    r_ii = mac_jnn_region("ii", PP, FIG_XI, FIG_EPS)
    r_iii = mac_jnn_region("iii", PP, FIG_XI, FIG_EPS, alpha=0.5)
    for l1 in np.linspace(0.2, 2.0, 10):
        assert r_ii.min_l2(float(l1)) >= r_iii.min_l2(float(l1)) - 1e-9


def test_region_upward_closed():
    region = mac_jnn_region("ii", PP, FIG_XI, FIG_EPS)
    l1, l2 = 0.9, region.min_l2(0.9)
    assert region.contains(l1, l2 + 1e-4)
    assert region.contains(l1 + 0.5, l2 + 0.3)
    assert not region.contains(l1, l2 - 1e-3)


# ---------------------------------------------------------------------------
# SIC regions
# ---------------------------------------------------------------------------


def test_sic_case_ii_equal_split_corner():
    region = mac_sic_region("ii", PP, FIG_XI, FIG_EPS, split_grid=[0.1])
    (c1, c2), = region.corners
    d = dispersions(PP, FIG_XI)
    assert c1 == pytest.approx(math.sqrt(d.v_1) * 1.2815515655446004, abs=1e-9)
    assert c2 == pytest.approx(math.sqrt(4.0 / 9.0) * 1.2815515655446004, abs=1e-9)
    assert c2 == pytest.approx(0.85437, abs=1e-5)


def test_sic_one_sided_split_limit():
    # eps1 -> eps leaves the L1 threshold at its smallest possible value
    region = mac_sic_region("ii", PP, FIG_XI, FIG_EPS, split_grid=[FIG_EPS - 1e-9])
    (c1, _), = region.corners
    d = dispersions(PP, FIG_XI)
    assert c1 == pytest.approx(math.sqrt(d.v_1) * q_inv(FIG_EPS), abs=1e-6)


def test_sic_case_i_threshold_linear_in_alpha():
    grid = [0.05]
    c_half = mac_sic_region("i", PP, FIG_XI, FIG_EPS, alpha=0.5, split_grid=grid).corners[0][0]
    c_quarter = mac_sic_region("i", PP, FIG_XI, FIG_EPS, alpha=0.25, split_grid=grid).corners[0][0]
    assert c_half == pytest.approx(2.0 * c_quarter, rel=1e-12)


def test_sic_staircase_monotone_and_min_l2():
    region = mac_sic_region("ii", PP, FIG_XI, FIG_EPS)
    c1s = [c[0] for c in region.corners]
    c2s = [c[1] for c in region.corners]
    assert all(b > a for a, b in zip(c1s, c1s[1:]))
    assert all(b < a for a, b in zip(c2s, c2s[1:]))
    # below every corner: unattainable
    assert math.isnan(region.min_l2(c1s[0] - 1e-6))
    # staircase min never beats the exact envelope
    for l1 in np.linspace(c1s[0] + 1e-3, c1s[-1], 25):
        exact = sic_exact_min_l2("ii", PP, FIG_XI, FIG_EPS, float(l1))
        assert region.min_l2(float(l1)) >= exact - 1e-12
        assert region.min_l2(float(l1)) <= exact + 0.05  # dense default grid is close


def test_sic_split_grid_validation():
    with pytest.raises(ValueError, match="at least one"):
        mac_sic_region("ii", PP, FIG_XI, FIG_EPS, split_grid=[])
    with pytest.raises(ValueError, match="strictly inside"):
        mac_sic_region("ii", PP, FIG_XI, FIG_EPS, split_grid=[FIG_EPS])


def test_default_split_grid_covers_degenerate_ends():
    grid = default_split_grid(FIG_EPS)
    assert grid.min() == pytest.approx(1e-6)
    assert grid.max() == pytest.approx(FIG_EPS - 1e-6)
    assert ((grid > 0) & (grid < FIG_EPS)).all()


# ---------------------------------------------------------------------------
# comparisons
# ---------------------------------------------------------------------------


def test_compare_case_i_gap_formula():
    jnn = mac_jnn_region("i", PP, FIG_XI, FIG_EPS, alpha=0.5)
    eps1 = 0.08
    sic = mac_sic_region("i", PP, FIG_XI, FIG_EPS, alpha=0.5, split_grid=[eps1])
    c1 = sic.corners[0][0]
    rows = compare_regions(jnn, sic, [c1 + 0.01])
    _, l2_jnn, l2_sic, gap = rows[0]
    expected = math.sqrt(4.0 / 9.0) * (q_inv(FIG_EPS - eps1) - q_inv(FIG_EPS))
    assert gap == pytest.approx(expected, abs=1e-9)
    assert gap >= 0.0


def test_compare_passes_unattainable_through_as_nan():
    jnn = mac_jnn_region("ii", PP, FIG_XI, FIG_EPS)
    sic = mac_sic_region("ii", PP, FIG_XI, FIG_EPS)
    rows = compare_regions(jnn, sic, [0.0])
    assert math.isnan(rows[0][2]) and math.isnan(rows[0][3])
    assert not math.isnan(rows[0][1])


def test_compare_rejects_mismatched_regions():
    jnn = mac_jnn_region("ii", PP, FIG_XI, FIG_EPS)
    sic = mac_sic_region("ii", PP, FIG_XI, 0.1)
    with pytest.raises(ValueError, match="share"):
        compare_regions(jnn, sic, [1.0])
    with pytest.raises(ValueError, match="expects"):
        compare_regions(sic, jnn, [1.0])


def test_sic_region_inside_jnn_region_case_ii():
    jnn = mac_jnn_region("ii", PP, FIG_XI, FIG_EPS)
    sic = mac_sic_region("ii", PP, FIG_XI, FIG_EPS)
    lo = sic.corners[0][0] + 1e-3
    for _, _, _, gap in compare_regions(jnn, sic, np.linspace(lo, 2.0, 20)):
        assert gap >= -1e-9


# ---------------------------------------------------------------------------
# unified vector form
# ---------------------------------------------------------------------------


def test_unified_no_backoff_point_outside_for_small_eps():
    up = jnn_unified_point(300, PP, FIG_XI, FIG_EPS)
    c1, c2, _ = up.cap_vec
    assert not up.contains(300 * c1, 300 * c2)


def test_unified_marginal_backoffs_vanish_at_half():
    up = jnn_unified_point(250, PP, FIG_XI, 0.5)
    np.testing.assert_allclose(up.marginal_backoffs(), 0.0, atol=1e-12)


def test_unified_deep_interior_point_is_member():
    up = jnn_unified_point(300, PP, FIG_XI, FIG_EPS)
    s = up.symmetric_boundary_log_m()
    assert up.contains(s - 5.0, s - 5.0)
    assert not up.contains(s + 5.0, s + 5.0)


def test_unified_symmetric_boundary_matches_scipy_oracle():
    n, eps = 400, 0.1
    pp = PowerPair(1.0, 1.0)
    up = jnn_unified_point(n, pp, 3.0, eps)
    got = up.symmetric_boundary_log_m()

    cov = dispersion_matrix("Vfull", pp, 3.0).entries
    mvn = multivariate_normal(mean=np.zeros(3), cov=cov)
    cvec = np.array(up.cap_vec)

    def member_prob(s):
        a = (n * cvec - np.array([s, s, 2 * s])) / math.sqrt(n)
        return float(mvn.cdf(a))

    oracle = brentq(lambda s: member_prob(s) - (1 - eps), 0.0, n * cvec[0], xtol=1e-8)
    assert got == pytest.approx(oracle, abs=2e-4)


def test_unified_sum_face_dominates_at_symmetric_rates():
    # equal powers put the symmetric point on the sum face; the sum back-off
    # then tracks the scalar quantile of the sum dispersion closely
    n, eps = 400, 0.1
    pp = PowerPair(1.0, 1.0)
    up = jnn_unified_point(n, pp, 3.0, eps)
    s = up.symmetric_boundary_log_m()
    sum_backoff = n * up.cap_vec[2] - 2 * s
    marginal = math.sqrt(n * 5.0 / 9.0) * q_inv(eps)
    assert sum_backoff >= marginal - 1e-6  # joint constraint can only demand more
    assert sum_backoff == pytest.approx(marginal, abs=0.05)


def test_unified_offset_shifts_boundary():
    up0 = jnn_unified_point(200, PP, FIG_XI, FIG_EPS, offset=0.0)
    up1 = jnn_unified_point(200, PP, FIG_XI, FIG_EPS, offset=10.0)
    s0 = up0.symmetric_boundary_log_m()
    s1 = up1.symmetric_boundary_log_m()
    assert s1 == pytest.approx(s0 + 5.0, abs=1e-3)  # sum coordinate absorbs offset/2 each


def test_unified_validation():
    with pytest.raises(ValueError, match="n must"):
        jnn_unified_point(0, PP, FIG_XI, FIG_EPS)
