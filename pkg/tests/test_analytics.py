import math

import numpy as np
import pytest

from macran.analytics import (
    PowerPair,
    a_vector_cov,
    capacity,
    capacity_vector,
    dispersion_matrix,
    dispersion_v,
    dispersions,
    empirical_a_covariance,
    jacobian_identity_error,
    jnn_jacobian,
    rac_dispersions,
    verify_jacobian_identity,
)
from macran.noise import make_noise

XI_GRID = (1.0, 1.8, 3.0, 6.0)


def test_capacity_values():
    assert capacity(1.0) == pytest.approx(0.5 * math.log(2.0), abs=1e-15)
    assert capacity(3.0) == pytest.approx(0.5 * math.log(4.0), abs=1e-15)
    assert capacity(1e-12) == pytest.approx(0.0, abs=1e-12)  # vanishing-power limit


def test_capacity_rejects_nonpositive():
    for bad in (0.0, -1.0, math.nan):
        with pytest.raises(ValueError):
            capacity(bad)


def test_capacity_vector_values():
    assert capacity_vector(PowerPair(1, 1)) == pytest.approx(
        (0.34657359027997264, 0.34657359027997264, 0.5493061443340548), abs=1e-14
    )
    assert capacity_vector(PowerPair(5, 2)) == pytest.approx(
        (0.8958797346140275, 0.5493061443340548, 1.0397207708399179), abs=1e-14
    )


def test_capacity_vector_small_second_user():
    c1, c2, c12 = capacity_vector(PowerPair(2.0, 1e-13))
    assert c2 == pytest.approx(0.0, abs=1e-13)
    assert c12 == pytest.approx(c1, abs=1e-12)


def test_dispersions_hand_values_equal_powers():
    d = dispersions(PowerPair(1, 1), 3.0)
    assert d.v_p1 == pytest.approx(0.375, abs=1e-15)
    assert d.v_12cross == pytest.approx(0.125, abs=1e-15)
    assert d.v_1_12 == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert d.v_sum == pytest.approx(5.0 / 9.0, abs=1e-15)
    assert d.v_1 == pytest.approx(38.0 / 144.0, abs=1e-15)


def test_dispersions_hand_values_asymmetric():
    d = dispersions(PowerPair(5, 2), 3.0)
    assert d.v_p2 == pytest.approx(4.0 / 9.0, abs=1e-15)
    assert d.v_2_12 == pytest.approx(0.375, abs=1e-15)
    assert d.v_sum == pytest.approx(126.0 / 256.0 + 10.0 / 64.0, abs=1e-15)


def test_cross_term_vanishes_at_minimal_kurtosis():
    for pp in (PowerPair(1, 1), PowerPair(5, 2), PowerPair(0.3, 7.0)):
        assert dispersions(pp, 1.0).v_12cross == 0.0


def test_kurtosis_below_one_rejected():
    with pytest.raises(ValueError, match="xi"):
        dispersions(PowerPair(1, 1), 0.9)


def test_power_pair_validation():
    for bad in ((0, 1), (1, -2), (math.inf, 1)):
        with pytest.raises(ValueError):
            PowerPair(*bad)


def test_awgn_dispersion_closed_form():
    # at xi = 3 the single-user dispersion collapses to P(P+2)/(2(1+P)^2)
    for p in np.geomspace(1e-3, 1e3, 25):
        expected = p * (p + 2.0) / (2.0 * (1.0 + p) ** 2)
        assert dispersion_v(float(p), 3.0) == pytest.approx(expected, rel=1e-14)


def test_rac_dispersions_hand_values():
    v_kp, v_cr, v_rs = rac_dispersions(2, 1, 1.0, 3.0)
    assert v_kp == pytest.approx(4.0 / 9.0, abs=1e-15)
    assert v_cr == pytest.approx(1.0 / 9.0, abs=1e-15)
    assert v_rs == pytest.approx(38.0 / 144.0, abs=1e-15)


def test_rac_cross_term_zero_for_single_user():
    for p in (0.1, 1.0, 7.0):
        _, v_cr, _ = rac_dispersions(1, 1, p, 3.0)
        assert v_cr == 0.0


def test_rac_dispersions_validation():
    with pytest.raises(ValueError, match="r must"):
        rac_dispersions(2, 3, 1.0, 3.0)
    with pytest.raises(ValueError, match="k must"):
        rac_dispersions(0, 0, 1.0, 3.0)


@pytest.mark.parametrize("xi", XI_GRID)
def test_residual_dispersion_reduces_to_single_user(xi):
    for p in np.geomspace(1e-2, 1e2, 100):
        for k in (1, 2, 5, 11):
            _, _, v_rs = rac_dispersions(k, k, float(p), xi)
            assert abs(v_rs - dispersion_v(float(p), xi)) <= 1e-12


@pytest.mark.parametrize("xi", XI_GRID)
def test_residual_dispersion_two_users_matches_matrix_entry(xi):
    for p in np.geomspace(1e-2, 1e2, 100):
        _, _, v_rs = rac_dispersions(2, 1, float(p), xi)
        d = dispersions(PowerPair(float(p), float(p)), xi)
        assert abs(v_rs - d.v_1) <= 1e-12


def test_dispersion_matrix_full_entries():
    m = dispersion_matrix("Vfull", PowerPair(1, 1), 3.0).entries
    np.testing.assert_allclose(np.diag(m), [0.375, 0.375, 5.0 / 9.0], atol=1e-15)
    assert m[0, 1] == pytest.approx(0.125, abs=1e-15)
    assert m[0, 2] == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert m[1, 2] == pytest.approx(1.0 / 3.0, abs=1e-15)


def test_dispersion_matrix_v1_entries():
    m = dispersion_matrix("V1", PowerPair(5, 2), 3.0).entries
    np.testing.assert_allclose(
        m, [[4.0 / 9.0, 0.375], [0.375, 0.6484375]], atol=1e-15
    )


def test_dispersion_matrix_unknown_name():
    with pytest.raises(ValueError, match="which"):
        dispersion_matrix("V3", PowerPair(1, 1), 3.0)


@pytest.mark.parametrize("xi", XI_GRID)
def test_dispersion_matrices_psd_over_power_grid(xi):
    grid = np.geomspace(1e-2, 1e2, 7)
    for p1 in grid:
        for p2 in grid:
            for which in ("V1", "V2", "Vfull"):
                m = dispersion_matrix(which, PowerPair(float(p1), float(p2)), xi)
                assert np.linalg.eigvalsh(m.entries).min() >= -1e-10


def test_jacobian_shape_and_null_columns():
    j = jnn_jacobian(PowerPair(5, 2))
    assert j.shape == (3, 6)
    # the squared-surrogate statistics carry no first-order weight
    np.testing.assert_array_equal(j[:, 2], 0.0)
    np.testing.assert_array_equal(j[:, 4], 0.0)


def test_covariance_identity_exact():
    rng = np.random.default_rng(7)
    for _ in range(20):
        p1, p2 = rng.uniform(0.1, 50.0, size=2)
        for xi in XI_GRID:
            assert jacobian_identity_error(PowerPair(p1, p2), xi) <= 1e-12


def test_covariance_diagonal_values():
    np.testing.assert_allclose(
        np.diag(a_vector_cov(PowerPair(5, 2), 3.0)), [2.0, 5.0, 2.0, 2.0, 2.0, 10.0]
    )


def test_empirical_covariance_within_five_standard_errors():
    pp = PowerPair(5, 2)
    cov, se = empirical_a_covariance(pp, make_noise("gaussian"), 200_000, seed=0)
    dev = np.abs(cov - a_vector_cov(pp, 3.0))
    assert (dev <= 5.0 * se).all()


def test_verify_jacobian_identity_runs_both_checks():
    err = verify_jacobian_identity(PowerPair(5, 2), 3.0, n_mc=100_000, seed=1)
    assert err <= 1e-12


def test_verify_jacobian_identity_rejects_mismatched_noise():
    with pytest.raises(ValueError, match="fourth moment"):
        verify_jacobian_identity(
            PowerPair(1, 1), 3.0, n_mc=1000, noise=make_noise("uniform")
        )


def test_verify_jacobian_identity_non_gaussian_noise():
    nm = make_noise("uniform")
    err = verify_jacobian_identity(PowerPair(2, 3), nm.xi, n_mc=100_000, seed=2, noise=nm)
    assert err <= 1e-12
