import numpy as np
import pytest

from hapsim.numerics import (
    NotPositiveDefiniteError,
    PLACEMENT,
    SHADOWING,
    crandn,
    dbm_to_watts,
    hermitian_solve,
    noise_power,
    stream_rng,
    watts_to_dbm,
)


def test_dbm_anchor_points():
    assert dbm_to_watts(30.0) == pytest.approx(1.0, abs=0)
    assert dbm_to_watts(0.0) == pytest.approx(1e-3, rel=1e-14)
    assert dbm_to_watts(32.0) == pytest.approx(1.58489, abs=1e-5)


def test_dbm_rejects_non_finite():
    with pytest.raises(ValueError):
        dbm_to_watts(float("nan"))


def test_noise_power_table_values():
    assert noise_power(-169.0, 10e6) == pytest.approx(1.2589e-13, abs=1e-17)
    assert noise_power(-169.0, 1.0) == pytest.approx(1.2589e-19, rel=1e-4)


def test_noise_power_bandwidth_ratio():
    # halving the bandwidth scales the noise power by exactly the ratio
    full = noise_power(-169.0, 10e6)
    part = noise_power(-169.0, 10e6 / 8)
    assert full == pytest.approx(8 * part, rel=1e-12)


def test_noise_power_rejects_bad_bandwidth():
    with pytest.raises(ValueError):
        noise_power(-169.0, 0.0)


def test_conversion_round_trip():
    for p in [1e-9, 1e-3, 1.0, 1.58489, 2500.0]:
        assert dbm_to_watts(watts_to_dbm(p)) == pytest.approx(p, rel=1e-12)


def test_stream_reproducibility_bitwise():
    a = stream_rng(123, PLACEMENT, 7).standard_normal(64)
    b = stream_rng(123, PLACEMENT, 7).standard_normal(64)
    assert np.array_equal(a, b)


def test_streams_are_independent():
    a = stream_rng(123, PLACEMENT).standard_normal(64)
    b = stream_rng(123, SHADOWING).standard_normal(64)
    assert not np.allclose(a, b)


def test_crandn_moments():
    rng = stream_rng(5, 0)
    x = crandn(rng, 200000, var=3.0)
    assert np.mean(np.abs(x) ** 2) == pytest.approx(3.0, rel=0.02)
    assert abs(np.mean(x)) < 0.02


def test_hermitian_solve_identity():
    b = np.array([1.0, 1.0j])
    x = hermitian_solve(np.eye(2), b)
    assert np.allclose(x, b)


def test_hermitian_solve_scalar_matrix():
    x = hermitian_solve(2.0 * np.eye(3), np.ones(3))
    assert np.allclose(x, 0.5 * np.ones(3))


def test_hermitian_solve_random_pd_residual():
    rng = stream_rng(7, 0)
    g = crandn(rng, 4, 4)
    a = g @ g.conj().T + 4 * np.eye(4)
    b = crandn(rng, 4)
    x = hermitian_solve(a, b)
    assert np.linalg.norm(a @ x - b) <= 1e-8 * np.linalg.norm(b)


def test_hermitian_solve_rejects_non_pd():
    with pytest.raises(NotPositiveDefiniteError):
        hermitian_solve(-np.eye(3), np.ones(3))


def test_hermitian_solve_rejects_asymmetric():
    a = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(NotPositiveDefiniteError):
        hermitian_solve(a, np.ones(2))


def test_hermitian_solve_rejects_non_square():
    with pytest.raises(ValueError):
        hermitian_solve(np.ones((2, 3)), np.ones(2))
