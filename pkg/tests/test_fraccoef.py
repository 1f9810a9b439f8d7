import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from fracfit.fraccoef import convolve_trunc, digamma, frac_coeffs, log_weights


def gamma_ratio(zeta, j):
    """Independent oracle: Gamma(j+zeta) / (Gamma(zeta) Gamma(j+1))."""
    return math.gamma(j + zeta) / (math.gamma(zeta) * math.gamma(j + 1))


def test_frac_coeffs_trivial_cases():
    assert_allclose(frac_coeffs(1.0, 3).coeffs, [1.0, 1.0, 1.0, 1.0], rtol=0, atol=0)
    assert_allclose(frac_coeffs(-1.0, 3).coeffs, [1.0, -1.0, 0.0, 0.0], rtol=0, atol=0)
    assert_allclose(frac_coeffs(0.0, 5).coeffs, [1.0, 0, 0, 0, 0, 0], rtol=0, atol=0)


def test_frac_coeffs_example_point_four():
    got = frac_coeffs(0.4, 3).coeffs
    assert_allclose(got, [1.0, 0.4, 0.28, 0.224], rtol=1e-15)
    want = [gamma_ratio(0.4, j) for j in range(4)]
    assert_allclose(got, want, rtol=1e-13)


@pytest.mark.parametrize("zeta", [-1.5, -0.5, 0.25, 0.49, 1.7])
def test_frac_coeffs_matches_gamma_ratio(zeta):
    got = frac_coeffs(zeta, 64).coeffs
    want = np.array([gamma_ratio(zeta, j) for j in range(65)])
    assert_allclose(got, want, rtol=1e-10)


def test_negative_integer_zeta_terminates():
    w = frac_coeffs(-3.0, 10).coeffs
    assert_allclose(w[:4], [1.0, -3.0, 3.0, -1.0], rtol=0, atol=0)
    assert np.all(w[4:] == 0.0)


def test_decay_monotone_for_zeta_below_one():
    for zeta in (-1.5, -0.3, 0.2, 0.8):
        a = np.abs(frac_coeffs(zeta, 200).coeffs)
        start = max(2, int(abs(zeta)) + 1)
        assert np.all(np.diff(a[start:]) <= 1e-16)


def test_frac_coeffs_rejects_bad_input():
    with pytest.raises(ValueError):
        frac_coeffs(float("nan"), 4)
    with pytest.raises(ValueError):
        frac_coeffs(0.3, -1)


@settings(deadline=None, max_examples=100)
@given(
    z1=st.floats(min_value=-5, max_value=5),
    z2=st.floats(min_value=-5, max_value=5),
)
def test_semigroup_property(z1, z2):
    # Error is measured against the summation scale |a| * |b| because the
    # identity cancels catastrophically for large opposite-sign exponents.
    m = 256
    a = frac_coeffs(z1, m).coeffs
    b = frac_coeffs(z2, m).coeffs
    left = convolve_trunc(a, b, m)
    right = frac_coeffs(z1 + z2, m).coeffs
    scale = np.maximum(convolve_trunc(np.abs(a), np.abs(b), m), 1.0)
    assert np.max(np.abs(left - right) / scale) < 1e-12


def test_convolve_trunc_identity_kernel():
    assert_allclose(convolve_trunc([1, 0, 0], [1, 2, 3], 2), [1, 2, 3], rtol=0, atol=0)


def test_convolve_trunc_inverse_filter():
    m = 64
    c = convolve_trunc(frac_coeffs(0.4, m), frac_coeffs(-0.4, m), m)
    want = np.zeros(m + 1)
    want[0] = 1.0
    assert_allclose(c, want, atol=1e-14)


def test_convolve_trunc_zero_pads_short_inputs():
    got = convolve_trunc([1.0, 2.0], [3.0], 4)
    assert_allclose(got, [3.0, 6.0, 0.0, 0.0, 0.0], rtol=0, atol=0)


def test_log_weights_values_and_partial_sums():
    w = log_weights(5)
    assert_allclose(w, [1, 1 / 2, 1 / 3, 1 / 4, 1 / 5], rtol=0, atol=0)
    target = math.pi**2 / 6
    for m in (10, 100, 1000):
        s = np.sum(log_weights(m) ** 2)
        assert s < target
        assert s > target - 1.0 / m


def test_digamma_frozen_values():
    # -EulerGamma and -EulerGamma - 2 log 2
    assert math.isclose(digamma(1.0), -0.5772156649015329, rel_tol=1e-12)
    assert math.isclose(digamma(0.5), -1.9635100260214235, rel_tol=1e-12)
    assert math.isclose(digamma(2.0), digamma(1.0) + 1.0, rel_tol=1e-13)


def test_digamma_against_scipy():
    from scipy.special import psi

    xs = np.concatenate(
        [
            np.linspace(0.01, 0.49, 13),
            np.linspace(0.5, 7.9, 23),
            np.linspace(8.0, 200.0, 17),
            [-0.5, -1.5, -2.3, -7.7, 0.999, 1.001],
        ]
    )
    for x in xs:
        assert math.isclose(digamma(float(x)), float(psi(x)), rel_tol=5e-12, abs_tol=1e-12)


def test_digamma_recurrence_property():
    for x in (0.1, 0.7, 1.3, 4.2, 9.9):
        assert math.isclose(digamma(x + 1.0), digamma(x) + 1.0 / x, rel_tol=1e-11)


def test_digamma_rejects_poles():
    for x in (0.0, -1.0, -5.0):
        with pytest.raises(ValueError):
            digamma(x)
    with pytest.raises(ValueError):
        digamma(float("inf"))
