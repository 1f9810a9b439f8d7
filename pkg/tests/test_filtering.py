import numpy as np
import pytest
from numpy.testing import assert_allclose

from fracfit.filtering import ParamPoint, cj_weights, log_filter, residuals, trunc_filter
from fracfit.shortmem import arma, bloomfield, identity

FD = ParamPoint(0.0, [], identity())


def point(delta, phi=(), spec=None):
    return ParamPoint(delta, list(phi), spec if spec is not None else identity())


def test_first_difference_example():
    path = residuals([1.0, 0.5], point(1.0))
    assert_allclose(path.eps, [1.0, -0.5], atol=1e-15)


def test_zero_delta_identity_is_noop():
    x = np.array([0.3, -1.2, 2.0, 0.7])
    path = residuals(x, point(0.0))
    assert_allclose(path.eps, x, atol=0)


def test_half_difference_example():
    path = residuals([1.0, 1.0, 1.0], point(0.5))
    assert_allclose(path.eps, [1.0, 0.5, 0.375], rtol=1e-14)


def test_eps_1_equals_x_1_for_any_tau():
    x = np.array([2.5, -1.0, 0.3])
    for tau in (
        point(0.7),
        point(-0.4, [0.5], arma(1, 0)),
        point(1.3, [0.4, -0.2], bloomfield(2)),
    ):
        assert residuals(x, tau).eps[0] == pytest.approx(2.5, abs=1e-14)


def test_cj_weights_examples():
    assert_allclose(cj_weights(point(0.0), 3), [1, 0, 0, 0], atol=0)
    assert_allclose(cj_weights(point(1.0), 3), [1, -1, 0, 0], atol=1e-15)
    # Brute-force convolution of (1, -0.5, 0) with (1, -0.5, -0.125).
    got = cj_weights(point(0.5, [0.5], arma(1, 0)), 2)
    want = [1.0, -0.5 - 0.5, -0.125 + 0.25]
    assert_allclose(got, want, rtol=1e-14)


def test_representation_equivalence():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(257)
    for tau in (
        point(0.4),
        point(1.2, [0.6], arma(1, 0)),
        point(-0.7, [0.5, 0.3], arma(1, 1)),
        point(0.3, [0.8, -0.4], bloomfield(2)),
    ):
        direct = residuals(x, tau).eps
        c = cj_weights(tau, len(x) - 1)
        via_weights = trunc_filter(c, x)
        assert_allclose(direct, via_weights, rtol=1e-10, atol=1e-10)


def test_reversed_filter_order_agrees():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(128)
    tau = point(0.8, [0.5, 0.3], arma(1, 1))
    from fracfit.fraccoef import frac_coeffs
    from fracfit.shortmem import expand

    exp = expand(tau.spec, tau.phi, len(x) - 1)
    a = frac_coeffs(-tau.delta, len(x) - 1).coeffs
    swapped = trunc_filter(exp.phi, trunc_filter(a, x))
    assert_allclose(residuals(x, tau).eps, swapped, rtol=1e-10, atol=1e-12)


def test_scale_equivariance():
    rng = np.random.default_rng(11)
    x = rng.standard_normal(64)
    tau = point(0.6, [0.4], arma(1, 0))
    # Power-of-two scaling commutes with every float operation: bitwise equal.
    assert np.array_equal(residuals(2.0 * x, tau).eps, 2.0 * residuals(x, tau).eps)
    # Other scales round the scaled inputs, so equality holds to rounding.
    assert_allclose(residuals(100.0 * x, tau).eps, 100.0 * residuals(x, tau).eps, rtol=1e-13)


def test_delta_derivative_recursion():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(32)
    tau = point(0.45)
    path = residuals(x, tau, derivs=1)
    n = len(x)
    manual = np.zeros(n)
    for t in range(1, n):
        js = np.arange(1, t + 1)
        manual[t] = -np.sum(path.eps[t - js] / js)
    assert_allclose(path.deps[0], manual, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize(
    "tau",
    [
        point(0.4),
        point(-0.6, [0.5], arma(1, 0)),
        point(1.1, [0.5, 0.3], arma(1, 1)),
        point(0.2, [0.6, -0.3], bloomfield(2)),
    ],
)
def test_deps_matches_finite_differences(tau):
    rng = np.random.default_rng(17)
    x = rng.standard_normal(64)
    path = residuals(x, tau, derivs=1)
    h = 1e-6
    vec = tau.as_vector()
    for i in range(tau.dim):
        up = vec.copy()
        dn = vec.copy()
        up[i] += h
        dn[i] -= h
        eps_up = residuals(x, ParamPoint(up[0], up[1:], tau.spec)).eps
        eps_dn = residuals(x, ParamPoint(dn[0], dn[1:], tau.spec)).eps
        fd = (eps_up - eps_dn) / (2 * h)
        assert_allclose(path.deps[i], fd, rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize(
    "tau",
    [
        point(0.4),
        point(0.9, [0.5, 0.3], arma(1, 1)),
        point(0.2, [0.6, -0.3], bloomfield(2)),
    ],
)
def test_d2eps_matches_finite_differences(tau):
    rng = np.random.default_rng(23)
    x = rng.standard_normal(48)
    path = residuals(x, tau, derivs=2)
    h = 1e-5
    vec = tau.as_vector()
    for l in range(tau.dim):
        up = vec.copy()
        dn = vec.copy()
        up[l] += h
        dn[l] -= h
        dep_up = residuals(x, ParamPoint(up[0], up[1:], tau.spec), derivs=1).deps
        dep_dn = residuals(x, ParamPoint(dn[0], dn[1:], tau.spec), derivs=1).deps
        fd = (dep_up - dep_dn) / (2 * h)
        for i in range(tau.dim):
            assert_allclose(path.d2eps[i, l], fd[i], rtol=5e-5, atol=5e-7)


def test_derivatives_vanish_at_t_equals_one():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(16)
    tau = point(0.7, [0.4, 0.1], arma(1, 1))
    path = residuals(x, tau, derivs=2)
    assert np.all(path.deps[:, 0] == 0)
    assert np.all(path.d2eps[:, :, 0] == 0)


def test_log_filter_short_series():
    assert_allclose(log_filter(np.array([3.0])), [0.0], atol=0)
    assert_allclose(log_filter(np.array([2.0, 4.0])), [0.0, -2.0], atol=0)


def test_input_validation():
    with pytest.raises(ValueError):
        residuals([], point(0.3))
    with pytest.raises(ValueError):
        residuals([1.0, np.nan], point(0.3))
    with pytest.raises(ValueError):
        residuals([[1.0, 2.0]], point(0.3))
    with pytest.raises(ValueError):
        ParamPoint(np.inf, [], identity())
    with pytest.raises(ValueError):
        ParamPoint(0.3, [0.5], identity())
    with pytest.raises(ValueError):
        residuals([1.0, 2.0], point(0.3, [1.5], arma(1, 0)))


def test_param_point_helpers():
    tau = point(0.3, [0.5, -0.2], arma(1, 1))
    assert tau.dim == 3
    assert_allclose(tau.as_vector(), [0.3, 0.5, -0.2])
    assert tau.labels() == ["delta", "ar1", "ma1"]
    assert point(0.1, [0.2], bloomfield(1)).labels() == ["delta", "c1"]
    assert FD.labels() == ["delta"]
