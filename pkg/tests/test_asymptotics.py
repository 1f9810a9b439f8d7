import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fracfit.asymptotics import info_matrix, wald_test
from fracfit.css import AdmissibleSet, estimate
from fracfit.filtering import ParamPoint
from fracfit.shortmem import arma, identity
from fracfit.simulate import SimSpec, simulate

WIDE = AdmissibleSet(-1.0, 2.0)


def closed_form_ar1(rho):
    return np.array(
        [
            [math.pi**2 / 6.0, -math.log1p(-rho) / rho],
            [-math.log1p(-rho) / rho, 1.0 / (1.0 - rho**2)],
        ]
    )


def closed_form_arma11(a, b):
    # b_j = (-a^(j-1), -(-b)^(j-1)) summed in closed form.
    return np.array(
        [
            [math.pi**2 / 6.0, -math.log1p(-a) / a, math.log1p(b) / b],
            [-math.log1p(-a) / a, 1.0 / (1.0 - a * a), 1.0 / (1.0 + a * b)],
            [math.log1p(b) / b, 1.0 / (1.0 + a * b), 1.0 / (1.0 - b * b)],
        ]
    )


def test_identity_is_scalar_pi_squared_over_six():
    im = info_matrix(identity(), [])
    assert im.A.shape == (1, 1)
    assert im.A[0, 0] == math.pi**2 / 6.0
    assert im.tail_bound == 0.0
    assert not im.singular


def test_ar1_frozen_matrix_at_m_400():
    im = info_matrix(arma(1, 0), [0.5], M=400)
    want = np.array([[1.644934, 1.386294], [1.386294, 1.333333]])
    assert_allclose(im.A, want, atol=5e-7)
    assert im.M == 400


@pytest.mark.parametrize("rho", [-0.8, -0.3, 0.3, 0.5, 0.8])
def test_ar1_closed_form(rho):
    im = info_matrix(arma(1, 0), [rho])
    assert_allclose(im.A, closed_form_ar1(rho), rtol=1e-6, atol=1e-9)
    assert im.tail_bound < 1e-8
    assert not im.singular


def test_ar1_limit_small_rho():
    im = info_matrix(arma(1, 0), [1e-8])
    want = np.array([[math.pi**2 / 6.0, 1.0], [1.0, 1.0]])
    assert_allclose(im.A, want, rtol=1e-7)


def test_arma11_closed_form():
    a, b = 0.6, 0.4
    im = info_matrix(arma(1, 1), [a, b])
    assert_allclose(im.A, closed_form_arma11(a, b), rtol=1e-8)


def test_brute_force_series_oracle():
    # Direct python summation to M = 1e5, fully independent of the
    # adaptive truncation and tail machinery.
    rho = 0.8
    M = 100_000
    b = -(rho ** np.arange(0.0, M))
    j = np.arange(1.0, M + 1.0)
    want = np.array(
        [
            [math.pi**2 / 6.0, -np.sum(b / j)],
            [-np.sum(b / j), np.sum(b * b)],
        ]
    )
    im = info_matrix(arma(1, 0), [rho])
    assert_allclose(im.A, want, rtol=1e-9)


def test_covariance_property():
    im = info_matrix(arma(1, 0), [0.5])
    assert_allclose(im.covariance @ im.A, np.eye(2), atol=1e-12)


def test_info_matrix_validation():
    with pytest.raises(ValueError):
        info_matrix(arma(1, 0), [0.5], M=0)
    with pytest.raises(ValueError):
        info_matrix(arma(1, 0), [1.2])


def test_hessian_information_invariant_to_innovation_variance():
    x, _ = simulate(SimSpec(n=512, tau0=ParamPoint(0.4, [], identity()), seed=61))
    f1 = estimate(x, identity(), WIDE)
    f2 = estimate(5.0 * x, identity(), WIDE)
    assert_allclose(f2.cov, f1.cov, rtol=1e-6)


def test_wald_trivial_at_the_estimate():
    x, _ = simulate(SimSpec(n=256, tau0=ParamPoint(0.3, [], identity()), seed=62))
    fit = estimate(x, identity(), WIDE)
    stat, dof, p = wald_test(fit, [[1.0]], [fit.tau_hat.delta])
    assert stat == 0.0 and dof == 1 and p == 1.0


def test_wald_size_at_unit_root():
    n, reps = 1024, 200
    rejections = 0
    for rep in range(reps):
        x, _ = simulate(SimSpec(n=n, tau0=ParamPoint(1.0, [], identity()), seed=63, replication=rep))
        fit = estimate(x, identity(), WIDE)
        _, _, p = wald_test(fit, [[1.0]], [1.0])
        rejections += p < 0.05
    assert 0.02 <= rejections / reps <= 0.09


def test_wald_power_against_distant_null():
    n, reps = 1024, 60
    rejections = 0
    for rep in range(reps):
        x, _ = simulate(SimSpec(n=n, tau0=ParamPoint(0.4, [], identity()), seed=64, replication=rep))
        fit = estimate(x, identity(), WIDE)
        _, _, p = wald_test(fit, [[1.0]], [0.0])
        rejections += p < 0.05
    assert rejections / reps >= 0.95


def test_wald_rejects_bad_restrictions():
    x, _ = simulate(SimSpec(n=256, tau0=ParamPoint(0.3, [0.4], arma(1, 0)), seed=65))
    fit = estimate(x, arma(1, 0), WIDE)
    with pytest.raises(ValueError, match="rank"):
        wald_test(fit, [[1.0, 0.0], [2.0, 0.0]], [0.0, 0.0])
    with pytest.raises(ValueError, match="columns"):
        wald_test(fit, [[1.0, 0.0, 0.0]], [0.0])
    with pytest.raises(ValueError, match="length"):
        wald_test(fit, [[1.0, 0.0]], [0.0, 1.0])
