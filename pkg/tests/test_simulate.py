import numpy as np
import pytest
from numpy.testing import assert_allclose

from fracfit.filtering import ParamPoint, residuals
from fracfit.fraccoef import frac_coeffs
from fracfit.shortmem import arma, bloomfield, identity
from fracfit.simulate import SimSpec, draw_innovations, rng_stream, simulate


def spec_for(delta, phi=(), sm=None, **kw):
    return SimSpec(tau0=ParamPoint(delta, list(phi), sm or identity()), **kw)


def test_zero_delta_identity_returns_innovations():
    x, eps = simulate(spec_for(0.0, n=64, seed=5))
    assert np.array_equal(x, eps)


def test_unit_root_is_cumulative_sum():
    x, eps = simulate(spec_for(1.0, n=64, seed=6))
    assert_allclose(x, np.cumsum(eps), rtol=1e-12)


def test_seed_determinism_and_stream_separation():
    a1, e1 = simulate(spec_for(0.4, n=32, seed=9, replication=3))
    a2, e2 = simulate(spec_for(0.4, n=32, seed=9, replication=3))
    assert np.array_equal(a1, a2) and np.array_equal(e1, e2)
    b, _ = simulate(spec_for(0.4, n=32, seed=9, replication=4))
    c, _ = simulate(spec_for(0.4, n=32, seed=10, replication=3))
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)


@pytest.mark.parametrize(
    "delta,phi,sm",
    [
        (0.4, (), None),
        (-0.3, (0.5,), arma(1, 0)),
        (1.2, (0.5, 0.3), arma(1, 1)),
        (0.7, (0.6, -0.2), bloomfield(2)),
    ],
)
@pytest.mark.parametrize("law", ["gaussian", "student-t", "rademacher-mixture"])
def test_inversion_identity(delta, phi, sm, law):
    spec = spec_for(delta, phi, sm, n=256, seed=21, innovation=law)
    x, eps = simulate(spec)
    got = residuals(x, spec.tau0).eps
    assert_allclose(got, eps, rtol=1e-9, atol=1e-9 * np.max(np.abs(eps)))


def test_innovation_law_moments():
    gen = rng_stream(123)
    n = 200_000
    for law in ("gaussian", "student-t", "rademacher-mixture"):
        e = draw_innovations(rng_stream(123), law, n, sigma2=2.0, df=6.0)
        assert abs(np.mean(e)) < 0.02
        assert np.var(e) == pytest.approx(2.0, rel=0.03)
    del gen


def test_gaussian_sigma2_scales_exactly():
    e1 = draw_innovations(rng_stream(7), "gaussian", 16, sigma2=1.0)
    e4 = draw_innovations(rng_stream(7), "gaussian", 16, sigma2=4.0)
    assert_allclose(e4, 2.0 * e1, rtol=0, atol=0)


def test_truncated_mean_within_theory_band():
    # var(mean) = (sigma^2 / n^2) * sum_s (partial sums of the weights)^2.
    n = 20_000
    spec = spec_for(0.4, n=n, seed=77)
    x, _ = simulate(spec)
    csum = np.cumsum(frac_coeffs(0.4, n - 1).coeffs)
    sd_mean = np.sqrt(np.sum(csum**2)) / n
    assert abs(np.mean(x)) <= 3.0 * sd_mean


def test_variance_growth_for_unit_root():
    reps = 500
    checkpoints = np.array([32, 64, 96, 128])
    paths = np.empty((reps, len(checkpoints)))
    for rep in range(reps):
        x, _ = simulate(spec_for(1.0, n=128, seed=300, replication=rep))
        paths[rep] = x[checkpoints - 1]
    variances = np.var(paths, axis=0)
    slope = np.polyfit(checkpoints, variances, 1)[0]
    assert slope == pytest.approx(1.0, rel=0.15)


def test_invalid_specs_rejected():
    with pytest.raises(ValueError):
        spec_for(0.3, n=0)
    with pytest.raises(ValueError):
        spec_for(0.3, n=10, innovation="cauchy")
    with pytest.raises(ValueError):
        spec_for(0.3, n=10, innovation="student-t", df=3.0)
    with pytest.raises(ValueError):
        spec_for(0.3, n=10, sigma2=0.0)
