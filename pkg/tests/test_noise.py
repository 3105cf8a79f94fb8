import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokpp.errors import ConfigurationError, KernelNotRepresentableError, MisuseError
from stokpp.grid import GridSpec
from stokpp.noise import (
    CovarianceKernel,
    FieldNoiseSampler,
    NoiseModel,
    field_increments,
    kernel_eval,
    scalar_increments,
)


def model(kernel, seed=42, stream=0, interpretation="ito"):
    return NoiseModel(kernel=kernel, interpretation=interpretation, seed=seed,
                      stream_id=stream)


class TestKernelEval:
    def test_constant(self):
        k = CovarianceKernel.constant(1.0)
        assert kernel_eval(k, 0.0) == 1.0
        assert kernel_eval(k, 123.4) == 1.0

    def test_squared_exponential_values(self):
        k = CovarianceKernel.squared_exponential(1.0, 2.0)
        assert kernel_eval(k, 0.0) == 1.0
        assert kernel_eval(k, 2.0) == pytest.approx(math.exp(-0.5), rel=1e-12)

    def test_tabulated_interpolation_and_cutoff(self):
        k = CovarianceKernel.tabulated([0.0, 1.0, 2.0], [1.0, 0.5, 0.0])
        assert kernel_eval(k, 0.5) == pytest.approx(0.75)
        assert kernel_eval(k, 3.0) == 0.0
        assert kernel_eval(k, -0.5) == kernel_eval(k, 0.5)

    def test_tabulated_csv_roundtrip(self, tmp_path):
        path = tmp_path / "kern.csv"
        path.write_text("lag,gamma\n0.0,2.0\n1.0,1.0\n2.0,0.1\n")
        k = CovarianceKernel.from_csv(path)
        assert k.sigma2 == 2.0
        assert kernel_eval(k, 1.5) == pytest.approx(0.55)

    def test_bad_table_rejected(self):
        with pytest.raises(ConfigurationError):
            CovarianceKernel.tabulated([1.0, 2.0], [1.0, 0.5])  # must start at 0
        with pytest.raises(ConfigurationError):
            CovarianceKernel.tabulated([0.0, 0.0], [1.0, 1.0])

    @given(x=st.floats(min_value=-50, max_value=50, allow_nan=False))
    @settings(max_examples=50, deadline=None)
    def test_symmetry_exact(self, x):
        k = CovarianceKernel.squared_exponential(0.7, 1.3)
        assert kernel_eval(k, x) == kernel_eval(k, -x)


class TestScalarIncrements:
    def test_zero_steps(self):
        out = scalar_increments(model(CovarianceKernel.constant(1.0)), 0.01, 0)
        assert out.shape == (0,)

    def test_degenerate_kernel(self):
        out = scalar_increments(model(CovarianceKernel.constant(0.0)), 0.01, 100)
        assert np.all(out == 0.0)

    def test_variance_band(self):
        # chi-square 3-sigma band for the variance of 1e6 draws: 0.01*(1 +- 0.0042)
        out = scalar_increments(model(CovarianceKernel.constant(1.0)), 0.01, 10**6)
        var = out.var()
        assert 0.01 * (1 - 0.005) < var < 0.01 * (1 + 0.005)

    def test_requires_constant_kernel(self):
        k = CovarianceKernel.squared_exponential(1.0, 1.0)
        with pytest.raises(MisuseError):
            scalar_increments(model(k), 0.01, 10)

    def test_reproducible(self):
        m = model(CovarianceKernel.constant(1.0), seed=7, stream=3)
        a = scalar_increments(m, 0.02, 50)
        b = scalar_increments(m, 0.02, 50)
        assert np.array_equal(a, b)

    def test_stream_independence(self):
        m = model(CovarianceKernel.constant(1.0), seed=7)
        a = scalar_increments(m.with_stream(0), 0.01, 10**5)
        b = scalar_increments(m.with_stream(1), 0.01, 10**5)
        rho = np.corrcoef(a, b)[0, 1]
        assert abs(rho) < 3.0 / math.sqrt(10**5)


class TestFieldIncrements:
    def test_constant_kernel_rank_one(self):
        g = GridSpec(x0=0.0, dx=0.1, n=64)
        out = field_increments(model(CovarianceKernel.constant(1.0)), g, 0.01)
        assert np.all(out == out[0])
        assert out[0] != 0.0

    def test_constant_kernel_matches_scalar_stream(self):
        g = GridSpec(x0=0.0, dx=0.1, n=16)
        m = model(CovarianceKernel.constant(1.0), seed=5)
        sampler = FieldNoiseSampler(m, g, 0.01)
        drawn = np.array([sampler.sample()[0] for _ in range(20)])
        assert np.array_equal(drawn, scalar_increments(m, 0.01, 20))

    def test_reproducible_bitwise(self):
        g = GridSpec(x0=0.0, dx=0.05, n=101)
        m = model(CovarianceKernel.squared_exponential(1.0, 2.0), seed=9, stream=4)
        assert np.array_equal(field_increments(m, g, 0.01), field_increments(m, g, 0.01))

    def test_covariance_at_lags(self):
        # Monte Carlo covariance against dt * Gamma(lag), 3 standard errors
        dt, ell = 0.01, 2.0
        g = GridSpec(x0=0.0, dx=0.05, n=281)
        k = CovarianceKernel.squared_exponential(1.0, ell)
        sampler = FieldNoiseSampler(model(k, seed=1), g, dt)
        draws = sampler.sample_block(20000)
        for lag_cells, lag in ((0, 0.0), (int(ell / 0.05), ell), (int(6 * ell / 0.05), 6 * ell)):
            prod = draws[:, 0] * draws[:, lag_cells]
            se = prod.std(ddof=1) / math.sqrt(prod.size)
            expected = dt * kernel_eval(k, lag)
            assert abs(prod.mean() - expected) < 3 * se

    def test_dense_fallback_matches_covariance(self):
        # tabulated kernel with a kink embeds poorly on a short ring; the dense
        # route must still produce the right lag-0 variance
        k = CovarianceKernel.tabulated([0.0, 0.5, 1.0], [1.0, 0.4, 0.0])
        g = GridSpec(x0=0.0, dx=0.25, n=32)
        sampler = FieldNoiseSampler(model(k, seed=2), g, 0.04)
        draws = sampler.sample_block(20000)
        v = draws[:, 5] ** 2
        se = v.std(ddof=1) / math.sqrt(v.size)
        assert abs(v.mean() - 0.04) < 3 * se

    def test_not_representable_raises(self):
        # an oscillatory table with strongly negative spectrum on a large grid
        lags = np.linspace(0.0, 3.0, 7)
        vals = np.array([1.0, -0.9, 0.8, -0.7, 0.6, -0.5, 0.4])
        k = CovarianceKernel.tabulated(lags, vals)
        g = GridSpec(x0=0.0, dx=0.5, n=700)
        with pytest.raises(KernelNotRepresentableError):
            FieldNoiseSampler(model(k), g, 0.01)

    def test_ito_factor_mean_one(self):
        # multiplicative factor exp(eps dz - eps^2 Gamma(0) dt / 2) has mean 1
        from stokpp.logistic import noise_factors

        dt, eps = 0.01, 1.0
        g = GridSpec(x0=0.0, dx=0.05, n=11)
        k = CovarianceKernel.squared_exponential(1.0, 2.0)
        sampler = FieldNoiseSampler(model(k, seed=3), g, dt)
        draws = sampler.sample_block(10000)[:, ::5].ravel()
        f = noise_factors(eps, draws, kernel_eval(k, 0.0), "ito", dt)
        se = f.std(ddof=1) / math.sqrt(f.size)
        assert abs(f.mean() - 1.0) < 3 * se
