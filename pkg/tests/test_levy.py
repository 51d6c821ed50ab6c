import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from mfjump.grid import GridSpec
from mfjump.levy import (
    CompoundPoisson,
    DivergenceError,
    JumpLaw,
    StablePositive,
    TemperedStable,
    classify_indices,
    coarsen,
    coarsen_array,
    first_absolute_integral,
    generate_noise_path,
    sample_increment,
    stable_standard,
    tail_integrals,
)
from mfjump.rng import stream


def quad_tail(spec, x):
    """Independent oracle: both truncated moments by adaptive quadrature of the density."""
    dens = lambda z: float(spec.density(z))
    small = integrate.quad(lambda z: z * z * dens(z), 0, x, epsabs=0, epsrel=1e-12, limit=500)[0]
    large = integrate.quad(lambda z: z * dens(z), x, np.inf, epsabs=0, epsrel=1e-12, limit=500)[0]
    return small, large


class TestTailIntegrals:
    @pytest.mark.parametrize("alpha", [1.1, 1.5, 1.9])
    @pytest.mark.parametrize("x", [0.01, 0.5, 1.0, 7.0])
    def test_stable_closed_form_matches_quadrature(self, alpha, x):
        spec = StablePositive(alpha, scale=0.7)
        np.testing.assert_allclose(tail_integrals(spec, x), quad_tail(spec, x), rtol=1e-9)

    @pytest.mark.parametrize("alpha", [1.2, 1.7])
    @pytest.mark.parametrize("x", [0.05, 1.0, 3.0])
    def test_tempered_closed_form_matches_quadrature(self, alpha, x):
        spec = TemperedStable(alpha, scale=1.3, theta=0.8)
        np.testing.assert_allclose(tail_integrals(spec, x), quad_tail(spec, x), rtol=1e-9)

    def test_cpoisson_exponential_unit(self):
        # int_0^1 z^2 e^-z = 2 - 5/e ; int_1^inf z e^-z = 2/e
        small, large = tail_integrals(CompoundPoisson(1.0), 1.0)
        assert small == pytest.approx(2 - 5 / math.e, rel=1e-12)
        assert large == pytest.approx(2 / math.e, rel=1e-12)

    def test_stable_at_one(self):
        assert tail_integrals(StablePositive(1.5), 1.0) == pytest.approx((2.0, 2.0), rel=1e-14)

    def test_gaussian_limit_has_no_jumps(self):
        spec = StablePositive(2.0)
        assert tail_integrals(spec, 1.0) == (0.0, 0.0)
        assert classify_indices(spec) == (2.0, 2.0)

    def test_nonpositive_x_rejected(self):
        with pytest.raises(ValueError):
            tail_integrals(StablePositive(1.5), 0.0)

    def test_first_absolute_integral_finite(self):
        for spec in (StablePositive(1.3), TemperedStable(1.3), CompoundPoisson(2.0)):
            assert 0 < first_absolute_integral(spec) < np.inf


class TestJumpLaws:
    @pytest.mark.parametrize("law", [JumpLaw("exponential", (0.5,)), JumpLaw("uniform", (0.2, 1.5)),
                                     JumpLaw("pareto", (2.5, 0.3))])
    @pytest.mark.parametrize("power", [1.0, 1.5, 2.0])
    @pytest.mark.parametrize("lo,hi", [(0.0, 1.0), (1.0, np.inf), (0.4, 0.9)])
    def test_partial_moment_closed_form(self, law, power, lo, hi):
        s0, s1 = law.support
        a, b = max(lo, s0), min(hi, s1)
        ref = integrate.quad(lambda z: z**power * law.dist.pdf(z), a, b, epsrel=1e-12)[0] if a < b else 0.0
        assert law.partial_moment(power, lo, hi) == pytest.approx(ref, rel=1e-9, abs=1e-14)

    def test_pareto_infinite_mean_rejected(self):
        with pytest.raises(DivergenceError):
            JumpLaw("pareto", (1.0, 1.0))

    def test_pareto_tail_index(self):
        assert classify_indices(CompoundPoisson(1.0, JumpLaw("pareto", (1.6, 1.0)))) == (1.0, 1.6)

    def test_sample_above_respects_threshold(self):
        law = JumpLaw("exponential", (1.0,))
        z = law.sample_above(2.0, 1000, np.random.default_rng(0))
        assert z.min() >= 2.0
        # memoryless: excess over the threshold is again Exp(1)
        assert stats.kstest(z - 2.0, "expon").pvalue > 1e-3


class TestStableSampler:
    @pytest.mark.parametrize("alpha", [1.3, 1.5, 1.9])
    def test_cms_against_scipy_cdf(self, alpha):
        x = stable_standard(alpha, 5000, stream(3, 0, 0, "aux"))
        # scipy's S1 parameterization with beta = 1 matches CMS for alpha != 1
        dist = stats.levy_stable(alpha, 1.0)
        dist.dist.parameterization = "S1"
        assert stats.kstest(x, dist.cdf).pvalue > 1e-3

    def test_mean_zero(self):
        x = sample_increment(StablePositive(1.8), 1.0, stream(0), 200_000)
        assert abs(x.mean()) < 5 * x.std() / math.sqrt(x.size)

    @pytest.mark.parametrize("spec", [TemperedStable(1.4), CompoundPoisson(3.0, JumpLaw("uniform", (0.0, 2.0)))])
    def test_compensated_increments_have_zero_mean(self, spec):
        x = sample_increment(spec, 0.1, stream(5), 100_000)
        assert abs(x.mean()) < 4 * x.std() / math.sqrt(x.size)

    def test_cpoisson_variance_exact(self):
        # Var = rate * dt * E[Z^2] for a compound Poisson increment
        spec = CompoundPoisson(2.0, JumpLaw("exponential", (0.5,)))
        x = sample_increment(spec, 0.5, stream(9), 200_000)
        assert x.var() == pytest.approx(2.0 * 0.5 * 0.5, rel=0.03)

    def test_gaussian_limit(self):
        x = sample_increment(StablePositive(2.0, scale=0.5), 0.25, stream(1), 20_000)
        assert stats.kstest(x, "norm", args=(0, math.sqrt(2 * 0.5 * 0.25))).pvalue > 1e-3

    def test_nonpositive_dt_rejected(self):
        with pytest.raises(ValueError):
            sample_increment(StablePositive(1.5), 0.0, stream(0))


class TestNoisePath:
    @pytest.mark.parametrize("spec", [StablePositive(1.5), TemperedStable(1.5), CompoundPoisson(2.0),
                                      StablePositive(2.0)])
    def test_deterministic_per_lineage(self, spec):
        g = GridSpec(1.0, 64)
        a = generate_noise_path(spec, g, seed=4, replication=1, particle=7)
        b = generate_noise_path(spec, g, seed=4, replication=1, particle=7)
        c = generate_noise_path(spec, g, seed=4, replication=1, particle=8)
        assert np.array_equal(a.small_jump_increments, b.small_jump_increments)
        assert np.array_equal(a.brownian_increments, b.brownian_increments)
        assert not np.array_equal(a.brownian_increments, c.brownian_increments)

    def test_arrays_are_read_only(self):
        p = generate_noise_path(StablePositive(1.5), GridSpec(1.0, 8))
        with pytest.raises(ValueError):
            p.brownian_increments[0] = 1.0

    @pytest.mark.parametrize("spec", [StablePositive(1.5), TemperedStable(1.2), CompoundPoisson(4.0)])
    def test_coarsening_composes_bit_exactly(self, spec):
        p = generate_noise_path(spec, GridSpec(1.0, 256), seed=2)
        twice = coarsen(coarsen(p, 4), 2)
        once = coarsen(p, 8)
        assert np.array_equal(twice.brownian, once.brownian)
        assert np.array_equal(twice.small, once.small)
        assert np.array_equal(twice.large, once.large)

    def test_coarsening_preserves_totals(self):
        p = generate_noise_path(CompoundPoisson(5.0), GridSpec(2.0, 128), seed=3)
        v = coarsen(p, 16)
        assert v.grid.n == 8
        assert v.large.sum() == pytest.approx(p.jump_marks.sum(), rel=1e-12)
        assert v.brownian.sum() == pytest.approx(p.brownian_increments.sum(), rel=1e-12, abs=1e-12)

    def test_large_jumps_above_cut_and_in_horizon(self):
        p = generate_noise_path(StablePositive(1.3), GridSpec(1.0, 32), z_cut=0.5, seed=1)
        assert np.all(p.jump_marks >= 0.5)
        assert np.all((p.jump_times > 0) & (p.jump_times <= 1.0))

    def test_jump_at_grid_point_belongs_to_left_step(self):
        g = GridSpec(1.0, 4)
        assert list(g.step_index(np.array([0.25, 0.2500001, 1.0]))) == [0, 1, 3]

    def test_coarsen_rejects_non_dyadic_factor(self):
        with pytest.raises(ValueError):
            coarsen_array(np.zeros(8), 3)

    @given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 8]))
    @settings(max_examples=25, deadline=None)
    def test_coarsen_array_sums_blocks(self, seed, factor):
        a = np.random.default_rng(seed).standard_normal(32)
        np.testing.assert_allclose(coarsen_array(a, factor), a.reshape(-1, factor).sum(axis=1), rtol=1e-12, atol=1e-12)
