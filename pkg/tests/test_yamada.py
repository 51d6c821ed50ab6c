import math

import numpy as np
import pytest
from scipy import integrate

from mfjump.levy import CompoundPoisson, JumpLaw, StablePositive, TemperedStable, tail_integrals
from mfjump.yamada import (
    asymptotics_check,
    build_yw,
    key12_sweep,
    property_checks,
    random_key0_triples,
    verify_lemma_key0,
    verify_lemma_key12,
)

GRID = [(d, e) for d in (1.5, 2.0, 10.0) for e in (0.5, 0.1, 0.01)]


class TestConstruction:
    @pytest.mark.parametrize("delta,eps", GRID)
    def test_all_properties_hold(self, delta, eps):
        checks = property_checks(build_yw(delta, eps))
        assert all(checks.values()), checks

    @pytest.mark.parametrize("delta,eps", GRID)
    def test_psi_integrates_to_one_independently(self, delta, eps):
        yw = build_yw(delta, eps)
        a, a1, b1, b = yw.ramp_points
        val = integrate.quad(lambda z: float(yw.psi(z)), a, b, points=[a1, b1], epsabs=1e-14, epsrel=1e-12)[0]
        assert val == pytest.approx(1.0, abs=1e-10)
        assert yw.norm <= 2

    def test_phi_vanishes_near_origin_and_tracks_abs(self):
        yw = build_yw(2.0, 0.1)
        assert yw.phi(0.04) == 0.0 and yw.dphi(0.04) == 0.0
        x = np.array([0.5, 1.0, 3.0])
        np.testing.assert_allclose(yw.phi(x) - x, yw.phi(1.0) - 1.0, atol=1e-14)
        np.testing.assert_allclose(yw.dphi(-x), -1.0, atol=1e-14)
        assert yw.phi(-0.7) == yw.phi(0.7)

    def test_taylor_remainder_matches_direct_evaluation(self):
        yw = build_yw(10.0, 0.1)
        rng = np.random.default_rng(0)
        for _ in range(500):
            y, h = rng.uniform(-0.3, 0.3), rng.uniform(-0.5, 0.5)
            direct = float(yw.phi(y + h) - yw.phi(y) - h * yw.dphi(y))
            assert yw.taylor_remainder(y, h) == pytest.approx(direct, abs=1e-13)

    @pytest.mark.parametrize("y", [0.0076, -0.0076, 0.003, 0.0011])
    def test_taylor_remainder_keeps_relative_accuracy_for_tiny_steps(self, y):
        # leading term psi(y) h^2 / 2; next term is O(h^3)
        yw = build_yw(10.0, 0.01)
        for h in (1e-14, -3e-13, 2e-12):
            lead = 0.5 * float(yw.d2phi(y)) * h * h
            assert yw.taylor_remainder(y, h) == pytest.approx(lead, rel=1e-9)

    def test_taylor_remainder_is_nonnegative(self):
        # phi is convex
        yw = build_yw(1.5, 0.01)
        rng = np.random.default_rng(1)
        assert all(yw.taylor_remainder(rng.uniform(-0.02, 0.02), rng.normal(0, 0.01)) >= -1e-16
                   for _ in range(500))

    @pytest.mark.parametrize("delta,eps", [(1.0, 0.1), (0.5, 0.1), (2.0, 0.0), (2.0, 1.0)])
    def test_rejects_bad_parameters(self, delta, eps):
        with pytest.raises(ValueError):
            build_yw(delta, eps)


class TestSecondOrderJumpLemma:
    def test_trivial_cases(self):
        yw = build_yw(2.0, 0.1)
        assert verify_lemma_key0(yw, StablePositive(1.5), 0.0, 0.05, 0.1).lhs == 0.0
        # |y| beyond the support plus all jumps keep y + xz outside it: lhs and rhs vanish
        far = verify_lemma_key0(yw, StablePositive(1.5), 0.3, 0.5, 0.1)
        assert far.lhs == pytest.approx(0.0, abs=1e-14) and far.rhs == 0.0 and far.holds

    def test_sweep_holds(self):
        yw = build_yw(2.0, 0.1)
        levy = StablePositive(1.5)
        for x in np.geomspace(1e-3, 1.0, 20):
            for y in np.linspace(0.005, 0.2, 20):
                assert verify_lemma_key0(yw, levy, x, y, 0.3).holds

    @pytest.mark.parametrize("levy", [TemperedStable(1.7), CompoundPoisson(2.0, JumpLaw("uniform", (0.0, 1.0)))])
    def test_other_measures(self, levy):
        yw = build_yw(10.0, 0.01)
        for x, y, u in random_key0_triples(yw, np.random.default_rng(2), 40):
            assert verify_lemma_key0(yw, levy, x, y, u).holds

    def test_lhs_matches_brute_force(self):
        yw = build_yw(2.0, 0.5)
        levy = StablePositive(1.3)
        x, y = 0.4, 0.3
        f = lambda z: (yw.phi(y + x * z) - yw.phi(y) - x * z * yw.dphi(y)) * z ** -2.3
        pts = sorted({(c - y) / x for c in yw.ramp_points if c > y})
        brute = sum(integrate.quad(f, lo, hi, limit=400, epsabs=1e-13)[0]
                    for lo, hi in zip([0.0] + pts, pts + [np.inf]))
        assert verify_lemma_key0(yw, levy, x, y, 1.0).lhs == pytest.approx(brute, rel=1e-7)

    def test_preconditions(self):
        yw = build_yw(2.0, 0.1)
        for args in ((0.1, -0.05, 1.0), (0.1, 0.0, 1.0), (0.1, 0.05, 0.0)):
            with pytest.raises(ValueError):
                verify_lemma_key0(yw, StablePositive(1.5), *args)


class TestFirstOrderCrossLemma:
    def test_equal_arguments_give_zero(self):
        c = verify_lemma_key12(build_yw(2.0, 0.1), StablePositive(1.5), 0.05, 0.05, 0.02, 0.3, kappa=2.0)
        assert c.lhs == 0.0 and c.holds

    def test_sign_flip_symmetry(self):
        yw, levy = build_yw(2.0, 0.1), StablePositive(1.5)
        a = verify_lemma_key12(yw, levy, 0.03, -0.01, 0.04, 0.3, kappa=2.0)
        b = verify_lemma_key12(yw, levy, -0.03, 0.01, -0.04, 0.3, kappa=2.0)
        assert a.lhs == pytest.approx(b.lhs, rel=1e-9)
        assert a.bracket == pytest.approx(b.bracket, rel=1e-12)

    def test_constant_is_stable_under_refinement(self):
        yw, levy = build_yw(2.0, 0.1), StablePositive(1.5)
        coarse = key12_sweep(yw, levy, points=2)
        fine = key12_sweep(yw, levy, points=3)
        assert 0 < coarse and fine <= 2 * coarse

    def test_preconditions(self):
        yw, levy = build_yw(2.0, 0.1), StablePositive(1.5)
        with pytest.raises(ValueError, match="precondition"):
            verify_lemma_key12(yw, levy, 0.1, -0.5, 0.1, 0.3, kappa=2.0)
        with pytest.raises(ValueError, match="alpha"):
            verify_lemma_key12(yw, levy, 0.1, 0.05, 0.1, 0.3, kappa=2.0, alpha=1.2)


class TestAsymptotics:
    EPS = np.geomspace(0.5, 1e-6, 12)

    def test_decreasing_above_singularity_index(self):
        t = asymptotics_check(StablePositive(1.5), 0.5, 1.8, self.EPS)
        assert t.decreasing and np.all(np.isfinite(t.I + t.J))

    def test_negative_control_below_index_grows(self):
        t = asymptotics_check(StablePositive(1.5), 0.5, 1.2, self.EPS, strict=False)
        assert np.all(np.diff(t.I) > 0) and t.I[-1] > 5 * t.I[0]
        with pytest.raises(ValueError):
            asymptotics_check(StablePositive(1.5), 0.5, 1.2, self.EPS)

    def test_frozen_scale_when_eta_is_one(self):
        levy = StablePositive(1.5)
        t = asymptotics_check(levy, 1.0, 1.8, self.EPS)
        assert np.all(t.u == math.log(2.0))
        small, large = tail_integrals(levy, 1.0)
        assert t.bound == pytest.approx(2 * (small + large)) and t.within_bound

    def test_range_checks(self):
        with pytest.raises(ValueError):
            asymptotics_check(StablePositive(1.5), 0.2, 1.8, self.EPS)
        with pytest.raises(ValueError):
            asymptotics_check(StablePositive(1.5), 0.5, 2.5, self.EPS)
        with pytest.raises(ValueError):
            asymptotics_check(StablePositive(1.5), 0.5, 1.8, [0.5, 1.5])
