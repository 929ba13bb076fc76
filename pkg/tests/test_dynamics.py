import math

import numpy as np
import pytest

from coalsim.distributions import ProbabilityVector, topheavy, uniform
from coalsim.dynamics import (
    early_threshold,
    empty_boxes_proxy,
    envelope_margin,
    expected_next_count,
    harmonic_envelope_constant,
    harmonic_envelope_root,
    iterate_envelope,
    late_threshold,
    lower_decay_rate,
    lower_step_curve,
    occupancy_proxy,
    one_step_envelope,
    topheavy_envelope,
)
from coalsim.exact_chain import transition_row


def random_vector(rng, n):
    return ProbabilityVector(rng.dirichlet(np.ones(n)), normalize=True)


class TestEmptyBoxesProxy:
    def test_zero_k_gives_n(self):
        assert empty_boxes_proxy(uniform(7), 0.0) == pytest.approx(7.0, abs=1e-12)

    def test_uniform_closed_form(self):
        for n, k in ((5, 2.0), (10, 7.5)):
            assert empty_boxes_proxy(uniform(n), k) == pytest.approx(
                n * math.exp(-k / n), abs=1e-12
            )

    def test_direct_evaluation(self):
        p = ProbabilityVector([0.75, 0.25])
        assert empty_boxes_proxy(p, 4.0) == pytest.approx(
            math.exp(-3.0) + math.exp(-1.0), abs=1e-12
        )

    def test_uniform_is_global_floor(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            n = int(rng.integers(2, 30))
            k = float(rng.uniform(0.0, 2 * n))
            p = random_vector(rng, n)
            assert empty_boxes_proxy(p, k) >= n * math.exp(-k / n) - 1e-9

    def test_negative_k_rejected(self):
        with pytest.raises(ValueError):
            empty_boxes_proxy(uniform(3), -1.0)


class TestOccupancyProxy:
    def test_complement_identity(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(2, 25))
            p = random_vector(rng, n)
            k = float(rng.uniform(0.0, 2 * n))
            total = occupancy_proxy(p, k) + empty_boxes_proxy(p, k)
            assert total == pytest.approx(n, abs=1e-12)

    def test_bracketed_by_exact_mean(self):
        # smoothed predictor <= exact conditional mean <= k
        rng = np.random.default_rng(12)
        for _ in range(100):
            n = int(rng.integers(2, 25))
            p = random_vector(rng, n)
            k = int(rng.integers(1, n + 1))
            lo = occupancy_proxy(p, k)
            mid = expected_next_count(p, k)
            assert lo <= mid + 1e-12
            assert mid <= k + 1e-12


class TestExpectedNextCount:
    def test_single_ball(self):
        assert expected_next_count(uniform(9), 1) == pytest.approx(1.0, abs=1e-12)

    def test_two_fair_coins(self):
        p = ProbabilityVector([0.5, 0.5])
        assert expected_next_count(p, 2) == pytest.approx(1.5, abs=1e-12)

    def test_matches_kernel_row_mean(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            n = int(rng.integers(2, 12))
            p = random_vector(rng, n)
            k = int(rng.integers(1, n + 1))
            row = transition_row(p, k)
            assert row.mean == pytest.approx(expected_next_count(p, k), abs=1e-10)


class TestOneStepEnvelope:
    def test_zero(self):
        assert one_step_envelope(uniform(4), 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_value(self):
        expected = (10 + 10 * (1 - math.exp(-1.0))) / 2
        assert one_step_envelope(uniform(10), 10.0) == pytest.approx(expected, abs=1e-9)

    def test_strictly_below_k_for_spread_vectors(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            n = int(rng.integers(2, 20))
            p = random_vector(rng, n)
            k = float(rng.uniform(0.1, n))
            assert one_step_envelope(p, k) < k

    def test_sandwich(self):
        rng = np.random.default_rng(15)
        for _ in range(100):
            n = int(rng.integers(2, 20))
            p = random_vector(rng, n)
            k = float(rng.uniform(0.0, n))
            phi = occupancy_proxy(p, k)
            psi = one_step_envelope(p, k)
            assert 0.0 <= phi + 1e-12
            assert phi <= psi + 1e-12
            assert psi <= k + 1e-12


class TestEnvelopeMargin:
    def test_vanishes_at_zero(self):
        p = uniform(6)
        assert envelope_margin(p, 1e-6) <= 1e-9

    def test_increasing_in_k(self):
        rng = np.random.default_rng(16)
        for _ in range(100):
            n = int(rng.integers(2, 50))
            p = random_vector(rng, n)
            vals = [envelope_margin(p, k) for k in range(1, n + 1)]
            assert all(b > a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_uniform_cubic_floor(self):
        for n in (5, 20, 100):
            p = uniform(n)
            for k in range(1, n + 1):
                assert envelope_margin(p, k) >= k**3 / (36.0 * n * n) - 1e-12


class TestThresholds:
    def test_early_substitution(self):
        assert early_threshold(1.0 / 16, 16, 0.2) == pytest.approx(
            16 * math.log(16) ** -0.2, rel=1e-12
        )
        assert early_threshold(0.1, 16, 0.2) == pytest.approx(
            10 * math.log(16) ** -0.2, rel=1e-12
        )

    def test_late_substitution(self):
        assert late_threshold(0.01, 100, 0.2) == pytest.approx(
            10 * math.log(100) ** -0.05, rel=1e-12
        )

    def test_late_below_early_in_regime(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            n = int(rng.integers(3, 10_000))
            eps = float(rng.uniform(1e-3, 0.25 - 1e-3))
            c2 = float(rng.uniform(1e-6, 1.0)) * math.log(n) ** -2
            if c2 <= 0:
                continue
            assert late_threshold(c2, n, eps) < early_threshold(c2, n, eps)

    def test_argument_validation(self):
        with pytest.raises(ValueError):
            early_threshold(0.1, 16, 0.3)
        with pytest.raises(ValueError):
            late_threshold(0.0, 16, 0.2)
        with pytest.raises(ValueError):
            early_threshold(0.1, 2, 0.2)


class TestIterateEnvelope:
    def test_start_at_threshold(self):
        t = iterate_envelope(uniform(10), 5.0, 5.0, 100)
        assert t.hitting_time == 0
        assert t.stop_reason == "reached_threshold"

    def test_monotone_from_n(self):
        p = uniform(50)
        t = iterate_envelope(p, 50.0, 1.0, 10_000)
        assert np.all(np.diff(t.values) <= 1e-9)
        assert t.values.min() >= 0.0

    def test_topheavy_hits_early_threshold_fast(self):
        # c2 >= 2/n regime: hitting time of the early threshold is at most
        # 5 ln(n) / sqrt(c2)
        for n, c2 in ((1000, 0.01), (500, 0.03), (200, 0.02)):
            p = topheavy(n, c2)
            k_star = early_threshold(c2, n, 0.2)
            traj = iterate_envelope(p, float(n), k_star, 10_000)
            bound = 5.0 * math.log(n) / math.sqrt(c2)
            assert traj.hitting_time is not None
            assert traj.hitting_time <= bound

    def test_uniform_harmonic_cap(self):
        A = max(1.0, harmonic_envelope_constant(100_000))
        n = 10_000
        traj = iterate_envelope(uniform(n), float(n), 10.0, 100_000)
        t = np.arange(traj.values.size)
        assert np.all(traj.values <= A * n / (t + 1.0) + 1e-9)

    def test_max_iterations_flagged(self):
        t = iterate_envelope(uniform(100), 100.0, 1.0, 3)
        assert t.stop_reason == "max_iterations"
        assert t.hitting_time is None


class TestTopheavyEnvelope:
    def test_t_zero(self):
        assert topheavy_envelope(0.04, 200, 0) == pytest.approx(200 + 10.0, abs=1e-12)

    def test_monotone_decreasing(self):
        vals = [topheavy_envelope(0.01, 1000, t) for t in range(200)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_dominates_envelope_iteration(self):
        n, c2 = 1000, 0.01
        p = topheavy(n, c2)
        k_star = early_threshold(c2, n, 0.2)
        traj = iterate_envelope(p, float(n), k_star, 10_000)
        for t, value in enumerate(traj.values):
            assert value <= topheavy_envelope(c2, n, t) + 1e-9

    def test_regime_guard(self):
        with pytest.raises(ValueError):
            topheavy_envelope(0.001, 100, 1)


class TestHarmonicEnvelopeRoot:
    def test_t_zero_rejected(self):
        with pytest.raises(ValueError):
            harmonic_envelope_root(0)

    def test_product_tends_to_four(self):
        x = harmonic_envelope_root(1000)
        assert 3.9 <= 1002 * x <= 4.1

    def test_strictly_decreasing(self):
        vals = [harmonic_envelope_root(t) for t in range(1, 101)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_root_solves_equation(self):
        for t in (1, 5, 50, 500):
            x = harmonic_envelope_root(t)
            assert 1 - math.exp(-x) == pytest.approx(
                x * (1 - 2.0 / (t + 2)), abs=1e-10
            )

    def test_constant_matches_scan(self):
        a_star = harmonic_envelope_constant(2000)
        assert a_star == pytest.approx(2 * harmonic_envelope_root(1), rel=1e-9)


class TestLowerEnvelope:
    def test_curve_at_zero(self):
        assert lower_step_curve(0.0) == 0.0

    def test_increasing_below_ln3(self):
        xs = np.linspace(0.0, math.log(3.0), 200)
        vals = [lower_step_curve(float(x)) for x in xs]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_below_one_minus_exp(self):
        for x in np.linspace(0.0, 10.0, 100):
            assert lower_step_curve(float(x)) <= 1 - math.exp(-x) + 1e-12

    def test_decay_rate_range(self):
        assert lower_decay_rate(0.04) == pytest.approx(0.6, abs=1e-12)
        with pytest.raises(ValueError):
            lower_decay_rate(0.3)

    def test_iteration_keeps_harmonic_floor(self):
        # iterating the damped curve stays above (2/3) gamma^t / (t+1)
        n, c = 100, 0.04
        gamma = lower_decay_rate(c)
        x = 1.0 - 1.0 / (n - 1)
        for t in range(201):
            assert x >= (2.0 / 3.0) * gamma**t / (t + 1) - 1e-12
            x = lower_step_curve(gamma * x)
