"""Tests for the simulated quantum subroutines."""

import math

import numpy as np
import pytest

from qmdp.errors import PreconditionError
from qmdp.oracle import QueryLedger
from qmdp.qsim import (
    AmplitudeEstimationConfig,
    amplitude_estimation_sample,
    argmax_query_budget,
    median_amplitude_estimate,
    outcome_distribution,
    simulate_argmax,
    single_run_error_radius,
)
from qmdp.rng import derived_rng


class TestConfig:
    def test_phase_bit_bounds(self):
        with pytest.raises(PreconditionError):
            AmplitudeEstimationConfig(0, 0.5)
        with pytest.raises(PreconditionError):
            AmplitudeEstimationConfig(25, 0.5)

    def test_amplitude_bounds(self):
        with pytest.raises(PreconditionError):
            AmplitudeEstimationConfig(4, 1.2)


class TestOutcomeDistribution:
    def test_normalization(self):
        for a in (0.0, 1e-4, 0.123, 0.3, 0.5, 0.77, 1.0):
            for t in (1, 4, 8, 12):
                d = outcome_distribution(a, t)
                assert abs(d.sum() - 1.0) < 1e-10
                assert d.min() >= -1e-15

    def test_zero_amplitude_is_eigenstate(self):
        rng = derived_rng(0, "ae0")
        cfg = AmplitudeEstimationConfig(6, 0.0)
        draws = amplitude_estimation_sample(cfg, rng, size=500)
        np.testing.assert_array_equal(draws, 0.0)

    def test_unit_amplitude_is_eigenstate(self):
        rng = derived_rng(0, "ae1")
        cfg = AmplitudeEstimationConfig(6, 1.0)
        draws = amplitude_estimation_sample(cfg, rng, size=500)
        np.testing.assert_array_equal(draws, 1.0)

    def test_mirror_symmetry(self):
        # swapping a <-> 1-a mirrors outcomes through the half-grid point
        t, m = 9, 512
        for a in (0.2, 0.37, 0.5):
            d = outcome_distribution(a, t)
            d_flip = outcome_distribution(1.0 - a, t)
            mirrored = d[(m // 2 - np.arange(m)) % m]
            np.testing.assert_allclose(d_flip, mirrored, atol=1e-12)

    def test_single_run_success_bound(self):
        # canonical guarantee: radius holds with probability >= 8/pi^2
        rng = derived_rng(1, "ae-succ")
        cfg = AmplitudeEstimationConfig(10, 0.3)
        draws = amplitude_estimation_sample(cfg, rng, size=20000)
        radius = single_run_error_radius(0.3, 10)
        assert np.mean(np.abs(draws - 0.3) <= radius) >= 0.81

    def test_query_charging(self):
        led = QueryLedger()
        cfg = AmplitudeEstimationConfig(5, 0.4)
        rng = derived_rng(2, "ae-q")
        amplitude_estimation_sample(cfg, rng, size=7, ledger=led, phase="ae")
        assert led.quantum_oracle_calls == 7 * (2**5 - 1)
        assert led.phases["ae"] == 7 * (2**5 - 1)


class TestMedianAmplification:
    def test_median_within_single_run_radius(self):
        # median of 18*ceil(log2(1/delta)) runs stays inside the single-run
        # radius with empirical frequency >= 1-delta
        delta = 0.1
        a, t = 0.3, 10
        radius = single_run_error_radius(a, t)
        cfg = AmplitudeEstimationConfig(t, a)
        hits = 0
        trials = 5000
        for i in range(trials):
            rng = derived_rng(3, "median", i)
            est = median_amplitude_estimate(cfg, delta, rng)
            hits += abs(est - a) <= radius
        assert hits / trials >= 1.0 - delta

    def test_rep_count_default(self):
        cfg = AmplitudeEstimationConfig(6, 0.5)
        led = QueryLedger()
        median_amplitude_estimate(cfg, 0.05, derived_rng(4, "reps"), ledger=led)
        reps = 18 * math.ceil(math.log2(1 / 0.05))
        assert led.quantum_oracle_calls == reps * (2**6 - 1)


class TestSimulateArgmax:
    def test_single_item(self):
        led = QueryLedger()
        idx = simulate_argmax([7.0], 0.5, derived_rng(5, "n1"), ledger=led)
        assert idx == 0
        assert led.quantum_oracle_calls <= argmax_query_budget(1, 0.5)

    def test_all_equal_ties_to_lowest(self):
        # the tie rule makes index 0 the unique top element; the search finds
        # it at the contract's own confidence level
        hits = 0
        for i in range(200):
            idx = simulate_argmax(np.ones(8), 0.2, derived_rng(6, "ties", i))
            hits += idx == 0
        assert hits / 200 >= 1.0 - 0.2

    def test_sixteen_values_contract(self):
        # correct index in >= 90% of runs at delta = 0.1, within budget
        values = np.arange(16.0)
        budget = argmax_query_budget(16, 0.1)
        ok = 0
        for i in range(2000):
            led = QueryLedger()
            idx = simulate_argmax(values, 0.1, derived_rng(7, "dh", i), ledger=led)
            ok += idx == 15
            assert led.quantum_oracle_calls <= budget
        assert ok / 2000 >= 0.90

    def test_budget_never_exceeded_random_cases(self):
        for i in range(100):
            rng = derived_rng(8, "budget", i)
            n = int(rng.integers(1, 80))
            delta = float(rng.uniform(0.01, 0.9))
            values = rng.random(n)
            led = QueryLedger()
            simulate_argmax(values, delta, rng, ledger=led)
            assert led.quantum_oracle_calls <= argmax_query_budget(n, delta)

    def test_sub_unit_budget_charges_nothing(self):
        # at delta near 1 the budget can be below one query; the search must
        # degrade to an uninformed guess rather than overcharge
        led = QueryLedger()
        idx = simulate_argmax(np.arange(2.0), 0.99, derived_rng(13, "tiny"),
                              ledger=led)
        assert idx in (0, 1)
        assert led.quantum_oracle_calls == 0

    def test_trace_strictly_improves(self):
        # thresholds strictly increase in the (value, -index) order
        for i in range(100):
            rng = derived_rng(9, "trace", i)
            values = rng.integers(0, 6, size=20).astype(float)  # plenty of ties
            _, trace = simulate_argmax(values, 0.1, rng, return_trace=True)
            keys = [(v, -j) for j, v in trace.threshold_history]
            assert all(k2 > k1 for k1, k2 in zip(keys, keys[1:]))

    def test_probe_cost_multiplies_charges(self):
        led_unit = QueryLedger()
        led_cost = QueryLedger()
        simulate_argmax(np.arange(8.0), 0.2, derived_rng(10, "pc"), ledger=led_unit)
        simulate_argmax(np.arange(8.0), 0.2, derived_rng(10, "pc"), ledger=led_cost,
                        probe_cost=13)
        assert led_cost.quantum_oracle_calls == 13 * led_unit.quantum_oracle_calls

    def test_empty_rejected(self):
        with pytest.raises(PreconditionError):
            simulate_argmax([], 0.1, derived_rng(11, "empty"))

    def test_trace_export(self):
        _, trace = simulate_argmax(np.arange(5.0), 0.3, derived_rng(12, "exp"),
                                   return_trace=True)
        doc = trace.to_dict()
        assert set(doc) == {"threshold_history", "grover_queries_charged"}
