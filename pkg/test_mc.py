"""Tests for the Monte Carlo response oracle."""

import math
import numpy as np
import pytest
from hypothesis import given, strategies as st, settings

from crn_core import ModelParams
from errors import ParameterError
from finite_model import pres_exact
from mc import (BLOCK_SIZE, Outcome, block_sizes, build_jump_chain, estimate_pres, estimate_pres_detail,
                simulate_block, simulate_ligand, sweep_mc)

SEED = 20240601


def ladder(N: int = 8, delta: float = 2.0, sigma: float = 0.0, b: float = 0.3) -> ModelParams:
    return ModelParams(N=N, alpha=1.0, delta=delta, sigma=sigma, energy_E=math.log(3.0), b=b)


# Feature: kpr-toolkit, Property 22: Jump chain rows are distributions
# Validates: mc build_jump_chain
@settings(max_examples=100)
@given(N=st.integers(min_value=1, max_value=20), delta=st.floats(min_value=-2.0, max_value=4.0),
       sigma=st.floats(min_value=-5.0, max_value=5.0), b=st.floats(min_value=0.01, max_value=1.0))
def test_property_jump_chain_rows(N, delta, sigma, b):
    """
    Property 22: Jump chain rows are distributions
    Cumulative destination probabilities rise to exactly 1 and exit rates exceed mu.
    """
    params = ladder(N, delta, sigma, b)
    chain = build_jump_chain(params)

    assert chain.cumulative.shape == (N + 2, N + 4)
    assert np.all(np.diff(chain.cumulative, axis=1) >= 0)
    assert np.all(chain.cumulative[:, -1] == 1.0)
    assert np.all(chain.exit_rate > params.mu_resolved)


class TestEstimates:
    """Unit tests for the binomial estimate of p_res."""

    def test_matches_exact_response(self):
        params = ladder()
        p_hat, stderr = estimate_pres(params, 20000, SEED)
        assert stderr > 0
        assert abs(p_hat - pres_exact(params)) <= 4 * stderr

    def test_strong_binding_always_responds(self):
        params = ladder(N=2, delta=3.0, sigma=-30.0).with_changes(b=None, mu=1e-6)
        estimate = estimate_pres_detail(params, 1000, SEED)
        assert estimate.responses >= 990
        assert estimate.mean_events >= 2

    def test_single_trial(self):
        p_hat, stderr = estimate_pres(ladder(N=3), 1, SEED)
        assert p_hat in (0.0, 1.0)
        assert stderr == 0.0

    def test_seed_is_reproducible(self):
        params = ladder(N=3)
        assert estimate_pres(params, 500, SEED) == estimate_pres(params, 500, SEED)
        first = simulate_ligand(params, SEED)
        second = simulate_ligand(params, SEED)
        assert first == second
        assert first.outcome in (Outcome.RESPONSE, Outcome.DEGRADED)
        assert first.path_length >= 1

    def test_workers_do_not_change_estimate(self):
        params = ladder(N=2)
        trials = 2 * BLOCK_SIZE + 100
        assert estimate_pres(params, trials, SEED, workers=1) == estimate_pres(params, trials, SEED, workers=2)

    @pytest.mark.parametrize("trials", [0, -5, 2.5])
    def test_bad_trial_counts(self, trials):
        with pytest.raises(ParameterError):
            estimate_pres(ladder(N=3), trials, SEED)

    def test_zero_degradation_rejected(self):
        with pytest.raises(ParameterError):
            estimate_pres(ladder().with_changes(b=None, mu=0.0), 10, SEED)


class TestBlocks:
    """Unit tests for block splitting and streams."""

    def test_block_sizes(self):
        assert block_sizes(10, 4) == [4, 4, 2]
        assert block_sizes(8, 4) == [4, 4]
        assert sum(block_sizes(100000)) == 100000

    def test_blocks_use_distinct_streams(self):
        params = ladder(N=3)
        first = simulate_block(params, SEED, 0, size=200)
        second = simulate_block(params, SEED, 1, size=200)
        assert first.size == second.size == 200
        assert not np.array_equal(first.absorption_time, second.absorption_time)
        assert np.all(first.absorption_time > 0)


class TestSweep:
    """Unit tests for the Monte Carlo sigma sweep."""

    def test_sweep_rows(self):
        sweep = sweep_mc(ladder(), [-2.0, 4.0], 2000, SEED)

        assert [row.sigma for row in sweep.rows] == [-2.0, 4.0]
        assert all(row.trials == 2000 for row in sweep.rows)
        assert sweep.rows[0].p_hat > sweep.rows[1].p_hat
