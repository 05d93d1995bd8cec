"""Tests for the half-line lattice and its Laplace-domain solution."""

import math
import numpy as np
import pytest

import analytic
from analytic import Regime, ThetaCase
from crn_core import ModelParams
from errors import EvaluationError, ParameterError, TruncationError
from half_line import (closed_form_nk_hat, dense_halfline, front_position, integrate_halfline,
                       residue_limit, talbot_invert, verify_ray_limits)

LOG3 = math.log(3.0)


def halfline_model(delta: float) -> ModelParams:
    return ModelParams(N=1, alpha=1.0, delta=delta, sigma=0.0, energy_E=LOG3)


SUBCRITICAL = halfline_model(0.1)
SUPERCRITICAL = halfline_model(2.0)
CRITICAL = halfline_model(analytic.delta_c(0.0, 1.0, LOG3))


class TestLattice:
    """Unit tests for the truncated lattice integration."""

    @pytest.mark.parametrize("params", [SUBCRITICAL, SUPERCRITICAL])
    def test_mass_is_conserved(self, params):
        run = integrate_halfline(params, 5.0)
        assert run.mass == pytest.approx(1.0, abs=1e-8)
        assert np.all(run.n >= -1e-15)

    def test_time_zero(self):
        run = integrate_halfline(SUBCRITICAL, 0.0, K=10)
        assert run.nS == 1.0
        assert np.all(run.n == 0.0)
        assert run.tau == 0.0

    def test_sparse_matches_dense(self):
        sparse_run = integrate_halfline(SUPERCRITICAL, 1.0, K=40)
        dense = dense_halfline(SUPERCRITICAL, 1.0, K=40)
        assert sparse_run.nS == pytest.approx(dense[0], rel=1e-9)
        assert np.allclose(sparse_run.n[:10], dense[1:11], rtol=1e-8, atol=0)

    def test_degradation_rejected(self):
        params = SUBCRITICAL.with_changes(b=0.5)
        with pytest.raises(ParameterError):
            integrate_halfline(params, 1.0)
        with pytest.raises(ParameterError):
            talbot_invert(0, 1.0, params)
        with pytest.raises(ParameterError):
            residue_limit(0, params)

    def test_truncation_below_targets(self):
        with pytest.raises(TruncationError, match="below 3 theta tau"):
            integrate_halfline(SUBCRITICAL, 20.0, K=5, theta_targets=[0.5])

    def test_truncation_leak(self):
        with pytest.raises(TruncationError, match="leaked"):
            integrate_halfline(SUPERCRITICAL, 50.0, K=2)

    def test_front_advances(self):
        early = front_position(integrate_halfline(SUPERCRITICAL, 5.0), SUPERCRITICAL)
        late = front_position(integrate_halfline(SUPERCRITICAL, 10.0), SUPERCRITICAL)
        assert 0 < early < late


class TestLaplaceDomain:
    """Unit tests for the closed-form transform and its inversion."""

    @pytest.mark.parametrize("k", [0, 5])
    def test_talbot_matches_lattice(self, k):
        run = integrate_halfline(SUBCRITICAL, 5.0, K=80)
        assert talbot_invert(k, 5.0, SUBCRITICAL) == pytest.approx(run.n[k], rel=1e-6)

    def test_long_time_limit_is_the_residue(self):
        run = integrate_halfline(SUBCRITICAL, 20.0)
        for k in range(6):
            assert run.n[k] == pytest.approx(residue_limit(k, SUBCRITICAL), rel=1e-6)

    def test_transform_rejects_singular_points(self):
        z1, z2 = analytic.branch_points(SUBCRITICAL)
        with pytest.raises(EvaluationError):
            closed_form_nk_hat(0, 0.0, SUBCRITICAL)
        with pytest.raises(EvaluationError):
            closed_form_nk_hat(0, (z1 + z2) / 2, SUBCRITICAL)
        with pytest.raises(ParameterError):
            closed_form_nk_hat(-1, 1.0, SUBCRITICAL)

    def test_talbot_needs_positive_time(self):
        with pytest.raises(ParameterError):
            talbot_invert(0, 0.0, SUBCRITICAL)


class TestRayLimits:
    """Unit tests for the ray convergence table."""

    def test_subcritical_gaps_shrink(self):
        table = verify_ray_limits(0.5, [20.0, 40.0, 80.0], SUBCRITICAL)

        assert table.regime is Regime.SUBCRITICAL
        assert table.case is None
        assert table.normalization == 'exp(-kE)'
        assert table.limit == pytest.approx(analytic.a_zero(SUBCRITICAL) * analytic.nbar_S(0.0, LOG3))
        assert [row.tau for row in table.rows] == [20.0, 40.0, 80.0]
        assert table.gap_decreasing()
        assert table.final_relative_gap() < 0.01

    def test_subcritical_acceptance_ray(self):
        table = verify_ray_limits(0.3, [40.0, 80.0, 160.0], SUBCRITICAL)

        assert table.limit == pytest.approx(analytic.a_zero(SUBCRITICAL) * analytic.nbar_S(0.0, LOG3))
        assert table.gap_decreasing()
        assert table.final_relative_gap() < 0.10

    def test_critical_limit_is_profile_slope(self):
        table = verify_ray_limits(0.5, [40.0, 80.0, 160.0], CRITICAL)
        n_S = analytic.nbar_S(0.0, LOG3)
        slope = n_S / math.expm1(LOG3 + CRITICAL.delta)

        assert table.regime is Regime.CRITICAL
        assert table.normalization == 'exp(-kE) (k + offset)'
        assert table.limit == pytest.approx(slope, rel=1e-12)
        assert table.stated_limit == pytest.approx(n_S * (1.0 - 1.0 / 6.0), rel=1e-12)
        assert table.gap_decreasing()
        assert table.final_relative_gap() < 0.10

    def test_supercritical_behind_front(self):
        table = verify_ray_limits(0.5, [160.0, 320.0, 640.0], SUPERCRITICAL)
        expected = (analytic.a_zero(SUPERCRITICAL) * analytic.b_zero(SUPERCRITICAL)
                    * analytic.nbar_S(0.0, LOG3))

        assert table.case is ThetaCase.CASE1
        assert table.normalization == 'exp(-k psi)'
        assert table.limit == pytest.approx(expected, rel=1e-12)
        assert table.gap_decreasing()
        assert table.final_relative_gap() < 1e-3

    def test_supercritical_beyond_front_falls_to_zero(self):
        table = verify_ray_limits(1.0, [40.0, 80.0, 160.0], SUPERCRITICAL)
        ratios = [row.ratio for row in table.rows]

        assert table.case is ThetaCase.CASE3
        assert table.limit == 0.0
        assert all(later < earlier for earlier, later in zip(ratios, ratios[1:]))
        assert table.gaps == [abs(ratio) for ratio in ratios]
        assert table.final_relative_gap() == abs(ratios[-1])
        assert table.final_relative_gap() < 0.10

    def test_empty_tau_list(self):
        with pytest.raises(ParameterError):
            verify_ray_limits(0.5, [], SUBCRITICAL)
