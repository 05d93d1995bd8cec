"""Tests for the detailed-balance-complete nucleotide network."""

import math
import numpy as np
import pytest
from hypothesis import given, strategies as st, settings

from crn_core import ModelParams, conserved_directions, cycle_delta, stoichiometric_matrix, wegscheider_holds
from enlarged import (FREE_LIGAND_ENERGY, LITERAL_FREE_LIGAND_ENERGY, EnlargedParams, build_enlarged,
                      conservation_matrix, conserved_quantities, energy_vector,
                      equilibrium_state, external_fluxes, fit_steady_state, flux_balance,
                      frozen_reduction, integrate_enlarged, rhs_enlarged)
from errors import ParameterError


def enlarged_params(N: int = 3, sigma: float = 0.0, E_T: float = 2.0, E_D: float = 0.5,
                    E_P: float = 0.5) -> EnlargedParams:
    base = ModelParams(N=N, alpha=1.0, delta=0.0, sigma=sigma, energy_E=math.log(3.0), b=math.log(2.0))
    return EnlargedParams(base=base, E_T=E_T, E_D=E_D, E_P=E_P)


energies = st.floats(min_value=-2.0, max_value=3.0)


# Feature: kpr-toolkit, Property 19: Detailed balance for any energies
# Validates: enlarged build_enlarged, equilibrium_state
@settings(max_examples=50)
@given(N=st.integers(min_value=1, max_value=6), sigma=st.floats(min_value=-2.0, max_value=2.0),
       E_T=energies, E_D=energies, E_P=energies)
def test_property_equilibrium_is_stationary(N, sigma, E_T, E_D, E_P):
    """
    Property 19: Detailed balance for any energies
    Every basis cycle is balanced and e^(-energy) is a stationary state.
    """
    params = enlarged_params(N, sigma, E_T, E_D, E_P)
    holds, _ = wegscheider_holds(build_enlarged(params))
    assert holds

    rhs = rhs_enlarged(equilibrium_state(params), params)
    assert np.max(np.abs(rhs)) <= 1e-12


class TestEnergyVector:
    """Unit tests for the species energies."""

    def test_free_ligand_has_zero_energy(self):
        params = enlarged_params(N=2, sigma=0.5)
        energies = energy_vector(params)

        assert energies[-1] == FREE_LIGAND_ENERGY == 0.0
        assert np.allclose(energies[:3], [0.5, 0.5 + math.log(3.0), 0.5 + 2 * math.log(3.0)])
        assert equilibrium_state(params).n_S == 1.0

    def test_unit_free_ligand_energy_is_not_stationary(self):
        params = enlarged_params(N=2)
        state = equilibrium_state(params, LITERAL_FREE_LIGAND_ENERGY)
        rhs = rhs_enlarged(state, params)
        expected = -math.expm1(-1.0) * (1.0 + 1.0 / 3.0 + 1.0 / 9.0)

        assert state.n_S == pytest.approx(math.exp(-1.0))
        assert rhs[-1] == pytest.approx(expected, rel=1e-12)


class TestConservation:
    """Unit tests for the three conserved quantities."""

    def test_conservation_laws_span_left_null_space(self):
        params = enlarged_params()
        net = build_enlarged(params)
        laws = conservation_matrix(params.N)

        assert np.allclose(laws @ stoichiometric_matrix(net), 0.0)
        assert conserved_directions(net).shape[1] == 3

    def test_integration_conserves(self):
        params = enlarged_params()
        state = equilibrium_state(params)
        state.n_T *= 2
        state.n = state.n * 1.5
        before = conserved_quantities(state)

        run = integrate_enlarged(state, params, 20.0, t_eval=np.linspace(0.0, 20.0, 11))

        assert len(run.states) == 11
        assert run.conserved_drift <= 1e-8
        assert np.allclose(conserved_quantities(run.states[-1]), before, rtol=1e-8)

    def test_fit_steady_state(self):
        params = enlarged_params()
        state = equilibrium_state(params)
        state.n_T *= 2

        mu, fitted = fit_steady_state(state, params)

        assert mu.shape == (3,)
        assert np.allclose(conserved_quantities(fitted), conserved_quantities(state), rtol=1e-10)
        assert np.max(np.abs(rhs_enlarged(fitted, params))) <= 1e-10

    def test_fit_at_equilibrium_is_trivial(self):
        params = enlarged_params()
        mu, fitted = fit_steady_state(equilibrium_state(params), params)
        assert np.allclose(mu, 0.0, atol=1e-10)
        assert np.allclose(fitted.as_array(), equilibrium_state(params).as_array(), rtol=1e-10)

    def test_invalid_inputs(self):
        params = enlarged_params()
        state = equilibrium_state(params)
        with pytest.raises(ParameterError):
            integrate_enlarged(state, params, 0.0)
        state.n_P = -1.0
        with pytest.raises(ParameterError):
            rhs_enlarged(state, params)


class TestFrozenReduction:
    """Unit tests for the reduction with frozen nucleotides."""

    def test_equilibrium_nucleotides_give_no_defect(self):
        params = enlarged_params()
        eq = equilibrium_state(params)
        reduced, net = frozen_reduction(eq.n_T, eq.n_D, eq.n_P, params)

        assert reduced.delta == pytest.approx(0.0, abs=1e-12)
        assert wegscheider_holds(net, tol=1e-9)[0]

    def test_raised_atp_sets_delta(self):
        params = enlarged_params()
        eq = equilibrium_state(params)
        reduced, net = frozen_reduction(2 * eq.n_T, eq.n_D, eq.n_P, params)

        assert reduced.delta == pytest.approx(math.log(2.0), rel=1e-12)
        for k in range(params.N):
            assert cycle_delta(net, k) == pytest.approx(math.log(2.0), rel=1e-9)

    def test_frozen_levels_must_be_positive(self):
        with pytest.raises(ParameterError):
            frozen_reduction(0.0, 1.0, 1.0, enlarged_params())


class TestExternalFluxes:
    """Unit tests for the fluxes that hold ATP away from equilibrium."""

    @pytest.mark.parametrize("delta", [0.5, 1.0, 2.0])
    def test_closed_form_matches_balance(self, delta):
        params = enlarged_params()
        closed = external_fluxes(params, delta)
        balance = flux_balance(params, delta)

        assert closed.J_T > 0 > closed.J_P
        assert closed.J_D == -closed.J_T
        assert closed.J_P == pytest.approx(-math.expm1(delta), rel=1e-12)
        assert balance.J_T == pytest.approx(closed.J_T, rel=1e-10)
        assert balance.J_D == pytest.approx(closed.J_D, rel=1e-10)
        assert balance.J_P == pytest.approx(closed.J_P, rel=1e-10)

    def test_no_flux_at_equilibrium(self):
        fluxes = external_fluxes(enlarged_params(), 0.0)
        assert fluxes.J_T == 0.0 and fluxes.J_P == 0.0

    def test_negative_delta_rejected(self):
        with pytest.raises(ParameterError):
            external_fluxes(enlarged_params(), -0.1)
