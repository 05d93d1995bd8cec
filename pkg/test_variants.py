"""Tests for the alternative defect placements."""

import math
import numpy as np
import pytest
from hypothesis import given, assume, strategies as st, settings

import analytic
from crn_core import ModelParams
from errors import ParameterError
from variants import (VariantKind, VariantSpec, attachment_delta_c, attachment_g, delta_infty_discriminates,
                      delta_infty_lambda, delta_infty_phi, delta_scan, dephosphorylation_delta_c,
                      dephosphorylation_g, detachment_growth_increments, parse_kind, variant_exponent,
                      variant_steady_profile)


def variant(kind: VariantKind, delta: float, sigma: float = 0.0, energy_E: float = 0.5, K: int = 400,
            gamma=None) -> VariantSpec:
    params = ModelParams(N=1, alpha=1.0, delta=delta, sigma=sigma, energy_E=energy_E)
    return VariantSpec(kind=kind, params=params, K=K, gamma=gamma)


# Feature: kpr-toolkit, Property 21: Dephosphorylation threshold
# Validates: variants dephosphorylation_delta_c
@settings(max_examples=100)
@given(sigma=st.floats(min_value=-3.0, max_value=1.0), alpha=st.floats(min_value=0.5, max_value=3.0),
       energy_E=st.floats(min_value=0.3, max_value=2.0))
def test_property_dephosphorylation_threshold(sigma, alpha, energy_E):
    """
    Property 21: Dephosphorylation threshold
    At Delta_c the homogeneous decay rate of the dephosphorylation variant equals E.
    """
    delta_c = dephosphorylation_delta_c(sigma, alpha, energy_E)
    assume(delta_c is not None)

    assert delta_c > 0
    g = dephosphorylation_g(sigma, alpha, delta_c, energy_E)
    assert -math.log(g) == pytest.approx(energy_E, rel=1e-9)


class TestClosedForms:
    """Unit tests for the variant thresholds and limits."""

    def test_attachment_threshold(self):
        delta_c = attachment_delta_c(0.0, 1.0, 0.5)
        assert delta_c == pytest.approx(0.638, abs=1e-3)
        assert attachment_g(0.0, 1.0, 0.5) * math.exp(0.5 + delta_c) == pytest.approx(1.0)
        assert all(attachment_delta_c(s, 1.0, 0.5) > 0 for s in (-3.0, 0.0, 3.0))

    def test_dephosphorylation_threshold(self):
        assert dephosphorylation_delta_c(-1.0, 1.0, 1.0) == pytest.approx(0.241, abs=1e-3)
        assert dephosphorylation_delta_c(2.0, 1.0, 1.0) is None

    def test_delta_infty_limit(self):
        sigma, gamma, energy_E, delta = 0.5, 2.0, 1.0, 25.0
        phi = analytic.phi_roots(sigma, gamma * math.exp(-delta), delta, energy_E)[0]

        assert delta_infty_phi(sigma, gamma, energy_E) == pytest.approx(phi, rel=1e-6)
        assert delta_infty_lambda(sigma, gamma, energy_E) == pytest.approx(math.log1p(math.exp(0.5) / 2))
        assert delta_infty_discriminates(sigma, gamma, energy_E)
        assert not delta_infty_discriminates(3.0, gamma, energy_E)

    def test_delta_infty_needs_gamma(self):
        with pytest.raises(ParameterError):
            delta_infty_phi(0.0, 0.0, 1.0)

    def test_parse_kind(self):
        assert parse_kind('attachment') is VariantKind.ATTACHMENT
        with pytest.raises(ParameterError, match="Unknown variant kind"):
            parse_kind('phosphorylation')


class TestSpec:
    """Unit tests for variant validation."""

    def test_gamma_only_for_delta_infty(self):
        spec = variant(VariantKind.ATTACHMENT, 1.0, gamma=2.0)
        assert any("gamma only applies" in error for error in spec.validate())
        with pytest.raises(ParameterError, match="Invalid variant"):
            variant_steady_profile(spec)

    def test_delta_infty_without_gamma(self):
        spec = variant(VariantKind.DELTA_INFTY, 30.0)
        with pytest.raises(ParameterError):
            variant_steady_profile(spec)

    def test_fit_needs_enough_sites(self):
        with pytest.raises(ParameterError, match="K >= 50"):
            variant_exponent(variant(VariantKind.ATTACHMENT, 1.0, K=40))


class TestExponents:
    """Unit tests for fitted decay rates and sigma sensitivity."""

    def test_attachment_above_threshold(self):
        delta_c = attachment_delta_c(0.0, 1.0, 0.5)
        result = variant_exponent(variant(VariantKind.ATTACHMENT, delta_c + 1.0))

        assert result.lam == pytest.approx(-math.log(attachment_g(0.0, 1.0, 0.5)), rel=0.02)
        assert result.lam == pytest.approx(result.predicted, rel=0.02)
        assert result.sigma_sensitive

    def test_attachment_below_threshold(self):
        delta = attachment_delta_c(0.0, 1.0, 0.5) - 0.5
        result = variant_exponent(variant(VariantKind.ATTACHMENT, delta))

        assert result.lam == pytest.approx(0.5 + delta, rel=1e-6)
        assert not result.sigma_sensitive

    def test_dephosphorylation_switch(self):
        delta_c = dephosphorylation_delta_c(-1.0, 1.0, 1.0)
        flags = [variant_exponent(variant(VariantKind.DEPHOSPHORYLATION, delta_c + shift, sigma=-1.0,
                                          energy_E=1.0, K=800)).sigma_sensitive
                 for shift in (-0.2, 0.2)]
        assert flags == [False, True]

    def test_delta_infty_exponent(self):
        spec = variant(VariantKind.DELTA_INFTY, 30.0, sigma=0.5, energy_E=1.0, gamma=2.0)
        result = variant_exponent(spec)
        assert result.lam == pytest.approx(delta_infty_lambda(0.5, 2.0, 1.0), rel=1e-6)
        assert result.sigma_sensitive

    def test_parallel_scan_is_identical(self):
        spec = variant(VariantKind.ATTACHMENT, 1.0, K=100)
        serial = delta_scan(spec, [0.2, 1.5], workers=1)
        parallel = delta_scan(spec, [0.2, 1.5], workers=2)
        assert [row.lam for row in serial] == [row.lam for row in parallel]


class TestDetachment:
    """Unit tests for the detachment variant."""

    def test_profile_follows_attachment_over_detachment(self):
        spec = variant(VariantKind.DETACHMENT, 1.0, K=200)
        profile = variant_steady_profile(spec)
        window = (profile.k >= 50) & (profile.k <= 150)
        scaled = profile.log_n[window] + profile.k[window] * profile.kappa

        assert profile.kappa == pytest.approx(1.5)
        assert np.ptp(scaled) <= 1e-6
        assert scaled[0] == pytest.approx(0.0, abs=1e-6)

    def test_growth_increments(self):
        spec = variant(VariantKind.DETACHMENT, 1.0, K=60)
        increments = detachment_growth_increments(spec)

        assert len(increments) == 59
        assert np.allclose(np.diff(increments[-10:]), 1.0, rtol=0, atol=1e-9)

    def test_growth_increments_need_detachment(self):
        with pytest.raises(ParameterError):
            detachment_growth_increments(variant(VariantKind.ATTACHMENT, 1.0))
