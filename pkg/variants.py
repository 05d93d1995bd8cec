"""Alternative placements of the detailed-balance defect for KPR Toolkit.

The ladder keeps its architecture while Delta moves from the phosphorylation
step to detachment, attachment or dephosphorylation; a fourth kind takes the
Delta -> infinity limit at fixed gamma = alpha e^Delta. Stationary profiles
are computed relative to a fixed free-ligand drive n_S = 1.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, stats

from crn_core import ModelParams
from errors import DegenerateParameterError, ParameterError

logger = logging.getLogger('kpr_toolkit.variants')

MIN_FIT_K = 50
SIGMA_SHIFT = 0.5
SENSITIVITY_FACTOR = 5.0
SENSITIVITY_FLOOR = 1e-4


class VariantKind(Enum):
    DETACHMENT = 'detachment'
    ATTACHMENT = 'attachment'
    DEPHOSPHORYLATION = 'dephosphorylation'
    DELTA_INFTY = 'delta_infty'


@dataclass(frozen=True)
class VariantSpec:
    """A variant ladder truncated at K (n_{K+1} = 0).

    For DELTA_INFTY the forward rate is gamma and the backward rate
    gamma e^{E - Delta}; params.alpha is ignored.
    """

    kind: VariantKind
    params: ModelParams
    K: int
    gamma: Optional[float] = None

    def validate(self) -> List[str]:
        errors = list(self.params.validate())
        if not isinstance(self.K, int) or self.K < 2:
            errors.append(f"K must be an integer >= 2 (got {self.K!r})")
        if self.kind is VariantKind.DELTA_INFTY:
            if self.gamma is None or not self.gamma > 0 or not math.isfinite(self.gamma):
                errors.append(f"delta_infty needs a finite gamma > 0 (got {self.gamma!r})")
        elif self.gamma is not None:
            errors.append(f"gamma only applies to delta_infty (kind {self.kind.value})")
        return errors

    def ensure_valid(self):
        errors = self.validate()
        if errors:
            raise ParameterError("Invalid variant: " + "; ".join(errors))

    def with_sigma(self, sigma: float) -> 'VariantSpec':
        return replace(self, params=self.params.with_changes(sigma=sigma))


@dataclass
class VariantRates:
    """Log attachment and detachment rates per site, constant hopping rates."""

    log_attach: np.ndarray
    log_detach: np.ndarray
    forward: float
    backward: float


@dataclass
class VariantProfile:
    """Stationary profile n_k / n_S, stored as logarithms."""

    kind: VariantKind
    k: np.ndarray
    log_n: np.ndarray
    kappa: float

    def values(self) -> np.ndarray:
        return np.exp(self.log_n)


@dataclass
class VariantExponent:
    lam: float
    stderr: float
    sigma_sensitive: bool
    lam_minus: float
    lam_plus: float
    predicted: Optional[float] = None


def parse_kind(value: str) -> VariantKind:
    try:
        return VariantKind(value)
    except ValueError:
        choices = ', '.join(kind.value for kind in VariantKind)
        raise ParameterError(f"Unknown variant kind {value!r}; expected one of {choices}") from None


def variant_rates(spec: VariantSpec) -> VariantRates:
    """Rates of the variant ladder for sites 0..K."""
    p = spec.params
    k = np.arange(spec.K + 1, dtype=float)
    E, D, sigma = p.energy_E, p.delta, p.sigma

    if spec.kind is VariantKind.DETACHMENT:
        return VariantRates(log_attach=-k * E, log_detach=sigma + k * D,
                            forward=p.alpha, backward=p.alpha * math.exp(E))
    if spec.kind is VariantKind.ATTACHMENT:
        return VariantRates(log_attach=-k * (E + D), log_detach=np.full_like(k, sigma),
                            forward=p.alpha, backward=p.alpha * math.exp(E))
    if spec.kind is VariantKind.DEPHOSPHORYLATION:
        return VariantRates(log_attach=-k * E, log_detach=np.full_like(k, sigma),
                            forward=p.alpha, backward=p.alpha * math.exp(E - D))
    return VariantRates(log_attach=-k * E, log_detach=np.full_like(k, sigma),
                        forward=spec.gamma, backward=spec.gamma * math.exp(E - D))


def predicted_exponent(spec: VariantSpec) -> float:
    """Decay rate of n_k expected from the closed forms."""
    p = spec.params
    if spec.kind is VariantKind.DETACHMENT:
        return p.energy_E + p.delta
    if spec.kind is VariantKind.ATTACHMENT:
        return min(p.energy_E + p.delta, -math.log(attachment_g(p.sigma, p.alpha, p.energy_E)))
    if spec.kind is VariantKind.DEPHOSPHORYLATION:
        g = dephosphorylation_g(p.sigma, p.alpha, p.delta, p.energy_E)
        return min(p.energy_E, -math.log(g))
    return delta_infty_lambda(p.sigma, spec.gamma, p.energy_E)


def variant_steady_profile(spec: VariantSpec, kappa: Optional[float] = None) -> VariantProfile:
    """Stationary profile with n_S = 1 held fixed and n_{K+1} = 0.

    Solves for y_k = e^{k kappa} n_k with every row divided by its diagonal,
    which keeps the tridiagonal system finite for detachment rates e^{sigma + k Delta}.

    Args:
        spec: Variant ladder
        kappa: Scaling exponent (defaults to the predicted decay rate)

    Returns:
        VariantProfile with log(n_k / n_S)

    Raises:
        DegenerateParameterError: If the stationary system is singular
    """
    spec.ensure_valid()
    rates = variant_rates(spec)
    K = spec.K
    if kappa is None:
        kappa = predicted_exponent(spec)
    k = np.arange(K + 1, dtype=float)

    hop = np.full(K + 1, rates.forward + rates.backward)
    hop[0] = rates.forward
    log_hop = np.log(hop)
    log_diag = np.logaddexp(rates.log_detach, log_hop)

    # row k: y_k - (fwd e^kappa / D_k) y_{k-1} - (bwd e^-kappa / D_k) y_{k+1} = a_k e^{k kappa} / D_k
    rhs = np.exp(rates.log_attach + k * kappa - log_diag)
    banded = np.zeros((3, K + 1))
    banded[0, 1:] = -rates.backward * math.exp(-kappa) * np.exp(-log_diag[:-1])
    banded[1, :] = 1.0
    banded[2, :-1] = -rates.forward * math.exp(kappa) * np.exp(-log_diag[1:])

    try:
        y = linalg.solve_banded((1, 1), banded, rhs)
    except (linalg.LinAlgError, ValueError) as error:
        raise DegenerateParameterError(f"Stationary {spec.kind.value} system is singular: {error}") from error
    if not np.all(np.isfinite(y)):
        raise DegenerateParameterError(f"Stationary {spec.kind.value} solve produced non-finite values")
    if np.any(y <= 0):
        logger.warning("%s profile has %d nonpositive sites", spec.kind.value, int(np.count_nonzero(y <= 0)))

    with np.errstate(divide='ignore'):
        log_n = np.log(np.clip(y, 0.0, None)) - k * kappa
    return VariantProfile(kind=spec.kind, k=np.arange(K + 1), log_n=log_n, kappa=kappa)


def fit_profile_exponent(profile: VariantProfile) -> Tuple[float, float]:
    """Least-squares decay rate over k in [K/4, 3K/4].

    Returns:
        Tuple (lambda, stderr) with log n_k ~ const - lambda k
    """
    K = int(profile.k[-1])
    mask = (profile.k >= K / 4) & (profile.k <= 3 * K / 4) & np.isfinite(profile.log_n)
    if np.count_nonzero(mask) < 3:
        raise ParameterError(f"Fit window of K = {K} holds fewer than three finite sites")
    fit = stats.linregress(profile.k[mask], profile.log_n[mask])
    return -float(fit.slope), float(fit.stderr)


def variant_exponent(spec: VariantSpec) -> VariantExponent:
    """Fitted decay rate and its sensitivity to sigma.

    The exponent is recomputed at sigma +/- 0.5; the fit counts as
    sigma-sensitive when the two differ by more than
    max(5 * stderr, 1e-4 * |lambda|).

    Raises:
        ParameterError: If K < 50
    """
    if spec.K < MIN_FIT_K:
        raise ParameterError(f"Exponent fits need K >= {MIN_FIT_K} (got {spec.K})")
    lam, stderr = fit_profile_exponent(variant_steady_profile(spec))
    sigma = spec.params.sigma
    lam_minus, _ = fit_profile_exponent(variant_steady_profile(spec.with_sigma(sigma - SIGMA_SHIFT)))
    lam_plus, _ = fit_profile_exponent(variant_steady_profile(spec.with_sigma(sigma + SIGMA_SHIFT)))
    threshold = max(SENSITIVITY_FACTOR * stderr, SENSITIVITY_FLOOR * abs(lam))
    sensitive = abs(lam_plus - lam_minus) > threshold
    logger.debug("%s lambda=%.10g (%.10g, %.10g) sensitive=%s", spec.kind.value, lam, lam_minus,
                 lam_plus, sensitive)
    return VariantExponent(lam=lam, stderr=stderr, sigma_sensitive=sensitive, lam_minus=lam_minus,
                           lam_plus=lam_plus, predicted=predicted_exponent(spec))


def _smaller_root(s: float, product: float) -> float:
    """Smaller root of x^2 - s x + product, computed without cancellation."""
    disc = s * s - 4 * product
    if disc < 0:
        raise ParameterError(f"Complex roots (s = {s!r}, product = {product!r})")
    return 2 * product / (s + math.sqrt(disc))


def attachment_g(sigma: float, alpha: float, energy_E: float) -> float:
    """Homogeneous decay ratio g(sigma) < 1 when Delta scales the attachment rates."""
    s = 1 + math.exp(sigma - energy_E) / alpha + math.exp(-energy_E)
    return _smaller_root(s, math.exp(-energy_E))


def attachment_delta_c(sigma: float, alpha: float, energy_E: float) -> float:
    """Delta at which g(sigma) e^{E + Delta} = 1; always positive."""
    return -math.log(attachment_g(sigma, alpha, energy_E)) - energy_E


def dephosphorylation_g(sigma: float, alpha: float, delta: float, energy_E: float) -> float:
    """Homogeneous decay ratio when Delta lowers the dephosphorylation rate to alpha e^{E - Delta}."""
    ratio = math.exp(delta - energy_E)
    s = 1 + ratio + math.exp(sigma + delta - energy_E) / alpha
    return _smaller_root(s, ratio)


def dephosphorylation_delta_c(sigma: float, alpha: float, energy_E: float) -> Optional[float]:
    """-log(1 - e^{sigma-E} / (alpha (1 - e^{-E}))), or None when the ratio is >= 1."""
    ratio = math.exp(sigma - energy_E) / (alpha * -math.expm1(-energy_E))
    if ratio >= 1:
        return None
    return -math.log1p(-ratio)


def delta_infty_phi(sigma: float, gamma: float, energy_E: float) -> float:
    """Limit of phi(sigma) as Delta -> infinity with alpha e^Delta = gamma."""
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive (got {gamma!r})")
    return math.exp(energy_E) / (1 + math.exp(sigma) / gamma)


def delta_infty_lambda(sigma: float, gamma: float, energy_E: float) -> float:
    """min(E, log(1 + e^sigma / gamma))."""
    return min(energy_E, math.log1p(math.exp(sigma) / gamma))


def delta_infty_discriminates(sigma: float, gamma: float, energy_E: float) -> bool:
    return math.log1p(math.exp(sigma) / gamma) < energy_E


def detachment_growth_increments(spec: VariantSpec) -> np.ndarray:
    """Log-ratio increments W_{k+1} - W_k of the growing homogeneous solution.

    psi_0 = psi_1 = 1 and alpha e^E psi_{k+1} = D_k psi_k - alpha psi_{k-1}
    with D_k = e^{sigma + k Delta} + alpha e^E + alpha. The increments grow
    by Delta per site once the detachment rate dominates, so W_k ~ k^2 Delta / 2.

    Returns:
        Array of W_{k+1} - W_k for k = 1..K-1
    """
    if spec.kind is not VariantKind.DETACHMENT:
        raise ParameterError(f"Growth increments apply to the detachment variant (got {spec.kind.value})")
    spec.ensure_valid()
    p = spec.params
    log_back = math.log(p.alpha) + p.energy_E
    log_hop = math.log(p.alpha * (math.exp(p.energy_E) + 1))
    increments = np.empty(spec.K - 1)
    log_ratio = 0.0
    for index, k in enumerate(range(1, spec.K)):
        log_d = np.logaddexp(p.sigma + k * p.delta, log_hop)
        correction = math.exp(math.log(p.alpha) - log_ratio - log_d)
        if correction >= 1:
            raise DegenerateParameterError(f"Growing solution changes sign at k = {k}")
        log_ratio = float(log_d + math.log1p(-correction) - log_back)
        increments[index] = log_ratio
    return increments


def _exponent_task(spec: VariantSpec) -> VariantExponent:
    return variant_exponent(spec)


def delta_scan(spec: VariantSpec, deltas: Sequence[float], workers: int = 1) -> List[VariantExponent]:
    """variant_exponent along a grid of Delta values."""
    specs = [replace(spec, params=spec.params.with_changes(delta=float(delta))) for delta in deltas]
    if workers > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_exponent_task, specs))
    return [variant_exponent(item) for item in specs]
