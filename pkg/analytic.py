"""Closed-form predictors for KPR Toolkit.

Evaluates the critical detailed-balance defect, the decay exponents, the
finite-N response asymptotics and the Laplace-domain kernel of the half-line
model. All square roots of discriminants are taken in the forms that avoid
cancellation: the smaller root of a quadratic is obtained as product over the
larger root.
"""

import cmath
import logging
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Dict, List, Optional, Tuple

from scipy import optimize, special

from crn_core import ModelParams
from errors import (
    AmbiguousRegimeError,
    BranchCutError,
    NoRootError,
    ParameterError,
    UnsupportedRegimeError,
)

logger = logging.getLogger('kpr_toolkit.analytic')

REGIME_TOL = 1e-12
THETA_TIE_TOL = 1e-12
SIGMA_C_TOL = 1e-10
SIGMA_C_BRACKET = (-50.0, 50.0)
SIGMA_C_MAX_ITER = 200


class Regime(Enum):
    SUBCRITICAL = 'subcritical'
    CRITICAL = 'critical'
    SUPERCRITICAL = 'supercritical'


class ThetaCase(Enum):
    """Ordering of w0, wS and w_theta in the half-line saddle analysis."""

    CASE1 = 'case1'  # w0 > w_theta > wS
    CASE2 = 'case2'  # w0 > wS > w_theta
    CASE3 = 'case3'  # w_theta > w0 > wS


@dataclass
class AnalyticReport:
    """Every closed-form quantity of one parameter set."""

    delta_c: float
    phi: float
    phi2: float
    psi: float
    lam: float
    nbar_S: float
    regime: Regime
    A0: Optional[float] = None
    B0: Optional[float] = None
    G: Optional[float] = None
    C1: Optional[float] = None
    C2: Optional[float] = None
    sigma_c: Optional[float] = None
    g_minus_a_gap: Optional[float] = None
    warnings: List[str] = field(default_factory=list)

    def as_dict(self) -> Dict[str, object]:
        """Flat mapping used for key=value and CSV output."""
        data = asdict(self)
        data['regime'] = self.regime.value
        data['warnings'] = '; '.join(self.warnings)
        return data


@dataclass
class LaplaceKernel:
    """Laplace-domain objects of the half-line model at one point z."""

    z: complex
    omega: complex
    A: complex
    nS_hat: complex
    varphi: complex
    varphi2: complex
    theta1: complex
    theta2: complex
    B: complex
    z_S: float
    z_A: float
    z1: float
    z2: float


@dataclass
class SaddleData:
    """Rescaled-time saddle-point data for one ray k = theta * tau."""

    theta: float
    tau: float
    w0: float
    wS: float
    wA: float
    w_theta: float
    theta_M: float
    Phi_at_w_theta: float
    Phi_prime_at_w_theta: float
    PsiM_at_theta: float
    PsiM_max: float


# ---------------------------------------------------------------------------
# Real-axis quantities
# ---------------------------------------------------------------------------

def delta_c(sigma: float, alpha: float, energy_E: float) -> float:
    """Critical detailed-balance defect log(1 + e^sigma / (alpha (e^E - 1)))."""
    return math.log1p(math.exp(sigma) / (alpha * math.expm1(energy_E)))


def phi_roots(sigma: float, alpha: float, delta: float, energy_E: float) -> Tuple[float, float]:
    """Both roots of alpha x^2 - Omega(0) x + alpha e^(delta+E) = 0.

    Returns:
        Tuple (phi, phi2) with phi <= phi2 and phi * phi2 = e^(delta+E)
    """
    omega0 = math.exp(sigma) + alpha * (math.exp(delta) + math.exp(energy_E))
    # Omega - d and Omega + d with d = 2 alpha e^((E+delta)/2)
    lower = math.exp(sigma) + alpha * (math.exp(energy_E / 2) - math.exp(delta / 2)) ** 2
    upper = math.exp(sigma) + alpha * (math.exp(energy_E / 2) + math.exp(delta / 2)) ** 2
    root = math.sqrt(lower) * math.sqrt(upper)
    phi2 = (omega0 + root) / (2 * alpha)
    phi = math.exp(delta + energy_E) / phi2
    return phi, phi2


def phi_of(params: ModelParams) -> float:
    return phi_roots(params.sigma, params.alpha, params.delta, params.energy_E)[0]


def psi(params: ModelParams) -> float:
    """Decay exponent E - log phi(sigma)."""
    return params.energy_E - math.log(phi_of(params))


def regime_of(params: ModelParams, tol: float = REGIME_TOL) -> Regime:
    gap = params.delta - delta_c(params.sigma, params.alpha, params.energy_E)
    if abs(gap) <= tol:
        return Regime.CRITICAL
    return Regime.SUPERCRITICAL if gap > 0 else Regime.SUBCRITICAL


def lam(params: ModelParams) -> float:
    """Response decay rate: E up to criticality, psi beyond it."""
    if regime_of(params) is Regime.SUPERCRITICAL:
        return psi(params)
    return params.energy_E


def nbar_S(sigma: float, energy_E: float) -> float:
    """Quasi-steady free-ligand fraction."""
    es = math.exp(sigma)
    return es / (es + math.exp(energy_E) / math.expm1(energy_E))


def z_A(params: ModelParams) -> float:
    return (params.alpha * math.expm1(params.energy_E) * math.expm1(params.delta)
            - math.exp(params.sigma))


def z_S(params: ModelParams) -> float:
    return -(1.0 / -math.expm1(-params.energy_E) + math.exp(params.sigma))


def branch_points(params: ModelParams) -> Tuple[float, float]:
    """Endpoints (z1, z2) of the branch segment, z1 < z2."""
    es = math.exp(params.sigma)
    half_E = math.exp(params.energy_E / 2)
    half_D = math.exp(params.delta / 2)
    z1 = -es - params.alpha * (half_E + half_D) ** 2
    z2 = -es - params.alpha * (half_E - half_D) ** 2
    return z1, z2


def a_zero(params: ModelParams) -> float:
    return 1.0 / -z_A(params)


def b_zero(params: ModelParams, phi: Optional[float] = None) -> float:
    if phi is None:
        phi = phi_of(params)
    alpha = params.alpha
    denominator = math.exp(params.sigma) + alpha * math.exp(params.delta) - alpha * phi
    return -alpha * math.exp(params.energy_E) * math.expm1(params.delta) / denominator


def g_constant(params: ModelParams, phi: Optional[float] = None) -> float:
    if phi is None:
        phi = phi_of(params)
    alpha = params.alpha
    denominator = math.exp(params.sigma) + alpha * math.exp(params.delta) - alpha * phi
    return (1.0 + alpha * a_zero(params) * (1.0 - phi)) / denominator


def critical_profile(params: ModelParams) -> Tuple[float, float]:
    """Stationary half-line profile on the critical line.

    n_k e^(kE) tends to slope * (k + offset) with slope
    nbar_S / (alpha (e^(E+delta) - 1)) and offset e^delta / (e^delta - 1).

    Returns:
        Tuple (slope, offset)
    """
    slope = nbar_S(params.sigma, params.energy_E) / (
        params.alpha * math.expm1(params.energy_E + params.delta))
    offset = math.exp(params.delta) / math.expm1(params.delta)
    return slope, offset


def stated_critical_constant(params: ModelParams) -> float:
    """Constant nbar_S (1 - 1/(2 alpha e^E)) quoted for the critical case.

    Reported next to ``critical_profile`` for comparison only; the exact
    critical profile grows linearly in k and has no finite limit against
    e^(-kE).
    """
    return nbar_S(params.sigma, params.energy_E) * (
        1.0 - 1.0 / (2 * params.alpha * math.exp(params.energy_E)))


# ---------------------------------------------------------------------------
# Report, sigma_c and response asymptotics
# ---------------------------------------------------------------------------

def compute_report(params: ModelParams) -> AnalyticReport:
    """Evaluate every closed-form quantity for a parameter set.

    Args:
        params: Model parameters

    Returns:
        AnalyticReport; on the critical line A0, B0, G, C1 and C2 are None
    """
    params.ensure_valid()
    alpha, E, D = params.alpha, params.energy_E, params.delta

    phi, phi2 = phi_roots(params.sigma, alpha, D, E)
    regime = regime_of(params)
    n_S = nbar_S(params.sigma, E)

    report = AnalyticReport(
        delta_c=delta_c(params.sigma, alpha, E),
        phi=phi,
        phi2=phi2,
        psi=E - math.log(phi),
        lam=lam(params),
        nbar_S=n_S,
        regime=regime,
    )

    if params.has_degradation:
        try:
            report.sigma_c = sigma_c(params.b_effective, params)
        except (NoRootError, ParameterError):
            report.sigma_c = None

    if regime is Regime.CRITICAL:
        report.warnings.append("critical regime: A0, B0, G, C1, C2 unavailable")
        return report

    A0 = a_zero(params)
    B0 = b_zero(params, phi)
    G = g_constant(params, phi)
    report.A0 = A0
    report.B0 = B0
    report.G = G
    report.g_minus_a_gap = abs((G - A0) - B0 * A0)
    report.C1 = 1.0 / (alpha * math.exp(D) * A0 * n_S * (1.0 - phi * math.exp(-(E + D))))
    report.C2 = 1.0 / (n_S * alpha * math.exp(D) * (G - A0) * (1.0 - phi ** 2 * math.exp(-(D + E))))

    if regime is Regime.SUPERCRITICAL and not report.C2 > 0:
        message = f"C2 = {report.C2!r} is not positive"
        report.warnings.append(message)
        logger.warning(message)

    return report


def sigma_c_closed_form(b: float, params: ModelParams) -> float:
    """Critical binding energy from phi(sigma_c) = e^(E-b) solved for e^sigma."""
    alpha, E, D = params.alpha, params.energy_E, params.delta
    target = math.exp(E - b)
    value = alpha * (target - math.exp(E)) * (target - math.exp(D)) / target
    if value <= 0:
        raise NoRootError(f"No critical binding energy for b = {b}")
    return math.log(value)


def sigma_c(b: float, params: ModelParams) -> float:
    """Solve lambda(sigma_c, E) = b by bisection.

    Args:
        b: Degradation exponent
        params: Model parameters; sigma is ignored

    Returns:
        sigma_c with |psi(sigma_c) - b| <= 1e-10

    Raises:
        NoRootError: If b is not strictly inside (max(E - delta, 0), E)
    """
    E, D = params.energy_E, params.delta
    lower_bound = max(E - D, 0.0)
    if not b > lower_bound:
        raise NoRootError(f"b = {b} must exceed max(E - delta, 0) = {lower_bound}")
    if not b < E:
        raise NoRootError(f"b = {b} must be below E = {E}")

    def excess(sigma: float) -> float:
        phi, _ = phi_roots(sigma, params.alpha, D, E)
        return E - math.log(phi) - b

    lo, hi = SIGMA_C_BRACKET
    iterations = 0
    while excess(lo) > 0 and iterations < SIGMA_C_MAX_ITER:
        lo *= 2
        iterations += 1
    while excess(hi) < 0 and hi < 700 and iterations < SIGMA_C_MAX_ITER:
        hi = min(hi * 2, 700.0)
        iterations += 1
    if excess(lo) > 0 or excess(hi) < 0:
        raise NoRootError(f"Could not bracket sigma_c for b = {b}")

    root = optimize.bisect(excess, lo, hi, xtol=1e-14, maxiter=SIGMA_C_MAX_ITER)
    if abs(excess(root)) > SIGMA_C_TOL:
        raise NoRootError(f"Bisection for sigma_c did not reach tolerance (b = {b})")
    return root


def asymptotic_log_odds(params: ModelParams) -> float:
    """log(1/p_res - 1) predicted for large N: N (lambda - b) + log C.

    Raises:
        UnsupportedRegimeError: On the critical line or when C is not positive
    """
    report = compute_report(params)
    b = params.b_effective
    N = params.N

    if report.regime is Regime.CRITICAL:
        raise UnsupportedRegimeError("Asymptotic p_res is not defined on the critical line")
    if report.regime is Regime.SUBCRITICAL:
        constant = report.C1
        exponent = N * (params.energy_E - b)
    else:
        constant = report.C2
        exponent = N * (report.psi - b)

    if not constant > 0:
        raise UnsupportedRegimeError(f"Response constant {constant!r} is not positive")
    return exponent + math.log(constant)


def asymptotic_pres(params: ModelParams) -> float:
    """Large-N response probability (1 + C e^(N (lambda - b)))^-1."""
    return float(special.expit(-asymptotic_log_odds(params)))


def critical_log_odds(params: ModelParams) -> float:
    """Large-N log(1/p_res - 1) on the critical line.

    Follows from the N e^(-NE) tail of the critical profile:
    N (E - b) - log N + E - log nbar_S.
    """
    N = params.N
    return (N * (params.energy_E - params.b_effective) - math.log(N)
            + params.energy_E - math.log(nbar_S(params.sigma, params.energy_E)))


# ---------------------------------------------------------------------------
# Laplace kernel
# ---------------------------------------------------------------------------

def on_branch_segment(z: complex, params: ModelParams, tol: float = 1e-12) -> bool:
    z1, z2 = branch_points(params)
    scale = max(1.0, abs(z))
    return abs(z.imag) <= tol * scale and z1 - tol * scale <= z.real <= z2 + tol * scale


def kernel_sqrt(z: complex, params: ModelParams) -> complex:
    """sqrt(Omega^2 - d^2) as sqrt(z - z2) sqrt(z - z1), cut exactly on [z1, z2]."""
    z1, z2 = branch_points(params)
    return cmath.sqrt(z - z2) * cmath.sqrt(z - z1)


def varphi_pair(z: complex, params: ModelParams) -> Tuple[complex, complex]:
    """Analytic roots (varphi, varphi2) of alpha x^2 - Omega(z) x + alpha e^(delta+E)."""
    alpha = params.alpha
    omega = z + math.exp(params.sigma) + alpha * (math.exp(params.delta) + math.exp(params.energy_E))
    root = kernel_sqrt(z, params)
    product = math.exp(params.delta + params.energy_E)

    small = omega - root
    large = omega + root
    if abs(small) >= abs(large):
        varphi = small / (2 * alpha)
        varphi2 = product / varphi
    else:
        varphi2 = large / (2 * alpha)
        varphi = product / varphi2
    return varphi, varphi2


def kernel_at(z: complex, params: ModelParams) -> LaplaceKernel:
    """Evaluate the half-line Laplace kernel at a complex point.

    Uses the principal branch of each square-root factor.

    Raises:
        BranchCutError: If z lies on the branch segment [z1, z2]
    """
    z = complex(z)
    if on_branch_segment(z, params):
        raise BranchCutError(f"z = {z} lies on the branch segment")

    alpha, E, D = params.alpha, params.energy_E, params.delta
    es = math.exp(params.sigma)
    zA = z_A(params)
    zS = z_S(params)
    z1, z2 = branch_points(params)

    omega = z + es + alpha * (math.exp(D) + math.exp(E))
    varphi, varphi2 = varphi_pair(z, params)

    A = 1.0 / (z - zA) if z != zA else complex(math.inf)
    if z == 0 or z == zS:
        nS_hat = complex(math.inf)
    else:
        nS_hat = (z + es) / (z * (z - zS))

    B = -alpha * math.exp(E) * math.expm1(D) / (z + es + alpha * math.exp(D) - alpha * varphi)

    return LaplaceKernel(
        z=z,
        omega=omega,
        A=A,
        nS_hat=nS_hat,
        varphi=varphi,
        varphi2=varphi2,
        theta1=varphi * math.exp(-E),
        theta2=varphi2 * math.exp(-E),
        B=B,
        z_S=zS,
        z_A=zA,
        z1=z1,
        z2=z2,
    )


def theta_bounds_hold(z: complex, params: ModelParams, tol: float = 1e-12) -> bool:
    """|theta1(z)| <= 1 <= |theta2(z)| at z."""
    kernel = kernel_at(z, params)
    return abs(kernel.theta1) <= 1 + tol and abs(kernel.theta2) >= 1 - tol


# ---------------------------------------------------------------------------
# Saddle-point data
# ---------------------------------------------------------------------------

def rescaled_time(t: float, params: ModelParams) -> float:
    return 2 * params.alpha * math.exp((params.energy_E + params.delta) / 2) * t


def time_from_tau(tau: float, params: ModelParams) -> float:
    return tau / (2 * params.alpha * math.exp((params.energy_E + params.delta) / 2))


def saddle_phi(w: float, theta: float) -> float:
    """Phi(w) = w - theta log(w + sqrt(w^2 - 1)) for w >= 1."""
    return w - theta * math.acosh(w)


def psi_m(theta: float, params: ModelParams) -> float:
    """Saddle exponent Phi(w_theta) + theta (E + delta) / 2."""
    w_theta = math.sqrt(1 + theta ** 2)
    return saddle_phi(w_theta, theta) + theta * (params.energy_E + params.delta) / 2


def pole_positions_w(params: ModelParams) -> Tuple[float, float, float]:
    """Images (w0, wS, wA) of the poles 0, z_S and z_A in the w-plane."""
    alpha, E, D = params.alpha, params.energy_E, params.delta
    shift = math.cosh((E - D) / 2)
    w0 = math.exp(params.sigma - (E + D) / 2) / (2 * alpha) + shift
    wS = -math.exp(-(E + D) / 2) / (2 * alpha * -math.expm1(-E)) + shift
    wA = math.cosh((E + D) / 2)
    return w0, wS, wA


def saddle_data(theta: float, t: float, params: ModelParams) -> SaddleData:
    """Collect the saddle-point data for the ray k = theta * tau.

    Args:
        theta: Ray slope (>= 0)
        t: Physical time
        params: Model parameters
    """
    if theta < 0:
        raise ParameterError("theta must be nonnegative")

    w0, wS, wA = pole_positions_w(params)
    w_theta = math.sqrt(1 + theta ** 2)
    if theta > 0:
        # five-point centered difference
        h = min(1e-3, (w_theta - 1) / 4)
        f = lambda w: saddle_phi(w, theta)
        derivative = (-f(w_theta + 2 * h) + 8 * f(w_theta + h)
                      - 8 * f(w_theta - h) + f(w_theta - 2 * h)) / (12 * h)
    else:
        # w_theta = 1 is the endpoint of the real branch; the saddle degenerates
        derivative = 0.0

    half = (params.energy_E + params.delta) / 2
    return SaddleData(
        theta=theta,
        tau=rescaled_time(t, params),
        w0=w0,
        wS=wS,
        wA=wA,
        w_theta=w_theta,
        theta_M=math.sinh(half),
        Phi_at_w_theta=saddle_phi(w_theta, theta),
        Phi_prime_at_w_theta=derivative,
        PsiM_at_theta=psi_m(theta, params),
        PsiM_max=math.cosh(half),
    )


def classify_theta_regime(theta: float, params: ModelParams) -> ThetaCase:
    """Order w0, wS and w_theta for a supercritical parameter set.

    Raises:
        UnsupportedRegimeError: If the parameters are not supercritical
        AmbiguousRegimeError: If w_theta ties with w0 or wS within 1e-12
    """
    if theta < 0:
        raise ParameterError("theta must be nonnegative")
    if regime_of(params) is not Regime.SUPERCRITICAL:
        raise UnsupportedRegimeError("theta classification needs supercritical parameters")

    w0, wS, _ = pole_positions_w(params)
    w_theta = math.sqrt(1 + theta ** 2)

    if abs(w_theta - w0) <= THETA_TIE_TOL or abs(w_theta - wS) <= THETA_TIE_TOL:
        raise AmbiguousRegimeError(f"w_theta = {w_theta} ties with a pole image (w0={w0}, wS={wS})")
    if w_theta > w0:
        return ThetaCase.CASE3
    if w_theta > wS:
        return ThetaCase.CASE1
    return ThetaCase.CASE2
