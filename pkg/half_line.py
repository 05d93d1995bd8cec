"""Half-line (N = infinity) model for KPR Toolkit.

Integrates the truncated lattice, evaluates the closed-form Laplace
transform of every site, inverts it on a fixed Talbot contour and checks the
long-time ratios along rays k = theta * tau.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import expm_multiply

import analytic
from analytic import Regime, ThetaCase
from crn_core import ModelParams
from errors import EvaluationError, InversionError, ParameterError, TruncationError

logger = logging.getLogger('kpr_toolkit.half_line')

MASS_TOL = 1e-8
LEAK_TOL = 1e-10
POLE_DISTANCE = 1e-10
TALBOT_ORDER = 16
TALBOT_RTOL = 1e-7
TALBOT_ATOL = 1e-14
DEFAULT_TAUS = (40.0, 80.0, 160.0)


@dataclass
class HalfLineRun:
    """Lattice state at one time.

    ``scaled`` holds y_k = e^{k kappa} n_k, which keeps far sites at full
    relative precision; ``n`` is the unscaled profile.
    """

    K: int
    t: float
    tau: float
    nS: float
    n: np.ndarray
    scaled: np.ndarray
    kappa: float
    mass: float
    theta_targets: List[float] = field(default_factory=list)

    def site(self, theta: float) -> int:
        return int(math.floor(theta * self.tau))


@dataclass
class ConvergenceRow:
    theta: float
    tau: float
    k: int
    ratio: float
    gap: float


@dataclass
class ConvergenceTable:
    """Measured ratios along a tau ladder against their predicted limit."""

    regime: Regime
    case: Optional[ThetaCase]
    normalization: str
    limit: float
    rows: List[ConvergenceRow]
    stated_limit: Optional[float] = None

    @property
    def gaps(self) -> List[float]:
        return [row.gap for row in self.rows]

    def gap_decreasing(self) -> bool:
        gaps = self.gaps
        return all(b < a for a, b in zip(gaps, gaps[1:]))

    def final_relative_gap(self) -> float:
        last = self.rows[-1]
        if self.limit == 0:
            return abs(last.ratio)
        return last.gap / abs(self.limit)


def _require_no_degradation(params: ModelParams):
    params.ensure_valid()
    if params.has_degradation:
        raise ParameterError("The half-line model has no degradation; drop b and mu")


def scaling_exponent(params: ModelParams) -> float:
    """Exponent kappa of the natural normalization e^{-k kappa} of n_k."""
    if analytic.regime_of(params) is Regime.SUPERCRITICAL:
        return analytic.psi(params)
    return params.energy_E


def default_truncation(theta_max: float, tau: float, params: ModelParams) -> int:
    """Lattice size that keeps the closure at K away from every reported site."""
    theta_M = math.sinh((params.energy_E + params.delta) / 2)
    return max(math.ceil(3 * theta_max * tau), math.ceil(1.5 * theta_M * tau)) + 20


def halfline_generator(params: ModelParams, K: int, kappa: float = 0.0) -> sparse.csc_matrix:
    """Generator of (n_S, y_0, ..., y_K) with y_k = e^{k kappa} n_k.

    Site K loses its phosphorylation flux (n_{K+1} = 0).
    """
    alpha, E, D = params.alpha, params.energy_E, params.delta
    detach = math.exp(params.sigma)
    phos = alpha * math.exp(D)
    dephos = alpha * math.exp(E)
    k = np.arange(K + 1)

    size = K + 2
    attach_total = -math.expm1(-(K + 1) * E) / -math.expm1(-E)

    diag = np.empty(size)
    diag[0] = -attach_total
    diag[1:] = -(detach + phos + dephos)
    diag[1] = -(detach + phos)

    rows = [0]
    cols = [0]
    values = [diag[0]]

    # S row and column
    rows.extend([0] * (K + 1))
    cols.extend(k + 1)
    values.extend(detach * np.exp(-kappa * k))
    rows.extend(k + 1)
    cols.extend([0] * (K + 1))
    values.extend(np.exp(k * (kappa - E)))

    # complex block
    rows.extend(k + 1)
    cols.extend(k + 1)
    values.extend(diag[1:])
    rows.extend(k[:-1] + 1)
    cols.extend(k[:-1] + 2)
    values.extend(np.full(K, dephos * math.exp(-kappa)))
    rows.extend(k[1:] + 1)
    cols.extend(k[1:])
    values.extend(np.full(K, phos * math.exp(kappa)))

    return sparse.csc_matrix((values, (rows, cols)), shape=(size, size))


def integrate_halfline(params: ModelParams, t: float, K: Optional[int] = None,
                       theta_targets: Sequence[float] = ()) -> HalfLineRun:
    """Integrate the truncated half-line lattice from n(0) = (1, 0, ...).

    Args:
        params: Model parameters without degradation
        t: Final time (>= 0)
        K: Last lattice site; chosen from the targets when omitted
        theta_targets: Ray slopes whose sites k = floor(theta tau) are reported

    Returns:
        HalfLineRun at time t

    Raises:
        TruncationError: If K is below 3 max(theta) tau or the closure at K
            leaked more than 1e-10 of the mass
    """
    _require_no_degradation(params)
    if t < 0:
        raise ParameterError("Time must be nonnegative")

    tau = analytic.rescaled_time(t, params)
    theta_max = max(theta_targets) if theta_targets else 0.0
    if K is None:
        K = default_truncation(theta_max, tau, params)
    if K < 1:
        raise ParameterError("Truncation K must be at least 1")
    if theta_targets and K < 3 * theta_max * tau:
        raise TruncationError(f"K = {K} is below 3 theta tau = {3 * theta_max * tau:.1f}")

    kappa = scaling_exponent(params)
    start = np.zeros(K + 2)
    start[0] = 1.0

    if t == 0:
        state = start
    else:
        state = expm_multiply(halfline_generator(params, K, kappa) * t, start)

    k = np.arange(K + 1)
    weights = np.exp(-kappa * k)
    scaled = state[1:]
    n = scaled * weights
    mass = float(state[0] + np.sum(n))

    leak = 1.0 - mass
    if leak > LEAK_TOL:
        raise TruncationError(f"Closure at K = {K} leaked {leak:.3e} of the mass by t = {t}")
    if abs(leak) > MASS_TOL:
        logger.warning("Mass drift %.3e at t = %r", leak, t)

    return HalfLineRun(
        K=K,
        t=t,
        tau=tau,
        nS=float(state[0]),
        n=n,
        scaled=scaled,
        kappa=kappa,
        mass=mass,
        theta_targets=list(theta_targets),
    )


def dense_halfline(params: ModelParams, t: float, K: int) -> np.ndarray:
    """Reference (n_S, n_0, ..., n_K) from the dense matrix exponential."""
    _require_no_degradation(params)
    matrix = halfline_generator(params, K).toarray()
    start = np.zeros(K + 2)
    start[0] = 1.0
    return linalg.expm(matrix * t) @ start


def front_position(run: HalfLineRun, params: ModelParams) -> float:
    """Half-maximum location of e^{kE} n_k beyond its maximum."""
    profile = run.scaled * np.exp((params.energy_E - run.kappa) * np.arange(run.K + 1))
    peak = int(np.argmax(profile))
    half = profile[peak] / 2
    beyond = np.nonzero(profile[peak:] < half)[0]
    if len(beyond) == 0:
        return float(run.K)
    j = peak + int(beyond[0])
    # linear interpolation between j-1 and j
    lo, hi = profile[j - 1], profile[j]
    return float(j - 1 + (lo - half) / (lo - hi))


# ---------------------------------------------------------------------------
# Laplace domain
# ---------------------------------------------------------------------------

def _segment_distance(z: complex, z1: float, z2: float) -> float:
    x = min(max(z.real, z1), z2)
    return abs(z - x)


def _scaled_transform(k: int, z: complex, params: ModelParams) -> complex:
    """A(z) nS_hat(z) (1 + B(z) varphi(z)^k), i.e. e^{kE} times the transform of n_k."""
    kernel = analytic.kernel_at(z, params)
    return kernel.A * kernel.nS_hat * (1 + kernel.B * kernel.varphi ** k)


def _removable_radius(params: ModelParams) -> float:
    zA = analytic.z_A(params)
    z1, z2 = analytic.branch_points(params)
    nearest = min(abs(zA), abs(zA - analytic.z_S(params)), _segment_distance(complex(zA), z1, z2))
    return 0.25 * min(nearest, 1.0 + abs(zA))


def _removable_point_value(k: int, z: complex, params: ModelParams) -> complex:
    """Value near the removable point z_A from Cauchy's formula on a circle."""
    zA = analytic.z_A(params)
    radius = _removable_radius(params)
    nodes = 32
    total = 0j
    for j in range(nodes):
        zeta = zA + radius * np.exp(2j * np.pi * j / nodes)
        total += _scaled_transform(k, zeta, params) * (zeta - zA) / (zeta - z)
    return total / nodes


def closed_form_nk_hat(k: int, z: complex, params: ModelParams) -> complex:
    """Laplace transform of n_k at z.

    A(z) nS_hat(z) e^{-kE} (1 + B(z) varphi(z)^k); the apparent pole at
    z_A cancels and is evaluated through a contour average.

    Raises:
        EvaluationError: If z is within 1e-10 of a pole or the branch segment
    """
    if k < 0:
        raise ParameterError("Site index must be nonnegative")
    z = complex(z)
    z1, z2 = analytic.branch_points(params)
    zS = analytic.z_S(params)
    if abs(z) < POLE_DISTANCE or abs(z - zS) < POLE_DISTANCE:
        raise EvaluationError(f"z = {z} is too close to a pole of nS_hat")
    if _segment_distance(z, z1, z2) < POLE_DISTANCE:
        raise EvaluationError(f"z = {z} is too close to the branch segment")

    zA = analytic.z_A(params)
    if abs(z - zA) < min(1e-3 * (1.0 + abs(zA)), 0.5 * _removable_radius(params)):
        value = _removable_point_value(k, z, params)
    else:
        value = _scaled_transform(k, z, params)
    return value * math.exp(-k * params.energy_E)


def _talbot(k: int, t: float, params: ModelParams, order: int) -> float:
    """Fixed Talbot contour with r = 2 order / 5."""
    r = 2.0 * order / 5.0
    theta = np.arange(1, order) * np.pi / order
    cot = 1.0 / np.tan(theta)
    nodes = r / t * theta * (cot + 1j)
    weights = np.exp(t * nodes) * (1 + 1j * (theta + (theta * cot - 1) * cot))

    p0 = r / t
    total = 0.5 * math.exp(r) * closed_form_nk_hat(k, p0, params).real
    for node, weight in zip(nodes, weights):
        total += (weight * closed_form_nk_hat(k, node, params)).real
    return r / (order * t) * total


def talbot_invert(k: int, t: float, params: ModelParams, order: int = TALBOT_ORDER) -> float:
    """n_k(t) by fixed-Talbot inversion of the closed-form transform.

    The estimate at ``order`` is validated against ``2 * order`` and the
    higher-order value is returned.

    Raises:
        InversionError: If the two orders disagree beyond tolerance
    """
    if t <= 0:
        raise ParameterError("Talbot inversion needs t > 0")
    _require_no_degradation(params)

    coarse = _talbot(k, t, params, order)
    fine = _talbot(k, t, params, 2 * order)
    scale = math.exp(-k * params.energy_E)
    if abs(fine - coarse) > TALBOT_RTOL * abs(fine) + TALBOT_ATOL * scale:
        raise InversionError(
            f"Talbot orders {order} and {2 * order} disagree at k={k}, t={t}: {coarse!r} vs {fine!r}"
        )
    return fine


def residue_limit(k: int, params: ModelParams) -> float:
    """Long-time value of n_k: the residue of e^{zt} nhat_k at z = 0."""
    _require_no_degradation(params)
    E = params.energy_E
    n_S = analytic.nbar_S(params.sigma, E)
    if analytic.regime_of(params) is Regime.CRITICAL:
        slope, offset = analytic.critical_profile(params)
        return slope * (k + offset) * math.exp(-k * E)
    phi = analytic.phi_of(params)
    A0 = analytic.a_zero(params)
    B0 = analytic.b_zero(params, phi)
    return n_S * A0 * (1 + B0 * phi ** k) * math.exp(-k * E)


# ---------------------------------------------------------------------------
# Ray limits
# ---------------------------------------------------------------------------

def _ratio_row(theta: float, tau: float, params: ModelParams, limit: float,
               critical_offset: Optional[float]) -> ConvergenceRow:
    t = analytic.time_from_tau(tau, params)
    run = integrate_halfline(params, t, theta_targets=[theta])
    k = run.site(theta)
    ratio = float(run.scaled[k])
    if critical_offset is not None:
        ratio /= (k + critical_offset)
    return ConvergenceRow(theta=theta, tau=tau, k=k, ratio=ratio, gap=abs(ratio - limit))


def verify_ray_limits(theta: float, tau_list: Sequence[float], params: ModelParams,
                     workers: int = 1) -> ConvergenceTable:
    """Measure n_k(t) against its predicted normalization along k = floor(theta tau).

    Below criticality n_k e^{kE} tends to A(0) nbar_S. Above it n_k e^{k psi}
    tends to A(0) B(0) nbar_S behind the front (w_theta < w0) and to 0 beyond
    it. On the critical line n_k e^{kE} / (k + e^delta/(e^delta - 1)) tends to
    nbar_S / (alpha (e^{E+delta} - 1)).

    Args:
        theta: Ray slope
        tau_list: Rescaled times
        params: Model parameters without degradation
        workers: Worker processes for the tau ladder

    Raises:
        AmbiguousRegimeError: If w_theta ties with w0 or wS
        TruncationError: Propagated from the lattice runs
    """
    _require_no_degradation(params)
    if not tau_list:
        raise ParameterError("tau list must be nonempty")

    regime = analytic.regime_of(params)
    n_S = analytic.nbar_S(params.sigma, params.energy_E)
    case = None
    stated = None
    offset = None

    if regime is Regime.SUBCRITICAL:
        limit = analytic.a_zero(params) * n_S
        normalization = 'exp(-kE)'
    elif regime is Regime.SUPERCRITICAL:
        case = analytic.classify_theta_regime(theta, params)
        normalization = 'exp(-k psi)'
        if case is ThetaCase.CASE3:
            limit = 0.0
        else:
            limit = analytic.a_zero(params) * analytic.b_zero(params) * n_S
    else:
        slope, offset = analytic.critical_profile(params)
        limit = slope
        normalization = 'exp(-kE) (k + offset)'
        stated = analytic.stated_critical_constant(params)

    args = [(theta, float(tau), params, limit, offset) for tau in tau_list]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_ratio_row, *zip(*args)))
    else:
        rows = [_ratio_row(*a) for a in args]

    for row in rows:
        logger.debug("theta=%g tau=%g k=%d ratio=%.6e gap=%.3e", row.theta, row.tau, row.k,
                     row.ratio, row.gap)

    return ConvergenceTable(
        regime=regime,
        case=case,
        normalization=normalization,
        limit=limit,
        rows=rows,
        stated_limit=stated,
    )
