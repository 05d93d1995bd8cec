"""Finite-N ladder model for KPR Toolkit.

Builds the generator of the ligand master equation, computes the exact
response probability through the z=0 Laplace solve, integrates trajectories
for verification and sweeps the binding energy.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, linalg

import analytic
from analytic import Regime
from crn_core import ModelParams
from errors import DegenerateParameterError, ParameterError, StiffnessError, ToolkitError

logger = logging.getLogger('kpr_toolkit.finite_model')

RESIDUAL_TOL = 1e-10
DENSE_EXPM_MAX_N = 12
DENSE_MU_FLOOR = 1e-14


@dataclass
class StateVector:
    """Occupation probabilities of the free and bound ligand states."""

    nS: float
    n: np.ndarray

    @property
    def M(self) -> float:
        """Total ligand mass still in the system."""
        return float(self.nS + np.sum(self.n))

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.nS], self.n))

    @staticmethod
    def from_array(values: np.ndarray) -> 'StateVector':
        values = np.asarray(values, dtype=float)
        return StateVector(nS=float(values[0]), n=values[1:].copy())


@dataclass
class Generator:
    """Generator A of dn/dt = A n, states ordered (S, C_0, ..., C_N).

    The matrix has arrowhead structure: the S row and column couple to every
    complex, the complex block is tridiagonal.
    """

    params: ModelParams
    matrix: np.ndarray
    attach: np.ndarray
    detach: float
    lower: np.ndarray
    diagonal: np.ndarray
    upper: np.ndarray
    structure: str = 'arrowhead'

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass
class SweepResult:
    """Response probabilities along a binding-energy grid."""

    sigma_grid: np.ndarray
    pres: np.ndarray
    log_odds: np.ndarray
    params: ModelParams
    errors: List[Optional[str]] = field(default_factory=list)


@dataclass
class ClosedFormProfile:
    """Finite-N closed-form solution of the time-integrated profile."""

    y: np.ndarray  # e^{kE} x_k / x_S
    u: np.ndarray  # x_k / x_S
    pres: float
    A: float
    F1: float
    F2: float
    phi: float
    phi2: float


@dataclass
class ProfileComparison:
    """Exact time-integrated profile against its closed form and leading order."""

    k: np.ndarray
    exact: np.ndarray
    closed_form: np.ndarray
    reference: np.ndarray
    max_rel_deviation: float
    regime: Regime


def build_generator(params: ModelParams) -> Generator:
    """Assemble the master-equation generator.

    Args:
        params: Model parameters with a degradation rate

    Returns:
        Generator whose column sums equal -mu, minus alpha e^delta on C_N
    """
    params.ensure_valid()
    N = params.N
    mu = params.mu_resolved
    alpha = params.alpha
    E = params.energy_E
    detach = math.exp(params.sigma)
    phos = alpha * math.exp(params.delta)
    dephos = alpha * math.exp(E)

    attach = np.exp(-E * np.arange(N + 1))
    # 1 + S_N(E), S_N(E) = (1 - e^{-NE}) / (e^E - 1)
    attach_total = 1.0 - math.expm1(-N * E) / math.expm1(E)

    diagonal = np.full(N + 1, -(detach + phos + dephos + mu))
    diagonal[0] = -(detach + phos + mu)
    upper = np.full(N, dephos)
    lower = np.full(N, phos)

    size = N + 2
    matrix = np.zeros((size, size))
    matrix[0, 0] = -(attach_total + mu)
    matrix[0, 1:] = detach
    matrix[1:, 0] = attach
    matrix[1:, 1:] = np.diag(diagonal) + np.diag(upper, 1) + np.diag(lower, -1)

    return Generator(
        params=params,
        matrix=matrix,
        attach=attach,
        detach=detach,
        lower=lower,
        diagonal=diagonal,
        upper=upper,
    )


def initial_state(N: int) -> np.ndarray:
    state = np.zeros(N + 2)
    state[0] = 1.0
    return state


def _scaled_banded(gen: Generator) -> np.ndarray:
    """Banded form of e^{kE} T e^{-kE}, T the complex block."""
    E = gen.params.energy_E
    N = gen.params.N
    ab = np.zeros((3, N + 1))
    ab[0, 1:] = gen.upper * math.exp(-E)
    ab[1, :] = gen.diagonal
    ab[2, :-1] = gen.lower * math.exp(E)
    return ab


def _banded_product(ab: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Product of a (1, 1) banded matrix in ``solve_banded`` layout with v."""
    product = ab[1] * v
    product[:-1] += ab[0, 1:] * v[1:]
    product[1:] += ab[2, :-1] * v[:-1]
    return product


def _relative_residual(ab: np.ndarray, v: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, float]:
    residual = rhs - _banded_product(ab, v)
    scale = float(np.max(np.abs(ab)) * np.max(np.abs(v)) + np.max(np.abs(rhs)))
    return residual, float(np.max(np.abs(residual))) / scale


@dataclass
class _ResponseSolve:
    x: np.ndarray
    v: np.ndarray
    sum_u: float
    pres: float


def _response_solve(params: ModelParams) -> _ResponseSolve:
    """Eliminate S, solve the scaled tridiagonal block, then restore x_S.

    mu enters only through the S balance, so x, pres and the log-odds stay
    accurate when mu lies far below the rounding of the generator entries.
    """
    params.ensure_valid()
    if not params.has_degradation or params.mu_resolved <= 0:
        raise DegenerateParameterError("The response solve is singular without degradation (mu = 0)")

    gen = build_generator(params)
    N = params.N
    E = params.energy_E
    mu = params.mu_resolved
    phos = params.alpha * math.exp(params.delta)

    # u = x_C / x_S solves T u = -attach; in v_k = e^{kE} u_k the right-hand side is -1
    ab = _scaled_banded(gen)
    rhs = -np.ones(N + 1)
    v = linalg.solve_banded((1, 1), ab, rhs)
    residual, relative = _relative_residual(ab, v, rhs)
    if relative > RESIDUAL_TOL:
        # refinement stays inside the scaled block; mu is applied afterwards
        logger.warning("Block residual %.3e above %.0e, refining once", relative, RESIDUAL_TOL)
        v = v + linalg.solve_banded((1, 1), ab, residual)

    u = v * np.exp(-E * np.arange(N + 1))
    sum_u = float(np.sum(u))
    u_N = float(u[-1])

    denominator = mu * (1.0 + sum_u) + phos * u_N
    if not (denominator > 0 and math.isfinite(denominator)):
        raise DegenerateParameterError(f"Response solve produced denominator {denominator!r}")

    x_S = 1.0 / denominator
    x = np.concatenate(([x_S], x_S * u))
    return _ResponseSolve(x=x, v=v, sum_u=sum_u, pres=phos * float(x[-1]))


def time_integrated_profile(params: ModelParams) -> np.ndarray:
    """x = integral of n(t) dt over [0, inf), ordered (S, C_0, ..., C_N)."""
    return _response_solve(params).x


def pres_exact(params: ModelParams) -> float:
    """Exact probability that a ligand triggers a response.

    Args:
        params: Model parameters (mu > 0)

    Returns:
        alpha e^delta x_N with A x = -n(0)

    Raises:
        DegenerateParameterError: If mu is zero or missing
    """
    return _response_solve(params).pres


def log_odds_exact(params: ModelParams) -> float:
    """(1/N) log(1/p_res - 1) computed in log space."""
    solve = _response_solve(params)
    N = params.N
    E = params.energy_E
    log_mu = -params.b * N if params.b is not None else math.log(params.mu_resolved)
    log_phos = math.log(params.alpha) + params.delta
    log_u_N = math.log(solve.v[-1]) - N * E
    return (log_mu + math.log1p(solve.sum_u) - log_phos - log_u_N) / N


def total_probability_defect(params: ModelParams) -> float:
    """|alpha e^delta x_N + mu sum(x) - 1|."""
    x = time_integrated_profile(params)
    phos = params.alpha * math.exp(params.delta)
    return abs(phos * x[-1] + params.mu_resolved * float(np.sum(x)) - 1.0)


def pres_dense(params: ModelParams) -> float:
    """Response probability through a dense partial-pivot LU solve.

    The assembled diagonal carries mu only up to rounding, so the solve is
    refused once mu falls below DENSE_MU_FLOOR times the largest rate.

    Raises:
        DegenerateParameterError: If mu is zero or below the dense validity floor
    """
    gen = build_generator(params)
    mu = params.mu_resolved
    if mu <= 0:
        raise DegenerateParameterError("The response solve is singular without degradation (mu = 0)")
    scale = float(np.max(np.abs(gen.matrix)))
    if mu < DENSE_MU_FLOOR * scale:
        raise DegenerateParameterError(
            f"mu = {mu:.3e} is below {DENSE_MU_FLOOR:.0e} * max|A| = {DENSE_MU_FLOOR * scale:.3e}; "
            "the dense solve cannot resolve it")
    try:
        x = linalg.solve(gen.matrix, -initial_state(params.N))
    except linalg.LinAlgError as e:
        raise DegenerateParameterError(f"Dense response solve failed: {e}") from e
    return float(params.alpha * math.exp(params.delta) * x[-1])


def exact_generator(params: ModelParams) -> List[List[Fraction]]:
    """Generator assembled in rational arithmetic from the float rates.

    Each rate is converted to a Fraction before the diagonals and the total
    attachment are summed, so no entry is rounded.
    """
    params.ensure_valid()
    N = params.N
    mu = Fraction(params.mu_resolved)
    detach = Fraction(math.exp(params.sigma))
    phos = Fraction(params.alpha * math.exp(params.delta))
    dephos = Fraction(params.alpha * math.exp(params.energy_E))
    attach = [Fraction(float(value)) for value in np.exp(-params.energy_E * np.arange(N + 1))]

    size = N + 2
    matrix = [[Fraction(0)] * size for _ in range(size)]
    matrix[0][0] = -(sum(attach, Fraction(0)) + mu)
    for k in range(N + 1):
        row = k + 1
        matrix[0][row] = detach
        matrix[row][0] = attach[k]
        matrix[row][row] = -(detach + phos + mu + (dephos if k >= 1 else 0))
        if k >= 1:
            matrix[row][row - 1] = phos
        if k < N:
            matrix[row][row + 1] = dephos
    return matrix


def pres_rational(params: ModelParams) -> Fraction:
    """Response probability by exact rational Gaussian elimination.

    The result is the exact response probability of the float rates, with
    the generator built by exact_generator.
    """
    if not params.has_degradation or params.mu_resolved <= 0:
        raise DegenerateParameterError("The response solve is singular without degradation (mu = 0)")
    matrix = exact_generator(params)
    size = len(matrix)
    rows = [matrix[i] + [Fraction(-1 if i == 0 else 0)] for i in range(size)]

    for col in range(size):
        pivot = next((r for r in range(col, size) if rows[r][col] != 0), None)
        if pivot is None:
            raise DegenerateParameterError("Rational response solve is singular")
        rows[col], rows[pivot] = rows[pivot], rows[col]
        for r in range(col + 1, size):
            factor = rows[r][col] / rows[col][col]
            if factor:
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[col])]

    x = [Fraction(0)] * size
    for i in reversed(range(size)):
        acc = rows[i][size] - sum(rows[i][j] * x[j] for j in range(i + 1, size))
        x[i] = acc / rows[i][i]

    return Fraction(params.alpha * math.exp(params.delta)) * x[-1]


def closed_form_profile(params: ModelParams) -> ClosedFormProfile:
    """Finite-N closed form of the time-integrated profile.

    With uniform degradation the time integral equals the degradation-free
    Laplace transform at z = mu, so y_k = e^{kE} x_k / x_S solves the
    constant-coefficient recurrence with general solution
    A + F1 phi^k + F2 phi2^(k-N-1), fixed by the absorbing condition
    y_{N+1} = 0 and the reflecting first row.
    """
    params.ensure_valid()
    mu = params.mu_resolved
    N = params.N
    alpha, E, D = params.alpha, params.energy_E, params.delta

    phi, phi2 = (value.real for value in analytic.varphi_pair(complex(mu), params))
    A = 1.0 / (mu - analytic.z_A(params))

    # y_{-1} = e^{-delta} y_0 encodes the missing dephosphorylation out of C_0
    system = np.array([
        [phi ** (N + 1), 1.0],
        [1.0 / phi - math.exp(-D), phi2 ** (-(N + 1)) * (1.0 / phi2 - math.exp(-D))],
    ])
    rhs = np.array([-A, -A * (1.0 - math.exp(-D))])
    try:
        F1, F2 = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as e:
        raise DegenerateParameterError(f"Closed-form boundary system is singular: {e}") from e

    k = np.arange(N + 1)
    y = A + F1 * phi ** k + F2 * phi2 ** (k - N - 1.0)
    u = y * np.exp(-E * k)

    phos = alpha * math.exp(D)
    pres = phos * u[-1] / (mu * (1.0 + np.sum(u)) + phos * u[-1])
    return ClosedFormProfile(y=y, u=u, pres=float(pres), A=A, F1=float(F1), F2=float(F2),
                             phi=phi, phi2=phi2)


def quasi_steady_profile(params: ModelParams) -> ProfileComparison:
    """Compare the exact profile x_k / x_S with its closed form and leading order.

    The leading-order reference is A(0) e^{-kE} below criticality,
    A(0) B(0) phi^k e^{-kE} above it and c (k + e^delta/(e^delta - 1)) e^{-kE}
    with c = 1 / (alpha (e^{E+delta} - 1)) on the critical line.
    """
    solve = _response_solve(params)
    x = solve.x
    exact = x[1:] / x[0]
    closed = closed_form_profile(params).u

    k = np.arange(params.N + 1)
    E = params.energy_E
    regime = analytic.regime_of(params)
    if regime is Regime.SUBCRITICAL:
        reference = analytic.a_zero(params) * np.exp(-E * k)
    elif regime is Regime.SUPERCRITICAL:
        phi = analytic.phi_of(params)
        reference = analytic.a_zero(params) * analytic.b_zero(params, phi) * np.exp(k * (math.log(phi) - E))
    else:
        slope = 1.0 / (params.alpha * math.expm1(E + params.delta))
        offset = math.exp(params.delta) / math.expm1(params.delta)
        reference = slope * (k + offset) * np.exp(-E * k)

    deviation = float(np.max(np.abs(closed - exact) / np.abs(exact)))
    return ProfileComparison(
        k=k,
        exact=exact,
        closed_form=closed,
        reference=reference,
        max_rel_deviation=deviation,
        regime=regime,
    )


def integrate_trajectory(params: ModelParams, t_grid: Sequence[float]) -> List[StateVector]:
    """Integrate the master equation from n(0) = (1, 0, ..., 0).

    Small systems use the dense matrix exponential; larger ones an L-stable
    implicit integrator.

    Args:
        params: Model parameters
        t_grid: Increasing finite nonnegative times

    Returns:
        One StateVector per requested time

    Raises:
        ParameterError: If the time grid is not increasing
        StiffnessError: If the implicit integrator fails
    """
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ParameterError("Time grid must be a nonempty vector")
    if not np.all(np.isfinite(times)) or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ParameterError("Time grid must be finite, nonnegative and increasing")

    gen = build_generator(params)
    n0 = initial_state(params.N)

    if params.N <= DENSE_EXPM_MAX_N:
        states = [linalg.expm(gen.matrix * t) @ n0 for t in times]
    else:
        result = integrate.solve_ivp(
            lambda t, y: gen.matrix @ y,
            (0.0, float(times[-1])),
            n0,
            method='Radau',
            t_eval=times,
            jac=gen.matrix,
            rtol=1e-10,
            atol=1e-14,
        )
        if not result.success:
            raise StiffnessError(
                f"Implicit integrator failed ({result.message}); use the solve-based p_res path"
            )
        states = list(result.y.T)

    return [StateVector.from_array(state) for state in states]


def response_time_integral(params: ModelParams, T: float) -> float:
    """alpha e^delta times the integral of n_N over [0, T].

    Integrates the generator augmented with an accumulator for n_N.
    """
    gen = build_generator(params)
    size = gen.size
    augmented = np.zeros((size + 1, size + 1))
    augmented[:size, :size] = gen.matrix
    augmented[size, size - 1] = 1.0
    start = np.concatenate((initial_state(params.N), [0.0]))
    final = linalg.expm(augmented * T) @ start
    return float(params.alpha * math.exp(params.delta) * final[-1])


def _sweep_point(params: ModelParams) -> Tuple[float, float, Optional[str]]:
    try:
        return pres_exact(params), log_odds_exact(params), None
    except ToolkitError as e:
        return math.nan, math.nan, f"{type(e).__name__}: {e}"


def sweep_sigma(params: ModelParams, sigma_grid: Sequence[float], workers: int = 1) -> SweepResult:
    """Exact response probability along a grid of binding energies.

    Per-point failures are recorded in ``errors`` and leave NaN entries.

    Args:
        params: Template parameters; sigma is replaced per point
        sigma_grid: Nonempty sequence of binding energies
        workers: Number of worker processes (1 runs serially)
    """
    grid = np.asarray(sigma_grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ParameterError("Sigma grid must be nonempty")

    points = [params.with_changes(sigma=float(s)) for s in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, points))
    else:
        results = [_sweep_point(p) for p in points]

    for sigma, (_, _, error) in zip(grid, results):
        if error:
            logger.warning("Sweep point sigma=%r failed: %s", float(sigma), error)

    return SweepResult(
        sigma_grid=grid,
        pres=np.array([r[0] for r in results]),
        log_odds=np.array([r[1] for r in results]),
        params=params,
        errors=[r[2] for r in results],
    )


def midpoint_crossing(result: SweepResult, level: float = 0.5) -> Optional[float]:
    """Linear interpolation of the first sigma where pres crosses ``level``."""
    values = result.pres - level
    for i in range(len(values) - 1):
        if values[i] == 0:
            return float(result.sigma_grid[i])
        if values[i] * values[i + 1] < 0:
            s0, s1 = result.sigma_grid[i], result.sigma_grid[i + 1]
            return float(s0 + (s1 - s0) * values[i] / (values[i] - values[i + 1]))
    return None
