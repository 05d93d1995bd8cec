"""Continuum limits of the ladder for KPR Toolkit.

Two transport equations approximate the ladder when the chain has L*N sites
and N grows: one with an inflow boundary (pde1) and one with a distributed
source e^{-x} m(tau) and an absorbing-free left end (pde2). Both are solved
with a first-order upwind finite-volume scheme.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats
from scipy.sparse import identity
from scipy.sparse.linalg import expm_multiply

from crn_core import ModelParams
from errors import NoRootError, ParameterError, StepError, TransportSignError
from half_line import halfline_generator

logger = logging.getLogger('kpr_toolkit.pde_limits')

CFL = 0.9
SHAPE_TOL = 1e-6
MAX_CHUNKS = 200
RESCALE_LOW = 1e-150
RESCALE_HIGH = 1e150
FIT_WINDOW = (0.2, 0.8)
COMPARE_WINDOW = (0.1, 0.9)
KINDS = ('pde1', 'pde2')


@dataclass(frozen=True)
class PdeParams:
    """Parameters of the continuum equations.

    beta is e^sigma * N, delta_loss is mu * N. E only enters pde1 and the
    discrete comparison of pde1.
    """

    beta: float
    delta_loss: float
    alpha: float
    E: float
    Delta: float
    L: float
    cells: int = 400

    def validate(self) -> List[str]:
        errors = []
        values = {'beta': self.beta, 'delta_loss': self.delta_loss, 'alpha': self.alpha,
                  'E': self.E, 'Delta': self.Delta, 'L': self.L}
        for name, value in values.items():
            if not math.isfinite(value):
                errors.append(f"{name} must be finite (got {value!r})")
        if self.beta < 0:
            errors.append(f"beta must be nonnegative (got {self.beta!r})")
        if self.delta_loss < 0:
            errors.append(f"delta_loss must be nonnegative (got {self.delta_loss!r})")
        if self.alpha <= 0:
            errors.append(f"alpha must be positive (got {self.alpha!r})")
        if not self.L > 1:
            errors.append(f"L must exceed 1 (got {self.L!r})")
        if not isinstance(self.cells, int) or self.cells < 10:
            errors.append(f"cells must be an integer >= 10 (got {self.cells!r})")
        return errors

    def ensure_valid(self):
        errors = self.validate()
        if errors:
            raise ParameterError("Invalid PDE parameters: " + "; ".join(errors))

    @property
    def h(self) -> float:
        return self.L / self.cells

    @property
    def kappa(self) -> float:
        """Total linear loss rate beta + delta."""
        return self.beta + self.delta_loss

    def velocity(self, kind: str) -> float:
        """Transport speed toward larger x.

        Raises:
            TransportSignError: If transport does not point toward larger x
        """
        if kind == 'pde1':
            v = self.alpha * (math.exp(self.Delta) - math.exp(self.E))
        elif kind == 'pde2':
            v = self.alpha * math.expm1(self.Delta)
        else:
            raise ParameterError(f"Unknown PDE kind {kind!r}; expected one of {KINDS}")
        if not v > 0:
            raise TransportSignError(
                f"{kind}: transport speed {v:.6g} is not positive; "
                f"complexes drift toward small k and no continuum limit exists")
        return v

    def with_cells(self, cells: int) -> 'PdeParams':
        return replace(self, cells=int(cells))


@dataclass
class PdeField:
    """Cell averages of f, stored up to the factor e^{log_scale}."""

    kind: str
    x: np.ndarray
    f: np.ndarray
    h: float
    tau: float
    log_scale: float = 0.0
    m: Optional[float] = None
    boundary: float = 0.0
    steps: int = 0

    @property
    def stored_mass(self) -> float:
        return float(self.h * np.sum(self.f))

    @property
    def log_mass(self) -> float:
        mass = self.stored_mass
        if mass <= 0:
            return -math.inf
        return math.log(mass) + self.log_scale

    def values(self) -> np.ndarray:
        """Unscaled cell averages."""
        return self.f * math.exp(self.log_scale)

    def normalized(self) -> np.ndarray:
        """Profile with unit integral."""
        mass = self.stored_mass
        if mass <= 0:
            return np.zeros_like(self.f)
        return self.f / mass


@dataclass
class ExponentFit:
    slope: float
    stderr: float
    intercept: float
    points: int


@dataclass
class Pde2Fit:
    """f ~ m_bar e^{-x} (1 + C e^{(1 - lam) x}) fitted on a window."""

    lam: float
    m_bar: float
    C: float
    residual: float


@dataclass
class RefinementRow:
    cells: int
    h: float
    exponent: float
    reference: float

    @property
    def error(self) -> float:
        return abs(self.exponent - self.reference)


@dataclass
class ComparisonRow:
    N: int
    sites: int
    gap: float


@dataclass
class PdeComparison:
    """Sup-norm gaps between N n_{floor(Nx)}(N tau) and f(tau, x)."""

    kind: str
    tau: float
    window: Tuple[float, float]
    reference_cells: int
    rows: List[ComparisonRow] = field(default_factory=list)

    @property
    def gaps(self) -> List[float]:
        return [row.gap for row in self.rows]

    def gap_decreasing(self) -> bool:
        gaps = self.gaps
        return all(later < earlier for earlier, later in zip(gaps, gaps[1:]))


def cell_centers(p: PdeParams) -> np.ndarray:
    return (np.arange(p.cells) + 0.5) * p.h


def uniform_datum(p: PdeParams) -> np.ndarray:
    """Unit-mass constant initial datum."""
    return np.full(p.cells, 1.0 / p.L)


def stable_step(p: PdeParams, kind: str) -> float:
    """Largest step keeping the explicit update monotone."""
    return 1.0 / (p.velocity(kind) / p.h + p.kappa)


def _resolve_step(p: PdeParams, kind: str, dt: Optional[float]) -> float:
    limit = stable_step(p, kind)
    if dt is None:
        return CFL * limit
    if not dt > 0:
        raise StepError(f"Time step must be positive (got {dt!r})")
    if dt > limit * (1 + 1e-12):
        raise StepError(
            f"Time step {dt:.6g} violates the CFL bound {limit:.6g} "
            f"(v/h = {p.velocity(kind) / p.h:.6g}, beta + delta = {p.kappa:.6g})")
    return dt


def _source_weights(p: PdeParams) -> np.ndarray:
    """Cell averages of e^{-x}."""
    edges = np.arange(p.cells + 1) * p.h
    return -np.diff(np.exp(-edges)) / p.h


def pde1_inflow(f: np.ndarray, p: PdeParams) -> float:
    """Boundary value f(0) = beta / (alpha (e^Delta - e^E)) * integral of f."""
    return p.beta / p.velocity('pde1') * p.h * float(np.sum(f))


def pde2_source_strength(f: np.ndarray, p: PdeParams) -> float:
    """m = beta / (1 - e^{-L}) * integral of f."""
    return p.beta / -math.expm1(-p.L) * p.h * float(np.sum(f))


def pde1_step(f: np.ndarray, p: PdeParams, dt: float) -> Tuple[np.ndarray, float]:
    """One upwind step of pde1.

    Returns:
        Tuple of (new cell averages, mass leaving through x = L)
    """
    v = p.velocity('pde1')
    c = v * dt / p.h
    upstream = np.empty_like(f)
    upstream[0] = pde1_inflow(f, p)
    upstream[1:] = f[:-1]
    updated = f - c * (f - upstream) - dt * p.kappa * f
    return updated, dt * v * float(f[-1])


def pde2_step(f: np.ndarray, p: PdeParams, dt: float, weights: np.ndarray) -> Tuple[np.ndarray, float]:
    """One upwind step of pde2 with f(0) = 0 and the explicit source.

    Returns:
        Tuple of (new cell averages, m at the start of the step)
    """
    v = p.velocity('pde2')
    c = v * dt / p.h
    m = pde2_source_strength(f, p)
    upstream = np.empty_like(f)
    upstream[0] = 0.0
    upstream[1:] = f[:-1]
    updated = f - c * (f - upstream) + dt * (m * weights - p.kappa * f)
    return updated, m


def _evolve(kind: str, p: PdeParams, t_final: float, f0: Optional[np.ndarray],
            dt: Optional[float]) -> PdeField:
    p.ensure_valid()
    if t_final < 0:
        raise ParameterError(f"t_final must be nonnegative (got {t_final!r})")
    step = _resolve_step(p, kind, dt)

    f = uniform_datum(p) if f0 is None else np.array(f0, dtype=float)
    if f.shape != (p.cells,):
        raise ParameterError(f"Initial datum has shape {f.shape}, expected ({p.cells},)")
    if np.any(f < 0):
        raise ParameterError("Initial datum must be nonnegative")

    weights = _source_weights(p) if kind == 'pde2' else None
    log_scale = 0.0
    tau = 0.0
    steps = 0
    while tau < t_final:
        current = min(step, t_final - tau)
        if kind == 'pde1':
            f, _ = pde1_step(f, p, current)
        else:
            f, _ = pde2_step(f, p, current, weights)
        tau += current
        steps += 1
        mass = p.h * float(np.sum(f))
        if mass > 0 and not RESCALE_LOW < mass < RESCALE_HIGH:
            f = f / mass
            log_scale += math.log(mass)

    logger.debug("%s: %d steps of %.4g to tau = %.6g (log scale %.4g)",
                 kind, steps, step, tau, log_scale)
    if kind == 'pde1':
        return PdeField(kind=kind, x=cell_centers(p), f=f, h=p.h, tau=tau, log_scale=log_scale,
                        boundary=pde1_inflow(f, p), steps=steps)
    return PdeField(kind=kind, x=cell_centers(p), f=f, h=p.h, tau=tau, log_scale=log_scale,
                    m=pde2_source_strength(f, p), boundary=0.0, steps=steps)


def solve_pde1(p: PdeParams, t_final: float, f0: Optional[np.ndarray] = None,
               dt: Optional[float] = None) -> PdeField:
    """Evolve d_tau f = -beta f + alpha (e^E - e^Delta) d_x f - delta f.

    The inflow value at x = 0 re-injects the detached mass,
    f(tau, 0) = beta / (alpha (e^Delta - e^E)) * integral of f.

    Args:
        p: PDE parameters
        t_final: Final rescaled time
        f0: Initial cell averages (defaults to the uniform unit-mass datum)
        dt: Time step (defaults to CFL times the monotonicity bound)

    Returns:
        Field at t_final

    Raises:
        TransportSignError: If e^Delta <= e^E
        StepError: If dt violates the CFL bound
    """
    return _evolve('pde1', p, t_final, f0, dt)


def solve_pde2(p: PdeParams, t_final: float, f0: Optional[np.ndarray] = None,
               dt: Optional[float] = None) -> PdeField:
    """Evolve d_tau f = e^{-x} m - beta f - alpha (1 - e^Delta) d_x f - delta f with f(0) = 0.

    Args:
        p: PDE parameters
        t_final: Final rescaled time
        f0: Initial cell averages (defaults to the uniform unit-mass datum)
        dt: Time step (defaults to CFL times the monotonicity bound)

    Returns:
        Field at t_final, m evaluated from the final profile

    Raises:
        TransportSignError: If Delta <= 0
        StepError: If dt violates the CFL bound
    """
    return _evolve('pde2', p, t_final, f0, dt)


SOLVERS: Dict[str, Callable[..., PdeField]] = {'pde1': solve_pde1, 'pde2': solve_pde2}


def _shape_change(previous: np.ndarray, current: np.ndarray) -> float:
    scale = float(np.max(np.abs(current)))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(current - previous))) / scale


def relax_to_shape(kind: str, p: PdeParams, tol: float = SHAPE_TOL,
                   f0: Optional[np.ndarray] = None, max_chunks: int = MAX_CHUNKS) -> PdeField:
    """Run until the normalized profile stops changing.

    The run advances in chunks of one transit time L / v and stops once two
    successive normalized profiles differ by less than tol (sup norm,
    relative to the profile maximum).

    Args:
        kind: 'pde1' or 'pde2'
        p: PDE parameters
        tol: Shape tolerance
        f0: Initial datum
        max_chunks: Chunk limit; the last field is returned with a warning

    Returns:
        Field whose tau is the total relaxation time
    """
    if kind not in SOLVERS:
        raise ParameterError(f"Unknown PDE kind {kind!r}; expected one of {KINDS}")
    solver = SOLVERS[kind]
    chunk = p.L / p.velocity(kind)

    current = solver(p, chunk, f0=f0)
    previous_shape = current.normalized()
    for index in range(1, max_chunks):
        following = solver(p, chunk, f0=current.f)
        following = replace(following, tau=current.tau + following.tau,
                            log_scale=current.log_scale + following.log_scale,
                            steps=current.steps + following.steps)
        shape = following.normalized()
        change = _shape_change(previous_shape, shape)
        current, previous_shape = following, shape
        if change < tol:
            logger.debug("%s shape settled after %d chunks (change %.3e)", kind, index + 1, change)
            return current
    logger.warning("%s shape still changing after %d chunks of %.4g", kind, max_chunks, chunk)
    return current


def _window_mask(x: np.ndarray, L: float, window: Tuple[float, float]) -> np.ndarray:
    lo, hi = window
    return (x >= lo * L) & (x <= hi * L)


def fit_exponent(pde_field: PdeField, window: Tuple[float, float] = FIT_WINDOW) -> ExponentFit:
    """Least-squares slope of log f on a window of the domain.

    Args:
        pde_field: Solved field
        window: Fractions of the domain length bounding the fit

    Returns:
        ExponentFit with the slope d(log f)/dx and its standard error

    Raises:
        ParameterError: If fewer than three positive cells fall in the window
    """
    L = pde_field.h * len(pde_field.f)
    mask = _window_mask(pde_field.x, L, window) & (pde_field.f > 0)
    if np.count_nonzero(mask) < 3:
        raise ParameterError(f"Window {window} holds fewer than three positive cells")
    fit = stats.linregress(pde_field.x[mask], np.log(pde_field.f[mask]))
    return ExponentFit(slope=float(fit.slope), stderr=float(fit.stderr),
                       intercept=float(fit.intercept), points=int(np.count_nonzero(mask)))


def _two_exponential_residual(lam: float, x: np.ndarray, f: np.ndarray) -> Tuple[float, np.ndarray]:
    basis = np.column_stack((np.exp(-x), np.exp(-lam * x))) / f[:, None]
    coefficients, _, _, _ = np.linalg.lstsq(basis, np.ones_like(f), rcond=None)
    residual = float(np.linalg.norm(basis @ coefficients - 1.0))
    return residual, coefficients


def fit_pde2_lambda(pde_field: PdeField, window: Tuple[float, float] = (0.02, 0.9),
                    bounds: Tuple[float, float] = (1e-2, 20.0)) -> Pde2Fit:
    """Fit f ~ a e^{-x} + b e^{-lam x} with relative weights.

    lam is found by a coarse log-spaced scan followed by a bounded scalar
    minimization; the amplitudes by weighted linear least squares.
    """
    L = pde_field.h * len(pde_field.f)
    mask = _window_mask(pde_field.x, L, window) & (pde_field.f > 0)
    if np.count_nonzero(mask) < 4:
        raise ParameterError(f"Window {window} holds fewer than four positive cells")
    x = pde_field.x[mask]
    f = pde_field.f[mask]

    scan = np.geomspace(bounds[0], bounds[1], 200)
    scan = scan[np.abs(scan - 1.0) > 1e-3]
    residuals = [_two_exponential_residual(lam, x, f)[0] for lam in scan]
    best = int(np.argmin(residuals))
    lo = scan[max(best - 1, 0)]
    hi = scan[min(best + 1, len(scan) - 1)]
    result = optimize.minimize_scalar(lambda lam: _two_exponential_residual(lam, x, f)[0],
                                      bounds=(lo, hi), method='bounded',
                                      options={'xatol': 1e-10})
    lam = float(result.x)
    residual, (a, b) = _two_exponential_residual(lam, x, f)
    scale = math.exp(pde_field.log_scale)
    return Pde2Fit(lam=lam, m_bar=float(a) * scale, C=float(b / a) if a != 0 else math.inf,
                   residual=residual)


def pde1_steady_exponent(p: PdeParams) -> float:
    """Decay rate mu of the pde1 eigen-shape e^{-mu x} on [0, L].

    mu is the positive root of mu v = beta (1 - e^{-mu L}); it approaches
    beta / v as L grows and does not depend on delta.

    Raises:
        NoRootError: If beta L <= v, where the only root is mu = 0
    """
    v = p.velocity('pde1')
    if p.beta * p.L <= v:
        raise NoRootError(f"beta L = {p.beta * p.L:.6g} does not exceed v = {v:.6g}; "
                          f"no decaying eigen-shape")

    def balance(mu: float) -> float:
        return mu * v + p.beta * math.expm1(-mu * p.L)

    upper = p.beta / v
    lower = upper * 1e-6
    while balance(lower) >= 0:
        lower /= 10
        if lower < 1e-300:
            raise NoRootError("Eigen-shape exponent bracket collapsed")
    return float(optimize.brentq(balance, lower, upper * (1 + 1e-12) + 1e-300, xtol=1e-15, rtol=1e-14))


def stated_pde1_exponent(p: PdeParams) -> float:
    """(beta + delta) / (alpha (e^Delta - e^E)), the unbounded-domain steady exponent."""
    return p.kappa / p.velocity('pde1')


def pde2_lambda(p: PdeParams) -> float:
    """beta / (alpha (e^Delta - 1))."""
    return p.beta / p.velocity('pde2')


def pde2_discriminates(p: PdeParams) -> bool:
    """True when e^Delta > 1 + beta / alpha, i.e. lam < 1."""
    return math.exp(p.Delta) > 1 + p.beta / p.alpha


def _refinement_point(args: Tuple[str, PdeParams, int, float]) -> RefinementRow:
    kind, p, cells, reference = args
    refined = p.with_cells(cells)
    relaxed = relax_to_shape(kind, refined)
    if kind == 'pde1':
        exponent = -fit_exponent(relaxed).slope
    else:
        exponent = fit_pde2_lambda(relaxed).lam
    return RefinementRow(cells=cells, h=refined.h, exponent=exponent, reference=reference)


def refinement_study(kind: str, p: PdeParams, cells_list: Sequence[int],
                     workers: int = 1) -> List[RefinementRow]:
    """Fitted steady exponents on a sequence of grids.

    The reference is the exact eigen-shape exponent for pde1 and
    beta / (alpha (e^Delta - 1)) for pde2.
    """
    reference = pde1_steady_exponent(p) if kind == 'pde1' else pde2_lambda(p)
    tasks = [(kind, p, int(cells), reference) for cells in cells_list]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_refinement_point, tasks))
    else:
        rows = [_refinement_point(task) for task in tasks]
    for row in rows:
        logger.debug("%s cells=%d exponent=%.8g error=%.3e", kind, row.cells, row.exponent, row.error)
    return rows


def discrete_params(kind: str, p: PdeParams, N: int) -> ModelParams:
    """Ladder parameters of the scaling regime: e^sigma = beta/N, mu = delta/N, and E = 1/N for pde2."""
    if p.beta <= 0:
        raise ParameterError("The discrete comparison needs beta > 0")
    energy = p.E if kind == 'pde1' else 1.0 / N
    return ModelParams(N=int(round(N * p.L)), alpha=p.alpha, delta=p.Delta,
                       sigma=math.log(p.beta / N), energy_E=energy, mu=p.delta_loss / N)


def discrete_profile(kind: str, p: PdeParams, N: int, tau: float,
                     f0: Callable[[np.ndarray], np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Scaled ladder profile (x_k, N n_k(N tau)) started from n_k(0) = f0(k/N)/N.

    Raises:
        TransportSignError: If the ladder drifts toward small k
    """
    p.velocity(kind)
    params = discrete_params(kind, p, N)
    K = params.N
    x = np.arange(K + 1) / N
    state = np.zeros(K + 2)
    state[1:] = np.asarray(f0(x), dtype=float) / N

    generator = halfline_generator(params, K)
    if params.mu_resolved > 0:
        generator = (generator - params.mu_resolved * identity(K + 2, format='csc')).tocsc()
    final = expm_multiply(generator * (N * tau), state)
    return x, N * np.asarray(final[1:])


def _comparison_row(args) -> ComparisonRow:
    kind, p, N, tau, reference, window = args
    x_field, f_field = reference
    x, scaled = discrete_profile(kind, p, N, tau, lambda y: np.full_like(y, 1.0 / p.L))
    targets = x_field[_window_mask(x_field, p.L, window)]
    sites = np.minimum(np.floor(targets * N).astype(int), len(scaled) - 1)
    pde_values = f_field[_window_mask(x_field, p.L, window)]
    gap = float(np.max(np.abs(scaled[sites] - pde_values)) / np.max(np.abs(pde_values)))
    return ComparisonRow(N=N, sites=len(scaled), gap=gap)


def compare_pde_vs_discrete(kind: str, p: PdeParams, N_list: Sequence[int], tau: float,
                            reference_cells: Optional[int] = None,
                            window: Tuple[float, float] = COMPARE_WINDOW,
                            workers: int = 1) -> PdeComparison:
    """Relative sup-norm gap between the scaled ladder and the continuum field.

    Both start from the uniform unit-mass datum. The continuum solve uses
    reference_cells cells (default 4 * max(N) * L) so that its own
    discretization error stays below the ladder's.

    Raises:
        ParameterError: If N_list is not strictly increasing
        TransportSignError: If the transport speed of the kind is not positive
    """
    N_list = [int(N) for N in N_list]
    if not N_list or any(later <= earlier for earlier, later in zip(N_list, N_list[1:])):
        raise ParameterError(f"N_list must be nonempty and strictly increasing (got {N_list})")
    p.velocity(kind)
    cells = reference_cells or int(math.ceil(4 * N_list[-1] * p.L))
    refined = p.with_cells(max(cells, p.cells))
    pde_field = SOLVERS[kind](refined, tau)
    reference = (pde_field.x, pde_field.values())

    tasks = [(kind, p, N, tau, reference, window) for N in N_list]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_comparison_row, tasks))
    else:
        rows = [_comparison_row(task) for task in tasks]

    comparison = PdeComparison(kind=kind, tau=tau, window=window, reference_cells=refined.cells, rows=rows)
    for row in rows:
        logger.debug("%s N=%d sites=%d gap=%.4e", kind, row.N, row.sites, row.gap)
    if not comparison.gap_decreasing():
        logger.warning("%s gaps not decreasing in N: %s", kind, comparison.gaps)
    return comparison
