"""Detailed-balance-complete ATP/ADP/phosphate network for KPR Toolkit.

Every phosphorylation step consumes an ATP and releases an ADP, hydrolysis
links the three nucleotides, and unbinding releases the bound phosphates. The
network satisfies detailed balance for any energies; the proofreading defect
appears only when ATP is held away from equilibrium.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

from crn_core import MassActionKinetics, ModelParams, NetworkSpec, Reaction
from errors import ParameterError, StiffnessError

logger = logging.getLogger('kpr_toolkit.enlarged')

CONSERVATION_TOL = 1e-9
NEGATIVITY_TOL = 1e-12


@dataclass(frozen=True)
class EnlargedParams:
    """Ladder parameters (delta unused) plus nucleotide energies."""

    base: ModelParams
    E_T: float
    E_D: float
    E_P: float

    def validate(self) -> List[str]:
        errors = [e for e in self.base.validate()]
        for name in ('E_T', 'E_D', 'E_P'):
            if not math.isfinite(getattr(self, name)):
                errors.append(f"{name} must be finite")
        return errors

    def ensure_valid(self) -> 'EnlargedParams':
        errors = self.validate()
        if errors:
            raise ParameterError(f"Invalid enlarged-network parameters: {', '.join(errors)}")
        return self

    @property
    def N(self) -> int:
        return self.base.N


@dataclass
class EnlargedState:
    """Concentrations of C_0..C_N, ATP, ADP, phosphate and free ligand."""

    n: np.ndarray
    n_T: float
    n_D: float
    n_P: float
    n_S: float

    def as_array(self) -> np.ndarray:
        return np.concatenate((self.n, [self.n_T, self.n_D, self.n_P, self.n_S]))

    @staticmethod
    def from_array(values: Sequence[float]) -> 'EnlargedState':
        values = np.asarray(values, dtype=float)
        return EnlargedState(n=values[:-4].copy(), n_T=float(values[-4]), n_D=float(values[-3]),
                             n_P=float(values[-2]), n_S=float(values[-1]))


@dataclass
class EnlargedRun:
    times: np.ndarray
    states: List[EnlargedState]
    conserved_drift: float


@dataclass
class FluxReport:
    J_T: float
    J_D: float
    J_P: float


def species_names(N: int) -> Tuple[str, ...]:
    return tuple(f"C{k}" for k in range(N + 1)) + ('T', 'D', 'P', 'S')


def build_enlarged(params: EnlargedParams) -> NetworkSpec:
    """Reaction list of the enlarged network with its basis cycles."""
    params.ensure_valid()
    base = params.base
    N = base.N
    alpha, E, sigma = base.alpha, base.energy_E, base.sigma

    reactions = []
    for k in range(N):
        reactions.append(Reaction(f"R1_{k}", ((f"C{k}", 1), ('T', 1)), ((f"C{k + 1}", 1), ('D', 1)),
                                  alpha * math.exp(params.E_T)))
        reactions.append(Reaction(f"R1r_{k}", ((f"C{k + 1}", 1), ('D', 1)), ((f"C{k}", 1), ('T', 1)),
                                  alpha * math.exp(E + params.E_D)))
    reactions.append(Reaction("R2", (('T', 1),), (('D', 1), ('P', 1)), math.exp(params.E_T)))
    reactions.append(Reaction("R2r", (('D', 1), ('P', 1)), (('T', 1),),
                              math.exp(params.E_D + params.E_P)))
    for k in range(N + 1):
        released = (('S', 1),) + ((('P', k),) if k else ())
        reactions.append(Reaction(f"R3_{k}", ((f"C{k}", 1),), released, math.exp(sigma)))
        reactions.append(Reaction(f"R3r_{k}", released, ((f"C{k}", 1),),
                                  math.exp(k * (params.E_P - E))))

    cycles = tuple(
        ((f"R1_{k}", f"R1r_{k}"), ("R2r", "R2"), (f"R3r_{k}", f"R3_{k}"),
         (f"R3_{k + 1}", f"R3r_{k + 1}"))
        for k in range(N)
    )
    return NetworkSpec(species_names(N), tuple(reactions), cycles)


FREE_LIGAND_ENERGY = 0.0
LITERAL_FREE_LIGAND_ENERGY = 1.0


def energy_vector(params: EnlargedParams, free_energy: float = FREE_LIGAND_ENERGY) -> np.ndarray:
    """Species energies ordered like ``EnlargedState.as_array``.

    Only free_energy = 0 makes e^{-E} a steady state of the rates in
    ``build_enlarged``. Any other value leaves d n_S/dt at
    (1 - e^{-free_energy}) sum_k e^{-kE}.
    """
    base = params.base
    k = np.arange(base.N + 1)
    return np.concatenate((base.sigma + k * base.energy_E,
                           [params.E_T, params.E_D, params.E_P, free_energy]))


def equilibrium_state(params: EnlargedParams, free_energy: float = FREE_LIGAND_ENERGY) -> EnlargedState:
    return EnlargedState.from_array(np.exp(-energy_vector(params, free_energy)))


def conservation_matrix(N: int) -> np.ndarray:
    """Rows m1 (ligands), m2 (phosphate groups), m3 (nucleotide pool)."""
    k = np.arange(N + 1)
    m1 = np.concatenate((np.ones(N + 1), [0.0, 0.0, 0.0, 1.0]))
    m2 = np.concatenate((k.astype(float), [2.0, 1.0, 1.0, 0.0]))
    m3 = np.concatenate((np.zeros(N + 1), [1.0, 1.0, 0.0, 0.0]))
    return np.vstack((m1, m2, m3))


def conserved_quantities(state: EnlargedState) -> np.ndarray:
    return conservation_matrix(len(state.n) - 1) @ state.as_array()


def _check_nonnegative(values: np.ndarray):
    if np.any(values < 0):
        raise ParameterError("Concentrations must be nonnegative")


def rhs_enlarged(state: EnlargedState, params: EnlargedParams) -> np.ndarray:
    """Mass-action time derivative, ordered like ``EnlargedState.as_array``."""
    values = state.as_array()
    _check_nonnegative(values)
    return MassActionKinetics(build_enlarged(params)).rhs(values)


def integrate_enlarged(state0: EnlargedState, params: EnlargedParams, t: float,
                       t_eval: Optional[Sequence[float]] = None) -> EnlargedRun:
    """Integrate the enlarged network with an implicit Radau scheme.

    A run whose state dips below -1e-12 is repeated once with tighter
    tolerances before it is reported as a failure.

    Raises:
        StiffnessError: If the integrator fails or the state turns negative
    """
    values0 = state0.as_array()
    _check_nonnegative(values0)
    if t <= 0:
        raise ParameterError("Integration time must be positive")

    kinetics = MassActionKinetics(build_enlarged(params))
    times = np.asarray(t_eval if t_eval is not None else [t], dtype=float)

    tolerances = [(1e-10, 1e-13), (1e-12, 1e-15)]
    for rtol, atol in tolerances:
        result = integrate.solve_ivp(
            lambda _, y: kinetics.rhs(y),
            (0.0, t),
            values0,
            method='Radau',
            t_eval=times,
            jac=lambda _, y: kinetics.jacobian(y),
            rtol=rtol,
            atol=atol,
        )
        if not result.success:
            raise StiffnessError(f"Radau integration failed: {result.message}")
        if np.min(result.y) >= -NEGATIVITY_TOL:
            break
        logger.warning("State went negative (min %.3e); retrying with rtol=%g", np.min(result.y), rtol)
    else:
        raise StiffnessError("State stayed negative after tightening tolerances")

    conservation = conservation_matrix(params.N)
    initial = conservation @ values0
    drift = 0.0
    for column in result.y.T:
        drift = max(drift, float(np.max(np.abs(conservation @ column - initial) / np.maximum(np.abs(initial), 1e-300))))
    if drift > CONSERVATION_TOL:
        logger.warning("Conserved quantities drifted by %.3e", drift)

    states = [EnlargedState.from_array(column) for column in result.y.T]
    return EnlargedRun(times=result.t, states=states, conserved_drift=drift)


def fit_steady_state(state: EnlargedState, params: EnlargedParams) -> Tuple[np.ndarray, EnlargedState]:
    """Steady state e^{-E + mu.m} with the conserved totals of ``state``.

    Returns:
        Tuple of (mu1, mu2, mu3) and the fitted steady state
    """
    conservation = conservation_matrix(params.N)
    totals = conservation @ state.as_array()
    energies = energy_vector(params)

    def profile(mu):
        return np.exp(-energies + conservation.T @ mu)

    def residual(mu):
        return np.log(conservation @ profile(mu)) - np.log(totals)

    def jacobian(mu):
        x = profile(mu)
        weighted = conservation * x
        return (weighted @ conservation.T) / (conservation @ x)[:, None]

    solution = optimize.root(residual, np.zeros(3), jac=jacobian, method='hybr', options={'xtol': 1e-14})
    if not solution.success:
        raise StiffnessError(f"Steady-state fit failed: {solution.message}")
    return solution.x, EnlargedState.from_array(profile(solution.x))


def frozen_reduction(nbar_T: float, nbar_D: float, nbar_P: float,
                     params: EnlargedParams) -> Tuple[ModelParams, NetworkSpec]:
    """Reduce the network with ATP, ADP and phosphate held at fixed levels.

    Returns:
        Tuple of the ladder parameters with the induced delta and the reduced
        ladder network (labels as in ``build_ladder``)

    Raises:
        ParameterError: If a frozen concentration is not positive
    """
    if not (nbar_T > 0 and nbar_D > 0 and nbar_P > 0):
        raise ParameterError("Frozen concentrations must be positive")
    params.ensure_valid()

    base = params.base
    N = base.N
    alpha, E = base.alpha, base.energy_E
    delta = params.E_T - params.E_D - params.E_P + math.log(nbar_T / (nbar_P * nbar_D))
    reduced_params = base.with_changes(delta=delta)

    phos = alpha * math.exp(params.E_T) * nbar_T
    dephos = alpha * math.exp(E + params.E_D) * nbar_D
    detach = math.exp(base.sigma)
    mu = base.mu_resolved

    reactions = []
    for k in range(N + 1):
        reactions.append(Reaction(f"attach_{k}", (('S', 1),), ((f"C{k}", 1),),
                                  math.exp(k * (params.E_P - E)) * nbar_P ** k))
    for k in range(N + 1):
        reactions.append(Reaction(f"detach_{k}", ((f"C{k}", 1),), (('S', 1),), detach))
    for k in range(N):
        reactions.append(Reaction(f"phos_{k}", ((f"C{k}", 1),), ((f"C{k + 1}", 1),), phos))
    for k in range(1, N + 1):
        reactions.append(Reaction(f"dephos_{k}", ((f"C{k}", 1),), ((f"C{k - 1}", 1),), dephos))
    reactions.append(Reaction("output", ((f"C{N}", 1),), (('out', 1),), phos))
    reactions.append(Reaction("degrade_S", (('S', 1),), (('deg', 1),), mu))
    for k in range(N + 1):
        reactions.append(Reaction(f"degrade_{k}", ((f"C{k}", 1),), (('deg', 1),), mu))

    cycles = tuple(
        ((f"attach_{k}", f"detach_{k}"), (f"phos_{k}", f"dephos_{k + 1}"),
         (f"detach_{k + 1}", f"attach_{k + 1}"))
        for k in range(N)
    )
    species = ('S',) + tuple(f"C{k}" for k in range(N + 1)) + ('out', 'deg')
    return reduced_params, NetworkSpec(species, tuple(reactions), cycles)


def flux_state(params: EnlargedParams, delta: float) -> EnlargedState:
    """Ligand states at equilibrium with ATP raised to e^{delta - E_T}."""
    state = equilibrium_state(params)
    state.n_T = math.exp(delta - params.E_T)
    return state


def external_fluxes(params: EnlargedParams, delta: float) -> FluxReport:
    """Closed-form ATP, ADP and phosphate fluxes needed to hold the frozen state.

    Raises:
        ParameterError: If delta is negative
    """
    if delta < 0:
        raise ParameterError("External fluxes are defined for delta >= 0")
    base = params.base
    E, N = base.energy_E, base.N
    geometric = math.expm1(-N * E) / math.expm1(-E)
    J_T = math.expm1(delta) * (1.0 + base.alpha * math.exp(-base.sigma) * geometric)
    return FluxReport(J_T=J_T, J_D=-J_T, J_P=-math.expm1(delta))


def flux_balance(params: EnlargedParams, delta: float) -> FluxReport:
    """Fluxes from substituting the frozen state into the nucleotide equations."""
    rhs = rhs_enlarged(flux_state(params, delta), params)
    return FluxReport(J_T=-float(rhs[-4]), J_D=-float(rhs[-3]), J_P=-float(rhs[-2]))
