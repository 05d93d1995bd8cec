"""Reaction network representation for KPR Toolkit.

Holds the ladder model parameters, an explicit reaction-list representation
of chemical reaction networks, the cycle (Wegscheider) checks and generic
mass-action kinetics used by the ODE modules.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from errors import ParameterError, StructureError

logger = logging.getLogger('kpr_toolkit.crn_core')

DEFAULT_CYCLE_TOL = 1e-10

# (species, stoichiometric coefficient) pairs
Side = Tuple[Tuple[str, int], ...]
# (forward reaction label, reverse reaction label)
CycleStep = Tuple[str, str]


@dataclass(frozen=True)
class ModelParams:
    """Scalar parameters of the ladder model.

    Degradation is given either through ``b`` (so that mu = exp(-b*N)
    exactly) or through an explicit ``mu``. Neither is set for the
    half-line model, which has no degradation.
    """

    N: int
    alpha: float
    delta: float
    sigma: float
    energy_E: float
    b: Optional[float] = None
    mu: Optional[float] = None

    def validate(self) -> List[str]:
        """Check the parameter invariants.

        Returns:
            List of error messages (empty if valid)
        """
        errors = []

        if not isinstance(self.N, (int, np.integer)) or isinstance(self.N, bool):
            errors.append("N must be an integer")
        elif self.N < 1:
            errors.append("N must be at least 1")

        for name in ('alpha', 'delta', 'sigma', 'energy_E'):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                errors.append(f"{name} must be a finite number")

        if not errors:
            if self.alpha <= 0:
                errors.append("alpha must be positive")
            if self.energy_E <= 0:
                errors.append("energy_E must be positive")

        if self.b is not None and self.mu is not None:
            errors.append("Give either b or mu, not both")
        if self.b is not None and not math.isfinite(self.b):
            errors.append("b must be a finite number")
        if self.mu is not None and (not math.isfinite(self.mu) or self.mu < 0):
            errors.append("mu must be a finite nonnegative number")

        return errors

    def ensure_valid(self) -> 'ModelParams':
        """Return self, raising ParameterError if any invariant fails."""
        errors = self.validate()
        if errors:
            raise ParameterError(f"Invalid model parameters: {', '.join(errors)}")
        return self

    @property
    def has_degradation(self) -> bool:
        return self.b is not None or self.mu is not None

    @property
    def mu_resolved(self) -> float:
        """Degradation rate; exp(-b*N) exactly when b is given."""
        if self.b is not None:
            return math.exp(-self.b * self.N)
        if self.mu is not None:
            return float(self.mu)
        raise ParameterError("Model has no degradation rate (neither b nor mu given)")

    @property
    def b_effective(self) -> float:
        """The exponent b with mu = exp(-b*N), derived from mu when needed."""
        if self.b is not None:
            return float(self.b)
        mu = self.mu_resolved
        if mu <= 0:
            raise ParameterError("b is undefined for mu = 0")
        return -math.log(mu) / self.N

    def with_changes(self, **changes) -> 'ModelParams':
        return replace(self, **changes)


@dataclass(frozen=True)
class Reaction:
    """A single reaction with a mass-action rate constant."""

    label: str
    reactants: Side
    products: Side
    rate: float

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ParameterError(f"Reaction {self.label} has non-positive rate {self.rate}")


@dataclass
class CycleReport:
    """Affinity of one basis cycle."""

    cycle_index: int
    delta_k: float
    balanced: bool


@dataclass(frozen=True)
class NetworkSpec:
    """Explicit reaction-list representation of a reaction network.

    ``cycles`` lists the basis cycles the builders know about; each cycle
    is a sequence of (forward label, reverse label) steps.
    """

    species: Tuple[str, ...]
    reactions: Tuple[Reaction, ...]
    cycles: Tuple[Tuple[CycleStep, ...], ...] = field(default_factory=tuple)

    def __post_init__(self):
        known = set(self.species)
        for reaction in self.reactions:
            for name, _ in reaction.reactants + reaction.products:
                if name not in known:
                    raise StructureError(f"Reaction {reaction.label} uses unknown species {name}")

    def species_index(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.species)}

    def reaction(self, label: str) -> Reaction:
        """Look up a reaction by label.

        Raises:
            StructureError: If no reaction carries the label
        """
        for reaction in self.reactions:
            if reaction.label == label:
                return reaction
        raise StructureError(f"Network has no reaction labelled '{label}'")

    def scaled(self, factor: float) -> 'NetworkSpec':
        """Multiply every rate by ``factor`` (a change of time unit)."""
        if factor <= 0:
            raise ParameterError("Time rescaling factor must be positive")
        reactions = tuple(replace(r, rate=r.rate * factor) for r in self.reactions)
        return replace(self, reactions=reactions)

    def to_text(self) -> str:
        """Serialize to the line format ``label: reactants -> products @ rate``."""
        lines = [f"# species: {' '.join(self.species)}"]
        for cycle in self.cycles:
            steps = ' '.join(f"{fwd}>{rev}" for fwd, rev in cycle)
            lines.append(f"# cycle: {steps}")
        for r in self.reactions:
            lines.append(
                f"{r.label}: {_format_side(r.reactants)} -> {_format_side(r.products)} @ {r.rate!r}"
            )
        return '\n'.join(lines) + '\n'

    @staticmethod
    def from_text(text: str) -> 'NetworkSpec':
        """Parse the line format written by ``to_text``.

        Raises:
            StructureError: If a line cannot be parsed
        """
        species: List[str] = []
        cycles = []
        reactions = []

        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith('# species:'):
                species = line[len('# species:'):].split()
                continue
            if line.startswith('# cycle:'):
                steps = []
                for token in line[len('# cycle:'):].split():
                    fwd, _, rev = token.partition('>')
                    steps.append((fwd, rev))
                cycles.append(tuple(steps))
                continue
            if line.startswith('#'):
                continue

            try:
                label, body = line.split(':', 1)
                equation, rate_text = body.rsplit('@', 1)
                left, right = equation.split('->')
                reactions.append(Reaction(
                    label=label.strip(),
                    reactants=_parse_side(left),
                    products=_parse_side(right),
                    rate=float(rate_text)
                ))
            except ValueError as e:
                raise StructureError(f"Cannot parse reaction on line {lineno}: {raw!r}") from e

        if not species:
            seen = []
            for r in reactions:
                for name, _ in r.reactants + r.products:
                    if name not in seen:
                        seen.append(name)
            species = seen

        return NetworkSpec(tuple(species), tuple(reactions), tuple(cycles))


def _format_side(side: Side) -> str:
    if not side:
        return '0'
    terms = []
    for name, coeff in side:
        terms.append(name if coeff == 1 else f"{coeff} {name}")
    return ' + '.join(terms)


def _parse_side(text: str) -> Side:
    text = text.strip()
    if text == '0':
        return ()
    side = []
    for term in text.split('+'):
        parts = term.split()
        if len(parts) == 1:
            side.append((parts[0], 1))
        elif len(parts) == 2:
            side.append((parts[1], int(parts[0])))
        else:
            raise ValueError(f"bad term {term!r}")
    return tuple(side)


def ladder_species(N: int) -> Tuple[str, ...]:
    return ('S',) + tuple(f"C{k}" for k in range(N + 1)) + ('out', 'deg')


def build_ladder(params: ModelParams) -> NetworkSpec:
    """Build the kinetic-proofreading ladder network.

    Args:
        params: Model parameters; a degradation rate must be resolvable

    Returns:
        NetworkSpec with attach, detach, phosphorylation, dephosphorylation,
        output and degradation reactions plus the basis cycles S -> C_k ->
        C_{k+1} -> S

    Raises:
        ParameterError: If the parameters are invalid or mu is not positive
    """
    params.ensure_valid()
    mu = params.mu_resolved
    if mu <= 0:
        raise ParameterError("The ladder network needs a positive degradation rate")

    N = params.N
    detach = math.exp(params.sigma)
    phos = params.alpha * math.exp(params.delta)
    dephos = params.alpha * math.exp(params.energy_E)

    reactions = []
    for k in range(N + 1):
        reactions.append(Reaction(f"attach_{k}", (('S', 1),), ((f"C{k}", 1),),
                                  math.exp(-k * params.energy_E)))
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
        ((f"attach_{k}", f"detach_{k}"),
         (f"phos_{k}", f"dephos_{k + 1}"),
         (f"detach_{k + 1}", f"attach_{k + 1}"))
        for k in range(N)
    )

    logger.debug("Built ladder network with %d reactions", len(reactions))
    return NetworkSpec(ladder_species(N), tuple(reactions), cycles)


def cycle_delta(net: NetworkSpec, k: int) -> float:
    """Log ratio of forward to backward rate products along basis cycle k.

    Raises:
        StructureError: If the cycle or one of its reverse reactions is missing
    """
    if not 0 <= k < len(net.cycles):
        raise StructureError(f"Network has no basis cycle {k}")

    total = 0.0
    for forward, reverse in net.cycles[k]:
        total += math.log(net.reaction(forward).rate) - math.log(net.reaction(reverse).rate)
    return total


def wegscheider_holds(net: NetworkSpec,
                      tol: float = DEFAULT_CYCLE_TOL) -> Tuple[bool, List[CycleReport]]:
    """Check the Wegscheider condition on every basis cycle.

    Args:
        net: Network with its basis cycles
        tol: Largest |delta_k| counted as balanced

    Returns:
        Tuple of (all cycles balanced, per-cycle reports)
    """
    if tol <= 0:
        raise ParameterError("Tolerance must be positive")

    reports = []
    for k in range(len(net.cycles)):
        delta_k = cycle_delta(net, k)
        reports.append(CycleReport(cycle_index=k, delta_k=delta_k, balanced=abs(delta_k) <= tol))
    return all(r.balanced for r in reports), reports


class MassActionKinetics:
    """Mass-action right-hand side and Jacobian for a NetworkSpec."""

    def __init__(self, net: NetworkSpec):
        self.net = net
        index = net.species_index()
        n_species = len(net.species)
        n_reactions = len(net.reactions)

        self.orders = np.zeros((n_reactions, n_species))
        self.stoichiometry = np.zeros((n_species, n_reactions))
        self.rates = np.array([r.rate for r in net.reactions])

        for j, reaction in enumerate(net.reactions):
            for name, coeff in reaction.reactants:
                self.orders[j, index[name]] += coeff
                self.stoichiometry[index[name], j] -= coeff
            for name, coeff in reaction.products:
                self.stoichiometry[index[name], j] += coeff

        self._active = [np.nonzero(row)[0] for row in self.orders]

    def fluxes(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.rates * np.prod(np.power(x[None, :], self.orders), axis=1)

    def rhs(self, x: np.ndarray) -> np.ndarray:
        return self.stoichiometry @ self.fluxes(x)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d_flux = np.zeros_like(self.orders)
        for j, active in enumerate(self._active):
            for i in active:
                order = self.orders[j, i]
                term = self.rates[j] * order * x[i] ** (order - 1)
                for other in active:
                    if other != i:
                        term *= x[other] ** self.orders[j, other]
                d_flux[j, i] = term
        return self.stoichiometry @ d_flux


def stoichiometric_matrix(net: NetworkSpec) -> np.ndarray:
    """Species-by-reaction net stoichiometry."""
    return MassActionKinetics(net).stoichiometry


def mass_action_rhs(net: NetworkSpec, x: Sequence[float]) -> np.ndarray:
    return MassActionKinetics(net).rhs(np.asarray(x, dtype=float))


def mass_action_jacobian(net: NetworkSpec, x: Sequence[float]) -> np.ndarray:
    return MassActionKinetics(net).jacobian(np.asarray(x, dtype=float))


def conserved_directions(net: NetworkSpec, species: Optional[Iterable[str]] = None) -> np.ndarray:
    """Orthonormal basis (columns) of the left null space of the stoichiometry.

    Args:
        net: Network to analyse
        species: Optional subset of species rows to keep (e.g. to drop sinks)
    """
    matrix = stoichiometric_matrix(net)
    if species is not None:
        index = net.species_index()
        rows = [index[name] for name in species]
        matrix = matrix[rows, :]
    return linalg.null_space(matrix.T)
