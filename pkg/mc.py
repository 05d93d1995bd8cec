"""Monte Carlo oracle for the response probability in KPR Toolkit.

A single ligand is followed through the continuous-time chain on
{S, C_0, ..., C_N} until it is absorbed by a response (phosphorylation out
of C_N) or by degradation. Trials run in fixed-size blocks, each block with
its own Philox stream derived from (seed, block index), so estimates do not
depend on the number of workers.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from crn_core import ModelParams
from errors import ParameterError, TrialAbortError

logger = logging.getLogger('kpr_toolkit.mc')

BLOCK_SIZE = 2 ** 14
MAX_EVENTS = 10 ** 9


class Outcome(Enum):
    RESPONSE = 'response'
    DEGRADED = 'degraded'


@dataclass
class TrialOutcome:
    outcome: Outcome
    absorption_time: float
    path_length: int


@dataclass
class BlockResult:
    """Per-trial results of one block."""

    block_index: int
    responded: np.ndarray
    absorption_time: np.ndarray
    path_length: np.ndarray

    @property
    def responses(self) -> int:
        return int(np.count_nonzero(self.responded))

    @property
    def size(self) -> int:
        return len(self.responded)


@dataclass
class McEstimate:
    p_hat: float
    stderr: float
    trials: int
    responses: int
    mean_events: float
    seed: int
    sigma: float = math.nan


@dataclass
class McSweep:
    params: ModelParams
    seed: int
    rows: List[McEstimate] = field(default_factory=list)


@dataclass
class JumpChain:
    """Embedded jump chain: cumulative destination probabilities and exit rates.

    Rows are the states (S, C_0, ..., C_N); columns are the destinations
    (S, C_0, ..., C_N, response, degraded).
    """

    cumulative: np.ndarray
    exit_rate: np.ndarray

    @property
    def response(self) -> int:
        return self.cumulative.shape[0]

    @property
    def degraded(self) -> int:
        return self.cumulative.shape[0] + 1


def build_jump_chain(params: ModelParams) -> JumpChain:
    """Transition probabilities of the single-ligand chain.

    Raises:
        ParameterError: If the degradation rate is not positive
    """
    params.ensure_valid()
    mu = params.mu_resolved
    if not mu > 0:
        raise ParameterError("Monte Carlo trials need mu > 0 so that every trial is absorbed")
    N = params.N
    detach = math.exp(params.sigma)
    phos = params.alpha * math.exp(params.delta)
    dephos = params.alpha * math.exp(params.energy_E)

    states = N + 2
    rates = np.zeros((states, states + 2))
    rates[0, 1:N + 2] = np.exp(-params.energy_E * np.arange(N + 1))
    rates[0, states + 1] = mu
    for k in range(N + 1):
        row = k + 1
        rates[row, 0] = detach
        rates[row, row + 1 if k < N else states] = phos
        if k >= 1:
            rates[row, row - 1] = dephos
        rates[row, states + 1] = mu

    exit_rate = rates.sum(axis=1)
    cumulative = np.cumsum(rates / exit_rate[:, None], axis=1)
    cumulative[:, -1] = 1.0
    return JumpChain(cumulative=cumulative, exit_rate=exit_rate)


def block_generator(seed: int, key: Tuple[int, ...]) -> np.random.Generator:
    """Philox stream for one block, derived from the run seed and a spawn key."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _run_block(chain: JumpChain, rng: np.random.Generator, size: int, block_index: int,
               max_events: int) -> BlockResult:
    state = np.zeros(size, dtype=np.int64)
    time = np.zeros(size)
    events = np.zeros(size, dtype=np.int64)
    responded = np.zeros(size, dtype=bool)
    alive = np.arange(size)

    while alive.size:
        current = state[alive]
        time[alive] += rng.standard_exponential(alive.size) / chain.exit_rate[current]
        u = 1.0 - rng.random(alive.size)
        destination = (chain.cumulative[current] < u[:, None]).sum(axis=1)
        events[alive] += 1
        state[alive] = destination

        absorbed = destination >= chain.response
        responded[alive[destination == chain.response]] = True
        alive = alive[~absorbed]
        if alive.size and events[alive[0]] > max_events:
            raise TrialAbortError(
                f"Block {block_index}: {alive.size} trials exceeded {max_events} events")

    return BlockResult(block_index=block_index, responded=responded, absorption_time=time,
                       path_length=events)


def simulate_block(params: ModelParams, seed: int, block_index: int, size: int = BLOCK_SIZE,
                   key_prefix: Tuple[int, ...] = (), max_events: int = MAX_EVENTS) -> BlockResult:
    """Simulate one block of independent trials.

    Args:
        params: Model parameters with mu > 0
        seed: Run seed
        block_index: Block number; selects the Philox stream
        size: Number of trials in the block
        key_prefix: Extra spawn-key components (the sigma index of a sweep)
        max_events: Per-trial event limit

    Returns:
        BlockResult with per-trial outcome, absorption time and event count

    Raises:
        TrialAbortError: If a trial exceeds max_events
    """
    chain = build_jump_chain(params)
    rng = block_generator(seed, tuple(key_prefix) + (block_index,))
    return _run_block(chain, rng, size, block_index, max_events)


def simulate_ligand(params: ModelParams, seed: int) -> TrialOutcome:
    """One trial; identical seeds give identical outcomes and times."""
    result = simulate_block(params, seed, block_index=0, size=1)
    outcome = Outcome.RESPONSE if result.responded[0] else Outcome.DEGRADED
    return TrialOutcome(outcome=outcome, absorption_time=float(result.absorption_time[0]),
                        path_length=int(result.path_length[0]))


def block_sizes(trials: int, block_size: int = BLOCK_SIZE) -> List[int]:
    """Deterministic split of trials into fixed-size blocks."""
    full, rest = divmod(trials, block_size)
    return [block_size] * full + ([rest] if rest else [])


def _block_counts(task) -> Tuple[int, int, int]:
    params, seed, block_index, size, key_prefix = task
    result = simulate_block(params, seed, block_index, size, key_prefix)
    return result.responses, result.size, int(result.path_length.sum())


def _estimate(params: ModelParams, trials: int, seed: int, workers: int,
              key_prefix: Tuple[int, ...]) -> McEstimate:
    if not isinstance(trials, int) or trials < 1:
        raise ParameterError(f"trials must be a positive integer (got {trials!r})")
    build_jump_chain(params)
    tasks = [(params, seed, index, size, key_prefix) for index, size in enumerate(block_sizes(trials))]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(_block_counts, tasks))
    else:
        counts = [_block_counts(task) for task in tasks]

    responses = sum(count[0] for count in counts)
    events = sum(count[2] for count in counts)
    p_hat = responses / trials
    stderr = math.sqrt(p_hat * (1 - p_hat) / trials)
    return McEstimate(p_hat=p_hat, stderr=stderr, trials=trials, responses=responses,
                      mean_events=events / trials, seed=seed, sigma=params.sigma)


def estimate_pres_detail(params: ModelParams, trials: int, seed: int, workers: int = 1) -> McEstimate:
    return _estimate(params, trials, seed, workers, ())


def estimate_pres(params: ModelParams, trials: int, seed: int, workers: int = 1) -> Tuple[float, float]:
    """Binomial estimate of p_res.

    Returns:
        Tuple (p_hat, stderr) with stderr = sqrt(p_hat (1 - p_hat) / trials)
    """
    estimate = _estimate(params, trials, seed, workers, ())
    return estimate.p_hat, estimate.stderr


def sweep_mc(params: ModelParams, sigma_grid: Sequence[float], trials: int, seed: int,
             workers: int = 1) -> McSweep:
    """Estimates along a sigma grid; point i draws from streams keyed (i, block)."""
    sweep = McSweep(params=params, seed=seed)
    for index, sigma in enumerate(sigma_grid):
        point = params.with_changes(sigma=float(sigma))
        estimate = _estimate(point, trials, seed, workers, (index,))
        logger.debug("sigma=%g p_hat=%.6g stderr=%.3g", sigma, estimate.p_hat, estimate.stderr)
        sweep.rows.append(estimate)
    return sweep
