"""
Werner-scalar channel and repeater model.

Every pair is assumed twirled between steps, so its singlet fidelity f fully
describes it and the label weights are (f, (1-f)/3, (1-f)/3, (1-f)/3).
The purification and swapping maps below are checked against the dense
two-pair simulations in src/oracle/dense_oracle.py.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from src.config import config
from src.models.bell_state import BellLabel

logger = logging.getLogger(__name__)

THRESHOLD = 0.5


@dataclass(frozen=True)
class WernerFidelity:
    f: float

    def __post_init__(self):
        if not 0.0 <= self.f <= 1.0:
            raise ValueError(f"Fidelity {self.f} outside [0, 1]")

    @property
    def purifiable(self) -> bool:
        return self.f > THRESHOLD

    def __float__(self) -> float:
        return float(self.f)


Fidelity = Union[float, WernerFidelity]


def _value(f: Fidelity) -> float:
    return float(WernerFidelity(float(f)).f)


def depolarize(label: BellLabel, p: float, rng: np.random.Generator) -> BellLabel:
    """With probability p the label is replaced by a uniformly random one."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Error probability {p} outside [0, 1]")
    if rng.random() < p:
        return BellLabel(int(rng.integers(4)))
    return BellLabel(label)


def depolarize_fidelity(f: Fidelity, p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Error probability {p} outside [0, 1]")
    return (1.0 - p) * _value(f) + p / 4.0


def purify_step(f: Fidelity) -> Tuple[float, float]:
    """One recurrence round on two Werner pairs -> (output fidelity, success probability)."""
    f = _value(f)
    q = (1.0 - f) / 3.0
    success = f * f + 2.0 * f * q + 5.0 * q * q
    return (f * f + q * q) / success, success


@dataclass(frozen=True)
class PurificationTrace:
    fidelities: List[float]
    success_probabilities: List[float]
    reached: bool

    @property
    def rounds(self) -> int:
        return len(self.success_probabilities)


def purify_until(f: Fidelity, target: float, max_rounds: Optional[int] = None) -> PurificationTrace:
    max_rounds = config.get('repeater.max_purification_rounds', 30) if max_rounds is None else max_rounds
    fidelities, successes = [_value(f)], []
    while fidelities[-1] < target and len(successes) < max_rounds:
        out, p = purify_step(fidelities[-1])
        fidelities.append(out)
        successes.append(p)
    return PurificationTrace(fidelities, successes, fidelities[-1] >= target)


def connect(f1: Fidelity, f2: Fidelity) -> float:
    """Entanglement swapping of two Werner pairs."""
    a, b = _value(f1), _value(f2)
    return a * b + (1.0 - a) * (1.0 - b) / 3.0


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainSpec:
    segment_fidelities: List[float]
    target_fidelity: float
    purification_rounds_per_segment: Optional[Union[int, List[int]]] = None
    max_rounds: Optional[int] = None

    def __post_init__(self):
        if not self.segment_fidelities:
            raise ValueError("A chain needs at least one segment")
        for f in self.segment_fidelities:
            WernerFidelity(float(f))
        schedule = self.purification_rounds_per_segment
        if isinstance(schedule, (list, tuple)) and len(schedule) != len(self.segment_fidelities):
            raise ValueError(f"Schedule has {len(schedule)} entries for {len(self.segment_fidelities)} segments")

    def schedule(self, uniform_rounds: int) -> List[int]:
        schedule = self.purification_rounds_per_segment
        if schedule is None:
            return [uniform_rounds] * len(self.segment_fidelities)
        if isinstance(schedule, int):
            return [schedule] * len(self.segment_fidelities)
        return [int(r) for r in schedule]


@dataclass
class ChainReport:
    final_fidelity: float
    pairs_consumed_per_delivered: float
    rounds: List[int]
    segment_fidelities: List[float]
    feasible: bool
    meets_target: bool
    infeasible_segments: List[int] = field(default_factory=list)
    realised_pairs_consumed: Optional[int] = None


def _segment(f: float, rounds: int):
    cost = 1.0
    for _ in range(rounds):
        f, p = purify_step(f)
        cost *= 2.0 / p
    return f, cost


def _chain_value(fidelities: Sequence[float], schedule: Sequence[int]):
    purified, cost = [], 0.0
    for f, rounds in zip(fidelities, schedule):
        out, c = _segment(f, rounds)
        purified.append(out)
        cost += c
    final = purified[0]
    for f in purified[1:]:
        final = connect(final, f)
    return final, cost, purified


def _sample_pairs(f: float, rounds: int, rng: np.random.Generator) -> int:
    """Raw pairs consumed to obtain one pair purified `rounds` times."""
    if rounds == 0:
        return 1
    _, p = purify_step(_segment(f, rounds - 1)[0])
    attempts = int(rng.geometric(p))
    return sum(_sample_pairs(f, rounds - 1, rng) + _sample_pairs(f, rounds - 1, rng) for _ in range(attempts))


def simulate_chain(spec: ChainSpec, rng: Optional[np.random.Generator] = None) -> ChainReport:
    """Purify every segment per the schedule, then connect them in order.

    Without an explicit schedule the smallest uniform rounds-per-segment that
    meets the target (up to max_rounds) is used."""
    fidelities = [float(f) for f in spec.segment_fidelities]
    max_rounds = spec.max_rounds if spec.max_rounds is not None else config.get('repeater.max_purification_rounds', 30)
    infeasible = [i for i, f in enumerate(fidelities) if f <= THRESHOLD]

    if spec.purification_rounds_per_segment is None:
        chosen = max_rounds
        for rounds in range(max_rounds + 1):
            if _chain_value(fidelities, [rounds] * len(fidelities))[0] >= spec.target_fidelity:
                chosen = rounds
                break
        schedule = spec.schedule(chosen)
    else:
        schedule = spec.schedule(0)

    final, cost, purified = _chain_value(fidelities, schedule)
    report = ChainReport(
        final_fidelity=final,
        pairs_consumed_per_delivered=cost,
        rounds=schedule,
        segment_fidelities=purified,
        feasible=not infeasible,
        meets_target=final >= spec.target_fidelity,
        infeasible_segments=infeasible,
    )
    if infeasible:
        logger.warning(f"Segments {infeasible} are at or below the purification threshold {THRESHOLD}")
    elif not report.meets_target:
        logger.warning(f"Chain reaches {final:.6f}, short of target {spec.target_fidelity}")
    if rng is not None:
        report.realised_pairs_consumed = sum(_sample_pairs(f, r, rng) for f, r in zip(fidelities, schedule))
    return report


def tolerable_depolarization(n_segments: int, target: float, rounds: int) -> float:
    """Largest per-segment depolarizing probability (acting on perfect singlets)
    for which the chain with a uniform schedule still meets the target."""
    if not THRESHOLD < target <= 1.0:
        raise ValueError(f"Target fidelity must lie in ({THRESHOLD}, 1], got {target}")

    def margin(p: float) -> float:
        f = depolarize_fidelity(1.0, p)
        return _chain_value([f] * n_segments, [rounds] * n_segments)[0] - target

    if margin(0.0) <= 0:
        return 0.0
    # p = 2/3 puts every segment on the threshold, which no chain can escape
    return float(brentq(margin, 0.0, 2.0 / 3.0, xtol=1e-12))


# ---------------------------------------------------------------------------
# Fault-tolerant error recursion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FtqcParams:
    epsilon: float
    epsilon0: float
    levels: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"Error rate must be non-negative, got {self.epsilon}")
        if self.epsilon0 <= 0:
            raise ValueError(f"Threshold must be positive, got {self.epsilon0}")
        if self.levels < 0:
            raise ValueError(f"Concatenation level must be non-negative, got {self.levels}")


def ftqc_error(params: FtqcParams) -> float:
    """Logical error after L levels of concatenation: eps0 * (eps / eps0) ** (2 ** L).

    Evaluated in log space; above threshold the value grows without bound and
    saturates at inf instead of overflowing."""
    ratio = params.epsilon / params.epsilon0
    if ratio == 0.0:
        return 0.0
    with np.errstate(over='ignore', under='ignore'):
        log_error = np.log(params.epsilon0) + np.ldexp(np.log(ratio), params.levels)
        return float(np.exp(log_error))


def ftqc_levels_needed(epsilon: float, epsilon0: float, target: float, max_levels: int = 64) -> int:
    if epsilon >= epsilon0 and epsilon > target:
        raise ValueError(f"Error rate {epsilon} is not below the threshold {epsilon0}; concatenation does not help")
    for level in range(max_levels + 1):
        if ftqc_error(FtqcParams(epsilon, epsilon0, level)) <= target:
            return level
    raise ValueError(f"Error rate {epsilon} does not reach {target} below threshold {epsilon0} "
                     f"within {max_levels} levels")
