"""
Verification and key generation.

The classical parity game, the hashing test over label strings or dense
states, the direct-testing baseline and the raw key readout.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.algebra.bell_algebra import (apply_circuit, build_parity_circuit, is_antiparallel,
                                      measure_pair)
from src.models.bell_state import BellString, Fine, Subset
from src.models.transcript import Transcript, TranscriptRound, Verdict
from src.oracle import dense_oracle
from src.oracle.dense_oracle import DenseState

logger = logging.getLogger(__name__)

Source = Union[BellString, DenseState]

SUBSET_POLICIES = ("uniform-random-nonzero",)
GAME_POLICIES = ("single-digit", "random-parity")


@dataclass(frozen=True)
class ProtocolParams:
    n_pairs: int
    n_rounds: int
    rng_seed: Optional[int] = None
    subset_policy: str = "uniform-random-nonzero"

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ValueError(f"n_rounds must be at least 1, got {self.n_rounds}")
        if self.n_rounds >= self.n_pairs:
            raise ValueError(f"n_rounds ({self.n_rounds}) must be smaller than n_pairs ({self.n_pairs}); "
                             f"every round consumes one pair")
        if self.subset_policy not in SUBSET_POLICIES:
            raise ValueError(f"Unknown subset policy '{self.subset_policy}'")


def draw_subset(n_live: int, rng: np.random.Generator) -> Subset:
    """Uniform over the nonzero 2L-bit strings."""
    while True:
        bits = rng.integers(0, 2, size=2 * n_live)
        if bits.any():
            return Subset(tuple(int(b) for b in bits))


def draw_subsets(n_pairs: int, n_rounds: int, rng: np.random.Generator) -> List[Subset]:
    return [draw_subset(n_pairs - r, rng) for r in range(n_rounds)]


def all_questions(n_live: int) -> Iterator[Subset]:
    for bits in itertools.product((0, 1), repeat=2 * n_live):
        if any(bits):
            yield Subset(bits)


# ---------------------------------------------------------------------------
# Classical game
# ---------------------------------------------------------------------------

def classical_game(x: Sequence[int] | str, m: int, question_policy: str, rng: np.random.Generator) -> Verdict:
    """Eve commits to x; m questions drawn afterwards must match the all-1s answers."""
    bits = np.array([int(b) for b in x], dtype=np.int8)
    if bits.size == 0:
        raise ValueError("Classical game needs a non-empty string")
    if question_policy == "single-digit":
        positions = rng.integers(0, bits.size, size=m)
        return Verdict.ACCEPT if bits[positions].all() else Verdict.REJECT
    if question_policy == "random-parity":
        for _ in range(m):
            s = rng.integers(0, 2, size=bits.size)
            if int(s @ bits) % 2 != int(s.sum()) % 2:
                return Verdict.REJECT
        return Verdict.ACCEPT
    raise ValueError(f"Unknown question policy '{question_policy}', expected one of {GAME_POLICIES}")


def classical_acceptance_probability(x: Sequence[int] | str, m: int, question_policy: str) -> float:
    """Exact acceptance probability of the classical game."""
    bits = [int(b) for b in x]
    if question_policy == "single-digit":
        return (sum(bits) / len(bits)) ** m
    if question_policy == "random-parity":
        return 1.0 if all(bits) else 2.0 ** -m
    raise ValueError(f"Unknown question policy '{question_policy}', expected one of {GAME_POLICIES}")


# ---------------------------------------------------------------------------
# Quantum verification
# ---------------------------------------------------------------------------

def run_verification(source: Source, params: ProtocolParams, rng: np.random.Generator,
                     subsets: Optional[Sequence[Subset]] = None
                     ) -> Tuple[Transcript, Optional[Source]]:
    """Run the hashing test. Subsets are drawn from rng only after the source is
    supplied, unless an explicit sequence is given.

    Returns the transcript and the N - m surviving pairs (None on rejection)."""
    if source.n_pairs != params.n_pairs:
        raise ValueError(f"Source has {source.n_pairs} pairs, params say {params.n_pairs}")
    if subsets is None:
        subsets = draw_subsets(params.n_pairs, params.n_rounds, rng)
    elif len(subsets) != params.n_rounds:
        raise ValueError(f"Got {len(subsets)} subsets for {params.n_rounds} rounds")

    if isinstance(source, DenseState):
        transcript, residual = dense_oracle.run_protocol_dense(source, subsets, rng)
    else:
        transcript, residual = _run_labels(source, subsets, rng)

    logger.debug(f"Verification on {params.n_pairs} pairs, {params.n_rounds} rounds: {transcript.verdict.value}")
    return transcript, (residual if transcript.accepted else None)


def _run_labels(state: BellString, subsets: Sequence[Subset], rng: np.random.Generator
                ) -> Tuple[Transcript, BellString]:
    shadow = BellString.honest(state.n_pairs)
    transcript = Transcript()
    for number, subset in enumerate(subsets):
        if len(subset) != 2 * state.n_pairs:
            raise ValueError(f"Round {number}: subset has {len(subset)} bits for {state.n_pairs} live pairs")
        gates, destination = build_parity_circuit(subset)
        state = apply_circuit(state, gates)
        shadow = apply_circuit(shadow, gates)
        expected = shadow.label(destination).amplitude_bit
        _, fine, state = measure_pair(state, destination, rng)
        shadow = shadow.drop(destination)
        if not transcript.record(TranscriptRound(subset, destination, fine, expected)):
            break
    return transcript, state


def generate_key(survivors: Source, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Both sides read every surviving pair along z (up = 0, down = 1); Bob flips his bits."""
    if survivors is None or survivors.n_pairs == 0:
        raise ValueError("No surviving pairs to generate a key from")
    fines: List[Fine] = []
    if isinstance(survivors, DenseState):
        state = survivors
        while state.n_pairs:
            record, state = dense_oracle.measure_pair_along(state, 0, 'z', rng)
            fines.append(record.outcome)
    else:
        state = survivors
        while state.n_pairs:
            _, fine, state = measure_pair(state, 0, rng)
            fines.append(fine)
    alice = np.array([f.alice_bit for f in fines], dtype=np.int8)
    bob = np.array([1 - f.bob_bit for f in fines], dtype=np.int8)
    return alice, bob


def run_direct_test(source: Source, n_tests: int, rng: np.random.Generator, axis: str = 'z') -> Verdict:
    """Baseline: measure n_tests randomly chosen pairs directly along one axis and
    accept iff all are antiparallel."""
    if not 0 < n_tests <= source.n_pairs:
        raise ValueError(f"Cannot test {n_tests} of {source.n_pairs} pairs")
    chosen = sorted(rng.choice(source.n_pairs, size=n_tests, replace=False), reverse=True)
    if isinstance(source, BellString):
        ok = all(is_antiparallel(source.label(int(k)), axis) for k in chosen)
        return Verdict.ACCEPT if ok else Verdict.REJECT
    state = source
    # Descending order keeps the remaining indices valid as pairs are removed.
    for k in chosen:
        record, state = dense_oracle.measure_pair_along(state, int(k), axis, rng)
        if record.outcome.coarse.parity != 1:
            return Verdict.REJECT
    return Verdict.ACCEPT


# ---------------------------------------------------------------------------
# Exact small-N quantities (uniform average over every admissible subset sequence)
# ---------------------------------------------------------------------------

def exact_acceptance_probability(source: Source, n_rounds: int) -> float:
    mass, _ = _exact_accept(source, n_rounds)
    return mass


def conditional_singlet_fidelity(state: Source, n_rounds: int) -> Tuple[float, float]:
    """(P(accept), fidelity of the survivors with the honest survivors given acceptance).

    The honest survivors are the N-singlet string carried through the same
    circuits, a fixed local-unitary image of surviving singlets."""
    mass, hit = _exact_accept(state, n_rounds)
    return mass, (hit / mass if mass > 0 else 0.0)


def _exact_accept(source: Source, n_rounds: int) -> Tuple[float, float]:
    ProtocolParams(source.n_pairs, n_rounds)
    shadow = BellString.honest(source.n_pairs)
    if isinstance(source, DenseState):
        tensor = source.tensor()
        return _dense_branch(tensor, list(range(source.n_pairs)), shadow, n_rounds)
    return _label_branch(source.without_phase(), shadow, n_rounds, {})


def _label_branch(state: BellString, shadow: BellString, rounds_left: int, memo: dict) -> Tuple[float, float]:
    if rounds_left == 0:
        hit = 1.0 if state.labels == shadow.labels else 0.0
        return 1.0, hit
    key = (state.labels, shadow.labels, rounds_left)
    if key in memo:
        return memo[key]
    questions = list(all_questions(state.n_pairs))
    mass = hit = 0.0
    for subset in questions:
        gates, destination = build_parity_circuit(subset)
        after, ref = apply_circuit(state, gates), apply_circuit(shadow, gates)
        if after.label(destination).amplitude_bit != ref.label(destination).amplitude_bit:
            continue
        m, h = _label_branch(after.drop(destination).without_phase(), ref.drop(destination).without_phase(),
                             rounds_left - 1, memo)
        mass += m
        hit += h
    memo[key] = (mass / len(questions), hit / len(questions))
    return memo[key]


def _dense_branch(tensor: np.ndarray, live: List[int], shadow: BellString, rounds_left: int) -> Tuple[float, float]:
    """tensor keeps measured qubits in place; live lists the unmeasured pairs."""
    if rounds_left == 0:
        mass = float(np.sum(np.abs(tensor) ** 2))
        reference = BellString(tuple(shadow.labels[k] for k in live))
        ref_vec = dense_oracle.bell_product_vector(reference).reshape([2] * (2 * len(live)))
        axes = [q for k in live for q in (2 * k, 2 * k + 1)]
        overlap = np.tensordot(ref_vec.conj(), tensor, axes=(list(range(len(axes))), axes))
        return mass, float(np.sum(np.abs(overlap) ** 2))
    questions = list(all_questions(len(live)))
    mass = hit = 0.0
    for subset in questions:
        gates, destination = build_parity_circuit(subset, live)
        evolved = tensor
        for gate in gates:
            evolved = dense_oracle.apply_gate_tensor(evolved, gate)
        ref = apply_circuit(shadow, gates)
        projected = dense_oracle.project_coarse(evolved, destination, ref.label(destination).amplitude_bit)
        m, h = _dense_branch(projected, [k for k in live if k != destination], ref, rounds_left - 1)
        mass += m
        hit += h
    return mass / len(questions), hit / len(questions)


def reference_survivors(n_pairs: int, subsets: Sequence[Subset]) -> BellString:
    """The N-singlet string carried through the given rounds, measured pairs removed."""
    reference = BellString.honest(n_pairs)
    for subset in subsets:
        gates, destination = build_parity_circuit(subset)
        reference = apply_circuit(reference, gates).drop(destination)
    return reference.without_phase()


def expected_parities(n_pairs: int, subsets: Sequence[Subset]) -> Tuple[int, ...]:
    """Parities the N-singlet string produces under the given rounds."""
    reference, parities = BellString.honest(n_pairs), []
    for subset in subsets:
        gates, destination = build_parity_circuit(subset)
        reference = apply_circuit(reference, gates)
        parities.append(reference.label(destination).amplitude_bit)
        reference = reference.drop(destination)
    return tuple(parities)
