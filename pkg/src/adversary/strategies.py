"""
Eavesdropping strategies: each one produces the source state of one protocol run.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from src.algebra.bell_algebra import apply_circuit, build_parity_circuit
from src.config import config
from src.models.bell_state import BellLabel, BellString, Subset, SINGLET
from src.oracle import dense_oracle
from src.oracle.dense_oracle import DenseState
from src.protocol import batch

logger = logging.getLogger(__name__)

STRATEGY_KINDS = ("honest", "single_flaw", "bell_mixture", "general_pure", "foreknowledge")
LABEL_KINDS = ("honest", "single_flaw", "bell_mixture")

_LABEL_NAMES = {
    "phi+": BellLabel.PHI_PLUS, "phi_plus": BellLabel.PHI_PLUS,
    "psi+": BellLabel.PSI_PLUS, "psi_plus": BellLabel.PSI_PLUS,
    "phi-": BellLabel.PHI_MINUS, "phi_minus": BellLabel.PHI_MINUS,
    "psi-": BellLabel.PSI_MINUS, "psi_minus": BellLabel.PSI_MINUS,
}


def parse_label(value: Union[BellLabel, int, str]) -> BellLabel:
    if isinstance(value, str):
        key = value.strip().lower()
        if key not in _LABEL_NAMES:
            raise ValueError(f"Unknown Bell label '{value}'")
        return _LABEL_NAMES[key]
    return BellLabel(value)


def single_flaw(n_pairs: int, position: int, flaw_label: Union[BellLabel, int, str]) -> BellString:
    flaw = parse_label(flaw_label)
    if flaw is SINGLET:
        raise ValueError("A singlet in the flaw position is not a cheat")
    if not 0 <= position < n_pairs:
        raise IndexError(f"Flaw position {position} out of range for {n_pairs} pairs")
    return BellString.honest(n_pairs).with_labels({position: flaw})


def _normalised_distribution(distribution: Mapping[Union[str, BellString], float]):
    strings = [s if isinstance(s, BellString) else BellString.from_bits(s) for s in distribution]
    weights = np.array(list(distribution.values()), dtype=float)
    if not strings:
        raise ValueError("Empty distribution")
    if (weights < 0).any():
        raise ValueError("Distribution has negative weights")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"Distribution sums to {weights.sum():.12f}, not 1")
    if len({s.n_pairs for s in strings}) != 1:
        raise ValueError("All strings of a mixture need the same number of pairs")
    return strings, weights / weights.sum()


def bell_mixture(distribution: Mapping[Union[str, BellString], float], rng: np.random.Generator) -> BellString:
    strings, weights = _normalised_distribution(distribution)
    return strings[int(rng.choice(len(strings), p=weights))]


def general_pure(n_pairs: int, ancilla_qubits: int = 0,
                 amplitudes: Optional[Union[np.ndarray, Mapping[str, complex]]] = None,
                 rng: Optional[np.random.Generator] = None) -> DenseState:
    """Pure state sum_{w,j} alpha[w, j] |w> (x) |j>, with w an N-Bell string.

    alpha is either given (a (4**N, 2**a) array, or a mapping from 2N-bit
    strings to amplitudes with a trivial ancilla) or drawn with independent
    normal real and imaginary parts and normalised."""
    dense_oracle.check_size(n_pairs, ancilla_qubits)
    shape = (4 ** n_pairs, 2 ** ancilla_qubits)
    if amplitudes is None:
        if rng is None:
            raise ValueError("Either amplitudes or an rng is required")
        alpha = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    elif isinstance(amplitudes, Mapping):
        if ancilla_qubits:
            raise ValueError("Mapping amplitudes describe a trivial ancilla only")
        alpha = np.zeros(shape, dtype=complex)
        for bits, amp in amplitudes.items():
            labels = BellString.from_bits(bits)
            if labels.n_pairs != n_pairs:
                raise ValueError(f"String {bits} does not describe {n_pairs} pairs")
            alpha[dense_oracle.string_index(labels), 0] += amp
    else:
        alpha = np.asarray(amplitudes, dtype=complex).reshape(shape)
    norm = np.linalg.norm(alpha)
    if norm < config.tolerance:
        raise ValueError("Amplitude specification cannot be normalised")
    vec = (dense_oracle.bell_basis_matrix(n_pairs) @ (alpha / norm)).reshape(-1)
    return DenseState(vec, n_pairs, ancilla_qubits)


def foreknowledge_cheat(subsets: Sequence[Subset], target_key_bit: int) -> DenseState:
    """State that passes the given rounds with certainty and fixes every key bit.

    Take the honest final string, replace each surviving pair by the product
    state giving the wanted key bit (|up,down> for 0, |down,up> for 1), then run
    the circuits of all rounds backwards.

    With Psi+/- = (|01> +/- |10>)/sqrt(2), |up,down> is (Psi+ + Psi-)/sqrt(2),
    so the key pair enters the Bell expansion with a relative + sign."""
    if not subsets:
        raise ValueError("At least one subset is needed")
    if target_key_bit not in (0, 1):
        raise ValueError(f"Key bit must be 0 or 1, got {target_key_bit}")
    n_pairs = subsets[0].n_pairs
    if len(subsets) >= n_pairs:
        raise ValueError(f"{len(subsets)} rounds consume all {n_pairs} pairs, leaving no key pair")

    live = list(range(n_pairs))
    circuit = []
    for number, subset in enumerate(subsets):
        if subset.n_pairs != len(live) or len(subset) % 2:
            raise ValueError(f"Round {number}: subset covers {subset.n_pairs} pairs, {len(live)} are live")
        gates, destination = build_parity_circuit(subset, live)
        circuit.extend(gates)
        live.remove(destination)

    honest_final = apply_circuit(BellString.honest(n_pairs), circuit)
    key_pair = np.zeros(4, dtype=complex)
    key_pair[0b01 if target_key_bit == 0 else 0b10] = 1.0
    vec = np.ones(1, dtype=complex)
    for k in range(n_pairs):
        vec = np.kron(vec, key_pair if k in live else dense_oracle.bell_vector(honest_final.label(k)))
    final = DenseState(vec, n_pairs)
    logger.debug(f"Foreknowledge cheat: honest final string {honest_final}, key pairs {live}")
    return dense_oracle.apply_circuit_dense(final, circuit, inverse=True)


def premeasured_mixture(state: DenseState) -> Dict[str, float]:
    """Bell-basis premeasurement of a dense state as a distribution over 2N-bit strings."""
    return {str(branch.labels): branch.probability for branch in dense_oracle.bell_premeasure(state)}


@dataclass(frozen=True)
class Strategy:
    """A strategy named by kind plus its parameters, as written in experiment configs.

    single_flaw: position (random if absent), label
    bell_mixture: distribution {bit string: weight}
    general_pure: ancilla_qubits, optional amplitudes
    foreknowledge: key_bit (consumes the subset sequence)
    """

    kind: str = "honest"
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"Unknown strategy '{self.kind}', expected one of {STRATEGY_KINDS}")

    @property
    def requires_subsets(self) -> bool:
        return self.kind == "foreknowledge"

    @property
    def label_level(self) -> bool:
        return self.kind in LABEL_KINDS

    def build_source(self, n_pairs: int, rng: np.random.Generator,
                     subsets: Optional[Sequence[Subset]] = None) -> Union[BellString, DenseState]:
        if self.kind == "honest":
            return BellString.honest(n_pairs)
        if self.kind == "single_flaw":
            position = self.params.get("position")
            if position is None:
                position = int(rng.integers(n_pairs))
            return single_flaw(n_pairs, int(position), self.params.get("label", "phi+"))
        if self.kind == "bell_mixture":
            return bell_mixture(self.params["distribution"], rng)
        if self.kind == "general_pure":
            return general_pure(n_pairs, int(self.params.get("ancilla_qubits", 0)),
                                self.params.get("amplitudes"), rng)
        if subsets is None:
            raise ValueError("The foreknowledge strategy needs the subset sequence before it commits")
        return foreknowledge_cheat(subsets, int(self.params.get("key_bit", 0)))

    def label_batch(self, n_pairs: int, n_trials: int, rng: np.random.Generator) -> np.ndarray:
        """(trials, pairs) label array for the vectorised engine; label-level kinds only."""
        if self.kind == "honest":
            return batch.tile_string(BellString.honest(n_pairs), n_trials)
        if self.kind == "single_flaw":
            if self.params.get("position") is not None:
                return batch.tile_string(self.build_source(n_pairs, rng), n_trials)
            labels = batch.tile_string(BellString.honest(n_pairs), n_trials)
            flaw = parse_label(self.params.get("label", "phi+"))
            if flaw is SINGLET:
                raise ValueError("A singlet in the flaw position is not a cheat")
            labels[np.arange(n_trials), rng.integers(n_pairs, size=n_trials)] = int(flaw)
            return labels
        if self.kind == "bell_mixture":
            strings, weights = _normalised_distribution(self.params["distribution"])
            if strings[0].n_pairs != n_pairs:
                raise ValueError(f"Mixture strings have {strings[0].n_pairs} pairs, run has {n_pairs}")
            return batch.sample_strings(strings, weights, n_trials, rng)
        raise ValueError(f"Strategy '{self.kind}' is not a label-level strategy")
