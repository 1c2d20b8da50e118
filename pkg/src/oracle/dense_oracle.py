"""
Brute-force amplitude simulator for a few pairs plus an optional ancilla.

Qubit ordering: pair k's Alice qubit is qubit 2k, its Bob qubit is 2k+1, the
ancilla qubits come last. Qubit 0 is the most significant index bit, so the
state vector of a product is the numpy Kronecker product in that order.

Basis states: |0> = spin up, |1> = spin down.

Mixtures are never evolved as density matrices; they are handled by
enumerating pure (possibly unnormalised) branches and summing probabilities.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.config import config
from src.models.bell_state import BellLabel, BellString, Coarse, Fine, Gate, GateKind, SINGLET, Subset
from src.models.transcript import Transcript, TranscriptRound

logger = logging.getLogger(__name__)

_SQRT2_INV = 1 / np.sqrt(2)

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV
S_DAG = np.array([[1, 0], [0, -1j]], dtype=complex)
# pi/2 rotations exp(-i pi/4 P) = (I - iP)/sqrt(2)
RX90 = (I2 - 1j * X) * _SQRT2_INV
RY90 = (I2 - 1j * Y) * _SQRT2_INV

# Rotation taking the measurement axis onto z before a computational readout
_AXIS_CHANGE = {
    'z': I2,
    'x': H,
    'y': H @ S_DAG,
}

# Columns ordered by label value: Phi+, Psi+, Phi-, Psi-
_BELL_VECTORS = {
    BellLabel.PHI_PLUS: np.array([1, 0, 0, 1], dtype=complex) * _SQRT2_INV,
    BellLabel.PSI_PLUS: np.array([0, 1, 1, 0], dtype=complex) * _SQRT2_INV,
    BellLabel.PHI_MINUS: np.array([1, 0, 0, -1], dtype=complex) * _SQRT2_INV,
    BellLabel.PSI_MINUS: np.array([0, 1, -1, 0], dtype=complex) * _SQRT2_INV,
}


class SizeCapError(ValueError):
    """Dense state would exceed the configured qubit cap."""


@dataclass(frozen=True)
class QubitRole:
    side: str               # 'alice' | 'bob' | 'eve'
    pair: Optional[int] = None


@dataclass(frozen=True)
class MeasurementRecord:
    basis: str               # 'x' | 'y' | 'z' | 'bell'
    targets: Tuple[int, ...]
    outcome: object
    probability: float

    def __post_init__(self):
        if not -config.tolerance <= self.probability <= 1 + config.tolerance:
            raise ValueError(f"Outcome probability {self.probability} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class DenseState:
    """Normalised amplitude vector over 2N pair qubits and n_ancilla Eve qubits."""

    amplitudes: np.ndarray
    n_pairs: int
    n_ancilla: int = 0

    def __post_init__(self):
        check_size(self.n_pairs, self.n_ancilla)
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2 ** self.n_qubits:
            raise ValueError(f"Expected {2 ** self.n_qubits} amplitudes, got {amps.size}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > config.tolerance:
            raise ValueError(f"State norm {norm:.12f} differs from 1")
        amps.setflags(write=False)
        object.__setattr__(self, 'amplitudes', amps)

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_pairs + self.n_ancilla

    @property
    def qubit_roles(self) -> Tuple[QubitRole, ...]:
        roles = []
        for k in range(self.n_pairs):
            roles.extend([QubitRole('alice', k), QubitRole('bob', k)])
        roles.extend(QubitRole('eve') for _ in range(self.n_ancilla))
        return tuple(roles)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape([2] * self.n_qubits)

    @classmethod
    def from_tensor(cls, tensor: np.ndarray, n_pairs: int, n_ancilla: int = 0,
                    normalize: bool = False) -> "DenseState":
        amps = np.asarray(tensor, dtype=complex).reshape(-1)
        if normalize:
            norm = np.linalg.norm(amps)
            if norm < config.tolerance:
                raise ValueError("Cannot normalise a zero vector")
            amps = amps / norm
        return cls(amps, n_pairs, n_ancilla)


def check_size(n_pairs: int, n_ancilla: int = 0):
    cap = config.max_dense_qubits
    if n_ancilla > config.max_ancilla_qubits:
        raise SizeCapError(f"{n_ancilla} ancilla qubits exceed the cap of {config.max_ancilla_qubits}")
    if 2 * n_pairs + n_ancilla > cap:
        raise SizeCapError(f"{n_pairs} pairs + {n_ancilla} ancilla exceed the {cap}-qubit cap")


def bell_vector(label: BellLabel) -> np.ndarray:
    return _BELL_VECTORS[BellLabel(label)]


@lru_cache(maxsize=8)
def bell_basis_matrix(n_pairs: int) -> np.ndarray:
    """Columns are the N-Bell product states, column index = integer of the 2N-bit string."""
    single = np.column_stack([_BELL_VECTORS[BellLabel(v)] for v in range(4)])
    basis = np.ones((1, 1), dtype=complex)
    for _ in range(n_pairs):
        basis = np.kron(basis, single)
    basis.setflags(write=False)
    return basis


def bell_product_vector(labels: BellString) -> np.ndarray:
    vec = np.ones(1, dtype=complex)
    for label in labels.labels:
        vec = np.kron(vec, _BELL_VECTORS[label])
    return vec * labels.phase_factor


def prepare_bell_product(labels: BellString, ancilla: Optional[np.ndarray] = None) -> DenseState:
    """Tensor product of the given Bell states (global phase included), optionally
    followed by an ancilla state."""
    vec = bell_product_vector(labels)
    n_ancilla = 0
    if ancilla is not None:
        ancilla = np.asarray(ancilla, dtype=complex).reshape(-1)
        n_ancilla = int(np.log2(ancilla.size))
        if 2 ** n_ancilla != ancilla.size:
            raise ValueError(f"Ancilla dimension {ancilla.size} is not a power of two")
        vec = np.kron(vec, ancilla / np.linalg.norm(ancilla))
    check_size(labels.n_pairs, n_ancilla)
    return DenseState(vec, labels.n_pairs, n_ancilla)


# ---------------------------------------------------------------------------
# Gate application on raw tensors
# ---------------------------------------------------------------------------

def _apply_1q(tensor: np.ndarray, matrix: np.ndarray, qubit: int) -> np.ndarray:
    out = np.tensordot(matrix, tensor, axes=([1], [qubit]))
    return np.moveaxis(out, 0, qubit)


def _apply_cnot(tensor: np.ndarray, control: int, target: int) -> np.ndarray:
    out = tensor.copy()
    n = tensor.ndim
    idx10 = [slice(None)] * n
    idx11 = [slice(None)] * n
    idx10[control], idx10[target] = 1, 0
    idx11[control], idx11[target] = 1, 1
    out[tuple(idx10)] = tensor[tuple(idx11)]
    out[tuple(idx11)] = tensor[tuple(idx10)]
    return out


def apply_gate_tensor(tensor: np.ndarray, gate: Gate, inverse: bool = False) -> np.ndarray:
    n_pairs_min = max(gate.pairs) + 1
    if tensor.ndim < 2 * n_pairs_min:
        raise IndexError(f"{gate} targets a pair outside a {tensor.ndim}-qubit state")
    k = gate.source_pair
    if gate.kind is GateKind.BX:
        m = RX90.conj().T if inverse else RX90
        return _apply_1q(_apply_1q(tensor, m, 2 * k), m, 2 * k + 1)
    if gate.kind is GateKind.BY:
        m = RY90.conj().T if inverse else RY90
        return _apply_1q(_apply_1q(tensor, m, 2 * k), m, 2 * k + 1)
    if gate.kind is GateKind.SIGMA_X:
        return _apply_1q(tensor, X, 2 * k + 1)
    t = gate.target_pair
    return _apply_cnot(_apply_cnot(tensor, 2 * k, 2 * t), 2 * k + 1, 2 * t + 1)


def apply_unitary(state: DenseState, gate: Gate, inverse: bool = False) -> DenseState:
    """Apply one gate of the Bx/By/SigmaX/BXOR set (or its inverse)."""
    for pair in gate.pairs:
        if not 0 <= pair < state.n_pairs:
            raise IndexError(f"{gate} targets pair {pair} of a {state.n_pairs}-pair state")
    out = apply_gate_tensor(state.tensor(), gate, inverse)
    return DenseState(out.reshape(-1), state.n_pairs, state.n_ancilla)


def apply_circuit_dense(state: DenseState, gates: Iterable[Gate], inverse: bool = False) -> DenseState:
    """Apply gates in order; with inverse=True apply the inverse circuit (reversed, daggered)."""
    gates = list(gates)
    if inverse:
        gates = gates[::-1]
    tensor = state.tensor()
    for gate in gates:
        for pair in gate.pairs:
            if not 0 <= pair < state.n_pairs:
                raise IndexError(f"{gate} targets pair {pair} of a {state.n_pairs}-pair state")
        tensor = apply_gate_tensor(tensor, gate, inverse)
    return DenseState(tensor.reshape(-1), state.n_pairs, state.n_ancilla)


# ---------------------------------------------------------------------------
# Bell-basis decomposition
# ---------------------------------------------------------------------------

def bell_basis_coefficients(state: DenseState) -> np.ndarray:
    """alpha[w, j]: amplitude of N-Bell string w (row) times ancilla basis state j (column)."""
    basis = bell_basis_matrix(state.n_pairs)
    coeffs = state.amplitudes.reshape(4 ** state.n_pairs, 2 ** state.n_ancilla)
    return basis.conj().T @ coeffs


@dataclass(frozen=True)
class PremeasureBranch:
    labels: BellString
    probability: float
    state: DenseState


def bell_premeasure(state: DenseState) -> List[PremeasureBranch]:
    """Complete projective measurement of the pairs in the N-Bell basis (W); the
    ancilla is left untouched. Zero-probability outcomes are omitted."""
    coeffs = bell_basis_coefficients(state)
    probs = np.sum(np.abs(coeffs) ** 2, axis=1)
    if abs(probs.sum() - 1.0) > config.tolerance:
        raise ValueError(f"Bell outcome probabilities sum to {probs.sum():.12f}")
    branches = []
    for w in np.flatnonzero(probs > config.tolerance ** 2):
        labels = labels_of_index(int(w), state.n_pairs)
        ancilla = coeffs[w] / np.sqrt(probs[w])
        collapsed = np.kron(bell_product_vector(labels), ancilla)
        branches.append(PremeasureBranch(labels, float(probs[w]), DenseState(collapsed, state.n_pairs, state.n_ancilla)))
    return branches


def labels_of_index(index: int, n_pairs: int) -> BellString:
    bits = [(index >> (2 * n_pairs - 1 - i)) & 1 for i in range(2 * n_pairs)]
    return BellString.from_bits(bits)


def string_index(labels: BellString) -> int:
    value = 0
    for b in labels.bits:
        value = (value << 1) | b
    return value


def residual_fidelity(state: DenseState, reference: BellString) -> float:
    """<ref| rho_AB |ref> with Eve's ancilla traced out."""
    if reference.n_pairs != state.n_pairs:
        raise ValueError(f"Reference has {reference.n_pairs} pairs, state has {state.n_pairs}")
    coeffs = bell_basis_coefficients(state)
    return float(np.sum(np.abs(coeffs[string_index(reference)]) ** 2))


# ---------------------------------------------------------------------------
# Measurements
# ---------------------------------------------------------------------------

def _pair_outcome_probs(tensor: np.ndarray, pair: int) -> np.ndarray:
    a, b = 2 * pair, 2 * pair + 1
    others = tuple(i for i in range(tensor.ndim) if i not in (a, b))
    return np.sum(np.abs(tensor) ** 2, axis=others)


def _rotate_pair(tensor: np.ndarray, pair: int, axis: str) -> np.ndarray:
    if axis not in _AXIS_CHANGE:
        raise ValueError(f"Unknown measurement axis '{axis}'")
    if axis == 'z':
        return tensor
    m = _AXIS_CHANGE[axis]
    return _apply_1q(_apply_1q(tensor, m, 2 * pair), m, 2 * pair + 1)


def coarse_probability(state: DenseState, pair: int, axis: str = 'z') -> float:
    """Probability that a bilateral measurement along axis gives antiparallel outcomes."""
    if not 0 <= pair < state.n_pairs:
        raise IndexError(f"Pair index {pair} out of range for {state.n_pairs} pairs")
    probs = _pair_outcome_probs(_rotate_pair(state.tensor(), pair, axis), pair)
    return float(probs[0, 1] + probs[1, 0])


def measure_pair_along(state: DenseState, pair: int, axis: str, rng: np.random.Generator
                       ) -> Tuple[MeasurementRecord, DenseState]:
    """Born-rule measurement of both members of one pair along a common axis.
    The measured pair is removed from the returned state."""
    if not 0 <= pair < state.n_pairs:
        raise IndexError(f"Pair index {pair} out of range for {state.n_pairs} pairs")
    tensor = _rotate_pair(state.tensor(), pair, axis)
    probs = _pair_outcome_probs(tensor, pair).reshape(-1)
    if abs(probs.sum() - 1.0) > config.tolerance:
        raise ValueError(f"Measurement probabilities sum to {probs.sum():.12f}")
    choice = int(rng.choice(4, p=probs / probs.sum()))
    alice_bit, bob_bit = choice >> 1, choice & 1
    index = [slice(None)] * tensor.ndim
    index[2 * pair], index[2 * pair + 1] = alice_bit, bob_bit
    residual = tensor[tuple(index)]
    residual = DenseState.from_tensor(residual, state.n_pairs - 1, state.n_ancilla, normalize=True)
    record = MeasurementRecord(axis, (pair,), Fine.from_bits(alice_bit, bob_bit), float(probs[choice]))
    return record, residual


def project_coarse(tensor: np.ndarray, pair: int, parity: int) -> np.ndarray:
    """Unnormalised projection of a pair onto parallel (0) or antiparallel (1) along z."""
    out = tensor.copy()
    for a, b in itertools.product((0, 1), repeat=2):
        if a ^ b != parity:
            index = [slice(None)] * tensor.ndim
            index[2 * pair], index[2 * pair + 1] = a, b
            out[tuple(index)] = 0
    return out


# ---------------------------------------------------------------------------
# Protocol on amplitudes
# ---------------------------------------------------------------------------

def run_protocol_dense(state: DenseState, subsets: Sequence[Subset], rng: np.random.Generator
                       ) -> Tuple[Transcript, DenseState]:
    """Run the verification rounds on amplitudes with genuine Born-rule readout of
    each destination pair. Stops at the first failed parity."""
    from src.algebra.bell_algebra import apply_circuit, build_parity_circuit

    shadow = BellString.honest(state.n_pairs)
    transcript = Transcript()
    for number, subset in enumerate(subsets):
        if len(subset) != 2 * state.n_pairs:
            raise ValueError(f"Round {number}: subset has {len(subset)} bits for {state.n_pairs} live pairs")
        gates, destination = build_parity_circuit(subset, list(range(state.n_pairs)))
        state = apply_circuit_dense(state, gates)
        shadow = apply_circuit(shadow, gates)
        expected = shadow.label(destination).amplitude_bit
        record, state = measure_pair_along(state, destination, 'z', rng)
        shadow = shadow.drop(destination)
        passed = transcript.record(TranscriptRound(subset, destination, record.outcome, expected))
        logger.debug(f"Dense round {number}: subset {subset} -> pair {destination}, "
                     f"outcome {record.outcome.value}, expected parity {expected}")
        if not passed:
            break
    return transcript, state


def exact_joint_distribution(state: DenseState, subsets: Sequence[Subset], premeasure: bool = False
                             ) -> Dict[Tuple[Tuple[int, ...], int], float]:
    """Exact distribution of (coarse parity of every round, R outcome).

    R projects the surviving pairs onto the image of the N-singlet string under
    the same circuits. Measured pairs stay in the vector (no later gate touches
    them), so every branch remains a pure unnormalised vector. With
    premeasure=True the state is first measured in the N-Bell basis and the
    branch distributions are summed."""
    if premeasure:
        coeffs = bell_basis_coefficients(state)
        total: Dict[Tuple[Tuple[int, ...], int], float] = {}
        for w in range(coeffs.shape[0]):
            weight = np.sum(np.abs(coeffs[w]) ** 2)
            if weight <= config.tolerance ** 2:
                continue
            vec = np.kron(bell_product_vector(labels_of_index(w, state.n_pairs)), coeffs[w])
            for key, p in _branch_distribution(vec, state.n_pairs, state.n_ancilla, subsets).items():
                total[key] = total.get(key, 0.0) + p
        return total
    return _branch_distribution(state.amplitudes, state.n_pairs, state.n_ancilla, subsets)


def _branch_distribution(vector: np.ndarray, n_pairs: int, n_ancilla: int, subsets: Sequence[Subset]
                         ) -> Dict[Tuple[Tuple[int, ...], int], float]:
    from src.algebra.bell_algebra import apply_circuit, build_parity_circuit

    n_qubits = 2 * n_pairs + n_ancilla
    live = list(range(n_pairs))
    shadow = BellString.honest(n_pairs)
    branches = [((), np.asarray(vector, dtype=complex).reshape([2] * n_qubits))]
    for subset in subsets:
        if len(subset) != 2 * len(live):
            raise ValueError(f"Subset has {len(subset)} bits for {len(live)} live pairs")
        gates, destination = build_parity_circuit(subset, live)
        shadow = apply_circuit(shadow, gates)
        grown = []
        for parities, tensor in branches:
            for gate in gates:
                tensor = apply_gate_tensor(tensor, gate)
            for parity in (0, 1):
                projected = project_coarse(tensor, destination, parity)
                if np.sum(np.abs(projected) ** 2) > 0:
                    grown.append((parities + (parity,), projected))
        branches = grown
        live.remove(destination)

    reference = BellString(tuple(shadow.labels[k] for k in live))
    ref_vec = bell_product_vector(reference).reshape([2] * (2 * len(live)))
    live_axes = [q for k in live for q in (2 * k, 2 * k + 1)]
    distribution: Dict[Tuple[Tuple[int, ...], int], float] = {}
    for parities, tensor in branches:
        mass = float(np.sum(np.abs(tensor) ** 2))
        if live:
            overlap = np.tensordot(ref_vec.conj(), tensor, axes=(list(range(len(live_axes))), live_axes))
            hit = float(np.sum(np.abs(overlap) ** 2))
        else:
            hit = mass
        for r, p in ((1, hit), (0, mass - hit)):
            key = (parities, r)
            distribution[key] = distribution.get(key, 0.0) + max(p, 0.0)
    return distribution


def total_variation(p: Dict, q: Dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# ---------------------------------------------------------------------------
# Two-pair Werner simulations (ground truth for the scalar repeater maps)
# ---------------------------------------------------------------------------

def werner_weights(f: float) -> Dict[BellLabel, float]:
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"Fidelity {f} outside [0, 1]")
    rest = (1.0 - f) / 3.0
    return {label: (f if label is SINGLET else rest) for label in BellLabel}


def purification_round_dense(f: float) -> Tuple[float, float]:
    """One recurrence round on two Werner pairs: BXOR pair 0 -> pair 1, read pair 1
    along z, keep pair 0 when the parity matches the all-singlet input.

    Returns (output fidelity with the honest output label, success probability)."""
    from src.algebra.bell_algebra import apply_gate

    xor = Gate(GateKind.BXOR, 0, 1)
    honest = apply_gate(BellString.honest(2), xor)
    keep_parity = honest.label(1).amplitude_bit
    target = _BELL_VECTORS[honest.label(0)]
    weights = werner_weights(f)
    success = good = 0.0
    for l0, l1 in itertools.product(BellLabel, repeat=2):
        weight = weights[l0] * weights[l1]
        if weight == 0.0:
            continue
        tensor = prepare_bell_product(BellString((l0, l1))).tensor()
        tensor = project_coarse(apply_gate_tensor(tensor, xor), 1, keep_parity)
        success += weight * float(np.sum(np.abs(tensor) ** 2))
        pair0 = np.tensordot(target.reshape(2, 2).conj(), tensor, axes=([0, 1], [0, 1]))
        good += weight * float(np.sum(np.abs(pair0) ** 2))
    return good / success, success


def swap_round_dense(f1: float, f2: float) -> float:
    """Entanglement swapping: pairs (A,B1) and (B2,C), Bell measurement on (B1,B2).
    Fidelity of (A,C) with the state the same outcome yields for singlet inputs
    (a known local Pauli turns that state into a singlet)."""
    honest = prepare_bell_product(BellString.honest(2)).tensor()
    w1, w2 = werner_weights(f1), werner_weights(f2)
    fidelity = 0.0
    for outcome in BellLabel:
        proj = _BELL_VECTORS[outcome].reshape(2, 2).conj()
        reference = np.tensordot(proj, honest, axes=([0, 1], [1, 2])).reshape(-1)
        reference = reference / np.linalg.norm(reference)
        for l1, l2 in itertools.product(BellLabel, repeat=2):
            weight = w1[l1] * w2[l2]
            if weight == 0.0:
                continue
            tensor = prepare_bell_product(BellString((l1, l2))).tensor()
            ac = np.tensordot(proj, tensor, axes=([0, 1], [1, 2])).reshape(-1)
            fidelity += weight * float(np.abs(np.vdot(reference, ac)) ** 2)
    return fidelity
