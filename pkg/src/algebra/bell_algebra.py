"""
Exact label algebra of N-pair Bell strings under the Bx / By / SigmaX / BXOR
gate set.

The label action of every gate is read off the dense simulator once and
frozen; nothing here hard-codes a permutation. Global phases are tracked as
exponents of i (Z_4).
"""
import itertools
import logging
from functools import lru_cache
from types import MappingProxyType
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.models.bell_state import BellLabel, BellString, Coarse, Fine, Gate, GateKind, Subset
from src.oracle import dense_oracle

logger = logging.getLogger(__name__)

TableKey = Tuple[GateKind, Tuple[BellLabel, ...]]
TableEntry = Tuple[Tuple[BellLabel, ...], int]

_SINGLE_PAIR_KINDS = (GateKind.BX, GateKind.BY, GateKind.SIGMA_X)


class NoQuestionError(ValueError):
    """Subset selects no bit of any live pair."""


def subset_parity(x, s) -> int:
    x_bits = x.bits if isinstance(x, (BellString, Subset)) else tuple(int(b) for b in x)
    s_bits = s.bits if isinstance(s, (BellString, Subset)) else tuple(int(b) for b in s)
    if len(x_bits) != len(s_bits):
        raise ValueError(f"String length {len(x_bits)} does not match subset length {len(s_bits)}")
    return sum(a & b for a, b in zip(x_bits, s_bits)) % 2


def _phase_exponent(coefficient: complex) -> int:
    if abs(abs(coefficient) - 1.0) > 1e-9:
        raise ValueError(f"Gate does not map a Bell product onto a single Bell product (|c| = {abs(coefficient):.6f})")
    return int(np.rint(np.angle(coefficient) / (np.pi / 2))) % 4


def _oracle_entry(kind: GateKind, inputs: Tuple[BellLabel, ...]) -> TableEntry:
    gate = Gate(kind, 0, 1) if kind is GateKind.BXOR else Gate(kind, 0)
    state = dense_oracle.prepare_bell_product(BellString(inputs))
    coeffs = dense_oracle.bell_basis_coefficients(dense_oracle.apply_unitary(state, gate))[:, 0]
    index = int(np.argmax(np.abs(coeffs)))
    out = dense_oracle.labels_of_index(index, len(inputs))
    return out.labels, _phase_exponent(coeffs[index])


@lru_cache(maxsize=1)
def gate_action_table() -> Mapping[TableKey, TableEntry]:
    """(kind, input labels) -> (output labels, phase exponent k meaning factor i**k).

    4 entries per single-pair gate and 16 for BXOR (source pair first)."""
    table: Dict[TableKey, TableEntry] = {}
    for kind in _SINGLE_PAIR_KINDS:
        for label in BellLabel:
            table[(kind, (label,))] = _oracle_entry(kind, (label,))
    for pair in itertools.product(BellLabel, repeat=2):
        table[(GateKind.BXOR, pair)] = _oracle_entry(GateKind.BXOR, pair)
    logger.debug(f"Gate action table generated from the dense simulator ({len(table)} entries)")
    return MappingProxyType(table)


def apply_gate(state: BellString, gate: Gate) -> BellString:
    for pair in gate.pairs:
        if not 0 <= pair < state.n_pairs:
            raise IndexError(f"{gate} targets pair {pair} of a {state.n_pairs}-pair string")
    inputs = tuple(state.labels[p] for p in gate.pairs)
    outputs, phase = gate_action_table()[(gate.kind, inputs)]
    return state.with_labels(dict(zip(gate.pairs, outputs)), phase_shift=phase)


def apply_circuit(state: BellString, gates: Sequence[Gate]) -> BellString:
    for gate in gates:
        state = apply_gate(state, gate)
    return state


def inverse_gates(gate: Gate) -> List[Gate]:
    """Gates undoing `gate` exactly, phase included (bilateral pi/2 rotations have order 4)."""
    if gate.kind in (GateKind.BX, GateKind.BY):
        return [gate] * 3
    return [gate]


def invert_circuit(gates: Sequence[Gate]) -> List[Gate]:
    out: List[Gate] = []
    for gate in reversed(gates):
        out.extend(inverse_gates(gate))
    return out


@lru_cache(maxsize=None)
def local_rotation(question_bits: Tuple[int, int]) -> Tuple[GateKind, ...]:
    """Shortest single-pair gate word after which the amplitude bit equals
    question_bits . (phase_bit, amplitude_bit)."""
    sp, sa = (int(b) for b in question_bits)
    if (sp, sa) == (0, 0):
        raise NoQuestionError("Question bits (0, 0) select nothing")
    table = gate_action_table()
    for length in range(4):
        for word in itertools.product(_SINGLE_PAIR_KINDS, repeat=length):
            if all(_run_word(table, word, label).amplitude_bit == (sp & label.phase_bit) ^ (sa & label.amplitude_bit)
                   for label in BellLabel):
                return word
    raise ValueError(f"No single-pair rotation realises question {question_bits}")


def _run_word(table, word, label: BellLabel) -> BellLabel:
    for kind in word:
        (label,), _ = table[(kind, (label,))]
    return label


def build_parity_circuit(subset: Subset, live_pairs: Optional[Sequence[int]] = None
                         ) -> Tuple[List[Gate], int]:
    """Gates collecting subset . x into the amplitude bit of one destination pair.

    Subset bit positions refer to the live pairs in order; returned gates use
    the absolute indices from live_pairs. The destination is the lowest live
    pair the subset touches."""
    live = list(range(subset.n_pairs)) if live_pairs is None else list(live_pairs)
    if len(subset) != 2 * len(live):
        raise ValueError(f"Subset has {len(subset)} bits but there are {len(live)} live pairs")
    touched = subset.touched()
    if not touched:
        raise NoQuestionError(f"Subset {subset} is zero on every live pair")

    gates: List[Gate] = []
    for j in touched:
        gates.extend(Gate(kind, live[j]) for kind in local_rotation(subset.pair_bits(j)))
    destination = live[touched[0]]
    for j in touched[1:]:
        gates.append(Gate(GateKind.BXOR, live[j], destination))
    return gates, destination


def measure_pair(state: BellString, pair: int, rng: np.random.Generator
                 ) -> Tuple[Coarse, Fine, BellString]:
    """Coarse outcome from the amplitude bit; fine outcome uniform within it."""
    label = state.label(pair)
    coarse = Coarse.from_parity(label.amplitude_bit)
    fine = Fine.consistent_with(coarse)[int(rng.integers(2))]
    return coarse, fine, state.drop(pair)


def honest_string(n_pairs: int) -> BellString:
    return BellString.honest(n_pairs)


def is_antiparallel(label: BellLabel, axis: str) -> bool:
    """Whether a same-axis bilateral measurement of the label is always antiparallel.

    The singlet is antiparallel on every axis; each triplet on exactly one
    (Psi+ on z, Phi- on x, Phi+ on y)."""
    label = BellLabel(label)
    if axis == 'z':
        return label.amplitude_bit == 1
    if axis == 'x':
        return label.phase_bit == 1
    if axis == 'y':
        return label.phase_bit == label.amplitude_bit
    raise ValueError(f"Unknown measurement axis '{axis}'")
