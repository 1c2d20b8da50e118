"""Label-level data model for N shared pairs.

A Bell state is two classical bits (phase bit, amplitude bit):

    Phi+ = 00    Psi+ = 01    Phi- = 10    Psi- = 11

N pairs are a 2N-bit string; pair k occupies bits 2k (phase) and 2k+1
(amplitude). The honest state of N singlets is the all-ones string.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Tuple


class BellLabel(enum.IntEnum):
    """One pair, valued 2 * phase_bit + amplitude_bit."""

    PHI_PLUS = 0
    PSI_PLUS = 1
    PHI_MINUS = 2
    PSI_MINUS = 3

    @property
    def phase_bit(self) -> int:
        return self.value >> 1

    @property
    def amplitude_bit(self) -> int:
        return self.value & 1

    @property
    def bits(self) -> Tuple[int, int]:
        return self.phase_bit, self.amplitude_bit

    @classmethod
    def from_bits(cls, phase_bit: int, amplitude_bit: int) -> "BellLabel":
        if phase_bit not in (0, 1) or amplitude_bit not in (0, 1):
            raise ValueError(f"Label bits must be 0 or 1, got ({phase_bit}, {amplitude_bit})")
        return cls(2 * phase_bit + amplitude_bit)

    @property
    def symbol(self) -> str:
        return {0: "Phi+", 1: "Psi+", 2: "Phi-", 3: "Psi-"}[self.value]


SINGLET = BellLabel.PSI_MINUS


class Coarse(str, enum.Enum):
    """Coarse-grained outcome of a bilateral same-axis measurement."""

    PARALLEL = "parallel"
    ANTIPARALLEL = "antiparallel"

    @property
    def parity(self) -> int:
        return 1 if self is Coarse.ANTIPARALLEL else 0

    @classmethod
    def from_parity(cls, parity: int) -> "Coarse":
        return cls.ANTIPARALLEL if parity else cls.PARALLEL


class Fine(str, enum.Enum):
    """Fine outcome (Alice, Bob); u = spin up (bit 0), d = spin down (bit 1)."""

    UP_DOWN = "ud"
    DOWN_UP = "du"
    UP_UP = "uu"
    DOWN_DOWN = "dd"

    @property
    def alice_bit(self) -> int:
        return 0 if self.value[0] == "u" else 1

    @property
    def bob_bit(self) -> int:
        return 0 if self.value[1] == "u" else 1

    @property
    def coarse(self) -> Coarse:
        return Coarse.from_parity(self.alice_bit ^ self.bob_bit)

    @classmethod
    def from_bits(cls, alice_bit: int, bob_bit: int) -> "Fine":
        return cls(("u", "d")[alice_bit] + ("u", "d")[bob_bit])

    @classmethod
    def consistent_with(cls, coarse: Coarse) -> Tuple["Fine", "Fine"]:
        if coarse is Coarse.ANTIPARALLEL:
            return cls.UP_DOWN, cls.DOWN_UP
        return cls.UP_UP, cls.DOWN_DOWN


@dataclass(frozen=True)
class BellString:
    """N ordered pairs plus a global phase i**phase (phase in Z_4)."""

    labels: Tuple[BellLabel, ...]
    phase: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'labels', tuple(BellLabel(l) for l in self.labels))
        object.__setattr__(self, 'phase', self.phase % 4)

    @property
    def n_pairs(self) -> int:
        return len(self.labels)

    @property
    def bits(self) -> Tuple[int, ...]:
        out = []
        for label in self.labels:
            out.extend(label.bits)
        return tuple(out)

    @property
    def phase_factor(self) -> complex:
        return (1, 1j, -1, -1j)[self.phase]

    @classmethod
    def from_bits(cls, bits: Sequence[int] | str, phase: int = 0) -> "BellString":
        if isinstance(bits, str):
            bits = [int(b) for b in bits]
        if len(bits) % 2:
            raise ValueError(f"A Bell string needs an even number of bits, got {len(bits)}")
        labels = [BellLabel.from_bits(bits[2 * k], bits[2 * k + 1]) for k in range(len(bits) // 2)]
        return cls(tuple(labels), phase)

    @classmethod
    def honest(cls, n_pairs: int) -> "BellString":
        return cls((SINGLET,) * n_pairs)

    def label(self, pair: int) -> BellLabel:
        self._check_pair(pair)
        return self.labels[pair]

    def with_labels(self, updates: dict, phase_shift: int = 0) -> "BellString":
        labels = list(self.labels)
        for pair, label in updates.items():
            self._check_pair(pair)
            labels[pair] = label
        return BellString(tuple(labels), self.phase + phase_shift)

    def drop(self, pair: int) -> "BellString":
        self._check_pair(pair)
        return BellString(self.labels[:pair] + self.labels[pair + 1:], self.phase)

    def without_phase(self) -> "BellString":
        return replace(self, phase=0)

    def is_honest(self) -> bool:
        return all(label is SINGLET for label in self.labels)

    def _check_pair(self, pair: int):
        if not 0 <= pair < self.n_pairs:
            raise IndexError(f"Pair index {pair} out of range for {self.n_pairs} pairs")

    def __str__(self) -> str:
        return ''.join(str(b) for b in self.bits)


class GateKind(str, enum.Enum):
    BX = "Bx"
    BY = "By"
    SIGMA_X = "SigmaX"
    BXOR = "BXOR"

    @property
    def n_pairs(self) -> int:
        return 2 if self is GateKind.BXOR else 1


@dataclass(frozen=True)
class Gate:
    """Bx/By: bilateral pi/2 rotation; SigmaX: pi rotation of Bob's qubit;
    BXOR: bilateral CNOT from source_pair onto target_pair."""

    kind: GateKind
    source_pair: int
    target_pair: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', GateKind(self.kind))
        if self.kind is GateKind.BXOR:
            if self.target_pair is None:
                raise ValueError("BXOR needs a target pair")
            if self.target_pair == self.source_pair:
                raise ValueError(f"BXOR source and target must differ, both are {self.source_pair}")
        elif self.target_pair is not None:
            raise ValueError(f"{self.kind.value} acts on a single pair")

    @property
    def pairs(self) -> Tuple[int, ...]:
        if self.kind is GateKind.BXOR:
            return (self.source_pair, self.target_pair)
        return (self.source_pair,)

    def __str__(self) -> str:
        return f"{self.kind.value}({','.join(str(p) for p in self.pairs)})"


@dataclass(frozen=True)
class Subset:
    """Index string s over the 2L label bits of L live pairs."""

    bits: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"Subset bits must be 0 or 1, got {bits}")
        object.__setattr__(self, 'bits', bits)

    @classmethod
    def from_string(cls, text: str) -> "Subset":
        return cls(tuple(int(c) for c in text.strip()))

    @classmethod
    def from_hex(cls, text: str, n_bits: int) -> "Subset":
        value = int(text, 16)
        if value >> n_bits:
            raise ValueError(f"Hex subset {text} does not fit in {n_bits} bits")
        return cls(tuple((value >> (n_bits - 1 - i)) & 1 for i in range(n_bits)))

    def to_hex(self) -> str:
        value = 0
        for b in self.bits:
            value = (value << 1) | b
        return format(value, f"0{max(1, -(-len(self.bits) // 4))}x")

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def n_pairs(self) -> int:
        return len(self.bits) // 2

    @property
    def weight(self) -> int:
        return sum(self.bits)

    def is_zero(self) -> bool:
        return not any(self.bits)

    def pair_bits(self, j: int) -> Tuple[int, int]:
        return self.bits[2 * j], self.bits[2 * j + 1]

    def touched(self) -> Tuple[int, ...]:
        """Positions j (within the live pairs) whose two bits are not both zero."""
        return tuple(j for j in range(self.n_pairs) if any(self.pair_bits(j)))

    def __str__(self) -> str:
        return ''.join(str(b) for b in self.bits)


def bits_from(values: Iterable[int] | str) -> Tuple[int, ...]:
    if isinstance(values, str):
        return tuple(int(c) for c in values)
    return tuple(int(v) for v in values)
