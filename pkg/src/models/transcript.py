"""Protocol transcript: one record per verification round plus the verdict."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Tuple

from src.models.bell_state import Coarse, Fine, Subset


class Verdict(str, enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass(frozen=True)
class TranscriptRound:
    subset: Subset
    destination: int
    fine: Fine
    expected_parity: int

    @property
    def coarse(self) -> Coarse:
        return self.fine.coarse

    @property
    def parity(self) -> int:
        return self.coarse.parity

    @property
    def passed(self) -> bool:
        return self.parity == self.expected_parity

    def to_line(self) -> str:
        return '\t'.join([
            self.subset.to_hex(), str(len(self.subset)), str(self.destination),
            self.fine.value, str(self.parity), str(self.expected_parity),
        ])

    @classmethod
    def from_line(cls, line: str) -> "TranscriptRound":
        hex_bits, n_bits, destination, fine, parity, expected = line.strip().split('\t')
        record = cls(Subset.from_hex(hex_bits, int(n_bits)), int(destination), Fine(fine), int(expected))
        if record.parity != int(parity):
            raise ValueError(f"Transcript line is inconsistent: fine {fine} does not give parity {parity}")
        return record


@dataclass
class Transcript:
    """Rounds in execution order. Accept iff every parity matches the parity the
    honest singlet string (evolved by the same circuits) would have produced."""

    rounds: List[TranscriptRound] = field(default_factory=list)
    verdict: Verdict = Verdict.ACCEPT

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPT

    @property
    def parities(self) -> Tuple[int, ...]:
        return tuple(r.parity for r in self.rounds)

    def record(self, round_: TranscriptRound) -> bool:
        self.rounds.append(round_)
        if not round_.passed:
            self.verdict = Verdict.REJECT
        return round_.passed

    def to_text(self) -> str:
        lines = [r.to_line() for r in self.rounds]
        lines.append(f"verdict\t{self.verdict.value}")
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_text(cls, text: str) -> "Transcript":
        transcript = cls()
        verdict = None
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith('verdict'):
                verdict = Verdict(line.split('\t')[1].strip())
                continue
            transcript.rounds.append(TranscriptRound.from_line(line))
        if verdict is None:
            raise ValueError("Transcript text has no verdict line")
        transcript.verdict = verdict
        return transcript
