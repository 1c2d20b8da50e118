from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.config import config

EXPERIMENT_KINDS = ("verify-sim", "game-sim", "repeater-sim", "attack-analysis", "estimate", "oracle-check", "bounds")


class ConfigError(ValueError):
    """Experiment config rejected by its schema, or conflicting overrides."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class StrategySection(_Section):
    """Adversary named by kind plus parameters"""
    kind: Literal["honest", "single_flaw", "bell_mixture", "general_pure", "foreknowledge"] = "honest"
    params: Dict[str, Any] = Field(default_factory=dict)


class VerifySimSection(_Section):
    """Hashing verification (or the direct-testing baseline) against one strategy"""
    n_pairs: int = Field(30, ge=2)
    n_rounds: int = Field(10, ge=1)
    engine: Literal["batch", "label", "dense"] = "batch"
    test: Literal["hashing", "direct"] = "hashing"
    strategy: StrategySection = Field(default_factory=StrategySection)
    foreknown_subsets: bool = True
    chunk_size: int = Field(10000, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.n_rounds >= self.n_pairs:
            raise ValueError(f"n_rounds ({self.n_rounds}) must be smaller than n_pairs ({self.n_pairs})")
        label_level = self.strategy.kind in ("honest", "single_flaw", "bell_mixture")
        if self.engine == "batch" and not label_level:
            raise ValueError(f"strategy '{self.strategy.kind}' needs the label or dense engine")
        if self.engine == "label" and not label_level:
            raise ValueError(f"strategy '{self.strategy.kind}' produces dense states; use engine 'dense'")
        if self.engine == "dense":
            ancilla = int(self.strategy.params.get("ancilla_qubits", 0))
            if 2 * self.n_pairs + ancilla > config.max_dense_qubits:
                raise ValueError(f"{self.n_pairs} pairs + {ancilla} ancilla exceed the "
                                 f"{config.max_dense_qubits}-qubit dense cap")
        return self


class GameSimSection(_Section):
    """Classical parity game"""
    x: Optional[str] = None
    n_bits: int = Field(30, ge=1)
    n_zeros: int = Field(1, ge=0)
    n_rounds: int = Field(10, ge=1)
    policy: Literal["single-digit", "random-parity"] = "random-parity"

    @field_validator("x")
    @classmethod
    def _bits(cls, value):
        if value is not None and (not value or set(value) - {"0", "1"}):
            raise ValueError("x must be a non-empty string of 0/1 characters")
        return value

    @model_validator(mode="after")
    def _check(self):
        if self.x is None and self.n_zeros > self.n_bits:
            raise ValueError(f"n_zeros ({self.n_zeros}) exceeds n_bits ({self.n_bits})")
        return self


class FtqcSection(_Section):
    epsilon: float = Field(..., ge=0)
    epsilon0: float = Field(..., gt=0)
    max_levels: int = Field(5, ge=0)
    target: Optional[float] = Field(None, gt=0)


class RepeaterSimSection(_Section):
    """Purify-and-connect chain of Werner segments"""
    segment_fidelities: List[float] = Field(default_factory=lambda: [0.9, 0.9])
    target_fidelity: float = Field(0.95, gt=0, le=1)
    rounds_per_segment: Optional[Union[int, List[int]]] = None
    max_rounds: Optional[int] = Field(None, ge=0)
    tolerance_rounds: Optional[int] = Field(None, ge=0)
    ftqc: Optional[FtqcSection] = None

    @field_validator("segment_fidelities")
    @classmethod
    def _fidelities(cls, value):
        if not value:
            raise ValueError("at least one segment is required")
        for f in value:
            if not 0.0 <= f <= 1.0:
                raise ValueError(f"segment fidelity {f} outside [0, 1]")
        return value


class AttackAnalysisSection(_Section):
    """Beamsplitter attack over a sweep of channel transmittances"""
    mean_photon_number: float = Field(0.1, gt=0)
    detector_efficiency: float = Field(1.0, gt=0, le=1)
    transmittances: List[float] = Field(default_factory=lambda: [1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01])

    @field_validator("transmittances")
    @classmethod
    def _etas(cls, value):
        for eta in value:
            if not 0.0 < eta <= 1.0:
                raise ValueError(f"transmittance {eta} outside (0, 1]")
        return value


class EstimateSection(_Section):
    """Singlet-fraction estimation on i.i.d. Bell-diagonal pairs"""
    n_pairs: int = Field(3000, ge=1)
    sample_size: int = Field(3000, ge=1)
    mixture: Dict[str, float] = Field(default_factory=lambda: {"psi-": 0.5, "phi+": 0.5})
    method: Literal["normal", "stratified", "exact"] = "normal"
    confidence_level: float = Field(0.99, gt=0, lt=1)

    @model_validator(mode="after")
    def _check(self):
        if self.sample_size > self.n_pairs:
            raise ValueError(f"sample_size ({self.sample_size}) exceeds n_pairs ({self.n_pairs})")
        total = sum(self.mixture.values())
        if abs(total - 1.0) > 1e-9 or any(w < 0 for w in self.mixture.values()):
            raise ValueError(f"mixture weights must be non-negative and sum to 1 (got {total})")
        return self


class OracleCheckSection(_Section):
    """Cross-simulator and reduction property suite"""
    n_states: int = Field(100, ge=1)
    max_pairs: int = Field(3, ge=2, le=4)
    max_ancilla: int = Field(4, ge=0)
    purification_fidelities: List[float] = Field(default_factory=lambda: [0.6, 0.8, 0.95])


class BoundsSection(_Section):
    """Entropy and typical-subspace bounds"""
    delta: float = Field(0.5, ge=0, lt=1)
    key_bits: int = Field(1, ge=1)
    fidelity: Optional[float] = Field(None, gt=0, le=1)
    n_pairs: Optional[int] = Field(None, ge=1)
    atypical_mass: float = Field(0.0, ge=0, le=1)
    typical_log_dim: Optional[float] = Field(None, ge=0)
    bit_error_rate: Optional[float] = Field(None, ge=0, le=1)
    phase_error_rate: Optional[float] = Field(None, ge=0, le=1)


SECTIONS = {
    "verify-sim": VerifySimSection,
    "game-sim": GameSimSection,
    "repeater-sim": RepeaterSimSection,
    "attack-analysis": AttackAnalysisSection,
    "estimate": EstimateSection,
    "oracle-check": OracleCheckSection,
    "bounds": BoundsSection,
}


class ExperimentConfig(BaseModel):
    """One experiment: kind, seed, trial count, output path and the kind's section"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    kind: Literal["verify-sim", "game-sim", "repeater-sim", "attack-analysis", "estimate", "oracle-check", "bounds"]
    seed: int = Field(default_factory=lambda: config.default_seed, ge=0)
    n_trials: int = Field(1, ge=1)
    output: Optional[str] = None
    verify_sim: Optional[VerifySimSection] = Field(None, alias="verify-sim")
    game_sim: Optional[GameSimSection] = Field(None, alias="game-sim")
    repeater_sim: Optional[RepeaterSimSection] = Field(None, alias="repeater-sim")
    attack_analysis: Optional[AttackAnalysisSection] = Field(None, alias="attack-analysis")
    estimate: Optional[EstimateSection] = None
    oracle_check: Optional[OracleCheckSection] = Field(None, alias="oracle-check")
    bounds: Optional[BoundsSection] = None

    @model_validator(mode="after")
    def _one_section(self):
        own = self.kind.replace("-", "_")
        for kind in EXPERIMENT_KINDS:
            attr = kind.replace("-", "_")
            if attr != own and getattr(self, attr) is not None:
                raise ValueError(f"section '{kind}' does not belong to a '{self.kind}' experiment")
        if getattr(self, own) is None:
            setattr(self, own, SECTIONS[self.kind]())
        return self

    @property
    def section(self):
        return getattr(self, self.kind.replace("-", "_"))

    def echo(self) -> Dict[str, Any]:
        """Plain-data copy that validates back into an identical config."""
        return self.model_dump(mode="json", by_alias=True, exclude_none=True)


def load_experiment(data: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(f"Invalid experiment config at '{field}': {first['msg']}") from exc
