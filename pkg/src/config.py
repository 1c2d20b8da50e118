import os
import yaml
from pathlib import Path
from typing import Any, Callable, Dict, Optional
from dotenv import load_dotenv

# BELLHASH_* overrides may live in a .env file
load_dotenv()

PROJECT_ROOT = Path(__file__).resolve().parent.parent
ENV_PREFIX = "BELLHASH_"


class Config:
    """Simulation settings from config.yaml, with BELLHASH_* environment overrides."""

    def __init__(self, config_path: Optional[str] = None):
        self.config_path = Path(config_path or os.getenv(f'{ENV_PREFIX}CONFIG', PROJECT_ROOT / "config.yaml"))
        self._settings = self._read(self.config_path)

    @staticmethod
    def _read(path: Path) -> Dict[str, Any]:
        try:
            with open(path, 'r') as file:
                data = yaml.safe_load(file) or {}
        except FileNotFoundError:
            raise FileNotFoundError(f"Configuration file not found: {path}")
        if not isinstance(data, dict):
            raise ValueError(f"Configuration file {path} must hold a mapping, got {type(data).__name__}")
        return data

    def get(self, key: str, default: Any = None) -> Any:
        """Dotted lookup, e.g. get('simulation.n_jobs')"""
        node: Any = self._settings
        for part in key.split('.'):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def _env(self, name: str, key: str, default: Any, cast: Callable[[Any], Any]) -> Any:
        raw = os.getenv(ENV_PREFIX + name)
        value = raw if raw is not None else self.get(key, default)
        try:
            return cast(value)
        except (TypeError, ValueError):
            source = ENV_PREFIX + name if raw is not None else key
            raise ValueError(f"Setting {source}={value!r} is not a valid {cast.__name__}")

    @property
    def default_seed(self) -> int:
        return self._env('SEED', 'simulation.default_seed', 20240601, int)

    @property
    def n_jobs(self) -> int:
        return self._env('N_JOBS', 'simulation.n_jobs', 1, int)

    @property
    def log_level(self) -> str:
        return self._env('LOG_LEVEL', 'logging.level', 'INFO', str)

    @property
    def output_dir(self) -> Path:
        return self._env('OUTPUT_DIR', 'system.output_dir', 'results', Path)

    @property
    def tolerance(self) -> float:
        return float(self.get('simulation.tolerance', 1e-10))

    @property
    def max_dense_qubits(self) -> int:
        return int(self.get('simulation.max_dense_qubits', 12))

    @property
    def max_ancilla_qubits(self) -> int:
        return int(self.get('simulation.max_ancilla_qubits', 4))


config = Config()
