"""
Results records and their line-delimited JSON file format.

File layout (one JSON object per line, keys sorted):

    {"record": "config", ...config echo...}
    {"record": "trial", "trial": 0, ...}        one line per trial, in trial order
    {"record": "aggregate", ...}
    {"record": "analysis", ...}
    # human-readable summary lines

No timestamps or host data are written, so identical configs and seeds give
byte-identical files.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


@dataclass
class ResultsRecord:
    config: Dict[str, Any]
    rows: List[Dict[str, Any]]
    aggregate: Dict[str, Any] = field(default_factory=dict)
    analysis: Dict[str, Any] = field(default_factory=dict)
    summary: List[str] = field(default_factory=list)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)


def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def aggregate_rows(rows: List[Dict[str, Any]]) -> Dict[str, Any]:
    """Mean and standard error of every numeric or boolean column.

    Boolean columns report a rate with the binomial standard error."""
    out: Dict[str, Any] = {"n_trials": len(rows)}
    if not rows:
        return out
    frame = pd.DataFrame(rows)
    for column in sorted(frame.columns):
        if column == "trial":
            continue
        series = frame[column].dropna()
        if series.empty:
            continue
        values = series.tolist()
        if all(isinstance(v, (bool, np.bool_)) for v in values):
            rate = float(series.astype(bool).mean())
            out[f"{column}_rate"] = rate
            out[f"{column}_se"] = math.sqrt(rate * (1 - rate) / len(series))
        elif all(isinstance(v, (int, float, np.integer, np.floating)) for v in values):
            numeric = series.astype(float)
            out[f"{column}_mean"] = float(numeric.mean())
            out[f"{column}_se"] = float(numeric.sem()) if len(numeric) > 1 else None
    return _plain(out)


def _dumps(obj: Dict[str, Any]) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_results(record: ResultsRecord, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(_dumps({"record": "config", **record.config}) + "\n")
            for i, row in enumerate(record.rows):
                handle.write(_dumps({"record": "trial", "trial": i, **row}) + "\n")
            handle.write(_dumps({"record": "aggregate", **record.aggregate}) + "\n")
            handle.write(_dumps({"record": "analysis", **record.analysis}) + "\n")
            for line in record.summary:
                handle.write(f"# {line}\n")
    except OSError as exc:
        raise OSError(f"Cannot write results file {path}: {exc}") from exc
    logger.info(f"Wrote {len(record.rows)} trial rows to {path}")
    return path


def read_results(path: Union[str, Path]) -> ResultsRecord:
    """Parse a results file back; the config echo can be fed to run_experiment."""
    record = ResultsRecord(config={}, rows=[])
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("# "):
                record.summary.append(line[2:])
                continue
            data = json.loads(line)
            kind = data.pop("record", None)
            if kind == "config":
                record.config = data
            elif kind == "trial":
                data.pop("trial")
                record.rows.append(data)
            elif kind == "aggregate":
                record.aggregate = data
            elif kind == "analysis":
                record.analysis = data
            else:
                raise ValueError(f"{path}:{number}: unknown record type '{kind}'")
    return record
