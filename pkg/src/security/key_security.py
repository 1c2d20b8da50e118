"""
Information-theoretic accounting for the key.

- entropy / mutual-information bound from the fidelity with R singlets
- singlet-fraction estimator from random-axis samples
- typical-subspace bound on Eve's information
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from scipy.special import entr
from scipy.stats import beta, norm

from src.algebra.bell_algebra import is_antiparallel
from src.config import config
from src.models.bell_state import BellLabel, BellString
from src.oracle import dense_oracle
from src.oracle.dense_oracle import DenseState

logger = logging.getLogger(__name__)

AXES = ('x', 'y', 'z')
INTERVAL_METHODS = ('normal', 'stratified', 'exact')
_LN2 = np.log(2.0)


def binary_entropy(p: float) -> float:
    return float((entr(p) + entr(1.0 - p)) / _LN2)


def entropy_bound(delta: float, key_bits: int) -> float:
    """Upper bound on the von Neumann entropy of a 2R-qubit state whose fidelity
    with R singlets is 1 - delta:

        -(1-delta) log2(1-delta) - delta log2(delta / (2**(2R) - 1))
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"Fidelity deficit {delta} outside [0, 1)")
    if key_bits < 1:
        raise ValueError(f"Key length must be at least 1 bit, got {key_bits}")
    # log2(2**(2R) - 1) without forming 2**(2R)
    log_rest = 2 * key_bits + np.log1p(-(2.0 ** (-2 * key_bits))) / _LN2
    return float((entr(1.0 - delta) + entr(delta)) / _LN2 + delta * log_rest)


def eve_info_bound(fidelity: float, key_bits: int) -> float:
    """Holevo-type bound on Eve's mutual information with the R-bit key."""
    if not 0.0 < fidelity <= 1.0:
        raise ValueError(f"Fidelity {fidelity} outside (0, 1]")
    return entropy_bound(1.0 - fidelity, key_bits)


@dataclass(frozen=True)
class SecurityBound:
    fidelity_deficit: float
    key_length: int
    entropy_bound: float
    eve_info_bound: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def security_bound(fidelity: float, key_bits: int) -> SecurityBound:
    bound = eve_info_bound(fidelity, key_bits)
    return SecurityBound(1.0 - fidelity, key_bits, bound, bound)


# ---------------------------------------------------------------------------
# Singlet-fraction estimation
# ---------------------------------------------------------------------------

def antiparallel_probability(label: BellLabel, axis: Optional[str] = None) -> float:
    """P(antiparallel) for one Bell state along an axis, or averaged over a
    uniformly random axis when axis is None."""
    if axis is None:
        return sum(antiparallel_probability(label, a) for a in AXES) / 3.0
    return 1.0 if is_antiparallel(label, axis) else 0.0


@dataclass(frozen=True)
class SampleReport:
    m: int
    k: int
    axis_log: Tuple[str, ...]
    f_hat_raw: float
    f_hat: float
    confidence_interval: Tuple[float, float]
    confidence_level: float
    method: str

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out['axis_log'] = ''.join(self.axis_log)
        out['confidence_interval'] = list(self.confidence_interval)
        return out


def _sample(pairs: Union[BellString, DenseState], m: int, rng: np.random.Generator):
    chosen = rng.choice(pairs.n_pairs, size=m, replace=False)
    axes = [AXES[i] for i in rng.integers(3, size=m)]
    if isinstance(pairs, BellString):
        anti = [is_antiparallel(pairs.labels[int(k)], a) for k, a in zip(chosen, axes)]
        return axes, np.array(anti, dtype=bool)
    # Measure in descending pair order so indices stay valid as pairs are removed.
    order = np.argsort(-chosen, kind='stable')
    anti = np.zeros(m, dtype=bool)
    state = pairs
    for i in order:
        record, state = dense_oracle.measure_pair_along(state, int(chosen[i]), axes[i], rng)
        anti[i] = record.outcome.coarse.parity == 1
    return axes, anti


def _interval(method: str, axes, anti: np.ndarray, level: float) -> Tuple[float, float]:
    m, k = anti.size, int(anti.sum())
    alpha = 1.0 - level
    if method == 'exact':
        lo = beta.ppf(alpha / 2, k, m - k + 1) if k > 0 else 0.0
        hi = beta.ppf(1 - alpha / 2, k + 1, m - k) if k < m else 1.0
        return (3 * float(lo) - 1) / 2, (3 * float(hi) - 1) / 2
    z = norm.ppf(1 - alpha / 2)
    p_hat = k / m
    variance = p_hat * (1 - p_hat) / m
    if method == 'stratified':
        axes = np.array(axes)
        strata = [anti[axes == a] for a in AXES]
        if all(s.size for s in strata):
            variance = sum(s.mean() * (1 - s.mean()) / s.size for s in strata) / 9.0
    f_raw = (3 * k - m) / (2 * m)
    half = z * 1.5 * np.sqrt(variance)
    return float(f_raw - half), float(f_raw + half)


def estimate_singlet_fraction(pairs: Union[BellString, DenseState], m: int, rng: np.random.Generator,
                              method: Optional[str] = None,
                              confidence_level: Optional[float] = None) -> SampleReport:
    """Sample m pairs without replacement, read each along a random axis from
    {x, y, z} and estimate the singlet fraction as (3k - m) / (2m).

    Interval methods: 'normal' uses the pooled Bernoulli variance; 'stratified'
    combines per-axis proportions, since each pair is read along only one of
    the three axes; 'exact' is Clopper-Pearson on k."""
    method = method or config.get('estimation.interval_method', 'normal')
    level = confidence_level or config.get('estimation.confidence_level', 0.99)
    if method not in INTERVAL_METHODS:
        raise ValueError(f"Unknown interval method '{method}', expected one of {INTERVAL_METHODS}")
    if not 0 < m <= pairs.n_pairs:
        raise ValueError(f"Cannot sample {m} of {pairs.n_pairs} pairs")

    axes, anti = _sample(pairs, m, rng)
    k = int(anti.sum())
    f_raw = (3 * k - m) / (2 * m)
    f_hat = min(max(f_raw, 0.0), 1.0)
    if f_hat != f_raw:
        logger.warning(f"Estimated singlet fraction {f_raw:.4f} clamped to {f_hat}")
    return SampleReport(m, k, tuple(axes), f_raw, f_hat, _interval(method, axes, anti, level), level, method)


# ---------------------------------------------------------------------------
# Typical-subspace bound
# ---------------------------------------------------------------------------

def typical_subspace_bound(n_pairs: int, atypical_mass: float, typical_log_dim: float) -> float:
    """typical_log_dim - eps log2(eps / 2**(2N)); the second term is about 2N eps."""
    if not 0.0 <= atypical_mass <= 1.0:
        raise ValueError(f"Atypical mass {atypical_mass} outside [0, 1]")
    return float(typical_log_dim + entr(atypical_mass) / _LN2 + 2 * n_pairs * atypical_mass)


def binomial_typical_log_dim(n_pairs: int, bit_error_rate: float, phase_error_rate: float) -> float:
    """Heuristic log-dimension of the typical subspace: N (h(e_bit) + h(e_phase)).

    A modelling choice; the typical set is not defined more precisely."""
    for name, rate in (('bit', bit_error_rate), ('phase', phase_error_rate)):
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"{name} error rate {rate} outside [0, 1]")
    return n_pairs * (binary_entropy(bit_error_rate) + binary_entropy(phase_error_rate))


def bb84_information_bound(n_pairs: int, bit_error_rate: float, phase_error_rate: float,
                           atypical_mass: float) -> float:
    return typical_subspace_bound(n_pairs, atypical_mass,
                                  binomial_typical_log_dim(n_pairs, bit_error_rate, phase_error_rate))
