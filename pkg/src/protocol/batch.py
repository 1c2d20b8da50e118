"""
Vectorised label-level Monte Carlo engine.

Runs the hashing test for many independent trials at once on an int8 array
of label values with shape (trials, live pairs). Gate actions come from
lookup tables built from the frozen gate table, so the engine and the
per-run simulator cannot drift apart. Phases are dropped (unobservable).
"""
import logging
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.algebra.bell_algebra import gate_action_table, is_antiparallel, local_rotation
from src.models.bell_state import BellLabel, BellString, GateKind, SINGLET

logger = logging.getLogger(__name__)


@lru_cache(maxsize=1)
def _lookup_tables() -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """rotate[q, label], xor_source[s, t], xor_target[s, t] as label values.

    q = 2 * phase question bit + amplitude question bit; q = 0 is the identity."""
    table = gate_action_table()
    rotate = np.zeros((4, 4), dtype=np.int8)
    for label in BellLabel:
        rotate[0, label] = label
    for q in (1, 2, 3):
        word = local_rotation((q >> 1, q & 1))
        for label in BellLabel:
            current = label
            for kind in word:
                (current,), _ = table[(kind, (current,))]
            rotate[q, label] = current
    xor_source = np.zeros((4, 4), dtype=np.int8)
    xor_target = np.zeros((4, 4), dtype=np.int8)
    for s in BellLabel:
        for t in BellLabel:
            (s_out, t_out), _ = table[(GateKind.BXOR, (s, t))]
            xor_source[s, t], xor_target[s, t] = s_out, t_out
    return rotate, xor_source, xor_target


def strings_to_array(strings: Union[np.ndarray, Sequence[BellString]]) -> np.ndarray:
    if isinstance(strings, np.ndarray):
        labels = strings.astype(np.int8)
    else:
        labels = np.array([[int(l) for l in s.labels] for s in strings], dtype=np.int8)
    if labels.ndim != 2:
        raise ValueError(f"Expected a (trials, pairs) label array, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() > 3):
        raise ValueError("Label values must lie in 0..3")
    return labels


def draw_subset_bits(n_trials: int, n_live: int, rng: np.random.Generator) -> np.ndarray:
    """(trials, 2L) bits, each row uniform over the nonzero strings."""
    bits = rng.integers(0, 2, size=(n_trials, 2 * n_live), dtype=np.int8)
    zero = ~bits.any(axis=1)
    while zero.any():
        bits[zero] = rng.integers(0, 2, size=(int(zero.sum()), 2 * n_live), dtype=np.int8)
        zero = ~bits.any(axis=1)
    return bits


def _hash_round(labels: np.ndarray, shadow: np.ndarray, bits: np.ndarray
                ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    rotate, xor_source, xor_target = _lookup_tables()
    n_trials, n_live = labels.shape
    if bits.shape != (n_trials, 2 * n_live):
        raise ValueError(f"Subset bits have shape {bits.shape}, expected {(n_trials, 2 * n_live)}")
    q = 2 * bits[:, 0::2] + bits[:, 1::2]
    if not (q > 0).any(axis=1).all():
        raise ValueError("Every trial needs a nonzero subset")
    labels = rotate[q, labels]
    shadow = rotate[q, shadow]
    rows = np.arange(n_trials)
    dest = np.argmax(q > 0, axis=1)
    for j in range(n_live):
        hit = (q[:, j] > 0) & (dest != j)
        if not hit.any():
            continue
        r, d = rows[hit], dest[hit]
        for arr in (labels, shadow):
            s, t = arr[r, j], arr[r, d]
            arr[r, j], arr[r, d] = xor_source[s, t], xor_target[s, t]
    passed = (labels[rows, dest] & 1) == (shadow[rows, dest] & 1)
    keep = np.ones(labels.shape, dtype=bool)
    keep[rows, dest] = False
    return (labels[keep].reshape(n_trials, n_live - 1),
            shadow[keep].reshape(n_trials, n_live - 1), passed, dest)


def hash_batch(strings, subset_bits: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Apply explicit rounds (one (trials, 2L) bit array per round).

    Returns (accepted flags, surviving labels, honest reference labels); rows of
    rejected trials are carried along but meaningless."""
    labels = strings_to_array(strings).copy()
    shadow = np.full_like(labels, int(SINGLET))
    accepted = np.ones(labels.shape[0], dtype=bool)
    for bits in subset_bits:
        labels, shadow, passed, _ = _hash_round(labels, shadow, np.asarray(bits, dtype=np.int8))
        accepted &= passed
    return accepted, labels, shadow


def simulate_acceptance_batch(strings, n_rounds: int, rng: np.random.Generator,
                              return_survivors: bool = False):
    """Accept flags of independent hashing runs, one per row of strings."""
    labels = strings_to_array(strings)
    n_trials, n_pairs = labels.shape
    if not 1 <= n_rounds < n_pairs:
        raise ValueError(f"n_rounds ({n_rounds}) must lie in [1, {n_pairs - 1}]")
    subset_bits = [draw_subset_bits(n_trials, n_pairs - r, rng) for r in range(n_rounds)]
    accepted, survivors, reference = hash_batch(labels, subset_bits)
    logger.debug(f"Batch hashing: {n_trials} trials, {n_pairs} pairs, {n_rounds} rounds, "
                 f"{int(accepted.sum())} accepted")
    return (accepted, survivors, reference) if return_survivors else accepted


def direct_test_batch(strings, n_tests: int, rng: np.random.Generator, axis: str = 'z') -> np.ndarray:
    """Accept flags for the direct-testing baseline: n_tests distinct random pairs
    per trial, each must be antiparallel along axis."""
    labels = strings_to_array(strings)
    n_trials, n_pairs = labels.shape
    if not 0 < n_tests <= n_pairs:
        raise ValueError(f"Cannot test {n_tests} of {n_pairs} pairs")
    anti = np.array([is_antiparallel(label, axis) for label in BellLabel])
    chosen = np.argsort(rng.random((n_trials, n_pairs)), axis=1)[:, :n_tests]
    picked = np.take_along_axis(labels, chosen, axis=1)
    return anti[picked].all(axis=1)


def tile_string(string: BellString, n_trials: int) -> np.ndarray:
    return np.tile(np.array([int(l) for l in string.labels], dtype=np.int8), (n_trials, 1))


def sample_strings(strings: List[BellString], weights: Optional[Sequence[float]], n_trials: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Rows drawn independently from a finite distribution over label strings."""
    table = np.array([[int(l) for l in s.labels] for s in strings], dtype=np.int8)
    index = rng.choice(len(strings), size=n_trials, p=weights)
    return table[index]
