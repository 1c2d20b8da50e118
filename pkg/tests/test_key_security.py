import pytest
import numpy as np

from src.adversary.strategies import general_pure
from src.models.bell_state import BellLabel, BellString, SINGLET
from src.oracle import dense_oracle
from src.security.key_security import (antiparallel_probability, bb84_information_bound, binary_entropy,
                                       binomial_typical_log_dim, entropy_bound, estimate_singlet_fraction,
                                       eve_info_bound, security_bound, typical_subspace_bound)


def _mixture_pairs(f, n_pairs, rng):
    weights = [(1 - f) / 3] * 3 + [f]
    return BellString(tuple(int(v) for v in rng.choice(4, size=n_pairs, p=weights)))


class TestEntropyBound:
    """Entropy bound from the fidelity with R singlets"""

    def test_perfect_fidelity(self):
        for key_bits in (1, 2, 10):
            assert entropy_bound(0.0, key_bits) == 0.0

    def test_half_deficit_one_bit(self):
        assert entropy_bound(0.5, 1) == pytest.approx(0.5 + 0.5 * np.log2(6), abs=1e-12)
        assert entropy_bound(0.5, 1) == pytest.approx(1.7925, abs=1e-4)

    def test_monotone_in_deficit(self):
        values = [entropy_bound(d, 2) for d in np.linspace(0, 0.9, 40)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_monotone_in_key_length(self):
        values = [entropy_bound(0.1, r) for r in range(1, 8)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_large_key_is_finite(self):
        assert np.isfinite(entropy_bound(1e-6, 2000))

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            entropy_bound(1.0, 1)
        with pytest.raises(ValueError):
            entropy_bound(0.1, 0)

    def test_security_bound(self):
        bound = security_bound(0.99, 3)
        assert bound.fidelity_deficit == pytest.approx(0.01)
        assert bound.eve_info_bound == pytest.approx(eve_info_bound(0.99, 3))
        assert bound.to_dict()["key_length"] == 3

    def test_binary_entropy(self):
        assert binary_entropy(0.5) == pytest.approx(1.0)
        assert binary_entropy(0.0) == 0.0


class TestEstimator:
    """Singlet-fraction estimation from random-axis samples"""

    @pytest.fixture
    def rng(self):
        return np.random.default_rng(17)

    def test_antiparallel_probability(self):
        assert antiparallel_probability(SINGLET) == pytest.approx(1.0)
        for label in (BellLabel.PHI_PLUS, BellLabel.PSI_PLUS, BellLabel.PHI_MINUS):
            assert antiparallel_probability(label) == pytest.approx(1 / 3)
        assert antiparallel_probability(BellLabel.PSI_PLUS, "z") == 1.0

    def test_pure_singlets(self, rng):
        report = estimate_singlet_fraction(BellString.honest(500), 200, rng)
        assert report.k == 200
        assert report.f_hat == 1.0
        assert len(report.axis_log) == 200

    def test_dense_singlets(self, rng):
        state = dense_oracle.prepare_bell_product(BellString.honest(3))
        report = estimate_singlet_fraction(state, 3, rng, method="exact")
        assert report.k == 3
        assert report.f_hat == pytest.approx(1.0)

    def test_dense_readout_matches_premeasured_labels(self):
        state = general_pure(2, 1, rng=np.random.default_rng(5))
        branches = dense_oracle.bell_premeasure(state)
        for pair in range(2):
            for axis in ("x", "y", "z"):
                expected = sum(b.probability * antiparallel_probability(b.labels.label(pair), axis)
                               for b in branches)
                assert dense_oracle.coarse_probability(state, pair, axis) == pytest.approx(expected, abs=1e-12)

    def test_expected_estimate_is_the_singlet_fraction(self):
        state = general_pure(3, 1, rng=np.random.default_rng(6))
        branches = dense_oracle.bell_premeasure(state)
        for pair in range(3):
            anti = np.mean([dense_oracle.coarse_probability(state, pair, axis) for axis in ("x", "y", "z")])
            singlet = sum(b.probability for b in branches if b.labels.label(pair) is SINGLET)
            assert (3 * anti - 1) / 2 == pytest.approx(singlet, abs=1e-12)

    def test_clamping(self):
        # Phi+ only answers antiparallel along y; an all-x/z draw gives k = 0
        pairs = BellString((BellLabel.PHI_PLUS,) * 50)
        report = estimate_singlet_fraction(pairs, 50, np.random.default_rng(0))
        assert report.f_hat_raw == pytest.approx((3 * report.k - 50) / 100)
        assert 0.0 <= report.f_hat <= 1.0

    @pytest.mark.parametrize("method", ["normal", "stratified", "exact"])
    def test_interval_contains_estimate(self, rng, method):
        report = estimate_singlet_fraction(_mixture_pairs(0.5, 2000, rng), 1500, rng, method=method)
        low, high = report.confidence_interval
        assert low <= report.f_hat_raw <= high
        assert report.method == method
        assert report.to_dict()["axis_log"].count("x") == report.axis_log.count("x")

    def test_invalid_arguments(self, rng):
        with pytest.raises(ValueError):
            estimate_singlet_fraction(BellString.honest(5), 6, rng)
        with pytest.raises(ValueError):
            estimate_singlet_fraction(BellString.honest(5), 3, rng, method="bootstrap")

    @pytest.mark.slow
    @pytest.mark.parametrize("f", [0.0, 0.25, 0.5, 1.0])
    def test_coverage(self, f):
        rng = np.random.default_rng(int(f * 100) + 1)
        covered = 0
        for _ in range(200):
            report = estimate_singlet_fraction(_mixture_pairs(f, 3000, rng), 3000, rng, confidence_level=0.99)
            low, high = report.confidence_interval
            covered += low <= f <= high
        assert covered >= 190


class TestTypicalSubspace:
    """Typical-subspace bound on Eve's information"""

    def test_no_atypical_mass(self):
        assert typical_subspace_bound(100, 0.0, 12.5) == pytest.approx(12.5)

    def test_atypical_mass_term(self):
        eps = 1e-3
        assert typical_subspace_bound(100, eps, 12.5) == pytest.approx(
            12.5 - eps * np.log2(eps) + 2 * 100 * eps, rel=1e-12)

    def test_binomial_log_dim(self):
        assert binomial_typical_log_dim(100, 0.0, 0.0) == 0.0
        assert binomial_typical_log_dim(100, 0.5, 0.5) == pytest.approx(200.0)

    def test_bb84_bound(self):
        value = bb84_information_bound(1000, 0.02, 0.02, 1e-6)
        assert value == pytest.approx(2000 * binary_entropy(0.02), rel=1e-3)

    def test_invalid_rates(self):
        with pytest.raises(ValueError):
            binomial_typical_log_dim(10, 1.5, 0.0)
        with pytest.raises(ValueError):
            typical_subspace_bound(10, -0.1, 1.0)
