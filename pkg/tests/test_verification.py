import pytest
import numpy as np

from src.adversary.strategies import general_pure, single_flaw
from src.models.bell_state import BellLabel, BellString, Subset
from src.models.transcript import Verdict
from src.oracle import dense_oracle
from src.protocol import batch
from src.protocol.verification import (ProtocolParams, all_questions, classical_acceptance_probability,
                                       classical_game, conditional_singlet_fidelity, draw_subsets,
                                       exact_acceptance_probability, expected_parities, generate_key,
                                       reference_survivors, run_direct_test, run_verification)


class TestProtocolParams:
    """Parameter validation"""

    def test_rounds_must_leave_a_pair(self):
        with pytest.raises(ValueError):
            ProtocolParams(n_pairs=3, n_rounds=3)

    def test_at_least_one_round(self):
        with pytest.raises(ValueError):
            ProtocolParams(n_pairs=3, n_rounds=0)

    def test_subset_draws_are_nonzero(self):
        rng = np.random.default_rng(0)
        subsets = draw_subsets(5, 4, rng)
        assert [len(s) for s in subsets] == [10, 8, 6, 4]
        assert not any(s.is_zero() for s in subsets)

    def test_all_questions_count(self):
        assert len(list(all_questions(2))) == 15


class TestClassicalGame:
    """Parity game on committed bit strings"""

    @pytest.fixture
    def rng(self):
        return np.random.default_rng(42)

    def test_all_ones_always_accepted(self, rng):
        for policy in ("single-digit", "random-parity"):
            assert all(classical_game("1" * 10, 5, policy, rng) is Verdict.ACCEPT for _ in range(50))

    def test_exact_probabilities(self):
        assert classical_acceptance_probability("0111", 3, "random-parity") == pytest.approx(1 / 8)
        assert classical_acceptance_probability("0111", 2, "single-digit") == pytest.approx(9 / 16)
        assert classical_acceptance_probability("1111", 3, "random-parity") == 1.0

    def test_random_parity_rate(self, rng):
        x = "0" + "1" * 29
        rate = np.mean([classical_game(x, 3, "random-parity", rng) is Verdict.ACCEPT for _ in range(20000)])
        sigma = np.sqrt(0.125 * 0.875 / 20000)
        assert abs(rate - 0.125) < 4 * sigma

    def test_unknown_policy(self, rng):
        with pytest.raises(ValueError):
            classical_game("11", 1, "majority", rng)


class TestVerification:
    """Hashing test on label strings and dense states"""

    @pytest.fixture
    def rng(self):
        return np.random.default_rng(7)

    def test_honest_source_accepted(self, rng):
        for _ in range(20):
            transcript, survivors = run_verification(BellString.honest(8), ProtocolParams(8, 5), rng)
            assert transcript.accepted
            assert survivors.n_pairs == 3
            reference = reference_survivors(8, [r.subset for r in transcript.rounds])
            assert survivors.labels == reference.labels

    def test_honest_key_agrees(self, rng):
        _, survivors = run_verification(BellString.honest(6), ProtocolParams(6, 2), rng)
        alice, bob = generate_key(survivors, rng)
        assert alice.shape == (4,)
        assert np.array_equal(alice, bob)

    def test_parallel_survivor_key_disagrees(self):
        for seed in range(20):
            alice, bob = generate_key(BellString((BellLabel.PHI_PLUS,)), np.random.default_rng(seed))
            assert alice[0] != bob[0]

    def test_rejection_returns_no_survivors(self):
        source = single_flaw(3, 0, "phi+")
        subsets = [Subset.from_string("010000"), Subset.from_string("0011")]
        transcript, survivors = run_verification(source, ProtocolParams(3, 2), np.random.default_rng(0), subsets)
        assert transcript.verdict is Verdict.REJECT
        assert len(transcript.rounds) == 1
        assert survivors is None

    def test_source_size_checked(self, rng):
        with pytest.raises(ValueError):
            run_verification(BellString.honest(4), ProtocolParams(5, 2), rng)

    def test_expected_parities(self):
        subsets = [Subset.from_string("001101"), Subset.from_string("1001")]
        assert expected_parities(3, subsets) == (1, 0)

    def test_dense_and_label_engines_agree(self):
        labels = BellString.from_bits("110111")
        for seed in range(10):
            rng = np.random.default_rng(seed)
            subsets = draw_subsets(3, 2, rng)
            label_t, _ = run_verification(labels, ProtocolParams(3, 2), np.random.default_rng(seed), subsets)
            dense_t, _ = run_verification(dense_oracle.prepare_bell_product(labels), ProtocolParams(3, 2),
                                          np.random.default_rng(seed), subsets)
            assert label_t.accepted == dense_t.accepted


class TestExactQuantities:
    """Exact averages over every admissible subset sequence"""

    def test_honest_acceptance_is_certain(self):
        assert exact_acceptance_probability(BellString.honest(3), 2) == pytest.approx(1.0)
        assert conditional_singlet_fidelity(BellString.honest(3), 2) == pytest.approx((1.0, 1.0))

    @pytest.mark.parametrize("label", ["phi+", "psi+", "phi-"])
    @pytest.mark.parametrize("position", [0, 1, 2])
    def test_single_flaw_acceptance(self, label, position):
        # 31/63 pass the first round; 1 of those 31 moves the flaw out, the rest pass with 7/15
        p = exact_acceptance_probability(single_flaw(3, position, label), 2)
        assert p == pytest.approx(5 / 21, abs=1e-12)
        assert p <= 2.0 ** -2

    def test_single_flaw_conditional_fidelity(self):
        p, fidelity = conditional_singlet_fidelity(single_flaw(3, 0, "phi+"), 2)
        assert p == pytest.approx(5 / 21, abs=1e-12)
        assert fidelity == pytest.approx(1 / 5, abs=1e-12)

    @pytest.mark.parametrize("label", ["phi+", "psi+", "phi-"])
    @pytest.mark.parametrize("position", [0, 1, 2])
    def test_accepting_a_flawed_string_is_bounded(self, label, position):
        p, fidelity = conditional_singlet_fidelity(single_flaw(3, position, label), 2)
        assert p * (1 - fidelity) <= 2.0 ** -2 + 1e-12
        assert 0.0 <= fidelity < 1.0

    def test_half_honest_mixture(self):
        flaw_p, flaw_f = conditional_singlet_fidelity(single_flaw(3, 2, "psi+"), 2)
        p = 0.5 + 0.5 * flaw_p
        fidelity = (0.5 + 0.5 * flaw_p * flaw_f) / p
        assert p == pytest.approx(13 / 21, abs=1e-9)
        assert p * (1 - fidelity) <= 2.0 ** -2
        assert fidelity > flaw_f

        # a coherent superposition of the same two strings gives the same numbers
        state = general_pure(3, 0, amplitudes={"111111": 1.0, "111101": 1.0})
        dense_p, dense_f = conditional_singlet_fidelity(state, 2)
        assert dense_p == pytest.approx(p, abs=1e-9)
        assert dense_f == pytest.approx(fidelity, abs=1e-9)

    def test_label_and_dense_exact_agree(self):
        rng = np.random.default_rng(8)
        for _ in range(3):
            labels = BellString(tuple(int(v) for v in rng.integers(4, size=3)))
            assert exact_acceptance_probability(labels, 2) == pytest.approx(
                exact_acceptance_probability(dense_oracle.prepare_bell_product(labels), 2), abs=1e-9)


class TestDirectTest:
    """Baseline: test m random pairs directly"""

    def test_amplitude_flaw_caught_only_when_sampled(self):
        source = single_flaw(4, 2, "phi+")
        rng = np.random.default_rng(1)
        verdicts = [run_direct_test(source, 4, rng) for _ in range(5)]
        assert all(v is Verdict.REJECT for v in verdicts)

    def test_dense_direct_test(self):
        state = dense_oracle.prepare_bell_product(BellString.honest(3))
        assert run_direct_test(state, 2, np.random.default_rng(0), axis="x") is Verdict.ACCEPT

    def test_too_many_tests(self):
        with pytest.raises(ValueError):
            run_direct_test(BellString.honest(2), 3, np.random.default_rng(0))


class TestBatchEngine:
    """Vectorised label engine"""

    def test_matches_per_run_simulator_on_identical_subsets(self):
        rng = np.random.default_rng(123)
        for _ in range(30):
            source = BellString(tuple(int(v) for v in rng.integers(4, size=5)))
            subsets = draw_subsets(5, 3, rng)
            accepted, survivors, _ = batch.hash_batch(batch.tile_string(source, 1),
                                                      [np.array([s.bits]) for s in subsets])
            transcript, expected = run_verification(source, ProtocolParams(5, 3), rng, subsets)
            assert bool(accepted[0]) == transcript.accepted
            if transcript.accepted:
                assert [int(l) for l in expected.labels] == survivors[0].tolist()

    def test_honest_batch_accepts(self):
        rng = np.random.default_rng(4)
        strings = batch.tile_string(BellString.honest(12), 500)
        assert batch.simulate_acceptance_batch(strings, 6, rng).all()

    def test_label_values_checked(self):
        with pytest.raises(ValueError):
            batch.strings_to_array(np.array([[0, 4]]))

    def test_single_flaw_rate_small_run(self):
        rng = np.random.default_rng(9)
        strings = batch.tile_string(single_flaw(12, 3, "psi+"), 20000)
        rate = batch.simulate_acceptance_batch(strings, 3, rng).mean()
        assert abs(rate - 0.125) < 4 * np.sqrt(0.125 * 0.875 / 20000)

    @pytest.mark.slow
    def test_single_flaw_rate_n30_m10(self):
        rng = np.random.default_rng(2024)
        labels = batch.tile_string(BellString.honest(30), 100000)
        labels[np.arange(100000), rng.integers(30, size=100000)] = int(BellLabel.PHI_PLUS)
        rate = batch.simulate_acceptance_batch(labels, 10, rng).mean()
        p = 2.0 ** -10
        assert abs(rate - p) <= 3 * np.sqrt(p * (1 - p) / 100000)

    @pytest.mark.slow
    def test_direct_test_rate_n30_m10(self):
        rng = np.random.default_rng(2025)
        labels = batch.tile_string(BellString.honest(30), 100000)
        labels[np.arange(100000), rng.integers(30, size=100000)] = int(BellLabel.PHI_PLUS)
        rate = batch.direct_test_batch(labels, 10, rng).mean()
        p = 2 / 3
        assert abs(rate - p) <= 3 * np.sqrt(p * (1 - p) / 100000)
