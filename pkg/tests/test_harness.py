import importlib.util
from pathlib import Path

import pytest
import numpy as np
import yaml

from src.config import Config
from src.harness import cli
from src.harness.experiment_runner import _check_cheat, run_experiment, trial_rng
from src.harness.results import ResultsRecord, aggregate_rows, read_results, write_results
from src.harness.schemas import ConfigError, ExperimentConfig, load_experiment
from src.protocol.verification import draw_subsets


def _verify_config(**section):
    base = {"n_pairs": 12, "n_rounds": 4, "strategy": {"kind": "honest"}}
    base.update(section)
    return {"kind": "verify-sim", "seed": 5, "n_trials": 300, "verify-sim": base}


class TestSchemas:
    """Experiment config validation"""

    def test_defaults_filled(self):
        experiment = load_experiment({"kind": "bounds"})
        assert experiment.section.delta == 0.5
        assert experiment.section.key_bits == 1
        assert experiment.seed >= 0

    def test_unknown_key_names_field(self):
        with pytest.raises(ConfigError, match="n_pair"):
            load_experiment({"kind": "verify-sim", "verify-sim": {"n_pair": 3}})

    def test_rounds_must_leave_a_pair(self):
        with pytest.raises(ConfigError):
            load_experiment(_verify_config(n_pairs=4, n_rounds=4))

    def test_foreign_section_rejected(self):
        with pytest.raises(ConfigError):
            load_experiment({"kind": "bounds", "estimate": {}})

    def test_dense_strategy_needs_dense_engine(self):
        with pytest.raises(ConfigError):
            load_experiment(_verify_config(n_pairs=3, n_rounds=2, strategy={"kind": "general_pure"}))

    def test_dense_cap(self):
        with pytest.raises(ConfigError):
            load_experiment(_verify_config(engine="dense", n_pairs=8, n_rounds=2))

    def test_mixture_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            load_experiment({"kind": "estimate", "estimate": {"mixture": {"psi-": 0.7}}})

    def test_echo_round_trip(self):
        experiment = load_experiment(_verify_config())
        again = load_experiment(experiment.echo())
        assert again.echo() == experiment.echo()
        assert isinstance(again, ExperimentConfig)


class TestResults:
    """Results record aggregation and file format"""

    def test_aggregate(self):
        rows = [{"accepted": True, "fidelity": 1.0}, {"accepted": False, "fidelity": 0.5},
                {"accepted": True, "fidelity": None}]
        aggregate = aggregate_rows(rows)
        assert aggregate["n_trials"] == 3
        assert aggregate["accepted_rate"] == pytest.approx(2 / 3)
        assert aggregate["fidelity_mean"] == pytest.approx(0.75)

    def test_write_and_read(self, tmp_path):
        record = ResultsRecord(config={"kind": "bounds"}, rows=[{"x": np.float64(1.5), "ok": np.bool_(True)}],
                               aggregate={"n_trials": 1}, analysis={"value": float("nan")}, summary=["done"])
        path = write_results(record, tmp_path / "sub" / "out.jsonl")
        lines = path.read_text().splitlines()
        assert lines[0] == '{"kind":"bounds","record":"config"}'
        assert lines[-1] == "# done"
        restored = read_results(path)
        assert restored.rows == [{"x": 1.5, "ok": True}]
        assert restored.analysis == {"value": None}
        assert restored.summary == ["done"]

    def test_unknown_record_type(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"record":"mystery"}\n')
        with pytest.raises(ValueError):
            read_results(path)


class TestRunner:
    """run_experiment for every experiment kind"""

    def test_trial_rng_is_counter_based(self):
        assert trial_rng(1, 3).random() == trial_rng(1, 3).random()
        assert trial_rng(1, 3).random() != trial_rng(1, 4).random()

    def test_honest_batch_always_accepts(self, tmp_path):
        record = run_experiment(load_experiment(_verify_config()), tmp_path / "v.jsonl")
        assert record.aggregate["accepted_rate"] == 1.0
        assert record.aggregate["accepted_with_flaw_rate"] == 0.0
        assert len(record.rows) == 300

    def test_batch_chunks_cover_all_trials(self):
        experiment = load_experiment(_verify_config(chunk_size=70))
        assert len(run_experiment(experiment, write=False).rows) == 300

    def test_label_engine_keys(self):
        config = _verify_config(engine="label")
        config["n_trials"] = 20
        record = run_experiment(load_experiment(config), write=False)
        assert all(row["accepted"] and row["key_agreement"] for row in record.rows)
        assert all(row["survivor_fidelity"] == 1.0 for row in record.rows)

    def test_accepted_flaw_rate_within_hashing_bound(self):
        config = _verify_config(strategy={"kind": "single_flaw", "params": {"label": "psi+"}})
        config["n_trials"] = 20000
        record = run_experiment(load_experiment(config), write=False)
        p = 2.0 ** -4
        assert record.aggregate["accepted_with_flaw_rate"] <= p + 4 * np.sqrt(p * (1 - p) / 20000)
        assert record.aggregate["accepted_with_flaw_rate"] <= record.aggregate["accepted_rate"]

    def test_direct_test_single_flaw(self):
        config = _verify_config(test="direct", n_pairs=30, n_rounds=10,
                                strategy={"kind": "single_flaw", "params": {"label": "phi+"}})
        config["n_trials"] = 20000
        record = run_experiment(load_experiment(config), write=False)
        p = 2 / 3
        assert abs(record.aggregate["accepted_rate"] - p) <= 4 * np.sqrt(p * (1 - p) / 20000)
        assert record.analysis["direct_test_single_flaw"] == pytest.approx(p)

    def test_foreknowledge_dense(self):
        config = _verify_config(engine="dense", n_pairs=3, n_rounds=2,
                                strategy={"kind": "foreknowledge", "params": {"key_bit": 0}})
        config["n_trials"] = 10
        record = run_experiment(load_experiment(config), write=False)
        assert all(row["accepted"] for row in record.rows)
        assert all(row["key_bit"] == 0 for row in record.rows)

    def test_game_sim(self):
        record = run_experiment(load_experiment({"kind": "game-sim", "n_trials": 2000,
                                                 "game-sim": {"n_bits": 10, "n_zeros": 2, "n_rounds": 2,
                                                              "policy": "single-digit"}}), write=False)
        assert record.analysis["expected_acceptance"] == pytest.approx(0.64)
        assert abs(record.aggregate["accepted_rate"] - 0.64) < 4 * np.sqrt(0.64 * 0.36 / 2000)

    def test_repeater_sim(self):
        record = run_experiment(load_experiment({"kind": "repeater-sim", "n_trials": 5,
                                                 "repeater-sim": {"tolerance_rounds": 5,
                                                                  "ftqc": {"epsilon": 1e-5, "epsilon0": 1e-4,
                                                                           "target": 1e-15}}}), write=False)
        assert record.analysis["chain"]["rounds"] == [5, 5]
        assert record.analysis["ftqc_levels_needed"] == 4
        assert 0 < record.analysis["tolerable_depolarization"] < 2 / 3
        assert len(record.rows) == 5

    def test_repeater_sim_above_ftqc_threshold(self):
        record = run_experiment(load_experiment({"kind": "repeater-sim", "n_trials": 1,
                                                 "repeater-sim": {"ftqc": {"epsilon": 2e-4, "epsilon0": 1e-4,
                                                                           "max_levels": 20,
                                                                           "target": 1e-15}}}), write=False)
        assert record.analysis["ftqc_levels_needed"] is None
        assert record.analysis["ftqc_errors"][-1] == float("inf")
        assert record.analysis["ftqc_errors"][1] == pytest.approx(4e-4)

    @pytest.mark.parametrize("key_bit", [0, 1])
    def test_cheat_check_on_drawn_subsets(self, key_bit):
        subsets = draw_subsets(4, 2, np.random.default_rng(3))
        accept, p_key = _check_cheat(subsets, key_bit)
        assert accept == pytest.approx(1.0, abs=1e-9)
        assert p_key == pytest.approx(1.0, abs=1e-9)

    def test_attack_analysis(self):
        record = run_experiment(load_experiment({"kind": "attack-analysis"}), write=False)
        flags = [row["feasible"] for row in record.rows]
        assert flags[0] is False and flags[-1] is True
        assert record.analysis["crossover_transmittance"] == pytest.approx(
            record.analysis["crossover_closed_form"], abs=1e-6)

    def test_estimate(self):
        record = run_experiment(load_experiment({"kind": "estimate", "n_trials": 20,
                                                 "estimate": {"n_pairs": 2000, "sample_size": 2000}}),
                                write=False)
        assert record.analysis["true_singlet_fraction"] == 0.5
        assert record.aggregate["covered_rate"] >= 0.9

    def test_oracle_check_passes(self):
        record = run_experiment(load_experiment({"kind": "oracle-check", "oracle-check": {"n_states": 5}}),
                                write=False)
        failed = [row["property"] for row in record.rows if not row["passed"]]
        assert failed == []
        assert record.analysis["passed"] == len(record.rows) == 8

    def test_bounds(self):
        record = run_experiment(load_experiment({"kind": "bounds"}), write=False)
        assert record.rows[0]["entropy_bound"] == pytest.approx(1.7925, abs=1e-4)

    def test_byte_identical_reruns(self, tmp_path):
        config = _verify_config(strategy={"kind": "single_flaw", "params": {"label": "psi+"}})
        path = tmp_path / "run.jsonl"
        run_experiment(load_experiment(config), path)
        first = path.read_bytes()
        run_experiment(load_experiment(config), path)
        assert path.read_bytes() == first

    def test_config_echo_reruns(self, tmp_path):
        path = tmp_path / "est.jsonl"
        experiment = load_experiment({"kind": "estimate", "n_trials": 3, "output": str(path),
                                      "estimate": {"n_pairs": 300, "sample_size": 200}})
        original = run_experiment(experiment)
        echoed = load_experiment(read_results(path).config)
        assert run_experiment(echoed, write=False).rows == original.rows


class TestCli:
    """Command-line surface and exit codes"""

    def test_bounds_prints_value(self, tmp_path, capsys):
        code = cli.main(["bounds", "--delta", "0.5", "--key-bits", "1", "--output", str(tmp_path / "b.jsonl")])
        assert code == 0
        assert "1.7925" in capsys.readouterr().out

    def test_invalid_config_exit_code(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump({"kind": "verify-sim", "verify-sim": {"n_pairs": 3, "n_rounds": 5}}))
        assert cli.main(["verify-sim", "--config", str(path)]) == 1

    def test_kind_mismatch(self, tmp_path):
        path = tmp_path / "game.yaml"
        path.write_text(yaml.safe_dump({"kind": "game-sim"}))
        assert cli.main(["verify-sim", "--config", str(path)]) == 1

    def test_foreign_section_in_config_file(self, tmp_path):
        path = tmp_path / "mixed.yaml"
        path.write_text(yaml.safe_dump({"seed": 1, "game-sim": {"n_bits": 10}}))
        assert cli.main(["verify-sim", "--config", str(path)]) == 1
        with pytest.raises(ConfigError, match="game-sim"):
            cli.build_experiment_data(cli.build_parser().parse_args(["verify-sim", "--config", str(path)]))

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "absent.yaml")]) == 1

    def test_unknown_subcommand(self):
        assert cli.main(["teleport"]) == 1

    def test_run_subcommand(self, tmp_path):
        config = tmp_path / "game.yaml"
        config.write_text(yaml.safe_dump({"kind": "game-sim", "n_trials": 50}))
        output = tmp_path / "game.jsonl"
        assert cli.main(["run", str(config), "--seed", "3", "--output", str(output)]) == 0
        record = read_results(output)
        assert record.config["seed"] == 3
        assert len(record.rows) == 50


class TestConfig:
    """config.yaml settings and BELLHASH_* overrides"""

    @pytest.fixture
    def settings(self, tmp_path, monkeypatch):
        for name in ("SEED", "N_JOBS", "LOG_LEVEL", "OUTPUT_DIR"):
            monkeypatch.delenv(f"BELLHASH_{name}", raising=False)
        path = tmp_path / "config.yaml"
        path.write_text(yaml.safe_dump({"simulation": {"default_seed": 7, "n_jobs": 2},
                                        "system": {"output_dir": "out"}}))
        return Config(str(path))

    def test_file_values(self, settings):
        assert settings.default_seed == 7
        assert settings.n_jobs == 2
        assert str(settings.output_dir) == "out"
        assert settings.tolerance == pytest.approx(1e-10)

    def test_dotted_lookup(self, settings):
        assert settings.get("simulation.n_jobs") == 2
        assert settings.get("simulation.absent", "fallback") == "fallback"
        assert settings.get("simulation.n_jobs.deeper") is None

    def test_environment_override(self, settings, monkeypatch):
        monkeypatch.setenv("BELLHASH_SEED", "99")
        monkeypatch.setenv("BELLHASH_LOG_LEVEL", "debug")
        assert settings.default_seed == 99
        assert settings.log_level == "debug"

    def test_invalid_environment_value(self, settings, monkeypatch):
        monkeypatch.setenv("BELLHASH_N_JOBS", "many")
        with pytest.raises(ValueError, match="BELLHASH_N_JOBS"):
            settings.n_jobs

    def test_config_path_from_environment(self, tmp_path, monkeypatch):
        path = tmp_path / "other.yaml"
        path.write_text(yaml.safe_dump({"simulation": {"n_jobs": 4}}))
        monkeypatch.setenv("BELLHASH_CONFIG", str(path))
        assert Config().n_jobs == 4

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            Config(str(tmp_path / "absent.yaml"))

    def test_non_mapping_file(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text(yaml.safe_dump([1, 2, 3]))
        with pytest.raises(ValueError, match="mapping"):
            Config(str(path))


class TestRunTestsScript:
    """pytest command assembled by scripts/run_tests.py"""

    @pytest.fixture
    def script(self):
        path = Path(__file__).resolve().parent.parent / "scripts" / "run_tests.py"
        spec = importlib.util.spec_from_file_location("run_tests", path)
        module = importlib.util.module_from_spec(spec)
        spec.loader.exec_module(module)
        return module

    def test_default_command(self, script, tmp_path):
        cmd = script.build_command(tmp_path, [])
        assert cmd[:2] == ["pytest", str(tmp_path / "tests")]
        assert "--cov=src" in cmd
        assert cmd[-2:] == ["-m", "not slow"]

    def test_flags(self, script, tmp_path):
        cmd = script.build_command(tmp_path, ["--slow", "--no-cov", "-k", "cheat"])
        assert "-m" not in cmd
        assert not any(a.startswith("--cov") for a in cmd)
        assert cmd[-2:] == ["-k", "cheat"]
