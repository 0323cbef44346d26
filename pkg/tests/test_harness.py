"""Harness: configs, seeding, dataset persistence, WAV export, sweeps, CLI."""

import json
from pathlib import Path

import numpy as np
import pytest

from soundmatch import cli
from soundmatch import harness as H
from soundmatch.kernels import ConfigError

FAST = dict(max_iterations=3, write_wav=True)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = H.RunConfig(
        programs=["NoiseAM", "AddSineSaw"],
        losses=["L1Spec", "SIMSESpec"],
        trials_per_combo=3,
        out_dir=str(out),
        **FAST,
    )
    H.run_matrix(cfg)
    return out, cfg


class TestConfig:
    def test_defaults_match_protocol(self):
        cfg = H.RunConfig()
        assert cfg.trials_per_combo == 300
        assert cfg.max_iterations == 200
        assert cfg.lr == 0.045
        assert cfg.clip_threshold == 1.0
        assert len(cfg.programs) == 4 and len(cfg.losses) == 4

    def test_validation(self):
        with pytest.raises(ConfigError):
            H.RunConfig(programs=["Nope"])
        with pytest.raises(ConfigError):
            H.RunConfig(losses=["Nope"])
        with pytest.raises(ConfigError):
            H.RunConfig(trials_per_combo=0)
        with pytest.raises(ConfigError):
            H.RunConfig(workers=0)

    def test_file_round_trip_and_overrides(self, tmp_path):
        cfg = H.RunConfig(trials_per_combo=5, master_seed=7)
        path = tmp_path / "c.json"
        cfg.to_file(path)
        again = H.RunConfig.from_file(path)
        assert again == cfg
        overridden = H.RunConfig.from_file(path, {"master_seed": 9, "workers": None})
        assert overridden.master_seed == 9
        assert overridden.workers == cfg.workers

    def test_unknown_fields_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"bogus": 1}')
        with pytest.raises(ConfigError):
            H.RunConfig.from_file(path)


class TestSeeding:
    def test_stable_identity(self):
        a = H.trial_identity(42, "NoiseAM", "L1Spec", 0)
        b = H.trial_identity(42, "NoiseAM", "L1Spec", 0)
        assert a == b

    def test_disjoint_across_coordinates(self):
        seeds = {
            H.trial_identity(42, p, l, i)[1]
            for p in ("NoiseAM", "BPNoise")
            for l in ("L1Spec", "JTFS")
            for i in range(50)
        }
        assert len(seeds) == 200


class TestWav:
    def test_round_trip(self, tmp_path):
        x = np.sin(2 * np.pi * 440 * np.arange(44100) / 44100)
        path = tmp_path / "t.wav"
        H.write_wav(path, x)
        back, rate = H.read_wav(path)
        assert rate == 44100
        assert len(back) == 44100
        assert np.max(np.abs(back - x)) < 1e-4  # 16-bit quantization


class TestRunMatrix:
    def test_counts(self, small_run):
        out, cfg = small_run
        records = H.read_trials(out / H.DATASET_FILENAME)
        assert len(records) == 2 * 2 * 3 == 12
        wavs = list((out / H.WAV_DIRNAME).glob("*.wav"))
        assert len(wavs) == 24

    def test_wav_format(self, small_run):
        out, _ = small_run
        wav = next(iter(sorted((out / H.WAV_DIRNAME).glob("*.target.wav"))))
        data, rate = H.read_wav(wav)
        assert rate == 44100 and len(data) == 44100

    def test_resume_is_idempotent(self, small_run):
        out, cfg = small_run
        before = (out / H.DATASET_FILENAME).read_bytes()
        H.run_matrix(cfg)
        assert (out / H.DATASET_FILENAME).read_bytes() == before

    def test_records_round_trip_bitwise(self, small_run):
        out, _ = small_run
        for line in (out / H.DATASET_FILENAME).read_text().splitlines():
            rec = H.OP.TrialRecord.from_record(json.loads(line))
            assert H.canonical_json(rec.to_record()) == line

    def test_evaluate_then_rank(self, small_run):
        out, _ = small_run
        H.evaluate_dataset(out)
        evals = H.read_evals(out / H.EVALS_FILENAME)
        assert len(evals) == 12
        assert all(e.mss >= 0 and 0 <= e.p_loss <= 1 for e in evals)
        report = H.rank_dataset(out, bootstrap_k=100, seed=0)
        assert set(report.per_program) == {"NoiseAM", "AddSineSaw"}
        for methods in report.per_program.values():
            for mr in methods.values():
                assert set(mr.ranks) == {"L1Spec", "SIMSESpec"}
                assert min(mr.ranks.values()) == 1

    def test_rank_without_evaluate_is_config_error(self, tmp_path):
        cfg = H.RunConfig(
            programs=["NoiseAM"], losses=["L1Spec"], trials_per_combo=1,
            out_dir=str(tmp_path / "no_eval"), **FAST,
        )
        H.run_matrix(cfg)
        with pytest.raises(ConfigError):
            H.rank_dataset(tmp_path / "no_eval")

    def test_timings_sidecar_written(self, small_run):
        out, _ = small_run
        timings = H.read_timings(out)
        per_trial = [t for t in timings if "trial_id" in t]
        assert len(per_trial) >= 12
        hours = H.project_runtime_hours(out, trials_total=4800)
        assert hours > 0


class TestSweep:
    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            H.SweepSpec(variant="Nope")
        with pytest.raises(ConfigError):
            H.SweepSpec(grid_size=8)
        with pytest.raises(ConfigError):
            H.SweepSpec(variant="HPNoise", target_value=50000.0)

    def test_normalized_columns_and_tsv(self):
        spec = H.SweepSpec(variant="SNoiseAM", grid_size=16, target_value=4.0)
        table = H.sweep_landscape(spec)
        for col in table.columns.values():
            assert col.min() == 0.0 and col.max() == 1.0
        tsv = table.to_tsv()
        lines = tsv.strip().splitlines()
        assert lines[0].split("\t") == ["rate", "L1Spec", "SIMSESpec", "JTFS", "DTWEnvelope"]
        assert len(lines) == 17

    def test_local_basin_near_target(self):
        # losses decrease toward the target in its neighborhood
        spec = H.SweepSpec(variant="SNoiseAM", grid_size=32, target_value=4.0)
        table = H.sweep_landscape(spec)
        tc = table.target_cell()
        for name in ("DTWEnvelope", "JTFS"):
            col = table.columns[name]
            assert col[tc] <= col[tc - 2]
            assert col[tc] <= col[tc + 2]


class TestCli:
    def test_run_evaluate_rank_exit_codes(self, tmp_path):
        out = tmp_path / "cli_run"
        cfg = {
            "programs": ["NoiseAM"],
            "losses": ["L1Spec"],
            "trials_per_combo": 1,
            "max_iterations": 2,
            "out_dir": str(out),
            "write_wav": False,
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        assert cli.main(["run", "--config", str(cfg_path)]) == 0
        # rank before evaluate: config error
        assert cli.main(["rank", "--out", str(out)]) == 2
        assert cli.main(["evaluate", "--out", str(out)]) == 0
        assert cli.main(["rank", "--out", str(out), "--bootstrap-k", "50"]) == 1  # single loss: cannot rank
        assert (out / H.EVALS_FILENAME).exists()

    def test_unknown_subcommand_exits_2(self, capsys):
        assert cli.main(["frobnicate"]) == 2

    def test_unknown_sweep_variant_exits_2(self):
        assert cli.main(["sweep", "--variant", "nope"]) == 2

    def test_sweep_writes_table(self, tmp_path):
        out = tmp_path / "sweep.tsv"
        code = cli.main(
            ["sweep", "--variant", "s-noise-am", "--grid", "16", "--target", "4.0", "--out", str(out)]
        )
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 17
        assert len(lines[1].split("\t")) == 5

    def test_export_wav(self, small_run, tmp_path):
        out, _ = small_run
        records = H.read_trials(out / H.DATASET_FILENAME)
        tid = records[0].trial_id
        assert cli.main(["export-wav", "--out", str(out), tid]) == 0
        assert cli.main(["export-wav", "--out", str(out), "missing_id"]) == 2

    def test_run_twice_identical_dataset(self, tmp_path):
        out = tmp_path / "det"
        args = ["run", "--out", str(out), "--trials", "1", "--seed", "7", "--no-wav"]
        cfg = tmp_path / "tiny.json"
        cfg.write_text(json.dumps({"programs": ["AddSineSaw"], "losses": ["L1Spec"], "max_iterations": 2}))
        full = ["run", "--config", str(cfg), "--out", str(out), "--trials", "1", "--seed", "7", "--no-wav"]
        assert cli.main(full) == 0
        first = (out / H.DATASET_FILENAME).read_bytes()
        assert cli.main(full) == 0
        assert (out / H.DATASET_FILENAME).read_bytes() == first
