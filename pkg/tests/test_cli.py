"""CLI integration: command flows, exit codes, byte-level idempotence."""

import json

import numpy as np
import pytest

from gaitreid.cli import main

FAST = [
    "--set", "synth.num_identities=12",
    "--set", "synth.feature_dim=8",
    "--set", "synth.clips_per_footage=2",
    "--set", "synth.drift_sigma={0->1: 0.05, 1->2: 0.05, 2->3: 0.05}",
    "--set", "train.epochs=2",
    "--set", "train.batch_identities=3",
    "--set", "train.hidden_dim=8",
    "--set", "train.embed_dim=4",
    "--set", "train.folds=3",
]


def run(cmd, out, extra=(), seed=3):
    argv = [cmd, "--out", str(out), "--seed", str(seed), *FAST, *extra]
    return main(argv)


def dataset_args(out):
    return ["--set", f"dataset={out / 'dataset.csv'}"]


class TestSynth:
    def test_writes_loadable_dataset(self, tmp_path, capsys):
        assert run("synth", tmp_path) == 0
        assert (tmp_path / "dataset.csv").exists()
        from gaitreid import load_dataset

        ds = load_dataset(tmp_path / "dataset.csv")
        assert len(ds.identities) == 12
        assert "stage RP1->RP2" in capsys.readouterr().out

    def test_byte_identical_across_runs(self, tmp_path):
        run("synth", tmp_path / "a")
        run("synth", tmp_path / "b")
        assert (tmp_path / "a/dataset.csv").read_bytes() == (
            tmp_path / "b/dataset.csv"
        ).read_bytes()

    def test_membership_summary(self, tmp_path, capsys):
        extra = [
            "--set", "synth.num_identities=214",
            "--set", "synth.stage_memberships=[129, 111]",
            "--set", "synth.clips_per_footage=1",
        ]
        assert run("synth", tmp_path, extra) == 0
        out = capsys.readouterr().out
        assert "stage RP1->RP2: 129 positive identities" in out
        assert "stage RP2->RP3: 111 positive identities" in out

    def test_bad_config_exit_2(self, tmp_path, capsys):
        assert run("synth", tmp_path, ["--set", "synth.rp_count=1"]) == 2


class TestTrain:
    def test_writes_checkpoints_and_folds(self, tmp_path):
        run("synth", tmp_path)
        assert run("train", tmp_path, dataset_args(tmp_path)) == 0
        for stage in ("s1to2", "s2to3"):
            assert (tmp_path / f"folds_{stage}.csv").exists()
            assert (tmp_path / f"trainlog_triplet_{stage}.csv").exists()
            for fold in range(3):
                assert (tmp_path / f"head_triplet_{stage}_fold{fold}.json").exists()

    def test_epochs_zero_checkpoints_equal_initialization(self, tmp_path):
        from gaitreid import load_head
        from gaitreid.head import PARAM_NAMES, head_init
        from gaitreid.seeds import derive_seed

        run("synth", tmp_path)
        run("train", tmp_path, dataset_args(tmp_path) + ["--set", "train.epochs=0"])
        loaded = load_head(tmp_path / "head_triplet_s1to2_fold0.json")
        expected = head_init(
            p=8, d=4, seed=derive_seed(3, "head", "s1to2", "fold0"), hidden=8
        )
        for name in PARAM_NAMES:
            assert np.array_equal(getattr(loaded, name), getattr(expected, name))

    def test_rerun_byte_identical(self, tmp_path):
        run("synth", tmp_path)
        run("train", tmp_path, dataset_args(tmp_path))
        first = (tmp_path / "head_triplet_s1to2_fold1.json").read_bytes()
        log_first = (tmp_path / "trainlog_triplet_s1to2.csv").read_bytes()
        run("train", tmp_path, dataset_args(tmp_path))
        assert (tmp_path / "head_triplet_s1to2_fold1.json").read_bytes() == first
        assert (tmp_path / "trainlog_triplet_s1to2.csv").read_bytes() == log_first

    def test_quadruplet_flag(self, tmp_path):
        run("synth", tmp_path)
        code = run(
            "train",
            tmp_path,
            dataset_args(tmp_path) + ["--set", "train.loss_kind=quadruplet"],
        )
        assert code == 0
        assert (tmp_path / "head_quadruplet_s1to2_fold0.json").exists()

    def test_missing_dataset_exit_3(self, tmp_path):
        assert run("train", tmp_path, dataset_args(tmp_path)) == 3


class TestEvaluate:
    def _pipeline(self, tmp_path, extra=()):
        run("synth", tmp_path, extra)
        run("train", tmp_path, dataset_args(tmp_path) + list(extra))
        return run("evaluate", tmp_path, dataset_args(tmp_path) + list(extra))

    def test_perfect_dataset_gives_map_one(self, tmp_path):
        # Zero drift and zero clip noise: every identity is bit-identical
        # across recording points, so even an untrained head ranks the true
        # match first.
        extra = [
            "--set", "synth.drift_sigma={}",
            "--set", "synth.clip_noise_sigma=0",
            "--set", "train.epochs=0",
        ]
        assert self._pipeline(tmp_path, extra) == 0
        summary = (tmp_path / "summary_triplet.csv").read_text().splitlines()
        assert summary[0] == "stage,map"
        for line in summary[1:]:
            stage, value = line.split(",")
            assert float(value) == 1.0

    def test_outputs_exist_and_rerun_identical(self, tmp_path):
        assert self._pipeline(tmp_path) == 0
        eval_file = tmp_path / "eval_triplet_s1to2_fold0.json"
        cmc_file = tmp_path / "cmc_triplet_s1to2.csv"
        summary_file = tmp_path / "summary_triplet_s1to2.json"
        assert eval_file.exists() and cmc_file.exists() and summary_file.exists()
        before = eval_file.read_bytes(), cmc_file.read_bytes()
        assert run("evaluate", tmp_path, dataset_args(tmp_path)) == 0
        assert (eval_file.read_bytes(), cmc_file.read_bytes()) == before

    def test_report_fields(self, tmp_path):
        self._pipeline(tmp_path)
        doc = json.loads((tmp_path / "summary_triplet_s1to2.json").read_text())
        assert set(doc) == {"stage", "map", "rank1", "num_probes", "num_gallery"}
        assert doc["stage"] == "RP1->RP2"
        cmc_rows = (tmp_path / "cmc_triplet_s1to2.csv").read_text().splitlines()
        assert cmc_rows[0] == "rank,cmc"
        values = [float(r.split(",")[1]) for r in cmc_rows[1:]]
        assert values == sorted(values)  # non-decreasing mean curve

    def test_missing_checkpoint_exit_3_names_file(self, tmp_path, capsys):
        run("synth", tmp_path)
        run("train", tmp_path, dataset_args(tmp_path))
        (tmp_path / "head_triplet_s1to2_fold1.json").unlink()
        assert run("evaluate", tmp_path, dataset_args(tmp_path)) == 3
        assert "head_triplet_s1to2_fold1.json" in capsys.readouterr().err


class TestReport:
    def test_merges_mean_and_std(self, tmp_path, rng):
        # Hand-written fold reports; mean/std checked against a summation oracle.
        tmp_path.mkdir(exist_ok=True)
        maps = []
        for fold in range(4):
            value = float(rng.uniform(0.2, 0.9))
            maps.append(value)
            doc = {
                "stage": "RP1->RP2",
                "map": value,
                "per_query_ap": {},
                "cmc": [value, min(1.0, value + 0.1)],
                "num_probes": 3,
                "num_gallery": 9,
                "num_excluded": 0,
                "excluded_ids": [],
            }
            (tmp_path / f"eval_triplet_s1to2_fold{fold}.json").write_text(json.dumps(doc))
        assert main(["report", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        entry = report["triplet"]["RP1->RP2"]
        total = sum(maps)
        mean = total / 4
        var = sum((m - mean) ** 2 for m in maps) / 3
        assert entry["folds"] == 4
        assert entry["map_mean"] == pytest.approx(mean, abs=1e-12)
        assert entry["map_std"] == pytest.approx(var**0.5, abs=1e-12)
        assert (tmp_path / "fig_cmc_triplet_s1to2.png").exists()
        assert (tmp_path / "fig_map.png").exists()
        assert (tmp_path / "report.txt").exists()
        assert (tmp_path / "report.csv").exists()

    def test_identical_folds_zero_std(self, tmp_path):
        doc = {
            "stage": "RP2->RP3",
            "map": 0.5,
            "per_query_ap": {},
            "cmc": [0.5],
            "num_probes": 2,
            "num_gallery": 4,
            "num_excluded": 0,
            "excluded_ids": [],
        }
        for fold in range(10):
            (tmp_path / f"eval_quadruplet_s2to3_fold{fold}.json").write_text(json.dumps(doc))
        assert main(["report", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        entry = report["quadruplet"]["RP2->RP3"]
        assert entry["folds"] == 10
        assert entry["map_std"] == 0.0

    def test_rerun_byte_identical_including_figures(self, tmp_path):
        doc = {
            "stage": "RP1->RP2",
            "map": 0.75,
            "per_query_ap": {},
            "cmc": [0.7, 0.8],
            "num_probes": 2,
            "num_gallery": 4,
            "num_excluded": 0,
            "excluded_ids": [],
        }
        (tmp_path / "eval_triplet_s1to2_fold0.json").write_text(json.dumps(doc))
        main(["report", "--out", str(tmp_path)])
        snapshots = {
            name: (tmp_path / name).read_bytes()
            for name in ("report.json", "report.csv", "report.txt", "fig_map.png",
                         "fig_cmc_triplet_s1to2.png")
        }
        main(["report", "--out", str(tmp_path)])
        for name, data in snapshots.items():
            assert (tmp_path / name).read_bytes() == data, name

    def test_missing_inputs_exit_3(self, tmp_path):
        assert main(["report", "--out", str(tmp_path)]) == 3


class TestEndToEnd:
    def test_full_flow_with_jobs(self, tmp_path):
        run("synth", tmp_path)
        assert run("train", tmp_path, dataset_args(tmp_path) + ["--jobs", "2"]) == 0
        assert run("evaluate", tmp_path, dataset_args(tmp_path)) == 0
        assert run("report", tmp_path) == 0

    def test_jobs_do_not_change_outputs(self, tmp_path):
        run("synth", tmp_path / "a")
        run("synth", tmp_path / "b")
        run("train", tmp_path / "a", dataset_args(tmp_path / "a"))
        run("train", tmp_path / "b", dataset_args(tmp_path / "b") + ["--jobs", "3"])
        for fold in range(3):
            name = f"head_triplet_s2to3_fold{fold}.json"
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_console_module_entry(self, tmp_path):
        import subprocess
        import sys

        result = subprocess.run(
            [sys.executable, "-m", "gaitreid", "synth", "--out", str(tmp_path), "--seed", "1"]
            + FAST,
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        assert (tmp_path / "dataset.csv").exists()
