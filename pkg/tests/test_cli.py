import subprocess
import sys

import numpy as np
import pytest

from geolab.cli import main
from geolab.data import write_correspondences
from geolab.experiments import ExperimentConfig, build_dataset, read_report
from geolab.geometry import CorrespondenceSet

TINY = "task: rigid\nn_pairs: 24\nval_pairs: 8\nepochs: 1\nbatch: 8\n"


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(TINY)
    return str(path)


class TestExitCodes:
    def test_train_success(self, config_file, tmp_path):
        out = tmp_path / "run"
        assert main(["train", "--config", config_file, "--out", str(out)]) == 0
        assert (out / "train.csv").exists()
        assert (out / "last.egwt").exists()
        assert (out / "best.egwt").exists()

    def test_unknown_key_is_config_error(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("task: rigid\nwat: 1\n")
        assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "none.cfg"),
                     "--out", str(tmp_path)]) == 2

    def test_corrupt_checkpoint_is_data_error(self, config_file, tmp_path):
        ckpt = tmp_path / "bad.egwt"
        ckpt.write_bytes(b"JUNKJUNKJUNK")
        assert main(["eval", "--config", config_file, "--out", str(tmp_path),
                     str(ckpt)]) == 3

    def test_all_outlier_baseline_is_numerical_failure(self, tmp_path):
        rng = np.random.default_rng(0)
        corrs = CorrespondenceSet(rng.uniform(0, 640, (20, 2)),
                                  rng.uniform(0, 640, (20, 2)))
        path = tmp_path / "corrs.txt"
        write_correspondences(path, corrs)
        assert main(["baseline", "--out", str(tmp_path), "--iterations", "100",
                     str(path)]) == 4


class TestCommands:
    def test_gen_rigid(self, config_file, tmp_path):
        out = tmp_path / "data"
        assert main(["gen-rigid", "--config", config_file, "--out", str(out)]) == 0
        assert (out / "images.npz").exists()
        assert (out / "labels.txt").exists()

    def test_gen_stereo(self, tmp_path):
        cfgp = tmp_path / "f.cfg"
        cfgp.write_text("task: fmatrix\nn_pairs: 3\nval_pairs: 2\nn_points: 12\n")
        out = tmp_path / "data"
        assert main(["gen-stereo", "--config", str(cfgp), "--out", str(out)]) == 0
        assert (out / "corrs_00000.txt").exists()

    def test_eval_round_trip(self, config_file, tmp_path):
        out = tmp_path / "run"
        main(["train", "--config", config_file, "--out", str(out)])
        assert main(["eval", "--config", config_file, "--out", str(out),
                     str(out / "last.egwt")]) == 0
        rows, _ = read_report(out / "eval.csv")
        assert "l2" in rows[0]

    def test_baseline_success(self, tmp_path):
        cfg = ExperimentConfig(task="fmatrix", n_pairs=1, val_pairs=1, n_points=16)
        ds = build_dataset(cfg, 1, seed=0)
        path = tmp_path / "corrs.txt"
        write_correspondences(path, ds.corrs[0])
        assert main(["baseline", "--out", str(tmp_path), "--iterations", "100",
                     str(path)]) == 0
        rows, _ = read_report(tmp_path / "baseline.csv")
        assert rows[0]["mean_sed"] < 1e-9

    def test_report_format_conversion(self, config_file, tmp_path):
        out = tmp_path / "run"
        main(["train", "--config", config_file, "--out", str(out)])
        assert main(["report", "--out", str(out), "--format", "jsonl",
                     str(out / "train.csv")]) == 0
        csv_rows, _ = read_report(out / "train.csv", "csv")
        jsonl_rows, _ = read_report(out / "report.jsonl", "jsonl")
        assert csv_rows == jsonl_rows

    def test_seed_override_changes_hash(self, config_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["train", "--config", config_file, "--out", str(a)])
        main(["train", "--config", config_file, "--seed", "9", "--out", str(b)])
        _, ha = read_report(a / "train.csv")
        _, hb = read_report(b / "train.csv")
        assert ha != hb

    def test_console_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "geolab.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "gen-rigid" in proc.stdout
