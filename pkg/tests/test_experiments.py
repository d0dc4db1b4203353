import dataclasses

import numpy as np
import pytest

from geolab.errors import (
    ConfigError,
    DegenerateVariance,
    LengthMismatch,
    TaskMismatch,
)
from geolab.experiments import (
    ExperimentConfig,
    RunReport,
    ablation_grid,
    build_dataset,
    config_hash,
    config_text,
    cross_domain,
    evaluate,
    freeze_study,
    metrics_from_predictions,
    paired_t_test,
    parse_config,
    predict,
    read_report,
    run_baseline,
    sweep,
    train,
    write_report,
)
from geolab.metrics import algebraic_distance, angle_mae, l2_translation_error, sed
from geolab.models import GeoModel


TINY_RIGID = dict(task="rigid", n_pairs=48, val_pairs=16, epochs=1, batch=16)
TINY_F = dict(task="fmatrix", n_pairs=12, val_pairs=6, epochs=1, batch=4, n_points=12)


class TestConfig:
    def test_parse_basic(self):
        cfg = parse_config("task: fmatrix\nlr: 0.0005\nsizes: 64,16\n")
        assert cfg.task == "fmatrix"
        assert cfg.lr == 5e-4
        assert cfg.sizes == (64, 16)

    def test_task_defaults(self):
        rigid = parse_config("task: rigid\n")
        f = parse_config("task: fmatrix\n")
        assert (rigid.batch, rigid.epochs, rigid.n_pairs) == (32, 100, 2000)
        assert (f.batch, f.epochs, f.n_pairs) == (8, 200, 512)
        assert rigid.alpha == 10.0 and f.alpha == 1.0

    def test_proportional_shift_default(self):
        cfg = parse_config("task: rigid\nimage_size: 32\n")
        assert abs(cfg.shift_max - 32 * 32 / 224) < 1e-12

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("task: rigid\nlearningrate: 0.1\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("task: rigid\nlr: fast\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("task: rigid\nlr: 0.1\nlr: 0.2\n")

    def test_invalid_task(self):
        with pytest.raises(ConfigError):
            parse_config("task: homography\n")

    def test_comments_ignored(self):
        cfg = parse_config("# experiment\ntask: rigid # inline\n")
        assert cfg.task == "rigid"

    def test_hash_stable_and_sensitive(self):
        a = ExperimentConfig(task="rigid")
        b = ExperimentConfig(task="rigid")
        c = ExperimentConfig(task="rigid", lr=2e-4)
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(c)

    def test_canonical_text_parses_back(self):
        cfg = ExperimentConfig(task="fmatrix", sizes=(64, 16), lr=3e-4)
        again = parse_config(config_text(cfg))
        assert again == cfg


class _GroundTruthStub:
    """Predictor that returns the dataset's own labels."""

    def __init__(self, task):
        self.task = task

    def predict(self, ds):
        return ds.labels.reshape(-1, 3) if self.task == "rigid" \
            else ds.labels.reshape(-1, 3, 3)


class TestEvaluate:
    def test_ground_truth_stub_zero_metrics(self):
        cfg = ExperimentConfig(**TINY_RIGID)
        ds = build_dataset(cfg, 8, seed=0)
        m = evaluate(_GroundTruthStub("rigid"), ds, cfg)
        assert m["angle_mae"] == 0.0 and m["l2"] == 0.0

    def test_ground_truth_stub_f_task(self):
        cfg = ExperimentConfig(**TINY_F)
        ds = build_dataset(cfg, 4, seed=0)
        m = evaluate(_GroundTruthStub("fmatrix"), ds, cfg)
        assert m["mean_sed"] < 1e-9 and m["mean_ad"] < 1e-9

    def test_repeated_evaluation_identical(self):
        cfg = ExperimentConfig(**TINY_RIGID)
        ds = build_dataset(cfg, 8, seed=1)
        model = GeoModel("rigid", "random_patch", seed=0)
        assert evaluate(model, ds, cfg) == evaluate(model, ds, cfg)

    def test_task_mismatch(self):
        cfg = ExperimentConfig(**TINY_RIGID)
        ds = build_dataset(cfg, 8, seed=0)
        with pytest.raises(TaskMismatch):
            evaluate(GeoModel("fmatrix", "random_patch"), ds, cfg)

    def test_metrics_match_direct_calls(self):
        cfg = ExperimentConfig(**TINY_RIGID)
        ds = build_dataset(cfg, 8, seed=2)
        model = GeoModel("rigid", "random_patch", seed=3)
        preds = predict(model, ds)
        m = evaluate(model, ds, cfg)
        assert m["angle_mae"] == angle_mae(preds[:, 0] * cfg.theta_max,
                                           ds.labels[:, 0] * cfg.theta_max)
        assert m["l2"] == l2_translation_error(preds[:, 1:] * cfg.shift_max,
                                               ds.labels[:, 1:] * cfg.shift_max)

    def test_f_metrics_match_direct_calls(self):
        cfg = ExperimentConfig(**TINY_F)
        ds = build_dataset(cfg, 4, seed=2)
        model = GeoModel("fmatrix", "random_patch", seed=3)
        preds = predict(model, ds)
        m = evaluate(model, ds, cfg)
        seds = [sed(preds[i].reshape(3, 3), c) / c.n for i, c in enumerate(ds.corrs)]
        ads = [algebraic_distance(preds[i].reshape(3, 3), c) / c.n
               for i, c in enumerate(ds.corrs)]
        assert m["mean_sed"] == float(np.mean(seds))
        assert m["mean_ad"] == float(np.mean(ads))


class TestTrain:
    def test_zero_epochs_checkpoint_equals_init(self, tmp_path):
        cfg = ExperimentConfig(**{**TINY_RIGID, "epochs": 0})
        model, _ = train(cfg, out_dir=tmp_path)
        init = GeoModel(cfg.task, cfg.backbone, cfg.fusion(), seed=cfg.seed,
                        dtype=np.dtype(cfg.dtype),
                        feature_side=cfg.image_size // 8)
        for p, q in zip(model.parameters(), init.parameters()):
            np.testing.assert_array_equal(p.data, q.data)

    def test_training_reduces_loss(self):
        cfg = ExperimentConfig(**{**TINY_RIGID, "epochs": 4, "n_pairs": 96})
        _, report = train(cfg)
        losses = [row["train_loss"] for row in report.rows]
        assert losses[-1] < losses[0]

    def test_deterministic_reports(self):
        cfg = ExperimentConfig(**TINY_RIGID)
        _, a = train(cfg)
        _, b = train(cfg)
        assert a.rows == b.rows
        assert a.summary == b.summary

    def test_frozen_encoder_bytes_identical(self):
        cfg = ExperimentConfig(**{**TINY_RIGID, "freeze_depth": 5})
        model, _ = train(cfg)
        init = GeoModel(cfg.task, cfg.backbone, cfg.fusion(), seed=cfg.seed,
                        dtype=np.dtype(cfg.dtype),
                        feature_side=cfg.image_size // 8)
        names = {p.name for s in init.encoder_stages() for p in s}
        init_by_name = {p.name: p.data for p in init.parameters()}
        for p in model.parameters():
            if p.name in names:
                assert np.array_equal(p.data, init_by_name[p.name])

    def test_summary_fields(self):
        cfg = ExperimentConfig(**TINY_RIGID)
        _, report = train(cfg)
        assert report.summary["task"] == "rigid"
        assert "final_l2" in report.summary and "best_epoch" in report.summary
        assert report.config_hash == config_hash(cfg)
        assert report.wall_time > 0


class TestSweep:
    def make_report(self):
        cfg = ExperimentConfig(**{**TINY_RIGID, "n_pairs": 60, "sizes": (16, 8),
                                  "replicates": 3})
        return cfg, sweep(cfg)

    def test_structure(self):
        cfg, report = self.make_report()
        cells = [r for r in report.rows if "replicate" in r]
        aggs = [r for r in report.rows if "replicate" not in r]
        assert len(cells) == 6  # 2 sizes x 3 replicates
        assert len(aggs) == 2
        assert {r["size"] for r in aggs} == {16, 8}

    def test_aggregate_matches_recompute(self):
        cfg, report = self.make_report()
        cells = [r for r in report.rows if "replicate" in r]
        for agg in (r for r in report.rows if "replicate" not in r):
            vals = np.array([c["l2"] for c in cells if c["size"] == agg["size"]])
            assert agg["mean_l2"] == float(vals.mean())
            assert abs(agg["std_l2"] - float(vals.std(ddof=1))) < 1e-15

    def test_requires_sizes(self):
        with pytest.raises(ConfigError):
            sweep(ExperimentConfig(**TINY_RIGID))


class TestFreezeStudy:
    def test_depths_and_param_counts(self):
        cfg = ExperimentConfig(**{**TINY_RIGID, "depths": (0, 2, 5)})
        report = freeze_study(cfg)
        counts = [r["trainable_params"] for r in report.rows]
        assert [r["freeze_depth"] for r in report.rows] == [0, 2, 5]
        assert counts[0] > counts[1] > counts[2]

    def test_depth_zero_matches_plain_run(self):
        cfg = ExperimentConfig(**{**TINY_RIGID, "depths": (0,)})
        report = freeze_study(cfg)
        _, plain = train(ExperimentConfig(**TINY_RIGID))
        assert report.rows[0]["final_l2"] == plain.summary["final_l2"]

    def test_requires_depths(self):
        with pytest.raises(ConfigError):
            freeze_study(ExperimentConfig(**TINY_RIGID))


class TestCrossDomain:
    def test_phases_and_source_equals_target(self):
        cfg = ExperimentConfig(**{**TINY_RIGID, "target_seed": 0, "seed": 0,
                                  "finetune_epochs": 1})
        report = cross_domain(cfg)
        phases = [r["phase"] for r in report.rows]
        assert phases == ["zero_shot", "fine_tuned"]
        assert report.rows[1]["epochs"] == 1

        # source == target: zero-shot equals a plain evaluate of the trained model
        model, _ = train(cfg)
        val = build_dataset(cfg, cfg.val_pairs, cfg.seed, domain=1)
        direct = evaluate(model, val, cfg)
        assert abs(report.rows[0]["l2"] - direct["l2"]) < 1e-9


class TestPairedTTest:
    def test_identical_samples_degenerate(self):
        with pytest.raises(DegenerateVariance):
            paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])

    def test_constant_shift_significant(self):
        rng = np.random.default_rng(0)
        b = rng.normal(size=8)
        a = b + 1.0 + rng.normal(size=8) * 1e-6
        t, p = paired_t_test(a, b)
        assert t > 1e4 and p < 1e-12

    def test_matches_extended_precision_oracle(self):
        mp = pytest.importorskip("mpmath")
        a = [2.1, 1.9, 2.0]
        b = [1.0, 1.2, 0.8]
        t, p = paired_t_test(a, b)
        d = [mp.mpf(x) - mp.mpf(y) for x, y in zip(a, b)]
        n = len(d)
        mean = sum(d) / n
        var = sum((x - mean) ** 2 for x in d) / (n - 1)
        t_ref = mean / mp.sqrt(var / n)
        x = mp.mpf(n - 1) / ((n - 1) + t_ref ** 2)
        p_ref = mp.betainc(mp.mpf(n - 1) / 2, mp.mpf(1) / 2, 0, x, regularized=True)
        assert abs(t - float(t_ref)) < 1e-12
        assert abs(p - float(p_ref)) < 1e-12

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            paired_t_test([1.0, 2.0], [1.0])

    def test_too_short(self):
        with pytest.raises(ValueError):
            paired_t_test([1.0], [2.0])


@pytest.fixture(scope="module")
def report():
    cfg = ExperimentConfig(**{**TINY_RIGID, "epochs": 0, "n_pairs": 8,
                              "val_pairs": 8})
    return cfg, ablation_grid(cfg)


class TestAblationGrid:

    def test_sixteen_cells(self, report):
        _, rep = report
        assert len(rep.rows) == 16

    def test_cls_cells_skipped(self, report):
        _, rep = report
        skipped = [r for r in rep.rows if r["status"] == "skipped"]
        assert len(skipped) == 4
        assert all(r["token_strategy"] == "cls_only" for r in skipped)

    def test_appendix_ordering(self, report):
        _, rep = report
        strategies = [r["token_strategy"] for r in rep.rows]
        assert strategies == sorted(strategies, key=["spatial_conv", "spatial_flat",
                                                     "gap", "cls_only"].index)

    def test_cell_matches_standalone_run(self, report):
        cfg, rep = report
        cell = next(r for r in rep.rows
                    if r["token_strategy"] == "gap" and r["input_combo"] == "trans_only")
        _, standalone = train(dataclasses.replace(cfg, token_strategy="gap",
                                                  input_combo="trans_only"))
        assert cell["final_l2"] == standalone.summary["final_l2"]


class TestReportFiles:
    def make_report(self):
        rows = [{"epoch": 0, "l2": 1.25, "note": "a"},
                {"epoch": 1, "l2": 0.7531}]
        return RunReport(rows, {}, "abc123", 1.0)

    def test_round_trip_csv(self, tmp_path):
        rep = self.make_report()
        path = tmp_path / "r.csv"
        write_report(path, rep, "csv")
        rows, chash = read_report(path, "csv")
        assert chash == "abc123"
        assert rows == rep.rows

    def test_round_trip_jsonl(self, tmp_path):
        rep = self.make_report()
        path = tmp_path / "r.jsonl"
        write_report(path, rep, "jsonl")
        rows, chash = read_report(path, "jsonl")
        assert chash == "abc123"
        assert rows == rep.rows

    def test_formats_agree(self, tmp_path):
        rep = self.make_report()
        write_report(tmp_path / "r.csv", rep, "csv")
        write_report(tmp_path / "r.jsonl", rep, "jsonl")
        assert read_report(tmp_path / "r.csv", "csv")[0] == \
            read_report(tmp_path / "r.jsonl", "jsonl")[0]

    def test_reemission_byte_identical(self, tmp_path):
        rep = self.make_report()
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_report(a, rep, "csv")
        write_report(b, rep, "csv")
        assert a.read_bytes() == b.read_bytes()

    def test_empty_rows_header_only(self, tmp_path):
        path = tmp_path / "e.csv"
        write_report(path, RunReport([], {}, "x", 0.0), "csv")
        lines = path.read_text().splitlines()
        assert lines == ["# config_hash x", ""]


class TestBaselineCommand:
    def test_run_baseline_row(self):
        cfg = ExperimentConfig(**TINY_F)
        ds = build_dataset(cfg, 1, seed=0)
        row = run_baseline(ds.corrs[0], iterations=100)
        assert row["inliers"] >= 8
        assert row["mean_sed"] < 1e-9
