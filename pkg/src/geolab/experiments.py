"""Experiment harness: config parsing, dataset builders, training loops,
evaluation, sweeps, freeze and transfer studies, significance testing, and
report emission."""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import stats

from .baseline import RansacConfig, ransac_f
from .data import (
    RigidParams,
    SceneConfig,
    gen_stereo_scene,
    gen_texture_image,
    nested_subsets,
    render_point_splats,
    sample_rigid_params,
    select_inliers,
    warp_rigid,
)
from .diff import (
    AdamState,
    adam_step,
    add,
    huber_loss,
    mse_loss,
    scale,
    sed_loss,
    slice_cols,
    take,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateVariance,
    LengthMismatch,
    TaskMismatch,
)
from .geometry import (
    Affine2,
    CorrespondenceSet,
    adjust_f_for_transform,
    transform_correspondences,
)
from .metrics import LossWeights, algebraic_distance, angle_mae, l2_translation_error, sed
from .models import (
    INPUT_COMBOS,
    TOKEN_STRATEGIES,
    FreezeSpec,
    FusionConfig,
    GeoModel,
    load_model,
    save_model,
)

TASKS = ("rigid", "fmatrix")


# -- configuration -----------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Flat experiment configuration; parsed from `key: value` text."""

    task: str = "rigid"
    backbone: str = "tiny_conv"
    token_strategy: str = "spatial_conv"
    input_combo: str = "orig_trans"
    freeze_depth: int = 0
    lr: float = 1e-4
    batch: int = -1          # -1: task default (32 rigid, 8 fmatrix)
    epochs: int = -1         # -1: task default (100 rigid, 200 fmatrix)
    n_pairs: int = -1        # -1: task default (2000 rigid, 512 fmatrix)
    val_pairs: int = 128
    image_size: int = 32
    theta_max: float = 30.0
    shift_max: float = -1.0  # -1: proportional to image size (32 px at 224)
    noise_px: float = 0.0
    outlier_frac: float = 0.0
    n_points: int = 24
    sizes: tuple = ()
    replicates: int = 3
    depths: tuple = ()
    finetune_epochs: int = 40
    target_seed: int = 1000
    seed: int = 0
    dtype: str = "float32"
    alpha: float = -1.0      # -1: task default (10 rigid, 1 fmatrix)
    beta: float = 10.0
    delta: float = 1.0
    hyper_grid: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.token_strategy not in TOKEN_STRATEGIES:
            raise ConfigError(f"unknown token_strategy {self.token_strategy!r}")
        if self.input_combo not in INPUT_COMBOS:
            raise ConfigError(f"unknown input_combo {self.input_combo!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        rigid = self.task == "rigid"
        if self.batch < 0:
            self.batch = 32 if rigid else 8
        if self.epochs < 0:
            self.epochs = 100 if rigid else 200
        if self.n_pairs < 0:
            self.n_pairs = 2000 if rigid else 512
        if self.shift_max < 0:
            self.shift_max = self.image_size * 32.0 / 224.0
        if self.alpha < 0:
            self.alpha = 10.0 if rigid else 1.0
        if self.batch < 1 or self.n_pairs < 1 or self.epochs < 0:
            raise ConfigError("batch and n_pairs must be >= 1, epochs >= 0")
        if self.image_size % 8 or self.image_size < 16:
            raise ConfigError(f"image_size must be a multiple of 8 and >= 16, "
                              f"got {self.image_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")

    @property
    def weights(self) -> LossWeights:
        if self.task == "rigid":
            return LossWeights(alpha_rigid=self.alpha, delta_huber=self.delta)
        return LossWeights(alpha_f=self.alpha, beta_f=self.beta, delta_huber=self.delta)

    def fusion(self) -> FusionConfig:
        return FusionConfig(self.token_strategy, self.input_combo)


_INT_TUPLE_KEYS = ("sizes", "depths")


def parse_config(text: str) -> ExperimentConfig:
    """Parse `key: value` lines ('#' starts a comment); unknown keys and
    malformed values are rejected."""
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    kwargs = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#")[0].strip()
        if not line:
            continue
        key, sep, val = line.partition(":")
        key, val = key.strip(), val.strip()
        if not sep:
            raise ConfigError(f"line {ln}: expected 'key: value', got {raw!r}")
        if key not in known:
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        if key in kwargs:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        if not val and key not in _INT_TUPLE_KEYS:
            raise ConfigError(f"line {ln}: missing value for {key!r}")
        try:
            if key in _INT_TUPLE_KEYS:
                kwargs[key] = tuple(int(x) for x in val.split(",")) if val else ()
            else:
                typ = type(getattr(ExperimentConfig(), key))
                kwargs[key] = typ(val)
        except ValueError as exc:
            raise ConfigError(f"line {ln}: bad value for {key!r}: {exc}") from exc
    return ExperimentConfig(**kwargs)


def config_text(cfg: ExperimentConfig) -> str:
    """Canonical text form (sorted keys, repr values) used for hashing."""
    lines = []
    for f in sorted(fields(cfg), key=lambda f: f.name):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name}: {v}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(config_text(cfg).encode()).hexdigest()


# -- datasets ----------------------------------------------------------------

@dataclass
class Dataset:
    task: str
    imgs_a: np.ndarray  # (N, 1, S, S)
    imgs_b: np.ndarray
    labels: np.ndarray  # (N, 3) normalized rigid or (N, 9) row-major F
    corrs: list = field(default_factory=list)  # per-pair inlier sets (F task)

    @property
    def n(self) -> int:
        return self.imgs_a.shape[0]


def _pair_rng(seed, domain, index):
    return np.random.default_rng([seed, domain, index])


def _canonical_f_sign(m: np.ndarray) -> np.ndarray:
    """Fix the overall sign: the largest-magnitude entry is positive."""
    flat = m.ravel()
    return m if flat[np.argmax(np.abs(flat))] >= 0 else -m


def build_dataset(cfg: ExperimentConfig, n: int, seed: int, domain: int = 0) -> Dataset:
    """Deterministic synthetic dataset; sample i depends only on
    (seed, domain, i)."""
    if n < 1:
        raise DataError(f"dataset size must be >= 1, got {n}")
    S = cfg.image_size
    imgs_a = np.empty((n, 1, S, S))
    imgs_b = np.empty((n, 1, S, S))
    if cfg.task == "rigid":
        labels = np.empty((n, 3))
        for i in range(n):
            rng = _pair_rng(seed, domain, i)
            img = gen_texture_image(int(rng.integers(2**63)), S)
            params = sample_rigid_params(rng, cfg.theta_max, cfg.shift_max)
            imgs_a[i] = img
            imgs_b[i] = warp_rigid(img, params)
            labels[i] = params.normalized
        return Dataset("rigid", imgs_a, imgs_b, labels)

    labels = np.empty((n, 9))
    corrs = []
    scfg = SceneConfig(n_points=cfg.n_points, noise_px=cfg.noise_px,
                       outlier_frac=cfg.outlier_frac)
    w, h = scfg.image_size
    desk = Affine2(np.diag([(S - 1) / (w - 1), (S - 1) / (h - 1)]), [0.0, 0.0])
    for i in range(n):
        rng = _pair_rng(seed, domain, i)
        scene = gen_stereo_scene(rng, scfg)
        c = transform_correspondences(scene.corrs, desk, desk)
        F = adjust_f_for_transform(scene.F, desk, desk)
        F_m = _canonical_f_sign(F.m)
        inliers = select_inliers(F_m, c, tau=0.01)
        intensity = rng.uniform(0.3, 1.0, size=c.n)
        imgs_a[i] = render_point_splats(c.p, intensity, S)
        imgs_b[i] = render_point_splats(c.q, intensity, S)
        labels[i] = F_m.ravel()
        corrs.append(inliers)
    return Dataset("fmatrix", imgs_a, imgs_b, labels, corrs)


# -- loss graphs -------------------------------------------------------------

def _rigid_loss_graph(pred, y, w: LossWeights):
    th_p, sh_p = slice_cols(pred, 0, 1), slice_cols(pred, 1, 3)
    ang = add(mse_loss(th_p, y[:, :1]), huber_loss(th_p, y[:, :1], w.delta_huber))
    sh = add(mse_loss(sh_p, y[:, 1:]), huber_loss(sh_p, y[:, 1:], w.delta_huber))
    return add(ang, scale(sh, w.alpha_rigid))


def _f_loss_graph(pred, y, corrs, w: LossWeights):
    # align each target's sign with the prediction; the overall sign of F is
    # not observable, so the entry losses compare against the nearer of +-F
    t = y.copy()
    dots = np.einsum("bij,bij->b", pred.data.astype(np.float64), t.reshape(-1, 3, 3))
    t[dots < 0] *= -1.0
    t = t.reshape(pred.shape)
    loss = add(mse_loss(pred, t), scale(huber_loss(pred, t, w.delta_huber), w.alpha_f))
    sed_mean = None
    for i, c in enumerate(corrs):
        term = sed_loss(take(pred, i), c)
        sed_mean = term if sed_mean is None else add(sed_mean, term)
    return add(loss, scale(sed_mean, w.beta_f / len(corrs)))


# -- reports -----------------------------------------------------------------

@dataclass
class RunReport:
    rows: list
    summary: dict
    config_hash: str
    wall_time: float


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _columns(rows):
    cols = []
    for row in rows:
        for k in row:
            if k not in cols:
                cols.append(k)
    return cols


def write_report(path, report: RunReport, fmt: str = "csv"):
    """Emit rows in a stable column order; floats use repr so parsing the
    file back recovers every value exactly. Re-emission is byte-identical."""
    cols = _columns(report.rows)
    with open(path, "w") as fh:
        if fmt == "csv":
            fh.write(f"# config_hash {report.config_hash}\n")
            fh.write(",".join(cols) + "\n")
            for row in report.rows:
                fh.write(",".join(_fmt(row[k]) if k in row else "" for k in cols) + "\n")
        elif fmt == "jsonl":
            fh.write(json.dumps({"config_hash": report.config_hash}) + "\n")
            for row in report.rows:
                out = {k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                       for k, v in row.items()}
                fh.write(json.dumps(out) + "\n")
        else:
            raise ConfigError(f"unknown report format {fmt!r}")


def _parse_cell(text):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_report(path, fmt: str = "csv"):
    """Parse a report file back to (rows, config_hash)."""
    rows = []
    with open(path) as fh:
        if fmt == "csv":
            header = fh.readline().strip()
            chash = header.split()[-1] if header.startswith("# config_hash") else None
            cols = fh.readline().strip().split(",")
            for line in fh:
                cells = line.rstrip("\n").split(",")
                rows.append({k: _parse_cell(v) for k, v in zip(cols, cells)
                             if v != ""})
        elif fmt == "jsonl":
            chash = json.loads(fh.readline())["config_hash"]
            for line in fh:
                row = json.loads(line)
                rows.append({k: (float(v) if isinstance(v, str) and _is_floaty(v) else v)
                             for k, v in row.items()})
        else:
            raise ConfigError(f"unknown report format {fmt!r}")
    return rows, chash


def _is_floaty(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


# -- evaluation --------------------------------------------------------------

def predict(model, ds: Dataset, batch: int = 64) -> np.ndarray:
    out = []
    for lo in range(0, ds.n, batch):
        pred = model.forward_images(ds.imgs_a[lo:lo + batch],
                                    ds.imgs_b[lo:lo + batch], training=False)
        out.append(pred.data.astype(np.float64))
    return np.concatenate(out, axis=0)


def metrics_from_predictions(ds: Dataset, preds: np.ndarray,
                             theta_max: float = 30.0, shift_max: float = 32.0) -> dict:
    if ds.task == "rigid":
        return {
            "angle_mae": angle_mae(preds[:, 0] * theta_max, ds.labels[:, 0] * theta_max),
            "l2": l2_translation_error(preds[:, 1:] * shift_max,
                                       ds.labels[:, 1:] * shift_max),
        }
    seds, ads = [], []
    for i, c in enumerate(ds.corrs):
        F = preds[i].reshape(3, 3)
        seds.append(sed(F, c) / c.n)
        ads.append(algebraic_distance(F, c) / c.n)
    return {"mean_sed": float(np.mean(seds)), "mean_ad": float(np.mean(ads))}


def evaluate(model, ds: Dataset, cfg: ExperimentConfig = None) -> dict:
    """Deterministic evaluation-mode metrics of a model on a dataset."""
    if model.task != ds.task:
        raise TaskMismatch(f"model task {model.task!r} vs dataset {ds.task!r}")
    theta_max = cfg.theta_max if cfg else 30.0
    shift_max = cfg.shift_max if cfg else 32.0
    preds = (model.predict(ds) if hasattr(model, "predict") else predict(model, ds))
    return metrics_from_predictions(ds, preds, theta_max, shift_max)


def _primary_metric(task: str) -> str:
    return "l2" if task == "rigid" else "mean_sed"


# -- training ----------------------------------------------------------------

def _param_checksums(params):
    return {p.name: hashlib.sha256(np.ascontiguousarray(p.data).tobytes()).hexdigest()
            for p in params}


def _train_loop(cfg: ExperimentConfig, model: GeoModel, train_ds: Dataset,
                indices, val_ds: Dataset, epochs: int, seed_tag: int = 2):
    """Minibatch Adam over the index subset; returns (history rows,
    best-epoch state bytes, best val metrics)."""
    indices = np.asarray(indices, dtype=np.int64)
    frozen_before = _param_checksums([p for p in model.parameters() if p.frozen])
    state = AdamState(lr=cfg.lr)
    w = cfg.weights
    history = []
    best = None  # (metric, epoch, params snapshot)
    key = _primary_metric(cfg.task)

    for epoch in range(epochs):
        order = _pair_rng(cfg.seed, seed_tag, epoch).permutation(indices)
        total, nb = 0.0, 0
        for lo in range(0, order.size, cfg.batch):
            idx = order[lo:lo + cfg.batch]
            pred = model.forward_images(train_ds.imgs_a[idx], train_ds.imgs_b[idx],
                                        training=True)
            if cfg.task == "rigid":
                loss = _rigid_loss_graph(pred, train_ds.labels[idx].astype(pred.data.dtype), w)
            else:
                loss = _f_loss_graph(pred, train_ds.labels[idx].astype(pred.data.dtype),
                                     [train_ds.corrs[i] for i in idx], w)
            loss.backward()
            adam_step(model.trainable_parameters(), state)
            total += float(loss.data)
            nb += 1
        val = evaluate(model, val_ds, cfg)
        row = {"epoch": epoch, "train_loss": total / max(nb, 1), **val}
        history.append(row)
        if best is None or val[key] < best[0]:
            best = (val[key], epoch, [p.data.copy() for p in model.parameters()])

    frozen_after = _param_checksums([p for p in model.parameters() if p.frozen])
    if frozen_before != frozen_after:
        raise RuntimeError("freeze contract violated: frozen parameters changed")
    return history, best


def train(cfg: ExperimentConfig, out_dir=None):
    """Train a model per the config; returns (model, RunReport).

    With an output directory, writes `last.egwt` and `best.egwt` (lowest
    validation L2 for the rigid task, lowest mean SED for the F task)."""
    t0 = time.perf_counter()
    train_ds = build_dataset(cfg, cfg.n_pairs, cfg.seed, domain=0)
    val_ds = build_dataset(cfg, cfg.val_pairs, cfg.seed, domain=1)

    if cfg.hyper_grid:
        combos = [(lr, b) for lr in (6e-5, 1e-4) for b in (32, 4)]
    else:
        combos = [(cfg.lr, cfg.batch)]

    key = _primary_metric(cfg.task)
    chosen = None  # (val metric, model, history, best, lr, batch)
    for lr, batch in combos:
        sub = replace(cfg, lr=lr, batch=batch) if cfg.hyper_grid else cfg
        model = GeoModel(cfg.task, cfg.backbone, cfg.fusion(), seed=cfg.seed,
                         dtype=np.dtype(cfg.dtype), feature_side=cfg.image_size // 8)
        model.apply_freeze(FreezeSpec(cfg.freeze_depth))
        history, best = _train_loop(sub, model, train_ds, np.arange(train_ds.n),
                                    val_ds, sub.epochs)
        final = evaluate(model, val_ds, cfg)
        if chosen is None or final[key] < chosen[0][key]:
            chosen = (final, model, history, best, lr, batch)

    final, model, history, best, lr, batch = chosen
    summary = {"task": cfg.task, "lr": lr, "batch": batch, "epochs": cfg.epochs,
               **{f"final_{k}": v for k, v in final.items()}}
    if best is not None:
        summary["best_epoch"] = best[1]
        summary[f"best_{key}"] = best[0]
    if out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        save_model(os.path.join(out_dir, "last.egwt"), model)
        if best is not None:
            last = [p.data.copy() for p in model.parameters()]
            for p, data in zip(model.parameters(), best[2]):
                p.tensor.data = data
            save_model(os.path.join(out_dir, "best.egwt"), model)
            for p, data in zip(model.parameters(), last):
                p.tensor.data = data
    report = RunReport(history, summary, config_hash(cfg), time.perf_counter() - t0)
    return model, report


# -- protocol studies --------------------------------------------------------

def _aggregate(rows, group_key, metric_keys):
    """Mean/std per group; std only when a group has >= 2 rows."""
    out = []
    for gval in sorted({row[group_key] for row in rows}, reverse=True):
        grp = [row for row in rows if row[group_key] == gval]
        agg = {group_key: gval, "replicates": len(grp)}
        for mk in metric_keys:
            vals = np.array([row[mk] for row in grp])
            agg[f"mean_{mk}"] = float(vals.mean())
            if len(grp) >= 2:
                agg[f"std_{mk}"] = float(vals.std(ddof=1))
        out.append(agg)
    return out


def sweep(cfg: ExperimentConfig):
    """Train at every (dataset size, replicate) over nested subsets and
    aggregate mean/std per size."""
    if not cfg.sizes:
        raise ConfigError("sweep requires a non-empty `sizes` list")
    t0 = time.perf_counter()
    train_ds = build_dataset(cfg, cfg.n_pairs, cfg.seed, domain=0)
    val_ds = build_dataset(cfg, cfg.val_pairs, cfg.seed, domain=1)
    chains = nested_subsets(cfg.n_pairs, cfg.sizes, seed=cfg.seed,
                            replicates=cfg.replicates)

    # verify nesting and replicate disjointness before any training
    tops = [set(chain[0]) for chain in chains]
    for i, a in enumerate(tops):
        for b in tops[i + 1:]:
            if a & b:
                raise RuntimeError("replicate subsets are not disjoint")
    for chain in chains:
        for big, small in zip(chain, chain[1:]):
            if not set(small) <= set(big):
                raise RuntimeError("subset nesting violated")

    rows = []
    for r, chain in enumerate(chains):
        for size, idx in zip(cfg.sizes, chain):
            model = GeoModel(cfg.task, cfg.backbone, cfg.fusion(), seed=cfg.seed + r,
                             dtype=np.dtype(cfg.dtype), feature_side=cfg.image_size // 8)
            model.apply_freeze(FreezeSpec(cfg.freeze_depth))
            _train_loop(cfg, model, train_ds, idx, val_ds, cfg.epochs,
                        seed_tag=100 + r)
            rows.append({"size": size, "replicate": r,
                         **evaluate(model, val_ds, cfg)})

    metric_keys = [k for k in rows[0] if k not in ("size", "replicate")]
    table = rows + _aggregate(rows, "size", metric_keys)
    return RunReport(table, {"sizes": list(cfg.sizes), "replicates": cfg.replicates},
                     config_hash(cfg), time.perf_counter() - t0)


def freeze_study(cfg: ExperimentConfig):
    """One training run per freeze depth, down to a fully frozen encoder."""
    depths = cfg.depths
    if not depths:
        raise ConfigError("freeze_study requires a non-empty `depths` list")
    t0 = time.perf_counter()
    rows = []
    for depth in depths:
        run_cfg = replace(cfg, freeze_depth=int(depth))
        model, report = train(run_cfg)
        n_trainable = sum(p.data.size for p in model.trainable_parameters())
        rows.append({"freeze_depth": int(depth), "trainable_params": n_trainable,
                     **{k: v for k, v in report.summary.items()
                        if k.startswith("final_")}})
    return RunReport(rows, {"depths": list(depths)}, config_hash(cfg),
                     time.perf_counter() - t0)


def cross_domain(cfg: ExperimentConfig, source_ckpt=None):
    """Zero-shot and 40-epoch head-only fine-tune transfer onto a target
    domain generated with `target_seed`.

    Zero-shot never mutates the checkpoint (checksum-compared); the
    fine-tune freezes the full encoder and updates only the head."""
    import os
    import tempfile

    t0 = time.perf_counter()
    if source_ckpt is None:
        with tempfile.TemporaryDirectory() as tmp:
            model, _ = train(cfg, out_dir=tmp)
            blob = open(os.path.join(tmp, "last.egwt"), "rb").read()
    else:
        blob = open(source_ckpt, "rb").read()

    with tempfile.NamedTemporaryFile(suffix=".egwt", delete=False) as fh:
        fh.write(blob)
        ckpt_path = fh.name
    try:
        target_cfg = replace(cfg, seed=cfg.target_seed)
        target_val = build_dataset(target_cfg, cfg.val_pairs, target_cfg.seed, domain=1)

        model = load_model(ckpt_path)
        zero_shot = evaluate(model, target_val, cfg)
        if hashlib.sha256(open(ckpt_path, "rb").read()).hexdigest() != \
                hashlib.sha256(blob).hexdigest():
            raise RuntimeError("zero-shot evaluation mutated the checkpoint")

        # head-only fine-tune on the smallest target subset
        ft_size = min(cfg.sizes) if cfg.sizes else min(32, cfg.n_pairs)
        target_train = build_dataset(target_cfg, ft_size, target_cfg.seed, domain=0)
        ft_model = load_model(ckpt_path)
        ft_model.apply_freeze(FreezeSpec(len(ft_model.encoder_stages())))
        encoder_before = _param_checksums(
            [p for p in ft_model.parameters() if p.frozen])
        _train_loop(replace(cfg, seed=cfg.target_seed), ft_model, target_train,
                    np.arange(target_train.n), target_val, cfg.finetune_epochs,
                    seed_tag=7)
        if _param_checksums([p for p in ft_model.parameters() if p.frozen]) != \
                encoder_before:
            raise RuntimeError("fine-tune touched encoder parameters")
        fine_tuned = evaluate(ft_model, target_val, cfg)
    finally:
        os.unlink(ckpt_path)

    rows = [{"phase": "zero_shot", **zero_shot},
            {"phase": "fine_tuned", "epochs": cfg.finetune_epochs, **fine_tuned}]
    return RunReport(rows, {"target_seed": cfg.target_seed},
                     config_hash(cfg), time.perf_counter() - t0)


def paired_t_test(a, b):
    """Two-sided paired t-test; returns (t statistic, p-value)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError(f"need at least 2 paired samples, got {a.size}")
    d = a - b
    sd = d.std(ddof=1)
    if sd < 1e-300 or not np.isfinite(sd):
        raise DegenerateVariance("difference variance is zero")
    n = d.size
    t = d.mean() / (sd / np.sqrt(n))
    p = 2.0 * stats.t.sf(abs(t), df=n - 1)
    return float(t), float(p)


def ablation_grid(cfg: ExperimentConfig):
    """All 16 (token strategy x input combo) cells at the configured scale.

    Cells whose requirements the feature source cannot satisfy (CLS tokens
    for cls_only with stand-in backbones) are reported as skipped."""
    from .errors import ConfigUnsatisfiable

    t0 = time.perf_counter()
    rows = []
    for strategy in TOKEN_STRATEGIES:
        for combo in INPUT_COMBOS:
            cell = replace(cfg, token_strategy=strategy, input_combo=combo)
            try:
                _, report = train(cell)
                rows.append({"token_strategy": strategy, "input_combo": combo,
                             "status": "ok",
                             **{k: v for k, v in report.summary.items()
                                if k.startswith("final_")}})
            except ConfigUnsatisfiable as exc:
                rows.append({"token_strategy": strategy, "input_combo": combo,
                             "status": "skipped", "reason": str(exc)})
    return RunReport(rows, {"cells": len(rows)}, config_hash(cfg),
                     time.perf_counter() - t0)


def run_baseline(corrs: CorrespondenceSet, iterations: int = 2000,
                 tau: float = 0.01, seed: int = 0):
    """Eight-point + RANSAC on a correspondence set; returns a report row."""
    F, mask = ransac_f(corrs, RansacConfig(iterations=iterations, tau=tau, seed=seed))
    kept = CorrespondenceSet(corrs.p[mask], corrs.q[mask])
    return {"n": corrs.n, "inliers": int(mask.sum()),
            "mean_sed": sed(F.m, kept) / kept.n,
            "mean_ad": algebraic_distance(F.m, kept) / kept.n,
            "f": " ".join(repr(float(x)) for x in F.m.ravel())}
