"""Network assemblies: stand-in backbones, the Siamese fusion encoder, and the
task heads (rigid 3-vector regression, rank-2 F-matrix regression)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .diff import (
    Parameter,
    Tensor,
    avgpool2x2,
    batchnorm,
    concat,
    conv3x3,
    depth_concat,
    flatten,
    frobenius_normalize_layer,
    linear,
    location_aware_max_pool,
    rank_constraint_layer,
    relu,
    reshape,
    tanh,
)
from .diff.layers import _t, result
from .errors import ConfigUnsatisfiable, DepthOutOfRange, ShapeMismatch

TOKEN_STRATEGIES = ("spatial_conv", "spatial_flat", "gap", "cls_only")
INPUT_COMBOS = ("orig_trans", "trans_only", "orig_trans_hadamard", "hadamard_only")
PATCH = 8  # stand-in backbone patch size / total downsampling factor


@dataclass
class FeatureGrid:
    """Per-image backbone output of shape (d, s, s), optionally with a CLS
    vector for token-based backbones."""

    values: np.ndarray
    cls: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise ShapeMismatch(f"FeatureGrid values must be (d, s, s), got {v.shape}")
        self.values = v
        if self.cls is not None:
            c = np.asarray(self.cls)
            if c.shape != (v.shape[0],):
                raise ShapeMismatch(f"cls must be ({v.shape[0]},), got {c.shape}")
            self.cls = c

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def s(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FusionConfig:
    token_strategy: str = "spatial_conv"
    input_combo: str = "orig_trans"

    def __post_init__(self):
        if self.token_strategy not in TOKEN_STRATEGIES:
            raise ValueError(f"unknown token strategy {self.token_strategy!r}")
        if self.input_combo not in INPUT_COMBOS:
            raise ValueError(f"unknown input combo {self.input_combo!r}")

    @property
    def n_grids(self) -> int:
        return {"orig_trans": 2, "trans_only": 1,
                "orig_trans_hadamard": 3, "hadamard_only": 1}[self.input_combo]


@dataclass(frozen=True)
class FreezeSpec:
    frozen_prefix_depth: int = 0


def fused_length(d: int, s: int, cfg: FusionConfig) -> int:
    """Output width of the fusion encoder; a pure function of (d, s, cfg)."""
    k = cfg.n_grids
    if cfg.token_strategy == "spatial_conv":
        return 3 * 512
    if cfg.token_strategy == "gap":
        return k * d
    if cfg.token_strategy == "cls_only":
        return k * d
    return k * d * s * s  # spatial_flat


def mean_spatial(x) -> Tensor:
    """(B, C, H, W) -> (B, C) mean over spatial positions."""
    x = _t(x)
    B, C, H, W = x.shape
    n = H * W

    def backward(g):
        if x.requires_grad:
            x.accumulate(np.broadcast_to(g[:, :, None, None] / n, x.shape))

    return result(x.data.mean(axis=(2, 3)), (x,), backward)


# -- parameterized building blocks -------------------------------------------

class Linear:
    def __init__(self, rng, n_in, n_out, name, dtype, out_init=False):
        std = (1.0 / np.sqrt(n_in)) if out_init else np.sqrt(2.0 / n_in)
        self.W = Parameter((rng.normal(size=(n_out, n_in)) * std).astype(dtype), f"{name}.W")
        self.b = Parameter(np.zeros(n_out, dtype=dtype), f"{name}.b")

    def __call__(self, x):
        return linear(x, self.W.tensor, self.b.tensor)

    def params(self):
        return [self.W, self.b]


class Conv3x3:
    def __init__(self, rng, c_in, c_out, name, dtype):
        std = np.sqrt(2.0 / (c_in * 9))
        self.W = Parameter((rng.normal(size=(c_out, c_in, 3, 3)) * std).astype(dtype), f"{name}.W")
        self.b = Parameter(np.zeros(c_out, dtype=dtype), f"{name}.b")

    def __call__(self, x):
        return conv3x3(x, self.W.tensor, self.b.tensor)

    def params(self):
        return [self.W, self.b]


class BatchNorm:
    def __init__(self, c, name, dtype, momentum=0.1, eps=1e-5):
        self.gamma = Parameter(np.ones(c, dtype=dtype), f"{name}.gamma")
        self.beta = Parameter(np.zeros(c, dtype=dtype), f"{name}.beta")
        self.running_mean = np.zeros(c, dtype=np.float64)
        self.running_var = np.ones(c, dtype=np.float64)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x, training):
        return batchnorm(x, self.gamma.tensor, self.beta.tensor,
                         self.running_mean, self.running_var, training,
                         self.momentum, self.eps)

    def params(self):
        return [self.gamma, self.beta]

    def state_params(self, name):
        """Running statistics as frozen pseudo-parameters for checkpoints."""
        return [Parameter(self.running_mean, f"{name}.running_mean", frozen=True),
                Parameter(self.running_var, f"{name}.running_var", frozen=True)]


# -- stand-in backbones ------------------------------------------------------

class RandomPatchBackbone:
    """Frozen seeded linear projection of 8x8 patches to d=64."""

    D = 64

    def __init__(self, seed=0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        proj = rng.normal(size=(self.D, PATCH * PATCH)) / PATCH
        self.proj = Parameter(proj.astype(dtype), "backbone.proj", frozen=True)
        self.d = self.D

    def __call__(self, images, training=False):
        images = _t(images)
        B, C, H, W = images.shape
        if C != 1 or H % PATCH or W % PATCH:
            raise ShapeMismatch(f"backbone input must be (B, 1, k*{PATCH}, k*{PATCH}), got {images.shape}")
        s = H // PATCH
        # (B, s, s, PATCH*PATCH) patches, projected channel-wise
        x = images.data.reshape(B, s, PATCH, s, PATCH).transpose(0, 1, 3, 2, 4)
        x = np.ascontiguousarray(x).reshape(B, s * s, PATCH * PATCH)
        feats = np.einsum("bnk,dk->bdn", x, self.proj.data).reshape(B, self.d, s, s)
        return Tensor(feats)

    def params(self):
        return [self.proj]

    def stages(self):
        return []  # nothing trainable to freeze


class TinyConvBackbone:
    """Three trainable conv3x3+relu stages with stride-2 pooling, to d=64."""

    CHANNELS = (16, 32, 64)

    def __init__(self, seed=0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        chans = (1,) + self.CHANNELS
        self.convs = [Conv3x3(rng, chans[i], chans[i + 1], f"backbone.conv{i}", dtype)
                      for i in range(3)]
        self.d = self.CHANNELS[-1]

    def __call__(self, images, training=False):
        x = _t(images)
        B, C, H, W = x.shape
        if C != 1 or H % PATCH or W % PATCH:
            raise ShapeMismatch(f"backbone input must be (B, 1, k*{PATCH}, k*{PATCH}), got {x.shape}")
        for conv in self.convs:
            x = avgpool2x2(relu(conv(x)))
        return x

    def params(self):
        return [p for c in self.convs for p in c.params()]

    def stages(self):
        return [c.params() for c in self.convs]


def make_backbone(kind: str, seed: int = 0, dtype=np.float64):
    if kind == "random_patch":
        return RandomPatchBackbone(seed, dtype)
    if kind == "tiny_conv":
        return TinyConvBackbone(seed, dtype)
    raise ValueError(f"unknown backbone kind {kind!r}")


def standin_backbone(image, kind: str, seed: int = 0) -> FeatureGrid:
    """Single-image convenience wrapper around the batched backbones."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3:
        raise ShapeMismatch(f"expected (1, H, W) image, got {img.shape}")
    out = make_backbone(kind, seed)(Tensor(img[None]))
    return FeatureGrid(out.data[0])


# -- fusion encoder ----------------------------------------------------------

class EncoderFuse:
    """Combines the two per-image feature grids per the fusion config.

    The default (spatial_conv, orig_trans) path is depth-concat -> two 3x3
    conv stages (256 then 512 channels, each conv -> relu -> batchnorm) ->
    location-aware max pooling."""

    def __init__(self, d, s, cfg: FusionConfig, seed=0, dtype=np.float64):
        self.d, self.s, self.cfg = d, s, cfg
        self.conv1 = self.conv2 = None
        self.bn1 = self.bn2 = None
        if cfg.token_strategy == "spatial_conv":
            rng = np.random.default_rng(seed + 1)
            c_in = cfg.n_grids * d
            self.conv1 = Conv3x3(rng, c_in, 256, "fuse.conv1", dtype)
            self.bn1 = BatchNorm(256, "fuse.bn1", dtype)
            self.conv2 = Conv3x3(rng, 256, 512, "fuse.conv2", dtype)
            self.bn2 = BatchNorm(512, "fuse.bn2", dtype)
        self.out_dim = fused_length(d, s, cfg)

    def _combine(self, a, b):
        combo = self.cfg.input_combo
        if combo == "orig_trans":
            return depth_concat(a, b)
        if combo == "trans_only":
            return b
        had = _mul_grids(a, b)
        if combo == "hadamard_only":
            return had
        return depth_concat(depth_concat(a, b), had)

    def __call__(self, fa, fb, cls_a=None, cls_b=None, training=False):
        strat = self.cfg.token_strategy
        if strat == "cls_only":
            if cls_a is None or cls_b is None:
                raise ConfigUnsatisfiable("cls_only fusion requires CLS tokens")
            combo = self.cfg.input_combo
            a, b = _t(cls_a), _t(cls_b)
            if combo == "trans_only":
                return b
            if combo == "hadamard_only":
                return _mul_grids(a, b)
            parts = [a, b]
            if combo == "orig_trans_hadamard":
                parts.append(_mul_grids(a, b))
            return concat(parts, axis=1)
        x = self._combine(_t(fa), _t(fb))
        if strat == "spatial_flat":
            return flatten(x)
        if strat == "gap":
            return mean_spatial(x)
        x = self.bn1(relu(self.conv1(x)), training)
        x = self.bn2(relu(self.conv2(x)), training)
        return location_aware_max_pool(x)

    def params(self):
        if self.cfg.token_strategy != "spatial_conv":
            return []
        return (self.conv1.params() + self.bn1.params()
                + self.conv2.params() + self.bn2.params())

    def stages(self):
        if self.cfg.token_strategy != "spatial_conv":
            return []
        return [self.conv1.params() + self.bn1.params(),
                self.conv2.params() + self.bn2.params()]

    def batchnorms(self):
        return [bn for bn in (self.bn1, self.bn2) if bn is not None]


def _mul_grids(a, b):
    from .diff import mul

    return mul(a, b)


def encoder_fuse(fa: FeatureGrid, fb: FeatureGrid, cfg: FusionConfig, seed: int = 0) -> Tensor:
    """Spec-level single-pair fusion: returns the flattened feature vector."""
    if (fa.d, fa.s) != (fb.d, fb.s):
        raise ShapeMismatch(f"feature grids disagree: {(fa.d, fa.s)} vs {(fb.d, fb.s)}")
    if cfg.token_strategy == "cls_only" and (fa.cls is None or fb.cls is None):
        raise ConfigUnsatisfiable("cls_only fusion requires CLS tokens")
    enc = EncoderFuse(fa.d, fa.s, cfg, seed=seed)
    cls_a = None if fa.cls is None else Tensor(fa.cls[None])
    cls_b = None if fb.cls is None else Tensor(fb.cls[None])
    out = enc(Tensor(fa.values[None]), Tensor(fb.values[None]), cls_a, cls_b, training=False)
    return Tensor(out.data[0])


# -- task heads --------------------------------------------------------------

class RigidHead:
    """MLP 512 -> 1024 -> 3 with tanh squashing to [-1, 1]:
    (angle, shift-x, shift-y) in normalized units."""

    def __init__(self, in_dim, seed=0, dtype=np.float64):
        rng = np.random.default_rng(seed + 2)
        self.fc1 = Linear(rng, in_dim, 512, "head.fc1", dtype)
        self.fc2 = Linear(rng, 512, 1024, "head.fc2", dtype)
        self.fc3 = Linear(rng, 1024, 3, "head.fc3", dtype, out_init=True)

    def __call__(self, f):
        x = relu(self.fc1(f))
        x = relu(self.fc2(x))
        return tanh(self.fc3(x))

    def params(self):
        return self.fc1.params() + self.fc2.params() + self.fc3.params()


class FHead:
    """MLP 1024 -> 512 -> 8, then the rank-constraint layer and Frobenius
    normalization: output is a unit-norm rank-2 (3, 3) matrix."""

    def __init__(self, in_dim, seed=0, dtype=np.float64):
        rng = np.random.default_rng(seed + 2)
        self.fc1 = Linear(rng, in_dim, 1024, "head.fc1", dtype)
        self.fc2 = Linear(rng, 1024, 512, "head.fc2", dtype)
        self.fc3 = Linear(rng, 512, 8, "head.fc3", dtype, out_init=True)

    def __call__(self, f):
        x = relu(self.fc1(f))
        x = relu(self.fc2(x))
        v = self.fc3(x)
        return frobenius_normalize_layer(rank_constraint_layer(v))

    def params(self):
        return self.fc1.params() + self.fc2.params() + self.fc3.params()


def rigid_head(f, seed: int = 0) -> Tensor:
    head = RigidHead(int(np.prod(_t(f).shape)), seed=seed)
    return head(_t(f))


def f_head(f, seed: int = 0) -> Tensor:
    head = FHead(int(np.prod(_t(f).shape)), seed=seed)
    return head(_t(f))


# -- full model --------------------------------------------------------------

class GeoModel:
    """Backbone + fusion encoder + task head."""

    def __init__(self, task, backbone_kind="tiny_conv", cfg=FusionConfig(),
                 feature_dim=None, feature_side=4, seed=0, dtype=np.float64,
                 from_features=False):
        if task not in ("rigid", "fmatrix"):
            raise ValueError(f"unknown task {task!r}")
        self.task = task
        self.backbone_kind = backbone_kind
        self.cfg = cfg
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.from_features = from_features
        if from_features:
            self.backbone = None
            if feature_dim is None:
                raise ValueError("feature_dim required when consuming feature files")
            d = feature_dim
        else:
            self.backbone = make_backbone(backbone_kind, seed, self.dtype)
            d = self.backbone.d
        self.feature_dim = d
        self.feature_side = feature_side
        self.fuse = EncoderFuse(d, feature_side, cfg, seed=seed, dtype=self.dtype)
        head_cls = RigidHead if task == "rigid" else FHead
        self.head = head_cls(fused_length(d, feature_side, cfg), seed=seed, dtype=self.dtype)
        self.freeze_depth = 0

    # forward ---------------------------------------------------------------
    def forward_images(self, imgs_a, imgs_b, training=False):
        if self.backbone is None:
            raise ValueError("model was built for precomputed features")
        fa = self.backbone(Tensor(np.asarray(imgs_a, dtype=self.dtype)), training)
        fb = self.backbone(Tensor(np.asarray(imgs_b, dtype=self.dtype)), training)
        return self.head(self.fuse(fa, fb, training=training))

    def forward_features(self, fa, fb, cls_a=None, cls_b=None, training=False):
        conv = lambda v: None if v is None else Tensor(np.asarray(v, dtype=self.dtype))
        return self.head(self.fuse(conv(fa), conv(fb), conv(cls_a), conv(cls_b),
                                   training=training))

    # parameters ------------------------------------------------------------
    def parameters(self):
        back = [] if self.backbone is None else self.backbone.params()
        return back + self.fuse.params() + self.head.params()

    def trainable_parameters(self):
        return [p for p in self.parameters() if not p.frozen]

    def encoder_stages(self):
        back = [] if self.backbone is None else self.backbone.stages()
        return back + self.fuse.stages()

    def batchnorms(self):
        return self.fuse.batchnorms()

    # freezing --------------------------------------------------------------
    def apply_freeze(self, spec: FreezeSpec):
        stages = self.encoder_stages()
        depth = spec.frozen_prefix_depth
        if not 0 <= depth <= len(stages):
            raise DepthOutOfRange(f"freeze depth {depth} not in [0, {len(stages)}]")
        for i, stage in enumerate(stages):
            for p in stage:
                p.frozen = i < depth
        self.freeze_depth = depth

    # checkpoint descriptor --------------------------------------------------
    def descriptor(self) -> str:
        return (
            f"task: {self.task}\n"
            f"backbone: {'features' if self.from_features else self.backbone_kind}\n"
            f"token_strategy: {self.cfg.token_strategy}\n"
            f"input_combo: {self.cfg.input_combo}\n"
            f"feature_dim: {self.feature_dim}\n"
            f"feature_side: {self.feature_side}\n"
            f"freeze_depth: {self.freeze_depth}\n"
            f"seed: {self.seed}\n"
            f"dtype: {self.dtype.name}\n"
        )

    def checkpoint_params(self):
        params = list(self.parameters())
        for i, bn in enumerate(self.batchnorms()):
            params += bn.state_params(f"fuse.bn{i + 1}")
        return params

    def load_parameters(self, loaded):
        by_name = {p.name: p for p in loaded}
        for p in self.parameters():
            src = by_name.pop(p.name, None)
            if src is None:
                raise ValueError(f"checkpoint missing parameter {p.name!r}")
            if src.data.shape != p.data.shape:
                raise ShapeMismatch(f"{p.name}: {src.data.shape} vs {p.data.shape}")
            p.tensor.data = src.data.astype(self.dtype)
            p.frozen = src.frozen
        for i, bn in enumerate(self.batchnorms()):
            for attr in ("running_mean", "running_var"):
                src = by_name.pop(f"fuse.bn{i + 1}.{attr}", None)
                if src is not None:
                    getattr(bn, attr)[:] = src.data

    @staticmethod
    def from_descriptor(descriptor: str, **overrides):
        fields = {}
        for line in descriptor.strip().splitlines():
            key, _, val = line.partition(":")
            fields[key.strip()] = val.strip()
        kind = fields["backbone"]
        model = GeoModel(
            task=fields["task"],
            backbone_kind=kind if kind != "features" else "tiny_conv",
            cfg=FusionConfig(fields["token_strategy"], fields["input_combo"]),
            feature_dim=int(fields["feature_dim"]),
            feature_side=int(fields["feature_side"]),
            seed=int(fields.get("seed", 0)),
            dtype=np.dtype(fields.get("dtype", "float64")),
            from_features=kind == "features",
            **overrides,
        )
        model.apply_freeze(FreezeSpec(int(fields.get("freeze_depth", 0))))
        return model


def apply_freeze(model: GeoModel, spec: FreezeSpec):
    model.apply_freeze(spec)


def save_model(path, model: GeoModel):
    from .diff import save_checkpoint

    save_checkpoint(path, model.checkpoint_params(), descriptor=model.descriptor())


def load_model(path) -> GeoModel:
    from .diff import load_checkpoint

    params, descriptor = load_checkpoint(path)
    model = GeoModel.from_descriptor(descriptor)
    model.load_parameters(params)
    return model
