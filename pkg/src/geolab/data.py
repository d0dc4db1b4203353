"""Synthetic dataset generation for both tasks, augmentation with geometric
label adjustment, inlier selection, nested subset construction, and file IO
for features, labels, and correspondences."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import (
    EmptyInlierSet,
    FormatError,
    ShapeError,
    SizeExceedsDataset,
)
from .geometry import (
    Affine2,
    CameraIntrinsics,
    CorrespondenceSet,
    CropSpec,
    FundamentalMatrix,
    RelativePose,
    adjust_f_for_transform,
    affine_from_cropspec,
    compose_fundamental,
    transform_correspondences,
)
from .kernels import bilinear_sample
from .metrics import sed_points
from .models import FeatureGrid

GEOF_MAGIC = b"GEOF"
GEOF_VERSION = 1


# -- rigid-transform labels --------------------------------------------------

@dataclass(frozen=True)
class RigidParams:
    """A rotation about the image center plus a pixel shift.

    theta is in degrees; the normalized form divides by the sampling ranges
    so every coordinate lands in [-1, 1]."""

    theta: float
    tx: float
    ty: float
    theta_max: float = 30.0
    shift_max: float = 32.0

    def __post_init__(self):
        if self.theta_max <= 0 or self.shift_max <= 0:
            raise ValueError("ranges must be positive")
        if abs(self.theta) > self.theta_max + 1e-12:
            raise ValueError(f"theta {self.theta} outside +-{self.theta_max}")
        if max(abs(self.tx), abs(self.ty)) > self.shift_max + 1e-12:
            raise ValueError(f"shift ({self.tx}, {self.ty}) outside +-{self.shift_max}")

    @property
    def normalized(self) -> np.ndarray:
        return np.array([self.theta / self.theta_max,
                         self.tx / self.shift_max,
                         self.ty / self.shift_max])

    @staticmethod
    def from_normalized(vec, theta_max: float = 30.0, shift_max: float = 32.0) -> "RigidParams":
        v = np.asarray(vec, dtype=np.float64).reshape(3)
        return RigidParams(v[0] * theta_max, v[1] * shift_max, v[2] * shift_max,
                           theta_max, shift_max)


def sample_rigid_params(rng, theta_max: float = 30.0, shift_max: float = 32.0) -> RigidParams:
    """Uniform draw over the configured angle and shift ranges."""
    return RigidParams(rng.uniform(-theta_max, theta_max),
                       rng.uniform(-shift_max, shift_max),
                       rng.uniform(-shift_max, shift_max),
                       theta_max, shift_max)


# -- image synthesis and warping ---------------------------------------------

def gen_texture_image(seed: int, size: int) -> np.ndarray:
    """Deterministic multi-scale smoothed noise in [0, 1], shape (1, size, size).

    Several octaves of coarse random grids are bilinearly upsampled and
    summed with decaying weights, giving images with structure at every
    scale so rigid warps are identifiable."""
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    rng = np.random.default_rng(seed)
    img = np.zeros((size, size))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    weight = 1.0
    g = 4
    while g <= size:
        coarse = rng.random((g, g))
        scale = (g - 1) / (size - 1)
        img += weight * bilinear_sample(coarse, xx * scale, yy * scale)
        weight *= 0.5
        g *= 2
    lo, hi = img.min(), img.max()
    img = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    return img[None]


def _rot2(theta_deg: float) -> np.ndarray:
    th = np.deg2rad(theta_deg)
    c, s = np.cos(th), np.sin(th)
    return np.array([[c, -s], [s, c]])


def rigid_affine(p: RigidParams, size: int) -> Affine2:
    """Forward pixel map of warp_rigid: rotate about the image center by
    theta, then shift by (tx, ty)."""
    c = (size - 1) / 2.0
    R = _rot2(p.theta)
    center = np.array([c, c])
    return Affine2(R, center - R @ center + np.array([p.tx, p.ty]))


def warp_rigid(img, p: RigidParams) -> np.ndarray:
    """Apply the rigid transform by inverse-mapped bilinear resampling.

    Output pixels whose source falls outside the image read 0."""
    img = np.asarray(img, dtype=np.float64)
    chan = img[0] if img.ndim == 3 else img
    H, W = chan.shape
    if H != W:
        raise ValueError(f"warp_rigid needs a square image, got {chan.shape}")
    inv = rigid_affine(p, H).inverse()
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    src = inv.apply(np.stack([xx.ravel(), yy.ravel()], axis=1))
    out = bilinear_sample(chan, src[:, 0].reshape(H, W), src[:, 1].reshape(H, W))
    return out[None] if img.ndim == 3 else out


# -- stereo scene generation -------------------------------------------------

@dataclass
class SceneConfig:
    n_points: int = 50
    noise_px: float = 0.0
    outlier_frac: float = 0.0
    baseline_range: tuple = (0.5, 2.0)
    rot_range: float = 10.0  # degrees
    image_size: tuple = (640, 480)
    depth_range: tuple = (4.0, 12.0)
    planar: bool = False


@dataclass
class StereoScene:
    K1: CameraIntrinsics
    K2: CameraIntrinsics
    pose: RelativePose
    F: FundamentalMatrix
    corrs: CorrespondenceSet
    outlier_mask: np.ndarray  # True where q was resampled (outlier)
    planar: bool = False  # degenerate for the eight-point algorithm


def _random_rotation(rng, max_deg):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(rng.uniform(-max_deg, max_deg))
    K = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def _random_intrinsics(rng, size):
    w, h = size
    return CameraIntrinsics(fx=rng.uniform(300, 800), fy=rng.uniform(300, 800),
                            cx=w / 2 + rng.uniform(-20, 20),
                            cy=h / 2 + rng.uniform(-20, 20))


def gen_stereo_scene(rng, cfg: SceneConfig = SceneConfig()) -> StereoScene:
    """Random two-view scene with exact ground truth.

    Points are sampled by backprojecting in-frame pixels of view 1 to random
    depths (or onto a single plane when cfg.planar), rejecting any that fall
    behind or outside view 2. Outliers replace q with a uniform in-frame
    pixel; Gaussian noise is added to the surviving inliers afterwards."""
    if cfg.n_points < 8:
        raise ValueError(f"need at least 8 points, got {cfg.n_points}")
    w, h = cfg.image_size
    K1 = _random_intrinsics(rng, cfg.image_size)
    K2 = _random_intrinsics(rng, cfg.image_size)
    R = _random_rotation(rng, cfg.rot_range)
    t_dir = rng.normal(size=3)
    t = t_dir / np.linalg.norm(t_dir) * rng.uniform(*cfg.baseline_range)
    pose = RelativePose(R, t)
    F = compose_fundamental(K1, K2, pose)

    K1i = np.linalg.inv(K1.matrix())
    K2m = K2.matrix()
    if cfg.planar:
        n_plane = rng.normal(size=3)
        n_plane[2] = abs(n_plane[2]) + 1.0  # keep the plane facing the camera
        d_plane = rng.uniform(*cfg.depth_range)

    p_list, q_list = [], []
    attempts = 0
    while len(p_list) < cfg.n_points:
        attempts += 1
        if attempts > 10000 * cfg.n_points:
            raise RuntimeError("scene sampling failed to converge")
        u = rng.uniform(0, w - 1)
        v = rng.uniform(0, h - 1)
        ray = K1i @ np.array([u, v, 1.0])
        if cfg.planar:
            denom = n_plane @ ray
            if denom <= 1e-6:
                continue
            z = d_plane / denom * ray[2]
            if not cfg.depth_range[0] / 4 <= z <= cfg.depth_range[1] * 4:
                continue
            X = ray * (z / ray[2])
        else:
            X = ray * (rng.uniform(*cfg.depth_range) / ray[2])
        Xq = R @ X + t
        if Xq[2] <= 0.1:
            continue
        proj = K2m @ Xq
        qx, qy = proj[0] / proj[2], proj[1] / proj[2]
        if not (0 <= qx <= w - 1 and 0 <= qy <= h - 1):
            continue
        p_list.append([u, v])
        q_list.append([qx, qy])

    p = np.array(p_list)
    q = np.array(q_list)
    mask = np.zeros(cfg.n_points, dtype=bool)
    n_out = int(round(cfg.outlier_frac * cfg.n_points))
    if n_out:
        idx = rng.choice(cfg.n_points, size=n_out, replace=False)
        mask[idx] = True
        q[idx, 0] = rng.uniform(0, w - 1, size=n_out)
        q[idx, 1] = rng.uniform(0, h - 1, size=n_out)
    if cfg.noise_px > 0:
        p[~mask] += rng.normal(scale=cfg.noise_px, size=p[~mask].shape)
        q[~mask] += rng.normal(scale=cfg.noise_px, size=q[~mask].shape)

    return StereoScene(K1, K2, pose, F, CorrespondenceSet(p, q), mask, cfg.planar)


# -- augmentation ------------------------------------------------------------

@dataclass
class ImagePair:
    """A two-image training sample with whichever label its task uses."""

    img_a: np.ndarray
    img_b: np.ndarray
    f: Optional[FundamentalMatrix] = None
    corrs: Optional[CorrespondenceSet] = None
    rigid: Optional[RigidParams] = None
    pair_id: int = 0


def resize_bilinear(img, new_size) -> np.ndarray:
    """Corner-aligned bilinear resize of a (1, H, W) or (H, W) image."""
    img = np.asarray(img, dtype=np.float64)
    chan = img[0] if img.ndim == 3 else img
    H, W = chan.shape
    nw, nh = new_size
    yy, xx = np.mgrid[0:nh, 0:nw].astype(np.float64)
    out = bilinear_sample(chan, xx * ((W - 1) / max(nw - 1, 1)),
                          yy * ((H - 1) / max(nh - 1, 1)))
    return out[None] if img.ndim == 3 else out


def _crop_image(img, spec: CropSpec) -> np.ndarray:
    resized = resize_bilinear(img, spec.resize_to)
    ox, oy = int(spec.offset[0]), int(spec.offset[1])
    cw, ch = spec.crop
    chan = resized[0] if resized.ndim == 3 else resized
    out = chan[oy:oy + ch, ox:ox + cw]
    return out[None] if resized.ndim == 3 else out


def photometric_jitter(img, rng) -> np.ndarray:
    """Brightness +-0.2, contrast x[0.8, 1.25], Gaussian blur sigma in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    chan = img[0] if img.ndim == 3 else img
    b = rng.uniform(-0.2, 0.2)
    c = rng.uniform(0.8, 1.25)
    sigma = rng.uniform(0.0, 1.0)
    out = (chan - 0.5) * c + 0.5 + b
    if sigma > 1e-3:
        out = gaussian_filter(out, sigma=sigma, mode="nearest")
    out = np.clip(out, 0.0, 1.0)
    return out[None] if img.ndim == 3 else out


def augment_pair(pair: ImagePair, crop1: CropSpec, crop2: CropSpec, rng=None) -> ImagePair:
    """Resize/crop both images, remap the geometric labels through the crop
    affines, and (when an rng is supplied) apply photometric jitter.

    Photometric jitter never touches labels; the crops adjust F and the
    correspondences so exact points stay exact."""
    size_a = (pair.img_a.shape[-1], pair.img_a.shape[-2])
    size_b = (pair.img_b.shape[-1], pair.img_b.shape[-2])
    A1 = affine_from_cropspec(crop1, size_a)
    A2 = affine_from_cropspec(crop2, size_b)
    img_a = _crop_image(pair.img_a, crop1)
    img_b = _crop_image(pair.img_b, crop2)
    if rng is not None:
        img_a = photometric_jitter(img_a, rng)
        img_b = photometric_jitter(img_b, rng)
    identity = all(np.array_equal(A.a, np.eye(2)) and not A.b.any() for A in (A1, A2))
    if identity:
        f, corrs = pair.f, pair.corrs  # bit-identical labels under identity crops
    else:
        f = None if pair.f is None else adjust_f_for_transform(pair.f, A1, A2)
        corrs = None if pair.corrs is None else transform_correspondences(pair.corrs, A1, A2)
    return ImagePair(img_a, img_b, f=f, corrs=corrs, rigid=pair.rigid,
                     pair_id=pair.pair_id)


# -- inlier selection and subsets --------------------------------------------

def select_inliers(F, corrs: CorrespondenceSet, tau: float = 0.01) -> CorrespondenceSet:
    """Keep correspondences whose per-point symmetric epipolar distance under
    F is below tau."""
    keep = sed_points(F, corrs) < tau
    if not np.any(keep):
        raise EmptyInlierSet(f"no correspondence below tau={tau}")
    return CorrespondenceSet(corrs.p[keep], corrs.q[keep])


def inlier_mask(F, corrs: CorrespondenceSet, tau: float = 0.01) -> np.ndarray:
    return sed_points(F, corrs) < tau


def nested_subsets(n_items: int, sizes, seed: int = 0, replicates: int = 1):
    """Deterministic nested index subsets: within each replicate,
    subsets[k+1] is a subset of subsets[k].

    With replicates > 1 the items are first partitioned into that many
    disjoint equal chunks and the nesting chain is built inside each chunk.
    Returns a list (per replicate) of lists of index arrays."""
    sizes = list(sizes)
    if any(b >= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError(f"sizes must be strictly decreasing, got {sizes}")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    chunk = n_items // replicates
    if not sizes or sizes[0] > chunk:
        raise SizeExceedsDataset(
            f"largest size {sizes[0] if sizes else '?'} exceeds the "
            f"{chunk} items available per replicate (dataset {n_items})")
    perm = np.random.default_rng(seed).permutation(n_items)
    out = []
    for r in range(replicates):
        base = perm[r * chunk:(r + 1) * chunk]
        out.append([np.sort(base[:k]) for k in sizes])
    return out


# -- point-splat rendering ---------------------------------------------------

def render_point_splats(points, intensities, size: int, sigma: float = 1.2) -> np.ndarray:
    """Render 2-D points as Gaussian intensity splats on a (1, size, size)
    canvas.

    This is the feature-izer for the synthetic F-matrix task: both views of
    a scene are rendered from their own projected points with shared
    per-point intensities, so the pairing is visible to an encoder."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    intensities = np.asarray(intensities, dtype=np.float64).reshape(-1)
    if points.shape != (intensities.size, 2):
        raise ShapeError(f"points {points.shape} vs intensities {intensities.shape}")
    canvas = np.zeros((size, size))
    rad = int(np.ceil(3 * sigma))
    for (x, y), a in zip(points, intensities):
        cx, cy = int(round(x)), int(round(y))
        x0, x1 = max(cx - rad, 0), min(cx + rad + 1, size)
        y0, y1 = max(cy - rad, 0), min(cy + rad + 1, size)
        if x0 >= x1 or y0 >= y1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
        canvas[y0:y1, x0:x1] += a * np.exp(
            -((xx - x) ** 2 + (yy - y) ** 2) / (2 * sigma * sigma))
    return np.clip(canvas, 0.0, 1.0)[None]


# -- feature interchange file (GEOF) -----------------------------------------

@dataclass
class FeatureRecord:
    pair_id: int
    role: int  # 0 = first image, 1 = second image
    grid: FeatureGrid


def write_features(path, records):
    """Write feature grids in the GEOF interchange format.

    All records in one file must share (d, s); float32 little-endian,
    channel-major."""
    records = list(records)
    if records:
        d0, s0 = records[0].grid.d, records[0].grid.s
        for rec in records:
            if (rec.grid.d, rec.grid.s) != (d0, s0):
                raise ShapeError(
                    f"inconsistent grids in one file: ({rec.grid.d}, {rec.grid.s}) "
                    f"vs ({d0}, {s0})")
    with open(path, "wb") as fh:
        fh.write(GEOF_MAGIC)
        fh.write(struct.pack("<II", GEOF_VERSION, len(records)))
        for rec in records:
            g = rec.grid
            has_cls = 1 if g.cls is not None else 0
            fh.write(struct.pack("<QBBII", rec.pair_id, rec.role, has_cls, g.d, g.s))
            fh.write(np.ascontiguousarray(g.values, dtype="<f4").tobytes())
            if has_cls:
                fh.write(np.ascontiguousarray(g.cls, dtype="<f4").tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated feature file while reading {what}")
    return buf


def read_features(path):
    """Read a GEOF file back into FeatureRecords (float32 values)."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != GEOF_MAGIC:
            raise FormatError("bad magic, not a GEOF feature file")
        version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != GEOF_VERSION:
            raise FormatError(f"unsupported feature file version {version}")
        records = []
        for i in range(count):
            pair_id, role, has_cls, d, s = struct.unpack(
                "<QBBII", _read_exact(fh, 18, f"record header #{i}"))
            vals = np.frombuffer(
                _read_exact(fh, 4 * d * s * s, f"values #{i}"), dtype="<f4"
            ).reshape(d, s, s)
            cls = None
            if has_cls:
                cls = np.frombuffer(_read_exact(fh, 4 * d, f"cls #{i}"), dtype="<f4")
            records.append(FeatureRecord(pair_id, role, FeatureGrid(vals, cls)))
        if fh.read(1):
            raise FormatError("trailing bytes after last record")
    return records


# -- label and correspondence text files -------------------------------------

def write_labels(path, task: str, entries):
    """One line per pair: `id theta_n tx_n ty_n` (rigid) or `id f11 .. f33`
    (row-major F entries)."""
    width = {"rigid": 3, "fmatrix": 9}.get(task)
    if width is None:
        raise ValueError(f"unknown task {task!r}")
    with open(path, "w") as fh:
        for pair_id, vec in entries:
            v = np.asarray(vec, dtype=np.float64).reshape(-1)
            if v.size != width:
                raise ShapeError(f"label for pair {pair_id} has {v.size} values, "
                                 f"expected {width}")
            fh.write(" ".join([str(int(pair_id))] + [repr(float(x)) for x in v]) + "\n")


def read_labels(path, task: str):
    width = {"rigid": 3, "fmatrix": 9}.get(task)
    if width is None:
        raise ValueError(f"unknown task {task!r}")
    out = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#")[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != width + 1:
                raise FormatError(f"{path}:{ln}: expected {width + 1} fields, "
                                  f"got {len(parts)}")
            out[int(parts[0])] = np.array([float(x) for x in parts[1:]])
    return out


def write_correspondences(path, corrs: CorrespondenceSet):
    """Text lines `x y x' y'`."""
    with open(path, "w") as fh:
        for (px, py), (qx, qy) in zip(corrs.p, corrs.q):
            fh.write(f"{float(px)!r} {float(py)!r} {float(qx)!r} {float(qy)!r}\n")


def read_correspondences(path) -> CorrespondenceSet:
    p, q = [], []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#")[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise FormatError(f"{path}:{ln}: expected 4 fields, got {len(parts)}")
            vals = [float(x) for x in parts]
            p.append(vals[:2])
            q.append(vals[2:])
    if not p:
        raise FormatError(f"{path}: no correspondences")
    return CorrespondenceSet(p, q)
