"""Exact (non-differentiable) epipolar geometry.

Conventions used everywhere in this package:
  * correspondences are (p, q) with p a pixel in image 1 and q its match in
    image 2, and the epipolar constraint reads  q^T F p = 0;
  * matrices are row-major numpy arrays of float64;
  * F matrices handed around as `FundamentalMatrix` are rank-2 and scaled to
    unit Frobenius norm.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePose, InvalidCrop, ZeroMatrix

_NORM_EPS = 1e-12


def _as_mat3(m) -> np.ndarray:
    a = np.asarray(getattr(m, "m", m), dtype=np.float64)
    if a.shape != (3, 3):
        raise ValueError(f"expected 3x3 matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class FundamentalMatrix:
    """Rank-2, unit-Frobenius-norm 3x3 matrix relating two views."""

    m: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "m", _as_mat3(self.m))
        if not np.all(np.isfinite(self.m)):
            raise ValueError("non-finite entries in fundamental matrix")

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.m))

    @property
    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.m))


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class RelativePose:
    """Rotation + translation of camera 2 relative to camera 1."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        if R.shape != (3, 3):
            raise ValueError("R must be 3x3")
        if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-8 or abs(np.linalg.det(R) - 1) > 1e-8:
            raise ValueError("R is not a proper rotation")


@dataclass(frozen=True)
class Correspondence:
    p: tuple  # (x, y) in image 1, pixels
    q: tuple  # (x', y') in image 2, pixels


class CorrespondenceSet:
    """Paired pixel coordinates across two images, stored as (n, 2) arrays."""

    def __init__(self, p, q):
        self.p = np.atleast_2d(np.asarray(p, dtype=np.float64))
        self.q = np.atleast_2d(np.asarray(q, dtype=np.float64))
        if self.p.shape != self.q.shape or self.p.shape[1] != 2:
            raise ValueError(
                f"p and q must both be (n, 2), got {self.p.shape} and {self.q.shape}"
            )

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def __len__(self):
        return self.n

    def __getitem__(self, idx):
        if np.isscalar(idx) or isinstance(idx, (int, np.integer)):
            return Correspondence(tuple(self.p[idx]), tuple(self.q[idx]))
        return CorrespondenceSet(self.p[idx], self.q[idx])

    @property
    def items(self):
        return [Correspondence(tuple(pi), tuple(qi)) for pi, qi in zip(self.p, self.q)]

    def homogeneous(self):
        """Return (P, Q), the (n, 3) homogeneous liftings of p and q."""
        ones = np.ones((self.n, 1))
        return np.hstack([self.p, ones]), np.hstack([self.q, ones])

    @staticmethod
    def from_items(items):
        return CorrespondenceSet([c.p for c in items], [c.q for c in items])


@dataclass(frozen=True)
class Affine2:
    """Invertible affine map x -> a @ x + b on pixel coordinates."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64).reshape(2, 2)
        b = np.asarray(self.b, dtype=np.float64).reshape(2)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if abs(np.linalg.det(a)) < _NORM_EPS:
            raise ValueError("affine map must be invertible")

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.a.T + self.b

    def homogeneous(self) -> np.ndarray:
        H = np.eye(3)
        H[:2, :2] = self.a
        H[:2, 2] = self.b
        return H

    def inverse(self) -> "Affine2":
        ai = np.linalg.inv(self.a)
        return Affine2(ai, -ai @ self.b)

    @staticmethod
    def identity() -> "Affine2":
        return Affine2(np.eye(2), np.zeros(2))


@dataclass(frozen=True)
class CropSpec:
    """Resize the original image to `resize_to`, then crop `crop` at `offset`."""

    resize_to: tuple = (256, 256)
    crop: tuple = (224, 224)
    offset: tuple = (0, 0)

    def __post_init__(self):
        ox, oy = self.offset
        cw, ch = self.crop
        rw, rh = self.resize_to
        if ox < 0 or oy < 0 or ox + cw > rw or oy + ch > rh:
            raise InvalidCrop(
                f"crop {self.crop} at offset {self.offset} exceeds resized size {self.resize_to}"
            )


def skew_symmetric(t) -> np.ndarray:
    """Cross-product matrix [t]_x with [t]_x v = t x v."""
    x, y, z = np.asarray(t, dtype=np.float64).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def compose_fundamental(
    K1: CameraIntrinsics, K2: CameraIntrinsics, pose: RelativePose
) -> FundamentalMatrix:
    """F = K2^-T [t]_x R K1^-1, scaled to unit Frobenius norm."""
    if np.linalg.norm(pose.t) <= 1e-9:
        raise DegeneratePose("translation norm <= 1e-9: F vanishes for pure rotation")
    K1i = np.linalg.inv(K1.matrix())
    K2i = np.linalg.inv(K2.matrix())
    F = K2i.T @ skew_symmetric(pose.t) @ pose.R @ K1i
    return normalize_frobenius(F)


def epipolar_residual(F, c: Correspondence) -> float:
    """q^T F p for a single correspondence."""
    m = _as_mat3(F)
    p = np.array([c.p[0], c.p[1], 1.0])
    q = np.array([c.q[0], c.q[1], 1.0])
    return float(q @ m @ p)


def epipolar_residuals(F, corrs: CorrespondenceSet) -> np.ndarray:
    """Vector of q_i^T F p_i over the whole set."""
    m = _as_mat3(F)
    P, Q = corrs.homogeneous()
    return np.einsum("ni,ij,nj->n", Q, m, P)


def epipolar_line(F, point, side: str) -> np.ndarray:
    """Epipolar line induced by a point: side='right' gives F p (a line in
    image 2 for a point of image 1), side='left' gives F^T q."""
    m = _as_mat3(F)
    x, y = point
    v = np.array([x, y, 1.0])
    if side == "right":
        return m @ v
    if side == "left":
        return m.T @ v
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def enforce_rank2(m) -> np.ndarray:
    """Frobenius-nearest rank-<=2 matrix (smallest singular value zeroed)."""
    a = _as_mat3(m)
    U, s, Vt = np.linalg.svd(a)
    s = s.copy()
    s[2] = 0.0
    return U @ np.diag(s) @ Vt


def normalize_frobenius(m) -> FundamentalMatrix:
    a = _as_mat3(m)
    norm = np.linalg.norm(a)
    if norm <= _NORM_EPS:
        raise ZeroMatrix(f"Frobenius norm {norm:g} <= {_NORM_EPS:g}")
    return FundamentalMatrix(a / norm)


def affine_from_cropspec(spec: CropSpec, original_size) -> Affine2:
    """Pixel map from original-image coordinates to cropped-image coordinates:
    scale to `resize_to`, then subtract the crop offset."""
    w, h = original_size
    rw, rh = spec.resize_to
    a = np.diag([rw / w, rh / h])
    b = -np.asarray(spec.offset, dtype=np.float64)
    return Affine2(a, b)


def adjust_f_for_transform(F, A1: Affine2, A2: Affine2) -> FundamentalMatrix:
    """Ground-truth F after applying pixel maps A1/A2 to images 1/2.

    With p' = H1 p and q' = H2 q (homogeneous lifts), q'^T (H2^-T F H1^-1) p'
    = q^T F p, so exact correspondences stay exact."""
    m = _as_mat3(F)
    H1i = A1.inverse().homogeneous()
    H2i = A2.inverse().homogeneous()
    return normalize_frobenius(H2i.T @ m @ H1i)


def transform_correspondences(corrs: CorrespondenceSet, A1: Affine2, A2: Affine2):
    return CorrespondenceSet(A1.apply(corrs.p), A2.apply(corrs.q))


# calibration text format: lines "K1: fx fy cx cy skew", "K2: ...",
# "R: r11 ... r33" (row-major), "t: tx ty tz"; '#' starts a comment.

def read_calibration(path):
    fields = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, rest = line.partition(":")
            fields[key.strip()] = [float(v) for v in rest.split()]
    try:
        k1 = fields["K1"]
        k2 = fields["K2"]
        R = np.array(fields["R"], dtype=np.float64).reshape(3, 3)
        t = np.array(fields["t"], dtype=np.float64)
    except KeyError as exc:
        raise ValueError(f"calibration file {path} missing field {exc}") from exc
    K1 = CameraIntrinsics(*k1)
    K2 = CameraIntrinsics(*k2)
    return K1, K2, RelativePose(R, t)


def write_calibration(path, K1: CameraIntrinsics, K2: CameraIntrinsics, pose: RelativePose):
    with open(path, "w") as fh:
        for name, K in (("K1", K1), ("K2", K2)):
            vals = (K.fx, K.fy, K.cx, K.cy, K.skew)
            fh.write(f"{name}: " + " ".join(repr(float(v)) for v in vals) + "\n")
        fh.write("R: " + " ".join(repr(float(v)) for v in pose.R.ravel()) + "\n")
        fh.write("t: " + " ".join(repr(float(v)) for v in pose.t) + "\n")
