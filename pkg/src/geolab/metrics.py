"""Scalar metrics and training losses.

The symmetric epipolar distance (SED) of a correspondence set is

    sum_i (1/||l_i||^2 + 1/||l'_i||^2) (q_i^T F p_i)^2

where l'_i = F p_i is the epipolar line in image 2, l_i = F^T q_i the line in
image 1, and ||l|| uses only the first two line components (the line
direction), which makes the value invariant to rescaling F.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLine, LengthMismatch
from .geometry import CorrespondenceSet, Correspondence, _as_mat3

_LINE_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    alpha_rigid: float = 10.0  # shift-term weight in the rigid loss
    alpha_f: float = 1.0       # Huber weight in the F loss
    beta_f: float = 10.0       # SED weight in the F loss
    delta_huber: float = 1.0

    def __post_init__(self):
        if min(self.alpha_rigid, self.alpha_f, self.beta_f) < 0 or self.delta_huber <= 0:
            raise ValueError("loss weights must be non-negative, delta positive")


def _sed_terms(F, corrs: CorrespondenceSet):
    m = _as_mat3(F)
    P, Q = corrs.homogeneous()
    Lp = P @ m.T          # rows are F p_i   (epipolar lines in image 2)
    Lq = Q @ m            # rows are F^T q_i (epipolar lines in image 1)
    r = np.einsum("nk,nk->n", Q, Lp)
    n2p = Lp[:, 0] ** 2 + Lp[:, 1] ** 2
    n2q = Lq[:, 0] ** 2 + Lq[:, 1] ** 2
    bad = (np.sqrt(n2p) < _LINE_EPS) & (np.sqrt(n2q) < _LINE_EPS)
    if np.any(bad):
        raise DegenerateLine(
            f"both epipolar line directions vanish for point index {int(np.argmax(bad))}"
        )
    with np.errstate(divide="ignore"):
        w = 1.0 / n2p + 1.0 / n2q
    return w * r**2


def sed(F, corrs: CorrespondenceSet) -> float:
    """Symmetric epipolar distance summed over the correspondence set."""
    if corrs.n < 1:
        raise ValueError("sed requires at least one correspondence")
    return float(np.sum(_sed_terms(F, corrs)))


def sed_points(F, corrs: CorrespondenceSet) -> np.ndarray:
    """Per-point SED summands as an (n,) array."""
    return _sed_terms(F, corrs)


def sed_point(F, c: Correspondence) -> float:
    return float(_sed_terms(F, CorrespondenceSet([c.p], [c.q]))[0])


def algebraic_distance(F, corrs: CorrespondenceSet) -> float:
    """Sum of absolute epipolar residuals |q_i^T F p_i|."""
    if corrs.n < 1:
        raise ValueError("algebraic_distance requires at least one correspondence")
    m = _as_mat3(F)
    P, Q = corrs.homogeneous()
    return float(np.sum(np.abs(np.einsum("ni,ij,nj->n", Q, m, P))))


def _check_lengths(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise LengthMismatch(f"shapes {pred.shape} vs {target.shape}")
    if pred.size < 1:
        raise LengthMismatch("empty input")
    return pred, target


def mse(pred, target) -> float:
    pred, target = _check_lengths(pred, target)
    return float(np.mean((pred - target) ** 2))


def huber(pred, target, delta: float = 1.0) -> float:
    """Mean Huber loss: 0.5 e^2 for |e| <= delta, else delta (|e| - 0.5 delta)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    pred, target = _check_lengths(pred, target)
    e = np.abs(pred - target)
    quad = 0.5 * e**2
    lin = delta * (e - 0.5 * delta)
    return float(np.mean(np.where(e <= delta, quad, lin)))


def l2_translation_error(pred_shifts, gt_shifts) -> float:
    """Mean Euclidean distance between predicted and true 2-D shifts, pixels."""
    pred = np.atleast_2d(np.asarray(pred_shifts, dtype=np.float64))
    gt = np.atleast_2d(np.asarray(gt_shifts, dtype=np.float64))
    if pred.shape != gt.shape or pred.shape[1] != 2:
        raise LengthMismatch(f"shapes {pred.shape} vs {gt.shape}")
    return float(np.mean(np.linalg.norm(pred - gt, axis=1)))


def angle_mae(pred_deg, gt_deg) -> float:
    """Mean absolute angle error in degrees. No wraparound: the sampled range
    is +-30 degrees, far from the 180-degree ambiguity."""
    pred, gt = _check_lengths(pred_deg, gt_deg)
    return float(np.mean(np.abs(pred - gt)))


def rigid_loss(pred, gt, w: LossWeights = LossWeights()) -> float:
    """L = MSE_theta + Huber_theta + alpha (MSE_shift + Huber_shift) over
    normalized (angle, shift-x, shift-y) 3-vectors."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if pred.shape != gt.shape:
        raise LengthMismatch(f"shapes {pred.shape} vs {gt.shape}")
    d = w.delta_huber
    ang = mse(pred[:, 0], gt[:, 0]) + huber(pred[:, 0], gt[:, 0], d)
    shift = mse(pred[:, 1:], gt[:, 1:]) + huber(pred[:, 1:], gt[:, 1:], d)
    return ang + w.alpha_rigid * shift


def f_total_loss(F_pred, F_gt, inliers: CorrespondenceSet, w: LossWeights = LossWeights()) -> float:
    """L = MSE + alpha Huber over the 9 row-major entries + beta SED(F_pred)."""
    mp = _as_mat3(F_pred).ravel()
    mg = _as_mat3(F_gt).ravel()
    return (
        mse(mp, mg)
        + w.alpha_f * huber(mp, mg, w.delta_huber)
        + w.beta_f * sed(F_pred, inliers)
    )
