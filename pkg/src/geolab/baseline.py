"""Classical comparator: normalized eight-point algorithm with RANSAC over
given correspondences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConsensusFailure,
    DegenerateConfiguration,
    DegenerateSet,
    TooFewPoints,
)
from .geometry import (
    Affine2,
    CorrespondenceSet,
    FundamentalMatrix,
    enforce_rank2,
    normalize_frobenius,
)
from .metrics import sed_points


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 2000
    tau: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


def hartley_normalize(points):
    """Condition 2-D points: centroid to the origin, mean distance sqrt(2).

    Returns (normalized points, the Affine2 similarity that was applied)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    centroid = pts.mean(axis=0)
    dists = np.linalg.norm(pts - centroid, axis=1)
    mean_dist = dists.mean()
    if mean_dist < 1e-12:
        raise DegenerateSet("all points coincide; cannot condition")
    s = np.sqrt(2.0) / mean_dist
    T = Affine2(s * np.eye(2), -s * centroid)
    return T.apply(pts), T


def eight_point(corrs: CorrespondenceSet) -> FundamentalMatrix:
    """Normalized eight-point estimate of F from n >= 8 correspondences.

    Least-squares epipolar system on conditioned coordinates, rank-2
    truncation, de-normalization, Frobenius normalization."""
    if corrs.n < 8:
        raise TooFewPoints(f"eight_point needs >= 8 correspondences, got {corrs.n}")
    p_n, T1 = hartley_normalize(corrs.p)
    q_n, T2 = hartley_normalize(corrs.q)

    ph = np.hstack([p_n, np.ones((corrs.n, 1))])
    qh = np.hstack([q_n, np.ones((corrs.n, 1))])
    A = (qh[:, :, None] * ph[:, None, :]).reshape(corrs.n, 9)

    _, svals, Vt = np.linalg.svd(A)
    # a (near-)2-dimensional null space means the points do not pin down F
    if svals[7] < 1e-8 * svals[0]:
        raise DegenerateConfiguration(
            "design matrix is rank-deficient (e.g. coplanar or collinear points)")
    F_hat = np.asarray(enforce_rank2(Vt[-1].reshape(3, 3)))

    H1, H2 = T1.homogeneous(), T2.homogeneous()
    return normalize_frobenius(H2.T @ F_hat @ H1)


def _fit_minimal_batch(p, q, samples):
    """Eight-point fits of many minimal samples at once.

    Batched mirror of eight_point (conditioning, least squares, rank-2
    truncation, de-normalization, Frobenius normalization). Returns
    (F stack (M, 3, 3), validity mask); invalid entries are degenerate the
    same way the scalar path's DegenerateSet/DegenerateConfiguration are."""
    P = p[samples]  # (M, 8, 2)
    Q = q[samples]
    valid = np.ones(len(samples), dtype=bool)

    def condition(pts):
        centroid = pts.mean(axis=1, keepdims=True)
        d = np.linalg.norm(pts - centroid, axis=2).mean(axis=1)
        ok = d >= 1e-12
        s = np.sqrt(2.0) / np.where(ok, d, 1.0)
        normed = (pts - centroid) * s[:, None, None]
        H = np.zeros((len(pts), 3, 3))
        H[:, 0, 0] = H[:, 1, 1] = s
        H[:, :2, 2] = -s[:, None] * centroid[:, 0, :]
        H[:, 2, 2] = 1.0
        return normed, H, ok

    Pn, H1, ok1 = condition(P)
    Qn, H2, ok2 = condition(Q)
    valid &= ok1 & ok2

    ph = np.concatenate([Pn, np.ones((len(samples), 8, 1))], axis=2)
    qh = np.concatenate([Qn, np.ones((len(samples), 8, 1))], axis=2)
    A = (qh[:, :, :, None] * ph[:, :, None, :]).reshape(len(samples), 8, 9)
    _, svals, Vt = np.linalg.svd(A)
    valid &= svals[:, 7] >= 1e-8 * svals[:, 0]

    F = Vt[:, -1, :].reshape(-1, 3, 3)
    U, S, Vt3 = np.linalg.svd(F)
    S = S.copy()
    S[:, 2] = 0.0
    F = np.einsum("mik,mk,mkj->mij", U, S, Vt3)
    F = np.einsum("mki,mkj,mjl->mil", H2, F, H1)  # H2^T F H1
    norms = np.linalg.norm(F.reshape(-1, 9), axis=1)
    valid &= norms >= 1e-12
    F /= np.where(valid, norms, 1.0)[:, None, None]
    return F, valid


def _sed_batch(Fs, P, Q):
    """Per-point SED of every F in a stack: (M, n) residual matrix."""
    La = np.einsum("mij,nj->mni", Fs, P)  # lines F p in image 2
    Lb = np.einsum("mji,nj->mni", Fs, Q)  # lines F^T q in image 1
    r = np.einsum("ni,mni->mn", Q, La)
    wa = 1.0 / (La[:, :, 0] ** 2 + La[:, :, 1] ** 2)
    wb = 1.0 / (Lb[:, :, 0] ** 2 + Lb[:, :, 1] ** 2)
    return r**2 * (wa + wb)


def ransac_f(corrs: CorrespondenceSet, cfg: RansacConfig = RansacConfig()):
    """RANSAC over eight-point minimal samples.

    Scores by inlier count (per-point SED < tau) with total inlier SED as
    the tie-break, runs a fixed iteration budget for determinism, and
    refits on the final consensus set. Returns (F, inlier mask)."""
    if corrs.n < 8:
        raise TooFewPoints(f"ransac_f needs >= 8 correspondences, got {corrs.n}")
    rng = np.random.default_rng(cfg.seed)
    samples = np.stack([rng.choice(corrs.n, size=8, replace=False)
                        for _ in range(cfg.iterations)])
    Fs, valid = _fit_minimal_batch(corrs.p, corrs.q, samples)

    Ph, Qh = corrs.homogeneous()
    best = None  # ((count, -sed_total), mask)
    chunk = 256  # bounds the (chunk, n) residual matrices
    for lo in range(0, cfg.iterations, chunk):
        hi = min(lo + chunk, cfg.iterations)
        res = _sed_batch(Fs[lo:hi], Ph, Qh)
        inliers = res < cfg.tau
        counts = inliers.sum(axis=1)
        for i in np.flatnonzero(valid[lo:hi] & (counts >= 8)):
            key = (int(counts[i]), -float(res[i][inliers[i]].sum()))
            if best is None or key > best[0]:
                best = (key, inliers[i])
    if best is None:
        raise ConsensusFailure(
            f"no minimal sample reached 8 inliers in {cfg.iterations} iterations")

    consensus = best[1]
    F = eight_point(corrs[consensus])
    final_mask = sed_points(F, corrs) < cfg.tau
    return F, final_mask
