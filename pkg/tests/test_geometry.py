import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geolab.errors import DegeneratePose, InvalidCrop, ZeroMatrix
from geolab.geometry import (
    Affine2,
    CameraIntrinsics,
    Correspondence,
    CorrespondenceSet,
    CropSpec,
    RelativePose,
    adjust_f_for_transform,
    affine_from_cropspec,
    compose_fundamental,
    enforce_rank2,
    epipolar_line,
    epipolar_residual,
    epipolar_residuals,
    normalize_frobenius,
    read_calibration,
    skew_symmetric,
    transform_correspondences,
    write_calibration,
)

F_BASE = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]) / np.sqrt(2)


def rotation(axis, deg):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    a = np.radians(deg)
    K = skew_symmetric(axis)
    return np.eye(3) + np.sin(a) * K + (1 - np.cos(a)) * (K @ K)


def project(K, R, t, X):
    """Pinhole projection of (n,3) world points into a camera with pose (R, t)."""
    Xc = X @ R.T + t
    uvw = Xc @ K.matrix().T
    return uvw[:, :2] / uvw[:, 2:]


def random_scene(rng, n=30):
    K1 = CameraIntrinsics(rng.uniform(300, 800), rng.uniform(300, 800), 320, 240)
    K2 = CameraIntrinsics(rng.uniform(300, 800), rng.uniform(300, 800), 310, 250)
    R = rotation(rng.normal(size=3), rng.uniform(-8, 8))
    t = rng.normal(size=3)
    t = t / np.linalg.norm(t) * rng.uniform(0.3, 1.0)
    pose = RelativePose(R, t)
    X = np.column_stack(
        [rng.uniform(-3, 3, n), rng.uniform(-3, 3, n), rng.uniform(4, 12, n)]
    )
    p = project(K1, np.eye(3), np.zeros(3), X)
    q = project(K2, R, t, X)
    return K1, K2, pose, CorrespondenceSet(p, q)


class TestSkewSymmetric:
    def test_unit_x(self):
        np.testing.assert_allclose(
            skew_symmetric((1, 0, 0)),
            [[0, 0, 0], [0, 0, -1], [0, 1, 0]],
        )

    def test_zero(self):
        np.testing.assert_array_equal(skew_symmetric((0, 0, 0)), np.zeros((3, 3)))

    def test_annihilates_t(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            t = rng.normal(size=3)
            assert np.linalg.norm(skew_symmetric(t) @ t) < 1e-12
            v = rng.normal(size=3)
            np.testing.assert_allclose(skew_symmetric(t) @ v, np.cross(t, v), atol=1e-12)


class TestComposeFundamental:
    def test_identity_cameras(self):
        K = CameraIntrinsics(1, 1, 0, 0)
        F = compose_fundamental(K, K, RelativePose(np.eye(3), (1, 0, 0)))
        np.testing.assert_allclose(F.m, F_BASE, atol=1e-15)

    def test_pure_rotation_degenerate(self):
        K = CameraIntrinsics(1, 1, 0, 0)
        with pytest.raises(DegeneratePose):
            compose_fundamental(K, K, RelativePose(np.eye(3), (0, 0, 0)))

    def test_kitti_like_residuals(self):
        K = CameraIntrinsics(720, 720, 620, 190)
        pose = RelativePose(rotation((0, 1, 0), 5.0), (0.54, 0, 0))
        F = compose_fundamental(K, K, pose)
        rng = np.random.default_rng(1)
        X = np.column_stack(
            [rng.uniform(-5, 5, 40), rng.uniform(-2, 2, 40), rng.uniform(5, 30, 40)]
        )
        p = project(K, np.eye(3), np.zeros(3), X)
        q = project(K, pose.R, pose.t, X)
        res = epipolar_residuals(F, CorrespondenceSet(p, q))
        assert np.max(np.abs(res)) < 1e-9

    def test_invariants_random(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            K1, K2, pose, corrs = random_scene(rng)
            F = compose_fundamental(K1, K2, pose)
            assert abs(F.frobenius_norm - 1) < 1e-10
            assert abs(F.det) <= 1e-9
            assert np.max(np.abs(epipolar_residuals(F, corrs))) < 1e-9


class TestEpipolarResidual:
    def test_hand_case(self):
        c = Correspondence((0, 0), (0, 1))
        assert epipolar_residual(F_BASE, c) == pytest.approx(-1 / np.sqrt(2), abs=1e-15)

    def test_linearity_in_f(self):
        rng = np.random.default_rng(3)
        m = rng.normal(size=(3, 3))
        c = Correspondence((1.5, -2.0), (0.3, 4.0))
        r = epipolar_residual(m, c)
        assert epipolar_residual(3.0 * m, c) == pytest.approx(3.0 * r, rel=1e-12)


class TestEpipolarLine:
    def test_right_line(self):
        np.testing.assert_allclose(
            epipolar_line(F_BASE, (0, 0), "right"), (0, -1 / np.sqrt(2), 0), atol=1e-15
        )

    def test_diag_case(self):
        F = np.diag([1.0, 1.0, 0.0]) / np.sqrt(2)
        np.testing.assert_allclose(
            epipolar_line(F, (1, 2), "right"), (1 / np.sqrt(2), 2 / np.sqrt(2), 0)
        )

    def test_incidence(self):
        rng = np.random.default_rng(4)
        K1, K2, pose, corrs = random_scene(rng)
        F = compose_fundamental(K1, K2, pose)
        for c in corrs.items[:5]:
            line = epipolar_line(F, c.p, "right")
            q = np.array([c.q[0], c.q[1], 1.0])
            assert abs(q @ line) < 1e-9
            line1 = epipolar_line(F, c.q, "left")
            p = np.array([c.p[0], c.p[1], 1.0])
            assert abs(p @ line1) < 1e-9


class TestEnforceRank2:
    def test_identity(self):
        np.testing.assert_allclose(enforce_rank2(np.eye(3)), np.diag([1.0, 1.0, 0.0]), atol=1e-12)

    def test_rank2_unchanged(self):
        m = np.outer([1.0, 2, 3], [4.0, 5, 6]) + np.outer([0.0, 1, 0], [1.0, 0, 0])
        np.testing.assert_allclose(enforce_rank2(m), m, atol=1e-12)

    def test_distance_is_sigma3(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            m = rng.normal(size=(3, 3))
            r = enforce_rank2(m)
            s3 = np.linalg.svd(m, compute_uv=False)[2]
            assert np.linalg.norm(m - r) == pytest.approx(s3, abs=1e-12)
            assert abs(np.linalg.det(r)) <= 1e-10 * np.linalg.norm(r) ** 3

    def test_idempotent(self):
        rng = np.random.default_rng(6)
        m = rng.normal(size=(3, 3))
        once = enforce_rank2(m)
        np.testing.assert_allclose(enforce_rank2(once), once, atol=1e-12)


class TestNormalizeFrobenius:
    def test_diag(self):
        F = normalize_frobenius(np.diag([2.0, 2.0, 0.0]))
        np.testing.assert_allclose(F.m, np.diag([1.0, 1.0, 0.0]) / np.sqrt(2))

    def test_zero_matrix(self):
        with pytest.raises(ZeroMatrix):
            normalize_frobenius(np.zeros((3, 3)))

    def test_direction_preserved(self):
        rng = np.random.default_rng(7)
        m = rng.normal(size=(3, 3))
        F = normalize_frobenius(m)
        np.testing.assert_allclose(F.m * np.linalg.norm(m), m, atol=1e-12)


class TestAffineFromCropspec:
    def test_identity(self):
        spec = CropSpec(resize_to=(256, 256), crop=(256, 256), offset=(0, 0))
        A = affine_from_cropspec(spec, (256, 256))
        np.testing.assert_allclose(A.homogeneous(), np.eye(3))

    def test_half_scale_with_offset(self):
        spec = CropSpec(resize_to=(256, 256), crop=(224, 224), offset=(16, 16))
        A = affine_from_cropspec(spec, (512, 512))
        np.testing.assert_allclose(A.apply([(100.0, 100.0)]), [(34.0, 34.0)])

    def test_invalid_crop(self):
        with pytest.raises(InvalidCrop):
            CropSpec(resize_to=(256, 256), crop=(224, 224), offset=(40, 0))

    @given(
        w=st.integers(64, 1024),
        h=st.integers(64, 1024),
        ox=st.integers(0, 32),
        oy=st.integers(0, 32),
    )
    @settings(max_examples=50, deadline=None)
    def test_round_trip(self, w, h, ox, oy):
        spec = CropSpec(resize_to=(256, 256), crop=(224, 224), offset=(ox, oy))
        A = affine_from_cropspec(spec, (w, h))
        pts = np.array([[10.0, 20.0], [w / 3, h / 7]])
        np.testing.assert_allclose(A.inverse().apply(A.apply(pts)), pts, atol=1e-9)


class TestAdjustFForTransform:
    def test_identity_maps(self):
        rng = np.random.default_rng(8)
        K1, K2, pose, _ = random_scene(rng)
        F = compose_fundamental(K1, K2, pose)
        F2 = adjust_f_for_transform(F, Affine2.identity(), Affine2.identity())
        np.testing.assert_array_equal(F2.m, F.m)

    def test_uniform_scale(self):
        rng = np.random.default_rng(9)
        K1, K2, pose, corrs = random_scene(rng)
        F = compose_fundamental(K1, K2, pose)
        A = Affine2(0.5 * np.eye(2), np.zeros(2))
        F2 = adjust_f_for_transform(F, A, A)
        moved = transform_correspondences(corrs, A, A)
        assert np.max(np.abs(epipolar_residuals(F2, moved))) < 1e-9

    def test_crop_offsets(self):
        rng = np.random.default_rng(10)
        K1, K2, pose, corrs = random_scene(rng)
        F = compose_fundamental(K1, K2, pose)
        A1 = affine_from_cropspec(CropSpec(offset=(16, 16)), (640, 480))
        A2 = affine_from_cropspec(CropSpec(offset=(8, 24)), (640, 480))
        F2 = adjust_f_for_transform(F, A1, A2)
        moved = transform_correspondences(corrs, A1, A2)
        assert np.max(np.abs(epipolar_residuals(F2, moved))) < 1e-9
        assert abs(F2.frobenius_norm - 1) < 1e-10


class TestCalibrationIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        K1, K2, pose, _ = random_scene(rng)
        path = tmp_path / "calib.txt"
        write_calibration(path, K1, K2, pose)
        K1b, K2b, poseb = read_calibration(path)
        assert K1b == K1 and K2b == K2
        np.testing.assert_array_equal(poseb.R, pose.R)
        np.testing.assert_array_equal(poseb.t, pose.t)

    def test_comments_ignored(self, tmp_path):
        path = tmp_path / "calib.txt"
        path.write_text(
            "# camera pair\nK1: 720 720 620 190 0\nK2: 700 710 600 200 0\n"
            "R: 1 0 0 0 1 0 0 0 1  # identity\nt: 0.5 0 0\n"
        )
        K1, K2, pose = read_calibration(path)
        assert K1.fx == 720
        np.testing.assert_array_equal(pose.R, np.eye(3))
