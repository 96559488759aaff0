import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from bundlepose import geometry
from bundlepose.errors import NonPositiveDepth
from bundlepose.geometry import CameraIntrinsics, RigidPose


K = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=320.0, width=640, height=640)


def random_pose(rng, rot_scale=1.0, trans_scale=1.0):
    w = rng.normal(size=3) * rot_scale
    v = rng.normal(size=3) * trans_scale
    return geometry.exp(np.concatenate([w, v]))


class TestProject:
    def test_optical_axis_point_hits_principal_point(self):
        uv = geometry.project(RigidPose.identity(), K, np.array([0.0, 0.0, 1.0]))
        assert np.allclose(uv, [320.0, 320.0])

    def test_offset_point(self):
        uv = geometry.project(RigidPose.identity(), K, np.array([0.1, 0.0, 1.0]))
        assert np.allclose(uv, [370.0, 320.0])

    def test_point_behind_camera_raises(self):
        pose = RigidPose(np.eye(3), np.array([0.0, 0.0, -1.0]))
        with pytest.raises(NonPositiveDepth):
            geometry.project(pose, K, np.array([0.0, 0.0, 0.5]))

    def test_batched_matches_scalar(self):
        rng = np.random.default_rng(3)
        pose = random_pose(rng, 0.2, 0.1)
        pts = rng.normal(size=(50, 3)) * 0.2 + [0, 0, 2.0]
        batch = geometry.project(pose, K, pts)
        for i in range(50):
            assert np.allclose(batch[i], geometry.project(pose, K, pts[i]))


class TestUnproject:
    def test_principal_point_depth_two(self):
        X = geometry.unproject(RigidPose.identity(), K, np.array([320.0, 320.0]), 2.0)
        assert np.allclose(X, [0.0, 0.0, 2.0])

    def test_round_trip(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            pose = random_pose(rng, 0.3, 0.2)
            xy = rng.uniform([0, 0], [640, 640])
            depth = rng.uniform(0.2, 5.0)
            X = geometry.unproject(pose, K, xy, depth)
            assert np.allclose(geometry.project(pose, K, X), xy, atol=1e-9)
            assert np.isclose(pose.apply(X)[2], depth)

    def test_translated_camera(self):
        # camera shifted one meter back along Z sees the point one meter deeper
        pose_cam = RigidPose(np.eye(3), np.array([0.0, 0.0, 1.0]))
        X = geometry.unproject(pose_cam, K, np.array([320.0, 320.0]), 2.0)
        assert np.allclose(X, [0.0, 0.0, 1.0])
        assert np.allclose(geometry.project(pose_cam, K, X), [320.0, 320.0], atol=1e-9)

    def test_nonpositive_depth_raises(self):
        with pytest.raises(NonPositiveDepth):
            geometry.unproject(RigidPose.identity(), K, np.array([1.0, 1.0]), 0.0)


class TestGroupOps:
    def test_compose_identity(self):
        rng = np.random.default_rng(11)
        p = random_pose(rng)
        q = RigidPose.identity().compose(p)
        assert q.almost_equal(p)

    def test_exp_zero_is_identity(self):
        assert geometry.exp(np.zeros(6)).almost_equal(RigidPose.identity())

    def test_log_exp_round_trip(self):
        delta = np.array([0.1, -0.2, 0.3, 0.01, 0.02, 0.03])
        assert np.allclose(geometry.log(geometry.exp(delta)), delta, atol=1e-9)

    def test_exp_matches_scipy_rotation(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            w = rng.normal(size=3)
            R = geometry.exp(np.concatenate([w, np.zeros(3)])).R
            assert np.allclose(R, Rotation.from_rotvec(w).as_matrix(), atol=1e-12)

    def test_group_axioms_random(self):
        rng = np.random.default_rng(17)
        for _ in range(10_000):
            a = random_pose(rng, 0.8, 1.0)
            b = random_pose(rng, 0.8, 1.0)
            c = random_pose(rng, 0.8, 1.0)
            ab_c = a.compose(b).compose(c)
            a_bc = a.compose(b.compose(c))
            assert np.allclose(ab_c.R, a_bc.R, atol=1e-9)
            assert np.allclose(ab_c.t, a_bc.t, atol=1e-9)
            ident = a.compose(a.inverse())
            assert np.allclose(ident.R, np.eye(3), atol=1e-9)
            assert np.allclose(ident.t, 0.0, atol=1e-9)

    def test_exp_log_round_trip_random(self):
        rng = np.random.default_rng(19)
        for _ in range(2000):
            # keep rotation angles below pi for principal-branch uniqueness
            w = rng.normal(size=3)
            w *= rng.uniform(0, 0.99 * np.pi) / np.linalg.norm(w)
            delta = np.concatenate([w, rng.normal(size=3)])
            assert np.allclose(geometry.log(geometry.exp(delta)), delta, atol=1e-9)

    def test_log_near_pi_principal_branch(self):
        w = np.array([0.0, 0.0, np.pi - 1e-7])
        p = geometry.exp(np.concatenate([w, np.zeros(3)]))
        back = geometry.log(p)
        assert np.isclose(np.linalg.norm(back[:3]), np.pi - 1e-7, atol=1e-5)

    def test_rotation_invariants(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            p = random_pose(rng)
            assert np.allclose(p.R.T @ p.R, np.eye(3), atol=1e-9)
            assert np.isclose(np.linalg.det(p.R), 1.0, atol=1e-9)


class TestInterpolate:
    def test_endpoints(self):
        rng = np.random.default_rng(29)
        a, b = random_pose(rng), random_pose(rng)
        assert geometry.interpolate_pose(a, b, 0.0).almost_equal(a)
        assert geometry.interpolate_pose(a, b, 1.0).almost_equal(b, tol=1e-9)

    def test_halfway_rotation(self):
        b = geometry.exp(np.array([0.0, 0.0, np.pi / 2, 0.0, 0.0, 0.0]))
        mid = geometry.interpolate_pose(RigidPose.identity(), b, 0.5)
        expected = geometry.exp(np.array([0.0, 0.0, np.pi / 4, 0.0, 0.0, 0.0]))
        assert mid.almost_equal(expected, tol=1e-9)


def finite_difference_jacobian(pose_cam, pose_model, X, h=1e-6):
    """Central-difference oracle for the 2x12 projection Jacobian."""
    J = np.zeros((2, 12))
    for k in range(12):
        d = np.zeros(6)
        d[k % 6] = h
        if k < 6:
            hi = geometry.project(geometry.exp(d).compose(pose_cam), K, pose_model.apply(X))
            lo = geometry.project(geometry.exp(-d).compose(pose_cam), K, pose_model.apply(X))
        else:
            hi = geometry.project(pose_cam, K, geometry.exp(d).compose(pose_model).apply(X))
            lo = geometry.project(pose_cam, K, geometry.exp(-d).compose(pose_model).apply(X))
        J[:, k] = (hi - lo) / (2 * h)
    return J


class TestProjectionJacobian:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            pose_cam = random_pose(rng, 0.4, 0.3)
            pose_model = random_pose(rng, 0.4, 0.3)
            X = rng.normal(size=3) * 0.3
            X[2] += 2.5  # keep well in front after random transforms
            try:
                J = geometry.projection_jacobian(pose_cam, pose_model, K, X)
            except NonPositiveDepth:
                continue
            J_fd = finite_difference_jacobian(pose_cam, pose_model, X)
            scale = max(1.0, np.abs(J_fd).max())
            assert np.abs(J - J_fd).max() / scale < 1e-4

    def test_translation_columns_on_axis(self):
        X = np.array([0.0, 0.0, 2.0])
        J = geometry.projection_jacobian(RigidPose.identity(), RigidPose.identity(), K, X)
        # camera-tangent translation columns (tx, ty) for an on-axis point
        assert np.allclose(J[:, 3], [K.fx / 2.0, 0.0])
        assert np.allclose(J[:, 4], [0.0, K.fy / 2.0])

    def test_first_order_taylor(self):
        rng = np.random.default_rng(37)
        for _ in range(50):
            pose_cam = random_pose(rng, 0.3, 0.2)
            pose_model = random_pose(rng, 0.3, 0.2)
            X = rng.normal(size=3) * 0.2
            X[2] += 2.0
            try:
                p0 = geometry.project(pose_cam, K, pose_model.apply(X))
                J = geometry.projection_jacobian(pose_cam, pose_model, K, X)
            except NonPositiveDepth:
                continue
            if pose_cam.apply(pose_model.apply(X))[2] < 0.5:
                continue  # grazing depths make the remainder bound meaningless
            d = rng.normal(size=12) * 1e-4
            cam2 = geometry.exp(d[:6]).compose(pose_cam)
            mod2 = geometry.exp(d[6:]).compose(pose_model)
            p1 = geometry.project(cam2, K, mod2.apply(X))
            remainder = np.linalg.norm((p1 - p0) - J @ d)
            # remainder is second order in the perturbation
            assert remainder <= 1e4 * np.dot(d, d)
            assert remainder <= 0.05 * max(np.linalg.norm(J @ d), 1e-9)


class TestSerialization:
    def test_pose_json_round_trip(self):
        rng = np.random.default_rng(41)
        p = random_pose(rng)
        q = RigidPose.from_json(p.to_json())
        assert q.almost_equal(p, tol=1e-12)

    def test_pose_json_row_major_layout(self):
        p = geometry.exp(np.array([0.0, 0.0, np.pi / 2, 0.0, 0.0, 0.0]))
        d = p.to_json_dict()
        assert len(d["R"]) == 9 and len(d["t"]) == 3
        assert np.allclose(np.asarray(d["R"]).reshape(3, 3), p.R)

    def test_intrinsics_round_trip(self):
        d = K.to_json_dict()
        assert tuple(d) == ("fx", "fy", "cx", "cy", "width", "height")
        assert CameraIntrinsics.from_json_dict(d) == K


class TestValidation:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            RigidPose(np.eye(3) * 2.0, np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(ValueError):
            RigidPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_intrinsics_validation(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(fx=-1, fy=1, cx=0, cy=0, width=10, height=10)
        with pytest.raises(ValueError):
            CameraIntrinsics(fx=1, fy=1, cx=20, cy=0, width=10, height=10)

    def test_orthonormalized_repairs_drift(self):
        rng = np.random.default_rng(43)
        p = random_pose(rng)
        drifted = p.R + rng.normal(size=(3, 3)) * 1e-7
        fixed = RigidPose(drifted / np.cbrt(np.linalg.det(drifted)), p.t).orthonormalized()
        assert np.allclose(fixed.R.T @ fixed.R, np.eye(3), atol=1e-12)
