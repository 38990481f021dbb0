import math

import numpy as np
import pytest

from l2d2.camera import (
    CameraConfig,
    in_bounds,
    project,
    project_batch,
    to_camera_frame,
    unproject_with_depth,
)
from l2d2.errors import BehindCamera
from l2d2.types import PixelPoint, Vec3


def centered_cfg(**kw):
    # Principal point must sit inside the image, so a 1x1 image hosts the
    # (0, 0)-centered examples.
    kw.setdefault("fx", 100.0)
    kw.setdefault("fy", 100.0)
    kw.setdefault("cx", 0.0)
    kw.setdefault("cy", 0.0)
    kw.setdefault("width", 1)
    kw.setdefault("height", 1)
    return CameraConfig.identity(**kw)


class TestToCameraFrame:
    def test_identity(self):
        cfg = CameraConfig.identity()
        assert to_camera_frame(cfg, Vec3(1, 2, 3)) == Vec3(1, 2, 3)

    def test_translation(self):
        cfg = CameraConfig(rotation=np.eye(3), translation=Vec3(0, 0, -2))
        assert to_camera_frame(cfg, Vec3(0, 0, 3)) == Vec3(0, 0, 1)

    def test_rotation_about_z(self):
        rz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        cfg = CameraConfig(rotation=rz, translation=Vec3(0, 0, 0))
        p = to_camera_frame(cfg, Vec3(1, 0, 0))
        assert np.allclose([p.x, p.y, p.z], [0, 1, 0], atol=1e-12)

    def test_rigid_distance_preservation(self):
        rng = np.random.default_rng(0)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = 1.1
        k = np.array(
            [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
        )
        rot = np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * k @ k
        cfg = CameraConfig(rotation=rot, translation=Vec3(0.3, -0.2, 1.4))
        for _ in range(100):
            a = Vec3(*rng.uniform(-1, 1, 3))
            b = Vec3(*rng.uniform(-1, 1, 3))
            ca = to_camera_frame(cfg, a)
            cb = to_camera_frame(cfg, b)
            assert math.isclose(ca.dist(cb), a.dist(b), abs_tol=1e-9)


class TestProject:
    def test_optical_axis(self):
        p = project(centered_cfg(), Vec3(0, 0, 1))
        assert (p.u, p.v) == (0, 0)

    def test_similar_triangles(self):
        p = project(centered_cfg(), Vec3(0.5, 0, 1))
        assert np.allclose([p.u, p.v], [50, 0])

    def test_perspective_division_vs_homogeneous_oracle(self):
        # Independent formulation: K [R|t] applied in homogeneous
        # coordinates, then divide by the third component.
        cfg = centered_cfg()
        p = project(cfg, Vec3(0.5, 0, 2))
        assert np.allclose([p.u, p.v], [25, 0])

        rng = np.random.default_rng(1)
        k = np.array([[cfg.fx, 0, cfg.cx], [0, cfg.fy, cfg.cy], [0, 0, 1]])
        rt = np.hstack([cfg.rotation, cfg.translation.as_array()[:, None]])
        for _ in range(50):
            v = Vec3(*rng.uniform(-1, 1, 2), rng.uniform(0.5, 3))
            hom = k @ rt @ np.array([v.x, v.y, v.z, 1.0])
            expect = hom[:2] / hom[2]
            got = project(cfg, v)
            assert np.allclose([got.u, got.v], expect, atol=1e-9)

    def test_behind_camera(self):
        with pytest.raises(BehindCamera):
            project(centered_cfg(), Vec3(0, 0, -1))
        with pytest.raises(BehindCamera):
            project(centered_cfg(), Vec3(0, 0, 0))

    def test_ray_scaling_invariance(self):
        # With a zero principal point the pixel depends only on the ray.
        cfg = centered_cfg()
        base = project(cfg, Vec3(0.2, -0.3, 1.0))
        for lam in (0.5, 2.0, 7.3):
            p = project(cfg, Vec3(0.2 * lam, -0.3 * lam, lam))
            assert math.isclose(p.u, base.u, abs_tol=1e-9)
            assert math.isclose(p.v, base.v, abs_tol=1e-9)


class TestUnproject:
    def test_exact_inverse_example(self):
        got = unproject_with_depth(centered_cfg(), PixelPoint(50, 0), 1.0)
        assert np.allclose([got.x, got.y, got.z], [0.5, 0, 1])

    def test_roundtrip_random_cloud(self):
        # Property over 10^4 sampled points: project then unproject at the
        # true depth recovers the point to well under 1e-9.
        rng = np.random.default_rng(7)
        rot = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
        cfg = CameraConfig(rotation=rot, translation=Vec3(0.1, -0.2, 2.0))
        pts = rng.uniform(-0.5, 0.5, size=(10_000, 3))
        cam = pts @ cfg.rotation.T + cfg.translation.as_array()
        pix = project_batch(cfg, pts)
        err2 = 0.0
        px_err = 0.0
        for i in range(len(pts)):
            back = unproject_with_depth(cfg, PixelPoint(*pix[i]), cam[i, 2])
            err2 += (back.as_array() - pts[i]) @ (back.as_array() - pts[i])
            rp = project(cfg, back)
            px_err = max(px_err, abs(rp.u - pix[i, 0]), abs(rp.v - pix[i, 1]))
        rmse = math.sqrt(err2 / len(pts))
        assert rmse < 1e-9
        assert px_err < 1e-9


class TestConfigValidation:
    def test_non_orthonormal_rejected(self):
        with pytest.raises(ValueError):
            CameraConfig(rotation=np.eye(3) * 1.001, translation=Vec3(0, 0, 0))

    def test_reflection_rejected(self):
        m = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            CameraConfig(rotation=m, translation=Vec3(0, 0, 0))

    def test_principal_point_bounds(self):
        with pytest.raises(ValueError):
            CameraConfig.identity(cx=2000.0)

    def test_in_bounds(self):
        cfg = CameraConfig.identity()
        assert in_bounds(cfg, PixelPoint(0, 0))
        assert not in_bounds(cfg, PixelPoint(-1, 0))
        assert not in_bounds(cfg, PixelPoint(cfg.width, 0))
