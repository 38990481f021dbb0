import math

import numpy as np
import pytest

from l2d2.camera import CameraConfig, project_batch
from l2d2.errors import InsufficientSamples, NotSymmetric, PlacementInfeasible
from l2d2.placement import (
    WorkspaceCloud,
    covariance,
    eigendecompose,
    info_loss,
    optimal_placement,
)
from l2d2.types import Vec3


def cloud_with_exact_covariance(eigenvalues, rotation=np.eye(3), n=500, seed=0):
    """Cloud whose sample covariance is exactly R diag(eigenvalues) R^T.

    Built by empirically whitening a random cloud, so the construction is
    independent of the covariance implementation under test.
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    xc = x - x.mean(axis=0)
    c = xc.T @ xc / (n - 1)
    w = np.linalg.inv(np.linalg.cholesky(c)).T
    y = (xc @ w) * np.sqrt(eigenvalues)
    return y @ rotation.T


class TestCovariance:
    def test_two_points_on_x(self):
        pts = np.array([[1.0, 0, 0], [-1.0, 0, 0], [1.0, 0, 0], [-1.0, 0, 0]])
        sigma = covariance(pts)
        assert np.allclose(sigma, np.diag([4 / 3, 0, 0]))
        # Minimal two-point case: variance 2 with divisor n-1 = 1.
        assert np.allclose(covariance(pts[:2]), np.diag([2.0, 0, 0]))

    def test_psd(self):
        rng = np.random.default_rng(2)
        sigma = covariance(rng.normal(size=(50, 3)) @ np.diag([1, 0.1, 3]))
        assert np.allclose(sigma, sigma.T)
        assert np.linalg.eigvalsh(sigma).min() >= -1e-12

    def test_uniform_cube_moments(self):
        # Independent oracle: accumulate second moments in a plain loop.
        rng = np.random.default_rng(3)
        pts = rng.uniform(0, 1, size=(1000, 3))
        sigma = covariance(pts)
        mean = pts.sum(axis=0) / len(pts)
        acc = np.zeros((3, 3))
        for p in pts:
            d = p - mean
            acc += np.outer(d, d)
        assert np.allclose(sigma, acc / (len(pts) - 1), atol=1e-12)
        # Var of U(0,1) is 1/12; allow 3 sigma of sampling error.
        se = (1 / 12) * math.sqrt(2 / (len(pts) - 1)) * 3
        assert np.allclose(np.diag(sigma), 1 / 12, atol=se * 3)
        off = sigma - np.diag(np.diag(sigma))
        assert np.abs(off).max() < 0.01

    def test_too_few_points(self):
        with pytest.raises(InsufficientSamples):
            covariance(np.zeros((1, 3)))


class TestEigendecompose:
    def test_diagonal(self):
        s = eigendecompose(np.diag([3.0, 2.0, 1.0]))
        assert np.allclose(s.values, [3, 2, 1], atol=1e-12)
        assert np.allclose(np.abs(s.vectors), np.eye(3), atol=1e-12)

    def test_rank_one(self):
        pts = np.outer(np.linspace(-1, 1, 20), [1.0, 2.0, -0.5])
        s = eigendecompose(covariance(pts))
        assert abs(s.values[1]) < 1e-10
        assert abs(s.values[2]) < 1e-10

    def test_reconstruction_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a = rng.normal(size=(3, 3))
            sigma = a @ a.T
            s = eigendecompose(sigma)
            recon = s.vectors @ np.diag(s.values) @ s.vectors.T
            assert np.allclose(recon, sigma, atol=1e-8 * max(1, np.abs(sigma).max()))
            # Cross-check eigenvalues against numpy.
            assert np.allclose(s.values, np.linalg.eigvalsh(sigma)[::-1], atol=1e-9)

    def test_eigenvector_equation(self):
        rng = np.random.default_rng(6)
        a = rng.normal(size=(3, 3))
        sigma = a @ a.T
        s = eigendecompose(sigma)
        for i in range(3):
            v = s.vectors[:, i]
            assert np.allclose(sigma @ v, s.values[i] * v, atol=1e-8 * (1 + s.values[0]))

    def test_not_symmetric(self):
        m = np.eye(3)
        m[0, 1] = 0.5
        with pytest.raises(NotSymmetric):
            eigendecompose(m)

    def test_deterministic_for_repeated_eigenvalues(self):
        sigma = np.diag([2.0, 2.0, 1.0])
        s1 = eigendecompose(sigma)
        s2 = eigendecompose(sigma.copy())
        assert np.array_equal(s1.vectors, s2.vectors)


class TestInfoLoss:
    def test_planar_cloud_zero(self):
        rng = np.random.default_rng(1)
        pts = np.column_stack([rng.uniform(-1, 1, 200), rng.uniform(-1, 1, 200), np.zeros(200)])
        cfg = CameraConfig.identity()  # optical axis = world z, normal to plane
        assert info_loss(cfg, pts) <= 1e-12

    def test_isotropic_third(self):
        pts = cloud_with_exact_covariance([1.0, 1.0, 1.0], n=400, seed=2)
        rng = np.random.default_rng(3)
        for _ in range(5):
            q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
            if np.linalg.det(q) < 0:
                q[:, 0] = -q[:, 0]
            cfg = CameraConfig(rotation=q.T, translation=Vec3(0, 0, 0))
            assert math.isclose(info_loss(cfg, pts), 1 / 3, abs_tol=1e-9)

    def test_aligned_loss_is_lambda3_fraction(self):
        # lambda = (3, 2, 1): a camera looking along v3 loses 1/6.
        pts = cloud_with_exact_covariance([3.0, 2.0, 1.0], n=600, seed=4)
        cfg = CameraConfig.identity()
        assert math.isclose(info_loss(cfg, pts), 1 / 6, abs_tol=1e-9)

    def test_translation_invariance_exact(self):
        pts = cloud_with_exact_covariance([3.0, 2.0, 1.0], n=100, seed=5)
        a = info_loss(CameraConfig.identity(), pts)
        b = info_loss(
            CameraConfig(rotation=np.eye(3), translation=Vec3(5.0, -2.0, 11.0)), pts
        )
        assert a == b

    def test_zero_variance_convention(self):
        pts = np.ones((5, 3))
        assert info_loss(CameraConfig.identity(), pts) == 0.0

    def test_orthonormal_triad_fractions_sum_to_one(self):
        pts = cloud_with_exact_covariance([2.5, 1.0, 0.4], n=300, seed=6)
        rng = np.random.default_rng(7)
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        fractions = []
        for axis in q.T:
            z = pts @ axis
            fractions.append(z.var(ddof=1) / pts.var(axis=0, ddof=1).sum())
        assert math.isclose(sum(fractions), 1.0, rel_tol=1e-12)


class TestOptimalPlacement:
    def test_planar_cloud(self):
        rng = np.random.default_rng(8)
        pts = np.column_stack(
            [rng.uniform(-0.4, 0.4, 300), rng.uniform(-0.4, 0.4, 300), np.full(300, 0.1)]
        )
        cloud = WorkspaceCloud(pts)
        cfg = optimal_placement(cloud, distance=1.5)
        assert info_loss(cfg, cloud) <= 1e-12
        # Optical axis normal to the plane; camera above it.
        assert abs(abs(cfg.rotation[2, 2]) - 1.0) < 1e-9

    def test_achieved_loss_and_sweep_oracle(self):
        rot_target = np.array(
            [
                [0.36, 0.48, -0.8],
                [-0.8, 0.6, 0.0],
                [0.48, 0.64, 0.6],
            ]
        )
        pts = cloud_with_exact_covariance([3.0, 2.0, 1.0], rot_target, n=600, seed=9)
        cloud = WorkspaceCloud(pts + [0.0, 0.0, 5.0])
        cfg = optimal_placement(cloud, distance=8.0)
        achieved = info_loss(cfg, cloud)
        assert math.isclose(achieved, 1 / 6, abs_tol=1e-9)

        # Brute-force oracle, computed from scratch: no random optical axis
        # may undercut the PCA placement by more than numerical slack.
        rng = np.random.default_rng(10)
        axes = rng.normal(size=(10_000, 3))
        axes /= np.linalg.norm(axes, axis=1, keepdims=True)
        total = cloud.points.var(axis=0, ddof=1).sum()
        sweep = (cloud.points @ axes.T).var(axis=0, ddof=1) / total
        assert sweep.min() >= achieved - 1e-6

    def test_isotropic_any_orientation(self):
        pts = cloud_with_exact_covariance([1.0, 1.0, 1.0], n=400, seed=11)
        cloud = WorkspaceCloud(pts + [0, 0, 3.0])
        cfg = optimal_placement(cloud, distance=6.0)
        assert math.isclose(info_loss(cfg, cloud), 1 / 3, abs_tol=1e-9)

    def test_all_points_visible(self):
        rng = np.random.default_rng(12)
        cloud = WorkspaceCloud(rng.uniform(-0.4, 0.4, size=(200, 3)))
        cfg = optimal_placement(cloud, distance=0.05)  # forces distance growth
        pix = project_batch(cfg, cloud.points)
        assert (pix[:, 0] >= 0).all() and (pix[:, 0] < cfg.width).all()
        assert (pix[:, 1] >= 0).all() and (pix[:, 1] < cfg.height).all()

    def test_infeasible_fov(self):
        rng = np.random.default_rng(13)
        cloud = WorkspaceCloud(rng.uniform(-0.4, 0.4, size=(50, 3)))
        narrow = CameraConfig.identity(fx=1e9, fy=1e9, width=4, height=4, cx=2.0, cy=2.0)
        with pytest.raises(PlacementInfeasible):
            optimal_placement(cloud, distance=1.0, template=narrow)

    def test_deterministic(self):
        rng = np.random.default_rng(14)
        pts = rng.uniform(-0.3, 0.3, size=(100, 3))
        a = optimal_placement(WorkspaceCloud(pts), 1.5)
        b = optimal_placement(WorkspaceCloud(pts.copy()), 1.5)
        assert np.array_equal(a.rotation, b.rotation)
        assert a.translation == b.translation
