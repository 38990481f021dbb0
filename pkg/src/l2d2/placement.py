"""Camera placement by principal component analysis of the workspace.

The information lost by drawing on a 2D image is the fraction of the
workspace variance that falls along the camera's optical axis. Aligning
that axis with the least-variance eigenvector of the workspace covariance
minimizes the loss, which then equals lambda_3 / (lambda_1 + lambda_2 +
lambda_3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import CameraConfig, project_batch
from .errors import (
    BehindCamera,
    InsufficientSamples,
    NotSymmetric,
    PlacementInfeasible,
)
from .types import Vec3

JACOBI_MAX_SWEEPS = 50
JACOBI_OFFDIAG_TOL = 1e-12

VISIBILITY_GROWTH = 1.25
VISIBILITY_MAX_STEPS = 20


@dataclass(frozen=True)
class WorkspaceCloud:
    """Sampled workspace positions in the robot frame."""

    points: np.ndarray  # (n, 3)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (n, 3), got {pts.shape}")
        if len(pts) < 4:
            raise ValueError(f"need at least 4 points, got {len(pts)}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def to_record(self) -> dict:
        return {"kind": "workspace", "points": self.points.tolist()}

    @classmethod
    def from_record(cls, r: dict) -> "WorkspaceCloud":
        return cls(np.array(r["points"], dtype=np.float64))


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues in descending order with orthonormal eigenvectors.

    ``vectors[:, i]`` is the eigenvector for ``values[i]``.
    """

    values: np.ndarray  # (3,)
    vectors: np.ndarray  # (3, 3), columns

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if list(vals) != sorted(vals, reverse=True):
            raise ValueError("eigenvalues must be in descending order")
        if not np.allclose(vecs.T @ vecs, np.eye(3), atol=1e-9):
            raise ValueError("eigenvectors are not orthonormal to 1e-9")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "vectors", vecs)


def covariance(points) -> np.ndarray:
    """Sample covariance of mean-centered points, divisor n - 1."""
    if isinstance(points, WorkspaceCloud):
        points = points.points
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n < 2:
        raise InsufficientSamples(f"covariance needs >= 2 points, got {n}")
    centered = pts - pts.mean(axis=0)
    return centered.T @ centered / (n - 1)


def eigendecompose(sigma: np.ndarray) -> Spectrum:
    """Eigendecomposition of a symmetric 3x3 matrix by cyclic Jacobi.

    The sweep order over pivots (0,1), (0,2), (1,2) is fixed, making the
    returned basis deterministic for repeated eigenvalues.
    """
    a = np.asarray(sigma, dtype=np.float64).copy()
    if a.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got {a.shape}")
    if not np.allclose(a, a.T, atol=1e-9):
        raise NotSymmetric("matrix is not symmetric to 1e-9")
    a = (a + a.T) / 2.0
    v = np.eye(3)

    def offdiag(m):
        return math.sqrt(2.0 * (m[0, 1] ** 2 + m[0, 2] ** 2 + m[1, 2] ** 2))

    for _ in range(JACOBI_MAX_SWEEPS):
        if offdiag(a) < JACOBI_OFFDIAG_TOL:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            if apq == 0.0:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            s = t * c
            rot = np.eye(3)
            rot[p, p] = rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            a = (a + a.T) / 2.0
            v = v @ rot

    order = np.argsort(a.diagonal())[::-1]
    values = a.diagonal()[order].copy()
    vectors = v[:, order].copy()
    # Deterministic sign: largest-magnitude component of each vector positive.
    for i in range(3):
        k = int(np.argmax(np.abs(vectors[:, i])))
        if vectors[k, i] < 0:
            vectors[:, i] = -vectors[:, i]
    return Spectrum(values=values, vectors=vectors)


def info_loss(cfg: CameraConfig, cloud) -> float:
    """Fraction of workspace variance along the camera's optical axis.

    Variance is translation-invariant, so only the camera rotation enters;
    the same placement translated anywhere scores identically, bit for bit.
    Returns 0 by convention when the cloud has no variance at all.
    """
    pts = cloud.points if isinstance(cloud, WorkspaceCloud) else np.asarray(cloud)
    cam = pts @ cfg.rotation.T
    var = cam.var(axis=0, ddof=1)
    total = float(var.sum())
    if total == 0.0:
        return 0.0
    return float(var[2] / total)


def axis_loss(axis: np.ndarray, points: np.ndarray) -> float:
    """Variance fraction along one unit direction; brute-force helper."""
    z = points @ axis
    total = points.var(axis=0, ddof=1).sum()
    if total == 0.0:
        return 0.0
    return float(z.var(ddof=1) / total)


def sweep_losses(points: np.ndarray, n_orientations: int, seed: int) -> np.ndarray:
    """Losses of uniformly random optical-axis directions.

    The independent oracle for placement optimality: no orientation should
    beat the PCA placement by more than numerical noise.
    """
    rng = np.random.default_rng(seed)
    axes = rng.normal(size=(n_orientations, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    z = points @ axes.T  # (n_points, n_orientations)
    total = points.var(axis=0, ddof=1).sum()
    if total == 0.0:
        return np.zeros(n_orientations)
    return z.var(axis=0, ddof=1) / total


def _camera_rotation(x_axis: np.ndarray, z_axis: np.ndarray) -> np.ndarray:
    """Right-handed rotation with rows (x, y, z) camera axes in robot frame."""
    x = x_axis / np.linalg.norm(x_axis)
    z = z_axis / np.linalg.norm(z_axis)
    y = np.cross(z, x)
    y /= np.linalg.norm(y)
    x = np.cross(y, z)
    return np.stack([x, y, z])


def optimal_placement(
    cloud: WorkspaceCloud,
    distance: float,
    template: CameraConfig | None = None,
) -> CameraConfig:
    """Place the camera so its optical axis carries the least variance.

    The camera sits at centroid + distance * v3 looking back along v3,
    with the image x-axis along v1. The v3 sign is chosen so the camera
    sits on the side where the cloud extends least (larger clearance);
    near-vertical v3 prefers the side above the workspace. If any cloud
    point falls outside the image, the distance grows by 1.25x, up to 20
    times, before giving up.
    """
    if template is None:
        template = CameraConfig.identity()
    spectrum = eigendecompose(covariance(cloud))
    v1 = spectrum.vectors[:, 0]
    v3 = spectrum.vectors[:, 2]

    centroid = cloud.centroid()
    along = (cloud.points - centroid) @ v3
    extent_pos = float(along.max())
    extent_neg = float(-along.min())
    if abs(extent_pos - extent_neg) > 1e-12:
        sign = 1.0 if extent_pos < extent_neg else -1.0
    else:
        sign = 1.0 if v3[2] >= 0 else -1.0
    v3 = sign * v3

    rotation = _camera_rotation(x_axis=v1, z_axis=-v3)

    d = float(distance)
    for _ in range(VISIBILITY_MAX_STEPS + 1):
        position = centroid + d * v3
        translation = Vec3.from_array(-rotation @ position)
        cfg = CameraConfig(
            rotation=rotation,
            translation=translation,
            fx=template.fx,
            fy=template.fy,
            cx=template.cx,
            cy=template.cy,
            width=template.width,
            height=template.height,
        )
        try:
            pixels = project_batch(cfg, cloud.points)
        except BehindCamera:
            d *= VISIBILITY_GROWTH
            continue
        visible = (
            (pixels[:, 0] >= 0)
            & (pixels[:, 0] < cfg.width)
            & (pixels[:, 1] >= 0)
            & (pixels[:, 1] < cfg.height)
        )
        if visible.all():
            return cfg
        d *= VISIBILITY_GROWTH
    raise PlacementInfeasible(
        f"cloud not fully visible after {VISIBILITY_MAX_STEPS} distance increases"
    )
