"""Task-agnostic pixel-to-position reconstruction and its fine-tuning.

A small network learns the inverse of the camera projection over a
workspace region from automatically generated (pixel, position) pairs.
A handful of oracle demonstrations can later fine-tune it toward the
task's own state distribution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import nn
from .camera import CameraConfig, project_batch
from .errors import BehindCamera, CalibrationInfeasible, NoGroundingData, NoTrainingData
from .placement import WorkspaceCloud, covariance, eigendecompose
from .types import PixelPoint, Vec3, PROVENANCE_ORACLE


class ExtrapolationWarning(UserWarning):
    """A pixel outside the image bounds was reconstructed by extrapolation."""


# Desk-scale default working region, meters.
DEFAULT_BOX_LO = (-0.4, -0.4, 0.0)
DEFAULT_BOX_HI = (0.4, 0.4, 0.3)


@dataclass(frozen=True)
class BoxWorkspace:
    """Axis-aligned box region; a zero-thickness axis makes it planar."""

    lo: tuple = DEFAULT_BOX_LO
    hi: tuple = DEFAULT_BOX_HI

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        return rng.uniform(size=(n, 3)) * (hi - lo) + lo

    def to_record(self) -> dict:
        return {"kind": "workspace", "type": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class PlanarWorkspace:
    """A horizontal rectangle at fixed height."""

    lo: tuple = (-0.4, -0.4)
    hi: tuple = (0.4, 0.4)
    z: float = 0.02

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        xy = rng.uniform(size=(n, 2)) * (np.subtract(self.hi, self.lo)) + self.lo
        return np.column_stack([xy, np.full(n, self.z)])

    def to_record(self) -> dict:
        return {
            "kind": "workspace",
            "type": "planar",
            "lo": list(self.lo),
            "hi": list(self.hi),
            "z": self.z,
        }


@dataclass(frozen=True)
class CurvedSheetWorkspace:
    """A rippled sheet: z = amplitude * sin(3x) * cos(3y) + base height."""

    lo: tuple = (-0.4, -0.4)
    hi: tuple = (0.4, 0.4)
    amplitude: float = 0.1
    base_z: float = 0.15

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        xy = rng.uniform(size=(n, 2)) * (np.subtract(self.hi, self.lo)) + self.lo
        z = self.amplitude * np.sin(3 * xy[:, 0]) * np.cos(3 * xy[:, 1]) + self.base_z
        return np.column_stack([xy, z])

    def to_record(self) -> dict:
        return {
            "kind": "workspace",
            "type": "curved_sheet",
            "lo": list(self.lo),
            "hi": list(self.hi),
            "amplitude": self.amplitude,
            "base_z": self.base_z,
        }


def workspace_from_record(rec: dict):
    kind = rec.get("type")
    if kind == "box":
        return BoxWorkspace(lo=tuple(rec["lo"]), hi=tuple(rec["hi"]))
    if kind == "planar":
        return PlanarWorkspace(lo=tuple(rec["lo"]), hi=tuple(rec["hi"]), z=float(rec["z"]))
    if kind == "curved_sheet":
        return CurvedSheetWorkspace(
            lo=tuple(rec["lo"]),
            hi=tuple(rec["hi"]),
            amplitude=float(rec["amplitude"]),
            base_z=float(rec["base_z"]),
        )
    raise ValueError(f"unknown workspace type {kind!r}")


def workspace_cloud(workspace, n: int = 2000, seed: int = 0) -> WorkspaceCloud:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return WorkspaceCloud(workspace.sample(n, rng))


@dataclass(frozen=True)
class CalibrationSet:
    """Automatically generated (pixel, position) pairs for one camera."""

    pixels: np.ndarray  # (n, 2)
    positions: np.ndarray  # (n, 3)
    camera: CameraConfig

    def __post_init__(self):
        if len(self.pixels) != len(self.positions):
            raise ValueError("pixel/position counts differ")

    def __len__(self) -> int:
        return len(self.pixels)


def generate_calibration(
    cfg: CameraConfig, workspace, count: int, seed: int = 0
) -> CalibrationSet:
    """Sample workspace positions uniformly and project them to pixels.

    Task-agnostic by construction: this runs before any drawing exists.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    positions = workspace.sample(count, rng)
    try:
        pixels = project_batch(cfg, positions) if count else np.zeros((0, 2))
    except BehindCamera as e:
        raise CalibrationInfeasible(str(e)) from e
    return CalibrationSet(pixels=pixels, positions=positions, camera=cfg)


DEFAULT_MAP_TRAIN = nn.TrainConfig(
    learning_rate=0.05, epochs=1500, batch_size=128, seed=0, momentum=0.9
)

# Fine-tuning takes small steps so the calibration manifold is adapted,
# not forgotten.
DEFAULT_MAP_FINETUNE = nn.TrainConfig(
    learning_rate=0.005, epochs=200, batch_size=32, seed=0, momentum=0.9
)

HOLDOUT_FRACTION = 0.1


def _split(n: int, seed: int):
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5EED)))
    perm = rng.permutation(n)
    n_hold = max(1, int(n * HOLDOUT_FRACTION)) if n > 1 else 0
    return perm[n_hold:], perm[:n_hold]


@dataclass
class MappingResult:
    net: nn.Approximator
    train_rmse: float
    holdout_rmse: float
    loss_curve: list


def train_mapping(calib: CalibrationSet, cfg: nn.TrainConfig = DEFAULT_MAP_TRAIN) -> MappingResult:
    """Fit the pixel-to-position network on a calibration set.

    Reports train and holdout RMSE in meters over a deterministic 90/10
    split.
    """
    if len(calib) == 0:
        raise NoTrainingData("calibration set is empty")
    train_idx, hold_idx = _split(len(calib), cfg.seed)
    net = nn.initialize(nn.mapping_architecture(), seed=cfg.seed)
    result = nn.fit(net, (calib.pixels[train_idx], calib.positions[train_idx]), cfg)
    train_rmse = nn.rmse(result.net, calib.pixels[train_idx], calib.positions[train_idx])
    if len(hold_idx):
        holdout_rmse = nn.rmse(result.net, calib.pixels[hold_idx], calib.positions[hold_idx])
    else:
        holdout_rmse = train_rmse
    return MappingResult(
        net=result.net,
        train_rmse=train_rmse,
        holdout_rmse=holdout_rmse,
        loss_curve=result.loss_curve,
    )


def reconstruct_batch(f: nn.Approximator, pixels: np.ndarray) -> np.ndarray:
    return nn.forward_batch(f, np.asarray(pixels, dtype=np.float64))


def reconstruct(f: nn.Approximator, p: PixelPoint, image_size=None) -> Vec3:
    """Map one pixel to a workspace position.

    Out-of-bounds pixels still reconstruct (users may draw slightly past
    the calibrated hull) but are tagged with an ExtrapolationWarning.
    """
    if image_size is not None:
        w, h = image_size
        if not (0 <= p.u < w and 0 <= p.v < h):
            warnings.warn(
                f"pixel ({p.u:.1f}, {p.v:.1f}) outside {w}x{h} image; extrapolating",
                ExtrapolationWarning,
                stacklevel=2,
            )
    return Vec3.from_array(reconstruct_batch(f, [[p.u, p.v]])[0])


@dataclass
class FinetuneResult:
    net: nn.Approximator
    rmse_before: float
    rmse_after: float
    holdout_rmse_before: float
    holdout_rmse_after: float


def finetune_mapping(
    f: nn.Approximator,
    oracle_demos,
    cfg_oracle: CameraConfig,
    cfg: nn.TrainConfig = DEFAULT_MAP_FINETUNE,
) -> FinetuneResult:
    """Adapt the mapping to the task manifold traced by oracle demos.

    Projects each demonstrated end-effector position through the oracle
    camera to form new (pixel, position) pairs and continues gradient
    descent from the given parameters. The input model is not modified;
    RMSE on held-out oracle states is reported before and after.
    """
    if oracle_demos.provenance != PROVENANCE_ORACLE or len(oracle_demos) == 0:
        raise NoGroundingData("fine-tuning requires non-empty oracle demonstrations")
    positions = np.array(
        [s.robot.position.as_array() for s, _ in oracle_demos.pairs]
    )
    pixels = project_batch(cfg_oracle, positions)
    train_idx, hold_idx = _split(len(positions), cfg.seed)
    if len(hold_idx) == 0:
        hold_idx = train_idx

    rmse_before = nn.rmse(f, pixels[train_idx], positions[train_idx])
    hold_before = nn.rmse(f, pixels[hold_idx], positions[hold_idx])
    result = nn.fit(f, (pixels[train_idx], positions[train_idx]), cfg)
    rmse_after = nn.rmse(result.net, pixels[train_idx], positions[train_idx])
    hold_after = nn.rmse(result.net, pixels[hold_idx], positions[hold_idx])
    return FinetuneResult(
        net=result.net,
        rmse_before=rmse_before,
        rmse_after=rmse_after,
        holdout_rmse_before=hold_before,
        holdout_rmse_after=hold_after,
    )


def linear_pca_rmse(points: np.ndarray) -> float:
    """Reconstruction error of the best 2D linear embedding.

    Projects each point onto the plane of the two largest principal
    components through the centroid and measures the residual; the
    baseline any nonlinear mapping should beat on curved workspaces.
    """
    pts = np.asarray(points, dtype=np.float64)
    centroid = pts.mean(axis=0)
    spectrum = eigendecompose(covariance(pts))
    v3 = spectrum.vectors[:, 2]
    resid = (pts - centroid) @ v3
    return float(np.sqrt(np.mean(resid**2)))


def save_mapping(path, result: MappingResult) -> None:
    from . import records

    rec = result.net.to_record()
    rec["role"] = "mapping"
    rec["train_rmse"] = result.train_rmse
    rec["holdout_rmse"] = result.holdout_rmse
    records.write_records(path, [rec])


def load_model(path) -> nn.Approximator:
    from . import records

    for rec in records.read_records(path):
        if rec["kind"] == "model":
            return nn.Approximator.from_record(rec)
    raise NoTrainingData(f"no model record in {path}")
