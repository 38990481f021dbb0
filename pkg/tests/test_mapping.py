import math
import warnings

import numpy as np
import pytest

from l2d2 import mapping, nn
from l2d2.camera import project, unproject_with_depth
from l2d2.errors import NoGroundingData, NoTrainingData
from l2d2.placement import info_loss, optimal_placement
from l2d2.types import PixelPoint, PROVENANCE_ORACLE, Vec3
from l2d2.sim import oracle_dataset, get_task

FAST = nn.TrainConfig(learning_rate=0.05, epochs=400, batch_size=128, seed=0, momentum=0.9)


def make_camera(workspace, seed=1):
    cloud = mapping.workspace_cloud(workspace, 1500, seed=seed)
    return optimal_placement(cloud, distance=1.5), cloud


class TestGenerateCalibration:
    def test_pairs_satisfy_projection(self):
        ws = mapping.BoxWorkspace()
        cam, _ = make_camera(ws)
        calib = mapping.generate_calibration(cam, ws, 200, seed=3)
        for i in range(0, 200, 17):
            p = project(cam, Vec3.from_array(calib.positions[i]))
            assert math.hypot(p.u - calib.pixels[i, 0], p.v - calib.pixels[i, 1]) < 1e-6

    def test_count_zero_allowed_but_training_rejects(self):
        ws = mapping.BoxWorkspace()
        cam, _ = make_camera(ws)
        calib = mapping.generate_calibration(cam, ws, 0, seed=3)
        assert len(calib) == 0
        with pytest.raises(NoTrainingData):
            mapping.train_mapping(calib, FAST)

    def test_pixel_coverage(self):
        # 5000 samples over the default box must paint a broad swath of
        # the image. Full visibility with the default 800 px focals caps
        # 32x32 grid occupancy near a third (the far plane spans ~56% of
        # u), so the frozen bound comes from that geometry, and the
        # projected extent must span well over half of each image axis.
        ws = mapping.BoxWorkspace()
        cam, _ = make_camera(ws)
        calib = mapping.generate_calibration(cam, ws, 5000, seed=4)
        gw = np.floor(calib.pixels[:, 0] / cam.width * 32).astype(int)
        gh = np.floor(calib.pixels[:, 1] / cam.height * 32).astype(int)
        occupied = len(set(zip(gw.tolist(), gh.tolist())))
        assert occupied >= 0.30 * 32 * 32
        u_span = (calib.pixels[:, 0].max() - calib.pixels[:, 0].min()) / cam.width
        v_span = (calib.pixels[:, 1].max() - calib.pixels[:, 1].min()) / cam.height
        assert u_span > 0.6 and v_span > 0.6

    def test_deterministic(self):
        ws = mapping.BoxWorkspace()
        cam, _ = make_camera(ws)
        a = mapping.generate_calibration(cam, ws, 50, seed=5)
        b = mapping.generate_calibration(cam, ws, 50, seed=5)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.pixels, b.pixels)


class TestTrainMapping:
    def test_planar_reaches_5mm(self):
        ws = mapping.PlanarWorkspace()
        cam, _ = make_camera(ws)
        calib = mapping.generate_calibration(cam, ws, 5000, seed=2)
        result = mapping.train_mapping(calib)
        assert result.holdout_rmse < 0.005

    def test_box_much_worse_than_planar(self):
        ws = mapping.BoxWorkspace()
        cam, _ = make_camera(ws)
        calib = mapping.generate_calibration(cam, ws, 5000, seed=2)
        result = mapping.train_mapping(calib, FAST)
        # Depth ambiguity bounds the box fixture near 0.3/sqrt(12) m.
        assert result.holdout_rmse > 0.05

    def test_curved_beats_linear_pca(self):
        ws = mapping.CurvedSheetWorkspace()
        cam, _ = make_camera(ws)
        calib = mapping.generate_calibration(cam, ws, 5000, seed=2)
        result = mapping.train_mapping(calib)
        linear = mapping.linear_pca_rmse(calib.positions)
        assert result.holdout_rmse <= linear + 1e-6

    def test_info_loss_ordering_matches_fixtures(self):
        # The camera-model loss ordering is exact; empirical RMSE separates
        # the lossy box fixture from the two decodable ones.
        losses = {}
        rmses = {}
        for name, ws in [
            ("planar", mapping.PlanarWorkspace()),
            ("curved", mapping.CurvedSheetWorkspace()),
            ("box", mapping.BoxWorkspace()),
        ]:
            cam, cloud = make_camera(ws)
            losses[name] = info_loss(cam, cloud)
            calib = mapping.generate_calibration(cam, ws, 4000, seed=2)
            rmses[name] = mapping.train_mapping(calib, FAST).holdout_rmse
        assert losses["planar"] <= 1e-12 < losses["curved"] < losses["box"]
        assert rmses["planar"] < rmses["box"]
        assert rmses["curved"] < rmses["box"]


class TestReconstruct:
    def test_deterministic(self):
        net = nn.initialize(nn.mapping_architecture(), seed=0)
        p = PixelPoint(100.0, 200.0)
        a = mapping.reconstruct(net, p)
        b = mapping.reconstruct(net, p)
        assert a == b

    def test_out_of_bounds_warns(self):
        net = nn.initialize(nn.mapping_architecture(), seed=0)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            mapping.reconstruct(net, PixelPoint(-5.0, 10.0), image_size=(960, 720))
        assert any(issubclass(w.category, mapping.ExtrapolationWarning) for w in caught)

    def test_training_point_within_holdout_rmse(self):
        ws = mapping.PlanarWorkspace()
        cam, _ = make_camera(ws)
        calib = mapping.generate_calibration(cam, ws, 4000, seed=6)
        result = mapping.train_mapping(calib)
        errs = []
        for i in range(0, 400, 13):
            got = mapping.reconstruct(result.net, PixelPoint(*calib.pixels[i]))
            errs.append(got.dist(Vec3.from_array(calib.positions[i])))
        assert np.mean(errs) < 4 * result.holdout_rmse

    def test_principal_point_geometric_oracle(self):
        # On a planar workspace, the principal-point pixel reconstructs to
        # the optical axis / plane intersection, located independently via
        # the ground-truth unprojection at the plane's depth.
        ws = mapping.PlanarWorkspace(z=0.05)
        cam, _ = make_camera(ws)
        calib = mapping.generate_calibration(cam, ws, 5000, seed=7)
        result = mapping.train_mapping(calib)
        pp = PixelPoint(cam.cx, cam.cy)
        cam_frame_plane = cam.rotation @ np.array([0.0, 0.0, 0.05]) + cam.translation.as_array()
        depth = cam_frame_plane[2]
        expected = unproject_with_depth(cam, pp, depth)
        got = mapping.reconstruct(result.net, pp)
        assert got.dist(expected) < max(0.01, 5 * result.holdout_rmse)


class TestFinetune:
    def _setup(self):
        ws = mapping.BoxWorkspace()
        cam, _ = make_camera(ws)
        calib = mapping.generate_calibration(cam, ws, 3000, seed=8)
        trained = mapping.train_mapping(calib, FAST)
        oracle = oracle_dataset(get_task("lift"), 6, seed=11)
        return cam, trained, oracle

    def test_zero_learning_rate_is_identity(self):
        cam, trained, oracle = self._setup()
        cfg = nn.TrainConfig(learning_rate=0.0, epochs=10, batch_size=16, seed=0)
        result = mapping.finetune_mapping(trained.net, oracle, cam, cfg)
        for a, b in zip(result.net.weights, trained.net.weights):
            assert np.array_equal(a, b)

    def test_input_model_not_modified(self):
        cam, trained, oracle = self._setup()
        before = [w.copy() for w in trained.net.weights]
        mapping.finetune_mapping(trained.net, oracle, cam)
        for a, b in zip(trained.net.weights, before):
            assert np.array_equal(a, b)

    def test_task_region_rmse_improves_under_shift(self):
        # Calibrate on the box, then present a task manifold outside it:
        # fine-tuning must cut the task-region RMSE.
        ws = mapping.BoxWorkspace()
        cam, _ = make_camera(ws)
        calib = mapping.generate_calibration(cam, ws, 4000, seed=9)
        trained = mapping.train_mapping(calib, FAST)

        shifted = mapping.PlanarWorkspace(lo=(0.42, -0.2), hi=(0.55, 0.2), z=0.35)
        rng = np.random.default_rng(10)
        pts = shifted.sample(300, rng)
        from l2d2.types import (
            Action,
            DemoDataset,
            RobotState,
            Rotation,
            SystemState,
        )

        demos = DemoDataset(provenance=PROVENANCE_ORACLE)
        pairs = [
            (
                SystemState(
                    RobotState(Vec3.from_array(p), Rotation(0, 0, 0), 0), ()
                ),
                Action.zero(),
            )
            for p in pts
        ]
        demos.extend(pairs)
        result = mapping.finetune_mapping(trained.net, demos, cam)
        assert result.holdout_rmse_after < 0.8 * result.holdout_rmse_before

    def test_requires_oracle_provenance(self):
        cam, trained, oracle = self._setup()
        from l2d2.types import DemoDataset

        with pytest.raises(NoGroundingData):
            mapping.finetune_mapping(trained.net, DemoDataset(provenance=PROVENANCE_ORACLE), cam)
        reconstructed = DemoDataset(pairs=oracle.pairs, provenance="reconstructed",
                                    boundaries=oracle.boundaries)
        with pytest.raises(NoGroundingData):
            mapping.finetune_mapping(trained.net, reconstructed, cam)


class TestWorkspaceRecords:
    def test_roundtrip(self):
        for ws in (
            mapping.BoxWorkspace(),
            mapping.PlanarWorkspace(z=0.07),
            mapping.CurvedSheetWorkspace(amplitude=0.2),
        ):
            back = mapping.workspace_from_record(ws.to_record())
            assert back == ws
