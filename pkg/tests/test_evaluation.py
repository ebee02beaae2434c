import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import TINY
from raycal.camera import DistortionNet, GroundTruthCamera, intrinsics_init, read_calibration_report
from raycal.config import TrainConfig
from raycal.curriculum import Model, train_run
from raycal.errors import ContractError, DimensionError
from raycal.evaluation import (AGGREGATE_FIELDS, calibration_report, odometry_metrics, radial_shift_error,
                               read_odometry_tsv, render_novel_view, render_views, scale_ratios,
                               temporal_difference, write_calibration)
from raycal.geometry import SE3Pose
from scipy.spatial.transform import Rotation
from raycal.simscene import read_camera, read_manifest


def _poses(rng, n, scale=0.05):
    return [SE3Pose(Rotation.from_rotvec(rng.normal(size=3) * scale).as_matrix(), rng.normal(size=3) * scale) for _ in range(n)]


# odometry statistics ------------------------------------------------------------

def test_perfect_predictions_are_zero(rng):
    poses = _poses(rng, 6)
    report = odometry_metrics(poses, poses)
    assert all(v == 0.0 for v in report.aggregates().values())


def test_constant_translation_error():
    gts = [SE3Pose(np.eye(3), np.array([0.05 * k, 0.0, 0.0])) for k in range(5)]
    preds = [SE3Pose(g.R, g.t + np.array([0.0, 0.02, 0.0])) for g in gts]
    r = odometry_metrics(preds, gts)
    assert r.trans_mean == pytest.approx(0.02, abs=1e-15)
    assert r.trans_std == pytest.approx(0.0, abs=1e-15)
    assert r.trans_rmse == pytest.approx(0.02, abs=1e-15)
    assert r.rot_rmse == 0.0


def _welford(xs):
    n, mean, m2, sq = 0, 0.0, 0.0, 0.0
    for x in xs:
        n += 1
        d = x - mean
        mean += d / n
        m2 += d * (x - mean)
        sq += x * x
    return mean, math.sqrt(m2 / n), math.sqrt(sq / n)


def test_aggregates_match_streaming_oracle(rng):
    gts, preds = _poses(rng, 50), _poses(rng, 50)
    r = odometry_metrics(preds, gts)
    t_err = [math.dist(p.t, g.t) for p, g in zip(preds, gts)]
    r_err = [math.degrees(Rotation.from_matrix(p.R.T @ g.R).magnitude()) for p, g in zip(preds, gts)]
    for got, want in zip((r.trans_mean, r.trans_std, r.trans_rmse, r.rot_mean, r.rot_std, r.rot_rmse),
                         _welford(t_err) + _welford(r_err)):
        assert got == pytest.approx(want, abs=1e-12)


@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=40))
def test_rmse_identity(errs):
    r = odometry_metrics([SE3Pose(np.eye(3), np.array([e, 0.0, 0.0])) for e in errs],
                         [SE3Pose(np.eye(3), np.zeros(3))] * len(errs))
    assert abs(r.trans_rmse ** 2 - (r.trans_mean ** 2 + r.trans_std ** 2)) <= 1e-9


def test_length_mismatch_is_contract_error(rng):
    with pytest.raises(ContractError):
        odometry_metrics(_poses(rng, 3), _poses(rng, 2))


def test_tsv_formats(rng, tmp_path):
    r = odometry_metrics(_poses(rng, 4), _poses(rng, 4))
    (tmp_path / "o.tsv").write_text(r.to_tsv())
    back = read_odometry_tsv(tmp_path / "o.tsv")
    assert tuple(back) == AGGREGATE_FIELDS and back == r.aggregates()
    lines = r.per_pair_tsv().splitlines()
    assert lines[0] == "pair\ttrans_error\trot_error_deg" and len(lines) == 5
    assert float(lines[2].split("\t")[1]) == r.trans_errors[1]
    (tmp_path / "bad.tsv").write_text("a\tb\n1\t2\n")
    with pytest.raises(ContractError):
        read_odometry_tsv(tmp_path / "bad.tsv")


def test_scale_ratios_skip_static_pairs():
    gts = [SE3Pose(np.eye(3), np.array([0.1, 0, 0])), SE3Pose(np.eye(3), np.zeros(3))]
    preds = [SE3Pose(np.eye(3), np.array([0.0, 0.2, 0])), SE3Pose(np.eye(3), np.ones(3))]
    assert np.allclose(scale_ratios(preds, gts), [2.0])


# radial shift -------------------------------------------------------------------

def test_identical_cameras_give_zero():
    cam = GroundTruthCamera(60.0, 32.0, 32.0, 64, 64, 0.1, 0.01)
    assert radial_shift_error(cam, cam) == 0.0
    K = intrinsics_init(64, 64)
    assert radial_shift_error((K, DistortionNet(64, 64)), (K, None)) == 0.0


def test_single_pixel_three_four_five():
    a = GroundTruthCamera(60.0, 32.0, 32.0, 64, 64)
    b = GroundTruthCamera(60.0, 32.0 - 3e-4 * 60.0, 32.0 - 4e-4 * 60.0, 64, 64)
    assert radial_shift_error(a, b, grid=[[10.5, 20.5]]) == pytest.approx(5e-4, abs=1e-12)


def test_untrained_camera_matches_closed_form():
    # pinhole vs pinhole: |p - c| * |1/64 - 1/60| averaged over every 4th pixel
    total, n = 0.0, 0
    for v in range(0, 64, 4):
        for u in range(0, 64, 4):
            total += math.hypot(u + 0.5 - 32.0, v + 0.5 - 32.0) * abs(1 / 64 - 1 / 60)
            n += 1
    got = radial_shift_error((intrinsics_init(64, 64), DistortionNet(64, 64)),
                             GroundTruthCamera(60.0, 32.0, 32.0, 64, 64))
    assert got == pytest.approx(total / n, rel=1e-12)


@given(st.floats(40, 90), st.floats(40, 90), st.floats(-0.2, 0.2), st.floats(-0.05, 0.05))
def test_radial_shift_is_symmetric_and_non_negative(fa, fb, k1, k2):
    a = GroundTruthCamera(fa, 32.0, 32.0, 64, 64, k1, k2)
    b = GroundTruthCamera(fb, 31.0, 33.0, 64, 64)
    ab, ba = radial_shift_error(a, b), radial_shift_error(b, a)
    assert ab >= 0.0 and abs(ab - ba) <= 1e-12


def test_size_mismatch_is_contract_error():
    with pytest.raises(ContractError):
        radial_shift_error(GroundTruthCamera(60, 32, 32, 64, 64), GroundTruthCamera(60, 16, 16, 32, 32))
    with pytest.raises(ContractError):
        radial_shift_error(object(), GroundTruthCamera(60, 32, 32, 64, 64))


def test_calibration_outputs(tmp_path):
    model = Model(TrainConfig(**TINY), 64, 64)
    truth = GroundTruthCamera(60.0, 32.0, 32.0, 64, 64)
    report = write_calibration(tmp_path, model, truth)
    assert report.f == 64.0 and report.delta_r == radial_shift_error((model.intrinsics, model.distortion), truth)
    head, vals = (tmp_path / "calibration.tsv").read_text().splitlines()
    assert head.split("\t") == ["f", "cx", "cy", "delta_r"] and float(vals.split("\t")[3]) == report.delta_r
    grid = read_calibration_report(tmp_path / "distortion_grid.txt")
    assert grid is not None
    assert math.isnan(calibration_report(model).delta_r)


# rendering ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def trained(toy_dataset):
    manifest = read_manifest(toy_dataset)
    cfg = TrainConfig(**dict(TINY, epochs=30, e1=30, e2=30, batch_size=3, rays_per_step=256,
                             w_photometric=1.0, lr_encoder=1e-3, lr_hypernet=1e-3))
    return manifest, train_run(manifest, cfg).trainer


def test_render_dimensions_and_zero_difference(trained):
    manifest, tr = trained
    fi, fj = tr.frames[0], tr.frames[1]
    q = SE3Pose(np.eye(3), np.zeros(3))
    images, diffs = render_views(tr.model, fi, fj, [q, q])
    assert images[0].shape == (16, 16, 3)
    assert np.all(diffs[0] == 0.0)
    with pytest.raises(DimensionError):
        render_novel_view(tr.model, fi[:, :8], fj, q)
    with pytest.raises(DimensionError):
        temporal_difference(images[0], images[0][:4])


def test_view_from_first_pose_approximates_first_frame(trained):
    manifest, tr = trained
    fi, fj = tr.frames[0], tr.frames[1]
    img = render_novel_view(tr.model, fi, fj, SE3Pose(np.eye(3), np.zeros(3)))
    target = fi.transpose(1, 2, 0)
    mse = np.mean((img - target) ** 2)
    # better than the best constant colour per channel
    assert mse < np.mean((target - target.mean(axis=(0, 1))) ** 2), mse
    cam = read_camera(manifest.root / "camera.txt")
    assert cam.width == 16
