"""Odometry and calibration metrics, and novel-view rendering."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import (GroundTruthCamera, LearnedCamera, pixel_grid, pixels_to_rays,
                     write_calibration_report)
from .curriculum import infer_odometry
from .errors import ContractError, DimensionError
from .geometry import SE3Pose, relative_pose, rotation_angle_deg
from .nets import lfn_render

AGGREGATE_FIELDS = ("trans_mean", "trans_std", "trans_rmse", "rot_mean", "rot_std", "rot_rmse")
DELTA_R_STRIDE = 4


def _stats(x: np.ndarray):
    # population statistics, so rmse**2 == mean**2 + std**2
    if x.size == 0:
        return 0.0, 0.0, 0.0
    mean = float(np.mean(x))
    std = float(np.sqrt(np.mean((x - mean) ** 2)))
    rmse = float(np.sqrt(np.mean(x * x)))
    return mean, std, rmse


@dataclass
class OdometryReport:
    """Per-pair translation (m) and rotation (deg) errors with aggregates."""

    trans_errors: np.ndarray
    rot_errors: np.ndarray

    def __post_init__(self):
        self.trans_errors = np.asarray(self.trans_errors, dtype=float)
        self.rot_errors = np.asarray(self.rot_errors, dtype=float)
        self.trans_mean, self.trans_std, self.trans_rmse = _stats(self.trans_errors)
        self.rot_mean, self.rot_std, self.rot_rmse = _stats(self.rot_errors)

    def __len__(self):
        return len(self.trans_errors)

    def aggregates(self) -> dict:
        return {k: getattr(self, k) for k in AGGREGATE_FIELDS}

    def to_tsv(self) -> str:
        agg = self.aggregates()
        return "\t".join(AGGREGATE_FIELDS) + "\n" + "\t".join(repr(agg[k]) for k in AGGREGATE_FIELDS) + "\n"

    def per_pair_tsv(self) -> str:
        rows = ["pair\ttrans_error\trot_error_deg"]
        rows += [f"{i}\t{float(t)!r}\t{float(r)!r}" for i, (t, r) in enumerate(zip(self.trans_errors, self.rot_errors))]
        return "\n".join(rows) + "\n"


def odometry_metrics(predicted, ground_truth) -> OdometryReport:
    """Compare aligned sequences of relative poses, pair by pair."""
    predicted, ground_truth = list(predicted), list(ground_truth)
    if len(predicted) != len(ground_truth):
        raise ContractError(f"{len(predicted)} predicted poses vs {len(ground_truth)} ground-truth poses")
    te = [float(np.linalg.norm(np.asarray(p.t) - np.asarray(g.t))) for p, g in zip(predicted, ground_truth)]
    re = [rotation_angle_deg(p.R, g.R) for p, g in zip(predicted, ground_truth)]
    return OdometryReport(np.array(te), np.array(re))


def read_odometry_tsv(path) -> dict:
    lines = Path(path).read_text().splitlines()
    if len(lines) != 2:
        raise ContractError(f"{path}: expected a header and one value row")
    keys, vals = lines[0].split("\t"), lines[1].split("\t")
    if tuple(keys) != AGGREGATE_FIELDS or len(vals) != len(keys):
        raise ContractError(f"{path}: unexpected columns {keys}")
    return {k: float(v) for k, v in zip(keys, vals)}


def predict_trajectory(model, frames):
    """Relative poses for every consecutive pair of an (N, 3, H, W) stack."""
    return [infer_odometry(frames[i], frames[i + 1], model) for i in range(len(frames) - 1)]


def evaluate_odometry(model, manifest, frames=None):
    """Odometry report of ``model`` over every consecutive pair with poses."""
    frames = manifest.load_frames() if frames is None else frames
    preds, gts = [], []
    for i in range(len(manifest) - 1):
        a, b = manifest.frames[i], manifest.frames[i + 1]
        if a.t is None or b.t is None:
            continue
        preds.append(infer_odometry(frames[i], frames[i + 1], model))
        gts.append(relative_pose(a.pose, b.pose))
    return odometry_metrics(preds, gts), preds, gts


def scale_ratios(predicted, ground_truth) -> np.ndarray:
    """``|t_pred| / |t_gt|`` per pair (pairs with zero motion are dropped)."""
    out = []
    for p, g in zip(predicted, ground_truth):
        n = np.linalg.norm(g.t)
        if n > 0:
            out.append(np.linalg.norm(p.t) / n)
    return np.array(out)


def _camera_view(cam):
    if isinstance(cam, tuple):
        return LearnedCamera(*cam)
    if hasattr(cam, "plane_points"):
        return cam
    raise ContractError(f"cannot use {type(cam).__name__} as a camera")


def radial_shift_map(learned, truth, stride: int = DELTA_R_STRIDE, grid=None) -> np.ndarray:
    """Per-pixel displacement between two cameras' normalised-plane maps."""
    a, b = _camera_view(learned), _camera_view(truth)
    if (a.width, a.height) != (b.width, b.height):
        raise ContractError(f"image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}")
    grid = pixel_grid(a.width, a.height, stride) if grid is None else np.asarray(grid, float).reshape(-1, 2)
    xa, ya = a.plane_points(grid[:, 0], grid[:, 1])
    xb, yb = b.plane_points(grid[:, 0], grid[:, 1])
    return np.hypot(np.asarray(xa) - xb, np.asarray(ya) - yb)


def radial_shift_error(learned, truth, stride: int = DELTA_R_STRIDE, grid=None) -> float:
    """Mean radial shift over a pixel grid (every ``stride``-th pixel by default).

    Either camera may be a :class:`GroundTruthCamera`, a
    :class:`LearnedCamera` or an ``(Intrinsics, DistortionNet)`` tuple.
    """
    return float(np.mean(radial_shift_map(learned, truth, stride, grid)))


@dataclass
class CalibReport:
    f: float
    delta_r: float
    cx: float = 0.0
    cy: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_tsv(self) -> str:
        keys = ["f", "cx", "cy", "delta_r"]
        vals = [self.f, self.cx, self.cy, self.delta_r]
        return "\t".join(keys) + "\n" + "\t".join(repr(float(v)) for v in vals) + "\n"


def calibration_report(model, truth: GroundTruthCamera = None, stride: int = DELTA_R_STRIDE) -> CalibReport:
    """Learned intrinsics and, if a reference camera is given, its Δr̄."""
    K = model.intrinsics
    dr = float("nan") if truth is None else radial_shift_error((K, model.distortion), truth, stride)
    return CalibReport(K.f.item(), dr, K.cx.item(), K.cy.item())


def write_calibration(out_dir, model, truth: GroundTruthCamera = None, stride: int = DELTA_R_STRIDE) -> CalibReport:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = calibration_report(model, truth, stride)
    (out / "calibration.tsv").write_text(report.to_tsv())
    write_calibration_report(out / "distortion_grid.txt", model.intrinsics, model.distortion, stride)
    return report


def render_novel_view(model, frame_i, frame_j, query_pose) -> np.ndarray:
    """Render an (H, W, 3) image from ``query_pose`` (in frame i's coordinates).

    The pair is encoded once to obtain the light field; rays come from the
    learned camera placed at the query pose.
    """
    if query_pose is not None and not isinstance(query_pose, SE3Pose):
        query_pose = SE3Pose(*query_pose)
    fi, fj = np.asarray(frame_i, float), np.asarray(frame_j, float)
    if fi.shape != (3, model.height, model.width):
        raise DimensionError(f"frames must be (3, {model.height}, {model.width}), got {fi.shape}")
    _, _, _, z = model.predict_pose(fi, fj)
    psi = model.hypernet(z)
    grid = pixel_grid(model.width, model.height)
    rays = pixels_to_rays(grid, model.intrinsics, model.distortion, query_pose)
    colors = lfn_render(psi, rays, model.arch).data
    return colors.reshape(model.height, model.width, 3)


def temporal_difference(image_a, image_b) -> np.ndarray:
    """Signed difference ``b - a`` between two rendered views."""
    a, b = np.asarray(image_a, float), np.asarray(image_b, float)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    return b - a


def render_views(model, frame_i, frame_j, query_poses):
    """Render several views and the difference images between neighbours."""
    images = [render_novel_view(model, frame_i, frame_j, q) for q in query_poses]
    diffs = [temporal_difference(a, b) for a, b in zip(images[:-1], images[1:])]
    return images, diffs
