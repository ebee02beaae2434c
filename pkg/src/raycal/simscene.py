"""Synthetic ground truth: an analytic light field, camera trajectories and
dataset files.

Dataset directory layout::

    manifest.tsv     path tx ty tz qw qx qy qz labelled   (TAB separated, header row)
    camera.txt       key<TAB>value: f cx cy k1 k2 width height
    frames/NNNNN.ppm binary P6, 8 bit
    frames/NNNNN.f32 optional, little-endian float32, row-major H x W x 3

Poses in the manifest are camera-to-world.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .camera import GroundTruthCamera, pixel_grid
from .errors import ParseError, ValidationError
from .geometry import PluckerRay, SE3Pose, relative_pose

MANIFEST_HEADER = ("path", "tx", "ty", "tz", "qw", "qx", "qy", "qz", "labelled")
CAMERA_KEYS = ("f", "cx", "cy", "k1", "k2", "width", "height")


@dataclass
class AnalyticScene:
    """Textured sphere in front of a direction-coloured background.

    Sphere colour at a surface point with outward normal ``n`` (polar angle
    ``theta`` from +z, azimuth ``phi``) is
    ``0.5 + 0.5 sin(a theta) sin(b phi)`` per channel. Rays that miss take
    the background colour ``(d + 1) / 2``.
    """

    center: tuple = (0.0, 0.0, 2.0)
    radius: float = 0.7
    frequencies: tuple = ((3, 2), (2, 3), (4, 1))

    def texture(self, normals: np.ndarray) -> np.ndarray:
        theta = np.arccos(np.clip(normals[..., 2], -1.0, 1.0))
        phi = np.arctan2(normals[..., 1], normals[..., 0])
        return np.stack([0.5 + 0.5 * np.sin(a * theta) * np.sin(b * phi)
                         for a, b in self.frequencies], axis=-1)

    def trace(self, origins, directions) -> np.ndarray:
        """Colour seen from ``origins`` looking along unit ``directions``.

        Only intersections in front of the origin count.
        """
        d = np.asarray(directions, dtype=float).reshape(-1, 3)
        o = np.broadcast_to(np.asarray(origins, dtype=float), d.shape)
        c = np.asarray(self.center, dtype=float)
        oc = o - c
        b = np.einsum("ij,ij->i", d, oc)
        cc = np.einsum("ij,ij->i", oc, oc) - self.radius ** 2
        disc = b * b - cc
        root = np.sqrt(np.maximum(disc, 0.0))
        s1, s2 = -b - root, -b + root
        s = np.where(s1 > 0, s1, s2)
        hit = (disc >= 0) & (s > 0)
        out = (d + 1.0) / 2.0
        if np.any(hit):
            pts = o[hit] + s[hit, None] * d[hit]
            out[hit] = self.texture((pts - c) / self.radius)
        return out

    def sample_color(self, d, m) -> np.ndarray:
        """Colour of the oriented lines ``(d, m)``.

        The viewer is placed at each line's point closest to the world origin,
        so the result depends on the line alone.
        """
        d = np.asarray(d, dtype=float).reshape(-1, 3)
        m = np.asarray(m, dtype=float).reshape(-1, 3)
        return self.trace(np.cross(d, m), d)


def scene_sample_color(scene: AnalyticScene, ray) -> np.ndarray:
    """Colour (N, 3) of a :class:`PluckerRay` batch (or a raw (N, 6) array)."""
    if isinstance(ray, PluckerRay):
        d, m = ray.d.data, ray.m.data
    else:
        r = np.asarray(ray, dtype=float).reshape(-1, 6)
        d, m = r[:, :3], r[:, 3:]
    out = scene.sample_color(d, m)
    return out[0] if np.ndim(d) == 1 else out


def look_at(position, target, roll: float = 0.0) -> np.ndarray:
    """Camera-to-world rotation looking from ``position`` at ``target``.

    Camera axes: x right, y down, z forward; world y is "down" as well.
    """
    z = np.asarray(target, float) - np.asarray(position, float)
    z /= np.linalg.norm(z)
    x = np.cross([0.0, 1.0, 0.0], z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z], axis=1)
    if roll:
        c, s = np.cos(roll), np.sin(roll)
        R = R @ np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return R


@dataclass
class Trajectory:
    poses: list
    steps: list = field(default_factory=list)

    def __len__(self):
        return len(self.poses)


def make_trajectory(n_frames: int, seed: int = 0, center=(0.0, 0.0, 2.0), orbit_radius=2.0,
                    step=0.05, start_angle: Optional[float] = None, wobble: float = 0.35,
                    periods=(25.0, 40.0)) -> Trajectory:
    """Smooth orbit around ``center`` with small seeded wobble.

    Consecutive frames move about ``step`` metres. The look-at target sways
    by up to ``wobble`` metres with periods (in frames) drawn from
    ``periods``; the defaults turn the camera about two degrees per frame.
    """
    rng = np.random.default_rng(seed)
    center = np.asarray(center, float)
    alpha0 = rng.uniform(-np.pi, np.pi) if start_angle is None else start_angle
    d_alpha = step / orbit_radius
    ph = rng.uniform(0, 2 * np.pi, size=4)
    period = rng.uniform(periods[0], periods[1], size=4)
    poses = []
    for k in range(n_frames):
        a = alpha0 + k * d_alpha
        height = 0.12 * np.sin(2 * np.pi * k / period[0] + ph[0])
        pos = center + orbit_radius * np.array([np.sin(a), 0.0, -np.cos(a)]) + [0.0, height, 0.0]
        target = center + wobble * np.array([np.sin(2 * np.pi * k / period[1] + ph[1]),
                                          np.sin(2 * np.pi * k / period[2] + ph[2]), 0.0])
        roll = np.radians(3.0) * np.sin(2 * np.pi * k / period[3] + ph[3])
        poses.append(SE3Pose(look_at(pos, target, roll), pos))
    steps = [relative_pose(p, q) for p, q in zip(poses[:-1], poses[1:])]
    return Trajectory(poses, steps)


def render_frame(scene: AnalyticScene, pose: SE3Pose, cam: GroundTruthCamera) -> np.ndarray:
    """Render an (H, W, 3) float image through the distorted reference camera."""
    grid = pixel_grid(cam.width, cam.height)
    d_cam = cam.pixel_directions(grid[:, 0], grid[:, 1])
    colors = scene.trace(pose.t, d_cam @ pose.R.T)
    return colors.reshape(cam.height, cam.width, 3)


# image files ---------------------------------------------------------------

def write_ppm(path, image: np.ndarray) -> None:
    img = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = img.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            fh.write(img.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 file into an (H, W, 3) float array in [0, 1]."""
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P6" or int(tokens[3]) != 255:
        raise ValidationError(f"{path}: not an 8-bit binary PPM")
    w, h = int(tokens[1]), int(tokens[2])
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h * 3, offset=pos + 1)
    return data.reshape(h, w, 3).astype(np.float64) / 255.0


def write_f32(path, image: np.ndarray) -> None:
    np.asarray(image, dtype="<f4").tofile(path)


def read_f32(path, width: int, height: int) -> np.ndarray:
    data = np.fromfile(path, dtype="<f4")
    if data.size != width * height * 3:
        raise ValidationError(f"{path}: expected {width * height * 3} floats, found {data.size}")
    return data.reshape(height, width, 3).astype(np.float64)


# manifest ------------------------------------------------------------------

@dataclass
class FrameRecord:
    path: str
    t: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    labelled: bool = False

    @property
    def pose(self) -> Optional[SE3Pose]:
        if self.t is None:
            return None
        return SE3Pose.from_quaternion(self.t, self.q)

    def __eq__(self, other):
        if not isinstance(other, FrameRecord):
            return NotImplemented

        def same(a, b):
            return (a is None and b is None) or (a is not None and b is not None and np.array_equal(a, b))

        return (self.path == other.path and self.labelled == other.labelled
                and same(self.t, other.t) and same(self.q, other.q))


@dataclass
class DatasetManifest:
    frames: list = field(default_factory=list)
    root: Optional[Path] = None
    camera: Optional[GroundTruthCamera] = None

    def __len__(self):
        return len(self.frames)

    def poses(self):
        return [fr.pose for fr in self.frames]

    def image_path(self, i: int) -> Path:
        p = Path(self.frames[i].path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def load_image(self, i: int) -> np.ndarray:
        """(H, W, 3) float image; prefers the unquantised float sidecar."""
        p = self.image_path(i)
        side = p.with_suffix(".f32")
        if side.exists():
            h, w = read_ppm_size(p)
            return read_f32(side, w, h)
        return read_ppm(p)

    def load_frames(self) -> np.ndarray:
        """All frames as (N, 3, H, W)."""
        return np.stack([self.load_image(i).transpose(2, 0, 1) for i in range(len(self))])


def read_ppm_size(path):
    with open(path, "rb") as fh:
        head = fh.read(64).split()
    return int(head[2]), int(head[1])


def pose_record(path: str, pose: SE3Pose, labelled=False) -> FrameRecord:
    return FrameRecord(path, pose.t.copy(), pose.quaternion(), bool(labelled))


def write_manifest(manifest: DatasetManifest, path) -> None:
    lines = ["\t".join(MANIFEST_HEADER)]
    for fr in manifest.frames:
        if fr.t is None:
            vals = [""] * 7
        else:
            vals = [repr(float(x)) for x in (*fr.t, *fr.q)]
        lines.append("\t".join([fr.path, *vals, "1" if fr.labelled else "0"]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Parse ``manifest.tsv`` (and ``camera.txt`` next to it when present)."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.tsv"
    root = path.parent
    lines = path.read_text().splitlines()
    if not lines or tuple(lines[0].split("\t")) != MANIFEST_HEADER:
        raise ParseError("bad or missing header row", 1)
    frames = []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != len(MANIFEST_HEADER):
            raise ParseError(f"expected {len(MANIFEST_HEADER)} columns, found {len(cols)}", n)
        if cols[8] not in ("0", "1"):
            raise ParseError(f"labelled flag must be 0 or 1, got {cols[8]!r}", n)
        nums = cols[1:8]
        if all(c == "" for c in nums):
            t = q = None
        else:
            try:
                vals = np.array([float(c) for c in nums])
            except ValueError:
                raise ParseError("non-numeric pose field", n) from None
            t, q = vals[:3], vals[3:]
            if abs(np.linalg.norm(q) - 1.0) > 1e-9:
                raise ValidationError(f"line {n}: quaternion norm {np.linalg.norm(q)!r} is not 1")
        frames.append(FrameRecord(cols[0], t, q, cols[8] == "1"))
    cam_path = root / "camera.txt"
    camera = read_camera(cam_path) if cam_path.exists() else None
    manifest = DatasetManifest(frames, root, camera)
    if check_files:
        for i, fr in enumerate(frames):
            if not manifest.image_path(i).exists():
                raise ValidationError(f"missing image file {manifest.image_path(i)}")
    return manifest


def _scalar(x) -> str:
    return str(int(x)) if isinstance(x, (int, np.integer)) else repr(float(x))


def write_camera(cam: GroundTruthCamera, path) -> None:
    d = cam.as_dict()
    Path(path).write_text("".join(f"{k}\t{_scalar(d[k])}\n" for k in CAMERA_KEYS))


def read_camera(path) -> GroundTruthCamera:
    vals = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("\t")
        if not sep or key not in CAMERA_KEYS:
            raise ParseError(f"unexpected camera entry {line!r}", n)
        try:
            vals[key] = float(value)
        except ValueError:
            raise ParseError(f"non-numeric value for {key}", n) from None
    missing = set(CAMERA_KEYS) - set(vals)
    if missing:
        raise ParseError(f"camera file lacks {sorted(missing)}")
    return GroundTruthCamera(vals["f"], vals["cx"], vals["cy"], int(vals["width"]),
                             int(vals["height"]), vals["k1"], vals["k2"])


def label_subset(manifest: DatasetManifest, fraction: float, seed: int = 0) -> DatasetManifest:
    """Copy of ``manifest`` with exactly ``round(fraction * N)`` labelled frames."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    n = len(manifest)
    k = int(np.floor(fraction * n + 0.5))
    chosen = set(np.random.default_rng(seed).permutation(n)[:k].tolist())
    frames = [FrameRecord(fr.path, fr.t, fr.q, i in chosen) for i, fr in enumerate(manifest.frames)]
    return DatasetManifest(frames, manifest.root, manifest.camera)


def default_camera(width: int = 64, height: int = 64, distorted: bool = False) -> GroundTruthCamera:
    """Desk camera: ``f = 0.9375 * width``; optional radial distortion (0.1, 0.01)."""
    k1, k2 = (0.1, 0.01) if distorted else (0.0, 0.0)
    return GroundTruthCamera(0.9375 * width, width / 2.0, height / 2.0, width, height, k1, k2)


def render_dataset(scene: AnalyticScene, trajectory: Trajectory, cam: GroundTruthCamera,
                   out_dir, float_sidecar: bool = True, labelled=None) -> DatasetManifest:
    """Render every trajectory frame and write images, manifest and camera file."""
    out = Path(out_dir)
    try:
        (out / "frames").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out}: {exc}") from exc
    frames = []
    for k, pose in enumerate(trajectory.poses):
        img = render_frame(scene, pose, cam)
        rel = f"frames/{k:05d}.ppm"
        write_ppm(out / rel, img)
        if float_sidecar:
            write_f32(out / f"frames/{k:05d}.f32", img)
        flag = bool(labelled[k]) if labelled is not None else False
        frames.append(pose_record(rel, pose, flag))
    manifest = DatasetManifest(frames, out, cam)
    write_manifest(manifest, out / "manifest.tsv")
    write_camera(cam, out / "camera.txt")
    return manifest


def make_dataset(out_dir, n_frames: int = 40, seed: int = 0, width: int = 64, height: int = 64,
                 distorted: bool = False, labelled_fraction: float = 0.0,
                 scene: Optional[AnalyticScene] = None, camera: Optional[GroundTruthCamera] = None,
                 float_sidecar: bool = True, trajectory: Optional[Trajectory] = None) -> DatasetManifest:
    """Trajectory + render + seeded label subset in one call."""
    scene = scene or AnalyticScene()
    cam = camera or default_camera(width, height, distorted)
    traj = trajectory or make_trajectory(n_frames, seed)
    manifest = render_dataset(scene, traj, cam, out_dir, float_sidecar)
    if labelled_fraction > 0:
        manifest = label_subset(manifest, labelled_fraction, seed)
        write_manifest(manifest, Path(out_dir) / "manifest.tsv")
    return manifest
