"""Differentiable ray camera: pinhole intrinsics plus a learned distortion field.

Pixel ``(u, v)`` follows the image convention (column, row) and a pixel's
centre sits at ``index + 0.5``, so ``cx = width / 2`` is the exact image
centre.

Pipeline per pixel::

    (u, v) --K--> (x_d, y_d) --+ D(u, v)--> (x, y) --> d = (x, y, 1)/|.| --pose--> Plücker
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, ParseError
from .geometry import PluckerRay, normalize_rows, ray_transform


class Intrinsics:
    """Learnable pinhole intrinsics.

    A single focal length is shared by both axes unless ``separate_focal``;
    then ``fy`` is a second tensor initialised to the same value.
    """

    def __init__(self, f, cx, cy, width, height, separate_focal=False):
        self.width = int(width)
        self.height = int(height)
        self.f = Tensor(float(f), requires_grad=True, name="intrinsics.f")
        self.fy = Tensor(float(f), requires_grad=True, name="intrinsics.fy") if separate_focal else None
        self.cx = Tensor(float(cx), requires_grad=True, name="intrinsics.cx")
        self.cy = Tensor(float(cy), requires_grad=True, name="intrinsics.cy")
        self.validate()

    @property
    def separate_focal(self) -> bool:
        return self.fy is not None

    @property
    def focal_y(self) -> Tensor:
        return self.fy if self.fy is not None else self.f

    def validate(self):
        f, cx, cy = self.f.item(), self.cx.item(), self.cy.item()
        if not f > 0:
            raise ContractError(f"focal length must be positive, got {f}")
        if self.fy is not None and not self.fy.item() > 0:
            raise ContractError(f"focal length fy must be positive, got {self.fy.item()}")
        if not (0 <= cx < self.width and 0 <= cy < self.height):
            raise ContractError(f"principal point ({cx}, {cy}) outside {self.width}x{self.height}")

    def focal_params(self):
        return [self.f] if self.fy is None else [self.f, self.fy]

    def principal_params(self):
        return [self.cx, self.cy]

    def named_parameters(self):
        out = {"intrinsics.f": self.f, "intrinsics.cx": self.cx, "intrinsics.cy": self.cy}
        if self.fy is not None:
            out["intrinsics.fy"] = self.fy
        return out

    def as_tuple(self):
        return self.f.item(), self.cx.item(), self.cy.item()


def intrinsics_init(width: int, height: int, separate_focal: bool = False) -> Intrinsics:
    """Start from ``f = width`` and the image centre."""
    if width < 8 or height < 8:
        raise ContractError(f"image must be at least 8x8, got {width}x{height}")
    return Intrinsics(float(width), width / 2.0, height / 2.0, width, height, separate_focal)


def pixel_to_plane(u, v, K: Intrinsics):
    """Pixels to the (distorted) normalised image plane: ``(u - cx) / f``."""
    x_d = (ad.as_tensor(u) - K.cx) / K.f
    y_d = (ad.as_tensor(v) - K.cy) / K.focal_y
    return x_d, y_d


class DistortionNet:
    """Small MLP mapping pixel coordinates to plane corrections ``(dx, dy)``.

    Inputs are rescaled to [-1, 1] per axis and hidden layers use tanh, so the
    correction field is smooth. The last layer starts at zero so a fresh net
    is the identity correction.
    """

    def __init__(self, width: int, height: int, hidden: int = 8, layers: int = 4, seed=0):
        if layers < 2:
            raise ValueError("distortion net needs at least two layers")
        rng = np.random.default_rng(seed)
        self.width, self.height = int(width), int(height)
        sizes = [2] + [hidden] * (layers - 1) + [2]
        self.weights, self.biases = [], []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == layers - 1
            W = (Tensor(np.zeros((n_out, n_in)), requires_grad=True) if last
                 else ad.xavier_init((n_out, n_in), rng))
            W.name = f"distortion.{i}.W"
            self.weights.append(W)
            self.biases.append(Tensor(np.zeros(n_out), requires_grad=True, name=f"distortion.{i}.b"))

    def parameters(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def named_parameters(self):
        return {p.name: p for p in self.parameters()}

    def normalize(self, u, v) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return np.stack([2.0 * u / self.width - 1.0, 2.0 * v / self.height - 1.0], axis=-1)

    def __call__(self, u, v) -> Tensor:
        h = Tensor(self.normalize(np.atleast_1d(u), np.atleast_1d(v)))
        n = len(self.weights)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.linear(h, W, b)
            if i < n - 1:
                h = ad.tanh(h)
        return h


def distortion_correct(u, v, net: DistortionNet):
    """Return the correction ``(dx, dy)`` tensors for pixels ``(u, v)``."""
    out = net(u, v)
    return out[:, 0], out[:, 1]


def plane_points(u, v, K: Intrinsics, net: DistortionNet = None):
    """Corrected plane points ``(x_d + dx, y_d + dy)``."""
    x, y = pixel_to_plane(u, v, K)
    if net is not None:
        dx, dy = distortion_correct(u, v, net)
        x, y = x + dx, y + dy
    return x, y


def pixels_to_rays(pixels, K: Intrinsics, net: DistortionNet = None, pose=None) -> PluckerRay:
    """Lift an (N, 2) array of ``(u, v)`` pixels to world-space Plücker rays.

    ``pose`` is camera-to-world, an :class:`SE3Pose` or an ``(R, t)`` tensor
    pair; ``None`` keeps rays in the camera frame.
    """
    pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
    u, v = pixels[:, 0], pixels[:, 1]
    x, y = plane_points(u, v, K, net)
    d = normalize_rows(ad.stack([x, y, Tensor(np.ones(len(u)))], axis=1))
    ray = PluckerRay(d, Tensor(np.zeros((len(u), 3))))
    return ray if pose is None else ray_transform(ray, pose)


def pixel_grid(width: int, height: int, stride: int = 1) -> np.ndarray:
    """Pixel centres ``(u, v)`` on a regular grid, row-major, shape (N, 2)."""
    us = np.arange(0, width, stride) + 0.5
    vs = np.arange(0, height, stride) + 0.5
    uu, vv = np.meshgrid(us, vs)
    return np.stack([uu.ravel(), vv.ravel()], axis=1)


@dataclass
class GroundTruthCamera:
    """Reference camera with classical radial distortion.

    Projection of an undistorted plane point ``x`` is
    ``x_d = x (1 + k1 r^2 + k2 r^4)`` with ``r = |x|``; pixels are
    ``u = f x_d + cx``.
    """

    f: float
    cx: float
    cy: float
    width: int
    height: int
    k1: float = 0.0
    k2: float = 0.0

    def distort(self, x, y):
        r2 = x * x + y * y
        s = 1.0 + self.k1 * r2 + self.k2 * r2 * r2
        return x * s, y * s

    def undistort(self, x_d, y_d, iters: int = 50):
        """Invert :meth:`distort` by Newton iteration on the radius."""
        x_d = np.asarray(x_d, dtype=float)
        y_d = np.asarray(y_d, dtype=float)
        if self.k1 == 0.0 and self.k2 == 0.0:
            return x_d.copy(), y_d.copy()
        rd = np.hypot(x_d, y_d)
        r = rd.copy()
        for _ in range(iters):
            r2 = r * r
            g = r * (1 + self.k1 * r2 + self.k2 * r2 * r2) - rd
            dg = 1 + 3 * self.k1 * r2 + 5 * self.k2 * r2 * r2
            step = g / dg
            r = r - step
            if np.max(np.abs(step), initial=0.0) < 1e-15:
                break
        scale = np.divide(r, rd, out=np.ones_like(rd), where=rd > 0)
        return x_d * scale, y_d * scale

    def plane_points(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return self.undistort((u - self.cx) / self.f, (v - self.cy) / self.f)

    def pixel_directions(self, u, v) -> np.ndarray:
        """Unit camera-frame ray directions for pixels ``(u, v)``."""
        x, y = self.plane_points(u, v)
        d = np.stack([x, y, np.ones_like(x)], axis=-1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def project(self, points) -> np.ndarray:
        """Camera-frame points (N, 3) to pixels (N, 2)."""
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        x_d, y_d = self.distort(p[:, 0] / p[:, 2], p[:, 1] / p[:, 2])
        return np.stack([self.f * x_d + self.cx, self.f * y_d + self.cy], axis=1)

    def as_dict(self):
        return {"f": self.f, "cx": self.cx, "cy": self.cy, "k1": self.k1, "k2": self.k2,
                "width": self.width, "height": self.height}


class LearnedCamera:
    """Read-only numpy view of an (intrinsics, distortion net) pair."""

    def __init__(self, K: Intrinsics, net: DistortionNet = None):
        self.K, self.net = K, net
        self.width, self.height = K.width, K.height

    def plane_points(self, u, v):
        x, y = plane_points(np.asarray(u, float), np.asarray(v, float), self.K, self.net)
        return x.data, y.data


def write_calibration_report(path, K: Intrinsics, net: DistortionNet = None, stride: int = 4):
    """Write ``key<TAB>value`` lines: f, cx, cy (and fy), then ``grid`` rows.

    Each ``grid`` value is ``u v dx dy`` separated by single spaces.
    """
    lines = [f"f\t{K.f.item()!r}"]
    if K.fy is not None:
        lines.append(f"fy\t{K.fy.item()!r}")
    lines += [f"cx\t{K.cx.item()!r}", f"cy\t{K.cy.item()!r}"]
    grid = pixel_grid(K.width, K.height, stride)
    if net is not None:
        dx, dy = distortion_correct(grid[:, 0], grid[:, 1], net)
        dxy = np.stack([dx.data, dy.data], axis=1)
    else:
        dxy = np.zeros_like(grid)
    for (u, v), (a, b) in zip(grid, dxy):
        lines.append("grid\t" + " ".join(repr(float(x)) for x in (u, v, a, b)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_calibration_report(path):
    """Return ``(scalars: dict, grid: ndarray (N, 4))``."""
    scalars, rows = {}, []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("\t")
        if not sep:
            raise ParseError("expected key<TAB>value", n)
        try:
            if key == "grid":
                rows.append([float(x) for x in value.split(" ")])
            else:
                scalars[key] = float(value)
        except ValueError as exc:
            raise ParseError(str(exc), n) from None
    return scalars, np.array(rows).reshape(-1, 4)
