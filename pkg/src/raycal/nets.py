"""Encoder, hypernetwork and light field renderer.

The light field network (LFN) owns no weights: the hypernetwork emits a flat
vector ``psi`` for every frame pair, laid out layer by layer as
``W (out x in, row-major)`` followed by ``b (out)``.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError
from .geometry import PluckerRay

# identity rotation in the 6D parameterisation, appended to zero translation
POSE_BIAS_INIT = np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


def _same_pads(size: int, k: int, stride: int):
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


class Encoder:
    """Conv trunk on the channel-stacked frame pair with a pose and a scene head.

    Parameters
    ----------
    channels, strides:
        Output width and stride of each 3x3 trunk layer.
    pose_hidden:
        Widths of the two hidden 1x1 conv layers of the pose head.
    scene_width, latent_dim:
        Hidden width and output size of the fully connected scene head.
    """

    def __init__(self, in_channels=6, channels=(16, 32, 64, 128, 128, 128, 128),
                 strides=(2, 2, 2, 2, 1, 1, 1), pose_hidden=(64, 64), scene_width=256,
                 latent_dim=256, seed=0):
        if len(channels) != len(strides):
            raise ContractError("channels and strides must have equal length")
        rng = np.random.default_rng(seed)
        self.in_channels = in_channels
        self.strides = tuple(strides)
        self.latent_dim = latent_dim
        self.params = {}
        c_prev = in_channels
        for i, c in enumerate(channels):
            self._add(f"encoder.trunk.{i}", ad.xavier_init((c, c_prev, 3, 3), rng), c)
            c_prev = c
        widths = [c_prev, *pose_hidden, 9]
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            self._add(f"encoder.pose.{i}", ad.xavier_init((b, a, 1, 1), rng), b)
        self.params[f"encoder.pose.{len(widths) - 2}.b"].data[:] = POSE_BIAS_INIT
        self.n_pose = len(widths) - 1
        widths = [c_prev, scene_width, scene_width, latent_dim]
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            self._add(f"encoder.scene.{i}", ad.xavier_init((b, a), rng), b)
        self.n_trunk = len(channels)
        self.n_scene = len(widths) - 1

    def _add(self, prefix, W, n_out):
        W.name = prefix + ".W"
        self.params[W.name] = W
        self.params[prefix + ".b"] = Tensor(np.zeros(n_out), requires_grad=True, name=prefix + ".b")

    def parameters(self):
        return list(self.params.values())

    def pose_parameters(self):
        return [p for k, p in self.params.items() if k.startswith("encoder.pose.")]

    def named_parameters(self):
        return dict(self.params)

    def trunk(self, x: Tensor) -> Tensor:
        h = x
        for i, s in enumerate(self.strides):
            W, b = self.params[f"encoder.trunk.{i}.W"], self.params[f"encoder.trunk.{i}.b"]
            top, bottom = _same_pads(h.shape[1], 3, s)
            left, right = _same_pads(h.shape[2], 3, s)
            h = ad.pad2d(h, (top, bottom, left, right))
            h = ad.relu(ad.add_bias(ad.conv2d(h, W, stride=s, padding=0), b, axis=0))
        return h

    def encode(self, frame_i, frame_j):
        """Return ``(pose9, z)`` for two (3, H, W) frames with values in [0, 1]."""
        fi, fj = ad.as_tensor(frame_i), ad.as_tensor(frame_j)
        if fi.shape != fj.shape:
            raise DimensionError(f"frame shapes differ: {fi.shape} vs {fj.shape}")
        if fi.ndim != 3 or 2 * fi.shape[0] != self.in_channels:
            raise DimensionError(f"expected frames of shape ({self.in_channels // 2}, H, W), got {fi.shape}")
        feat = self.trunk(ad.concat([fi, fj], axis=0))

        h = feat
        for i in range(self.n_pose):
            W, b = self.params[f"encoder.pose.{i}.W"], self.params[f"encoder.pose.{i}.b"]
            h = ad.add_bias(ad.conv2d(h, W), b, axis=0)
            if i < self.n_pose - 1:
                h = ad.relu(h)
        pose9 = ad.mean_axis(ad.reshape(h, (9, -1)), axis=1)

        c = feat.shape[0]
        z = ad.mean_axis(ad.reshape(feat, (c, -1)), axis=1)
        for i in range(self.n_scene):
            z = ad.linear(z, self.params[f"encoder.scene.{i}.W"], self.params[f"encoder.scene.{i}.b"])
            if i < self.n_scene - 1:
                z = ad.relu(z)
        return pose9, z


def split_pose9(pose9: Tensor):
    """Split a pose vector into translation (3,) and the 6D rotation (6,)."""
    if pose9.shape != (9,):
        raise DimensionError(f"pose vector must have 9 entries, got {pose9.shape}")
    return pose9[0:3], pose9[3:9]


@dataclass(frozen=True)
class LFNArchitecture:
    """Plain ReLU MLP on 6-D Plücker input; ``layers`` counts affine layers."""

    width: int = 128
    layers: int = 6
    in_dim: int = 6
    out_dim: int = 3

    def sizes(self):
        return [self.in_dim] + [self.width] * (self.layers - 1) + [self.out_dim]

    def layer_shapes(self):
        s = self.sizes()
        return [(b, a) for a, b in zip(s[:-1], s[1:])]

    def param_count(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes())

    def unpack(self, psi: Tensor):
        """Slice ``psi`` into per-layer ``(W, b)`` tensors (on the tape)."""
        if psi.shape != (self.param_count(),):
            raise ContractError(f"weight vector has length {psi.size}, architecture needs {self.param_count()}")
        out, pos = [], 0
        for o, i in self.layer_shapes():
            W = ad.reshape(psi[pos:pos + o * i], (o, i))
            pos += o * i
            b = psi[pos:pos + o]
            pos += o
            out.append((W, b))
        return out

    def xavier_vector(self, rng) -> np.ndarray:
        """A flat weight vector with Xavier-initialised matrices and zero biases."""
        parts = []
        for o, i in self.layer_shapes():
            parts.append(ad.xavier_init((o, i), rng, requires_grad=False).data.ravel())
            parts.append(np.zeros(o))
        return np.concatenate(parts)


def lfn_param_count(width: int = 128, layers: int = 6, in_dim: int = 6, out_dim: int = 3) -> int:
    return LFNArchitecture(width, layers, in_dim, out_dim).param_count()


def lfn_render(psi, rays, arch: LFNArchitecture = LFNArchitecture()) -> Tensor:
    """Evaluate the light field with weights ``psi`` on each ray; returns (N, 3).

    Each ray's colour is computed independently, so rendering is bitwise
    invariant to how rays are split into batches.
    """
    psi = ad.as_tensor(psi)
    layers = arch.unpack(psi)
    h = rays.vector() if isinstance(rays, PluckerRay) else ad.as_tensor(rays)
    if h.ndim == 1:
        h = ad.reshape(h, (1, -1))
    if h.shape[1] != arch.in_dim:
        raise DimensionError(f"rays must have {arch.in_dim} coordinates, got {h.shape}")
    for k, (W, b) in enumerate(layers):
        h = ad.linear(h, W, b, rowwise=True)
        if k < len(layers) - 1:
            h = ad.relu(h)
    return h


class Hypernetwork:
    """MLP from the scene latent to a full LFN weight vector.

    Weights are Xavier-uniform. The output bias starts as a Xavier-sampled
    LFN weight vector so that, while the latent is still small, the generated
    renderer is a sensibly initialised network rather than an all-zero one.
    """

    def __init__(self, arch: LFNArchitecture = LFNArchitecture(), latent_dim=256, width=256,
                 layers=6, seed=0, out_scale=1.0):
        rng = np.random.default_rng(seed)
        self.arch = arch
        self.latent_dim = latent_dim
        self.out_dim = arch.param_count()
        sizes = [latent_dim] + [width] * (layers - 1) + [self.out_dim]
        self.weights, self.biases = [], []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            W = ad.xavier_init((b, a), rng, name=f"hyper.{i}.W")
            bias = Tensor(np.zeros(b), requires_grad=True, name=f"hyper.{i}.b")
            self.weights.append(W)
            self.biases.append(bias)
        self.biases[-1].data[:] = arch.xavier_vector(rng)
        if out_scale != 1.0:
            self.weights[-1].data *= out_scale

    def parameters(self):
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def named_parameters(self):
        return {p.name: p for p in self.parameters()}

    def __call__(self, z) -> Tensor:
        return hypernet_forward(self, z)


def hypernet_forward(net: Hypernetwork, z) -> Tensor:
    """Weight vector(s) for a latent of shape (latent_dim,) or a batch (B, latent_dim)."""
    z = ad.as_tensor(z)
    if z.ndim not in (1, 2) or z.shape[-1] != net.latent_dim:
        raise ContractError(f"latent must have shape ({net.latent_dim},) or (B, {net.latent_dim}), got {z.shape}")
    h = z
    n = len(net.weights)
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        h = ad.linear(h, W, b)
        if i < n - 1:
            h = ad.relu(h)
    return h
