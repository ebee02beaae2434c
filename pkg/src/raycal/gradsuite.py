"""Finite-difference checks over every differentiable building block.

Each case is a scalar function of one tensor. :func:`run_suite` checks the
tape gradient against central differences and returns one report per case.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_check
from .camera import DistortionNet, Intrinsics, pixels_to_rays
from .geometry import plucker_encode, ray_transform, rot6d_to_matrix
from .losses import LossParts, LossWeights, latent_loss, photometric_loss, pose_loss, total_loss
from .nets import Encoder, Hypernetwork, LFNArchitecture, lfn_render


def _weights(rng, shape):
    # fixed random projection so vector outputs reduce to a generic scalar
    return rng.normal(size=shape)


def _cases(seed: int):
    rng = np.random.default_rng(seed)
    out = []

    def case(name, x, f):
        out.append((name, Tensor(np.asarray(x, dtype=float)), f))

    a = rng.normal(size=(4, 5))
    b = rng.normal(size=(4, 5))
    w = _weights(rng, (4, 5))
    case("add", a, lambda x: ad.reduce("sum", (x + b) * w))
    case("sub", a, lambda x: ad.reduce("sum", (b - x) * w))
    case("mul", a, lambda x: ad.reduce("sum", x * b * w))
    case("div", a, lambda x: ad.reduce("sum", b / (ad.square(x) + 0.5) * w))
    case("neg", a, lambda x: ad.reduce("sum", -x * w))
    case("relu", a, lambda x: ad.reduce("sum", ad.relu(x) * w))
    case("square", a, lambda x: ad.reduce("sum", ad.square(x) * w))
    case("sqrt", np.abs(a) + 0.2, lambda x: ad.reduce("sum", ad.sqrt(x) * w))
    case("tanh", a, lambda x: ad.reduce("sum", ad.tanh(x) * w))
    case("sin", a, lambda x: ad.reduce("sum", ad.sin(x) * w))
    case("mean", a, lambda x: ad.reduce("mean", ad.square(x)))
    w_43 = _weights(rng, (4, 3))
    m = rng.normal(size=(5, 3))
    case("matmul", a, lambda x: ad.reduce("sum", ad.matmul(x, m) * w_43))
    W = rng.normal(size=(3, 5))
    bias = rng.normal(size=3)
    case("linear", a, lambda x: ad.reduce("sum", ad.linear(x, W, bias) * w_43))
    case("linear.weight", W, lambda x: ad.reduce("sum", ad.linear(Tensor(a), x, bias) * w_43))
    case("add_bias", rng.normal(size=5), lambda x: ad.reduce("sum", ad.add_bias(Tensor(a), x) * w))
    case("scale_rows", rng.normal(size=4), lambda x: ad.reduce("sum", ad.scale_rows(Tensor(a), x) * w))
    case("sum_axis", a, lambda x: ad.reduce("sum", ad.square(ad.sum_axis(x, axis=1))))
    case("mean_axis", a, lambda x: ad.reduce("sum", ad.square(ad.mean_axis(x, axis=0))))
    case("transpose", a, lambda x: ad.reduce("sum", ad.transpose(x) * w.T))
    case("getitem", a, lambda x: ad.reduce("sum", ad.square(x[1:3, ::2])))
    case("concat", a, lambda x: ad.reduce("sum", ad.square(ad.concat([x, Tensor(b)], axis=1))))
    case("stack", a, lambda x: ad.reduce("sum", ad.square(ad.stack([x, x * 2.0], axis=2))))
    w_63 = _weights(rng, (6, 3))
    c = rng.normal(size=(6, 3))
    case("cross", rng.normal(size=(6, 3)), lambda x: ad.reduce("sum", ad.cross(x, Tensor(c)) * w_63))

    img = rng.normal(size=(2, 7, 6))
    k = rng.normal(size=(3, 2, 3, 3)) * 0.3
    wc1 = _weights(rng, (3, 5, 4))
    wc2 = _weights(rng, (3, 4, 3))
    img7 = rng.normal(size=(2, 7, 7))
    wc3 = _weights(rng, (3, 4, 4))
    case("conv2d", img, lambda x: ad.reduce("sum", ad.conv2d(x, Tensor(k), stride=1) * wc1))
    case("conv2d.kernel", k, lambda x: ad.reduce("sum", ad.conv2d(Tensor(img7), x, stride=2, padding=1)
                                                 * wc3))
    case("conv2d.stride2", img, lambda x: ad.reduce("sum", ad.conv2d(ad.pad2d(x, (1, 1, 0, 1)), Tensor(k),
                                                                     stride=2) * wc2))
    case("pad2d", img, lambda x: ad.reduce("sum", ad.square(ad.pad2d(x, (1, 0, 2, 1)))))

    w_33 = _weights(rng, (3, 3))
    case("rot6d", rng.normal(size=6), lambda x: ad.reduce("sum", rot6d_to_matrix(x[0:3], x[3:6]) * w_33))
    w_56 = _weights(rng, (5, 6))
    d = rng.normal(size=(5, 3))
    case("plucker_encode", rng.normal(size=3),
         lambda x: ad.reduce("sum", plucker_encode(x, Tensor(d)).vector() * w_56))
    ray = plucker_encode(rng.normal(size=3), d)
    r6 = rng.normal(size=6)
    case("ray_transform.t", rng.normal(size=3),
         lambda x: ad.reduce("sum", ray_transform(ray, (rot6d_to_matrix(Tensor(r6[:3]), Tensor(r6[3:])), x))
                             .vector() * w_56))
    case("ray_transform.rot6d", r6,
         lambda x: ad.reduce("sum", ray_transform(ray, (rot6d_to_matrix(x[0:3], x[3:6]), Tensor(np.ones(3))))
                             .vector() * w_56))

    px = rng.uniform(0, 16, size=(6, 2))
    net = DistortionNet(16, 16, seed=seed)
    for W_ in net.weights:
        W_.data = rng.normal(size=W_.shape) * 0.5

    w_66 = _weights(rng, (6, 6))

    def rays_wrt_f(x):
        K = Intrinsics(16.0, 8.0, 8.0, 16, 16)
        K.f = x
        return ad.reduce("sum", pixels_to_rays(px, K, net).vector() * w_66)

    case("pixels_to_rays.f", 17.0, rays_wrt_f)
    w_62 = _weights(rng, (6, 2))
    case("distortion_net", net.weights[0].data,
         lambda x: ad.reduce("sum", _with(net.weights, 0, x, lambda: net(px[:, 0], px[:, 1])) * w_62))

    arch = LFNArchitecture(width=8, layers=3)
    psi = arch.xavier_vector(rng) + rng.normal(size=arch.param_count()) * 0.1
    rays = rng.normal(size=(7, 6))
    case("lfn_render.psi", psi, lambda x: ad.reduce("sum", ad.square(lfn_render(x, rays, arch))))
    case("lfn_render.rays", rays, lambda x: ad.reduce("sum", ad.square(lfn_render(Tensor(psi), x, arch))))
    hyper = Hypernetwork(arch, latent_dim=5, width=6, layers=3, seed=seed)
    case("hypernet", rng.normal(size=5), lambda x: ad.reduce("sum", ad.square(hyper(x))))

    enc = Encoder(channels=(4, 6), strides=(2, 1), pose_hidden=(5,), scene_width=6, latent_dim=4, seed=seed)
    fj = rng.uniform(size=(3, 8, 8))

    def enc_loss(x):
        pose9, z = enc.encode(x, fj)
        return ad.reduce("sum", ad.square(pose9)) + ad.reduce("sum", ad.square(z))

    case("encoder", rng.uniform(size=(3, 8, 8)), enc_loss)

    truth = rng.uniform(size=(5, 3))
    case("photometric_loss", rng.uniform(size=(5, 3)), lambda x: photometric_loss(x, truth))
    Rt = rot6d_to_matrix(Tensor(rng.normal(size=3)), Tensor(rng.normal(size=3))).data
    tt = rng.normal(size=3)
    case("pose_loss", rng.normal(size=9), lambda x: _pose_total(x, tt, Rt))
    case("latent_loss.mean_square", rng.normal(size=7), lambda x: latent_loss([x, x * 0.5]))
    case("latent_loss.signed_mean", rng.normal(size=7), lambda x: latent_loss([x], "signed_mean") * 3.0)
    return out


def _with(params, idx, x, fn):
    old = params[idx]
    params[idx] = x
    try:
        return fn()
    finally:
        params[idx] = old


def _pose_total(x, tt, Rt):
    R = rot6d_to_matrix(x[3:6], x[6:9])
    lt, lr = pose_loss(x[0:3], tt, R, Rt)
    return total_loss(LossParts(trans=lt, rot=lr, enc=ad.reduce("sum", ad.square(x))), LossWeights())


def case_names(seed: int = 0):
    return [name for name, _, _ in _cases(seed)]


def run_suite(seed: int = 0, tol: float = 1e-4, h: float = 1e-6):
    """Return ``[(name, GradCheckReport), ...]`` for every case."""
    return [(name, grad_check(f, x, h=h, tol=tol)) for name, x, f in _cases(seed)]
