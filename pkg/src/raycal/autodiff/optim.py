"""Adam and Xavier initialisation."""

from dataclasses import dataclass

import numba
import numpy as np

from ..errors import StateError
from .tensor import Tensor


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    lr: float
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_param(cls, param: Tensor, lr: float, **kw) -> "AdamState":
        return cls(m=np.zeros(param.shape), v=np.zeros(param.shape), lr=lr, **kw)


@numba.njit(cache=True)
def _adam_kernel(p, g, m, v, b1, b2, step, denom_scale, eps, gscale):
    for i in range(p.size):
        gi = g[i] * gscale
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= step * mi / (np.sqrt(vi) * denom_scale + eps)


def adam_step(param: Tensor, state: AdamState, grad=None, scale: float = 1.0) -> None:
    """Apply one bias-corrected Adam update to ``param`` in place.

    ``grad`` defaults to ``param.grad``. The gradient is multiplied by
    ``scale`` on the fly (used for norm clipping without a copy).
    """
    g = param.grad if grad is None else grad
    if g is None:
        raise StateError(f"adam_step: parameter {param.name or param.shape} has no gradient")
    if state.m.shape != param.shape:
        raise StateError(f"adam_step: state shape {state.m.shape} != parameter {param.shape}")
    state.step_count += 1
    t = state.step_count
    step = state.lr / (1.0 - state.beta1 ** t)
    denom_scale = 1.0 / np.sqrt(1.0 - state.beta2 ** t)
    if not param.data.flags.c_contiguous:
        param.data = np.ascontiguousarray(param.data)
    _adam_kernel(param.data.reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
                 state.m.reshape(-1), state.v.reshape(-1), state.beta1, state.beta2,
                 step, denom_scale, state.eps, float(scale))


def xavier_bound(fan_out: int, fan_in: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def xavier_init(shape, rng_seed=0, requires_grad=True, name=None) -> Tensor:
    """Uniform Xavier/Glorot initialisation.

    ``shape`` is ``[fan_out, fan_in]`` or a conv kernel shape
    ``[c_out, c_in, k, k]`` (receptive field folded into both fans).
    ``rng_seed`` may be an int or a ``numpy.random.Generator``.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) < 2 or min(shape) < 1:
        raise ValueError(f"xavier_init needs at least two positive dims, got {shape}")
    receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    bound = xavier_bound(shape[0] * receptive, shape[1] * receptive)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=requires_grad, name=name)


def grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.vdot(p.grad, p.grad))
    return float(np.sqrt(total))
