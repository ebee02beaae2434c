"""Differentiable operations.

Binary elementwise ops accept equal shapes or a scalar operand. A handful
of explicit broadcasting helpers (``add_bias``, ``scale_rows``, ``cross``)
cover the row/channel patterns the networks and ray geometry need.
"""

import numba
import numpy as np

from ..errors import ConfigurationError, DimensionError, DomainError
from .tensor import Tensor, make_result


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_binary(kind, a, b):
    if a.shape == b.shape or b.size == 1 or a.size == 1:
        return
    raise DimensionError(f"{kind}: shapes {a.shape} and {b.shape} are incompatible")


def _reduce_to(g, shape):
    """Sum ``g`` down to ``shape`` (used for scalar operands)."""
    if g.shape == tuple(shape):
        return g
    return np.asarray(g.sum()).reshape(shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_binary("add", a, b)
    return make_result("add", a.data + b.data, (a, b),
                       lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_binary("sub", a, b)
    return make_result("sub", a.data - b.data, (a, b),
                       lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_binary("mul", a, b)
    return make_result("mul", a.data * b.data, (a, b),
                       lambda g: (_reduce_to(g * b.data, a.shape),
                                  _reduce_to(g * a.data, b.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_binary("div", a, b)
    out = a.data / b.data

    def bw(g):
        gb = None
        if b.requires_grad:
            gb = _reduce_to(-g * out / b.data, b.shape)
        return _reduce_to(g / b.data, a.shape), gb

    return make_result("div", out, (a, b), bw)


def neg(a):
    a = as_tensor(a)
    return make_result("neg", -a.data, (a,), lambda g: (-g,))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    # keep NaN visible instead of clamping it to zero
    out = np.where(mask | np.isnan(a.data), a.data, 0.0)
    return make_result("relu", out, (a,), lambda g: (g * mask,))


def square(a):
    a = as_tensor(a)
    return make_result("square", a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def sqrt(a):
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt of a negative value")
    out = np.sqrt(a.data)
    return make_result("sqrt", out, (a,), lambda g: (0.5 * g / out,))


def sin(a):
    a = as_tensor(a)
    return make_result("sin", np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return make_result("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def elementwise(kind: str, a, b=None):
    """Dispatch one of ``add, sub, mul, relu, square``."""
    binary = {"add": add, "sub": sub, "mul": mul}
    unary = {"relu": relu, "square": square}
    if kind in binary:
        if b is None:
            raise DimensionError(f"{kind} needs two operands")
        return binary[kind](a, b)
    if kind in unary:
        return unary[kind](a)
    raise ValueError(f"unknown elementwise kind {kind!r}")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return make_result("matmul", a.data @ b.data, (a, b), bw)


@numba.njit(cache=True)
def _row_affine(x, wt, b):
    # every row accumulates in the same order whatever the batch size
    n, k = x.shape
    m = wt.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = b[j]
        for p in range(k):
            xv = x[i, p]
            for j in range(m):
                out[i, j] += xv * wt[p, j]
    return out


def linear(x, weight, bias=None, rowwise: bool = False):
    """Affine map ``x @ weight.T + bias`` for ``x`` of shape (N, in) or (in,).

    With ``rowwise`` each output row is computed independently of the others,
    so results are bitwise identical however the rows are batched (BLAS
    picks different kernels for different batch sizes). It is about half as
    fast as the BLAS path.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    vec = x.ndim == 1
    xd = x.data[None, :] if vec else x.data
    if weight.ndim != 2 or xd.shape[1] != weight.shape[1]:
        raise DimensionError(f"linear: input {x.shape} does not fit weight {weight.shape}")
    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"linear: bias {bias.shape} does not fit weight {weight.shape}")
        inputs = (x, weight, bias)
    if rowwise:
        b = bias.data if bias is not None else np.zeros(weight.shape[0])
        out = _row_affine(np.ascontiguousarray(xd, dtype=float), np.ascontiguousarray(weight.data.T), b)
    else:
        out = xd @ weight.data.T
        if bias is not None:
            out = out + bias.data

    def bw(g):
        g2 = g[None, :] if vec else g
        gx = None
        if x.requires_grad:
            gx = g2 @ weight.data
            gx = gx[0] if vec else gx
        gw = g2.T @ xd if weight.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return make_result("linear", out[0] if vec else out, inputs, bw)


def add_bias(x, bias, axis: int = -1):
    """Add a 1-D ``bias`` broadcast along ``axis`` of ``x``."""
    x, bias = as_tensor(x), as_tensor(bias)
    axis = axis % x.ndim
    if bias.ndim != 1 or bias.shape[0] != x.shape[axis]:
        raise DimensionError(f"add_bias: bias {bias.shape} vs axis {axis} of {x.shape}")
    view = [1] * x.ndim
    view[axis] = -1
    other = tuple(i for i in range(x.ndim) if i != axis)
    return make_result("add_bias", x.data + bias.data.reshape(view), (x, bias),
                       lambda g: (g, g.sum(axis=other)))


def scale_rows(x, s):
    """Multiply row ``i`` of an (N, k) tensor by ``s[i]`` (``s`` of shape (N,))."""
    x, s = as_tensor(x), as_tensor(s)
    if x.ndim != 2 or s.shape != (x.shape[0],):
        raise DimensionError(f"scale_rows: {x.shape} and {s.shape}")

    def bw(g):
        gs = (g * x.data).sum(axis=1) if s.requires_grad else None
        return g * s.data[:, None], gs

    return make_result("scale_rows", x.data * s.data[:, None], (x, s), bw)


def cross(a, b):
    """Cross product along the last axis; a (3,) operand broadcasts over rows."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != 3 or b.shape[-1] != 3:
        raise DimensionError(f"cross needs 3-vectors, got {a.shape} and {b.shape}")
    if a.shape != b.shape and not (a.ndim == 1 or b.ndim == 1):
        raise DimensionError(f"cross: shapes {a.shape} and {b.shape} are incompatible")
    out = np.cross(a.data, b.data)

    def bw(g):
        # d(a x b) = da x b + a x db  =>  ga = b x g, gb = g x a
        ga = np.cross(b.data, g) if a.requires_grad else None
        gb = np.cross(g, a.data) if b.requires_grad else None
        if ga is not None and ga.shape != a.shape:
            ga = ga.reshape(-1, 3).sum(axis=0)
        if gb is not None and gb.shape != b.shape:
            gb = gb.reshape(-1, 3).sum(axis=0)
        return ga, gb

    return make_result("cross", out, (a, b), bw)


def reduce(kind: str, a):
    """Reduce to a scalar by ``sum`` or ``mean``."""
    a = as_tensor(a)
    if a.size == 0:
        raise DomainError("cannot reduce an empty tensor")
    if kind == "sum":
        return make_result("sum", np.asarray(a.data.sum()), (a,),
                           lambda g: (np.full(a.shape, float(g)),))
    if kind == "mean":
        n = a.size
        return make_result("mean", np.asarray(a.data.mean()), (a,),
                           lambda g: (np.full(a.shape, float(g) / n),))
    raise ValueError(f"unknown reduction {kind!r}")


def sum_axis(a, axis: int):
    a = as_tensor(a)
    return make_result("sum_axis", a.data.sum(axis=axis), (a,),
                       lambda g: (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),))


def mean_axis(a, axis: int):
    a = as_tensor(a)
    n = a.shape[axis]
    return make_result("mean_axis", a.data.mean(axis=axis), (a,),
                       lambda g: (np.broadcast_to(np.expand_dims(g, axis) / n, a.shape).copy(),))


def reshape(a, shape):
    a = as_tensor(a)
    return make_result("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got {a.shape}")
    return make_result("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def _is_basic_index(index) -> bool:
    # slices and integers never select an element twice, so plain assignment
    # is a valid (and much faster) scatter
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int, np.integer)) or p is Ellipsis for p in parts)


def getitem(a, index):
    a = as_tensor(a)
    out = a.data[index]

    basic = _is_basic_index(index)

    def bw(g):
        full = np.zeros(a.shape)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return make_result("getitem", np.array(out, dtype=np.float64), (a,), bw)


def concat(tensors, axis: int = 0):
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    return make_result("concat", np.concatenate([t.data for t in ts], axis=axis), tuple(ts),
                       lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors, axis: int = 0):
    ts = [as_tensor(t) for t in tensors]
    n = len(ts)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return make_result("stack", np.stack([t.data for t in ts], axis=axis), tuple(ts), bw)


def pad2d(x, pads):
    """Zero-pad a (C, H, W) tensor by ``(top, bottom, left, right)``."""
    x = as_tensor(x)
    top, bottom, left, right = pads
    out = np.pad(x.data, ((0, 0), (top, bottom), (left, right)))
    h, w = x.shape[1], x.shape[2]
    return make_result("pad2d", out, (x,),
                       lambda g: (g[:, top:top + h, left:left + w],))


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - k
    if span < 0 or span % stride:
        raise ConfigurationError(
            f"conv2d: (size {size} + 2*{padding} - {k}) / stride {stride} is not integral")
    return span // stride + 1


def conv2d(x, kernels, stride: int = 1, padding: int = 0):
    """Cross-correlate a (C_in, H, W) input with (C_out, C_in, k, k) kernels."""
    x, kernels = as_tensor(x), as_tensor(kernels)
    if x.ndim != 3 or kernels.ndim != 4:
        raise DimensionError(f"conv2d: input {x.shape}, kernels {kernels.shape}")
    c_out, c_in, k, k2 = kernels.shape
    if k != k2 or k % 2 == 0:
        raise ConfigurationError(f"conv2d needs square odd kernels, got {k}x{k2}")
    if c_in != x.shape[0]:
        raise DimensionError(f"conv2d: {x.shape[0]} input channels, kernels expect {c_in}")
    h_out = conv_output_size(x.shape[1], k, stride, padding)
    w_out = conv_output_size(x.shape[2], k, stride, padding)
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    win = win[:, ::stride, ::stride][:, :h_out, :w_out]            # C, H', W', k, k
    cols = win.transpose(0, 3, 4, 1, 2).reshape(c_in * k * k, h_out * w_out)
    kmat = kernels.data.reshape(c_out, -1)
    out = (kmat @ cols).reshape(c_out, h_out, w_out)

    def bw(g):
        g2 = g.reshape(c_out, -1)
        gk = (g2 @ cols.T).reshape(kernels.shape) if kernels.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (kmat.T @ g2).reshape(c_in, k, k, h_out, w_out)
            gxp = np.zeros(xp.shape)
            for i in range(k):
                for j in range(k):
                    gxp[:, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += dcols[:, i, j]
            gx = gxp[:, padding:padding + x.shape[1], padding:padding + x.shape[2]] if padding else gxp
        return gx, gk

    return make_result("conv2d", out, (x, kernels), bw)
