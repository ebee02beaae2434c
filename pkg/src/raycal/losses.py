"""Photometric, pose and latent losses and their weighted sum."""

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, ContractError, DimensionError

LATENT_MODES = ("mean_square", "signed_mean")


@dataclass
class LossWeights:
    photometric: float = 100.0
    trans: float = 30.0
    rot: float = 20.0
    enc: float = 1e-6

    def validate(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigurationError(f"loss weight {f.name} must be >= 0")
        return self


@dataclass
class LossParts:
    """Individual loss terms; ``None`` marks a term that is absent this step."""

    photometric: Optional[Tensor] = None
    trans: Optional[Tensor] = None
    rot: Optional[Tensor] = None
    enc: Optional[Tensor] = None

    def values(self):
        return {f.name: (0.0 if getattr(self, f.name) is None else getattr(self, f.name).item())
                for f in fields(self)}


def photometric_loss(pred, truth) -> Tensor:
    """Sum over rays of the squared colour difference."""
    pred, truth = ad.as_tensor(pred), ad.as_tensor(truth)
    if pred.shape != truth.shape:
        raise DimensionError(f"photometric_loss: prediction {pred.shape} vs truth {truth.shape}")
    return ad.reduce("sum", ad.square(pred - truth))


def _check_rotation(R, what, tol=1e-6):
    R = np.asarray(R.data if isinstance(R, Tensor) else R)
    if R.shape != (3, 3):
        raise ContractError(f"{what} must be 3x3, got {R.shape}")
    if not np.all(np.isfinite(R)):
        return  # reported by the trainer's non-finite loss check
    if not (np.allclose(R.T @ R, np.eye(3), atol=tol) and abs(np.linalg.det(R) - 1) < tol):
        raise ContractError(f"{what} is not a rotation matrix")


def pose_loss(pred_t, true_t, pred_R, true_R):
    """Squared translation error and squared Frobenius rotation error.

    Each argument may also be a list (one entry per labelled pair); the terms
    are summed over the list.
    """
    if not isinstance(pred_t, (list, tuple)):
        pred_t, true_t, pred_R, true_R = [pred_t], [true_t], [pred_R], [true_R]
    if not (len(pred_t) == len(true_t) == len(pred_R) == len(true_R)) or not pred_t:
        raise ContractError("pose_loss needs equally long, non-empty lists")
    l_t, l_r = None, None
    for pt, tt, pR, tR in zip(pred_t, true_t, pred_R, true_R):
        _check_rotation(pR, "predicted rotation")
        _check_rotation(tR, "target rotation")
        lt = ad.reduce("sum", ad.square(ad.as_tensor(pt) - ad.as_tensor(tt)))
        lr = ad.reduce("sum", ad.square(ad.as_tensor(pR) - ad.as_tensor(tR)))
        l_t = lt if l_t is None else l_t + lt
        l_r = lr if l_r is None else l_r + lr
    return l_t, l_r


def latent_loss(zs, mode: str = "mean_square") -> Tensor:
    """Latent prior term over a batch of latents.

    ``mean_square`` averages ``mean(z**2)`` over the batch (a zero-mean,
    unit-scale prior). ``signed_mean`` sums ``mean(z)`` over the batch.
    """
    if isinstance(zs, Tensor) or not isinstance(zs, (list, tuple)):
        zs = [zs]
    if not zs:
        raise ContractError("latent_loss needs at least one latent")
    if mode == "mean_square":
        total = None
        for z in zs:
            term = ad.reduce("mean", ad.square(ad.as_tensor(z)))
            total = term if total is None else total + term
        return total / float(len(zs))
    if mode == "signed_mean":
        total = None
        for z in zs:
            term = ad.reduce("mean", ad.as_tensor(z))
            total = term if total is None else total + term
        return total
    raise ConfigurationError(f"unknown latent loss mode {mode!r}; choose from {LATENT_MODES}")


def total_loss(parts: LossParts, weights: LossWeights) -> Tensor:
    """Weighted sum of the present terms; absent terms contribute zero."""
    weights.validate()
    total = None
    for f in fields(LossParts):
        term = getattr(parts, f.name)
        if term is None:
            continue
        w = getattr(weights, f.name)
        scaled = term * w
        total = scaled if total is None else total + scaled
    return Tensor(0.0) if total is None else total
