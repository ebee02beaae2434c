"""Finite-difference gradient checker."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tape, Tensor, backward


@dataclass
class GradCheckReport:
    max_rel_dev: float
    checked: int
    flagged: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    tol: float = 1e-4

    @property
    def passed(self) -> bool:
        return not self.flagged


def _eval(f, x):
    return float(np.asarray(f(x).data).reshape(-1)[0])


def grad_check(f, x: Tensor, h: float = 1e-5, tol: float = 1e-4, indices=None,
               atol: float = 1e-8, kink_tol: float = 1e-2) -> GradCheckReport:
    """Compare tape gradients of scalar ``f(x)`` against central differences.

    ``x.data`` is perturbed in place and restored. Entries where the one-sided
    differences disagree by more than ``kink_tol`` (relative) sit on a kink
    such as ReLU at zero; they are listed in ``skipped`` and not scored.
    ``indices`` restricts the check to a subset of flat positions.
    """
    saved_grad = x.grad
    x.grad = None
    was_req = x.requires_grad
    x.requires_grad = True
    try:
        with Tape() as tape:
            loss = f(x)
        backward(loss, tape)
        analytic = np.zeros(x.shape) if x.grad is None else x.grad.copy()
    finally:
        x.grad = saved_grad
        x.requires_grad = was_req

    flat = x.data.reshape(-1)
    an = analytic.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    report = GradCheckReport(max_rel_dev=0.0, checked=0, tol=tol)
    f0 = _eval(f, x)
    for i in indices:
        i = int(i)
        orig = flat[i]
        flat[i] = orig + h
        fp = _eval(f, x)
        flat[i] = orig - h
        fm = _eval(f, x)
        flat[i] = orig
        fwd, bwd = (fp - f0) / h, (f0 - fm) / h
        if abs(fwd - bwd) > kink_tol * max(abs(fwd), abs(bwd), atol) and abs(fwd - bwd) > atol:
            report.skipped.append(i)
            continue
        numeric = (fp - fm) / (2 * h)
        dev = abs(numeric - an[i]) / max(abs(numeric), abs(an[i]), atol)
        report.checked += 1
        report.max_rel_dev = max(report.max_rel_dev, dev)
        if dev > tol:
            report.flagged.append(i)
    return report
