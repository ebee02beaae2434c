"""Tour of the differentiable core: the tape, the gradient suite, rotations and rays.

Run with ``python demos/01_autodiff_and_rays.py``; it takes a few seconds.
"""

# %% A tape records every op on tensors that need gradients
import numpy as np

from raycal import autodiff as ad
from raycal.geometry import plucker_encode, rot6d_to_matrix
from raycal.gradsuite import run_suite

x = ad.Tensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)
with ad.Tape() as tape:
    y = ad.reduce("sum", ad.tanh(x) * x)
ad.backward(y, tape)
# d/dx [x tanh x] = tanh x + x (1 - tanh^2 x)
print("autodiff:", x.grad)
print("by hand: ", np.tanh(x.data) + x.data * (1 - np.tanh(x.data) ** 2))

# %% Every differentiable op is checked against central differences
worst = max(r.max_rel_dev for _, r in run_suite(seed=0))
print(f"gradient suite: worst relative deviation {worst:.2e}")

# %% Six numbers map to a proper rotation, whatever they are
a = np.random.default_rng(0).normal(size=6)
R = rot6d_to_matrix(ad.Tensor(a)).data
print("R^T R - I max:", np.abs(R.T @ R - np.eye(3)).max(), " det:", np.linalg.det(R))

# %% A Plücker ray does not care where along the line its origin sits
o, d = np.array([[0.1, 0.2, 0.0]]), np.array([[0.0, 0.6, 0.8]])
r1 = plucker_encode(o, d).vector().data
r2 = plucker_encode(o + 3.0 * d, d).vector().data
print("ray from o:      ", r1.round(6))
print("ray from o + 3d: ", r2.round(6))
