import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from raycal import autodiff as ad
from raycal.autodiff import Tape, Tensor, backward
from raycal.errors import ConfigurationError, ContractError, DimensionError
from raycal.geometry import rot6d_to_matrix
from raycal.losses import LossParts, LossWeights, latent_loss, photometric_loss, pose_loss, total_loss

finite = st.floats(-1e3, 1e3, allow_nan=False)
nonneg = st.floats(0, 1e3, allow_nan=False)


def rot_z(deg):
    return Rotation.from_euler("z", deg, degrees=True).as_matrix()


# photometric --------------------------------------------------------------------

def test_photometric_examples():
    a = np.random.default_rng(0).uniform(size=(5, 3))
    assert photometric_loss(a, a).item() == 0.0
    b = a.copy()
    b[2, 1] += 0.5
    assert photometric_loss(b, a).item() == pytest.approx(0.25, abs=1e-15)


def test_photometric_matches_brute_force_sum():
    rng = np.random.default_rng(1)
    p, t = rng.normal(size=(7, 3)), rng.normal(size=(7, 3))
    acc = 0.0
    for i in range(7):
        for c in range(3):
            acc += (p[i, c] - t[i, c]) ** 2
    assert photometric_loss(p, t).item() == pytest.approx(acc, rel=1e-14)


def test_photometric_shape_contract():
    with pytest.raises(DimensionError):
        photometric_loss(np.zeros((4, 3)), np.zeros((5, 3)))


# colours on an exact 1/256 grid: any nonzero difference squares to a normal float
grid = st.integers(-256000, 256000).map(lambda k: k / 256.0)


@given(st.lists(st.tuples(finite, finite, finite), min_size=1, max_size=8),
       st.lists(st.tuples(finite, finite, finite), min_size=1, max_size=8))
def test_photometric_nonnegative(a, b):
    n = min(len(a), len(b))
    assert photometric_loss(np.array(a[:n]), np.array(b[:n])).item() >= 0


@given(st.lists(st.tuples(grid, grid, grid), min_size=1, max_size=8),
       st.lists(st.tuples(grid, grid, grid), min_size=1, max_size=8))
def test_photometric_zero_iff_equal(a, b):
    n = min(len(a), len(b))
    a, b = np.array(a[:n]), np.array(b[:n])
    assert (photometric_loss(a, b).item() == 0) == np.array_equal(a, b)
    assert photometric_loss(a, a).item() == 0


# pose -------------------------------------------------------------------------

def test_pose_loss_examples():
    lt, lr = pose_loss(np.zeros(3), np.zeros(3), np.eye(3), np.eye(3))
    assert (lt.item(), lr.item()) == (0.0, 0.0)
    lt, _ = pose_loss(np.zeros(3), np.array([1.0, 2.0, 2.0]), np.eye(3), np.eye(3))
    assert lt.item() == 9.0
    _, lr = pose_loss(np.zeros(3), np.zeros(3), rot_z(90), np.eye(3))
    assert lr.item() == pytest.approx(4.0, abs=1e-12)


def test_pose_loss_sums_over_items():
    R = [rot_z(10), rot_z(-20)]
    lt, lr = pose_loss([np.zeros(3), np.ones(3)], [np.ones(3), np.ones(3)], R, [np.eye(3), np.eye(3)])
    assert lt.item() == 3.0
    single = [pose_loss(np.zeros(3), np.zeros(3), r, np.eye(3))[1].item() for r in R]
    assert lr.item() == pytest.approx(sum(single), rel=1e-14)


def test_pose_loss_rejects_non_rotations():
    with pytest.raises(ContractError):
        pose_loss(np.zeros(3), np.zeros(3), 2 * np.eye(3), np.eye(3))
    with pytest.raises(ContractError):
        pose_loss([], [], [], [])


# latent -----------------------------------------------------------------------

def test_latent_examples():
    z = np.zeros(256)
    assert latent_loss(z).item() == 0.0 and latent_loss(z, "signed_mean").item() == 0.0
    alt = np.tile([1.0, -1.0], 128)
    assert latent_loss(alt, "signed_mean").item() == 0.0
    assert latent_loss(alt).item() == 1.0


def test_latent_mean_square_monte_carlo():
    z = np.random.default_rng(0).normal(size=10_000)
    assert abs(latent_loss(z).item() - 1.0) < 0.05


def test_latent_batch_semantics():
    a, b = np.full(4, 2.0), np.full(4, -1.0)
    assert latent_loss([a, b]).item() == pytest.approx((4.0 + 1.0) / 2)
    assert latent_loss([a, b], "signed_mean").item() == pytest.approx(2.0 - 1.0)


def test_latent_mode_contract():
    with pytest.raises(ConfigurationError):
        latent_loss(np.zeros(3), "bogus")
    with pytest.raises(ContractError):
        latent_loss([])


# total ------------------------------------------------------------------------

def test_total_examples():
    zero = Tensor(0.0)
    assert total_loss(LossParts(zero, zero, zero, zero), LossWeights()).item() == 0.0
    one = Tensor(1.0)
    assert total_loss(LossParts(one, one, one, one), LossWeights()).item() == pytest.approx(150.000001, abs=1e-12)


def test_default_weights():
    w = LossWeights()
    assert (w.photometric, w.trans, w.rot, w.enc) == (100.0, 30.0, 20.0, 1e-6)


@given(nonneg, nonneg, nonneg, nonneg, nonneg, nonneg, nonneg, nonneg)
def test_total_is_exactly_the_weighted_sum(p, t, r, e, wp, wt, wr, we):
    parts = LossParts(Tensor(p), Tensor(t), Tensor(r), Tensor(e))
    got = total_loss(parts, LossWeights(wp, wt, wr, we)).item()
    assert got == p * wp + t * wt + r * wr + e * we


@given(nonneg, nonneg, st.floats(0, 100))
def test_total_is_linear_in_each_weight(p, e, k):
    # scaling one weight by k scales that term's contribution by k exactly
    base = LossParts(photometric=Tensor(p), enc=Tensor(e))
    a = total_loss(base, LossWeights(photometric=k, enc=0.0)).item()
    assert a == k * p


def test_unlabelled_total_ignores_pose_head():
    rng = np.random.default_rng(2)
    pose9 = Tensor(rng.normal(size=9), requires_grad=True)
    colour = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    z = Tensor(rng.normal(size=8), requires_grad=True)
    with Tape() as tape:
        rot6d_to_matrix(pose9[3:6], pose9[6:9])  # pose head evaluated but unlabelled
        parts = LossParts(photometric=photometric_loss(colour, np.zeros((4, 3))), enc=latent_loss(z))
        loss = total_loss(parts, LossWeights())
    backward(loss, tape)
    assert pose9.grad is None or not np.any(pose9.grad)
    assert loss.item() == pytest.approx(100 * parts.photometric.item() + 1e-6 * parts.enc.item(), rel=1e-15)


def test_total_gradient_is_weighted_sum_of_term_gradients():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=9), requires_grad=True)
    truth_R = rot_z(30)

    def parts():
        R = rot6d_to_matrix(x[3:6], x[6:9])
        lt, lr = pose_loss(x[0:3], np.ones(3), R, truth_R)
        return LossParts(photometric=photometric_loss(ad.reshape(x, (3, 3)), np.eye(3)),
                         trans=lt, rot=lr, enc=latent_loss(x))

    w = LossWeights()
    with Tape() as tape:
        total = total_loss(parts(), w)
    backward(total, tape)
    g_total, x.grad = x.grad.copy(), None
    acc = np.zeros(9)
    for name in ("photometric", "trans", "rot", "enc"):
        with Tape() as tape:
            term = getattr(parts(), name)
        backward(term, tape)
        acc += getattr(w, name) * x.grad
        x.grad = None
    assert np.allclose(g_total, acc, rtol=1e-12, atol=1e-12)


def test_negative_weights_rejected():
    with pytest.raises(ConfigurationError):
        total_loss(LossParts(photometric=Tensor(1.0)), LossWeights(photometric=-1.0))
