import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def central_diff(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Plain numpy central differences of scalar ``f`` (independent of the tape)."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        o = flat[i]
        flat[i] = o + h
        fp = f(x)
        flat[i] = o - h
        fm = f(x)
        flat[i] = o
        gf[i] = (fp - fm) / (2 * h)
    return g


# small networks that keep end-to-end tests to seconds
TINY = dict(lfn_width=16, lfn_layers=4, hyper_width=32, hyper_layers=3, latent_dim=16,
            encoder_channels=(8, 8, 8), encoder_strides=(2, 2, 1), pose_hidden=(8,), scene_width=16)


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """Ten labelled 16x16 frames of the analytic scene."""
    from raycal.simscene import make_dataset

    root = tmp_path_factory.mktemp("toy")
    make_dataset(root, n_frames=10, seed=0, width=16, height=16, labelled_fraction=1.0)
    return root
