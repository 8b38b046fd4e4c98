import numpy as np
import pytest

from mongelmc import targets as tg


def random_spd(rng, d):
    a = rng.standard_normal((d, d))
    return a @ a.T / d + 0.5 * np.eye(d)


def make_targets(seed=0):
    """The six built-in targets, keyed by name, with small fixed parameters."""
    rng = np.random.default_rng(seed)
    data = tg.synthetic_classification(50, 3, seed=11)
    return {
        "gaussian": tg.gaussian_target(rng.standard_normal(3), random_spd(rng, 3)),
        "funnel": tg.funnel_target(2, 0.0, 15.0),
        "banana": tg.banana_target(),
        "ring": tg.ring_target(12.0, 0.12),
        "squiggle": tg.squiggle_target(1.0),
        "logistic": tg.logistic_regression_target(data, 100.0),
    }


def random_point(name, target, rng):
    """A point in the bulk of the target's support."""
    if name == "funnel":
        return np.concatenate([rng.standard_normal(target.dim_x), rng.uniform(-3, 3, 1)])
    if name == "ring":
        r, th = rng.uniform(11.0, 13.0), rng.uniform(0, 2 * np.pi)
        return np.array([r * np.cos(th), r * np.sin(th)])
    if name == "squiggle":
        return np.array([rng.normal(0, 3), rng.normal(0, 1)])
    return rng.standard_normal(target.dimension)


TARGET_NAMES = ["gaussian", "funnel", "banana", "ring", "squiggle", "logistic"]
NONTRIVIAL_2D = ["funnel1", "banana", "ring", "squiggle", "gaussian2"]


def make_2d(name):
    if name == "funnel1":
        return tg.funnel_target(1, 0.0, 15.0)
    if name == "gaussian2":
        return tg.gaussian_target([0.5, -1.0], [[2.0, 0.6], [0.6, 1.0]])
    return make_targets()[name]


def random_point_2d(name, target, rng):
    if name == "funnel1":
        return np.array([rng.standard_normal(), rng.uniform(-3, 3)])
    if name == "gaussian2":
        return rng.standard_normal(2)
    return random_point(name, target, rng)


def levi_civita(Ginv, dG):
    """Gamma^k_ij = 1/2 sum_l G^kl (d_i G_lj + d_j G_il - d_l G_ij), with dG[l] = dG/dx_l."""
    dG = np.asarray(dG)
    t = np.transpose(dG, (1, 0, 2)) + np.transpose(dG, (1, 2, 0)) - dG  # indexed [l, i, j]
    return 0.5 * np.einsum("kl,lij->kij", Ginv, t)


def exact_levi_civita(target, x, alpha):
    # d_l G_ij = alpha^2 (H_il g_j + g_i H_jl)
    _, g, H = target.evaluate(x)
    d = x.shape[0]
    dG = np.array([alpha ** 2 * (np.outer(H[:, l], g) + np.outer(g, H[:, l])) for l in range(d)])
    return levi_civita(np.linalg.inv(np.eye(d) + alpha ** 2 * np.outer(g, g)), dG)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def all_targets():
    return make_targets()
