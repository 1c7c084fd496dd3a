import numpy as np
import pytest
from concurrent.futures import ThreadPoolExecutor

import gibbsvar as gv

MODERATE = dict(sigma=0.1, epsilon=0.5)
TRUE_SIGMA = 0.1


def make_model(epsilon, z=100.0, range_=0.25):
    basis = gv.lennard_jones_basis(range_)
    theta = gv.sigma_eps_to_theta(TRUE_SIGMA, epsilon)
    return gv.GibbsModel(basis=basis, theta=theta, z=z)


def simulate_bank(model, window, steps, master_seed, n_reps, workers=4):
    def one(rep):
        cfg = gv.SamplerConfig(steps=steps, seed=gv.child_seed(master_seed, rep))
        return gv.simulate(model, window, cfg)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n_reps)))


@pytest.fixture(scope="session")
def window2():
    return gv.Window(np.zeros(2), np.full(2, 2.0))


@pytest.fixture(scope="session")
def window4():
    return gv.Window(np.zeros(2), np.full(2, 4.0))


@pytest.fixture(scope="session")
def lj_basis():
    return gv.lennard_jones_basis(0.25)


@pytest.fixture(scope="session")
def moderate_model():
    return make_model(0.5)


@pytest.fixture(scope="session")
def moderate_bank_200(moderate_model, window2):
    """200 moderate-case realizations shared across the acceptance criteria."""
    return simulate_bank(moderate_model, window2, 500_000, 2024, 200)


@pytest.fixture(scope="session")
def moderate_bank_big_window(moderate_model, window4):
    """50 moderate realizations on [0,4]^2; steps scaled with the point count."""
    return simulate_bank(moderate_model, window4, 2_000_000, 4048, 50)


@pytest.fixture(scope="session")
def high_bank_50(window2):
    return simulate_bank(make_model(1.0), window2, 500_000, 99, 50)


@pytest.fixture(scope="session")
def extreme_bank_50(window2):
    return simulate_bank(make_model(2.0), window2, 500_000, 8, 50)


def random_config(rng, window, n):
    pts = window.lower + rng.random((n, window.dim)) * window.sides
    return gv.Configuration(pts, window)
