import numpy as np
import pytest

import gibbsvar as gv
from gibbsvar.errors import InfeasibleDataError
from conftest import random_config


def test_empty_pattern_quadrature(window2, lj_basis):
    config = gv.Configuration(np.zeros((0, 2)), window2)
    quad = gv.build_quadrature(config, lj_basis, grid_res=16)
    assert len(quad.nodes) == 16 * 16
    assert not quad.is_data.any()
    assert np.allclose(quad.weights, window2.volume / 16 ** 2)


def test_weights_sum_to_window_volume(window2, lj_basis, moderate_model):
    config = gv.simulate(moderate_model, window2,
                         gv.SamplerConfig(steps=100_000, seed=13))
    quad = gv.build_quadrature(config, lj_basis, grid_res=32)
    assert quad.weights.sum() == pytest.approx(window2.volume, rel=1e-12)
    assert quad.is_data.sum() == len(config)


def test_dummy_stat_single_neighbor(window2, lj_basis):
    # dummy at a cell center; its statistic is phi(s) against the lone data point
    config = gv.Configuration([[1.03125, 1.03125]], window2)
    quad = gv.build_quadrature(config, lj_basis, grid_res=32, rescale=1.0)
    centers = quad.nodes[~quad.is_data]
    stats = quad.stats[~quad.is_data]
    s = np.sum((centers - config.points[0]) ** 2, axis=1)
    inside = (s > 0) & (s < 0.25 ** 2)
    assert np.allclose(stats[inside, 0], s[inside] ** -6.0, rtol=1e-12)
    assert np.allclose(stats[inside, 1], s[inside] ** -3.0, rtol=1e-12)
    assert np.all(stats[~inside] == 0.0)


def test_rescaling_changes_stats_not_fit(window2, lj_basis, moderate_model):
    config = gv.simulate(moderate_model, window2,
                         gv.SamplerConfig(steps=200_000, seed=14))
    fit_raw = gv.fit_mple(gv.build_quadrature(config, lj_basis, grid_res=64,
                                              rescale=1.0))
    fit_scaled = gv.fit_mple(gv.build_quadrature(config, lj_basis, grid_res=64,
                                                 rescale=0.1))
    assert np.allclose(fit_raw.theta, fit_scaled.theta, rtol=1e-5)


def test_score_equation_satisfied(window2, lj_basis, moderate_model):
    config = gv.simulate(moderate_model, window2,
                         gv.SamplerConfig(steps=200_000, seed=15))
    quad = gv.build_quadrature(config, lj_basis, grid_res=64, rescale=0.1)
    fit = gv.fit_mple(quad)
    beta = np.concatenate([[fit.diagnostics["beta0"]],
                           fit.theta / quad.stat_factors])
    keep = quad.active
    design = np.concatenate([np.ones((keep.sum(), 1)), -quad.stats[keep]],
                            axis=1)
    lam = np.exp(design @ beta)
    score = design.T @ (quad.is_data[keep] - quad.weights[keep] * lam)
    assert np.max(np.abs(score)) <= 1e-6 * max(1.0, quad.n_data)


def test_infeasible_data_error(window2):
    basis = gv.hard_sphere_basis(0.25, 0.05, 0.08)
    config = gv.Configuration([[1.0, 1.0], [1.02, 1.0]], window2)
    with pytest.raises(InfeasibleDataError):
        gv.build_quadrature(config, basis, grid_res=32)


def test_hardcore_dummies_dropped_from_fit(window2):
    basis = gv.hard_sphere_basis(0.25, 0.1, 0.15)
    config = gv.Configuration([[1.0, 1.0], [1.12, 1.0]], window2)
    quad = gv.build_quadrature(config, basis, grid_res=64)
    # hard-core dummies stay as nodes (weights partition the window) but are
    # excluded from the fit
    assert len(quad.nodes) == 64 * 64 + 2
    assert quad.weights.sum() == pytest.approx(window2.volume, rel=1e-12)
    live = quad.active[~quad.is_data]
    dummies = quad.nodes[~quad.is_data]
    d2 = np.min(np.sum((dummies[:, None, :] - config.points[None, :, :]) ** 2,
                       axis=2), axis=1)
    assert np.all(d2[live] >= 0.1 ** 2)
    assert np.all(d2[~live] < 0.1 ** 2)
    assert (~live).sum() > 0


def test_grid_res_floor():
    with pytest.raises(ValueError):
        window = gv.Window(np.zeros(2), np.full(2, 2.0))
        config = gv.Configuration([[1.0, 1.0]], window)
        gv.build_quadrature(config, gv.lennard_jones_basis(0.25), grid_res=4)


def test_discretization_delta_shrinks_with_resolution(window2, lj_basis,
                                                      moderate_model):
    """theta-hat moves monotonically less as the quadrature refines 64->128->256."""
    deltas = []
    for seed in (16, 17, 18):
        config = gv.simulate(moderate_model, window2,
                             gv.SamplerConfig(steps=300_000, seed=seed))
        fits = [gv.fit_mple(gv.build_quadrature(config, lj_basis, grid_res=m,
                                                rescale=0.1)).theta
                for m in (64, 128, 256)]
        deltas.append([np.linalg.norm((fits[1] - fits[0]) * [1e12, 1e6]),
                       np.linalg.norm((fits[2] - fits[1]) * [1e12, 1e6])])
    deltas = np.array(deltas)
    assert np.all(deltas.mean(axis=0)[1] < deltas.mean(axis=0)[0])


def test_mple_result_shape(window2, lj_basis, moderate_model):
    config = gv.simulate(moderate_model, window2,
                         gv.SamplerConfig(steps=200_000, seed=19))
    fit = gv.fit_mple(gv.build_quadrature(config, lj_basis, grid_res=64,
                                          rescale=0.1))
    assert fit.variant == "mple"
    assert fit.n_points == len(config)
    assert "beta0" in fit.diagnostics and "fitted_intensity" in fit.diagnostics
    assert fit.valid in (True, False)
