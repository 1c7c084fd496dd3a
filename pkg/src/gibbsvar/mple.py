"""Maximum pseudolikelihood via the Berman-Turner quadrature device.

The log pseudolikelihood of a pairwise Gibbs model with conditional intensity
lambda(u) = exp(beta0 - sum_i theta_i S_i(u)), S_i(u) = h_i(u, w minus u), is
approximated by the weighted Poisson log likelihood

    sum_j w_j (y_j log lambda_j - lambda_j),   y_j = 1/w_j data, 0 dummy,

with dummy points at the centers of an m x m grid of cells and counting
weights w = cell area / (1 + data points in the cell). Interpoint distances
can be rescaled to a characteristic unit so the sufficient statistics stay
numerically tame; the fitted coefficients are mapped back exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergedError, InfeasibleDataError, InvalidEstimateError
from .estimators import EstimateResult
from .geometry import Configuration, build_index
from .models import PotentialBasis, theta_to_sigma_eps

__all__ = ["Quadrature", "build_quadrature", "fit_mple"]


@dataclass
class Quadrature:
    """Berman-Turner nodes: data tagged y = 1/w, dummies y = 0.

    `active` excludes dummy nodes inside the (effective) hard core from the
    fit; the weights of all nodes still partition the window exactly.
    """

    nodes: np.ndarray          # (m, d)
    is_data: np.ndarray        # (m,) bool
    weights: np.ndarray        # (m,) area units; sum to the window volume
    stats: np.ndarray          # (m, p) rescaled sufficient statistics
    active: np.ndarray         # (m,) bool; inactive nodes have lambda = 0
    rescale: float             # distance unit used for the statistics
    stat_factors: np.ndarray   # (p,) multipliers mapping raw S to stats
    volume: float
    n_data: int


def _dummy_stats(dummies: np.ndarray, data: np.ndarray, basis: PotentialBasis,
                 block: int = 4096) -> np.ndarray:
    """h_i(u, w) for dummy nodes u, vectorized in blocks against the data."""
    p = basis.p
    out = np.zeros((len(dummies), p))
    if not len(data):
        return out
    for a in range(0, len(dummies), block):
        chunk = dummies[a:a + block]
        s = np.sum((chunk[:, None, :] - data[None, :, :]) ** 2, axis=2)
        out[a:a + block] = basis.phi(s).sum(axis=2).T
    return out


# A dummy node whose statistic exceeds the largest data-node statistic by
# this factor is indistinguishable from a hard-core node: exp(-theta S)
# underflows for every parameter value of statistical interest. Such nodes
# are dropped from the fit exactly like S = +inf nodes; leaving them in
# stalls Newton on a barrier many orders of magnitude above the data scale.
EFFECTIVE_HARDCORE_FACTOR = 1e6


def build_quadrature(config: Configuration, basis: PotentialBasis,
                     grid_res: int = 128, rescale: float = 1.0) -> Quadrature:
    """Counting-weight quadrature over an m x m (x ...) grid of cells."""
    if grid_res < 8:
        raise ValueError("grid resolution must be at least 8")
    if rescale <= 0:
        raise ValueError("rescale unit must be positive")
    win = config.window
    d = win.dim
    m = int(grid_res)
    cell_sides = win.sides / m
    cell_volume = win.volume / m ** d
    axes = [win.lower[k] + (np.arange(m) + 0.5) * cell_sides[k] for k in range(d)]
    grid = np.meshgrid(*axes, indexing="ij")
    dummies = np.stack([g.ravel() for g in grid], axis=1)

    data = config.points
    n = len(data)
    data_cells = np.clip(((data - win.lower) / cell_sides).astype(np.int64),
                         0, m - 1)
    flat = np.ravel_multi_index(data_cells.T, (m,) * d) if n else np.zeros(0, int)
    counts = np.bincount(flat, minlength=m ** d)
    w_dummy = cell_volume / (1.0 + counts)
    w_data = w_dummy[flat] if n else np.zeros(0)

    stats_dummy = _dummy_stats(dummies, data, basis)
    stats_data = np.zeros((n, basis.p))
    if n:
        tab = build_index(config, basis.range).pairs_within(basis.range)
        if len(tab.s):
            phi = basis.phi(tab.s)
            for c in range(basis.p):
                stats_data[:, c] = np.bincount(tab.i, weights=phi[c], minlength=n)
    if np.any(np.isinf(stats_data)):
        raise InfeasibleDataError(
            "a data point has infinite local energy under this basis")

    if rescale != 1.0:
        if basis.exponents is None:
            raise ValueError("distance rescaling needs an inverse-power basis")
        factors = rescale ** (2.0 * basis.exponents)
    else:
        factors = np.ones(basis.p)

    dummy_active = ~np.any(np.isinf(stats_dummy), axis=1)
    if n:
        cap = EFFECTIVE_HARDCORE_FACTOR * np.maximum(
            np.abs(stats_data).max(axis=0), 1.0)
        dummy_active &= ~np.any(np.abs(stats_dummy) > cap, axis=1)

    nodes = np.concatenate([data, dummies], axis=0)
    stats = np.concatenate(
        [stats_data, np.where(np.isinf(stats_dummy), 0.0, stats_dummy)],
        axis=0) * factors
    weights = np.concatenate([w_data, w_dummy.ravel()])
    is_data = np.zeros(len(nodes), dtype=bool)
    is_data[:n] = True
    active = np.concatenate([np.ones(n, dtype=bool), dummy_active])
    return Quadrature(nodes=nodes, is_data=is_data, weights=weights,
                      stats=stats, active=active, rescale=rescale,
                      stat_factors=factors, volume=win.volume, n_data=n)


def fit_mple(quad: Quadrature, max_iter: int = 100, tol: float = 1e-8) -> EstimateResult:
    """Damped Newton maximization of the weighted Poisson log likelihood.

    Dummy nodes sitting almost on a data point carry enormous statistics and
    act as a barrier keeping the interaction coefficients in the stable
    half-space. The objective is evaluated without clipping (-inf on
    overflow, which the line search simply rejects) and the Newton system is
    solved after diagonal equilibration, with a Levenberg-style ridge as the
    fallback when a raw step is unusable.
    """
    if quad.n_data < 1:
        raise ValueError("quadrature must contain at least one data point")
    p = quad.stats.shape[1]
    keep = quad.active
    # normalize each statistic column so the coefficients are O(1); this is
    # an exact reparametrization (mapped back below) that keeps the Newton
    # iteration well-scaled whatever distance unit the statistics carry
    col_scale = np.abs(quad.stats[keep]).max(axis=0)
    col_scale[col_scale == 0.0] = 1.0
    design = np.concatenate([np.ones((int(keep.sum()), 1)),
                             -quad.stats[keep] / col_scale], axis=1)
    w = quad.weights[keep]
    is_data = quad.is_data[keep]

    def objective(beta):
        eta = design @ beta
        if np.any(eta > 700.0):
            return -np.inf
        return float(eta[is_data].sum() - w @ np.exp(eta))

    def grad_hess(beta):
        # overflow here only produces an unusable step, which the ridge
        # fallback below absorbs
        with np.errstate(over="ignore"):
            lam = np.exp(design @ beta)
            grad = design.T @ (is_data - w * lam)
            hess = design.T @ (design * (w * lam)[:, None])
        return grad, hess

    beta = np.zeros(p + 1)
    beta[0] = np.log(quad.n_data / quad.volume)
    obj = objective(beta)
    cond = np.inf
    ridge = 0.0
    for it in range(max_iter):
        grad, hess = grad_hess(beta)
        if np.max(np.abs(grad)) < tol:
            cond = float(np.linalg.cond(hess))
            break
        scale = 1.0 / np.sqrt(np.maximum(np.diag(hess), 1e-300))
        hs = hess * np.outer(scale, scale)
        gs = grad * scale
        moved = False
        for _ in range(40):
            try:
                step = scale * np.linalg.solve(hs + ridge * np.eye(p + 1), gs)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                t = 1.0
                for _ in range(60):
                    cand = beta + t * step
                    cand_obj = objective(cand)
                    if cand_obj >= obj - 1e-12 * max(1.0, abs(obj)):
                        beta, obj = cand, cand_obj
                        moved = True
                        break
                    t /= 2.0
            if moved:
                ridge = max(ridge / 10.0, 0.0) if ridge > 1e-12 else 0.0
                break
            ridge = 1e-6 if ridge == 0.0 else ridge * 10.0
            if ridge > 1e12:
                break
        if not moved:
            raise DivergedError(beta, it)
    else:
        raise DivergedError(beta, max_iter)

    theta = beta[1:] / col_scale * quad.stat_factors
    sigma = epsilon = None
    valid = None
    if p == 2:
        try:
            sigma, epsilon = theta_to_sigma_eps(theta)
            valid = True
        except InvalidEstimateError:
            valid = False
    return EstimateResult(
        theta=theta, sigma=sigma, epsilon=epsilon, valid=valid, cond=cond,
        variant="mple", formula=None, n_points=quad.n_data,
        diagnostics={"beta0": float(beta[0]),
                     "iterations": it + 1,
                     "rescale": quad.rescale,
                     "fitted_intensity": float(np.exp(beta[0]))})
