"""Variational estimators: empirical linear systems A theta = b and solvers.

Both estimators accumulate, over data points x evaluated against w minus x,
per-point contributions built from the basis derivative fields and a
nonnegative weight Psi (times a periodic cell taper for the grid variant).

The default 'simplified' formula pairs gradients coordinate-by-coordinate
(cross terms vanish in expectation for direction-symmetric processes):

    A_ij = sum_x  w(x) sum_k d_k h_i d_k h_j
    b_i  = sum_x [ sum_k d_k w d_k h_i + w(x) lap h_i ]

The 'raw' formula keeps the full products of divergences:

    A_ij = sum_x  w(x) (div h_i)(div h_j)
    b_i  = sum_x [ (div w)(div h_i) + w(x) divdiv h_i ]

with w = Psi for the shift-invariant variant and w = taper * Psi for the
grid variant. Solving A theta = b needs no normalizing constant, simulation
or optimization; the intensity z never enters the sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientCellsError, InvalidEstimateError, SingularSystemError
from .geometry import Configuration, build_index
from .models import (PotentialBasis, PsiWeight, basis_point_fields, cell_taper,
                     psi_point_fields, theta_to_sigma_eps)

__all__ = [
    "EmpiricalSystem",
    "EstimateResult",
    "shift_invariant_system",
    "grid_system",
    "solve",
    "pooled_estimate",
    "cell_residuals",
    "sandwich_covariance",
    "COND_LIMIT",
]

COND_LIMIT = 1e12


@dataclass
class EmpiricalSystem:
    """Unnormalized empirical sums A-hat, b-hat with their bookkeeping."""

    a_hat: np.ndarray          # (p, p)
    b_hat: np.ndarray          # (p,)
    count: int                 # points contributing to the outer sums
    volume: float              # window volume (normalizer)
    variant: str               # 'invariant' | 'grid'
    formula: str               # 'simplified' | 'raw'

    @property
    def degenerate(self) -> bool:
        return not (np.any(self.a_hat) or np.any(self.b_hat))


@dataclass
class EstimateResult:
    theta: np.ndarray
    sigma: Optional[float]
    epsilon: Optional[float]
    valid: Optional[bool]
    cond: float
    variant: str
    formula: Optional[str]
    n_points: int
    covariance: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "theta": [float(v) for v in self.theta],
            "sigma": self.sigma,
            "epsilon": self.epsilon,
            "valid": self.valid,
            "cond": self.cond,
            "variant": self.variant,
            "formula": self.formula,
            "n_points": self.n_points,
        }
        if self.covariance is not None:
            out["covariance"] = [[float(v) for v in row] for row in self.covariance]
        if self.diagnostics:
            out["diagnostics"] = self.diagnostics
        return out


def _check_formula(formula: str) -> str:
    if formula not in ("simplified", "raw"):
        raise ValueError("formula must be 'simplified' or 'raw'")
    return formula


def _interior_mask(config: Configuration, border: float) -> np.ndarray:
    if border <= 0:
        return np.ones(len(config), dtype=bool)
    win = config.window.erode(border)
    return win.contains(config.points)


def _point_contributions(config: Configuration, basis: PotentialBasis,
                         psi: Optional[PsiWeight], formula: str,
                         cell_side: Optional[float]):
    """Per-point contributions (n,p,p) to A-hat and (n,p) to b-hat.

    cell_side=None gives the shift-invariant terms; otherwise the grid terms
    with the taper anchored at the window's lower corner.
    """
    psi = basis.default_psi() if psi is None else psi
    d = config.dim
    index = build_index(config, basis.range) if len(config) else None
    tab = index.pairs_within(basis.range) if index else None
    n = len(config)
    p = basis.p
    if tab is None or not len(tab.s):
        return np.zeros((n, p, p)), np.zeros((n, p))
    fields = basis_point_fields(tab, basis, d)
    psi_vals, psi_grads = psi_point_fields(tab, psi, d)
    if cell_side is None:
        w = psi_vals
        w_grads = psi_grads
    else:
        t_vals, t_grads = cell_taper(config.points - config.window.lower, cell_side)
        w = t_vals * psi_vals
        w_grads = t_grads * psi_vals[:, None] + t_vals[:, None] * psi_grads
    contrib_a = np.zeros((n, p, p))
    contrib_b = np.zeros((n, p))
    if formula == "simplified":
        # A: w * sum_k d_k h_i d_k h_j ; b: sum_k d_k w d_k h_i + w lap h_i
        gk = fields.grad  # (p, n, d)
        contrib_a = w[:, None, None] * np.einsum("ink,jnk->nij", gk, gk)
        contrib_b = (np.einsum("nk,ink->ni", w_grads, gk)
                     + w[:, None] * fields.lap.T)
    else:
        divs = fields.div  # (p, n)
        contrib_a = w[:, None, None] * np.einsum("in,jn->nij", divs, divs)
        contrib_b = (w_grads.sum(axis=1)[:, None] * divs.T
                     + w[:, None] * fields.divdiv.T)
    return contrib_a, contrib_b


def shift_invariant_system(config: Configuration, basis: PotentialBasis,
                           psi: Optional[PsiWeight] = None,
                           formula: str = "simplified",
                           border: float = 0.0) -> EmpiricalSystem:
    """Empirical system using translation-invariant test functions."""
    formula = _check_formula(formula)
    ca, cb = _point_contributions(config, basis, psi, formula, cell_side=None)
    mask = _interior_mask(config, border)
    return EmpiricalSystem(a_hat=ca[mask].sum(axis=0), b_hat=cb[mask].sum(axis=0),
                           count=int(mask.sum()), volume=config.window.volume,
                           variant="invariant", formula=formula)


def _check_cell_side(config: Configuration, cell_side: float) -> np.ndarray:
    if cell_side <= 0:
        raise ValueError("cell side must be positive")
    ratio = config.window.sides / cell_side
    cells = np.rint(ratio).astype(np.int64)
    if np.any(np.abs(ratio - cells) > 1e-9 * np.maximum(1, cells)):
        raise ValueError(
            f"window sides {tuple(config.window.sides)} are not integer "
            f"multiples of the cell side {cell_side}")
    return cells


def grid_system(config: Configuration, basis: PotentialBasis,
                psi: Optional[PsiWeight] = None, cell_side: float = 0.2,
                formula: str = "simplified",
                border: float = 0.0) -> EmpiricalSystem:
    """Empirical system with test functions tapered to vanish on a cell grid."""
    formula = _check_formula(formula)
    _check_cell_side(config, cell_side)
    ca, cb = _point_contributions(config, basis, psi, formula, cell_side=cell_side)
    mask = _interior_mask(config, border)
    return EmpiricalSystem(a_hat=ca[mask].sum(axis=0), b_hat=cb[mask].sum(axis=0),
                           count=int(mask.sum()), volume=config.window.volume,
                           variant="grid", formula=formula)


def _equilibrated_cond(a: np.ndarray):
    """Condition number after two-sided diagonal scaling.

    The raw-unit condition number of A is inflated by the fixed column scales
    of the basis components (about sigma^-6 per column for the 12-6 pair), so
    it would flag every healthy fit; the equilibrated value measures actual
    statistical degeneracy and is what the singularity threshold applies to.
    """
    diag = np.diag(a)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        return np.inf, None
    scale = 1.0 / np.sqrt(diag)
    return float(np.linalg.cond(a * np.outer(scale, scale))), scale


def solve(system: EmpiricalSystem) -> EstimateResult:
    """Solve A-hat theta = b-hat; flags validity and reports conditioning."""
    if system.degenerate:
        raise SingularSystemError(system.variant)
    cond, scale = _equilibrated_cond(system.a_hat)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystemError(system.variant, cond)
    scaled_a = system.a_hat * np.outer(scale, scale)
    theta = scale * np.linalg.solve(scaled_a, scale * system.b_hat)
    sigma = epsilon = None
    valid = None
    if theta.shape == (2,):
        try:
            sigma, epsilon = theta_to_sigma_eps(theta)
            valid = True
        except InvalidEstimateError:
            valid = False
    return EstimateResult(
        theta=theta, sigma=sigma, epsilon=epsilon, valid=valid, cond=cond,
        variant=system.variant, formula=system.formula, n_points=system.count,
        diagnostics={
            "cond_raw": float(np.linalg.cond(system.a_hat)),
            "a_per_point": (system.a_hat / system.count).tolist()
            if system.count else None,
            "a_per_volume": (system.a_hat / system.volume).tolist(),
        })


def pooled_estimate(systems: Sequence[EmpiricalSystem]) -> EstimateResult:
    """Average the empirical matrices and vectors entrywise, then solve."""
    if not systems:
        raise ValueError("need at least one system to pool")
    p = systems[0].a_hat.shape[0]
    if any(s.a_hat.shape != (p, p) for s in systems):
        raise ValueError("systems must share the same parameter dimension")
    pooled = EmpiricalSystem(
        a_hat=np.mean([s.a_hat for s in systems], axis=0),
        b_hat=np.mean([s.b_hat for s in systems], axis=0),
        count=int(np.sum([s.count for s in systems])),
        volume=systems[0].volume,
        variant=systems[0].variant,
        formula=systems[0].formula)
    return solve(pooled)


def _cell_offsets(d: int, cell_side: float, radius: float) -> np.ndarray:
    """Integer cell offsets o with box-gap distance <= radius (includes 0)."""
    reach = int(np.ceil(radius / cell_side)) + 1
    axes = [np.arange(-reach, reach + 1)] * d
    grid = np.meshgrid(*axes, indexing="ij")
    offs = np.stack([g.ravel() for g in grid], axis=1)
    gap = np.maximum(np.abs(offs) - 1, 0) * cell_side
    keep = np.sum(gap ** 2, axis=1) <= radius * radius + 1e-12
    return offs[keep]


def cell_residuals(config: Configuration, basis: PotentialBasis,
                   psi: Optional[PsiWeight] = None, cell_side: float = 0.2,
                   theta: Optional[np.ndarray] = None,
                   formula: str = "simplified"):
    """Per-cell residual statistics Y_u of the grid estimating equation.

    Y_u sums, over the points in cell u, the b-contribution minus the
    theta-weighted A-contributions; summed over all cells this reproduces
    b-hat minus A-hat theta exactly. Returns (cells per axis, Y) with Y of
    shape cells + (p,).
    """
    formula = _check_formula(formula)
    if theta is None:
        raise ValueError("theta (the fitted value) is required")
    theta = np.asarray(theta, dtype=float)
    cells = _check_cell_side(config, cell_side)
    ca, cb = _point_contributions(config, basis, psi, formula,
                                  cell_side=cell_side)
    resid = cb - np.einsum("nij,j->ni", ca, theta)   # (n, p)
    coords = np.clip(((config.points - config.window.lower) / cell_side)
                     .astype(np.int64), 0, cells - 1)
    y = np.zeros(tuple(cells) + (basis.p,))
    if len(resid):
        np.add.at(y, tuple(coords.T), resid)
    return cells, y


def sandwich_covariance(config: Configuration, basis: PotentialBasis,
                        psi: Optional[PsiWeight] = None, cell_side: float = 0.2,
                        theta: Optional[np.ndarray] = None,
                        interaction_range: Optional[float] = None,
                        formula: str = "simplified") -> np.ndarray:
    """Plug-in covariance of the grid estimate from per-cell residuals.

    Cell pairs within the interaction range of each other (closest-point
    distance, so adjacent cells always count) are accumulated into
    Sigma-hat, and the covariance of theta-hat is A-hat^-1 Sigma-hat A-hat^-1
    with Sigma-hat the total across-cell sum (equivalently the per-unit-
    volume Sigma scaled by the window volume).
    """
    cells, y = cell_residuals(config, basis, psi, cell_side, theta, formula)
    if np.any(cells < 3):
        raise InsufficientCellsError(
            f"need at least 3 cells per axis, got {tuple(cells)}")
    p = basis.p
    if not np.any(y):
        return np.zeros((p, p))
    ca, _ = _point_contributions(config, basis, psi, formula,
                                 cell_side=cell_side)
    a_hat = ca.sum(axis=0)
    cond, _ = _equilibrated_cond(a_hat) if np.any(a_hat) else (np.inf, None)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystemError("grid", cond)
    radius = basis.range if interaction_range is None else float(interaction_range)
    sigma_tot = np.zeros((p, p))
    for off in _cell_offsets(config.dim, cell_side, radius):
        src, dst = [], []
        for k, o in enumerate(off):
            nk = cells[k]
            if o >= 0:
                src.append(slice(0, nk - o))
                dst.append(slice(o, nk))
            else:
                src.append(slice(-o, nk))
                dst.append(slice(0, nk + o))
        yu = y[tuple(src)].reshape(-1, p)
        yv = y[tuple(dst)].reshape(-1, p)
        sigma_tot += yu.T @ yv
    a_inv = np.linalg.inv(a_hat)
    cov = a_inv @ sigma_tot @ a_inv
    return 0.5 * (cov + cov.T)
