"""Pair-potential bases, Gibbs model energies, and their spatial derivatives.

Component potentials are functions of the squared distance s = (x - y)^2 with
a common compact range: phi_i(s) = 0 for s >= range^2. An optional hard core
makes phi_i(s) = +infinity for s < r0^2, with the convention phi_i'(s) = 0
there so derivative sums stay finite.

The derivative formulas implemented here, for h_i(x, w) = sum_y phi_i(s_y):

    grad_k h_i  = 2 sum_y (x_k - y_k) phi_i'(s_y)
    div h_i     = 2 sum_y phi_i'(s_y) sum_k (x_k - y_k)
    divdiv h_i  = 2 sum_y [ d phi_i'(s_y) + 2 phi_i''(s_y) (sum_k (x_k-y_k))^2 ]
    lap h_i     = sum_y [ 2d phi_i'(s_y) + 4 s_y phi_i''(s_y) ]
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import InvalidEstimateError
from .geometry import CellIndex, Configuration, PairTable, build_index

__all__ = [
    "PotentialBasis",
    "GibbsModel",
    "LennardJonesSpec",
    "PsiWeight",
    "inverse_power_basis",
    "lennard_jones_basis",
    "hard_sphere_basis",
    "local_energy_basis",
    "div_h_basis",
    "grad_h_basis",
    "div_div_h_basis",
    "laplacian_h_basis",
    "psi_hardcore",
    "grad_psi_hardcore",
    "div_psi_hardcore",
    "cell_taper",
    "total_energy",
    "theta_to_sigma_eps",
    "sigma_eps_to_theta",
    "theta_is_valid",
    "model_from_spec",
    "model_to_spec",
    "load_model",
]


@dataclass(frozen=True)
class PotentialBasis:
    """p component potentials with analytic first/second derivatives.

    `phi_raw`, `dphi_raw`, `d2phi_raw` map an (m,) array of squared distances
    to a (p, m) array, without truncation; the public `phi`/`dphi`/`d2phi`
    apply the compact support and hard-core conventions. `exponents` is set
    for the inverse-power family phi_i(s) = s^-e_i, which is what the sampler
    and the rescaled pseudolikelihood need.
    """

    p: int
    range: float                      # R0, length units
    phi_raw: Callable
    dphi_raw: Callable
    d2phi_raw: Callable
    hardcore: float = 0.0             # r0; 0 means no hard core
    taper: Optional[float] = None     # r1, required when hardcore > 0
    exponents: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.range <= 0:
            raise ValueError("range must be positive")
        if self.hardcore < 0:
            raise ValueError("hard-core radius must be nonnegative")
        if self.hardcore > 0:
            if self.taper is None or not (self.hardcore < self.taper < self.range):
                raise ValueError("need hardcore r0 < taper r1 < range R0")

    @property
    def range_sq(self) -> float:
        return self.range * self.range

    @property
    def hardcore_sq(self) -> float:
        return self.hardcore * self.hardcore

    def _masked(self, fn, s, inside_core):
        s = np.asarray(s, dtype=float)
        out = np.zeros((self.p,) + s.shape)
        live = (s < self.range_sq) & (s >= self.hardcore_sq) & (s > 0.0)
        if np.any(live):
            out[:, live] = fn(s[live])
        out[:, (s < self.hardcore_sq) | (s == 0.0)] = inside_core
        return out

    def phi(self, s) -> np.ndarray:
        return self._masked(self.phi_raw, s, np.inf)

    def dphi(self, s) -> np.ndarray:
        # convention: phi' = 0 inside the hard core
        return self._masked(self.dphi_raw, s, 0.0)

    def d2phi(self, s) -> np.ndarray:
        return self._masked(self.d2phi_raw, s, 0.0)

    def phi_theta(self, s, theta) -> np.ndarray:
        """Combined potential sum_i theta_i phi_i(s); +inf inside the hard core."""
        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(s.shape)
        live = (s < self.range_sq) & (s >= self.hardcore_sq) & (s > 0.0)
        if np.any(live):
            out[live] = theta @ self.phi_raw(s[live])
        out[(s < self.hardcore_sq) | (s == 0.0)] = np.inf
        return out

    def default_psi(self) -> "PsiWeight":
        if self.hardcore > 0:
            return PsiWeight.for_hardcore(self.hardcore, self.taper)
        return PsiWeight.one()


def inverse_power_basis(exponents, range_, hardcore=0.0, taper=None) -> PotentialBasis:
    """Basis phi_i(s) = s^-e_i truncated at range^2, optional hard core."""
    e = np.asarray(exponents, dtype=float)
    if e.ndim != 1 or e.size < 1:
        raise ValueError("exponents must be a nonempty 1-d sequence")

    def phi(s):
        return s[None, :] ** (-e[:, None])

    def dphi(s):
        return -e[:, None] * s[None, :] ** (-e[:, None] - 1)

    def d2phi(s):
        return e[:, None] * (e[:, None] + 1) * s[None, :] ** (-e[:, None] - 2)

    return PotentialBasis(p=e.size, range=float(range_), phi_raw=phi,
                          dphi_raw=dphi, d2phi_raw=d2phi,
                          hardcore=float(hardcore),
                          taper=None if taper is None else float(taper),
                          exponents=e)


def lennard_jones_basis(range_=0.25) -> PotentialBasis:
    """phi_1(s) = s^-6, phi_2(s) = s^-3: the 12-6 potential in squared distance."""
    return inverse_power_basis((6.0, 3.0), range_)


def hard_sphere_basis(range_, hardcore, taper, exponents=(6.0, 3.0)) -> PotentialBasis:
    return inverse_power_basis(exponents, range_, hardcore=hardcore, taper=taper)


@dataclass(frozen=True)
class GibbsModel:
    """A potential basis with canonical parameters theta and intensity z."""

    basis: PotentialBasis
    theta: np.ndarray
    z: float

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (self.basis.p,):
            raise ValueError(f"theta must have length p={self.basis.p}")
        if self.z <= 0:
            raise ValueError("intensity z must be positive")
        object.__setattr__(self, "theta", theta)


@dataclass(frozen=True)
class LennardJonesSpec:
    """(epsilon, sigma) parametrization: theta1 = 4 eps sigma^12, theta2 = -4 eps sigma^6."""

    epsilon: float
    sigma: float
    range: float = 0.25

    def __post_init__(self):
        if self.epsilon <= 0 or self.sigma <= 0:
            raise ValueError("epsilon and sigma must be positive")

    def to_theta(self) -> np.ndarray:
        return np.array([4.0 * self.epsilon * self.sigma ** 12,
                         -4.0 * self.epsilon * self.sigma ** 6])

    @classmethod
    def from_theta(cls, theta, range_=0.25) -> "LennardJonesSpec":
        sigma, eps = theta_to_sigma_eps(theta)
        return cls(epsilon=eps, sigma=sigma, range=range_)


def theta_is_valid(theta) -> bool:
    theta = np.asarray(theta, dtype=float)
    return bool(theta[0] > 0.0 and theta[1] < 0.0)


def theta_to_sigma_eps(theta):
    """Map canonical (theta1, theta2) to (sigma, epsilon).

    Raises InvalidEstimateError (carrying theta) outside the valid region.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (2,):
        raise ValueError("sigma/epsilon mapping needs a 2-vector theta")
    if not theta_is_valid(theta):
        raise InvalidEstimateError(theta)
    sigma = (-theta[0] / theta[1]) ** (1.0 / 6.0)
    eps = theta[1] ** 2 / (4.0 * theta[0])
    return float(sigma), float(eps)


def sigma_eps_to_theta(sigma: float, epsilon: float) -> np.ndarray:
    return LennardJonesSpec(epsilon=epsilon, sigma=sigma).to_theta()


# ---------------------------------------------------------------------------
# single-point evaluations (x, omega-without-x)
# ---------------------------------------------------------------------------

def _neighbor_geometry(x, omega, basis: PotentialBasis, index: Optional[CellIndex]):
    """dx = x - y and s for neighbors of x within the basis range."""
    x = np.asarray(x, dtype=float)
    if index is not None:
        ids, s = index.neighbors_within(x, basis.range)
        dx = x - index.config.points[ids]
        return dx, s
    pts = omega.points if isinstance(omega, Configuration) else np.asarray(omega, dtype=float)
    if pts.size == 0:
        return np.zeros((0, x.size)), np.zeros(0)
    dx = x - pts
    s = np.sum(dx ** 2, axis=1)
    keep = (s > 0.0) & (s <= basis.range_sq)
    return dx[keep], s[keep]


def local_energy_basis(x, omega, basis: PotentialBasis, index=None) -> np.ndarray:
    """h_i(x, w) = sum over neighbors of phi_i(s); +inf under a hard-core hit."""
    _, s = _neighbor_geometry(x, omega, basis, index)
    if not len(s):
        return np.zeros(basis.p)
    return basis.phi(s).sum(axis=1)


def div_h_basis(x, omega, basis: PotentialBasis, index=None) -> np.ndarray:
    dx, s = _neighbor_geometry(x, omega, basis, index)
    if not len(s):
        return np.zeros(basis.p)
    return 2.0 * (basis.dphi(s) * dx.sum(axis=1)).sum(axis=1)


def grad_h_basis(x, omega, basis: PotentialBasis, index=None) -> np.ndarray:
    """(p, d) matrix of partials d_k h_i."""
    dx, s = _neighbor_geometry(x, omega, basis, index)
    d = np.asarray(x).size
    if not len(s):
        return np.zeros((basis.p, d))
    return 2.0 * np.einsum("pm,mk->pk", basis.dphi(s), dx)


def div_div_h_basis(x, omega, basis: PotentialBasis, index=None) -> np.ndarray:
    """Raw second divergence: the squared sum (sum_k dx_k)^2, not sum of squares."""
    dx, s = _neighbor_geometry(x, omega, basis, index)
    d = np.asarray(x).size
    if not len(s):
        return np.zeros(basis.p)
    sum_dx = dx.sum(axis=1)
    return 2.0 * (d * basis.dphi(s) + 2.0 * basis.d2phi(s) * sum_dx ** 2).sum(axis=1)


def laplacian_h_basis(x, omega, basis: PotentialBasis, index=None) -> np.ndarray:
    dx, s = _neighbor_geometry(x, omega, basis, index)
    d = np.asarray(x).size
    if not len(s):
        return np.zeros(basis.p)
    return (2.0 * d * basis.dphi(s) + 4.0 * s * basis.d2phi(s)).sum(axis=1)


# ---------------------------------------------------------------------------
# regularizing weight Psi and the periodic cell taper psi
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PsiWeight:
    """Nonnegative weight regularizing test functions across hard-core boundaries.

    kind 'one' is the constant 1 (smooth bases); kind 'hardcore' is the
    product of ramp factors chi((x-y)^2) vanishing whenever some neighbor
    sits inside the hard core.
    """

    kind: str
    r0: float = 0.0
    r1: float = 0.0

    @classmethod
    def one(cls) -> "PsiWeight":
        return cls(kind="one")

    @classmethod
    def for_hardcore(cls, r0: float, r1: float) -> "PsiWeight":
        if not 0 < r0 < r1:
            raise ValueError("need 0 < r0 < r1")
        return cls(kind="hardcore", r0=float(r0), r1=float(r1))

    def value(self, x, omega, index=None) -> float:
        if self.kind == "one":
            return 1.0
        return psi_hardcore(x, omega, self.r0, self.r1, index)

    def gradient(self, x, omega, index=None) -> np.ndarray:
        if self.kind == "one":
            return np.zeros(np.asarray(x).size)
        return grad_psi_hardcore(x, omega, self.r0, self.r1, index)


def _chi(s, r0sq, r1sq):
    return np.clip((s - r0sq) / (r1sq - r0sq), 0.0, 1.0)


def _psi_neighbor_geometry(x, omega, r1, index):
    x = np.asarray(x, dtype=float)
    if index is not None:
        ids, s = index.neighbors_within(x, min(r1, index.range))
        dx = x - index.config.points[ids]
        return dx, s
    pts = omega.points if isinstance(omega, Configuration) else np.asarray(omega, dtype=float)
    if pts.size == 0:
        return np.zeros((0, x.size)), np.zeros(0)
    dx = x - pts
    s = np.sum(dx ** 2, axis=1)
    keep = (s > 0.0) & (s < r1 * r1)
    return dx[keep], s[keep]


def psi_hardcore(x, omega, r0: float, r1: float, index=None) -> float:
    """Psi(x, w) = prod over neighbors of chi((x-y)^2); factors beyond r1 are 1."""
    if not 0 < r0 < r1:
        raise ValueError("need 0 < r0 < r1")
    _, s = _psi_neighbor_geometry(x, omega, r1, index)
    if not len(s):
        return 1.0
    return float(np.prod(_chi(s, r0 * r0, r1 * r1)))


def grad_psi_hardcore(x, omega, r0: float, r1: float, index=None) -> np.ndarray:
    """Gradient of the hard-core weight (product rule over ramp factors)."""
    if not 0 < r0 < r1:
        raise ValueError("need 0 < r0 < r1")
    x = np.asarray(x, dtype=float)
    dx, s = _psi_neighbor_geometry(x, omega, r1, index)
    d = x.size
    if not len(s):
        return np.zeros(d)
    r0sq, r1sq = r0 * r0, r1 * r1
    chi = _chi(s, r0sq, r1sq)
    if np.any(chi == 0.0):
        # some factor vanishes identically around x: all product-rule terms die
        # (the vanishing factor has chi' = 0 inside the core)
        return np.zeros(d)
    psi = np.prod(chi)
    active = (s > r0sq) & (s < r1sq)
    if not np.any(active):
        return np.zeros(d)
    w = 2.0 / (r1sq - r0sq) / chi[active]
    return psi * (w[:, None] * dx[active]).sum(axis=0)


def div_psi_hardcore(x, omega, r0: float, r1: float, index=None) -> float:
    return float(grad_psi_hardcore(x, omega, r0, r1, index).sum())


def cell_taper(x, cell_side: float):
    """Periodic taper prod_k u_k (1 - u_k) at u = (x mod a)/a, with its gradient.

    Vanishes on all cell boundaries; the gradient carries the 1/a chain-rule
    factor. Accepts a single point (d,) or a batch (n, d).
    """
    if cell_side <= 0:
        raise ValueError("cell side must be positive")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    u = np.atleast_2d(x) / cell_side
    u = u - np.floor(u)
    f = u * (1.0 - u)                      # (n, d) per-axis factors
    value = f.prod(axis=1)
    grad = np.empty_like(f)
    for k in range(f.shape[1]):
        others = np.delete(f, k, axis=1).prod(axis=1)
        grad[:, k] = (1.0 - 2.0 * u[:, k]) * others / cell_side
    if single:
        return float(value[0]), grad[0]
    return value, grad


def total_energy(omega: Configuration, model: GibbsModel, index=None) -> float:
    """Sum of the combined potential over unordered pairs within range (free boundary)."""
    if len(omega) < 2:
        return 0.0
    if index is None:
        index = build_index(omega, model.basis.range)
    tab = index.pairs_within(model.basis.range)
    if not len(tab.s):
        return 0.0
    vals = model.basis.phi_theta(tab.s, model.theta)
    return float(vals.sum() / 2.0)  # directed table counts each pair twice


# ---------------------------------------------------------------------------
# bulk per-point fields over a pair table (estimator workhorse)
# ---------------------------------------------------------------------------

@dataclass
class BasisPointFields:
    """Per-point derivative fields h_i evaluated at (x, w minus x) for all x."""

    grad: np.ndarray     # (p, n, d)
    lap: np.ndarray      # (p, n)
    div: np.ndarray      # (p, n)
    divdiv: np.ndarray   # (p, n)


def basis_point_fields(tab: PairTable, basis: PotentialBasis, d: int) -> BasisPointFields:
    n, p = tab.n_points, basis.p
    grad = np.zeros((p, n, d))
    lap = np.zeros((p, n))
    div = np.zeros((p, n))
    divdiv = np.zeros((p, n))
    if len(tab.s):
        dphi = basis.dphi(tab.s)
        d2phi = basis.d2phi(tab.s)
        sum_dx = tab.sum_dx
        for c in range(p):
            for k in range(d):
                grad[c, :, k] = np.bincount(
                    tab.i, weights=2.0 * tab.dx[:, k] * dphi[c], minlength=n)
            lap[c] = np.bincount(
                tab.i, weights=2.0 * d * dphi[c] + 4.0 * tab.s * d2phi[c], minlength=n)
            divdiv[c] = np.bincount(
                tab.i, weights=2.0 * (d * dphi[c] + 2.0 * d2phi[c] * sum_dx ** 2),
                minlength=n)
        div = grad.sum(axis=2)
    return BasisPointFields(grad=grad, lap=lap, div=div, divdiv=divdiv)


def psi_point_fields(tab: PairTable, psi: PsiWeight, d: int):
    """Per-point (psi values, psi gradients) for every x against w minus x."""
    n = tab.n_points
    if psi.kind == "one":
        return np.ones(n), np.zeros((n, d))
    r0sq, r1sq = psi.r0 ** 2, psi.r1 ** 2
    vals = np.ones(n)
    grads = np.zeros((n, d))
    if len(tab.s):
        chi = _chi(tab.s, r0sq, r1sq)
        relevant = tab.s < r1sq
        np.multiply.at(vals, tab.i[relevant], chi[relevant])
        dead = np.bincount(tab.i[chi == 0.0], minlength=n)
        active = (tab.s > r0sq) & (tab.s < r1sq)
        if np.any(active):
            ia = tab.i[active]
            w = 2.0 / (r1sq - r0sq) / chi[active]
            for k in range(d):
                grads[:, k] = np.bincount(
                    ia, weights=w * tab.dx[active, k], minlength=n)
            grads *= vals[:, None]
            grads[dead > 0] = 0.0
    return vals, grads


# ---------------------------------------------------------------------------
# model spec files
# ---------------------------------------------------------------------------

def model_from_spec(spec: dict) -> GibbsModel:
    """Build a GibbsModel from the JSON model description.

    {basis: "lennard-jones"|"hard-sphere", theta: [...] | {sigma, epsilon},
     z, R0?, r0?, r1?, exponents?}
    """
    kind = spec.get("basis", "lennard-jones")
    theta_spec = spec.get("theta")
    if isinstance(theta_spec, dict):
        sigma, eps = float(theta_spec["sigma"]), float(theta_spec["epsilon"])
        theta = sigma_eps_to_theta(sigma, eps)
    elif theta_spec is not None:
        theta = np.asarray(theta_spec, dtype=float)
        sigma = None
        if theta.shape == (2,) and theta_is_valid(theta):
            sigma = theta_to_sigma_eps(theta)[0]
    else:
        raise ValueError("model spec needs a 'theta' entry")
    range_ = spec.get("R0")
    if range_ is None:
        if sigma is None:
            raise ValueError("model spec needs R0 when theta has no sigma")
        range_ = 2.5 * sigma
    exponents = spec.get("exponents", (6.0, 3.0))
    if kind == "lennard-jones":
        basis = inverse_power_basis(exponents, range_)
    elif kind == "hard-sphere":
        basis = hard_sphere_basis(range_, spec["r0"], spec["r1"], exponents)
    else:
        raise ValueError(f"unknown basis kind {kind!r}")
    return GibbsModel(basis=basis, theta=theta, z=float(spec["z"]))


def model_to_spec(model: GibbsModel) -> dict:
    basis = model.basis
    spec = {
        "basis": "hard-sphere" if basis.hardcore > 0 else "lennard-jones",
        "theta": [float(v) for v in model.theta],
        "z": model.z,
        "R0": basis.range,
    }
    if basis.exponents is not None:
        spec["exponents"] = [float(e) for e in basis.exponents]
    if basis.hardcore > 0:
        spec["r0"] = basis.hardcore
        spec["r1"] = basis.taper
    return spec


def load_model(path) -> GibbsModel:
    return model_from_spec(json.loads(Path(path).read_text()))
