"""Metropolis-Hastings birth/death/move sampler for pairwise Gibbs models.

Targets the finite-volume density proportional to z^N(w) exp(-H(w)) relative
to the unit-rate Poisson process on the window, with free (empty) boundary.
Acceptance ratios use local energies only:

    birth x:  min(1, z |W| / (n+1) * exp(-h(x, w)))
    death x:  min(1, n / (z |W|) * exp(+h(x, w\\x)))
    move x->x': min(1, exp(-(h(x', w\\x) - h(x, w\\x))))

Hard-core violations have h = +inf and are rejected with probability one.

The chain runs inside a single numba-compiled loop with a linked cell list
and an explicit xoshiro256** generator, so a 64-bit seed fully determines
the output and chains may run on worker threads concurrently (nogil).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numba import njit

from .geometry import Configuration, Window
from .models import GibbsModel, theta_is_valid

__all__ = [
    "SamplerConfig",
    "simulate",
    "energy_trace",
    "birth_ratio",
    "death_ratio",
    "move_ratio",
]

U64 = np.uint64
_DOUBLE_UNIT = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True, nogil=True, inline="always")
def _rotl(x, k):
    return U64((x << k) | (x >> (U64(64) - k)))


@njit(cache=True, nogil=True)
def _seed_state(seed):
    """Expand a 64-bit seed into xoshiro256** state via splitmix64."""
    s = np.empty(4, dtype=np.uint64)
    z = U64(seed)
    for i in range(4):
        z = U64(z + U64(0x9E3779B97F4A7C15))
        t = z
        t = U64((t ^ (t >> U64(30))) * U64(0xBF58476D1CE4E5B9))
        t = U64((t ^ (t >> U64(27))) * U64(0x94D049BB133111EB))
        s[i] = U64(t ^ (t >> U64(31)))
    return s


@njit(cache=True, nogil=True, inline="always")
def _next_u64(s):
    result = U64(_rotl(U64(s[1] * U64(5)), U64(7)) * U64(9))
    t = U64(s[1] << U64(17))
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], U64(45))
    return result


@njit(cache=True, nogil=True, inline="always")
def _next_double(s):
    return float(_next_u64(s) >> U64(11)) * _DOUBLE_UNIT


@njit(cache=True, nogil=True)
def _uniform_stream(seed, n):
    """Test hook: the first n uniforms of the stream for a given seed."""
    s = _seed_state(seed)
    out = np.empty(n)
    for i in range(n):
        out[i] = _next_double(s)
    return out


@njit(cache=True, nogil=True, inline="always")
def _pair_energy(s, theta, eint, r0sq, cutsq):
    """Combined potential sum_c theta_c s^-e_c, truncated; +inf inside the core."""
    if s >= cutsq:
        return 0.0
    if s < r0sq:
        return np.inf
    u = 1.0 / s
    acc = 0.0
    for c in range(eint.shape[0]):
        v = 1.0
        b = u
        m = eint[c]
        while m > 0:
            if m & 1:
                v *= b
            b *= b
            m >>= 1
        acc += theta[c] * v
    return acc


@njit(cache=True, nogil=True)
def _local_energy(x, skip, n, pos, head, nxt, lower, inv_side, ncells,
                  theta, eint, r0sq, cutsq):
    d = lower.shape[0]
    acc = 0.0
    # walk the 3^d block of cells around x
    n_off = 1
    for _ in range(d):
        n_off *= 3
    for m in range(n_off):
        flat = 0
        stride = 1
        ok = True
        rem = m
        for k in range(d):
            off = rem % 3 - 1
            rem //= 3
            c = int((x[k] - lower[k]) * inv_side[k])
            if c < 0:
                c = 0
            elif c >= ncells[k]:
                c = ncells[k] - 1
            c += off
            if c < 0 or c >= ncells[k]:
                ok = False
                break
            flat += c * stride
            stride *= ncells[k]
        if not ok:
            continue
        idx = head[flat]
        while idx >= 0:
            if idx != skip:
                s = 0.0
                for k in range(d):
                    t = x[k] - pos[idx, k]
                    s += t * t
                e = _pair_energy(s, theta, eint, r0sq, cutsq)
                if e == np.inf:
                    return np.inf
                acc += e
            idx = nxt[idx]
    return acc


@njit(cache=True, nogil=True, inline="always")
def _flat_cell(x, lower, inv_side, ncells):
    flat = 0
    stride = 1
    for k in range(lower.shape[0]):
        c = int((x[k] - lower[k]) * inv_side[k])
        if c < 0:
            c = 0
        elif c >= ncells[k]:
            c = ncells[k] - 1
        flat += c * stride
        stride *= ncells[k]
    return flat


@njit(cache=True, nogil=True, inline="always")
def _insert(i, pos, head, nxt, prv, cellof, lower, inv_side, ncells):
    f = _flat_cell(pos[i], lower, inv_side, ncells)
    cellof[i] = f
    nxt[i] = head[f]
    prv[i] = -1
    if head[f] >= 0:
        prv[head[f]] = i
    head[f] = i


@njit(cache=True, nogil=True, inline="always")
def _unlink(i, head, nxt, prv, cellof):
    if prv[i] >= 0:
        nxt[prv[i]] = nxt[i]
    else:
        head[cellof[i]] = nxt[i]
    if nxt[i] >= 0:
        prv[nxt[i]] = prv[i]


@njit(cache=True, nogil=True)
def _total_energy_cells(n, pos, head, nxt, lower, inv_side, ncells,
                        theta, eint, r0sq, cutsq):
    acc = 0.0
    for i in range(n):
        h = _local_energy(pos[i], i, n, pos, head, nxt, lower, inv_side,
                          ncells, theta, eint, r0sq, cutsq)
        if h == np.inf:
            return np.inf
        acc += h
    return 0.5 * acc


@njit(cache=True, nogil=True)
def _run_chain(pos, head, nxt, prv, cellof, lower, upper, inv_side, ncells,
               theta, eint, r0sq, cutsq, zvol, p_birth, p_death, move_scale,
               steps, seed, fixed_n, trace_every, trace):
    rng = _seed_state(seed)
    d = lower.shape[0]
    nmax = pos.shape[0]
    xprop = np.empty(d)
    n = 0
    energy = 0.0

    if fixed_n > 0:
        # dart-throw initial points, rejecting hard-core violations
        attempts = 0
        while n < fixed_n:
            attempts += 1
            if attempts > 10000 * fixed_n:
                raise RuntimeError("could not place the fixed-n initial state")
            for k in range(d):
                xprop[k] = lower[k] + _next_double(rng) * (upper[k] - lower[k])
            h = _local_energy(xprop, -1, n, pos, head, nxt, lower, inv_side,
                              ncells, theta, eint, r0sq, cutsq)
            if h == np.inf:
                continue
            for k in range(d):
                pos[n, k] = xprop[k]
            _insert(n, pos, head, nxt, prv, cellof, lower, inv_side, ncells)
            energy += h
            n += 1

    acc_counts = np.zeros(3, dtype=np.int64)
    t_out = 0
    for step in range(steps):
        u = _next_double(rng)
        if u < p_birth:
            # birth
            for k in range(d):
                xprop[k] = lower[k] + _next_double(rng) * (upper[k] - lower[k])
            h = _local_energy(xprop, -1, n, pos, head, nxt, lower, inv_side,
                              ncells, theta, eint, r0sq, cutsq)
            ratio = zvol / (n + 1.0) * math.exp(-h)
            if _next_double(rng) < ratio:
                if n >= nmax:
                    raise RuntimeError("sampler capacity exceeded; "
                                       "raise the capacity factor")
                for k in range(d):
                    pos[n, k] = xprop[k]
                _insert(n, pos, head, nxt, prv, cellof, lower, inv_side, ncells)
                energy += h
                n += 1
                acc_counts[0] += 1
        elif u < p_birth + p_death:
            # death
            if n > 0:
                i = int(_next_double(rng) * n)
                if i >= n:
                    i = n - 1
                h = _local_energy(pos[i], i, n, pos, head, nxt, lower, inv_side,
                                  ncells, theta, eint, r0sq, cutsq)
                ratio = n / zvol * math.exp(h)
                if _next_double(rng) < ratio:
                    _unlink(i, head, nxt, prv, cellof)
                    if i != n - 1:
                        _unlink(n - 1, head, nxt, prv, cellof)
                        for k in range(d):
                            pos[i, k] = pos[n - 1, k]
                        _insert(i, pos, head, nxt, prv, cellof, lower, inv_side,
                                ncells)
                    n -= 1
                    acc_counts[1] += 1
                    if h == np.inf:
                        energy = _total_energy_cells(n, pos, head, nxt, lower,
                                                     inv_side, ncells, theta,
                                                     eint, r0sq, cutsq)
                    else:
                        energy -= h
        else:
            # move
            if n > 0:
                i = int(_next_double(rng) * n)
                if i >= n:
                    i = n - 1
                inside = True
                for k in range(d):
                    xprop[k] = pos[i, k] + (2.0 * _next_double(rng) - 1.0) * move_scale
                    if xprop[k] < lower[k] or xprop[k] > upper[k]:
                        inside = False
                uacc = _next_double(rng)
                if inside:
                    h_new = _local_energy(xprop, i, n, pos, head, nxt, lower,
                                          inv_side, ncells, theta, eint, r0sq,
                                          cutsq)
                    h_old = np.inf
                    if h_new < np.inf:
                        h_old = _local_energy(pos[i], i, n, pos, head, nxt,
                                              lower, inv_side, ncells, theta,
                                              eint, r0sq, cutsq)
                        if h_old == np.inf or uacc < math.exp(-(h_new - h_old)):
                            _unlink(i, head, nxt, prv, cellof)
                            for k in range(d):
                                pos[i, k] = xprop[k]
                            _insert(i, pos, head, nxt, prv, cellof, lower,
                                    inv_side, ncells)
                            acc_counts[2] += 1
                            if h_old == np.inf:
                                energy = _total_energy_cells(
                                    n, pos, head, nxt, lower, inv_side, ncells,
                                    theta, eint, r0sq, cutsq)
                            else:
                                energy += h_new - h_old
        if trace_every > 0 and (step + 1) % trace_every == 0:
            trace[t_out, 0] = step + 1.0
            trace[t_out, 1] = energy
            trace[t_out, 2] = n
            t_out += 1
    return n, energy, acc_counts


@dataclass(frozen=True)
class SamplerConfig:
    """Chain settings; the seed fully determines the output configuration."""

    steps: int = 500_000
    seed: int = 0
    mix: Tuple[float, float, float] = (0.35, 0.35, 0.30)  # birth, death, move
    move_scale: Optional[float] = None   # default sigma/2 (valid LJ) or range/4
    burn_in_fraction: float = 1.0        # the output is the final state
    fixed_n: Optional[int] = None        # condition on the count: moves only
    capacity_factor: float = 8.0

    def __post_init__(self):
        if self.steps <= 0:
            raise ValueError("steps must be positive")
        mix = tuple(float(v) for v in self.mix)
        if len(mix) != 3 or any(v < 0 for v in mix) or abs(sum(mix) - 1.0) > 1e-9:
            raise ValueError("proposal mix must be 3 nonnegative "
                             "probabilities summing to 1")
        if not 0.0 < self.burn_in_fraction <= 1.0:
            raise ValueError("burn-in fraction must be in (0, 1]")
        object.__setattr__(self, "mix", mix)


def _resolve_move_scale(model: GibbsModel, cfg: SamplerConfig) -> float:
    if cfg.move_scale is not None:
        if cfg.move_scale <= 0:
            raise ValueError("move scale must be positive")
        return float(cfg.move_scale)
    theta = model.theta
    if theta.shape == (2,) and theta_is_valid(theta):
        return 0.5 * float((-theta[0] / theta[1]) ** (1.0 / 6.0))
    return 0.25 * model.basis.range


def _chain_args(model: GibbsModel, window: Window, cfg: SamplerConfig,
                trace_every: int):
    basis = model.basis
    if basis.exponents is None:
        raise ValueError("the sampler needs an inverse-power basis "
                         "(exponents are required for the compiled kernel)")
    eint = basis.exponents.astype(np.int64)
    if not np.allclose(eint, basis.exponents):
        raise ValueError("sampler exponents must be integers")
    d = window.dim
    sides = window.sides
    ncells = np.maximum(1, np.floor(sides / basis.range)).astype(np.int64)
    inv_side = ncells / sides
    if cfg.fixed_n is not None:
        if cfg.fixed_n < 0:
            raise ValueError("fixed_n must be nonnegative")
        nmax = max(int(cfg.fixed_n), 1)
        mix = (0.0, 0.0, 1.0)
        fixed_n = int(cfg.fixed_n)
    else:
        nmax = max(256, int(cfg.capacity_factor * model.z * window.volume) + 64)
        mix = cfg.mix
        fixed_n = -1
    pos = np.empty((nmax, d))
    head = np.full(int(np.prod(ncells)), -1, dtype=np.int64)
    nxt = np.full(nmax, -1, dtype=np.int64)
    prv = np.full(nmax, -1, dtype=np.int64)
    cellof = np.zeros(nmax, dtype=np.int64)
    n_trace = cfg.steps // trace_every if trace_every > 0 else 0
    trace = np.zeros((n_trace, 3))
    args = (pos, head, nxt, prv, cellof,
            window.lower, window.upper, inv_side, ncells,
            model.theta, eint, basis.hardcore_sq, basis.range_sq,
            model.z * window.volume, mix[0], mix[1],
            _resolve_move_scale(model, cfg),
            cfg.steps, U64(int(cfg.seed) % (1 << 64)), fixed_n,
            trace_every, trace)
    return args, pos, trace


def simulate(model: GibbsModel, window: Window, cfg: SamplerConfig) -> Configuration:
    """Run the chain and return the final configuration."""
    args, pos, _ = _chain_args(model, window, cfg, trace_every=0)
    n, _, _ = _run_chain(*args)
    return Configuration(pos[:n].copy(), window)


def energy_trace(model: GibbsModel, window: Window, cfg: SamplerConfig,
                 every: int = 1000):
    """Run the chain recording (step, total energy, count) every `every` steps.

    The energy column is the chain's incremental bookkeeping; comparing it
    against a fresh total-energy evaluation of the same state is the standard
    consistency check. Returns (trace, final configuration).
    """
    if every <= 0:
        raise ValueError("trace interval must be positive")
    args, pos, trace = _chain_args(model, window, cfg, trace_every=every)
    n, _, _ = _run_chain(*args)
    return trace, Configuration(pos[:n].copy(), window)


# --- acceptance-ratio helpers (the algebra the compiled kernel implements) ---

def birth_ratio(model: GibbsModel, window: Window, h_birth: float, n: int) -> float:
    """Acceptance ratio for adding a point with combined local energy h_birth to n points."""
    return model.z * window.volume / (n + 1.0) * math.exp(-h_birth)


def death_ratio(model: GibbsModel, window: Window, h_removed: float, n: int) -> float:
    """Acceptance ratio for deleting one of n points with local energy h_removed."""
    if h_removed == np.inf:
        return np.inf
    return n / (model.z * window.volume) * math.exp(h_removed)


def move_ratio(h_old: float, h_new: float) -> float:
    if h_new == np.inf:
        return 0.0
    if h_old == np.inf:
        return np.inf
    return math.exp(-(h_new - h_old))
