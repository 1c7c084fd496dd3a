"""Windows, point configurations, and an exact cell-list neighbor index.

All distances in this package are squared Euclidean distances: every pair
potential takes (x - y)^2 as its argument, so square roots are never needed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Window",
    "Configuration",
    "CellIndex",
    "PairTable",
    "build_index",
    "neighbors_within",
    "write_pattern",
    "read_pattern",
]

_AXIS_NAMES = ("x", "y", "z")


@dataclass(frozen=True)
class Window:
    """Axis-aligned box [lower, upper] with positive volume."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.ndim != 1 or upper.shape != lower.shape or lower.size < 1:
            raise ValueError("window bounds must be d-vectors of equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("window bounds must be finite")
        if not np.all(lower < upper):
            raise ValueError("window must have lower < upper componentwise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def erode(self, margin: float) -> "Window":
        """Shrink the window by `margin` on every face."""
        if margin < 0:
            raise ValueError("margin must be nonnegative")
        lo, hi = self.lower + margin, self.upper - margin
        if not np.all(lo < hi):
            raise ValueError(f"margin {margin} leaves an empty window")
        return Window(lo, hi)


class Configuration:
    """A finite point set inside a window.

    Point identity is the row index. Coordinate-exact duplicates are
    rejected: a Gibbs realization has none almost surely, and duplicate
    points would make squared distances of zero meaningful.
    """

    def __init__(self, points, window: Window):
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, window.dim)
        if pts.ndim != 2 or pts.shape[1] != window.dim:
            raise ValueError(f"points must be (n, {window.dim})")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if not np.all(window.contains(pts)):
            raise ValueError("all points must lie inside the window")
        if len(pts) > 1 and len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("coordinate-exact duplicate points are not allowed")
        self.points = pts
        self.points.setflags(write=False)
        self.window = window

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.window.dim

    def without(self, i: int) -> np.ndarray:
        """Coordinates of the configuration minus point i."""
        return np.delete(self.points, i, axis=0)


@dataclass(frozen=True)
class PairTable:
    """Directed neighbor pairs (i -> j, j != i) with 0 < |x_i - x_j|^2 <= range^2.

    Each unordered pair appears twice, once in each direction, so per-point
    sums are plain segment reductions over `i`.
    """

    i: np.ndarray       # (m,) point index
    j: np.ndarray       # (m,) neighbor index
    dx: np.ndarray      # (m, d) x_i - x_j
    s: np.ndarray       # (m,) squared distances
    n_points: int

    @property
    def sum_dx(self) -> np.ndarray:
        return self.dx.sum(axis=1)


class CellIndex:
    """Immutable cell list giving exact finite-range neighbor queries.

    Cells are sized so every cell side is at least the build range (a single
    cell per axis covers the degenerate case of a window side shorter than the
    range), hence scanning the 3^d surrounding cells is exhaustive for any
    query radius up to the build range.
    """

    def __init__(self, config: Configuration, range_: float):
        if range_ <= 0:
            raise ValueError("range must be positive")
        self.config = config
        self.range = float(range_)
        win = config.window
        sides = win.sides
        self.cells_per_dim = np.maximum(1, np.floor(sides / range_)).astype(np.int64)
        self.cell_side = sides / self.cells_per_dim
        pts = config.points
        if len(pts):
            coords = np.clip(
                ((pts - win.lower) / self.cell_side).astype(np.int64),
                0, self.cells_per_dim - 1)
        else:
            coords = np.zeros((0, win.dim), dtype=np.int64)
        self._flat = np.ravel_multi_index(coords.T, self.cells_per_dim) \
            if len(pts) else np.zeros(0, dtype=np.int64)
        self.order = np.argsort(self._flat, kind="stable")
        self._sorted_flat = self._flat[self.order]
        ncells = int(np.prod(self.cells_per_dim))
        self.starts = np.searchsorted(self._sorted_flat, np.arange(ncells + 1))
        # largest radius for which the 3^d scan is provably exhaustive
        multi = self.cells_per_dim > 1
        self.query_cap = float(np.min(self.cell_side[multi])) if multi.any() else np.inf

    @property
    def occupied_cells(self) -> int:
        return int(len(np.unique(self._sorted_flat)))

    def _candidates(self, x: np.ndarray) -> np.ndarray:
        """Point ids in the 3^d block of cells around x."""
        win = self.config.window
        c = np.clip(((x - win.lower) / self.cell_side).astype(np.int64),
                    0, self.cells_per_dim - 1)
        lo = np.maximum(c - 1, 0)
        hi = np.minimum(c + 1, self.cells_per_dim - 1)
        ranges = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
        grid = np.meshgrid(*ranges, indexing="ij")
        flat = np.ravel_multi_index([g.ravel() for g in grid], self.cells_per_dim)
        out = [self.order[self.starts[f]:self.starts[f + 1]] for f in flat]
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def neighbors_within(self, x, R: float):
        """Ids and squared distances of points y with 0 < |x-y|^2 <= R^2.

        R may not exceed the build range (the cell geometry only guarantees
        exactness up to that radius).
        """
        if R > self.query_cap + 1e-12 and R > self.range:
            raise ValueError(
                f"query radius {R} exceeds index build range {self.range}")
        x = np.asarray(x, dtype=float)
        cand = self._candidates(x)
        if not len(cand):
            return cand, np.zeros(0)
        s = np.sum((self.config.points[cand] - x) ** 2, axis=1)
        keep = (s > 0.0) & (s <= R * R)
        ids, s = cand[keep], s[keep]
        o = np.argsort(ids)
        return ids[o], s[o]

    def pairs_within(self, R: float) -> PairTable:
        """Directed pair table for all pairs with 0 < s <= R^2."""
        if R > self.query_cap + 1e-12 and R > self.range:
            raise ValueError(
                f"pair radius {R} exceeds index build range {self.range}")
        pts = self.config.points
        d = self.config.dim
        rsq = R * R
        occ = np.unique(self._sorted_flat)
        shape = tuple(self.cells_per_dim)
        ii, jj = [], []
        for f in occ:
            a = self.order[self.starts[f]:self.starts[f + 1]]
            c = np.unravel_index(f, shape)
            lo = np.maximum(np.array(c) - 1, 0)
            hi = np.minimum(np.array(c) + 1, self.cells_per_dim - 1)
            ranges = [np.arange(a_, b_ + 1) for a_, b_ in zip(lo, hi)]
            grid = np.meshgrid(*ranges, indexing="ij")
            for g in np.ravel_multi_index([q.ravel() for q in grid], shape):
                if g < f:
                    continue  # each cell pair once
                b = self.order[self.starts[g]:self.starts[g + 1]]
                if g == f:
                    ia, ib = np.triu_indices(len(a), k=1)
                    pi, pj = a[ia], a[ib]
                else:
                    pi = np.repeat(a, len(b))
                    pj = np.tile(b, len(a))
                if len(pi):
                    ii.append(pi)
                    jj.append(pj)
        if ii:
            pi = np.concatenate(ii)
            pj = np.concatenate(jj)
            s = np.sum((pts[pi] - pts[pj]) ** 2, axis=1)
            keep = (s > 0.0) & (s <= rsq)
            pi, pj = pi[keep], pj[keep]
        else:
            pi = pj = np.zeros(0, dtype=np.int64)
        # mirror to directed pairs and fix a deterministic order
        di = np.concatenate([pi, pj])
        dj = np.concatenate([pj, pi])
        o = np.lexsort((dj, di))
        di, dj = di[o], dj[o]
        dx = pts[di] - pts[dj] if len(di) else np.zeros((0, d))
        s = np.sum(dx ** 2, axis=1)
        return PairTable(i=di, j=dj, dx=dx, s=s, n_points=len(pts))


def build_index(config: Configuration, range_: float) -> CellIndex:
    return CellIndex(config, range_)


def neighbors_within(index: CellIndex, x, R: float):
    return index.neighbors_within(x, R)


def _axis_names(d: int):
    if d <= len(_AXIS_NAMES):
        return list(_AXIS_NAMES[:d])
    return [f"x{k + 1}" for k in range(d)]


def write_pattern(config: Configuration, path) -> None:
    """Write CSV (17 significant digits, bit-exact round trip) + JSON sidecar."""
    path = Path(path)
    names = _axis_names(config.dim)
    lines = [",".join(names)]
    for row in config.points:
        lines.append(",".join(f"{v:.17g}" for v in row))
    path.write_text("\n".join(lines) + "\n")
    sidecar = {
        "dim": config.dim,
        "window": {"lower": list(config.window.lower),
                   "upper": list(config.window.upper)},
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def read_pattern(path) -> Configuration:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    window = Window(np.array(meta["window"]["lower"]),
                    np.array(meta["window"]["upper"]))
    text = path.read_text().strip().splitlines()
    rows = [[float(v) for v in line.split(",")] for line in text[1:] if line]
    pts = np.array(rows, dtype=float) if rows else np.zeros((0, window.dim))
    return Configuration(pts, window)
