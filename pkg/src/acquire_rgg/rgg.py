"""
Random geometric graphs on the square ``[0, sqrt(n)]^2``.

Vertices are points; two vertices are adjacent when their Euclidean
distance is at most ``r`` (closed ball).  Distances are always compared
squared, so no square root enters the adjacency test.

Randomness comes from numpy's PCG64 bit generator seeded with a plain
integer.  Trial ``t`` of a sweep seeded with ``s`` uses seed ``s + t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

FIXED_N = "fixed_n"
POISSON = "poisson"
SYNTHETIC = "synthetic"
SAMPLERS = (FIXED_N, POISSON, SYNTHETIC)

FORMAT_TAG = "rggv1"

# pairs are materialised in blocks of at most this many candidates
_PAIR_BLOCK = 1 << 22


class GraphFormatError(ValueError):
    """Raised when an instance file cannot be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True, eq=False)
class PointSet:
    side: float
    points: np.ndarray
    seed: int | None = None
    sampler: str = SYNTHETIC

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64).reshape(-1, 2))
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "side", float(self.side))
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.side < 0:
            raise ValueError("side must be nonnegative")
        if len(pts) and (pts.min() < 0 or pts.max() > self.side):
            raise ValueError("points must lie in [0, side]^2")

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, PointSet):
            return NotImplemented
        return (
            self.side == other.side
            and self.seed == other.seed
            and self.sampler == other.sampler
            and np.array_equal(self.points, other.points)
        )

    __hash__ = None


class CellGrid:
    """Bucket points into square cells of side at least ``cell_min``."""

    def __init__(self, points, side, cell_min):
        self.side = float(side)
        ncell = 1
        if cell_min > 0 and side > 0:
            ncell = max(1, int(side // cell_min))
            while ncell > 1 and side / ncell < cell_min:
                ncell -= 1
        self.ncell = ncell
        self.cell_side = side / ncell if side > 0 else 0.0
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if len(pts) and self.cell_side > 0:
            ij = np.floor(pts / self.cell_side).astype(np.int64)
            np.clip(ij, 0, ncell - 1, out=ij)
        else:
            ij = np.zeros((len(pts), 2), dtype=np.int64)
        self.cx = ij[:, 0]
        self.cy = ij[:, 1]
        cell_id = self.cy * ncell + self.cx
        self.order = np.argsort(cell_id, kind="stable")
        counts = np.bincount(cell_id, minlength=ncell * ncell)
        self.start = np.zeros(ncell * ncell + 1, dtype=np.int64)
        np.cumsum(counts, out=self.start[1:])
        self.cell_id = cell_id

    def cell_members(self, cx, cy):
        if not (0 <= cx < self.ncell and 0 <= cy < self.ncell):
            return self.order[:0]
        c = cy * self.ncell + cx
        return self.order[self.start[c]:self.start[c + 1]]

    def candidates(self, x, y, radius):
        """Indices of points in every cell meeting the box of half-width ``radius``."""
        if self.cell_side == 0:
            return self.order
        lo_x = max(0, int(math.floor((x - radius) / self.cell_side)))
        hi_x = min(self.ncell - 1, int(math.floor((x + radius) / self.cell_side)))
        lo_y = max(0, int(math.floor((y - radius) / self.cell_side)))
        hi_y = min(self.ncell - 1, int(math.floor((y + radius) / self.cell_side)))
        parts = [
            self.order[self.start[cy * self.ncell + lo_x]:self.start[cy * self.ncell + hi_x + 1]]
            for cy in range(lo_y, hi_y + 1)
        ]
        return np.concatenate(parts) if parts else self.order[:0]


def _expand_ranges(pos, lo, hi):
    """Yield (left, right) position arrays for every ``right`` in ``[lo, hi)``."""
    sizes = np.maximum(hi - lo, 0)
    keep = sizes > 0
    pos, lo, sizes = pos[keep], lo[keep], sizes[keep]
    if not len(pos):
        return
    cum = np.cumsum(sizes)
    first = 0
    while first < len(pos):
        base = cum[first - 1] if first else 0
        last = int(np.searchsorted(cum, base + _PAIR_BLOCK, side="right"))
        last = max(last, first + 1)
        sz = sizes[first:last]
        left = np.repeat(pos[first:last], sz)
        offs = np.arange(int(sz.sum()), dtype=np.int64) - np.repeat(np.cumsum(sz) - sz, sz)
        right = np.repeat(lo[first:last], sz) + offs
        yield left, right
        first = last


def close_pairs(points, radius, side=None):
    """All index pairs ``(i, j)``, ``i < j``, at distance at most ``radius``.

    Uses a cell grid with cell side >= ``radius``; only the own cell and four
    forward neighbour cells are scanned for each point.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if side is None:
        side = float(pts.max()) if len(pts) else 0.0
    empty = np.zeros(0, dtype=np.int64)
    if len(pts) < 2:
        return empty, empty
    grid = CellGrid(pts, side, radius)
    order, start, ncell = grid.order, grid.start, grid.ncell
    spts = pts[order]
    scx, scy = grid.cx[order], grid.cy[order]
    pos = np.arange(len(pts), dtype=np.int64)
    cell = scy * ncell + scx
    r2 = radius * radius
    out_i, out_j = [], []

    def collect(lo, hi, mask=None):
        p = pos if mask is None else pos[mask]
        for a, b in _expand_ranges(p, lo, hi):
            d = spts[a] - spts[b]
            ok = np.einsum("ij,ij->i", d, d) <= r2
            out_i.append(order[a[ok]])
            out_j.append(order[b[ok]])

    collect(pos + 1, start[cell + 1])
    for dx, dy in ((1, 0), (-1, 1), (0, 1), (1, 1)):
        nx, ny = scx + dx, scy + dy
        mask = (nx >= 0) & (nx < ncell) & (ny < ncell)
        nb = ny[mask] * ncell + nx[mask]
        collect(start[nb], start[nb + 1], mask)

    i = np.concatenate(out_i) if out_i else empty
    j = np.concatenate(out_j) if out_j else empty
    swap = i > j
    i[swap], j[swap] = j[swap], i[swap].copy()
    return i, j


@dataclass(frozen=True, eq=False)
class GeometricGraph:
    """Immutable geometric graph; adjacency is built on first use."""

    pointset: PointSet
    radius: float
    _grid: CellGrid = field(init=False, repr=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(
            self, "_grid", CellGrid(self.pointset.points, self.pointset.side, self.radius)
        )

    @property
    def n(self):
        return len(self.pointset)

    @property
    def points(self):
        return self.pointset.points

    @property
    def side(self):
        return self.pointset.side

    @property
    def cell_grid(self):
        return self._grid

    def __eq__(self, other):
        if not isinstance(other, GeometricGraph):
            return NotImplemented
        return self.radius == other.radius and self.pointset == other.pointset

    __hash__ = None

    @cached_property
    def _csr(self):
        i, j = close_pairs(self.points, self.radius, self.side)
        rows = np.concatenate([i, j])
        cols = np.concatenate([j, i])
        order = np.lexsort((cols, rows))
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=self.n), out=indptr[1:])
        indptr.setflags(write=False)
        cols = cols[order]
        cols.setflags(write=False)
        return indptr, cols

    @property
    def adjacency(self):
        """CSR pair ``(indptr, indices)``; neighbours of ``v`` are sorted."""
        return self._csr

    def neighbors(self, v):
        indptr, idx = self._csr
        return idx[indptr[v]:indptr[v + 1]]

    def degree(self, v):
        indptr, _ = self._csr
        return int(indptr[v + 1] - indptr[v])

    def degrees(self):
        return np.diff(self._csr[0])

    def num_edges(self):
        return len(self._csr[1]) // 2

    def edges(self):
        indptr, idx = self._csr
        rows = np.repeat(np.arange(self.n), np.diff(indptr))
        keep = rows < idx
        return np.stack([rows[keep], idx[keep]], axis=1)

    def has_edge(self, u, v):
        if u == v:
            return False
        p, q = self.points[u], self.points[v]
        dx = float(p[0]) - float(q[0])
        dy = float(p[1]) - float(q[1])
        return dx * dx + dy * dy <= self.radius * self.radius

    def grid_neighbors(self, v):
        """Neighbours of ``v`` found through the cell grid, sorted."""
        x, y = self.points[v]
        cand = self._grid.candidates(x, y, self.radius)
        d = self.points[cand] - self.points[v]
        ok = (np.einsum("ij,ij->i", d, d) <= self.radius * self.radius) & (cand != v)
        return np.sort(cand[ok])

    def has_edge_among(self, vertices):
        """True if some two of ``vertices`` are adjacent."""
        vs = np.asarray(list(vertices), dtype=np.int64)
        if len(vs) < 2:
            return False
        i, _ = close_pairs(self.points[vs], self.radius, self.side)
        return len(i) > 0

    def subgraph(self, vertices):
        vs = np.asarray(list(vertices), dtype=np.int64)
        ps = PointSet(self.side, self.points[vs], None, SYNTHETIC)
        return GeometricGraph(ps, self.radius)


def from_points(points, r, side=None):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if side is None:
        side = float(pts.max()) if len(pts) else 0.0
    return GeometricGraph(PointSet(side, pts, None, SYNTHETIC), r)


def sample_fixed_n(n, r, seed):
    """``n`` i.i.d. uniform points on ``[0, sqrt(n)]^2`` joined at distance <= ``r``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    side = math.sqrt(n)
    pts = make_rng(seed).random((int(n), 2)) * side
    return GeometricGraph(PointSet(side, pts, seed, FIXED_N), r)


def sample_poisson(n, r, seed):
    """Poissonised model: Poisson(``n``) many uniform points on ``[0, sqrt(n)]^2``."""
    if not n > 0:
        raise ValueError("n must be positive")
    side = math.sqrt(n)
    rng = make_rng(seed)
    count = int(rng.poisson(n))
    pts = rng.random((count, 2)) * side
    return GeometricGraph(PointSet(side, pts, seed, POISSON), r)


def save_graph(g):
    ps = g.pointset
    lines = [f"{FORMAT_TAG} {ps.side!r} {g.radius!r} {len(ps)}"]
    lines.extend(f"{float(x)!r} {float(y)!r}" for x, y in ps.points)
    seed = "none" if ps.seed is None else str(ps.seed)
    lines.append(f"# seed={seed} sampler={ps.sampler}")
    return ("\n".join(lines) + "\n").encode("ascii")


def _parse_float(tok, lineno, what):
    try:
        val = float(tok)
    except ValueError:
        raise GraphFormatError(f"bad {what} {tok!r}", lineno) from None
    if not math.isfinite(val):
        raise GraphFormatError(f"non-finite {what} {tok!r}", lineno)
    return val


def load_graph(data):
    if isinstance(data, bytes):
        try:
            data = data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise GraphFormatError(f"not ascii text ({exc.reason})") from None
    lines = data.splitlines()
    if not lines:
        raise GraphFormatError("empty file", 1)
    head = lines[0].split()
    if len(head) != 4 or head[0] != FORMAT_TAG:
        raise GraphFormatError(f"expected header '{FORMAT_TAG} <side> <r> <count>'", 1)
    side = _parse_float(head[1], 1, "side")
    r = _parse_float(head[2], 1, "radius")
    try:
        count = int(head[3])
    except ValueError:
        raise GraphFormatError(f"bad count {head[3]!r}", 1) from None
    if count < 0:
        raise GraphFormatError("negative count", 1)
    if r <= 0:
        raise GraphFormatError("radius must be positive", 1)
    seed, sampler = None, SYNTHETIC
    coords = []
    for lineno, line in enumerate(lines[1:], start=2):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            for tok in text[1:].split():
                key, _, val = tok.partition("=")
                if key == "seed" and val != "none":
                    try:
                        seed = int(val)
                    except ValueError:
                        raise GraphFormatError(f"bad seed {val!r}", lineno) from None
                elif key == "sampler":
                    if val not in SAMPLERS:
                        raise GraphFormatError(f"unknown sampler {val!r}", lineno)
                    sampler = val
            continue
        if len(coords) == count:
            raise GraphFormatError(f"more than {count} points", lineno)
        toks = text.split()
        if len(toks) != 2:
            raise GraphFormatError("expected 'x y'", lineno)
        x = _parse_float(toks[0], lineno, "x")
        y = _parse_float(toks[1], lineno, "y")
        if not (0 <= x <= side and 0 <= y <= side):
            raise GraphFormatError(f"point ({x}, {y}) outside [0, {side}]^2", lineno)
        coords.append((x, y))
    if len(coords) != count:
        raise GraphFormatError(f"header promises {count} points, found {len(coords)}", len(lines))
    pts = np.array(coords, dtype=np.float64).reshape(-1, 2)
    return GeometricGraph(PointSet(side, pts, seed, sampler), r)
