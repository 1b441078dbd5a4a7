"""
Lower bounds on the total acquisition number with re-checkable witnesses.

Two certificates are produced:

* ``dangerous_squares``: tessellate into squares of side about
  ``20 r lg r``; a square whose unit circle about its centre holds a vertex
  while the square holds fewer than ``1200 (r lg r)^2`` vertices keeps a
  residual vertex.  The implication needs ``r`` large, so the certificate
  records the two inequalities it relies on and is ``conditional`` when
  either fails.
* ``ball_counting_cap``: a vertex that ever holds weight ``w`` collected it
  from at most ``floor(lg w)`` hops away, and ``w <= 2**deg``.  If every
  ball of radius ``(t+1) r`` holds fewer than ``W`` points, where
  ``t = floor(lg W)``, no vertex ever reaches weight ``W``, so every residual
  vertex holds at most ``W - 1`` and the residual has at least
  ``ceil(n / (W - 1))`` vertices.

``verify_certificate`` re-derives either value from raw coordinates by
brute force, sharing no counting code with the producers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import AdjacencyGraph, bfs_distances
from .rgg import CellGrid, GeometricGraph
from .tessellation import fallback_cells

DANGEROUS = "DangerousSquares"
BALL = "BallCounting"
REPORT_TAG = "atcertv1"

SQUARE_FACTOR = 20
THRESHOLD_FACTOR = 1200

# cells per ball radius when bounding ball counts from a grid
_CELLS_PER_RADIUS = 32
_MAX_GRID = 2048
# point pairs examined by exact ball counts per tier
REFINE_BUDGET = 300_000_000
# vertices probed before any grid work
PROBES = 8


@dataclass
class Certificate:
    kind: str
    value: int
    witness: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    conditional: bool = False
    applicable: bool = True
    reason: str | None = None

    def report(self, full_witness=True):
        """JSON-ready summary; per-vertex arrays only with ``full_witness``."""
        wit = {}
        for key, val in self.witness.items():
            if isinstance(val, np.ndarray):
                if not full_witness:
                    continue
                val = val.tolist()
            wit[key] = val
        return {
            "format": REPORT_TAG,
            "kind": self.kind,
            "value": int(self.value),
            "applicable": self.applicable,
            "conditional": self.conditional,
            "reason": self.reason,
            "params": dict(self.params),
            "witness": wit,
        }


def _lg(x):
    return math.log2(x)


def dangerous_params(side, r):
    """Grid size, square side and the validity chain for the dangerous-square bound."""
    lg_r = _lg(r) if r > 0 else float("nan")
    scale = SQUARE_FACTOR * r * lg_r
    q = int(math.floor(side / scale)) if scale > 0 else 0
    sq_side = side / q if q >= 1 else None
    threshold = THRESHOLD_FACTOR * (r * lg_r) ** 2
    ell = int(math.floor(4 * lg_r)) if r >= 1 else 0
    margin = sq_side / 2 - 1 if q >= 1 else None
    weight_ok = 2.0 ** ell > threshold
    # the path from the centre vertex reaches u_ell within ell*r, whose
    # contributors lie within another (ell+1)*r
    margin_ok = q >= 1 and margin > (2 * ell + 1) * r
    return {
        "r": float(r),
        "side": float(side),
        "lg_r": lg_r,
        "grid": q,
        "square_side": sq_side,
        "threshold": threshold,
        "ell": ell,
        "margin": margin,
        "margin_needed": (2 * ell + 1) * r,
        "nine_r_lg_r": 9 * r * lg_r,
        "two_pow_ell": 2 ** ell,
        "weight_ok": bool(weight_ok),
        "margin_ok": bool(margin_ok),
    }


def dangerous_squares(graph):
    """Count dangerous squares of a geometric graph."""
    if not isinstance(graph, GeometricGraph):
        return Certificate(DANGEROUS, 0, applicable=False,
                           reason="needs vertex coordinates")
    r = graph.radius
    params = dangerous_params(graph.side, r) if r >= 2 else {"r": r, "side": graph.side}
    if r < 2:
        return Certificate(DANGEROUS, 0, params=params, applicable=False,
                           reason=f"radius {r} < 2")
    q = params["grid"]
    if q < 1:
        return Certificate(DANGEROUS, 0, params=params, applicable=False,
                           reason="plane narrower than one square of side 20 r lg r")
    pts = graph.points
    s = params["square_side"]
    ij = np.floor(pts / s).astype(np.int64)
    np.clip(ij, 0, q - 1, out=ij)
    sq = ij[:, 1] * q + ij[:, 0]
    counts = np.bincount(sq, minlength=q * q)
    centre = (ij + 0.5) * s
    d = pts - centre
    in_circle = np.einsum("ij,ij->i", d, d) <= 1.0
    circle = np.bincount(sq[in_circle], minlength=q * q)
    danger = (circle >= 1) & (counts < params["threshold"])
    idx = np.flatnonzero(danger)
    witness = {
        "squares": idx.tolist(),
        "square_counts": counts[idx].tolist(),
        "circle_counts": circle[idx].tolist(),
    }
    conditional = not (params["weight_ok"] and params["margin_ok"])
    return Certificate(DANGEROUS, int(len(idx)), witness, params, conditional=conditional)


def _max_degree(graph):
    if isinstance(graph, AdjacencyGraph):
        return max(graph.degrees(), default=0)
    return int(graph.degrees().max()) if graph.n else 0


def _degree_cap(graph):
    """``2**max_degree`` capped at ``n``, avoiding full adjacency when it cannot matter."""
    n = graph.n
    if n == 0:
        return 0, 0
    if isinstance(graph, GeometricGraph):
        # a cell of side r/sqrt2 is a clique, so its size-1 bounds the max degree below
        m = fallback_cells(max(graph.side, 1e-300), graph.radius)
        cs = graph.side / m
        ij = np.clip(np.floor(graph.points / cs).astype(np.int64), 0, m - 1)
        biggest = int(np.bincount(ij[:, 1] * m + ij[:, 0]).max())
        if biggest - 1 >= n.bit_length():
            return None, n
    dmax = _max_degree(graph)
    return dmax, min(n, 2 ** dmax) if dmax < n.bit_length() else n


def _disk_correlate(grid, half_widths):
    """Sum of ``grid`` over a row-wise symmetric stencil, via row prefix sums.

    ``half_widths[j]`` is the half-width of the stencil row at vertical offset
    ``j - reach`` (negative for an empty row).  Integer arithmetic throughout.
    """
    reach = (len(half_widths) - 1) // 2
    m_y, m_x = grid.shape
    wide = max(0, int(max(half_widths)))
    pad = np.zeros((m_y + 2 * reach, m_x + 2 * wide + 1), dtype=np.int64)
    np.cumsum(grid, axis=1, out=pad[reach:reach + m_y, wide + 1:wide + 1 + m_x])
    pad[reach:reach + m_y, wide + 1 + m_x:] = pad[reach:reach + m_y, wide + m_x:wide + m_x + 1]
    out = np.zeros_like(grid)
    for j, a in enumerate(half_widths):
        if a < 0:
            continue
        rows = pad[j:j + m_y]
        out += rows[:, wide + a + 1:wide + a + 1 + m_x]
        out -= rows[:, wide - a:wide - a + m_x]
    return out


def _grid_bounds(pts, side, R):
    """Per-cell upper and lower bounds on closed-ball counts of radius ``R``."""
    s = R / _CELLS_PER_RADIUS
    if side > 0:
        s = max(s, side / _MAX_GRID)
    m = max(1, int(math.ceil(side / s))) if side > 0 else 1
    ij = np.clip(np.floor(pts / s).astype(np.int64), 0, m - 1)
    grid = np.bincount(ij[:, 1] * m + ij[:, 0], minlength=m * m).reshape(m, m)
    reach = int(math.ceil(R / s)) + 1
    upper, lower = [], []
    for dy in range(-reach, reach + 1):
        gy = max(abs(dy) - 1, 0) * s
        fy = (abs(dy) + 1) * s
        a_up = -1
        a_lo = -1
        for dx in range(reach + 1):
            if (max(dx - 1, 0) * s) ** 2 + gy ** 2 <= R * R:
                a_up = dx
            if ((dx + 1) * s) ** 2 + fy ** 2 <= R * R:
                a_lo = dx
        upper.append(a_up)
        lower.append(a_lo)
    return ij, m, _disk_correlate(grid, upper), _disk_correlate(grid, lower)


def _exact_counts(graph, grid, who, R, work=None):
    """Closed-ball counts for the vertices ``who`` of one cell, by squared distances."""
    pts = graph.points
    mine = pts[who]
    lo = mine.min(axis=0)
    hi = mine.max(axis=0)
    centre = (lo + hi) / 2
    half = float((hi - lo).max()) / 2 + R
    cand = pts[grid.candidates(centre[0], centre[1], half)]
    if work is not None:
        work[0] += len(who) * len(cand)
    R2 = R * R
    out = np.empty(len(who), dtype=np.int64)
    for k0 in range(0, len(who), 64):
        block = mine[k0:k0 + 64]
        dx = block[:, None, 0] - cand[None, :, 0]
        dy = block[:, None, 1] - cand[None, :, 1]
        out[k0:k0 + 64] = np.count_nonzero(dx * dx + dy * dy <= R2, axis=1)
    return out


def _central_vertices(graph, k=PROBES):
    pts = graph.points
    d = pts - graph.side / 2
    d2 = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]
    k = min(k, len(pts))
    if k == len(pts):
        return np.arange(k)
    near = np.argpartition(d2, k - 1)[:k]
    return near[np.lexsort((near, d2[near]))]


def _geometric_tier(graph, t, cap_lo, cap_hi, refine_budget=REFINE_BUDGET):
    """Bound the largest ball count at radius ``(t+1) r``.

    Returns ``(C, exceeds, counts)``.  ``C`` bounds every count from above;
    ``exceeds`` means the tier cannot be used, either because some count is
    known to reach ``cap_hi`` or because the bounds stay above ``cap_hi``
    after ``refine_budget`` point-pair distance checks.  ``counts`` is a per-vertex upper
    bound, exact wherever it was refined.  Cells are refined in decreasing
    order of their bound, stopping as soon as no unrefined cell can beat the
    best exact count.
    """
    R = (t + 1) * graph.radius
    pts = graph.points
    # cheap early exit: vertices near the middle have the fullest balls
    for v in _central_vertices(graph):
        d = pts - pts[v]
        if np.count_nonzero(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] <= R * R) >= cap_hi:
            return None, True, None
    ij, m, ub, lb = _grid_bounds(pts, graph.side, R)
    cell = ij[:, 1] * m + ij[:, 0]
    occupied = np.bincount(cell, minlength=m * m) > 0
    if np.where(occupied, lb.ravel(), 0).max(initial=0) >= cap_hi:
        return None, True, None
    ubf = np.where(occupied, ub.ravel(), -1)
    counts = ubf[cell].copy()
    order = np.argsort(-ubf, kind="stable")
    grid = None
    by_cell = np.argsort(cell, kind="stable")
    start = np.searchsorted(cell[by_cell], np.arange(m * m + 1))
    best = 0
    spent = [0]
    for c in order:
        if ubf[c] <= best or ubf[c] < cap_lo:
            return max(best, int(max(ubf[c], 0))), False, counts
        members = by_cell[start[c]:start[c + 1]]
        if spent[0] >= refine_budget:
            bound = max(best, int(ubf[c]))
            return (bound, False, counts) if bound < cap_hi else (None, True, None)
        if grid is None:
            grid = CellGrid(pts, graph.side, R)
        exact = _exact_counts(graph, grid, members, R, spent)
        counts[members] = exact
        best = max(best, int(exact.max()))
        if best >= cap_hi:
            return None, True, None
    return best, False, counts


def _abstract_tier(graph, t):
    counts = np.array(
        [len(bfs_distances(graph, v, t + 1)) for v in range(graph.n)], dtype=np.int64
    )
    return int(counts.max(initial=0)), False, counts


def ball_counting_cap(graph, weight_budget):
    """Residual lower bound from capping the weight any vertex can reach.

    Tiers ``t = 1 .. floor(lg W)`` are scanned upwards.  In tier ``t`` the
    largest ball count ``C`` at radius ``(t+1) r`` (hop radius ``t+1`` for
    abstract graphs) is found; weights ``W'`` in ``[max(2**t, C+1), 2**(t+1))``
    are then unreachable, and the first such ``W' <= W`` is used.
    """
    n = graph.n
    W = int(weight_budget)
    dmax, deg_cap = _degree_cap(graph)
    params = {"n": n, "weight_budget": W, "max_degree": dmax, "degree_cap": deg_cap}
    if isinstance(graph, GeometricGraph):
        params["r"] = graph.radius
    if n == 0:
        return Certificate(BALL, 0, {}, params)
    excluded = None
    witness = {}
    geometric = isinstance(graph, GeometricGraph)
    for t in range(1, max(W, 1).bit_length()):
        lo, hi = 1 << t, min((1 << (t + 1)) - 1, W)
        if lo > hi:
            break
        if lo > n:
            # no ball can hold more than n points
            excluded, C, counts = lo, None, None
        else:
            if geometric:
                C, exceeds, counts = _geometric_tier(graph, t, lo, hi)
            else:
                C, exceeds, counts = _abstract_tier(graph, t)
                exceeds = C >= hi
            if exceeds:
                continue
            excluded = max(lo, C + 1)
        witness = {
            "tier": t,
            "radius": (t + 1) * graph.radius if geometric else t + 1,
            "excluded_weight": excluded,
            "max_count": C,
        }
        if counts is not None:
            witness["counts"] = counts
        break
    cap = deg_cap
    if excluded is not None:
        cap = min(cap, excluded - 1)
    params["weight_cap"] = cap
    witness["weight_cap"] = cap
    return Certificate(BALL, -(-n // cap), witness, params)


def lower_bounds(graph, weight_budget=None):
    """Both certificates; the ball budget defaults to ``n``."""
    w = graph.n if weight_budget is None else weight_budget
    return {DANGEROUS: dangerous_squares(graph), BALL: ball_counting_cap(graph, w)}


# -- independent re-checking ------------------------------------------------

def _brute_sq_dists(pts, i):
    d = pts - pts[i]
    return d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]


def _brute_degree_max(graph):
    if isinstance(graph, AdjacencyGraph):
        return max((len(graph.neighbors(v)) for v in range(graph.n)), default=0)
    pts = graph.points
    r2 = graph.radius * graph.radius
    return max((int((_brute_sq_dists(pts, i) <= r2).sum()) - 1 for i in range(len(pts))),
               default=0)


def _brute_ball_counts(graph, radius):
    if isinstance(graph, AdjacencyGraph):
        out = []
        for v in range(graph.n):
            seen = {v}
            frontier = [v]
            for _ in range(int(radius)):
                frontier = [w for u in frontier for w in graph.neighbors(u) if w not in seen]
                seen.update(frontier)
            out.append(len(seen))
        return out
    pts = graph.points
    R2 = radius * radius
    return [int((_brute_sq_dists(pts, i) <= R2).sum()) for i in range(len(pts))]


def verify_certificate(graph, cert):
    """Recompute ``cert.value`` by brute force; raises ``AssertionError`` on mismatch.

    Quadratic in ``n``: meant for instances up to a few tens of thousands.
    """
    if cert.kind == DANGEROUS:
        if not cert.applicable:
            assert cert.value == 0
            return 0
        p = dangerous_params(graph.side, graph.radius)
        q, s = p["grid"], p["square_side"]
        found = 0
        listed = set(cert.witness["squares"])
        for a in range(q):
            for b in range(q):
                x0, y0 = b * s, a * s
                cx, cy = x0 + s / 2, y0 + s / 2
                total = 0
                circ = 0
                for x, y in graph.points:
                    bx = min(int(x // s), q - 1)
                    by = min(int(y // s), q - 1)
                    if bx == b and by == a:
                        total += 1
                        if (x - cx) ** 2 + (y - cy) ** 2 <= 1.0:
                            circ += 1
                bad = circ >= 1 and total < p["threshold"]
                assert bad == ((a * q + b) in listed), f"square {(a, b)} misclassified"
                found += bad
        assert found == cert.value
        return found
    if cert.kind == BALL:
        n = graph.n
        if n == 0:
            assert cert.value == 0
            return 0
        dmax = _brute_degree_max(graph)
        cap = n if dmax >= n.bit_length() else min(n, 2 ** dmax)
        wit = cert.witness
        if wit.get("excluded_weight") is not None:
            W = wit["excluded_weight"]
            t = W.bit_length() - 1
            assert t == wit["tier"]
            if W <= n:
                counts = _brute_ball_counts(graph, wit["radius"])
                assert max(counts) < W, "a ball reaches the excluded weight"
                if "counts" in wit:
                    claimed = np.asarray(wit["counts"])
                    assert np.all(claimed >= np.asarray(counts)), "witness count too small"
            cap = min(cap, W - 1)
        value = -(-n // cap)
        assert value == cert.value, f"recomputed {value} != {cert.value}"
        return value
    raise ValueError(f"unknown certificate kind {cert.kind!r}")
