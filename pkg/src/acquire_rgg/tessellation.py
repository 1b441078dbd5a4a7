"""
Upper-bound protocols built from a two-level tessellation.

The square ``[0, side]^2`` is cut into ``k**2`` large squares of side
``x r lg r``, each cut into ``ell**2`` small squares of side ``y r``.  A large
square is good when every small square holds ``(1 +- eps) (y r)**2`` points
and the points are in general position.  A good square is split along its
diagonals into four triangles; in each triangle a trimmed funnel tree
(:mod:`acquire_rgg.trees`) is laid onto the points strip by strip, and the
four triangle roots are merged.  Squares that are bad, or whose embedding
stops with an error, are emptied cell by cell on a grid of side ``r/sqrt 2``.

All four triangles are handled in a local frame: the apex (square centre)
sits at depth 0, the base at depth ``h = side/2``, and ``X`` runs along the
base.  Slopes ``X / depth`` identify rays from the apex.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import Move, Protocol
from .trees import depth_for, extract_protocol, trim

TRIANGLES = ("bottom", "top", "left", "right")

ERROR1, ERROR2, ERROR3 = "Error1", "Error2", "Error3"


class PlanError(ValueError):
    pass


class RadiusTooSmall(PlanError):
    pass


class PlaneTooSmall(PlanError):
    pass


class BadConstant(PlanError):
    pass


class MergeError(ValueError):
    """Triangle roots of a square are not pairwise adjacent."""


@dataclass
class TessellationPlan:
    n: float
    r: float
    c: float
    eps: float
    side: float
    lg_r: float
    k: int
    x: float
    ell: int
    y: float
    large_side: float
    small_side: float
    expected_small: float
    z_minus: float
    z_plus: float
    small_bad_bound: float
    large_bad_bound: float
    feasible: bool
    strip_rows: int = 10
    rules: str = "strict"
    # filled by classify()
    square_good: np.ndarray | None = field(default=None, repr=False)
    reasons: dict = field(default_factory=dict, repr=False)
    general_position_fail: frozenset = field(default=frozenset(), repr=False)
    small_counts: np.ndarray | None = field(default=None, repr=False)
    square_of: np.ndarray | None = field(default=None, repr=False)
    members_order: np.ndarray | None = field(default=None, repr=False)
    members_start: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_squares(self):
        return self.k * self.k

    @property
    def lines(self):
        """Index of the last auxiliary line (the triangle base)."""
        return math.ceil((self.ell // 2) / self.strip_rows)

    @property
    def strip(self):
        return self.strip_rows * self.small_side

    @property
    def small_bounds(self):
        e = self.expected_small
        return (1 - self.eps) * e, (1 + self.eps) * e

    def square_origin(self, sq):
        iy, ix = divmod(sq, self.k)
        return ix * self.large_side, iy * self.large_side

    def members(self, sq):
        return self.members_order[self.members_start[sq]:self.members_start[sq + 1]]

    @property
    def good_count(self):
        return int(self.square_good.sum()) if self.square_good is not None else None


def plan(n, r, c=1e-4, eps=1e-2, side=None, strip_rows=10, rules="strict"):
    """Derive the tessellation parameters for ``n`` points and radius ``r``.

    ``strip_rows`` is the height of one embedding strip in small-square rows.
    ``rules="strict"`` stops the embedding exactly where the proof does.
    ``rules="relaxed"`` is meant for radii far below the asymptotic range: a
    region's roots may spill below the auxiliary line instead of raising
    Error2, split pieces wider than ``r/3`` are split again instead of
    raising Error1, and a region holding a single tree is never split.
    Edge lengths are checked (Error3) under both rules.
    """
    if rules not in ("strict", "relaxed"):
        raise ValueError(f"unknown rules {rules!r}")
    if strip_rows < 1:
        raise ValueError("strip_rows must be positive")
    if not 0 < c < 1:
        raise BadConstant(f"c={c} must lie in (0, 1)")
    if not 0 < eps < 1:
        raise BadConstant(f"eps={eps} must lie in (0, 1)")
    if not r >= 2:
        raise RadiusTooSmall(f"r={r} < 2")
    side = math.sqrt(n) if side is None else float(side)
    lg_r = math.log2(r)
    unit = c * r * lg_r
    if unit > side:
        raise PlaneTooSmall(f"c r lg r = {unit} exceeds side {side}")
    k = math.ceil(side / unit)
    x = side / (k * r * lg_r)
    ell = 20 * math.ceil(x * lg_r / (20 * c))
    y = x * lg_r / ell
    large = side / k
    small = large / ell
    expected = (y * r) ** 2
    zbase = (x * r * lg_r) ** 2 / 4
    small_bad = min(1.0, 2 * math.exp(-eps * eps * expected / 3))
    large_bad = min(1.0, ell * ell * small_bad)
    return TessellationPlan(
        n=n, r=float(r), c=c, eps=eps, side=side, lg_r=lg_r, k=k, x=x, ell=ell, y=y,
        large_side=large, small_side=small, expected_small=expected,
        z_minus=(1 - 2 * eps) * zbase, z_plus=(1 + 2 * eps) * zbase,
        small_bad_bound=small_bad, large_bad_bound=large_bad, feasible=large_bad < 0.5,
        strip_rows=int(strip_rows), rules=rules,
    )


def relaxed_plan(n, r, c=0.25, eps=0.01, side=None):
    """One-row strips under the relaxed rules."""
    return plan(n, r, c, eps, side, strip_rows=1, rules="relaxed")


def _square_index(points, p):
    ij = np.floor(points / p.large_side).astype(np.int64)
    np.clip(ij, 0, p.k - 1, out=ij)
    return ij


def _local(points, p, ij):
    """Coordinates relative to the centre of each point's large square."""
    centre = (ij + 0.5) * p.large_side
    return points[:, 0] - centre[:, 0], points[:, 1] - centre[:, 1]


def triangle_of(u, v):
    """0..3 for bottom, top, left, right; -1 on a diagonal."""
    au, av = np.abs(u), np.abs(v)
    tri = np.full(len(u), -1, dtype=np.int64)
    vert = av > au
    horiz = au > av
    tri[vert & (v < 0)] = 0
    tri[vert & (v > 0)] = 1
    tri[horiz & (u < 0)] = 2
    tri[horiz & (u > 0)] = 3
    return tri


def to_frame(u, v, tri):
    """Map square-centred coordinates of one triangle to (X, depth)."""
    if tri == 0:
        return u, -v
    if tri == 1:
        return -u, v
    if tri == 2:
        return -v, -u
    return v, u


def _dup_flags(keys, values):
    """Per-group flag: some two entries with equal key share an equal value."""
    order = np.lexsort((values, keys))
    k, val = keys[order], values[order]
    same = (k[1:] == k[:-1]) & (val[1:] == val[:-1])
    return np.unique(k[1:][same])


def classify(p, graph):
    """Label every large square good or bad and record why bad ones failed."""
    if abs(graph.side - p.side) > 1e-9 * max(1.0, p.side) or graph.radius != p.r:
        raise PlanError("plan does not match the graph's side and radius")
    pts = graph.points
    k, ell = p.k, p.ell
    ij = _square_index(pts, p)
    sq = ij[:, 1] * k + ij[:, 0]
    lx = pts[:, 0] - ij[:, 0] * p.large_side
    ly = pts[:, 1] - ij[:, 1] * p.large_side
    sx = np.clip(np.floor(lx / p.small_side).astype(np.int64), 0, ell - 1)
    sy = np.clip(np.floor(ly / p.small_side).astype(np.int64), 0, ell - 1)
    small_id = (sq * ell + sy) * ell + sx
    counts = np.bincount(small_id, minlength=k * k * ell * ell).astype(np.int32)
    lo, hi = p.small_bounds
    bad_small = (counts < lo) | (counts > hi)
    per_square_bad = bad_small.reshape(k * k, ell * ell)
    good = ~per_square_bad.any(axis=1)
    reasons = {}
    for s in np.flatnonzero(~good):
        first = int(np.argmax(per_square_bad[s]))
        cy, cx = divmod(first, ell)
        reasons[int(s)] = (
            f"small square ({cx}, {cy}) holds {int(counts[s * ell * ell + first])} "
            f"points, outside [{lo:.6g}, {hi:.6g}]"
        )

    # (a) border and diagonals
    x0 = ij * p.large_side
    x1 = (ij + 1) * p.large_side
    on_border = (pts == x0).any(axis=1) | (pts == x1).any(axis=1)
    u, v = _local(pts, p, ij)
    on_diag = np.abs(u) == np.abs(v)
    general = {}
    for s in np.unique(sq[on_border | on_diag]):
        general[int(s)] = "(a) a vertex lies on the border or a diagonal"
    # (b) two vertices on a line parallel to a side
    for s in np.concatenate([_dup_flags(sq, pts[:, 0]), _dup_flags(sq, pts[:, 1])]):
        general.setdefault(int(s), "(b) two vertices share a coordinate")
    # (c) two vertices collinear with the centre
    theta = np.mod(np.arctan2(v, u), np.pi)
    order = np.lexsort((theta, sq))
    so, uo, vo = sq[order], u[order], v[order]
    same_sq = so[1:] == so[:-1]
    cross = uo[1:] * vo[:-1] - uo[:-1] * vo[1:]
    for s in np.unique(so[1:][same_sq & (cross == 0)]):
        general.setdefault(int(s), "(c) two vertices are collinear with the centre")
    # wrap-around pair of each square (angles near 0 and near pi)
    if len(so):
        starts = np.flatnonzero(np.r_[True, so[1:] != so[:-1]])
        ends = np.r_[starts[1:], len(so)] - 1
        multi = ends > starts
        a, b = starts[multi], ends[multi]
        wrap = uo[a] * vo[b] - uo[b] * vo[a] == 0
        for s in so[a][wrap]:
            general.setdefault(int(s), "(c) two vertices are collinear with the centre")
    for s, why in general.items():
        if good[s]:
            good[s] = False
            reasons[s] = why
    morder = np.argsort(sq, kind="stable")
    mstart = np.zeros(k * k + 1, dtype=np.int64)
    np.cumsum(np.bincount(sq, minlength=k * k), out=mstart[1:])
    return replace(
        p, square_good=good, reasons=reasons, small_counts=counts, square_of=sq,
        members_order=morder, members_start=mstart, general_position_fail=frozenset(general),
    )


@dataclass
class EmbedError:
    kind: str
    triangle: str
    level: int
    measurement: float
    detail: str = ""

    def __str__(self):
        return f"{self.kind} in {self.triangle} triangle at level {self.level}: {self.detail}"


@dataclass
class TriangleEmbedding:
    triangle: str
    z: int
    z_minus: float
    z_plus: float
    tree: object
    assignment: dict
    root: int | None
    protocol: Protocol
    aux_lines: list
    separators: list
    splits: list
    packs: list
    max_edge: float

    @property
    def ok(self):
        return True


@dataclass
class _Region:
    s1: float
    s2: float
    verts: np.ndarray
    family: list
    level: int
    top: float


def embed_points(ids, X, T, gx, gy, h, strip, lines, r, triangle="bottom",
                 z_bounds=(math.nan, math.nan), rules="strict"):
    """Lay a trimmed funnel tree onto the points of one triangle.

    ``X``/``T`` are lateral offset and depth in the triangle frame, ``gx``/``gy``
    the original coordinates (used for the edge-length test so it agrees with
    the graph exactly).  Returns a :class:`TriangleEmbedding` or an
    :class:`EmbedError`.
    """
    ids = np.asarray(ids, dtype=np.int64)
    z = len(ids)
    r2 = r * r
    aux = [min(i * strip, h) for i in range(lines)] + [h]
    empty = TriangleEmbedding(triangle, z, *z_bounds, None, {}, None, Protocol(), aux, [], [], [], 0.0)
    if z == 0:
        return empty
    d = depth_for(z)
    tree = trim(d, z)
    level_counts = tree.level_counts()
    dist2 = X * X + T * T
    root_local = int(np.lexsort((ids, dist2))[0])
    node_vertex = np.full(z, -1, dtype=np.int64)
    node_vertex[0] = root_local
    separators = [(0, float(T[root_local]), 0.0)]
    splits, packs = [], []
    max_edge2 = 0.0

    if z > 1:
        rest = np.delete(np.arange(z), root_local)
        stack = [_Region(-1.0, 1.0, rest, list(tree.children[0]), 1, float(T[root_local]))]
    else:
        stack = []
    size = tree.subtree_size
    while stack:
        reg = stack.pop()
        if not reg.family:
            continue
        i = reg.level
        depth_i = aux[min(i, lines)]
        width = (reg.s2 - reg.s1) * depth_i
        q = len(reg.verts)
        # a lone tree cannot be divided; the relaxed rules keep it whole
        if width > r / 3 and (rules == "strict" or len(reg.family) > 1):
            left, right = [], []
            wl = wr = 0
            for t in sorted(reg.family, key=lambda t: (-size[t], t)):
                if wl <= wr:
                    left.append(t)
                    wl += size[t]
                else:
                    right.append(t)
                    wr += size[t]
            vs = reg.verts
            by_slope = vs[np.lexsort((ids[vs], X[vs] / T[vs]))]
            sl = X[by_slope] / T[by_slope]
            if wl == 0:
                sb = reg.s1
            elif wl == q:
                sb = reg.s2
            else:
                sb = 0.5 * (sl[wl - 1] + sl[wl])
            w1 = (sb - reg.s1) * depth_i
            w2 = (reg.s2 - sb) * depth_i
            splits.append((i, q, wl, wr, w1, w2))
            for w in (w1, w2):
                if w < r / 20 or (w > r / 3 and rules == "strict"):
                    return EmbedError(
                        ERROR1, triangle, i, w,
                        f"split piece width {w:.6g} outside [{r / 20:.6g}, {r / 3:.6g}]",
                    )
            stack.append(_Region(sb, reg.s2, by_slope[wl:], right, i, reg.top))
            stack.append(_Region(reg.s1, sb, by_slope[:wl], left, i, reg.top))
            continue

        vs = reg.verts
        vs = vs[np.lexsort((ids[vs], T[vs]))]
        last = i >= lines
        above = q if last else int(np.count_nonzero(T[vs] < depth_i))
        if rules == "strict":
            need = level_counts[i] if i < len(level_counts) else 0
            if need > above:
                return EmbedError(
                    ERROR2, triangle, i, above,
                    f"level {i} has {need} nodes but only {above} points lie above the line",
                )
        else:
            # the region's own roots may spill below the auxiliary line
            above = max(above, len(reg.family))
        fam = sorted(reg.family, key=lambda t: (size[t], t))
        total = len(fam)
        packed = []
        for t in fam:
            if total + size[t] - 1 <= above:
                packed.append(t)
                total += size[t] - 1
            else:
                break
        inner = []
        for t in packed:
            inner.extend(tree.descendants(t)[1:])
        inner.sort(key=lambda v: (tree.level[v], v))
        nodes = fam + inner
        chosen = vs[:total]
        node_vertex[nodes] = chosen
        par = np.asarray([tree.parent[v] for v in nodes])
        a, b = ids[chosen], ids[node_vertex[par]]
        dx = gx[a] - gx[b]
        dy = gy[a] - gy[b]
        d2 = dx * dx + dy * dy
        worst = int(np.argmax(d2))
        max_edge2 = max(max_edge2, float(d2[worst]))
        if d2[worst] > r2:
            return EmbedError(
                ERROR3, triangle, i, math.sqrt(float(d2[worst])),
                f"tree edge {tree.parent[nodes[worst]]}-{nodes[worst]} spans "
                f"{math.sqrt(float(d2[worst])):.6g} > r",
            )
        packs.append((i, above, total))
        remaining = vs[total:]
        if len(remaining):
            sep = 0.5 * (float(T[chosen[-1]]) + float(T[remaining[0]]))
            separators.append((i, sep, depth_i))
            packed_set = set(packed)
            nxt = [c for t in fam if t not in packed_set for c in tree.children[t]]
            stack.append(_Region(reg.s1, reg.s2, remaining, nxt, i + 1, sep))

    assignment = {v: int(ids[node_vertex[v]]) for v in range(z)}
    protocol = extract_protocol(tree, relabel=[int(ids[node_vertex[v]]) for v in range(z)])
    return TriangleEmbedding(
        triangle, z, *z_bounds, tree, assignment, assignment[0], protocol, aux,
        separators, splits, packs, math.sqrt(max_edge2),
    )


def _sq_index(p, square):
    if isinstance(square, tuple):
        ix, iy = square
        return iy * p.k + ix
    return int(square)


def _triangle_points(p, graph, sq, which):
    mem = p.members(sq)
    pts = graph.points[mem]
    ij = np.stack(np.divmod(np.full(len(mem), sq), p.k)[::-1], axis=1)
    u, v = _local(pts, p, ij)
    tri = triangle_of(u, v)
    t_idx = TRIANGLES.index(which)
    sel = tri == t_idx
    X, T = to_frame(u[sel], v[sel], t_idx)
    return mem[sel], X, T


def embed_triangle(p, square, triangle, graph):
    """Embed the funnel tree on one triangle of a classified large square."""
    sq = _sq_index(p, square)
    ids, X, T = _triangle_points(p, graph, sq, triangle)
    return embed_points(
        ids, X, T, graph.points[:, 0], graph.points[:, 1], p.large_side / 2, p.strip,
        p.lines, p.r, triangle, (p.z_minus, p.z_plus), p.rules,
    )


@dataclass
class SquareProtocol:
    square: int
    kind: str  # "embedded", "fallback" or "empty"
    protocol: Protocol
    roots: list
    errors: list = field(default_factory=list)
    embeddings: list = field(default_factory=list)


def merge_roots(graph, roots, weights):
    """Merge piles on pairwise adjacent ``roots``: lighter onto heavier, two lightest first."""
    heap = [(w, v) for v, w in zip(roots, weights) if w > 0]
    heapq.heapify(heap)
    moves = []
    while len(heap) > 1:
        w1, a = heapq.heappop(heap)
        w2, b = heapq.heappop(heap)
        if not graph.has_edge(a, b):
            raise MergeError(f"roots {a} and {b} are not adjacent")
        moves.append(Move(a, b))
        heapq.heappush(heap, (w1 + w2, b))
    return moves, [v for _, v in heap]


def merge_square(p, square, embeddings, graph):
    """Append the root-merging moves to the four triangle protocols."""
    sq = _sq_index(p, square)
    prot = Protocol()
    roots, weights = [], []
    for emb in embeddings:
        prot.extend(emb.protocol)
        if emb.z:
            roots.append(emb.root)
            weights.append(emb.z)
    moves, final = merge_roots(graph, roots, weights)
    prot.extend(moves)
    return SquareProtocol(sq, "embedded" if final else "empty", prot, final, [], list(embeddings))


def fallback_cells(large_side, r):
    """Cells per side so that cell diagonals never exceed ``r``."""
    m = max(1, math.ceil(large_side * math.sqrt(2) / r))
    while 2 * (large_side / m) ** 2 > r * r:
        m += 1
    return m


def _funnel_cells(ids, px, py, key):
    """Move every point of a cell onto the point nearest the cell centre.

    ``key`` holds (cell id, squared distance to cell centre) per point.  Returns
    the moves (grouped by cell) and the accumulator of each non-empty cell.
    """
    cell, d2 = key
    order = np.lexsort((ids, d2, cell))
    c = cell[order]
    head = np.r_[True, c[1:] != c[:-1]]
    acc_of_group = order[head]
    group = np.cumsum(head) - 1
    src = order[~head]
    dst = acc_of_group[group[~head]]
    moves = np.stack([ids[src], ids[dst]], axis=1)
    return moves, ids[acc_of_group]


def _cell_keys(px, py, x0, y0, cell_side, m, square=None):
    cx = np.clip(np.floor((px - x0) / cell_side).astype(np.int64), 0, m - 1)
    cy = np.clip(np.floor((py - y0) / cell_side).astype(np.int64), 0, m - 1)
    dx = px - (x0 + (cx + 0.5) * cell_side)
    dy = py - (y0 + (cy + 0.5) * cell_side)
    cell = cy * m + cx
    if square is not None:
        cell = square * (m * m) + cell
    return cell, dx * dx + dy * dy


def fallback_bad_square(p, square, graph):
    """Empty each ``r/sqrt 2`` cell of the square onto one accumulator."""
    sq = _sq_index(p, square)
    mem = p.members(sq)
    if not len(mem):
        return SquareProtocol(sq, "empty", Protocol(), [])
    x0, y0 = p.square_origin(sq)
    m = fallback_cells(p.large_side, p.r)
    px, py = graph.points[mem, 0], graph.points[mem, 1]
    moves, accs = _funnel_cells(mem, px, py, _cell_keys(px, py, x0, y0, p.large_side / m, m))
    return SquareProtocol(sq, "fallback", Protocol([Move(int(a), int(b)) for a, b in moves]),
                          [int(a) for a in accs])


def fallback_residual_bound(p):
    return fallback_cells(p.large_side, p.r) ** 2


@dataclass
class FullResult:
    protocol: Protocol
    residual_count: int
    residual: list
    good_squares: int
    bad_squares: int
    embedded_squares: int
    demoted_squares: int
    error_counts: dict
    squares: list = field(repr=False, default_factory=list)

    def report(self, p):
        return {
            "format": "atreportv1",
            "n": p.n, "r": p.r, "c": p.c, "eps": p.eps,
            "k": p.k, "ell": p.ell, "x": p.x, "y": p.y,
            "expected_small": p.expected_small, "feasible": p.feasible,
            "good_squares": self.good_squares, "bad_squares": self.bad_squares,
            "embedded_squares": self.embedded_squares,
            "demoted_squares": self.demoted_squares,
            "error_counts": dict(self.error_counts),
            "residual_count": self.residual_count,
        }


def _try_embed(p, sq, graph):
    embs, errors = [], []
    for tri in TRIANGLES:
        res = embed_triangle(p, sq, tri, graph)
        if isinstance(res, EmbedError):
            errors.append(res)
        else:
            embs.append(res)
    if errors:
        return None, errors
    try:
        return merge_square(p, sq, embs, graph), []
    except MergeError as exc:
        return None, [EmbedError("Merge", "square", 0, math.nan, str(exc))]


def full_protocol(graph, p, attempt_bad=False, keep_squares=False):
    """One protocol for the whole instance: embed good squares, fall back elsewhere.

    With ``attempt_bad`` the embedding is also tried on squares that fail only
    the small-square count test (general position still required).
    """
    if p.square_good is None:
        p = classify(p, graph)
    pts = graph.points
    nsq = p.num_squares
    error_counts = {ERROR1: 0, ERROR2: 0, ERROR3: 0, "Merge": 0}
    per_square = {}
    embedded = demoted = 0
    use_fallback = np.ones(nsq, dtype=bool)
    for sq in range(nsq):
        if not len(p.members(sq)):
            use_fallback[sq] = False
            continue
        try_it = bool(p.square_good[sq]) or (
            attempt_bad and sq not in p.general_position_fail
        )
        if not try_it:
            continue
        res, errors = _try_embed(p, sq, graph)
        for e in errors:
            error_counts[e.kind] = error_counts.get(e.kind, 0) + 1
        if res is None:
            if p.square_good[sq]:
                demoted += 1
            continue
        per_square[sq] = res
        use_fallback[sq] = False
        embedded += 1

    # vectorised fallback for every remaining square
    fb_sq = use_fallback[p.square_of]
    fb_ids = np.flatnonzero(fb_sq)
    fb_moves = np.zeros((0, 2), dtype=np.int64)
    fb_roots = np.zeros(0, dtype=np.int64)
    if len(fb_ids):
        m = fallback_cells(p.large_side, p.r)
        sqs = p.square_of[fb_ids]
        iy, ix = np.divmod(sqs, p.k)
        px, py = pts[fb_ids, 0], pts[fb_ids, 1]
        key = _cell_keys(px, py, ix * p.large_side, iy * p.large_side, p.large_side / m, m, sqs)
        fb_moves, fb_roots = _funnel_cells(fb_ids, px, py, key)
    # assemble in square order
    fb_square_of_move = p.square_of[fb_moves[:, 0]] if len(fb_moves) else fb_moves[:, 0]
    bounds = np.searchsorted(fb_square_of_move, np.arange(nsq + 1))
    moves = []
    residual = []
    fb_root_sq = p.square_of[fb_roots] if len(fb_roots) else fb_roots
    root_bounds = np.searchsorted(fb_root_sq, np.arange(nsq + 1))
    squares = []
    for sq in range(nsq):
        if sq in per_square:
            res = per_square[sq]
            moves.extend(res.protocol.moves)
            residual.extend(res.roots)
            if keep_squares:
                squares.append(res)
        elif use_fallback[sq]:
            block = fb_moves[bounds[sq]:bounds[sq + 1]]
            moves.extend(Move(int(a), int(b)) for a, b in block)
            roots = [int(v) for v in fb_roots[root_bounds[sq]:root_bounds[sq + 1]]]
            residual.extend(roots)
            if keep_squares:
                squares.append(SquareProtocol(sq, "fallback", Protocol(
                    [Move(int(a), int(b)) for a, b in block]), roots))
    good = p.good_count
    return FullResult(
        Protocol(moves, frozenset(residual)), len(residual), residual, good, nsq - good,
        embedded, demoted, error_counts, squares,
    )


def stratified_points(p, per_small, seed, squares=None):
    """Exactly ``per_small`` uniform points in every small square.

    Used to build synthetic good squares at relaxed constants.  ``squares``
    restricts the fill to the given large-square indices.
    """
    from .rgg import make_rng

    rng = make_rng(seed)
    squares = range(p.num_squares) if squares is None else squares
    ell = p.ell
    blocks = []
    for sq in squares:
        x0, y0 = p.square_origin(sq)
        g = np.arange(ell * ell)
        cy, cx = np.divmod(np.repeat(g, per_small), ell)
        off = rng.random((len(cx), 2))
        xs = x0 + (cx + off[:, 0]) * p.small_side
        ys = y0 + (cy + off[:, 1]) * p.small_side
        blocks.append(np.stack([xs, ys], axis=1))
    pts = np.concatenate(blocks) if blocks else np.zeros((0, 2))
    return np.clip(pts, 0.0, p.side)


def fallback_only(graph, p):
    """Fallback on every large square, ignoring classification."""
    if p.square_good is None:
        p = classify(p, graph)
    q = replace(p, square_good=np.zeros(p.num_squares, dtype=bool))
    return full_protocol(graph, q)


def grid_protocol(graph, refine=1):
    """Whole-plane ``r/sqrt 2`` cell funnel followed by greedy pile merging.

    After every cell is emptied onto the point nearest its centre, the
    lightest remaining pile is repeatedly moved onto its heaviest adjacent
    pile (always legal: the lightest pile is never heavier than a neighbour)
    until no pile has a live neighbour.  ``refine`` subdivides the cells.
    """
    pts = graph.points
    n = graph.n
    if n == 0:
        return Protocol([], frozenset()), []
    r = graph.radius
    side = max(graph.side, 1e-300)
    m = fallback_cells(side, r) * refine
    cs = side / m
    ids = np.arange(n, dtype=np.int64)
    key = _cell_keys(pts[:, 0], pts[:, 1], 0.0, 0.0, cs, m)
    moves, accs = _funnel_cells(ids, pts[:, 0], pts[:, 1], key)
    out = [Move(int(a), int(b)) for a, b in moves]
    cell_of = key[0]
    weight = np.bincount(cell_of, minlength=m * m)
    acc_cell = cell_of[accs]
    w = {int(c): int(weight[c]) for c in acc_cell}
    acc_at = {int(c): int(a) for c, a in zip(acc_cell, accs)}
    reach = int(math.ceil(r / cs)) + 1
    offsets = [(dx, dy) for dx in range(-reach, reach + 1) for dy in range(-reach, reach + 1)
               if (dx, dy) != (0, 0) and (max(abs(dx), abs(dy)) - 1) * cs <= r]
    r2 = r * r
    px, py = pts[:, 0].tolist(), pts[:, 1].tolist()

    def live_neighbours(c):
        cy, cx = divmod(c, m)
        a = acc_at[c]
        for dx, dy in offsets:
            nx, ny = cx + dx, cy + dy
            if 0 <= nx < m and 0 <= ny < m:
                d = ny * m + nx
                b = acc_at.get(d)
                if b is not None:
                    ex, ey = px[a] - px[b], py[a] - py[b]
                    if ex * ex + ey * ey <= r2:
                        yield d

    heap = [(wt, acc_at[c], c) for c, wt in w.items()]
    heapq.heapify(heap)
    while heap:
        wt, a, c = heapq.heappop(heap)
        if acc_at.get(c) != a or w[c] != wt:
            continue
        best = None
        for d in live_neighbours(c):
            cand = (w[d], -acc_at[d], d)
            if best is None or cand > best:
                best = cand
        if best is None:
            continue
        d = best[2]
        out.append(Move(a, acc_at[d]))
        w[d] += wt
        del acc_at[c]
        del w[c]
        heapq.heappush(heap, (w[d], acc_at[d], d))
    residual = sorted(acc_at.values())
    return Protocol(out, frozenset(residual)), residual
