"""
The total acquisition game.

Every vertex starts with weight 1.  A move sends *all* the weight of ``src``
to an adjacent ``dst`` and is legal only if ``dst`` holds at least as much
weight as ``src`` right before the move.  The positive-weight vertices left
after a maximal move sequence form a residual set.

Each legal move empties exactly one positive vertex, so the positive count
after ``m`` moves is ``n - m`` whatever the moves were.  Consequently the
minimum positive count over all *reachable* states equals the minimum over
*maximal* sequences: any sequence can be extended to a maximal one without
increasing the count.  Every protocol produced in this package is therefore
an upper bound on the total acquisition number even when it is not maximal.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

PROTOCOL_TAG = "atprotov1"


class Move(NamedTuple):
    src: int
    dst: int


class IllegalMove(ValueError):
    """A move that breaks the acquisition rule."""

    kind = "IllegalMove"

    def __init__(self, move, detail=""):
        self.move = Move(*move)
        msg = f"{self.kind}: {self.move.src} -> {self.move.dst}"
        super().__init__(f"{msg} ({detail})" if detail else msg)


class NotAdjacent(IllegalMove):
    kind = "NotAdjacent"


class SourceEmpty(IllegalMove):
    kind = "SourceEmpty"


class DestinationTooLight(IllegalMove):
    kind = "DestinationTooLight"


class IllegalMoveAt(ValueError):
    """Replay stopped at move ``index`` because of ``cause``."""

    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"move {index}: {cause}")


class ProtocolFormatError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class AdjacencyGraph:
    """A plain undirected simple graph on vertices ``0..n-1``."""

    def __init__(self, n, edges=()):
        self.n = int(n)
        nbrs = [set() for _ in range(self.n)]
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u}, {v}) out of range")
            if u == v:
                raise ValueError(f"self-loop at {u}")
            nbrs[u].add(v)
            nbrs[v].add(u)
        self._nbrs = [tuple(sorted(s)) for s in nbrs]
        self._sets = [frozenset(s) for s in nbrs]

    @classmethod
    def cycle(cls, n):
        return cls(n, [(i, (i + 1) % n) for i in range(n)] if n >= 3 else [])

    @classmethod
    def path(cls, n):
        return cls(n, [(i, i + 1) for i in range(n - 1)])

    @classmethod
    def star(cls, leaves):
        return cls(leaves + 1, [(0, i) for i in range(1, leaves + 1)])

    @classmethod
    def complete(cls, n):
        return cls(n, [(i, j) for i in range(n) for j in range(i + 1, n)])

    @classmethod
    def empty(cls, n):
        return cls(n)

    def neighbors(self, v):
        return self._nbrs[v]

    def degree(self, v):
        return len(self._nbrs[v])

    def degrees(self):
        return [len(a) for a in self._nbrs]

    def has_edge(self, u, v):
        return v in self._sets[u]

    def edges(self):
        return [(u, v) for u in range(self.n) for v in self._nbrs[u] if u < v]

    def num_edges(self):
        return sum(len(a) for a in self._nbrs) // 2

    def has_edge_among(self, vertices):
        vs = set(vertices)
        return any(w in vs for v in vs for w in self._nbrs[v])

    def __eq__(self, other):
        if not isinstance(other, AdjacencyGraph):
            return NotImplemented
        return self.n == other.n and self._nbrs == other._nbrs

    __hash__ = None

    def __repr__(self):
        return f"AdjacencyGraph(n={self.n}, m={self.num_edges()})"


def bfs_distances(graph, source, limit=None):
    """Hop distances from ``source``, optionally only up to ``limit`` hops."""
    dist = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        dv = dist[v]
        if limit is not None and dv >= limit:
            continue
        for w in graph.neighbors(v):
            w = int(w)
            if w not in dist:
                dist[w] = dv + 1
                queue.append(w)
    return dist


@dataclass
class Protocol:
    moves: list = field(default_factory=list)
    declared_residual: frozenset | None = None

    def __len__(self):
        return len(self.moves)

    def extend(self, other):
        self.moves.extend(other.moves if isinstance(other, Protocol) else other)
        self.declared_residual = None
        return self


@dataclass
class CapViolation:
    vertex: int
    weight: int
    kind: str  # "degree" or "radius"
    bound: float
    observed: float


class WeightState:
    """Mutable game configuration: per-vertex weights plus the move trace.

    With ``track_provenance`` the state also records, for every vertex, the
    largest number of transfer hops travelled by any unit it holds and the
    set of origins of those units, so Observation-style caps can be audited.
    """

    def __init__(self, graph, weights=None, track_provenance=False):
        self.graph = graph
        n = graph.n
        self.weights = [1] * n if weights is None else [int(w) for w in weights]
        if len(self.weights) != n:
            raise ValueError("weights length must equal vertex count")
        self.total = sum(self.weights)
        self.trace = []
        self.positive = sum(1 for w in self.weights if w > 0)
        self.track_provenance = track_provenance
        if track_provenance:
            self.hops = [0] * n
            self.origins = [{v} if self.weights[v] > 0 else set() for v in range(n)]
            self.peak = list(self.weights)
            self.events = []  # (vertex, weight after move, hops)

    def copy(self):
        st = WeightState.__new__(WeightState)
        st.graph = self.graph
        st.weights = list(self.weights)
        st.total = self.total
        st.trace = list(self.trace)
        st.positive = self.positive
        st.track_provenance = False
        return st

    def check_move(self, m):
        src, dst = m
        w = self.weights
        if src == dst or not self.graph.has_edge(src, dst):
            raise NotAdjacent(m, "no such edge")
        if w[src] < 1:
            raise SourceEmpty(m, "source holds no weight")
        if w[dst] < w[src]:
            raise DestinationTooLight(m, f"{w[dst]} < {w[src]}")

    def apply(self, m):
        m = Move(int(m[0]), int(m[1]))
        self.check_move(m)
        src, dst = m
        w = self.weights
        w[dst] += w[src]
        w[src] = 0
        self.positive -= 1
        self.trace.append(m)
        if self.track_provenance:
            self.hops[dst] = max(self.hops[dst], self.hops[src] + 1)
            self.origins[dst] |= self.origins[src]
            self.origins[src] = set()
            self.hops[src] = 0
            self.peak[dst] = max(self.peak[dst], w[dst])
            self.events.append((dst, w[dst], self.hops[dst]))
        return self

    def residual(self):
        return frozenset(v for v, x in enumerate(self.weights) if x > 0)

    def conserved(self):
        return sum(self.weights) == self.total


def apply_move(state, m):
    """Apply ``m`` to ``state`` in place and return the state."""
    return state.apply(m)


def replay(graph, protocol, track_provenance=False):
    """Replay ``protocol`` from the all-ones state.

    Raises :class:`IllegalMoveAt` naming the first offending move.  On failure
    no state is returned, so the caller never sees a half-applied protocol.
    """
    moves = protocol.moves if isinstance(protocol, Protocol) else protocol
    state = WeightState(graph, track_provenance=track_provenance)
    for idx, m in enumerate(moves):
        try:
            state.apply(m)
        except IllegalMove as exc:
            raise IllegalMoveAt(idx, exc) from exc
    declared = getattr(protocol, "declared_residual", None)
    if declared is not None and frozenset(declared) != state.residual():
        raise ValueError("declared residual does not match replay")
    return state


def is_maximal(state):
    """True iff no legal move remains.

    Two adjacent positive vertices always admit a move from the lighter onto
    the heavier one, so this is exactly independence of the positive set.
    """
    return not state.graph.has_edge_among(v for v, x in enumerate(state.weights) if x > 0)


def has_legal_move(state):
    """Definition-level scan over all edges (slow reference for ``is_maximal``)."""
    w = state.weights

    def legal(a, b):
        return w[a] >= 1 and w[b] >= w[a]

    for u, v in state.graph.edges():
        u, v = int(u), int(v)
        if legal(u, v) or legal(v, u):
            return True
    return False


@dataclass
class CapReport:
    violations: list
    max_weight: int
    max_hops: int
    events_checked: int

    @property
    def ok(self):
        return not self.violations


def check_weight_caps(state, exact_distances=False):
    """Audit a provenance-tracked state against the degree and distance caps.

    For every weight ``w`` ever held by ``v``: ``w <= 2**deg(v)``, and every
    contributing unit travelled at most ``lg w`` hops (hence lies within graph
    distance ``lg w``).  With ``exact_distances`` the current contributors of
    every positive vertex are also checked by BFS.
    """
    if not state.track_provenance:
        raise ValueError("state was not built with track_provenance=True")
    g = state.graph
    out = []
    deg_cache = {}

    def deg(v):
        if v not in deg_cache:
            deg_cache[v] = g.degree(v)
        return deg_cache[v]

    for v, w in enumerate(state.peak):
        if w > 0 and w > 2 ** deg(v):
            out.append(CapViolation(v, w, "degree", 2 ** deg(v), w))
    for v, w, h in state.events:
        if h > math.log2(w):
            out.append(CapViolation(v, w, "radius", math.log2(w), h))
    if exact_distances:
        for v, w in enumerate(state.weights):
            if w > 1:
                limit = int(math.floor(math.log2(w)))
                dist = bfs_distances(g, v, limit)
                far = [u for u in state.origins[v] if u not in dist]
                if far:
                    out.append(CapViolation(v, w, "radius", limit, float("inf")))
    return CapReport(
        out,
        max(state.peak, default=0),
        max((h for _, _, h in state.events), default=0),
        len(state.events),
    )


def save_protocol(protocol, n):
    lines = [f"{PROTOCOL_TAG} {n}"]
    lines.extend(f"{m[0]} {m[1]}" for m in protocol.moves)
    return ("\n".join(lines) + "\n").encode("ascii")


def load_protocol(data):
    if isinstance(data, bytes):
        data = data.decode("ascii", errors="replace")
    lines = data.splitlines()
    if not lines:
        raise ProtocolFormatError("empty file", 1)
    head = lines[0].split()
    if len(head) != 2 or head[0] != PROTOCOL_TAG:
        raise ProtocolFormatError(f"expected header '{PROTOCOL_TAG} <n>'", 1)
    try:
        n = int(head[1])
    except ValueError:
        raise ProtocolFormatError(f"bad vertex count {head[1]!r}", 1) from None
    moves = []
    for lineno, line in enumerate(lines[1:], start=2):
        toks = line.split()
        if not toks or toks[0].startswith("#"):
            continue
        if len(toks) != 2:
            raise ProtocolFormatError("expected 'src dst'", lineno)
        try:
            src, dst = int(toks[0]), int(toks[1])
        except ValueError:
            raise ProtocolFormatError(f"bad move {line.strip()!r}", lineno) from None
        if not (0 <= src < n and 0 <= dst < n):
            raise ProtocolFormatError(f"vertex out of range 0..{n - 1}", lineno)
        moves.append(Move(src, dst))
    return n, Protocol(moves)
