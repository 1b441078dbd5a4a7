"""
Exact total acquisition numbers for small graphs.

``exact_at`` searches the game tree depth first with a bounded memo table
keyed on the full weight vector.  Since every move removes exactly one
positive vertex, the residual size reached from a state is the positive
count minus the number of further moves, and the search simply looks for
the longest legal continuation.  Components are solved separately and
added up.

``naive_at`` is the slow reference: plain recursion over every legal
move, no memo, no decomposition, no pruning.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

from .engine import AdjacencyGraph, Move, Protocol, replay

DEFAULT_CAP = 10
MEMO_SIZE = 1 << 20


class CapExceeded(ValueError):
    pass


class BudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchState:
    weights: tuple
    positive_count: int

    @classmethod
    def of(cls, weights):
        w = tuple(int(x) for x in weights)
        return cls(w, sum(1 for x in w if x > 0))

    @property
    def memo_key(self):
        return self.weights


def adjacency_lists(graph):
    """Sorted neighbour lists of any graph exposing ``n`` and ``neighbors``."""
    return [sorted(int(u) for u in graph.neighbors(v)) for v in range(graph.n)]


def components(adj):
    seen = [False] * len(adj)
    out = []
    for s in range(len(adj)):
        if seen[s]:
            continue
        seen[s] = True
        comp = [s]
        queue = deque([s])
        while queue:
            v = queue.popleft()
            for u in adj[v]:
                if not seen[u]:
                    seen[u] = True
                    comp.append(u)
                    queue.append(u)
        out.append(sorted(comp))
    return out


def _solve_component(adj, budget=None, memo_size=MEMO_SIZE):
    """Minimum residual of a connected graph and one witnessing move list."""
    n = len(adj)
    if n == 1:
        return 1, []
    edges = [(u, v) for u in range(n) for v in adj[u] if u < v]
    maxdeg = max(len(a) for a in adj)
    # weights never exceed 2**deg, so no residual can beat this
    floor = max(1, -(-n // min(n, 2 ** maxdeg)))
    expanded = [0]

    def moves_of(w):
        out = []
        for u, v in edges:
            a, b = w[u], w[v]
            if a and b:
                if a <= b:
                    out.append((a, u, v))
                if b <= a:
                    out.append((b, v, u))
        out.sort()
        return out

    @lru_cache(maxsize=memo_size)
    def best(w):
        if budget is not None:
            expanded[0] += 1
            if expanded[0] > budget:
                raise BudgetExhausted
        pos = sum(1 for x in w if x)
        value, choice = pos, None
        for _, src, dst in moves_of(w):
            nxt = list(w)
            nxt[dst] += nxt[src]
            nxt[src] = 0
            sub = best(tuple(nxt))[0]
            if sub < value:
                value, choice = sub, (src, dst)
                if value == floor:
                    break
        return value, choice

    state = (1,) * n
    value = best(state)[0]
    moves = []
    while True:
        v, choice = best(state)
        if choice is None:
            break
        moves.append(choice)
        nxt = list(state)
        nxt[choice[1]] += nxt[choice[0]]
        nxt[choice[0]] = 0
        state = tuple(nxt)
    best.cache_clear()
    return value, moves


def exact_at(graph, cap=DEFAULT_CAP, budget=None):
    """``(a_t, protocol)`` for a graph with at most ``cap`` vertices.

    ``budget`` bounds the number of search nodes expanded; exceeding it
    raises :class:`BudgetExhausted`.
    """
    n = graph.n
    if n > cap:
        raise CapExceeded(f"{n} vertices exceed the cap of {cap}")
    adj = adjacency_lists(graph)
    total = 0
    moves = []
    spent = 0
    for comp in components(adj):
        index = {v: i for i, v in enumerate(comp)}
        sub = [[index[u] for u in adj[v]] for v in comp]
        left = None if budget is None else budget - spent
        value, mv = _solve_component(sub, left)
        total += value
        moves.extend(Move(comp[a], comp[b]) for a, b in mv)
        spent += len(mv) + 1
    proto = Protocol(moves)
    proto.declared_residual = replay(graph, proto).residual()
    return total, proto


def naive_at(graph):
    """Reference value by exhaustive recursion over move sequences."""
    adj = adjacency_lists(graph)

    def go(w):
        best = sum(1 for x in w if x)
        for u in range(len(w)):
            if not w[u]:
                continue
            for v in adj[u]:
                if w[v] >= w[u]:
                    nxt = list(w)
                    nxt[v] += nxt[u]
                    nxt[u] = 0
                    best = min(best, go(nxt))
        return best

    return go([1] * graph.n)


def greedy_descent(graph):
    """Lightest positive vertex moves onto its heaviest positive neighbour, until stuck."""
    adj = adjacency_lists(graph)
    w = [1] * graph.n
    moves = []
    while True:
        pick = None
        for u in range(graph.n):
            if not w[u]:
                continue
            nb = [v for v in adj[u] if w[v] >= w[u]]
            if nb:
                v = max(nb, key=lambda x: (w[x], -x))
                if pick is None or w[u] < w[pick[0]]:
                    pick = (u, v)
        if pick is None:
            break
        u, v = pick
        w[v] += w[u]
        w[u] = 0
        moves.append(Move(u, v))
    return Protocol(moves, frozenset(i for i, x in enumerate(w) if x))


def exact_at_bounded(graph, budget, cap=None):
    """Anytime bounds ``(lower, upper)``; equal when the search finishes in ``budget`` nodes."""
    from .certificates import lower_bounds

    lower = max((c.value for c in lower_bounds(graph).values()
                 if c.applicable and not c.conditional), default=0)
    proto = greedy_descent(graph)
    upper = len(proto.declared_residual)
    if budget > 0 and graph.n <= (cap if cap is not None else math.inf):
        try:
            value, _ = exact_at(graph, cap=graph.n, budget=budget)
            return value, value
        except BudgetExhausted:
            pass
    return lower, upper


def edge_list_graph(text):
    """Parse ``u v`` lines (0-indexed) into an :class:`AdjacencyGraph`."""
    edges = []
    n = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        toks = line.split()
        if not toks or toks[0].startswith("#"):
            continue
        if len(toks) != 2:
            raise ValueError(f"line {lineno}: expected 'u v'")
        u, v = int(toks[0]), int(toks[1])
        if u < 0 or v < 0:
            raise ValueError(f"line {lineno}: negative vertex id")
        edges.append((u, v))
        n = max(n, u + 1, v + 1)
    return AdjacencyGraph(n, edges)
