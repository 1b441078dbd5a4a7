"""
Rooted trees that can pass all of their weight to the root.

``build_full(i)`` is the tree whose root has children rooted at copies of
``build_full(0) .. build_full(i-1)``; it has ``2**i`` nodes and depth ``i``.
``trim(d, n)`` cuts ``build_full(d)`` down to exactly ``n`` nodes while
keeping the funnelling property, and ``extract_protocol`` emits the moves.

Nodes live in an index arena: node 0 is the root and ids never change, so
other modules can map nodes to graph vertices.
"""
from __future__ import annotations

from math import comb

from .engine import AdjacencyGraph, Move, Protocol

MAX_DEPTH = 30


class TreeSizeError(ValueError):
    pass


class TrimmedTree:
    """Arena-backed rooted tree; children sorted by non-decreasing subtree size."""

    def __init__(self, d):
        self.d = d
        self.parent = []
        self.children = []
        self.subtree_size = []
        self.level = []

    def _add(self, parent):
        v = len(self.parent)
        self.parent.append(parent)
        self.children.append([])
        self.subtree_size.append(1)
        self.level.append(0 if parent < 0 else self.level[parent] + 1)
        if parent >= 0:
            self.children[parent].append(v)
        return v

    def _finish(self):
        # sizes bottom-up: children always have larger ids than parents
        for v in range(len(self.parent) - 1, 0, -1):
            self.subtree_size[self.parent[v]] += self.subtree_size[v]
        for kids in self.children:
            kids.sort(key=lambda c: (self.subtree_size[c], c))
        return self

    @property
    def size(self):
        return len(self.parent)

    @property
    def root(self):
        return 0

    @property
    def depth(self):
        return max(self.level, default=0)

    def level_counts(self):
        counts = [0] * (self.depth + 1)
        for lv in self.level:
            counts[lv] += 1
        return counts

    def as_graph(self):
        return AdjacencyGraph(self.size, [(p, v) for v, p in enumerate(self.parent) if p >= 0])

    def descendants(self, v):
        """Nodes of the subtree at ``v`` in breadth-first order."""
        out = [v]
        k = 0
        while k < len(out):
            out.extend(self.children[out[k]])
            k += 1
        return out

    def dump(self):
        lines = []
        stack = [self.root]
        while stack:
            v = stack.pop()
            lines.append("  " * self.level[v] + f"{v} (size {self.subtree_size[v]})")
            stack.extend(reversed(self.children[v]))
        return "\n".join(lines)

    def __repr__(self):
        return f"TrimmedTree(d={self.d}, size={self.size})"


def _grow_full(t, parent, i):
    v = t._add(parent)
    for j in range(i):
        _grow_full(t, v, j)
    return v


def _grow_trimmed(t, parent, d, n):
    v = t._add(parent)
    if n == 1:
        return v
    k0 = n.bit_length() - 2  # floor(lg n) - 1
    for j in range(k0 + 1):
        _grow_full(t, v, j)
    rest = n - (1 << (k0 + 1))
    if rest == 1:
        t._add(v)
    elif rest > 1:
        _grow_trimmed(t, v, k0 + 1, rest)
    return v


def build_full(i):
    if not 0 <= i <= MAX_DEPTH:
        raise TreeSizeError(f"depth {i} outside 0..{MAX_DEPTH}")
    t = TrimmedTree(i)
    _grow_full(t, -1, i)
    return t._finish()


def trim(d, n):
    """Subtree of ``build_full(d)`` with exactly ``n`` nodes that funnels to its root."""
    if not 0 <= d <= MAX_DEPTH:
        raise TreeSizeError(f"depth {d} outside 0..{MAX_DEPTH}")
    if not 1 <= n <= (1 << d):
        raise TreeSizeError(f"n={n} outside 1..2**{d}")
    t = TrimmedTree(d)
    _grow_trimmed(t, -1, d, n)
    return t._finish()


def depth_for(z):
    """Smallest ``d`` with ``2**d >= z``."""
    return max(0, (z - 1).bit_length())


def binomial_caps(d):
    return [comb(d, lv) for lv in range(d + 1)]


def extract_protocol(t, relabel=None):
    """Moves funnelling every node's unit weight to the root.

    Children are emptied smallest subtree first; each child first collects its
    own subtree.  ``relabel`` maps node ids to graph vertex ids.
    """
    moves = []
    # post-order with explicit stack: (node, next child index)
    stack = [(t.root, 0)]
    while stack:
        v, k = stack.pop()
        kids = t.children[v]
        if k < len(kids):
            stack.append((v, k + 1))
            stack.append((kids[k], 0))
            continue
        held = 1
        for c in kids:
            s = t.subtree_size[c]
            if s > held:
                raise AssertionError(f"child order breaks legality at node {v}")
            held += s
        if v != t.root:
            moves.append((v, t.parent[v]))
    if relabel is not None:
        return Protocol([Move(relabel[a], relabel[b]) for a, b in moves])
    return Protocol([Move(a, b) for a, b in moves])
