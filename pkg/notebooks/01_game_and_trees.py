# %% [markdown]
# # The acquisition game on small graphs
#
# Every vertex starts with weight 1.  A move sends all the weight of `u` to a
# neighbour `v`, allowed only when `v` already holds at least as much.  The
# residual is the set of vertices still holding weight once no move is left.
#
# Each move empties exactly one vertex, so the smallest residual reachable by
# any sequence of moves is also the smallest residual of a maximal sequence.
# The solver below relies on that: it searches for the longest legal sequence.

# %%
from acquire_rgg.engine import AdjacencyGraph, Move, Protocol, check_weight_caps, replay
from acquire_rgg.exact import exact_at, naive_at
from acquire_rgg.trees import build_full, extract_protocol, trim

c8 = AdjacencyGraph.cycle(8)
moves = [Move(0, 1), Move(3, 2), Move(4, 5), Move(7, 6), Move(1, 2), Move(5, 6)]
state = replay(c8, Protocol(moves), track_provenance=True)
print("weights:", state.weights)
print("residual:", sorted(state.residual()))

# %% [markdown]
# No vertex of degree `d` can ever collect more than `2**d`, and every unit it
# holds travelled at most `lg w` hops.  The engine tracks provenance so these
# caps can be audited on any replay.

# %%
rep = check_weight_caps(state, exact_distances=True)
print("violations:", rep.violations, "max weight:", rep.max_weight, "max hops:", rep.max_hops)

# %% [markdown]
# ## Exact values
#
# Cycles of length `4k` leave `k` vertices.  The memoised search agrees with a
# plain recursive reference on every graph small enough for the latter.

# %%
for k in (1, 2, 3):
    g = AdjacencyGraph.cycle(4 * k)
    value, proto = exact_at(g, cap=12)
    print(f"C{4 * k}: a_t = {value}, witness has {len(proto)} moves")

for name, g in [("P4", AdjacencyGraph.path(4)), ("K1,3", AdjacencyGraph.star(3)),
                ("K5", AdjacencyGraph.complete(5)), ("empty 5", AdjacencyGraph.empty(5))]:
    print(f"{name:8s} exact {exact_at(g)[0]}  naive {naive_at(g)}")

# %% [markdown]
# ## Funnel trees
#
# The root of `T_i` has children rooted at copies of `T_0 .. T_{i-1}`.  Feeding
# the children into the root smallest first is always legal, so the whole tree
# collapses onto its root.  Level `l` holds `binom(i, l)` nodes.

# %%
t5 = build_full(5)
print("T_5 level counts:", t5.level_counts())

t = trim(3, 5)
print(t.dump())
s = replay(t.as_graph(), extract_protocol(t))
print("root weight after funnelling:", s.weights[t.root])

# %% [markdown]
# Trimming keeps the funnel property for every size, which is what lets the
# upper-bound construction use a tree of exactly as many nodes as there are
# points in a triangle.

# %%
sizes_ok = all(
    replay(trim(8, n).as_graph(), extract_protocol(trim(8, n))).residual() == {0}
    for n in range(1, 257)
)
print("all 256 trimmed trees of depth 8 funnel to the root:", sizes_ok)
