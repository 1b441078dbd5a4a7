import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acquire_rgg import tessellation as tess
from acquire_rgg.engine import Move, WeightState, apply_move
from acquire_rgg.rgg import from_points, sample_fixed_n

from conftest import audit


def one_square_plan(r, c=0.25, eps=0.01, rules="relaxed", strip_rows=1):
    side = c * r * math.log2(r)
    return tess.plan(side * side, r, c, eps, side=side, strip_rows=strip_rows, rules=rules)


def synthetic(p, seed, per_small=None):
    per = round(p.expected_small) if per_small is None else per_small
    return from_points(tess.stratified_points(p, per, seed), p.r, side=p.side)


# -- plan ------------------------------------------------------------------

def test_plan_hand_example():
    p = tess.plan(10**6, 4, c=0.5)
    assert (p.k, p.ell) == (250, 20)
    assert p.x == pytest.approx(0.5, rel=1e-12)
    assert p.y == pytest.approx(0.05, rel=1e-12)
    assert p.ell % 20 == 0
    assert p.small_side == pytest.approx(p.y * p.r, rel=1e-12)
    assert p.large_side == pytest.approx(p.x * p.r * p.lg_r, rel=1e-12)
    assert p.large_side == pytest.approx(p.ell * p.y * p.r, rel=1e-12)


def test_plan_boundary_single_square():
    p = tess.plan(16, 4, c=0.5)
    assert p.k == 1 and p.x == 0.5


def test_plan_paper_constants_flag_infeasible():
    p = tess.plan(10**13, 2**20, c=1e-4, eps=1e-2)
    assert not p.feasible
    assert p.expected_small == pytest.approx((p.y * p.r) ** 2)
    assert p.z_minus < p.z_plus


@given(st.floats(2, 1000), st.floats(0.01, 0.99), st.floats(1.0, 50.0))
def test_plan_x_window(r, c, stretch):
    unit = c * r * math.log2(r)
    side = unit * stretch
    p = tess.plan(side * side, r, c, side=side)
    assert c / 2 <= p.x * (1 + 1e-12) and p.x <= c * (1 + 1e-12)
    assert p.ell % 20 == 0


@pytest.mark.parametrize("args, err", [
    ((100, 1.5), tess.RadiusTooSmall),
    ((1, 64, 0.5), tess.PlaneTooSmall),
    ((10**6, 4, 0.0), tess.BadConstant),
    ((10**6, 4, 0.5, 1.0), tess.BadConstant),
])
def test_plan_named_errors(args, err):
    with pytest.raises(err):
        tess.plan(*args)


# -- classify ---------------------------------------------------------------

def test_classify_exact_counts_good():
    p = one_square_plan(64)
    g = synthetic(p, 0)
    assert tess.classify(p, g).square_good.tolist() == [True]


def test_classify_empty_small_square_bad():
    p = one_square_plan(64)
    assert p.expected_small * (1 - p.eps) > 0
    pts = tess.stratified_points(p, round(p.expected_small), 0)
    s = p.small_side
    keep = ~((pts[:, 0] < s) & (pts[:, 1] < s))
    q = tess.classify(p, from_points(pts[keep], p.r, side=p.side))
    assert not q.square_good[0]
    assert "small square (0, 0) holds 0" in q.reasons[0]


def test_classify_shared_y_bad():
    p = one_square_plan(64)
    pts = tess.stratified_points(p, round(p.expected_small), 1)
    pts[5, 1] = pts[6, 1]
    q = tess.classify(p, from_points(pts, p.r, side=p.side))
    assert not q.square_good[0] and q.reasons[0].startswith("(b)")


def test_classify_diagonal_and_centre_line():
    # a wide band so moving one point never upsets the counts
    p = one_square_plan(64, eps=0.2)
    pts = tess.stratified_points(p, round(p.expected_small), 2)
    h = p.large_side / 2
    on_diag = pts.copy()
    on_diag[0] = (h + 1.0, h + 1.0)
    assert tess.classify(p, from_points(on_diag, p.r, side=p.side)).reasons[0].startswith("(a)")
    ray = pts.copy()
    ray[0] = (h + 3.0, h + 1.0)
    ray[1] = (h + 6.0, h + 2.0)
    assert tess.classify(p, from_points(ray, p.r, side=p.side)).reasons[0].startswith("(c)")


def test_classify_plan_mismatch():
    p = one_square_plan(64)
    with pytest.raises(tess.PlanError):
        tess.classify(p, sample_fixed_n(100, 64, 0))


# -- triangle embedding ------------------------------------------------------

def test_single_vertex_triangle():
    res = tess.embed_points([7], np.array([0.1]), np.array([0.5]), np.zeros(8), np.zeros(8),
                            10.0, 1.0, 10, 4.0)
    assert res.root == 7 and res.protocol.moves == []


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_good_square_embeds(seed):
    p = one_square_plan(64)
    g = synthetic(p, seed)
    p = tess.classify(p, g)
    embs = []
    for tri in tess.TRIANGLES:
        e = tess.embed_triangle(p, 0, tri, g)
        assert not isinstance(e, tess.EmbedError), str(e)
        s = audit(g, e.protocol)
        assert s.residual() & set(e.assignment.values()) == {e.root}
        assert s.weights[e.root] == e.z
        assert sorted(e.assignment.values()) == sorted(set(e.assignment.values()))
        assert e.max_edge <= p.r
        for _, q, wl, _, _, _ in e.splits:
            assert min(wl, q - wl) >= q / 4
        for _, above, total in e.packs:
            assert total >= above / 2
        embs.append(e)
    sq = tess.merge_square(p, 0, embs, g)
    s = audit(g, sq.protocol)
    assert len(s.residual()) == 1 and s.weights[sq.roots[0]] == g.n


def test_error2_when_first_strip_is_emptied():
    p = one_square_plan(64, rules="strict", strip_rows=1)
    pts = tess.stratified_points(p, round(p.expected_small), 3)
    h = p.large_side / 2
    u, v = pts[:, 0] - h, pts[:, 1] - h
    depth = -v
    bottom = np.abs(v) > np.abs(u)
    bottom &= v < 0
    near = bottom & (depth < p.strip)
    root = np.flatnonzero(near)[np.argmin((u * u + v * v)[near])]
    drop = near.copy()
    drop[root] = False
    g = from_points(pts[~drop], p.r, side=p.side)
    q = tess.classify(p, g)
    e = tess.embed_triangle(q, 0, "bottom", g)
    assert isinstance(e, tess.EmbedError) and e.kind == tess.ERROR2
    assert e.level == 1
    # recount: nothing but the root lies above the first auxiliary line
    keep = pts[~drop]
    ku, kv = keep[:, 0] - h, keep[:, 1] - h
    kb = (np.abs(kv) > np.abs(ku)) & (kv < 0)
    assert np.count_nonzero(kb & (-kv < p.strip)) == 1
    assert e.measurement == 0


def test_error1_reported_under_strict_rules():
    p = one_square_plan(32, rules="strict", strip_rows=10)
    g = synthetic(p, 0)
    e = tess.embed_triangle(tess.classify(p, g), 0, "bottom", g)
    assert isinstance(e, tess.EmbedError) and e.kind == tess.ERROR1
    assert not (p.r / 20 <= e.measurement <= p.r / 3)


def test_error3_on_sparse_triangle():
    # a triangle whose points are far apart cannot host short tree edges
    X = np.array([0.0, -40.0, 40.0])
    T = np.array([1.0, 60.0, 60.0])
    gx, gy = X + 100, -T + 100
    e = tess.embed_points(np.arange(3), X, T, gx, gy, 100.0, 200.0, 1, 10.0, rules="relaxed")
    assert isinstance(e, tess.EmbedError) and e.kind == tess.ERROR3
    assert e.measurement > 10.0


# -- merging ----------------------------------------------------------------

def test_merge_order_3_5_9_20():
    g = from_points([(0, 0), (0.1, 0), (0, 0.1), (0.1, 0.1)], 1.0, side=1.0)
    moves, final = tess.merge_roots(g, [0, 1, 2, 3], [3, 5, 9, 20])
    assert moves == [Move(0, 1), Move(1, 2), Move(2, 3)] and final == [3]
    s = WeightState(g, [3, 5, 9, 20])
    for m in moves:
        apply_move(s, m)
    assert s.weights == [0, 0, 0, 37]


def test_merge_equal_and_three_roots():
    g = from_points([(0, 0), (0.1, 0), (0, 0.1), (0.1, 0.1)], 1.0, side=1.0)
    moves, final = tess.merge_roots(g, [0, 1, 2, 3], [4, 4, 4, 4])
    s = WeightState(g, [4, 4, 4, 4])
    for m in moves:
        apply_move(s, m)
    assert s.weights[final[0]] == 16
    moves, final = tess.merge_roots(g, [0, 2, 3], [2, 7, 1])
    assert len(moves) == 2 and len(final) == 1


def test_merge_needs_adjacent_roots():
    g = from_points([(0, 0), (5, 0)], 1.0, side=5.0)
    with pytest.raises(tess.MergeError):
        tess.merge_roots(g, [0, 1], [1, 1])


# -- fallback ----------------------------------------------------------------

def test_fallback_cell_count_r64():
    p = one_square_plan(64)
    assert tess.fallback_residual_bound(p) == math.ceil(p.x * p.lg_r * math.sqrt(2)) ** 2 == 9
    g = synthetic(p, 4)
    res = tess.fallback_bad_square(tess.classify(p, g), 0, g)
    s = audit(g, res.protocol)
    assert len(s.residual()) == len(res.roots) <= 9


def test_fallback_empty_square():
    p = one_square_plan(64)
    g = from_points(np.zeros((0, 2)), 64, side=p.side)
    res = tess.fallback_bad_square(tess.classify(p, g), 0, g)
    assert res.protocol.moves == [] and res.roots == []


def test_fallback_five_point_cell():
    g = from_points([(1, 1), (1.1, 1), (1, 1.2), (1.3, 1.1), (1.2, 1.3)], 4.0, side=2.0)
    p = tess.plan(4, 4.0, 0.25, side=2.0)
    res = tess.fallback_bad_square(tess.classify(p, g), 0, g)
    assert len(res.protocol) == 4 and len(res.roots) == 1
    s = audit(g, res.protocol)
    assert s.weights[res.roots[0]] == 5


@given(st.floats(2.0, 600.0), st.floats(0.1, 40.0))
def test_fallback_cells_are_cliques(r, stretch):
    m = tess.fallback_cells(stretch * r, r)
    assert 2 * (stretch * r / m) ** 2 <= r * r


# -- whole instances --------------------------------------------------------

def test_full_protocol_empty():
    p = tess.plan(10**4, 4, 0.25)
    g = from_points(np.zeros((0, 2)), 4, side=100.0)
    res = tess.full_protocol(g, p)
    assert res.residual_count == 0 and len(res.protocol) == 0


def test_full_protocol_all_good():
    base = one_square_plan(32)
    side = base.side * 2
    p = tess.plan(side * side, 32, 0.25, side=side, strip_rows=1, rules="relaxed")
    assert p.k == 2
    g = from_points(tess.stratified_points(p, round(p.expected_small), 5), 32, side=side)
    res = tess.full_protocol(g, tess.classify(p, g))
    assert res.good_squares == 4 and res.embedded_squares == 4
    assert res.residual_count == 4
    assert len(audit(g, res.protocol).residual()) == 4


@pytest.mark.parametrize("seed", [1, 2])
def test_full_protocol_mixed(seed):
    g = sample_fixed_n(40_000, 8, seed)
    p = tess.classify(tess.plan(g.n, 8, 0.25, side=g.side, strip_rows=1, rules="relaxed"), g)
    res = tess.full_protocol(g, p, attempt_bad=True)
    s = audit(g, res.protocol)
    assert len(s.residual()) == res.residual_count
    assert s.residual() == set(res.residual)
    fb = tess.fallback_only(g, p)
    assert len(audit(g, fb.protocol).residual()) == fb.residual_count
    assert fb.residual_count <= p.num_squares * tess.fallback_residual_bound(p)


@settings(max_examples=25)
@given(st.integers(0, 2**32), st.sampled_from([2.0, 3.0, 5.0, 8.0]))
def test_grid_protocol_sound(seed, r):
    g = sample_fixed_n(3000, r, seed)
    proto, resid = tess.grid_protocol(g)
    s = audit(g, proto)
    assert s.residual() == set(resid)
    assert not g.has_edge_among(resid)


def test_grid_protocol_empty():
    g = from_points(np.zeros((0, 2)), 2.0, side=0.0)
    assert tess.grid_protocol(g)[1] == []


def test_triangles_partition_square():
    u = np.array([0.0, 0.0, -1.0, 1.0, 1.0])
    v = np.array([-1.0, 1.0, 0.0, 0.0, 1.0])
    assert tess.triangle_of(u, v).tolist() == [0, 1, 2, 3, -1]
    for t in range(4):
        X, T = tess.to_frame(u[t:t + 1], v[t:t + 1], t)
        assert T[0] == 1.0 and X[0] == 0.0
