import itertools
import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parkdetect.clustering import ClusterSet, Method
from parkdetect.margins import (
    MarginError,
    count_free,
    detect_gaps,
    edge_gaps,
    fit_pairwise_boundaries,
    primal_objective,
    solve_svm,
)


def make_clusters(groups, axis=0.0):
    pts = np.vstack([np.asarray(g, dtype=float).reshape(-1, 2) for g in groups])
    labels = np.concatenate([np.full(len(np.asarray(g).reshape(-1, 2)), k) for k, g in enumerate(groups)])
    cents = np.array([np.asarray(g, dtype=float).reshape(-1, 2).mean(axis=0) for g in groups])
    return ClusterSet(pts, labels, cents, Method.MSC, axis)


def qp_oracle(X, y, C):
    w, b = cp.Variable(X.shape[1]), cp.Variable()
    xi = cp.Variable(len(y))
    prob = cp.Problem(
        cp.Minimize(0.5 * cp.sum_squares(w) + C * cp.sum(xi)),
        [cp.multiply(y, X @ w + b) >= 1 - xi, xi >= 0],
    )
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return prob.value


def brute_force_hard_margin(A, B):
    """Widest separating slab over normals fixed by support pairs."""
    normals = [b - a for a in A for b in B]
    for P in (A, B):
        for p, q in itertools.combinations(P, 2):
            d = q - p
            normals += [np.array([-d[1], d[0]]), np.array([d[1], -d[0]])]
    best = -np.inf
    for n in normals:
        norm = np.hypot(*n)
        if norm < 1e-12:
            continue
        n = n / norm
        best = max(best, float(np.min(B @ n) - np.max(A @ n)))
    return best


def random_pair(rng, n_max=20, sep=None):
    na, nb = rng.integers(1, n_max + 1, 2)
    sep = rng.uniform(0.0, 6.0) if sep is None else sep
    A = rng.normal([0.0, 0.0], rng.uniform(0.2, 1.5), (na, 2))
    B = rng.normal([sep, rng.uniform(-1, 1)], rng.uniform(0.2, 1.5), (nb, 2))
    return A, B


# -- solver ----------------------------------------------------------------------


def test_one_dimensional_analytic_case():
    cs = make_clusters([[[0, 0], [1, 0]], [[5, 0], [6, 0]]])
    (bd,) = fit_pairwise_boundaries(cs)
    assert bd.w == pytest.approx([1.0, 0.0], abs=1e-12)
    assert -bd.b / bd.w[0] == pytest.approx(3.0, abs=1e-12)
    assert bd.margin_width == pytest.approx(4.0, abs=1e-12)
    assert bd.slack_total == 0.0


def test_overlap_gives_slack_and_matches_oracle():
    A = np.array([[0.0, 0.0], [1.0, 0.5], [0.5, -0.5], [4.2, 0.1]])
    B = np.array([[4.0, 0.0], [5.0, 0.3], [4.5, -0.4], [5.5, 0.0]])
    (bd,) = fit_pairwise_boundaries(make_clusters([A, B]))
    assert bd.slack_total > 0 and math.isfinite(bd.margin_width)
    X, y = np.vstack([A, B]), np.r_[-np.ones(4), np.ones(4)]
    assert bd.objective == pytest.approx(qp_oracle(X, y, 10.0), rel=1e-6)


@settings(max_examples=60)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.1, 1.0, 10.0, 100.0]))
def test_objective_matches_qp_oracle(seed, C):
    A, B = random_pair(np.random.default_rng(seed))
    X, y = np.vstack([A, B]), np.r_[-np.ones(len(A)), np.ones(len(B))]
    sol = solve_svm(X, y, C)
    assert primal_objective(X, y, sol.w, sol.b, C) == pytest.approx(qp_oracle(X, y, C), rel=1e-6)
    assert sol.gap <= 1e-8 * max(1.0, sol.primal) + 1e-12


@settings(max_examples=60)
@given(st.integers(0, 2**31 - 1))
def test_separable_margin_matches_support_pair_search(seed):
    rng = np.random.default_rng(seed)
    A, B = random_pair(rng, n_max=8, sep=8.0)
    A = A * 0.5
    B = (B - [8, 0]) * 0.5 + [8, 0]
    wide = brute_force_hard_margin(A, B)
    if wide <= 0.5:
        return
    (bd,) = fit_pairwise_boundaries(make_clusters([A, B]), c_soft=1e6)
    assert bd.slack_total == pytest.approx(0.0, abs=1e-9)
    assert bd.margin_width == pytest.approx(wide, rel=1e-6)


def test_solver_input_errors():
    X = np.array([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(MarginError):
        solve_svm(X, [1.0, 1.0])
    with pytest.raises(MarginError):
        solve_svm(X, [-1.0, 1.0], C=0.0)


# -- pairwise fitting ------------------------------------------------------------


def test_four_clusters_three_boundaries():
    rng = np.random.default_rng(1)
    groups = [rng.normal([6.0 * k, 0.0], 0.4, (15, 2)) for k in range(4)]
    bds = fit_pairwise_boundaries(make_clusters(groups))
    assert [(b.left_cluster, b.right_cluster) for b in bds] == [(0, 1), (1, 2), (2, 3)]
    for b in bds:
        assert np.hypot(*b.w) == pytest.approx(1.0)
        assert b.margin_width >= 0


@given(st.integers(0, 6), st.integers(0, 1000))
def test_boundary_count_is_clusters_minus_one(k, seed):
    rng = np.random.default_rng(seed)
    groups = [rng.normal([5.0 * i, 0.0], 0.5, (int(rng.integers(1, 6)), 2)) for i in range(k)]
    cs = make_clusters(groups) if k else ClusterSet(np.empty((0, 2)), np.empty(0), np.empty((0, 2)), Method.MSC)
    assert len(fit_pairwise_boundaries(cs)) == max(0, k - 1)


def test_empty_cluster_in_pair_rejected():
    cs = make_clusters([[[0, 0]], [[5, 0]]])
    cs.labels[:] = 0
    with pytest.raises(MarginError):
        fit_pairwise_boundaries(cs)


def test_bad_penalty_rejected():
    with pytest.raises(MarginError):
        fit_pairwise_boundaries(make_clusters([[[0, 0]], [[5, 0]]]), c_soft=-1.0)


@settings(max_examples=40)
@given(st.integers(0, 2**31 - 1), st.floats(-math.pi, math.pi), st.floats(-500, 500), st.floats(-500, 500))
def test_boundaries_and_gaps_move_with_the_data(seed, th, dx, dy):
    rng = np.random.default_rng(seed)
    groups = [rng.normal([5.0 * i, 0.0], 0.4, (10, 2)) for i in range(3)]
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    moved = [g @ R.T + [dx, dy] for g in groups]
    a, b = make_clusters(groups, 0.0), make_clusters(moved, th)
    ba, bb = fit_pairwise_boundaries(a), fit_pairwise_boundaries(b)
    for p, q in zip(ba, bb):
        assert q.w == pytest.approx(R @ p.w, abs=1e-6)
        assert q.margin_width == pytest.approx(p.margin_width, rel=1e-6)
    ga, gb = detect_gaps(ba, a, 4.5), detect_gaps(bb, b, 4.5)
    for p, q in zip(ga, gb):
        assert q.gap_distance == pytest.approx(p.gap_distance, rel=1e-6)
        assert q.free_spaces == p.free_spaces


# -- gaps ------------------------------------------------------------------------


@pytest.mark.parametrize("gap, expected", [(0.5, 0), (5.0, 1), (9.5, 2), (4.5, 1), (4.49, 0)])
def test_count_free_examples(gap, expected):
    assert count_free(gap, 4.5, 1.0) == expected


def test_threshold_gates_count():
    assert count_free(5.0, 4.5, 1.2) == 0
    assert count_free(4.0, 2.5, 0.5) == 1


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0.5, 7.0), st.floats(0.1, 3.0))
def test_count_free_monotone(g1, g2, ref, ratio):
    lo, hi = sorted((g1, g2))
    assert 0 <= count_free(lo, ref, ratio) <= count_free(hi, ref, ratio)


def test_gap_is_band_between_margin_hyperplanes():
    cs = make_clusters([[[0, 0], [1, 0]], [[5, 0], [6, 0]]])
    (g,) = detect_gaps(fit_pairwise_boundaries(cs), cs, 2.5)
    assert g.gap_distance == pytest.approx(4.0)
    assert (g.lo, g.hi) == pytest.approx((1.0, 5.0))
    assert g.free_spaces == 1


def test_gap_measured_along_track_for_tilted_boundary():
    # the slab normal is tilted 45 deg from the track, so the track crosses it at sqrt(2) x width
    A = np.array([[0.0, 0.0], [-1.0, 1.0]])
    B = np.array([[2.0, 0.0], [1.0, 1.0]])
    cs = make_clusters([A, B])
    (bd,) = fit_pairwise_boundaries(cs, c_soft=1e6)
    (g,) = detect_gaps([bd], cs, 1.0)
    cos = abs(bd.w[0])
    assert g.gap_distance == pytest.approx(bd.margin_width / cos)


def test_gap_argument_errors():
    cs = make_clusters([[[0, 0]], [[5, 0]]])
    bds = fit_pairwise_boundaries(cs)
    with pytest.raises(MarginError):
        detect_gaps(bds, cs, 0.0)
    with pytest.raises(MarginError):
        detect_gaps(bds, cs, 2.5, threshold_ratio=0.0)


def test_edge_gaps():
    cs = make_clusters([[[3, 0], [4, 0]], [[10, 0], [11, 0]]])
    gaps = edge_gaps(cs, 0.0, 20.0, 2.5)
    assert [g.pair for g in gaps] == [(-1, 0), (1, 2)]
    assert [g.gap_distance for g in gaps] == pytest.approx([3.0, 9.0])
    assert [g.free_spaces for g in gaps] == [1, 3]
    empty = ClusterSet(np.empty((0, 2)), np.empty(0), np.empty((0, 2)), Method.MSC)
    (whole,) = edge_gaps(empty, 0.0, 10.0, 2.5)
    assert whole.pair == (-1, -1) and whole.free_spaces == 4
    assert edge_gaps(cs, 5.0, 5.0, 2.5) == []
