"""Step-two classification: maximum-margin boundaries between neighbouring
clusters and the free-space gaps they imply.

Each adjacent pair of clusters (consecutive in along-track order) gets its
own two-class linear soft-margin SVM, so n clusters need n - 1 fits.  The
dual is solved with SMO over a growing working set of points; points
outside the set keep a zero multiplier, which is checked against the KKT
conditions on the full pair before accepting the solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clustering import ClusterSet, axis_frame

DEFAULT_C = 10.0
GAP_TOL = 1e-8


class MarginError(ValueError):
    pass


@dataclass(frozen=True)
class SvmSolution:
    w: np.ndarray
    b: float
    alpha: np.ndarray
    primal: float
    dual: float
    slack: np.ndarray

    @property
    def gap(self) -> float:
        return self.primal - self.dual


def primal_objective(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, C: float) -> float:
    hinge = np.maximum(0.0, 1.0 - y * (X @ w + b))
    return 0.5 * float(w @ w) + C * float(hinge.sum())


def best_offset(s: np.ndarray, y: np.ndarray, C: float) -> float:
    """Exact minimizer over b of sum C*max(0, 1 - y*(s + b)).

    The loss is convex and piecewise linear with kinks at b = y - s; when the
    minimum is a flat interval its midpoint is returned.
    """
    kinks = np.unique(y - s)
    # slope just right of each kink: -(#active pos) + (#active neg)
    def slope(b):
        m = y * (s + b) < 1.0
        return C * (float(np.sum(y[m] < 0)) - float(np.sum(y[m] > 0)))

    lo, hi = 0, len(kinks) - 1
    # first kink whose right slope is >= 0
    while lo < hi:
        mid = (lo + hi) // 2
        if slope(kinks[mid] + 1e-12 * max(1.0, abs(kinks[mid]))) >= 0:
            hi = mid
        else:
            lo = mid + 1
    b0 = kinks[lo]
    if lo + 1 < len(kinks) and slope(b0 + 1e-12 * max(1.0, abs(b0))) == 0:
        return 0.5 * (b0 + kinks[lo + 1])
    return float(b0)


def _smo(K: np.ndarray, y: np.ndarray, C: float, alpha: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """SMO with second-order working-set selection on a precomputed kernel."""
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    G = Q @ alpha - 1.0
    diag = np.diag(K).copy()
    for _ in range(max_iter):
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        v = -y * G
        vu = np.where(up, v, -np.inf)
        i = int(np.argmax(vu))
        m_up = vu[i]
        m_low = np.min(np.where(low, v, np.inf))
        if m_up - m_low < tol:
            break
        bdiff = m_up - v
        cand = low & (bdiff > 0)
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, 1e-12)
        score = np.where(cand, -(bdiff**2) / a, np.inf)
        j = int(np.argmin(score))

        # analytic two-variable update (LIBSVM form)
        yi, yj = y[i], y[j]
        ai, aj = alpha[i], alpha[j]
        quad = max(diag[i] + diag[j] - 2.0 * K[i, j], 1e-12)
        if yi != yj:
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            else:
                if ai < 0:
                    ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            else:
                if aj > C:
                    aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            s = ai + aj
            ai -= delta
            aj += delta
            if s > C:
                if ai > C:
                    ai, aj = C, s - C
            else:
                if aj < 0:
                    aj, ai = 0.0, s
            if s > C:
                if aj > C:
                    aj, ai = C, s - C
            else:
                if ai < 0:
                    ai, aj = 0.0, s
        dai, daj = ai - alpha[i], aj - alpha[j]
        alpha[i], alpha[j] = ai, aj
        G += Q[:, i] * dai + Q[:, j] * daj
    return alpha


def solve_svm(X, y, C: float = DEFAULT_C, tol: float = GAP_TOL, initial: int = 16) -> SvmSolution:
    """Linear soft-margin SVM with unregularized bias.

    Minimizes 0.5*|w|^2 + C*sum(max(0, 1 - y_i (w.x_i + b))).  The returned
    solution has a duality gap below ``tol`` (relative to max(1, primal)).
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    if C <= 0:
        raise MarginError("C must be positive")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise MarginError("both classes need at least one point")
    n = len(y)
    center = X.mean(axis=0)
    Xc = X - center

    # seed the working set with the points of each class nearest the other
    pos, neg = y > 0, y < 0
    d = Xc[pos].mean(axis=0) - Xc[neg].mean(axis=0)
    proj = Xc @ d
    ws = set()
    for cls, sign in ((pos, 1.0), (neg, -1.0)):
        idx = np.flatnonzero(cls)
        ws.update(idx[np.argsort(sign * proj[idx], kind="stable")[:initial]].tolist())

    alpha_full = np.zeros(n)
    smo_tol = 1e-9
    for _ in range(200):
        W = np.array(sorted(ws))
        K = Xc[W] @ Xc[W].T
        a = _smo(K, y[W], C, alpha_full[W].copy(), smo_tol, max_iter=100_000)
        alpha_full[:] = 0.0
        alpha_full[W] = a
        w = Xc.T @ (alpha_full * y)
        s = Xc @ w
        b = best_offset(s, y, C)
        margin = y * (s + b)
        outside = np.ones(n, dtype=bool)
        outside[W] = False
        viol = np.flatnonzero(outside & (margin < 1.0 - 1e-10))
        primal = primal_objective(Xc, y, w, b, C)
        dual = float(alpha_full.sum() - 0.5 * w @ w)
        if len(viol) == 0:
            if primal - dual <= tol * max(1.0, abs(primal)):
                break
            smo_tol *= 0.01
            if smo_tol < 1e-15:
                break
            continue
        worst = viol[np.argsort(margin[viol], kind="stable")[:32]]
        ws.update(worst.tolist())
    slack = 1.0 - margin
    # support points sit on the margin only up to the solver tolerance
    slack[slack <= tol] = 0.0
    return SvmSolution(w, b - float(w @ center), alpha_full, primal, dual, slack)


@dataclass(frozen=True)
class LinearBoundary:
    w: np.ndarray
    b: float
    margin_width: float
    left_cluster: int
    right_cluster: int
    slack_total: float
    objective: float
    # margin hyperplanes w.x + b = -/+ half_margin (unit-normal form)
    half_margin: float

    def signed_distance(self, xy) -> np.ndarray:
        return np.asarray(xy, dtype=float).reshape(-1, 2) @ self.w + self.b


def fit_pairwise_boundaries(clusters: ClusterSet, c_soft: float = DEFAULT_C) -> list[LinearBoundary]:
    """One max-margin boundary per along-track-adjacent cluster pair.

    Features are expressed in the (along-track, cross-track) frame of the
    cluster set; the left cluster is class -1 and the unit normal points
    from the left cluster to the right one.
    """
    if c_soft <= 0:
        raise MarginError("c_soft must be positive")
    n = clusters.n_clusters
    if n < 2:
        return []
    frame = axis_frame(clusters.axis)
    out = []
    for k in range(n - 1):
        A = clusters.members(k)
        B = clusters.members(k + 1)
        if len(A) < 1 or len(B) < 1:
            raise MarginError(f"cluster pair ({k}, {k + 1}) has an empty cluster")
        X = np.vstack([A, B]) @ frame.T
        y = np.concatenate([-np.ones(len(A)), np.ones(len(B))])
        sol = solve_svm(X, y, c_soft)
        norm = float(np.hypot(*sol.w))
        if norm == 0.0:
            raise MarginError(f"degenerate boundary between clusters {k} and {k + 1}")
        w_glob = (sol.w @ frame) / norm
        out.append(
            LinearBoundary(
                w=w_glob,
                b=sol.b / norm,
                margin_width=2.0 / norm,
                left_cluster=k,
                right_cluster=k + 1,
                slack_total=float(sol.slack.sum()) / norm,
                objective=sol.primal,
                half_margin=1.0 / norm,
            )
        )
    return out


@dataclass(frozen=True)
class GapReport:
    pair: tuple[int, int]
    gap_distance: float
    free_spaces: int
    reference_dim: float
    # along-track interval of the gap, measured at the pair's mean cross-track
    lo: float
    hi: float
    # parking row the gap belongs to, when known
    row: int | None = None


def count_free(gap_distance: float, reference_dim: float, threshold_ratio: float) -> int:
    if gap_distance >= threshold_ratio * reference_dim:
        return int(math.floor(gap_distance / reference_dim + 1e-12))
    return 0


def _gap_interval(bd: LinearBoundary, clusters: ClusterSet, frame: np.ndarray) -> tuple[float, float, float]:
    """Along-track (lo, hi, length) of the margin band between a pair.

    The length is what an along-track line intercepts of the band, i.e. the
    margin width divided by |cos| of the angle between the normal and the
    track.  The band is centred on the foot of the perpendicular dropped from
    the midpoint of the two centroids onto the decision boundary.
    """
    cos = abs(float(frame[0] @ bd.w))
    gap = bd.margin_width / max(cos, 1e-12)
    mid = 0.5 * (clusters.centroids[bd.left_cluster] + clusters.centroids[bd.right_cluster])
    foot = mid - (float(bd.w @ mid) + bd.b) * bd.w
    centre = float(foot @ frame[0])
    return centre - gap / 2, centre + gap / 2, gap


def detect_gaps(
    boundaries: list[LinearBoundary],
    clusters: ClusterSet,
    reference_dim: float,
    threshold_ratio: float = 1.0,
) -> list[GapReport]:
    """Free-space count between each pair of neighbouring clusters.

    The gap is the along-track length of the band between the two margin
    hyperplanes.  It yields floor(gap / reference_dim) free spaces once it reaches
    ``threshold_ratio * reference_dim``.
    """
    if reference_dim <= 0:
        raise MarginError("reference_dim must be positive")
    if threshold_ratio <= 0:
        raise MarginError("threshold_ratio must be positive")
    frame = axis_frame(clusters.axis)
    reports = []
    for bd in boundaries:
        lo, hi, gap = _gap_interval(bd, clusters, frame)
        reports.append(
            GapReport(
                (bd.left_cluster, bd.right_cluster),
                gap,
                count_free(gap, reference_dim, threshold_ratio),
                reference_dim,
                lo,
                hi,
            )
        )
    return reports


def edge_gaps(
    clusters: ClusterSet,
    lo_limit: float,
    hi_limit: float,
    reference_dim: float,
    threshold_ratio: float = 1.0,
) -> list[GapReport]:
    """Gaps between the sensed stretch's ends and the outermost clusters.

    ``lo_limit``/``hi_limit`` bound the observed stretch along-track.  The
    gap runs from the limit to the outermost member point of the end
    cluster.  With no clusters the whole stretch is one gap (pair (-1, -1)).
    """
    if hi_limit <= lo_limit:
        return []
    n = clusters.n_clusters
    if n == 0:
        g = hi_limit - lo_limit
        return [GapReport((-1, -1), g, count_free(g, reference_dim, threshold_ratio), reference_dim, lo_limit, hi_limit)]
    first = float(np.min(clusters.along(clusters.members(0))))
    last = float(np.max(clusters.along(clusters.members(n - 1))))
    out = []
    g = first - lo_limit
    if g > 0:
        out.append(GapReport((-1, 0), g, count_free(g, reference_dim, threshold_ratio), reference_dim, lo_limit, first))
    g = hi_limit - last
    if g > 0:
        out.append(GapReport((n - 1, n), g, count_free(g, reference_dim, threshold_ratio), reference_dim, last, hi_limit))
    return out
