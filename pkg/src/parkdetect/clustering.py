"""Step-one classification: label detections into per-vehicle clusters.

Mean-shift with a flat (uniform disk) kernel is the primary method.  K-means,
a full-covariance Gaussian mixture selected by AIC, and a Gaussian mixture on
the along-track coordinate only are kept as baselines for comparison.

Every method returns a ``ClusterSet`` whose clusters are numbered by
ascending along-track centroid, so outputs of different methods line up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree
from sklearn.cluster import KMeans
from sklearn.metrics import silhouette_score
from sklearn.mixture import GaussianMixture

from ._kernels import GridIndex

# admissible mean-shift bandwidth: smallest passenger-car width to largest length
MIN_VEHICLE_WIDTH = 1.5
MAX_VEHICLE_LENGTH = 6.0
MAX_SEGMENT_POINTS = 10_000

NOISE = -1


class ClusteringError(ValueError):
    pass


class Method(str, Enum):
    MSC = "MSC"
    GMM_AIC = "GMM_AIC"
    GMM_Y = "GMM_Y"
    KMEANS = "KMEANS"


def axis_frame(axis: float) -> np.ndarray:
    """Rows are the along-track and cross-track unit vectors for heading ``axis``."""
    c, s = math.cos(axis), math.sin(axis)
    return np.array([[c, s], [-s, c]])


@dataclass
class ClusterSet:
    points: np.ndarray
    labels: np.ndarray
    centroids: np.ndarray
    method: Method
    axis: float = 0.0
    bandwidth: float | None = None
    t: np.ndarray | None = None
    modes: np.ndarray | None = None
    iterations: int = 0
    # per-k model selection scores (AIC or silhouette), baselines only
    scores: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.labels = np.asarray(self.labels, dtype=int)
        self.centroids = np.asarray(self.centroids, dtype=float).reshape(-1, 2)

    @property
    def n_clusters(self) -> int:
        return len(self.centroids)

    def members(self, k: int) -> np.ndarray:
        return self.points[self.labels == k]

    def along(self, xy: np.ndarray | None = None) -> np.ndarray:
        xy = self.points if xy is None else np.asarray(xy, dtype=float).reshape(-1, 2)
        return xy @ axis_frame(self.axis)[0]

    def cross(self, xy: np.ndarray | None = None) -> np.ndarray:
        xy = self.points if xy is None else np.asarray(xy, dtype=float).reshape(-1, 2)
        return xy @ axis_frame(self.axis)[1]

    def subset(self, keep_clusters) -> "ClusterSet":
        """Clusters ``keep_clusters`` (in order) with their member points only."""
        keep_clusters = list(keep_clusters)
        remap = {old: new for new, old in enumerate(keep_clusters)}
        mask = np.isin(self.labels, keep_clusters)
        labels = np.array([remap[l] for l in self.labels[mask]], dtype=int)
        return ClusterSet(
            self.points[mask],
            labels,
            self.centroids[keep_clusters] if keep_clusters else np.empty((0, 2)),
            self.method,
            self.axis,
            self.bandwidth,
            None if self.t is None else self.t[mask],
            None if self.modes is None or not keep_clusters else self.modes[keep_clusters],
            self.iterations,
        )


def _canonicalize(points, labels, axis, modes=None):
    """Renumber clusters by ascending along-track centroid; recompute centroids."""
    ks = np.unique(labels[labels != NOISE])
    if len(ks) == 0:
        return labels.copy(), np.empty((0, 2)), None if modes is None else np.empty((0, 2))
    cents = np.array([points[labels == k].mean(axis=0) for k in ks])
    frame = axis_frame(axis)
    a, c = cents @ frame[0], cents @ frame[1]
    order = np.lexsort((c, a))
    remap = np.full(int(ks.max()) + 1, NOISE, dtype=int)
    remap[ks[order]] = np.arange(len(ks))
    new = np.where(labels == NOISE, NOISE, remap[np.maximum(labels, 0)])
    new_modes = None if modes is None else np.asarray(modes)[ks[order]]
    return new, cents[order], new_modes


# --------------------------------------------------------------------------
# mean-shift


def flat_kernel(offset, lam: float) -> int:
    """1 if the offset lies inside the closed disk of radius ``lam``, else 0."""
    if lam <= 0:
        raise ClusteringError("kernel radius must be positive")
    return int(math.hypot(*np.asarray(offset, dtype=float)) <= lam)


def mean_shift_step(points, x_c, lam: float) -> np.ndarray:
    """Weighted mean of the points in the flat-kernel window around ``x_c``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    x_c = np.asarray(x_c, dtype=float)
    w = np.array([flat_kernel(p - x_c, lam) for p in pts], dtype=float)
    if w.sum() == 0:
        raise ClusteringError("empty mean-shift window")
    return (w[:, None] * pts).sum(axis=0) / w.sum()


@dataclass(frozen=True)
class MscConfig:
    bandwidth: float = 2.0
    convergence_eps: float = 1e-3
    merge_radius: float | None = None
    max_iters: int = 300
    # clusters smaller than this are dissolved into neighbours or noise
    min_cluster_size: int = 1

    def __post_init__(self):
        if not (MIN_VEHICLE_WIDTH <= self.bandwidth <= MAX_VEHICLE_LENGTH):
            raise ClusteringError(
                f"bandwidth {self.bandwidth} m outside admissible range "
                f"[{MIN_VEHICLE_WIDTH}, {MAX_VEHICLE_LENGTH}] m"
            )
        if self.convergence_eps <= 0:
            raise ClusteringError("convergence_eps must be positive")
        if self.merge_radius is not None and self.merge_radius <= 0:
            raise ClusteringError("merge_radius must be positive")
        if self.max_iters < 1:
            raise ClusteringError("max_iters must be >= 1")
        if self.min_cluster_size < 1:
            raise ClusteringError("min_cluster_size must be >= 1")

    @property
    def merge(self) -> float:
        return self.bandwidth / 2 if self.merge_radius is None else self.merge_radius


def mean_shift_modes(X: np.ndarray, cfg: MscConfig):
    """Run every point to its mode.

    Trajectories whose windows hold the same point set move to the same
    place, so they are collapsed into one.
    Returns (mode per input point, iteration count).
    """
    grid = GridIndex(X, cfg.bandwidth)
    pos, owner = np.unique(X, axis=0, return_inverse=True)
    owner = owner.reshape(-1)
    active = np.ones(len(pos), dtype=bool)
    it = 0
    while it < cfg.max_iters and active.any():
        it += 1
        ia = np.flatnonzero(active)
        new, _, sig = grid.window_means(pos[ia])
        _, first, grp = np.unique(sig, axis=0, return_index=True, return_inverse=True)
        new = new[first][grp.reshape(-1)]
        shift = np.hypot(*(new - pos[ia]).T)
        pos[ia] = new
        active[ia[shift < cfg.convergence_eps]] = False

        ia = np.flatnonzero(active)
        if len(ia) > 1:
            uq, inv = np.unique(pos[ia], axis=0, return_inverse=True)
            inv = inv.reshape(-1)
            if len(uq) < len(ia):
                frozen = np.flatnonzero(~active)
                remap = np.empty(len(pos), dtype=np.int64)
                remap[frozen] = np.arange(len(frozen))
                remap[ia] = len(frozen) + inv
                pos = np.vstack([pos[frozen], uq])
                active = np.concatenate([np.zeros(len(frozen), bool), np.ones(len(uq), bool)])
                owner = remap[owner]
    return pos[owner], it


def mean_shift_trajectory(points, start, lam: float, eps: float = 1e-3, max_iters: int = 300):
    """Positions and in-window counts along one trajectory (diagnostics)."""
    X = np.asarray(points, dtype=float).reshape(-1, 2)
    grid = GridIndex(X, lam)
    x = np.asarray(start, dtype=float)
    path, counts = [x.copy()], []
    for _ in range(max_iters):
        m, c, _ = grid.window_means(x)
        if c[0] == 0:
            raise ClusteringError("empty mean-shift window")
        counts.append(int(c[0]))
        shift = float(np.hypot(*(m[0] - x)))
        x = m[0]
        path.append(x.copy())
        if shift < eps:
            break
    return np.array(path), np.array(counts)


def mean_shift_cluster(points, cfg: MscConfig | None = None, axis: float = 0.0, t=None) -> ClusterSet:
    """Flat-kernel mean-shift clustering seeded from every point.

    Modes within ``cfg.merge`` of each other are merged (densest mode
    first).  Every member ends within bandwidth + merge + eps of its mode.  Clusters with fewer than ``cfg.min_cluster_size`` members are
    dissolved: their points join the nearest surviving mode within one
    bandwidth, otherwise they become noise (label -1).
    """
    cfg = cfg or MscConfig()
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(P) == 0:
        raise ClusteringError("mean-shift needs at least one point")
    if len(P) > MAX_SEGMENT_POINTS:
        raise ClusteringError(
            f"{len(P)} points exceed the per-segment cap of {MAX_SEGMENT_POINTS}; segment the trip first"
        )
    # canonical order makes the result independent of input order
    order = np.lexsort((P[:, 1], P[:, 0]))
    X = P[order]
    point_mode, iters = mean_shift_modes(X, cfg)

    modes, inv, support = np.unique(point_mode, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    # densest mode first; ties broken in the driving frame so the merge
    # commutes with rotating the data together with its axis
    _, density, _ = GridIndex(X, cfg.bandwidth).window_means(modes)
    frame = axis_frame(axis)
    rank = np.lexsort((modes @ frame[1], modes @ frame[0], -support, -density))
    reps: list[np.ndarray] = []
    rep_of = np.empty(len(modes), dtype=int)
    for m in rank:
        for r, rep in enumerate(reps):
            if math.hypot(*(modes[m] - rep)) <= cfg.merge:
                rep_of[m] = r
                break
        else:
            rep_of[m] = len(reps)
            reps.append(modes[m])
    labels = rep_of[inv]

    # a trajectory can wander more than one window from its start; such
    # points move to the nearest mode within reach or seed their own cluster
    reach = cfg.bandwidth + cfg.merge + cfg.convergence_eps
    reps_arr = np.array(reps)
    far = np.flatnonzero(np.hypot(*(X - reps_arr[labels]).T) > reach)
    for i in far:
        d = np.hypot(*(reps_arr - X[i]).T)
        j = int(np.argmin(d))
        if d[j] <= reach:
            labels[i] = j
        else:
            labels[i] = len(reps_arr)
            reps_arr = np.vstack([reps_arr, X[i]])

    if cfg.min_cluster_size > 1:
        sizes = np.bincount(labels, minlength=len(reps_arr))
        alive = np.flatnonzero(sizes >= cfg.min_cluster_size)
        weak = sizes[labels] < cfg.min_cluster_size
        if weak.any():
            if len(alive):
                d = np.hypot(*(X[weak][:, None, :] - reps_arr[alive][None, :, :]).transpose(2, 0, 1))
                j = np.argmin(d, axis=1)
                near = d[np.arange(len(j)), j] <= cfg.bandwidth
                labels[np.flatnonzero(weak)] = np.where(near, alive[j], NOISE)
            else:
                labels[weak] = NOISE

    out_labels = np.empty(len(P), dtype=int)
    out_labels[order] = labels
    canon, cents, cmodes = _canonicalize(P, out_labels, axis, reps_arr)
    return ClusterSet(P, canon, cents, Method.MSC, axis, cfg.bandwidth, t, cmodes, iters)


# --------------------------------------------------------------------------
# K-means baseline


SILHOUETTE_MIN = 0.25
SILHOUETTE_SAMPLE = 800


def kmeans_cluster(points, k_max: int, seed: int = 0, axis: float = 0.0, t=None) -> ClusterSet:
    """K-means for k = 1..k_max with the count chosen by mean silhouette.

    k = 1 is kept unless some k >= 2 reaches a silhouette of 0.25.  Silhouettes
    are evaluated on a fixed seeded subsample of at most 800 points.
    """
    if k_max < 1:
        raise ClusteringError("k_max must be >= 1")
    X = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(X) == 0:
        raise ClusteringError("k-means needs at least one point")
    n_distinct = len(np.unique(X, axis=0))
    sample = min(len(X), SILHOUETTE_SAMPLE)

    best_s, best_labels = -np.inf, np.zeros(len(X), dtype=int)
    scores: dict[int, float] = {}
    for k in range(2, min(k_max, n_distinct) + 1):
        labels = KMeans(n_clusters=k, n_init=3, random_state=seed).fit_predict(X)
        if len(np.unique(labels)) < 2:
            continue
        s = float(silhouette_score(X, labels, sample_size=sample, random_state=seed))
        scores[k] = s
        if s > best_s:
            best_s, best_labels = s, labels
    if best_s < SILHOUETTE_MIN:
        best_labels = np.zeros(len(X), dtype=int)
    canon, cents, _ = _canonicalize(X, best_labels, axis)
    cs = ClusterSet(X, canon, cents, Method.KMEANS, axis, None, t)
    cs.scores = scores
    return cs


# --------------------------------------------------------------------------
# Gaussian mixtures

# covariance regulariser, m^2: keeps components on collinear returns proper
COV_FLOOR = 1e-4


GMM_MAX_ITERS = 200
# per-sample mean log-likelihood change
GMM_TOL = 1e-3


def fit_gmm(X: np.ndarray, k: int, seed: int = 0, n_init: int = 5) -> GaussianMixture:
    return GaussianMixture(
        k, covariance_type="full", reg_covar=COV_FLOOR, n_init=n_init, max_iter=GMM_MAX_ITERS, tol=GMM_TOL, random_state=seed
    ).fit(X)


def _gmm_select(Z: np.ndarray, k_max: int, seed: int, n_init: int):
    n_distinct = len(np.unique(Z, axis=0))
    fits: dict[int, GaussianMixture] = {}
    scores: dict[int, float] = {}
    for k in range(1, min(k_max, n_distinct) + 1):
        fits[k] = fit_gmm(Z, k, seed, n_init)
        scores[k] = float(fits[k].aic(Z))
    k_best = min(scores, key=lambda k: (scores[k], k))
    return fits[k_best], scores


def gmm_aic_cluster(points, k_max: int, seed: int = 0, axis: float = 0.0, n_init: int = 5, t=None) -> ClusterSet:
    """Full-covariance 2-D Gaussian mixture; component count by minimum AIC."""
    if k_max < 1:
        raise ClusteringError("k_max must be >= 1")
    X = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(X) < 2:
        raise ClusteringError("GMM needs at least two points")
    fit, scores = _gmm_select(X, k_max, seed, n_init)
    canon, cents, _ = _canonicalize(X, fit.predict(X), axis)
    cs = ClusterSet(X, canon, cents, Method.GMM_AIC, axis, None, t)
    cs.scores = scores
    return cs


def gmm_y_collapsed_cluster(points, k_max: int, seed: int = 0, axis: float = 0.0, n_init: int = 5, t=None) -> ClusterSet:
    """1-D Gaussian mixture on the along-track coordinate (cross-track dropped).

    ``axis`` is the driving direction.  Centroids are reported back in 2-D
    from the member points.
    """
    if k_max < 1:
        raise ClusteringError("k_max must be >= 1")
    X = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(X) < 2:
        raise ClusteringError("GMM needs at least two points")
    along = (X @ axis_frame(axis)[0])[:, None]
    fit, scores = _gmm_select(along, k_max, seed, n_init)
    canon, cents, _ = _canonicalize(X, fit.predict(along), axis)
    cs = ClusterSet(X, canon, cents, Method.GMM_Y, axis, None, t)
    cs.scores = scores
    return cs


def cluster(points, method: Method | str, *, msc: MscConfig | None = None, k_max: int = 10, seed: int = 0, axis: float = 0.0, t=None, n_init: int = 5) -> ClusterSet:
    method = Method(method)
    if method is Method.MSC:
        return mean_shift_cluster(points, msc, axis, t)
    if len(np.asarray(points).reshape(-1, 2)) < 2:
        # too few points for a mixture; a single point is its own cluster
        X = np.asarray(points, dtype=float).reshape(-1, 2)
        labels = np.zeros(len(X), dtype=int)
        return ClusterSet(X, labels, X.mean(axis=0, keepdims=True) if len(X) else np.empty((0, 2)), method, axis, None, t)
    if method is Method.KMEANS:
        return kmeans_cluster(points, k_max, seed, axis, t)
    if method is Method.GMM_AIC:
        return gmm_aic_cluster(points, k_max, seed, axis, n_init, t)
    return gmm_y_collapsed_cluster(points, k_max, seed, axis, n_init, t)
