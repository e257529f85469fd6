"""End-to-end detection: synchronize, segment, cluster, separate, match."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import clustering as cl
from .geo_sync import (
    DEFAULT_SYNC_TOL,
    DEFAULT_TURN_EXCLUSION,
    LocalDetections,
    PoseStream,
    TripSegment,
    segment_trip,
    synchronize,
    wrap_angle,
)
from .mapmatch import (
    DEFAULT_BORESIGHTS_DEG,
    DEFAULT_FOV_DEG,
    DEFAULT_MAX_LATERAL,
    DEFAULT_RANGE_M,
    ParkingMap,
    SegmentEstimate,
    SpaceKind,
    coverage_mask,
    match_segment,
)
from .margins import DEFAULT_C, GapReport, LinearBoundary, detect_gaps, edge_gaps, fit_pairwise_boundaries

VEHICLE_WIDTH = 1.8
VEHICLE_LENGTH = 4.5


@dataclass(frozen=True)
class PipelineConfig:
    method: cl.Method = cl.Method.MSC
    bandwidth: float = 2.0
    # prunes clutter-only modes; a parked car yields far more returns per pass
    min_cluster_size: int = 20
    c_soft: float = DEFAULT_C
    threshold_ratio: float = 1.0
    # None picks vehicle width for perpendicular rows, length for parallel
    reference_dim: float | None = None
    max_lateral: float = DEFAULT_MAX_LATERAL
    sync_tol: float = DEFAULT_SYNC_TOL
    turn_exclusion: float = DEFAULT_TURN_EXCLUSION
    fov_deg: float = DEFAULT_FOV_DEG
    range_m: float = DEFAULT_RANGE_M
    boresights_deg: tuple[float, ...] = DEFAULT_BORESIGHTS_DEG
    k_max: int | None = None
    seed: int = 0
    use_edge_gaps: bool = True
    one_step: bool = False

    def msc(self) -> cl.MscConfig:
        return cl.MscConfig(bandwidth=self.bandwidth, min_cluster_size=self.min_cluster_size)

    def with_bandwidth(self, bw: float) -> "PipelineConfig":
        return replace(self, bandwidth=bw)


@dataclass
class SegmentResult:
    segment: TripSegment
    clusters: cl.ClusterSet
    boundaries: list[LinearBoundary]
    gaps: list[GapReport]
    estimate: SegmentEstimate
    observed: set[int] = field(default_factory=set)
    # row id -> canonical cluster ids (in the combined set) used for that row
    row_clusters: dict[int, list[int]] = field(default_factory=dict)


def dominant_heading(segment: TripSegment) -> float:
    """Circular median-like heading: robust to the arc left over from a turn."""
    phi = segment.poses.phi
    if len(phi) == 0:
        return 0.0
    ref = segment.heading
    return float(wrap_angle(ref + np.median(wrap_angle(phi - ref))))


def _merge_sets(sets: list[cl.ClusterSet], axis: float, method: cl.Method, bw) -> cl.ClusterSet:
    pts, labels, cents, ts = [], [], [], []
    offset = 0
    for s in sets:
        pts.append(s.points)
        lab = s.labels.copy()
        lab[lab >= 0] += offset
        labels.append(lab)
        cents.append(s.centroids)
        if s.t is not None:
            ts.append(s.t)
        offset += s.n_clusters
    if not pts:
        return cl.ClusterSet(np.empty((0, 2)), np.empty(0, dtype=int), np.empty((0, 2)), method, axis, bw)
    P = np.vstack(pts)
    L = np.concatenate(labels)
    t = np.concatenate(ts) if len(ts) == len(sets) else None
    canon, cent, _ = cl._canonicalize(P, L, axis)
    return cl.ClusterSet(P, canon, cent, method, axis, bw, t)


def _cluster_side(points, t, cfg: PipelineConfig, axis: float, k_max: int) -> cl.ClusterSet:
    if len(points) == 0:
        return cl.ClusterSet(np.empty((0, 2)), np.empty(0, dtype=int), np.empty((0, 2)), cfg.method, axis, cfg.bandwidth)
    if cfg.method is cl.Method.MSC:
        return cl.mean_shift_cluster(points, cfg.msc(), axis=axis, t=t)
    return cl.cluster(points, cfg.method, k_max=max(1, min(k_max, len(points))), seed=cfg.seed, axis=axis, t=t)


def _row_of_clusters(clusters: cl.ClusterSet, pmap: ParkingMap, path_cross: float, max_lateral: float) -> dict[int, int]:
    frame = cl.axis_frame(clusters.axis)
    row_cross = {r: float(np.mean(np.array([pmap.space(i).center for i in ids]) @ frame[1])) for r, ids in pmap.rows.items()}
    out = {}
    for k in range(clusters.n_clusters):
        c = float(clusters.centroids[k] @ frame[1])
        side = math.copysign(1.0, c - path_cross)
        opts = [r for r, rc in row_cross.items() if math.copysign(1.0, rc - path_cross) == side and abs(rc - c) <= max_lateral]
        if opts:
            out[k] = min(opts, key=lambda r: (abs(row_cross[r] - c), r))
    return out


def _combined(i: int, ks: list[int]) -> int:
    return ks[i] if 0 <= i < len(ks) else -1


def detect_segment(segment: TripSegment, pmap: ParkingMap, cfg: PipelineConfig) -> SegmentResult:
    axis = dominant_heading(segment)
    frame = cl.axis_frame(axis)
    poses_xy = np.column_stack([segment.poses.x, segment.poses.y])
    path_cross = float(np.median(poses_xy @ frame[1])) if len(poses_xy) else 0.0
    observed = coverage_mask(segment, pmap, cfg.fov_deg, cfg.range_m, cfg.boresights_deg)

    pts = segment.detections.xy
    cross = pts @ frame[1] - path_cross if len(pts) else np.empty(0)
    sides = []
    for sgn in (-1.0, 1.0):
        m = (cross * sgn > 0) if len(pts) else np.zeros(0, dtype=bool)
        n_obs_side = sum(
            1 for sid in observed if (np.dot(pmap.space(sid).center, frame[1]) - path_cross) * sgn > 0
        )
        k_max = cfg.k_max or max(2, n_obs_side + 2)
        sides.append(_cluster_side(pts[m], segment.detections.t[m], cfg, axis, k_max))
    clusters = _merge_sets(sides, axis, cfg.method, cfg.bandwidth if cfg.method is cl.Method.MSC else None)

    row_of = _row_of_clusters(clusters, pmap, path_cross, cfg.max_lateral)
    boundaries: list[LinearBoundary] = []
    gaps: list[GapReport] = []
    row_clusters: dict[int, list[int]] = {}
    for row in sorted(pmap.rows):
        obs_ids = [i for i in pmap.rows[row] if i in observed]
        if not obs_ids:
            continue
        ks = [k for k in range(clusters.n_clusters) if row_of.get(k) == row]
        row_clusters[row] = ks
        sub = clusters.subset(ks)
        kind = pmap.space(obs_ids[0]).kind
        ref = cfg.reference_dim or (VEHICLE_LENGTH if kind is SpaceKind.PARALLEL else VEHICLE_WIDTH)
        bds = fit_pairwise_boundaries(sub, cfg.c_soft)
        row_gaps = detect_gaps(bds, sub, ref, cfg.threshold_ratio)
        if cfg.use_edge_gaps:
            a = np.array([np.dot(pmap.space(i).center, frame[0]) for i in obs_ids])
            ext = np.array([pmap.space(i).extent_along(axis) for i in obs_ids])
            row_gaps += edge_gaps(sub, float(np.min(a - ext / 2)), float(np.max(a + ext / 2)), ref, cfg.threshold_ratio)
        # report pairs in the combined numbering; -1 marks a row end
        boundaries += [
            replace(b, left_cluster=_combined(b.left_cluster, ks), right_cluster=_combined(b.right_cluster, ks)) for b in bds
        ]
        gaps += [replace(g, row=row, pair=(_combined(g.pair[0], ks), _combined(g.pair[1], ks))) for g in row_gaps]

    est = match_segment(clusters, gaps, pmap, segment, cfg.max_lateral, observed=observed, one_step=cfg.one_step)
    return SegmentResult(segment, clusters, boundaries, gaps, est, observed, row_clusters)


def detect_trip(poses: PoseStream, dets: LocalDetections, pmap: ParkingMap, cfg: PipelineConfig) -> list[SegmentResult]:
    sync = synchronize(poses, dets, cfg.sync_tol)
    segments = segment_trip(poses, sync.detections, cfg.turn_exclusion)
    return [detect_segment(s, pmap, cfg) for s in segments if len(s.poses) >= 2]
