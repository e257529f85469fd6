"""Parking-space maps and per-segment matching of clusters and gaps.

Matching works in the segment's along-track frame.  Every cluster first
picks the nearest row (by cross-track distance) on its side of the path,
then clusters and the row's observed spaces are paired one-to-one by
minimum total along-track distance.  A cluster may only take a space whose
centre lies within one space extent of its centroid; clusters left over are
reported as surplus.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clustering import ClusterSet, axis_frame
from .geo_sync import TripSegment, wrap_angle
from .margins import GapReport

log = logging.getLogger(__name__)

DEFAULT_MAX_LATERAL = 10.0
DEFAULT_FOV_DEG = 80.0
DEFAULT_RANGE_M = 10.0
# boresights (deg, CCW from heading) of the six side-looking radars
DEFAULT_BORESIGHTS_DEG = (60.0, 90.0, 120.0, -60.0, -90.0, -120.0)


class MapError(ValueError):
    pass


class SpaceKind(str, Enum):
    PARALLEL = "PARALLEL"
    PERPENDICULAR = "PERPENDICULAR"


class SpaceState(IntEnum):
    FREE = 0
    OCCUPIED = 1
    UNOBSERVED = -1


@dataclass(frozen=True)
class ParkingSpace:
    id: int
    center: tuple[float, float]
    orientation: float
    length: float
    width: float
    kind: SpaceKind
    row: int = 0

    def __post_init__(self):
        if not (self.length > self.width > 0):
            raise MapError(f"space {self.id}: need length > width > 0")

    def extent_along(self, axis: float) -> float:
        """Length of the space's footprint projected on heading ``axis``."""
        d = self.orientation - axis
        return abs(self.length * math.cos(d)) + abs(self.width * math.sin(d))

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.orientation), math.sin(self.orientation)
        u, v = np.array([c, s]), np.array([-s, c])
        half = [(+1, +1), (+1, -1), (-1, -1), (-1, +1)]
        return np.array([np.array(self.center) + a * u * self.length / 2 + b * v * self.width / 2 for a, b in half])


@dataclass
class ParkingMap:
    spaces: list[ParkingSpace]
    # row id -> space ids in driving order
    rows: dict[int, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        ids = [s.id for s in self.spaces]
        if len(set(ids)) != len(ids):
            raise MapError("space ids must be unique")
        if not self.rows:
            rows: dict[int, list[int]] = {}
            for s in self.spaces:
                rows.setdefault(s.row, []).append(s.id)
            self.rows = rows
        self._by_id = {s.id: s for s in self.spaces}

    def __len__(self) -> int:
        return len(self.spaces)

    def space(self, sid: int) -> ParkingSpace:
        return self._by_id[sid]

    @property
    def ids(self) -> list[int]:
        return [s.id for s in self.spaces]

    def centers(self) -> np.ndarray:
        return np.array([s.center for s in self.spaces], dtype=float).reshape(-1, 2)

    def adjacency(self) -> dict[int, list[int]]:
        """Node-edge view: each space linked to its row neighbours."""
        adj = {s.id: [] for s in self.spaces}
        for ids in self.rows.values():
            for a, b in zip(ids[:-1], ids[1:]):
                adj[a].append(b)
                adj[b].append(a)
        return adj

    def bounds(self, margin: float = 0.0) -> tuple[float, float, float, float]:
        pts = np.vstack([s.corners() for s in self.spaces])
        return (
            float(pts[:, 0].min() - margin),
            float(pts[:, 1].min() - margin),
            float(pts[:, 0].max() + margin),
            float(pts[:, 1].max() + margin),
        )

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "units": {"length": "m", "angle": "rad"},
            "spaces": [
                {
                    "id": s.id,
                    "center": [s.center[0], s.center[1]],
                    "orientation": s.orientation,
                    "length": s.length,
                    "width": s.width,
                    "kind": s.kind.value,
                    "row": s.row,
                }
                for s in self.spaces
            ],
            "rows": {str(r): ids for r, ids in self.rows.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParkingMap":
        try:
            spaces = [
                ParkingSpace(
                    int(s["id"]),
                    (float(s["center"][0]), float(s["center"][1])),
                    float(s["orientation"]),
                    float(s["length"]),
                    float(s["width"]),
                    SpaceKind(s["kind"]),
                    int(s.get("row", 0)),
                )
                for s in d["spaces"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise MapError(f"malformed parking map: {exc}") from exc
        rows = {int(r): [int(i) for i in ids] for r, ids in d.get("rows", {}).items()}
        return cls(spaces, rows)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ParkingMap":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class SegmentEstimate:
    segment_id: int
    states: dict[int, SpaceState]
    mean_speed: float = 0.0
    surplus_clusters: list[int] = field(default_factory=list)
    assignment: dict[int, int] = field(default_factory=dict)  # cluster -> space
    ties: list[int] = field(default_factory=list)

    def observed(self) -> list[int]:
        return [sid for sid, st in self.states.items() if st is not SpaceState.UNOBSERVED]

    def count(self, state: SpaceState) -> int:
        return sum(1 for st in self.states.values() if st is state)


# --------------------------------------------------------------------------


def coverage_mask(
    segment: TripSegment,
    pmap: ParkingMap,
    fov_deg: float = DEFAULT_FOV_DEG,
    range_m: float = DEFAULT_RANGE_M,
    boresights_deg=DEFAULT_BORESIGHTS_DEG,
) -> set[int]:
    """Ids of spaces whose centre falls inside some pose's sensor wedge.

    Range and half-FOV are inclusive.  Sensors are treated as sitting at the
    vehicle centroid.
    """
    if not (0 < fov_deg <= 360):
        raise MapError("fov_deg must be in (0, 360]")
    if range_m <= 0:
        raise MapError("range_m must be positive")
    poses = segment.poses
    if len(poses) == 0 or len(pmap) == 0:
        return set()
    C = pmap.centers()
    dx = C[:, 0][None, :] - poses.x[:, None]
    dy = C[:, 1][None, :] - poses.y[:, None]
    dist = np.hypot(dx, dy)
    bearing = np.arctan2(dy, dx) - poses.phi[:, None]
    half = math.radians(fov_deg) / 2
    seen = np.zeros(len(pmap), dtype=bool)
    in_range = dist <= range_m + 1e-9
    for bs in boresights_deg:
        off = np.abs(wrap_angle(bearing - math.radians(bs)))
        seen |= np.any(in_range & (off <= half + 1e-12), axis=0)
    return {pmap.spaces[i].id for i in np.flatnonzero(seen)}


def _path_cross(segment: TripSegment, frame: np.ndarray) -> float:
    if len(segment.poses) == 0:
        return 0.0
    return float(np.median(np.column_stack([segment.poses.x, segment.poses.y]) @ frame[1]))


def assign_clusters(
    clusters: ClusterSet,
    pmap: ParkingMap,
    candidates: set[int],
    path_cross: float,
    max_lateral: float = DEFAULT_MAX_LATERAL,
) -> tuple[dict[int, int], list[int], list[int]]:
    """One-to-one cluster -> space assignment.

    Returns (assignment, surplus cluster ids, ids of clusters whose nearest
    space was an exact tie).
    """
    frame = axis_frame(clusters.axis)
    if clusters.n_clusters == 0 or not candidates:
        return {}, list(range(clusters.n_clusters)), []
    cent_a = clusters.centroids @ frame[0]
    cent_c = clusters.centroids @ frame[1]

    row_ids = sorted(pmap.rows)
    row_cross = {}
    row_side = {}
    for r in row_ids:
        cs = np.array([pmap.space(i).center for i in pmap.rows[r]]) @ frame[1]
        row_cross[r] = float(np.mean(cs))
        row_side[r] = np.sign(row_cross[r] - path_cross)

    by_row: dict[int, list[int]] = {}
    for k in range(clusters.n_clusters):
        side = np.sign(cent_c[k] - path_cross)
        opts = [r for r in row_ids if row_side[r] == side and abs(row_cross[r] - cent_c[k]) <= max_lateral]
        if not opts:
            continue
        r = min(opts, key=lambda r: (abs(row_cross[r] - cent_c[k]), r))
        by_row.setdefault(r, []).append(k)

    assignment: dict[int, int] = {}
    ties: list[int] = []
    for r, ks in by_row.items():
        sids = sorted(i for i in pmap.rows[r] if i in candidates)
        if not sids:
            continue
        sp = [pmap.space(i) for i in sids]
        s_a = np.array([s.center for s in sp]) @ frame[0]
        gate = np.array([s.extent_along(clusters.axis) for s in sp])
        d = np.abs(cent_a[ks][:, None] - s_a[None, :])
        feasible = d <= gate[None, :]
        # lower id wins exact ties: tiny rank-proportional surcharge
        rank = np.arange(len(sids)) / max(len(sids), 1)
        big = 1e6
        cost = np.where(feasible, d + 1e-9 * rank[None, :], big)
        dummy = np.full((len(ks), len(ks)), big / 2)
        np.fill_diagonal(dummy, gate.max() + 1.0)
        rows_i, cols_j = linear_sum_assignment(np.hstack([cost, dummy]))
        for i, j in zip(rows_i, cols_j):
            if j < len(sids) and feasible[i, j]:
                assignment[ks[i]] = sids[j]
        for i, k in enumerate(ks):
            di = d[i]
            best = np.min(di)
            if np.count_nonzero(np.abs(di - best) <= 1e-12) > 1:
                ties.append(k)
                log.info("cluster %d equidistant from several spaces; lower id preferred", k)
    surplus = [k for k in range(clusters.n_clusters) if k not in assignment]
    return assignment, surplus, ties


def match_segment(
    clusters: ClusterSet,
    gaps: list[GapReport],
    pmap: ParkingMap,
    segment: TripSegment,
    max_lateral: float = DEFAULT_MAX_LATERAL,
    observed: set[int] | None = None,
    one_step: bool = False,
) -> SegmentEstimate:
    """Per-space occupancy for one segment.

    Spaces taking a cluster are OCCUPIED.  Other observed spaces whose
    footprint overlaps a gap with a positive free-space count are FREE (at
    most that many per gap, nearest the gap middle first).  Remaining
    observed spaces are judged not available.  With ``one_step`` every observed space without a
    cluster is FREE instead, which is the cluster-only baseline.
    """
    if len(pmap) == 0:
        raise MapError("empty parking map")
    if observed is None:
        observed = coverage_mask(segment, pmap)
    frame = axis_frame(clusters.axis)
    assignment, surplus, ties = assign_clusters(clusters, pmap, observed, _path_cross(segment, frame), max_lateral)
    taken = set(assignment.values())

    states = {sid: SpaceState.UNOBSERVED for sid in pmap.ids}
    for sid in observed:
        states[sid] = SpaceState.OCCUPIED if (sid in taken or not one_step) else SpaceState.FREE

    if not one_step:
        span = {}
        for sid in observed:
            sp = pmap.space(sid)
            half = sp.extent_along(clusters.axis) / 2
            a = float(np.dot(sp.center, frame[0]))
            span[sid] = (a, a - half, a + half)
        for g in gaps:
            if g.free_spaces <= 0:
                continue
            mid = 0.5 * (g.lo + g.hi)
            inside = []
            for sid, (a, lo, hi) in span.items():
                if g.row is not None and pmap.space(sid).row != g.row:
                    continue
                if lo < g.hi and hi > g.lo and sid not in taken:
                    inside.append((abs(a - mid), sid))
            for _, sid in sorted(inside)[: g.free_spaces]:
                states[sid] = SpaceState.FREE
    return SegmentEstimate(segment.segment_id, states, segment.mean_speed, surplus, assignment, ties)
