"""Radar/GPS preprocessing: planar projection, local-to-global conversion,
clock synchronization and trip segmentation at turns.

Streams are held in small array containers (``PoseStream``,
``LocalDetections``, ``GlobalDetections``) so that a trip with thousands of
radar points can be converted without per-point Python overhead.  The scalar
records (``ProbePose``, ``LocalDetection``, ``GlobalDetection``) are thin
views used by the single-point API and by tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# WGS84
_A = 6378137.0
_F = 1.0 / 298.257223563
_K0 = 0.9996
_FALSE_EASTING = 500000.0
_FALSE_NORTHING_SOUTH = 10000000.0

DEFAULT_SYNC_TOL = 0.1
DEFAULT_TURN_EXCLUSION = 1.0
SPLIT_ANGLE = math.pi / 2


class GeoSyncError(ValueError):
    pass


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class ProbePose:
    t: float
    x: float
    y: float
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "phi", wrap_angle(self.phi))


@dataclass(frozen=True)
class LocalDetection:
    t: float
    zx_local: float
    zy_local: float
    sensor_id: int = 0


@dataclass(frozen=True)
class GlobalDetection:
    t: float
    zx: float
    zy: float
    source_pose_t: float


@dataclass(frozen=True)
class PoseStream:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        for name in ("t", "x", "y", "phi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.t)
        if not all(len(a) == n for a in (self.x, self.y, self.phi)):
            raise GeoSyncError("pose stream columns differ in length")
        object.__setattr__(self, "phi", np.atleast_1d(wrap_angle(self.phi)))

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> ProbePose:
        return ProbePose(float(self.t[i]), float(self.x[i]), float(self.y[i]), float(self.phi[i]))

    def take(self, idx) -> "PoseStream":
        return PoseStream(self.t[idx], self.x[idx], self.y[idx], self.phi[idx])

    @classmethod
    def from_poses(cls, poses) -> "PoseStream":
        poses = list(poses)
        return cls(
            np.array([p.t for p in poses], dtype=float),
            np.array([p.x for p in poses], dtype=float),
            np.array([p.y for p in poses], dtype=float),
            np.array([p.phi for p in poses], dtype=float),
        )

    @classmethod
    def empty(cls) -> "PoseStream":
        return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0))


@dataclass(frozen=True)
class LocalDetections:
    t: np.ndarray
    zx_local: np.ndarray
    zy_local: np.ndarray
    sensor_id: np.ndarray

    def __post_init__(self):
        for name in ("t", "zx_local", "zy_local"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "sensor_id", np.asarray(self.sensor_id, dtype=int))

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> LocalDetection:
        return LocalDetection(
            float(self.t[i]), float(self.zx_local[i]), float(self.zy_local[i]), int(self.sensor_id[i])
        )

    @classmethod
    def from_detections(cls, dets) -> "LocalDetections":
        dets = list(dets)
        return cls(
            np.array([d.t for d in dets], dtype=float),
            np.array([d.zx_local for d in dets], dtype=float),
            np.array([d.zy_local for d in dets], dtype=float),
            np.array([d.sensor_id for d in dets], dtype=int),
        )


@dataclass(frozen=True)
class GlobalDetections:
    t: np.ndarray
    zx: np.ndarray
    zy: np.ndarray
    source_pose_t: np.ndarray

    def __post_init__(self):
        for name in ("t", "zx", "zy", "source_pose_t"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> GlobalDetection:
        return GlobalDetection(
            float(self.t[i]), float(self.zx[i]), float(self.zy[i]), float(self.source_pose_t[i])
        )

    @property
    def xy(self) -> np.ndarray:
        return np.column_stack([self.zx, self.zy])

    def take(self, idx) -> "GlobalDetections":
        return GlobalDetections(self.t[idx], self.zx[idx], self.zy[idx], self.source_pose_t[idx])

    @classmethod
    def empty(cls) -> "GlobalDetections":
        return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0))


@dataclass(frozen=True)
class SyncResult:
    detections: GlobalDetections
    dropped: int
    # index of the paired pose for every kept detection
    pose_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))


@dataclass(frozen=True)
class TripSegment:
    segment_id: int
    poses: PoseStream
    detections: GlobalDetections
    mean_speed: float
    # heading at the split that opened the segment; the turn window may
    # have discarded that pose, but drift is measured from it
    start_phi: float = 0.0

    @property
    def heading(self) -> float:
        """Circular mean heading of the segment's poses."""
        if len(self.poses) == 0:
            return 0.0
        return math.atan2(float(np.mean(np.sin(self.poses.phi))), float(np.mean(np.cos(self.poses.phi))))


# --------------------------------------------------------------------------
# UTM forward projection (Krueger series, 6th order in n)


def _utm_constants():
    n = _F / (2 - _F)
    a_hat = _A / (1 + n) * (1 + n**2 / 4 + n**4 / 64 + n**6 / 256)
    alpha = (
        n / 2 - 2 * n**2 / 3 + 5 * n**3 / 16 + 41 * n**4 / 180 - 127 * n**5 / 288 + 7891 * n**6 / 37800,
        13 * n**2 / 48 - 3 * n**3 / 5 + 557 * n**4 / 1440 + 281 * n**5 / 630 - 1983433 * n**6 / 1935360,
        61 * n**3 / 240 - 103 * n**4 / 140 + 15061 * n**5 / 26880 + 167603 * n**6 / 181440,
        49561 * n**4 / 161280 - 179 * n**5 / 168 + 6601661 * n**6 / 7257600,
        34729 * n**5 / 80640 - 3418889 * n**6 / 1995840,
        212378941 * n**6 / 319334400,
    )
    return n, a_hat, alpha


_N, _A_HAT, _ALPHA = _utm_constants()


def utm_zone(lon: float) -> int:
    return int((lon + 180.0) // 6.0) % 60 + 1


def zone_central_meridian(zone: int) -> float:
    return (zone - 1) * 6.0 - 180.0 + 3.0


def latlon_to_planar(lat: float, lon: float, zone: int | None = None) -> tuple[float, float]:
    """Project WGS84 latitude/longitude (degrees) to UTM easting/northing (m).

    The zone defaults to the one containing ``lon``.  Southern-hemisphere
    northings carry the usual 10,000 km false northing.
    """
    if not (-80.0 <= lat <= 84.0) or math.isnan(lat):
        raise GeoSyncError(f"latitude {lat} outside UTM domain [-80, 84]")
    if not (-180.0 <= lon < 180.0) or math.isnan(lon):
        raise GeoSyncError(f"longitude {lon} outside [-180, 180)")
    if zone is None:
        zone = utm_zone(lon)
    phi = math.radians(lat)
    dlam = math.radians(lon - zone_central_meridian(zone))

    e = math.sqrt(_F * (2 - _F))
    t = math.sinh(math.atanh(math.sin(phi)) - e * math.atanh(e * math.sin(phi)))
    xi_p = math.atan2(t, math.cos(dlam))
    eta_p = math.atanh(math.sin(dlam) / math.sqrt(1 + t * t))

    xi, eta = xi_p, eta_p
    for j, a in enumerate(_ALPHA, start=1):
        xi += a * math.sin(2 * j * xi_p) * math.cosh(2 * j * eta_p)
        eta += a * math.cos(2 * j * xi_p) * math.sinh(2 * j * eta_p)

    easting = _FALSE_EASTING + _K0 * _A_HAT * eta
    northing = _K0 * _A_HAT * xi
    if lat < 0:
        northing += _FALSE_NORTHING_SOUTH
    return easting, northing


# --------------------------------------------------------------------------
# local -> global


def rotate_translate(x, y, phi, zx_local, zy_local):
    """Vectorized conversion of vehicle-frame points to the global frame.

    Uses the range/bearing form: the point keeps its range and its bearing
    is offset by the heading, then the result is translated by the pose.
    """
    zx_local = np.asarray(zx_local, dtype=float)
    zy_local = np.asarray(zy_local, dtype=float)
    rng = np.hypot(zx_local, zy_local)
    theta = np.arctan2(zy_local, zx_local)
    ang = np.asarray(phi, dtype=float) + theta
    return np.asarray(x) + rng * np.cos(ang), np.asarray(y) + rng * np.sin(ang)


def local_to_global(pose: ProbePose, det: LocalDetection, offset: tuple[float, float] = (0.0, 0.0)) -> GlobalDetection:
    """Convert a single vehicle-frame detection to the global frame.

    ``offset`` is an optional rigid mounting offset of the reporting sensor,
    added to the reported point before conversion.
    """
    zx = det.zx_local + offset[0]
    zy = det.zy_local + offset[1]
    if zx == 0.0 and zy == 0.0:
        raise GeoSyncError("zero-length detection vector has no bearing")
    gx, gy = rotate_translate(pose.x, pose.y, pose.phi, zx, zy)
    return GlobalDetection(det.t, float(gx), float(gy), pose.t)


# --------------------------------------------------------------------------
# synchronization


def _check_sorted(t: np.ndarray, what: str, strict: bool) -> None:
    if len(t) < 2:
        return
    d = np.diff(t)
    if (strict and np.any(d <= 0)) or np.any(d < 0):
        raise GeoSyncError(f"{what} stream is not time-sorted")


def synchronize(
    poses: PoseStream,
    dets: LocalDetections,
    tol: float = DEFAULT_SYNC_TOL,
    sensor_offsets: dict[int, tuple[float, float]] | None = None,
) -> SyncResult:
    """Pair every radar detection with the nearest GPS pose in time.

    The GPS clock is the reference.  A detection further than ``tol`` from
    every pose is dropped; on an exact tie the earlier pose wins.
    """
    if tol <= 0:
        raise GeoSyncError("sync tolerance must be positive")
    if len(poses) == 0:
        raise GeoSyncError("empty pose stream")
    _check_sorted(poses.t, "pose", strict=True)
    _check_sorted(dets.t, "detection", strict=False)
    if len(dets) == 0:
        return SyncResult(GlobalDetections.empty(), 0, np.empty(0, dtype=int))

    pt = poses.t
    right = np.searchsorted(pt, dets.t, side="left")
    left = np.clip(right - 1, 0, len(pt) - 1)
    right = np.clip(right, 0, len(pt) - 1)
    d_left = np.abs(dets.t - pt[left])
    d_right = np.abs(pt[right] - dets.t)
    idx = np.where(d_left <= d_right, left, right)
    dt = np.abs(dets.t - pt[idx])
    keep = dt <= tol

    zx = dets.zx_local.copy()
    zy = dets.zy_local.copy()
    if sensor_offsets:
        for sid, (ox, oy) in sensor_offsets.items():
            m = dets.sensor_id == sid
            zx[m] += ox
            zy[m] += oy
    degenerate = (zx == 0.0) & (zy == 0.0)
    if np.any(degenerate & keep):
        raise GeoSyncError("zero-length detection vector has no bearing")

    idx = idx[keep]
    gx, gy = rotate_translate(poses.x[idx], poses.y[idx], poses.phi[idx], zx[keep], zy[keep])
    out = GlobalDetections(dets.t[keep], gx, gy, pt[idx])
    return SyncResult(out, int(np.count_nonzero(~keep)), idx)


# --------------------------------------------------------------------------
# segmentation


def split_indices(phi: np.ndarray, threshold: float = SPLIT_ANGLE) -> list[int]:
    """Indices where a new segment starts (first pose after the heading has
    drifted strictly more than ``threshold`` from the segment start)."""
    phi = np.asarray(phi, dtype=float)
    splits = []
    acc = 0.0
    for i in range(1, len(phi)):
        acc += wrap_angle(phi[i] - phi[i - 1])
        if abs(acc) > threshold:
            splits.append(i)
            acc = 0.0
    return splits


def segment_trip(
    poses: PoseStream,
    dets: GlobalDetections,
    exclusion: float = DEFAULT_TURN_EXCLUSION,
    threshold: float = SPLIT_ANGLE,
) -> list[TripSegment]:
    """Cut a synchronized trip into segments at heading changes beyond +-90 deg.

    Poses within ``exclusion`` seconds of a split are discarded along with
    the detections paired to them.
    """
    if len(poses) == 0:
        return []
    starts = split_indices(poses.phi, threshold)
    bounds = [0, *starts, len(poses)]
    split_times = poses.t[starts] if starts else np.empty(0)

    drop = np.zeros(len(poses), dtype=bool)
    for ts in split_times:
        drop |= np.abs(poses.t - ts) <= exclusion

    det_pose = np.searchsorted(poses.t, dets.source_pose_t) if len(dets) else np.empty(0, dtype=int)
    segments = []
    for sid, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        keep = np.arange(a, b)
        keep = keep[~drop[keep]]
        seg_poses = poses.take(keep)
        if len(dets):
            in_seg = (det_pose >= a) & (det_pose < b)
            in_seg &= ~drop[np.clip(det_pose, 0, len(poses) - 1)]
            seg_dets = dets.take(np.flatnonzero(in_seg))
        else:
            seg_dets = GlobalDetections.empty()
        segments.append(TripSegment(sid, seg_poses, seg_dets, _mean_speed(seg_poses), float(poses.phi[a])))
    return segments


def _mean_speed(poses: PoseStream) -> float:
    if len(poses) < 2:
        return 0.0
    dur = poses.t[-1] - poses.t[0]
    if dur <= 0:
        return 0.0
    step = np.hypot(np.diff(poses.x), np.diff(poses.y))
    return float(np.sum(step) / dur)
