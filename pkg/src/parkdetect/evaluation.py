"""Error rates, bandwidth sweeps, error histograms and the error-vs-speed fit."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from . import simulate as sim
from .clustering import MAX_VEHICLE_LENGTH, MIN_VEHICLE_WIDTH, Method
from .geo_sync import LocalDetections, PoseStream
from .mapmatch import ParkingMap, SegmentEstimate, SpaceState
from .pipeline import PipelineConfig, detect_trip


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorReport:
    segment_id: int
    type1_rate: float | None
    type2_rate: float | None
    n_occ_observed: int
    n_free_observed: int
    mean_speed: float
    n_type1: int = 0
    n_type2: int = 0
    # free-form provenance of the trip the segment came from
    label: str = ""

    def rate(self, which: str) -> float | None:
        if which == "type1":
            return self.type1_rate
        if which == "type2":
            return self.type2_rate
        raise EvaluationError(f"unknown rate {which!r}")


def score_segment(estimate: SegmentEstimate, truth: Mapping[int, int], label: str = "") -> ErrorReport:
    """Confusion counts of one segment estimate against 0/1 truth.

    Type I is a truly occupied space judged free; Type II a truly free space
    judged occupied.  Unobserved spaces are ignored and a rate whose
    denominator is zero is ``None``.
    """
    n_occ = n_free = e1 = e2 = 0
    for sid, st in estimate.states.items():
        if st is SpaceState.UNOBSERVED:
            continue
        if sid not in truth:
            raise EvaluationError(f"no truth for observed space {sid}")
        if truth[sid]:
            n_occ += 1
            e1 += st is SpaceState.FREE
        else:
            n_free += 1
            e2 += st is SpaceState.OCCUPIED
    return ErrorReport(
        estimate.segment_id,
        e1 / n_occ if n_occ else None,
        e2 / n_free if n_free else None,
        n_occ,
        n_free,
        float(estimate.mean_speed),
        e1,
        e2,
        label,
    )


def mean_rate(reports: Sequence[ErrorReport], which: str) -> float | None:
    vals = [r.rate(which) for r in reports if r.rate(which) is not None]
    return float(np.mean(vals)) if vals else None


# --------------------------------------------------------------------------
# simulated trip suites


@dataclass
class TripRecord:
    pmap: ParkingMap
    truth: dict[int, int]
    poses: PoseStream
    detections: LocalDetections
    speed: float
    label: str


def trip_seed(seed: int, pass_id: int) -> int:
    return int(sim.rng_stream(seed, "trip", pass_id).integers(2**31))


def simulate_trips(
    preset_name: str,
    seeds: Sequence[int],
    max_passes: int | None = None,
    **overrides,
) -> list[TripRecord]:
    """Every pass of every seeded scenario of a preset, ready for detection."""
    out = []
    for seed in seeds:
        p = sim.preset(preset_name, seed, **overrides)
        pmap, timeline = sim.generate_scenario(p.scenario)
        path = sim.default_path(p.scenario, pmap)
        passes = timeline.n_passes if max_passes is None else min(max_passes, timeline.n_passes)
        for k in range(passes):
            speed = sim.pass_speed(p, seed, k)
            poses, dets = sim.generate_trip(pmap, timeline.vehicles[k], path, speed, p.sensors, trip_seed(seed, k))
            out.append(TripRecord(pmap, timeline.truth(k), poses, dets, speed, f"{preset_name}:{seed}:{k}"))
    return out


def preset_pipeline(preset_name: str, **changes) -> PipelineConfig:
    p = sim.preset(preset_name)
    return PipelineConfig(bandwidth=p.bandwidth, min_cluster_size=p.min_cluster_size, **changes)


def evaluate_trips(trips: Sequence[TripRecord], cfg: PipelineConfig) -> list[ErrorReport]:
    reports = []
    for trip in trips:
        for res in detect_trip(trip.poses, trip.detections, trip.pmap, cfg):
            reports.append(score_segment(res.estimate, trip.truth, trip.label))
    return reports


# --------------------------------------------------------------------------
# bandwidth tuning


def sum_objective(t1: float, t2: float) -> float:
    return t1 + t2


def type1_weighted_objective(t1: float, t2: float, weight: float = 2.0) -> float:
    return weight * t1 + t2


OBJECTIVES: dict[str, Callable[[float, float], float]] = {
    "sum": sum_objective,
    "type1_weighted": type1_weighted_objective,
}


@dataclass
class TuningCurve:
    bandwidths: list[float]
    type1: list[float]
    type2: list[float]
    objective: list[float]
    objective_name: str = "sum"

    @property
    def optimum(self) -> float:
        """Minimiser of the objective; ties go to the narrower bandwidth."""
        best = min(range(len(self.bandwidths)), key=lambda i: (self.objective[i], self.bandwidths[i]))
        return self.bandwidths[best]

    def rows(self):
        yield from zip(self.bandwidths, self.type1, self.type2, self.objective)


def parse_grid(text: str) -> list[float]:
    """``start:step:stop`` (inclusive) or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise EvaluationError("grid must be start:step:stop")
        lo, step, hi = (float(x) for x in parts)
        if step <= 0 or hi < lo:
            raise EvaluationError("grid needs a positive step and stop >= start")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return [round(lo + i * step, 10) for i in range(n)]
    vals = [float(x) for x in text.split(",") if x.strip()]
    if not vals:
        raise EvaluationError("empty grid")
    return vals


def tune_bandwidth(
    trips: Sequence[TripRecord],
    grid: Sequence[float],
    base: PipelineConfig | None = None,
    objective: str = "sum",
) -> TuningCurve:
    """Mean per-segment Type I/II rates for each bandwidth of ``grid``."""
    if len(grid) == 0:
        raise EvaluationError("empty bandwidth grid")
    if objective not in OBJECTIVES:
        raise EvaluationError(f"unknown objective {objective!r}")
    base = base or PipelineConfig()
    if base.method is Method.MSC:
        bad = [bw for bw in grid if not MIN_VEHICLE_WIDTH <= bw <= MAX_VEHICLE_LENGTH]
        if bad:
            raise EvaluationError(f"bandwidths {bad} outside [{MIN_VEHICLE_WIDTH}, {MAX_VEHICLE_LENGTH}] m")
    fn = OBJECTIVES[objective]
    bws, t1s, t2s, objs = [], [], [], []
    for bw in grid:
        reports = evaluate_trips(trips, base.with_bandwidth(float(bw)))
        t1 = mean_rate(reports, "type1") or 0.0
        t2 = mean_rate(reports, "type2") or 0.0
        bws.append(float(bw))
        t1s.append(t1)
        t2s.append(t2)
        objs.append(fn(t1, t2))
    return TuningCurve(bws, t1s, t2s, objs, objective)


# --------------------------------------------------------------------------
# regression and histograms


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    p_value: float
    r2: float
    n: int


def regress_error_speed(reports: Sequence[ErrorReport], response: str = "type1") -> RegressionResult:
    """OLS of a per-segment error rate on mean speed, two-sided t-test on the slope."""
    pts = [(r.mean_speed, r.rate(response)) for r in reports if r.rate(response) is not None]
    if len(pts) < 3:
        raise EvaluationError("need at least three segments with a defined rate")
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts], dtype=float)
    if np.ptp(x) == 0:
        raise EvaluationError("all speeds are identical")
    if np.ptp(y) == 0:
        return RegressionResult(0.0, float(y[0]), 1.0, 0.0, len(x))
    fit = stats.linregress(x, y)
    return RegressionResult(float(fit.slope), float(fit.intercept), float(fit.pvalue), float(fit.rvalue**2), len(x))


@dataclass(frozen=True)
class RateHistogram:
    edges: np.ndarray
    counts: np.ndarray
    n_undefined: int


def histogram_rates(reports: Sequence[ErrorReport], bins: int, which: str = "type1") -> RateHistogram:
    if bins < 1:
        raise EvaluationError("bins must be >= 1")
    vals = [r.rate(which) for r in reports]
    defined = np.array([v for v in vals if v is not None], dtype=float)
    counts, edges = np.histogram(defined, bins=bins, range=(0.0, 1.0))
    return RateHistogram(edges, counts.astype(int), len(vals) - len(defined))
