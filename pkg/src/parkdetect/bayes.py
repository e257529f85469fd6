"""Recursive per-space occupancy fusion across trips and vehicles."""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mapmatch import SegmentEstimate, SpaceState

LOG_ODDS_CAP = 13.8


class BayesError(ValueError):
    pass


def logistic(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class MeasurementModel:
    """e1 = P(report FREE | occupied), e2 = P(report OCCUPIED | free)."""

    e1: float
    e2: float

    def __post_init__(self):
        for name, v in (("e1", self.e1), ("e2", self.e2)):
            if not (0.0 < v < 1.0) or not math.isfinite(v):
                raise BayesError(f"{name}={v} must lie strictly inside (0, 1)")

    @property
    def occupied_increment(self) -> float:
        return math.log((1.0 - self.e1) / self.e2)

    @property
    def free_increment(self) -> float:
        return math.log(self.e1 / (1.0 - self.e2))


@dataclass
class OccupancyPosterior:
    log_odds: dict[int, float]
    trip_count: dict[int, int] = field(default_factory=dict)
    last_update: dict[int, float] = field(default_factory=dict)
    cap: float = LOG_ODDS_CAP

    @classmethod
    def uniform(cls, space_ids: Iterable[int], cap: float = LOG_ODDS_CAP) -> "OccupancyPosterior":
        ids = sorted(space_ids)
        return cls({i: 0.0 for i in ids}, {i: 0 for i in ids}, {i: 0.0 for i in ids}, cap)

    def copy(self) -> "OccupancyPosterior":
        return OccupancyPosterior(dict(self.log_odds), dict(self.trip_count), dict(self.last_update), self.cap)

    def probability(self, sid: int) -> float:
        return float(logistic(self.log_odds[sid]))

    def probabilities(self) -> dict[int, float]:
        return {sid: self.probability(sid) for sid in sorted(self.log_odds)}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["space_id", "log_odds", "probability", "trip_count"])
            for sid in sorted(self.log_odds):
                w.writerow([sid, repr(self.log_odds[sid]), repr(self.probability(sid)), self.trip_count.get(sid, 0)])

    @classmethod
    def from_csv(cls, path, cap: float = LOG_ODDS_CAP) -> "OccupancyPosterior":
        lo, tc = {}, {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                sid = int(row["space_id"])
                lo[sid] = float(row["log_odds"])
                tc[sid] = int(row["trip_count"])
        return cls(lo, tc, {sid: 0.0 for sid in lo}, cap)


@dataclass
class TripObservation:
    vehicle_id: int
    trip_id: int
    estimate: list[SegmentEstimate]
    # (node id, direction) pairs travelled; informational
    path: list[tuple[int, int]] = field(default_factory=list)
    time: float = 0.0

    def reports(self) -> dict[int, SpaceState]:
        """One report per observed space for the whole trip.

        A space seen in several segments takes the majority verdict; an even
        split counts as OCCUPIED.
        """
        votes: dict[int, list[int]] = {}
        for est in self.estimate:
            for sid, st in est.states.items():
                if st is SpaceState.UNOBSERVED:
                    continue
                v = votes.setdefault(sid, [0, 0])
                v[int(st is SpaceState.OCCUPIED)] += 1
        return {sid: SpaceState.OCCUPIED if occ >= free else SpaceState.FREE for sid, (free, occ) in votes.items()}


def _clamp(x: float, cap: float) -> float:
    return min(cap, max(-cap, x))


def _decay(lo: float, dt: float, half_life: float | None) -> float:
    if half_life is None or dt <= 0:
        return lo
    return lo * 0.5 ** (dt / half_life)


def update(
    prior: OccupancyPosterior,
    obs: TripObservation,
    model: MeasurementModel,
    half_life: float | None = None,
) -> OccupancyPosterior:
    """Bayes update of every space the trip observed; others are untouched.

    With ``half_life`` set (seconds), a space's log-odds first relax toward
    zero by the time elapsed since its last update.
    """
    if half_life is not None and half_life <= 0:
        raise BayesError("half_life must be positive")
    reports = obs.reports()
    unknown = set(reports) - set(prior.log_odds)
    if unknown:
        raise BayesError(f"observation references unknown spaces {sorted(unknown)[:5]}")
    post = prior.copy()
    inc = {SpaceState.OCCUPIED: model.occupied_increment, SpaceState.FREE: model.free_increment}
    for sid, st in reports.items():
        lo = _decay(post.log_odds[sid], obs.time - post.last_update.get(sid, 0.0), half_life)
        post.log_odds[sid] = _clamp(lo + inc[st], post.cap)
        post.trip_count[sid] = post.trip_count.get(sid, 0) + 1
        post.last_update[sid] = obs.time
    return post


def fuse_fleet(
    priors: OccupancyPosterior,
    observations: list[TripObservation],
    model: MeasurementModel,
    half_life: float | None = None,
) -> OccupancyPosterior:
    """Fold all observations into the priors.

    Without decay the per-space report counts are tallied first and applied
    in one step, so the result is bit-identical for any observation order.
    With decay, observations are applied in (time, vehicle, trip) order.
    """
    if half_life is not None:
        post = priors
        for obs in sorted(observations, key=lambda o: (o.time, o.vehicle_id, o.trip_id)):
            post = update(post, obs, model, half_life)
        return post if observations else priors.copy()

    n_occ: dict[int, int] = {}
    n_free: dict[int, int] = {}
    last: dict[int, float] = {}
    for obs in observations:
        reports = obs.reports()
        unknown = set(reports) - set(priors.log_odds)
        if unknown:
            raise BayesError(f"observation references unknown spaces {sorted(unknown)[:5]}")
        for sid, st in reports.items():
            tgt = n_occ if st is SpaceState.OCCUPIED else n_free
            tgt[sid] = tgt.get(sid, 0) + 1
            last[sid] = max(last.get(sid, -math.inf), obs.time)
    post = priors.copy()
    a, b = model.occupied_increment, model.free_increment
    for sid in set(n_occ) | set(n_free):
        k_occ, k_free = n_occ.get(sid, 0), n_free.get(sid, 0)
        post.log_odds[sid] = _clamp(post.log_odds[sid] + (k_occ * a + k_free * b), post.cap)
        post.trip_count[sid] = post.trip_count.get(sid, 0) + k_occ + k_free
        post.last_update[sid] = last[sid]
    return post


def calibrate_model(reports: list[SegmentEstimate], truth: Mapping[int, int] | list[Mapping[int, int]]) -> MeasurementModel:
    """Error rates from labelled reports with add-one / add-two smoothing.

    ``truth`` is either one space -> state map shared by all reports or one
    map per report (1 = occupied, 0 = free).
    """
    truths = list(truth) if isinstance(truth, list) else [truth] * len(reports)
    if len(truths) != len(reports):
        raise BayesError("need one truth map per report")
    fa = occ = miss = free = 0
    for est, tr in zip(reports, truths):
        for sid, st in est.states.items():
            if st is SpaceState.UNOBSERVED:
                continue
            if sid not in tr:
                raise BayesError(f"no ground truth for space {sid}")
            if int(tr[sid]) == 1:
                occ += 1
                fa += st is SpaceState.FREE
            else:
                free += 1
                miss += st is SpaceState.OCCUPIED
    if occ + free == 0:
        raise BayesError("no observed spaces to calibrate from")
    return MeasurementModel((fa + 1) / (occ + 2), (miss + 1) / (free + 2))
