"""CSV and JSON artifacts exchanged between the command-line steps.

Floats are written with ``repr`` so a read-back is exact and reruns are
byte-identical.  Lines starting with ``#`` are header comments recording
units and are skipped on read.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geo_sync import LocalDetections, PoseStream, latlon_to_planar, utm_zone
from .mapmatch import SegmentEstimate, SpaceState


class ArtifactError(ValueError):
    pass


def _f(x) -> str:
    return repr(float(x))


def _write(path, comments: Sequence[str], header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read(path, required: Sequence[str]) -> tuple[list[str], list[tuple[int, dict[str, str]]]]:
    """Header and (line number, row) pairs; raises naming the file on problems."""
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"{path}: no such file")
    with open(path, newline="") as fh:
        lines = [(i + 1, ln) for i, ln in enumerate(fh) if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ArtifactError(f"{path}: empty file")
    header = next(csv.reader([lines[0][1]]))
    missing = [c for c in required if c not in header]
    if missing:
        raise ArtifactError(f"{path}:{lines[0][0]}: missing columns {missing}")
    rows = []
    for lineno, text in lines[1:]:
        vals = next(csv.reader([text]))
        if len(vals) != len(header):
            raise ArtifactError(f"{path}:{lineno}: expected {len(header)} fields, got {len(vals)}")
        rows.append((lineno, dict(zip(header, vals))))
    return header, rows


def _parse(path, lineno: int, row: dict[str, str], name: str, kind=float):
    try:
        return kind(row[name])
    except (TypeError, ValueError):
        raise ArtifactError(f"{path}:{lineno}: bad {name} value {row[name]!r}") from None


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# probe traces


def write_gps(path, poses: PoseStream) -> None:
    _write(
        path,
        ["frame=planar", "units: t s, x m, y m, phi rad"],
        ["t", "x", "y", "phi"],
        ([_f(t), _f(x), _f(y), _f(p)] for t, x, y, p in zip(poses.t, poses.x, poses.y, poses.phi)),
    )


def read_gps(path) -> PoseStream:
    """Planar ``t, x, y, phi`` or geodetic ``t, lat, lon, phi`` (projected to UTM)."""
    header, rows = _read(path, ["t", "phi"])
    if {"x", "y"} <= set(header):
        cols = ("x", "y")
    elif {"lat", "lon"} <= set(header):
        cols = ("lat", "lon")
    else:
        raise ArtifactError(f"{path}: need x,y or lat,lon columns")
    t = np.array([_parse(path, n, r, "t") for n, r in rows])
    a = np.array([_parse(path, n, r, cols[0]) for n, r in rows])
    b = np.array([_parse(path, n, r, cols[1]) for n, r in rows])
    phi = np.array([_parse(path, n, r, "phi") for n, r in rows])
    if cols == ("lat", "lon") and len(t):
        zone = utm_zone(float(b[0]))
        xy = np.array([latlon_to_planar(la, lo, zone) for la, lo in zip(a, b)])
        a, b = xy[:, 0], xy[:, 1]
    return PoseStream(t, a, b, phi)


def write_radar(path, dets: LocalDetections) -> None:
    _write(
        path,
        ["units: t s, zx_local m (forward), zy_local m (left)"],
        ["t", "sensor_id", "zx_local", "zy_local"],
        ([_f(t), int(s), _f(x), _f(y)] for t, s, x, y in zip(dets.t, dets.sensor_id, dets.zx_local, dets.zy_local)),
    )


def read_radar(path) -> LocalDetections:
    _, rows = _read(path, ["t", "sensor_id", "zx_local", "zy_local"])
    return LocalDetections(
        np.array([_parse(path, n, r, "t") for n, r in rows]),
        np.array([_parse(path, n, r, "zx_local") for n, r in rows]),
        np.array([_parse(path, n, r, "zy_local") for n, r in rows]),
        np.array([_parse(path, n, r, "sensor_id", int) for n, r in rows], dtype=int),
    )


# --------------------------------------------------------------------------
# truth and estimates


def write_truth(path, triples: Iterable[tuple[int, int, int]]) -> None:
    _write(path, ["state: 1 occupied, 0 free"], ["space_id", "pass_id", "state"], ([s, p, v] for s, p, v in triples))


def read_truth(path) -> dict[int, dict[int, int]]:
    """pass_id -> {space_id: 0/1}."""
    _, rows = _read(path, ["space_id", "pass_id", "state"])
    out: dict[int, dict[int, int]] = {}
    for n, r in rows:
        state = _parse(path, n, r, "state", int)
        if state not in (0, 1):
            raise ArtifactError(f"{path}:{n}: state must be 0 or 1")
        out.setdefault(_parse(path, n, r, "pass_id", int), {})[_parse(path, n, r, "space_id", int)] = state
    return out


def write_estimates(path, per_pass: Sequence[tuple[int, Sequence[SegmentEstimate]]]) -> None:
    rows = []
    for pass_id, ests in per_pass:
        for est in ests:
            for sid in sorted(est.states):
                rows.append([sid, est.states[sid].name, est.segment_id, pass_id, _f(est.mean_speed)])
    _write(path, ["units: mean_speed m/s"], ["space_id", "state", "segment_id", "pass_id", "mean_speed"], rows)


def read_estimates(path) -> list[tuple[int, SegmentEstimate]]:
    """(pass_id, estimate) pairs in file order of first appearance."""
    _, rows = _read(path, ["space_id", "state", "segment_id", "pass_id", "mean_speed"])
    found: dict[tuple[int, int], SegmentEstimate] = {}
    for n, r in rows:
        key = (_parse(path, n, r, "pass_id", int), _parse(path, n, r, "segment_id", int))
        try:
            state = SpaceState[r["state"]]
        except KeyError:
            raise ArtifactError(f"{path}:{n}: unknown state {r['state']!r}") from None
        est = found.setdefault(key, SegmentEstimate(key[1], {}, _parse(path, n, r, "mean_speed")))
        est.states[_parse(path, n, r, "space_id", int)] = state
    return [(k[0], e) for k, e in found.items()]


# --------------------------------------------------------------------------
# detection internals


def write_clusters(path, per_segment) -> None:
    """``per_segment`` yields (pass_id, segment_id, ClusterSet)."""
    rows = []
    for pass_id, seg_id, cs in per_segment:
        t = cs.t if cs.t is not None else np.full(len(cs.points), np.nan)
        for ti, (x, y), lab in zip(t, cs.points, cs.labels):
            rows.append([pass_id, seg_id, _f(ti), _f(x), _f(y), int(lab)])
    _write(path, ["units: t s, zx m, zy m (global planar); label -1 is noise"], ["pass_id", "segment_id", "t", "zx", "zy", "label"], rows)


def cluster_metadata(per_segment) -> list[dict]:
    return [
        {
            "pass_id": pass_id,
            "segment_id": seg_id,
            "method": cs.method.value,
            "bandwidth": cs.bandwidth,
            "k": cs.n_clusters,
            "centroids": [[float(a), float(b)] for a, b in cs.centroids],
        }
        for pass_id, seg_id, cs in per_segment
    ]


def write_boundaries(path, per_segment) -> None:
    """``per_segment`` yields (pass_id, segment_id, boundaries, gaps)."""
    rows = []
    for pass_id, seg_id, bds, gaps in per_segment:
        by_pair = {g.pair: g for g in gaps}
        for bd in bds:
            g = by_pair.get((bd.left_cluster, bd.right_cluster))
            rows.append(
                [
                    pass_id,
                    seg_id,
                    bd.left_cluster,
                    bd.right_cluster,
                    _f(bd.w[0]),
                    _f(bd.w[1]),
                    _f(bd.b),
                    _f(bd.margin_width),
                    _f(bd.slack_total),
                    _f(g.gap_distance) if g else "",
                    g.free_spaces if g else "",
                ]
            )
    _write(
        path,
        ["units: b m, margin_width m, slack_total m, gap_distance m"],
        ["pass_id", "segment_id", "left", "right", "w_x", "w_y", "b", "margin_width", "slack_total", "gap_distance", "free_spaces"],
        rows,
    )


def write_gaps(path, per_segment) -> None:
    """``per_segment`` yields (pass_id, segment_id, gaps); edge gaps use -1 for the missing side."""
    rows = []
    for pass_id, seg_id, gaps in per_segment:
        for g in gaps:
            rows.append(
                [pass_id, seg_id, "" if g.row is None else g.row, g.pair[0], g.pair[1], _f(g.gap_distance), g.free_spaces, _f(g.lo), _f(g.hi)]
            )
    _write(
        path,
        ["units: gap_distance m, lo m, hi m (along-track)"],
        ["pass_id", "segment_id", "row", "left", "right", "gap_distance", "free_spaces", "lo", "hi"],
        rows,
    )


# --------------------------------------------------------------------------
# evaluation outputs


def write_reports(path, reports) -> None:
    def cell(v):
        return "" if v is None else _f(v)

    _write(
        path,
        ["empty rate cells are undefined (zero denominator)", "units: mean_speed m/s"],
        ["label", "segment_id", "type1_rate", "type2_rate", "n_occ_observed", "n_free_observed", "mean_speed"],
        ([r.label, r.segment_id, cell(r.type1_rate), cell(r.type2_rate), r.n_occ_observed, r.n_free_observed, _f(r.mean_speed)] for r in reports),
    )


def write_table(path, header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()) -> None:
    _write(path, comments, header, ([_f(v) if isinstance(v, (float, np.floating)) else v for v in row] for row in rows))


def write_columns(path, a: Sequence[float], b: Sequence[float]) -> None:
    """Plot-ready whitespace-separated two-column data."""
    with open(path, "w") as fh:
        for x, y in zip(a, b):
            fh.write(f"{float(x)!r} {float(y)!r}\n")
