"""Command-line driver: ``parkdetect simulate|detect|tune|fuse|eval``.

Every subcommand writes its artifacts plus ``manifest.json`` (arguments,
seed and sha256 of each artifact) into ``--out``, which defaults to
``$PARKDETECT_OUT`` and then ``./parkdetect_out``.  Exit status is 0 on
success, 2 on usage errors and 1 when inputs are missing or malformed.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
from pathlib import Path

from . import __version__
from . import bayes
from . import evaluation as ev
from . import fileio
from . import simulate as sim
from .clustering import MAX_VEHICLE_LENGTH, MIN_VEHICLE_WIDTH, Method
from .geo_sync import GeoSyncError
from .mapmatch import MapError, ParkingMap, SpaceState
from .pipeline import PipelineConfig, detect_trip

OUT_ENV = "PARKDETECT_OUT"
DEFAULT_OUT = "parkdetect_out"
PRESETS = ("fig1", "offstreet", "onstreet")
METHODS = {"msc": Method.MSC, "kmeans": Method.KMEANS, "gmm-aic": Method.GMM_AIC, "gmm-y": Method.GMM_Y}


class CommandError(Exception):
    """Runtime failure reported with exit status 1."""


# --------------------------------------------------------------------------
# argument types


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _non_negative_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _probability(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return v


def _bandwidth(text: str) -> float:
    v = float(text)
    if not MIN_VEHICLE_WIDTH <= v <= MAX_VEHICLE_LENGTH:
        raise argparse.ArgumentTypeError(f"bandwidth {text} m outside the admissible range [{MIN_VEHICLE_WIDTH}, {MAX_VEHICLE_LENGTH}] m")
    return v


def _grid(text: str) -> list[float]:
    try:
        grid = ev.parse_grid(text)
    except (ev.EvaluationError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    for bw in grid:
        _bandwidth(repr(bw))
    return grid


# --------------------------------------------------------------------------
# parser


def _scenario_flags(p: argparse.ArgumentParser, seed_required: bool = True) -> None:
    g = p.add_argument_group("scenario")
    g.add_argument("--preset", choices=PRESETS, default="fig1")
    g.add_argument("--seed", type=_non_negative_int, required=seed_required)
    g.add_argument("--spaces", type=_positive_int, help="number of parking spaces")
    g.add_argument("--passes", type=_positive_int, help="number of probe passes")
    g.add_argument("--occupancy", type=_probability, help="occupancy rate")
    g.add_argument("--speed", type=_positive_float, help="fixed probe speed, m/s")
    g.add_argument("--noise", type=float, help="radar noise sigma, m")
    g.add_argument("--clutter", type=float, help="clutter rate, points/s per sensor")
    g.add_argument("--detection-prob", type=_probability)


def _out_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")


def _pipeline_flags(p: argparse.ArgumentParser, bandwidth: bool = True) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--method", choices=sorted(METHODS), default="msc")
    if bandwidth:
        g.add_argument("--bandwidth", type=_bandwidth, help="mean-shift bandwidth, m (default: preset's)")
    g.add_argument("--min-cluster-size", type=_positive_int)
    g.add_argument("--one-step", action="store_true", help="assign clusters to spaces directly, without gap detection")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parkdetect", description="Parking occupancy from probe-vehicle radar points.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a scenario and its probe traces")
    _scenario_flags(p)
    _out_flag(p)

    p = sub.add_parser("detect", help="run the detection pipeline on simulated or recorded traces")
    p.add_argument("--input", type=Path, required=True, help="directory with map.json, gps_<k>.csv, radar_<k>.csv")
    p.add_argument("--seed", type=_non_negative_int, default=0, help="seed for the baseline methods")
    _pipeline_flags(p)
    _out_flag(p)

    p = sub.add_parser("tune", help="sweep the mean-shift bandwidth")
    _scenario_flags(p)
    p.add_argument("--scenarios", type=_positive_int, default=1, help="scenarios with seeds seed, seed+1, ...")
    p.add_argument("--grid", type=_grid, default=ev.parse_grid("1.5:0.5:5.5"), help="start:step:stop or a,b,c (m)")
    p.add_argument("--objective", choices=sorted(ev.OBJECTIVES), default="sum")
    _pipeline_flags(p, bandwidth=False)
    _out_flag(p)

    p = sub.add_parser("fuse", help="fuse trip reports into a posterior occupancy snapshot")
    _scenario_flags(p, seed_required=False)
    p.add_argument("--estimates", type=Path, nargs="+", help="estimate files, one per vehicle; each pass is one trip")
    p.add_argument("--map", type=Path, help="parking map listing the spaces to track")
    p.add_argument("--prior", type=Path, help="posterior snapshot to start from")
    p.add_argument("--trips", type=_positive_int, default=5, help="simulated trips when no estimates are given")
    p.add_argument("--e1", type=float, default=0.15, help="P(report free | occupied)")
    p.add_argument("--e2", type=float, default=0.05, help="P(report occupied | free)")
    _pipeline_flags(p)
    _out_flag(p)

    p = sub.add_parser("eval", help="error rates, histogram and speed regression")
    _scenario_flags(p, seed_required=False)
    p.add_argument("--also", choices=PRESETS, action="append", default=[], help="pool another preset's segments")
    p.add_argument("--scenarios", type=_positive_int, default=1)
    p.add_argument("--estimates", type=Path, help="estimate file from detect")
    p.add_argument("--truth", type=Path, help="truth file matching --estimates")
    p.add_argument("--bins", type=_positive_int, default=10)
    p.add_argument("--regress", choices=["speed"])
    p.add_argument("--response", choices=["type1", "type2"], default="type1")
    _pipeline_flags(p)
    _out_flag(p)
    return parser


# --------------------------------------------------------------------------
# helpers


def _out_dir(args) -> Path:
    out = args.out or Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CommandError(f"cannot write to {out}: {exc.strerror or exc}") from None
    return out


def _overrides(args) -> dict:
    keys = {
        "spaces": "n_spaces",
        "passes": "n_passes",
        "occupancy": "occupancy_rate",
        "noise": "noise_sigma",
        "clutter": "clutter_rate",
        "detection_prob": "detection_prob",
    }
    out = {dst: getattr(args, src) for src, dst in keys.items() if getattr(args, src, None) is not None}
    if out.get("occupancy_rate") is not None:
        out["n_occupied"] = None
    if getattr(args, "speed", None) is not None:
        out["speed"] = args.speed
        out["speed_range"] = None
    return out


def _preset(name: str, seed: int, overrides: dict) -> sim.Preset:
    return sim.preset(name, seed, **overrides)


def _pipeline(args, preset_name: str | None = None) -> PipelineConfig:
    base = ev.preset_pipeline(preset_name) if preset_name else PipelineConfig()
    changes = {"method": METHODS[args.method], "seed": getattr(args, "seed", None) or 0, "one_step": args.one_step}
    if getattr(args, "bandwidth", None) is not None:
        changes["bandwidth"] = args.bandwidth
    if args.min_cluster_size is not None:
        changes["min_cluster_size"] = args.min_cluster_size
    return PipelineConfig(**{**base.__dict__, **changes})


def _manifest(out: Path, args, artifacts: list[str]) -> None:
    config = {}
    for k, v in sorted(vars(args).items()):
        if k == "out":
            continue
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, list):
            v = [str(x) if isinstance(x, Path) else x for x in v]
        config[k] = v
    fileio.write_json(
        out / "manifest.json",
        {
            "command": args.command,
            "seed": getattr(args, "seed", None),
            "version": __version__,
            "config": config,
            "artifacts": {name: fileio.sha256(out / name) for name in sorted(artifacts)},
        },
    )


def _trace_files(directory: Path) -> list[tuple[int, Path, Path]]:
    if not directory.is_dir():
        raise CommandError(f"{directory}: no such directory")
    found = []
    for gps in sorted(directory.glob("gps_*.csv")):
        m = re.fullmatch(r"gps_(\d+)\.csv", gps.name)
        if m is None:
            continue
        radar = directory / f"radar_{m.group(1)}.csv"
        if not radar.is_file():
            raise CommandError(f"{radar}: no such file")
        found.append((int(m.group(1)), gps, radar))
    if not found:
        raise CommandError(f"{directory}: no gps_<k>.csv traces")
    return sorted(found)


def _load_map(path: Path) -> ParkingMap:
    if not path.is_file():
        raise CommandError(f"{path}: no such file")
    try:
        return ParkingMap.load(path)
    except ValueError as exc:
        raise CommandError(f"{path}: {exc}") from None


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    p = _preset(args.preset, args.seed, _overrides(args))
    out = _out_dir(args)
    pmap, timeline = sim.generate_scenario(p.scenario)
    path = sim.default_path(p.scenario, pmap)
    pmap.save(out / "map.json")
    fileio.write_truth(out / "truth.csv", timeline.rows())
    names = ["map.json", "truth.csv"]
    for k in range(timeline.n_passes):
        speed = sim.pass_speed(p, args.seed, k)
        poses, dets = sim.generate_trip(pmap, timeline.vehicles[k], path, speed, p.sensors, ev.trip_seed(args.seed, k))
        fileio.write_gps(out / f"gps_{k}.csv", poses)
        fileio.write_radar(out / f"radar_{k}.csv", dets)
        names += [f"gps_{k}.csv", f"radar_{k}.csv"]
    _manifest(out, args, names)
    occupied = int(timeline.states[0].sum())
    print(f"spaces {len(pmap)} passes {timeline.n_passes} events {len(timeline.events)} occupied {occupied}")
    return 0


def _detect_dir(directory: Path, cfg: PipelineConfig):
    traces = _trace_files(directory)
    pmap = _load_map(directory / "map.json")
    results = []
    for k, gps, radar in traces:
        poses = fileio.read_gps(gps)
        dets = fileio.read_radar(radar)
        results.append((k, detect_trip(poses, dets, pmap, cfg)))
    return pmap, results


def cmd_detect(args) -> int:
    cfg = _pipeline(args)
    _, results = _detect_dir(args.input, cfg)
    out = _out_dir(args)
    fileio.write_estimates(out / "estimates.csv", [(k, [r.estimate for r in res]) for k, res in results])
    segs = [(k, r.segment.segment_id, r) for k, res in results for r in res]
    fileio.write_clusters(out / "clusters.csv", ((k, s, r.clusters) for k, s, r in segs))
    fileio.write_json(out / "clusters_meta.json", fileio.cluster_metadata((k, s, r.clusters) for k, s, r in segs))
    fileio.write_boundaries(out / "boundaries.csv", ((k, s, r.boundaries, r.gaps) for k, s, r in segs))
    fileio.write_gaps(out / "gaps.csv", ((k, s, r.gaps) for k, s, r in segs))
    _manifest(out, args, ["estimates.csv", "clusters.csv", "clusters_meta.json", "boundaries.csv", "gaps.csv"])
    counts = {st: 0 for st in SpaceState}
    for _, _, r in segs:
        for st in r.estimate.states.values():
            counts[st] += 1
    print(
        f"passes {len(results)} segments {len(segs)} occupied {counts[SpaceState.OCCUPIED]} "
        f"free {counts[SpaceState.FREE]} unobserved {counts[SpaceState.UNOBSERVED]}"
    )
    return 0


def _suite(args, presets: list[str]) -> list[ev.TripRecord]:
    trips = []
    overrides = _overrides(args)
    for name in presets:
        _preset(name, args.seed, overrides)  # validate before simulating anything
        trips += ev.simulate_trips(name, range(args.seed, args.seed + args.scenarios), **overrides)
    return trips


def cmd_tune(args) -> int:
    cfg = _pipeline(args, args.preset)
    trips = _suite(args, [args.preset])
    out = _out_dir(args)
    curve = ev.tune_bandwidth(trips, args.grid, cfg, args.objective)
    fileio.write_table(out / "tuning.csv", ["bandwidth", "type1", "type2", "objective"], curve.rows(), ["units: bandwidth m"])
    fileio.write_columns(out / "tuning.dat", curve.bandwidths, curve.objective)
    _manifest(out, args, ["tuning.csv", "tuning.dat"])
    print(f"bandwidths {len(curve.bandwidths)} optimum {curve.optimum!r} objective {args.objective}")
    return 0


def cmd_fuse(args) -> int:
    try:
        model = bayes.MeasurementModel(args.e1, args.e2)
    except bayes.BayesError as exc:
        raise _UsageError(str(exc)) from None
    observations = []
    if args.estimates:
        for vid, path in enumerate(args.estimates):
            by_pass: dict[int, list] = {}
            for k, est in fileio.read_estimates(path):
                by_pass.setdefault(k, []).append(est)
            observations += [bayes.TripObservation(vid, k, ests, time=float(k)) for k, ests in sorted(by_pass.items())]
        space_ids = set(_load_map(args.map).ids) if args.map else {s for o in observations for s in o.reports()}
    else:
        if args.seed is None:
            raise _UsageError("--seed is required when simulating trips")
        overrides = {**_overrides(args), "n_passes": args.trips}
        trips = ev.simulate_trips(args.preset, [args.seed], None, **overrides)
        cfg = _pipeline(args, args.preset)
        for k, trip in enumerate(trips):
            ests = [r.estimate for r in detect_trip(trip.poses, trip.detections, trip.pmap, cfg)]
            observations.append(bayes.TripObservation(k, 0, ests, time=float(k)))
        space_ids = set(trips[0].pmap.ids) if trips else set()
    prior = bayes.OccupancyPosterior.from_csv(args.prior) if args.prior else bayes.OccupancyPosterior.uniform(space_ids)
    for sid in space_ids - set(prior.log_odds):
        prior.log_odds[sid] = 0.0
        prior.trip_count[sid] = 0
        prior.last_update[sid] = 0.0
    post = bayes.fuse_fleet(prior, observations, model)
    out = _out_dir(args)
    post.to_csv(out / "posterior.csv")
    _manifest(out, args, ["posterior.csv"])
    probs = post.probabilities()
    confident = sum(1 for p in probs.values() if p > 0.95 or p < 0.05)
    print(f"spaces {len(probs)} trips {len(observations)} confident {confident}")
    return 0


def cmd_eval(args) -> int:
    if args.estimates or args.truth:
        if not (args.estimates and args.truth):
            raise _UsageError("--estimates and --truth go together")
        truth = fileio.read_truth(args.truth)
        reports = []
        for k, est in fileio.read_estimates(args.estimates):
            if k not in truth:
                raise CommandError(f"{args.truth}: no truth for pass {k}")
            reports.append(ev.score_segment(est, truth[k], f"pass:{k}"))
    else:
        if args.seed is None:
            raise _UsageError("--seed is required when simulating a suite")
        reports = []
        for name in [args.preset, *args.also]:
            trips = _suite(args, [name])
            reports += ev.evaluate_trips(trips, _pipeline(args, name))
    out = _out_dir(args)
    fileio.write_reports(out / "reports.csv", reports)
    hist = ev.histogram_rates(reports, args.bins, args.response)
    fileio.write_table(
        out / "histogram.csv",
        ["bin_lo", "bin_hi", "count"],
        ((float(a), float(b), int(c)) for a, b, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts)),
        [f"rate {args.response}; undefined {hist.n_undefined}"],
    )
    fileio.write_columns(out / "histogram.dat", 0.5 * (hist.edges[:-1] + hist.edges[1:]), hist.counts)
    t1, t2 = ev.mean_rate(reports, "type1"), ev.mean_rate(reports, "type2")
    fileio.write_table(
        out / "summary.csv",
        ["segments", "mean_type1", "mean_type2"],
        [(len(reports), "" if t1 is None else float(t1), "" if t2 is None else float(t2))],
    )
    names = ["reports.csv", "histogram.csv", "histogram.dat", "summary.csv"]
    fmt = lambda v: "nan" if v is None else f"{v:.4f}"  # noqa: E731
    print(f"segments {len(reports)} type1 {fmt(t1)} type2 {fmt(t2)}")
    if args.regress:
        try:
            fit = ev.regress_error_speed(reports, args.response)
        except ev.EvaluationError as exc:
            raise CommandError(str(exc)) from None
        fileio.write_table(
            out / "regression.csv",
            ["response", "slope", "intercept", "p_value", "r2", "n"],
            [(args.response, fit.slope, fit.intercept, fit.p_value, fit.r2, fit.n)],
        )
        names.append("regression.csv")
        print(f"slope {fit.slope:.6g} intercept {fit.intercept:.6g} p_value {fit.p_value:.3g} r2 {fit.r2:.4f}")
    _manifest(out, args, names)
    return 0


class _UsageError(Exception):
    pass


COMMANDS = {"simulate": cmd_simulate, "detect": cmd_detect, "tune": cmd_tune, "fuse": cmd_fuse, "eval": cmd_eval}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (_UsageError, sim.SimulationError) as exc:
        parser.error(str(exc))
    except (CommandError, fileio.ArtifactError, MapError, GeoSyncError, bayes.BayesError, ev.EvaluationError) as exc:
        print(f"parkdetect {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
