import numpy as np

from parkdetect import evaluation as ev
from parkdetect.clustering import Method
from parkdetect.mapmatch import SpaceState
from parkdetect.pipeline import PipelineConfig, detect_trip


def run_preset(name, seed=0, passes=1, **changes):
    (trip,) = ev.simulate_trips(name, [seed], max_passes=passes)[:1]
    return trip, detect_trip(trip.poses, trip.detections, trip.pmap, ev.preset_pipeline(name, **changes))


def test_straight_pass_is_one_segment():
    _, res = run_preset("fig1")
    assert len(res) == 1
    assert res[0].clusters.n_clusters == 13
    assert len(res[0].boundaries) == 12


def test_serpentine_lot_splits_at_turns():
    trip, res = run_preset("offstreet", passes=1)
    assert len(res) == 4
    seen = set().union(*(r.observed for r in res))
    assert seen == set(trip.pmap.ids)


def test_boundary_and_gap_pairs_use_combined_cluster_ids():
    _, res = run_preset("offstreet", passes=1)
    for r in res:
        n = r.clusters.n_clusters
        for b in r.boundaries:
            assert 0 <= b.left_cluster < n and 0 <= b.right_cluster < n
        for g in r.gaps:
            assert all(-1 <= i < n for i in g.pair)
        per_row = sum(max(len(ks) - 1, 0) for ks in r.row_clusters.values())
        assert len(r.boundaries) == per_row


def test_one_step_never_has_more_occupied_than_clusters():
    _, res = run_preset("offstreet", passes=1, one_step=True)
    for r in res:
        assert r.estimate.count(SpaceState.OCCUPIED) <= r.clusters.n_clusters


def test_baseline_methods_run_end_to_end():
    trip, _ = run_preset("fig1")
    for method in (Method.KMEANS, Method.GMM_AIC, Method.GMM_Y):
        (r,) = detect_trip(trip.poses, trip.detections, trip.pmap, PipelineConfig(method=method))
        assert np.all(r.clusters.labels >= 0)


def test_bandwidth_change_only_touches_bandwidth():
    cfg = PipelineConfig(min_cluster_size=5)
    moved = cfg.with_bandwidth(3.0)
    assert moved.bandwidth == 3.0 and moved.min_cluster_size == 5
