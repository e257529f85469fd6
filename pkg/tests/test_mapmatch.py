import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parkdetect import evaluation as ev
from parkdetect import pipeline as pl
from parkdetect.clustering import ClusterSet, Method
from parkdetect.geo_sync import GlobalDetections, PoseStream, TripSegment
from parkdetect.margins import GapReport
from parkdetect.mapmatch import (
    MapError,
    ParkingMap,
    ParkingSpace,
    SpaceKind,
    SpaceState,
    assign_clusters,
    coverage_mask,
    match_segment,
)

PITCH = 2.5


def row_map(n=17, lateral=3.5, pitch=PITCH, rot=0.0, shift=(0.0, 0.0)):
    c, s = math.cos(rot), math.sin(rot)
    spaces = []
    for i in range(n):
        x, y = i * pitch, lateral
        spaces.append(
            ParkingSpace(i, (c * x - s * y + shift[0], s * x + c * y + shift[1]), rot + math.pi / 2, 5.0, pitch, SpaceKind.PERPENDICULAR)
        )
    return ParkingMap(spaces)


def drive(x0=-5.0, x1=45.0, rot=0.0, shift=(0.0, 0.0), n=200):
    x = np.linspace(x0, x1, n)
    c, s = math.cos(rot), math.sin(rot)
    poses = PoseStream(x / 2.0, c * x + shift[0], s * x + shift[1], np.full(n, rot))
    return TripSegment(0, poses, GlobalDetections.empty(), 2.0)


def clusters_at(centres, axis=0.0):
    C = np.asarray(centres, dtype=float).reshape(-1, 2)
    return ClusterSet(C, np.arange(len(C)), C, Method.MSC, axis)


def gap(lo, hi, free, pair=(0, 1)):
    return GapReport(pair, hi - lo, free, PITCH, lo, hi)


# -- coverage --------------------------------------------------------------------


def test_space_beside_path_observed():
    pmap = ParkingMap([ParkingSpace(0, (0.0, 2.0), math.pi / 2, 5.0, 2.5, SpaceKind.PERPENDICULAR)])
    seg = TripSegment(0, PoseStream([0.0], [0.0], [0.0], [0.0]), GlobalDetections.empty(), 1.0)
    assert coverage_mask(seg, pmap) == {0}


def test_distant_space_unobserved():
    pmap = ParkingMap([ParkingSpace(0, (0.0, 50.0), math.pi / 2, 5.0, 2.5, SpaceKind.PERPENDICULAR)])
    seg = TripSegment(0, PoseStream([0.0], [0.0], [0.0], [0.0]), GlobalDetections.empty(), 1.0)
    assert coverage_mask(seg, pmap) == set()


def test_range_boundary_inclusive():
    pmap = ParkingMap([ParkingSpace(0, (0.0, 10.0), math.pi / 2, 5.0, 2.5, SpaceKind.PERPENDICULAR)])
    seg = TripSegment(0, PoseStream([0.0], [0.0], [0.0], [0.0]), GlobalDetections.empty(), 1.0)
    assert coverage_mask(seg, pmap, range_m=10.0) == {0}
    assert coverage_mask(seg, pmap, range_m=9.999) == set()


def test_coverage_argument_errors():
    seg = drive()
    with pytest.raises(MapError):
        coverage_mask(seg, row_map(), fov_deg=0.0)
    with pytest.raises(MapError):
        coverage_mask(seg, row_map(), range_m=0.0)


# -- matching --------------------------------------------------------------------


def test_cluster_on_space_centre_marks_it_occupied():
    pmap = row_map()
    est = match_segment(clusters_at([pmap.space(7).center]), [], pmap, drive())
    assert est.states[7] is SpaceState.OCCUPIED
    assert est.assignment == {0: 7}


def test_covered_gap_spaces_free():
    pmap = row_map()
    cl = clusters_at([pmap.space(3).center, pmap.space(7).center])
    # band between the two cars spans spaces 4..6
    est = match_segment(cl, [gap(3 * PITCH + 1.0, 7 * PITCH - 1.0, 3)], pmap, drive())
    assert [est.states[i] for i in (3, 4, 5, 6, 7)] == [
        SpaceState.OCCUPIED,
        SpaceState.FREE,
        SpaceState.FREE,
        SpaceState.FREE,
        SpaceState.OCCUPIED,
    ]


def test_gap_frees_at_most_its_count_nearest_middle_first():
    pmap = row_map()
    est = match_segment(clusters_at([]), [gap(2 * PITCH, 8 * PITCH, 1)], pmap, drive())
    assert [i for i, s in est.states.items() if s is SpaceState.FREE] == [5]


def test_no_gap_no_free_in_two_step():
    pmap = row_map()
    est = match_segment(clusters_at([pmap.space(2).center]), [], pmap, drive())
    assert est.count(SpaceState.FREE) == 0


def test_one_step_frees_every_unmatched_observed_space():
    pmap = row_map()
    est = match_segment(clusters_at([pmap.space(2).center]), [], pmap, drive(), one_step=True)
    obs = est.observed()
    assert est.count(SpaceState.OCCUPIED) == 1
    assert est.count(SpaceState.FREE) == len(obs) - 1


def test_tie_goes_to_lower_id_and_is_logged():
    pmap = row_map()
    mid = 0.5 * (np.array(pmap.space(4).center) + np.array(pmap.space(5).center))
    est = match_segment(clusters_at([mid]), [], pmap, drive())
    assert est.assignment == {0: 4}
    assert est.ties == [0]


def test_one_to_one_with_surplus_reported():
    pmap = row_map(n=3)
    c = pmap.space(1).center
    est = match_segment(clusters_at([(c[0] - 0.2, c[1]), (c[0] + 0.1, c[1])]), [], pmap, drive(x0=-5, x1=10))
    # total displacement 2.3 + 0.1 beats 0.2 + 2.4
    assert est.assignment == {0: 0, 1: 1}
    big = pmap.space(0).center
    far = clusters_at([c, (big[0] + 40.0, big[1])])
    est = match_segment(far, [], pmap, drive(x0=-5, x1=10))
    assert est.surplus_clusters == [1]


def test_cluster_on_wrong_side_not_matched():
    pmap = row_map()
    c = pmap.space(6).center
    est = match_segment(clusters_at([(c[0], -c[1])]), [], pmap, drive())
    assert est.assignment == {} and est.surplus_clusters == [0]


def test_empty_map_rejected():
    with pytest.raises(MapError):
        match_segment(clusters_at([]), [], ParkingMap([]), drive())


def test_space_geometry_validated():
    with pytest.raises(MapError):
        ParkingSpace(0, (0, 0), 0.0, 2.0, 2.5, SpaceKind.PARALLEL)
    with pytest.raises(MapError):
        ParkingMap([ParkingSpace(1, (0, 0), 0, 5, 2, SpaceKind.PARALLEL)] * 2)


def test_map_round_trip(tmp_path):
    pmap = row_map(n=4)
    pmap.save(tmp_path / "m.json")
    back = ParkingMap.load(tmp_path / "m.json")
    assert back.spaces == pmap.spaces and back.rows == pmap.rows
    assert back.adjacency()[1] == [0, 2]


def test_malformed_map_rejected(tmp_path):
    (tmp_path / "m.json").write_text('{"spaces": [{"id": 1}]}')
    with pytest.raises(MapError):
        ParkingMap.load(tmp_path / "m.json")


occupancy = st.lists(st.booleans(), min_size=17, max_size=17)


@given(occupancy, st.floats(-math.pi, math.pi), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_matching_invariant_under_rigid_motion(occ, rot, dx, dy):
    base, moved = row_map(), row_map(rot=rot, shift=(dx, dy))
    centres = [base.space(i).center for i, o in enumerate(occ) if o]
    c, s = math.cos(rot), math.sin(rot)
    moved_centres = [(c * x - s * y + dx, s * x + c * y + dy) for x, y in centres]
    a = match_segment(clusters_at(centres), [], base, drive())
    b = match_segment(clusters_at(moved_centres, rot), [], moved, drive(rot=rot, shift=(dx, dy)))
    assert a.states == b.states and a.assignment == b.assignment


@given(st.lists(st.floats(-5.0, 45.0), max_size=25))
def test_one_to_one_and_partition(xs):
    pmap = row_map()
    est = match_segment(clusters_at([(x, 3.5) for x in sorted(xs)]), [], pmap, drive())
    assert len(set(est.assignment.values())) == len(est.assignment)
    assert est.count(SpaceState.OCCUPIED) >= len(est.assignment)
    assert set(est.states) == set(pmap.ids)
    obs = coverage_mask(drive(), pmap)
    assert {i for i, s in est.states.items() if s is not SpaceState.UNOBSERVED} == obs
    assert len(est.assignment) + len(est.surplus_clusters) == len(xs)


def test_assign_respects_candidates():
    pmap = row_map()
    cl = clusters_at([pmap.space(0).center])
    assignment, surplus, _ = assign_clusters(cl, pmap, {5, 6}, 0.0)
    assert assignment == {} and surplus == [0]


def test_demonstration_lot_matches_truth():
    trip = ev.simulate_trips("fig1", [0])[0]
    (res,) = pl.detect_trip(trip.poses, trip.detections, trip.pmap, ev.preset_pipeline("fig1"))
    states = res.estimate.states
    assert sum(s is SpaceState.OCCUPIED for s in states.values()) == 13
    assert sum(s is SpaceState.FREE for s in states.values()) == 4
    assert all((states[i] is SpaceState.OCCUPIED) == bool(v) for i, v in trip.truth.items())
