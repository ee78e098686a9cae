import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tinylidarnet.expert import expert_policy
from tinylidarnet.scan import MAX_STEER, action_from_physical
from tinylidarnet.sim import (TrackBundle, VehicleState, get_track, in_collision, load_track, march,
                              progress, raycast, run_episode, save_track, start_pose, step)
from tinylidarnet.sim.episode import ProgressTracker, ScanNoise
from tinylidarnet.sim.vehicle import WHEELBASE


def _room(size=10.0, res=0.05):
    """Square room whose interior spans [0, size]^2, one-cell walls outside it."""
    n = int(round(size / res)) + 2
    grid = np.zeros((n, n), dtype=bool)
    grid[0, :] = grid[-1, :] = grid[:, 0] = grid[:, -1] = True
    return TrackBundle("room", grid, res, (-res, -res), np.array([[1.0, 1.0], [2.0, 1.0], [2.0, 2.0]]))


def _wall_ahead(dist=1.0, res=0.05):
    """Vehicle at the origin facing +x, a wall filling x in [dist, dist + res) for |y| <= 10."""
    n = int(round(20 / res))
    grid = np.zeros((n, n), dtype=bool)
    grid[:, int(round((dist + 10) / res))] = True
    return TrackBundle("wall", grid, res, (-10.0, -10.0), np.array([[0.0, 0.0], [0.5, 0], [0.5, 0.5]]))


# -- raycast ---------------------------------------------------------------


def test_room_forward_beam():
    r = raycast(_room(), 5.0, 5.0, 0.0)
    assert len(r) == 1081
    assert r[540] == pytest.approx(5.0, abs=0.05)
    assert r[0] == pytest.approx(5 * math.sqrt(2), abs=0.1)  # -135 deg hits the corner


def test_wall_ahead_and_sixty_degrees():
    r = raycast(_wall_ahead(), 0.0, 0.0, 0.0)
    assert r[540] == pytest.approx(1.0, abs=0.05)
    assert r[540 + 240] == pytest.approx(2.0, abs=0.05)  # +60 deg
    assert r[540 - 240] == pytest.approx(2.0, abs=0.05)
    assert np.all(r[:180] == 10.0)  # beams facing away see nothing


def test_empty_map_all_max_range():
    t = TrackBundle("empty", np.zeros((10, 10), bool), 0.05, (0.0, 0.0), np.zeros((3, 2)))
    assert np.all(raycast(t, 0.2, 0.2, 0.3) == 10.0)


def random_map_case(seed, n_beams=181):
    """Random 8 m x 8 m map, a free pose, and DDA plus marched ranges for a fan of beams."""
    rng = np.random.default_rng(seed)
    res = 0.1
    grid = rng.random((80, 80)) < 0.04
    t = TrackBundle("rand", grid, res, (-4.0, -4.0), np.zeros((3, 2)))
    while True:
        x, y = rng.uniform(-3.5, 3.5, 2)
        if not t.occupied(x, y):
            break
    theta = rng.uniform(-math.pi, math.pi)
    angles = np.linspace(-3 * math.pi / 4, 3 * math.pi / 4, n_beams)
    return t, (x, y, theta), angles, raycast(t, x, y, theta, angles), march(t, x, y, theta, angles)


def grazes_confirmed(t, pose, angles, dda, ref):
    """Beams where DDA and marching disagree by more than a cell diagonal.

    A 5 mm march step can step over a ray that clips a cell corner; those
    beams are re-marched at 1 um around the DDA hit.  Returns the beams
    that are still unexplained.
    """
    diag = t.resolution * math.sqrt(2)
    bad = []
    for k in np.flatnonzero(np.abs(dda - ref) > diag):
        if dda[k] > ref[k]:
            bad.append(int(k))
            continue
        a = pose[2] + angles[k]
        ts = np.arange(max(0.0, dda[k] - diag), dda[k] + diag, 1e-6)
        occ = t.occupied(pose[0] + ts * math.cos(a), pose[1] + ts * math.sin(a))
        if not occ.any() or abs(ts[np.argmax(occ)] - dda[k]) > diag:
            bad.append(int(k))
    return bad


@pytest.mark.parametrize("seed", range(20))
def test_dda_matches_ray_marching_on_random_maps(seed):
    t, pose, angles, dda, ref = random_map_case(seed)
    assert np.all(dda <= 10.0)
    assert grazes_confirmed(t, pose, angles, dda, ref) == []


def test_corner_graze_is_a_hit():
    # seed 1 has a beam clipping a cell corner over a 44 um chord
    t, pose, angles, dda, ref = random_map_case(1)
    k = 92
    assert dda[k] == pytest.approx(0.69093, abs=1e-4) and ref[k] == 10.0
    assert grazes_confirmed(t, pose, angles, dda, ref) == []


# -- vehicle ---------------------------------------------------------------


def test_stationary_vehicle_does_not_move():
    s = VehicleState(1.0, 2.0, 0.5)
    for _ in range(10):
        s = step(s, 0.3, 0.0)
    assert (s.x, s.y) == (1.0, 2.0)


def test_straight_line_one_second():
    s = VehicleState(0.0, 0.0, 0.0, v=1.0)
    for _ in range(40):
        s = step(s, 0.0, 1.0)
    assert s.x == pytest.approx(1.0, abs=1e-6)
    assert s.y == pytest.approx(0.0, abs=1e-12)


def test_turning_radius_matches_bicycle_formula():
    delta = 0.2
    s = VehicleState(0.0, 0.0, 0.0, v=1.0, delta=delta)
    pts = []
    for _ in range(300):
        s = step(s, delta, 1.0)
        pts.append((s.x, s.y))
    p = np.array(pts)
    # algebraic circle fit: x^2 + y^2 + D x + E y + F = 0
    a = np.column_stack([p, np.ones(len(p))])
    d, e, f = np.linalg.lstsq(a, -(p ** 2).sum(1), rcond=None)[0]
    radius = math.sqrt(d * d / 4 + e * e / 4 - f)
    assert radius == pytest.approx(WHEELBASE / math.tan(delta), rel=1e-4)


@given(st.floats(-0.5, 5), st.floats(-MAX_STEER, MAX_STEER), st.floats(-10, 10), st.floats(-2, 2))
def test_step_respects_clamps_and_approaches_command(v, d, v_cmd, d_cmd):
    s = step(VehicleState(0.0, 0.0, 0.0, v, d), d_cmd, v_cmd)
    assert -0.5 <= s.v <= 5.0
    assert abs(s.delta) <= MAX_STEER
    target = min(5.0, max(-0.5, v_cmd))
    assert abs(s.v - target) <= abs(v - target) + 1e-12


def test_collision_footprint(oval):
    assert not in_collision(oval, start_pose(oval, 0))
    x, y = oval.centerline[0]
    assert in_collision(oval, VehicleState(x, y + 0.9, 0.0))  # half-width 1 m, car half-width 0.15 m


# -- noise -----------------------------------------------------------------


def test_zero_sigma_noise_is_identity():
    clean = np.linspace(0, 10, 1081)
    assert np.array_equal(ScanNoise(np.random.default_rng(0), sigma=0.0)(clean), clean)


def test_noise_sample_std_matches_sigma():
    noise = ScanNoise(np.random.default_rng(1))
    assert 0 <= noise.sigma <= 0.5
    clean = np.full(100_000, 5.0)
    assert np.std(noise(clean) - clean) == pytest.approx(noise.sigma, rel=0.05)


@given(st.integers(0, 1000))
def test_noise_output_in_range(seed):
    noise = ScanNoise(np.random.default_rng(seed), sigma=0.5)
    out = noise(np.concatenate([np.zeros(50), np.full(50, 10.0)]))
    assert out.min() >= 0 and out.max() <= 10


def test_sigma_is_uniform_on_zero_half():
    sig = [ScanNoise(np.random.default_rng(s)).sigma for s in range(2000)]
    assert min(sig) >= 0 and max(sig) <= 0.5
    assert np.mean(sig) == pytest.approx(0.25, abs=0.02)


# -- progress --------------------------------------------------------------


def test_progress_examples(oval):
    cl = oval.centerline
    assert progress(oval, np.repeat(cl[:1], 5, axis=0)) == 0.0
    assert progress(oval, np.vstack([cl, cl[:2]])) == 100.0
    n = len(cl)
    half = int(np.argmin(np.abs(oval.arclength - oval.length / 2)))
    spacing = oval.length / n
    p = progress(oval, cl[: half + 1])
    assert abs(p - 50.0) <= 100 * spacing / oval.length


def test_progress_monotone_over_prefixes(oval):
    cl = oval.centerline
    vals = [progress(oval, cl[:k]) for k in range(1, len(cl), 15)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_reversing_does_not_count(oval):
    cl = oval.centerline
    tr = ProgressTracker(oval, *cl[50])
    for p in cl[50:0:-1]:
        tr.update(*p)
    assert tr.percent == 0.0


# -- tracks ----------------------------------------------------------------


@pytest.mark.parametrize("name", ["oval", "uturn"])
def test_bundled_track_invariants(name):
    t = get_track(name)
    assert not t.occupied(t.centerline[:, 0], t.centerline[:, 1]).any()
    gaps = np.linalg.norm(np.diff(np.vstack([t.centerline, t.centerline[:1]]), axis=0), axis=1)
    assert gaps.max() < 0.2  # closed loop, no jumps


def test_track_bundle_roundtrip(oval, tmp_path):
    save_track(oval, tmp_path / "o")
    assert {p.name for p in (tmp_path / "o").iterdir()} == {"map.pgm", "map.yaml", "centerline.csv"}
    back = load_track(tmp_path / "o")
    assert np.array_equal(back.grid, oval.grid)
    np.testing.assert_allclose(back.centerline, oval.centerline, atol=1e-6)
    assert back.resolution == oval.resolution


def test_missing_track():
    with pytest.raises(FileNotFoundError):
        get_track("/nonexistent/track")


# -- episodes --------------------------------------------------------------


def _stop(scan, state):
    return action_from_physical(0.0, 0.0)


def _full_straight(scan, state):
    return action_from_physical(0.0, 5.0)


def test_stop_policy_times_out(oval):
    ep = run_episode(oval, _stop, start_pose(oval, 10), seed=0, timeout_s=2.0)
    assert ep.outcome == "timeout" and ep.lap_time is None
    assert ep.progress == pytest.approx(0.0)
    assert ep.n_ticks == 80
    np.testing.assert_allclose(np.diff(ep.t), 0.025)


def test_straight_full_speed_crashes(oval):
    ep = run_episode(oval, _full_straight, start_pose(oval, 0), seed=0)
    assert ep.outcome == "collision"
    assert ep.progress < 100


@pytest.mark.parametrize("name", ["oval", "uturn"])
def test_expert_completes_lap(name):
    t = get_track(name)
    ep = run_episode(t, expert_policy(t), start_pose(t, 0), seed=3)
    assert ep.outcome == "lap_complete" and ep.progress == 100.0
    assert ep.lap_time == pytest.approx(ep.n_ticks * 0.025)


def test_start_in_collision_rejected(oval):
    x, y = oval.centerline[0]
    with pytest.raises(ValueError, match="collision"):
        run_episode(oval, _stop, VehicleState(x, y + 1.5, 0.0))


def test_episode_reproducible(uturn):
    a = run_episode(uturn, expert_policy(uturn), start_pose(uturn, 100), seed=9, timeout_s=5)
    b = run_episode(uturn, expert_policy(uturn), start_pose(uturn, 100), seed=9, timeout_s=5)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.scan_crc, b.scan_crc)
    c = run_episode(uturn, expert_policy(uturn), start_pose(uturn, 100), seed=10, timeout_s=5)
    assert not np.array_equal(a.scan_crc, c.scan_crc)


def _expert_laps(track, starts):
    pol = expert_policy(track)
    return [k for k in starts
            if run_episode(track, pol, start_pose(track, k), seed=k).outcome != "lap_complete"]


@pytest.mark.parametrize("name", ["oval", "uturn"])
def test_expert_laps_from_spread_starts(name):
    t = get_track(name)
    assert _expert_laps(t, range(0, len(t.centerline), 10)) == []
    r = t.reversed()
    assert _expert_laps(r, range(5, len(r.centerline), 20)) == []


@pytest.mark.slow
@pytest.mark.parametrize("name", ["oval", "uturn"])
@pytest.mark.parametrize("direction", ["forward", "reverse"])
def test_expert_laps_from_every_start(name, direction):
    t = get_track(name)
    t = t if direction == "forward" else t.reversed()
    assert _expert_laps(t, range(len(t.centerline))) == []
