
import pytest
from hypothesis import given, settings, strategies as st

from hpcal import demo
from hpcal.calibrate import (
    CalibrationRun,
    CalibrationSession,
    FailureReason,
    SchemaVersionError,
    SessionConfig,
    run_session,
    search_gain,
    session_gains,
)
from hpcal.rig import simulate_measurement


@pytest.fixture(scope="module")
def noise_track():
    return demo.synthesize_track("N", 70.0, seconds=0.5, seed=7)


@pytest.fixture(scope="module")
def short_tracks():
    levels = [("A", 75.0), ("B", 62.0), ("C", 50.0)]
    return [demo.synthesize_track(i, lvl, seconds=0.5, seed=k) for k, (i, lvl) in enumerate(levels)]


def test_converges_quickly_well_above_floor(noise_track):
    rig = demo.demo_rig()
    run = search_gain(rig, noise_track, 61.0)
    assert run.converged and run.failure_reason is None
    assert run.iterations <= 3
    assert abs(run.measured_dba - 61.0) <= 0.5


def test_kt01_below_noise_floor():
    track = demo.synthesize_track("KT01", 40.19, seconds=0.5)
    run = search_gain(demo.demo_rig(noise_floor=41.0), track, 40.19)
    assert not run.converged
    assert run.failure_reason is FailureReason.BELOW_NOISE_FLOOR
    assert run.iterations < 10


def test_already_calibrated_needs_no_gain(noise_track):
    rig = demo.demo_rig()
    target = simulate_measurement(rig, noise_track, 0.0).measured_laeq_dba
    run = search_gain(rig, noise_track, target)
    assert run.converged
    assert run.final_gain_db == pytest.approx(0.0, abs=0.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(-60.0, 0.0), st.floats(55.0, 90.0))
def test_linear_rig_converges_in_two_iterations(noise_track, start, target):
    rig = demo.demo_rig(noise_floor=0.0)
    run = search_gain(rig, noise_track, target, start_gain_db=start)
    assert run.converged
    assert run.iterations <= 2


@settings(max_examples=20, deadline=None)
@given(st.floats(-10.0, 0.0), st.floats(51.5, 80.0))
def test_converges_in_two_iterations_ten_db_above_floor(noise_track, start, target):
    rig = demo.demo_rig(noise_floor=41.0)
    probe = simulate_measurement(rig, noise_track, start)
    if probe.signal_laeq_dba < rig.noise_floor_dba + 10:
        return
    run = search_gain(rig, noise_track, target, start_gain_db=start)
    assert run.converged and run.iterations <= 2


def test_headroom_exceeded(noise_track):
    run = search_gain(demo.demo_rig(), noise_track, 140.0)
    assert run.failure_reason is FailureReason.HEADROOM_EXCEEDED
    assert not run.clipped


def test_max_iterations_when_cap_is_tiny():
    track = demo.synthesize_track("Q", 44.0, seconds=0.5)
    run = search_gain(demo.demo_rig(noise_floor=41.0), track, 44.0, tolerance=0.05, max_iter=1)
    assert run.failure_reason is FailureReason.MAX_ITERATIONS
    assert run.iterations == 1


@pytest.mark.parametrize("kwargs", [dict(tolerance=0.0), dict(max_iter=0)])
def test_search_rejects_bad_parameters(noise_track, kwargs):
    with pytest.raises(ValueError):
        search_gain(demo.demo_rig(), noise_track, 60.0, **kwargs)


def test_run_invariant_enforced():
    with pytest.raises(ValueError):
        CalibrationRun("x", 60.0, 0.0, 60.0, 1, True, FailureReason.MAX_ITERATIONS)
    with pytest.raises(ValueError):
        CalibrationRun("x", 60.0, 0.0, 65.0, 1, False, None)


def test_single_run_without_perturbation_matches_direct_search(short_tracks):
    rig = demo.demo_rig()
    session = run_session(rig, short_tracks, config=SessionConfig(run_count=1, reposition_db=0.0))
    direct = [search_gain(rig, t, t.nominal_laeq_db) for t in short_tracks]
    assert session.runs[0][1] == direct


def test_session_is_deterministic(short_tracks):
    config = SessionConfig(seed=11)
    a = run_session(demo.demo_rig(), short_tracks, config=config)
    b = run_session(demo.demo_rig(), short_tracks, config=config)
    assert a.to_dict() == b.to_dict()
    c = run_session(demo.demo_rig(), short_tracks, config=SessionConfig(seed=12))
    assert c.to_dict() != a.to_dict()


def test_targets_override_nominal(short_tracks):
    session = run_session(demo.demo_rig(), short_tracks, {"A": 70.0}, SessionConfig(run_count=1))
    assert session.runs_for("A")[0].target_dba == 70.0
    assert session.runs_for("B")[0].target_dba == 62.0
    with pytest.raises(ValueError):
        run_session(demo.demo_rig(), short_tracks, {"nope": 1.0})


def test_converged_runs_verify_on_remeasurement(short_tracks):
    rig = demo.demo_rig()
    session = run_session(rig, short_tracks, config=SessionConfig(seed=5))
    by_id = {t.track_id: t for t in short_tracks}
    for (idx, results), seat in zip(session.runs, session.seat_offsets_db):
        for run in results:
            assert run.converged
            assert abs(run.measured_dba - run.target_dba) <= session.tolerance_db
            again = simulate_measurement(rig.reseated(seat), by_id[run.track_id], run.final_gain_db)
            assert abs(again.measured_laeq_dba - run.target_dba) <= session.tolerance_db


def test_gain_summary_single_run(short_tracks):
    session = run_session(demo.demo_rig(), short_tracks, config=SessionConfig(run_count=1))
    summary = session_gains(session)
    for run in session.runs[0][1]:
        assert summary.tracks[run.track_id].mean_gain_db == run.final_gain_db
        assert summary.tracks[run.track_id].spread_db == 0.0


def test_gain_summary_zero_perturbation_has_no_spread(short_tracks):
    session = run_session(demo.demo_rig(), short_tracks, config=SessionConfig(reposition_db=0.0))
    assert all(g.spread_db == 0.0 for g in session_gains(session).tracks.values())


@pytest.mark.parametrize("seed", range(8))
def test_gain_spread_bounded_by_perturbation(short_tracks, seed):
    session = run_session(demo.demo_rig(), short_tracks, config=SessionConfig(seed=seed))
    summary = session_gains(session)
    assert not summary.failed
    assert all(g.spread_db <= 1.0 for g in summary.tracks.values())


def test_failed_tracks_listed_separately():
    tracks = [demo.synthesize_track("KT01", 40.19, seconds=0.5), demo.synthesize_track("OK", 60.0, seconds=0.5)]
    summary = session_gains(run_session(demo.demo_rig(), tracks))
    assert set(summary.tracks) == {"OK"}
    assert summary.failed == {"KT01": ["below_noise_floor"] * 3}


def test_session_dict_round_trip(short_tracks):
    session = run_session(demo.demo_rig(), short_tracks)
    again = CalibrationSession.from_dict(session.to_dict())
    assert again.to_dict() == session.to_dict()


def test_session_schema_version_checked(short_tracks):
    data = run_session(demo.demo_rig(), short_tracks, config=SessionConfig(run_count=1)).to_dict()
    data["schema_version"] = 99
    with pytest.raises(SchemaVersionError, match="99"):
        CalibrationSession.from_dict(data)


def test_session_requires_same_tracks_each_run():
    a = CalibrationRun("a", 60.0, 0.0, 60.0, 1, True)
    b = CalibrationRun("b", 60.0, 0.0, 60.0, 1, True)
    with pytest.raises(ValueError):
        CalibrationSession([(0, [a]), (1, [b])], run_count=2)


def test_session_config_validation():
    for kwargs in (dict(tolerance_db=0.0), dict(run_count=0), dict(max_iter=0), dict(reposition_db=-1)):
        with pytest.raises(ValueError):
            SessionConfig(**kwargs)
