"""Automated per-track gain search against the simulated measurement rig."""

from __future__ import annotations

import enum
import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from .dsp import CalibratedTrack
from .rig import RigModel, simulate_measurement

SESSION_SCHEMA_VERSION = 1


class SchemaVersionError(ValueError):
    pass


class FailureReason(str, enum.Enum):
    BELOW_NOISE_FLOOR = "below_noise_floor"
    MAX_ITERATIONS = "max_iterations"
    HEADROOM_EXCEEDED = "headroom_exceeded"


@dataclass(frozen=True)
class CalibrationRun:
    track_id: str
    target_dba: float
    final_gain_db: float
    measured_dba: float
    iterations: int
    converged: bool
    failure_reason: FailureReason | None = None
    clipped: bool = False

    def __post_init__(self):
        if self.converged == (self.failure_reason is not None):
            raise ValueError("failure_reason must be set exactly when the run did not converge")

    def to_dict(self) -> dict:
        return {
            "track_id": self.track_id,
            "target_dba": self.target_dba,
            "final_gain_db": self.final_gain_db,
            "measured_dba": self.measured_dba,
            "iterations": self.iterations,
            "converged": self.converged,
            "failure_reason": None if self.failure_reason is None else self.failure_reason.value,
            "clipped": self.clipped,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationRun":
        reason = data.get("failure_reason")
        return cls(
            track_id=data["track_id"],
            target_dba=float(data["target_dba"]),
            final_gain_db=float(data["final_gain_db"]),
            measured_dba=float(data["measured_dba"]),
            iterations=int(data["iterations"]),
            converged=bool(data["converged"]),
            failure_reason=None if reason is None else FailureReason(reason),
            clipped=bool(data.get("clipped", False)),
        )


@dataclass(frozen=True)
class SessionConfig:
    tolerance_db: float = 0.5
    run_count: int = 3
    seed: int = 0
    # half-width of the uniform per-channel reseating offset, dB
    reposition_db: float = 0.5
    max_iter: int = 10

    def __post_init__(self):
        if not self.tolerance_db > 0:
            raise ValueError("tolerance_db must be positive")
        if self.run_count < 1:
            raise ValueError("run_count must be at least 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.reposition_db < 0:
            raise ValueError("reposition_db must be non-negative")


@dataclass(frozen=True)
class CalibrationSession:
    runs: list  # [(run_index, [CalibrationRun, ...]), ...]
    tolerance_db: float = 0.5
    run_count: int = 3
    seed: int | None = None
    seat_offsets_db: list = field(default_factory=list)

    def __post_init__(self):
        if self.run_count < 1 or len(self.runs) != self.run_count:
            raise ValueError("session must hold run_count runs")
        ids = [tuple(r.track_id for r in results) for _, results in self.runs]
        if any(i != ids[0] for i in ids):
            raise ValueError("every run must cover the same track set")

    @property
    def track_ids(self) -> list[str]:
        return [r.track_id for r in self.runs[0][1]]

    def runs_for(self, track_id: str) -> list[CalibrationRun]:
        return [r for _, results in self.runs for r in results if r.track_id == track_id]

    def to_dict(self) -> dict:
        return {
            "schema_version": SESSION_SCHEMA_VERSION,
            "tolerance_db": self.tolerance_db,
            "run_count": self.run_count,
            "seed": self.seed,
            "runs": [
                {
                    "run_index": idx,
                    "seat_offsets_db": list(self.seat_offsets_db[idx]) if self.seat_offsets_db else None,
                    "results": [r.to_dict() for r in results],
                }
                for idx, results in self.runs
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationSession":
        version = data.get("schema_version")
        if version != SESSION_SCHEMA_VERSION:
            raise SchemaVersionError(
                f"session schema version {version} is not supported (expected {SESSION_SCHEMA_VERSION})"
            )
        runs = [
            (int(run["run_index"]), [CalibrationRun.from_dict(r) for r in run["results"]])
            for run in data["runs"]
        ]
        offsets = [run.get("seat_offsets_db") for run in data["runs"]]
        return cls(
            runs=runs,
            tolerance_db=float(data["tolerance_db"]),
            run_count=int(data["run_count"]),
            seed=data.get("seed"),
            seat_offsets_db=[] if any(o is None for o in offsets) else [tuple(o) for o in offsets],
        )


def max_usable_gain_db(track: CalibratedTrack) -> float:
    """Largest digital gain that keeps every sample within full scale."""
    peak = track.peak
    if peak == 0.0:
        return math.inf
    # back off slightly so round-off cannot push the peak over 1
    return -20.0 * math.log10(peak) - 1e-9


def search_gain(
    rig: RigModel,
    track: CalibratedTrack,
    target: float,
    tolerance: float = 0.5,
    max_iter: int = 10,
    start_gain_db: float = 0.0,
) -> CalibrationRun:
    """Find a digital gain whose measured level is within ``tolerance`` of ``target``.

    Fixed-point correction in dB: probe at ``start_gain_db``, then move the
    gain by the remaining error after every measurement. A run only counts
    as converged on an actual measurement at the reported gain.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")

    g_max = max_usable_gain_db(track)
    probe = simulate_measurement(rig, track, start_gain_db)
    gain = start_gain_db + (target - probe.measured_laeq_dba)
    floor_bound = target < rig.noise_floor_dba + tolerance

    def finish(m, iterations, reason=None):
        return CalibrationRun(
            track_id=track.track_id,
            target_dba=target,
            final_gain_db=m.digital_gain_db,
            measured_dba=m.measured_laeq_dba,
            iterations=iterations,
            converged=reason is None,
            failure_reason=reason,
            clipped=m.clipped,
        )

    for iteration in range(1, max_iter + 1):
        at_limit = gain >= g_max
        if at_limit:
            gain = g_max
        m = simulate_measurement(rig, track, gain)
        error = target - m.measured_laeq_dba
        if abs(error) <= tolerance and not m.clipped:
            return finish(m, iteration)
        if m.noise_floor_limited and (floor_bound or at_limit):
            return finish(m, iteration, FailureReason.BELOW_NOISE_FLOOR)
        if at_limit and error > 0:
            return finish(m, iteration, FailureReason.HEADROOM_EXCEEDED)
        gain = gain + error
    return finish(m, max_iter, FailureReason.MAX_ITERATIONS)


def run_session(rig: RigModel, tracks, targets=None, config: SessionConfig | None = None) -> CalibrationSession:
    """Calibrate every track ``config.run_count`` times.

    ``targets`` maps track_id to target level; missing entries fall back to
    each track's nominal level. The first run uses the rig as given; each
    later run reseats the headphones with fresh per-channel offsets drawn
    uniformly from +/- ``config.reposition_db``.
    """
    config = config or SessionConfig()
    tracks = list(tracks)
    targets = dict(targets or {})
    unknown = set(targets) - {t.track_id for t in tracks}
    if unknown:
        raise ValueError(f"targets given for unknown tracks: {sorted(unknown)}")
    rng = np.random.default_rng(config.seed)
    runs = []
    offsets = []
    for run_index in range(config.run_count):
        if run_index == 0:
            seat = (0.0, 0.0)
        else:
            seat = tuple(float(v) for v in rng.uniform(-config.reposition_db, config.reposition_db, 2))
        seated = rig.reseated(seat)
        results = [
            search_gain(
                seated,
                track,
                targets.get(track.track_id, track.nominal_laeq_db),
                config.tolerance_db,
                config.max_iter,
            )
            for track in tracks
        ]
        runs.append((run_index, results))
        offsets.append(seat)
    return CalibrationSession(
        runs=runs,
        tolerance_db=config.tolerance_db,
        run_count=config.run_count,
        seed=config.seed,
        seat_offsets_db=offsets,
    )


@dataclass(frozen=True)
class TrackGain:
    track_id: str
    mean_gain_db: float
    spread_db: float  # max - min over runs
    gains_db: tuple


@dataclass(frozen=True)
class GainSummary:
    tracks: dict  # track_id -> TrackGain
    failed: dict  # track_id -> list of failure reasons


def session_gains(session: CalibrationSession) -> GainSummary:
    """Per-track mean and spread of the final gains over converged runs."""
    tracks = {}
    failed = {}
    for track_id in session.track_ids:
        runs = session.runs_for(track_id)
        bad = [r.failure_reason.value for r in runs if not r.converged]
        if bad:
            failed[track_id] = bad
            continue
        gains = tuple(r.final_gain_db for r in runs)
        tracks[track_id] = TrackGain(track_id, statistics.fmean(gains), max(gains) - min(gains), gains)
    return GainSummary(tracks, failed)
