"""JSON manifests for datasets, rigs and sessions."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .calibrate import CalibrationSession, SchemaVersionError, SessionConfig
from .rig import RigModel
from .sensitivity import ReferenceTone

MANIFEST_SCHEMA_VERSION = 1
RIG_SCHEMA_VERSION = 1
CONFIG_DIR_ENV = "HPCAL_CONFIG_DIR"


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class TrackEntry:
    track_id: str
    path: Path
    cal_constant_db: float
    nominal_laeq_db: float


@dataclass(frozen=True)
class Manifest:
    tracks: tuple
    rig_path: Path | None
    reference_tone: ReferenceTone = ReferenceTone()
    session: SessionConfig = SessionConfig()
    source: Path | None = None


def config_dir() -> Path:
    return Path(os.environ.get(CONFIG_DIR_ENV, "."))


def default_path(name: str) -> Path:
    return config_dir() / name


def _check_version(data, expected, what):
    version = data.get("schema_version")
    if version != expected:
        raise SchemaVersionError(
            f"{what} schema version {version} is not supported (expected {expected})"
        )


def load_manifest(path, check_files: bool = True) -> Manifest:
    """Load and validate a dataset manifest.

    Relative paths are resolved against the manifest's directory. Duplicate
    track ids, missing audio files and a non-positive tolerance are rejected
    before anything is computed.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    _check_version(data, MANIFEST_SCHEMA_VERSION, "manifest")
    base = path.parent

    tracks = []
    seen = set()
    for item in data.get("tracks", []):
        try:
            entry = TrackEntry(
                str(item["track_id"]),
                base / item["path"],
                float(item["cal_constant_db"]),
                float(item["nominal_laeq_db"]),
            )
        except KeyError as exc:
            raise ManifestError(f"track entry missing field {exc}") from exc
        if entry.track_id in seen:
            raise ManifestError(f"duplicate track_id {entry.track_id!r}")
        seen.add(entry.track_id)
        if check_files and not entry.path.is_file():
            raise ManifestError(f"{entry.track_id}: audio file {entry.path} does not exist")
        tracks.append(entry)
    if not tracks:
        raise ManifestError("manifest lists no tracks")

    rig = data.get("rig")
    rig_path = base / rig if rig else None
    if check_files and rig_path is not None and not rig_path.is_file():
        raise ManifestError(f"rig file {rig_path} does not exist")

    tone = data.get("reference_tone", {})
    sess = data.get("session", {})
    try:
        session = SessionConfig(
            tolerance_db=float(sess.get("tolerance_db", 0.5)),
            run_count=int(sess.get("runs", 3)),
            seed=int(sess.get("seed", 0)),
            reposition_db=float(sess.get("reposition_db", 0.5)),
            max_iter=int(sess.get("max_iter", 10)),
        )
        reference = ReferenceTone(
            float(tone.get("spl_dbspl", 94.0)), float(tone.get("frequency_hz", 1000.0))
        )
    except ValueError as exc:
        raise ManifestError(str(exc)) from exc
    return Manifest(tuple(tracks), rig_path, reference, session, path)


def manifest_to_dict(tracks, rig: str | None, reference: ReferenceTone, session: SessionConfig) -> dict:
    return {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "rig": rig,
        "reference_tone": {"spl_dbspl": reference.spl_dbspl, "frequency_hz": reference.frequency_hz},
        "session": {
            "tolerance_db": session.tolerance_db,
            "runs": session.run_count,
            "seed": session.seed,
            "reposition_db": session.reposition_db,
            "max_iter": session.max_iter,
        },
        "tracks": [
            {
                "track_id": t.track_id,
                "path": str(t.path),
                "cal_constant_db": t.cal_constant_db,
                "nominal_laeq_db": t.nominal_laeq_db,
            }
            for t in tracks
        ],
    }


def load_rig(path) -> RigModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read rig file {path}: {exc}") from exc
    _check_version(data, RIG_SCHEMA_VERSION, "rig")
    try:
        return RigModel.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"invalid rig file {path}: {exc}") from exc


def rig_to_dict(rig: RigModel) -> dict:
    return {"schema_version": RIG_SCHEMA_VERSION, **rig.to_dict()}


def dumps(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_session(path, session: CalibrationSession) -> None:
    atomic_write_text(path, dumps(session.to_dict()))


def load_session(path) -> CalibrationSession:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return CalibrationSession.from_dict(data)

