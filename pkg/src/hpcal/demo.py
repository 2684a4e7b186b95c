"""Synthetic stand-in for the 27-track stimulus set.

The original binaural recordings are not distributable, so the demo
dataset uses seeded noise whose A-weighted levels are set to the nominal
levels of the published table.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import dsp, report, wavio
from .calibrate import SessionConfig
from .manifest import TrackEntry, atomic_write_text, dumps, manifest_to_dict, rig_to_dict
from .rig import RigModel, SoundcardSpec
from .sensitivity import HeadphoneSpec, ReferenceTone

DEMO_CAL_CONSTANT_DB = 100.0
DEMO_SENSITIVITY_DBV = 99.14
DEMO_IMPEDANCE_OHMS = 250.0
DEMO_FULL_SCALE_V = 2.0

# +6 dB below 500 Hz, flat at 1 kHz, -6 dB above 2 kHz
TILT_CURVE_DB = ((20.0, 6.0), (500.0, 6.0), (1000.0, 0.0), (2000.0, -6.0), (20000.0, -6.0))


def demo_rig(output_impedance=0.0, tilted=False, noise_floor=41.0) -> RigModel:
    response = None
    if tilted:
        response = tuple((f, DEMO_SENSITIVITY_DBV + d) for f, d in TILT_CURVE_DB)
    headphones = HeadphoneSpec(DEMO_SENSITIVITY_DBV, "dB_per_volt", DEMO_IMPEDANCE_OHMS, response)
    return RigModel(SoundcardSpec(DEMO_FULL_SCALE_V, output_impedance), headphones, noise_floor)


def _pink_noise(rng, n, rate, band=(50.0, 8000.0), tilt_db_per_octave=0.0):
    spectrum = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / rate)
    shape = np.zeros_like(f)
    inband = (f >= band[0]) & (f <= band[1])
    octaves = np.log2(f[inband] / 1000.0)
    shape[inband] = 10.0 ** ((-3.0 + tilt_db_per_octave) * octaves / 20.0)
    return np.fft.irfft(spectrum * shape, n)


def synthesize_track(track_id, nominal_db, cal_constant_db=DEMO_CAL_CONSTANT_DB,
                     sample_rate=48000, seconds=2.0, seed=0) -> dsp.CalibratedTrack:
    """Stereo noise track scaled so its A-weighted level equals ``nominal_db``."""
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    tilt = rng.uniform(-1.5, 1.5)
    left = _pink_noise(rng, n, sample_rate, tilt_db_per_octave=tilt)
    right = 0.8 * left + 0.6 * _pink_noise(rng, n, sample_rate, tilt_db_per_octave=tilt)
    right *= 10.0 ** (rng.uniform(-1.0, 1.0) / 20.0)
    samples = np.column_stack([left, right])
    probe = dsp.CalibratedTrack(track_id, samples, sample_rate, cal_constant_db, nominal_db)
    scale = 10.0 ** ((nominal_db - dsp.track_laeq(probe)) / 20.0)
    return dsp.CalibratedTrack(track_id, samples * scale, sample_rate, cal_constant_db, nominal_db)


def table_nominal_levels() -> list[tuple[str, float]]:
    return [(lv.track_id, lv.nominal_dba) for lv in report.golden_levels()]


def write_demo(outdir, sample_rate=48000, seconds=2.0, seed=0, fmt="pcm24") -> Path:
    """Write audio, manifest.json and rig files into ``outdir``.

    Returns the manifest path.
    """
    outdir = Path(outdir)
    audio_dir = outdir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for index, (track_id, nominal) in enumerate(table_nominal_levels()):
        track = synthesize_track(track_id, nominal, sample_rate=sample_rate,
                                 seconds=seconds, seed=seed * 1000 + index)
        rel = Path("audio") / f"{track_id}.wav"
        wavio.write_wav(outdir / rel, track.samples, sample_rate, fmt)
        entries.append(TrackEntry(track_id, rel, DEMO_CAL_CONSTANT_DB, nominal))

    rigs = {
        "rig.json": demo_rig(),
        "rig_loaded.json": demo_rig(output_impedance=DEMO_IMPEDANCE_OHMS),
        "rig_tilted.json": demo_rig(tilted=True),
    }
    for name, rig in rigs.items():
        atomic_write_text(outdir / name, dumps(rig_to_dict(rig)))

    manifest = manifest_to_dict(entries, "rig.json", ReferenceTone(94.0, 1000.0), SessionConfig(seed=seed))
    manifest["note"] = (
        "cal_constant_db is the dB SPL represented by a 0 dBFS sine in each file; "
        "tracks are synthetic noise at the published nominal levels"
    )
    path = outdir / "manifest.json"
    atomic_write_text(path, dumps(manifest))
    return path
