"""Stereo WAV reading and writing (PCM16, PCM24, float32)."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import SUPPORTED_RATES, CalibratedTrack, UnsupportedSampleRateError


class AudioFormatError(ValueError):
    pass


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a stereo WAV file as floats in [-1, 1] with shape (n, 2)."""
    try:
        rate, data = wavfile.read(str(path))
    except (ValueError, OSError) as exc:
        raise AudioFormatError(f"{path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != 2:
        raise AudioFormatError(f"{path}: expected 2 channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        # scipy left-justifies 24-bit samples in int32, so one scale fits both
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(f"{path}: unsupported sample format {data.dtype}")
    if rate not in SUPPORTED_RATES:
        raise UnsupportedSampleRateError(f"{path}: sample rate {rate} Hz not in {SUPPORTED_RATES}")
    return samples, rate


def load_track(path, track_id: str, cal_constant_db: float, nominal_laeq_db: float) -> CalibratedTrack:
    samples, rate = read_wav(path)
    return CalibratedTrack(track_id, samples, rate, cal_constant_db, nominal_laeq_db)


def write_wav(path, samples, sample_rate: int, fmt: str = "pcm24") -> None:
    """Write stereo float samples. ``fmt`` is one of pcm16, pcm24, float32."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError("samples must have shape (n, 2)")
    path = Path(path)
    if fmt == "float32":
        wavfile.write(str(path), sample_rate, x.astype(np.float32))
        return
    if fmt == "pcm16":
        bits = 16
    elif fmt == "pcm24":
        bits = 24
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    full = 2 ** (bits - 1)
    ints = np.clip(np.round(x * full), -full, full - 1).astype("<i4")
    width = bits // 8
    raw = ints.reshape(-1, 1).view(np.uint8).reshape(-1, 4)[:, :width].tobytes()
    with wave.open(str(path), "wb") as w:
        w.setnchannels(2)
        w.setsampwidth(width)
        w.setframerate(sample_rate)
        w.writeframes(raw)
