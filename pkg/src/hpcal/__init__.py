"""Headphone playback calibration for binaural soundscape reproduction."""

__version__ = "0.1.0"
