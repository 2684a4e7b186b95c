import numpy as np
import pytest

from hpcal import demo
from hpcal.dsp import CalibratedTrack


def sine(freq, seconds=1.0, rate=48000, amplitude=1.0):
    t = np.arange(int(round(seconds * rate))) / rate
    return amplitude * np.sin(2 * np.pi * freq * t)


def stereo_sine_track(freq, track_id="tone", amplitude=1.0, cal=94.0, nominal=94.0, rate=48000, seconds=1.0):
    x = sine(freq, seconds, rate, amplitude)
    return CalibratedTrack(track_id, np.column_stack([x, x]), rate, cal, nominal)


@pytest.fixture(scope="session")
def demo_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo")
    demo.write_demo(out)
    return out


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
