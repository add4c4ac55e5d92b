import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from seastitch.geometry import FrameMetadata

settings.register_profile("default", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def nadir_metadata(frames, altitude=50.0, heading=0.0, pitch=90.0, lat=0.0, lon=0.0):
    return {int(f): FrameMetadata(int(f), lat, lon, altitude, pitch, heading) for f in frames}


def track_rows(frame, tid, x, y, w=20.0, h=20.0, conf=0.9, cls=0):
    return [frame, tid, x, y, w, h, conf, cls, 1.0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria record one verdict line each; printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
