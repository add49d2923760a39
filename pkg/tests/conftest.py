import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fatigue_merf.synth import gen_streams

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    return path


@pytest.fixture(scope="session")
def small_bundle(tmp_path_factory):
    """Three subjects over two days, no missing data."""
    out = tmp_path_factory.mktemp("bundle")
    gen_streams(out, n_subjects=3, days=2, seed=7)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
