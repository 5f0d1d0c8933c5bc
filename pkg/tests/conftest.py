import numpy as np
import pytest

from fmaxanova.funcdata import FunctionalSample, Grid

ACCEPTANCE_LINES = []


def random_sample(rng, sizes=(4, 5, 6), M=12, shift=None, nonuniform=False):
    if nonuniform:
        t = np.sort(rng.uniform(0, 3, M))
        t = np.unique(t)
        while t.size < M:
            t = np.unique(np.append(t, rng.uniform(0, 3)))
    else:
        t = np.linspace(0.0, 1.0, M)
    curves = []
    for i, ni in enumerate(sizes):
        mean = 0.0 if shift is None else shift * i * np.sin(np.pi * t)
        curves.append(mean + rng.standard_normal((ni, M)).cumsum(axis=1) * 0.3 + rng.standard_normal((ni, M)))
    return FunctionalSample(Grid(t), tuple(f"g{i}" for i in range(len(sizes))), tuple(curves))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_sample(rng):
    return random_sample(rng)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def synthetic_subject(rng, width_factor=1.0, subject_id="s"):
    """One synthetic subject: random heart rate, beat widths and noise.

    Wider waves move spectral energy toward low frequencies.
    """
    from fmaxanova import ecg

    hr = rng.uniform(55, 85)
    shape = ecg.BeatShape().scaled(width_factor * (1 + 0.08 * rng.standard_normal()))
    v, _ = ecg.synthetic_vcg(duration=10, heart_rate=hr, rr_jitter=0.03, shape=shape,
                             noise_std=0.02, rng=rng, subject_id=subject_id)
    return v
