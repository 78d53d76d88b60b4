import numpy as np
import pytest

from macalloc.channel import ChannelSet, Scenario, generate_channels


def scalar_channels(gains, sigma2=1.0, **scenario):
    """ChannelSet from an (N, S) array of complex scalar gains (L_y = 1)."""
    g = np.asarray(gains, dtype=complex)
    if g.ndim == 1:
        g = g[:, None]
    N, S = g.shape
    sc = Scenario(N, S, 1, user_distances=(3.0,) * N, **scenario)
    return ChannelSet(g[:, :, None], sigma2 * np.eye(1), sc)


def random_channels(N=3, S=4, L=1, snr_db=10.0, seed=0, dist=None):
    dist = dist or (3.0,) * N
    return generate_channels(Scenario(N, S, L, user_distances=dist, target_receive_snr_db=snr_db, seed=seed))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
