import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macalloc.channel import (
    ChannelSet,
    Scenario,
    calibrate_noise,
    generate_channels,
    load_channels,
    mean_gain,
    pathloss_db,
    receive_snr_db,
    save_channels,
)
from macalloc.errors import ChannelFileError, DegenerateChannelError, DomainError, SchemaError

from conftest import random_channels


def test_pathloss_reference_points():
    assert pathloss_db(1.0, 5e9) == pytest.approx(46.4, abs=1e-12)
    # 46.4 + 18.7 log10(3) + 20 log10(0.498), evaluated by hand
    assert pathloss_db(3.0, 2.49e9) == pytest.approx(49.27, abs=0.01)
    assert pathloss_db(10.0, 5e9) == pytest.approx(65.1, abs=0.01)


@pytest.mark.parametrize("d, f", [(0.0, 5e9), (-1.0, 5e9), (3.0, 0.0), (3.0, -2e9)])
def test_pathloss_rejects_nonpositive(d, f):
    with pytest.raises(DomainError):
        pathloss_db(d, f)


@given(st.floats(0.1, 1e3), st.floats(0.1, 1e3), st.floats(1e8, 1e11))
def test_pathloss_monotone_in_distance(d1, d2, f):
    lo, hi = sorted((d1, d2))
    assert pathloss_db(lo, f) <= pathloss_db(hi, f)


def test_generation_is_deterministic():
    sc = Scenario(seed=7)
    a, b = generate_channels(sc), generate_channels(sc)
    assert a == b
    assert np.array_equal(a.gains, b.gains)


def test_different_seeds_differ():
    assert generate_channels(Scenario(seed=1)) != generate_channels(Scenario(seed=2))


def test_mean_gain_matches_pathloss():
    # 10^4 tones per user: sample mean within 10% of 10^(-PL/10) * L_y
    sc = Scenario(3, 10_000, 1, user_distances=(3.0, 3.0, 3.0), seed=3)
    ch = generate_channels(sc)
    nominal = 10 ** (-pathloss_db(3.0, sc.carrier_hz) / 10)
    per_user = np.mean(np.abs(ch.gains[..., 0]) ** 2, axis=1)
    assert np.all(np.abs(per_user / nominal - 1) < 0.05)
    assert per_user.max() / per_user.min() < 1.1


def test_fading_variance_with_two_antennas():
    sc = Scenario(1, 20_000, 2, user_distances=(1.0,), seed=11, carrier_hz=5e9)
    ch = generate_channels(sc)
    nominal = 2 * 10 ** (-46.4 / 10)
    assert np.mean(np.sum(np.abs(ch.gains) ** 2, axis=2)) / nominal == pytest.approx(1.0, abs=0.05)


def test_single_antenna_is_rank_deficient():
    ch = random_channels(3, 4, 1)
    assert ch.scenario.rank_deficient
    for j in range(4):
        assert np.linalg.matrix_rank(ch.stacked(j)) == 1


def test_calibration_examples():
    ch = generate_channels(Scenario(seed=4))
    g2 = mean_gain(ch)
    assert calibrate_noise(ch, -10.0).sigma2 == pytest.approx(10 * g2, rel=1e-12)
    assert calibrate_noise(ch, 0.0).sigma2 == pytest.approx(g2, rel=1e-12)
    once = calibrate_noise(ch, 5.0)
    assert calibrate_noise(once, 5.0).sigma2 == once.sigma2


@given(st.floats(-60, 60), st.floats(1e-3, 1e3), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_calibration_hits_target(snr, ref, seed):
    ch = calibrate_noise(generate_channels(Scenario(2, 3, 2, user_distances=(2.0, 4.0), seed=seed)), snr, ref)
    assert receive_snr_db(ch, ref) == pytest.approx(snr, abs=1e-9 * max(1.0, abs(snr)))
    assert np.array_equal(ch.noise_cov, ch.sigma2 * np.eye(2))


def test_calibration_rejects_zero_channels():
    ch = ChannelSet(np.zeros((2, 2, 1)), np.eye(1))
    with pytest.raises(DegenerateChannelError):
        calibrate_noise(ch, 0.0)


def test_file_round_trip_is_exact(tmp_path):
    ch = random_channels(3, 5, 2, seed=9)
    path = tmp_path / "ch.txt"
    save_channels(ch, path)
    back = load_channels(path)
    assert np.array_equal(back.gains, ch.gains)
    assert back.sigma2 == ch.sigma2
    assert np.array_equal(back.noise_cov, ch.noise_cov)
    assert path.read_text().splitlines()[0] == "MACALLOC-CH v1"


def _lines(tmp_path, ch):
    path = tmp_path / "ch.txt"
    save_channels(ch, path)
    return path, path.read_text().splitlines()


def test_missing_user_rows_is_schema_error(tmp_path):
    ch = random_channels(3, 2, 1)
    path, lines = _lines(tmp_path, ch)
    # drop the last user's rows while the header still says N=3
    kept = [ln for ln in lines if not ln.startswith("G,2,")]
    assert len(kept) < len(lines)
    path.write_text("\n".join(kept) + "\n")
    with pytest.raises(SchemaError):
        load_channels(path)


def test_non_finite_entry_names_the_field(tmp_path):
    ch = random_channels(2, 2, 1)
    path, lines = _lines(tmp_path, ch)
    row = len(lines) - 1
    toks = lines[row].split(",")
    toks[-1] = "nan"
    lines[row] = ",".join(toks)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ChannelFileError) as err:
        load_channels(path)
    assert err.value.line == row + 1
    assert err.value.field


def test_bad_magic(tmp_path):
    path = tmp_path / "x.txt"
    path.write_text("hello\n")
    with pytest.raises(ChannelFileError):
        load_channels(path)


def test_scenario_validation():
    with pytest.raises(DomainError):
        Scenario(num_users=2, user_distances=(3.0,))
    with pytest.raises(DomainError):
        Scenario(num_users=1, user_distances=(-1.0,))
    with pytest.raises(DomainError):
        Scenario(tx_antennas_per_user=2)


def test_tone_bandwidth():
    assert Scenario(bandwidth_hz=80e6, num_subcarriers=4).tone_bandwidth_hz == 20e6
    assert generate_channels(Scenario()).mbps_per_bit() == pytest.approx(20.0)


def test_receive_snr_definition():
    ch = generate_channels(Scenario(seed=5))
    assert receive_snr_db(ch, 1.0) == pytest.approx(10 * math.log10(mean_gain(ch) / ch.sigma2))
