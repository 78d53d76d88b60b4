"""Channel realizations for the multi-carrier uplink MAC.

Gains are stored as a complex array of shape ``(N, S, L_y)``: user, tone,
receive antenna.  Users and tones are indexed from 0.

Random draws use numpy's PCG64 bit generator (portable across platforms)
and turn its 53-bit uniforms into circularly-symmetric complex Gaussians
with the Box-Muller transform, so a seed pins the realization everywhere.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ChannelFileError, DegenerateChannelError, DomainError, SchemaError

FILE_MAGIC = "MACALLOC-CH v1"
FILE_VERSION = 1


@dataclass(frozen=True)
class Scenario:
    num_users: int = 3
    num_subcarriers: int = 4
    rx_antennas: int = 1
    tx_antennas_per_user: int = 1
    bandwidth_hz: float = 80e6
    carrier_hz: float = 2.49e9
    user_distances: tuple[float, ...] = (3.0, 3.0, 3.0)
    target_receive_snr_db: float | None = None
    noise_variance: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "user_distances", tuple(float(d) for d in self.user_distances))
        if self.num_users < 1 or self.num_subcarriers < 1 or self.rx_antennas < 1:
            raise DomainError("num_users, num_subcarriers and rx_antennas must be >= 1")
        if self.tx_antennas_per_user != 1:
            raise DomainError("only single-antenna users are supported")
        if len(self.user_distances) != self.num_users:
            raise DomainError(
                f"expected {self.num_users} user distances, got {len(self.user_distances)}"
            )
        if any(d <= 0 for d in self.user_distances):
            raise DomainError("user distances must be positive")
        if not self.noise_variance > 0:
            raise DomainError("noise variance must be positive")
        if not self.bandwidth_hz > 0 or not self.carrier_hz > 0:
            raise DomainError("bandwidth and carrier frequency must be positive")
        if self.seed < 0:
            raise DomainError("seed must be a non-negative integer")

    @property
    def rank_deficient(self) -> bool:
        return self.num_users * self.tx_antennas_per_user > self.rx_antennas

    @property
    def tone_bandwidth_hz(self) -> float:
        return self.bandwidth_hz / self.num_subcarriers


@dataclass(frozen=True, eq=False)
class ChannelSet:
    gains: np.ndarray
    noise_cov: np.ndarray
    scenario: Scenario = field(default_factory=Scenario)

    def __post_init__(self):
        g = np.array(self.gains, dtype=complex)
        if g.ndim != 3:
            raise DomainError(f"gains must have shape (N, S, L_y), got {g.shape}")
        z = np.array(self.noise_cov, dtype=complex)
        L = g.shape[2]
        if z.shape != (L, L):
            raise DomainError(f"noise covariance must be {L}x{L}, got {z.shape}")
        if not np.all(np.isfinite(g)):
            raise DomainError("channel gains contain non-finite entries")
        if not np.allclose(z, z.conj().T, rtol=1e-12, atol=0.0):
            raise DomainError("noise covariance is not Hermitian")
        try:
            np.linalg.cholesky(z)
        except np.linalg.LinAlgError as exc:
            raise DomainError("noise covariance is not positive definite") from exc
        g.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "noise_cov", z)

    @property
    def num_users(self) -> int:
        return self.gains.shape[0]

    @property
    def num_subcarriers(self) -> int:
        return self.gains.shape[1]

    @property
    def rx_antennas(self) -> int:
        return self.gains.shape[2]

    @property
    def sigma2(self) -> float:
        """Per-dimension noise power (mean of the covariance diagonal)."""
        d = np.real(np.diag(self.noise_cov))
        return float(d[0]) if np.all(d == d[0]) else float(np.mean(d))

    @property
    def white_noise(self) -> bool:
        return np.array_equal(self.noise_cov, self.sigma2 * np.eye(self.rx_antennas))

    def mbps_per_bit(self) -> float:
        """Factor turning bits/tone-use (summed over tones) into Mbps."""
        return self.scenario.tone_bandwidth_hz / 1e6

    def effective_gains(self) -> np.ndarray:
        """``g^H Z^-1 g`` per (user, tone): single-user receive SNR per unit power."""
        zinv = np.linalg.inv(self.noise_cov)
        return np.real(np.einsum("usl,lm,usm->us", self.gains.conj(), zinv, self.gains))

    def stacked(self, tone: int) -> np.ndarray:
        """``L_y x N`` channel matrix on one tone."""
        return self.gains[:, tone, :].T

    def __eq__(self, other):
        if not isinstance(other, ChannelSet):
            return NotImplemented
        return (
            np.array_equal(self.gains, other.gains)
            and np.array_equal(self.noise_cov, other.noise_cov)
            and self.scenario == other.scenario
        )

    __hash__ = None


def pathloss_db(distance_m: float, carrier_hz: float) -> float:
    """Indoor LOS pathloss, ``46.4 + 18.7 log10(d) + 20 log10(f_GHz / 5)``."""
    if not distance_m > 0 or not carrier_hz > 0:
        raise DomainError("distance and carrier frequency must be positive")
    return 46.4 + 18.7 * math.log10(distance_m) + 20.0 * math.log10(carrier_hz / 1e9 / 5.0)


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance CN(0, 1) samples via Box-Muller on PCG64 uniforms."""
    u1 = 1.0 - rng.random(shape)  # (0, 1]
    u2 = rng.random(shape)
    return np.sqrt(-np.log(u1)) * np.exp(2j * np.pi * u2)


def generate_channels(scenario: Scenario) -> ChannelSet:
    """Rayleigh per-tone fading on top of the distance pathloss.

    If the scenario names a target receive SNR the noise is calibrated at a
    reference power of 1 W; otherwise ``scenario.noise_variance`` is used.
    """
    rng = np.random.Generator(np.random.PCG64(scenario.seed))
    N, S, L = scenario.num_users, scenario.num_subcarriers, scenario.rx_antennas
    amp = np.array([10 ** (-pathloss_db(d, scenario.carrier_hz) / 20) for d in scenario.user_distances])
    gains = amp[:, None, None] * complex_gaussian(rng, (N, S, L))
    channels = ChannelSet(gains, scenario.noise_variance * np.eye(L), scenario)
    if scenario.target_receive_snr_db is not None:
        channels = calibrate_noise(channels, scenario.target_receive_snr_db, 1.0)
    return channels


def mean_gain(channels: ChannelSet) -> float:
    return float(np.mean(np.sum(np.abs(channels.gains) ** 2, axis=2)))


def receive_snr_db(channels: ChannelSet, reference_power: float) -> float:
    return 10 * math.log10(reference_power * mean_gain(channels) / channels.sigma2)


def calibrate_noise(channels: ChannelSet, target_receive_snr_db: float, reference_power: float = 1.0) -> ChannelSet:
    """Set white noise so ``reference_power * mean ||g||^2 / sigma2`` hits the target."""
    if not reference_power > 0:
        raise DomainError("reference power must be positive")
    g2 = mean_gain(channels)
    if not g2 > 0:
        raise DegenerateChannelError("cannot calibrate noise on all-zero channels")
    sigma2 = reference_power * g2 / 10 ** (target_receive_snr_db / 10)
    scenario = dataclasses.replace(
        channels.scenario, noise_variance=sigma2, target_receive_snr_db=float(target_receive_snr_db)
    )
    return ChannelSet(channels.gains, sigma2 * np.eye(channels.rx_antennas), scenario)


def with_noise_cov(channels: ChannelSet, noise_cov: np.ndarray) -> ChannelSet:
    return ChannelSet(channels.gains, noise_cov, channels.scenario)


# --- file format -----------------------------------------------------------
#
#   MACALLOC-CH v1
#   version,N,S,L_y,sigma2
#   1,3,4,1,1.25e-09
#   #meta,bandwidth_hz,80000000.0            (optional, any number)
#   Z,<row>,re,im,re,im,...                  (optional; all L_y rows or none)
#   G,<user>,<tone>,re,im,re,im,...          (exactly N*S rows)
#
# Floats are written with repr(), which round-trips exactly.

_META_KEYS = ("bandwidth_hz", "carrier_hz", "user_distances", "target_receive_snr_db", "seed")


def save_channels(channels: ChannelSet, path) -> None:
    sc = channels.scenario
    lines = [FILE_MAGIC, "version,N,S,L_y,sigma2"]
    N, S, L = channels.gains.shape
    lines.append(f"{FILE_VERSION},{N},{S},{L},{channels.sigma2!r}")
    lines.append(f"#meta,bandwidth_hz,{sc.bandwidth_hz!r}")
    lines.append(f"#meta,carrier_hz,{sc.carrier_hz!r}")
    lines.append("#meta,user_distances," + ";".join(repr(d) for d in sc.user_distances))
    if sc.target_receive_snr_db is not None:
        lines.append(f"#meta,target_receive_snr_db,{sc.target_receive_snr_db!r}")
    lines.append(f"#meta,seed,{sc.seed}")
    if not channels.white_noise:
        for r in range(L):
            lines.append(f"Z,{r}," + _pairs(channels.noise_cov[r]))
    for i in range(N):
        for j in range(S):
            lines.append(f"G,{i},{j}," + _pairs(channels.gains[i, j]))
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as e:
        raise ChannelFileError(f"cannot write {path}: {e}") from e


def _pairs(row) -> str:
    return ",".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in row)


def _float(tok: str, lineno: int, name: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ChannelFileError(f"cannot parse {tok!r} as a real number", lineno, name) from None
    if not math.isfinite(v):
        raise ChannelFileError(f"non-finite value {tok!r}", lineno, name)
    return v


def _int(tok: str, lineno: int, name: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ChannelFileError(f"cannot parse {tok!r} as an integer", lineno, name) from None


def _complex_row(toks, L, lineno, label) -> np.ndarray:
    if len(toks) != 2 * L:
        raise SchemaError(f"expected {2 * L} reals for L_y={L}, got {len(toks)}", lineno, label)
    vals = [_float(t, lineno, f"{label}[{k}]") for k, t in enumerate(toks)]
    return np.array(vals[0::2]) + 1j * np.array(vals[1::2])


def load_channels(path) -> ChannelSet:
    try:
        text = Path(path).read_text().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise ChannelFileError(f"cannot read {path}: {e}") from e
    if not text or text[0].strip() != FILE_MAGIC:
        raise ChannelFileError(f"missing magic line {FILE_MAGIC!r}", 1)
    if len(text) < 3 or text[1].strip() != "version,N,S,L_y,sigma2":
        raise ChannelFileError("missing header row 'version,N,S,L_y,sigma2'", 2)
    head = text[2].strip().split(",")
    if len(head) != 5:
        raise ChannelFileError("header must have 5 fields", 3)
    version = _int(head[0], 3, "version")
    if version != FILE_VERSION:
        raise ChannelFileError(f"unsupported version {version}", 3, "version")
    N, S, L = (_int(head[k], 3, name) for k, name in ((1, "N"), (2, "S"), (3, "L_y")))
    if min(N, S, L) < 1:
        raise SchemaError("N, S and L_y must be positive", 3)
    sigma2 = _float(head[4], 3, "sigma2")

    meta: dict = {}
    zrows: dict[int, np.ndarray] = {}
    gains = np.full((N, S, L), np.nan, dtype=complex)
    seen = np.zeros((N, S), dtype=bool)
    for lineno, raw in enumerate(text[3:], start=4):
        line = raw.strip()
        if not line:
            continue
        toks = line.split(",")
        kind = toks[0]
        if kind == "#meta":
            if len(toks) != 3:
                raise ChannelFileError("meta rows have the form '#meta,key,value'", lineno)
            meta[toks[1]] = (toks[2], lineno)
        elif kind.startswith("#"):
            continue
        elif kind == "Z":
            r = _int(toks[1], lineno, "row") if len(toks) > 1 else -1
            if not 0 <= r < L:
                raise SchemaError(f"noise row index out of range for L_y={L}", lineno, "row")
            zrows[r] = _complex_row(toks[2:], L, lineno, f"Z[{r}]")
        elif kind == "G":
            if len(toks) < 3:
                raise ChannelFileError("gain rows need user and tone indices", lineno)
            i = _int(toks[1], lineno, "user")
            j = _int(toks[2], lineno, "tone")
            if not (0 <= i < N and 0 <= j < S):
                raise SchemaError(f"(user {i}, tone {j}) outside header N={N}, S={S}", lineno)
            if seen[i, j]:
                raise SchemaError(f"duplicate row for user {i}, tone {j}", lineno)
            gains[i, j] = _complex_row(toks[3:], L, lineno, f"G[{i},{j}]")
            seen[i, j] = True
        else:
            raise ChannelFileError(f"unknown row type {kind!r}", lineno)
    if not seen.all():
        missing = np.argwhere(~seen)
        users = sorted({int(i) for i, _ in missing})
        raise SchemaError(
            f"header declares N={N}, S={S} but {len(missing)} (user, tone) rows are missing "
            f"(users {users})"
        )
    if zrows and len(zrows) != L:
        raise SchemaError(f"noise covariance needs all {L} rows, got {len(zrows)}")
    zcov = np.array([zrows[r] for r in range(L)]) if zrows else sigma2 * np.eye(L)

    kwargs = {}
    for key, (val, lineno) in meta.items():
        if key not in _META_KEYS:
            continue
        if key == "user_distances":
            kwargs[key] = tuple(_float(t, lineno, key) for t in val.split(";"))
        elif key == "seed":
            kwargs[key] = _int(val, lineno, key)
        else:
            kwargs[key] = _float(val, lineno, key)
    kwargs.setdefault("user_distances", (3.0,) * N)
    if len(kwargs["user_distances"]) != N:
        raise SchemaError(f"meta user_distances has {len(kwargs['user_distances'])} entries, N={N}")
    scenario = Scenario(
        num_users=N, num_subcarriers=S, rx_antennas=L, noise_variance=sigma2, **kwargs
    )
    try:
        return ChannelSet(gains, zcov, scenario)
    except DomainError as exc:
        raise SchemaError(str(exc)) from exc
