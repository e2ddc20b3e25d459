"""Random-access scenario generation and received-signal synthesis.

A scenario places M multi-antenna APs and K single-antenna devices on a
square with wrap-around, draws large-scale fading from a micro-cell
pathloss law with log-normal shadowing, applies dominant-AP power control
and picks the active set and transmission delays.  The received block at
each AP is the superposition of delay-shifted signatures through Rayleigh
channels plus white noise.

All linear powers are in mW; gains are dimensionless.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

SEED_MASK = (1 << 64) - 1

_SCENARIO_STREAM = 0
_SIGNAL_STREAM = 1


def db_to_linear(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class SystemConfig:
    """Static description of the network and traffic model.

    ``target_snr_db`` overrides percentile power control with a fixed
    dominant-AP SNR (still capped at the maximum transmit power); it is
    used for controlled-SNR experiments and tests.
    """

    num_aps: int
    antennas_per_ap: int
    num_devices: int
    sig_len: int
    max_delay: int
    area_side: float = 1000.0
    activity_ratio: float = 0.1
    noise_power_dbm: float = -104.0
    max_tx_power_dbm: float = 23.0
    pathloss_intercept_db: float = -30.5
    pathloss_slope_db_per_decade: float = -36.7
    shadow_std_db: float = 2.0
    power_percentile: float = 0.95
    rng_seed: int = 0
    target_snr_db: float | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("num_aps", "antennas_per_ap", "num_devices", "sig_len"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.max_delay, (int, np.integer)) or self.max_delay < 0:
            raise ValueError(f"max_delay must be a non-negative integer, got {self.max_delay!r}")
        if not self.area_side > 0:
            raise ValueError(f"area_side must be positive, got {self.area_side!r}")
        if not 0.0 < self.activity_ratio < 1.0:
            raise ValueError(f"activity_ratio must lie in (0, 1), got {self.activity_ratio!r}")
        if self.shadow_std_db < 0:
            raise ValueError(f"shadow_std_db must be >= 0, got {self.shadow_std_db!r}")
        if not 0.0 < self.power_percentile <= 1.0:
            raise ValueError(f"power_percentile must lie in (0, 1], got {self.power_percentile!r}")

    @property
    def seq_len(self) -> int:
        """Effective sequence length L + T."""
        return self.sig_len + self.max_delay

    @property
    def num_active(self) -> int:
        return int(np.floor(self.activity_ratio * self.num_devices + 0.5))

    @property
    def noise_var(self) -> float:
        return float(db_to_linear(self.noise_power_dbm))

    @property
    def max_tx_power(self) -> float:
        return float(db_to_linear(self.max_tx_power_dbm))

    def replace(self, **changes) -> "SystemConfig":
        values = asdict(self)
        values.update(changes)
        return SystemConfig(**values)

    @classmethod
    def from_dict(cls, values: dict) -> "SystemConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown system field(s): {', '.join(sorted(unknown))}")
        return cls(**values)


@dataclass
class Scenario:
    """One realization of geometry, fading, powers, signatures and activity.

    ``delays[k]`` is -1 for inactive devices.
    """

    ap_positions: np.ndarray  # (M, 2)
    device_positions: np.ndarray  # (K, 2)
    gains: np.ndarray  # (K, M) linear
    powers: np.ndarray  # (K,) mW
    noise_var: np.ndarray  # (M,) mW
    signatures: np.ndarray  # (K, L) complex
    activity: np.ndarray  # (K,) bool
    delays: np.ndarray  # (K,) int
    max_delay: int

    @property
    def num_devices(self) -> int:
        return self.gains.shape[0]

    @property
    def num_aps(self) -> int:
        return self.gains.shape[1]

    @property
    def truth(self) -> np.ndarray:
        return true_indicator(self)


@dataclass
class ReceivedData:
    """Per-AP observations plus the side information known to the detector.

    ``sig_rows`` stacks the effective signatures s_{k,t} as rows, in the
    order (k ascending, t ascending), so coordinate ``j = k*(T+1) + t``
    of the activity vector corresponds to ``sig_rows[j]``.
    """

    Y: np.ndarray  # (M, L+T, N)
    R: np.ndarray  # (M, L+T, L+T), Y Y^H / N
    eff_sigs: np.ndarray  # (K, T+1, L+T)
    noise_var: np.ndarray  # (M,)
    gains: np.ndarray  # (K, M)
    powers: np.ndarray  # (K,)
    max_delay: int
    sig_rows: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        K, Tp1, n = self.eff_sigs.shape
        self.sig_rows = np.ascontiguousarray(self.eff_sigs.reshape(K * Tp1, n))
        pg = self.powers[:, None] * self.gains  # (K, M)
        self.weights = np.ascontiguousarray(np.repeat(pg.T, Tp1, axis=1))  # (M, K(T+1))

    @property
    def num_aps(self) -> int:
        return self.R.shape[0]

    @property
    def num_devices(self) -> int:
        return self.eff_sigs.shape[0]

    @property
    def seq_len(self) -> int:
        return self.R.shape[1]

    @property
    def num_antennas(self) -> int:
        return self.Y.shape[2]

    @property
    def num_coords(self) -> int:
        return self.sig_rows.shape[0]

    def with_covariances(self, R: np.ndarray) -> "ReceivedData":
        """Copy sharing everything except the sample covariances."""
        return ReceivedData(
            Y=self.Y, R=np.asarray(R, dtype=complex), eff_sigs=self.eff_sigs,
            noise_var=self.noise_var, gains=self.gains, powers=self.powers,
            max_delay=self.max_delay,
        )

    def subset_aps(self, aps) -> "ReceivedData":
        aps = np.atleast_1d(np.asarray(aps, dtype=int))
        return ReceivedData(
            Y=self.Y[aps], R=self.R[aps], eff_sigs=self.eff_sigs,
            noise_var=self.noise_var[aps], gains=self.gains[:, aps],
            powers=self.powers, max_delay=self.max_delay,
        )


def trial_seed(seed: int, trial_index: int) -> int:
    """Per-trial seed, reproducible and independent of scheduling."""
    return (int(seed) ^ int(trial_index)) & SEED_MASK


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & SEED_MASK, stream])


def torus_distance(p, q, side: float):
    """Euclidean distance on a square torus of the given side length.

    Broadcasts over leading dimensions of ``p`` and ``q``.
    """
    delta = np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))
    delta = np.minimum(delta, side - delta)
    return np.sqrt(np.sum(delta**2, axis=-1))


def pathloss_db(distance, config: SystemConfig, shadow_db=0.0):
    # 1 m floor keeps log10 finite for coincident points (probability zero)
    d = np.maximum(np.asarray(distance, dtype=float), 1.0)
    return (config.pathloss_intercept_db
            + config.pathloss_slope_db_per_decade * np.log10(d)
            + shadow_db)


def effective_signatures(signatures: np.ndarray, max_delay: int) -> np.ndarray:
    """Delay-shifted copies: out[k, t] = [0]*t + s_k + [0]*(T - t)."""
    K, L = signatures.shape
    out = np.zeros((K, max_delay + 1, L + max_delay), dtype=complex)
    for t in range(max_delay + 1):
        out[:, t, t:t + L] = signatures
    return out


def assign_powers(gains: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Dominant-AP power control.

    Every device targets a common SNR at its strongest AP.  The target is
    the largest value reachable at full power by at least a
    ``power_percentile`` fraction of the devices; the others transmit at
    full power.
    """
    g_star = np.max(gains, axis=1)
    p_max = config.max_tx_power
    sigma2 = config.noise_var
    if config.target_snr_db is not None:
        target = float(db_to_linear(config.target_snr_db))
    else:
        snr_full = np.sort(p_max * g_star / sigma2)
        K = snr_full.size
        need = int(np.ceil(config.power_percentile * K - 1e-9))
        target = snr_full[K - max(need, 1)]
    return np.minimum(p_max, target * sigma2 / g_star)


def generate_scenario(config: SystemConfig, trial_seed: int) -> Scenario:
    rng = _rng(trial_seed, _SCENARIO_STREAM)
    M, K, L, T = config.num_aps, config.num_devices, config.sig_len, config.max_delay
    side = config.area_side

    ap_pos = rng.uniform(0.0, side, size=(M, 2))
    dev_pos = rng.uniform(0.0, side, size=(K, 2))
    dist = torus_distance(dev_pos[:, None, :], ap_pos[None, :, :], side)
    shadow = rng.normal(0.0, config.shadow_std_db, size=(K, M)) if config.shadow_std_db > 0 else 0.0
    gains = db_to_linear(pathloss_db(dist, config, shadow))

    active_idx = rng.choice(K, size=config.num_active, replace=False)
    activity = np.zeros(K, dtype=bool)
    activity[active_idx] = True
    delays = np.full(K, -1, dtype=int)
    delays[activity] = rng.integers(0, T + 1, size=int(activity.sum()))

    signatures = (rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L))) / np.sqrt(2.0)

    return Scenario(
        ap_positions=ap_pos,
        device_positions=dev_pos,
        gains=gains,
        powers=assign_powers(gains, config),
        noise_var=np.full(M, config.noise_var),
        signatures=signatures,
        activity=activity,
        delays=delays,
        max_delay=T,
    )


def true_indicator(scenario: Scenario) -> np.ndarray:
    """Binary activity/delay indicator of length K(T+1)."""
    K, Tp1 = scenario.num_devices, scenario.max_delay + 1
    b = np.zeros((K, Tp1))
    idx = np.flatnonzero(scenario.activity)
    b[idx, scenario.delays[idx]] = 1.0
    return b.reshape(-1)


def received_signal(scenario: Scenario, channels: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Noisy superposition at every AP for explicit small-scale channels.

    channels: (M, K, N) small-scale fading; noise: (M, L+T, N) additive
    noise (already scaled).  Returns Y with shape (M, L+T, N).
    """
    eff = effective_signatures(scenario.signatures, scenario.max_delay)
    Y = np.array(noise, dtype=complex, copy=True)
    for k in np.flatnonzero(scenario.activity):
        s = eff[k, scenario.delays[k]]
        amp = np.sqrt(scenario.powers[k] * scenario.gains[k])  # (M,)
        Y += amp[:, None, None] * s[None, :, None] * channels[:, k, None, :]
    return Y


def make_received_data(scenario: Scenario, Y: np.ndarray) -> ReceivedData:
    N = Y.shape[2]
    R = Y @ np.conj(np.swapaxes(Y, 1, 2)) / N
    R = 0.5 * (R + np.conj(np.swapaxes(R, 1, 2)))
    return ReceivedData(
        Y=Y, R=R,
        eff_sigs=effective_signatures(scenario.signatures, scenario.max_delay),
        noise_var=np.asarray(scenario.noise_var, dtype=float),
        gains=scenario.gains, powers=scenario.powers,
        max_delay=scenario.max_delay,
    )


def synthesize_received(scenario: Scenario, config: SystemConfig, trial_seed: int) -> ReceivedData:
    rng = _rng(trial_seed, _SIGNAL_STREAM)
    M, N, K = config.num_aps, config.antennas_per_ap, config.num_devices
    n = config.seq_len

    def cn(shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

    channels = cn((M, K, N))
    noise = cn((M, n, N)) * np.sqrt(scenario.noise_var)[:, None, None]
    return make_received_data(scenario, received_signal(scenario, channels, noise))


def simulate_trial(config: SystemConfig, seed: int) -> tuple[Scenario, ReceivedData]:
    scenario = generate_scenario(config, seed)
    return scenario, synthesize_received(scenario, config, seed)


# -- JSON layout: arrays nested lists, complex entries as [re, im] pairs --------

def _encode(a: np.ndarray):
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return np.stack([a.real, a.imag], axis=-1).tolist()
    return a.tolist()


def _decode_complex(obj) -> np.ndarray:
    a = np.asarray(obj, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def scenario_to_json(scenario: Scenario) -> str:
    return json.dumps({
        "ap_positions": _encode(scenario.ap_positions),
        "device_positions": _encode(scenario.device_positions),
        "gains": _encode(scenario.gains),
        "powers": _encode(scenario.powers),
        "noise_var": _encode(scenario.noise_var),
        "signatures": _encode(scenario.signatures),
        "activity": scenario.activity.astype(int).tolist(),
        "delays": scenario.delays.tolist(),
        "max_delay": scenario.max_delay,
    })


def scenario_from_json(text: str) -> Scenario:
    d = json.loads(text)
    return Scenario(
        ap_positions=np.asarray(d["ap_positions"], dtype=float),
        device_positions=np.asarray(d["device_positions"], dtype=float),
        gains=np.asarray(d["gains"], dtype=float),
        powers=np.asarray(d["powers"], dtype=float),
        noise_var=np.asarray(d["noise_var"], dtype=float),
        signatures=_decode_complex(d["signatures"]),
        activity=np.asarray(d["activity"], dtype=bool),
        delays=np.asarray(d["delays"], dtype=int),
        max_delay=int(d["max_delay"]),
    )


def received_to_json(data: ReceivedData) -> str:
    return json.dumps({
        "Y": _encode(data.Y),
        "R": _encode(data.R),
        "eff_sigs": _encode(data.eff_sigs),
        "noise_var": _encode(data.noise_var),
        "gains": _encode(data.gains),
        "powers": _encode(data.powers),
        "max_delay": data.max_delay,
    })


def received_from_json(text: str) -> ReceivedData:
    d = json.loads(text)
    return ReceivedData(
        Y=_decode_complex(d["Y"]),
        R=_decode_complex(d["R"]),
        eff_sigs=_decode_complex(d["eff_sigs"]),
        noise_var=np.asarray(d["noise_var"], dtype=float),
        gains=np.asarray(d["gains"], dtype=float),
        powers=np.asarray(d["powers"], dtype=float),
        max_delay=int(d["max_delay"]),
    )
