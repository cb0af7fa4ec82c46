"""Sparse ray-based narrowband MIMO channels and noisy probing measurements.

Randomness follows a counter contract: every draw is keyed by a tuple of
integers such as ``(master_seed, trial_index, slot_index)`` and fed to a
Philox generator, so any trial can be regenerated on its own and trials
may run in any order.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .array_geometry import UlaConfig, angle_to_spatial_freq, steering_vector
from .errors import ConfigurationError, ContractError


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator keyed by an int, a tuple of ints, or a Generator (returned as-is)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    if seed is None:
        raise ContractError("an explicit seed is required")
    key = [int(s) for s in np.atleast_1d(np.asarray(seed, dtype=np.int64)).tolist()]
    if any(k < 0 for k in key):
        raise ContractError("seed components must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def complex_normal(rng, shape, variance=1.0):
    """Circularly-symmetric complex Gaussian samples with the given per-entry variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class PathParams:
    """One propagation ray: complex gain, departure and arrival angles (radians)."""

    gain: complex
    aod: float
    aoa: float

    def __post_init__(self):
        object.__setattr__(self, "gain", complex(self.gain))
        if not np.isfinite(self.gain):
            raise ConfigurationError("path gain must be finite")
        for name in ("aod", "aoa"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or abs(v) > np.pi / 2 + 1e-12:
                raise ConfigurationError(f"{name} must lie in [-pi/2, pi/2], got {v}")
            object.__setattr__(self, name, v)

    def to_dict(self):
        return {"gain": [self.gain.real, self.gain.imag], "aod": self.aod, "aoa": self.aoa}

    @classmethod
    def from_dict(cls, d):
        re, im = d["gain"]
        return cls(complex(re, im), d["aod"], d["aoa"])


@dataclass(frozen=True)
class NoiseModel:
    """Receiver noise with per-antenna variance 1/snr. ``snr_linear=inf`` is noiseless."""

    snr_linear: float

    def __post_init__(self):
        if not self.snr_linear > 0:
            raise ConfigurationError("snr_linear must be positive")

    @classmethod
    def from_db(cls, snr_db):
        return cls(float("inf") if np.isinf(snr_db) else 10.0 ** (snr_db / 10.0))

    @classmethod
    def noiseless(cls):
        return cls(float("inf"))

    @property
    def variance(self) -> float:
        return 0.0 if np.isinf(self.snr_linear) else 1.0 / self.snr_linear


@dataclass(frozen=True)
class RicianConfig:
    k_factor_db: float
    num_nlos: int = 5

    def __post_init__(self):
        if self.num_nlos < 1:
            raise ConfigurationError("num_nlos must be >= 1")

    @property
    def los_weight(self) -> float:
        k = 10.0 ** (self.k_factor_db / 10.0)
        return np.sqrt(k / (1.0 + k))

    @property
    def nlos_weight(self) -> float:
        k = 10.0 ** (self.k_factor_db / 10.0)
        return np.sqrt(1.0 / (1.0 + k))


@dataclass(frozen=True)
class ChannelInstance:
    """Dense ``M x N`` channel matrix together with the rays it was built from."""

    matrix: np.ndarray
    paths: tuple
    tx_cfg: UlaConfig
    rx_cfg: UlaConfig
    seed: tuple = field(default=None, compare=False)

    @property
    def aod_freqs(self):
        return np.array([angle_to_spatial_freq(p.aod, self.tx_cfg) for p in self.paths])

    @property
    def aoa_freqs(self):
        return np.array([angle_to_spatial_freq(p.aoa, self.rx_cfg) for p in self.paths])

    @property
    def dominant_index(self) -> int:
        return int(np.argmax([abs(p.gain) for p in self.paths]))

    def tx_response(self):
        """``A_t``: one transmit steering vector per path."""
        return steering_vector(self.aod_freqs, self.tx_cfg)

    def rx_response(self):
        return steering_vector(self.aoa_freqs, self.rx_cfg)

    def to_json(self) -> str:
        return json.dumps(
            {
                "tx": self.tx_cfg.to_dict(),
                "rx": self.rx_cfg.to_dict(),
                "paths": [p.to_dict() for p in self.paths],
                "seed": list(self.seed) if self.seed is not None else None,
            }
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        seed = tuple(d["seed"]) if d.get("seed") is not None else None
        ch = build_channel(
            [PathParams.from_dict(p) for p in d["paths"]],
            UlaConfig.from_dict(d["tx"]),
            UlaConfig.from_dict(d["rx"]),
        )
        return cls(ch.matrix, ch.paths, ch.tx_cfg, ch.rx_cfg, seed)


def build_channel(paths, tx_cfg: UlaConfig, rx_cfg: UlaConfig, seed=None) -> ChannelInstance:
    """``H = sqrt(N*M) * sum_l g_l a_r(aoa_l) a_t(aod_l)^H``."""
    paths = tuple(paths)
    if not paths:
        raise ConfigurationError("a channel needs at least one path")
    n, m = tx_cfg.num_elements, rx_cfg.num_elements
    gains = np.array([p.gain for p in paths])
    at = steering_vector(np.array([angle_to_spatial_freq(p.aod, tx_cfg) for p in paths]), tx_cfg)
    ar = steering_vector(np.array([angle_to_spatial_freq(p.aoa, rx_cfg) for p in paths]), rx_cfg)
    h = np.sqrt(n * m) * (ar * gains) @ at.conj().T
    h.setflags(write=False)
    return ChannelInstance(h, paths, tx_cfg, rx_cfg, None if seed is None else tuple(np.atleast_1d(seed).tolist()))


GAIN_LAWS = ("unit", "complex-normal", "equal-power")


def sample_paths(rng_seed, num_paths, angle_range=(-np.pi / 2, np.pi / 2), gain_law="unit", aoa_range=None):
    """Draw ``num_paths`` rays with angles uniform on ``angle_range``.

    gain_law:
      * ``unit``: |g| = 1, uniform phase
      * ``complex-normal``: g ~ CN(0, 1)
      * ``equal-power``: |g|^2 = 1/num_paths, uniform phase
    """
    if num_paths < 1:
        raise ConfigurationError("num_paths must be >= 1")
    ranges = [angle_range, angle_range if aoa_range is None else aoa_range]
    for lo, hi in ranges:
        if not hi > lo:
            raise ConfigurationError(f"empty angle range [{lo}, {hi}]")
        if lo < -np.pi / 2 - 1e-12 or hi > np.pi / 2 + 1e-12:
            raise ConfigurationError("angle range must sit inside [-pi/2, pi/2]")
    rng = make_rng(rng_seed)
    aod = rng.uniform(*ranges[0], size=num_paths)
    aoa = rng.uniform(*ranges[1], size=num_paths)
    if gain_law == "unit":
        gains = np.exp(1j * rng.uniform(0, 2 * np.pi, num_paths))
    elif gain_law == "complex-normal":
        gains = complex_normal(rng, num_paths)
    elif gain_law == "equal-power":
        gains = np.exp(1j * rng.uniform(0, 2 * np.pi, num_paths)) / np.sqrt(num_paths)
    else:
        raise ConfigurationError(f"unknown gain law {gain_law!r}; expected one of {GAIN_LAWS}")
    return [PathParams(g, t, p) for g, t, p in zip(gains, aod, aoa)]


def build_rician(los: PathParams, nlos, cfg: RicianConfig, tx_cfg, rx_cfg, seed=None) -> ChannelInstance:
    """Rician channel ``sqrt(K/(1+K)) H_LOS + sqrt(1/(1+K)) H_NLOS``.

    The component weights are folded into the path gains, so the returned
    instance still satisfies the plain ray-sum relation. The LOS ray is path 0.
    """
    nlos = list(nlos)
    if len(nlos) != cfg.num_nlos:
        raise ContractError(f"expected {cfg.num_nlos} NLOS paths, got {len(nlos)}")
    scaled = [PathParams(los.gain * cfg.los_weight, los.aod, los.aoa)]
    scaled += [PathParams(p.gain * cfg.nlos_weight, p.aod, p.aoa) for p in nlos]
    return build_channel(scaled, tx_cfg, rx_cfg, seed)


def measure(channel, precoder, combiner, noise: NoiseModel, rng_seed=None):
    """Probe ``channel`` with each precoder column and combine with every combiner column.

    Returns the ``L x K`` matrix ``W^H H F + W^H [n_1 ... n_K]`` where each
    ``n_k ~ CN(0, sigma^2 I_M)`` is fresh for precoder column ``k`` and shared by all
    combiner columns (they observe the same antenna signals). Training symbols are 1.
    """
    h = channel.matrix if isinstance(channel, ChannelInstance) else np.asarray(channel)
    f = np.asarray(precoder)
    w = np.asarray(combiner)
    if f.ndim == 1:
        f = f[:, None]
    if w.ndim == 1:
        w = w[:, None]
    m, n = h.shape
    if f.shape[0] != n or w.shape[0] != m:
        raise ContractError(
            f"shape mismatch: H is {h.shape}, precoder {f.shape}, combiner {w.shape}"
        )
    y = w.conj().T @ h @ f
    if noise.variance > 0:
        rng = make_rng(rng_seed)
        y = y + w.conj().T @ complex_normal(rng, (m, f.shape[1]), noise.variance)
    return y


def effective_gain(channel, tx_vector, rx_vector) -> float:
    """Post-beamforming channel power ``|w^H H f|^2``."""
    h = channel.matrix if isinstance(channel, ChannelInstance) else np.asarray(channel)
    return float(abs(np.vdot(rx_vector, h @ tx_vector)) ** 2)
