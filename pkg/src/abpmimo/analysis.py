"""Closed-form variance predictors for ratio-metric angle estimates.

The receive-side estimate from one auxiliary beam pair is treated as a
monopulse-style discriminator: the difference-channel signal power ``S``
against the sum-channel noise (plus interference) power ``N``, scaled by the
slope of the ratio metric at the pair boresight.
"""

from dataclasses import dataclass, field

import numpy as np

from .array_geometry import UlaConfig, steering_vector
from .codebook import AuxiliaryBeamPair
from .errors import ConfigurationError, DomainError
from .estimator import ratio_closed_form

VARIANTS = ("as-written", "sum-matrix")
_SINGULAR = 1e-12


def slope_k(pair_or_offset) -> float:
    """Slope of the ratio metric at the pair boresight, ``-sin(d) / (1 - cos(d))``."""
    d = pair_or_offset.offset if isinstance(pair_or_offset, AuxiliaryBeamPair) else float(pair_or_offset)
    if not 0 < d < np.pi:
        raise DomainError(f"offset must lie in (0, pi), got {d}")
    den = 1.0 - np.cos(d)
    if den < 1e-15:
        raise DomainError("slope diverges as the offset goes to zero")
    return -np.sin(d) / den


def pair_matrices(pair: AuxiliaryBeamPair, cfg: UlaConfig):
    """``(L_diff, L_sum, U_sum)``: outer-product difference/sum matrices and the sum of beam norms."""
    lo = steering_vector(pair.low_freq, cfg)
    hi = steering_vector(pair.high_freq, cfg)
    p_lo, p_hi = np.outer(lo, lo.conj()), np.outer(hi, hi.conj())
    upsilon = np.vdot(lo, lo) + np.vdot(hi, hi)
    return p_lo - p_hi, p_lo + p_hi, upsilon


@dataclass(frozen=True)
class Interferer:
    """Non-dominant path seen through the transmit beam used for the estimate."""

    gain: complex  # alpha = sqrt(N*M) * g
    aod_freq: float
    aoa_freq: float


@dataclass(frozen=True)
class VarianceInputs:
    rx_pair: AuxiliaryBeamPair
    rx_cfg: UlaConfig
    true_rx_freq: float
    alpha_sq: float
    snr_linear: float
    interferers: tuple = ()
    tx_cfg: UlaConfig = None
    tx_beam_freq: float = None

    def __post_init__(self):
        if abs(self.true_rx_freq - self.rx_pair.boresight) >= self.rx_pair.offset:
            raise ConfigurationError("true receive frequency must lie strictly inside the pair's probing range")
        if not (self.alpha_sq > 0 and self.snr_linear > 0):
            raise ConfigurationError("alpha_sq and snr_linear must be positive")
        if self.interferers and (self.tx_cfg is None or self.tx_beam_freq is None):
            raise ConfigurationError("interferers need the transmit array and beam frequency")


@dataclass(frozen=True)
class VariancePrediction:
    value: float
    diverged: bool
    signal: float = field(default=np.nan)
    noise: float = field(default=np.nan)


def variance_from_terms(k, signal, noise, ratio):
    """Discriminator variance ``(1 + ratio^2) / (2 k^2 signal / noise)``."""
    if signal <= 0:
        return np.inf
    return (1.0 + ratio * ratio) * noise / (2.0 * k * k * signal)


def interference_power(inp: VarianceInputs) -> float:
    """Sum over interferers of ``|a_t^H(b) G^H L_sum G a_t(b)|`` with ``G = alpha a_r(aoa) a_t(aod)^H``."""
    if not inp.interferers:
        return 0.0
    _, l_sum, _ = pair_matrices(inp.rx_pair, inp.rx_cfg)
    at_beam = steering_vector(inp.tx_beam_freq, inp.tx_cfg)
    total = 0.0
    for it in inp.interferers:
        ar = steering_vector(it.aoa_freq, inp.rx_cfg)
        at = steering_vector(it.aod_freq, inp.tx_cfg)
        tx_coupling = np.vdot(at, at_beam)
        rx_quad = np.vdot(ar, l_sum @ ar)
        total += abs(abs(it.gain) ** 2 * abs(tx_coupling) ** 2 * rx_quad)
    return float(total)


def interference_power_bruteforce(inp: VarianceInputs) -> float:
    """Same term via explicit matrix products (test oracle)."""
    _, l_sum, _ = pair_matrices(inp.rx_pair, inp.rx_cfg)
    b = steering_vector(inp.tx_beam_freq, inp.tx_cfg)
    total = 0.0
    for it in inp.interferers:
        g = it.gain * np.outer(steering_vector(it.aoa_freq, inp.rx_cfg), steering_vector(it.aod_freq, inp.tx_cfg).conj())
        total += abs(b.conj() @ g.conj().T @ l_sum @ g @ b)
    return float(total)


def _predict(inp: VarianceInputs, variant, noise_power):
    if variant not in VARIANTS:
        raise ConfigurationError(f"variant must be one of {VARIANTS}")
    l_diff, l_sum, upsilon = pair_matrices(inp.rx_pair, inp.rx_cfg)
    a = steering_vector(inp.true_rx_freq, inp.rx_cfg)
    lam = l_diff if variant == "as-written" else l_sum
    quad = abs(np.vdot(a, lam @ a))
    signal = inp.alpha_sq * quad
    zeta = ratio_closed_form(inp.true_rx_freq - inp.rx_pair.boresight, inp.rx_pair.offset)
    k = slope_k(inp.rx_pair)
    if quad < _SINGULAR:
        return VariancePrediction(np.inf, True, signal, noise_power)
    return VariancePrediction(float(variance_from_terms(k, signal, noise_power, zeta)), False, signal, noise_power)


def variance_single_path(inp: VarianceInputs, variant="sum-matrix") -> VariancePrediction:
    """Predicted variance of the receive spatial-frequency estimate for a single path.

    ``as-written`` uses the difference matrix in the signal term; its quadratic
    form vanishes when the path sits on the pair boresight, which is reported as
    ``diverged=True`` with an infinite value. ``sum-matrix`` uses the sum matrix.
    """
    _, _, upsilon = pair_matrices(inp.rx_pair, inp.rx_cfg)
    noise = abs(upsilon) / inp.snr_linear
    return _predict(inp, variant, noise)


def variance_multipath(inp: VarianceInputs, variant="sum-matrix") -> VariancePrediction:
    """Like :func:`variance_single_path` with interference added to the sum-channel noise."""
    _, _, upsilon = pair_matrices(inp.rx_pair, inp.rx_cfg)
    noise = abs(upsilon) / inp.snr_linear + interference_power(inp)
    return _predict(inp, variant, noise)


def variance_substituted(inp: VarianceInputs, variant="sum-matrix") -> float:
    """Single-path prediction written out with the slope substituted (algebraic cross-check)."""
    l_diff, l_sum, upsilon = pair_matrices(inp.rx_pair, inp.rx_cfg)
    a = steering_vector(inp.true_rx_freq, inp.rx_cfg)
    lam = l_diff if variant == "as-written" else l_sum
    d = inp.rx_pair.offset
    zeta = ratio_closed_form(inp.true_rx_freq - inp.rx_pair.boresight, d)
    num = (1 - np.cos(d)) ** 2 * abs(upsilon) * (1 + zeta ** 2)
    den = 2 * inp.alpha_sq * inp.snr_linear * np.sin(d) ** 2 * abs(np.vdot(a, lam @ a))
    return float(num / den) if den > 0 else np.inf
