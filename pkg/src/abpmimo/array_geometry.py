"""Uniform linear array geometry: steering vectors, angle conversions, beam gains."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError

# |delta| below this is treated as perfect alignment in the Dirichlet closed form
_ALIGNED = 1e-9
_ANGLE_TOL = 1e-12


@dataclass(frozen=True)
class UlaConfig:
    """Uniform linear array with ``num_elements`` isotropic elements.

    ``spacing_wavelengths`` is the inter-element distance in wavelengths (d/lambda).
    """

    num_elements: int
    spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if int(self.num_elements) != self.num_elements or self.num_elements < 2:
            raise ConfigurationError(f"num_elements must be an integer >= 2, got {self.num_elements}")
        if not 0.0 < self.spacing_wavelengths <= 1.0:
            raise ConfigurationError(
                f"spacing_wavelengths must lie in (0, 1], got {self.spacing_wavelengths}"
            )
        object.__setattr__(self, "num_elements", int(self.num_elements))

    @property
    def max_spatial_freq(self) -> float:
        """Spatial frequency of an endfire path, 2*pi*d/lambda."""
        return 2.0 * np.pi * self.spacing_wavelengths

    def to_dict(self):
        return {"num_elements": self.num_elements, "spacing_wavelengths": self.spacing_wavelengths}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["num_elements"]), float(d.get("spacing_wavelengths", 0.5)))


def angle_to_spatial_freq(angle, cfg: UlaConfig):
    """Map a physical angle (radians from broadside) to spatial frequency 2*pi*d*sin(angle)."""
    angle = np.asarray(angle, dtype=float)
    if np.any(np.abs(angle) > np.pi / 2 + _ANGLE_TOL) or not np.all(np.isfinite(angle)):
        raise DomainError("physical angle must lie in [-pi/2, pi/2]")
    out = cfg.max_spatial_freq * np.sin(angle)
    return float(out) if out.ndim == 0 else out


def spatial_freq_to_angle(freq, cfg: UlaConfig):
    """Principal-branch inverse of :func:`angle_to_spatial_freq`."""
    x = np.asarray(freq, dtype=float) / cfg.max_spatial_freq
    if np.any(np.abs(x) > 1.0 + _ANGLE_TOL) or not np.all(np.isfinite(x)):
        raise DomainError("normalized spatial frequency must lie in [-1, 1]")
    out = np.arcsin(np.clip(x, -1.0, 1.0))
    return float(out) if out.ndim == 0 else out


def steering_vector(freq, cfg):
    """Unit-norm array response ``exp(1j*k*freq)/sqrt(N)``, k = 0..N-1.

    ``cfg`` may be a :class:`UlaConfig` or a bare element count. For an array of
    frequencies the result is an ``N x K`` matrix with one steering vector per column.
    """
    n = cfg.num_elements if isinstance(cfg, UlaConfig) else int(cfg)
    freq = np.asarray(freq, dtype=float)
    k = np.arange(n)
    if freq.ndim == 0:
        return np.exp(1j * k * float(freq)) / np.sqrt(n)
    return np.exp(1j * np.outer(k, freq.ravel())) / np.sqrt(n)


def wrap_phase(x):
    """Wrap to [-pi, pi)."""
    return (np.asarray(x, dtype=float) + np.pi) % (2.0 * np.pi) - np.pi


def beam_gain(freq_a, freq_b, cfg):
    """Normalized beam power ``|a(freq_a)^H a(freq_b)|^2`` via the Dirichlet kernel.

    Broadcasts over array arguments. Returns values in [0, 1].
    """
    n = cfg.num_elements if isinstance(cfg, UlaConfig) else int(cfg)
    delta = wrap_phase(np.asarray(freq_a, dtype=float) - np.asarray(freq_b, dtype=float))
    aligned = np.abs(delta) < _ALIGNED
    safe = np.where(aligned, 1.0, delta)
    g = np.sin(n * safe / 2.0) ** 2 / (n * n * np.sin(safe / 2.0) ** 2)
    g = np.where(aligned, 1.0, np.minimum(g, 1.0))
    return float(g) if g.ndim == 0 else g


def half_power_beamwidth(cfg: UlaConfig, boresight_angle: float = 0.0, resolution: int = 200001):
    """Full main-lobe width (radians, physical angle) where the beam power stays above 1/2.

    Numeric search on a dense angle grid around ``boresight_angle``.
    """
    mu0 = angle_to_spatial_freq(boresight_angle, cfg)
    angles = np.linspace(-np.pi / 2, np.pi / 2, resolution)
    gains = beam_gain(angle_to_spatial_freq(angles, cfg), mu0, cfg)
    center = int(np.argmin(np.abs(angles - boresight_angle)))
    lo = center
    while lo > 0 and gains[lo - 1] >= 0.5:
        lo -= 1
    hi = center
    while hi < resolution - 1 and gains[hi + 1] >= 0.5:
        hi += 1
    return angles[hi] - angles[lo]
