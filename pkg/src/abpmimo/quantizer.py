"""Scalar quantization of the ratio metric (or of the spatial frequency) for limited feedback."""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, TrainingError

MIN_SAMPLES_PER_CELL = 100


@dataclass(frozen=True)
class ScalarCodebook:
    """Sorted codewords on ``domain``; ``2**bits`` entries."""

    codewords: tuple
    bits: int
    domain: tuple = (-1.0, 1.0)

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=float)
        if cw.size != 2 ** self.bits:
            raise ConfigurationError(f"{self.bits}-bit codebook needs {2 ** self.bits} codewords, got {cw.size}")
        if np.any(np.diff(cw) < 0):
            raise ConfigurationError("codewords must be sorted")
        object.__setattr__(self, "codewords", tuple(float(c) for c in cw))

    @property
    def thresholds(self):
        cw = np.asarray(self.codewords)
        return 0.5 * (cw[1:] + cw[:-1])

    def quantize(self, x):
        return quantize(x, self)

    def to_json(self) -> str:
        return json.dumps({"codewords": list(self.codewords), "bits": self.bits, "domain": list(self.domain)})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(tuple(d["codewords"]), int(d["bits"]), tuple(d["domain"]))


def _check_bits(bits):
    if int(bits) != bits or bits < 1:
        raise ConfigurationError(f"bits must be a positive integer, got {bits}")
    return int(bits)


def quantize(x, codebook: ScalarCodebook):
    """Nearest codeword; returns ``(value, index)``. Ties go to the lower index.

    Values outside the domain snap to the nearest end codeword; NaN is rejected.
    """
    v = np.asarray(x, dtype=float)
    if np.any(np.isnan(v)):
        raise ContractError("cannot quantize NaN")
    # side="left": a value exactly on a threshold maps to the lower cell
    idx = np.searchsorted(codebook.thresholds, v, side="left")
    out = np.asarray(codebook.codewords)[idx]
    if v.ndim == 0:
        return float(out), int(idx)
    return out, idx


def uniform_codebook(bits, domain=(-1.0, 1.0)) -> ScalarCodebook:
    """Equal-width cells, codewords at the cell midpoints."""
    bits = _check_bits(bits)
    lo, hi = domain
    k = 2 ** bits
    edges = np.linspace(lo, hi, k + 1)
    return ScalarCodebook(tuple(0.5 * (edges[1:] + edges[:-1])), bits, (float(lo), float(hi)))


def _distortion(samples, codebook):
    q, _ = quantize(samples, codebook)
    return float(np.mean((samples - q) ** 2))


def train_ratio_codebook(samples, bits, domain=(-1.0, 1.0), max_iter=500, rtol=1e-9, history=None) -> ScalarCodebook:
    """Lloyd-Max scalar quantizer trained on ``samples``.

    Initialized at the sample quantiles of the cell centres; iterates centroid and
    nearest-neighbour updates until the relative distortion change is below ``rtol``.
    Needs at least 100 samples per cell. If ``history`` is a list, the distortion
    of every iteration is appended to it.
    """
    bits = _check_bits(bits)
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    k = 2 ** bits
    if x.size < MIN_SAMPLES_PER_CELL * k:
        raise TrainingError(f"{bits}-bit training needs at least {MIN_SAMPLES_PER_CELL * k} samples, got {x.size}")
    lo, hi = domain
    if x[0] < lo - 1e-12 or x[-1] > hi + 1e-12:
        raise TrainingError("training samples fall outside the domain")
    x = np.clip(x, lo, hi)
    cw = np.quantile(x, (np.arange(k) + 0.5) / k)
    hist = [] if history is None else history
    prev = np.inf
    for _ in range(max_iter):
        th = 0.5 * (cw[1:] + cw[:-1])
        cell = np.searchsorted(th, x, side="left")
        d = float(np.mean((x - cw[cell]) ** 2))
        hist.append(d)
        if d > prev * (1 + 1e-12) + 1e-18:
            raise TrainingError("Lloyd iteration increased distortion")
        if np.isfinite(prev) and (prev - d) <= rtol * max(prev, 1e-300):
            break
        prev = d
        sums = np.bincount(cell, weights=x, minlength=k)
        counts = np.bincount(cell, minlength=k)
        # empty cells keep their codeword
        cw = np.where(counts > 0, sums / np.maximum(counts, 1), cw)
        cw = np.sort(cw)
    return ScalarCodebook(tuple(cw), bits, (float(lo), float(hi)))


FEEDBACK_MODES = ("ratio", "frequency")


@dataclass(frozen=True)
class Feedback:
    """Quantized feedback from the receiver to the transmitter.

    ``mode="ratio"`` quantizes the ratio metric before inversion; ``mode="frequency"``
    quantizes the estimated spatial frequency on ``codebook.domain``.
    """

    mode: str
    codebook: ScalarCodebook

    def __post_init__(self):
        if self.mode not in FEEDBACK_MODES:
            raise ConfigurationError(f"feedback mode must be one of {FEEDBACK_MODES}")

    def apply(self, x):
        v, _ = quantize(x, self.codebook)
        return v
