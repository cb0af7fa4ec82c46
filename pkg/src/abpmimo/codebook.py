"""Auxiliary beam pair grids, probing schedules and monopulse reference beams.

All beam directions live in the spatial-frequency domain. A grid with offset
``delta`` places beams every ``2*delta``; consecutive beams form a pair whose
boresight sits halfway between them, so neighbouring pairs share a beam.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .array_geometry import UlaConfig, steering_vector
from .channel import make_rng
from .errors import ConfigurationError, ContractError

_FREQ_TOL = 1e-9


def full_coverage(cfg: UlaConfig):
    """Spatial-frequency interval reached by physical angles in [-pi/2, pi/2]."""
    return (-cfg.max_spatial_freq, cfg.max_spatial_freq)


def default_offset(cfg: UlaConfig) -> float:
    """Default pair offset ``(pi/2) / N``."""
    return (np.pi / 2) / cfg.num_elements


def exact_offset(cfg: UlaConfig) -> float:
    """Offset ``pi / N``: both pair beams share the same Dirichlet numerator, so the
    measured power ratio equals the closed-form ratio metric exactly."""
    return np.pi / cfg.num_elements


@dataclass(frozen=True)
class AuxiliaryBeamPair:
    index: int
    boresight: float
    offset: float
    low_beam_id: int
    high_beam_id: int

    @property
    def low_freq(self):
        return self.boresight - self.offset

    @property
    def high_freq(self):
        return self.boresight + self.offset

    @property
    def probing_range(self):
        return (self.low_freq, self.high_freq)


@dataclass(frozen=True, eq=False)
class BeamPairGrid:
    """Beams at ``coverage[0] + 2*k*offset`` for ``k = 0..num_pairs``."""

    beam_freqs: tuple
    offset: float
    coverage: tuple
    cfg: UlaConfig

    @property
    def num_beams(self) -> int:
        return len(self.beam_freqs)

    @property
    def num_pairs(self) -> int:
        return len(self.beam_freqs) - 1

    @property
    def beam_ids(self):
        return tuple(range(self.num_beams))

    @property
    def pairs(self):
        return [
            AuxiliaryBeamPair(n, self.beam_freqs[n] + self.offset, self.offset, n, n + 1)
            for n in range(self.num_pairs)
        ]

    def pair(self, n) -> AuxiliaryBeamPair:
        if not 0 <= n < self.num_pairs:
            raise IndexError(f"pair index {n} out of range")
        return AuxiliaryBeamPair(n, self.beam_freqs[n] + self.offset, self.offset, n, n + 1)

    @property
    def circular(self) -> bool:
        """True when first and last beams are the same steering vector (span of 2*pi)."""
        span = self.beam_freqs[-1] - self.beam_freqs[0]
        return self.num_beams > 2 and abs(span - 2 * np.pi) < _FREQ_TOL

    @property
    def span(self):
        return (self.beam_freqs[0], self.beam_freqs[-1])

    def beam_matrix(self):
        """``N x (num_pairs+1)`` matrix of beam steering vectors, column = beam id."""
        return steering_vector(np.asarray(self.beam_freqs), self.cfg)

    def freq_of(self, beam_id) -> float:
        return self.beam_freqs[beam_id]

    def id_of(self, freq) -> int:
        k = (freq - self.beam_freqs[0]) / (2 * self.offset)
        i = int(round(k))
        if 0 <= i < self.num_beams and abs(self.beam_freqs[i] - freq) < _FREQ_TOL:
            return i
        raise KeyError(f"no beam at spatial frequency {freq}")

    def contains(self, freq) -> bool:
        lo, hi = self.span
        if self.circular:
            return True
        return lo - _FREQ_TOL <= freq <= hi + _FREQ_TOL

    def pair_index_for(self, freq) -> int:
        """Pair whose probing range holds ``freq``; boundaries go to the lower index."""
        lo, _ = self.span
        if self.circular:
            freq = lo + (freq - lo) % (2 * np.pi)
        n = math.ceil((freq - lo) / (2 * self.offset) - _FREQ_TOL) - 1
        return min(max(n, 0), self.num_pairs - 1)

    def to_dict(self):
        return {
            "beam_freqs": list(self.beam_freqs),
            "offset": self.offset,
            "coverage": list(self.coverage),
            "cfg": self.cfg.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["beam_freqs"]), float(d["offset"]), tuple(d["coverage"]), UlaConfig.from_dict(d["cfg"]))


def build_pair_grid(coverage, offset, cfg: UlaConfig) -> BeamPairGrid:
    """Tile ``coverage`` with ``ceil(width / (2*offset))`` adjacent pairs."""
    lo, hi = float(coverage[0]), float(coverage[1])
    if not offset > 0 or not offset < np.pi:
        raise ConfigurationError(f"pair offset must lie in (0, pi), got {offset}")
    width = hi - lo
    if not width >= 2 * offset - _FREQ_TOL:
        raise ConfigurationError(f"coverage [{lo}, {hi}] is narrower than one pair (2*offset)")
    num_pairs = max(1, math.ceil(width / (2 * offset) - 1e-9))
    freqs = tuple(lo + 2 * k * offset for k in range(num_pairs + 1))
    return BeamPairGrid(freqs, float(offset), (lo, hi), cfg)


def default_grid(cfg: UlaConfig, offset=None) -> BeamPairGrid:
    """Grid over the full visible region with the ``(pi/2)/N`` offset unless given."""
    return build_pair_grid(full_coverage(cfg), default_offset(cfg) if offset is None else offset, cfg)


@dataclass(frozen=True)
class ProbingMatrix:
    """Beams formed simultaneously on the RF chains in one probing slot."""

    beam_ids: tuple
    grid: BeamPairGrid

    @property
    def width(self):
        return len(self.beam_ids)

    def matrix(self):
        return steering_vector(np.asarray([self.grid.beam_freqs[i] for i in self.beam_ids]), self.grid.cfg)

    @property
    def columns(self):
        m = self.matrix()
        return [(m[:, j], b) for j, b in enumerate(self.beam_ids)]


@dataclass(frozen=True)
class ProbingSchedule:
    tx_grid: BeamPairGrid
    rx_grid: BeamPairGrid
    tx_ids: tuple  # tuple of per-probing id tuples
    rx_ids: tuple
    seed: tuple = None
    exhaustive: bool = True

    @property
    def tx_probings(self):
        return [ProbingMatrix(ids, self.tx_grid) for ids in self.tx_ids]

    @property
    def rx_probings(self):
        return [ProbingMatrix(ids, self.rx_grid) for ids in self.rx_ids]

    @property
    def n_t(self):
        return len(self.tx_ids)

    @property
    def m_t(self):
        return len(self.rx_ids)

    @property
    def n_rf(self):
        return len(self.tx_ids[0])

    @property
    def m_rf(self):
        return len(self.rx_ids[0])

    @property
    def tx_concat_ids(self):
        return tuple(b for ids in self.tx_ids for b in ids)

    @property
    def rx_concat_ids(self):
        return tuple(b for ids in self.rx_ids for b in ids)

    def tx_matrix(self):
        """``F_T``: all transmit probings concatenated column-wise."""
        return steering_vector(np.asarray([self.tx_grid.beam_freqs[i] for i in self.tx_concat_ids]), self.tx_grid.cfg)

    def rx_matrix(self):
        return steering_vector(np.asarray([self.rx_grid.beam_freqs[i] for i in self.rx_concat_ids]), self.rx_grid.cfg)

    @property
    def num_attempts(self):
        return self.n_t * self.n_rf * self.m_t * self.m_rf

    def to_json(self) -> str:
        return json.dumps(
            {
                "tx_grid": self.tx_grid.to_dict(),
                "rx_grid": self.rx_grid.to_dict(),
                "tx_ids": [list(t) for t in self.tx_ids],
                "rx_ids": [list(r) for r in self.rx_ids],
                "seed": None if self.seed is None else list(self.seed),
                "exhaustive": self.exhaustive,
            }
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            BeamPairGrid.from_dict(d["tx_grid"]),
            BeamPairGrid.from_dict(d["rx_grid"]),
            tuple(tuple(t) for t in d["tx_ids"]),
            tuple(tuple(r) for r in d["rx_ids"]),
            None if d["seed"] is None else tuple(d["seed"]),
            d["exhaustive"],
        )


def _draw_probings(rng, num_beams, width, count, exhaustive, side):
    if width > num_beams:
        raise ConfigurationError(f"{side}: {width} RF chains but only {num_beams} beams")
    if exhaustive and width * count < num_beams:
        raise ConfigurationError(
            f"{side}: {count} probings x {width} RF chains cannot cover all {num_beams} beams"
        )
    probings = []
    uncovered = list(rng.permutation(num_beams)) if exhaustive else []
    for _ in range(count):
        chosen = uncovered[:width]
        uncovered = uncovered[width:]
        if len(chosen) < width:
            rest = np.setdiff1d(np.arange(num_beams), chosen)
            chosen = chosen + list(rng.choice(rest, size=width - len(chosen), replace=False))
        probings.append(tuple(int(b) for b in chosen))
    # spread the covering probings over the whole schedule
    order = rng.permutation(count)
    return tuple(probings[i] for i in order)


def random_probing_schedule(grid_tx, grid_rx, n_rf, m_rf, n_t, m_t, rng_seed, exhaustive=True) -> ProbingSchedule:
    """Random TDM probing schedule; each probing matrix has distinct beams.

    With ``exhaustive`` every grid beam appears at least once in the
    concatenated transmit and receive probings.
    """
    if min(n_rf, m_rf, n_t, m_t) < 1:
        raise ConfigurationError("RF chain and probing counts must be positive")
    rng = make_rng(rng_seed)
    tx = _draw_probings(rng, grid_tx.num_beams, n_rf, n_t, exhaustive, "transmit")
    rx = _draw_probings(rng, grid_rx.num_beams, m_rf, m_t, exhaustive, "receive")
    seed = tuple(np.atleast_1d(rng_seed).tolist()) if not isinstance(rng_seed, np.random.Generator) else None
    return ProbingSchedule(grid_tx, grid_rx, tx, rx, seed, exhaustive)


def sweep_schedule(grid_tx, grid_rx) -> ProbingSchedule:
    """Single-RF-chain schedule probing every beam pair combination in index order."""
    tx = tuple((b,) for b in range(grid_tx.num_beams))
    rx = tuple((b,) for b in range(grid_rx.num_beams))
    return ProbingSchedule(grid_tx, grid_rx, tx, rx, None, True)


def monopulse_beams(boresight, cfg: UlaConfig):
    """Sum beam and difference beam (second half of the aperture negated) at ``boresight``."""
    n = cfg.num_elements
    if n % 2:
        raise ConfigurationError("monopulse difference beam needs an even number of elements")
    s = steering_vector(boresight, cfg)
    d = s.copy()
    d[n // 2:] *= -1
    return s, d


def beam_pattern(vector, freq_grid):
    """Normalized power pattern ``|v^H a(mu)|^2`` over ``freq_grid``."""
    v = np.asarray(vector)
    grid = np.atleast_1d(np.asarray(freq_grid, dtype=float))
    if grid.size == 0:
        raise ContractError("freq_grid must be nonempty")
    return np.abs(v.conj() @ steering_vector(grid, v.shape[0])) ** 2


def subaperture_beam(freq, num_active, cfg: UlaConfig):
    """Wide beam from the first ``num_active`` elements, zeros elsewhere, unit norm."""
    if not 1 <= num_active <= cfg.num_elements:
        raise ConfigurationError(f"num_active must be in [1, {cfg.num_elements}]")
    v = np.zeros(cfg.num_elements, dtype=complex)
    v[:num_active] = steering_vector(freq, num_active)
    return v
