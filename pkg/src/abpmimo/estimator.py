"""Ratio-metric AoD/AoA estimation with auxiliary beam pairs.

The core routines are vectorized over a leading trial axis so the Monte Carlo
harness and the single-instance API run the same code.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .array_geometry import angle_to_spatial_freq, steering_vector, wrap_phase
from .channel import ChannelInstance, NoiseModel, measure
from .codebook import AuxiliaryBeamPair, BeamPairGrid, ProbingSchedule
from .errors import ContractError, DegenerateMeasurementError, EstimationIncompleteError


# ---------------------------------------------------------------- ratio metric


def ratio_closed_form(offset_from_boresight, delta):
    """``-sin(z) sin(delta) / (1 - cos(z) cos(delta))`` for ``z = mu - boresight``."""
    z = np.asarray(offset_from_boresight, dtype=float)
    out = -np.sin(z) * np.sin(delta) / (1.0 - np.cos(z) * np.cos(delta))
    return float(out) if out.ndim == 0 else out


def ratio_metric_closed_form(freq, pair: AuxiliaryBeamPair):
    return ratio_closed_form(np.asarray(freq, dtype=float) - pair.boresight, pair.offset)


@dataclass(frozen=True)
class PowerPair:
    """Measured powers of the lower-frequency (delta) and higher-frequency (sigma) beams."""

    delta_power: float
    sigma_power: float
    pair: AuxiliaryBeamPair = None

    def __post_init__(self):
        if not (self.delta_power >= 0 and self.sigma_power >= 0):
            raise ContractError("beam powers must be finite and non-negative")

    def ratio(self) -> float:
        return ratio_from_powers(self.delta_power, self.sigma_power)


def ratio_from_powers(delta_power, sigma_power=None):
    """``(P_delta - P_sigma) / (P_delta + P_sigma)`` clamped to [-1, 1].

    Accepts a :class:`PowerPair`, two scalars, or two arrays.
    """
    if isinstance(delta_power, PowerPair):
        delta_power, sigma_power = delta_power.delta_power, delta_power.sigma_power
    d = np.asarray(delta_power, dtype=float)
    s = np.asarray(sigma_power, dtype=float)
    total = d + s
    if np.any(total <= 0):
        raise DegenerateMeasurementError("both beam powers are zero; the ratio metric is undefined")
    out = np.clip((d - s) / total, -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def invert_ratio_offset(ratio, delta):
    """Offset ``mu - boresight`` recovered from a ratio metric (inverse of the closed form).

    Solves ``z cos(d) cos(x) - sin(d) sin(x) = z`` as ``r cos(x - phi) = z`` and keeps the
    root inside ``(-d, d)``, which is the smaller one in magnitude. Valid for any ``d`` in (0, pi).
    """
    z = np.clip(np.asarray(ratio, dtype=float), -1.0, 1.0)
    sd, cd = np.sin(delta), np.cos(delta)
    phi = np.arctan2(-sd, z * cd)
    # arccos(z / r) with r^2 - z^2 = sin(d)^2 (1 - z^2)
    half = np.arctan2(sd * np.sqrt((1.0 - z) * (1.0 + z)), z)
    c1 = np.angle(np.exp(1j * (phi + half)))
    c2 = np.angle(np.exp(1j * (phi - half)))
    out = np.where(np.abs(c1) <= np.abs(c2), c1, c2)
    out = np.clip(out, -delta, delta)
    return float(out) if out.ndim == 0 else out


def invert_ratio(ratio, pair: AuxiliaryBeamPair):
    """Spatial frequency estimate inside ``pair``'s probing range."""
    out = pair.boresight + invert_ratio_offset(ratio, pair.offset)
    return out


# ------------------------------------------------------------- pair selection


def _ring_powers(powers, grid):
    """Per-beam powers on the distinct-beam ring; circular grids fold the duplicate endpoint."""
    if grid is not None and grid.circular:
        ring = powers[..., :-1].copy()
        ring[..., 0] = 0.5 * (powers[..., 0] + powers[..., -1])
        return ring, True
    return powers, False


def select_pairs(powers, grid: BeamPairGrid = None, anchor=None):
    """Vectorized pair selection over the last axis of ``powers`` (one entry per beam).

    Picks the strongest beam, pairs it with its stronger neighbour and returns
    ``(pair_index, delta_power, sigma_power, max_beam)`` arrays. Ties go to the
    lowest index. On a circular grid the last beam duplicates beam 0 and
    adjacency wraps around. ``anchor`` replaces the strongest beam with given
    beam indices (used when a profile holds several paths).
    """
    p = np.asarray(powers, dtype=float)
    if p.shape[-1] < 2:
        raise ContractError("need at least two beams (one pair)")
    ring, circ = _ring_powers(p, grid)
    r = ring.shape[-1]
    b = np.argmax(ring, axis=-1) if anchor is None else np.asarray(anchor) % r
    take = lambda idx: np.take_along_axis(ring, idx[..., None], axis=-1)[..., 0]
    if circ:
        left, right = (b - 1) % r, (b + 1) % r
        pl, pr = take(left), take(right)
        # tie goes to the lower beam index
        go_right = (pr > pl) | ((pr == pl) & (right < left))
        pair = np.where(go_right, b, (b - 1) % r)
        low_pow = take(pair % r)
        high_pow = take((pair + 1) % r)
    else:
        left = np.maximum(b - 1, 0)
        right = np.minimum(b + 1, r - 1)
        pl = np.where(b > 0, take(left), -np.inf)
        pr = np.where(b < r - 1, take(right), -np.inf)
        go_right = pr > pl
        pair = np.where(go_right, b, b - 1)
        low_pow = take(pair)
        high_pow = take(pair + 1)
    return pair, low_pow, high_pow, b


def select_pair(powers, grid: BeamPairGrid = None):
    """Single-profile pair selection; returns ``(pair_index, PowerPair)``."""
    p = np.asarray(powers, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ContractError("powers must be a nonempty 1-D array indexed by beam")
    pair, lo, hi, _ = select_pairs(p, grid)
    pair = int(pair)
    ap = grid.pair(pair) if grid is not None else None
    return pair, PowerPair(float(lo), float(hi), ap)


# -------------------------------------------------------------- estimates


@dataclass(frozen=True)
class AngleEstimate:
    spatial_freq: float
    angle: float
    pair_id: int
    ratio: float
    out_of_coverage: bool = False

    def to_dict(self):
        return {
            "spatial_freq": self.spatial_freq,
            "angle": self.angle,
            "pair_id": self.pair_id,
            "ratio": self.ratio,
            "out_of_coverage": self.out_of_coverage,
        }


def freq_to_angle_clipped(freq, cfg):
    """Physical angle of a spatial frequency, saturating at endfire."""
    x = np.clip(np.asarray(freq, dtype=float) / cfg.max_spatial_freq, -1.0, 1.0)
    out = np.arcsin(x)
    return float(out) if out.ndim == 0 else out


def angle_error(true_angle, est_freq, cfg):
    """Signed estimation error in physical angle, alias-aware.

    With half-wavelength spacing the spatial frequencies +pi and -pi describe the
    same steering vector, so the estimate is first moved to its alias closest to
    the truth before converting back to an angle.
    """
    mu = angle_to_spatial_freq(true_angle, cfg)
    est = np.asarray(est_freq, dtype=float)
    if cfg.spacing_wavelengths >= 0.5:
        est = mu + wrap_phase(est - mu)
    return freq_to_angle_clipped(est, cfg) - np.asarray(true_angle, dtype=float)


def _apply_ratio_feedback(ratio, feedback):
    if feedback is not None and feedback.mode == "ratio":
        return feedback.apply(ratio)
    return ratio


def _apply_freq_feedback(freq, feedback):
    if feedback is not None and feedback.mode == "frequency":
        return feedback.apply(freq)
    return freq


@dataclass
class SideEstimates:
    """Batch of one-sided estimates (arrays over the trial axis)."""

    freq: np.ndarray
    pair: np.ndarray
    ratio: np.ndarray
    gob_freq: np.ndarray
    max_beam: np.ndarray


def estimate_side(profiles, grid: BeamPairGrid, feedback=None, anchor=None) -> SideEstimates:
    """Ratio-metric estimates from per-beam power profiles (last axis = beam id)."""
    pair, lo, hi, b = select_pairs(profiles, grid, anchor)
    zeta = ratio_from_powers(lo, hi)
    zeta = _apply_ratio_feedback(zeta, feedback)
    freqs = np.asarray(grid.beam_freqs)
    boresight = freqs[np.asarray(pair)] + grid.offset
    est = boresight + invert_ratio_offset(zeta, grid.offset)
    est = _apply_freq_feedback(est, feedback)
    ring_n = grid.num_beams - 1 if grid.circular else grid.num_beams
    gob = freqs[np.asarray(b) % ring_n]
    return SideEstimates(np.asarray(est, dtype=float), np.asarray(pair), np.asarray(zeta, dtype=float), gob, np.asarray(b))


def best_beams(powers):
    """Receive / transmit beam indices with the largest total received energy.

    ``powers`` has shape ``(..., rx_beams, tx_beams)``.
    """
    rx = np.argmax(powers.sum(axis=-1), axis=-1)
    tx = np.argmax(powers.sum(axis=-2), axis=-1)
    return rx, tx


def estimate_from_sweep(powers, grid_tx, grid_rx, feedback=None):
    """AoD/AoA estimates from exhaustive TDM sweep powers of shape ``(..., Br, Bt)``.

    The receive beam with the most energy fixes the transmit-side profile and
    vice versa. Returns ``(aod, aoa, rx_beam, tx_beam)`` with :class:`SideEstimates`.
    """
    p = np.asarray(powers, dtype=float)
    if p.shape[-2:] != (grid_rx.num_beams, grid_tx.num_beams):
        raise ContractError(f"sweep shape {p.shape[-2:]} does not match grids")
    rx, tx = best_beams(p)
    tx_profile = np.take_along_axis(p, rx[..., None, None], axis=-2)[..., 0, :]
    rx_profile = np.take_along_axis(p, tx[..., None, None], axis=-1)[..., :, 0]
    aod = estimate_side(tx_profile, grid_tx, feedback)
    aoa = estimate_side(rx_profile, grid_rx, None)
    return aod, aoa, rx, tx


@dataclass(frozen=True)
class SinglePathResult:
    """Joint AoD/AoA estimate; unpacks as ``aod, aoa = result``."""

    aod: AngleEstimate
    aoa: AngleEstimate
    powers: np.ndarray = field(repr=False)
    rx_beam: int
    tx_beam: int
    gob_aod_freq: float
    gob_aoa_freq: float

    def __iter__(self):
        return iter((self.aod, self.aoa))

    def to_json(self) -> str:
        return json.dumps(
            {
                "aod": self.aod.to_dict(),
                "aoa": self.aoa.to_dict(),
                "rx_beam": self.rx_beam,
                "tx_beam": self.tx_beam,
                "gob_aod_freq": self.gob_aod_freq,
                "gob_aoa_freq": self.gob_aoa_freq,
                "powers": np.asarray(self.powers).tolist(),
            }
        )


def sweep_powers(channel: ChannelInstance, grid_tx, grid_rx, noise: NoiseModel, rng_seed):
    """Received power for every (receive beam, transmit beam) combination.

    Receive beam ``j`` is one TDM slot group keyed ``(*seed, j)``; each transmit beam
    inside it sees fresh noise.
    """
    f = grid_tx.beam_matrix()
    w = grid_rx.beam_matrix()
    seed = tuple(np.atleast_1d(rng_seed).tolist()) if rng_seed is not None else (0,)
    y = np.vstack([measure(channel, f, w[:, j], noise, seed + (j,)) for j in range(w.shape[1])])
    return np.abs(y) ** 2


def _dominant_out_of_coverage(channel, grid_tx, grid_rx):
    k = channel.dominant_index
    return (not grid_tx.contains(channel.aod_freqs[k]), not grid_rx.contains(channel.aoa_freqs[k]))


def _angle_estimate(side: SideEstimates, idx, cfg, flag):
    f = float(np.asarray(side.freq)[idx])
    return AngleEstimate(f, freq_to_angle_clipped(f, cfg), int(np.asarray(side.pair)[idx]), float(np.asarray(side.ratio)[idx]), flag)


def estimate_single_path(channel: ChannelInstance, grid_tx, grid_rx, noise: NoiseModel, rng_seed, feedback=None) -> SinglePathResult:
    """Sweep all ``(N_K+1)(M_K+1)`` beam combinations and estimate the dominant ray."""
    p = sweep_powers(channel, grid_tx, grid_rx, noise, rng_seed)
    aod, aoa, rx, tx = estimate_from_sweep(p, grid_tx, grid_rx, feedback)
    oc_t, oc_r = _dominant_out_of_coverage(channel, grid_tx, grid_rx)
    return SinglePathResult(
        _angle_estimate(aod, (), channel.tx_cfg, oc_t),
        _angle_estimate(aoa, (), channel.rx_cfg, oc_r),
        p,
        int(rx),
        int(tx),
        float(aod.gob_freq),
        float(aoa.gob_freq),
    )


# ------------------------------------------------------------ multi-path


def row_assignment(y_block, num_paths, mode="literal"):
    """Map path slot ``l`` to a row of ``y_block``.

    ``literal``: path l uses row l. ``greedy``: rows ranked by their peak power,
    strongest first (stable, so ties keep the lower row).
    """
    y = np.asarray(y_block)
    if num_paths > y.shape[0]:
        raise ContractError(f"{num_paths} paths but only {y.shape[0]} rows")
    if mode == "literal":
        return list(range(num_paths))
    if mode == "greedy":
        peak = np.max(np.abs(y) ** 2, axis=1)
        order = np.argsort(-peak, kind="stable")
        return [int(r) for r in order[:num_paths]]
    raise ContractError(f"unknown row assignment mode {mode!r}")


def beam_profile(powers, beam_ids, num_beams):
    """Average power per beam id over repeated appearances; NaN where a beam never appears."""
    ids = np.asarray(beam_ids)
    total = np.bincount(ids, weights=np.asarray(powers, dtype=float), minlength=num_beams)
    count = np.bincount(ids, minlength=num_beams)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1), np.nan)


def _check_profile(profile, grid, side, on_missing):
    missing = np.flatnonzero(np.isnan(profile))
    if missing.size == 0:
        return profile
    if on_missing == "raise":
        bad = sorted({n for b in missing for n in (b - 1, b) if 0 <= n < grid.num_pairs})
        raise EstimationIncompleteError(
            f"{side} schedule never probes beams {missing.tolist()}; pairs {bad} cannot be located",
            bad,
        )
    return np.nan_to_num(profile, nan=0.0)


@dataclass(frozen=True)
class MultipathEstimate:
    per_path: tuple  # of (aod AngleEstimate, aoa AngleEstimate)
    a_t_hat: np.ndarray = field(repr=False)
    a_r_hat: np.ndarray = field(repr=False)
    rx_probing: int
    tx_probing: int
    gob_aod_freqs: tuple
    gob_aoa_freqs: tuple

    @property
    def aod_freqs(self):
        return np.array([p[0].spatial_freq for p in self.per_path])

    @property
    def aoa_freqs(self):
        return np.array([p[1].spatial_freq for p in self.per_path])

    def to_json(self) -> str:
        return json.dumps(
            {
                "per_path": [{"aod": a.to_dict(), "aoa": b.to_dict()} for a, b in self.per_path],
                "rx_probing": self.rx_probing,
                "tx_probing": self.tx_probing,
                "gob_aod_freqs": list(self.gob_aod_freqs),
                "gob_aoa_freqs": list(self.gob_aoa_freqs),
            }
        )


def probe_schedule(channel, schedule: ProbingSchedule, noise: NoiseModel, rng_seed):
    """Full block measurement: row block ``m`` holds ``W_m^H H F_T`` plus noise.

    Receive probing ``m`` is keyed ``(*seed, m)``; every transmit column gets fresh noise.
    """
    f_t = schedule.tx_matrix()
    seed = tuple(np.atleast_1d(rng_seed).tolist())
    blocks = [measure(channel, f_t, w.matrix(), noise, seed + (m,)) for m, w in enumerate(schedule.rx_probings)]
    return np.vstack(blocks)


ASSOCIATION_MODES = ("literal", "greedy", "beamspace")


def beamspace_powers(y, schedule: ProbingSchedule):
    """Fold a full block measurement into a ``(rx beams, tx beams)`` power map.

    Repeated beam appearances are averaged; combinations never probed are NaN.
    On circular grids the duplicated endpoint beams share their averaged value.
    """
    gt, gr = schedule.tx_grid, schedule.rx_grid
    rows = np.asarray(schedule.rx_concat_ids)
    cols = np.asarray(schedule.tx_concat_ids)
    total = np.zeros((gr.num_beams, gt.num_beams))
    count = np.zeros_like(total)
    np.add.at(total, (rows[:, None], cols[None, :]), np.abs(y) ** 2)
    np.add.at(count, (rows[:, None], cols[None, :]), 1.0)
    if gr.circular:
        total[[0, -1]] = total[0] + total[-1]
        count[[0, -1]] = count[0] + count[-1]
    if gt.circular:
        total[:, [0, -1]] = (total[:, 0] + total[:, -1])[:, None]
        count[:, [0, -1]] = (count[:, 0] + count[:, -1])[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1), np.nan)


def _mainlobe_guard(grid):
    # beams within the first null of the strongest beam: null at 2*pi/N, beams every 2*offset
    return max(1, int(round(np.pi / (grid.cfg.num_elements * grid.offset))))


def beamspace_peaks(power_map, grid_tx, grid_rx, num_paths):
    """Greedy 2-D peak picking: take the strongest (rx, tx) cell, blank its main lobe, repeat."""
    ring_r = grid_rx.num_beams - 1 if grid_rx.circular else grid_rx.num_beams
    ring_t = grid_tx.num_beams - 1 if grid_tx.circular else grid_tx.num_beams
    work = np.nan_to_num(np.asarray(power_map, dtype=float)[:ring_r, :ring_t], nan=-np.inf)
    gr_, gt_ = _mainlobe_guard(grid_rx), _mainlobe_guard(grid_tx)
    peaks = []
    for _ in range(num_paths):
        j, i = np.unravel_index(np.argmax(work), work.shape)
        peaks.append((int(j), int(i)))
        jj = np.arange(j - gr_, j + gr_ + 1)
        ii = np.arange(i - gt_, i + gt_ + 1)
        jj = jj % ring_r if grid_rx.circular else jj[(jj >= 0) & (jj < ring_r)]
        ii = ii % ring_t if grid_tx.circular else ii[(ii >= 0) & (ii < ring_t)]
        work[np.ix_(jj, ii)] = -np.inf
    return peaks


def estimate_from_block(y, schedule: ProbingSchedule, num_paths, tx_cfg, rx_cfg, row_mode="greedy", feedback=None, on_missing="raise"):
    """Per-path AoD/AoA estimates from a full block measurement ``y``.

    ``row_mode`` chooses how path slots are associated with measurements:

    * ``literal`` / ``greedy``: rows of the receive probing with the most energy
      give the transmit profiles, columns of the transmit probing with the most
      energy give the receive profiles (see :func:`row_assignment`).
    * ``beamspace``: all probings are folded into one beam-space power map and
      each path takes one main-lobe peak; its row and column are the profiles.
    """
    if row_mode not in ASSOCIATION_MODES:
        raise ContractError(f"unknown association mode {row_mode!r}")
    m_rf, n_rf = schedule.m_rf, schedule.n_rf
    if num_paths > min(n_rf, m_rf):
        raise ContractError("num_paths must not exceed min(N_RF, M_RF)")
    gt, gr = schedule.tx_grid, schedule.rx_grid
    pw = np.abs(y) ** 2
    row_energy = pw.reshape(schedule.m_t, m_rf, -1).sum(axis=(1, 2))
    col_energy = pw.reshape(pw.shape[0], schedule.n_t, n_rf).sum(axis=(0, 2))
    m_best = int(np.argmax(row_energy))
    n_best = int(np.argmax(col_energy))

    if row_mode == "beamspace":
        pmap = beamspace_powers(y, schedule)
        peaks = beamspace_peaks(pmap, gt, gr, num_paths)
        tx_prof = np.stack([_check_profile(pmap[j].copy(), gt, "transmit", on_missing) for j, _ in peaks])
        rx_prof = np.stack([_check_profile(pmap[:, i].copy(), gr, "receive", on_missing) for _, i in peaks])
        tx_anchor = np.array([i for _, i in peaks])
        rx_anchor = np.array([j for j, _ in peaks])
    else:
        y_rx = y[m_best * m_rf:(m_best + 1) * m_rf, :]
        y_tx = y[:, n_best * n_rf:(n_best + 1) * n_rf]
        tx_ids = schedule.tx_concat_ids
        rx_ids = schedule.rx_concat_ids
        rows = row_assignment(y_rx, num_paths, row_mode)
        cols = row_assignment(y_tx.T, num_paths, row_mode)
        tx_prof = np.stack([
            _check_profile(beam_profile(np.abs(y_rx[r]) ** 2, tx_ids, gt.num_beams), gt, "transmit", on_missing)
            for r in rows
        ])
        rx_prof = np.stack([
            _check_profile(beam_profile(np.abs(y_tx[:, c]) ** 2, rx_ids, gr.num_beams), gr, "receive", on_missing)
            for c in cols
        ])
        tx_anchor = rx_anchor = None
    aod = estimate_side(tx_prof, gt, feedback, tx_anchor)
    aoa = estimate_side(rx_prof, gr, None, rx_anchor)
    per_path = tuple(
        (_angle_estimate(aod, l, tx_cfg, False), _angle_estimate(aoa, l, rx_cfg, False))
        for l in range(num_paths)
    )
    return MultipathEstimate(
        per_path,
        steering_vector(aod.freq, tx_cfg),
        steering_vector(aoa.freq, rx_cfg),
        m_best,
        n_best,
        tuple(float(v) for v in aod.gob_freq),
        tuple(float(v) for v in aoa.gob_freq),
    )


def estimate_multipath(
    channel: ChannelInstance,
    schedule: ProbingSchedule,
    noise: NoiseModel,
    num_paths,
    rng_seed,
    row_mode="greedy",
    feedback=None,
    on_missing="raise",
) -> MultipathEstimate:
    """Multi-RF-chain estimation of ``num_paths`` AoD/AoA pairs from one probing schedule."""
    if num_paths > min(schedule.n_rf, schedule.m_rf):
        raise ContractError("num_paths must not exceed min(N_RF, M_RF)")
    y = probe_schedule(channel, schedule, noise, rng_seed)
    return estimate_from_block(y, schedule, num_paths, channel.tx_cfg, channel.rx_cfg, row_mode, feedback, on_missing)
