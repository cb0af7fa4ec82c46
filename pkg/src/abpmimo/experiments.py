"""Monte Carlo experiments: declarative configs, batched trial engines and CSV reports.

Every random draw is keyed ``(seed, trial, stream, ...)`` so a trial can be
regenerated alone. Noise draws are unit-variance and scaled by the SNR, so all
SNR points of one experiment see the same underlying realizations.
"""

import csv
import dataclasses
import io
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .analysis import Interferer, VarianceInputs, variance_multipath, variance_single_path
from .array_geometry import UlaConfig, beam_gain, steering_vector
from .channel import NoiseModel, PathParams, build_channel, complex_normal, make_rng, measure, sample_paths
from .codebook import (
    AuxiliaryBeamPair,
    default_grid,
    exact_offset,
    full_coverage,
    default_offset,
    random_probing_schedule,
    subaperture_beam,
)
from .errors import ConfigurationError
from .estimator import (
    angle_error,
    estimate_from_block,
    estimate_from_sweep,
    estimate_side,
    invert_ratio_offset,
    probe_schedule,
    ratio_from_powers,
)
from .quantizer import Feedback, quantize, train_ratio_codebook, uniform_codebook

log = logging.getLogger(__name__)

# stream ids inside a trial key
CHANNEL, NOISE, SCHEDULE, NLOS = 0, 1, 2, 3
# trial-independent keys
GEOMETRY, TRAINING = 1000, 1001

KINDS = ("single-path-mse", "variance", "quantization", "multipath-mse", "maee", "control-channel", "rician")
_CHUNK = 1000


# ------------------------------------------------------------------ config


@dataclass
class ExperimentConfig:
    """Declarative experiment descriptor.

    ``offset_rule`` is ``"default"`` for ``(pi/2)/N`` or ``"exact"`` for ``pi/N``;
    ``offset`` overrides both sides with an explicit spatial-frequency offset.
    SNR entries may be ``inf`` for a noiseless run.
    """

    kind: str
    tx_elements: tuple = (8,)
    rx_elements: tuple = (8,)
    offset_rule: str = "default"
    offset: float = None
    snr_db: tuple = (10.0,)
    trials: int = 10_000
    bits: tuple = ()
    num_paths: tuple = (1,)
    k_factors_db: tuple = ()
    budgets: tuple = ()
    n_rf: int = 3
    m_rf: int = 3
    association: str = "beamspace"
    seed: int = 0
    out: str = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if int(self.trials) < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.offset_rule not in ("default", "exact"):
            raise ConfigurationError("offset_rule must be 'default' or 'exact'")
        self.trials = int(self.trials)
        self.snr_db = tuple(float(s) for s in np.atleast_1d(self.snr_db))
        if not self.snr_db:
            raise ConfigurationError("snr_db must be nonempty")
        self.tx_elements = tuple(int(n) for n in np.atleast_1d(self.tx_elements))
        self.rx_elements = tuple(int(n) for n in np.atleast_1d(self.rx_elements))
        self.bits = tuple(int(b) for b in np.atleast_1d(self.bits)) if self.bits is not None else ()
        self.num_paths = tuple(int(n) for n in np.atleast_1d(self.num_paths))
        self.k_factors_db = tuple(float(k) for k in np.atleast_1d(self.k_factors_db))
        self.budgets = tuple(tuple(int(v) for v in b) for b in self.budgets)
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")

    @classmethod
    def for_kind(cls, kind, **overrides):
        base = dict(DEFAULTS.get(kind, {}))
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(kind=kind, **base)

    @classmethod
    def from_mapping(cls, d, kind=None):
        d = dict(d)
        kind = kind or d.pop("kind", None)
        d.pop("kind", None)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "snr_db" in d:
            d["snr_db"] = [float(s) for s in np.atleast_1d(d["snr_db"])]
        return cls.for_kind(kind, **d)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["snr_db"] = [s if np.isfinite(s) else "inf" for s in self.snr_db]
        return d

    def offset_for(self, cfg: UlaConfig):
        if self.offset is not None:
            return float(self.offset)
        return default_offset(cfg) if self.offset_rule == "default" else exact_offset(cfg)


DEFAULTS = {
    "single-path-mse": dict(tx_elements=(8, 16, 32), rx_elements=(8,), snr_db=(-10, -5, 0, 5, 10, 15, 20), bits=(4,)),
    "variance": dict(tx_elements=(8,), rx_elements=(4,), snr_db=(0, 5, 10, 15, 20), num_paths=(1, 2, 4, 8)),
    "quantization": dict(tx_elements=(16,), rx_elements=(8,), snr_db=(-10,), bits=(1, 2, 3, 4, 5, 6)),
    "multipath-mse": dict(
        tx_elements=(8,), rx_elements=(8,), snr_db=(0, 5, 10, 15, 20), trials=500, num_paths=(3,),
        budgets=((12, 8), (14, 14), (20, 20)),
    ),
    "maee": dict(tx_elements=(8, 16, 32, 64, 128), rx_elements=(8,), snr_db=(-10, -30), trials=2000),
    "control-channel": dict(tx_elements=(32,), snr_db=(float("inf"), 10, 0)),
    "rician": dict(tx_elements=(8,), rx_elements=(8,), snr_db=(10,), k_factors_db=(2, 8, 13.2, 100)),
}


def load_config(path, kind=None) -> ExperimentConfig:
    """Read a JSON or TOML experiment descriptor."""
    path = str(path)
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    else:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    return ExperimentConfig.from_mapping(data, kind)


# ------------------------------------------------------------------ report


@dataclass
class MetricReport:
    """Rows of ``(point, metric, value, trials, seed)`` for one experiment."""

    experiment: str
    seed: int
    config: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    COLUMNS = ("experiment", "point", "metric", "value", "trials", "seed")

    def add(self, metric, value, trials, **point):
        self.rows.append({"point": dict(point), "metric": metric, "value": float(value), "trials": int(trials)})

    def select(self, metric, **point):
        return [r for r in self.rows if r["metric"] == metric and all(r["point"].get(k) == v for k, v in point.items())]

    def value(self, metric, **point) -> float:
        hits = self.select(metric, **point)
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {metric} {point}")
        return hits[0]["value"]

    @staticmethod
    def _point_str(point):
        return ";".join(f"{k}={v}" for k, v in point.items())

    def to_csv(self, fh=None):
        """Write CSV to an open text file (or return it as a string)."""
        buf = fh if fh is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([self.experiment, self._point_str(r["point"]), r["metric"], repr(r["value"]), r["trials"], self.seed])
        return None if fh is not None else buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            self.to_csv(fh)

    def to_json(self) -> str:
        rows = [dict(r, value=r["value"] if np.isfinite(r["value"]) else str(r["value"])) for r in self.rows]
        return json.dumps({"experiment": self.experiment, "seed": self.seed, "config": self.config, "rows": rows})


def _report(cfg: ExperimentConfig):
    return MetricReport(cfg.kind, cfg.seed, cfg.to_dict())


# ----------------------------------------------------------- batched engine


def _sigma(snr_db):
    return 0.0 if not np.isfinite(snr_db) else math.sqrt(10.0 ** (-snr_db / 10.0))


def _chunks(trials, size=_CHUNK):
    for start in range(0, trials, size):
        yield np.arange(start, min(trials, start + size))


def draw_rays(seed, trials, num_paths=1, stream=CHANNEL, angle_range=(-np.pi / 2, np.pi / 2), gain_law="unit"):
    """Per-trial ray draws ``(aod, aoa, gain)``, each of shape ``(len(trials), num_paths)``."""
    trials = np.atleast_1d(trials)
    aod = np.empty((trials.size, num_paths))
    aoa = np.empty_like(aod)
    gain = np.empty((trials.size, num_paths), dtype=complex)
    for k, t in enumerate(trials):
        paths = sample_paths((seed, int(t), stream), num_paths, angle_range, gain_law)
        aod[k] = [p.aod for p in paths]
        aoa[k] = [p.aoa for p in paths]
        gain[k] = [p.gain for p in paths]
    return aod, aoa, gain


def unit_noise(seed, trials, shape, stream=NOISE):
    """Unit-variance complex Gaussian block per trial, keyed ``(seed, trial, stream)``."""
    trials = np.atleast_1d(trials)
    out = np.empty((trials.size,) + tuple(shape), dtype=complex)
    for k, t in enumerate(trials):
        out[k] = complex_normal(make_rng((seed, int(t), stream)), shape)
    return out


def sweep_signal(aod_freq, aoa_freq, alpha, grid_tx, grid_rx):
    """Noiseless sweep outputs ``(T, rx beams, tx beams)`` for ray sets of shape ``(T, L)``."""
    n, m = grid_tx.cfg.num_elements, grid_rx.cfg.num_elements
    at = np.exp(1j * aod_freq[..., None] * np.arange(n)) / np.sqrt(n)
    ar = np.exp(1j * aoa_freq[..., None] * np.arange(m)) / np.sqrt(m)
    tx_c = at.conj() @ grid_tx.beam_matrix()  # a_t^H f
    rx_c = ar @ grid_rx.beam_matrix().conj()  # w^H a_r
    return np.einsum("tlj,tl,tli->tji", rx_c, alpha, tx_c)


def link_gain(aod_freq, aoa_freq, alpha, tx_freq, rx_freq, tx_cfg, rx_cfg):
    """``|w^H H f|^2`` with ``f = a_t(tx_freq)``, ``w = a_r(rx_freq)``; rays ``(T, L)``, beams ``(T,)``."""
    n, m = tx_cfg.num_elements, rx_cfg.num_elements
    kt, kr = np.arange(n), np.arange(m)
    # a_t(mu)^H a_t(f) and a_r(w)^H a_r(psi) as geometric sums
    ct = np.exp(1j * (tx_freq[:, None, None] - aod_freq[..., None]) * kt).sum(-1) / n
    cr = np.exp(1j * (aoa_freq[..., None] - rx_freq[:, None, None]) * kr).sum(-1) / m
    return np.abs((alpha * ct * cr).sum(-1)) ** 2


def _freqs(angles, cfg):
    return cfg.max_spatial_freq * np.sin(angles)


@lru_cache(maxsize=32)
def _training_set(num_elements, offset, num_samples, seed):
    cfg = UlaConfig(num_elements)
    grid = default_grid(cfg, offset)
    rng = make_rng((seed, TRAINING))
    mu = _freqs(rng.uniform(-np.pi / 2, np.pi / 2, num_samples), cfg)
    ratios = np.empty(num_samples)
    est = np.empty(num_samples)
    beams = np.asarray(grid.beam_freqs)
    for idx in _chunks(num_samples, 20_000):
        side = estimate_side(beam_gain(beams[None, :], mu[idx, None], cfg), grid)
        ratios[idx] = side.ratio
        est[idx] = side.freq
    ratios.setflags(write=False)
    est.setflags(write=False)
    return ratios, est


def ratio_training_samples(tx_cfg: UlaConfig, offset, num_samples=300_000, seed=0):
    """Noiseless ratio metrics and frequency estimates for uniformly dropped single-antenna receivers.

    Returns ``(ratios, freq_estimates)``.
    """
    return _training_set(tx_cfg.num_elements, float(offset), int(num_samples), int(seed))


@lru_cache(maxsize=64)
def _ratio_codebook(num_elements, offset, bits, num_samples, seed):
    ratios, _ = _training_set(num_elements, offset, num_samples, seed)
    return train_ratio_codebook(ratios, bits)


def ratio_feedback(tx_cfg, offset, bits, num_samples=300_000, seed=0):
    """Ratio feedback with a Lloyd-Max codebook trained for this transmit grid."""
    return Feedback("ratio", _ratio_codebook(tx_cfg.num_elements, float(offset), int(bits), int(num_samples), int(seed)))


def frequency_feedback(tx_cfg, bits):
    return Feedback("frequency", uniform_codebook(bits, full_coverage(tx_cfg)))


# ---------------------------------------------------------- single path


def run_single_path_mse(cfg: ExperimentConfig) -> MetricReport:
    """AoD/AoA MSE (rad^2) and spectral efficiency per antenna count and SNR."""
    rep = _report(cfg)
    m_el = cfg.rx_elements[0]
    rx_cfg = UlaConfig(m_el)
    grid_rx = default_grid(rx_cfg, cfg.offset_for(rx_cfg))
    aod, aoa, gain = draw_rays(cfg.seed, np.arange(cfg.trials))
    for n_el in cfg.tx_elements:
        tx_cfg = UlaConfig(n_el)
        off = cfg.offset_for(tx_cfg)
        grid_tx = default_grid(tx_cfg, off)
        feedbacks = [("none", None)] + [(f"ratio-{b}bit", ratio_feedback(tx_cfg, off, b, seed=cfg.seed)) for b in cfg.bits]
        mu, psi = _freqs(aod, tx_cfg), _freqs(aoa, rx_cfg)
        alpha = np.sqrt(n_el * m_el) * gain
        acc = {}
        for idx in _chunks(cfg.trials):
            sig = sweep_signal(mu[idx], psi[idx], alpha[idx], grid_tx, grid_rx)
            z = unit_noise(cfg.seed, idx, sig.shape[1:])
            for snr in cfg.snr_db:
                p = np.abs(sig + _sigma(snr) * z) ** 2
                for label, fb in feedbacks:
                    est_t, est_r, _, _ = estimate_from_sweep(p, grid_tx, grid_rx, fb)
                    e_t = angle_error(aod[idx, 0], est_t.freq, tx_cfg)
                    e_r = angle_error(aoa[idx, 0], est_r.freq, rx_cfg)
                    a = acc.setdefault((snr, label), {"aod": 0.0, "aoa": 0.0, "se": 0.0, "se_perfect": 0.0})
                    a["aod"] += float(np.sum(e_t ** 2))
                    a["aoa"] += float(np.sum(e_r ** 2))
                    if np.isfinite(snr):
                        g_snr = 10.0 ** (snr / 10.0)
                        g_est = link_gain(mu[idx], psi[idx], alpha[idx], est_t.freq, est_r.freq, tx_cfg, rx_cfg)
                        a["se"] += float(np.sum(np.log2(1 + g_snr * g_est)))
                        a["se_perfect"] += float(np.sum(np.log2(1 + g_snr * np.abs(alpha[idx, 0]) ** 2)))
        for (snr, label), a in acc.items():
            pt = dict(n_tx=n_el, n_rx=m_el, snr_db=snr, feedback=label)
            rep.add("mse_aod", a["aod"] / cfg.trials, cfg.trials, **pt)
            rep.add("mse_aoa", a["aoa"] / cfg.trials, cfg.trials, **pt)
            if np.isfinite(snr):
                rep.add("se_estimated", a["se"] / cfg.trials, cfg.trials, **pt)
                rep.add("se_perfect", a["se_perfect"] / cfg.trials, cfg.trials, **pt)
    return rep


# ------------------------------------------------------------- variance


def interferer_geometry(seed, count, half_width=np.pi / 4):
    """Fixed interferer (AoD, AoA) angles, uniform in ``[-half_width, half_width]``; nested by count."""
    rng = make_rng((seed, GEOMETRY))
    return rng.uniform(-half_width, half_width, size=(count, 2))


def variance_monte_carlo(rx_cfg, tx_cfg, pair: AuxiliaryBeamPair, snr_db, trials, seed, interferers=(), noise_sharing="shared"):
    """Empirical ``E[(psi_hat - psi)^2]`` for a path at the pair boresight, transmit beam aligned.

    ``interferers`` holds (aod, aoa) angles of equal-gain paths whose phases are redrawn
    every trial. ``noise_sharing="shared"`` forms both pair beams on two RF chains in one
    slot (they observe the same antenna noise); ``"per-slot"`` probes them in separate slots.
    """
    if noise_sharing not in ("shared", "per-slot"):
        raise ConfigurationError("noise_sharing must be 'shared' or 'per-slot'")
    psi, mu = pair.boresight, 0.0
    f = steering_vector(mu, tx_cfg)
    w = steering_vector(np.array([pair.low_freq, pair.high_freq]), rx_cfg)
    noise = NoiseModel.from_db(snr_db)
    main = PathParams(1.0, 0.0, float(np.arcsin(psi / rx_cfg.max_spatial_freq)))
    fixed = build_channel([main], tx_cfg, rx_cfg) if len(interferers) == 0 else None
    err2 = np.empty(trials)
    for t in range(trials):
        if fixed is None:
            phases = make_rng((seed, t, CHANNEL)).uniform(0, 2 * np.pi, len(interferers))
            paths = [main] + [PathParams(np.exp(1j * ph), a, b) for ph, (a, b) in zip(phases, interferers)]
            ch = build_channel(paths, tx_cfg, rx_cfg)
        else:
            ch = fixed
        if noise_sharing == "shared":
            y = measure(ch, f, w, noise, (seed, t, NOISE))[:, 0]
        else:
            y = np.array([measure(ch, f, w[:, k], noise, (seed, t, NOISE, k))[0, 0] for k in range(2)])
        p = np.abs(y) ** 2
        zeta = ratio_from_powers(p[0], p[1])
        err2[t] = (invert_ratio_offset(zeta, pair.offset) + pair.boresight - psi) ** 2
    return float(np.mean(err2))


def run_variance_validation(cfg: ExperimentConfig) -> MetricReport:
    """Monte Carlo variance of the receive estimate against the closed-form predictors."""
    rep = _report(cfg)
    tx_cfg, rx_cfg = UlaConfig(cfg.tx_elements[0]), UlaConfig(cfg.rx_elements[0])
    d = cfg.offset_for(rx_cfg)
    pair = AuxiliaryBeamPair(0, 0.0, d, 0, 1)
    alpha_sq = tx_cfg.num_elements * rx_cfg.num_elements
    sharing = cfg.options.get("noise_sharing", "shared")
    geometry = interferer_geometry(cfg.seed, max(cfg.num_paths) - 1)
    for n_p in cfg.num_paths:
        inter = geometry[: n_p - 1]
        for snr in cfg.snr_db:
            pt = dict(n_paths=n_p, snr_db=snr, noise=sharing)
            mc = variance_monte_carlo(rx_cfg, tx_cfg, pair, snr, cfg.trials, cfg.seed, inter, sharing)
            gamma = 10.0 ** (snr / 10.0)
            its = tuple(
                Interferer(np.sqrt(alpha_sq), tx_cfg.max_spatial_freq * np.sin(a), rx_cfg.max_spatial_freq * np.sin(b))
                for a, b in inter
            )
            inp = VarianceInputs(pair, rx_cfg, 0.0, alpha_sq, gamma, its, tx_cfg, 0.0)
            summ = variance_multipath(inp, "sum-matrix")
            asw = variance_multipath(inp, "as-written")
            rep.add("mc_variance", mc, cfg.trials, **pt)
            rep.add("pred_sum_matrix", summ.value, cfg.trials, **pt)
            rep.add("pred_as_written", asw.value, cfg.trials, **pt)
            rep.add("as_written_diverged", float(asw.diverged), cfg.trials, **pt)
            rep.add("ratio_mc_to_sum_matrix", mc / summ.value if summ.value > 0 else np.nan, cfg.trials, **pt)
    return rep


# --------------------------------------------------------- quantization


def run_quantization_study(cfg: ExperimentConfig) -> MetricReport:
    """Quantization MSE of ratio vs frequency codebooks and the resulting AoD MSE."""
    rep = _report(cfg)
    tx_cfg, rx_cfg = UlaConfig(cfg.tx_elements[0]), UlaConfig(cfg.rx_elements[0])
    off_t, off_r = cfg.offset_for(tx_cfg), cfg.offset_for(rx_cfg)
    n_samples = int(cfg.options.get("samples", 300_000))
    ratios, freqs = ratio_training_samples(tx_cfg, off_t, n_samples, cfg.seed)
    bits = [b for b in cfg.bits if b > 0]
    feedbacks = [("none", 0, None)]
    for b in bits:
        cb_r = _ratio_codebook(tx_cfg.num_elements, float(off_t), b, n_samples, cfg.seed)
        cb_f = uniform_codebook(b, full_coverage(tx_cfg))
        cb_u = uniform_codebook(b)
        pt = dict(bits=b)
        rep.add("quant_mse_ratio", np.mean((ratios - quantize(ratios, cb_r)[0]) ** 2), n_samples, **pt)
        rep.add("quant_mse_ratio_uniform", np.mean((ratios - quantize(ratios, cb_u)[0]) ** 2), n_samples, **pt)
        rep.add("quant_mse_freq", np.mean((freqs - quantize(freqs, cb_f)[0]) ** 2), n_samples, **pt)
        feedbacks += [("ratio", b, Feedback("ratio", cb_r)), ("frequency", b, Feedback("frequency", cb_f))]
    if 0 in cfg.bits:
        feedbacks.append(("disabled", 0, None))

    grid_tx, grid_rx = default_grid(tx_cfg, off_t), default_grid(rx_cfg, off_r)
    aod, aoa, gain = draw_rays(cfg.seed, np.arange(cfg.trials))
    mu, psi = _freqs(aod, tx_cfg), _freqs(aoa, rx_cfg)
    alpha = np.sqrt(tx_cfg.num_elements * rx_cfg.num_elements) * gain
    acc = {}
    for idx in _chunks(cfg.trials):
        sig = sweep_signal(mu[idx], psi[idx], alpha[idx], grid_tx, grid_rx)
        z = unit_noise(cfg.seed, idx, sig.shape[1:])
        for snr in cfg.snr_db:
            p = np.abs(sig + _sigma(snr) * z) ** 2
            for label, b, fb in feedbacks:
                est, _, _, _ = estimate_from_sweep(p, grid_tx, grid_rx, fb)
                e = angle_error(aod[idx, 0], est.freq, tx_cfg)
                acc[(snr, label, b)] = acc.get((snr, label, b), 0.0) + float(np.sum(e ** 2))
    for (snr, label, b), s in acc.items():
        rep.add("angle_mse_aod", s / cfg.trials, cfg.trials, snr_db=snr, feedback=label, bits=b)
    return rep


# ------------------------------------------------------------ multi-path


def permutation_matched_error(a_true, a_est) -> float:
    """``min over column permutations of ||A - A_hat P||_F^2``."""
    k = a_true.shape[1]
    cost = np.array([[np.sum(np.abs(a_true[:, i] - a_est[:, j]) ** 2) for j in range(k)] for i in range(k)])
    return float(min(sum(cost[i, p[i]] for i in range(k)) for p in itertools.permutations(range(k))))


def gob_floor(grid, num_paths=1) -> float:
    """Expected ``||a(mu) - a(b)||^2`` per path when ``mu`` is uniform within +-offset of its beam ``b``."""
    n = grid.cfg.num_elements
    k = np.arange(n)
    # E[cos(k e)] for e ~ U(-d, d) is sinc(k d)
    return num_paths * float(2.0 - 2.0 / n * np.sum(np.sinc(k * grid.offset / np.pi)))


def run_multipath_matrix_mse(cfg: ExperimentConfig) -> MetricReport:
    """``E[tr(G^H G)]`` with ``G = A_t - A_t_hat`` for ABP and the grid-of-beams baseline."""
    rep = _report(cfg)
    tx_cfg, rx_cfg = UlaConfig(cfg.tx_elements[0]), UlaConfig(cfg.rx_elements[0])
    grid_tx = default_grid(tx_cfg, cfg.offset_for(tx_cfg))
    grid_rx = default_grid(rx_cfg, cfg.offset_for(rx_cfg))
    n_p = cfg.num_paths[0]
    modes = [cfg.association] + [m for m in cfg.options.get("compare_associations", ("greedy",)) if m != cfg.association]
    rep.add("gob_floor_analytic", gob_floor(grid_tx, n_p), cfg.trials)
    for n_t, m_t in cfg.budgets:
        sums = {}
        for t in range(cfg.trials):
            paths = sample_paths((cfg.seed, t, CHANNEL), n_p)
            ch = build_channel(paths, tx_cfg, rx_cfg)
            a_true = ch.tx_response()
            sched = random_probing_schedule(grid_tx, grid_rx, cfg.n_rf, cfg.m_rf, n_t, m_t, (cfg.seed, t, SCHEDULE))
            for snr in cfg.snr_db:
                y = probe_schedule(ch, sched, NoiseModel.from_db(snr), (cfg.seed, t, NOISE))
                for mode in modes:
                    est = estimate_from_block(y, sched, n_p, tx_cfg, rx_cfg, mode)
                    gob = steering_vector(np.asarray(est.gob_aod_freqs), tx_cfg)
                    s = sums.setdefault((snr, mode), [0.0, 0.0])
                    s[0] += permutation_matched_error(a_true, est.a_t_hat)
                    s[1] += permutation_matched_error(a_true, gob)
        for (snr, mode), (abp, gb) in sums.items():
            pt = dict(budget=f"{n_t}x{m_t}", snr_db=snr, association=mode)
            rep.add("abp_matrix_mse", abp / cfg.trials, cfg.trials, **pt)
            rep.add("gob_matrix_mse", gb / cfg.trials, cfg.trials, **pt)
    return rep


# ------------------------------------------------------------------ MAEE


def _maee_point(seed, trials, tx_cfg, rx_cfg, grid_tx, grid_rx, snrs):
    aod, aoa, gain = draw_rays(seed, np.arange(trials))
    mu, psi = _freqs(aod, tx_cfg), _freqs(aoa, rx_cfg)
    alpha = np.sqrt(tx_cfg.num_elements * rx_cfg.num_elements) * gain
    acc = {snr: [0.0, 0.0] for snr in snrs}
    for idx in _chunks(trials, 500):
        sig = sweep_signal(mu[idx], psi[idx], alpha[idx], grid_tx, grid_rx)
        z = unit_noise(seed, idx, sig.shape[1:])
        for snr in snrs:
            est_t, est_r, _, _ = estimate_from_sweep(np.abs(sig + _sigma(snr) * z) ** 2, grid_tx, grid_rx)
            acc[snr][0] += float(np.sum(np.abs(np.degrees(angle_error(aod[idx, 0], est_t.freq, tx_cfg)))))
            acc[snr][1] += float(np.sum(np.abs(np.degrees(angle_error(aoa[idx, 0], est_r.freq, rx_cfg)))))
    return {snr: (a / trials, b / trials) for snr, (a, b) in acc.items()}


def iteration_count(offset_deg) -> int:
    """Beam count per side is ``180 / (2 offset)``; iterations are its square."""
    return int(round(180.0 / (2.0 * offset_deg))) ** 2


def run_maee_tradeoff(cfg: ExperimentConfig) -> MetricReport:
    """Mean absolute angle error (degrees) per antenna count, plus the offset/overhead trade-off."""
    rep = _report(cfg)
    rx_cfg = UlaConfig(cfg.rx_elements[0])
    grid_rx = default_grid(rx_cfg, cfg.offset_for(rx_cfg))
    for n_el in cfg.tx_elements:
        tx_cfg = UlaConfig(n_el)
        grid_tx = default_grid(tx_cfg, cfg.offset_for(tx_cfg))
        for snr, (mt, mr) in _maee_point(cfg.seed, cfg.trials, tx_cfg, rx_cfg, grid_tx, grid_rx, cfg.snr_db).items():
            pt = dict(n_tx=n_el, n_rx=rx_cfg.num_elements, snr_db=snr)
            rep.add("maee_aod_deg", mt, cfg.trials, **pt)
            rep.add("maee_aoa_deg", mr, cfg.trials, **pt)
    for n_ant in cfg.options.get("tradeoff_elements", (4, 8, 16, 32)):
        c = UlaConfig(n_ant)
        off = cfg.offset_for(c)
        g = default_grid(c, off)
        off_deg = float(np.degrees(off))
        pt = dict(n_ant=n_ant, offset_deg=round(off_deg, 6))
        rep.add("iterations", iteration_count(off_deg), cfg.trials, **pt)
        rep.add("sweep_attempts", g.num_beams ** 2, cfg.trials, **pt)
        for snr, (mt, _) in _maee_point(cfg.seed, cfg.trials, c, c, g, g, cfg.snr_db).items():
            rep.add("maee_aod_deg", mt, cfg.trials, snr_db=snr, **pt)
    return rep


# ------------------------------------------------------- control channel


@dataclass(frozen=True)
class ControlLayer:
    """One beamforming layer.

    ``offset`` is half the auxiliary-pair probing range (spatial frequency);
    ``gob_beams`` is how many beams a grid-of-beams search forms in this layer.
    The pair beams use ``round(pi / offset)`` active elements unless ``num_active`` is set.
    """

    offset: float
    gob_beams: int
    num_active: int = None

    def active(self, n_total):
        n = self.num_active or int(round(np.pi / self.offset))
        if not 1 <= n <= n_total:
            raise ConfigurationError(f"layer needs {n} active elements but the array has {n_total}")
        return n


# three layers, each refining the previous confidence range
DEFAULT_LAYERS = (ControlLayer(np.pi / 2, 2), ControlLayer(np.pi / 8, 4), ControlLayer(np.pi / 32, 4))


def validate_layers(layers):
    layers = tuple(layers)
    if not layers:
        raise ConfigurationError("need at least one layer")
    for prev, nxt in zip(layers, layers[1:]):
        if nxt.offset > prev.offset:
            raise ConfigurationError(
                f"layer probing range 2*{nxt.offset:.4g} is wider than the previous confidence range 2*{prev.offset:.4g}"
            )
    if any(l.gob_beams < 1 for l in layers):
        raise ConfigurationError("gob_beams must be positive")
    return layers


def control_attempts(layers):
    """``(abp_attempts, gob_attempts)``: two beams per layer vs every grid beam per layer."""
    layers = validate_layers(layers)
    return 2 * len(layers), sum(l.gob_beams for l in layers)


def _layer_powers(mu, beams, alpha, sigma, z):
    # single-antenna receiver: y_b = alpha * a_N(mu)^H f_b + noise
    n = beams.shape[0]
    a = np.exp(1j * np.outer(mu, np.arange(n))) / np.sqrt(n)
    y = alpha[:, None] * (a.conj() @ beams) + sigma * z
    return np.abs(y) ** 2


def run_control_channel(cfg: ExperimentConfig) -> MetricReport:
    """Hierarchical control-channel beam search: ABP layers vs a grid-of-beams hierarchy."""
    rep = _report(cfg)
    layers = validate_layers(cfg.options.get("layers", DEFAULT_LAYERS))
    cfg_t = UlaConfig(cfg.tx_elements[0])
    abp, gob = control_attempts(layers)
    rep.add("abp_attempts", abp, 1)
    rep.add("gob_attempts", gob, 1)
    rep.add("overhead_reduction", 1.0 - abp / gob, 1)
    sector = layers[0].offset
    rng_mu = [make_rng((cfg.seed, t, CHANNEL)).uniform(-sector, sector) for t in range(cfg.trials)]
    mu = np.array(rng_mu)
    phase = np.exp(1j * np.array([make_rng((cfg.seed, t, NLOS)).uniform(0, 2 * np.pi) for t in range(cfg.trials)]))
    alpha = np.sqrt(cfg_t.num_elements) * phase
    z_all = unit_noise(cfg.seed, np.arange(cfg.trials), (2 * len(layers) + sum(l.gob_beams for l in layers),))
    for snr in cfg.snr_db:
        sigma = _sigma(snr)
        col = 0
        # auxiliary-pair hierarchy
        centre = np.zeros(cfg.trials)
        for layer in layers:
            n_act = layer.active(cfg_t.num_elements)
            beams = np.stack([
                np.stack([subaperture_beam(c + s * layer.offset, n_act, cfg_t) for s in (-1, 1)], axis=1)
                for c in centre
            ])  # (T, N, 2)
            a = np.exp(1j * np.outer(mu, np.arange(cfg_t.num_elements))) / np.sqrt(cfg_t.num_elements)
            y = alpha[:, None] * np.einsum("tn,tnb->tb", a.conj(), beams) + sigma * z_all[:, col:col + 2]
            col += 2
            p = np.abs(y) ** 2
            centre = centre + invert_ratio_offset(ratio_from_powers(np.maximum(p[:, 0], 1e-300), p[:, 1]), layer.offset)
        abp_err = np.abs(centre - mu)
        # grid-of-beams hierarchy: each layer splits the chosen beam into gob_beams narrower beams
        lo = np.full(cfg.trials, -sector)
        width = 2 * sector
        for layer in layers:
            width = width / layer.gob_beams
            n_act = min(cfg_t.num_elements, max(1, int(round(2 * np.pi / width))))
            centres = lo[:, None] + width * (np.arange(layer.gob_beams) + 0.5)
            a = np.exp(1j * np.outer(mu, np.arange(cfg_t.num_elements))) / np.sqrt(cfg_t.num_elements)
            beams = np.stack([
                np.stack([subaperture_beam(c, n_act, cfg_t) for c in row], axis=1) for row in centres
            ])
            y = alpha[:, None] * np.einsum("tn,tnb->tb", a.conj(), beams) + sigma * z_all[:, col:col + layer.gob_beams]
            col += layer.gob_beams
            best = np.argmax(np.abs(y) ** 2, axis=1)
            lo = lo + width * best
        gob_err = np.abs(lo + width / 2 - mu)
        pt = dict(snr_db=snr)
        rep.add("abp_pointing_error_mean", abp_err.mean(), cfg.trials, **pt)
        rep.add("abp_pointing_error_max", abp_err.max(), cfg.trials, **pt)
        rep.add("gob_pointing_error_mean", gob_err.mean(), cfg.trials, **pt)
        rep.add("gob_pointing_error_max", gob_err.max(), cfg.trials, **pt)
        rep.add("final_abp_resolution", 2 * layers[-1].offset, cfg.trials, **pt)
        rep.add("final_gob_resolution", width, cfg.trials, **pt)
    return rep


# ---------------------------------------------------------------- Rician


def run_rician_study(cfg: ExperimentConfig) -> MetricReport:
    """LOS-path AoD/AoA MSE and effective-gain statistics for Rician channels."""
    rep = _report(cfg)
    tx_cfg, rx_cfg = UlaConfig(cfg.tx_elements[0]), UlaConfig(cfg.rx_elements[0])
    grid_tx = default_grid(tx_cfg, cfg.offset_for(tx_cfg))
    grid_rx = default_grid(rx_cfg, cfg.offset_for(rx_cfg))
    n_nlos = int(cfg.options.get("num_nlos", 5))
    trials = np.arange(cfg.trials)
    los_aod, los_aoa, los_g = draw_rays(cfg.seed, trials)
    nl_aod, nl_aoa, nl_g = draw_rays(cfg.seed, trials, n_nlos, stream=NLOS, gain_law="complex-normal")
    nl_g = nl_g / np.sqrt(n_nlos)  # total NLOS power 1
    aod = np.hstack([los_aod, nl_aod])
    aoa = np.hstack([los_aoa, nl_aoa])
    mu, psi = _freqs(aod, tx_cfg), _freqs(aoa, rx_cfg)
    scale = np.sqrt(tx_cfg.num_elements * rx_cfg.num_elements)
    quantiles = np.linspace(0.1, 0.9, 9)
    cases = [(k, f"{k:g}") for k in cfg.k_factors_db] + [(None, "single-path")]
    for snr in cfg.snr_db:
        for k_db, label in cases:
            if k_db is None:
                alpha = scale * np.hstack([los_g, np.zeros_like(nl_g)])
            else:
                k = 10.0 ** (k_db / 10.0)
                alpha = scale * np.hstack([np.sqrt(k / (1 + k)) * los_g, np.sqrt(1 / (1 + k)) * nl_g])
            e_t = np.empty(cfg.trials)
            e_r = np.empty(cfg.trials)
            g_est = np.empty(cfg.trials)
            g_opt = np.empty(cfg.trials)
            for idx in _chunks(cfg.trials):
                sig = sweep_signal(mu[idx], psi[idx], alpha[idx], grid_tx, grid_rx)
                z = unit_noise(cfg.seed, idx, sig.shape[1:])
                est_t, est_r, _, _ = estimate_from_sweep(np.abs(sig + _sigma(snr) * z) ** 2, grid_tx, grid_rx)
                e_t[idx] = angle_error(los_aod[idx, 0], est_t.freq, tx_cfg)
                e_r[idx] = angle_error(los_aoa[idx, 0], est_r.freq, rx_cfg)
                g_est[idx] = link_gain(mu[idx], psi[idx], alpha[idx], est_t.freq, est_r.freq, tx_cfg, rx_cfg)
                g_opt[idx] = link_gain(mu[idx], psi[idx], alpha[idx], mu[idx, 0], psi[idx, 0], tx_cfg, rx_cfg)
            pt = dict(k_factor_db=label, snr_db=snr)
            rep.add("mse_aod", np.mean(e_t ** 2), cfg.trials, **pt)
            rep.add("mse_aoa", np.mean(e_r ** 2), cfg.trials, **pt)
            rep.add("median_gain_estimated", np.median(g_est), cfg.trials, **pt)
            rep.add("median_gain_perfect", np.median(g_opt), cfg.trials, **pt)
            rep.add("median_gain_ratio", np.median(g_est) / np.median(g_opt), cfg.trials, **pt)
            for q, ve, vo in zip(quantiles, np.quantile(g_est, quantiles), np.quantile(g_opt, quantiles)):
                rep.add("gain_cdf_estimated", ve, cfg.trials, quantile=round(float(q), 2), **pt)
                rep.add("gain_cdf_perfect", vo, cfg.trials, quantile=round(float(q), 2), **pt)
    return rep


RUNNERS = {
    "single-path-mse": run_single_path_mse,
    "variance": run_variance_validation,
    "quantization": run_quantization_study,
    "multipath-mse": run_multipath_matrix_mse,
    "maee": run_maee_tradeoff,
    "control-channel": run_control_channel,
    "rician": run_rician_study,
}


def run(cfg: ExperimentConfig) -> MetricReport:
    log.info("running %s with %d trials, seed %d", cfg.kind, cfg.trials, cfg.seed)
    rep = RUNNERS[cfg.kind](cfg)
    if cfg.out:
        rep.write_csv(cfg.out)
    return rep
