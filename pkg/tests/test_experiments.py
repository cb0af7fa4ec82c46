import io
import json

import numpy as np
import pytest

from abpmimo.array_geometry import UlaConfig, spatial_freq_to_angle
from abpmimo.channel import NoiseModel, PathParams, build_channel
from abpmimo.cli import main
from abpmimo.codebook import default_grid, exact_offset, random_probing_schedule
from abpmimo.errors import ConfigurationError
from abpmimo.estimator import estimate_multipath
from abpmimo.experiments import (
    ControlLayer,
    ExperimentConfig,
    MetricReport,
    control_attempts,
    draw_rays,
    gob_floor,
    iteration_count,
    load_config,
    permutation_matched_error,
    run,
    unit_noise,
    validate_layers,
)


def cfg(kind, **kw):
    return ExperimentConfig.for_kind(kind, **kw)


# ------------------------------------------------------------------ config


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ExperimentConfig("nonsense")
    with pytest.raises(ConfigurationError):
        cfg("maee", trials=0)
    with pytest.raises(ConfigurationError):
        cfg("maee", snr_db=())
    with pytest.raises(ConfigurationError):
        cfg("maee", offset_rule="golden")
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_mapping({"kind": "maee", "colour": 1})


def test_config_files(tmp_path):
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"kind": "rician", "trials": 7, "snr_db": ["inf", 3]}))
    c = load_config(j)
    assert c.kind == "rician" and c.trials == 7 and c.snr_db == (float("inf"), 3.0)
    assert c.k_factors_db == (2.0, 8.0, 13.2, 100.0)  # defaults kept
    t = tmp_path / "c.toml"
    t.write_text('trials = 5\noffset_rule = "exact"\ntx_elements = [16]\n')
    c = load_config(t, "maee")
    assert c.offset_for(UlaConfig(16)) == pytest.approx(np.pi / 16)
    again = ExperimentConfig.from_mapping(c.to_dict())
    assert again == c


def test_report_csv_and_lookup():
    rep = MetricReport("demo", 3)
    rep.add("mse", 0.5, 10, snr_db=0.0, n=8)
    rep.add("mse", 0.25, 10, snr_db=10.0, n=8)
    assert rep.value("mse", snr_db=10.0) == 0.25
    with pytest.raises(KeyError):
        rep.value("mse", n=8)
    text = rep.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "experiment,point,metric,value,trials,seed"
    assert lines[1] == "demo,snr_db=0.0;n=8,mse,0.5,10,3"
    assert json.loads(rep.to_json())["rows"][1]["value"] == 0.25


# ---------------------------------------------------------- reproducibility


def test_rows_regenerate_bit_identically():
    a = run(cfg("single-path-mse", trials=200, tx_elements=(8,), bits=(), seed=5))
    b = run(cfg("single-path-mse", trials=200, tx_elements=(8,), bits=(), seed=5))
    c = run(cfg("single-path-mse", trials=200, tx_elements=(8,), bits=(), seed=6))
    assert a.rows == b.rows and a.rows != c.rows


def test_trial_draws_are_order_independent():
    full = draw_rays(4, np.arange(50))
    part = draw_rays(4, np.array([37, 12]))
    assert np.array_equal(full[0][[37, 12]], part[0])
    z = unit_noise(4, np.arange(10), (3, 5))
    assert np.array_equal(z[7], unit_noise(4, [7], (3, 5))[0])


# ------------------------------------------------------------- single path


def test_noiseless_exact_offset_mse_vanishes():
    rep = run(cfg("single-path-mse", trials=1000, snr_db=(float("inf"),), offset_rule="exact", bits=()))
    for n in (8, 16, 32):
        assert rep.value("mse_aod", n_tx=n, feedback="none") < 1e-16
        assert rep.value("mse_aoa", n_tx=n, feedback="none") < 1e-16


def test_exact_offset_mse_decreases_with_snr():
    rep = run(cfg("single-path-mse", tx_elements=(16,), snr_db=(0, 10), offset_rule="exact", bits=()))
    assert rep.value("mse_aod", snr_db=0.0) >= rep.value("mse_aod", snr_db=10.0)


def test_spectral_efficiency_with_4bit_feedback():
    rep = run(cfg("single-path-mse", tx_elements=(8, 16), snr_db=(0,), bits=(4,), trials=4000))
    for n in (8, 16):
        pt = dict(n_tx=n, feedback="ratio-4bit")
        assert rep.value("se_estimated", **pt) >= 0.95 * rep.value("se_perfect", **pt)


# ----------------------------------------------------------------- variance


def test_variance_noiseless_and_growth():
    rep = run(cfg("variance", trials=400, snr_db=(float("inf"), 10.0), num_paths=(1, 8)))
    assert rep.value("mc_variance", n_paths=1, snr_db=float("inf")) < 1e-20
    assert rep.value("mc_variance", n_paths=8, snr_db=10.0) > rep.value("mc_variance", n_paths=1, snr_db=10.0)
    assert rep.value("as_written_diverged", n_paths=1, snr_db=10.0) == 1.0


def test_variance_per_slot_noise_option():
    rep = run(cfg("variance", trials=300, snr_db=(10.0,), num_paths=(1,), options={"noise_sharing": "per-slot"}))
    assert rep.value("mc_variance", noise="per-slot") > 0
    with pytest.raises(ConfigurationError):
        run(cfg("variance", trials=3, num_paths=(1,), options={"noise_sharing": "telepathic"}))


# ------------------------------------------------------------- quantization


def test_quantization_disabled_path_is_pass_through():
    rep = run(cfg("quantization", trials=500, bits=(0, 2), options={"samples": 5000}))
    assert rep.value("angle_mse_aod", feedback="disabled") == rep.value("angle_mse_aod", feedback="none")
    assert rep.value("quant_mse_ratio", bits=2) < rep.value("quant_mse_freq", bits=2)


# --------------------------------------------------------------- multipath


def test_permutation_matching():
    a = np.eye(3)
    assert permutation_matched_error(a, a[:, [2, 0, 1]]) == 0.0


def test_gob_floor_oracle(rng):
    g = default_grid(UlaConfig(8))
    e = rng.uniform(-g.offset, g.offset, 200_000)
    k = np.arange(8)
    mc = np.mean(np.sum(np.abs(1 - np.exp(1j * np.outer(e, k))) ** 2, axis=1) / 8)
    assert gob_floor(g) == pytest.approx(mc, rel=0.01)
    assert gob_floor(g, 3) == pytest.approx(3 * gob_floor(g))


def test_multipath_small_run_reports_all_modes():
    rep = run(cfg("multipath-mse", trials=10, budgets=((20, 20),), snr_db=(20,)))
    assert rep.value("abp_matrix_mse", association="beamspace") < rep.value("gob_matrix_mse", association="beamspace")
    assert rep.value("gob_matrix_mse", association="beamspace") >= rep.value("gob_floor_analytic")
    assert rep.select("abp_matrix_mse", association="greedy")


def test_noiseless_well_separated_paths_matrix_error():
    c = UlaConfig(32)
    g = default_grid(c, exact_offset(c))
    mu = np.array([-2.0, 0.1, 2.2])
    psi = np.array([1.9, -0.2, -2.1])
    paths = [PathParams(1.0, spatial_freq_to_angle(m, c), spatial_freq_to_angle(p, c)) for m, p in zip(mu, psi)]
    ch = build_channel(paths, c, c)
    sched = random_probing_schedule(g, g, 3, 3, 11, 11, 0)
    est = estimate_multipath(ch, sched, NoiseModel.noiseless(), 3, 0, row_mode="beamspace")
    assert permutation_matched_error(ch.tx_response(), est.a_t_hat) < 1e-3


# ---------------------------------------------------------------------- maee


def test_maee_trends_and_iterations():
    rep = run(cfg("maee", trials=1000, snr_db=(-10,), options={"tradeoff_elements": (8,)}))
    vals = [rep.value("maee_aod_deg", n_tx=n) for n in (8, 16, 32, 64, 128)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1.0
    assert iteration_count(11.25) == 64
    assert rep.value("iterations", n_ant=8) == 64


# ---------------------------------------------------------- control channel


def test_control_channel_counts_and_noiseless_error():
    rep = run(cfg("control-channel", trials=500, snr_db=(float("inf"),)))
    assert rep.value("abp_attempts") == 6 and rep.value("gob_attempts") == 10
    assert rep.value("overhead_reduction") == pytest.approx(0.4)
    assert rep.value("abp_pointing_error_max") <= rep.value("final_abp_resolution")


def test_control_layers_validation():
    with pytest.raises(ConfigurationError):
        validate_layers([ControlLayer(np.pi / 8, 2), ControlLayer(np.pi / 2, 4)])
    with pytest.raises(ConfigurationError):
        validate_layers([])
    assert control_attempts([ControlLayer(np.pi / 4, 3)]) == (2, 3)
    with pytest.raises(ConfigurationError):
        ControlLayer(np.pi / 64, 2).active(32)


# -------------------------------------------------------------------- rician


def test_rician_trends():
    rep = run(cfg("rician"))
    assert rep.value("mse_aod", k_factor_db="13.2") <= rep.value("mse_aod", k_factor_db="2")
    assert rep.value("mse_aod", k_factor_db="100") == pytest.approx(rep.value("mse_aod", k_factor_db="single-path"), rel=0.1)
    assert rep.value("median_gain_ratio", k_factor_db="13.2") >= 0.9


# ----------------------------------------------------------------------- CLI


def test_cli_csv_stdout(capsys):
    assert main(["control-channel", "--trials", "20"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("experiment,point,metric,value,trials,seed")


def test_cli_json_and_out(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["maee", "--trials", "20", "--seed", "3", "--out", str(out), "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 3
    assert out.read_text().count("\n") > 5


def test_cli_error_json(capsys, tmp_path):
    assert main(["variance", "--trials", "0"]) != 0
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigurationError"
    assert main(["variance", "--config", str(tmp_path / "missing.json")]) != 0
    assert "error" in json.loads(capsys.readouterr().err)
