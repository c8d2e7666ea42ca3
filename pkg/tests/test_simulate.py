import dataclasses
import math
import warnings

import numpy as np
import pytest

from ouphase import (
    InterferometerConfig,
    ProcessParams,
    SimConfig,
    brute_force_mmse,
    merge_reports,
    observation_spectrum,
    offset_mse,
    run_closed_loop,
    run_replicas,
    tracking_mse,
    whiteness_diagnostic,
)


@pytest.fixture
def quick_cfg(process, nli):
    return SimConfig(
        process=process,
        instrument=nli,
        dt=1e-7,
        duration=0.05,
        burn_in=2e-4,
        epsilons=(0.0, 2e-6, -2e-6),
        seed=11,
    )


def run_quiet(cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_closed_loop(cfg)


def test_sim_config_validation(process, nli):
    with pytest.raises(ValueError):
        SimConfig(process=process, instrument=nli, dt=-1e-8, duration=0.01)
    with pytest.raises(ValueError):
        SimConfig(process=process, instrument=nli, dt=1e-7, duration=1e-5)  # < 100/lam
    with pytest.raises(ValueError):
        SimConfig(process=process, instrument=nli, dt=1e-7, duration=0.01, burn_in=1e-6)
    with pytest.raises(ValueError):
        SimConfig(process=process, instrument=nli, dt=1e-7, duration=0.01, epsilons=())
    with pytest.raises(ValueError):
        SimConfig(process=process, instrument=nli, dt=1e-7, duration=0.01, epsilons=(-0.02,))
    with pytest.raises(ValueError):
        SimConfig(process=process, instrument=nli, dt=1e-7, duration=0.01, model_fidelity="born")
    cfg = SimConfig(
        process=process, instrument=nli, dt=1e-7, duration=0.01, model_fidelity="exact-homodyne"
    )
    assert cfg.model_fidelity == "exact"
    assert cfg.burn_in == pytest.approx(1e-4)


def test_dt_cutoff_guards(process, nli):
    bad = SimConfig(process=process, instrument=nli, dt=1e-6, duration=0.01)
    with pytest.raises(ValueError):
        run_closed_loop(bad)  # dt * cutoff = 0.83
    warned = SimConfig(process=process, instrument=nli, dt=1e-7, duration=0.005)
    with pytest.warns(RuntimeWarning):
        run_closed_loop(warned)


def test_closed_loop_matches_analytics(quick_cfg):
    rep = run_quiet(quick_cfg)
    for rec in rep.records:
        assert rec.deviation_sigmas < 3.0, (rec.mode, rec.deviation_sigmas)
        assert rec.standard_error > 0
        assert rec.n_effective <= rec.n_samples
    assert rep.whiteness is not None and rep.whiteness.passed
    assert rep.orthogonality_passed
    assert rep.snr_empirical == pytest.approx(rep.snr_analytic, rel=0.02)


def test_closed_loop_mzi(process, mzi):
    cfg = SimConfig(
        process=process,
        instrument=mzi,
        dt=1e-7,
        duration=0.05,
        burn_in=2e-4,
        epsilons=(0.0, 2e-6, -2e-6),
        seed=13,
    )
    rep = run_quiet(cfg)
    for rec in rep.records:
        assert rec.deviation_sigmas < 3.0, (rec.mode, rec.deviation_sigmas)
    assert rep.records[0].analytic_mse == pytest.approx(2.317e-2, rel=1e-3)


def test_closed_loop_deterministic(quick_cfg):
    a = run_quiet(quick_cfg)
    b = run_quiet(quick_cfg)
    assert a == b


def test_closed_loop_noiseless_phase(nli):
    p = ProcessParams(kappa=1e-30, lam=1e5)
    cfg = SimConfig(process=p, instrument=nli, dt=1e-7, duration=0.01, seed=3)
    rep = run_quiet(cfg)
    assert rep.records[0].empirical_mse < 1e-20


def test_exact_vs_linearized(process, nli):
    base = SimConfig(
        process=process,
        instrument=nli,
        dt=1e-7,
        duration=0.05,
        burn_in=2e-4,
        epsilons=(0.0,),
        seed=21,
    )
    lin = run_quiet(base)
    exact = run_quiet(dataclasses.replace(base, model_fidelity="exact"))
    a = lin.records[0].empirical_mse
    b = exact.records[0].empirical_mse
    assert abs(a - b) / a < 0.02  # the small-angle linearization is benign here


def test_exact_mode_mzi(process, mzi):
    cfg = SimConfig(
        process=process,
        instrument=mzi,
        dt=1e-7,
        duration=0.02,
        model_fidelity="exact",
        seed=5,
    )
    rep = run_quiet(cfg)
    assert rep.records[0].deviation_sigmas < 4.0


def test_run_replicas_and_merge(process, nli):
    cfg = SimConfig(
        process=process, instrument=nli, dt=1e-7, duration=0.01, epsilons=(0.0,), seed=9
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        merged = run_replicas(cfg, replicas=3)
    assert merged.n_replicas == 3
    single = run_quiet(cfg)
    assert merged.records[0].n_samples == 3 * single.records[0].n_samples
    assert merged.records[0].standard_error < single.records[0].standard_error
    assert merged.records[0].deviation_sigmas < 3.0
    with pytest.raises(ValueError):
        run_replicas(cfg, replicas=0)
    with pytest.raises(ValueError):
        merge_reports([])


def test_report_record_lookup(quick_cfg):
    rep = run_quiet(quick_cfg)
    assert rep.record_for(2e-6).mode == "prediction"
    with pytest.raises(KeyError):
        rep.record_for(5.0)


def test_whiteness_diagnostic_basics():
    rng = np.random.default_rng(8)
    white = rng.standard_normal(300_000)
    res = whiteness_diagnostic(white)
    assert res.passed
    assert res.threshold == pytest.approx(3.0 / math.sqrt(300_000))
    from scipy.signal import lfilter

    colored = lfilter([1.0], [1.0, -0.5], white)
    assert not whiteness_diagnostic(colored).passed
    with pytest.raises(ValueError):
        whiteness_diagnostic(white[:1000])


def test_brute_force_window_limits(process, nli):
    obs = observation_spectrum(nli, process)
    assert brute_force_mmse(obs, process, 0.0, window=0.0, dt=1e-7) == pytest.approx(
        process.stationary_variance()
    )
    with pytest.raises(ValueError):
        brute_force_mmse(obs, process, 0.0, window=1.0, dt=1e-7)
    with pytest.raises(ValueError):
        brute_force_mmse(obs, process, 0.0, window=1e-5, dt=-1e-7)


def test_brute_force_monotone_in_window(process, nli):
    obs = observation_spectrum(nli, process)
    dt = 0.01 / process.lam
    windows = np.array([1.0, 2.0, 5.0, 10.0, 20.0]) / process.lam
    values = [brute_force_mmse(obs, process, 0.0, w, dt) for w in windows]
    assert np.all(np.diff(values) <= 1e-15)


@pytest.mark.parametrize("instrument", ["nli", "mzi"])
def test_brute_force_matches_tracking(process, nli, mzi, instrument):
    cfg = nli if instrument == "nli" else mzi
    obs = observation_spectrum(cfg, process)
    value = brute_force_mmse(obs, process, 0.0, window=20.0 / process.lam, dt=0.01 / process.lam)
    assert value == pytest.approx(tracking_mse(cfg, process), rel=5e-3)


@pytest.mark.parametrize("eps", [2e-6, -2e-6])
def test_brute_force_matches_offsets(process, nli, eps):
    obs = observation_spectrum(nli, process)
    value = brute_force_mmse(obs, process, eps, window=20.0 / process.lam, dt=0.01 / process.lam)
    assert value == pytest.approx(offset_mse(nli, process, eps).xi, rel=0.01)
