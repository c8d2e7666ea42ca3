import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad, solve_ivp
from scipy.signal import csd, welch

from ouphase import (
    ObservationSpectrum,
    ProcessParams,
    cross_correlation_kdz,
    factorize,
    frequency_grid,
    observation_spectrum,
    realize_impulse_response,
    synthesize,
    tracking_mse_nli,
    whiten_stream,
)
from ouphase.ou import step_coefficients
from ouphase.wiener import arma_whitening_coefficients, discrete_autocovariance


@pytest.fixture
def obs(process, nli):
    return observation_spectrum(nli, process)


def test_lambda_consistency(obs, process, nli):
    # Lam must agree with P kappa / (N lam^2) to float precision.
    expected = obs.signal_power * process.kappa / (obs.noise_power * process.lam**2)
    assert abs(obs.lambda_info - expected) <= 1e-14 * expected
    # And with the arithmetic from the instrument coefficients.
    sigma = tracking_mse_nli(nli, process)
    p_arith = 4.0 * 47.36 * (1e7 / 13.8)
    n_arith = 2.0 * 47.36 * sigma + 1.0
    assert obs.signal_power == pytest.approx(p_arith, rel=1e-12)
    assert obs.noise_power == pytest.approx(n_arith, rel=1e-12)
    assert obs.cutoff == pytest.approx(process.lam * math.sqrt(1.0 + obs.lambda_info), rel=1e-14)


def test_factorization_identity_on_grid(obs):
    factor = factorize(obs)
    omegas = np.concatenate([np.linspace(0.0, 100 * obs.process.lam, 4001), frequency_grid(obs)])
    residual = np.abs(np.abs(factor.transfer(omegas)) ** 2 - obs.psd(omegas)) / obs.psd(omegas)
    assert residual.max() <= 1e-10


def test_whitening_transfer_identity(obs):
    factor = factorize(obs)
    omegas = frequency_grid(obs)
    product = np.abs(factor.whitening_transfer(omegas)) ** 2 * obs.psd(omegas)
    np.testing.assert_allclose(product, 1.0, rtol=1e-10)


def test_factorize_no_signal(process):
    flat = ObservationSpectrum(signal_power=0.0, noise_power=2.5, process=process)
    factor = factorize(flat)
    omegas = np.geomspace(1.0, 1e7, 100)
    np.testing.assert_allclose(factor.transfer(omegas), math.sqrt(2.5), rtol=1e-14)


@settings(max_examples=40)
@given(
    signal_power=st.floats(1e-3, 1e12),
    noise_power=st.floats(1.0, 1e3),
    kappa=st.floats(1e-2, 1e6),
    lam=st.floats(1e2, 1e7),
)
def test_factorization_identity_property(signal_power, noise_power, kappa, lam):
    obs = ObservationSpectrum(
        signal_power=signal_power,
        noise_power=noise_power,
        process=ProcessParams(kappa=kappa, lam=lam),
    )
    factor = factorize(obs)
    omegas = frequency_grid(obs, n=256)
    residual = np.abs(np.abs(factor.transfer(omegas)) ** 2 - obs.psd(omegas)) / obs.psd(omegas)
    assert residual.max() <= 1e-10


def test_kdz_branch_continuity(obs):
    for eps in (-3e-6, 0.0, 3e-6):
        below = cross_correlation_kdz(obs, eps, -eps - 1e-16)
        above = cross_correlation_kdz(obs, eps, -eps + 1e-16)
        amp = math.sqrt(obs.signal_power) * obs.process.kappa / (
            math.sqrt(obs.noise_power) * obs.process.lam * (1.0 + math.sqrt(1.0 + obs.lambda_info))
        )
        assert below == pytest.approx(amp, rel=1e-9)
        assert above == pytest.approx(amp, rel=1e-9)


def test_kdz_decay(obs):
    lam = obs.process.lam
    assert cross_correlation_kdz(obs, 0.0, 200.0 / lam) < 1e-80
    ratio = cross_correlation_kdz(obs, 0.0, 1.0 / lam) / cross_correlation_kdz(obs, 0.0, 0.0)
    assert ratio == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_tracking_low_pass_shape(obs):
    sol = synthesize(obs, 0.0)
    omegas = np.linspace(0.0, 20 * sol.cutoff, 2000)
    mag = np.abs(sol.transfer(omegas))
    assert np.argmax(mag) == 0
    half_power = np.abs(sol.transfer(sol.cutoff)) ** 2
    assert half_power == pytest.approx(0.5 * mag[0] ** 2, rel=1e-12)


def test_prediction_equals_scaled_tracking(obs):
    eps = 4e-6
    lam = obs.process.lam
    track = synthesize(obs, 0.0)
    pred = synthesize(obs, eps)
    omegas = frequency_grid(obs, n=512)
    expected = track.transfer(omegas) * np.exp(1j * omegas * eps) * math.exp(-lam * eps)
    np.testing.assert_allclose(pred.transfer(omegas), expected, rtol=1e-12)
    assert pred.mode == "prediction"


def test_smoothing_transfer_continuity_at_zero(obs):
    track = synthesize(obs, 0.0)
    smooth = synthesize(obs, -1e-18)
    omegas = frequency_grid(obs, n=512)
    np.testing.assert_allclose(smooth.transfer(omegas), track.transfer(omegas), rtol=1e-9)


def test_tracking_ode_step_response(obs):
    # The tracking processor as the ODE y' = -lc y + chi u, driven by a unit step,
    # must match the analytic inverse transform (chi/lc)(1 - exp(-lc t)).
    sol = synthesize(obs, 0.0)
    lc, chi = sol.cutoff, sol.front_gain
    t_end = 10.0 / lc
    ode = solve_ivp(
        lambda t, y: -lc * y + chi,
        (0.0, t_end),
        [0.0],
        rtol=1e-11,
        atol=1e-16,
        dense_output=True,
    )
    times = np.linspace(0.0, t_end, 200)
    analytic = chi / lc * (1.0 - np.exp(-lc * times))
    np.testing.assert_allclose(ode.sol(times)[0], analytic, rtol=1e-8, atol=1e-8 * chi / lc)
    np.testing.assert_allclose(sol.cumulative_response(times), analytic, rtol=1e-12)


def test_kernel_causality(obs):
    for eps in (-4e-6, 0.0, 4e-6):
        sol = synthesize(obs, eps)
        t_neg = np.linspace(-1e-5, -1e-9, 57)
        assert np.all(sol.impulse_response(t_neg) == 0.0)
        assert np.all(sol.cumulative_response(t_neg) == 0.0)


@pytest.mark.parametrize("eps", [0.0, 3e-6, -3e-6])
def test_realized_kernel_dc_gain(obs, eps):
    sol = synthesize(obs, eps)
    dt = 2e-8
    kernel = realize_impulse_response(sol, dt)
    assert kernel.sum() * dt == pytest.approx(abs(sol.transfer(0.0)), rel=1e-6)
    assert kernel.sum() * dt == pytest.approx(sol.total_response(), rel=1e-9)


def test_tracking_kernel_monotone(obs):
    kernel = realize_impulse_response(synthesize(obs, 0.0), 1e-8)
    assert np.all(kernel >= 0.0)
    # Decreasing, up to float rounding in the deeply underflowed tail.
    assert np.all(np.diff(kernel) <= 1e-9 * kernel.max())


def test_realize_horizon_guard(obs):
    sol = synthesize(obs, 0.0)
    with pytest.raises(ValueError):
        realize_impulse_response(sol, 1e-8, horizon=1.0 / sol.cutoff)
    with pytest.raises(ValueError):
        realize_impulse_response(sol, -1e-8)


def test_smoothing_kernel_matches_transfer(obs):
    # Closed-form kernel pieces against a numerical inverse of the transfer
    # function via the cumulative integral identity at the lag boundary.
    eps = -5e-6
    sol = synthesize(obs, eps)
    lag = -eps
    left = sol.impulse_response(lag * (1 - 1e-12))
    right = sol.impulse_response(lag * (1 + 1e-12))
    assert left == pytest.approx(right, rel=1e-6)  # continuous across the kink
    # Rising section grows, tail decays.
    rising = sol.impulse_response(np.linspace(0, lag * 0.999, 50))
    tail = sol.impulse_response(np.linspace(lag * 1.001, 8 * lag, 50))
    assert np.all(np.diff(rising) > 0)
    assert np.all(np.diff(tail) < 0)


def test_smoothing_realization_frequency_response(obs):
    # Empirical transfer-function oracle: drive the realized kernel with white
    # noise and estimate H = S_xy / S_xx; |H| must match |H_os| within 1% up
    # to ten cutoffs.
    eps = -2e-6
    sol = synthesize(obs, eps)
    dt = 0.02 / sol.cutoff
    kernel = realize_impulse_response(sol, dt)
    rng = np.random.default_rng(123)
    x = rng.standard_normal(1 << 21)
    y = np.convolve(x, kernel, mode="full")[: x.size] * dt
    skip = kernel.size  # drop the fill-in transient
    nper = 1 << 15  # segments must be longer than the kernel
    f, sxy = csd(x[skip:], y[skip:], fs=1.0 / dt, nperseg=nper)
    _, sxx = welch(x[skip:], fs=1.0 / dt, nperseg=nper)
    h_est = np.abs(sxy / sxx)
    omegas = 2 * np.pi * f
    keep = (omegas > 0) & (omegas <= 10 * sol.cutoff)
    h_true = np.abs(sol.transfer(omegas[keep]))
    # 1% pointwise, with an absolute floor of 0.1% of the in-band peak for the
    # deep interference notches where a relative figure is unresolvable.
    np.testing.assert_allclose(h_est[keep], h_true, rtol=0.01, atol=1e-3 * h_true.max())


@pytest.mark.parametrize("eps", [0.0, -4e-6])
def test_wiener_hopf_residual(obs, eps):
    # Substituting the solution back into the causal normal equation:
    # K_dr(tau) = integral_0^inf h(v) K_r(tau - v) dv for tau >= 0, where the
    # white part of K_r contributes N h(tau).
    p = obs.process
    sol = synthesize(obs, eps)
    sqrt_p = math.sqrt(obs.signal_power)

    def lhs(tau):
        colored, _ = quad(
            lambda v: float(sol.impulse_response(v)) * obs.signal_power * float(p.autocorrelation(tau - v)),
            0.0,
            80.0 / p.lam,
            epsrel=1e-11,
            limit=400,
            points=[tau, -eps, max(0.0, tau - eps)],
        )
        return colored + obs.noise_power * float(sol.impulse_response(tau))

    for tau in (0.0, 1e-7, 5e-7, 2e-6, 6e-6, 2e-5):
        target = sqrt_p * float(p.autocorrelation(tau + eps))
        assert lhs(tau) == pytest.approx(target, rel=1e-8)


def test_whitened_record_is_white(process, nli):
    # Generate the sampled record the simulator produces, whiten it, and check
    # the sample ACF of the output against the iid band.
    from ouphase.simulate import whiteness_diagnostic

    obs = observation_spectrum(nli, process)
    dt = 1e-7
    n = 1 << 20
    rng = np.random.default_rng(2024)
    a, s = step_coefficients(process, dt)
    from scipy.signal import lfilter

    noise = s * rng.standard_normal(n + 1)
    phi = lfilter([1.0], [1.0, -a], noise)
    phi += rng.normal(0.0, math.sqrt(process.stationary_variance())) * a ** np.arange(n + 1)
    phibar = 0.5 * (phi[:-1] + phi[1:])
    r = math.sqrt(obs.signal_power) * phibar + math.sqrt(obs.noise_power / dt) * rng.standard_normal(n)
    white, _ = whiten_stream(r, obs, dt, "binavg")
    report = whiteness_diagnostic(white[1000:])
    assert report.passed, report
    assert np.var(white[1000:]) == pytest.approx(1.0, rel=0.01)
    # The raw record is strongly colored and must fail the same test.
    raw = whiteness_diagnostic((r - r.mean()) / r.std())
    assert not raw.passed


def test_point_sample_whitener(process, nli):
    # The instantaneous-sample variant whitens a point-sampled record.
    from ouphase.simulate import whiteness_diagnostic

    obs = observation_spectrum(nli, process)
    dt = 1e-7
    n = 1 << 20
    rng = np.random.default_rng(77)
    a, s = step_coefficients(process, dt)
    from scipy.signal import lfilter

    phi = lfilter([1.0], [1.0, -a], s * rng.standard_normal(n))
    r = math.sqrt(obs.signal_power) * phi + math.sqrt(obs.noise_power / dt) * rng.standard_normal(n)
    white, _ = whiten_stream(r, obs, dt, "point")
    assert whiteness_diagnostic(white[1000:]).passed


def test_arma_whitener_coefficients_consistency(process, nli):
    obs = observation_spectrum(nli, process)
    gamma0, gamma1, c = discrete_autocovariance(obs, 1e-7, "binavg")
    b, sigma = arma_whitening_coefficients(gamma0, gamma1, c)
    assert 0.0 <= b < 1.0
    # The MA(1) side must reproduce the differenced-series covariances.
    g0u = (1.0 + c * c) * gamma0 - 2.0 * c * gamma1
    g1u = gamma1 - c * gamma0
    assert sigma**2 * (1.0 + b * b) == pytest.approx(g0u, rel=1e-12)
    assert -(sigma**2) * b == pytest.approx(g1u, rel=1e-12)
