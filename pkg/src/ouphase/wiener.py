"""Optimal causal linear processor for the OU-phase-plus-white-noise readout.

The photocurrent spectrum S_r(w) = P kappa / (w^2 + lam^2) + N factors as
S_r = |H+|^2 with the causal, causally-invertible one-zero/one-pole factor

    H+(w) = sqrt(N) (iw + lam * sqrt(1 + Lam)) / (iw + lam),

Lam = P kappa / (N lam^2). Filtering the record through W = 1/H+ whitens it;
correlating the desired signal phi(t + eps) against the whitened record gives
the two-sided exponential K_dz, whose causal part, divided by H+, is the
optimal processor. With s = sqrt(1 + Lam) and cutoff lc = lam * s:

    tracking (eps = 0): a single-pole low-pass chi / (lc + iw),
                        chi = kappa sqrt(P) / (N (lam + lc));
    prediction (eps > 0): the tracking processor scaled by exp(-lam eps)
                        (the optimal predictor decays the current estimate),
                        anchored to the estimand timeline by exp(iw eps);
    smoothing (eps < 0): a delay-by-|eps| processor whose causal kernel rises
                        over [0, |eps|) and decays at rate lc afterwards.

All kernels here are exact closed forms; realization onto a sample grid uses
bin averages of the continuous kernel so that discrete convolution against
bin-averaged data reproduces the continuous filter without rectangle-rule
bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .interferometers import InterferometerConfig, build_photocurrent_model, PhotocurrentModel
from .mse import PREDICTION, SMOOTHING, TRACKING, tracking_mse
from .ou import ProcessParams

LAMBDA_CONSISTENCY_RTOL = 1e-14


@dataclass(frozen=True)
class ObservationSpectrum:
    """Rational photocurrent PSD: S_r(w) = signal_power * kappa / (w^2 + lam^2) + noise_power."""

    signal_power: float
    noise_power: float
    process: ProcessParams
    lambda_info: float = field(init=False)

    def __post_init__(self):
        if self.signal_power < 0:
            raise ValueError("signal_power must be nonnegative")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        lam_info = self.signal_power * self.process.kappa / (self.noise_power * self.process.lam**2)
        object.__setattr__(self, "lambda_info", lam_info)

    def psd(self, omega):
        omega = np.asarray(omega, dtype=float)
        return self.signal_power * self.process.kappa / (omega**2 + self.process.lam**2) + self.noise_power

    @property
    def cutoff(self) -> float:
        """Corner frequency lam * sqrt(1 + Lam) of the optimal processor [rad/s]."""
        return self.process.lam * math.sqrt(1.0 + self.lambda_info)


def observation_spectrum(
    config: InterferometerConfig,
    p: ProcessParams,
    sigma_f_sq: float | None = None,
) -> ObservationSpectrum:
    """Observation spectrum of an instrument; the nonlinear readout's noise level
    defaults to the self-consistent stationary tracking error."""
    if sigma_f_sq is None:
        sigma_f_sq = tracking_mse(config, p)
    model = build_photocurrent_model(config, sigma_f_sq)
    return from_photocurrent_model(model, p)


def from_photocurrent_model(model: PhotocurrentModel, p: ProcessParams) -> ObservationSpectrum:
    return ObservationSpectrum(
        signal_power=model.signal_power, noise_power=model.noise_power, process=p
    )


@dataclass(frozen=True)
class SpectralFactor:
    """Causal factor H+(w) = sqrt(N) (iw + zero) / (iw + pole) with stable inverse."""

    noise_power: float
    pole: float
    zero: float

    def __post_init__(self):
        if self.pole <= 0 or self.zero <= 0:
            raise ValueError("pole and zero must lie in the stable half-plane (positive)")

    def transfer(self, omega):
        jw = 1j * np.asarray(omega, dtype=float)
        return math.sqrt(self.noise_power) * (jw + self.zero) / (jw + self.pole)

    def whitening_transfer(self, omega):
        """W(w) = 1 / H+(w); |W|^2 S_r = 1."""
        return 1.0 / self.transfer(omega)

    def magnitude_sq(self, omega):
        omega = np.asarray(omega, dtype=float)
        return self.noise_power * (omega**2 + self.zero**2) / (omega**2 + self.pole**2)


def factorize(obs: ObservationSpectrum) -> SpectralFactor:
    """Spectral factorization of the observation PSD; always factorable here."""
    return SpectralFactor(
        noise_power=obs.noise_power, pole=obs.process.lam, zero=obs.cutoff
    )


def frequency_grid(obs: ObservationSpectrum, n: int = 2048) -> np.ndarray:
    """Log-spaced check grid covering both corner frequencies."""
    lam = obs.process.lam
    return np.geomspace(lam / 100.0, 100.0 * obs.cutoff, n)


def _front_gain(obs: ObservationSpectrum) -> float:
    """chi = kappa sqrt(P) / (N (lam + lc)), the input gain of the tracking filter."""
    p = obs.process
    return p.kappa * math.sqrt(obs.signal_power) / (obs.noise_power * (p.lam + obs.cutoff))


def cross_correlation_kdz(obs: ObservationSpectrum, epsilon: float, tau):
    """Cross-correlation of the desired signal phi(t + epsilon) with the whitened record.

    (sqrt(P) kappa) / (sqrt(N) lam (1 + s)) * exp(-lam (tau + eps))      for tau + eps >= 0
                                            * exp( lc  (tau + eps))      for tau + eps <  0

    Continuous at tau + eps = 0; its squared causal integral is the
    information term of every closed-form error.
    """
    p = obs.process
    s = math.sqrt(1.0 + obs.lambda_info)
    amp = math.sqrt(obs.signal_power) * p.kappa / (
        math.sqrt(obs.noise_power) * p.lam * (1.0 + s)
    )
    shifted = np.asarray(tau, dtype=float) + epsilon
    exponent = np.where(shifted >= 0.0, -p.lam * shifted, obs.cutoff * shifted)
    return amp * np.exp(exponent)


@dataclass(frozen=True)
class WienerSolution:
    """Optimal processor for one estimation offset.

    The transfer function carries the exp(iw eps) factor anchoring the output
    to the estimand's timeline: for smoothing this is a physical delay of
    |eps| (the kernel below is its causal realization); for prediction the
    realizable kernel on the data timeline is the tracking kernel scaled by
    exp(-lam eps), which is also what the closed-form errors integrate to.
    """

    obs: ObservationSpectrum
    epsilon: float
    mode: str
    cutoff: float
    front_gain: float

    def transfer(self, omega):
        omega = np.asarray(omega, dtype=float)
        jw = 1j * omega
        p = self.obs.process
        if self.mode == TRACKING:
            return self.front_gain / (self.cutoff + jw)
        if self.mode == PREDICTION:
            anchor = np.exp(1j * omega * self.epsilon)
            return self.front_gain * math.exp(-p.lam * self.epsilon) * anchor / (self.cutoff + jw)
        s = math.sqrt(1.0 + self.obs.lambda_info)
        anchor = np.exp(1j * omega * self.epsilon)
        lead = (
            p.kappa
            * math.sqrt(self.obs.signal_power)
            * anchor
            / (self.obs.noise_power * (self.cutoff**2 + omega**2))
        )
        correction = 1.0 - np.exp(self.epsilon * (self.cutoff - jw)) * (p.lam + jw) / (
            p.lam * (1.0 + s)
        )
        return lead * correction

    def kdz(self, tau):
        return cross_correlation_kdz(self.obs, self.epsilon, tau)

    def dc_gain(self) -> float:
        return float(np.real(self.transfer(0.0)))

    def impulse_response(self, t):
        """Causal kernel h(t) on the data timeline; zero for t < 0."""
        t = np.asarray(t, dtype=float)
        p = self.obs.process
        lc = self.cutoff
        if self.mode == TRACKING:
            return np.where(t >= 0.0, self.front_gain * np.exp(-lc * t), 0.0)
        if self.mode == PREDICTION:
            scale = self.front_gain * math.exp(-p.lam * self.epsilon)
            return np.where(t >= 0.0, scale * np.exp(-lc * t), 0.0)
        amp = p.kappa * math.sqrt(self.obs.signal_power) / (2.0 * self.obs.noise_power * lc)
        r0 = (lc - p.lam) / (lc + p.lam)
        e_lag = math.exp(self.epsilon * lc)
        tc = np.clip(t, 0.0, -self.epsilon)  # keep the growing branch bounded
        rising = amp * e_lag * (np.exp(lc * tc) + r0 * np.exp(-lc * tc))
        tail = amp * (np.exp(-lc * (t + self.epsilon)) + e_lag * r0 * np.exp(-lc * t))
        return np.where(t < 0.0, 0.0, np.where(t < -self.epsilon, rising, tail))

    def cumulative_response(self, t):
        """Integral of the kernel from 0 to t, in closed form."""
        t = np.asarray(t, dtype=float)
        p = self.obs.process
        lc = self.cutoff
        if self.mode in (TRACKING, PREDICTION):
            scale = self.front_gain
            if self.mode == PREDICTION:
                scale *= math.exp(-p.lam * self.epsilon)
            return np.where(t >= 0.0, scale / lc * (1.0 - np.exp(-lc * np.maximum(t, 0.0))), 0.0)
        amp = p.kappa * math.sqrt(self.obs.signal_power) / (2.0 * self.obs.noise_power * lc)
        r0 = (lc - p.lam) / (lc + p.lam)
        e_lag = math.exp(self.epsilon * lc)
        lag = -self.epsilon
        tc = np.clip(t, 0.0, lag)
        rising = amp * e_lag / lc * ((np.exp(lc * tc) - 1.0) + r0 * (1.0 - np.exp(-lc * tc)))
        td = np.maximum(t, lag)
        tail = (
            amp
            / lc
            * (
                (1.0 - np.exp(-lc * (td + self.epsilon)))
                + e_lag * r0 * (np.exp(-lc * lag) - np.exp(-lc * td))
            )
        )
        return np.where(t <= lag, rising, rising + tail)

    def total_response(self) -> float:
        """Integral of the kernel over [0, inf); equals |transfer(0)|."""
        p = self.obs.process
        lc = self.cutoff
        if self.mode == TRACKING:
            return self.front_gain / lc
        if self.mode == PREDICTION:
            return self.front_gain * math.exp(-p.lam * self.epsilon) / lc
        s = math.sqrt(1.0 + self.obs.lambda_info)
        return (
            p.kappa
            * math.sqrt(self.obs.signal_power)
            / (self.obs.noise_power * lc**2)
            * (1.0 - math.exp(self.epsilon * lc) / (1.0 + s))
        )


def synthesize(obs: ObservationSpectrum, epsilon: float) -> WienerSolution:
    """Solve for the optimal processor at the given estimation offset."""
    if epsilon > 0.0:
        mode = PREDICTION
    elif epsilon < 0.0:
        mode = SMOOTHING
    else:
        mode = TRACKING
    return WienerSolution(
        obs=obs,
        epsilon=epsilon,
        mode=mode,
        cutoff=obs.cutoff,
        front_gain=_front_gain(obs),
    )


def realize_impulse_response(
    sol: WienerSolution,
    dt: float,
    horizon: float | None = None,
    tail_tol: float = 1e-9,
) -> np.ndarray:
    """Sample the kernel onto a grid of spacing dt as bin averages.

    h[k] = (1/dt) * integral of the kernel over [k dt, (k+1) dt), so that
    dt * sum(h) equals the DC gain up to the truncated tail. The default
    horizon covers forty e-folds of both decay rates plus the smoothing lag;
    an explicit horizon that leaves more than tail_tol of the kernel's
    integral outside the grid is rejected.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    p = sol.obs.process
    default_horizon = max(40.0 / p.lam, 40.0 / sol.cutoff) + max(0.0, -sol.epsilon)
    if horizon is None:
        horizon = default_horizon
    n = max(1, int(math.ceil(horizon / dt)))
    total = sol.total_response()
    covered = float(sol.cumulative_response(n * dt))
    tail = 1.0 - covered / total
    if tail > tail_tol:
        raise ValueError(
            f"horizon {horizon:g} s leaves tail mass {tail:.3g} > {tail_tol:g}; "
            f"need at least ~{default_horizon:g} s"
        )
    edges = np.arange(n + 1) * dt
    cum = sol.cumulative_response(edges)
    return np.diff(cum) / dt


def discrete_autocovariance(
    obs: ObservationSpectrum, dt: float, measurement: str = "binavg"
) -> tuple[float, float, float]:
    """(gamma0, gamma1, c) of the sampled photocurrent.

    The sampled record is ARMA(1,1): its autocovariance is geometric with
    ratio c = exp(-lam dt) beyond lag one. "point" is the instantaneous-sample
    model; "binavg" is the integrating-detector model where each sample
    carries the trapezoid average of the phase over its bin (the convention
    the time-domain simulator uses).
    """
    p = obs.process
    c = math.exp(-p.lam * dt)
    v = p.stationary_variance()
    pw = obs.signal_power
    noise_var = obs.noise_power / dt
    if measurement == "point":
        gamma0 = pw * v + noise_var
        gamma1 = pw * v * c
    elif measurement == "binavg":
        gamma0 = pw * v * (1.0 + c) / 2.0 + noise_var
        gamma1 = pw * v * (1.0 + c) ** 2 / 4.0
    else:
        raise ValueError("measurement must be 'point' or 'binavg'")
    return gamma0, gamma1, c


def arma_whitening_coefficients(gamma0: float, gamma1: float, c: float) -> tuple[float, float]:
    """Exact one-step whitener of an ARMA(1,1) record.

    For a record with autocovariance gamma0, gamma1, gamma_k = gamma1 * c^(k-1)
    (k >= 1), the differenced series u_i = r_i - c r_{i-1} is MA(1); matching
    its covariances gives the representation u_i = sigma (w_i - b w_{i-1}) with
    iid unit-variance w. Returns (b, sigma); |b| < 1.
    """
    g0u = (1.0 + c * c) * gamma0 - 2.0 * c * gamma1
    m = c * gamma0 - gamma1  # = -gamma_u[1]
    if m <= 0:
        # No measurement noise: record already AR(1), plain differencing whitens.
        return 0.0, math.sqrt(g0u)
    a = g0u / m
    b = (a - math.sqrt(a * a - 4.0)) / 2.0
    sigma = math.sqrt(m / b)
    return b, sigma


def whiten_stream(
    r: np.ndarray,
    obs: ObservationSpectrum,
    dt: float,
    measurement: str = "binavg",
    zi: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Filter a sampled record into a unit-variance white stream.

    Applies (1 - c z^-1) / (sigma (1 - b z^-1)) with the exact discrete ARMA
    coefficients. Returns (whitened, filter_state) so long records can be
    processed in chunks.
    """
    gamma0, gamma1, c = discrete_autocovariance(obs, dt, measurement)
    b, sigma = arma_whitening_coefficients(gamma0, gamma1, c)
    num = np.array([1.0 / sigma, -c / sigma])
    den = np.array([1.0, -b])
    if zi is None:
        zi = np.zeros(1)
    return lfilter(num, den, np.asarray(r, dtype=float), zi=zi)
