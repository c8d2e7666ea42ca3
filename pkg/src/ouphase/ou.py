"""Ornstein-Uhlenbeck phase process: exact statistics and sample-path generation.

The phase obeys the mean-reverting SDE

    d(phi) = -lam * phi * dt + sqrt(kappa) * dW,

with stationary variance kappa / (2 * lam), autocovariance
(kappa / 2 lam) * exp(-lam |tau|) and power spectral density
kappa / (omega^2 + lam^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

# Coarser grids than this distort both the Euler drift and the sample ACF.
MAX_DT_LAMBDA = 0.1

_SCHEMES = ("exact", "euler")


@dataclass(frozen=True)
class ProcessParams:
    """OU phase dynamics: kappa [rad^2/s] noise magnitude, lam [rad/s] mean-reversion rate."""

    kappa: float
    lam: float

    def __post_init__(self):
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be positive and finite, got {self.kappa}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be positive and finite, got {self.lam}")

    def stationary_variance(self) -> float:
        """Equilibrium phase variance kappa / (2 lam) [rad^2]."""
        return self.kappa / (2.0 * self.lam)

    def autocorrelation(self, tau):
        """Stationary autocovariance (kappa / 2 lam) exp(-lam |tau|); even in tau."""
        return self.stationary_variance() * np.exp(-self.lam * np.abs(tau))

    def spectral_density(self, omega):
        """Two-sided PSD kappa / (omega^2 + lam^2) [rad^2 s]."""
        return self.kappa / (np.asarray(omega, dtype=float) ** 2 + self.lam**2)

    @property
    def correlation_time(self) -> float:
        return 1.0 / self.lam


@dataclass(frozen=True)
class PhasePath:
    """A sampled realization of the phase process."""

    dt: float
    samples: np.ndarray
    seed: int
    scheme: str = "exact"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-d array")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt


def step_coefficients(p: ProcessParams, dt: float, scheme: str = "exact") -> tuple[float, float]:
    """One-step AR(1) recursion coefficients (a, s): phi' = a*phi + s*n, n ~ N(0,1).

    "exact" matches the transition density of the SDE at any dt; "euler" is the
    Euler-Maruyama pair (1 - lam dt, sqrt(kappa dt)) kept for cross-checks.
    """
    if scheme == "exact":
        a = math.exp(-p.lam * dt)
        s = math.sqrt(p.stationary_variance() * (1.0 - a * a))
    elif scheme == "euler":
        a = 1.0 - p.lam * dt
        s = math.sqrt(p.kappa * dt)
    else:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {_SCHEMES}")
    return a, s


def sample_path(p: ProcessParams, dt: float, n: int, seed: int, scheme: str = "exact") -> PhasePath:
    """Generate n samples of the stationary phase process.

    The initial sample is drawn from the stationary distribution
    N(0, kappa / 2 lam); the recursion then uses the scheme's AR(1) update.
    Identical (p, dt, n, seed, scheme) give bit-identical paths.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    if dt * p.lam > MAX_DT_LAMBDA:
        raise ValueError(
            f"dt * lam = {dt * p.lam:.3g} exceeds {MAX_DT_LAMBDA}; discretization too coarse"
        )
    a, s = step_coefficients(p, dt, scheme)
    rng = np.random.default_rng(seed)
    phi0 = rng.normal(0.0, math.sqrt(p.stationary_variance()))
    samples = np.empty(n)
    samples[0] = phi0
    if n > 1:
        noise = s * rng.standard_normal(n - 1)
        samples[1:], _ = lfilter([1.0], [1.0, -a], noise, zi=np.array([a * phi0]))
    return PhasePath(dt=dt, samples=samples, seed=seed, scheme=scheme)
