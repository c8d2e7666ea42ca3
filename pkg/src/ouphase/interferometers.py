"""Interferometer readout models.

Two instruments measure the phase: a nonlinear (SU(1,1)) interferometer built
from two parametric amplifiers of gain G (with G^2 - g^2 = 1), and a standard
Mach-Zehnder interferometer with 50:50 splitters. Both are operated with
adaptive feedback that keeps the homodyne readout at its most sensitive point,
and both are normalized to the same internal photon flux |beta|^2.

After the feedback displacement is added back, the photocurrent is modeled as

    r(t) = signal_gain * phi(t) + sqrt(noise_power) * n(t),

with n(t) unit-intensity white noise. For the nonlinear instrument
signal_gain = 2 G g |beta| / sqrt(G^2 + g^2) and
noise_power = 2 G^2 g^2 sigma_f^2 + 1, where sigma_f^2 is the stationary
tracking error feeding the residual amplified noise; for the Mach-Zehnder,
signal_gain = |beta| and noise_power = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NLI = "nli"
MZI = "mzi"
KINDS = (NLI, MZI)


@dataclass(frozen=True)
class InterferometerConfig:
    """Instrument kind, parametric gain G^2 (nonlinear only) and photon flux |beta|^2 [1/s]."""

    kind: str
    photon_flux: float
    gain_sq: float | None = None

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not (self.photon_flux > 0 and math.isfinite(self.photon_flux)):
            raise ValueError(f"photon_flux must be positive and finite, got {self.photon_flux}")
        if kind == NLI:
            if self.gain_sq is None:
                raise ValueError("nonlinear interferometer requires gain_sq")
            if not (self.gain_sq > 1.0 and math.isfinite(self.gain_sq)):
                # G^2 = 1 means g = 0: no amplification, no signal, and every
                # downstream expression divides by g^2.
                raise ValueError(f"gain_sq must be > 1 strictly, got {self.gain_sq}")
        else:
            object.__setattr__(self, "gain_sq", None)

    @property
    def is_nli(self) -> bool:
        return self.kind == NLI

    @property
    def g_sq(self) -> float:
        """Idler gain g^2 = G^2 - 1."""
        if not self.is_nli:
            raise ValueError("g_sq is defined only for the nonlinear interferometer")
        return self.gain_sq - 1.0

    @property
    def beta(self) -> float:
        """Field amplitude |beta| = sqrt(photon_flux)."""
        return math.sqrt(self.photon_flux)

    @property
    def alpha_sq(self) -> float:
        """Input coherent amplitude |alpha|^2 = |beta|^2 / (G^2 + g^2) for the NLI."""
        if not self.is_nli:
            raise ValueError("alpha_sq is defined only for the nonlinear interferometer")
        return self.photon_flux / (self.gain_sq + self.g_sq)

    @property
    def alpha(self) -> float:
        return math.sqrt(self.alpha_sq)


@dataclass(frozen=True)
class PhotocurrentModel:
    """Linearized readout r(t) = signal_gain * phi(t) + sqrt(noise_power) * n(t)."""

    signal_gain: float
    noise_power: float
    sigma_f_sq: float

    def __post_init__(self):
        if self.noise_power < 1.0:
            raise ValueError(f"noise_power must be >= 1 (vacuum floor), got {self.noise_power}")
        if self.sigma_f_sq < 0.0:
            raise ValueError("sigma_f_sq must be nonnegative")

    @property
    def signal_power(self) -> float:
        """Squared signal gain, the P entering the observation spectrum [1/s]."""
        return self.signal_gain**2


def _require_nli(config: InterferometerConfig):
    if not config.is_nli:
        raise ValueError("operation requires a nonlinear-interferometer config")


def nli_output_mode_mean(config: InterferometerConfig, phi, phi_feedback):
    """Homodyne mean of the NLI output under balanced adaptive feedback.

    With the feedback phases locked to the running estimate phi_f (internal arm
    at -phi_f - pi, local oscillator at phi_f + pi/2) the readout mean is

        4 G g sin((phi - phi_f) / 2) |alpha|,

    odd in phi - phi_f and exactly zero when the feedback matches the phase.
    The small-angle form 2 G g (phi - phi_f) |alpha| is accurate to
    O(|phi - phi_f|^2 / 24) relative.
    """
    _require_nli(config)
    gg = math.sqrt(config.gain_sq * config.g_sq)
    delta = np.asarray(phi, dtype=float) - np.asarray(phi_feedback, dtype=float)
    return 4.0 * gg * np.sin(delta / 2.0) * config.alpha


def nli_output_mode_variance(config: InterferometerConfig, phi, phi_feedback):
    """Homodyne variance of the NLI output under balanced adaptive feedback.

    Equal to 4 G^2 g^2 (1 + cos(Phi + phi)) + 1 with the internal arm held at
    Phi = -phi_f - pi, i.e. 8 G^2 g^2 sin^2((phi - phi_f)/2) + 1: the amplified
    noise cancels down to the vacuum floor exactly at phi = phi_f.
    """
    _require_nli(config)
    delta = np.asarray(phi, dtype=float) - np.asarray(phi_feedback, dtype=float)
    return 8.0 * config.gain_sq * config.g_sq * np.sin(delta / 2.0) ** 2 + 1.0


def mzi_output_mode_mean(config: InterferometerConfig, phi, phi_feedback):
    """Homodyne mean 2 |beta| sin((phi - phi_f)/2) of the Mach-Zehnder output."""
    if config.is_nli:
        raise ValueError("operation requires a Mach-Zehnder config")
    delta = np.asarray(phi, dtype=float) - np.asarray(phi_feedback, dtype=float)
    return 2.0 * config.beta * np.sin(delta / 2.0)


def build_photocurrent_model(config: InterferometerConfig, sigma_f_sq: float) -> PhotocurrentModel:
    """Linearized photocurrent coefficients for the given instrument.

    sigma_f_sq is the stationary tracking error entering the nonlinear
    instrument's excess noise 2 G^2 g^2 sigma_f^2; the Mach-Zehnder readout is
    vacuum-limited regardless.
    """
    if sigma_f_sq < 0:
        raise ValueError("sigma_f_sq must be nonnegative")
    if config.is_nli:
        gg_sq = config.gain_sq * config.g_sq
        signal_gain = 2.0 * math.sqrt(gg_sq) * config.beta / math.sqrt(config.gain_sq + config.g_sq)
        noise_power = 2.0 * gg_sq * sigma_f_sq + 1.0
    else:
        signal_gain = config.beta
        noise_power = 1.0
    return PhotocurrentModel(signal_gain=signal_gain, noise_power=noise_power, sigma_f_sq=sigma_f_sq)


def snr_ratio(gain_sq, sigma_f_sq):
    """Photocurrent SNR of the nonlinear instrument relative to the Mach-Zehnder.

    4 G^2 (G^2 - 1) / ((2 G^2 - 1)(2 G^2 (G^2 - 1) sigma_f^2 + 1)) at equal
    photon flux. The signal grows ~G^2 but the tracking-noise term grows ~G^4,
    so for sigma_f^2 > 0 the ratio peaks at a finite gain.
    """
    gain_sq = np.asarray(gain_sq, dtype=float)
    sigma_f_sq = np.asarray(sigma_f_sq, dtype=float)
    if np.any(gain_sq < 1.0):
        raise ValueError("gain_sq must be >= 1")
    if np.any(sigma_f_sq < 0.0):
        raise ValueError("sigma_f_sq must be nonnegative")
    gg = gain_sq * (gain_sq - 1.0)
    return 4.0 * gg / ((2.0 * gain_sq - 1.0) * (2.0 * gg * sigma_f_sq + 1.0))
