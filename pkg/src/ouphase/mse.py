"""Closed-form estimation errors for the optimal causal linear processor.

All errors derive from the generic identity

    xi = K_d(0) - integral_0^inf K_dz(tau)^2 dtau,

with K_d(0) = kappa / (2 lam) the prior phase variance and K_dz the
cross-correlation between the desired signal phi(t + eps) and the whitened
photocurrent. Evaluating the integral for the one-pole observation spectrum
gives, with s = sqrt(1 + Lam):

    tracking  (eps = 0):  (kappa/2lam) * [1 - Lam / (1 + s)^2]  ==  (kappa/2lam) * 2/(1+s)
    prediction (eps > 0): (kappa/2lam) * [1 - Lam / (1 + s)^2 * exp(-2 lam eps)]
    smoothing (eps < 0):  (kappa/2lam) * [1/s + Lam exp(2 lam s eps) / ((1 + s)^2 s)]

Lam = P kappa / (N lam^2) is the dimensionless information parameter of the
readout. For the nonlinear interferometer N depends on the tracking error
itself, which makes the tracking equation implicit; its explicit solution is
a quadratic root, and the damped fixed-point iteration is kept as an
independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .interferometers import InterferometerConfig, build_photocurrent_model
from .ou import ProcessParams

TRACKING = "tracking"
PREDICTION = "prediction"
SMOOTHING = "smoothing"


@dataclass(frozen=True)
class MseBreakdown:
    """Total error xi split into prior variance minus extracted information."""

    xi: float
    prior_variance: float
    information_integral: float
    mode: str
    epsilon: float

    def __post_init__(self):
        if not (0.0 < self.xi <= self.prior_variance * (1.0 + 1e-12)):
            raise ValueError(
                f"xi = {self.xi} outside (0, prior_variance = {self.prior_variance}]"
            )


def tracking_mse_nli(config: InterferometerConfig, p: ProcessParams) -> float:
    """Stationary tracking error sigma_f^2 of the nonlinear interferometer.

    Explicit root of the self-consistent tracking equation:

        sigma_f^2 = [-(lam - G^2 g^2 kappa)
                     + sqrt((lam - G^2 g^2 kappa)^2 + 4 G^2 g^2 (|alpha|^2 + lam) kappa)]
                    / (4 G^2 g^2 (|alpha|^2 + lam))

    with |alpha|^2 = |beta|^2 / (G^2 + g^2).
    """
    if not config.is_nli:
        raise ValueError("tracking_mse_nli requires a nonlinear-interferometer config")
    gg = config.gain_sq * config.g_sq
    a = p.lam - gg * p.kappa
    denom = 4.0 * gg * (config.alpha_sq + p.lam)
    root = math.sqrt(a * a + denom * p.kappa)
    if a > 0.0:
        # Cancellation-free form of (-a + root) / denom for small kappa.
        return p.kappa / (a + root)
    return (-a + root) / denom


def tracking_mse_mzi(config: InterferometerConfig, p: ProcessParams) -> float:
    """Stationary tracking error of the Mach-Zehnder interferometer.

    (kappa / 2 lam) * [1 - Lam1 / (1 + sqrt(1 + Lam1))^2] with
    Lam1 = |beta|^2 kappa / lam^2; explicit because the readout noise is
    vacuum-limited (N = 1) and does not feed back on the error.
    """
    if config.is_nli:
        raise ValueError("tracking_mse_mzi requires a Mach-Zehnder config")
    lam1 = config.photon_flux * p.kappa / p.lam**2
    return p.stationary_variance() * (1.0 - lam1 / (1.0 + math.sqrt(1.0 + lam1)) ** 2)


def tracking_mse(config: InterferometerConfig, p: ProcessParams) -> float:
    """Stationary tracking error for either instrument."""
    return tracking_mse_nli(config, p) if config.is_nli else tracking_mse_mzi(config, p)


def lambda_info(config: InterferometerConfig, p: ProcessParams, sigma_f_sq: float | None = None) -> float:
    """Information parameter Lam = P kappa / (N lam^2) of the readout.

    For the nonlinear instrument the noise level N uses sigma_f_sq (defaulting
    to the self-consistent tracking error); for the Mach-Zehnder this reduces
    to Lam1 = |beta|^2 kappa / lam^2.
    """
    if sigma_f_sq is None:
        sigma_f_sq = tracking_mse(config, p)
    model = build_photocurrent_model(config, sigma_f_sq)
    return model.signal_power * p.kappa / (model.noise_power * p.lam**2)


def fixed_point_tracking_mse(
    config: InterferometerConfig,
    p: ProcessParams,
    damping: float = 0.5,
    tol: float = 1e-12,
    max_iter: int = 10_000,
) -> float:
    """Solve sigma_f^2 = (kappa/2lam) [1 - Lam(sigma_f^2)/(1+sqrt(1+Lam(sigma_f^2)))^2]
    by damped iteration. Redundant with the explicit formulas; kept as an
    algebra cross-check.
    """
    prior = p.stationary_variance()

    def rhs(x: float) -> float:
        lam_x = lambda_info(config, p, sigma_f_sq=x)
        return prior * (1.0 - lam_x / (1.0 + math.sqrt(1.0 + lam_x)) ** 2)

    x = prior
    for _ in range(max_iter):
        x_new = (1.0 - damping) * x + damping * rhs(x)
        if abs(x_new - x) <= tol * max(abs(x_new), 1e-300):
            return x_new
        x = x_new
    raise RuntimeError(f"fixed-point iteration did not converge within {max_iter} iterations")


def _branch_mse(prior: float, lam_info_val: float, lam: float, epsilon: float) -> tuple[float, str]:
    s = math.sqrt(1.0 + lam_info_val)
    if epsilon > 0.0:
        xi = prior * (1.0 - lam_info_val / (1.0 + s) ** 2 * math.exp(-2.0 * lam * epsilon))
        return xi, PREDICTION
    if epsilon < 0.0:
        xi = prior * (
            1.0 / s
            + lam_info_val * math.exp(2.0 * lam * s * epsilon) / ((1.0 + s) ** 2 * s)
        )
        return xi, SMOOTHING
    # Both branch limits coincide with the tracking value 2 prior / (1 + s).
    return prior * 2.0 / (1.0 + s), TRACKING


def offset_mse(config: InterferometerConfig, p: ProcessParams, epsilon: float) -> MseBreakdown:
    """Error of estimating phi(t + epsilon) from the photocurrent up to t.

    epsilon > 0 is prediction, epsilon = 0 tracking, epsilon < 0 smoothing
    (the estimate is issued with a lag |epsilon|). For the nonlinear
    instrument the readout noise level inside Lam uses the stationary
    tracking error, since the feedback loop is driven by the causal estimate
    whatever epsilon is post-processed afterwards.
    """
    lam_info_val = lambda_info(config, p)
    prior = p.stationary_variance()
    xi, mode = _branch_mse(prior, lam_info_val, p.lam, epsilon)
    return MseBreakdown(
        xi=xi,
        prior_variance=prior,
        information_integral=prior - xi,
        mode=mode,
        epsilon=epsilon,
    )


def smoothing_floor(config: InterferometerConfig, p: ProcessParams) -> float:
    """Best achievable smoothing error (kappa / 2 lam) / sqrt(1 + Lam), the
    epsilon -> -inf limit where all future data has been folded in."""
    return p.stationary_variance() / math.sqrt(1.0 + lambda_info(config, p))
