"""Parametric-gain optimization and the large-flux scaling laws.

At fixed photon flux the tracking error, the smoothing floor and the
photocurrent SNR are all monotone transforms of the information parameter
Lam(G^2), so the three objectives share one interior optimum; they are kept
as separate objectives anyway and reported side by side. At large flux the
optimal gain grows as (|beta|^2 kappa^2)^(1/3) / (2^(2/3) kappa), the tracking
error approaches 2^(1/3) (kappa/|beta|^2)^(2/3) and the smoothing floor
approaches (kappa / (2 |beta|^2))^(2/3), which beats both the coherent-state
baseline (1/2) sqrt(kappa/|beta|^2) and the canonical-measurement bound
(4/5) (kappa/|beta|^2)^(2/3).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .interferometers import NLI, InterferometerConfig
from .mse import smoothing_floor, tracking_mse_nli
from .ou import ProcessParams

GAIN_SQ_CEILING = 1e4
OBJECTIVES = ("tracking", "smoothing_floor", "snr")


@dataclass(frozen=True)
class ReferenceBounds:
    """Large-flux reference error levels [rad^2]."""

    classical: float
    canonical: float
    heisenberg: float


def reference_bounds(p: ProcessParams, photon_flux: float) -> ReferenceBounds:
    """Coherent-state baseline, canonical-measurement bound, and the
    fundamental smoothing scaling, all at the given flux."""
    ratio = p.kappa / photon_flux
    return ReferenceBounds(
        classical=0.5 * math.sqrt(ratio),
        canonical=0.8 * ratio ** (2.0 / 3.0),
        heisenberg=(ratio / 2.0) ** (2.0 / 3.0),
    )


@dataclass(frozen=True)
class ScalingPoint:
    """One flux point of the gain-optimized scaling sweep."""

    photon_flux: float
    optimal_gain_sq: float
    tracking_mse: float
    smoothing_mse: float
    references: ReferenceBounds

    def __post_init__(self):
        if self.optimal_gain_sq <= 1.0:
            raise ValueError("optimal_gain_sq must exceed 1")
        if not (0.0 < self.smoothing_mse and 0.0 < self.tracking_mse):
            raise ValueError("errors must be positive")


def _objective(p: ProcessParams, photon_flux: float, objective: str):
    def tracking(gain_sq: float) -> float:
        cfg = InterferometerConfig(kind=NLI, photon_flux=photon_flux, gain_sq=gain_sq)
        return tracking_mse_nli(cfg, p)

    def floor(gain_sq: float) -> float:
        cfg = InterferometerConfig(kind=NLI, photon_flux=photon_flux, gain_sq=gain_sq)
        return smoothing_floor(cfg, p)

    def neg_snr(gain_sq: float) -> float:
        cfg = InterferometerConfig(kind=NLI, photon_flux=photon_flux, gain_sq=gain_sq)
        sig = tracking_mse_nli(cfg, p)
        gg = gain_sq * (gain_sq - 1.0)
        power = 4.0 * gg * photon_flux / (2.0 * gain_sq - 1.0)
        return -power / (2.0 * gg * sig + 1.0)

    if objective == "tracking":
        return tracking
    if objective == "smoothing_floor":
        return floor
    if objective == "snr":
        return neg_snr
    raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")


def _golden_section(f, a: float, b: float, tol: float) -> float:
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:  # ties toward the smaller gain
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimize_gain(
    p: ProcessParams,
    photon_flux: float,
    objective: str = "tracking",
    grid_points: int = 400,
    gain_sq_max: float = GAIN_SQ_CEILING,
    tol: float = 1e-4,
) -> tuple[float, float]:
    """Locate the gain G^2 in (1, gain_sq_max] optimizing the chosen objective.

    Log-spaced bracketing scan followed by golden-section refinement to
    |dG^2| <= tol; deterministic, ties broken toward smaller gain. Returns
    (gain_sq, objective value); the "snr" objective returns the (positive)
    SNR attained.
    """
    if photon_flux <= 0:
        raise ValueError("photon_flux must be positive")
    f = _objective(p, photon_flux, objective)
    grid = np.geomspace(1.0 + 1e-6, gain_sq_max, grid_points)
    values = np.array([f(g) for g in grid])
    if not np.all(np.isfinite(values)):
        raise RuntimeError("objective produced non-finite values on the scan grid")
    spread = values.max() - values.min()
    if spread <= 1e-12 * max(abs(values.max()), 1e-300):
        raise RuntimeError("objective is flat over the scan grid; optimum undefined")
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid_points - 1)]
    gain_sq = _golden_section(f, lo, hi, tol)
    value = f(gain_sq)
    if objective == "snr":
        value = -value
    return gain_sq, value


def asymptotic_optimal_gain_sq(p: ProcessParams, photon_flux: float) -> float:
    """Large-flux optimal gain (|beta|^2 kappa^2)^(1/3) / (2^(2/3) kappa)."""
    return (photon_flux * p.kappa**2) ** (1.0 / 3.0) / (2.0 ** (2.0 / 3.0) * p.kappa)


def _check_asymptotic_regime(p: ProcessParams, photon_flux: float, margin: float = 10.0):
    go_sq = asymptotic_optimal_gain_sq(p, photon_flux)
    checks = (
        (go_sq >= margin, f"G_o^2 = {go_sq:.3g} is not >> 1"),
        (
            photon_flux / (2.0 * go_sq) >= margin * p.lam,
            f"|beta|^2 / (2 G_o^2) = {photon_flux / (2 * go_sq):.3g} is not >> lam",
        ),
        (photon_flux >= margin * p.kappa, f"|beta|^2 = {photon_flux:.3g} is not >> kappa"),
        (
            go_sq**2 * p.kappa >= margin * p.lam,
            f"G_o^4 kappa = {go_sq**2 * p.kappa:.3g} is not >> lam",
        ),
    )
    for ok, message in checks:
        if not ok:
            warnings.warn(f"asymptotic regime violated: {message}", RuntimeWarning, stacklevel=3)


def asymptotic_tracking_mse(p: ProcessParams, photon_flux: float) -> tuple[float, float]:
    """Large-flux tracking error 2^(1/3) (kappa/|beta|^2)^(2/3).

    Also returns the consistency value 1 / (2 G_o^4) from the SNR-stationarity
    condition; the two agree in the asymptotic regime. Emits RuntimeWarnings
    when the regime conditions fail their factor-10 margins.
    """
    _check_asymptotic_regime(p, photon_flux)
    value = 2.0 ** (1.0 / 3.0) * (p.kappa / photon_flux) ** (2.0 / 3.0)
    go_sq = asymptotic_optimal_gain_sq(p, photon_flux)
    return value, 1.0 / (2.0 * go_sq**2)


def asymptotic_smoothing_mse(p: ProcessParams, photon_flux: float) -> float:
    """Large-flux smoothing floor (kappa / (2 |beta|^2))^(2/3)."""
    _check_asymptotic_regime(p, photon_flux)
    return (p.kappa / (2.0 * photon_flux)) ** (2.0 / 3.0)


def scaling_point(p: ProcessParams, photon_flux: float) -> ScalingPoint:
    """Gain-optimized errors and the reference bounds at one flux.

    The gain is re-optimized at every flux (smoothing-floor objective, which
    shares its optimum with the others).
    """
    gain_sq, smooth = optimize_gain(p, photon_flux, objective="smoothing_floor")
    cfg = InterferometerConfig(kind=NLI, photon_flux=photon_flux, gain_sq=gain_sq)
    return ScalingPoint(
        photon_flux=photon_flux,
        optimal_gain_sq=gain_sq,
        tracking_mse=tracking_mse_nli(cfg, p),
        smoothing_mse=smooth,
        references=reference_bounds(p, photon_flux),
    )


def scaling_sweep(p: ProcessParams, fluxes) -> list[ScalingPoint]:
    return [scaling_point(p, float(b2)) for b2 in fluxes]
