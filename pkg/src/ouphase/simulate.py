"""Time-domain closed-loop simulation and the finite-window MMSE oracle.

The loop advances the phase with the exact one-step OU transition, forms the
photocurrent sample for each bin, and drives the causal tracking filter
phi_f' = -lc phi_f + chi r with a zero-order-hold update: r_i (the sample for
bin [t_i, t_{i+1})) produces the phi_f applied at step i+1, so the filter is
strictly causal with one-sample latency.

Each photocurrent sample models an integrating detector: it carries the
trapezoid average of the phase over its bin plus white noise of variance
N / dt (continuous-PSD convention). Against a left-endpoint point sample this
convention removes the half-sample staleness that would otherwise bias the
empirical tracking error by O(dt * cutoff); with it the discrete stationary
error matches the continuous value to O((dt * cutoff)^2), verified against
the exact discrete covariance algebra.

Prediction estimates are the decayed current estimate exp(-lam eps) phi_f;
smoothing estimates convolve the record with the realized lagged kernel.
Error bars use batch means (30 batches) so the residual autocorrelation is
accounted for.
"""

from __future__ import annotations

import dataclasses
import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.signal import lfilter, oaconvolve

from . import mse as mse_mod
from .interferometers import InterferometerConfig, build_photocurrent_model
from .ou import ProcessParams, step_coefficients
from .wiener import (
    ObservationSpectrum,
    observation_spectrum,
    realize_impulse_response,
    synthesize,
    whiten_stream,
)

CHUNK = 1 << 20
N_BATCHES = 30
ORTHOGONALITY_LAGS = 50
WHITENESS_BUFFER = 1 << 21
FIDELITIES = ("linearized", "exact")
# Soft guard: the filter pole should be resolved; hard failure only when the
# grid cannot represent the loop dynamics at all.
DT_CUTOFF_WARN = 0.02
DT_CUTOFF_FAIL = 0.5


@dataclass(frozen=True)
class SimConfig:
    """Closed-loop run description; a pure value, safe to share across workers."""

    process: ProcessParams
    instrument: InterferometerConfig
    dt: float
    duration: float
    burn_in: float | None = None
    epsilons: tuple[float, ...] = (0.0,)
    model_fidelity: str = "linearized"
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        lam = self.process.lam
        if self.duration < 100.0 / lam:
            raise ValueError(f"duration must cover >= 100 correlation times (>= {100.0 / lam:g} s)")
        burn = self.burn_in if self.burn_in is not None else 10.0 / lam
        if burn < 10.0 / lam:
            raise ValueError(f"burn_in must cover >= 10 correlation times (>= {10.0 / lam:g} s)")
        object.__setattr__(self, "burn_in", float(burn))
        fidelity = str(self.model_fidelity).lower()
        if fidelity in ("exact-homodyne", "exact_homodyne"):
            fidelity = "exact"
        if fidelity not in FIDELITIES:
            raise ValueError(f"model_fidelity must be one of {FIDELITIES}")
        object.__setattr__(self, "model_fidelity", fidelity)
        eps = tuple(float(e) for e in self.epsilons)
        if not eps:
            raise ValueError("epsilons must not be empty")
        if not all(math.isfinite(e) for e in eps):
            raise ValueError("epsilons must be finite")
        lag_budget = self.duration - self.burn_in
        worst = -min(eps)
        if worst >= lag_budget:
            raise ValueError(
                f"smoothing lag {worst:g} s does not fit in duration - burn_in = {lag_budget:g} s"
            )
        object.__setattr__(self, "epsilons", eps)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass(frozen=True)
class EpsilonRecord:
    """Per-offset comparison of the empirical error against the closed form."""

    epsilon: float
    epsilon_effective: float
    mode: str
    analytic_mse: float
    empirical_mse: float
    standard_error: float
    n_effective: float
    n_samples: int

    @property
    def deviation_sigmas(self) -> float:
        return abs(self.empirical_mse - self.analytic_mse) / self.standard_error


@dataclass(frozen=True)
class WhitenessResult:
    max_abs_acf: float
    worst_lag: int
    threshold: float
    n_samples: int
    passed: bool


@dataclass(frozen=True)
class EstimationReport:
    """Outcome of one closed-loop run (or a merged set of replicas)."""

    config: SimConfig
    records: tuple[EpsilonRecord, ...]
    sigma_f_sq_analytic: float
    snr_analytic: float
    snr_empirical: float
    whiteness: WhitenessResult | None
    orthogonality_stat: float
    orthogonality_threshold: float
    orthogonality_passed: bool
    n_replicas: int = 1

    def record_for(self, epsilon: float) -> EpsilonRecord:
        for rec in self.records:
            if rec.epsilon == epsilon:
                return rec
        raise KeyError(f"no record for epsilon = {epsilon}")


def whiteness_diagnostic(stream, max_lag: int = 100, min_length: int = 100_000) -> WhitenessResult:
    """Max |sample ACF| over lags 1..max_lag against the 3/sqrt(n) threshold."""
    x = np.asarray(stream, dtype=float)
    n = x.size
    if n < min_length:
        raise ValueError(f"stream too short for a whiteness check: {n} < {min_length}")
    x = x - x.mean()
    nfft = 1 << int(math.ceil(math.log2(n + max_lag)))
    spec = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(spec * np.conj(spec), nfft)[: max_lag + 1] / n
    acf = acov[1:] / acov[0]
    worst = int(np.argmax(np.abs(acf)))
    stat = float(np.abs(acf[worst]))
    threshold = 3.0 / math.sqrt(n)
    return WhitenessResult(
        max_abs_acf=stat,
        worst_lag=worst + 1,
        threshold=threshold,
        n_samples=n,
        passed=stat <= threshold,
    )


@functools.cache
def _exact_chunk_kernel():
    # Deferred so analytic-only workflows never pay the numba import/compile.
    import numba

    @numba.njit(cache=True)
    def kernel(v, w, phi0, phif0, c, q, a_f, b_f, mean_coef, disp_coef, noise_quad, inv_sqrt_dt,
               out_phi, out_phibar, out_phif, out_r):
        phi = phi0
        phif = phif0
        for j in range(v.size):
            phi_next = c * phi + q * v[j]
            phibar = 0.5 * (phi + phi_next)
            half = 0.5 * (phibar - phif)
            sin_half = math.sin(half)
            amp = math.sqrt(1.0 + noise_quad * sin_half * sin_half)
            r = mean_coef * sin_half + disp_coef * phif + amp * inv_sqrt_dt * w[j]
            out_phi[j] = phi
            out_phibar[j] = phibar
            out_phif[j] = phif
            out_r[j] = r
            phif = a_f * phif + b_f * r
            phi = phi_next
        return phi, phif

    return kernel


class _ChannelAccumulator:
    """Batched first/second moments of one squared-error stream, indexed by
    the phase-sample index the error refers to."""

    def __init__(self, j_min: int, j_max: int):
        if j_max < j_min:
            raise ValueError("empty channel: no valid samples for this offset")
        self.j_min = j_min
        self.j_max = j_max
        self.span = j_max - j_min + 1
        self.batch_sums = np.zeros(N_BATCHES)
        self.batch_counts = np.zeros(N_BATCHES, dtype=np.int64)
        self.sum_x = 0.0
        self.sum_x2 = 0.0
        self.n = 0

    def add(self, j_indices: np.ndarray, sq_errors: np.ndarray):
        mask = (j_indices >= self.j_min) & (j_indices <= self.j_max)
        if not mask.any():
            return
        x = sq_errors[mask]
        j = j_indices[mask]
        bids = ((j - self.j_min) * N_BATCHES) // self.span
        self.batch_sums += np.bincount(bids, weights=x, minlength=N_BATCHES)
        self.batch_counts += np.bincount(bids, minlength=N_BATCHES)
        self.sum_x += float(x.sum())
        self.sum_x2 += float((x * x).sum())
        self.n += x.size

    def summarize(self) -> tuple[float, float, float, int]:
        """(mean, batch-means SE, autocorrelation-corrected n_eff, n)."""
        filled = self.batch_counts > 0
        if self.n < N_BATCHES * 2 or filled.sum() < 2:
            raise RuntimeError("too few samples to form batch-means error bars")
        mean = self.sum_x / self.n
        bmeans = self.batch_sums[filled] / self.batch_counts[filled]
        k = int(filled.sum())
        se = float(np.std(bmeans, ddof=1) / math.sqrt(k))
        var_x = max(self.sum_x2 / self.n - mean * mean, 0.0)
        n_eff = min(var_x / se**2 if se > 0 else float(self.n), float(self.n))
        return mean, se, n_eff, self.n


@dataclass
class _Channel:
    epsilon: float
    eps_eff: float
    steps: int
    mode: str
    analytic: float
    acc: _ChannelAccumulator
    kernel: np.ndarray | None = None
    pred_coef: float = 1.0


def _analytic_setup(cfg: SimConfig):
    sigma_f_sq = mse_mod.tracking_mse(cfg.instrument, cfg.process)
    model = build_photocurrent_model(cfg.instrument, sigma_f_sq)
    obs = observation_spectrum(cfg.instrument, cfg.process, sigma_f_sq=sigma_f_sq)
    return sigma_f_sq, model, obs


def run_closed_loop(cfg: SimConfig) -> EstimationReport:
    """Simulate the adaptive loop and compare every offset against its closed form."""
    p = cfg.process
    dt = cfg.dt
    sigma_f_sq, model, obs = _analytic_setup(cfg)
    tracking_sol = synthesize(obs, 0.0)
    lc = tracking_sol.cutoff
    if dt * lc > DT_CUTOFF_FAIL:
        raise ValueError(f"dt * cutoff = {dt * lc:.3g} cannot resolve the filter dynamics")
    if dt * lc > DT_CUTOFF_WARN:
        warnings.warn(
            f"dt * cutoff = {dt * lc:.3g} > {DT_CUTOFF_WARN}; expect O((dt*cutoff)^2) bias",
            RuntimeWarning,
            stacklevel=2,
        )

    n_total = cfg.n_steps
    n_burn = int(round(cfg.burn_in / dt))
    if n_total - n_burn < N_BATCHES * 2:
        raise ValueError("duration leaves too few post-burn-in samples")

    # Filter coefficients: zero-order-hold discretization of the tracking ODE.
    chi = tracking_sol.front_gain
    a_f = math.exp(-lc * dt)
    b_f = chi * (1.0 - a_f) / lc
    c_ou, q_ou = step_coefficients(p, dt, "exact")

    channels: list[_Channel] = []
    for eps in cfg.epsilons:
        steps = int(round(eps / dt))
        eps_eff = steps * dt
        analytic = mse_mod.offset_mse(cfg.instrument, p, eps_eff)
        kernel = None
        pred_coef = 1.0
        if steps > 0:
            j_min, j_max = max(n_burn, steps), n_total - 1
            pred_coef = math.exp(-p.lam * eps_eff)
        elif steps < 0:
            kernel = realize_impulse_response(synthesize(obs, eps_eff), dt)
            # Estimates exist once the kernel is fully inside the record.
            j_min = max(n_burn, kernel.size - (-steps))
            j_max = n_total + steps
        else:
            j_min, j_max = n_burn, n_total - 1
        channels.append(
            _Channel(
                epsilon=eps,
                eps_eff=eps_eff,
                steps=steps,
                mode=analytic.mode,
                analytic=analytic.xi,
                acc=_ChannelAccumulator(j_min, j_max),
                kernel=kernel,
                pred_coef=pred_coef,
            )
        )

    track_acc = _ChannelAccumulator(n_burn, n_total - 1)
    k_max = max((ch.kernel.size for ch in channels if ch.kernel is not None), default=1)
    max_pred = max((ch.steps for ch in channels if ch.steps > 0), default=0)
    max_lag = max((-ch.steps for ch in channels if ch.steps < 0), default=0)

    # History buffers carried across chunks.
    phi_tail = np.zeros(max_lag + 1)
    phif_tail = np.zeros(max_pred + 1)
    r_tail_conv = np.zeros(max(k_max - 1, 1))
    r_tail_orth = np.zeros(ORTHOGONALITY_LAGS)

    sg = model.signal_gain
    noise_scale = math.sqrt(model.noise_power / dt)
    if cfg.model_fidelity == "exact":
        inst = cfg.instrument
        if inst.is_nli:
            gg = math.sqrt(inst.gain_sq * inst.g_sq)
            mean_coef = 4.0 * gg * inst.alpha
            disp_coef = 2.0 * gg * inst.alpha
            noise_quad = 8.0 * inst.gain_sq * inst.g_sq
        else:
            mean_coef = 2.0 * inst.beta
            disp_coef = inst.beta
            noise_quad = 0.0
        exact_kernel = _exact_chunk_kernel()

    rng = np.random.default_rng(cfg.seed)
    phi_state = rng.normal(0.0, math.sqrt(p.stationary_variance()))
    phif_state = 0.0
    whiten_zi = np.zeros(1)
    white_buffer = np.empty(min(n_total - n_burn, WHITENESS_BUFFER))
    white_fill = 0

    orth_sums = np.zeros(ORTHOGONALITY_LAGS)
    orth_n = 0
    stat_sums = {"e": 0.0, "e2": 0.0, "r": 0.0, "r2": 0.0, "rphi": 0.0, "phibar2": 0.0, "n": 0}

    i0 = 0
    while i0 < n_total:
        nc = min(CHUNK, n_total - i0)
        v = rng.standard_normal(nc)
        w = rng.standard_normal(nc)
        if cfg.model_fidelity == "linearized":
            phi_incl, _ = lfilter([1.0], [1.0, -c_ou], q_ou * v, zi=np.array([c_ou * phi_state]))
            phi_chunk = np.concatenate(([phi_state], phi_incl[:-1]))
            phibar = 0.5 * (phi_chunk + phi_incl)
            r_chunk = sg * phibar + noise_scale * w
            phif_incl, _ = lfilter([b_f], [1.0, -a_f], r_chunk, zi=np.array([a_f * phif_state]))
            phif_chunk = np.concatenate(([phif_state], phif_incl[:-1]))
            phi_state = float(phi_incl[-1])
            phif_state = float(phif_incl[-1])
        else:
            phi_chunk = np.empty(nc)
            phibar = np.empty(nc)
            phif_chunk = np.empty(nc)
            r_chunk = np.empty(nc)
            phi_state, phif_state = exact_kernel(
                v, w, phi_state, phif_state, c_ou, q_ou, a_f, b_f,
                mean_coef, disp_coef, noise_quad, 1.0 / math.sqrt(dt),
                phi_chunk, phibar, phif_chunk, r_chunk,
            )
        if not (math.isfinite(phi_state) and math.isfinite(phif_state)):
            raise RuntimeError(
                f"non-finite sample near step {i0 + nc}: phi={phi_state}, phi_f={phif_state}"
            )

        j_global = np.arange(i0, i0 + nc)
        err_track = phi_chunk - phif_chunk
        sq_track = err_track**2
        track_acc.add(j_global, sq_track)

        phif_ext = np.concatenate((phif_tail, phif_chunk))
        phi_ext = np.concatenate((phi_tail, phi_chunk))
        r_ext = np.concatenate((r_tail_conv, r_chunk))
        for ch in channels:
            if ch.steps > 0:
                lagged = phif_ext[phif_tail.size - ch.steps : phif_tail.size - ch.steps + nc]
                err = phi_chunk - ch.pred_coef * lagged
                ch.acc.add(j_global, err**2)
            elif ch.steps < 0:
                # Estimate built from data bins up to index i targets phase
                # sample i + 1 - lag (bin averages pair midpoint-to-midpoint).
                kern = ch.kernel
                est = oaconvolve(r_ext[-(nc + kern.size - 1):], kern, mode="valid") * dt
                lag = -ch.steps
                target = phi_ext[phi_tail.size + 1 - lag : phi_tail.size + 1 - lag + nc]
                ch.acc.add(j_global + 1 - lag, (target - est) ** 2)

        # Whitened record for the whiteness diagnostic.
        white_chunk, whiten_zi = whiten_stream(r_chunk, obs, dt, "binavg", zi=whiten_zi)
        post = j_global >= n_burn
        if white_fill < white_buffer.size and post.any():
            take = white_chunk[post][: white_buffer.size - white_fill]
            white_buffer[white_fill : white_fill + take.size] = take
            white_fill += take.size

        # Orthogonality of the tracking residual with the past record.
        r_orth_ext = np.concatenate((r_tail_orth, r_chunk))
        e_post = err_track[post]
        if e_post.size:
            base = ORTHOGONALITY_LAGS + np.flatnonzero(post)
            for k in range(1, ORTHOGONALITY_LAGS + 1):
                orth_sums[k - 1] += float(np.dot(e_post, r_orth_ext[base - k]))
            orth_n += e_post.size
            r_post = r_chunk[post]
            stat_sums["e"] += float(e_post.sum())
            stat_sums["e2"] += float((e_post**2).sum())
            stat_sums["r"] += float(r_post.sum())
            stat_sums["r2"] += float((r_post**2).sum())
            stat_sums["rphi"] += float(np.dot(r_post, phibar[post]))
            stat_sums["phibar2"] += float((phibar[post] ** 2).sum())
            stat_sums["n"] += r_post.size

        phi_tail = np.concatenate((phi_tail, phi_chunk))[-phi_tail.size:]
        phif_tail = np.concatenate((phif_tail, phif_chunk))[-phif_tail.size:]
        r_tail_conv = np.concatenate((r_tail_conv, r_chunk))[-r_tail_conv.size:]
        r_tail_orth = np.concatenate((r_tail_orth, r_chunk))[-ORTHOGONALITY_LAGS:]
        i0 += nc

    track_summary = track_acc.summarize()
    records = []
    for ch in channels:
        if ch.steps == 0:
            mean, se, n_eff, n = track_summary
        else:
            mean, se, n_eff, n = ch.acc.summarize()
        records.append(
            EpsilonRecord(
                epsilon=ch.epsilon,
                epsilon_effective=ch.eps_eff,
                mode=ch.mode,
                analytic_mse=ch.analytic,
                empirical_mse=mean,
                standard_error=se,
                n_effective=n_eff,
                n_samples=n,
            )
        )

    n_stat = stat_sums["n"]
    sg_hat = stat_sums["rphi"] / stat_sums["phibar2"]
    resid_var = (
        stat_sums["r2"] / n_stat
        - 2.0 * sg_hat * stat_sums["rphi"] / n_stat
        + sg_hat**2 * stat_sums["phibar2"] / n_stat
    )
    snr_empirical = sg_hat**2 / (resid_var * dt)
    snr_analytic = model.signal_power / model.noise_power

    var_e = stat_sums["e2"] / orth_n - (stat_sums["e"] / orth_n) ** 2
    var_r = stat_sums["r2"] / n_stat - (stat_sums["r"] / n_stat) ** 2
    corr = (orth_sums / orth_n - (stat_sums["e"] / orth_n) * (stat_sums["r"] / n_stat)) / math.sqrt(
        var_e * var_r
    )
    orth_stat = float(np.max(np.abs(corr)))
    orth_threshold = 3.0 / math.sqrt(track_summary[2])

    whiteness = None
    if white_fill >= 100_000:
        whiteness = whiteness_diagnostic(white_buffer[:white_fill])

    return EstimationReport(
        config=cfg,
        records=tuple(records),
        sigma_f_sq_analytic=sigma_f_sq,
        snr_analytic=snr_analytic,
        snr_empirical=snr_empirical,
        whiteness=whiteness,
        orthogonality_stat=orth_stat,
        orthogonality_threshold=orth_threshold,
        orthogonality_passed=orth_stat <= orth_threshold,
    )


def merge_reports(reports) -> EstimationReport:
    """Pool independent replicas into one report (pure reduction)."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to merge")
    if len(reports) == 1:
        return reports[0]
    first = reports[0]
    merged_records = []
    for idx, base in enumerate(first.records):
        recs = [rep.records[idx] for rep in reports]
        n_tot = sum(r.n_samples for r in recs)
        mean = sum(r.empirical_mse * r.n_samples for r in recs) / n_tot
        se = math.sqrt(sum((r.standard_error * r.n_samples) ** 2 for r in recs)) / n_tot
        merged_records.append(
            dataclasses.replace(
                base,
                empirical_mse=mean,
                standard_error=se,
                n_effective=sum(r.n_effective for r in recs),
                n_samples=n_tot,
            )
        )
    whiteness = None
    with_white = [rep.whiteness for rep in reports if rep.whiteness is not None]
    if with_white:
        whiteness = max(with_white, key=lambda wr: wr.max_abs_acf / wr.threshold)
    orth_stat = max(rep.orthogonality_stat for rep in reports)
    orth_thresh = min(rep.orthogonality_threshold for rep in reports)
    return EstimationReport(
        config=first.config,
        records=tuple(merged_records),
        sigma_f_sq_analytic=first.sigma_f_sq_analytic,
        snr_analytic=first.snr_analytic,
        snr_empirical=float(np.mean([rep.snr_empirical for rep in reports])),
        whiteness=whiteness,
        orthogonality_stat=orth_stat,
        orthogonality_threshold=orth_thresh,
        orthogonality_passed=orth_stat <= orth_thresh,
        n_replicas=sum(rep.n_replicas for rep in reports),
    )


def replica_seeds(seed: int, n: int) -> list[int]:
    """Deterministic independent seeds for parallel replicas."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def run_replicas(cfg: SimConfig, replicas: int, workers: int = 1) -> EstimationReport:
    """Run independent replicas (different seed streams) and merge them."""
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    configs = [dataclasses.replace(cfg, seed=s) for s in replica_seeds(cfg.seed, replicas)]
    if workers > 1 and replicas > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run_closed_loop, configs))
    else:
        reports = [run_closed_loop(c) for c in configs]
    return merge_reports(reports)


def brute_force_mmse(
    obs: ObservationSpectrum,
    p: ProcessParams,
    epsilon: float,
    window: float,
    dt: float,
    max_samples: int = 5000,
) -> float:
    """Finite-window discrete MMSE from analytic covariances: the independent
    oracle for the Wiener closed forms.

    The estimator sees samples of the record at bin centers t - (i + 1/2) dt,
    i = 0..n-1 (the centered convention keeps the discretization error at
    O((dt * cutoff)^2)), with noise variance N / dt on the diagonal, and
    estimates phi(t + epsilon). Returns K_d(0) - k^T K_r^{-1} k via a
    symmetric positive-definite solve.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = int(round(window / dt))
    prior = p.stationary_variance()
    if n <= 0:
        return prior
    if n > max_samples:
        raise ValueError(f"window/dt = {n} exceeds the dense-solve budget {max_samples}")
    taus = (np.arange(n) + 0.5) * dt
    lags = np.abs(taus[:, None] - taus[None, :])
    cov = obs.signal_power * p.autocorrelation(lags)
    cov[np.diag_indices(n)] += obs.noise_power / dt
    cross = math.sqrt(obs.signal_power) * p.autocorrelation(taus + epsilon)
    try:
        factor = cho_factor(cov, check_finite=False)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * np.trace(cov) / n
        warnings.warn(
            f"covariance solve ill-conditioned; regularizing diagonal by {jitter:.3g}",
            RuntimeWarning,
            stacklevel=2,
        )
        cov[np.diag_indices(n)] += jitter
        factor = cho_factor(cov, check_finite=False)
    return prior - float(cross @ cho_solve(factor, cross, check_finite=False))
