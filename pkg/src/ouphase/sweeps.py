"""Experiment execution: analytic sweep tables, optional Monte Carlo overlays,
and plot-ready CSV/JSON serialization with a commented metadata header."""

from __future__ import annotations

import dataclasses
import importlib.metadata
import json
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import gain as gain_mod
from . import mse as mse_mod
from .interferometers import MZI, NLI, InterferometerConfig, snr_ratio
from .ou import ProcessParams
from .presets import ConfigError, ExperimentSpec
from .simulate import SimConfig, replica_seeds, run_replicas


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[str, ...]
    rows: np.ndarray  # shape (n, len(columns))

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if rows.size and rows.shape[1] != len(self.columns):
            raise ValueError(f"table {self.name}: {rows.shape[1]} columns vs {len(self.columns)} names")
        if rows.size and not np.all(np.isfinite(rows)):
            bad = [self.columns[j] for j in sorted(set(np.argwhere(~np.isfinite(rows))[:, 1]))]
            raise RuntimeError(f"table {self.name}: non-finite values in columns {bad}")
        object.__setattr__(self, "rows", rows)


def _process(spec: ExperimentSpec) -> ProcessParams:
    return ProcessParams(kappa=spec.params["kappa"], lam=spec.params["lambda"])


def _nli(spec: ExperimentSpec, gain_sq: float | None = None, flux: float | None = None):
    return InterferometerConfig(
        kind=NLI,
        photon_flux=spec.params["photon_flux"] if flux is None else flux,
        gain_sq=spec.params["gain_sq"] if gain_sq is None else gain_sq,
    )


def _mzi(spec: ExperimentSpec, flux: float | None = None):
    return InterferometerConfig(
        kind=MZI, photon_flux=spec.params["photon_flux"] if flux is None else flux
    )


def _build_fig2(spec: ExperimentSpec):
    pr = spec.params
    gains = np.geomspace(pr["gain_sq_min"], pr["gain_sq_max"], pr["gain_sq_points"])
    sigmas = np.linspace(pr["sigma_f_sq_min"], pr["sigma_f_sq_max"], pr["sigma_f_sq_points"])
    gg, ss = np.meshgrid(gains, sigmas, indexing="ij")
    ratio = snr_ratio(gg, ss)
    surface = Table(
        "fig2_snr_ratio",
        ("gain_sq", "sigma_f_sq", "snr_ratio"),
        np.column_stack([gg.ravel(), ss.ravel(), ratio.ravel()]),
    )
    # Unity contour: bracket ratio = 1 crossings on the grid, then refine each
    # bracket with a root solve on the closed form.
    contour_rows = []
    for j, sig in enumerate(sigmas):
        row = ratio[:, j] - 1.0
        signs = np.sign(row)
        for i in np.flatnonzero(signs[:-1] * signs[1:] < 0):
            root = brentq(
                lambda g: float(snr_ratio(g, sig)) - 1.0, gains[i], gains[i + 1], xtol=1e-12
            )
            contour_rows.append((sig, root))
        for i in np.flatnonzero(row == 0.0):
            contour_rows.append((sig, gains[i]))
    contour = Table(
        "fig2_unity_contour",
        ("sigma_f_sq", "gain_sq"),
        np.array(contour_rows) if contour_rows else np.empty((0, 2)),
    )
    return [surface, contour], {}


def _build_fig3(spec: ExperimentSpec):
    pr = spec.params
    p = _process(spec)
    gains = np.geomspace(pr["gain_sq_min"], pr["gain_sq_max"], pr["gain_sq_points"])
    nli_vals = np.array([mse_mod.tracking_mse_nli(_nli(spec, g), p) for g in gains])
    mzi_val = mse_mod.tracking_mse_mzi(_mzi(spec), p)
    table = Table(
        "fig3_gain_sweep",
        ("gain_sq", "nli_tracking_mse", "mzi_tracking_mse"),
        np.column_stack([gains, nli_vals, np.full_like(gains, mzi_val)]),
    )
    gain_opt, mse_opt = gain_mod.optimize_gain(p, pr["photon_flux"], objective="tracking")
    summary = {
        "optimal_gain_sq": gain_opt,
        "optimal_tracking_mse": mse_opt,
        "mzi_tracking_mse": mzi_val,
    }
    return [table], summary


def _build_fig4(spec: ExperimentSpec):
    pr = spec.params
    p = _process(spec)
    lam_eps = np.linspace(pr["lambda_eps_min"], pr["lambda_eps_max"], pr["eps_points"])
    eps = lam_eps / p.lam
    nli_cfg, mzi_cfg = _nli(spec), _mzi(spec)
    nli_vals = np.array([mse_mod.offset_mse(nli_cfg, p, e).xi for e in eps])
    mzi_vals = np.array([mse_mod.offset_mse(mzi_cfg, p, e).xi for e in eps])
    table = Table(
        "fig4_epsilon_sweep",
        ("lambda_epsilon", "epsilon_s", "nli_mse", "mzi_mse"),
        np.column_stack([lam_eps, eps, nli_vals, mzi_vals]),
    )
    summary = {
        "nli_tracking_mse": mse_mod.tracking_mse_nli(nli_cfg, p),
        "nli_smoothing_floor": mse_mod.smoothing_floor(nli_cfg, p),
        "mzi_tracking_mse": mse_mod.tracking_mse_mzi(mzi_cfg, p),
        "mzi_smoothing_floor": mse_mod.smoothing_floor(mzi_cfg, p),
    }
    return [table], summary


def _build_fig5(spec: ExperimentSpec):
    pr = spec.params
    p = _process(spec)
    fluxes = np.geomspace(pr["flux_min"], pr["flux_max"], pr["flux_points"])
    points = gain_mod.scaling_sweep(p, fluxes)
    rows = np.array(
        [
            (
                pt.photon_flux,
                pt.optimal_gain_sq,
                pt.smoothing_mse,
                pt.tracking_mse,
                mse_mod.smoothing_floor(_mzi(spec, pt.photon_flux), p),
                pt.references.classical,
                pt.references.canonical,
                pt.references.heisenberg,
            )
            for pt in points
        ]
    )
    table = Table(
        "fig5_scaling",
        (
            "photon_flux",
            "nli_gain_sq_opt",
            "nli_smoothing_mse",
            "nli_tracking_mse",
            "mzi_smoothing_mse",
            "classical_limit",
            "canonical_bound",
            "heisenberg_asymptote",
        ),
        rows,
    )
    logf = np.log(rows[:, 0])
    summary = {
        "nli_loglog_slope": float(np.polyfit(logf, np.log(rows[:, 2]), 1)[0]),
        "mzi_loglog_slope": float(np.polyfit(logf, np.log(rows[:, 4]), 1)[0]),
    }
    return [table], summary


def _build_custom(spec: ExperimentSpec):
    pr = spec.params
    p = _process(spec)
    var = pr["sweep"]
    if var in ("gain_sq", "photon_flux"):
        grid = np.geomspace(pr["sweep_min"], pr["sweep_max"], pr["sweep_points"])
    else:
        grid = np.linspace(pr["sweep_min"], pr["sweep_max"], pr["sweep_points"])
    rows = []
    for value in grid:
        if var == "gain_sq":
            cfg = _nli(spec, gain_sq=value)
            rows.append((value, mse_mod.tracking_mse(cfg, p), mse_mod.smoothing_floor(cfg, p)))
        elif var == "photon_flux":
            cfg = (
                _nli(spec, flux=value) if pr["kind"] == "nli" else _mzi(spec, flux=value)
            )
            rows.append((value, mse_mod.tracking_mse(cfg, p), mse_mod.smoothing_floor(cfg, p)))
        else:  # epsilon sweep
            cfg = _nli(spec) if pr["kind"] == "nli" else _mzi(spec)
            rows.append((value, mse_mod.offset_mse(cfg, p, value).xi, math.nan))
    if var == "epsilon":
        table = Table("custom_sweep", ("epsilon_s", "mse"), np.array(rows)[:, :2])
    else:
        table = Table("custom_sweep", (var, "tracking_mse", "smoothing_floor"), np.array(rows))
    return [table], {}


_BUILDERS = {
    "fig2-snr-surface": _build_fig2,
    "fig3-gain-sweep": _build_fig3,
    "fig4-epsilon-sweep": _build_fig4,
    "fig5-scaling": _build_fig5,
    "custom": _build_custom,
}


def _sim_config(spec: ExperimentSpec, instrument, epsilons=(0.0,), seed=0):
    return SimConfig(
        process=_process(spec),
        instrument=instrument,
        dt=spec.params["dt"],
        duration=spec.params["duration"],
        burn_in=spec.params["burn_in"],
        epsilons=tuple(epsilons),
        model_fidelity=spec.fidelity,
        seed=seed,
    )


def _overlay_fig3(spec: ExperimentSpec):
    pr = spec.params
    gains = np.geomspace(pr["gain_sq_min"], pr["gain_sq_max"], pr["mc_points"])
    seeds = replica_seeds(spec.seed, len(gains))
    rows = []
    for g, seed in zip(gains, seeds):
        cfg = _sim_config(spec, _nli(spec, gain_sq=float(g)), seed=seed)
        rep = run_replicas(cfg, max(spec.replicas, 1), workers=spec.workers)
        rec = rep.records[0]
        rows.append((g, rec.analytic_mse, rec.empirical_mse, rec.standard_error, rec.n_effective))
    return Table(
        "fig3_montecarlo",
        ("gain_sq", "analytic_mse", "empirical_mse", "standard_error", "n_effective"),
        np.array(rows),
    )


def _overlay_fig4(spec: ExperimentSpec):
    pr = spec.params
    dt = pr["dt"]
    lam = pr["lambda"]
    lam_eps = np.linspace(pr["lambda_eps_min"], pr["lambda_eps_max"], pr["mc_points"])
    eps = np.round(lam_eps / lam / dt) * dt  # realizable integer multiples of dt
    rows = []
    for kind, cfg_builder in ((1.0, _nli), (0.0, _mzi)):
        instrument = cfg_builder(spec)
        cfg = _sim_config(spec, instrument, epsilons=tuple(eps), seed=spec.seed)
        rep = run_replicas(cfg, max(spec.replicas, 1), workers=spec.workers)
        for rec in rep.records:
            rows.append(
                (
                    kind,
                    rec.epsilon_effective * lam,
                    rec.epsilon_effective,
                    rec.analytic_mse,
                    rec.empirical_mse,
                    rec.standard_error,
                )
            )
    return Table(
        "fig4_montecarlo",
        ("is_nli", "lambda_epsilon", "epsilon_s", "analytic_mse", "empirical_mse", "standard_error"),
        np.array(rows),
    )


def _overlay_fig5(spec: ExperimentSpec):
    pr = spec.params
    p = _process(spec)
    fluxes = np.geomspace(pr["flux_min"], pr["flux_max"], pr["mc_points"])
    seeds = replica_seeds(spec.seed, len(fluxes))
    rows = []
    for flux, seed in zip(fluxes, seeds):
        gain_opt, _ = gain_mod.optimize_gain(p, float(flux), objective="smoothing_floor")
        cfg = _sim_config(spec, _nli(spec, gain_sq=gain_opt, flux=float(flux)), seed=seed)
        rep = run_replicas(cfg, max(spec.replicas, 1), workers=spec.workers)
        rec = rep.records[0]
        rows.append((flux, gain_opt, rec.analytic_mse, rec.empirical_mse, rec.standard_error))
    return Table(
        "fig5_montecarlo",
        ("photon_flux", "gain_sq_opt", "analytic_tracking_mse", "empirical_tracking_mse", "standard_error"),
        np.array(rows),
    )


_OVERLAYS = {
    "fig3-gain-sweep": _overlay_fig3,
    "fig4-epsilon-sweep": _overlay_fig4,
    "fig5-scaling": _overlay_fig5,
}


def _package_version() -> str:
    try:
        return importlib.metadata.version("ouphase")
    except importlib.metadata.PackageNotFoundError:
        return "unknown"


def _metadata(spec: ExperimentSpec, summary: dict) -> dict:
    import numpy
    import scipy

    meta = {
        "tool": "ouphase",
        "version": _package_version(),
        "preset": spec.preset,
        "seed": spec.seed,
        "replicas": spec.replicas,
        "fidelity": spec.fidelity,
        "python": sys.version.split()[0],
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
    }
    if spec.timestamps:
        meta["generated_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    meta.update({f"param.{k}": v for k, v in sorted(spec.params.items())})
    meta.update({f"summary.{k}": v for k, v in sorted(summary.items())})
    return meta


def _format_value(x: float) -> str:
    return format(x, ".12g")


def write_csv(path: str, table: Table, meta: dict):
    lines = [f"# {key} = {value}" for key, value in meta.items()]
    lines.append(",".join(table.columns))
    for row in table.rows:
        lines.append(",".join(_format_value(x) for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(path: str, table: Table, meta: dict):
    payload = {
        "metadata": meta,
        "columns": list(table.columns),
        "rows": [[float(x) for x in row] for row in table.rows],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def run_experiment(spec: ExperimentSpec) -> list[str]:
    """Execute a validated experiment; returns the paths written."""
    try:
        os.makedirs(spec.output_dir, exist_ok=True)
        probe = os.path.join(spec.output_dir, ".write-probe")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise ConfigError([f"output_dir: not writable ({exc})"]) from exc

    tables, summary = _BUILDERS[spec.preset](spec)
    if spec.replicas > 0 and spec.preset in _OVERLAYS:
        tables.append(_OVERLAYS[spec.preset](spec))

    meta = _metadata(spec, summary)
    written = []
    for table in tables:
        if "csv" in spec.formats:
            path = os.path.join(spec.output_dir, f"{table.name}.csv")
            write_csv(path, table, meta)
            written.append(path)
        if "json" in spec.formats:
            path = os.path.join(spec.output_dir, f"{table.name}.json")
            write_json(path, table, meta)
            written.append(path)
    return written
