"""Experiment presets and configuration validation for the batch front-end.

Each preset fully determines its default parameter set; overrides are
key-value pairs checked against the preset's schema. Validation aggregates
every problem into one report naming the offending key and its admissible
range, and rejects unknown keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

PRESETS = (
    "fig2-snr-surface",
    "fig3-gain-sweep",
    "fig4-epsilon-sweep",
    "fig5-scaling",
    "custom",
)
FORMATS = ("csv", "json")
FIDELITIES = ("linearized", "exact")
SWEEP_VARIABLES = ("gain_sq", "epsilon", "photon_flux")

# Paper-scale defaults: kappa = 1e4 rad/s, lam = 1e5 rad/s, flux = 1e7 /s, G^2 = 7.4.
_BASE = {
    "kappa": 1e4,
    "lambda": 1e5,
    "photon_flux": 1e7,
    "gain_sq": 7.4,
    # Monte Carlo overlay knobs (used only when replicas > 0).
    "dt": 1e-7,
    "duration": 0.05,
    "burn_in": 2e-4,
    "mc_points": 5,
}

_PRESET_DEFAULTS = {
    "fig2-snr-surface": {
        **_BASE,
        "gain_sq_min": 1.01,
        "gain_sq_max": 50.0,
        "gain_sq_points": 200,
        "sigma_f_sq_min": 0.0,
        "sigma_f_sq_max": 0.2,
        "sigma_f_sq_points": 200,
    },
    "fig3-gain-sweep": {
        **_BASE,
        "gain_sq_min": 1.1,
        "gain_sq_max": 50.0,
        "gain_sq_points": 400,
    },
    "fig4-epsilon-sweep": {
        **_BASE,
        "lambda_eps_min": -1.0,
        "lambda_eps_max": 1.0,
        "eps_points": 201,
    },
    "fig5-scaling": {
        **_BASE,
        "flux_min": 1e9,
        "flux_max": 1e10,
        "flux_points": 25,
    },
    "custom": {
        **_BASE,
        "kind": "nli",
        "sweep": "gain_sq",
        "sweep_min": 1.1,
        "sweep_max": 50.0,
        "sweep_points": 100,
    },
}


class ConfigError(ValueError):
    """Aggregated validation report."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _positive(value: float) -> bool:
    return value > 0 and math.isfinite(value)


# key -> (python type, admissibility predicate, requirement text)
_RULES = {
    "kappa": (float, _positive, "> 0"),
    "lambda": (float, _positive, "> 0"),
    "photon_flux": (float, _positive, "> 0"),
    "gain_sq": (float, lambda v: v > 1 and math.isfinite(v), "> 1 for the nonlinear interferometer"),
    "gain_sq_min": (float, lambda v: v > 1, "> 1"),
    "gain_sq_max": (float, lambda v: v > 1, "> 1"),
    "gain_sq_points": (int, lambda v: v >= 1, ">= 1"),
    "sigma_f_sq_min": (float, lambda v: v >= 0, ">= 0"),
    "sigma_f_sq_max": (float, lambda v: v >= 0, ">= 0"),
    "sigma_f_sq_points": (int, lambda v: v >= 1, ">= 1"),
    "lambda_eps_min": (float, math.isfinite, "finite"),
    "lambda_eps_max": (float, math.isfinite, "finite"),
    "eps_points": (int, lambda v: v >= 1, ">= 1"),
    "flux_min": (float, _positive, "> 0"),
    "flux_max": (float, _positive, "> 0"),
    "flux_points": (int, lambda v: v >= 1, ">= 1"),
    "kind": (str, lambda v: v in ("nli", "mzi"), "one of nli|mzi"),
    "sweep": (str, lambda v: v in SWEEP_VARIABLES, f"one of {'|'.join(SWEEP_VARIABLES)}"),
    "sweep_min": (float, math.isfinite, "finite"),
    "sweep_max": (float, math.isfinite, "finite"),
    "sweep_points": (int, lambda v: v >= 1, ">= 1 (empty sweeps are rejected)"),
    "dt": (float, _positive, "> 0"),
    "duration": (float, _positive, "> 0"),
    "burn_in": (float, _positive, "> 0"),
    "mc_points": (int, lambda v: v >= 1, ">= 1"),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """A fully resolved, validated batch experiment."""

    preset: str
    params: dict
    output_dir: str = "results"
    formats: tuple[str, ...] = ("csv",)
    seed: int = 0
    replicas: int = 0
    fidelity: str = "linearized"
    workers: int = 1
    timestamps: bool = False
    overrides: dict = field(default_factory=dict)


def preset_defaults(preset: str) -> dict:
    if preset not in PRESETS:
        raise ConfigError([f"preset: must be one of {', '.join(PRESETS)} (got {preset!r})"])
    return dict(_PRESET_DEFAULTS[preset])


def _coerce(key: str, value, errors: list):
    typ, check, requirement = _RULES[key]
    try:
        if typ is str:
            coerced = str(value).lower()
        elif typ is int:
            coerced = int(str(value), 10) if not isinstance(value, (int, float)) else int(value)
            if isinstance(value, float) and value != coerced:
                raise ValueError
        else:
            coerced = float(value)
    except (TypeError, ValueError):
        errors.append(f"{key}: expected {typ.__name__}, got {value!r}")
        return None
    if not check(coerced):
        errors.append(f"{key}: must be {requirement} (got {value!r})")
        return None
    return coerced


def validate_config(raw: dict) -> ExperimentSpec:
    """Resolve a raw key-value document into an ExperimentSpec.

    The document holds the preset name, parameter overrides and run
    housekeeping (output_dir, formats, seed, replicas, fidelity, workers,
    timestamps). Raises ConfigError carrying every problem found.
    """
    errors: list[str] = []
    raw = dict(raw)
    preset = str(raw.pop("preset", "")).lower()
    if preset not in PRESETS:
        raise ConfigError([f"preset: must be one of {', '.join(PRESETS)} (got {preset!r})"])
    params = preset_defaults(preset)

    output_dir = str(raw.pop("output_dir", "results"))
    timestamps = bool(raw.pop("timestamps", False))

    seed = raw.pop("seed", 0)
    try:
        seed = int(seed)
    except (TypeError, ValueError):
        errors.append(f"seed: expected int, got {seed!r}")
        seed = 0

    replicas = raw.pop("replicas", 0)
    try:
        replicas = int(replicas)
        if replicas < 0:
            raise ValueError
    except (TypeError, ValueError):
        errors.append(f"replicas: must be an int >= 0 (got {replicas!r})")
        replicas = 0

    workers = raw.pop("workers", 1)
    try:
        workers = int(workers)
        if workers < 1:
            raise ValueError
    except (TypeError, ValueError):
        errors.append(f"workers: must be an int >= 1 (got {workers!r})")
        workers = 1

    fidelity = str(raw.pop("fidelity", "linearized")).lower()
    if fidelity == "exact-homodyne":
        fidelity = "exact"
    if fidelity not in FIDELITIES:
        errors.append(f"fidelity: must be one of {'|'.join(FIDELITIES)} (got {fidelity!r})")
        fidelity = "linearized"

    formats_raw = raw.pop("formats", ("csv",))
    if isinstance(formats_raw, str):
        formats_raw = [f for f in formats_raw.replace(",", " ").split() if f]
    formats = tuple(dict.fromkeys(str(f).lower() for f in formats_raw))
    for f in formats:
        if f not in FORMATS:
            errors.append(f"formats: must be a subset of {'|'.join(FORMATS)} (got {f!r})")
    if not formats:
        formats = ("csv",)

    overrides = {}
    for key, value in raw.items():
        if key not in params:
            errors.append(f"{key}: unknown key for preset {preset}")
            continue
        coerced = _coerce(key, value, errors)
        if coerced is not None:
            params[key] = coerced
            overrides[key] = coerced

    # Cross-field checks.
    for lo, hi in (
        ("gain_sq_min", "gain_sq_max"),
        ("sigma_f_sq_min", "sigma_f_sq_max"),
        ("lambda_eps_min", "lambda_eps_max"),
        ("flux_min", "flux_max"),
        ("sweep_min", "sweep_max"),
    ):
        if lo in params and hi in params and not params[lo] <= params[hi]:
            errors.append(f"{lo}: must be <= {hi} (got {params[lo]!r} > {params[hi]!r})")
    if preset == "custom":
        if params["sweep"] == "gain_sq" and params["kind"] != "nli":
            errors.append("sweep: gain_sq sweeps require kind = nli")
        if params["sweep"] == "gain_sq" and params.get("sweep_min", 2.0) <= 1.0:
            errors.append("sweep_min: must be > 1 for a gain_sq sweep")
        if params["sweep"] == "photon_flux" and params.get("sweep_min", 1.0) <= 0.0:
            errors.append("sweep_min: must be > 0 for a photon_flux sweep")

    if errors:
        raise ConfigError(errors)
    return ExperimentSpec(
        preset=preset,
        params=params,
        output_dir=output_dir,
        formats=formats,
        seed=seed,
        replicas=replicas,
        fidelity=fidelity,
        workers=workers,
        timestamps=timestamps,
        overrides=overrides,
    )


def parse_config_file(text: str) -> dict:
    """Parse a 'key = value' document ('#' comments, 'key: value' accepted)."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        for sep in ("=", ":"):
            if sep in stripped:
                key, value = stripped.split(sep, 1)
                out[key.strip()] = value.strip()
                break
        else:
            raise ConfigError([f"line {lineno}: expected 'key = value', got {line!r}"])
    return out
