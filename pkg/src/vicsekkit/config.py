"""Experiment configuration: JSON schema, validation, and object building.

A configuration is one JSON document.  Unknown keys, duplicate keys, and
out-of-range values are errors that name the offending key path.  Every
key has a documented default in DEFAULTS.
"""

import json
from dataclasses import dataclass

import numpy as np

from .coefficients import PRESET_NAMES, RegularizationSpec, preset, vonmises_values
from .errors import ConfigError
from .kinetic import KineticState, SpatialGrid1D
from .particles import InitialSpec, SimConfig
from .sphere import SphereGridS1

DEFAULTS = {
    "preset": "classic-vicsek",
    "d": 2,
    "nu_scale": 2.0,
    "sigma_value": 1.0,
    "c": 1.0,
    "alpha": None,  # None keeps the preset's alpha
    "eps0": 0.05,
    "seed": 0,
    "out": "runs/latest",
    "initial": {
        "orientation": "von-mises",
        "kappa": 2.0,
        "mean_direction": None,
        "space": "uniform",
        "x0": 0.0,
        "std": 1.0,
        "perturbation": 0.0,
        "space_profile": "uniform",
    },
    "particles": {
        "N": 256,
        "dt": 1e-3,
        "T": 1.0,
        "scheme": "stratonovich-heun",
        "variant": "approximated",
        "domain": 1.0,
        "renormalize": True,
        "snapshot_stride": 10,
        "replicas": 1,
    },
    "kinetic": {
        "n_theta": 128,
        "n_x": 0,
        "L": 1.0,
        "dt": 1e-3,
        "T": 1.0,
        "mode": "regularized",
        "theta_method": "implicit",
        "snapshot_stride": 10,
    },
    "sweep": {
        "Ns": [16, 64, 256],
        "replicas": 8,
        "T": 0.5,
        "dt": 2e-3,
        "snapshot_stride": 5,
    },
    "fluxprob": {
        "Ns": [64, 256],
        "replicas": 16,
        "T": None,  # None means half the certified horizon T1
        "dt": None,
        "eps0_factor": 0.25,
        "seed_sets": 1,
    },
}

_SCHEMES = ("stratonovich-heun", "ito-projected")
_VARIANTS = ("approximated", "vicsek-exact", "regularized", "auxiliary")


def _type_name(v):
    return type(v).__name__


def _check(value, default, path):
    """Validate value against the default's structure and type."""
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"expected a table, got {_type_name(value)}", path)
        out = dict(default)
        for k, v in value.items():
            if k not in default:
                raise ConfigError("unknown key", f"{path}.{k}" if path else k)
            sub = f"{path}.{k}" if path else k
            out[k] = _check(v, default[k], sub)
        return out
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {_type_name(value)}", path)
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {_type_name(value)}", path)
        if isinstance(value, float) and value != int(value):
            raise ConfigError("expected an integer", path)
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {_type_name(value)}", path)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {_type_name(value)}", path)
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {_type_name(value)}", path)
        return value
    if default is None:
        return value
    raise ConfigError(f"unsupported schema entry {default!r}", path)


def _validate_ranges(cfg):
    if cfg["preset"] not in PRESET_NAMES:
        raise ConfigError(f"must be one of {PRESET_NAMES}", "preset")
    if cfg["alpha"] is not None and not 0.0 <= float(cfg["alpha"]) <= 1.0:
        raise ConfigError(f"must lie in [0, 1], got {cfg['alpha']}", "alpha")
    if cfg["d"] not in (2, 3):
        raise ConfigError("dimension must be 2 or 3", "d")
    if cfg["eps0"] <= 0.0:
        raise ConfigError("must be positive", "eps0")
    p = cfg["particles"]
    if p["scheme"] not in _SCHEMES:
        raise ConfigError(f"must be one of {_SCHEMES}", "particles.scheme")
    if p["variant"] not in _VARIANTS:
        raise ConfigError(f"must be one of {_VARIANTS}", "particles.variant")
    if p["dt"] <= 0 or p["T"] < p["dt"]:
        raise ConfigError("need dt > 0 and T >= dt", "particles.dt")
    k = cfg["kinetic"]
    if k["mode"] not in ("regularized", "exact"):
        raise ConfigError("must be 'regularized' or 'exact'", "kinetic.mode")
    if k["theta_method"] not in ("implicit", "explicit"):
        raise ConfigError("must be 'implicit' or 'explicit'", "kinetic.theta_method")
    if k["n_theta"] < 8:
        raise ConfigError("need at least 8 angular nodes", "kinetic.n_theta")
    init = cfg["initial"]
    if init["orientation"] not in ("uniform", "von-mises"):
        raise ConfigError(
            "must be 'uniform' or 'von-mises'", "initial.orientation"
        )
    if init["space"] not in ("point", "uniform", "gaussian"):
        raise ConfigError(
            "must be 'point', 'uniform' or 'gaussian'", "initial.space"
        )
    if init["kappa"] < 0:
        raise ConfigError("concentration must be >= 0", "initial.kappa")
    sw = cfg["sweep"]
    if list(sw["Ns"]) != sorted(sw["Ns"]) or any(
        not isinstance(n, int) or n < 1 for n in sw["Ns"]
    ):
        raise ConfigError("must be an increasing list of counts", "sweep.Ns")
    return cfg


def _reject_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ConfigError("duplicate key", k)
        seen[k] = v
    return seen


@dataclass
class ExperimentConfig:
    """A fully resolved configuration plus builders for the run objects."""

    raw: dict

    def __getitem__(self, key):
        return self.raw[key]

    def coeffs(self):
        co = preset(
            self.raw["preset"],
            d=self.raw["d"],
            nu_scale=self.raw["nu_scale"],
            sigma_value=self.raw["sigma_value"],
            c=self.raw["c"],
        )
        if self.raw["alpha"] is not None:
            from dataclasses import replace

            co = replace(co, alpha=float(self.raw["alpha"]))
        return co

    def reg(self):
        return RegularizationSpec(eps0=self.raw["eps0"])

    def grid(self):
        return SphereGridS1(self.raw["kinetic"]["n_theta"])

    def spatial(self):
        k = self.raw["kinetic"]
        if k["n_x"] <= 0:
            return None
        return SpatialGrid1D(n_x=k["n_x"], L=k["L"])

    def initial_spec(self):
        init = self.raw["initial"]
        mean = init["mean_direction"]
        return InitialSpec(
            orientation=init["orientation"],
            kappa=init["kappa"],
            mean_direction=tuple(mean) if mean is not None else None,
            space=init["space"],
            x0=init["x0"],
            std=init["std"],
        )

    def kinetic_initial(self):
        """KineticState matching the initial law, with unit mass."""
        init = self.raw["initial"]
        grid = self.grid()
        spatial = self.spatial()
        if init["orientation"] == "uniform" or init["kappa"] == 0.0:
            f_theta = np.full(grid.n_theta, 1.0 / (2.0 * np.pi))
        else:
            mean = init["mean_direction"] or (1.0, 0.0)
            f_theta = vonmises_values(grid, init["kappa"], mean)
        if init["perturbation"] != 0.0:
            f_theta = f_theta * (
                1.0 + init["perturbation"] * np.cos(2.0 * grid.theta)
            )
            f_theta /= f_theta @ grid.weights
        if spatial is None:
            return KineticState(grid=grid, f=f_theta)
        if init["space_profile"] == "cosine":
            prof = 1.0 + 0.5 * np.cos(2.0 * np.pi * spatial.x / spatial.L)
        else:
            prof = np.ones(spatial.n_x)
        prof = prof / (prof.sum() * spatial.dx)
        return KineticState(
            grid=grid, f=np.outer(prof, f_theta), spatial=spatial
        )

    def sim_config(self, variant=None):
        p = self.raw["particles"]
        return SimConfig(
            dt=p["dt"], T=p["T"], scheme=p["scheme"], d=self.raw["d"],
            domain=p["domain"], seed=self.raw["seed"],
            variant=variant or p["variant"], renormalize=p["renormalize"],
            snapshot_stride=p["snapshot_stride"],
        )


def resolve_config(data):
    """Validate a raw dict against the schema and fill defaults."""
    cfg = _check(data, DEFAULTS, "")
    return ExperimentConfig(raw=_validate_ranges(cfg))


def parse_config(path):
    """Load, validate, and resolve a JSON configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh, object_pairs_hook=_reject_duplicates)
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("top-level configuration must be a JSON object")
    return resolve_config(data)
