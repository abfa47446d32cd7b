"""Run configuration: a strict INI schema, built-in presets and builders
that turn a resolved configuration into library objects.

A resolved configuration is a plain ``{section: {key: value}}`` dict with
every default filled in; it is what run manifests record and what
``--from-manifest`` reads back.
"""

from __future__ import annotations

import configparser
import copy
import math

import numpy as np

from .action import OptimizerSettings
from .dynamics import DynamicsConfig, DynamicsKind
from .errors import ConfigError
from .experiments import RunSpec, SweepKind, SweepSpec
from .landscape import CovarianceModel, Domain, Landscape, compensated_radius


def _float(text):
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(text):
    if isinstance(text, str):
        text = text.strip()
    v = int(text)
    return v


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [_float(v) for v in text]
    parts = str(text).replace(",", " ").split()
    return [_float(p) for p in parts]


def _opt(parser):
    def parse(text):
        if text is None or (isinstance(text, str) and text.strip().lower() in ("", "none")):
            return None
        return parser(text)
    return parse


def _choice(*options):
    def parse(text):
        t = str(text).strip().lower()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t
    return parse


def _seed(text):
    v = _int(text)
    if not 0 <= v <= 2**64 - 1:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


# section -> key -> (parser, default)
SCHEMA = {
    "landscape": {
        "dim": (_opt(_int), None),
        "hessian": (_opt(_floats), None),
        "diag": (_opt(_floats), None),
        "minimizer": (_opt(_floats), None),
        "min_value": (_float, 0.0),
        "alpha": (_float, 1.0),
        "beta": (_float, 1.0),
        "covariance": (_choice("hessian", "identity"), "hessian"),
        "radius": (_float, 1.0),
        "compensate_radius": (_bool, True),
    },
    "dynamics": {
        "dynamics": (_choice(*(k.value for k in DynamicsKind)), "discrete_sgd"),
        "eta": (_float, 0.05),
        "batch": (_float, 1.0),
        "dt": (_opt(_float), None),
        "horizon_steps": (_int, 1000),
        "initial": (_opt(_floats), None),
    },
    "trials": {
        "n_trials": (_int, 1000),
        "max_steps": (_int, 1_000_000),
        "seed": (_seed, 0),
    },
    "action": {
        "path_nodes": (_int, 256),
        "t_grid": (_opt(_floats), None),
        "metric_exponent": (_float, 0.5),
        "opt_max_iters": (_int, 500),
        "opt_tol": (_float, 1e-10),
    },
    "sweep": {
        "sweep": (_choice(*(k.value for k in SweepKind)), "alpha"),
        "grid": (_floats, [1.0, 2.0, 4.0, 8.0]),
        "regime_target": (_opt(_floats), [2.0, 8.0]),
    },
    "discretization": {
        "eta_grid": (_floats, [0.0125, 0.025, 0.05, 0.1]),
        "ref_factor": (_int, 64),
        "epsilon": (_opt(_float), None),
    },
    "hjcheck": {
        "field": (_choice("analytic", "zero", "loss"), "analytic"),
        "n_points": (_int, 100),
    },
    "validate": {
        "n_samples": (_int, 64),
    },
    "run": {
        "output_dir": (str, "out"),
        "emit_plots": (_bool, False),
    },
}


def defaults() -> dict:
    return {sec: {k: copy.deepcopy(d) for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


def _apply(config: dict, section: str, key: str, raw):
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key '{key}' in section [{section}]")
    parser = SCHEMA[section][key][0]
    try:
        config[section][key] = parser(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for '{key}' in [{section}]: {exc}") from None


def merge_ini(config: dict, text: str, source: str = "<config>") -> dict:
    """Overlay INI ``text`` onto ``config``; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, default_section="\0none")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from None
    out = copy.deepcopy(config)
    for section in cp.sections():
        for key, raw in cp.items(section):
            _apply(out, section, key, raw)
    return out


def merge_dict(config: dict, values: dict) -> dict:
    """Overlay an already-typed ``{section: {key: value}}`` mapping (manifests)."""
    if not isinstance(values, dict):
        raise ConfigError("config must be a mapping of sections")
    out = copy.deepcopy(config)
    for section, keys in values.items():
        if not isinstance(keys, dict):
            raise ConfigError(f"section [{section}] must be a mapping")
        for key, raw in keys.items():
            if raw is None:
                if section in SCHEMA and key in SCHEMA[section]:
                    out[section][key] = None
                    continue
            _apply(out, section, key, raw)
    return out


PRESETS = {
    "dynkin1d": """
[landscape]
diag = 0.1
covariance = identity
radius = 1.2
[dynamics]
dynamics = proxy
eta = 0.25
dt = 0.001
[trials]
n_trials = 100000
max_steps = 100000000
""",
    "start_outside": """
[landscape]
diag = 1.0
radius = 1.0
[dynamics]
dynamics = proxy
eta = 0.25
dt = 0.001
initial = 2.0
[trials]
n_trials = 100
max_steps = 1000
""",
    "proxy1d": """
[landscape]
diag = 2.0
radius = 1.0
[dynamics]
dynamics = proxy
""",
    "isotropic_sgd": """
[landscape]
diag = 2.0
radius = 1.0
[dynamics]
dynamics = continuous_sgd
""",
    "isotropic2d": """
[landscape]
diag = 1.0, 1.0
radius = 1.0
[dynamics]
dynamics = continuous_sgd
""",
    "alpha_sweep": """
[landscape]
diag = 1.0
radius = 0.3
[dynamics]
dynamics = discrete_sgd
eta = 0.05
[trials]
n_trials = 2000
max_steps = 10000000
[sweep]
sweep = alpha
grid = 1, 2, 4, 8
""",
    "eta_sweep": """
[landscape]
diag = 1.0
radius = 0.3
[dynamics]
dynamics = discrete_sgd
eta = 0.05
[trials]
n_trials = 2000
max_steps = 10000000
[sweep]
sweep = eta
grid = 0.025, 0.035, 0.05, 0.07
""",
    "batch_sweep": """
[landscape]
diag = 1.0
radius = 0.3
[dynamics]
dynamics = discrete_sgd
eta = 0.05
[trials]
n_trials = 2000
max_steps = 10000000
[sweep]
sweep = batch
grid = 1, 1.5, 2, 2.5
""",
    "beta_sweep": """
[landscape]
diag = 1.0
radius = 0.3
[dynamics]
dynamics = discrete_sgd
eta = 0.05
[trials]
n_trials = 2000
max_steps = 10000000
[sweep]
sweep = beta
grid = 1, 1.5, 2, 2.5
""",
    "proxy_ref": """
[landscape]
diag = 1.0
radius = 0.3
[dynamics]
dynamics = proxy
eta = 0.05
[trials]
n_trials = 2000
max_steps = 10000000
[sweep]
sweep = alpha
grid = 1, 2, 4, 8
""",
    "discretization": """
[landscape]
diag = 1.0
radius = 0.158
[dynamics]
dynamics = discrete_sgd
eta = 0.0125
[trials]
n_trials = 20000
max_steps = 10000000
[discretization]
eta_grid = 0.0125, 0.025, 0.05, 0.1
""",
    "hj_analytic": """
[landscape]
diag = 2.0, 2.0
radius = 1.0
[hjcheck]
field = analytic
""",
    "hj_zero": """
[landscape]
diag = 2.0, 0.5
[hjcheck]
field = zero
""",
    "hj_wrong": """
[landscape]
diag = 2.0, 0.5
covariance = identity
[hjcheck]
field = loss
""",
    "validate": """
[landscape]
diag = 2.0, 0.5
radius = 1.0
""",
}


def preset(name: str) -> str:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset '{name}' (known: {', '.join(sorted(PRESETS))})") from None


def resolve(config: dict) -> dict:
    """Fill derived landscape fields and check cross-key consistency."""
    out = copy.deepcopy(config)
    ls = out["landscape"]
    if ls["hessian"] is not None and ls["diag"] is not None:
        raise ConfigError("give either 'hessian' or 'diag' in [landscape], not both")
    if ls["hessian"] is None and ls["diag"] is None:
        ls["diag"] = [1.0] * (ls["dim"] or 1)
    if ls["diag"] is not None:
        dim = len(ls["diag"])
    else:
        n = len(ls["hessian"])
        dim = math.isqrt(n)
        if dim * dim != n:
            raise ConfigError(f"'hessian' has {n} entries, not a square matrix")
    if ls["dim"] is not None and ls["dim"] != dim:
        raise ConfigError(f"'dim' = {ls['dim']} but the Hessian is {dim}x{dim}")
    ls["dim"] = dim
    if ls["minimizer"] is None:
        ls["minimizer"] = [0.0] * dim
    for key in ("minimizer",):
        if len(ls[key]) != dim:
            raise ConfigError(f"'{key}' has length {len(ls[key])}, expected {dim}")
    init = out["dynamics"]["initial"]
    if init is not None and len(init) != dim:
        raise ConfigError(f"'initial' has length {len(init)}, expected {dim}")
    for sec, key in (("trials", "n_trials"), ("trials", "max_steps"), ("dynamics", "horizon_steps"),
                     ("action", "path_nodes"), ("action", "opt_max_iters"),
                     ("hjcheck", "n_points"), ("validate", "n_samples"),
                     ("discretization", "ref_factor")):
        if out[sec][key] < 1:
            raise ConfigError(f"'{key}' in [{sec}] must be >= 1")
    rt = out["sweep"]["regime_target"]
    if rt is not None and len(rt) != 2:
        raise ConfigError("'regime_target' needs two numbers: lo, hi")
    return out


def _wrap(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_landscape(cfg: dict) -> Landscape:
    ls = cfg["landscape"]
    dim = ls["dim"]
    hess = np.diag(ls["diag"]) if ls["diag"] is not None else np.reshape(ls["hessian"], (dim, dim))
    return _wrap(Landscape, hess, ls["minimizer"], min_value=ls["min_value"],
                 sharpness_scale=ls["alpha"], depth_scale=ls["beta"],
                 covariance_model=CovarianceModel(ls["covariance"]))


def effective_radius(cfg: dict) -> float:
    ls = cfg["landscape"]
    return _wrap(compensated_radius, ls["radius"], ls["alpha"], ls["compensate_radius"])


def build_domain(cfg: dict, landscape: Landscape) -> Domain:
    return _wrap(Domain.around, landscape, effective_radius(cfg))


def build_dynamics(cfg: dict) -> DynamicsConfig:
    d = cfg["dynamics"]
    return _wrap(DynamicsConfig, DynamicsKind(d["dynamics"]), d["eta"], d["batch"], d["dt"])


def build_optimizer(cfg: dict) -> OptimizerSettings:
    a = cfg["action"]
    return OptimizerSettings(max_iters=a["opt_max_iters"], tol=a["opt_tol"])


def build_run_spec(cfg: dict) -> RunSpec:
    landscape = build_landscape(cfg)
    t = cfg["trials"]
    return _wrap(RunSpec, landscape, effective_radius(cfg), build_dynamics(cfg), t["n_trials"],
                 t["max_steps"], t["seed"], cfg["landscape"]["compensate_radius"])


def build_sweep_spec(cfg: dict) -> SweepSpec:
    s = cfg["sweep"]
    rt = tuple(s["regime_target"]) if s["regime_target"] is not None else None
    return _wrap(SweepSpec, SweepKind(s["sweep"]), tuple(s["grid"]), build_run_spec(cfg), rt)
