"""JSON experiment configuration: validation, normalisation, hashing and assembly.

A configuration is one JSON document::

    {
      "grid": {"d": 1, "P": 64, "L": 1.0},
      "manifold": {"preset": "sphere:3"},            # or {"file": "spec.json"}
      "coefficients": {"presets": [{"name": "linear_damping", "gamma": 0.5}],
                       "mollify": true},             # or {"file": "table.json"}
      "noise": {"preset": "ring8", "wavenumber": 6.28},   # or {"file": ...} or null
      "scheme": {"type": "penalized", "m": 100.0},   # or {"type": "projected"}
      "time": {"dt": 0.004, "horizon": 1.0, "stride": 1},
      "initial": {"preset": "tangent_pulse", "amplitude": 1.0},
      "diagnostics": {"names": ["energy", "momentum"]},
      "seed": 0,
      "ensemble": 1
    }

Missing blocks take the defaults of :data:`DEFAULTS`.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import coefficients as co
from . import manifold as mf
from . import noise as nz
from . import solver as sv
from .grid import Grid

__all__ = ["ConfigError", "StiffnessConfigError", "ExperimentConfig", "load_config", "normalize", "config_hash", "BUILTIN_PRESETS",
           "INITIAL_PRESETS", "DEFAULTS"]


class ConfigError(ValueError):
    """Validation failure, tagged with the offending key path (``time.dt``)."""

    numerical = False

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class StiffnessConfigError(ConfigError):
    """Time step too large for the penalty; reported as a numerical failure."""

    numerical = True


DEFAULTS = {
    "grid": {"d": 1, "P": 64, "L": 1.0},
    "manifold": {"preset": "sphere:3"},
    "coefficients": {"presets": [], "mollify": True},
    "noise": None,
    "scheme": {"type": "penalized", "m": 0.0, "projection": "momentum"},
    "time": {"dt": None, "horizon": 1.0, "stride": 1},
    "initial": {"preset": "great_circle"},
    "diagnostics": {"names": ["energy", "momentum", "constraint"]},
    "seed": 0,
    "ensemble": 1,
    "finite_propagation": False,
}

INITIAL_PRESETS = ("great_circle", "standing_wave", "tangent_pulse", "random_tangent_field", "bump_pulse")
DIAGNOSTICS = ("energy", "momentum", "constraint", "reconstruction", "weak_residual", "local_energy")
SEMANTIC_IGNORED = ("description",)

BUILTIN_PRESETS = {
    "geodesic-s2": {
        "description": "space-constant great circle on S^2, projected scheme",
        "grid": {"d": 1, "P": 16, "L": 1.0},
        "manifold": {"preset": "sphere:3"},
        "scheme": {"type": "projected"},
        "time": {"dt": 0.01, "horizon": 10.0, "stride": 10},
        "initial": {"preset": "great_circle", "omega": 1.0},
        "diagnostics": {"names": ["momentum", "constraint", "energy", "reconstruction"]},
    },
    "standing-wave": {
        "description": "free scalar standing wave cos(2 pi t) cos(2 pi x)",
        "grid": {"d": 1, "P": 32, "L": 1.0},
        "manifold": {"preset": "none", "ambient_dim": 1},
        "scheme": {"type": "penalized", "m": 0.0},
        "time": {"dt": 0.0078125, "horizon": 0.25, "stride": 1},
        "initial": {"preset": "standing_wave"},
        "diagnostics": {"names": ["energy"]},
    },
    "sphere-pulse": {
        "description": "tangent pulse on S^2 with normal additive noise, penalised",
        "grid": {"d": 1, "P": 64, "L": 1.0},
        "manifold": {"preset": "sphere:3"},
        "coefficients": {"presets": [{"name": "constant_field", "noise_vector": [1.0, 0.0, 0.0]}]},
        "noise": {"preset": "zero_mode"},
        "scheme": {"type": "penalized", "m": 1000.0},
        "time": {"dt": 0.0005, "horizon": 1.0, "stride": 5},
        "initial": {"preset": "tangent_pulse", "amplitude": 1.0, "twist": 0.5},
        "diagnostics": {"names": ["constraint", "energy"]},
        "ensemble": 16,
        "seed": 1,
    },
    "damped-multiplicative": {
        "description": "damping plus velocity-proportional noise on S^2",
        "grid": {"d": 1, "P": 64, "L": 8.0},
        "manifold": {"preset": "sphere:3"},
        "coefficients": {"presets": [{"name": "linear_damping", "gamma": 0.25},
                                     {"name": "multiplicative_noise", "sigma": 3.0}]},
        "noise": {"preset": "ring8", "wavenumber": 1.5707963267948966},
        "scheme": {"type": "penalized", "m": 100.0},
        "time": {"dt": 0.03125, "horizon": 3.0, "stride": 4},
        "initial": {"preset": "tangent_pulse", "amplitude": 1.0, "twist": 0.5, "width": 3.5},
        "diagnostics": {"names": ["energy", "local_energy"], "window": {"center": [4.0], "horizon": 3.0}},
        "ensemble": 64,
    },
}


def _merge(base, override):
    if not isinstance(base, dict) or not isinstance(override, dict):
        return copy.deepcopy(override)
    out = copy.deepcopy(base)
    for k, v in override.items():
        out[k] = _merge(out[k], v) if k in out and isinstance(out[k], dict) and isinstance(v, dict) else copy.deepcopy(v)
    return out


def _num(doc, key, path, positive=False, nonneg=False, integer=False):
    val = doc.get(key)
    full = key if path == "$" else f"{path}.{key}"
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(full, f"expected a number, got {val!r}")
    if integer:
        if int(val) != val:
            raise ConfigError(full, f"expected an integer, got {val!r}")
        val = int(val)
    else:
        val = float(val)
    if not np.isfinite(val):
        raise ConfigError(full, "must be finite")
    if positive and not val > 0:
        raise ConfigError(full, f"must be positive, got {val}")
    if nonneg and val < 0:
        raise ConfigError(full, f"must be non-negative, got {val}")
    return val


def normalize(doc: dict) -> dict:
    """Fill defaults, coerce numbers and validate; raises :class:`ConfigError`."""
    if isinstance(doc, str):
        if doc not in BUILTIN_PRESETS:
            raise ConfigError("preset", f"unknown built-in preset {doc!r}")
        doc = BUILTIN_PRESETS[doc]
    if not isinstance(doc, dict):
        raise ConfigError("$", "configuration must be a JSON object")
    unknown = set(doc) - set(DEFAULTS) - set(SEMANTIC_IGNORED)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    cfg = _merge(DEFAULTS, doc)
    g = cfg["grid"]
    g["d"] = _num(g, "d", "grid", integer=True)
    if g["d"] not in (1, 2, 3):
        raise ConfigError("grid.d", "spatial dimension must be 1, 2 or 3")
    g["P"] = _num(g, "P", "grid", integer=True)
    if g["P"] < 8:
        raise ConfigError("grid.P", "need at least 8 points per axis")
    g["L"] = _num(g, "L", "grid", positive=True)
    h = g["L"] / g["P"]

    man = cfg["manifold"]
    if "file" in man:
        if not Path(man["file"]).exists():
            raise ConfigError("manifold.file", f"no such file {man['file']!r}")
    else:
        pre = man.get("preset")
        if pre == "none":
            man["ambient_dim"] = _num(man, "ambient_dim", "manifold", integer=True, positive=True)
        elif not (isinstance(pre, str) and pre.startswith("sphere:") and pre[7:].isdigit() and int(pre[7:]) >= 2):
            raise ConfigError("manifold.preset", f"expected 'sphere:n' with n >= 2 or 'none', got {pre!r}")

    sch = cfg["scheme"]
    if sch.get("type") not in ("penalized", "projected"):
        raise ConfigError("scheme.type", f"expected 'penalized' or 'projected', got {sch.get('type')!r}")
    sch["m"] = 0.0 if sch["type"] == "projected" else _num(sch, "m", "scheme", nonneg=True)
    if sch.get("projection", "momentum") not in ("momentum", "tangent"):
        raise ConfigError("scheme.projection", "expected 'momentum' or 'tangent'")
    if sch["type"] == "projected" and man.get("preset") == "none":
        raise ConfigError("scheme.type", "the projected scheme needs a manifold")
    if sch["m"] > 0 and man.get("preset") == "none":
        raise ConfigError("scheme.m", "a penalty needs a manifold")

    tm = cfg["time"]
    if tm.get("dt") is None:
        tm["dt"] = 0.25 * h / np.sqrt(g["d"])
        if sch["m"] > 0:
            tm["dt"] = min(tm["dt"], 0.5 / np.sqrt(8.0 * sch["m"]))
    tm["dt"] = _num(tm, "dt", "time", positive=True)
    tm["horizon"] = _num(tm, "horizon", "time", positive=True)
    tm["stride"] = _num(tm, "stride", "time", integer=True, positive=True)
    cfl = 0.5 * h / np.sqrt(g["d"])
    if tm["dt"] > cfl * (1 + 1e-12):
        raise ConfigError("time.dt", f"dt = {tm['dt']:g} violates the CFL bound 0.5 h / sqrt(d) = {cfl:g}")
    if tm["dt"] * np.sqrt(8.0 * sch["m"]) > 1.0:
        raise StiffnessConfigError("time.dt", f"dt = {tm['dt']:g} too large for penalty m = {sch['m']:g}; "
                                     f"need dt <= {1 / np.sqrt(8 * sch['m']):g}")

    coef = cfg["coefficients"]
    if "file" in coef:
        if not Path(coef["file"]).exists():
            raise ConfigError("coefficients.file", f"no such file {coef['file']!r}")
    presets = coef.get("presets", [])
    if isinstance(coef.get("preset"), str):
        presets = [dict(coef.get("params", {}), name=coef.pop("preset"))]
        coef.pop("params", None)
    if not isinstance(presets, list):
        raise ConfigError("coefficients.presets", "expected a list")
    for j, p in enumerate(presets):
        if not isinstance(p, dict) or p.get("name") not in co.PRESETS:
            raise ConfigError(f"coefficients.presets[{j}].name", f"expected one of {co.PRESETS}")
        for k, v in p.items():
            if k != "name" and isinstance(v, (int, float)) and not isinstance(v, bool):
                p[k] = float(v)
    coef["presets"] = presets
    coef["mollify"] = bool(coef.get("mollify", True))
    if coef.get("level") is not None:
        coef["level"] = _num(coef, "level", "coefficients", positive=True)
        if coef["level"] < 1:
            raise ConfigError("coefficients.level", "mollification level must be >= 1")

    nzc = cfg["noise"]
    if nzc is not None:
        if "file" in nzc:
            if not Path(nzc["file"]).exists():
                raise ConfigError("noise.file", f"no such file {nzc['file']!r}")
        elif nzc.get("preset") not in nz.PRESET_MEASURES:
            raise ConfigError("noise.preset", f"expected one of {nz.PRESET_MEASURES}")
        for k in ("wavenumber", "mass"):
            if k in nzc:
                nzc[k] = _num(nzc, k, "noise", positive=True)
    has_diffusion = any(p["name"] in ("multiplicative_noise",) or (p["name"] == "constant_field" and p.get("noise_vector"))
                        for p in presets)
    if has_diffusion and nzc is None:
        raise ConfigError("noise", "diffusion coefficients need a noise block")

    ini = cfg["initial"]
    if ini.get("preset") not in INITIAL_PRESETS:
        raise ConfigError("initial.preset", f"expected one of {INITIAL_PRESETS}")
    for k, v in list(ini.items()):
        if k != "preset" and isinstance(v, (int, float)) and not isinstance(v, bool):
            ini[k] = float(v)

    diag = cfg["diagnostics"]
    names = diag.get("names", [])
    if isinstance(names, str):
        names = [n for n in names.split(",") if n]
    for j, nm in enumerate(names):
        if nm not in DIAGNOSTICS:
            raise ConfigError(f"diagnostics.names[{j}]", f"unknown diagnostic {nm!r}; choose from {DIAGNOSTICS}")
    diag["names"] = list(names)

    cfg["seed"] = _num(cfg, "seed", "$", integer=True, nonneg=True)
    cfg["ensemble"] = _num(cfg, "ensemble", "$", integer=True, positive=True)
    cfg["finite_propagation"] = bool(cfg["finite_propagation"])
    if cfg["finite_propagation"]:
        support = float(ini.get("radius", ini.get("width", 0.25 * g["L"])))
        if g["L"] < 2 * (support + tm["horizon"]):
            raise ConfigError("grid.L", f"box length {g['L']:g} < 2 (support + horizon) = "
                                        f"{2 * (support + tm['horizon']):g}; wrap-around would reach the window")
    return cfg


def config_hash(cfg: dict) -> str:
    """Git-style SHA-1 of the canonical normalised document."""
    sem = {k: v for k, v in normalize(cfg).items() if k not in SEMANTIC_IGNORED}
    body = json.dumps(sem, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def load_config(source) -> "ExperimentConfig":
    """Path to a JSON file, a built-in preset name, or a dict."""
    if isinstance(source, dict):
        doc = source
    elif isinstance(source, str) and source in BUILTIN_PRESETS:
        doc = BUILTIN_PRESETS[source]
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError("--config", f"no such file or preset {str(source)!r}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from exc
    return ExperimentConfig(normalize(doc))


@dataclass
class ExperimentConfig:
    """A validated configuration with builders for the run objects."""

    doc: dict

    @property
    def hash(self) -> str:
        return config_hash(self.doc)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return ExperimentConfig(normalize(_merge(self.doc, kw)))

    def grid(self) -> Grid:
        g = self.doc["grid"]
        return Grid(g["d"], g["P"], g["L"])

    def manifold(self):
        man = self.doc["manifold"]
        if "file" in man:
            return mf.load_spec(man["file"])
        if man["preset"] == "none":
            return None
        return mf.sphere(int(man["preset"][7:]))

    @property
    def ambient_dim(self) -> int:
        spec = self.manifold()
        return spec.ambient_dim if spec is not None else int(self.doc["manifold"]["ambient_dim"])

    def raw_coefficients(self):
        coef = self.doc["coefficients"]
        n, d = self.ambient_dim, self.doc["grid"]["d"]
        sets = [co.preset(p["name"], n, d, **{k: v for k, v in p.items() if k != "name"})
                for p in coef["presets"]]
        if "file" in coef:
            sets.append(co.load_tabulated(coef["file"], n, d))
        if not sets:
            return None
        return sets[0] if len(sets) == 1 else co.combine(*sets)

    def coefficients(self):
        cs = self.raw_coefficients()
        coef = self.doc["coefficients"]
        if cs is None or cs.is_zero or not coef["mollify"]:
            return cs
        level = coef.get("level") or max(1.0, self.doc["scheme"]["m"])
        return co.mollify(cs, level)

    def measure(self):
        nzc = self.doc["noise"]
        if nzc is None:
            return None
        if "file" in nzc:
            return nz.load_measure(nzc["file"])
        kw = {k: nzc[k] for k in ("wavenumber", "mass") if k in nzc}
        return nz.preset_measure(nzc["preset"], self.doc["grid"]["d"], **kw)

    def params(self) -> sv.StepParams:
        sch = self.doc["scheme"]
        return sv.StepParams(grid=self.grid(), dt=self.doc["time"]["dt"], penalty_strength=sch["m"],
                             scheme=sch["type"], coefficients=self.coefficients(), measure=self.measure(),
                             manifold=self.manifold(), seed=self.doc["seed"],
                             projection=sch.get("projection", "momentum"))

    @property
    def n_steps(self) -> int:
        tm = self.doc["time"]
        return int(round(tm["horizon"] / tm["dt"]))

    def initial_state(self, members=None) -> sv.State:
        ini = dict(self.doc["initial"])
        name = ini.pop("preset")
        grid, n = self.grid(), self.ambient_dim
        members = list(members) if members is not None else list(range(self.doc["ensemble"]))
        if name == "great_circle":
            st = sv.great_circle(grid, n=n, **ini)
        elif name == "standing_wave":
            if "mode" in ini:
                ini["mode"] = int(ini["mode"])
            st = sv.standing_wave(grid, n=n, **ini)
        elif name == "tangent_pulse":
            st = sv.tangent_pulse(grid, n=n, **ini)
        elif name == "bump_pulse":
            st = sv.bump_pulse(grid, n=n, **ini)
        else:
            seed = int(ini.pop("seed", self.doc["seed"]))
            states = [sv.random_tangent_field(grid, np.random.default_rng([seed, mb]), n=n, **ini) for mb in members]
            return sv.State(np.array([s.U for s in states]), np.array([s.V for s in states]))
        B = len(members)
        return sv.State(np.repeat(st.U[None], B, 0), np.repeat(st.V[None], B, 0))
