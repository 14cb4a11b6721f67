"""Run configuration: strict JSON schema with field-path error messages.

Unknown keys are rejected everywhere; silent typos in physics parameters are
the costliest failure mode this tool has.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .assembly import AssemblyOptions
from .excitation import GatedCW, ModulatedGaussian, PlaneWave, TwoTone


class ConfigError(ValueError):
    pass


def _check_keys(obj: dict, allowed: set, path: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}.{key}: required")
    return obj[key]


def _number(val, path: str, positive=False, nonneg=False) -> float:
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        raise ConfigError(f"{path}: must be a number")
    if positive and val <= 0:
        raise ConfigError(f"{path}: must be positive")
    if nonneg and val < 0:
        raise ConfigError(f"{path}: must be nonnegative")
    return float(val)


def _integer(val, path: str, lo=None, hi=None) -> int:
    if not isinstance(val, int) or isinstance(val, bool):
        raise ConfigError(f"{path}: must be an integer")
    if lo is not None and val < lo:
        raise ConfigError(f"{path}: must be >= {lo}")
    if hi is not None and val > hi:
        raise ConfigError(f"{path}: must be <= {hi}")
    return val


def _vector3(val, path: str):
    if (not isinstance(val, list) or len(val) != 3
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                       for x in val)):
        raise ConfigError(f"{path}: must be a list of 3 numbers")
    return [float(x) for x in val]


@dataclass
class SimulationConfig:
    mesh_path: str
    mesh_format: str
    materials: dict[int, tuple[float, float]]
    wave: PlaneWave
    dt: float | None
    gamma: float | None
    n_steps: int
    k: int = 6
    alpha: float = 0.3
    m_max: int = 100
    eps_pece: float = 1e-13
    eps_its: float = 1e-12
    temporal_order: int = 3
    warm_start: bool = True
    precondition_gram: bool = False
    assembly: AssemblyOptions = field(default_factory=AssemblyOptions)
    probes: list = field(default_factory=list)
    far_field_frequencies: list = field(default_factory=list)
    far_field_theta_deg: list = field(default_factory=list)
    far_field_phi_deg: float = 0.0
    probe_spectrum_frequencies: list = field(default_factory=list)
    output_dir: str = "out"
    use_cache: bool = True
    seed: int | None = None

    def resolve_dt(self) -> float:
        if self.dt is not None:
            return self.dt
        return 1.0 / (2.0 * self.gamma * self.wave.pulse.f_max)


def _parse_pulse(obj: dict, path: str):
    kind = _require(obj, "type", path)
    common = {"type"}
    if kind == "modulated_gaussian":
        _check_keys(obj, common | {"f0", "f_bw", "sigma", "t_p",
                                   "t_p_over_sigma"}, path)
        kwargs = {"f0": _number(_require(obj, "f0", path), f"{path}.f0",
                                positive=True)}
        if "f_bw" in obj:
            kwargs["f_bw"] = _number(obj["f_bw"], f"{path}.f_bw", positive=True)
        if "sigma" in obj:
            kwargs["sigma"] = _number(obj["sigma"], f"{path}.sigma", positive=True)
        if "f_bw" not in kwargs and "sigma" not in kwargs:
            raise ConfigError(f"{path}: needs f_bw or sigma")
        if "t_p" in obj:
            kwargs["t_p"] = _number(obj["t_p"], f"{path}.t_p", positive=True)
        if "t_p_over_sigma" in obj:
            kwargs["t_p_over_sigma"] = _number(obj["t_p_over_sigma"],
                                               f"{path}.t_p_over_sigma",
                                               positive=True)
        return ModulatedGaussian(**kwargs)
    if kind == "two_tone":
        _check_keys(obj, common | {"f1", "f2", "f_bw", "sigma", "t_p",
                                   "t_p_over_sigma"}, path)
        kwargs = {"f1": _number(_require(obj, "f1", path), f"{path}.f1",
                                positive=True),
                  "f2": _number(_require(obj, "f2", path), f"{path}.f2",
                                positive=True)}
        if "f_bw" in obj:
            kwargs["f_bw"] = _number(obj["f_bw"], f"{path}.f_bw", positive=True)
        if "sigma" in obj:
            kwargs["sigma"] = _number(obj["sigma"], f"{path}.sigma", positive=True)
        if "f_bw" not in kwargs and "sigma" not in kwargs:
            raise ConfigError(f"{path}: needs f_bw or sigma")
        if "t_p" in obj:
            kwargs["t_p"] = _number(obj["t_p"], f"{path}.t_p", positive=True)
        if "t_p_over_sigma" in obj:
            kwargs["t_p_over_sigma"] = _number(obj["t_p_over_sigma"],
                                               f"{path}.t_p_over_sigma",
                                               positive=True)
        return TwoTone(**kwargs)
    if kind == "gated_cw":
        _check_keys(obj, common | {"f0", "sigma", "t1", "t2"}, path)
        return GatedCW(
            f0=_number(_require(obj, "f0", path), f"{path}.f0", positive=True),
            sigma=_number(_require(obj, "sigma", path), f"{path}.sigma",
                          positive=True),
            t1=_number(_require(obj, "t1", path), f"{path}.t1", positive=True),
            t2=_number(_require(obj, "t2", path), f"{path}.t2", positive=True))
    raise ConfigError(f"{path}.type: unknown pulse type {kind!r}")


def parse_config_dict(raw: dict, base_dir: Path | None = None) -> SimulationConfig:
    top = {"mesh", "materials", "excitation", "time", "solver", "quadrature",
           "probes", "far_field", "probe_spectrum", "output", "seed"}
    _check_keys(raw, top, "config")

    mesh = _require(raw, "mesh", "config")
    _check_keys(mesh, {"path", "format"}, "mesh")
    mesh_path = _require(mesh, "path", "mesh")
    if not isinstance(mesh_path, str):
        raise ConfigError("mesh.path: must be a string")
    if base_dir is not None and not Path(mesh_path).is_absolute():
        mesh_path = str(base_dir / mesh_path)
    mesh_format = mesh.get("format", "native")
    if mesh_format not in ("native", "msh"):
        raise ConfigError("mesh.format: must be 'native' or 'msh'")

    mats_raw = _require(raw, "materials", "config")
    if not isinstance(mats_raw, dict) or not mats_raw:
        raise ConfigError("materials: must be a non-empty object")
    materials = {}
    for key, val in mats_raw.items():
        try:
            rid = int(key)
        except ValueError:
            raise ConfigError(f"materials.{key}: region id must be an integer")
        _check_keys(val, {"chi1", "chi3"}, f"materials.{key}")
        chi1 = _number(_require(val, "chi1", f"materials.{key}"),
                       f"materials.{key}.chi1", positive=True)
        chi3 = _number(val.get("chi3", 0.0), f"materials.{key}.chi3")
        materials[rid] = (chi1, chi3)

    exc = _require(raw, "excitation", "config")
    _check_keys(exc, {"amplitude", "polarization", "direction", "pulse"},
                "excitation")
    pulse = _parse_pulse(_require(exc, "pulse", "excitation"), "excitation.pulse")
    try:
        wave = PlaneWave(
            amplitude=_number(exc.get("amplitude", 1.0), "excitation.amplitude"),
            polarization=_vector3(exc.get("polarization", [1, 0, 0]),
                                  "excitation.polarization"),
            direction=_vector3(exc.get("direction", [0, 0, 1]),
                               "excitation.direction"),
            pulse=pulse)
    except ValueError as err:
        raise ConfigError(f"excitation: {err}") from None

    tim = _require(raw, "time", "config")
    _check_keys(tim, {"dt", "gamma", "n_steps"}, "time")
    dt = _number(tim["dt"], "time.dt", positive=True) if "dt" in tim else None
    gamma = _number(tim["gamma"], "time.gamma", positive=True) \
        if "gamma" in tim else None
    if (dt is None) == (gamma is None):
        raise ConfigError("time: exactly one of dt and gamma must be given")
    n_steps = _integer(_require(tim, "n_steps", "time"), "time.n_steps", lo=1)

    cfg = SimulationConfig(mesh_path=mesh_path, mesh_format=mesh_format,
                           materials=materials, wave=wave, dt=dt, gamma=gamma,
                           n_steps=n_steps)

    sol = raw.get("solver", {})
    _check_keys(sol, {"k", "alpha", "m_max", "eps_pece", "eps_its",
                      "temporal_order", "warm_start", "precondition_gram"},
                "solver")
    if "k" in sol:
        cfg.k = _integer(sol["k"], "solver.k", lo=1, hi=6)
    if "alpha" in sol:
        a = _number(sol["alpha"], "solver.alpha")
        if not 0.0 < a <= 1.0:
            raise ConfigError("solver.alpha: must be in (0, 1]")
        cfg.alpha = a
    if "m_max" in sol:
        cfg.m_max = _integer(sol["m_max"], "solver.m_max", lo=1)
    if "eps_pece" in sol:
        cfg.eps_pece = _number(sol["eps_pece"], "solver.eps_pece", positive=True)
    if "eps_its" in sol:
        cfg.eps_its = _number(sol["eps_its"], "solver.eps_its", positive=True)
    if "temporal_order" in sol:
        cfg.temporal_order = _integer(sol["temporal_order"],
                                      "solver.temporal_order", lo=3, hi=5)
    if "warm_start" in sol:
        if not isinstance(sol["warm_start"], bool):
            raise ConfigError("solver.warm_start: must be a boolean")
        cfg.warm_start = sol["warm_start"]
    if "precondition_gram" in sol:
        if not isinstance(sol["precondition_gram"], bool):
            raise ConfigError("solver.precondition_gram: must be a boolean")
        cfg.precondition_gram = sol["precondition_gram"]

    quad = raw.get("quadrature", {})
    _check_keys(quad, {"far_order", "near_order", "surface_order",
                       "radial_points", "singular_tri_order", "near_levels"},
                "quadrature")
    opts = AssemblyOptions()
    for name in ("far_order", "near_order", "surface_order", "radial_points",
                 "singular_tri_order", "near_levels"):
        if name in quad:
            setattr(opts, name, _integer(quad[name], f"quadrature.{name}",
                                         lo=1, hi=10))
    cfg.assembly = opts

    for i, pr in enumerate(raw.get("probes", [])):
        cfg.probes.append(_vector3(pr, f"probes[{i}]"))

    ff = raw.get("far_field", {})
    _check_keys(ff, {"frequencies", "theta_deg", "phi_deg"}, "far_field")
    if ff:
        freqs = _require(ff, "frequencies", "far_field")
        cfg.far_field_frequencies = [
            _number(f, f"far_field.frequencies[{i}]", positive=True)
            for i, f in enumerate(freqs)]
        thetas = _require(ff, "theta_deg", "far_field")
        cfg.far_field_theta_deg = [
            _number(t, f"far_field.theta_deg[{i}]") for i, t in enumerate(thetas)]
        cfg.far_field_phi_deg = _number(ff.get("phi_deg", 0.0),
                                        "far_field.phi_deg")

    ps = raw.get("probe_spectrum", {})
    _check_keys(ps, {"frequencies"}, "probe_spectrum")
    if ps:
        cfg.probe_spectrum_frequencies = [
            _number(f, f"probe_spectrum.frequencies[{i}]", positive=True)
            for i, f in enumerate(_require(ps, "frequencies", "probe_spectrum"))]

    out = raw.get("output", {})
    _check_keys(out, {"directory", "use_cache"}, "output")
    if "directory" in out:
        if not isinstance(out["directory"], str):
            raise ConfigError("output.directory: must be a string")
        cfg.output_dir = out["directory"]
    if "use_cache" in out:
        if not isinstance(out["use_cache"], bool):
            raise ConfigError("output.use_cache: must be a boolean")
        cfg.use_cache = out["use_cache"]

    if "seed" in raw:
        cfg.seed = _integer(raw["seed"], "seed")
    return cfg


def parse_config(path) -> SimulationConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config_dict(raw, base_dir=path.parent)
