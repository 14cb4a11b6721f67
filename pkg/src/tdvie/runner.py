"""Configuration-driven pipeline: assemble, march, post-process, write files.

Outputs land in the config's output directory:

* ``probe_<i>.csv``       time series (t, Ex, Ey, Ez, Dx, Dy, Dz) per probe
* ``probe_<i>_spectrum.csv``  probe spectra (f, magnitude, phase per component)
* ``rcs_f<k>.csv``        bistatic cuts (theta_deg, sigma_m2) per frequency
* ``diagnostics.csv``     per-step corrector counts, solver iterations, norms
* ``run-manifest.json``   config echo, version, phase timings, output hashes

Reruns of an identical configuration produce byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import (AssemblyOptions, assemble_Z, cache_key, load_operator,
                       save_operator)
from .basis import assemble_gram_EE, build_bases
from .config import SimulationConfig
from .constitutive import MaterialMap, MaterialOps
from .excitation import IncidentAssembler
from .marching import (MarchConfig, ProbeRecorder, SpectrumRecorder, run_mot)
from .mesh import enumerate_faces, load_mesh
from .postproc import dft, far_field_from_spectra, rcs, write_csv
from .temporal import TemporalBasis


class RunArtifacts:
    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: list[Path] = []
        self.result = None
        self.manifest = None

    def add(self, path: Path):
        self.files.append(path)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def run(cfg: SimulationConfig, echo: dict | None = None) -> RunArtifacts:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    art = RunArtifacts(out_dir)
    timings = {}

    t0 = time.perf_counter()
    mesh = load_mesh(cfg.mesh_path, cfg.mesh_format)
    faces = enumerate_faces(mesh)
    basis = build_bases(mesh, faces)
    gram = assemble_gram_EE(basis)
    materials = MaterialMap(cfg.materials)
    mat_ops = MaterialOps(basis, materials)

    dt = cfg.resolve_dt()
    temporal = TemporalBasis(dt, cfg.temporal_order)

    op = None
    if cfg.use_cache:
        key = cache_key(mesh, dt, cfg.temporal_order, cfg.assembly)
        cache_dir = Path(os.environ.get("TDVIE_CACHE_DIR", out_dir / "cache"))
        cache_file = cache_dir / f"operator-{key[:24]}.bin"
        if cache_file.is_file():
            try:
                op = load_operator(cache_file, key)
            except ValueError:
                op = None
    if op is None:
        op = assemble_Z(basis, temporal, cfg.assembly)
        if cfg.use_cache:
            cache_dir.mkdir(parents=True, exist_ok=True)
            save_operator(op, cache_file, key)
    timings["assembly_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    vinc = IncidentAssembler(cfg.wave, basis)
    march_cfg = MarchConfig(dt=dt, n_steps=cfg.n_steps, k=cfg.k,
                            alpha=cfg.alpha, m_max=cfg.m_max,
                            eps_pece=cfg.eps_pece, eps_its=cfg.eps_its,
                            warm_start=cfg.warm_start,
                            precondition_gram=cfg.precondition_gram)
    probe_rec = ProbeRecorder(basis, cfg.probes) if cfg.probes else None
    spec_freqs = sorted(set(cfg.far_field_frequencies))
    spec_rec = SpectrumRecorder(spec_freqs, basis.num_e, basis.num_d, dt) \
        if spec_freqs else None
    result = run_mot(op, gram, mat_ops, vinc, march_cfg,
                     probe_recorder=probe_rec, spectrum_recorder=spec_rec)
    art.result = result
    timings["marching_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    times = dt * np.arange(1, cfg.n_steps + 1)

    diag = out_dir / "diagnostics.csv"
    write_csv(diag, ["step", "correctors", "solver_iterations", "norm_ie"],
              [np.array([d.step for d in result.diagnostics]),
               np.array([d.correctors for d in result.diagnostics]),
               np.array([d.solver_iterations for d in result.diagnostics]),
               np.array([d.norm_ie for d in result.diagnostics])])
    art.add(diag)

    if probe_rec is not None:
        for i in range(len(cfg.probes)):
            e = result.probes["E"][i]
            d = result.probes["D"][i]
            path = out_dir / f"probe_{i}.csv"
            write_csv(path, ["t", "Ex", "Ey", "Ez", "Dx", "Dy", "Dz"],
                      [times, e[:, 0], e[:, 1], e[:, 2],
                       d[:, 0], d[:, 1], d[:, 2]])
            art.add(path)
            if cfg.probe_spectrum_frequencies:
                freqs = np.array(cfg.probe_spectrum_frequencies)
                with_zero_e = np.vstack([np.zeros(3), e])
                with_zero_d = np.vstack([np.zeros(3), d])
                cols = [freqs]
                header = ["f"]
                for name, series in (("E", with_zero_e), ("D", with_zero_d)):
                    for cidx, comp in enumerate("xyz"):
                        amp = np.array([dft(series[:, cidx], f, dt)
                                        for f in freqs])
                        cols += [np.abs(amp), np.angle(amp)]
                        header += [f"abs_{name}{comp}", f"arg_{name}{comp}"]
                path = out_dir / f"probe_{i}_spectrum.csv"
                write_csv(path, header, cols)
                art.add(path)

    if spec_rec is not None and cfg.far_field_theta_deg:
        pulse_samples = cfg.wave.amplitude * np.array(
            [cfg.wave.pulse(j * dt) for j in range(cfg.n_steps + 1)])
        theta = np.radians(np.array(cfg.far_field_theta_deg))
        phi = np.radians(cfg.far_field_phi_deg)
        for kf, f in enumerate(spec_freqs):
            einc = dft(pulse_samples, f, dt)
            sigma = np.array([
                rcs(far_field_from_spectra(result.spectra["E"][kf],
                                           result.spectra["D"][kf],
                                           basis, f, th, phi), einc)
                for th in theta])
            path = out_dir / f"rcs_f{kf}.csv"
            write_csv(path, ["theta_deg", "sigma_m2"],
                      [np.array(cfg.far_field_theta_deg), sigma])
            art.add(path)
    timings["postproc_s"] = time.perf_counter() - t0

    manifest = {
        "version": __version__,
        "config": echo if echo is not None else _config_echo(cfg),
        "dt": dt,
        "mesh": {"nodes": mesh.num_nodes, "tets": mesh.num_tets,
                 "faces": faces.num_faces, "boundary_faces": faces.num_boundary,
                 "n_e": basis.num_e},
        "operator": {"l_max": op.l_max, "nnz": op.nnz()},
        "timings": timings,
        "outputs": [{"path": p.name, "sha256": _sha256(p)} for p in art.files],
    }
    mpath = out_dir / "run-manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    art.manifest = manifest
    return art


def _config_echo(cfg: SimulationConfig) -> dict:
    echo = {
        "mesh": {"path": cfg.mesh_path, "format": cfg.mesh_format},
        "materials": {str(k): {"chi1": v[0], "chi3": v[1]}
                      for k, v in sorted(cfg.materials.items())},
        "excitation": {
            "amplitude": cfg.wave.amplitude,
            "polarization": list(cfg.wave.polarization),
            "direction": list(cfg.wave.direction),
            "pulse": repr(cfg.wave.pulse),
        },
        "time": {"dt": cfg.dt, "gamma": cfg.gamma, "n_steps": cfg.n_steps},
        "solver": {"k": cfg.k, "alpha": cfg.alpha, "m_max": cfg.m_max,
                   "eps_pece": cfg.eps_pece, "eps_its": cfg.eps_its,
                   "temporal_order": cfg.temporal_order,
                   "warm_start": cfg.warm_start,
                   "precondition_gram": cfg.precondition_gram},
    }
    return echo
