"""Command-line interface.

Subcommands:

* ``run <config.json>``      execute a configured simulation
* ``validate <config.json>`` parse and validate without running
* ``mie --radius --epsr --freq --out``  reference sphere RCS cut
* ``convergence <config.json> --densities a.mesh,b.mesh,c.mesh[,...]``
  rerun the configured scenario over mesh files of increasing density
  (last = reference) and write the error study

Exit codes: 0 success, 2 configuration error, 3 runtime (solver) failure.
"""

from __future__ import annotations

import argparse
import os
import sys


def _set_threads(argv):
    # must happen before numpy is imported anywhere in the package
    if "--threads" in argv:
        idx = argv.index("--threads")
        if idx + 1 < len(argv):
            n = argv[idx + 1]
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                        "MKL_NUM_THREADS"):
                os.environ[var] = str(n)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _set_threads(argv)

    parser = argparse.ArgumentParser(
        prog="tdvie",
        description="Transient scattering from Kerr-nonlinear dielectrics "
                    "(volume-integral-equation time marching)")
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS thread cap (results are reduction-order "
                             "deterministic at any setting)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a simulation")
    p_run.add_argument("config")
    p_run.add_argument("--no-cache", action="store_true",
                       help="ignore and do not write the operator cache")

    p_val = sub.add_parser("validate", help="validate a configuration file")
    p_val.add_argument("config")

    p_mie = sub.add_parser("mie", help="reference sphere RCS (series solution)")
    p_mie.add_argument("--radius", type=float, required=True)
    p_mie.add_argument("--epsr", type=float, required=True)
    p_mie.add_argument("--freq", type=float, required=True)
    p_mie.add_argument("--out", required=True)
    p_mie.add_argument("--theta-step", type=float, default=1.0)

    p_conv = sub.add_parser("convergence",
                            help="mesh-refinement error study")
    p_conv.add_argument("config")
    p_conv.add_argument("--densities", required=True,
                        help="comma-separated mesh files, coarsest first; "
                             "the last is the reference")
    p_conv.add_argument("--no-cache", action="store_true")

    args = parser.parse_args(argv)

    from .config import ConfigError

    try:
        if args.command == "validate":
            from .config import parse_config
            parse_config(args.config)
            print(f"{args.config}: OK")
            return 0
        if args.command == "mie":
            return _cmd_mie(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "convergence":
            return _cmd_convergence(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # solver/runtime failures with phase context
        print(f"error: {err}", file=sys.stderr)
        return 3
    return 0


def _cmd_run(args) -> int:
    import json

    from .config import parse_config
    from .runner import run

    cfg = parse_config(args.config)
    if args.no_cache:
        cfg.use_cache = False
    echo = json.loads(open(args.config).read())
    art = run(cfg, echo=echo)
    print(f"wrote {len(art.files) + 1} files to {art.out_dir}")
    return 0


def _cmd_mie(args) -> int:
    import numpy as np

    from .postproc import mie_rcs, write_csv

    theta = np.arange(0.0, 180.0 + 0.5 * args.theta_step, args.theta_step)
    sigma = mie_rcs(args.radius, args.epsr, args.freq, np.radians(theta))
    write_csv(args.out, ["theta_deg", "sigma_m2"], [theta, sigma])
    print(f"wrote {args.out}")
    return 0


def _cmd_convergence(args) -> int:
    import numpy as np

    from .config import parse_config
    from .mesh import load_mesh, mesh_stats
    from .postproc import write_csv
    from .runner import run

    cfg = parse_config(args.config)
    if args.no_cache:
        cfg.use_cache = False
    mesh_files = [s for s in args.densities.split(",") if s]
    if len(mesh_files) < 2:
        raise SystemExit("need at least two mesh files (last is reference)")

    fields = []
    l_avs = []
    base_out = cfg.output_dir
    for i, mf in enumerate(mesh_files):
        cfg_i = parse_config(args.config)
        if args.no_cache:
            cfg_i.use_cache = False
        cfg_i.mesh_path = mf
        cfg_i.output_dir = str(base_out) + f"/density_{i}"
        art = run(cfg_i)
        l_avs.append(mesh_stats(load_mesh(mf, cfg.mesh_format))["l_av"])
        spectra = art.result.spectra
        theta = np.radians(np.array(cfg.far_field_theta_deg))
        phi = np.radians(cfg.far_field_phi_deg)
        from .basis import build_bases
        from .mesh import enumerate_faces
        mesh = load_mesh(mf, cfg.mesh_format)
        basis = build_bases(mesh, enumerate_faces(mesh))
        from .postproc import far_field_from_spectra
        ff = np.array([[far_field_from_spectra(spectra["E"][kf],
                                               spectra["D"][kf],
                                               basis, f, th, phi)
                        for th in theta]
                       for kf, f in enumerate(spectra["frequencies"])])
        fields.append(ff)

    from .postproc import convergence_err
    errs = convergence_err(fields[:-1], fields[-1])
    out = f"{base_out}/convergence.csv"
    write_csv(out, ["l_av", "err"], [np.array(l_avs[:-1]), errs])
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
