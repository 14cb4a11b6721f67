"""Transient scattering from Kerr-nonlinear dielectric bodies.

A volume-integral-equation solver: the total field and flux inside the
scatterer are expanded in half/full SWG functions on a tetrahedral mesh, the
retarded-field relation is marched explicitly in time with a
predictor-corrector scheme, and the nonlinear constitutive pair is enforced
each step through sparse overlap-matrix solves.

Submodules are imported lazily so the CLI can pin thread environment
variables before numpy loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "assembly", "basis", "cli", "config", "constants", "constitutive",
    "excitation", "geometry", "linalg", "marching", "mesh", "postproc",
    "quadrature", "runner", "temporal",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib
        module = importlib.import_module(f".{name}", __name__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
