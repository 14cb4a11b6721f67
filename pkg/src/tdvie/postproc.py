"""Field probes, Fourier analysis, far fields, RCS, and the Mie oracle.

Fourier transforms are direct trapezoidal sums at the requested frequencies
(harmonics rarely align with FFT bins and runs are short). Far fields are
the distance-removed radiation pattern: the scattered field with the
``exp(-i k r) / r`` factor divided out, computed from the frequency-domain
polarization current ``J = i w (D - eps0 E)`` so that

    E_far(rhat) = (-i w mu0 / 4 pi) (I - rhat rhat^T) Int J(w, r') e^{i k rhat.r'} dv'.

RCS follows as ``4 pi |E_far|^2 / |E_inc(f)|^2`` with no limiting process.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np
from scipy.special import spherical_jn, spherical_yn

from .basis import BasisSet
from .constants import C0, EPS0, MU0
from .mesh import TetMesh
from .quadrature import gauss_tet

log = logging.getLogger(__name__)


def locate_point(mesh: TetMesh, r0, tol: float = 1e-9) -> tuple[int, np.ndarray]:
    """Containing tet and barycentric coordinates of a point (first match)."""
    r0 = np.asarray(r0, dtype=float)
    for t in range(mesh.num_tets):
        v = mesh.tet_nodes(t)
        try:
            lam = np.linalg.solve((v[1:] - v[0]).T, r0 - v[0])
        except np.linalg.LinAlgError:
            continue
        bary = np.concatenate([[1.0 - lam.sum()], lam])
        if (bary >= -tol).all():
            return t, bary
    raise ValueError(f"point {r0} lies outside the mesh")


def probe(ie_full: np.ndarray, id_full: np.ndarray, basis: BasisSet,
          r0, mesh: TetMesh | None = None) -> dict:
    """E and D time series at a fixed point from full coefficient history."""
    mesh = mesh or basis.mesh
    tet, _ = locate_point(mesh, r0)
    M = basis.values_for_tets(np.array([tet]),
                              np.asarray(r0, dtype=float)[None, None, :])[0, 0].T
    sl = slice(4 * tet, 4 * tet + 4)
    e_series = ie_full[:, sl] @ M.T
    pt = basis.P.T.tocsr()[sl, :]  # only this tet's rows of the mapping
    d_series = (pt @ id_full.T).T @ M.T
    return {"point": np.asarray(r0, dtype=float), "E": e_series, "D": d_series}


def dft(series: np.ndarray, f: float, dt: float) -> complex | np.ndarray:
    """Trapezoidal Fourier sum of uniformly sampled data at frequency f.

    ``series`` has time on axis 0; samples are at t = 0, dt, ..., N dt.
    """
    x = np.asarray(series)
    n = x.shape[0]
    nyquist = 0.5 / dt
    if f >= nyquist:
        raise ValueError(f"frequency {f} is at or above Nyquist {nyquist}")
    if f > 0.9 * nyquist:
        warnings.warn(f"frequency {f:.4g} exceeds 90% of Nyquist "
                      f"{nyquist:.4g}; expect aliasing error")
    phase = np.exp(-2j * np.pi * f * dt * np.arange(n)) * dt
    phase[0] *= 0.5
    phase[-1] *= 0.5
    out = np.tensordot(phase, x, axes=(0, 0))
    return complex(out) if np.ndim(out) == 0 else out


def coefficient_spectra(ie_full, id_full, freqs, dt):
    """DFT of the coefficient histories at each frequency."""
    e_hat = np.stack([dft(ie_full, f, dt) for f in freqs])
    d_hat = np.stack([dft(id_full, f, dt) for f in freqs])
    return e_hat, d_hat


def far_field_from_spectra(e_hat: np.ndarray, d_hat: np.ndarray,
                           basis: BasisSet, f: float, theta: float,
                           phi: float = 0.0, quad_order: int = 3) -> np.ndarray:
    """Distance-removed scattered far field at one frequency and direction.

    ``e_hat``/``d_hat`` are the coefficient spectra at frequency ``f``;
    ``theta``/``phi`` are in radians.
    """
    mesh = basis.mesh
    w = 2.0 * np.pi * f
    k = w / C0
    rhat = np.array([np.sin(theta) * np.cos(phi),
                     np.sin(theta) * np.sin(phi),
                     np.cos(theta)])
    rule = gauss_tet(quad_order)
    pts = np.einsum("qk,tkx->tqx", rule.points, mesh.nodes[mesh.tets])
    wq = rule.weights[None, :] * mesh.volumes[:, None]
    F = basis.values_in_tet(pts)                        # (T, nq, 4, 3)
    q = 1j * w * (basis.P.T @ d_hat - EPS0 * e_hat)     # current coefficients
    phase = np.exp(1j * k * (pts @ rhat)) * wq          # (T, nq)
    mom = np.einsum("tq,tqmx->tmx", phase, F).reshape(-1, 3)
    rad = mom.T @ q
    rad = rad - rhat * (rhat @ rad)
    return (-1j * w * MU0 / (4.0 * np.pi)) * rad


def far_field(ie_full, id_full, basis: BasisSet, f: float, theta: float,
              phi: float = 0.0, dt: float = None, quad_order: int = 3):
    """Far field from full coefficient histories (convenience wrapper)."""
    e_hat, d_hat = coefficient_spectra(ie_full, id_full, [f], dt)
    return far_field_from_spectra(e_hat[0], d_hat[0], basis, f, theta, phi,
                                  quad_order)


def rcs(e_far: np.ndarray, e_inc_amplitude: complex) -> float:
    """Bistatic radar cross section (m^2) from the distance-removed field."""
    if abs(e_inc_amplitude) == 0.0:
        raise ValueError("vanishing incident spectrum at this frequency")
    return float(4.0 * np.pi * np.vdot(e_far, e_far).real
                 / abs(e_inc_amplitude) ** 2)


def mie_rcs(radius: float, eps_r: float, f: float,
            theta: np.ndarray, max_terms: int = 200) -> np.ndarray:
    """Bistatic RCS of a homogeneous dielectric sphere on the phi=0 plane.

    The incident wave travels along +z with the electric field along x, so
    the phi=0 cut is the E-plane and the parallel scattering amplitude
    applies. Series terms are added until they fall below 1e-12 of the
    partial sums.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    k = 2.0 * np.pi * f / C0
    x = k * radius
    if x >= 50.0:
        raise ValueError("size parameter too large for the series guard (ka >= 50)")
    m = np.sqrt(eps_r)
    mu = np.cos(theta)

    def psi(n, z):
        return z * spherical_jn(n, z)

    def dpsi(n, z):
        return spherical_jn(n, z) + z * spherical_jn(n, z, derivative=True)

    def xi(n, z):
        return z * (spherical_jn(n, z) + 1j * spherical_yn(n, z))

    def dxi(n, z):
        return (spherical_jn(n, z) + 1j * spherical_yn(n, z)) + \
            z * (spherical_jn(n, z, derivative=True)
                 + 1j * spherical_yn(n, z, derivative=True))

    s2 = np.zeros_like(theta, dtype=complex)
    pi_prev = np.zeros_like(mu)   # pi_0
    pi_cur = np.ones_like(mu)     # pi_1
    for n in range(1, max_terms + 1):
        mx = m * x
        a_n = (m * psi(n, mx) * dpsi(n, x) - psi(n, x) * dpsi(n, mx)) / \
              (m * psi(n, mx) * dxi(n, x) - xi(n, x) * dpsi(n, mx))
        b_n = (psi(n, mx) * dpsi(n, x) - m * psi(n, x) * dpsi(n, mx)) / \
              (psi(n, mx) * dxi(n, x) - m * xi(n, x) * dpsi(n, mx))
        if n == 1:
            pi_n = pi_cur
        else:
            pi_n = ((2 * n - 1) / (n - 1)) * mu * pi_cur - (n / (n - 1)) * pi_prev
            pi_prev = pi_cur
            pi_cur = pi_n
        tau_n = n * mu * pi_n - (n + 1) * (pi_prev if n > 1 else np.zeros_like(mu))
        term = ((2 * n + 1) / (n * (n + 1))) * (a_n * tau_n + b_n * pi_n)
        s2 += term
        if n > 2 and np.max(np.abs(term)) <= 1e-12 * max(np.max(np.abs(s2)),
                                                         1e-300):
            break
    else:
        raise RuntimeError(f"Mie series did not converge in {max_terms} terms")
    return 4.0 * np.pi * np.abs(s2) ** 2 / k ** 2


def convergence_err(runs: list[np.ndarray], reference: np.ndarray) -> np.ndarray:
    """RMS far-field deviation from the reference, averaged over harmonics
    and angles; one value per run.

    Each entry of ``runs`` and ``reference`` has shape (n_harmonics,
    n_angles, 3) complex.
    """
    ref = np.asarray(reference)
    out = []
    for r in runs:
        r = np.asarray(r)
        if r.shape != ref.shape:
            raise ValueError("harmonic/angle grids do not match the reference")
        diff2 = np.abs(r - ref) ** 2
        out.append(np.sqrt(diff2.sum(axis=-1).mean()))
    return np.array(out)


def write_csv(path, header: list[str], columns: list[np.ndarray]) -> None:
    rows = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
