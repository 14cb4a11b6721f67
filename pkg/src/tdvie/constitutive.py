"""Kerr constitutive relation in discretized form.

The flux/field pair obeys D = eps0*(chi1 + chi3*|E|^2) E per material region;
its inverse is approximated by the rational map

    E = D / (eps0*chi1) * (eps0^2 chi1^3 + 2 chi3 |D|^2)
                        / (eps0^2 chi1^3 + 3 chi3 |D|^2),

which matches the exact inverse through second order in chi3*|D|^2. Both
relations are collocated at tet centers, giving diagonal material matrices
(one value per tet, broadcast to its four half functions).

Updates:

* field -> flux: solve (P G P^T) I_D = P G S_E I_E  (SPD sparse system)
* flux -> field: I_E = S_D P^T I_D                  (explicit)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSet
from .constants import EPS0
from .linalg import SolveResult, tfqmr_solve


class ConstitutiveRangeError(RuntimeError):
    """Flux magnitude left the validity branch of the rational inverse."""


@dataclass(frozen=True)
class MaterialMap:
    """Per-region Kerr coefficients: region id -> (chi1, chi3).

    chi1 is the relative permittivity at zero field (so vacuum is chi1 = 1);
    chi3 has units m^2/V^2 and may be negative.
    """

    regions: dict[int, tuple[float, float]]

    def __post_init__(self):
        for rid, (chi1, _) in self.regions.items():
            if chi1 <= 0:
                raise ValueError(f"region {rid}: chi1 must be positive")

    def per_tet(self, region_id: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        missing = set(np.unique(region_id)) - set(self.regions)
        if missing:
            raise ValueError(f"no material for region(s) {sorted(missing)}")
        chi1 = np.array([self.regions[r][0] for r in region_id])
        chi3 = np.array([self.regions[r][1] for r in region_id])
        return chi1, chi3

    def is_linear(self) -> bool:
        return all(c3 == 0.0 for _, c3 in self.regions.values())


class MaterialOps:
    """Cached plumbing for the constitutive updates on one basis set."""

    def __init__(self, basis: BasisSet, materials: MaterialMap):
        self.basis = basis
        self.materials = materials
        self.chi1, self.chi3 = materials.per_tet(basis.mesh.region_id)
        self.cmap = basis.centroid_map()      # (T, 3, 4)
        self.P = basis.P
        self.Pt = basis.P.T.tocsr()

    def centroid_field(self, coeffs_per_half: np.ndarray) -> np.ndarray:
        """(T, 3) field at tet centers from per-half coefficients."""
        T = self.basis.mesh.num_tets
        return np.einsum("txm,tm->tx", self.cmap, coeffs_per_half.reshape(T, 4))

    def build_SE(self, i_e: np.ndarray) -> np.ndarray:
        """Diagonal of the permittivity matrix, one entry per tet (F/m)."""
        ec = self.centroid_field(i_e)
        e2 = np.einsum("tx,tx->t", ec, ec)
        return EPS0 * (self.chi1 + self.chi3 * e2)

    def build_SD(self, i_d: np.ndarray) -> np.ndarray:
        """Diagonal of the rational inverse-permittivity matrix per tet (m/F)."""
        dc = self.centroid_field(self.Pt @ i_d)
        d2 = np.einsum("tx,tx->t", dc, dc)
        base = EPS0 ** 2 * self.chi1 ** 3
        denom = base + 3.0 * self.chi3 * d2
        if np.any(denom <= 0.0):
            t = int(np.argmax(denom <= 0.0))
            raise ConstitutiveRangeError(
                f"tet {t}: flux magnitude beyond the valid branch of the "
                f"rational inverse (denominator {denom[t]:.3e})")
        return (base + 2.0 * self.chi3 * d2) / (EPS0 * self.chi1 * denom)

    @staticmethod
    def per_half(diag_per_tet: np.ndarray) -> np.ndarray:
        return np.repeat(diag_per_tet, 4)

    def linear_SE(self) -> np.ndarray:
        return EPS0 * self.chi1

    def linear_SD(self) -> np.ndarray:
        return 1.0 / (EPS0 * self.chi1)


def solve_constitutive(i_e: np.ndarray, se_per_tet: np.ndarray, gram_ee,
                       gram_dd, P, eps_its: float = 1e-12,
                       x0: np.ndarray | None = None,
                       max_iters: int = 2000, precond=None) -> SolveResult:
    """Solve (P G P^T) I_D = P G S_E I_E for the flux coefficients."""
    rhs = P @ (gram_ee @ (np.repeat(se_per_tet, 4) * i_e))
    res = tfqmr_solve(gram_dd, rhs, eps=eps_its, max_iters=max_iters,
                      x0=x0, precond=precond)
    if not res.converged:
        raise RuntimeError(
            f"constitutive solve did not converge in {res.iterations} "
            f"iterations (residual {res.residual:.3e})")
    return res


def pade_update(i_d: np.ndarray, sd_per_tet: np.ndarray, P) -> np.ndarray:
    """Explicit flux -> field update I_E = S_D P^T I_D."""
    return np.repeat(sd_per_tet, 4) * (P.T @ i_d)
