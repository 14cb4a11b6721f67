"""Half-SWG basis construction over a tetrahedral mesh.

The electric field is expanded in "half" SWG functions: one per (face, tet)
incidence, linear inside its tet, zero outside,

    f(r) = |S| / (3 |V|) * (r - r_free),

where ``r_free`` is the tet vertex opposite the face. With halves ordered as
``4 * tet + local_face`` there are exactly ``N_E = 4 T = 2 N_D - N_B`` of
them and basis-overlap matrices are block diagonal with dense 4x4 tet blocks.

Flux-type (face) functions are linear combinations of halves: the sparse
mapping ``P`` (one row per face) carries +1 on the face's plus-side half and
-1 on its minus-side half, the plus side being the adjacent tet whose free
node has the lower global index. Boundary faces keep only the +1 entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import FaceTable, TetMesh
from .quadrature import gauss_tet


@dataclass(frozen=True)
class HalfSwg:
    """One half-SWG function: geometry of its (face, tet) incidence."""

    face: int
    tet: int
    free_node: np.ndarray   # (3,) position of the free vertex
    area: float
    volume: float
    region: int
    tet_nodes: np.ndarray   # (4, 3)

    @property
    def scale(self) -> float:
        return self.area / (3.0 * self.volume)


@dataclass(frozen=True)
class BasisSet:
    """Half-SWG set plus the face-combination mapping.

    Array fields are indexed by half id ``4 * tet + local_face``.
    """

    mesh: TetMesh
    faces: FaceTable
    free_pos: np.ndarray   # (N_E, 3)
    scale: np.ndarray      # (N_E,) = |S| / (3 |V|)
    face_of_half: np.ndarray  # (N_E,)
    P: sp.csr_matrix       # (N_D, N_E), entries in {-1, 0, +1}

    @property
    def num_e(self) -> int:
        return self.free_pos.shape[0]

    @property
    def num_d(self) -> int:
        return self.faces.num_faces

    @property
    def num_b(self) -> int:
        return self.faces.num_boundary

    @property
    def tet_of_half(self) -> np.ndarray:
        return np.arange(self.num_e) // 4

    @property
    def divergence(self) -> np.ndarray:
        """Per-half divergence |S|/|V| (constant over the tet)."""
        return 3.0 * self.scale

    def half(self, i: int) -> HalfSwg:
        t = i // 4
        return HalfSwg(face=int(self.face_of_half[i]), tet=t,
                       free_node=self.free_pos[i].copy(),
                       area=float(self.scale[i] * 3.0 * self.mesh.volumes[t]),
                       volume=float(self.mesh.volumes[t]),
                       region=int(self.mesh.region_id[t]),
                       tet_nodes=self.mesh.tet_nodes(t))

    @property
    def halves(self) -> list[HalfSwg]:
        return [self.half(i) for i in range(self.num_e)]

    def values_in_tet(self, points: np.ndarray) -> np.ndarray:
        """Values of each tet's four halves at per-tet points.

        ``points`` has shape (T, nq, 3); returns (T, nq, 4, 3). No containment
        check: points are assumed to lie inside their tet.
        """
        return self.values_for_tets(np.arange(self.mesh.num_tets), points)

    def values_for_tets(self, tet_idx: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Same as :meth:`values_in_tet` for a subset of tets (B, n, 3)."""
        T = self.mesh.num_tets
        free = self.free_pos.reshape(T, 4, 3)[tet_idx]
        scl = self.scale.reshape(T, 4)[tet_idx]
        d = points[:, :, None, :] - free[:, None, :, :]
        return scl[:, None, :, None] * d

    def centroid_map(self) -> np.ndarray:
        """(T, 3, 4) map from a tet's four half coefficients to the field
        value at its centroid."""
        vals = self.values_in_tet(self.mesh.centroids[:, None, :])
        return vals[:, 0].transpose(0, 2, 1)


def build_bases(mesh: TetMesh, faces: FaceTable) -> BasisSet:
    T = mesh.num_tets
    n_e = 4 * T
    free_pos = np.empty((n_e, 3))
    scale = np.empty(n_e)
    face_of_half = np.empty(n_e, dtype=np.int64)

    rows, cols, vals = [], [], []
    for f in range(faces.num_faces):
        n_sides = 1 if faces.is_boundary[f] else 2
        for s in range(n_sides):
            t, loc = faces.adjacent[f, s]
            i = 4 * t + loc
            free_pos[i] = mesh.nodes[faces.free_node[f, s]]
            scale[i] = faces.areas[f] / (3.0 * mesh.volumes[t])
            face_of_half[i] = f
            rows.append(f)
            cols.append(i)
            vals.append(1.0 if s == 0 else -1.0)

    P = sp.csr_matrix((vals, (rows, cols)), shape=(faces.num_faces, n_e))
    return BasisSet(mesh=mesh, faces=faces, free_pos=free_pos, scale=scale,
                    face_of_half=face_of_half, P=P)


def eval_half_swg(b: HalfSwg, r: np.ndarray) -> np.ndarray:
    """Value of one half function at point(s) ``r``; zero outside its tet."""
    r = np.asarray(r, dtype=float)
    single = r.ndim == 1
    pts = np.atleast_2d(r)
    v = b.tet_nodes
    mat = (v[1:] - v[0]).T
    lam = np.linalg.solve(mat, (pts - v[0]).T).T
    bary = np.column_stack([1.0 - lam.sum(axis=1), lam])
    inside = (bary > -1e-12).all(axis=1)
    out = b.scale * (pts - b.free_node)
    out[~inside] = 0.0
    return out[0] if single else out


def div_half_swg(b: HalfSwg) -> float:
    """Divergence |S|/|V|, constant inside the tet (zero outside)."""
    return b.area / b.volume


def eval_full_swg(basis: BasisSet, face: int, r: np.ndarray) -> np.ndarray:
    """Value of the face (flux) function: signed sum of its halves."""
    row = basis.P.getrow(face)
    total = np.zeros(3 if np.asarray(r).ndim == 1 else (np.atleast_2d(r).shape[0], 3))
    for i, s in zip(row.indices, row.data):
        total = total + s * eval_half_swg(basis.half(int(i)), r)
    return total


def assemble_gram_EE(basis: BasisSet, quad_order: int = 4) -> sp.bsr_matrix:
    """Overlap (Gram) matrix of the half-SWG set; block diagonal, SPD."""
    mesh = basis.mesh
    T = mesh.num_tets
    rule = gauss_tet(quad_order)
    pts = np.einsum("qk,tkx->tqx", rule.points, mesh.nodes[mesh.tets])
    F = basis.values_in_tet(pts)
    blocks = np.einsum("q,tqmx,tqnx->tmn", rule.weights, F, F)
    blocks *= mesh.volumes[:, None, None]
    indptr = np.arange(T + 1)
    indices = np.arange(T)
    n = 4 * T
    return sp.bsr_matrix((blocks, indices, indptr), shape=(n, n))
