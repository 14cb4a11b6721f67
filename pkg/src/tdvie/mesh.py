"""Tetrahedral meshes: loading, validation, face enumeration, geometry queries.

Two file formats are supported:

* native: plain text, first line ``N_nodes N_tets``, then one ``x y z`` line
  per node, then one ``i0 i1 i2 i3 region_id`` line per tet (0-based indices).
* Gmsh MSH ASCII v2.2: ``$Nodes``/``$Elements`` sections, element type 4
  (4-node tetrahedron); the first (physical) tag becomes the region id.

Tets are canonically oriented on load (two nodes swapped whenever the signed
volume is negative) so that free-node geometry downstream is sign consistent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

# local vertex indices of the face opposite each local vertex
_LOCAL_FACES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))


class MeshError(ValueError):
    """Raised for parse failures and invalid (non-conforming) meshes."""


def _signed_volumes(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    a = nodes[tets[:, 1]] - nodes[tets[:, 0]]
    b = nodes[tets[:, 2]] - nodes[tets[:, 0]]
    c = nodes[tets[:, 3]] - nodes[tets[:, 0]]
    return np.einsum("ij,ij->i", np.cross(a, b), c) / 6.0


@dataclass(frozen=True)
class TetMesh:
    """Validated tetrahedral mesh.

    Attributes
    ----------
    nodes : (N, 3) float array, coordinates in meters.
    tets : (T, 4) int array, node indices, positively oriented.
    region_id : (T,) int array, material-region label per tet.
    """

    nodes: np.ndarray
    tets: np.ndarray
    region_id: np.ndarray
    volumes: np.ndarray = field(repr=False, default=None)
    centroids: np.ndarray = field(repr=False, default=None)

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_tets(self) -> int:
        return self.tets.shape[0]

    def tet_nodes(self, t: int) -> np.ndarray:
        """Coordinates of the four vertices of tet ``t``, shape (4, 3)."""
        return self.nodes[self.tets[t]]


@dataclass(frozen=True)
class FaceTable:
    """All distinct triangular faces of a mesh, sorted by vertex triple.

    ``adjacent[f]`` holds one or two ``(tet, local_face)`` pairs; boundary
    faces have exactly one. ``free_node[f, s]`` is the node index of
    ``adjacent[f][s]``'s vertex that is not on the face (-1 when absent).
    """

    faces: np.ndarray          # (F, 3) sorted node triples
    areas: np.ndarray          # (F,)
    adjacent: np.ndarray       # (F, 2, 2) (tet, local_face), -1 padded
    free_node: np.ndarray      # (F, 2) node index, -1 padded
    is_boundary: np.ndarray    # (F,) bool

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def num_boundary(self) -> int:
        return int(np.count_nonzero(self.is_boundary))


def make_mesh(nodes, tets, region_id=None) -> TetMesh:
    """Build a validated, canonically oriented TetMesh from raw arrays."""
    nodes = np.ascontiguousarray(np.asarray(nodes, dtype=float))
    tets = np.array(tets, dtype=np.int64).reshape(-1, 4)
    if region_id is None:
        region_id = np.zeros(len(tets), dtype=np.int64)
    region_id = np.asarray(region_id, dtype=np.int64)

    if nodes.ndim != 2 or nodes.shape[1] != 3:
        raise MeshError("nodes must be an (N, 3) array")
    if tets.min(initial=0) < 0 or tets.max(initial=-1) >= len(nodes):
        bad = int(np.argmax((tets < 0).any(axis=1) | (tets >= len(nodes)).any(axis=1)))
        raise MeshError(f"tet {bad}: node index out of range")

    # canonical orientation: positive signed volume
    vol = _signed_volumes(nodes, tets)
    flip = vol < 0
    if flip.any():
        tets[flip, 2], tets[flip, 3] = tets[flip, 3].copy(), tets[flip, 2].copy()
        vol = np.abs(vol)
    tiny = np.nonzero(vol <= 0)[0]
    if tiny.size:
        raise MeshError(f"tet {int(tiny[0])}: zero or negative volume")

    # duplicate tets (same node set)
    key = np.sort(tets, axis=1)
    _, counts = np.unique(key, axis=0, return_counts=True)
    if (counts > 1).any():
        raise MeshError("duplicate tetrahedra in mesh")

    centroids = nodes[tets].mean(axis=1)
    mesh = TetMesh(nodes=nodes, tets=tets, region_id=region_id,
                   volumes=vol, centroids=centroids)
    # conformity: every face must be shared by at most two tets
    enumerate_faces(mesh)
    _warn_bad_dihedrals(mesh)
    return mesh


def _warn_bad_dihedrals(mesh: TetMesh, threshold_deg: float = 10.0) -> None:
    worst = 180.0
    for t in range(mesh.num_tets):
        v = mesh.tet_nodes(t)
        normals = []
        for lf in _LOCAL_FACES:
            n = np.cross(v[lf[1]] - v[lf[0]], v[lf[2]] - v[lf[0]])
            normals.append(n / np.linalg.norm(n))
        for i in range(4):
            for j in range(i + 1, 4):
                cosang = abs(np.dot(normals[i], normals[j]))
                ang = 180.0 - np.degrees(np.arccos(np.clip(cosang, -1, 1)))
                worst = min(worst, ang)
    if worst < threshold_deg:
        log.warning("mesh has minimum dihedral angle %.2f deg (< %.0f deg)",
                    worst, threshold_deg)


def enumerate_faces(mesh: TetMesh) -> FaceTable:
    """Enumerate all distinct faces in deterministic (sorted-triple) order."""
    T = mesh.num_tets
    tris = np.empty((4 * T, 3), dtype=np.int64)
    owner_tet = np.repeat(np.arange(T), 4)
    owner_loc = np.tile(np.arange(4), T)
    for lf, loc in enumerate(_LOCAL_FACES):
        tris[lf::4] = mesh.tets[:, loc]
    tris_sorted = np.sort(tris, axis=1)

    order = np.lexsort((tris_sorted[:, 2], tris_sorted[:, 1], tris_sorted[:, 0]))
    tris_sorted = tris_sorted[order]
    owner_tet = owner_tet[order]
    owner_loc = owner_loc[order]

    uniq, start, counts = np.unique(tris_sorted, axis=0,
                                    return_index=True, return_counts=True)
    if (counts > 2).any():
        f = int(np.argmax(counts > 2))
        raise MeshError(f"face {tuple(uniq[f])} shared by more than two tets "
                        "(non-manifold mesh)")

    F = len(uniq)
    adjacent = np.full((F, 2, 2), -1, dtype=np.int64)
    free_node = np.full((F, 2), -1, dtype=np.int64)
    for f in range(F):
        for s in range(counts[f]):
            t = owner_tet[start[f] + s]
            loc = owner_loc[start[f] + s]
            adjacent[f, s] = (t, loc)
            free_node[f, s] = mesh.tets[t, loc]
        # deterministic side ordering: lower free-node index first
        if counts[f] == 2 and free_node[f, 1] < free_node[f, 0]:
            adjacent[f] = adjacent[f, ::-1]
            free_node[f] = free_node[f, ::-1]

    p = mesh.nodes[uniq]
    areas = 0.5 * np.linalg.norm(
        np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    return FaceTable(faces=uniq, areas=areas, adjacent=adjacent,
                     free_node=free_node, is_boundary=(counts == 1))


def mesh_stats(mesh: TetMesh) -> dict:
    """Average edge length, mesh diameter, and total volume.

    The diameter is exact for polyhedral meshes: it is realized by a pair of
    convex-hull vertices, so only hull nodes are scanned pairwise.
    """
    edges = set()
    for t in mesh.tets:
        for i in range(4):
            for j in range(i + 1, 4):
                a, b = int(t[i]), int(t[j])
                edges.add((a, b) if a < b else (b, a))
    e = np.array(sorted(edges))
    l_av = float(np.mean(np.linalg.norm(mesh.nodes[e[:, 0]] - mesh.nodes[e[:, 1]],
                                        axis=1)))

    pts = mesh.nodes
    if len(pts) > 16:
        from scipy.spatial import ConvexHull
        pts = pts[ConvexHull(pts).vertices]
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    d_max = float(np.sqrt(d2.max()))

    return {"l_av": l_av, "d_max": d_max,
            "total_volume": float(mesh.volumes.sum())}


def load_mesh(path, fmt: str = "native") -> TetMesh:
    """Load and validate a mesh file. ``fmt`` is ``native`` or ``msh``."""
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"mesh file not found: {path}")
    text = path.read_text()
    if fmt == "native":
        nodes, tets, region = _parse_native(text)
    elif fmt == "msh":
        nodes, tets, region = _parse_msh(text)
    else:
        raise MeshError(f"unknown mesh format {fmt!r}")
    return make_mesh(nodes, tets, region)


def save_mesh(mesh: TetMesh, path) -> None:
    """Write a mesh in the native text format."""
    lines = [f"{mesh.num_nodes} {mesh.num_tets}"]
    for p in mesh.nodes:
        lines.append(f"{p[0]!r} {p[1]!r} {p[2]!r}")
    for t, r in zip(mesh.tets, mesh.region_id):
        lines.append(f"{t[0]} {t[1]} {t[2]} {t[3]} {r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_native(text: str):
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise MeshError("native format: first line must be 'N_nodes N_tets'")
    try:
        n_nodes, n_tets = int(rows[0][0]), int(rows[0][1])
    except ValueError as exc:
        raise MeshError(f"native format: bad header: {exc}") from None
    if len(rows) != 1 + n_nodes + n_tets:
        raise MeshError(f"native format: expected {1 + n_nodes + n_tets} lines, "
                        f"found {len(rows)}")
    try:
        nodes = np.array([[float(x) for x in r] for r in rows[1:1 + n_nodes]])
        body = [[int(x) for x in r] for r in rows[1 + n_nodes:]]
    except ValueError as exc:
        raise MeshError(f"native format: parse error: {exc}") from None
    if nodes.size and nodes.shape[1] != 3:
        raise MeshError("native format: node lines must have 3 coordinates")
    if any(len(r) != 5 for r in body):
        raise MeshError("native format: tet lines must have 5 integers")
    body = np.array(body, dtype=np.int64).reshape(-1, 5)
    return nodes, body[:, :4], body[:, 4]


def _parse_msh(text: str):
    lines = text.splitlines()
    nodes_map: dict[int, list[float]] = {}
    tets = []
    region = []
    i = 0
    while i < len(lines):
        ln = lines[i].strip()
        if ln == "$Nodes":
            count = int(lines[i + 1])
            for k in range(count):
                parts = lines[i + 2 + k].split()
                nodes_map[int(parts[0])] = [float(x) for x in parts[1:4]]
            i += 2 + count
        elif ln == "$Elements":
            count = int(lines[i + 1])
            for k in range(count):
                parts = [int(x) for x in lines[i + 2 + k].split()]
                etype, ntags = parts[1], parts[2]
                if etype == 4:  # 4-node tetrahedron
                    conn = parts[3 + ntags:3 + ntags + 4]
                    tets.append(conn)
                    region.append(parts[3] if ntags >= 1 else 0)
            i += 2 + count
        else:
            i += 1
    if not nodes_map:
        raise MeshError("msh format: no $Nodes section")
    if not tets:
        raise MeshError("msh format: no tetrahedra (element type 4) found")
    ids = sorted(nodes_map)
    renum = {nid: k for k, nid in enumerate(ids)}
    nodes = np.array([nodes_map[nid] for nid in ids])
    tets = np.array([[renum[n] for n in t] for t in tets], dtype=np.int64)
    return nodes, tets, np.array(region, dtype=np.int64)
