"""Structured tetrahedral fixtures for tests, demos, and desk-scale studies.

These are deliberately simple generators (Kuhn-subdivided boxes, a cube-to-ball
mapped sphere, layered slabs), not a mesher: every cell of a regular grid is
split into six tets along the main diagonal, which is conforming across cells.
"""

from __future__ import annotations

from itertools import permutations

import numpy as np

from .mesh import TetMesh, make_mesh

_AXES = np.eye(3, dtype=np.int64)
# six path tets of the unit cube, one per coordinate ordering
_KUHN_PATHS = [np.array([np.zeros(3, np.int64),
                         _AXES[p[0]],
                         _AXES[p[0]] + _AXES[p[1]],
                         np.ones(3, np.int64)])
               for p in permutations(range(3))]


def reference_tet() -> TetMesh:
    """Unit right tetrahedron: vertices at the origin and the three axes."""
    nodes = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
    return make_mesh(nodes, [(0, 1, 2, 3)])


def two_tet_mesh() -> TetMesh:
    """Two tets sharing the face (0,1,2); the minimal conforming mesh."""
    nodes = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (0.4, 0.4, -1.0)]
    return make_mesh(nodes, [(0, 1, 2, 3), (0, 1, 2, 4)])


def box_mesh(size, divisions, center=(0.0, 0.0, 0.0), region_of_cell=None) -> TetMesh:
    """Kuhn-subdivided box.

    Parameters
    ----------
    size : (3,) box edge lengths in meters.
    divisions : int or (3,) cells per axis.
    region_of_cell : optional callable mapping a cell-center point to an
        integer region id (defaults to region 0 everywhere).
    """
    size = np.asarray(size, dtype=float)
    div = np.broadcast_to(np.asarray(divisions, dtype=np.int64), (3,)).copy()
    if (div < 1).any():
        raise ValueError("divisions must be >= 1 per axis")
    nx, ny, nz = div
    h = size / div
    origin = np.asarray(center, dtype=float) - size / 2.0

    def node_id(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    grid = np.mgrid[0:nx + 1, 0:ny + 1, 0:nz + 1].reshape(3, -1).T
    nodes = origin + grid * h

    tets = []
    regions = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                base = np.array([i, j, k], dtype=np.int64)
                cell_center = origin + (base + 0.5) * h
                rid = 0 if region_of_cell is None else int(region_of_cell(cell_center))
                for path in _KUHN_PATHS:
                    corners = base + path
                    tets.append([node_id(*c) for c in corners])
                    regions.append(rid)
    return make_mesh(nodes, tets, regions)


def ball_mesh(radius: float, divisions: int, center=(0.0, 0.0, 0.0),
              volume_match: bool = True) -> TetMesh:
    """Ball of given radius from a Kuhn cube grid, radially mapped.

    Each node p of the cube [-1, 1]^3 maps to ``radius * p * |p|_inf / |p|_2``,
    which carries the cube surface onto the sphere. With ``volume_match``
    (default) one global radial scale is applied afterwards so the polyhedron
    encloses exactly the ball volume; an inscribed polyhedron systematically
    under-represents the ball (its low-frequency polarizability tracks the
    enclosed volume), so volume matching is the faithful discretization for
    scattering studies. Set ``volume_match=False`` for nodes exactly on the
    sphere.
    """
    cube = box_mesh((2.0, 2.0, 2.0), divisions)
    p = cube.nodes
    linf = np.abs(p).max(axis=1)
    l2 = np.linalg.norm(p, axis=1)
    scale = np.divide(linf, l2, out=np.ones_like(l2), where=l2 > 0)
    nodes = radius * p * scale[:, None]
    mesh = make_mesh(nodes, cube.tets, cube.region_id)
    if volume_match:
        factor = (4.0 / 3.0 * np.pi * radius ** 3 / mesh.volumes.sum()) ** (1 / 3)
        mesh = make_mesh(nodes * factor, cube.tets, cube.region_id)
    if any(abs(c) > 0 for c in center):
        mesh = make_mesh(mesh.nodes + np.asarray(center, dtype=float),
                         mesh.tets, mesh.region_id)
    return mesh


def layered_slab_mesh(cross_section, length, layers, divisions,
                      center=(0.0, 0.0, 0.0)) -> TetMesh:
    """Slab of ``layers`` equal-thickness layers stacked along z.

    Cells in layer ``q`` (0-based, counted from -z) get region id ``q % 2``.
    ``divisions`` is (nx, ny, nz); nz must be a multiple of ``layers`` so
    layer boundaries align with grid planes.
    """
    nx, ny, nz = divisions
    if nz % layers != 0:
        raise ValueError("nz must be a multiple of the layer count")
    size = (cross_section[0], cross_section[1], length)
    z0 = center[2] - length / 2.0
    thick = length / layers

    def region(cell_center):
        layer = int((cell_center[2] - z0) / thick)
        return min(layer, layers - 1) % 2

    return box_mesh(size, (nx, ny, nz), center=center, region_of_cell=region)
