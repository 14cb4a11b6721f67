"""Gaussian quadrature on tetrahedra and triangles, and 1/R pair integration.

Rules are expressed in barycentric coordinates with weights normalized to sum
to one; callers scale by the element measure. Low orders use classic compact
symmetric rules; higher orders fall back to conical (collapsed-coordinate)
Gauss-Jacobi products, which have positive weights and guaranteed polynomial
exactness.

The 1/R double integrals needed by retarded-kernel assembly come in three
regimes: ``self`` (identical tets; inner integral rendered regular by
subdividing the source tet about the observation point, with a radial rule
that absorbs the Duffy degeneracy), ``near`` (touching or close pairs; the
source tet is uniformly subdivided once to concentrate points), and ``far``
(plain tensor-product Gauss).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_ORDER = 10


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature points in barycentric coordinates, weights summing to 1."""

    points: np.ndarray   # (n, d+1) barycentric
    weights: np.ndarray  # (n,)
    order: int           # polynomial exactness degree


def _gl01(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _gj01(n, alpha):
    # nodes/weights for integral of (1-x)^alpha * f(x) over [0, 1]
    x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1)


def gauss_tet(order: int) -> QuadratureRule:
    """Symmetric/conical rule on the reference tetrahedron, exact to ``order``."""
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"unsupported tet quadrature order {order}")
    if order == 1:
        pts = np.array([[0.25, 0.25, 0.25, 0.25]])
        return QuadratureRule(pts, np.array([1.0]), 1)
    if order == 2:
        a, b = 0.5854101966249685, 0.1381966011250105
        pts = np.full((4, 4), b)
        np.fill_diagonal(pts, a)
        return QuadratureRule(pts, np.full(4, 0.25), 2)
    n = (order + 2) // 2  # conical degree 2n-1 >= order
    xi, wx = _gj01(n, 2.0)
    eta, wy = _gj01(n, 1.0)
    zeta, wz = _gl01(n)
    X, Y, Z = np.meshgrid(xi, eta, zeta, indexing="ij")
    W = (wx[:, None, None] * wy[None, :, None] * wz[None, None, :]).ravel()
    x = X.ravel()
    y = (Y * (1 - X)).ravel()
    z = (Z * (1 - X) * (1 - Y)).ravel()
    bary = np.column_stack([1 - x - y - z, x, y, z])
    return QuadratureRule(bary, W / W.sum(), 2 * n - 1)


def gauss_tri(order: int) -> QuadratureRule:
    """Symmetric/conical rule on the reference triangle, exact to ``order``."""
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"unsupported triangle quadrature order {order}")
    if order == 1:
        return QuadratureRule(np.array([[1, 1, 1]]) / 3.0, np.array([1.0]), 1)
    if order == 2:
        pts = np.full((3, 3), 1.0 / 6.0)
        np.fill_diagonal(pts, 2.0 / 3.0)
        return QuadratureRule(pts, np.full(3, 1 / 3.0), 2)
    n = (order + 2) // 2
    xi, wx = _gj01(n, 1.0)
    eta, wy = _gl01(n)
    X, Y = np.meshgrid(xi, eta, indexing="ij")
    W = (wx[:, None] * wy[None, :]).ravel()
    x = X.ravel()
    y = (Y * (1 - X)).ravel()
    bary = np.column_stack([1 - x - y, x, y])
    return QuadratureRule(bary, W / W.sum(), 2 * n - 1)


def tet_points(verts: np.ndarray, rule: QuadratureRule):
    """Physical points and weights on one tet; weights sum to its volume."""
    verts = np.asarray(verts, dtype=float)
    vol = abs(np.linalg.det(verts[1:] - verts[0])) / 6.0
    return rule.points @ verts, rule.weights * vol


def tri_points(verts: np.ndarray, rule: QuadratureRule):
    """Physical points and weights on one triangle; weights sum to its area."""
    verts = np.asarray(verts, dtype=float)
    area = 0.5 * np.linalg.norm(np.cross(verts[1] - verts[0], verts[2] - verts[0]))
    return rule.points @ verts, rule.weights * area


def subdivide_tet(verts: np.ndarray) -> list[np.ndarray]:
    """Uniform 1:8 subdivision (four corner tets plus the split octahedron)."""
    v = np.asarray(verts, dtype=float)
    m = {(i, j): 0.5 * (v[i] + v[j]) for i in range(4) for j in range(i + 1, 4)}
    kids = [
        np.array([v[0], m[0, 1], m[0, 2], m[0, 3]]),
        np.array([v[1], m[0, 1], m[1, 2], m[1, 3]]),
        np.array([v[2], m[0, 2], m[1, 2], m[2, 3]]),
        np.array([v[3], m[0, 3], m[1, 3], m[2, 3]]),
    ]
    # octahedron split about the (m01, m23) diagonal
    ring = [m[0, 2], m[1, 2], m[1, 3], m[0, 3]]
    for i in range(4):
        kids.append(np.array([m[0, 1], m[2, 3], ring[i], ring[(i + 1) % 4]]))
    return kids


def apex_refined_points(verts: np.ndarray, apex: np.ndarray,
                        n_radial: int = 4, tri_order: int = 4):
    """Quadrature over a tet concentrated toward ``apex`` (on or inside it).

    The tet is split into sub-tets joining the apex to each face; each sub-tet
    is integrated in apex-radial form, where the r^2 volume factor cancels a
    1/R kernel singularity at the apex. Weights sum to the tet volume.
    """
    verts = np.asarray(verts, dtype=float)
    apex = np.asarray(apex, dtype=float)
    u, wu = _gl01(n_radial)
    tri_rule = gauss_tri(tri_order)
    vol = abs(np.linalg.det(verts[1:] - verts[0])) / 6.0

    pts_all, w_all = [], []
    faces = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))
    for f in faces:
        tri = verts[list(f)]
        sub_vol = abs(np.linalg.det(tri - apex)) / 6.0
        if sub_vol <= 1e-12 * vol:
            continue  # apex lies on this face plane
        y, wy = tri_points(tri, tri_rule)
        area = wy.sum()
        # p = apex + u * (y - apex); dV = 3 V u^2 du dA / A
        p = apex[None, None, :] + u[:, None, None] * (y[None, :, :] - apex)
        w = (wu * u * u)[:, None] * wy[None, :] * (3.0 * sub_vol / area)
        pts_all.append(p.reshape(-1, 3))
        w_all.append(w.ravel())
    return np.concatenate(pts_all), np.concatenate(w_all)


def _circumradius(verts):
    c = verts.mean(axis=0)
    return np.max(np.linalg.norm(verts - c, axis=1))


def classify_pair(verts_a: np.ndarray, verts_b: np.ndarray) -> str:
    """Distance regime of a tet pair: ``self``, ``near``, or ``far``.

    ``near`` covers pairs sharing at least one vertex and pairs whose centroid
    distance is below twice the sum of circumradii.
    """
    va = np.asarray(verts_a, dtype=float)
    vb = np.asarray(verts_b, dtype=float)
    d = np.linalg.norm(va[:, None, :] - vb[None, :, :], axis=-1)
    scale = max(_circumradius(va), _circumradius(vb))
    shared = int(np.count_nonzero(d.min(axis=1) < 1e-12 * scale))
    if shared == 4:
        return "self"
    cdist = np.linalg.norm(va.mean(axis=0) - vb.mean(axis=0))
    if shared > 0 or cdist < 2.0 * (_circumradius(va) + _circumradius(vb)):
        return "near"
    return "far"


def near_source_points(verts: np.ndarray, order: int = 3, levels: int = 1):
    """Quadrature over a source tet refined by uniform subdivision."""
    rule = gauss_tet(order)
    tets = [np.asarray(verts, dtype=float)]
    for _ in range(levels):
        tets = [kid for t in tets for kid in subdivide_tet(t)]
    pts, w = zip(*(tet_points(t, rule) for t in tets))
    return np.concatenate(pts), np.concatenate(w)


def integrate_kernel_pair(verts_a, verts_b, g=None, h=None, regime=None,
                          outer_order=3, inner_order=3, n_radial=4,
                          tri_order=4, near_levels=1) -> float:
    """Double integral of g(r) h(r') / |r - r'| over a tet pair.

    ``g`` and ``h`` are scalar fields of the point arrays (default 1). The
    regime is classified automatically unless given. Raises if the result is
    not finite (degenerate geometry).
    """
    va = np.asarray(verts_a, dtype=float)
    vb = np.asarray(verts_b, dtype=float)
    if regime is None:
        regime = classify_pair(va, vb)

    outer_rule = gauss_tet(outer_order)
    ra, wa = tet_points(va, outer_rule)
    ga = np.ones(len(ra)) if g is None else np.asarray(g(ra), dtype=float)

    total = 0.0
    if regime == "self":
        for q in range(len(ra)):
            rb, wb = apex_refined_points(vb, ra[q], n_radial, tri_order)
            hb = np.ones(len(rb)) if h is None else np.asarray(h(rb), dtype=float)
            R = np.linalg.norm(rb - ra[q], axis=1)
            total += wa[q] * ga[q] * np.sum(wb * hb / R)
    else:
        if regime == "near":
            rb, wb = near_source_points(vb, inner_order, near_levels)
        else:
            rb, wb = tet_points(vb, gauss_tet(inner_order))
        hb = np.ones(len(rb)) if h is None else np.asarray(h(rb), dtype=float)
        R = np.linalg.norm(ra[:, None, :] - rb[None, :, :], axis=-1)
        total = float(np.einsum("q,q,p,p,qp->", wa, ga, wb, hb, 1.0 / R))
    if not np.isfinite(total):
        raise ValueError("non-finite pair integral (degenerate geometry)")
    return float(total)


def integrate_surface_kernel_pair(tri_a, verts_b, regime="far",
                                  tri_order=4, inner_order=3,
                                  n_radial=4, near_levels=1) -> float:
    """Surface-volume variant: integral of 1/R over (triangle a) x (tet b).

    With ``regime='self'`` the triangle is assumed to lie on the boundary of
    the tet and the apex-refined source rule is used per surface point.
    """
    pa, wa = tri_points(np.asarray(tri_a, dtype=float), gauss_tri(tri_order))
    total = 0.0
    if regime == "self":
        for q in range(len(pa)):
            rb, wb = apex_refined_points(verts_b, pa[q], n_radial, tri_order)
            R = np.linalg.norm(rb - pa[q], axis=1)
            total += wa[q] * np.sum(wb / R)
    else:
        if regime == "near":
            rb, wb = near_source_points(verts_b, inner_order, near_levels)
        else:
            rb, wb = tet_points(verts_b, gauss_tet(inner_order))
        R = np.linalg.norm(pa[:, None, :] - rb[None, :, :], axis=-1)
        total = float(wa @ (1.0 / R) @ wb)
    if not np.isfinite(total):
        raise ValueError("non-finite pair integral (degenerate geometry)")
    return float(total)
