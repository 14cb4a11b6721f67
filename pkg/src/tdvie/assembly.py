"""Delay-banded retarded interaction matrices.

For each delay index l >= 0, the matrix ``Z[l]`` couples tested half
functions at step j to source samples at step j - l. Entry (m, n) combines
three reduced-kernel terms: a volume-volume term carrying the third time
derivative of the interpolation kernel, a (test-face) surface-volume term and
a divergence-divergence volume term carrying its first derivative, each
weighted by 1/R at retarded argument ``l*dt - R/c0``.

R is evaluated per quadrature point pair, never per centroid: the delay
window of a pair therefore spans the spread of its point distances plus the
interpolation-kernel support. Pairs are integrated per distance regime (self
pairs and shared test faces with apex-concentrated source rules, touching or
close pairs with a uniformly subdivided source rule, far pairs with plain
tensor Gauss), and results are stored one sparse block matrix per delay.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import BasisSet
from .constants import C0, EPS0, MU0
from .linalg import sparse_product
from .quadrature import _gl01, gauss_tet, gauss_tri
from .temporal import TemporalBasis

_LOCAL_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])
# for an apex on local face m, the three sub-tet base faces
_FACES_EXCLUDING = np.array([[f for f in range(4) if f != m] for m in range(4)])

# 1:8 subdivision children as barycentric combinations of parent vertices
_MID = {frozenset((i,)): np.eye(4)[i] for i in range(4)}
for _i in range(4):
    for _j in range(_i + 1, 4):
        _MID[frozenset((_i, _j))] = 0.5 * (np.eye(4)[_i] + np.eye(4)[_j])


def _child_matrices():
    def m(*idx):
        return _MID[frozenset(idx)]

    kids = [
        [m(0), m(0, 1), m(0, 2), m(0, 3)],
        [m(1), m(0, 1), m(1, 2), m(1, 3)],
        [m(2), m(0, 2), m(1, 2), m(2, 3)],
        [m(3), m(0, 3), m(1, 3), m(2, 3)],
    ]
    ring = [m(0, 2), m(1, 2), m(1, 3), m(0, 3)]
    for i in range(4):
        kids.append([m(0, 1), m(2, 3), ring[i], ring[(i + 1) % 4]])
    return np.array(kids)  # (8, 4, 4)


_CHILD_BARY = _child_matrices()


@dataclass
class AssemblyOptions:
    """Quadrature configuration for operator assembly."""

    far_order: int = 3
    near_order: int = 3
    surface_order: int = 3
    radial_points: int = 4
    singular_tri_order: int = 4
    near_levels: int = 1
    near_factor: float = 2.0
    batch_pairs: int = 4096

    def key_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("far_order", "near_order", "surface_order", "radial_points",
                 "singular_tri_order", "near_levels", "near_factor")}


@dataclass
class DelayedOperator:
    """Band of sparse interaction matrices, one per delay index."""

    Z: list
    dt: float
    temporal_order: int

    @property
    def l_max(self) -> int:
        return len(self.Z) - 1

    @property
    def shape(self):
        return self.Z[0].shape

    def nnz(self) -> int:
        return int(sum(zl.nnz for zl in self.Z))


class _TetData:
    """Per-tet quadrature caches shared by all pair classes."""

    def __init__(self, basis: BasisSet, opts: AssemblyOptions):
        mesh = basis.mesh
        self.mesh = mesh
        self.basis = basis
        T = mesh.num_tets
        self.verts = mesh.nodes[mesh.tets]                  # (T, 4, 3)
        self.div = basis.divergence.reshape(T, 4)

        rule_v = gauss_tet(opts.far_order)
        self.vq = np.einsum("qk,tkx->tqx", rule_v.points, self.verts)
        self.vw = rule_v.weights[None, :] * mesh.volumes[:, None]
        self.F = basis.values_in_tet(self.vq)               # (T, nq, 4, 3)

        rule_s = gauss_tri(opts.surface_order)
        sq, sw = [], []
        for m in range(4):
            tri = self.verts[:, _LOCAL_FACES[m], :]
            p = np.einsum("qk,tkx->tqx", rule_s.points, tri)
            area = 0.5 * np.linalg.norm(
                np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
            sq.append(p)
            sw.append(rule_s.weights[None, :] * area[:, None])
        self.sq = np.stack(sq, axis=1)                      # (T, 4, ns, 3)
        self.sw = np.stack(sw, axis=1)                      # (T, 4, ns)

        # uniformly subdivided source rule for near pairs
        rule_n = gauss_tet(opts.near_order)
        children = (_CHILD_BARY if opts.near_levels == 1
                    else _nested_children(opts.near_levels))
        pts, wts = [], []
        for child in children:
            cv = np.einsum("ij,tjx->tix", child, self.verts)
            pts.append(np.einsum("qk,tkx->tqx", rule_n.points, cv))
            wts.append(rule_n.weights[None, :] * mesh.volumes[:, None]
                       / 8.0 ** opts.near_levels)
        self.nq_pts = np.concatenate(pts, axis=1)           # (T, np2, 3)
        self.nq_w = np.concatenate(wts, axis=1)
        self.Fn = basis.values_in_tet(self.nq_pts)          # (T, np2, 4, 3)


def _nested_children(levels: int):
    mats = _CHILD_BARY
    for _ in range(levels - 1):
        mats = np.array([c @ p for p in mats for c in _CHILD_BARY])
    return mats


def _apex_source_sets(apexes, verts, exclude, n_u, tri_order):
    """Source quadrature concentrated at per-item apex points.

    apexes: (N, 3); verts: (N, 4, 3); exclude: (N,) local face to skip
    (apex on that face) or None (apex interior, all four faces used).
    Returns points (N, ni, 3) and weights (N, ni) summing to the tet volume.
    """
    N = apexes.shape[0]
    u, wu = _gl01(n_u)
    tri_rule = gauss_tri(tri_order)
    if exclude is None:
        faces = np.broadcast_to(_LOCAL_FACES, (N, 4, 3))
    else:
        faces = _LOCAL_FACES[_FACES_EXCLUDING[exclude]]
    tri_verts = verts[np.arange(N)[:, None, None], faces]  # (N, nf, 3, 3)
    d = tri_verts - apexes[:, None, None, :]
    vol_sub = np.abs(np.einsum("nfx,nfx->nf",
                               np.cross(d[:, :, 0], d[:, :, 1]),
                               d[:, :, 2])) / 6.0
    y = np.einsum("qk,nfkx->nfqx", tri_rule.points, tri_verts)
    p = apexes[:, None, None, None, :] + \
        u[None, None, :, None, None] * (y[:, :, None, :, :] -
                                        apexes[:, None, None, None, :])
    w = 3.0 * vol_sub[:, :, None, None] * \
        (wu * u * u)[None, None, :, None] * tri_rule.weights[None, None, None, :]
    nf = faces.shape[1]
    ni = nf * n_u * len(tri_rule.weights)
    return p.reshape(N, ni, 3), w.reshape(N, ni)


class _BandAccumulator:
    def __init__(self, num_tets: int):
        self.T = num_tets
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.ls: list[np.ndarray] = []
        self.blocks: list[np.ndarray] = []

    def add(self, l, rows, cols, blocks):
        keep = np.abs(blocks).max(axis=(1, 2)) > 0.0
        if not keep.any():
            return
        self.ls.append(np.asarray(l)[keep].astype(np.int32))
        self.rows.append(np.asarray(rows)[keep].astype(np.int32))
        self.cols.append(np.asarray(cols)[keep].astype(np.int32))
        self.blocks.append(blocks[keep])

    def build(self, dt: float, temporal_order: int) -> DelayedOperator:
        n = 4 * self.T
        if not self.ls:
            return DelayedOperator([sp.bsr_matrix((n, n), blocksize=(4, 4))],
                                   dt, temporal_order)
        ls = np.concatenate(self.ls)
        rows = np.concatenate(self.rows)
        cols = np.concatenate(self.cols)
        blocks = np.concatenate(self.blocks)
        l_max = int(ls.max())
        Z = []
        for l in range(l_max + 1):
            m = ls == l
            if not m.any():
                Z.append(sp.bsr_matrix((n, n), blocksize=(4, 4)))
                continue
            r, c, b = rows[m], cols[m], blocks[m]
            order = np.lexsort((c, r))
            r, c, b = r[order], c[order], b[order]
            indptr = np.zeros(self.T + 1, dtype=np.int64)
            np.add.at(indptr, r + 1, 1)
            indptr = np.cumsum(indptr)
            Z.append(sp.bsr_matrix((b, c, indptr), shape=(n, n),
                                   blocksize=(4, 4)))
        return DelayedOperator(Z, dt, temporal_order)


def _pair_classes(mesh, opts: AssemblyOptions):
    """Partition ordered tet pairs into face-adjacent, other-near, and far."""
    T = mesh.num_tets
    cent = mesh.centroids
    rc = np.linalg.norm(mesh.nodes[mesh.tets] - cent[:, None, :],
                        axis=2).max(axis=1)

    inc = sp.csr_matrix(
        (np.ones(4 * T), (np.repeat(np.arange(T), 4), mesh.tets.ravel())),
        shape=(T, mesh.num_nodes))
    adj = (inc @ inc.T).tocoo()
    touching = np.zeros((T, T), dtype=bool)
    touching[adj.row, adj.col] = True

    d2 = np.sum((cent[:, None, :] - cent[None, :, :]) ** 2, axis=-1)
    lim = opts.near_factor * (rc[:, None] + rc[None, :])
    near = touching | (d2 < lim * lim)
    np.fill_diagonal(near, False)
    return near


def assemble_Z(basis: BasisSet, temporal: TemporalBasis,
               opts: AssemblyOptions | None = None) -> DelayedOperator:
    """Assemble the full delay band of retarded interaction matrices."""
    opts = opts or AssemblyOptions()
    mesh = basis.mesh
    faces = basis.faces
    T = mesh.num_tets
    dt = temporal.dt
    data = _TetData(basis, opts)
    acc = _BandAccumulator(T)

    near_mask = _pair_classes(mesh, opts)

    # face-adjacent ordered pairs with the local face indices of each side
    face_adj = {}
    for f in range(faces.num_faces):
        if faces.is_boundary[f]:
            continue
        (t0, l0), (t1, l1) = faces.adjacent[f]
        face_adj[(int(t0), int(t1))] = (int(l0), int(l1))
        face_adj[(int(t1), int(t0))] = (int(l1), int(l0))

    a_idx, b_idx = np.nonzero(near_mask)
    is_fadj = np.array([(int(a), int(b)) in face_adj
                        for a, b in zip(a_idx, b_idx)], dtype=bool) \
        if len(a_idx) else np.zeros(0, dtype=bool)

    far_a, far_b = np.nonzero(~near_mask & ~np.eye(T, dtype=bool))

    _assemble_pairs(acc, data, temporal, far_a, far_b, data.vq, data.vw,
                    data.F, opts, shared_faces=None)
    if len(a_idx):
        na, nb = a_idx[~is_fadj], b_idx[~is_fadj]
        _assemble_pairs(acc, data, temporal, na, nb, data.nq_pts, data.nq_w,
                        data.Fn, opts, shared_faces=None,
                        batch=max(256, opts.batch_pairs // 8))
        fa, fb = a_idx[is_fadj], b_idx[is_fadj]
        sf = np.array([face_adj[(int(a), int(b))] for a, b in zip(fa, fb)],
                      dtype=np.int64).reshape(-1, 2)
        _assemble_pairs(acc, data, temporal, fa, fb, data.nq_pts, data.nq_w,
                        data.Fn, opts, shared_faces=sf,
                        batch=max(256, opts.batch_pairs // 8))
    _assemble_self(acc, data, temporal, opts)

    return acc.build(dt, temporal.order)


def _delay_bounds(temporal, rmin, rmax):
    lo = np.floor(rmin / (C0 * temporal.dt) - 1.0).astype(np.int64) + 1
    hi = np.ceil(rmax / (C0 * temporal.dt) + temporal.order).astype(np.int64) - 1
    return np.maximum(lo, 0), np.maximum(hi, 0)


def _assemble_pairs(acc, data, temporal, a_idx, b_idx, src_pts, src_w, src_F,
                    opts, shared_faces=None, batch=None):
    """Volume and surface terms for ordered pairs with a shared source rule.

    ``shared_faces`` (n_pairs, 2) gives (test local face, source local face)
    for face-adjacent pairs, whose shared-face surface term is recomputed
    with an apex-concentrated source rule.
    """
    if len(a_idx) == 0:
        return
    batch = batch or opts.batch_pairs
    dt = temporal.dt
    c1 = -EPS0 * MU0 / (4.0 * np.pi)
    c2 = 1.0 / (4.0 * np.pi)

    for s0 in range(0, len(a_idx), batch):
        A = a_idx[s0:s0 + batch]
        B = b_idx[s0:s0 + batch]
        nb = len(A)
        ra = data.vq[A]                       # (b, nq, 3)
        wa = data.vw[A]
        rb = src_pts[B]                       # (b, np, 3)
        wb = src_w[B]
        R = np.linalg.norm(ra[:, :, None, :] - rb[:, None, :, :], axis=-1)
        Kv = (wa[:, :, None] * wb[:, None, :]) / R

        rs = data.sq[A]                       # (b, 4, ns, 3)
        ws = data.sw[A]
        Rs = np.linalg.norm(rs[:, :, :, None, :] - rb[:, None, None, :, :],
                            axis=-1)          # (b, 4, ns, np)
        Ks = (ws[..., None] * wb[:, None, None, :]) / Rs

        if shared_faces is not None:
            sf = shared_faces[s0:s0 + batch]
            apexes = rs[np.arange(nb), sf[:, 0]]        # (b, ns, 3)
            ns = apexes.shape[1]
            ap_pts, ap_w = _apex_source_sets(
                apexes.reshape(-1, 3),
                np.repeat(data.verts[B], ns, axis=0),
                np.repeat(sf[:, 1], ns),
                opts.radial_points, opts.singular_tri_order)
            ni = ap_pts.shape[1]
            ap_pts = ap_pts.reshape(nb, ns, ni, 3)
            ap_w = ap_w.reshape(nb, ns, ni)
            Rsf = np.linalg.norm(ap_pts - apexes[:, :, None, :], axis=-1)
            wsf = ws[np.arange(nb), sf[:, 0]]
            Ksf = (wsf[..., None] * ap_w) / Rsf          # (b, ns, ni)

        rmin = np.minimum(R.min(axis=(1, 2)), Rs.min(axis=(1, 2, 3)))
        rmax = np.maximum(R.max(axis=(1, 2)), Rs.max(axis=(1, 2, 3)))
        if shared_faces is not None:
            rmin = np.minimum(rmin, Rsf.min(axis=(1, 2)))
            rmax = np.maximum(rmax, Rsf.max(axis=(1, 2)))
        lmin, lmax = _delay_bounds(temporal, rmin, rmax)

        FA = data.F[A]
        FB = src_F[B]
        dA = data.div[A]
        dB = data.div[B]

        sv = temporal.shift_series(lmin[:, None, None] * dt - R / C0)
        ss = temporal.shift_series(lmin[:, None, None, None] * dt - Rs / C0)
        if shared_faces is not None:
            sfx = temporal.shift_series(lmin[:, None, None] * dt - Rsf / C0)

        for w in range(int((lmax - lmin).max()) + 1):
            l = lmin + w
            active = l <= lmax
            T3 = sv.eval(w, 3)
            T1 = sv.eval(w, 1)
            s1 = Kv * T3
            U = np.einsum("bqp,bpnx->bqnx", s1, FB)
            blk = c1 * np.einsum("bqmx,bqnx->bmn", FA, U)
            s3 = np.einsum("bqp,bqp->b", Kv, T1)
            blk -= c2 * s3[:, None, None] * dA[:, :, None] * dB[:, None, :]

            sig = np.einsum("bmsp,bmsp->bm", Ks, ss.eval(w, 1))
            if shared_faces is not None:
                sig_fix = np.einsum("bsi,bsi->b", Ksf, sfx.eval(w, 1))
                sig[np.arange(nb), sf[:, 0]] = sig_fix
            blk += c2 * sig[:, :, None] * dB[:, None, :]

            keep = active & (np.abs(blk).max(axis=(1, 2)) > 0)
            if keep.any():
                acc.add(l[keep], A[keep], B[keep], blk[keep])


def _assemble_self(acc, data, temporal, opts):
    """Self-interaction of each tet (apex-concentrated source rules)."""
    mesh = data.mesh
    T = mesh.num_tets
    dt = temporal.dt
    c1 = -EPS0 * MU0 / (4.0 * np.pi)
    c2 = 1.0 / (4.0 * np.pi)
    nq = data.vq.shape[1]
    ns = data.sq.shape[2]

    batch = max(16, opts.batch_pairs // 64)
    for s0 in range(0, T, batch):
        tets = np.arange(s0, min(s0 + batch, T))
        nb = len(tets)
        verts = data.verts[tets]

        # volume term: apex at each outer volume point
        ap = data.vq[tets].reshape(-1, 3)
        pts, w = _apex_source_sets(ap, np.repeat(verts, nq, axis=0), None,
                                   opts.radial_points, opts.singular_tri_order)
        ni = pts.shape[1]
        pts = pts.reshape(nb, nq, ni, 3)
        w = w.reshape(nb, nq, ni)
        R = np.linalg.norm(pts - data.vq[tets][:, :, None, :], axis=-1)
        Kv = data.vw[tets][:, :, None] * w / R
        FB = data.basis.values_for_tets(tets, pts.reshape(nb, nq * ni, 3)) \
            .reshape(nb, nq, ni, 4, 3)
        FA = data.F[tets]

        # surface term: apex at each face quadrature point
        ap_s = data.sq[tets].reshape(-1, 3)
        excl = np.tile(np.repeat(np.arange(4), ns), nb)
        pts_s, w_s = _apex_source_sets(ap_s, np.repeat(verts, 4 * ns, axis=0),
                                       excl, opts.radial_points,
                                       opts.singular_tri_order)
        ni_s = pts_s.shape[1]
        pts_s = pts_s.reshape(nb, 4, ns, ni_s, 3)
        w_s = w_s.reshape(nb, 4, ns, ni_s)
        Rs = np.linalg.norm(pts_s - data.sq[tets][:, :, :, None, :], axis=-1)
        Ks = data.sw[tets][..., None] * w_s / Rs

        rmax = np.maximum(R.max(axis=(1, 2)), Rs.max(axis=(1, 2, 3)))
        lmin = np.zeros(nb, dtype=np.int64)
        _, lmax = _delay_bounds(temporal, np.zeros(nb), rmax)

        dA = data.div[tets]
        sv = temporal.shift_series(-R / C0)
        ss = temporal.shift_series(-Rs / C0)
        for l_val in range(int(lmax.max()) + 1):
            l = lmin + l_val
            active = l <= lmax
            T3 = sv.eval(l_val, 3)
            T1 = sv.eval(l_val, 1)
            s1 = Kv * T3
            U = np.einsum("bqi,bqinx->bqnx", s1, FB)
            blk = c1 * np.einsum("bqmx,bqnx->bmn", FA, U)
            s3 = np.einsum("bqi,bqi->b", Kv, T1)
            blk -= c2 * s3[:, None, None] * dA[:, :, None] * dA[:, None, :]
            sig = np.einsum("bmsi,bmsi->bm", Ks, ss.eval(l_val, 1))
            blk += c2 * sig[:, :, None] * dA[:, None, :]
            keep = active & (np.abs(blk).max(axis=(1, 2)) > 0)
            if keep.any():
                acc.add(l[keep], tets[keep], tets[keep], blk[keep])


def map_ZED(op: DelayedOperator, P) -> list:
    """Flux-side operator band: Z_ED[l] = -(1/eps0) Z[l] P^T (no requadrature)."""
    Pt = P.T.tocsr()
    return [sparse_product(zl.tocsr(), Pt) * (-1.0 / EPS0) for zl in op.Z]


def history_rhs(op: DelayedOperator, P, history, j: int) -> np.ndarray:
    """Banded history sum at step j over committed samples i < j."""
    n = op.shape[0]
    out = np.zeros(n)
    for l in range(1, min(op.l_max, j - 1) + 1):
        i = j - l
        if i < 1:
            break
        w = (P.T @ history.get_id(i)) / EPS0 - history.get_ie(i)
        if op.Z[l].nnz:
            out += op.Z[l] @ w
    return out


# -- operator cache ----------------------------------------------------------

_CACHE_MAGIC = b"TDVIEZB1"


def cache_key(mesh, dt: float, temporal_order: int,
              opts: AssemblyOptions) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mesh.nodes).tobytes())
    h.update(np.ascontiguousarray(mesh.tets).tobytes())
    h.update(np.ascontiguousarray(mesh.region_id).tobytes())
    h.update(json.dumps({"dt": dt, "p": temporal_order,
                         **opts.key_dict()}, sort_keys=True).encode())
    return h.hexdigest()


def save_operator(op: DelayedOperator, path, key: str) -> None:
    """Binary cache: magic, JSON header, then per-delay block-CSR arrays
    (little-endian int32/float64)."""
    header = {
        "version": 1,
        "key": key,
        "dt": op.dt,
        "temporal_order": op.temporal_order,
        "n": op.shape[0],
        "l_count": len(op.Z),
        "blocks": [int(zl.nnz // 16) if zl.nnz else 0 for zl in op.Z],
    }
    hb = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(_CACHE_MAGIC)
        f.write(np.int64(len(hb)).astype("<i8").tobytes())
        f.write(hb)
        for zl in op.Z:
            z = zl if isinstance(zl, sp.bsr_matrix) else sp.bsr_matrix(zl)
            f.write(z.indptr.astype("<i4").tobytes())
            f.write(z.indices.astype("<i4").tobytes())
            f.write(z.data.astype("<f8").tobytes())


def load_operator(path, key: str | None = None) -> DelayedOperator:
    with open(path, "rb") as f:
        if f.read(8) != _CACHE_MAGIC:
            raise ValueError("not an operator cache file")
        (hlen,) = np.frombuffer(f.read(8), dtype="<i8")
        header = json.loads(f.read(int(hlen)).decode())
        if key is not None and header["key"] != key:
            raise ValueError("operator cache key mismatch")
        n = header["n"]
        nb_rows = n // 4
        Z = []
        for nblocks in header["blocks"]:
            indptr = np.frombuffer(f.read(4 * (nb_rows + 1)), dtype="<i4")
            indices = np.frombuffer(f.read(4 * nblocks), dtype="<i4")
            data = np.frombuffer(f.read(8 * nblocks * 16), dtype="<f8")
            Z.append(sp.bsr_matrix(
                (data.reshape(-1, 4, 4).copy(),
                 indices.astype(np.int32), indptr.astype(np.int64)),
                shape=(n, n), blocksize=(4, 4)))
    return DelayedOperator(Z, header["dt"], header["temporal_order"])
