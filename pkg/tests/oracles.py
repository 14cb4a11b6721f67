"""Independent-path oracles shared by the test suite.

These deliberately re-derive quantities through different compositions than
the production code (per-sample temporal sums instead of delay banding,
loop-based quadrature, analytic potentials) so they can catch bookkeeping
errors in the fast paths.
"""

import numpy as np

from tdvie.assembly import AssemblyOptions, _TetData, _apex_source_sets, _pair_classes
from tdvie.constants import C0, EPS0, MU0


def retarded_field_direct(mesh, faces, basis, temporal, opts, X, j):
    """Tested scattered-field sum at step j from coefficient samples X.

    X has shape (n_samples+1, n_e); X[i] is the sample at step i (X[0] must
    be zero). Evaluates the three kernel terms with the same quadrature
    point sets as production assembly but sums over absolute retarded times
    per history sample, with no delay-index decomposition.
    """
    dt = temporal.dt
    data = _TetData(basis, opts)
    near = _pair_classes(mesh, opts)
    T = mesh.num_tets
    n_hist = X.shape[0] - 1
    c1 = -EPS0 * MU0 / (4 * np.pi)
    c2 = 1 / (4 * np.pi)

    def hist(tau, d):
        return np.stack([temporal.eval_shifted(tau - i * dt, d)
                         for i in range(n_hist + 1)], axis=-1)

    shared_faces = {}
    for f in range(faces.num_faces):
        if faces.is_boundary[f]:
            continue
        (t0, l0), (t1, l1) = faces.adjacent[f]
        shared_faces[(int(t0), int(t1))] = (int(l0), int(l1))
        shared_faces[(int(t1), int(t0))] = (int(l1), int(l0))

    out = np.zeros(basis.num_e)
    for A in range(T):
        FA = data.F[A]
        dA = data.div[A]
        wa = data.vw[A]
        for B in range(T):
            xb = X[:, 4 * B:4 * B + 4]
            dB = data.div[B]
            if A == B:
                nq = data.vq.shape[1]
                ap = data.vq[A]
                pts, w = _apex_source_sets(
                    ap, np.repeat(mesh.tet_nodes(A)[None], nq, axis=0), None,
                    opts.radial_points, opts.singular_tri_order)
                R = np.linalg.norm(pts - ap[:, None, :], axis=-1)
                FB = basis.values_for_tets(np.full(nq, A), pts)
                Kv = wa[:, None] * w / R
                tau = j * dt - R / C0
                I3 = np.einsum("qih,hn->qin", hist(tau, 3), xb)
                I1 = np.einsum("qih,hn->qin", hist(tau, 1), xb)
                t1 = c1 * np.einsum("qmx,qi,qin,qinx->m", FA, Kv, I3, FB)
                t3 = -c2 * dA * np.einsum("qi,qin,n->", Kv, I1, dB)
                ns = data.sq.shape[2]
                ap_s = data.sq[A].reshape(-1, 3)
                excl = np.repeat(np.arange(4), ns)
                pts_s, w_s = _apex_source_sets(
                    ap_s, np.repeat(mesh.tet_nodes(A)[None], 4 * ns, axis=0),
                    excl, opts.radial_points, opts.singular_tri_order)
                ni_s = pts_s.shape[1]
                Rs = np.linalg.norm(pts_s - ap_s[:, None, :],
                                    axis=-1).reshape(4, ns, ni_s)
                Ks = data.sw[A][..., None] * w_s.reshape(4, ns, ni_s) / Rs
                I1s = np.einsum("msih,hn->msin", hist(j * dt - Rs / C0, 1), xb)
                t2 = c2 * np.einsum("msi,msin,n->m", Ks, I1s, dB)
                out[4 * A:4 * A + 4] += t1 + t3 + t2
                continue

            if near[A, B]:
                rb, wb, FBt = data.nq_pts[B], data.nq_w[B], data.Fn[B]
            else:
                rb, wb, FBt = data.vq[B], data.vw[B], data.F[B]
            ra = data.vq[A]
            R = np.linalg.norm(ra[:, None, :] - rb[None, :, :], axis=-1)
            Kv = wa[:, None] * wb[None, :] / R
            tau = j * dt - R / C0
            I3 = np.einsum("qph,hn->qpn", hist(tau, 3), xb)
            I1 = np.einsum("qph,hn->qpn", hist(tau, 1), xb)
            t1 = c1 * np.einsum("qmx,qp,qpn,pnx->m", FA, Kv, I3, FBt)
            t3 = -c2 * dA * np.einsum("qp,qpn,n->", Kv, I1, dB)
            shared = shared_faces.get((A, B))
            t2 = np.zeros(4)
            for mloc in range(4):
                if shared is not None and mloc == shared[0]:
                    aps = data.sq[A, mloc]
                    ptsf, wf = _apex_source_sets(
                        aps, np.repeat(mesh.tet_nodes(B)[None], len(aps), axis=0),
                        np.full(len(aps), shared[1]),
                        opts.radial_points, opts.singular_tri_order)
                    Rf = np.linalg.norm(ptsf - aps[:, None, :], axis=-1)
                    Kf = data.sw[A, mloc][:, None] * wf / Rf
                    I1f = np.einsum("sih,hn->sin", hist(j * dt - Rf / C0, 1), xb)
                    t2[mloc] = c2 * np.einsum("si,sin,n->", Kf, I1f, dB)
                else:
                    Rsm = np.linalg.norm(data.sq[A, mloc][:, None, :]
                                         - rb[None, :, :], axis=-1)
                    Ksm = data.sw[A, mloc][:, None] * wb[None, :] / Rsm
                    I1m = np.einsum("sph,hn->spn", hist(j * dt - Rsm / C0, 1), xb)
                    t2[mloc] = c2 * np.einsum("sp,spn,n->", Ksm, I1m, dB)
            out[4 * A:4 * A + 4] += t1 + t3 + t2
    return out


def banded_field(op, X, j):
    """Same quantity via the assembled delay band."""
    out = np.zeros(op.shape[0])
    for l in range(op.l_max + 1):
        if j - l >= 0 and op.Z[l].nnz:
            out += op.Z[l] @ X[j - l]
    return out
