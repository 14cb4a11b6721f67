"""Sparse products and a transpose-free QMR solver.

Storage and products are delegated to scipy.sparse (CSR/BSR); the thin
wrappers here add the dimension checks the rest of the package relies on.

The TFQMR solver stops on the iterate-difference criterion
``||x_n - x_{n-1}|| < eps * ||b||`` (each half-sweep updates x by eta*d, so
the difference norm is |eta|*||d||), and additionally reports the true
relative residual of the returned iterate for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


def spmv(A, x: np.ndarray) -> np.ndarray:
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"spmv dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


def sparse_product(A, B):
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"product dimension mismatch: {A.shape} @ {B.shape}")
    C = (A @ B).tocsr()
    C.sum_duplicates()
    C.sort_indices()
    return C


class BlockJacobi:
    """Exact inverse of the 4x4 diagonal blocks of a block-diagonal matrix."""

    def __init__(self, A):
        A = sp.bsr_matrix(A, blocksize=(4, 4))
        n_blocks = A.shape[0] // 4
        blocks = np.zeros((n_blocks, 4, 4))
        for bi in range(n_blocks):
            row = A.data[A.indptr[bi]:A.indptr[bi + 1]]
            cols = A.indices[A.indptr[bi]:A.indptr[bi + 1]]
            diag = np.nonzero(cols == bi)[0]
            if diag.size:
                blocks[bi] = row[diag[0]]
        self._inv = np.linalg.inv(blocks)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("bij,bj->bi", self._inv, x.reshape(-1, 4)).ravel()


class Jacobi:
    """Plain diagonal scaling."""

    def __init__(self, A):
        d = np.asarray(A.diagonal())
        self._inv = np.where(d != 0, 1.0 / np.where(d == 0, 1.0, d), 1.0)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self._inv * x


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual: float  # true relative residual ||Ax-b||/||b|| at exit


def tfqmr_solve(A, b: np.ndarray, eps: float = 1e-12, max_iters: int = 2000,
                x0: np.ndarray | None = None, precond=None) -> SolveResult:
    """Freund's transpose-free QMR with iterate-difference stopping.

    ``precond`` is an optional callable applying an approximate inverse
    (right preconditioning; the returned x solves the original system).
    """
    if A.shape[0] != A.shape[1]:
        raise ValueError("tfqmr requires a square matrix")
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side contains non-finite entries")
    norm_b = np.linalg.norm(b)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if norm_b == 0.0:
        return SolveResult(np.zeros(n), 0, True, 0.0)
    M = (lambda v: v) if precond is None else precond

    r0 = b - A @ x
    w = r0.copy()
    y = r0.copy()
    rho = float(r0 @ r0)
    if np.sqrt(rho) < eps * norm_b:
        return SolveResult(x, 0, True, float(np.linalg.norm(b - A @ x) / norm_b))
    d = np.zeros(n)
    theta = 0.0
    eta = 0.0
    tau = np.sqrt(rho)
    z = M(y)
    u = A @ z
    v = u.copy()
    tol = eps * norm_b
    converged = False
    k = 0

    while k < max_iters and not converged:
        k += 1
        sigma = float(r0 @ v)
        if sigma == 0.0 or rho == 0.0:
            break  # breakdown; return best iterate
        alpha = rho / sigma

        for half in (0, 1):
            if half == 1:
                y = y - alpha * v
                z = M(y)
                u = A @ z
            w = w - alpha * u
            d = z + (theta * theta * eta / alpha) * d
            theta = np.linalg.norm(w) / tau
            cfac = 1.0 / np.sqrt(1.0 + theta * theta)
            tau = tau * theta * cfac
            eta = cfac * cfac * alpha
            x = x + eta * d
            if abs(eta) * np.linalg.norm(d) < tol:
                converged = True
                break

        if converged:
            break
        rho_new = float(r0 @ w)
        beta = rho_new / rho
        rho = rho_new
        y = w + beta * y
        u_old = u
        z = M(y)
        u = A @ z
        v = u + beta * (u_old + beta * v)

    resid = float(np.linalg.norm(b - A @ x) / norm_b)
    return SolveResult(x, k, converged, resid)
