"""Temporal interpolation and predictor/corrector coefficient generation.

The interpolation function T(t) is the piecewise-Lagrange kernel of backward
interpolation: for t inside a step interval, the field is the degree-p
polynomial through the p+1 most recent samples, the newest sample sitting at
the right end of the interval. Sample i therefore influences times in
``((i-1)*dt, (i+p)*dt)``: one interval of anticipation ahead of its own node
(which is what lets the current-step sample couple to retarded times less
than one step in the past), and no dependence on samples newer than the
current one, so delay matrices vanish for negative delay.

T is continuous, satisfies T(0)=1 and T(q*dt)=0 at the other in-support
nodes, and the family {T(t - i*dt)} reproduces polynomials (in particular it
is a partition of unity). Derivatives are one-sided from the right at the
breakpoints.

Predictor/corrector weights are generated from polynomial order conditions
(small Vandermonde solves) rather than hard-coded tables, so exactness is
testable against the generator itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_MULTISTEP = 6


class TemporalBasis:
    """Shifted piecewise-Lagrange interpolation kernel of order ``order``."""

    def __init__(self, dt: float, order: int = 3):
        if not 1 <= order <= 8:
            raise ValueError(f"unsupported temporal order {order}")
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.dt = float(dt)
        self.order = int(order)
        p = self.order
        # segment s covers v in [s-1, s), v = t/dt; one polynomial per segment
        coeffs = np.zeros((p + 1, p + 1))
        for s in range(p + 1):
            poly = np.poly1d([1.0])
            for sig in range(p + 1):
                if sig == s:
                    continue
                poly = poly * np.poly1d([1.0, sig - s]) / (sig - s)
            coeffs[s, -poly.order - 1:] = poly.coeffs
        # self._tables[d][s]: power-basis coeffs (in v) of the d-th derivative
        tables = [coeffs]
        for d in range(1, 4):
            tbl = np.zeros((p + 1, p + 1))
            for s in range(p + 1):
                der = np.polyder(np.poly1d(coeffs[s]), d).coeffs
                tbl[s, p + 1 - len(der):] = der
            tables.append(tbl)
        self._tables = tables
        # per-derivative column views (tiny arrays; gathered per point)
        self._cols = [[np.ascontiguousarray(t[:, k]) for k in range(p + 1)]
                      for t in tables]

    @property
    def support(self) -> tuple[float, float]:
        """Open support of T in seconds."""
        return (-self.dt, self.order * self.dt)

    def delay_window(self, r_min: float, r_max: float, c0: float) -> tuple[int, int]:
        """Inclusive range of delay indices l with T(l*dt - R/c0) != 0 for
        some R in [r_min, r_max]; lower bound clamped at 0."""
        lo = int(np.floor(r_min / (c0 * self.dt) - 1.0)) + 1
        hi = int(np.ceil(r_max / (c0 * self.dt) + self.order)) - 1
        return max(lo, 0), max(hi, 0)

    def eval_shifted(self, tau, d: int = 0) -> np.ndarray:
        """T^(d)(tau) for array tau in seconds; zero outside the support."""
        if d not in (0, 1, 2, 3):
            raise ValueError("derivative order must be 0..3")
        tau = np.asarray(tau, dtype=float)
        v = tau / self.dt
        idx = np.floor(v).astype(np.int64) + 1
        return self._eval_segments(v, idx, d)

    def _eval_segments(self, v, idx, d: int) -> np.ndarray:
        shape = np.shape(v)
        vf = np.ravel(v)
        flat = np.ravel(idx)
        ok = (flat >= 0) & (flat <= self.order)
        flat = np.where(ok, flat, 0)
        cols = self._cols[d]
        out = cols[0][flat]
        for k in range(1, len(cols)):
            out *= vf
            out += cols[k][flat]
        out[~ok] = 0.0
        out /= self.dt ** d
        return out.reshape(shape)

    def shift_series(self, tau0) -> "ShiftSeries":
        """Evaluator for T^(d)(tau0 + w*dt) over integer offsets w.

        Computes the segment decomposition of tau0 once; each offset is an
        exact integer segment shift.
        """
        return ShiftSeries(self, tau0)

    def eval(self, i: int, t, d: int = 0):
        """T^(d)(t - i*dt); scalar in for scalar out."""
        t = np.asarray(t, dtype=float)
        res = self.eval_shifted(t - i * self.dt, d)
        return float(res) if res.ndim == 0 else res


class ShiftSeries:
    """Batched kernel evaluation at ``tau0 + w * dt`` for integer w."""

    def __init__(self, basis: TemporalBasis, tau0):
        self.basis = basis
        self.v0 = np.asarray(tau0, dtype=float) / basis.dt
        self.idx0 = np.floor(self.v0).astype(np.int64) + 1

    def eval(self, w: int, d: int) -> np.ndarray:
        return self.basis._eval_segments(self.v0 + w, self.idx0 + w, d)


def eval_T(basis: TemporalBasis, i: int, t, d: int = 0):
    return basis.eval(i, t, d)


@dataclass(frozen=True)
class MultistepCoeffs:
    """Predictor/corrector weight vectors in the marching layout.

    ``p`` has length 2k: positions l=1..k weight the values I[j-1+l-k] and
    positions k+l weight the derivatives dI[j-1+l-k]. ``c`` has length 2k+1
    with the extra last entry weighting the current-step derivative dI[j].
    Derivative weights include the dt factor.
    """

    k: int
    p: np.ndarray
    c: np.ndarray


def predictor_coeffs(k: int, dt: float, method: str = "adams-bashforth") -> np.ndarray:
    """Adams-Bashforth predictor weights, length 2k, in marching layout."""
    if method != "adams-bashforth":
        raise ValueError(f"unsupported predictor method {method!r}")
    if not 1 <= k <= MAX_MULTISTEP:
        raise ValueError(f"unsupported multistep count k={k}")
    # I_j = I_{j-1} + dt * sum_s beta_s dI_{j-s}; exact for t^q, q=1..k
    M = np.empty((k, k))
    rhs = np.empty(k)
    for q in range(1, k + 1):
        for s in range(1, k + 1):
            M[q - 1, s - 1] = q * (-float(s)) ** (q - 1)
        rhs[q - 1] = (-1.0) ** (q + 1)
    beta = np.linalg.solve(M, rhs)
    p = np.zeros(2 * k)
    p[k - 1] = 1.0
    for s in range(1, k + 1):
        p[2 * k - s] = dt * beta[s - 1]
    return p


def corrector_coeffs(k: int, dt: float, method: str = "backward-difference") -> np.ndarray:
    """BDF-k corrector weights, length 2k+1, in marching layout."""
    if method != "backward-difference":
        raise ValueError(f"unsupported corrector method {method!r}")
    if not 1 <= k <= MAX_MULTISTEP:
        raise ValueError(f"unsupported multistep count k={k}")
    # sum_{s=0..k} a_s I_{j-s} = dt * dI_j; exact for t^q, q=0..k
    M = np.empty((k + 1, k + 1))
    rhs = np.zeros(k + 1)
    for q in range(k + 1):
        for s in range(k + 1):
            M[q, s] = (-float(s)) ** q
        rhs[q] = 1.0 if q == 1 else 0.0
    a = np.linalg.solve(M, rhs)
    c = np.zeros(2 * k + 1)
    for l in range(1, k + 1):
        s = k + 1 - l
        c[l - 1] = -a[s] / a[0]
    c[2 * k] = dt / a[0]
    return c


def multistep_coeffs(k: int, dt: float) -> MultistepCoeffs:
    return MultistepCoeffs(k=k, p=predictor_coeffs(k, dt),
                           c=corrector_coeffs(k, dt))
