"""Explicit predict-evaluate-(correct-evaluate)^m time marching.

Each step j: freeze the part of the right-hand side built from committed
history, predict the field coefficients with an Adams-Bashforth rule, pass
them through the constitutive pair (field -> flux solve, rational inverse
back to the field), evaluate the time derivative from the current-step
operator, then iterate backward-difference corrections blended by an
over-relaxation factor until the iterate-difference test passes. Only sparse,
well-conditioned overlap systems are solved, so the scheme needs no nonlinear
solver; divergence of the correction loop aborts the run rather than
committing a bad sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import DelayedOperator, history_rhs
from .constants import EPS0
from .constitutive import MaterialOps, pade_update, solve_constitutive
from .linalg import BlockJacobi, tfqmr_solve
from .temporal import corrector_coeffs, predictor_coeffs


class CorrectorDivergence(RuntimeError):
    """Correction loop exceeded m_max at some step; the run is aborted."""


@dataclass
class MarchConfig:
    dt: float
    n_steps: int
    k: int = 6
    alpha: float = 0.3
    m_max: int = 100
    eps_pece: float = 1e-13
    eps_its: float = 1e-12
    warm_start: bool = True
    precondition_gram: bool = False
    freeze_linear: bool = False   # hold material diagonals at their zero-field values
    max_solver_iters: int = 2000

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.dt <= 0 or self.n_steps < 1:
            raise ValueError("dt must be positive and n_steps >= 1")


class StateHistory:
    """Ring buffers of committed samples; quiescent (zero) for i <= 0."""

    def __init__(self, n_e: int, n_d: int, depth: int):
        self.depth = depth
        self._ie = np.zeros((depth, n_e))
        self._die = np.zeros((depth, n_e))
        self._id = np.zeros((depth, n_d))
        self.j = 0  # last committed step

    def _slot(self, i: int) -> int:
        return i % self.depth

    def _check(self, i: int):
        if i > self.j or i <= self.j - self.depth:
            raise IndexError(f"sample {i} not retained (last={self.j}, "
                             f"depth={self.depth})")

    def get_ie(self, i: int) -> np.ndarray:
        if i <= 0:
            return np.zeros(self._ie.shape[1])
        self._check(i)
        return self._ie[self._slot(i)]

    def get_die(self, i: int) -> np.ndarray:
        if i <= 0:
            return np.zeros(self._die.shape[1])
        self._check(i)
        return self._die[self._slot(i)]

    def get_id(self, i: int) -> np.ndarray:
        if i <= 0:
            return np.zeros(self._id.shape[1])
        self._check(i)
        return self._id[self._slot(i)]

    def commit(self, i_e, di_e, i_d):
        self.j += 1
        s = self._slot(self.j)
        self._ie[s] = i_e
        self._die[s] = di_e
        self._id[s] = i_d


def predict(history: StateHistory, p: np.ndarray, j: int) -> np.ndarray:
    """Adams-Bashforth prediction from the k most recent samples."""
    k = len(p) // 2
    out = np.zeros_like(history.get_ie(j - 1))
    for l in range(1, k + 1):
        i = j - 1 + l - k
        if p[l - 1]:
            out += p[l - 1] * history.get_ie(i)
        if p[k + l - 1]:
            out += p[k + l - 1] * history.get_die(i)
    return out


def correct(history: StateHistory, di_current: np.ndarray, c: np.ndarray,
            alpha: float, previous: np.ndarray, j: int) -> np.ndarray:
    """One backward-difference correction blended with the previous iterate."""
    k = (len(c) - 1) // 2
    out = c[2 * k] * di_current
    for l in range(1, k + 1):
        i = j - 1 + l - k
        if c[l - 1]:
            out += c[l - 1] * history.get_ie(i)
        if c[k + l - 1]:
            out += c[k + l - 1] * history.get_die(i)
    return alpha * out + (1.0 - alpha) * previous


def converged(current: np.ndarray, previous: np.ndarray, eps: float) -> bool:
    """Iterate-difference test; identical iterates always pass."""
    if np.array_equal(current, previous):
        return True
    return bool(np.linalg.norm(current - previous)
                < np.linalg.norm(current) * eps)


@dataclass
class StepDiagnostics:
    step: int
    correctors: int
    solver_iterations: int
    norm_ie: float


@dataclass
class MarchResult:
    history: StateHistory
    norms: np.ndarray
    diagnostics: list[StepDiagnostics]
    probes: dict = field(default_factory=dict)
    spectra: dict = field(default_factory=dict)
    ie_full: np.ndarray | None = None
    id_full: np.ndarray | None = None


class ProbeRecorder:
    """Samples E and D (3-vectors) at fixed points every committed step."""

    def __init__(self, basis, points):
        from .postproc import locate_point
        self.points = [np.asarray(p, dtype=float) for p in points]
        self._loc = [locate_point(basis.mesh, p) for p in self.points]
        self._maps = []
        for (tet, _), p in zip(self._loc, self.points):
            vals = basis.values_for_tets(np.array([tet]), p[None, None, :])
            self._maps.append((tet, vals[0, 0].T))  # (3, 4)
        self.P = basis.P
        self.e_series = [[] for _ in self.points]
        self.d_series = [[] for _ in self.points]

    def record(self, i_e, i_d):
        q = self.P.T @ i_d
        for s, (tet, M) in enumerate(self._maps):
            sl = slice(4 * tet, 4 * tet + 4)
            self.e_series[s].append(M @ i_e[sl])
            self.d_series[s].append(M @ q[sl])


class SpectrumRecorder:
    """Running discrete Fourier accumulation of the coefficient vectors.

    Accumulates rectangle sums of IE and (P^T-free) ID at fixed frequencies;
    ``finalize`` applies the trapezoid end correction. Sample j=0 is zero by
    quiescence, so only committed steps contribute.
    """

    def __init__(self, frequencies, n_e: int, n_d: int, dt: float):
        self.freqs = np.asarray(frequencies, dtype=float)
        self.dt = dt
        self.e_hat = np.zeros((len(self.freqs), n_e), dtype=complex)
        self.d_hat = np.zeros((len(self.freqs), n_d), dtype=complex)
        self._last = None

    def record(self, j, i_e, i_d):
        phase = np.exp(-2j * np.pi * self.freqs * j * self.dt) * self.dt
        self.e_hat += phase[:, None] * i_e[None, :]
        self.d_hat += phase[:, None] * i_d[None, :]
        self._last = (j, i_e.copy(), i_d.copy())

    def finalize(self):
        if self._last is not None:
            j, i_e, i_d = self._last
            phase = np.exp(-2j * np.pi * self.freqs * j * self.dt) * self.dt
            self.e_hat -= 0.5 * phase[:, None] * i_e[None, :]
            self.d_hat -= 0.5 * phase[:, None] * i_d[None, :]
            self._last = None
        return self


def run_mot(op: DelayedOperator, gram_ee, material_ops: MaterialOps,
            vinc, cfg: MarchConfig, probe_recorder: ProbeRecorder = None,
            spectrum_recorder: SpectrumRecorder = None,
            keep_full_history: bool = False) -> MarchResult:
    """Run the marching loop for cfg.n_steps steps.

    ``vinc`` maps a time in seconds to the tested incident vector. Committed
    samples are pushed to the recorders; per-step diagnostics collect the
    correction count, total solver iterations, and the state norm.
    """
    P = material_ops.P
    Pt = material_ops.Pt
    n_e = gram_ee.shape[0]
    n_d = P.shape[0]
    gram_dd = (P @ gram_ee @ Pt).tocsr()
    dt = cfg.dt

    pre_ee = BlockJacobi(gram_ee) if cfg.precondition_gram else None
    pre_dd = None

    p_coef = predictor_coeffs(cfg.k, dt)
    c_coef = corrector_coeffs(cfg.k, dt)

    depth = max(op.l_max, cfg.k) + 2
    history = StateHistory(n_e, n_d, depth)

    se_lin = material_ops.linear_SE()
    sd_lin = material_ops.linear_SD()

    norms = np.zeros(cfg.n_steps)
    diags: list[StepDiagnostics] = []
    ie_full = np.zeros((cfg.n_steps + 1, n_e)) if keep_full_history else None
    id_full = np.zeros((cfg.n_steps + 1, n_d)) if keep_full_history else None

    last_id = np.zeros(n_d)
    last_die = np.zeros(n_e)
    z0 = op.Z[0]

    def gram_solve(rhs, x0):
        return tfqmr_solve(gram_ee, rhs, eps=cfg.eps_its,
                           max_iters=cfg.max_solver_iters, x0=x0,
                           precond=pre_ee)

    for j in range(1, cfg.n_steps + 1):
        iters = 0
        t_j = j * dt
        v_fix = vinc(t_j) + history_rhs(op, P, history, j)

        # predict, then enforce the constitutive pair
        ie = predict(history, p_coef, j)
        se = se_lin if cfg.freeze_linear else material_ops.build_SE(ie)
        res = solve_constitutive(ie, se, gram_ee, gram_dd, P,
                                 eps_its=cfg.eps_its,
                                 x0=last_id if cfg.warm_start else None,
                                 max_iters=cfg.max_solver_iters,
                                 precond=pre_dd)
        i_d = res.x
        iters += res.iterations
        sd = sd_lin if cfg.freeze_linear else material_ops.build_SD(i_d)
        ie = pade_update(i_d, sd, P)

        rhs = v_fix + z0 @ (Pt @ i_d / EPS0 - ie)
        res = gram_solve(rhs, last_die if cfg.warm_start else None)
        die = res.x
        iters += res.iterations

        m_used = 0
        for m in range(1, cfg.m_max + 1):
            ie_new = correct(history, die, c_coef, cfg.alpha, ie, j)
            se = se_lin if cfg.freeze_linear else material_ops.build_SE(ie_new)
            res = solve_constitutive(ie_new, se, gram_ee, gram_dd, P,
                                     eps_its=cfg.eps_its,
                                     x0=i_d if cfg.warm_start else None,
                                     max_iters=cfg.max_solver_iters,
                                     precond=pre_dd)
            i_d = res.x
            iters += res.iterations
            sd = sd_lin if cfg.freeze_linear else material_ops.build_SD(i_d)
            ie_prev = ie
            ie = pade_update(i_d, sd, P)

            rhs = v_fix + z0 @ (Pt @ i_d / EPS0 - ie)
            res = gram_solve(rhs, die if cfg.warm_start else None)
            die = res.x
            iters += res.iterations

            m_used = m
            if converged(ie, ie_prev, cfg.eps_pece):
                break
        else:
            raise CorrectorDivergence(
                f"step {j}: correction loop did not converge within "
                f"m_max={cfg.m_max} iterations")

        history.commit(ie, die, i_d)
        last_id = i_d
        last_die = die
        norms[j - 1] = np.linalg.norm(ie)
        diags.append(StepDiagnostics(j, m_used, iters, norms[j - 1]))
        if probe_recorder is not None:
            probe_recorder.record(ie, i_d)
        if spectrum_recorder is not None:
            spectrum_recorder.record(j, ie, i_d)
        if keep_full_history:
            ie_full[j] = ie
            id_full[j] = i_d

    if spectrum_recorder is not None:
        spectrum_recorder.finalize()
    result = MarchResult(history=history, norms=norms, diagnostics=diags,
                         ie_full=ie_full, id_full=id_full)
    if probe_recorder is not None:
        result.probes = {
            "points": probe_recorder.points,
            "E": [np.array(s) for s in probe_recorder.e_series],
            "D": [np.array(s) for s in probe_recorder.d_series],
        }
    if spectrum_recorder is not None:
        result.spectra = {"frequencies": spectrum_recorder.freqs,
                          "E": spectrum_recorder.e_hat,
                          "D": spectrum_recorder.d_hat}
    return result
