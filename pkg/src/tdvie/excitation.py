"""Incident plane-wave excitation: pulse shapes and the tested field vector.

Three band-limited pulse shapes are provided, all with closed-form first
derivatives (no numeric differentiation on production paths):

* ``ModulatedGaussian``: cos(2 pi f0 (t - t_p)) * exp(-(t - t_p)^2 / 2 sigma^2)
* ``TwoTone``: fixed-weight sum 0.25 cos(2 pi f1 tau) + 0.5 cos(2 pi f2 tau)
  under the same Gaussian envelope
* ``GatedCW``: Gaussian rise until t1, pure carrier until t2, Gaussian decay

When a bandwidth is given instead of a duration, ``sigma = 3 / (2 pi f_bw)``,
which puts 99.997% of the pulse power inside [f0 - f_bw, f0 + f_bw].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSet
from .constants import C0
from .quadrature import gauss_tet

_TWO_PI = 2.0 * np.pi


def _sigma_from_bw(f_bw: float) -> float:
    return 3.0 / (_TWO_PI * f_bw)


@dataclass(frozen=True)
class ModulatedGaussian:
    f0: float
    f_bw: float | None = None
    sigma: float | None = None
    t_p: float | None = None
    t_p_over_sigma: float = 8.0

    def __post_init__(self):
        sig = self.sigma if self.sigma is not None else _sigma_from_bw(self.f_bw)
        object.__setattr__(self, "sigma", sig)
        if self.f_bw is None:
            object.__setattr__(self, "f_bw", 3.0 / (_TWO_PI * sig))
        if self.t_p is None:
            object.__setattr__(self, "t_p", self.t_p_over_sigma * sig)

    @property
    def f_max(self) -> float:
        return self.f0 + self.f_bw

    def active_until(self) -> float:
        return self.t_p + 8.0 * self.sigma

    def __call__(self, t, d: int = 0):
        tau = np.asarray(t, dtype=float) - self.t_p
        w = _TWO_PI * self.f0
        env = np.exp(-tau * tau / (2.0 * self.sigma ** 2))
        if d == 0:
            return np.cos(w * tau) * env
        return (-w * np.sin(w * tau) - (tau / self.sigma ** 2) * np.cos(w * tau)) * env


@dataclass(frozen=True)
class TwoTone:
    """Two modulated Gaussians of equal delay/duration; weights 1:2."""

    f1: float
    f2: float
    f_bw: float | None = None
    sigma: float | None = None
    t_p: float | None = None
    t_p_over_sigma: float = 14.0
    a1: float = field(default=0.25, init=False)
    a2: float = field(default=0.5, init=False)

    def __post_init__(self):
        sig = self.sigma if self.sigma is not None else _sigma_from_bw(self.f_bw)
        object.__setattr__(self, "sigma", sig)
        if self.f_bw is None:
            object.__setattr__(self, "f_bw", 3.0 / (_TWO_PI * sig))
        if self.t_p is None:
            object.__setattr__(self, "t_p", self.t_p_over_sigma * sig)

    @property
    def f_max(self) -> float:
        return max(self.f1, self.f2) + self.f_bw

    def active_until(self) -> float:
        return self.t_p + 8.0 * self.sigma

    def __call__(self, t, d: int = 0):
        tau = np.asarray(t, dtype=float) - self.t_p
        w1, w2 = _TWO_PI * self.f1, _TWO_PI * self.f2
        env = np.exp(-tau * tau / (2.0 * self.sigma ** 2))
        mix = self.a1 * np.cos(w1 * tau) + self.a2 * np.cos(w2 * tau)
        if d == 0:
            return mix * env
        dmix = -self.a1 * w1 * np.sin(w1 * tau) - self.a2 * w2 * np.sin(w2 * tau)
        return (dmix - (tau / self.sigma ** 2) * mix) * env


@dataclass(frozen=True)
class GatedCW:
    """Gated carrier: Gaussian turn-on, CW hold, Gaussian turn-off.

    Value and first derivative are continuous at t1 by construction; at t2
    they are continuous when f0 * (t2 - t1) is an integer (whole carrier
    cycles in the hold window).
    """

    f0: float
    sigma: float
    t1: float
    t2: float

    @property
    def f_bw(self) -> float:
        return 3.0 / (_TWO_PI * self.sigma)

    @property
    def f_max(self) -> float:
        return self.f0 + self.f_bw

    def active_until(self) -> float:
        return self.t2 + 8.0 * self.sigma

    def __call__(self, t, d: int = 0):
        t = np.asarray(t, dtype=float)
        w = _TWO_PI * self.f0
        tau1 = t - self.t1
        tau2 = t - self.t2

        def branch(tau, gated):
            if gated:
                if d == 0:
                    return np.cos(w * tau)
                return -w * np.sin(w * tau)
            env = np.exp(-tau * tau / (2.0 * self.sigma ** 2))
            if d == 0:
                return np.cos(w * tau) * env
            return (-w * np.sin(w * tau) - (tau / self.sigma ** 2)
                    * np.cos(w * tau)) * env

        rise = t < self.t1
        hold = (t >= self.t1) & (t < self.t2)
        fall = t >= self.t2
        out = np.where(rise, branch(tau1, False), 0.0)
        out = np.where(hold, branch(tau1, True), out)
        out = np.where(fall, branch(tau2, False), out)
        return out if out.ndim else float(out)


Pulse = ModulatedGaussian | TwoTone | GatedCW


def eval_pulse(pulse: Pulse, t, d: int = 0):
    if d not in (0, 1):
        raise ValueError("pulse derivative order must be 0 or 1")
    res = pulse(t, d)
    return float(res) if np.ndim(res) == 0 else res


@dataclass(frozen=True)
class PlaneWave:
    """Linearly polarized plane wave E0 * p_hat * P(t - r.k_hat / c0)."""

    amplitude: float
    polarization: np.ndarray
    direction: np.ndarray
    pulse: Pulse

    def __post_init__(self):
        p = np.asarray(self.polarization, dtype=float)
        k = np.asarray(self.direction, dtype=float)
        if np.linalg.norm(p) == 0 or np.linalg.norm(k) == 0:
            raise ValueError("polarization and direction must be nonzero")
        p = p / np.linalg.norm(p)
        k = k / np.linalg.norm(k)
        if abs(p @ k) > 1e-12:
            raise ValueError("polarization must be orthogonal to direction")
        object.__setattr__(self, "polarization", p)
        object.__setattr__(self, "direction", k)


def eval_incident(wave: PlaneWave, r, t, d: int = 0) -> np.ndarray:
    """Incident field (d=0, V/m) or its time derivative (d=1) at point(s) r."""
    r = np.asarray(r, dtype=float)
    delay = (np.atleast_2d(r) @ wave.direction) / C0
    amp = wave.amplitude * eval_pulse(wave.pulse, np.asarray(t) - delay, d)
    out = np.atleast_1d(amp)[..., None] * wave.polarization
    return out[0] if r.ndim == 1 else out


class IncidentAssembler:
    """Per-step tested incident vector with cached geometry.

    Entry m of the vector is the volume integral of half function m dotted
    with the time derivative of the incident field.
    """

    def __init__(self, wave: PlaneWave, basis: BasisSet, quad_order: int = 3):
        self.wave = wave
        mesh = basis.mesh
        rule = gauss_tet(quad_order)
        pts = np.einsum("qk,tkx->tqx", rule.points, mesh.nodes[mesh.tets])
        w = rule.weights[None, :] * mesh.volumes[:, None]
        F = basis.values_in_tet(pts)                       # (T, nq, 4, 3)
        self._proj = np.einsum("tqmx,x->tqm", F, wave.polarization) * w[:, :, None]
        self._delay = (pts @ wave.direction) / C0          # (T, nq)
        self._n = basis.num_e

    def __call__(self, t: float) -> np.ndarray:
        s = self.wave.amplitude * eval_pulse(self.wave.pulse, t - self._delay, 1)
        return np.einsum("tq,tqm->tm", s, self._proj).reshape(self._n)


def assemble_Vinc(wave: PlaneWave, basis: BasisSet, t: float,
                  quad_order: int = 3) -> np.ndarray:
    """One-off tested incident vector at time ``t`` (see IncidentAssembler)."""
    return IncidentAssembler(wave, basis, quad_order)(t)
