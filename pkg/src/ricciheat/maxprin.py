"""Randomized harness for the parabolic maximum principle on evolving metrics.

Subsolutions are manufactured exactly: the solver is run with a
nonpositive forcing term, so u_t <= lap u + a.grad u + b u holds at the
discrete level by construction.  The weighted energy estimate behind the
principle is evaluated with the same cutoff and Gaussian weight constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DiscreteComplex
from .heat import CoefficientData, SpaceTimeField, solve_linear_parabolic


def ramp(x):
    """C^1 cubic ramp: 1 for x <= 0, 0 for x >= 1, slope in [-1.5, 0]."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return 1.0 - (3.0 * x**2 - 2.0 * x**3)


def eta_value(lambda1: float, alpha3: float, T: float) -> float:
    if alpha3 == 0.0:
        return min(1.0 / (8.0 * lambda1), T)
    return min(1.0 / (8.0 * lambda1), math.log(9.0 / 8.0) / alpha3)


def energy_constant(alpha1: float, alpha2: float, alpha3: float, n: int) -> float:
    return 2.0 * alpha2 + 4.0 * alpha1**2 + n * alpha3 / 2.0


@dataclass(frozen=True)
class CutoffData:
    lam: float
    lambda1: float
    eta: float
    C1: float
    R: float
    n: int
    alpha1: float
    alpha2: float
    alpha3: float
    T: float

    def weight(self, r0, t):
        """h = -r0^2 / (4 (2 eta - t)), defined for t < 2 eta."""
        return -np.asarray(r0) ** 2 / (4.0 * (2.0 * self.eta - t))

    def weight_rate(self, r0, t):
        return -np.asarray(r0) ** 2 / (4.0 * (2.0 * self.eta - t) ** 2)

    def phi(self, r0):
        return ramp(np.asarray(r0) - self.R)


def build_cutoff(certificate, lam: float, R: float, n: int, *, alpha1: float = 0.0,
                 alpha2: float = 0.0, complex: DiscreteComplex | None = None) -> CutoffData:
    """Constants of the weighted energy argument.

    With ``complex`` given, also checks h(x, t) <= -lambda1 r0(x)^2 on every
    cell for the time nodes in [0, eta).
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if R < 1:
        raise ValueError("R must be at least 1")
    a3, T = float(certificate.alpha3), float(certificate.T)
    lam1 = lam * math.exp(a3 * T)
    eta = eta_value(lam1, a3, T)
    cut = CutoffData(lam, lam1, eta, energy_constant(alpha1, alpha2, a3, n), float(R), n,
                     alpha1, alpha2, a3, T)
    if complex is not None:
        r0 = complex.distances_from(complex.basepoint, 0)
        for t in complex.times[complex.times < eta]:
            if np.any(cut.weight(r0, t) > -lam1 * r0**2 * (1 - 1e-12)):
                raise ValueError(f"weight bound fails at t={t}")
    return cut


# ------------------------------------------------------------- instances


def _smooth_field(rng, pos: np.ndarray, modes: int = 4, scale: float = 1.5):
    """Random smooth function of position: sum of a few plane waves."""
    out = np.zeros(len(pos))
    for _ in range(modes):
        k = rng.normal(size=pos.shape[1]) / scale
        out += rng.normal() * np.cos(pos @ k + rng.uniform(0, 2 * math.pi))
    return out


@dataclass(frozen=True)
class Instance:
    coeffs: CoefficientData
    u0: np.ndarray
    forcing: np.ndarray
    seed: int


def random_instance(seed: int, cx: DiscreteComplex, alpha1: float, alpha2: float,
                    *, zero_initial: bool = False) -> Instance:
    """Random bounded drift/potential, nonpositive u0 and forcing, fixed by ``seed``."""
    if alpha1 < 0 or alpha2 < 0:
        raise ValueError("bounds must be nonnegative")
    rng = np.random.default_rng(seed)
    M = len(cx.times)
    pos = cx.positions
    i, j = cx.edges[:, 0], cx.edges[:, 1]
    mid = 0.5 * (pos[i] + pos[j])
    unit = pos[j] - pos[i]
    unit = unit / np.linalg.norm(unit, axis=1, keepdims=True)
    # drift vector field in the metric's orthonormal frame (coordinate-aligned)
    comps = np.stack([_smooth_field(rng, mid) for _ in range(pos.shape[1])], axis=1)
    size = np.max(np.linalg.norm(comps, axis=1))
    comps *= alpha1 * rng.uniform(0.5, 1.0) / size if size > 0 else 0.0
    proj = np.sum(comps * unit, axis=1)
    pot = _smooth_field(rng, pos)
    pmax = np.max(np.abs(pot))
    pot *= alpha2 * rng.uniform(0.5, 1.0) / pmax if pmax > 0 else 0.0
    omega, phase = rng.uniform(0.5, 3.0), rng.uniform(0, 2 * math.pi)
    mod = (2.0 + np.sin(omega * cx.times + phase)) / 3.0  # in [1/3, 1]
    drift = mod[:, None] * proj[None, :]
    potential = mod[:, None] * pot[None, :]
    if zero_initial:
        u0 = np.zeros(cx.n_cells)
    else:
        u0 = -np.abs(_smooth_field(rng, pos)) * rng.uniform(0.1, 2.0)
    f_amp = rng.uniform(0.0, 1.0)
    f = -np.abs(_smooth_field(rng, pos))[None, :] * f_amp * mod[:, None]
    return Instance(CoefficientData(drift, potential, alpha1, alpha2), u0, f, seed)


def run_instance(cx: DiscreteComplex, inst: Instance, bc: str = "neumann") -> SpaceTimeField:
    return solve_linear_parabolic(cx, inst.coeffs, inst.u0, inst.forcing, bc)


@dataclass(frozen=True)
class Verdict:
    max_u: float
    passed: bool


def check_conclusion(traj: SpaceTimeField, tol: float = 1e-8) -> Verdict:
    mx = float(np.max(traj.values))
    return Verdict(mx, mx <= tol)


# ------------------------------------------------------------- energy


@dataclass(frozen=True)
class EnergyCheck:
    lhs: float
    rhs: float
    residual: float
    eps: float
    passed: bool
    initial_term: float


def energy_terms(traj: SpaceTimeField, cut: CutoffData):
    """Per-node state term, cumulative gradient term and cumulative annulus term on [0, eta]."""
    cx = traj.complex
    times = traj.times
    if times[-1] < cut.eta - 1e-12:
        raise ValueError("trajectory ends before eta")
    rows = np.nonzero(times <= cut.eta + 1e-12)[0]
    r0 = cx.distances_from(cx.basepoint, 0)
    phi2 = cut.phi(r0) ** 2
    annulus = (r0 > cut.R) & (r0 <= cut.R + 1.0)
    i, j = cx.edges[:, 0], cx.edges[:, 1]
    up = traj.positive_part()
    V = traj.volumes()
    state = np.empty(len(rows))
    grad = np.zeros(len(rows))
    ann = np.zeros(len(rows))
    for q, m in enumerate(rows):
        t = times[m]
        eh = np.exp(cut.weight(r0, t))
        state[q] = math.exp(-cut.C1 * t) * np.sum(phi2 * eh * up[m] ** 2 * V[m])
        if q > 0:
            dt = t - times[rows[q - 1]]
            wgt = cx.conductance(m) * 0.5 * (phi2[i] * eh[i] + phi2[j] * eh[j])
            grad[q] = grad[q - 1] + dt * np.sum(wgt * (up[m, j] - up[m, i]) ** 2)
            ann[q] = ann[q - 1] + dt * np.sum((eh * up[m] ** 2 * V[m])[annulus])
    return times[rows], state, grad, ann


def energy_inequality_check(traj: SpaceTimeField, cut: CutoffData, *, include_initial: bool = False,
                            eps: float | None = None) -> EnergyCheck:
    """Weighted energy estimate on [0, eta]:

    e^{-C1 t} sum phi^2 e^h u+^2 V + e^{-C1 eta}/8 int sum_edges w avg(phi^2 e^h) (du+)^2
        <= 32 e^{alpha3 T} int_0^eta sum_{R < r0 <= R+1} e^h u+^2 V  (+ initial energy).
    """
    times, state, grad, ann = energy_terms(traj, cut)
    lhs_t = state + math.exp(-cut.C1 * cut.eta) / 8.0 * grad
    lhs = float(np.max(lhs_t))
    rhs = 32.0 * math.exp(cut.alpha3 * cut.T) * float(ann[-1])
    init = float(state[0]) if include_initial else 0.0
    rhs += init
    if eps is None:
        scale = float(np.max(np.einsum("mi,mi->m", traj.positive_part() ** 2, traj.volumes())))
        eps = 1e-6 * max(scale, 1e-300)
    residual = lhs - rhs
    return EnergyCheck(lhs, rhs, residual, eps, residual <= eps, init)


def growth_condition_value(traj: SpaceTimeField, lam: float) -> float:
    """Trapezoid quadrature of int int u+^2 exp(-lam r_t^2) dV_t dt."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    cx = traj.complex
    up = traj.positive_part()
    V = traj.volumes()
    vals = np.empty(len(traj.times))
    for q, t in enumerate(traj.times):
        m = traj.start + q
        r = cx.distances_from(cx.basepoint, m)
        vals[q] = np.sum(up[q] ** 2 * np.exp(-lam * r**2) * V[q])
    return float(np.trapezoid(vals, traj.times)) if hasattr(np, "trapezoid") else float(np.trapz(vals, traj.times))


# ----------------------------------------------------------- diagnostics


def weight_residual(cx: DiscreteComplex, cut: CutoffData, t: float, metric_factor: float = 1.0) -> np.ndarray:
    """h_t + metric_factor * |grad h|^2 in the time-0 metric, per cell."""
    r0 = cx.distances_from(cx.basepoint, 0)
    h = cut.weight(r0, t)
    g = cx.gradient_norm(h, 0)
    return cut.weight_rate(r0, t) + metric_factor * g**2


def cutoff_gradient(cx: DiscreteComplex, cut: CutoffData, m: int = 0) -> np.ndarray:
    r0 = cx.distances_from(cx.basepoint, 0)
    return cx.gradient_norm(cut.phi(r0), m)
