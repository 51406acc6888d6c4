"""Sequences of pointed conformal flows and their conjugate heat kernels.

Member k starts from w_inf + eps_k * (psi flattened outside radius A_k) at
time -alpha and is evolved forward to time 0 on a common grid (the charts
are identities and every basepoint is the grid centre).  Reading the flow
backwards in tau = -t turns the kernel with delta end data at t = 0 into
a forward conjugate heat solve from tau = 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .flow import FlowSolution, certify, evolve_forward, reverse
from .geometry import ConformalPlaneFlow, DiscreteComplex, PlanarGrid, build_complex
from .green import GaussianFit, GreenRecord, fit_gaussian_bound, kernel_times
from .heat import SpaceTimeField, solve_conjugate_forward
from .profiles import Flattened, GaussianBump, SumProfile, ZeroProfile


class SequenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SequenceSpec:
    limit: ConformalPlaneFlow
    psi: Any = field(default_factory=lambda: GaussianBump(0.05, 1.0))
    eps: tuple = tuple(2.0**-k for k in range(1, 7))
    radii: tuple = tuple(3.0 + 0.25 * k for k in range(1, 7))
    alpha: float = 0.5
    curvature_bound: float | None = None  # common curvature constant of the members

    def __post_init__(self):
        eps = list(self.eps)
        if any(b >= a for a, b in zip(eps, eps[1:])) and any(e != 0 for e in eps):
            raise ValueError("eps must be strictly decreasing")
        if any(e < 0 for e in eps):
            raise ValueError("eps must be nonnegative")
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("cutoff radii must be strictly increasing")
        if len(self.radii) < len(self.eps):
            raise ValueError("need one cutoff radius per member")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    def member_model(self, k: int) -> ConformalPlaneFlow:
        """Model of member k (1-based); k = 0 is the limit."""
        if k == 0:
            return self.limit
        w0 = SumProfile((self.limit.w0, Flattened(self.psi, self.radii[k - 1])), (1.0, self.eps[k - 1]))
        lim = self.limit
        return ConformalPlaneFlow(w0, lim.extent, lim.resolution, lim.dt, lim.curvature_guard)


@dataclass(eq=False)
class Member:
    k: int
    eps: float
    A: float
    model: ConformalPlaneFlow
    flow: FlowSolution  # backward in tau
    sup_curvature: float
    chart_C0: float = 0.0
    chart_C2: float = 0.0
    equivalence: float = 1.0  # max over x, s, t of the metric ratio (log-symmetric)


def _chart_norms(w: np.ndarray, w_ref: np.ndarray, grid: PlanarGrid, mask: np.ndarray):
    """C^0 and C^2 norms of w - w_ref over the masked region and all times."""
    d = w - w_ref
    h = grid.h
    c0 = float(np.max(np.abs(d[:, mask])))
    gx = np.gradient(d, h, axis=1)
    gy = np.gradient(d, h, axis=2)
    parts = [c0, np.max(np.abs(gx[:, mask])), np.max(np.abs(gy[:, mask]))]
    for g, ax in ((gx, 1), (gx, 2), (gy, 2)):
        parts.append(np.max(np.abs(np.gradient(g, h, axis=ax)[:, mask])))
    return c0, float(max(parts))


def build_sequence(spec: SequenceSpec, count: int | None = None, *, probe_radius: float | None = None):
    """Evolve the limit and ``count`` members; returns (limit, members)."""
    count = len(spec.eps) if count is None else count
    if count < 3 or count > len(spec.eps):
        raise ValueError("count must be between 3 and the number of amplitudes")
    limit_flow = reverse(evolve_forward(spec.limit, spec.alpha))
    limit = Member(0, 0.0, math.inf, spec.limit, limit_flow, float(np.max(limit_flow.sup_curvature)))
    grid = limit_flow.grid
    pr = min(spec.radii) - 1.0 if probe_radius is None else probe_radius
    mask = np.hypot(grid.X, grid.Y) <= pr
    members = []
    for k in range(1, count + 1):
        model = spec.member_model(k)
        fl = reverse(evolve_forward(model, spec.alpha))
        kmax = float(np.max(fl.sup_curvature))
        if spec.curvature_bound is not None and kmax > spec.curvature_bound:
            raise SequenceError(f"member {k} curvature {kmax:.4g} exceeds common bound {spec.curvature_bound}")
        c0, c2 = _chart_norms(fl.w, limit_flow.w, grid, mask)
        wmax, wmin = np.max(fl.w, axis=0), np.min(fl.w, axis=0)
        equiv = float(np.exp(2.0 * np.max(wmax - wmin)))
        members.append(Member(k, spec.eps[k - 1], spec.radii[k - 1], model, fl, kmax, c0, c2, equiv))
    wmax, wmin = np.max(limit_flow.w, axis=0), np.min(limit_flow.w, axis=0)
    limit.equivalence = float(np.exp(2.0 * np.max(wmax - wmin)))
    return limit, members


def common_equivalence_constant(curvature_bound: float, alpha: float) -> float:
    """C2 with (1/C2) g(s) <= g(t) <= C2 g(s): |dg/dt| = 2|K| g in dimension 2."""
    return math.exp(2.0 * curvature_bound * alpha)


@dataclass(eq=False)
class KernelSequence:
    limit: SpaceTimeField
    fields: list
    members: list
    alpha: float
    mass_errors: list
    limit_mass_error: float


def solve_sequence_kernels(limit: Member, members: list[Member], alpha: float, *, ball_radius: float | None = None,
                           explicit_steps: int = 128) -> KernelSequence:
    model = limit.model
    times = kernel_times(model, alpha, explicit_steps=explicit_steps)
    k = ball_radius if ball_radius is not None else model.extent - 0.5

    def solve(mem: Member):
        cx = build_complex(mem.model, k, times, flow=mem.flow)
        return solve_conjugate_forward(cx, (cx.basepoint, 0.0), "neumann", explicit_steps=explicit_steps)

    lim = solve(limit)
    fields = [solve(m) for m in members]
    errs = [float(np.max(np.abs(f.mass_trace() - 1.0))) for f in fields]
    return KernelSequence(lim, fields, members, alpha, errs, float(np.max(np.abs(lim.mass_trace() - 1.0))))


@dataclass
class DeltaTable:
    deltas: list
    ratios: list
    lipschitz: float


def probe_window(fld: SpaceTimeField, alpha: float, probe_radius: float):
    """Probe cells (radius, minus a one-cell collar) and time rows away from both ends."""
    cx = fld.complex
    h = cx.spacing
    r0 = cx.distances_from(cx.basepoint, 0)
    cells = np.nonzero((r0 <= probe_radius - float(np.max(cx.cell_width(0)))) & ~cx.boundary)[0]
    t = fld.times
    rows = np.nonzero((t >= 10 * h * h - 1e-12) & (t <= alpha - 10 * h * h + 1e-12))[0]
    return cells, rows


def compare_on_compact(seq: KernelSequence, probe_radius: float = 2.0) -> DeltaTable:
    cells, rows = probe_window(seq.limit, seq.alpha, probe_radius)
    ref = seq.limit.values[np.ix_(rows, cells)]
    ids = seq.limit.complex.cell_ids[cells]
    deltas = []
    for f in seq.fields:
        # member balls may contain different cells; match through grid ids
        idx = np.array([f.complex.index_of_id(int(c)) for c in ids])
        deltas.append(float(np.max(np.abs(f.values[np.ix_(rows, idx)] - ref))))
    ratios = [b / a if a > 0 else float("nan") for a, b in zip(deltas, deltas[1:])]
    norms = [m.chart_C2 for m in seq.members]
    lips = [d / c for d, c in zip(deltas, norms) if c > 0]
    return DeltaTable(deltas, ratios, max(lips) if lips else 0.0)


@dataclass(frozen=True)
class WeakIdentity:
    times: np.ndarray
    lhs: np.ndarray
    bound: np.ndarray
    ok: bool


def weak_identity_check(fld: SpaceTimeField, psi, t1: float, *, rtol: float = 1e-9,
                        eps: float = 1e-12) -> WeakIdentity:
    """|sum u psi V - psi(x0)| against tau * max |lap psi| over [0, t1].

    ``psi`` is a per-cell array or a profile of the cell positions.  The
    Laplacian max runs over every cell, which covers the support of psi
    plus the one-cell halo the discrete operator touches.
    """
    cx = fld.complex
    vals = np.asarray(psi(*cx.positions.T) if callable(psi) else psi, dtype=float)
    if np.any(vals[cx.boundary] != 0):
        raise ValueError("test function support is clipped by the grid")
    rows = np.nonzero(fld.times <= t1 + 1e-12)[0]
    tau = fld.times[rows] - fld.times[0]
    lap_max = max(float(np.max(np.abs(cx.laplace(vals, fld.start + m)))) for m in rows)
    lhs = np.abs(np.einsum("mi,mi,i->m", fld.values[rows], fld.volumes()[rows], vals) - vals[cx.basepoint])
    bound = tau * lap_max
    return WeakIdentity(tau, lhs, bound, bool(np.all(lhs <= bound * (1 + rtol) + eps)))


def member_fits(seq: KernelSequence) -> tuple[GaussianFit, list[GaussianFit]]:
    def fit(f: SpaceTimeField) -> GaussianFit:
        cx = f.complex
        rec = GreenRecord(cx.ball_radius, "neumann", f.source, f, f.mass_trace())
        return fit_gaussian_bound(rec)

    return fit(seq.limit), [fit(f) for f in seq.fields]


def write_sequence_csv(path, members: list[Member], table: DeltaTable, seq: KernelSequence, fits: list[GaussianFit]):
    cols = ["k", "eps_k", "A_k", "chart_C0", "chart_C2", "delta_k", "mass_err", "fit_C", "fit_D"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for m, d, e, f in zip(members, table.deltas, seq.mass_errors, fits):
            row = [m.k, m.eps, m.A, m.chart_C0, m.chart_C2, d, e, f.C, f.D]
            wr.writerow([f"{v:.17g}" if isinstance(v, float) else str(v) for v in row])
