"""Forward Ricci flow of the model metrics, time reversal and certification.

Backward flows are never integrated directly: a forward solve on [0, T] is
re-indexed by t -> T - t.  For conformal metrics e^{2w}(dx^2 + dy^2) the
flow reduces to the scalar equation w_t = e^{-2w} lap(w), stepped here with
implicit Euler and a Picard inner iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .geometry import (
    ConformalPlaneFlow,
    FlatEuclidean,
    PlanarGrid,
    PrescribedFamily,
    SphereBackwardFlow,
    grid_distances,
)

PICARD_TOL = 1e-10
PICARD_MAXITER = 60
MAX_HALVINGS = 8


class FlowError(RuntimeError):
    pass


class CertificationError(RuntimeError):
    def __init__(self, message: str, sample: dict):
        super().__init__(f"{message}: {sample}")
        self.sample = sample


@dataclass(frozen=True, eq=False)
class FlowSolution:
    """Stored metric family on a time grid over [0, T].

    Exactly one of ``w`` (conformal log factor per node, shape (M, G, G))
    or ``scale`` (sphere scale factor per node) carries the metric; flat
    flows carry neither.
    """

    model: Any
    direction: str
    times: np.ndarray
    T: float
    sup_curvature: np.ndarray
    w: np.ndarray | None = None
    scale: np.ndarray | None = None
    residuals: np.ndarray | None = None
    mirror_times: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return getattr(self.model, "n", 2)

    @property
    def grid(self) -> PlanarGrid | None:
        if self.w is None:
            return None
        return PlanarGrid(self.model.extent, self.model.resolution)

    def _bracket(self, t: float):
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise FlowError(f"t={t} outside the flow interval [{times[0]}, {times[-1]}]")
        j = int(np.clip(np.searchsorted(times, t), 1, len(times) - 1))
        lam = (t - times[j - 1]) / (times[j] - times[j - 1])
        return j, float(np.clip(lam, 0.0, 1.0))

    def log_factor_at(self, t: float) -> np.ndarray:
        """Log-conformal factor on the full grid, linear in time between nodes."""
        if self.w is None:
            raise FlowError("flow does not carry a conformal factor")
        j, lam = self._bracket(t)
        if lam == 0.0:
            return self.w[j - 1]
        if lam == 1.0:
            return self.w[j]
        return (1.0 - lam) * self.w[j - 1] + lam * self.w[j]

    def scale_at(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.scale is None:
            return np.ones_like(t)
        return np.interp(t, self.times, self.scale)

    def curvature_field(self, m: int) -> np.ndarray:
        """Gauss curvature on the full grid at node m (conformal flows)."""
        grid = self.grid
        w = self.w[m]
        return -np.exp(-2.0 * w) * grid.lap(w)

    def boundary_ring(self) -> float:
        """Largest |w| on the outermost grid ring over the run."""
        if self.w is None:
            return 0.0
        w = self.w
        ring = np.concatenate([w[:, 0, :], w[:, -1, :], w[:, :, 0], w[:, :, -1]], axis=1)
        return float(np.max(np.abs(ring)))


def reverse(flow: FlowSolution) -> FlowSolution:
    """Re-index g(t) -> g(T - t); exact involution on the stored arrays."""
    mirror = flow.mirror_times if flow.mirror_times is not None else flow.T - flow.times[::-1]
    return FlowSolution(
        model=flow.model,
        direction="backward" if flow.direction == "forward" else "forward",
        times=mirror,
        T=flow.T,
        sup_curvature=flow.sup_curvature[::-1],
        w=None if flow.w is None else flow.w[::-1],
        scale=None if flow.scale is None else flow.scale[::-1],
        residuals=None if flow.residuals is None else flow.residuals[::-1],
        mirror_times=flow.times,
    )


def _uniform(T: float, dt: float) -> np.ndarray:
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    return T * np.arange(n + 1) / n


def _laplacian_matrix(grid: PlanarGrid):
    G = grid.size
    one = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(G, G))
    eye = sp.identity(G)
    return ((sp.kron(one, eye) + sp.kron(eye, one)) / grid.h**2).tocsr()


def _implicit_step(w_old, dt, lap, tol):
    """One implicit Euler step of w_t = e^{-2w} lap(w) with zero exterior data.

    Picard iteration: (diag(e^{2 w^k}) - dt lap) w^{k+1} = e^{2 w^k} w_old.
    Returns None if the iteration stalls.
    """
    shape = w_old.shape
    u_old = w_old.ravel()
    wk = u_old.copy()
    for _ in range(PICARD_MAXITER):
        e2 = np.exp(2.0 * wk)
        A = sp.diags(e2) - dt * lap
        b = e2 * u_old
        wn, info = cg(A, b, x0=wk, rtol=1e-14, atol=1e-15, maxiter=2000,
                      M=sp.diags(1.0 / A.diagonal()))
        if info != 0 or not np.all(np.isfinite(wn)):
            return None
        delta = np.max(np.abs(wn - wk))
        wk = wn
        if delta <= tol:
            return wk.reshape(shape)
    return None


def _solve_conformal(model: ConformalPlaneFlow, times: np.ndarray):
    grid = PlanarGrid(model.extent, model.resolution)
    lap = _laplacian_matrix(grid)
    w = np.empty((len(times),) + grid.shape)
    w[0] = model.w0(np.asarray(grid.X), np.asarray(grid.Y))
    sup_k = np.empty(len(times))
    resid = np.zeros(len(times))
    sup_k[0] = np.max(np.abs(np.exp(-2.0 * w[0]) * grid.lap(w[0])))
    for m in range(1, len(times)):
        dt = times[m] - times[m - 1]
        cur = w[m - 1]
        pieces = 1
        while True:
            trial = cur
            ok = True
            for _ in range(pieces):
                trial = _implicit_step(trial, dt / pieces, lap, PICARD_TOL)
                if trial is None:
                    ok = False
                    break
            if ok:
                break
            pieces *= 2
            if pieces > 2**MAX_HALVINGS:
                raise FlowError(f"nonlinear solve failed to converge at t={times[m]:.6g}")
        w[m] = trial
        K = -np.exp(-2.0 * trial) * grid.lap(trial)
        sup_k[m] = np.max(np.abs(K))
        if sup_k[m] > model.curvature_guard:
            raise FlowError(f"curvature {sup_k[m]:.3g} exceeds guard at t={times[m]:.6g}")
        if pieces == 1:
            resid[m] = np.max(np.abs(np.exp(2.0 * trial) * (trial - cur) / dt - grid.lap(trial)))
    return w, sup_k, resid


def evolve_forward(model, T: float, dt: float | None = None) -> FlowSolution:
    """Forward Ricci flow dg/dt = -2 Ric on [0, T]."""
    if T <= 0:
        raise FlowError("T must be positive")
    if isinstance(model, SphereBackwardFlow):
        # shrinking round sphere: scale 1 - t, curvature of h0 is K = 1/2
        if T >= 1.0:
            raise FlowError("shrinking sphere becomes extinct at t = 1")
        times = _uniform(T, dt or 1.0 / 200)
        scale = 1.0 - times
        return FlowSolution(model, "forward", times, T, 0.5 / scale, scale=scale)
    if isinstance(model, FlatEuclidean):
        times = _uniform(T, dt or 1.0 / 200)
        return FlowSolution(model, "forward", times, T, np.zeros(len(times)))
    if isinstance(model, ConformalPlaneFlow):
        times = _uniform(T, dt or model.dt)
        w, sup_k, resid = _solve_conformal(model, times)
        return FlowSolution(model, "forward", times, T, sup_k, w=w, residuals=resid)
    raise FlowError(f"cannot evolve {type(model).__name__}")


def sample_prescribed(model: PrescribedFamily, T: float, dt: float = 1.0 / 200) -> FlowSolution:
    """Tabulate a prescribed conformal family on [0, T] (not a Ricci flow)."""
    grid = PlanarGrid(model.extent, model.resolution)
    X, Y = np.asarray(grid.X), np.asarray(grid.Y)
    times = _uniform(T, dt)
    w = np.stack([model.w(X, Y, t) for t in times])
    sup_k = np.array([np.max(np.abs(np.exp(-2.0 * wm) * grid.lap(wm))) for wm in w])
    fine = np.linspace(0.0, T, 4 * len(times))
    rate = max(float(np.max(np.abs(model.w.time_rate(X, Y, t)))) for t in fine)
    return FlowSolution(model, "prescribed", times, T, sup_k, w=w, residuals=np.full(len(times), rate))


def backward_flow(model, T: float, dt: float | None = None) -> FlowSolution:
    """Backward Ricci flow dg/dt = 2 Ric on [0, T]."""
    if isinstance(model, SphereBackwardFlow):
        times = _uniform(T, dt or 1.0 / 200)
        scale = 1.0 + times
        return FlowSolution(model, "backward", times, T, 0.5 / scale, scale=scale)
    return reverse(evolve_forward(model, T, dt))


def sample_family(flow: FlowSolution, t: float) -> np.ndarray:
    """Metric data at time t: log factor grid, or the scale as a 1-array."""
    if flow.w is not None:
        return flow.log_factor_at(t)
    return flow.scale_at(t)


# ---------------------------------------------------------- certificates


@dataclass(frozen=True)
class FlowCertificate:
    k0: float
    alpha3: float
    T: float
    n: int
    samples: int
    violations: int = 0

    def metric_band(self, dt: float) -> tuple[float, float]:
        e = math.exp(self.alpha3 * abs(dt))
        return 1.0 / e, e

    @property
    def distance_factor(self) -> float:
        return math.exp(self.alpha3 * self.T / 2.0)

    @property
    def volume_factor(self) -> float:
        return math.exp(self.n * self.alpha3 * self.T / 2.0)

    @property
    def volume_rate(self) -> float:
        return self.n * self.alpha3 / 2.0

    def as_record(self) -> dict:
        return {
            "k0": self.k0, "alpha3": self.alpha3, "T": self.T, "n": self.n,
            "distance_factor": self.distance_factor, "volume_factor": self.volume_factor,
            "volume_rate": self.volume_rate, "samples": self.samples, "violations": self.violations,
        }


def alpha3_from_k0(k0: float, n: int) -> float:
    return 2.0 * (n - 1) * k0


def _log_metric(flow: FlowSolution, m: int):
    """log of the metric coefficient at node m, per grid point."""
    if flow.w is not None:
        return 2.0 * flow.w[m].ravel()
    if flow.scale is not None:
        return np.array([math.log(flow.scale[m])])
    return np.zeros(1)


def certify(flow: FlowSolution, *, samples: int = 1000, seed: int = 0, rtol: float = 1e-9) -> FlowCertificate:
    """Curvature bound k0, alpha3 = 2(n-1)k0, and sampled checks of the
    metric, distance and volume-element bands.

    Raises CertificationError on the first sampled ratio outside its band.
    """
    if samples < 1000:
        raise ValueError("certification needs at least 1000 samples per band")
    n = flow.n
    k0 = float(np.max(flow.sup_curvature))
    if flow.direction == "prescribed":
        # |dg/dt| = 2|w_t| g; residuals hold sup|w_t| for prescribed families
        a3 = 2.0 * float(flow.residuals[0])
    else:
        a3 = alpha3_from_k0(k0, n)
    T = float(flow.times[-1] - flow.times[0])
    cert = FlowCertificate(k0=k0, alpha3=a3, T=T, n=n, samples=samples)
    rng = np.random.default_rng(seed)
    M = len(flow.times)
    logs = [_log_metric(flow, m) for m in range(M)]
    npts = logs[0].size

    # metric equivalence: |log g(t) - log g(s)| <= alpha3 |t - s|
    for _ in range(samples):
        i, j = rng.integers(M, size=2)
        x = int(rng.integers(npts))
        d = abs(logs[i][x] - logs[j][x])
        lim = a3 * abs(flow.times[i] - flow.times[j])
        if d > lim * (1 + rtol) + 1e-12:
            raise CertificationError("metric band violated", {"x": x, "t": float(flow.times[i]),
                                                               "s": float(flow.times[j]), "log_ratio": d, "bound": lim})

    # volume element rate: |d/dt log dV| <= n alpha3 / 2 between nodes
    dt = np.diff(flow.times)
    for _ in range(samples):
        m = int(rng.integers(M - 1))
        x = int(rng.integers(npts))
        rate = abs(logs[m + 1][x] - logs[m][x]) * n / 2.0 / dt[m]
        if rate > cert.volume_rate * (1 + rtol) + 1e-12:
            raise CertificationError("volume-element band violated",
                                     {"x": x, "t": float(flow.times[m]), "rate": rate, "bound": cert.volume_rate})

    # distance equivalence against time 0
    nodes = np.unique(np.r_[0, M - 1, rng.integers(M, size=6)])
    if flow.w is not None:
        grid = flow.grid
        d0 = grid_distances(flow.w[0], grid.h, [grid.center_id])[0]
        per_node = samples // len(nodes) + 1
        for m in nodes:
            dm = grid_distances(flow.w[m], grid.h, [grid.center_id])[0]
            cells = rng.integers(npts, size=per_node)
            cells = cells[d0[cells] > 0]
            ratio = dm[cells] / d0[cells]
            bad = (ratio > cert.distance_factor * (1 + rtol)) | (ratio < (1 - rtol) / cert.distance_factor)
            if np.any(bad):
                c = int(cells[np.argmax(bad)])
                raise CertificationError("distance band violated",
                                         {"x": c, "t": float(flow.times[m]), "ratio": float(dm[c] / d0[c])})
    else:
        for _ in range(samples):
            m = int(rng.integers(M))
            ratio = math.sqrt(float(flow.scale_at(flow.times[m])[0] / flow.scale_at(flow.times[0])[0]))
            if not (1 - rtol) / cert.distance_factor <= ratio <= cert.distance_factor * (1 + rtol):
                raise CertificationError("distance band violated", {"t": float(flow.times[m]), "ratio": ratio})
    return cert


@dataclass(frozen=True)
class RateCheck:
    residual: float
    max_rate: float
    bound: float
    ok: bool


def volume_element_rate_check(flow: FlowSolution, t: float, cert: FlowCertificate | None = None,
                              tol: float = 1e-9) -> RateCheck:
    """Compare the finite-difference rate of the volume element with +/- R dV.

    Backward flows have d/dt dV = R dV, forward flows -R dV.  Returns the
    max relative residual |rate - (+/-R)| over grid points and checks the
    band |rate| <= (n alpha3 / 2).
    """
    m = int(np.argmin(np.abs(flow.times - t)))
    if abs(flow.times[m] - t) > 1e-9 or m == 0 or m == len(flow.times) - 1:
        raise FlowError("t must be an interior node of the flow grid")
    sign = 1.0 if flow.direction == "backward" else -1.0
    span = flow.times[m + 1] - flow.times[m - 1]
    if flow.w is not None:
        V = np.exp(2.0 * flow.w)
        rate = (V[m + 1] - V[m - 1]) / span / V[m]
        R = 2.0 * flow.curvature_field(m)
    elif flow.scale is not None:
        rate = np.array([(flow.scale[m + 1] - flow.scale[m - 1]) / span / flow.scale[m]])
        R = np.array([1.0 / flow.scale[m]])
    else:
        rate = np.zeros(1)
        R = np.zeros(1)
    residual = float(np.max(np.abs(rate - sign * R)))
    max_rate = float(np.max(np.abs(rate)))
    cert = cert or certify(flow)
    bound = cert.volume_rate
    return RateCheck(residual, max_rate, bound, max_rate <= bound * (1 + tol) + 1e-12)


# ---------------------------------------------------------------- export


def write_snapshots(flow: FlowSolution, path, every: int = 1) -> None:
    """Columnar text: time, node, w, K (conformal) or time, scale, K (sphere/flat)."""
    with open(path, "w") as fh:
        fh.write(f"# direction={flow.direction} T={flow.T!r} model={type(flow.model).__name__}\n")
        if flow.w is None:
            fh.write("# time scale K\n")
            for m, t in enumerate(flow.times):
                s = 1.0 if flow.scale is None else flow.scale[m]
                fh.write(f"{t:.17g} {s:.17g} {flow.sup_curvature[m]:.17g}\n")
            return
        fh.write("# time node w K\n")
        for m in range(0, len(flow.times), every):
            K = flow.curvature_field(m).ravel()
            w = flow.w[m].ravel()
            t = flow.times[m]
            for i in range(w.size):
                fh.write(f"{t:.17g} {i} {w[i]:.17g} {K[i]:.17g}\n")


def write_certificate(cert: FlowCertificate, path) -> None:
    with open(path, "w") as fh:
        for k, v in sorted(cert.as_record().items()):
            fh.write(f"{k} = {v!r}\n")


def read_certificate(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            k, _, v = line.partition("=")
            v = v.strip()
            out[k.strip()] = int(v) if v.lstrip("-").isdigit() else float(v)
    return out
