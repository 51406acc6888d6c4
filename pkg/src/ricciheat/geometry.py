"""Discrete Riemannian structures for the supported model geometries.

Every downstream solver works on a :class:`DiscreteComplex`: cell volumes,
symmetric edge conductances, scalar-curvature samples and distances from
the basepoint, all sampled on a time grid.  Coordinates never leak past
this module except through ``positions`` (used only for diagnostics).

Radial models (flat n-space, the round-sphere flow) produce 1-D complexes
of annuli on a vertex-centred radial grid: node 0 sits at the basepoint and
owns a small disk (zero-flux inner face), node N owns the outer half-cell.
Planar models (2-D conformal metrics e^{2w}(dx^2 + dy^2)) produce tensor
grid complexes restricted to a geodesic ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.ndimage import map_coordinates
from scipy.sparse.csgraph import dijkstra
from scipy.special import gamma

from .profiles import ZeroProfile, Breathing

SQRT2 = math.sqrt(2.0)


class GeometryError(ValueError):
    pass


class UnderResolvedError(GeometryError):
    pass


def sphere_area(n: int) -> float:
    """Area of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2) / gamma(n / 2)


# ---------------------------------------------------------------- models


@dataclass(frozen=True)
class FlatEuclidean:
    n: int = 2
    radius: float = 4.0
    resolution: int = 32
    layout: str = "radial"

    kind = "flat"

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError("radius must be positive")
        if self.resolution <= 0:
            raise GeometryError("resolution must be positive")
        if self.n < 1:
            raise GeometryError("dimension must be >= 1")
        if self.layout not in ("radial", "planar"):
            raise GeometryError(f"unknown layout {self.layout!r}")
        if self.layout == "planar" and self.n != 2:
            raise GeometryError("planar layout requires n = 2")

    @property
    def extent(self) -> float:
        return self.radius

    def check_times(self, times):
        pass


@dataclass(frozen=True)
class SphereBackwardFlow:
    """Backward Ricci flow h(t) = (1 + t) h0 on S^2.

    h0 is the round metric of scalar curvature 1 (radius sqrt 2), so that
    dh/dt = h0 = 2 Ric(h(t)) holds exactly.
    """

    resolution: int = 32

    kind = "sphere"
    n = 2

    def __post_init__(self):
        if self.resolution <= 0:
            raise GeometryError("resolution must be positive")

    @property
    def extent(self) -> float:
        return math.pi * SQRT2

    @staticmethod
    def scale(t):
        return 1.0 + np.asarray(t, dtype=float)

    def check_times(self, times):
        if np.min(times) <= -1.0:
            raise GeometryError("sphere backward flow exists only for t > -1")


@dataclass(frozen=True)
class ConformalPlaneFlow:
    """Ricci flow of e^{2w}(dx^2 + dy^2) started from ``w0``.

    Complexes built from this model carry the *backward* flow obtained by
    reversing a forward solve on [0, T].
    """

    w0: Any = field(default_factory=ZeroProfile)
    extent: float = 6.0
    resolution: int = 16
    dt: float = 1.0 / 200
    curvature_guard: float = 1e3

    kind = "conformal"
    n = 2

    def __post_init__(self):
        if self.resolution <= 0:
            raise GeometryError("resolution must be positive")
        if self.extent <= 0 or self.dt <= 0:
            raise GeometryError("extent and dt must be positive")
        grid = PlanarGrid(self.extent, self.resolution)
        w = self.w0(grid.X, grid.Y)
        ring = np.concatenate([w[0], w[-1], w[:, 0], w[:, -1]])
        if np.max(np.abs(ring)) > 1e-6:
            raise GeometryError("w0 must vanish near the grid boundary (flat exterior)")

    def check_times(self, times):
        if np.min(times) < 0:
            raise GeometryError("conformal flows are defined on t >= 0")


@dataclass(frozen=True)
class PrescribedFamily:
    """Conformal family e^{2w(x,t)}(dx^2+dy^2) with w given analytically."""

    w: Any = field(default_factory=Breathing)
    extent: float = 4.0
    resolution: int = 16

    kind = "prescribed"
    n = 2

    def __post_init__(self):
        if self.resolution <= 0:
            raise GeometryError("resolution must be positive")

    def check_times(self, times):
        pass


# ----------------------------------------------------------- planar grids


@dataclass(frozen=True, eq=False)
class PlanarGrid:
    """Square grid of cell centres (i h, j h), |i|, |j| <= M."""

    extent: float
    resolution: int

    @property
    def h(self) -> float:
        return 1.0 / self.resolution

    @property
    def M(self) -> int:
        return int(round(self.extent * self.resolution))

    @property
    def size(self) -> int:
        return 2 * self.M + 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.size, self.size)

    @property
    def X(self):
        x = (np.arange(self.size) - self.M) * self.h
        return np.broadcast_to(x[:, None], self.shape)

    @property
    def Y(self):
        x = (np.arange(self.size) - self.M) * self.h
        return np.broadcast_to(x[None, :], self.shape)

    @property
    def center_id(self) -> int:
        return self.M * self.size + self.M

    def lap(self, w):
        """5-point Laplacian with w = 0 outside the grid."""
        p = np.pad(w, 1)
        return (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2] - 4.0 * w) / self.h**2

    def neighbor_pairs(self):
        """Undirected 4-neighbour pairs as flat ids (horizontal then vertical)."""
        ids = np.arange(self.size * self.size).reshape(self.shape)
        a = np.concatenate([ids[:-1, :].ravel(), ids[:, :-1].ravel()])
        b = np.concatenate([ids[1:, :].ravel(), ids[:, 1:].ravel()])
        return a, b


def stencil_offsets(m: int) -> list[tuple[int, int]]:
    """Primitive lattice directions (half plane) with max(|a|,|b|) <= m."""
    out = []
    for a in range(0, m + 1):
        for b in range(-m, m + 1):
            if a == 0 and b <= 0:
                continue
            if math.gcd(a, abs(b)) == 1:
                out.append((a, b))
    return out


def grid_distances(w, h: float, sources, stencil: int = 5):
    """Shortest-path distances on the cell graph for the metric e^{2w}.

    Edges join each cell to the cells at primitive offsets up to
    ``stencil``; edge length is the Euclidean segment length times the
    trapezoid mean of e^{w} along the segment (bilinear interpolation).
    stencil=1 gives the 8-neighbour graph.
    """
    expw = np.exp(np.asarray(w, dtype=float))
    G0, G1 = expw.shape
    ids = np.arange(G0 * G1).reshape(expw.shape)
    rows, cols, vals = [], [], []
    for a, b in stencil_offsets(stencil):
        i0, i1 = max(0, -a), G0 - max(0, a)
        j0, j1 = max(0, -b), G1 - max(0, b)
        if i1 <= i0 or j1 <= j0:
            continue
        I, J = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="ij")
        L = max(abs(a), abs(b))
        acc = np.zeros(I.shape)
        for s in range(L + 1):
            c = 0.5 if s in (0, L) else 1.0
            pts = np.stack([I + s * a / L, J + s * b / L]).reshape(2, -1)
            acc += c * map_coordinates(expw, pts, order=1, mode="nearest").reshape(I.shape)
        weight = h * math.hypot(a, b) * acc / L
        rows.append(ids[I, J].ravel())
        cols.append(ids[I + a, J + b].ravel())
        vals.append(weight.ravel())
    graph = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(G0 * G1, G0 * G1),
    )
    return dijkstra(graph, directed=False, indices=sources)


# --------------------------------------------------------------- metrics
# Private samplers that know how to recompute distances at any time node.


@dataclass(eq=False)
class _RadialMetric:
    lo: np.ndarray  # inner face coordinate per cell
    hi: np.ndarray  # outer face coordinate per cell
    length_scale: np.ndarray  # per time node
    F: Any  # volume antiderivative in the radial coordinate

    def fractions(self, coord_radius):
        c = np.clip(coord_radius, self.lo, self.hi)
        den = self.F(self.hi) - self.F(self.lo)
        return (self.F(c) - self.F(self.lo)) / den


@dataclass(eq=False)
class _PlanarMetric:
    grid: PlanarGrid
    sampler: Any  # t -> full-grid log factor
    stencil: int


# --------------------------------------------------------------- complex


@dataclass(frozen=True, eq=False)
class DiscreteComplex:
    layout: str
    dim: int
    times: np.ndarray
    positions: np.ndarray
    cell_ids: np.ndarray
    volumes: np.ndarray
    edges: np.ndarray
    edge_conductance: np.ndarray
    curvature: np.ndarray
    boundary: np.ndarray
    basepoint: int
    spacing: float
    ball_radius: float
    model: Any
    closed: bool = False
    metric: Any = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_cells(self) -> int:
        return self.positions.shape[0]

    def time_index(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t - 1e-12))
        if i >= len(self.times) or abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise GeometryError(f"t={t} is not a node of the time grid")
        return i

    def conductance(self, m: int) -> np.ndarray:
        # all supported models have time-independent conductances (2-D
        # conformal invariance, static flat metrics)
        return self.edge_conductance

    def edge_length(self, m: int) -> np.ndarray:
        """Metric length between the two cell nodes of each edge at node m."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        if self.layout == "radial":
            x = self.positions[:, 0]
            return self.metric.length_scale[m] * (x[j] - x[i])
        e = np.sqrt(self.volumes[m]) / self.spacing  # e^{w}
        return self.spacing * 0.5 * (e[i] + e[j])

    def cell_width(self, m: int = 0) -> np.ndarray:
        if self.layout == "radial":
            return self.metric.length_scale[m] * (self.metric.hi - self.metric.lo)
        return np.sqrt(self.volumes[m])

    def laplacian_matrix(self, m: int = 0):
        """Weighted graph Laplacian K with (K u)_i = sum_j w_ij (u_i - u_j)."""
        key = ("K", m if self.conductance(m) is not self.edge_conductance else -1)
        if key not in self._cache:
            w = self.conductance(m)
            i, j = self.edges[:, 0], self.edges[:, 1]
            n = self.n_cells
            W = sp.coo_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n)).tocsr()
            deg = np.asarray(W.sum(axis=1)).ravel()
            self._cache[key] = (sp.diags(deg) - W).tocsr()
        return self._cache[key]

    def laplace(self, u, m: int = 0):
        """Discrete Laplace-Beltrami: (1/V_i) sum_j w_ij (u_j - u_i).

        Summed edge by edge so constants map to zero exactly.
        """
        u = np.asarray(u, dtype=float)
        i, j = self.edges[:, 0], self.edges[:, 1]
        flux = self.conductance(m) * (u[j] - u[i])
        n = self.n_cells
        out = np.bincount(i, weights=flux, minlength=n) - np.bincount(j, weights=flux, minlength=n)
        return out / self.volumes[m]

    def neighbors(self):
        key = "nbrs"
        if key not in self._cache:
            n = self.n_cells
            i, j = self.edges[:, 0], self.edges[:, 1]
            A = sp.coo_matrix((np.ones(2 * len(i)), (np.r_[i, j], np.r_[j, i])), shape=(n, n)).tocsr()
            self._cache[key] = A
        return self._cache[key]

    def gradient_norm(self, f, m: int = 0):
        """Cell-wise |grad f| in the metric at node m (central differences)."""
        f = np.asarray(f, dtype=float)
        if self.layout == "radial":
            x = self.positions[:, 0] * self.metric.length_scale[m]
            g = np.gradient(f, x, edge_order=1)
            return np.abs(g)
        grid = self.metric.grid
        full = np.full(grid.size * grid.size, np.nan)
        full[self.cell_ids] = f
        F = full.reshape(grid.shape)
        gx = np.full(grid.shape, np.nan)
        gy = np.full(grid.shape, np.nan)
        gx[1:-1, :] = (F[2:, :] - F[:-2, :]) / (2 * grid.h)
        gy[:, 1:-1] = (F[:, 2:] - F[:, :-2]) / (2 * grid.h)
        g = np.hypot(gx, gy).ravel()[self.cell_ids]
        return g / (np.sqrt(self.volumes[m]) / self.spacing)

    def distances_from(self, cell: int, m: int = 0) -> np.ndarray:
        key = ("dist", cell, m)
        if key in self._cache:
            return self._cache[key]
        if self.layout == "radial":
            if cell != self.basepoint:
                raise GeometryError("radial complexes only support distances from the basepoint")
            d = self.metric.length_scale[m] * self.positions[:, 0]
        else:
            pm = self.metric
            w = pm.sampler(self.times[m])
            src = self.cell_ids[cell]
            full = grid_distances(w, pm.grid.h, [src], pm.stencil)[0]
            d = full[self.cell_ids]
        d = np.asarray(d, dtype=float)
        d.setflags(write=False)
        self._cache[key] = d
        return d

    def ball_fractions(self, cell: int, radius: float, m: int = 0) -> np.ndarray:
        """Fraction of each cell inside the ball B_radius(cell) at node m."""
        d = self.distances_from(cell, m)
        if self.layout == "radial":
            return self.metric.fractions(radius / self.metric.length_scale[m])
        width = self.cell_width(m)
        return np.clip((radius - d) / width + 0.5, 0.0, 1.0)

    def index_of_id(self, cell_id: int) -> int:
        hit = np.nonzero(self.cell_ids == cell_id)[0]
        if len(hit) == 0:
            raise GeometryError(f"cell id {cell_id} is not part of this complex")
        return int(hit[0])


# ------------------------------------------------------------ time grids


def graded_times(T: float, h: float, *, s: float = 0.0, explicit_steps: int = 0,
                 ratio: float = 1.02, dt_max: float = 1.0 / 200, first_dt: float | None = None):
    """Time nodes from s to T refined near s.

    ``explicit_steps`` uniform steps of size h^2/8 (half the positivity limit
    of the explicit scheme on a uniform grid) come first; afterwards the step
    grows geometrically by ``ratio`` up to ``dt_max``.
    """
    if T <= s:
        raise GeometryError("T must exceed s")
    dt0 = h * h / 8.0 if first_dt is None else first_dt
    out = [s]
    for _ in range(explicit_steps):
        if out[-1] + dt0 >= T:
            break
        out.append(s + (len(out)) * dt0)
    dt = min(dt0, dt_max)
    while out[-1] < T:
        dt = min(dt * ratio, dt_max)
        nxt = out[-1] + dt
        if T - nxt < 0.5 * dt:
            nxt = T
        out.append(nxt)
    return np.array(out)


def uniform_times(T: float, dt: float, s: float = 0.0):
    n = max(1, int(math.ceil((T - s) / dt - 1e-9)))
    return s + (T - s) * np.arange(n + 1) / n


# ------------------------------------------------------- complex builders


def _check_grid(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
        raise GeometryError("time grid must be strictly increasing with >= 2 nodes")
    return times


def _radial_cells(N: int, h: float, closed: bool):
    x = np.arange(N + 1) * h
    lo = np.r_[0.0, (np.arange(1, N + 1) - 0.5) * h]
    hi = np.r_[(np.arange(0, N) + 0.5) * h, N * h]
    edges = np.stack([np.arange(N), np.arange(1, N + 1)], axis=1)
    faces = (np.arange(N) + 0.5) * h
    return x, lo, hi, edges, faces


def _build_flat_radial(model: FlatEuclidean, k: float, times):
    h = 1.0 / model.resolution
    N = int(round(k * model.resolution))
    if N < 2:
        raise GeometryError("ball too small for the grid resolution")
    n = model.n
    om = sphere_area(n)
    x, lo, hi, edges, faces = _radial_cells(N, h, False)
    V = om / n * (hi**n - lo**n)
    cond = om * faces ** (n - 1) / h
    M = len(times)
    boundary = np.zeros(N + 1, dtype=bool)
    boundary[-1] = True
    metric = _RadialMetric(lo, hi, np.ones(M), lambda r: r**n)
    return DiscreteComplex(
        layout="radial", dim=n, times=times, positions=x[:, None], cell_ids=np.arange(N + 1),
        volumes=np.broadcast_to(V, (M, N + 1)), edges=edges, edge_conductance=cond,
        curvature=np.broadcast_to(np.zeros(N + 1), (M, N + 1)), boundary=boundary,
        basepoint=0, spacing=h, ball_radius=N * h, model=model, metric=metric,
    )


def _build_sphere(model: SphereBackwardFlow, k: float, times, scale=None):
    Ntot = int(round(model.extent * model.resolution))
    ds = model.extent / Ntot
    closed = k >= model.extent - 0.5 * ds
    N = Ntot if closed else int(round(k / ds))
    if N < 2:
        raise GeometryError("ball too small for the grid resolution")
    s, lo, hi, edges, faces = _radial_cells(N, ds, closed)
    th_lo, th_hi = lo / SQRT2, hi / SQRT2
    V0 = 2.0 * 2.0 * math.pi * (np.cos(th_lo) - np.cos(th_hi))  # radius^2 = 2
    dth = ds / SQRT2
    cond = 2.0 * math.pi * np.sin(faces / SQRT2) / dth
    c = model.scale(times) if scale is None else np.asarray(scale)
    M = len(times)
    boundary = np.zeros(N + 1, dtype=bool)
    if not closed:
        boundary[-1] = True
    metric = _RadialMetric(lo, hi, np.sqrt(c), lambda r: -np.cos(r / SQRT2))
    return DiscreteComplex(
        layout="radial", dim=2, times=times, positions=s[:, None], cell_ids=np.arange(N + 1),
        volumes=c[:, None] * V0[None, :], edges=edges, edge_conductance=cond,
        curvature=np.broadcast_to((1.0 / c)[:, None], (M, N + 1)), boundary=boundary,
        basepoint=0, spacing=ds, ball_radius=N * ds, model=model, metric=metric, closed=closed,
    )


def _build_planar(model, k: float, times, sampler, stencil: int, static: bool):
    grid = PlanarGrid(model.extent, model.resolution)
    h = grid.h
    w0 = sampler(times[0])
    d0 = grid_distances(w0, h, [grid.center_id], stencil)[0]
    inside = d0 <= k + 1e-12
    ids = np.nonzero(inside)[0]
    if len(ids) < 5:
        raise GeometryError("ball too small for the grid resolution")
    local = -np.ones(grid.size * grid.size, dtype=int)
    local[ids] = np.arange(len(ids))
    a, b = grid.neighbor_pairs()
    keep = inside[a] & inside[b]
    edges = np.stack([local[a[keep]], local[b[keep]]], axis=1)
    deg = np.bincount(edges.ravel(), minlength=len(ids))
    boundary = deg < 4
    M = len(times)
    if static:
        W = np.broadcast_to(w0.ravel()[ids], (M, len(ids)))
        Rc = -2.0 * np.exp(-2.0 * w0) * grid.lap(w0)
        R = np.broadcast_to(Rc.ravel()[ids], (M, len(ids)))
    else:
        W = np.empty((M, len(ids)))
        R = np.empty((M, len(ids)))
        for m, t in enumerate(times):
            w = w0 if m == 0 else sampler(t)
            W[m] = w.ravel()[ids]
            R[m] = (-2.0 * np.exp(-2.0 * w) * grid.lap(w)).ravel()[ids]
    V = np.exp(2.0 * W) * h * h
    pos = np.stack([grid.X.ravel()[ids], grid.Y.ravel()[ids]], axis=1)
    metric = _PlanarMetric(grid, sampler, stencil)
    cx = DiscreteComplex(
        layout="planar", dim=2, times=times, positions=pos, cell_ids=ids,
        volumes=V, edges=edges, edge_conductance=np.ones(len(edges)),
        curvature=R, boundary=boundary, basepoint=int(local[grid.center_id]), spacing=h,
        ball_radius=float(k), model=model, metric=metric,
    )
    d = d0[ids]
    d.setflags(write=False)
    cx._cache[("dist", cx.basepoint, 0)] = d
    return cx


def build_complex(model, ball_radius: float, times, *, flow=None, stencil: int = 5) -> DiscreteComplex:
    """Sample ``model`` on the geodesic ball B_k(x0) at every node of ``times``.

    For :class:`ConformalPlaneFlow` the complex carries the backward flow;
    pass ``flow`` (a backward :class:`~ricciheat.flow.FlowSolution`) to reuse
    an existing solve, otherwise one is computed on [0, times[-1]].
    """
    times = _check_grid(times)
    if ball_radius <= 0:
        raise GeometryError("ball radius must be positive")
    model.check_times(times)
    if isinstance(model, SphereBackwardFlow):
        if ball_radius > model.extent + 1e-9:
            raise GeometryError("ball radius exceeds the sphere diameter")
        scale = None if flow is None else flow.scale_at(times)
        return _build_sphere(model, ball_radius, times, scale)
    if isinstance(model, FlatEuclidean):
        if ball_radius > model.radius + 1e-12:
            raise GeometryError("ball radius exceeds the model extent")
        if model.layout == "radial":
            return _build_flat_radial(model, ball_radius, times)
        zero = np.zeros(PlanarGrid(model.radius, model.resolution).shape)
        return _build_planar(model, ball_radius, times, lambda t: zero, stencil, static=True)
    if ball_radius > model.extent + 1e-12:
        raise GeometryError("ball radius exceeds the grid extent")
    if isinstance(model, PrescribedFamily):
        grid = PlanarGrid(model.extent, model.resolution)
        X, Y = np.asarray(grid.X), np.asarray(grid.Y)
        return _build_planar(model, ball_radius, times, lambda t: model.w(X, Y, t), stencil, static=False)
    if isinstance(model, ConformalPlaneFlow):
        if flow is None:
            from .flow import backward_flow
            flow = backward_flow(model, float(times[-1]))
        if times[-1] > flow.T + 1e-12:
            raise GeometryError("time grid extends past the flow horizon")
        return _build_planar(model, ball_radius, times, flow.log_factor_at, stencil, static=False)
    raise GeometryError(f"unsupported model {model!r}")


# ---------------------------------------------------------- measurements


def distance_to_base(cx: DiscreteComplex, t: float) -> np.ndarray:
    """r_t(x0, x) for every cell."""
    return cx.distances_from(cx.basepoint, cx.time_index(t))


class BallVolume(NamedTuple):
    volume: float
    truncated: bool


def ball_volume(cx: DiscreteComplex, center: int, radius: float, t: float | None = None) -> BallVolume:
    """Volume of the geodesic ball B_radius(center) with partial boundary cells.

    Cells straddling the sphere of radius ``radius`` contribute the fraction
    of their volume inside it (exact annulus fractions on radial complexes,
    a linear ramp across one cell width on planar ones).
    """
    if radius <= 0:
        raise GeometryError("radius must be positive")
    m = 0 if t is None else cx.time_index(t)
    frac = cx.ball_fractions(center, radius, m)
    vol = float(np.dot(frac, cx.volumes[m]))
    if cx.layout == "radial":
        reach = cx.metric.length_scale[m] * cx.metric.hi[-1]
    else:
        reach = float(np.max(cx.distances_from(center, m)))
    truncated = (not cx.closed) and radius > reach + 1e-12
    return BallVolume(vol, truncated)


def comparison_volume(k0: float, n: int, r: float) -> float:
    """V_{k0}(r) = int_0^r (sinh(sqrt(k0) rho) / sqrt(k0))^{n-1} d rho.

    This is the space-form ball volume *without* the unit-sphere area factor;
    only ratios of it are ever consumed.
    """
    if k0 <= 0:
        raise ValueError("k0 must be positive")
    if n < 2:
        raise ValueError("n must be >= 2")
    if r < 0:
        raise ValueError("r must be non-negative")
    if r == 0:
        return 0.0
    sk = math.sqrt(k0)
    val, _ = integrate.quad(lambda rho: (math.sinh(sk * rho) / sk) ** (n - 1), 0.0, r,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return val


@dataclass(frozen=True)
class RatioBound:
    lhs: float
    rhs: float
    a: float
    truncated: bool


def comparison_ratio_bound(cx: DiscreteComplex, y: int, r: float, tau: float, k0: float, T: float) -> RatioBound:
    """Measured V_y(r)/V_y(sqrt tau) against V_{k0}(a sqrt T)/V_{k0}(sqrt T), a = r/sqrt(tau) + 1."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if tau > T:
        raise ValueError("tau must not exceed T")
    st = math.sqrt(tau)
    m0 = 0
    width = float(np.max(cx.cell_width(m0)))
    if st < width:
        raise UnderResolvedError(f"sqrt(tau)={st:.3g} is below one cell width {width:.3g}")
    num = ball_volume(cx, y, r, cx.times[m0]) if r > 0 else BallVolume(0.0, False)
    den = ball_volume(cx, y, st, cx.times[m0])
    a = r / st + 1.0
    rhs = comparison_volume(k0, cx.dim, a * math.sqrt(T)) / comparison_volume(k0, cx.dim, math.sqrt(T))
    return RatioBound(num.volume / den.volume, rhs, a, num.truncated or den.truncated)


def dump_complex(cx: DiscreteComplex, path) -> None:
    """Columnar text dump: one row per (time node, cell)."""
    pos_cols = " ".join(f"x{i}" for i in range(cx.positions.shape[1]))
    with open(path, "w") as fh:
        fh.write(f"# layout={cx.layout} dim={cx.dim} cells={cx.n_cells} times={len(cx.times)} "
                 f"basepoint={cx.basepoint} spacing={cx.spacing!r}\n")
        fh.write(f"# time cell {pos_cols} boundary volume curvature\n")
        for m, t in enumerate(cx.times):
            for i in range(cx.n_cells):
                pos = " ".join(f"{p:.17g}" for p in cx.positions[i])
                fh.write(f"{t:.17g} {i} {pos} {int(cx.boundary[i])} "
                         f"{cx.volumes[m, i]:.17g} {cx.curvature[m, i]:.17g}\n")
