"""Green functions on nested balls, exhaustion diagnostics and Gaussian fits."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import erf, roots_legendre

from .geometry import DiscreteComplex, UnderResolvedError, ball_volume, build_complex, graded_times
from .heat import SpaceTimeField, solve_conjugate_forward


@dataclass(eq=False)
class GreenRecord:
    k: float
    bc: str
    source: tuple
    field: SpaceTimeField
    mass_trace: np.ndarray
    deltas: dict = field(default_factory=dict)

    @property
    def complex(self) -> DiscreteComplex:
        return self.field.complex


def kernel_times(model, T: float, *, explicit_steps: int = 128, ratio: float = 1.02,
                 dt_max: float = 1.0 / 200) -> np.ndarray:
    """Time grid for delta-sourced solves: explicit start-up then graded steps."""
    h = 1.0 / model.resolution
    # the explicit start-up runs at half the positivity limit of the
    # smallest cell; conformal factors below 1 shrink that limit
    first = h * h / 8.0
    w0 = getattr(model, "w0", None)
    if w0 is not None:
        from .geometry import PlanarGrid
        g = PlanarGrid(model.extent, model.resolution)
        first *= math.exp(2.0 * min(0.0, float(np.min(w0(np.asarray(g.X), np.asarray(g.Y))))))
    return graded_times(T, h, explicit_steps=explicit_steps, ratio=ratio, dt_max=dt_max, first_dt=first)


def green_family(model, bc: str, source, ks, T: float, *, times=None, flow=None,
                 explicit_steps: int = 128) -> list[GreenRecord]:
    """One conjugate-heat solve per ball radius k, all on the same grid.

    ``source`` is ``(y, s)`` with y a grid cell id (None for the basepoint).
    """
    ks = [float(k) for k in ks]
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("ks must be strictly increasing")
    y, s = source
    if times is None:
        times = kernel_times(model, T, explicit_steps=explicit_steps)
    if getattr(model, "kind", "") == "conformal" and flow is None:
        from .flow import backward_flow
        flow = backward_flow(model, float(times[-1]))
    records = []
    for k in ks:
        cx = build_complex(model, k, times, flow=flow)
        yi = cx.basepoint if y is None else cx.index_of_id(int(y))
        fld = solve_conjugate_forward(cx, (yi, s), bc, T, explicit_steps=explicit_steps)
        records.append(GreenRecord(k, bc, (yi, s), fld, fld.mass_trace()))
    return records


@dataclass(frozen=True)
class Probe:
    """Fixed compact: grid ids of the smallest ball minus a one-cell collar,
    and the time rows at or after s + 10 h^2."""

    ids: np.ndarray
    rows: np.ndarray


def probe_compact(records: list[GreenRecord]) -> Probe:
    base = min(records, key=lambda r: r.k)
    cx = base.complex
    r0 = cx.distances_from(cx.basepoint, 0)
    collar = float(np.max(cx.cell_width(0)))
    keep = (r0 <= base.k - collar) & ~cx.boundary
    fld = base.field
    t1 = fld.times[0] + 10.0 * cx.spacing**2
    rows = np.nonzero(fld.times >= t1 - 1e-12)[0]
    if not np.any(keep) or len(rows) == 0:
        raise UnderResolvedError(
            f"probe compact is empty ({int(np.sum(keep))} cells, {len(rows)} time rows): "
            f"grid spacing {cx.spacing:.3g} too coarse for ball {base.k:g} and horizon {fld.times[-1]:g}")
    return Probe(cx.cell_ids[keep], rows)


def on_probe(rec: GreenRecord, probe: Probe) -> np.ndarray:
    cx = rec.complex
    lookup = {int(c): i for i, c in enumerate(cx.cell_ids)}
    idx = np.array([lookup[int(c)] for c in probe.ids])
    return rec.field.values[np.ix_(probe.rows, idx)]


@dataclass
class ConvergenceTable:
    ks: list
    d_neumann: list
    d_dirichlet: list
    gap: list
    mass_err: list
    monotone_violation: float
    domination_violation: float

    def rows(self):
        for i, k in enumerate(self.ks):
            yield {"k": k, "d_k": self.d_neumann[i], "gap_k": self.gap[i], "mass_err_k": self.mass_err[i]}


def exhaustion_convergence(neumann: list[GreenRecord], dirichlet: list[GreenRecord] | None = None) -> ConvergenceTable:
    """Sup-norm differences between consecutive radii on the probe compact.

    d_k = sup |Z_{k+1} - Z_k| (NaN for the largest k), the Dirichlet analogue,
    the Neumann-Dirichlet gap sup |Z_k - G_k| and the Neumann mass error.
    """
    if len(neumann) < 3:
        raise ValueError("need at least three radii")
    probe = probe_compact(neumann)
    Z = [on_probe(r, probe) for r in neumann]
    G = [on_probe(r, probe) for r in dirichlet] if dirichlet else None
    nan = float("nan")
    d_n = [float(np.max(np.abs(Z[i + 1] - Z[i]))) for i in range(len(Z) - 1)] + [nan]
    d_d, gap = [nan] * len(Z), [nan] * len(Z)
    mono = dom = -math.inf
    if G is not None:
        d_d = [float(np.max(np.abs(G[i + 1] - G[i]))) for i in range(len(G) - 1)] + [nan]
        gap = [float(np.max(np.abs(z - g))) for z, g in zip(Z, G)]
        # compare over the full smaller complex, not just the probe
        for a, b in zip(dirichlet, dirichlet[1:]):
            mono = max(mono, _max_excess(a, b))
        for g, z in zip(dirichlet, neumann):
            dom = max(dom, _max_excess(g, z))
    mass_err = [float(np.max(np.abs(r.mass_trace - 1.0))) for r in neumann]
    for i, r in enumerate(neumann):
        r.deltas.update(d_k=d_n[i], gap_k=gap[i])
    return ConvergenceTable([r.k for r in neumann], d_n, d_d, gap, mass_err, mono, dom)


def _max_excess(small: GreenRecord, large: GreenRecord) -> float:
    """max over cells of the smaller ball and all times of small - large."""
    cs, cl = small.complex, large.complex
    lookup = {int(c): i for i, c in enumerate(cl.cell_ids)}
    idx = np.array([lookup[int(c)] for c in cs.cell_ids])
    return float(np.max(small.field.values - large.field.values[:, idx]))


# ------------------------------------------------------------ Gaussian fit


@dataclass(frozen=True)
class GaussianFit:
    C: float
    D: float
    residual: float
    D_grid: np.ndarray = field(repr=False)
    C_grid: np.ndarray = field(repr=False)
    n_samples: int = 0


@dataclass(frozen=True)
class GaussianSamples:
    q: np.ndarray  # Z * V_y(sqrt tau)
    ratio: np.ndarray  # r^2 / tau


class FitError(RuntimeError):
    pass


def gaussian_samples(rec: GreenRecord, *, tau_min: float | None = None, max_ratio: float = 20.0,
                     max_distance: float | None = None, time_stride: int = 1) -> GaussianSamples:
    """Samples Z(x, t) V_y(sqrt(t - s)) with their r(x, y)^2 / (t - s).

    Ball volumes and distances are taken in the time-0 metric.  Cells within
    one unit of the ball boundary are skipped by default: zero-flux walls
    reflect mass and fatten the far tail there.
    """
    cx = rec.complex
    fld = rec.field
    y, s = rec.source
    h = cx.spacing
    tau_min = 10.0 * h * h if tau_min is None else tau_min
    r = cx.distances_from(y, 0)
    if max_distance is None:
        max_distance = rec.k - 1.0 if rec.k > 2.0 else rec.k / 2.0
    near = r <= max_distance
    qs, rs = [], []
    for m in range(0, len(fld.times), time_stride):
        tau = fld.times[m] - s
        if tau < tau_min - 1e-15:
            continue
        rho = r**2 / tau
        keep = (rho <= max_ratio) & near
        vol = ball_volume(cx, y, math.sqrt(tau), cx.times[0]).volume
        qs.append(fld.values[m, keep] * vol)
        rs.append(rho[keep])
    if not qs:
        raise FitError("no resolved samples (t - s below threshold)")
    return GaussianSamples(np.concatenate(qs), np.concatenate(rs))


def _required_C(sm: GaussianSamples, D: float) -> float:
    return float(np.max(sm.q * np.exp(sm.ratio / D)))


def fit_gaussian_samples(sm: GaussianSamples, n: int, D_grid=None) -> GaussianFit:
    """Fit Z <= C / V_y(sqrt tau) exp(-r^2 / (D tau)).

    For each D the least admissible C is the sample maximum.  C(D) only
    decreases with D, so the pair is chosen to minimise the majorant's
    total mass C * D^{n/2}, which balances amplitude against spread.
    """
    D_grid = np.geomspace(1.0, 64.0, 32) if D_grid is None else np.asarray(D_grid)
    C_grid = np.array([_required_C(sm, D) for D in D_grid])
    if not np.all(np.isfinite(C_grid)):
        raise FitError("Gaussian fit diverged")
    j = int(np.argmin(C_grid * D_grid ** (n / 2.0)))
    C, D = float(C_grid[j]), float(D_grid[j])
    residual = _required_C(sm, D) - C
    return GaussianFit(C, D, residual, D_grid, C_grid, len(sm.q))


def fit_gaussian_bound(rec: GreenRecord, *, D_grid=None, **sample_opts) -> GaussianFit:
    sm = gaussian_samples(rec, **sample_opts)
    return fit_gaussian_samples(sm, rec.complex.dim, D_grid)


@dataclass(frozen=True)
class HoldoutCheck:
    fit: GaussianFit
    C_heldout: float
    inflation: float
    ok: bool


def holdout_check(rec: GreenRecord, *, limit: float = 0.05, D_grid=None, **sample_opts) -> HoldoutCheck:
    """Fit on even-indexed samples, then measure the C the odd ones need at the same D."""
    sm = gaussian_samples(rec, **sample_opts)
    train = GaussianSamples(sm.q[0::2], sm.ratio[0::2])
    test = GaussianSamples(sm.q[1::2], sm.ratio[1::2])
    fit = fit_gaussian_samples(train, rec.complex.dim, D_grid)
    Ch = _required_C(test, fit.D)
    infl = Ch / fit.C - 1.0
    return HoldoutCheck(fit, Ch, infl, infl <= limit)


# -------------------------------------------------------- mass integrals


def majorant_closed_form(C: float, beta: float) -> float:
    """C * int_0^inf exp(-xi + beta sqrt(xi)) d xi in closed form."""
    return C * (1.0 + beta * math.sqrt(math.pi) / 2.0 * math.exp(beta**2 / 4.0) * (1.0 + erf(beta / 2.0)))


def _majorant_quadrature(beta: float, panels: int, order: int = 16) -> float:
    # substitute xi = s^2: int_0^inf 2 s exp(-s^2 + beta s) ds; the integrand
    # is below e^{-1500} past beta/2 + 40
    x, wts = roots_legendre(order)
    edges = np.linspace(0.0, beta / 2.0 + 40.0, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    s = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    f = 2.0 * s * np.exp(-s * s + beta * s)
    return float(np.sum(0.5 * (b - a) * wts[None, :] * f))


@dataclass(frozen=True)
class MassIntegral:
    C_T: float
    coarse: float
    fine: float
    beta: float
    agreement: float
    finite: bool


def mass_integrability_check(fit: GaussianFit, certificate, n: int, T: float) -> MassIntegral:
    """Total-mass majorant C * int exp(-xi + C' sqrt(D xi)) d xi with C' = (n-1) sqrt(k0 T)."""
    k0 = certificate.k0 if hasattr(certificate, "k0") else float(certificate)
    Cp = (n - 1) * math.sqrt(k0 * T)
    beta = Cp * math.sqrt(fit.D)
    coarse = fit.C * _majorant_quadrature(beta, 64)
    fine = fit.C * _majorant_quadrature(beta, 128)
    agree = abs(fine - coarse) / abs(fine)
    finite = math.isfinite(fine)
    if not finite:
        raise FloatingPointError("majorant integral diverged")
    return MassIntegral(fine, coarse, fine, beta, agree, finite)


@dataclass(frozen=True)
class SublinearVerdict:
    radii: np.ndarray
    max_mass: np.ndarray
    bounded: bool


def sublinear_mass_check(rec: GreenRecord, radii, tol: float = 1e-10) -> SublinearVerdict:
    """max over t of the partial mass on time-0 balls B_R, per R."""
    cx = rec.complex
    fld = rec.field
    V = fld.volumes()
    out = []
    for R in radii:
        frac = cx.ball_fractions(cx.basepoint, float(R), 0)
        out.append(float(np.max(np.einsum("mi,mi,i->m", fld.values, V, frac))))
    arr = np.array(out)
    return SublinearVerdict(np.asarray(radii, dtype=float), arr, bool(np.all(arr <= 1.0 + tol)))


# ------------------------------------------------------------------- output


def write_convergence_csv(table: ConvergenceTable, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "d_k", "gap_k", "mass_err_k"])
        for row in table.rows():
            wr.writerow([f"{row[c]:.17g}" for c in ("k", "d_k", "gap_k", "mass_err_k")])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def summary_dict(table: ConvergenceTable, fit: GaussianFit | None = None) -> dict[str, Any]:
    out = {
        "ks": table.ks,
        "d_dirichlet": table.d_dirichlet,
        "monotone_violation": table.monotone_violation,
        "domination_violation": table.domination_violation,
    }
    if fit is not None:
        out["fit"] = {"C": fit.C, "D": fit.D, "residual": fit.residual}
    return out


def write_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2, allow_nan=True)
