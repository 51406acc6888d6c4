import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ricciheat.geometry import FlatEuclidean, comparison_ratio_bound
from ricciheat.green import (
    FitError,
    GaussianFit,
    exhaustion_convergence,
    fit_gaussian_bound,
    gaussian_samples,
    green_family,
    holdout_check,
    majorant_closed_form,
    mass_integrability_check,
    on_probe,
    probe_compact,
    read_csv,
    sublinear_mass_check,
    summary_dict,
    write_convergence_csv,
)


def _fit(C, D):
    return GaussianFit(C, D, 0.0, np.array([D]), np.array([C]))


def test_dirichlet_exhaustion_monotone(planar_family):
    _, dirichlet = planar_family
    probe = probe_compact(dirichlet)
    G = [on_probe(r, probe) for r in dirichlet]
    for a, b in zip(G, G[1:]):
        assert np.max(a - b) <= 1e-10


def test_dirichlet_dominated_by_neumann(planar_family):
    neumann, dirichlet = planar_family
    for z, g in zip(neumann, dirichlet):
        assert np.max(g.field.values - z.field.values) <= 1e-10


def test_largest_ball_matches_plane_gaussian(planar_family):
    neumann, dirichlet = planar_family
    probe = probe_compact(neumann)
    cx = neumann[-1].complex
    idx = [cx.index_of_id(int(c)) for c in probe.ids]
    r2 = np.sum(cx.positions[idx] ** 2, axis=1)
    for rec in (neumann[-1], dirichlet[-1]):
        t = rec.field.times[probe.rows]
        sel = t <= 0.25
        exact = np.exp(-r2[None, :] / (4 * t[sel, None])) / (4 * math.pi * t[sel, None])
        got = on_probe(rec, probe)[sel]
        assert np.max(np.abs(got - exact)) / np.max(exact) <= 0.02


def test_exhaustion_table(planar_family, tmp_path):
    neumann, dirichlet = planar_family
    table = exhaustion_convergence(neumann, dirichlet)
    d = table.d_neumann[:-1]
    assert all(b < a for a, b in zip(d, d[1:]))
    assert math.isnan(table.d_neumann[-1])
    assert table.gap[-1] <= 1e-3
    assert max(table.mass_err) <= 1e-10
    assert table.monotone_violation <= 1e-10 and table.domination_violation <= 1e-10
    path = tmp_path / "conv.csv"
    write_convergence_csv(table, path)
    rows = read_csv(path)
    assert [float(r["k"]) for r in rows] == [1.0, 2.0, 3.0, 4.0]
    assert float(rows[0]["d_k"]) == d[0]
    assert summary_dict(table)["domination_violation"] == table.domination_violation


def test_exhaustion_needs_three_radii(planar_family):
    neumann, _ = planar_family
    with pytest.raises(ValueError):
        exhaustion_convergence(neumann[:2])


def test_family_rejects_unsorted_radii():
    with pytest.raises(ValueError):
        green_family(FlatEuclidean(2, 3.0, 4, "planar"), "neumann", (None, 0.0), [2, 1, 3], 0.5)


def test_gaussian_fit_flat_recovers_closed_form(planar_family):
    rec = planar_family[0][-1]
    fit = fit_gaussian_bound(rec, D_grid=np.linspace(2.0, 8.0, 601))
    assert abs(fit.D / 4 - 1) <= 0.05
    assert abs(fit.C / 0.25 - 1) <= 0.05
    coarse = fit_gaussian_bound(rec)
    assert 3.6 <= coarse.D <= 4.4 and 0.23 <= coarse.C <= 0.28
    assert coarse.residual <= 0.0


def test_gaussian_fit_origin_samples(planar_family):
    rec = planar_family[0][-1]
    sm = gaussian_samples(rec, max_distance=0.0)
    assert np.all(sm.ratio == 0.0)
    fit = fit_gaussian_bound(rec, max_distance=0.0)
    assert fit.C == float(np.max(sm.q))


def test_gaussian_fit_requires_samples(planar_family):
    with pytest.raises(FitError):
        fit_gaussian_bound(planar_family[0][0], tau_min=10.0)


def test_holdout_inflation(planar_family):
    chk = holdout_check(planar_family[0][-1])
    assert chk.ok and chk.inflation <= 0.05


def test_mass_integral_flat_limit():
    fit = _fit(0.3, 4.0)
    res = mass_integrability_check(fit, 0.0, 2, 1.0)
    assert res.C_T == pytest.approx(0.3, rel=1e-12)


def test_mass_integral_unit_constants():
    res = mass_integrability_check(_fit(0.25, 4.0), 1.0, 2, 1.0)
    assert res.agreement <= 1e-8
    assert res.finite
    assert res.C_T == pytest.approx(majorant_closed_form(0.25, 2.0), rel=1e-10)


@given(st.floats(0.0, 2.0), st.floats(0.01, 1.0))
def test_mass_integral_monotone_in_curvature(k0, dk):
    fit = _fit(0.25, 4.0)
    a = mass_integrability_check(fit, k0, 2, 1.0).C_T
    b = mass_integrability_check(fit, k0 + dk, 2, 1.0).C_T
    assert b > a


def test_sublinear_mass(planar_family):
    neumann, dirichlet = planar_family
    radii = [0.5, 1.0, 2.0, 4.0]
    assert sublinear_mass_check(neumann[-1], radii).bounded
    assert sublinear_mass_check(dirichlet[-1], radii).bounded
    rec = neumann[1]
    full = sublinear_mass_check(rec, [rec.k + 1.0])
    assert full.max_mass[0] == pytest.approx(float(np.max(rec.mass_trace)), abs=1e-14)


def test_comparison_bound_on_family_geometry(planar_family):
    cx = planar_family[0][-1].complex
    for r in (0.5, 1.0, 2.0):
        for tau in (0.1, 0.25, 1.0):
            rb = comparison_ratio_bound(cx, cx.basepoint, r, tau, 1e-12, 1.0)
            assert rb.lhs <= rb.rhs * 1.01
