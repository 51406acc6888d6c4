import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.special import j1, jn_zeros

from ricciheat.flow import backward_flow
from ricciheat.geometry import (
    ConformalPlaneFlow,
    FlatEuclidean,
    SphereBackwardFlow,
    build_complex,
    graded_times,
    uniform_times,
)
from ricciheat.heat import (
    CoefficientData,
    HeatError,
    PositivityError,
    discrete_delta,
    mass,
    mass_growth_profile,
    read_binary,
    solve_conjugate_forward,
    solve_linear_parabolic,
    write_binary,
    write_columnar,
)
from ricciheat.maxprin import random_instance, run_instance
from ricciheat.profiles import GaussianBump


@pytest.fixture(scope="module")
def flat_kernel(flat_disk):
    return solve_conjugate_forward(flat_disk, (0, 0.0), "neumann", explicit_steps=128)


def test_delta_has_unit_mass(flat_disk):
    for y in (0, 5, 40):
        u = discrete_delta(flat_disk, y, 0.0)
        assert np.dot(u, flat_disk.volumes[0]) == 1.0


def test_delta_on_boundary_rejected(flat_disk):
    with pytest.raises(ValueError):
        discrete_delta(flat_disk, flat_disk.n_cells - 1, 0.0)


def test_distinct_sources_disjoint(flat_disk):
    a = discrete_delta(flat_disk, 3, 0.0)
    b = discrete_delta(flat_disk, 7, 0.0)
    assert not np.any((a != 0) & (b != 0))


def test_center_value_matches_gaussian(flat_kernel, flat_disk):
    h = flat_disk.spacing
    t = flat_kernel.times
    rows = np.nonzero((t >= 4 * h * h) & (t <= 0.25))[0]
    exact = 1.0 / (4 * math.pi * t[rows])
    assert np.max(np.abs(flat_kernel.values[rows, 0] / exact - 1)) <= 0.05


def test_neumann_mass_flat(flat_kernel):
    assert np.max(np.abs(flat_kernel.mass_trace() - 1)) <= 1e-12
    assert mass(flat_kernel, 0.5) == pytest.approx(1.0, abs=1e-12)
    assert mass(flat_kernel, 0.0) == pytest.approx(1.0, abs=1e-15)


def test_dirichlet_mass_matches_bessel_series():
    times = graded_times(0.3, 1 / 32, explicit_steps=128, dt_max=1 / 1000)
    cx = build_complex(FlatEuclidean(2, 1.0, 32), 1.0, times)
    fld = solve_conjugate_forward(cx, (0, 0.0), "dirichlet", explicit_steps=128)
    m = fld.mass_trace()
    # mass leaks once heat reaches the absorbing wall, then decreases strictly
    assert np.all(np.diff(m) <= 1e-15)
    late = fld.times[1:] >= 0.02
    assert np.all(np.diff(m)[late] < 0)
    assert np.all((m > 0) & (m <= 1 + 1e-14))
    # unit disk, absorbing wall: sum 2 / (j J1(j)) exp(-j^2 t) over zeros of J0
    z = jn_zeros(0, 200)
    for t in (0.05, 0.1, 0.2, 0.3):
        i = int(np.argmin(np.abs(fld.times - t)))
        exact = np.sum(2 / (z * j1(z)) * np.exp(-z**2 * fld.times[i]))
        assert abs(m[i] / exact - 1) <= 0.01


def test_sphere_neumann_mass():
    model = SphereBackwardFlow(32)
    ds = model.extent / round(model.extent * model.resolution)
    times = graded_times(1.0, ds, explicit_steps=64)
    for k in (2.0, model.extent):
        cx = build_complex(model, k, times)
        fld = solve_conjugate_forward(cx, (0, 0.0), "neumann", explicit_steps=64)
        assert np.max(np.abs(fld.mass_trace() - 1)) <= 1e-10


def test_conformal_neumann_mass_and_positivity():
    model = ConformalPlaneFlow(GaussianBump(0.3, 0.7), extent=3.0, resolution=8, dt=1 / 100)
    flow = backward_flow(model, 0.5)
    times = graded_times(0.5, 1 / 8, explicit_steps=32, dt_max=1 / 100)
    cx = build_complex(model, 2.5, times, flow=flow)
    fld = solve_conjugate_forward(cx, (cx.basepoint, 0.0), "neumann", explicit_steps=32)
    assert np.max(np.abs(fld.mass_trace() - 1)) <= 1e-10
    assert np.min(fld.values) >= 0.0


def test_crank_nicolson_conserves_mass(flat_disk):
    fld = solve_conjugate_forward(flat_disk, (0, 0.0), "neumann", theta=0.5)
    assert np.max(np.abs(fld.mass_trace() - 1)) <= 1e-12


def test_dirichlet_below_neumann(flat_disk, flat_kernel):
    d = solve_conjugate_forward(flat_disk, (0, 0.0), "dirichlet", explicit_steps=128)
    assert np.min(d.values) >= 0.0
    assert np.max(d.values - flat_kernel.values) <= 1e-10


def _dense_parts(cx):
    K = cx.laplacian_matrix(0).toarray()
    V = cx.volumes[0]
    return K, V


def test_propagator_matches_matrix_exponential():
    cx0 = build_complex(FlatEuclidean(2, 1.0, 15), 1.0, [0.0, 0.1])
    K, V = _dense_parts(cx0)
    u0 = discrete_delta(cx0, 0, 0.0)
    exact = expm(-0.1 * (K / V[:, None])) @ u0
    errs = []
    for steps in (10, 20, 40, 80):
        cx = build_complex(FlatEuclidean(2, 1.0, 15), 1.0, uniform_times(0.1, 0.1 / steps))
        fld = solve_conjugate_forward(cx, (0, 0.0), "neumann")
        errs.append(np.max(np.abs(fld.values[-1] - exact)))
    assert cx0.n_cells <= 20
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert min(ratios) >= 1.8
    assert errs[-1] <= 0.05 * np.max(np.abs(exact))


def test_kernel_symmetry_static_metric():
    cx = build_complex(FlatEuclidean(2, 2.0, 8, "planar"), 2.0, uniform_times(0.3, 0.01))
    pos = cx.positions
    x = int(np.argmin(np.sum((pos - [0.5, 0.25]) ** 2, axis=1)))
    y = int(np.argmin(np.sum((pos - [-0.75, 0.5]) ** 2, axis=1)))
    for bc in ("neumann", "dirichlet"):
        a = solve_conjugate_forward(cx, (y, 0.0), bc).values[-1, x]
        b = solve_conjugate_forward(cx, (x, 0.0), bc).values[-1, y]
        assert abs(a - b) <= 1e-8 * max(abs(a), 1e-300)


def test_constants_are_solutions(flat_disk):
    cx = build_complex(FlatEuclidean(2, 2.0, 16), 2.0, uniform_times(1.0, 0.01))
    fld = solve_linear_parabolic(cx, CoefficientData.zero(cx), np.full(cx.n_cells, 3.0))
    assert np.max(np.abs(fld.values - 3.0)) <= 1e-12


def test_constant_potential_growth():
    cx = build_complex(FlatEuclidean(2, 2.0, 16), 2.0, uniform_times(1.0, 1e-3))
    beta = 0.7
    fld = solve_linear_parabolic(cx, CoefficientData.constant_potential(cx, beta), np.ones(cx.n_cells))
    growth = fld.mass_trace() / fld.mass_trace()[0]
    assert np.max(np.abs(growth / np.exp(beta * fld.times) - 1)) <= 1e-3


@given(st.integers(0, 2**31 - 1))
def test_nonpositive_data_stay_nonpositive(seed):
    cx = build_complex(FlatEuclidean(2, 2.0, 8), 2.0, uniform_times(0.5, 0.02))
    inst = random_instance(seed, cx, 1.0, 1.0)
    fld = run_instance(cx, inst)
    assert np.max(fld.values) <= 1e-8


def test_coefficient_bounds_enforced(flat_disk):
    cx = build_complex(FlatEuclidean(2, 1.0, 8), 1.0, [0.0, 1.0])
    with pytest.raises(ValueError):
        CoefficientData(np.zeros((2, len(cx.edges))), np.full((2, cx.n_cells), 2.0), 0.0, 1.0)


def test_positivity_guard():
    cx = build_complex(FlatEuclidean(2, 1.0, 8), 1.0, [0.0, 1.0])
    with pytest.raises(PositivityError):
        solve_linear_parabolic(cx, CoefficientData.constant_potential(cx, 2.0), -np.ones(cx.n_cells))


def test_explicit_step_guard():
    cx = build_complex(FlatEuclidean(2, 1.0, 16), 1.0, uniform_times(0.1, 0.01))
    with pytest.raises(PositivityError):
        solve_conjugate_forward(cx, (0, 0.0), "neumann", explicit_steps=3)


def test_mass_growth_profile(flat_disk, flat_kernel):
    t = float(flat_kernel.times[np.argmin(np.abs(flat_kernel.times - 0.25))])
    radii = np.linspace(0.25, 1.5, 6)
    prof = mass_growth_profile(flat_kernel, radii, t)
    assert np.all(np.diff(prof[:, 1]) >= 0)
    exact = 1 - np.exp(-radii**2 / (4 * t))
    assert np.max(np.abs(prof[:, 1] / exact - 1)) <= 0.01
    full = mass_growth_profile(flat_kernel, [flat_disk.ball_radius], t)
    assert full[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_binary_roundtrip(tmp_path, flat_kernel):
    path = tmp_path / "k.bin"
    write_binary(flat_kernel, path)
    times, values = read_binary(path)
    assert np.array_equal(times, flat_kernel.times)
    assert np.array_equal(values, flat_kernel.values)
    path.write_bytes(b"garbage!" + path.read_bytes()[8:])
    with pytest.raises(HeatError):
        read_binary(path)


def test_columnar_dump(tmp_path):
    cx = build_complex(FlatEuclidean(2, 1.0, 4), 1.0, [0.0, 0.5, 1.0])
    fld = solve_conjugate_forward(cx, (0, 0.0))
    path = tmp_path / "k.txt"
    write_columnar(fld, path)
    rows = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    assert len(rows) == 3 * cx.n_cells
