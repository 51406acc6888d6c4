import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ricciheat.flow import certify, sample_prescribed
from ricciheat.geometry import (
    FlatEuclidean,
    GeometryError,
    PrescribedFamily,
    SphereBackwardFlow,
    UnderResolvedError,
    ball_volume,
    build_complex,
    comparison_ratio_bound,
    comparison_volume,
    distance_to_base,
    dump_complex,
    graded_times,
    uniform_times,
)


def test_flat_distance_is_euclidean(flat_disk):
    r = distance_to_base(flat_disk, 0.0)
    i = int(np.argmin(np.abs(flat_disk.positions[:, 0] - 0.5)))
    assert r[i] == 0.5


def test_sphere_antipodal_distance_scales_with_flow():
    model = SphereBackwardFlow(32)
    times = uniform_times(1.0, 0.05)
    cx = build_complex(model, model.extent, times)
    assert cx.closed
    for t in (0.0, 0.5, 1.0):
        r = distance_to_base(cx, t)
        # unit-curvature normalisation of h0 puts the antipode at pi sqrt(2)
        expect = math.pi * math.sqrt(2.0 * (1.0 + t))
        assert abs(r[-1] / expect - 1) <= 0.01


def test_distance_band_under_certificate():
    model = PrescribedFamily(extent=3.0, resolution=8)
    flow = sample_prescribed(model, 1.0)
    cert = certify(flow)
    times = flow.times[::25]
    cx = build_complex(model, 2.5, times)
    r0 = cx.distances_from(cx.basepoint, 0)
    f = cert.distance_factor
    for m in range(len(times)):
        rt = cx.distances_from(cx.basepoint, m)
        assert np.all(rt <= f * r0 * (1 + 1e-12))
        assert np.all(rt >= r0 / f * (1 - 1e-12))


def test_ball_volume_flat_disk(flat_disk):
    one = ball_volume(flat_disk, 0, 1.0)
    two = ball_volume(flat_disk, 0, 2.0)
    assert abs(one.volume / math.pi - 1) <= 0.01
    assert abs(two.volume / one.volume - 4) <= 0.04
    assert not one.truncated


def test_ball_volume_planar_flat():
    cx = build_complex(FlatEuclidean(2, 3.0, 16, "planar"), 3.0, [0.0, 1.0])
    one = ball_volume(cx, cx.basepoint, 1.0).volume
    two = ball_volume(cx, cx.basepoint, 2.0).volume
    assert abs(one / math.pi - 1) <= 0.01
    assert abs(two / one - 4) <= 0.04


def test_ball_volume_at_extent_is_total(flat_disk):
    total = float(np.sum(flat_disk.volumes[0]))
    bv = ball_volume(flat_disk, 0, flat_disk.ball_radius)
    assert bv.volume == pytest.approx(total, rel=1e-12)
    assert ball_volume(flat_disk, 0, 10.0).truncated


def test_ball_volume_rejects_nonpositive_radius(flat_disk):
    with pytest.raises(GeometryError):
        ball_volume(flat_disk, 0, 0.0)


@given(st.floats(0.05, 1.9), st.floats(0.01, 0.1))
def test_ball_volume_monotone_in_radius(r, dr):
    cx = build_complex(FlatEuclidean(2, 2.0, 16), 2.0, [0.0, 1.0])
    assert ball_volume(cx, 0, r).volume <= ball_volume(cx, 0, r + dr).volume + 1e-14


def test_comparison_volume_closed_form():
    assert comparison_volume(1.0, 2, 1.0) == pytest.approx(math.cosh(1.0) - 1.0, rel=1e-10, abs=0)
    assert abs(comparison_volume(1.0, 2, 1.0) - 0.5430806348152437) < 1e-12
    # n = 3: int sinh^2 = (sinh(2r) / 2 - r) / 2
    assert comparison_volume(1.0, 3, 1.0) == pytest.approx((math.sinh(2) / 2 - 1) / 2, rel=1e-10)
    for n in (2, 3, 5):
        assert comparison_volume(0.7, n, 0.0) == 0.0


def test_comparison_volume_flat_limit():
    assert comparison_volume(1e-12, 2, 1.5) == pytest.approx(1.5**2 / 2, rel=1e-9)


def test_comparison_volume_argument_checks():
    with pytest.raises(ValueError):
        comparison_volume(0.0, 2, 1.0)
    with pytest.raises(ValueError):
        comparison_volume(1.0, 1, 1.0)
    with pytest.raises(ValueError):
        comparison_volume(1.0, 2, -1.0)


@given(st.floats(0.01, 3.0), st.floats(0.01, 1.0), st.floats(0.01, 2.0), st.integers(2, 4))
def test_comparison_volume_increasing(r, dr, k0, n):
    base = comparison_volume(k0, n, r)
    assert comparison_volume(k0, n, r + dr) > base
    assert comparison_volume(k0 * 1.5, n, r) > base


def test_comparison_ratio_bound_flat(flat_disk):
    rb = comparison_ratio_bound(flat_disk, 0, 1.0, 0.25, 1e-12, 1.0)
    assert abs(rb.lhs - 4.0) <= 0.04
    assert rb.rhs >= 4.0
    assert rb.a == pytest.approx(3.0)


def test_comparison_ratio_bound_a_equals_two(flat_disk):
    tau, k0, T = 0.36, 0.5, 1.0
    rb = comparison_ratio_bound(flat_disk, 0, math.sqrt(tau), tau, k0, T)
    assert rb.a == pytest.approx(2.0)
    assert rb.rhs == pytest.approx(comparison_volume(k0, 2, 2.0) / comparison_volume(k0, 2, 1.0), rel=1e-12)
    assert rb.lhs == pytest.approx(1.0)


def test_comparison_ratio_bound_small_radius(flat_disk):
    rb = comparison_ratio_bound(flat_disk, 0, 1e-3, 0.25, 1.0, 1.0)
    assert rb.lhs <= 1.0 <= rb.rhs


def test_comparison_ratio_bound_under_resolved(flat_disk):
    with pytest.raises(UnderResolvedError):
        comparison_ratio_bound(flat_disk, 0, 1.0, 1e-4, 1.0, 1.0)


def _complexes():
    times = [0.0, 0.5, 1.0]
    yield build_complex(FlatEuclidean(2, 2.0, 16), 2.0, times)
    yield build_complex(FlatEuclidean(3, 2.0, 16), 2.0, times)
    yield build_complex(FlatEuclidean(2, 2.0, 8, "planar"), 2.0, times)
    yield build_complex(SphereBackwardFlow(16), 2.0, times)
    yield build_complex(PrescribedFamily(extent=2.0, resolution=8), 1.5, times)


def test_laplacian_symmetric_and_kills_constants():
    for cx in _complexes():
        for m in range(len(cx.times)):
            K = cx.laplacian_matrix(m)
            assert abs(K - K.T).max() == 0.0
            assert np.max(np.abs(cx.laplace(np.ones(cx.n_cells), m))) == 0.0


@pytest.mark.parametrize("n", [2, 3])
def test_laplacian_of_square_radius_radial(n):
    cx = build_complex(FlatEuclidean(n, 2.0, 32), 2.0, [0.0, 1.0])
    x = cx.positions[:, 0]
    lap = cx.laplace(x**2, 0)
    interior = ~cx.boundary
    assert np.max(np.abs(lap[interior] - 2 * n)) <= 4 * cx.spacing**2


def test_laplacian_of_square_radius_planar():
    cx = build_complex(FlatEuclidean(2, 2.0, 16, "planar"), 2.0, [0.0, 1.0])
    lap = cx.laplace(np.sum(cx.positions**2, axis=1), 0)
    assert np.max(np.abs(lap[~cx.boundary] - 4.0)) <= 1e-10


def test_sphere_volume_and_curvature():
    cx = build_complex(SphereBackwardFlow(32), SphereBackwardFlow().extent, [0.0, 1.0])
    # area of the radius-sqrt(2) sphere is 8 pi, doubled at t = 1
    assert np.sum(cx.volumes[0]) == pytest.approx(8 * math.pi, rel=1e-12)
    assert np.sum(cx.volumes[1]) == pytest.approx(16 * math.pi, rel=1e-12)
    assert cx.curvature[1, 0] == pytest.approx(cx.curvature[0, 0] / 2)


def test_build_errors():
    with pytest.raises(GeometryError):
        build_complex(SphereBackwardFlow(16), 10.0, [0.0, 1.0])
    with pytest.raises(GeometryError):
        build_complex(FlatEuclidean(2, 2.0, 16), 3.0, [0.0, 1.0])
    with pytest.raises(GeometryError):
        build_complex(FlatEuclidean(2, 2.0, 16), 1.0, [1.0, 0.0])
    with pytest.raises(GeometryError):
        FlatEuclidean(3, 2.0, 16, "planar")


def test_graded_times_shape():
    t = graded_times(1.0, 1 / 16, explicit_steps=10, dt_max=0.01)
    dt = np.diff(t)
    assert t[0] == 0.0 and t[-1] == 1.0
    assert np.allclose(dt[:10], 1 / 16**2 / 8)
    assert np.max(dt) <= 0.01 * (1 + 1e-12) * 1.5


def test_dump_complex(tmp_path, flat_disk):
    cx = build_complex(FlatEuclidean(2, 1.0, 8), 1.0, [0.0, 1.0])
    path = tmp_path / "cx.txt"
    dump_complex(cx, path)
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 2 * cx.n_cells
    last = lines[-1].split()
    assert float(last[-2]) == pytest.approx(cx.volumes[1, -1], rel=1e-15)
