import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoadapt.errors import DimensionError, InvalidInputError, RankDeficiencyError
from geoadapt.grassmann import (
    Subspace,
    export_kernel,
    geodesic_flow_kernel,
    geodesic_point,
    gfk_quadrature,
    lambda_coefficients,
    principal_system,
    quadrature_residual,
    subspace_from_data,
    subspaces_from_batches,
)
from geoadapt.linalg import projector_distance, thin_svd
from geoadapt.synthdata import make_rng, random_subspace, rotated_subspace_pair

E1 = Subspace(np.array([[1.0], [0.0]]))
E2 = Subspace(np.array([[0.0], [1.0]]))


def planar(theta):
    return Subspace(np.array([[math.cos(theta)], [math.sin(theta)]]))


def test_subspace_validation():
    with pytest.raises(DimensionError):
        Subspace(np.eye(3))
    with pytest.raises(InvalidInputError):
        Subspace(np.array([[1.0], [1.0]]))


def test_pca_axis():
    pts = np.outer(np.linspace(-3, 4, 10), [1.0, 0.0, 0.0])
    s = subspace_from_data(pts, 1)
    np.testing.assert_allclose(np.abs(s.basis[:, 0]), [1, 0, 0], atol=1e-12)


def test_pca_plane():
    xy = make_rng(0).standard_normal((200, 2))
    pts = np.hstack([xy, np.zeros((200, 1))])
    s = subspace_from_data(pts, 2)
    assert projector_distance(s.basis, np.eye(3)[:, :2]) <= 1e-12


def test_pca_matches_svd():
    pts = make_rng(1).standard_normal((40, 6)) * np.arange(1, 7)
    s = subspace_from_data(pts, 3)
    ref = thin_svd(pts - pts.mean(axis=0)).v[:, :3]
    assert np.array_equal(s.basis, ref)
    np.testing.assert_allclose(s.mean, pts.mean(axis=0))


def test_pca_rank_deficiency():
    pts = np.outer(np.arange(5.0), [1.0, 2.0, 0.0])
    with pytest.raises(RankDeficiencyError) as info:
        subspace_from_data(pts, 2)
    assert info.value.achieved_rank == 1 and info.value.required_rank == 2


def test_batch_modes():
    rng = make_rng(2)
    batches = [rng.standard_normal((20, 5)) for _ in range(3)]
    assert len(subspaces_from_batches(batches, 2, mode="dataset")) == 1
    assert len(subspaces_from_batches(batches, 2, mode="batch")) == 3
    with pytest.raises(InvalidInputError):
        subspaces_from_batches(batches, 2, mode="other")


def test_identical_subspaces():
    s = random_subspace(8, 3, 0)
    sys = principal_system(s, s)
    np.testing.assert_allclose(sys.omega, 0, atol=1e-7)
    assert np.all(sys.u2 == 0)


def test_planar_angle():
    sys = principal_system(E1, planar(0.4))
    assert abs(sys.omega[0] - 0.4) <= 1e-15


def test_rotated_angles():
    s, t = rotated_subspace_pair(10, 2, [0.3, 0.7], 5)
    np.testing.assert_allclose(principal_system(s, t).omega, [0.3, 0.7], atol=1e-9)


def test_small_angle_accuracy():
    # arccos would lose about half the digits here
    sys = principal_system(E1, planar(1e-9))
    assert abs(sys.omega[0] - 1e-9) <= 1e-20


def test_lambda_limits():
    l1, l2, l3 = lambda_coefficients([0.0, math.pi / 2])
    np.testing.assert_allclose(l1, [2, 1], atol=1e-15)
    np.testing.assert_allclose(l2, [0, -2 / math.pi], atol=1e-15)
    np.testing.assert_allclose(l3, [0, 1], atol=1e-15)


def test_lambda_high_precision():
    mpmath.mp.dps = 40
    for w in [0.5, 1e-3, 4e-5, 1.2]:
        x = mpmath.mpf(2 * w)
        ref = (1 + mpmath.sin(x) / x, (mpmath.cos(x) - 1) / x, 1 - mpmath.sin(x) / x)
        got = lambda_coefficients([w])
        for g, r in zip(got, ref):
            assert abs(g[0] - float(r)) <= 1e-15 * max(1.0, abs(float(r)))
    assert abs(lambda_coefficients([0.5])[0][0] - 1.841471) < 1e-6


def test_lambda_taylor_switch_continuous():
    below = lambda_coefficients([0.5e-4 * (1 - 1e-9)])
    above = lambda_coefficients([0.5e-4 * (1 + 1e-9)])
    for a, b in zip(below, above):
        assert abs(a[0] - b[0]) <= 1e-12


def test_lambda_rejects_out_of_range():
    with pytest.raises(InvalidInputError):
        lambda_coefficients([-0.1])


def test_identical_kernel_is_twice_projector():
    s = random_subspace(7, 3, 1)
    k = geodesic_flow_kernel(s, s)
    np.testing.assert_allclose(k.q, 2 * s.basis @ s.basis.T, atol=1e-12)


def test_planar_kernel():
    k = geodesic_flow_kernel(E1, E2)
    np.testing.assert_allclose(k.q, [[1, 2 / math.pi], [2 / math.pi, 1]], atol=1e-12)
    quad = gfk_quadrature(k.system, E1)
    np.testing.assert_allclose(quad, [[0.5, 1 / math.pi], [1 / math.pi, 0.5]], atol=1e-13)


def test_quadrature_constant_integrand():
    s = random_subspace(6, 2, 3)
    quad = gfk_quadrature(principal_system(s, s), s)
    np.testing.assert_allclose(quad, s.basis @ s.basis.T, atol=1e-13)


def test_quadrature_self_convergence():
    s, t = random_subspace(12, 4, 4), random_subspace(12, 4, 5)
    sys = principal_system(s, t)
    assert np.max(np.abs(gfk_quadrature(sys, s, 32) - gfk_quadrature(sys, s, 64))) <= 1e-12
    with pytest.raises(InvalidInputError):
        gfk_quadrature(sys, s, 4)


def test_closed_form_vs_quadrature_16x4():
    k = geodesic_flow_kernel(random_subspace(16, 4, 6), random_subspace(16, 4, 7))
    assert quadrature_residual(k) <= 1e-8


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 64), st.data())
def test_kernel_properties(d, data):
    n = data.draw(st.integers(1, min(16, d // 2)))
    seed = data.draw(st.integers(0, 2**31))
    rng = make_rng(seed)
    s, t = random_subspace(d, n, rng), random_subspace(d, n, rng)
    k = geodesic_flow_kernel(s, t)
    assert quadrature_residual(k) <= 1e-8
    assert np.array_equal(k.q, k.q.T)
    w = np.linalg.eigvalsh(k.q)
    assert w[0] >= -1e-8 * w[-1]
    assert projector_distance(geodesic_point(k.system, s, 0.0), s.basis) <= 1e-8
    assert projector_distance(geodesic_point(k.system, s, 1.0), t.basis) <= 1e-8
    for nu in (0.13, 0.5, 0.91):
        pi = geodesic_point(k.system, s, nu)
        np.testing.assert_allclose(pi.T @ pi, np.eye(n), atol=1e-10)


def test_geodesic_midpoint_planar():
    theta = 0.8
    sys = principal_system(E1, planar(theta))
    mid = geodesic_point(sys, E1, 0.5)
    expected = np.array([[math.cos(theta / 2)], [math.sin(theta / 2)]])
    assert projector_distance(mid, expected) <= 1e-12


def test_geodesic_point_range():
    sys = principal_system(E1, E2)
    with pytest.raises(InvalidInputError):
        geodesic_point(sys, E1, 1.5)


def test_wide_subspaces_with_zero_sines():
    # N > D - N forces some angles to be zero
    s, t = random_subspace(5, 4, 8), random_subspace(5, 4, 9)
    k = geodesic_flow_kernel(s, t)
    assert quadrature_residual(k) <= 1e-8


def test_export(tmp_path):
    k = geodesic_flow_kernel(random_subspace(6, 2, 10), random_subspace(6, 2, 11))
    export_kernel(k, tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["ambient_dim"] == 6 and summary["sub_dim"] == 2
    assert summary["quad_residual"] <= 1e-8
    assert (tmp_path / "q.csv").exists() and (tmp_path / "omega.csv").exists()
