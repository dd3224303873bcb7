import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bistress import catalog as cat
from bistress import jets
from bistress.geometry import (
    ChartedManifold,
    DegenerateMetricError,
    EmptyMeshError,
    GeometryError,
    QuadratureMesh,
    christoffel,
    integrate,
    make_mesh,
    metric_compatibility,
    orthonormal_frame,
    riemann,
    volume,
    volume_form,
)


def conformal_flat(m, c):
    """e^{2 rho} delta with rho = c . x."""

    def metric(x):
        e = jets.exp(2 * sum(ci * xi for ci, xi in zip(c, x)))
        return [[e if i == j else 0.0 for j in range(m)] for i in range(m)]

    return ChartedManifold("conf", m, metric, ((-np.inf, np.inf),) * m, ((-1, 1),) * m)


def test_euclidean_christoffel_vanishes():
    G = christoffel(cat.euclidean(3), [0.2, -0.4, 1.0]).components
    assert np.all(G == 0)


def test_round_sphere_christoffel():
    G = christoffel(cat.sphere(2), [math.pi / 3, 0.5]).components
    assert G[0, 1, 1] == pytest.approx(-math.sqrt(3) / 4, rel=1e-14)
    assert G[1, 0, 1] == pytest.approx(1 / math.sqrt(3), rel=1e-14)


def test_conformal_christoffel_formula():
    c = np.array([0.3, -0.2, 0.5])
    G = christoffel(conformal_flat(3, c), [0.1, 0.4, -0.3]).components
    d = np.eye(3)
    want = np.einsum("i,kj->kij", c, d) + np.einsum("j,ki->kij", c, d) - np.einsum("k,ij->kij", c, d)
    np.testing.assert_allclose(G, want, atol=1e-14)


def test_christoffel_derivatives_shapes():
    tv = christoffel(cat.sphere(2), [1.0, 0.3], with_derivatives=2)
    assert tv.derivatives[0].shape == (2, 2, 2, 2)
    assert tv.derivatives[1].shape == (2, 2, 2, 2, 2)
    # d/dtheta Gamma^theta_phiphi = -cos(2 theta)
    assert tv.derivatives[0][0, 1, 1, 0] == pytest.approx(-math.cos(2.0), rel=1e-13)
    with pytest.raises(ValueError):
        christoffel(cat.sphere(2), [1.0, 0.3], with_derivatives=3)


def test_flat_riemann_vanishes():
    assert np.all(riemann(cat.euclidean(4), np.zeros(4)).components == 0)


@pytest.mark.parametrize("n,a", [(2, 1.0), (3, 0.7), (4, 1.3)])
def test_constant_curvature(n, a):
    M = cat.sphere(n, a)
    p = np.linspace(0.6, 1.9, n)
    R = riemann(M, p).components
    g = M.metric_values(p)[0]
    Rlow = np.einsum("ls,skij->lkij", g, R)
    K = 1 / a**2
    want = K * (np.einsum("li,kj->lkij", g, g) - np.einsum("lj,ki->lkij", g, g))
    np.testing.assert_allclose(Rlow, want, atol=1e-12 * np.abs(want).max())
    E = orthonormal_frame(g)
    X, Y = E[:, 0], E[:, -1]
    sec = np.einsum("lkij,l,k,i,j->", Rlow, X, Y, X, Y)
    assert sec == pytest.approx(K, rel=1e-12)


def test_product_mixed_blocks_vanish():
    M = cat.product(cat.sphere(2, 0.6), cat.sphere(1, 0.8))
    R = riemann(M, [1.0, 0.4, 2.0]).components
    for l in range(3):
        for k in range(3):
            for i in range(3):
                for j in range(3):
                    blocks = {l < 2, k < 2, i < 2, j < 2}
                    if len(blocks) > 1:
                        assert R[l, k, i, j] == 0.0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 2.8), st.floats(0.3, 2.8), st.floats(0.0, 6.2))
def test_curvature_symmetries(t1, t2, t3):
    M = cat.sphere(3, 0.9)
    p = [t1, t2, t3]
    G = christoffel(M, p).components
    np.testing.assert_array_equal(G, np.swapaxes(G, 1, 2))
    R = riemann(M, p).components
    np.testing.assert_array_equal(R, -np.swapaxes(R, 2, 3))
    bianchi = R + np.transpose(R, (0, 2, 3, 1)) + np.transpose(R, (0, 3, 1, 2))
    assert np.abs(bianchi).max() < 1e-10


@pytest.mark.parametrize(
    "M",
    [cat.sphere(2, 0.8), cat.sphere(4, 1.0), cat.stereographic_sphere(3), conformal_flat(2, [0.4, 1.0])],
    ids=["S2", "S4", "stereo", "conformal"],
)
def test_metric_compatibility(M):
    pts = cat.sample_points(M, 100, seed=3)
    assert np.abs(metric_compatibility(M, pts)).max() < 1e-10


def test_volume_forms():
    assert volume_form(cat.euclidean(3), [0.1, 0.2, 0.3]) == pytest.approx(1.0)
    assert volume_form(cat.sphere(2), [0.7, 1.0]) == pytest.approx(math.sin(0.7), rel=1e-14)
    c = np.array([0.2, 0.5, -0.1])
    x = np.array([0.3, -0.4, 0.9])
    assert volume_form(conformal_flat(3, c), x) == pytest.approx(math.exp(3 * c @ x), rel=1e-13)


def test_degenerate_metric_rejected():
    M = ChartedManifold("bad", 2, lambda x: [[1.0, 0.0], [0.0, -1.0]], ((-1, 1), (-1, 1)))
    with pytest.raises(DegenerateMetricError):
        christoffel(M, [0.0, 0.0])
    with pytest.raises(DegenerateMetricError):
        volume_form(M, [0.0, 0.0])


def test_sphere_area():
    M = cat.sphere(2)
    assert volume(M, make_mesh(M)) == pytest.approx(4 * math.pi, rel=1e-6)


def test_clifford_torus_area():
    M = cat.product(cat.sphere(1, 1 / math.sqrt(2)), cat.sphere(1, 1 / math.sqrt(2)))
    # product of circumferences: (2 pi / sqrt 2)^2
    assert volume(M, make_mesh(M)) == pytest.approx(2 * math.pi**2, rel=1e-6)


def test_odd_integrand_vanishes():
    M = cat.sphere(2)
    assert abs(integrate(lambda x: np.cos(x[:, 0]), make_mesh(M), M)) < 1e-9


def test_empty_mesh():
    M = cat.sphere(2)
    with pytest.raises(EmptyMeshError):
        integrate(lambda x: x[:, 0], QuadratureMesh(np.zeros((0, 2)), np.zeros(0), "S2"), M)


def test_quadrature_converges():
    M = cat.sphere(3, 0.9)
    exact = 2 * math.pi**2 * 0.9**3
    errs = [abs(volume(M, make_mesh(M, n)) - exact) for n in (2, 4)]
    assert errs[1] * 4 <= errs[0]


def test_mesh_requires_compact():
    with pytest.raises(GeometryError):
        make_mesh(cat.euclidean(2))


def test_integration_is_deterministic():
    M = cat.sphere(2, 0.7)
    mesh = make_mesh(M, 20)
    f = lambda x: np.sin(x[:, 0]) * np.cos(x[:, 1]) ** 2
    assert integrate(f, mesh, M) == integrate(f, mesh, M, chunk=37)
