"""Quadrature, Legendre bases, and L2 projections."""
import numpy as np
import numpy.polynomial.legendre as npleg
import pytest

from sthdg import geometry, harness, spaces
from sthdg.errors import UnsupportedDegreeError
from sthdg.spaces import (
    BasisSet,
    gauss_rule,
    legendre_table,
    make_basis,
    make_horizontal_facet_basis,
    make_vertical_facet_basis,
    project_elements,
    project_facet,
    tensor_rule,
    time_derivative_matrix,
)

from conftest import small_grid


def test_gauss_rule_degree_of_exactness():
    for q in (1, 2, 4, 7):
        x, w = gauss_rule(q)
        # exact for all monomials up to degree 2q - 1
        for k in range(2 * q):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            np.testing.assert_allclose(np.sum(w * x**k), exact, atol=1e-13)


def test_tensor_rule_separable_integral():
    rule = tensor_rule(3, 3)
    f = (rule.points[:, 0] ** 2) * (rule.points[:, 1] ** 4) * np.ones_like(rule.points[:, 2])
    val = float(np.sum(rule.weights * f))
    np.testing.assert_allclose(val, (2.0 / 3.0) * (2.0 / 5.0) * 2.0, rtol=1e-13)


def test_legendre_orthogonality_and_derivatives():
    x, w = gauss_rule(8)
    V, D = legendre_table(x, 5)
    gram = (V * w[:, None]).T @ V
    np.testing.assert_allclose(gram, np.diag(2.0 / (2 * np.arange(6) + 1)), atol=1e-13)
    for k in range(6):
        c = np.zeros(k + 1)
        c[k] = 1.0
        np.testing.assert_allclose(D[:, k], npleg.legval(x, npleg.legder(c)),
                                   atol=1e-12)


def test_basis_mode_counts():
    for p_t, p_s in ((1, 1), (2, 1), (1, 3), (3, 3)):
        basis = make_basis(p_t, p_s, 2)
        assert basis.n_modes == (p_t + 1) * (p_s + 1) ** 2
        vert = make_vertical_facet_basis(p_t, p_s, 2)
        assert vert.n_modes == (p_t + 1) * (p_s + 1)
        horz = make_horizontal_facet_basis(p_s, 2)
        assert horz.n_modes == (p_s + 1) ** 2


def test_basis_gradient_matches_finite_differences():
    basis = make_basis(2, 2, 2)
    rng = np.random.default_rng(11)
    pts = rng.uniform(-0.9, 0.9, size=(20, 3))
    V, dV = basis.eval_with_grad(pts)
    eps = 1e-6
    for k in range(3):
        dp = np.zeros(3)
        dp[k] = eps
        fd = (basis.eval(pts + dp) - basis.eval(pts - dp)) / (2 * eps)
        np.testing.assert_allclose(dV[:, :, k], fd, atol=1e-8)


def test_time_derivative_matrix_is_exact():
    basis = make_basis(3, 2, 2)
    D = time_derivative_matrix(basis)
    rng = np.random.default_rng(5)
    c = rng.standard_normal(basis.n_modes)
    pts = rng.uniform(-1.0, 1.0, size=(15, 3))
    V, dV = basis.eval_with_grad(pts)
    np.testing.assert_allclose(V @ (D @ c), dV[:, :, 0] @ c, atol=1e-12)


def test_degree_bounds_enforced():
    with pytest.raises(UnsupportedDegreeError):
        make_basis(spaces.MAX_DEGREE + 1, 1, 2)
    with pytest.raises(UnsupportedDegreeError):
        make_basis(1, -1, 2)


def test_projection_reproduces_polynomials():
    # on an undeformed (affine) mesh a polynomial of matching degree
    # projects onto itself
    mesh = small_grid(3)
    slab = geometry.build_slab(mesh, None, 0.0, 0.5, index=0)
    basis = make_basis(2, 2, 2)

    def f(tx):
        t, x1, x2 = tx[..., 0], tx[..., 1], tx[..., 2]
        return (t**2 - 0.4 * t) * (x1**2 + 1.0) * (0.7 - x2)

    proj = project_elements(f, slab, basis)
    rule = tensor_rule(5, 3)
    g = geometry.volume_geometry(slab.nodes, rule.points, 2, check=False)
    vals = proj @ basis.eval(rule.points).T
    np.testing.assert_allclose(vals, f(g["x"]), atol=1e-12)


def test_projection_residual_is_orthogonal():
    # Galerkin orthogonality of the projection residual against the basis,
    # measured on a deformed mesh and a non-polynomial integrand
    mesh = small_grid(2)
    slab = geometry.build_slab(mesh, harness.pulse_deformation(0.1), 0.0, 0.5,
                               index=0)
    basis = make_basis(1, 1, 2)

    def f(tx):
        return np.sin(3.0 * tx[..., 0]) * np.exp(tx[..., 1] - tx[..., 2])

    quad = tensor_rule(6, 3)
    proj = project_elements(f, slab, basis, quad=quad)
    g = geometry.volume_geometry(slab.nodes, quad.points, 2, check=False)
    V = basis.eval(quad.points)
    w = quad.weights[None, :] * g["detJ"]
    resid = proj @ V.T - f(g["x"])
    moments = np.einsum("eq,qi->ei", w * resid, V)
    scale = np.abs(w * resid).sum()
    assert np.abs(moments).max() <= 1e-12 * max(scale, 1.0)


def test_facet_projection_reproduces_traces():
    mesh = small_grid(2)
    slab = geometry.build_slab(mesh, None, 0.0, 0.5, index=0)
    vert = make_vertical_facet_basis(1, 1, 2)

    def f(tx):
        return 0.3 + 0.8 * tx[..., 0] - 0.5 * tx[..., 2] + 0.1 * tx[..., 1]

    coeff = project_facet(f, slab, "vertical", 0, vert)
    e = int(slab.vf_owner[0])
    face = int(slab.vf_oface[0])
    rule = tensor_rule(4, 2)
    gf = geometry.face_geometry(slab.nodes[e : e + 1], face, rule.points, 2)
    vals = vert.eval(rule.points) @ coeff
    np.testing.assert_allclose(vals, f(gf["x"][0]), atol=1e-12)


def test_default_order_covers_degree():
    for p_t, p_s in ((1, 1), (2, 3), (4, 2)):
        assert spaces.default_order(p_t, p_s) >= max(p_t, p_s) + 1
