"""Structure of the assembled bilinear form.

The operators are checked against quantities they must reproduce exactly:
the advective part against its boundary-energy identity (for a
divergence-free field the volume terms cancel in pairs), the diffusive
part against symmetry and penalty scaling, and the whole form against
the sum of its two parts.
"""
import numpy as np
import pytest

from sthdg import analysis, assembly, geometry
from sthdg.solver import assemble_monolithic, global_layout, unpack_vector

from conftest import assembled_run


def _variants(slabs, bases, prob, alpha):
    """Monolithic matrices of the full, advective, diffusive, and bare forms."""
    mats = {}
    for name, adv, diff in (("full", True, True), ("adv", True, False),
                            ("diff", False, True), ("none", False, False)):
        ops = [assembly.assemble_slab(s, prob, bases, alpha,
                                      advection=adv, diffusion=diff)
               for s in slabs]
        A, _, lay = assemble_monolithic(ops)
        mats[name] = A
    return mats, lay, ops


@pytest.mark.parametrize("p", [1, 2])
def test_form_splits_into_advective_and_diffusive(p):
    slabs, bases, ops, prob = assembled_run(n=3, ns=2, p=p)
    mats, _, _ = _variants(slabs, bases, prob, ops[0].alpha)
    # the coupling mass blocks on the horizontal faces are assembled
    # unconditionally, so they appear in both restricted variants and once
    # more in the bare one
    delta = (mats["full"] - mats["adv"] - mats["diff"] + mats["none"]).tocoo()
    scale = np.abs(mats["full"].data).max()
    resid = np.abs(delta.data).max() if delta.nnz else 0.0
    assert resid <= 1e-12 * scale


@pytest.mark.parametrize("p", [1, 2])
def test_diffusive_part_is_symmetric(p):
    slabs, bases, ops, prob = assembled_run(n=3, ns=2, p=p)
    mats, _, _ = _variants(slabs, bases, prob, ops[0].alpha)
    asym = (mats["diff"] - mats["diff"].T).tocoo()
    scale = np.abs(mats["diff"].data).max()
    resid = np.abs(asym.data).max() if asym.nnz else 0.0
    assert resid <= 1e-12 * scale


@pytest.mark.parametrize("p", [1, 2])
def test_advective_energy_identity(p):
    # for divergence-free transport the advective quadratic form reduces to
    # half the facet jump energy plus half the inflow/outflow boundary mass
    slabs, bases, ops, prob = assembled_run(n=3, ns=2, p=p)
    adv_ops = [assembly.assemble_slab(s, prob, bases, ops[0].alpha,
                                      diffusion=False) for s in slabs]
    A, _, lay = assemble_monolithic(adv_ops)
    rng = np.random.default_rng(17)
    for _ in range(5):
        x = rng.standard_normal(lay.size)
        steps = unpack_vector(adv_ops, lay, x)
        rep = analysis.field_norms(slabs, steps, bases, prob, qextra=0)
        lhs = float(x @ (A @ x))
        rhs = 0.5 * (rep.jump_sq + rep.neumann_sq)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10)


def test_penalty_scales_with_alpha():
    # raising the penalty parameter adds exactly (nu/h) jump mass on the
    # vertical facets, which is the penalty component of the field norms
    slabs, bases, ops, prob = assembled_run(n=3, ns=1, p=1)
    a1, a2 = 5.0, 9.0
    ops1 = [assembly.assemble_slab(s, prob, bases, a1) for s in slabs]
    ops2 = [assembly.assemble_slab(s, prob, bases, a2) for s in slabs]
    A1, _, lay = assemble_monolithic(ops1)
    A2, _, _ = assemble_monolithic(ops2)
    rng = np.random.default_rng(23)
    for _ in range(5):
        x = rng.standard_normal(lay.size)
        steps = unpack_vector(ops1, lay, x)
        rep = analysis.field_norms(slabs, steps, bases, prob, qextra=0)
        grown = float(x @ ((A2 - A1) @ x))
        np.testing.assert_allclose(grown, (a2 - a1) * rep.penalty_sq, rtol=1e-10)


def test_diffusive_part_is_positive_semidefinite():
    # with the penalty calibrated from the measured trace constant the
    # diffusive quadratic form cannot go negative
    slabs, bases, ops, prob = assembled_run(n=3, ns=2, p=2)
    diff_ops = [assembly.assemble_slab(s, prob, bases, ops[0].alpha,
                                       advection=False) for s in slabs]
    A, _, lay = assemble_monolithic(diff_ops)
    rng = np.random.default_rng(31)
    scale = np.abs(A.data).max()
    for _ in range(20):
        x = rng.standard_normal(lay.size)
        assert float(x @ (A @ x)) >= -1e-12 * scale * float(x @ x)


def test_rhs_moments_match_quadrature():
    # constant forcing: the element load vector is the integral of each
    # basis function over the deformed element
    slabs, bases, ops, prob = assembled_run(n=2, ns=1, p=1, problem="poly-exact")
    slab = slabs[0]
    g = geometry.volume_geometry(slab.nodes, bases.vol_rule.points, 2, check=False)
    w = bases.vol_rule.weights[None, :] * g["detJ"]
    fvals = prob.forcing(g["x"])
    expect = np.einsum("eq,qi->ei", w * fvals, bases.V)
    np.testing.assert_allclose(ops[0].bu, expect, rtol=1e-12, atol=1e-15)


def test_element_facets_cover_each_vertical_facet_twice_or_once():
    slabs, bases, ops, _ = assembled_run(n=3, ns=1, p=1)
    fid, side = ops[0].element_facets()
    slab = slabs[0]
    counts = np.zeros(slab.n_vertical_facets, dtype=int)
    for e in range(slab.n_elements):
        for k in range(4):
            f = int(fid[e, k])
            counts[f] += 1
            expect_side = 0 if int(slab.vf_owner[f]) == e else 1
            assert int(side[e, k]) == expect_side
    interior = slab.vf_neigh >= 0
    assert np.all(counts[interior] == 2)
    assert np.all(counts[~interior] == 1)


def test_local_system_matches_global_blocks():
    slabs, bases, ops, _ = assembled_run(n=2, ns=1, p=1)
    op = ops[0]
    ls = assembly.local_system(op, e=1)
    np.testing.assert_array_equal(ls.A_uu, op.Auu[1])
    # facet_map slots: bottom, top, then the four vertical sides
    kinds = [entry[0] for entry in ls.facet_map]
    assert kinds[0] == "bottom" and kinds[1] == "top"
    assert len(kinds) == 2 + 4


def test_dirichlet_facets_draw_no_boundary_data():
    # on an all-Dirichlet mesh the facet load vector stays empty
    slabs, bases, ops, prob = assembled_run(n=2, ns=1, p=1, tag="D",
                                            problem="poly-exact")
    assert np.all(ops[0].bl == 0.0)
