"""Meshes, slab extrusion, face geometry, and file I/O."""
import numpy as np
import pytest

from sthdg import geometry, harness
from sthdg.errors import MeshFormatError, NonPositiveJacobianError
from sthdg.geometry import build_slab, build_slabs, uniform_grid
from sthdg.spaces import tensor_rule

from conftest import LO, HI, small_grid


def test_uniform_grid_counts():
    mesh = uniform_grid(4, 3, lo=LO, hi=HI, tag="N")
    assert mesh.n_cells == 12
    assert mesh.n_vertices == 20
    assert len(mesh.btags) == 2 * (4 + 3)
    assert all(t == "N" for t in mesh.btags)
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    np.testing.assert_allclose(lo, LO)
    np.testing.assert_allclose(hi, HI)


def test_uniform_grid_dirichlet_tag():
    mesh = uniform_grid(2, 2, lo=LO, hi=HI, tag="D")
    assert all(t == "D" for t in mesh.btags)


def test_static_slab_jacobian_and_volume():
    mesh = uniform_grid(2, 2, lo=LO, hi=HI, tag="N")
    slab = build_slab(mesh, None, 0.0, 0.25, index=0)
    rule = tensor_rule(3, 3)
    g = geometry.volume_geometry(slab.nodes, rule.points, 2)
    # reference cell [-1,1]^3 onto dt x hx x hy brick
    expect = (0.25 / 2) * (0.5 / 2) * (0.5 / 2)
    np.testing.assert_allclose(g["detJ"], expect, rtol=1e-13)
    vol = float(np.sum(rule.weights[None, :] * g["detJ"]))
    np.testing.assert_allclose(vol, 0.25 * 1.0, rtol=1e-13)


def test_deformed_slab_volume_is_quadrature_exact():
    # detJ of a trilinear element map is at most quadratic per variable,
    # so a 2-point Gauss rule already integrates the slab volume exactly
    # and refining the rule must not change the total
    mesh = uniform_grid(6, 6, lo=LO, hi=HI, tag="N")
    slab = build_slab(mesh, harness.pulse_deformation(0.1), 0.3, 0.125, index=0)

    def volume(order):
        rule = tensor_rule(order, 3)
        g = geometry.volume_geometry(slab.nodes, rule.points, 2)
        return float(np.sum(rule.weights[None, :] * g["detJ"]))

    v2, v4 = volume(2), volume(4)
    assert 0.0 < v2 < 0.25
    np.testing.assert_allclose(v2, v4, rtol=1e-13)


def test_horizontal_face_normals_are_temporal():
    # bottom and top sit at constant time even when the mesh deforms
    mesh = small_grid(3)
    slab = build_slab(mesh, harness.pulse_deformation(0.1), 0.1, 0.2, index=0)
    pts = tensor_rule(3, 2).points
    for face, sign in ((0, -1.0), (1, 1.0)):
        gf = geometry.face_geometry(slab.nodes, face, pts, 2)
        np.testing.assert_allclose(gf["normal"][..., 0], sign, atol=1e-14)
        np.testing.assert_allclose(gf["normal"][..., 1:], 0.0, atol=1e-14)
        np.testing.assert_allclose(gf["x"][..., 0], 0.1 if face == 0 else 0.3,
                                   atol=1e-14)


def test_face_normals_unit_length():
    mesh = small_grid(3)
    slab = build_slab(mesh, harness.pulse_deformation(0.12), 0.0, 0.25, index=0)
    pts = tensor_rule(3, 2).points
    for face in range(6):
        gf = geometry.face_geometry(slab.nodes, face, pts, 2)
        np.testing.assert_allclose(np.linalg.norm(gf["normal"], axis=-1), 1.0,
                                   rtol=1e-13)


def test_outward_normals_close_up():
    # divergence theorem for a constant field: the measure-weighted normals
    # of each element sum to zero over its six faces
    mesh = small_grid(3)
    slab = build_slab(mesh, harness.pulse_deformation(0.1), 0.2, 0.3, index=0)
    rule = tensor_rule(4, 2)
    total = np.zeros((slab.n_elements, 3))
    for face in range(6):
        gf = geometry.face_geometry(slab.nodes, face, rule.points, 2)
        w = rule.weights[None, :] * gf["measure"]
        total += np.sum(w[..., None] * gf["normal"], axis=1)
    np.testing.assert_allclose(total, 0.0, atol=1e-13)


def test_vertical_facets_match_between_sides():
    # owner and neighbor parametrizations of an interior facet must land on
    # the same physical points once the orientation flip is applied
    mesh = small_grid(3)
    slab = build_slab(mesh, harness.pulse_deformation(0.1), 0.0, 0.25, index=0)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1.0, 1.0, size=(7, 2))
    interior = np.flatnonzero(slab.vf_neigh >= 0)
    assert interior.size > 0
    for f in interior:
        o, of = int(slab.vf_owner[f]), int(slab.vf_oface[f])
        nbr, nf = int(slab.vf_neigh[f]), int(slab.vf_nface[f])
        x_o = geometry.face_geometry(slab.nodes[o : o + 1], of, pts, 2)["x"][0]
        pts_n = pts.copy()
        if slab.vf_flip[f]:
            pts_n[:, 1:] = -pts_n[:, 1:]
        x_n = geometry.face_geometry(slab.nodes[nbr : nbr + 1], nf, pts_n, 2)["x"][0]
        np.testing.assert_allclose(x_o, x_n, atol=1e-13)


def test_opposing_normals_on_interior_facets():
    mesh = small_grid(2)
    slab = build_slab(mesh, harness.pulse_deformation(0.1), 0.0, 0.25, index=0)
    pts = tensor_rule(3, 2).points
    for f in np.flatnonzero(slab.vf_neigh >= 0):
        o, of = int(slab.vf_owner[f]), int(slab.vf_oface[f])
        nbr, nf = int(slab.vf_neigh[f]), int(slab.vf_nface[f])
        go = geometry.face_geometry(slab.nodes[o : o + 1], of, pts, 2)
        pts_n = pts.copy()
        if slab.vf_flip[f]:
            pts_n[:, 1:] = -pts_n[:, 1:]
        gn = geometry.face_geometry(slab.nodes[nbr : nbr + 1], nf, pts_n, 2)
        np.testing.assert_allclose(go["normal"], -gn["normal"], atol=1e-12)


def test_vertical_facet_count_formula():
    for n in (2, 3, 5):
        mesh = uniform_grid(n, n, lo=LO, hi=HI, tag="N")
        slab = build_slab(mesh, None, 0.0, 0.1, index=0)
        assert slab.n_vertical_facets == 2 * n * (n + 1)


def test_slab_interfaces_share_nodes():
    mesh = small_grid(3)
    slabs = build_slabs(mesh, harness.pulse_deformation(0.1), 0.0, 1.0, 4)
    assert [s.index for s in slabs] == [0, 1, 2, 3]
    for a, b in zip(slabs[:-1], slabs[1:]):
        assert a.t1 == b.t0
        # top corner layer of one slab is the bottom layer of the next
        top = a.nodes[:, a.nodes.shape[1] // 2 :, :]
        bot = b.nodes[:, : b.nodes.shape[1] // 2, :]
        np.testing.assert_array_equal(top[..., 1:], bot[..., 1:])


def test_size_metric_on_unit_element():
    mesh = uniform_grid(1, 1, lo=LO, hi=HI, tag="N")
    slab = build_slab(mesh, None, 0.0, 1.0, index=0)
    np.testing.assert_allclose(slab.h[0], np.sqrt(2.0) / 2.0, rtol=1e-13)
    assert 0.0 < slab.rho[0] <= slab.h[0]


def test_orientation_reversing_map_rejected():
    mesh = small_grid(2)

    def mirror(t, x0):
        out = np.array(x0, dtype=float, copy=True)
        out[..., 0] = -out[..., 0]
        return out

    with pytest.raises(NonPositiveJacobianError):
        build_slab(mesh, mirror, 0.0, 0.25, index=0)


def test_nonpositive_jacobian_reports_element():
    mesh = small_grid(2)

    def pinch(t, x0):
        # collapse everything onto a line as t grows
        out = np.array(x0, dtype=float, copy=True)
        out[..., 0] *= 1.0 - 2.5 * t
        return out

    with pytest.raises(NonPositiveJacobianError) as err:
        build_slab(mesh, pinch, 0.0, 1.0, index=0)
    assert err.value.element >= 0


def test_degenerate_slab_height_rejected():
    with pytest.raises(MeshFormatError):
        build_slab(small_grid(2), None, 0.0, 0.0, index=0)


def test_mesh_roundtrip(tmp_path):
    mesh = uniform_grid(3, 2, lo=LO, hi=HI, tag="D")
    path = tmp_path / "grid.mesh"
    geometry.write_mesh(mesh, path)
    back = geometry.read_mesh(path)
    assert back.dim == mesh.dim
    np.testing.assert_allclose(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.cells, mesh.cells)
    assert back.boundary_tag_map() == mesh.boundary_tag_map()


def test_read_mesh_rejects_bad_files(tmp_path):
    empty = tmp_path / "empty.mesh"
    empty.write_text("# nothing here\n")
    with pytest.raises(MeshFormatError):
        geometry.read_mesh(empty)

    bad_header = tmp_path / "header.mesh"
    bad_header.write_text("2 4 1\n")
    with pytest.raises(MeshFormatError):
        geometry.read_mesh(bad_header)

    truncated = tmp_path / "short.mesh"
    truncated.write_text("2 2 1 0\n0.0 0.0\n")
    with pytest.raises(MeshFormatError):
        geometry.read_mesh(truncated)


def test_write_vtk_layout(tmp_path):
    mesh = small_grid(2)
    slab = build_slab(mesh, harness.pulse_deformation(0.1), 0.0, 0.25, index=0)
    path = tmp_path / "slab.vtk"
    vals = np.ones((slab.n_elements, 8))
    geometry.write_vtk(path, slab, point_data={"u": vals})
    text = path.read_text()
    assert "DATASET UNSTRUCTURED_GRID" in text
    assert f"POINTS {slab.n_elements * 8} double" in text
    assert "POINT_DATA" in text and "SCALARS u double" in text
