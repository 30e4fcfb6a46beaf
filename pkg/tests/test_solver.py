"""Static condensation, slab marching, and checkpointing."""
import json

import numpy as np
import pytest

from sthdg import analysis, assembly, geometry, harness
from sthdg.errors import SolveFailureError
from sthdg.problem import ProblemSpec
from sthdg.solver import (
    condense,
    facet_dof_layout,
    load_solution,
    march,
    monolithic_solve,
    resolve_alpha,
    save_solution,
)

from conftest import LO, HI, assembled_run, small_grid


def _march_pulse(n=2, ns=2, p=1, nu=1e-2, t_final=0.5, **kw):
    prob, deform = harness.builtin_problem("rotating-pulse", nu=nu)
    mesh = small_grid(n)
    return march(mesh, deform, prob, n_slabs=ns, t_start=0.0, t_final=t_final,
                 p_t=p, p_s=p, **kw)


def test_facet_dof_count_formula():
    # an N x N grid has 2 N (N + 1) vertical facets, each carrying
    # (p_t + 1)(p_s + 1) trace modes
    for n, p in ((2, 1), (3, 2), (4, 3)):
        slabs, bases, ops, _ = assembled_run(n=n, ns=1, p=p)
        lay = facet_dof_layout(ops[0])
        assert lay.full_size == 2 * n * (n + 1) * (p + 1) * (p + 1)
        assert lay.reduced_size == lay.full_size  # all-flux boundary keeps all


def test_dirichlet_facets_are_removed():
    n, p = 3, 1
    slabs, bases, ops, _ = assembled_run(n=n, ns=1, p=p, tag="D",
                                         problem="poly-exact")
    lay = facet_dof_layout(ops[0])
    boundary = 4 * n
    assert lay.full_size - lay.reduced_size == boundary * (p + 1) * (p + 1)
    sol = monolithic_solve(ops)
    dirichlet = slabs[0].vf_kind == geometry.DIRICHLET
    assert np.all(sol[0].lam[dirichlet] == 0.0)


@pytest.mark.parametrize("p", [1, 2])
def test_condensed_matches_monolithic(p):
    # slab-by-slab condensation must reproduce the one-shot coupled solve
    sol = _march_pulse(n=2, ns=2, p=p, keep_ops=True)
    mono = monolithic_solve(sol.ops)
    for st, ms in zip(sol.steps, mono):
        for name in ("u", "lam", "lam_bottom", "lam_top"):
            a, b = getattr(st, name), getattr(ms, name)
            scale = max(np.abs(b).max(), 1.0)
            assert np.abs(a - b).max() <= 1e-10 * scale


def test_marching_is_causal():
    # shortening the time horizon cannot change the earlier slabs
    full = _march_pulse(n=2, ns=4, p=1, t_final=1.0)
    half = _march_pulse(n=2, ns=2, p=1, t_final=0.5)
    for k in range(2):
        np.testing.assert_array_equal(full.steps[k].u, half.steps[k].u)
        np.testing.assert_array_equal(full.steps[k].lam, half.steps[k].lam)
        np.testing.assert_array_equal(full.steps[k].lam_top, half.steps[k].lam_top)


def test_marching_is_deterministic():
    a = _march_pulse(n=3, ns=2, p=2)
    b = _march_pulse(n=3, ns=2, p=2)
    assert a.alpha == b.alpha
    for sa, sb in zip(a.steps, b.steps):
        np.testing.assert_array_equal(sa.u, sb.u)
        np.testing.assert_array_equal(sa.lam, sb.lam)
        np.testing.assert_array_equal(sa.lam_bottom, sb.lam_bottom)
        np.testing.assert_array_equal(sa.lam_top, sb.lam_top)


def test_alpha_override_and_measured_default():
    sol = _march_pulse(n=2, ns=1, p=1, alpha=7.5)
    assert sol.alpha == 7.5
    sol = _march_pulse(n=2, ns=1, p=1)
    bases = assembly.make_slab_bases(1, 1, 2)
    est = analysis.estimate_trace_constants(sol.slabs[0], bases, which=("c_TQ",))
    np.testing.assert_allclose(sol.alpha, 2.0 * est["c_TQ"] ** 2, rtol=1e-12)


def test_residual_tolerance_enforced():
    with pytest.raises(SolveFailureError):
        _march_pulse(n=2, ns=1, p=1, tol=1e-300)


def test_residuals_are_reported():
    sol = _march_pulse(n=2, ns=2, p=1)
    for st in sol.steps:
        assert 0.0 <= st.residual < 1e-12


def test_zero_data_gives_zero_solution():
    def zero_bc(tx, n):
        tx = np.asarray(tx, dtype=float)
        return np.zeros(tx.shape[:-1])

    def beta(tx):
        tx = np.asarray(tx, dtype=float)
        return np.stack([np.full(tx.shape[:-1], 0.4),
                         np.full(tx.shape[:-1], -0.3)], axis=-1)

    prob = ProblemSpec(nu=1e-2, beta=beta, d=2, bc_data=zero_bc)
    mesh = geometry.uniform_grid(3, 3, lo=LO, hi=HI, tag="D")
    sol = march(mesh, None, prob, n_slabs=2, t_start=0.0, t_final=0.5,
                p_t=1, p_s=1)
    for st in sol.steps:
        assert np.abs(st.u).max() <= 1e-13
        assert np.abs(st.lam).max() <= 1e-13


def test_condensed_system_shape():
    slabs, bases, ops, _ = assembled_run(n=3, ns=1, p=1, tag="D")
    lay = facet_dof_layout(ops[0])
    E = slabs[0].n_elements
    lb = np.zeros((E, bases.m_horz))
    cond = condense(ops[0], lb)
    assert cond.S.shape == (lay.reduced_size, lay.reduced_size)


def test_checkpoint_roundtrip(tmp_path):
    sol = _march_pulse(n=2, ns=3, p=2)
    out = tmp_path / "ckpt"
    save_solution(sol, out)
    back = load_solution(out)
    man = back["manifest"]
    assert man["n_slabs"] == 3
    assert man["p_t"] == man["p_s"] == 2
    assert man["times"] == [float(t) for t in sol.times]
    assert man["dof_layout"]["u"] == [4, sol.bases.n_u]
    for k, st in enumerate(sol.steps):
        for name in ("u", "lam", "lam_bottom", "lam_top"):
            np.testing.assert_array_equal(back["steps"][k][name], getattr(st, name))


def test_checkpoint_rejects_unknown_format(tmp_path):
    sol = _march_pulse(n=2, ns=1, p=1)
    out = tmp_path / "ckpt"
    save_solution(sol, out)
    manifest = json.loads((out / "solution.json").read_text())
    manifest["format"] = "something-else"
    (out / "solution.json").write_text(json.dumps(manifest))
    with pytest.raises(ValueError):
        load_solution(out)


def test_corner_values_shape_and_continuity():
    sol = _march_pulse(n=2, ns=2, p=1)
    vals = sol.corner_values(0)
    assert vals.shape == (4, 8)
    # a free-stream run stays one at every corner
    prob, deform = harness.builtin_problem("free-stream")
    mesh = small_grid(2)
    fs = march(mesh, deform, prob, n_slabs=2, t_start=0.0, t_final=0.5,
               p_t=1, p_s=1)
    for k in range(2):
        np.testing.assert_allclose(fs.corner_values(k), 1.0, atol=1e-12)
