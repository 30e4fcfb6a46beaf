"""Shared builders for small test fixtures."""
import numpy as np

from sthdg import assembly, geometry, harness
from sthdg.solver import resolve_alpha

LO = (-0.5, -0.5)
HI = (0.5, 0.5)


def small_grid(n=3, ny=None, tag="N"):
    return geometry.uniform_grid(n, ny if ny is not None else n, lo=LO, hi=HI, tag=tag)


def assembled_run(n=3, ns=2, p=1, nu=1e-2, tag="N", t_final=0.5, amplitude=0.1,
                  problem="rotating-pulse", alpha=None):
    """Assemble a small deforming-mesh run without solving it.

    Returns (slabs, bases, ops, prob); every test that needs slab operators
    goes through here so the setup stays consistent.
    """
    prob, deform = harness.builtin_problem(problem, nu=nu, amplitude=amplitude)
    mesh = small_grid(n, tag=tag)
    bases = assembly.make_slab_bases(p, p, 2)
    slabs = geometry.build_slabs(mesh, deform, 0.0, t_final, ns)
    if alpha is None:
        alpha = resolve_alpha(p, slabs[0], bases)
    ops = [assembly.assemble_slab(s, prob, bases, alpha) for s in slabs]
    return slabs, bases, ops, prob


def random_solution_vector(lay, rng):
    return rng.standard_normal(lay.size)
