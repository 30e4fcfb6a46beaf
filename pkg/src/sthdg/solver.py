"""Static condensation, slab solves, and time marching.

Within a slab the unknowns are the element fields u and the vertical-facet
traces lambda (non-Dirichlet ones).  Bottom-facet traces are data: on the
first slab they are the facet L2 projection of the initial datum (the
bottom facet row is ``Mb lam = int g mu``), afterwards they are the top
traces recovered from the slab below.  Top traces never enter the slab
system; they satisfy the projection row ``Mt lam = int u mu`` and are
recovered after the element solve.  Eliminating u element-by-element gives
the condensed Schur system ``S lam = r`` over the retained vertical facet
dofs, solved with a sparse LU; the element solve keeps
``X = A_uu^{-1} [A_ul | b_u]`` so recovery is a matrix product away.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry
from .assembly import SlabBases, SlabOperator, assemble_slab, make_slab_bases
from .errors import SingularLocalBlockError, SolveFailureError
from .geometry import DIRICHLET, SpaceTimeSlab, SpatialMesh, build_slab
from .problem import ProblemSpec

DEFAULT_TOL = 1e-12


@dataclass
class FacetDofLayout:
    """Dof bookkeeping for the vertical facet space of one slab."""

    m_vert: int
    n_facets: int
    retained_facets: np.ndarray  # bool per facet
    retained_dofs: np.ndarray    # full dof ids kept after Dirichlet removal

    @property
    def full_size(self) -> int:
        return self.m_vert * self.n_facets

    @property
    def reduced_size(self) -> int:
        return self.retained_dofs.size


def facet_dof_layout(op: SlabOperator) -> FacetDofLayout:
    keep = op.slab.vf_kind != DIRICHLET
    mv = op.bases.m_vert
    retained = np.flatnonzero(np.repeat(keep, mv))
    return FacetDofLayout(
        m_vert=mv, n_facets=op.slab.n_vertical_facets,
        retained_facets=keep, retained_dofs=retained,
    )


def _element_dof_ids(op: SlabOperator) -> np.ndarray:
    """Full vertical-facet dof ids per element, shape (E, 2d*mv)."""
    fid, _ = op.element_facets()
    mv = op.bases.m_vert
    return (fid[:, :, None] * mv + np.arange(mv)[None, None, :]).reshape(fid.shape[0], -1)


def _gather_side(owner_arr, neigh_arr, fid, side):
    """Pick each element's own side block of its facet arrays."""
    extend = (...,) + (None,) * (owner_arr.ndim - 1)
    return np.where((side == 0)[extend], owner_arr[fid], neigh_arr[fid])


@dataclass
class CondensedSystem:
    """Schur complement of a slab plus everything needed for recovery."""

    op: SlabOperator
    layout: FacetDofLayout
    S: sp.csr_matrix           # reduced (retained dofs only)
    r: np.ndarray
    Xl: np.ndarray             # (E, n_u, 2d*mv): A_uu^{-1} A_ul
    xb: np.ndarray             # (E, n_u): A_uu^{-1} b_u_eff
    elem_dofs: np.ndarray      # (E, 2d*mv) full dof ids


def condense(op: SlabOperator, lam_bottom: np.ndarray) -> CondensedSystem:
    """Eliminate element unknowns; build the facet Schur system.

    ``lam_bottom`` is the known bottom-trace coefficient array (E, m_horz).
    Dirichlet facet rows/columns are removed at the end; because the facet
    block is diagonal per facet, restriction after condensation equals
    condensation after elimination.
    """
    slab, bases = op.slab, op.bases
    E, d, n = slab.n_elements, slab.d, bases.n_u
    mv = bases.m_vert
    K = 2 * d * mv
    fid, side = op.element_facets()
    Cul = np.concatenate(
        [_gather_side(op.Cul_o, op.Cul_n, fid[:, s], side[:, s]) for s in range(2 * d)],
        axis=2,
    )
    Clu = np.concatenate(
        [_gather_side(op.Clu_o, op.Clu_n, fid[:, s], side[:, s]) for s in range(2 * d)],
        axis=1,
    )
    bu_eff = op.bu - np.einsum("enm,em->en", op.Cul_b, lam_bottom)
    rhs = np.concatenate([Cul, bu_eff[:, :, None]], axis=2)
    try:
        X = np.linalg.solve(op.Auu, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularLocalBlockError(f"element block factorization failed: {exc}") from exc
    D = Clu @ X[:, :, :K]            # (E, K, K)
    rloc = np.einsum("ekn,en->ek", Clu, X[:, :, K])
    elem_dofs = _element_dof_ids(op)

    layout = facet_dof_layout(op)
    full = layout.full_size
    # facet-diagonal part
    Cll = op.Cll_o + op.Cll_n
    Fv = slab.n_vertical_facets
    foff = np.arange(Fv)[:, None] * mv + np.arange(mv)[None, :]
    rows = [np.repeat(foff, mv, axis=1).ravel()]
    cols = [np.tile(foff, (1, mv)).ravel()]
    vals = [Cll.ravel()]
    # element Schur corrections
    rows.append(np.repeat(elem_dofs, K, axis=1).ravel())
    cols.append(np.tile(elem_dofs, (1, K)).ravel())
    vals.append(-D.ravel())
    S_full = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(full, full),
    ).tocsr()
    r_full = op.bl.ravel().copy()
    np.subtract.at(r_full, elem_dofs.ravel(), rloc.ravel())
    keep = layout.retained_dofs
    S = S_full[keep][:, keep].tocsr()
    r = r_full[keep]
    return CondensedSystem(op=op, layout=layout, S=S, r=r, Xl=X[:, :, :K],
                           xb=X[:, :, K], elem_dofs=elem_dofs)


@dataclass
class SlabSolution:
    """Coefficients of one slab: element field and all facet traces."""

    u: np.ndarray           # (E, n_u)
    lam: np.ndarray         # (Fv, m_vert), zeros on Dirichlet facets
    lam_bottom: np.ndarray  # (E, m_horz)
    lam_top: np.ndarray     # (E, m_horz)
    residual: float = 0.0


def solve_slab(op: SlabOperator, lam_bottom: np.ndarray,
               tol: float = DEFAULT_TOL) -> SlabSolution:
    """Condense, solve the facet system, and recover element/top traces."""
    cond = condense(op, lam_bottom)
    layout = cond.layout
    lam_full = np.zeros(layout.full_size)
    residual = 0.0
    if layout.reduced_size:
        Scsc = cond.S.tocsc()
        try:
            lu = spla.splu(Scsc)
        except RuntimeError as exc:
            raise SolveFailureError(np.inf, tol) from exc
        x = lu.solve(cond.r)
        rnorm = np.linalg.norm(cond.r)
        res = np.linalg.norm(cond.S @ x - cond.r)
        if rnorm > 0 and res / rnorm > tol:
            x = x + lu.solve(cond.r - cond.S @ x)  # one refinement step
            res = np.linalg.norm(cond.S @ x - cond.r)
            if res / rnorm > tol:
                raise SolveFailureError(res / rnorm, tol)
        residual = float(res / rnorm) if rnorm > 0 else float(res)
        lam_full[layout.retained_dofs] = x
    u = cond.xb - np.einsum("enk,ek->en", cond.Xl, lam_full[cond.elem_dofs])
    rhs_top = -np.einsum("emn,en->em", op.Clu_t, u)
    lam_top = np.linalg.solve(op.Mt, rhs_top[..., None])[..., 0]
    mv = op.bases.m_vert
    lam = lam_full.reshape(op.slab.n_vertical_facets, mv)
    return SlabSolution(u=u, lam=lam, lam_bottom=np.asarray(lam_bottom, dtype=float),
                        lam_top=lam_top, residual=residual)


@dataclass
class DiscreteSolution:
    """Full space-time solution: one SlabSolution per slab plus geometry."""

    slabs: list
    steps: list
    bases: SlabBases
    alpha: float
    problem: ProblemSpec
    ops: Optional[list] = None

    @property
    def n_slabs(self) -> int:
        return len(self.slabs)

    @property
    def times(self) -> list:
        return [self.slabs[0].t0] + [s.t1 for s in self.slabs]

    def corner_values(self, k: int) -> np.ndarray:
        """u evaluated at the element corners of slab k (for VTK export)."""
        d = self.slabs[k].d
        corners = geometry._corner_signs(d + 1)
        V = self.bases.basis.eval(corners)
        return self.steps[k].u @ V.T


def resolve_alpha(p_s: int, slab: SpaceTimeSlab = None, bases: SlabBases = None,
                  override: Optional[float] = None) -> float:
    """Penalty resolution: explicit override, else 2x the measured trace
    constant squared on the given slab, else the degree default."""
    if override is not None:
        return float(override)
    if slab is not None and bases is not None:
        try:
            from .analysis import estimate_trace_constants

            est = estimate_trace_constants(slab, bases, which=("c_TQ",))
            return float(2.0 * est["c_TQ"] ** 2)
        except Exception:
            pass
    return float(4.0 * (p_s + 1) ** 2)


def march(
    mesh: SpatialMesh,
    deform,
    prob: ProblemSpec,
    n_slabs: int,
    t_start: float,
    t_final: float,
    p_t: int,
    p_s: int,
    alpha: Optional[float] = None,
    q: Optional[int] = None,
    tol: float = DEFAULT_TOL,
    keep_ops: bool = False,
) -> DiscreteSolution:
    """Assemble and solve slab by slab, handing top traces downward in time.

    The system is block lower triangular across slabs, so one sweep is
    exact.  Assembly order and the sparse solve are deterministic; repeated
    runs produce bit-identical coefficient arrays.
    """
    bases = make_slab_bases(p_t, p_s, mesh.dim, q)
    dt = (t_final - t_start) / n_slabs
    slab0 = build_slab(mesh, deform, t_start, dt, index=0)
    alpha = resolve_alpha(p_s, slab0, bases, override=alpha)
    slabs, steps, ops = [], [], []
    lam_bottom = None
    for k in range(n_slabs):
        slab = slab0 if k == 0 else build_slab(mesh, deform, t_start + k * dt, dt, index=k)
        op = assemble_slab(slab, prob, bases, alpha)
        if k == 0:
            lam_bottom = np.linalg.solve(op.Mb, op.gb[..., None])[..., 0]
        step = solve_slab(op, lam_bottom, tol=tol)
        slabs.append(slab)
        steps.append(step)
        if keep_ops:
            ops.append(op)
        lam_bottom = step.lam_top
    return DiscreteSolution(slabs=slabs, steps=steps, bases=bases, alpha=alpha,
                            problem=prob, ops=ops if keep_ops else None)


# ---------------------------------------------------------------------------
# monolithic assembly (oracle for the condensed path, and the bilinear-form
# matrix used by the analysis sampling checks)


@dataclass
class GlobalLayout:
    """Offsets of the monolithic unknown vector.

    Order: element blocks of every slab, then the bottom traces of slab 0,
    then per slab its retained vertical traces followed by its top traces
    (shared with the next slab's bottom).
    """

    n_slabs: int
    E: int
    n_u: int
    m_vert: int
    m_horz: int
    u_off: list
    lb_off: int
    lv_off: list
    lv_keep: list
    lt_off: list
    size: int


def global_layout(ops: list) -> GlobalLayout:
    E = ops[0].slab.n_elements
    n = ops[0].bases.n_u
    mv, mh = ops[0].bases.m_vert, ops[0].bases.m_horz
    off = 0
    u_off = []
    for _ in ops:
        u_off.append(off)
        off += E * n
    lb_off = off
    off += E * mh
    lv_off, lv_keep, lt_off = [], [], []
    for op in ops:
        keep = facet_dof_layout(op).retained_dofs
        lv_off.append(off)
        lv_keep.append(keep)
        off += keep.size
        lt_off.append(off)
        off += E * mh
    return GlobalLayout(n_slabs=len(ops), E=E, n_u=n, m_vert=mv, m_horz=mh,
                        u_off=u_off, lb_off=lb_off, lv_off=lv_off,
                        lv_keep=lv_keep, lt_off=lt_off, size=off)


def assemble_monolithic(ops: list):
    """Sparse matrix and rhs of the full multi-slab hybrid system.

    Keeps every facet unknown (bottom of slab 0, vertical traces, and the
    slab interface/top traces), so the matrix is exactly the bilinear form
    of the method over the compound discrete space with Dirichlet dofs
    removed.  Used as the oracle for the condensed path and by the
    form-sampling checks.
    """
    lay = global_layout(ops)
    E, n, mv, mh = lay.E, lay.n_u, lay.m_vert, lay.m_horz
    rows, cols, vals = [], [], []
    b = np.zeros(lay.size)

    def add_block(r0, c0, block):
        nr, ncol = block.shape[-2], block.shape[-1]
        rows.append(np.repeat(np.asarray(r0)[..., None, :], ncol, axis=-2).reshape(-1)
                    if np.ndim(r0) > 1 else np.repeat(r0, ncol))
        cols.append(np.tile(np.asarray(c0)[..., None, :], (nr, 1)).reshape(-1)
                    if np.ndim(c0) > 1 else np.tile(c0, nr))
        vals.append(np.asarray(block).reshape(-1))

    for k, op in enumerate(ops):
        slab = op.slab
        Fv = slab.n_vertical_facets
        u_ids = lay.u_off[k] + np.arange(E * n).reshape(E, n)
        bot_ids = (lay.lb_off if k == 0 else lay.lt_off[k - 1]) + np.arange(E * mh).reshape(E, mh)
        top_ids = lay.lt_off[k] + np.arange(E * mh).reshape(E, mh)
        keep = lay.lv_keep[k]
        # map full vertical dof -> global id (or -1)
        full2glob = np.full(Fv * mv, -1, dtype=np.int64)
        full2glob[keep] = lay.lv_off[k] + np.arange(keep.size)
        fdofs = full2glob.reshape(Fv, mv)

        for e in range(E):
            add_block(u_ids[e], u_ids[e], op.Auu[e])
            add_block(u_ids[e], bot_ids[e], op.Cul_b[e])
            add_block(top_ids[e], u_ids[e], op.Clu_t[e])
            add_block(top_ids[e], top_ids[e], op.Mt[e])
            if k == 0:
                add_block(bot_ids[e], bot_ids[e], op.Mb[e])
        if k == 0:
            b[bot_ids.reshape(-1)] += op.gb.reshape(-1)
        b[u_ids.reshape(-1)] += op.bu.reshape(-1)

        for f in range(Fv):
            gd = fdofs[f]
            ok = gd >= 0
            if not np.any(ok):
                continue
            own = int(slab.vf_owner[f])
            nbr = int(slab.vf_neigh[f])
            add_block(u_ids[own], gd[ok], op.Cul_o[f][:, ok])
            add_block(gd[ok], u_ids[own], op.Clu_o[f][ok])
            Cll = op.Cll_o[f] + op.Cll_n[f]
            add_block(gd[ok], gd[ok], Cll[np.ix_(ok, ok)])
            b[gd[ok]] += op.bl[f][ok]
            if nbr >= 0:
                add_block(u_ids[nbr], gd[ok], op.Cul_n[f][:, ok])
                add_block(gd[ok], u_ids[nbr], op.Clu_n[f][ok])

    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(lay.size, lay.size),
    ).tocsr()
    return A, b, lay


def unpack_vector(ops: list, lay: GlobalLayout, x: np.ndarray) -> list:
    """Split a monolithic coefficient vector into per-slab SlabSolutions.

    Slab interface traces are shared dofs, so slab k's top and slab k+1's
    bottom come out identical; Dirichlet facet rows are zero-filled.
    """
    E, n, mv, mh = lay.E, lay.n_u, lay.m_vert, lay.m_horz
    out = []
    for k, op in enumerate(ops):
        Fv = op.slab.n_vertical_facets
        u = x[lay.u_off[k] : lay.u_off[k] + E * n].reshape(E, n)
        lb_off = lay.lb_off if k == 0 else lay.lt_off[k - 1]
        lam_bottom = x[lb_off : lb_off + E * mh].reshape(E, mh)
        lam_top = x[lay.lt_off[k] : lay.lt_off[k] + E * mh].reshape(E, mh)
        keep = lay.lv_keep[k]
        lam = np.zeros(Fv * mv)
        lam[keep] = x[lay.lv_off[k] : lay.lv_off[k] + keep.size]
        out.append(SlabSolution(u=u, lam=lam.reshape(Fv, mv),
                                lam_bottom=lam_bottom, lam_top=lam_top))
    return out


def monolithic_solve(ops: list) -> list:
    """Direct solve of the uncondensed system; returns SlabSolutions."""
    A, b, lay = assemble_monolithic(ops)
    x = spla.spsolve(A.tocsc(), b)
    return unpack_vector(ops, lay, x)


# ---------------------------------------------------------------------------
# checkpoints

_CHECKPOINT_FORMAT = "sthdg-checkpoint-1"


def save_solution(sol: DiscreteSolution, outdir) -> None:
    """Write per-slab coefficient arrays plus a JSON sidecar.

    Files: ``slab{k:04d}_{field}.npy`` for field in u/lam/lam_bottom/
    lam_top, with the manifest ``solution.json`` recording degrees, times,
    and array shapes.  Plain .npy files keep the dump byte-stable.
    """
    os.makedirs(outdir, exist_ok=True)
    b = sol.bases
    manifest = {
        "format": _CHECKPOINT_FORMAT,
        "d": b.d,
        "p_t": b.p_t,
        "p_s": b.p_s,
        "alpha": sol.alpha,
        "n_slabs": sol.n_slabs,
        "times": [float(t) for t in sol.times],
        "n_elements": int(sol.slabs[0].n_elements),
        "n_vertical_facets": int(sol.slabs[0].n_vertical_facets),
        "dof_layout": {
            "u": [int(sol.slabs[0].n_elements), b.n_u],
            "lam": [int(sol.slabs[0].n_vertical_facets), b.m_vert],
            "lam_bottom": [int(sol.slabs[0].n_elements), b.m_horz],
            "lam_top": [int(sol.slabs[0].n_elements), b.m_horz],
        },
    }
    with open(os.path.join(outdir, "solution.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for k, step in enumerate(sol.steps):
        for name in ("u", "lam", "lam_bottom", "lam_top"):
            np.save(os.path.join(outdir, f"slab{k:04d}_{name}.npy"), getattr(step, name))


def load_solution(outdir) -> dict:
    """Read a checkpoint back; returns the manifest plus coefficient arrays."""
    with open(os.path.join(outdir, "solution.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"unknown checkpoint format {manifest.get('format')!r}")
    steps = []
    for k in range(manifest["n_slabs"]):
        steps.append({
            name: np.load(os.path.join(outdir, f"slab{k:04d}_{name}.npy"))
            for name in ("u", "lam", "lam_bottom", "lam_top")
        })
    return {"manifest": manifest, "steps": steps}
