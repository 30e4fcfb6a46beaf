"""Element and facet assembly of the hybridized space-time bilinear forms.

Per slab the method produces, for every element K, blocks acting on the
element unknowns u and on the facet unknowns lambda of its faces:

* advective volume term  -int_K u (beta . grad v)
* advective facet terms built from the upwind split
  ``c+ = (beta.n + |beta.n|)/2`` and ``c- = (beta.n - |beta.n|)/2``
  so that each element side contributes ``c+ u v + c- lambda v`` to its own
  test functions and ``-(c+ u + c- lambda) mu`` to the facet test functions;
  boundary Neumann facets additionally carry ``c+ lambda mu``
* diffusive volume term ``nu grad u . grad v``, interior-penalty coupling
  ``(nu alpha / h_K)(u - lambda)(v - mu)`` and the consistency terms
  ``-nu (u - lambda) grad v . n - nu grad u . n (v - mu)`` on vertical
  facets only
* right-hand side ``int_K f v`` plus ``int g mu`` on Neumann-type facets.

Because the time component of the outward normal is exactly -+1 on
bottom/top faces and the spatial component vanishes there, the generic
upwind split specializes on its own: the bottom face couples element test
functions to the facet data (``-lambda (v - mu)``) and the top face adds
``u v`` to the element block plus the trace-projection row ``-u mu``.
Nothing in this module branches on an inflow indicator; the c+/c- algebra
carries it pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from . import geometry, spaces
from .errors import NonPositiveJacobianError
from .geometry import DIRICHLET, NEUMANN, SpaceTimeSlab
from .problem import ProblemSpec

_CHUNK = 512


@dataclass(frozen=True)
class SlabBases:
    """Basis/quadrature bundle with all reference tables precomputed."""

    d: int
    p_t: int
    p_s: int
    q: int
    basis: spaces.BasisSet
    fvert: spaces.FacetBasisSet
    fhorz: spaces.FacetBasisSet
    vol_rule: spaces.QuadratureRule
    face_rule: spaces.QuadratureRule
    V: np.ndarray                # (nqv, n)
    dV: np.ndarray               # (nqv, n, d+1)
    Vface: tuple                 # per local face: (nqf, n)
    dVface: tuple                # per local face: (nqf, n, d+1)
    Vface_flip: tuple            # vertical faces evaluated at s -> -s
    dVface_flip: tuple
    Lvert: np.ndarray            # (nqf, m_v)
    Lhorz: np.ndarray            # (nqf, m_h)

    @property
    def n_u(self) -> int:
        return self.basis.n_modes

    @property
    def m_vert(self) -> int:
        return self.fvert.n_modes

    @property
    def m_horz(self) -> int:
        return self.fhorz.n_modes


@lru_cache(maxsize=32)
def make_slab_bases(p_t: int, p_s: int, d: int, q: Optional[int] = None) -> SlabBases:
    basis = spaces.make_basis(p_t, p_s, d)
    fvert = spaces.make_vertical_facet_basis(p_t, p_s, d)
    fhorz = spaces.make_horizontal_facet_basis(p_s, d)
    q = q or spaces.default_order(p_t, p_s)
    vol_rule = spaces.tensor_rule(q, d + 1)
    face_rule = spaces.tensor_rule(q, d)
    V, dV = basis.eval_with_grad(vol_rule.points)
    Vface, dVface, Vface_f, dVface_f = [], [], [], []
    for f in range(2 * (d + 1)):
        P = geometry.embed_face(f, face_rule.points, d)
        vv, gg = basis.eval_with_grad(P)
        Vface.append(vv)
        dVface.append(gg)
        if f >= 2 and d >= 2:
            pts = face_rule.points.copy()
            pts[:, 1:] = -pts[:, 1:]
            Pf = geometry.embed_face(f, pts, d)
            vv, gg = basis.eval_with_grad(Pf)
        Vface_f.append(vv)
        dVface_f.append(gg)
    return SlabBases(
        d=d, p_t=p_t, p_s=p_s, q=q, basis=basis, fvert=fvert, fhorz=fhorz,
        vol_rule=vol_rule, face_rule=face_rule, V=V, dV=dV,
        Vface=tuple(Vface), dVface=tuple(dVface),
        Vface_flip=tuple(Vface_f), dVface_flip=tuple(dVface_f),
        Lvert=fvert.eval(face_rule.points), Lhorz=fhorz.eval(face_rule.points),
    )


@dataclass
class SlabOperator:
    """Assembled blocks of one slab, per element and per facet side.

    Vertical facet arrays are aligned with ``slab.vf_*``; the ``_o`` blocks
    are the owner-side contributions, ``_n`` the neighbor side (zero rows
    for boundary facets).  The bottom/top blocks are per element: ``Cul_b``
    couples known bottom data into the element equations, ``Mb`` is the
    bottom facet mass (the full row of a bottom facet unknown), ``Clu_t``
    and ``Mt`` form the top trace-projection row ``Clu_t u + Mt lam = 0``.
    """

    slab: SpaceTimeSlab
    bases: SlabBases
    alpha: float
    Auu: np.ndarray
    bu: np.ndarray
    Cul_o: np.ndarray
    Clu_o: np.ndarray
    Cll_o: np.ndarray
    Cul_n: np.ndarray
    Clu_n: np.ndarray
    Cll_n: np.ndarray
    bl: np.ndarray
    Cul_b: np.ndarray
    Mb: np.ndarray
    gb: np.ndarray
    Clu_t: np.ndarray
    Mt: np.ndarray
    _ef: Optional[tuple] = field(default=None, repr=False)

    @property
    def n_u(self) -> int:
        return self.bases.n_u

    def element_facets(self):
        """Per element: vertical facet id and side for each local face slot.

        Returns (ef_fid, ef_side), both (E, 2d); slot ``f - 2`` holds the
        facet adjacent through local face f.
        """
        if self._ef is None:
            slab = self.slab
            E, d = slab.n_elements, slab.d
            fid = np.full((E, 2 * d), -1, dtype=np.int64)
            side = np.zeros((E, 2 * d), dtype=np.int64)
            own, of = slab.vf_owner, slab.vf_oface - 2
            fid[own, of] = np.arange(slab.n_vertical_facets)
            interior = slab.vf_neigh >= 0
            nb, nf = slab.vf_neigh[interior], slab.vf_nface[interior] - 2
            fid[nb, nf] = np.flatnonzero(interior)
            side[nb, nf] = 1
            if np.any(fid < 0):
                raise AssertionError("element face without a facet record")
            self._ef = (fid, side)
        return self._ef

    def gather_Cul(self, e: int) -> np.ndarray:
        """Element-to-facet coupling of element e over its vertical faces."""
        fid, side = self.element_facets()
        blocks = [
            (self.Cul_o if side[e, s] == 0 else self.Cul_n)[fid[e, s]]
            for s in range(2 * self.slab.d)
        ]
        return np.concatenate(blocks, axis=1)

    def gather_Clu(self, e: int) -> np.ndarray:
        fid, side = self.element_facets()
        blocks = [
            (self.Clu_o if side[e, s] == 0 else self.Clu_n)[fid[e, s]]
            for s in range(2 * self.slab.d)
        ]
        return np.concatenate(blocks, axis=0)


def _check_positive(detJ: np.ndarray, pts: np.ndarray, offset: int):
    if np.any(detJ <= 0):
        e, qix = np.argwhere(detJ <= 0)[0]
        raise NonPositiveJacobianError(offset + e, pts[qix], detJ[e, qix])


def _face_nn(w: np.ndarray, Va: np.ndarray, Vb: np.ndarray) -> np.ndarray:
    """einsum('eq,qi,qj->eij', w, Va, Vb) as a BLAS product."""
    return np.matmul(Va.T, w[:, :, None] * Vb)


def _face_gn(w: np.ndarray, ga: np.ndarray, Vb: np.ndarray) -> np.ndarray:
    """einsum('eq,eqi,qj->eij', w, ga, Vb) as a BLAS product."""
    return np.matmul(w[:, None, :] * ga.transpose(0, 2, 1), Vb)


def assemble_slab(
    slab: SpaceTimeSlab,
    prob: ProblemSpec,
    bases: SlabBases,
    alpha: float,
    advection: bool = True,
    diffusion: bool = True,
) -> SlabOperator:
    """Assemble all element/facet blocks of one slab.

    The switches select the advective and diffusive parts of the form (the
    right-hand side is always assembled); they exist for term-by-term
    verification, production callers leave both on.
    """
    d = slab.d
    E = slab.n_elements
    n = bases.n_u
    mv, mh = bases.m_vert, bases.m_horz
    nu = prob.nu
    Auu = np.zeros((E, n, n))
    bu = np.zeros((E, n))
    Fv = slab.n_vertical_facets
    Cul_o = np.zeros((Fv, n, mv)); Clu_o = np.zeros((Fv, mv, n)); Cll_o = np.zeros((Fv, mv, mv))
    Cul_n = np.zeros((Fv, n, mv)); Clu_n = np.zeros((Fv, mv, n)); Cll_n = np.zeros((Fv, mv, mv))
    bl = np.zeros((Fv, mv))
    Cul_b = np.zeros((E, n, mh)); Mb = np.zeros((E, mh, mh)); gb = np.zeros((E, mh))
    Clu_t = np.zeros((E, mh, n)); Mt = np.zeros((E, mh, mh))

    V, dV = bases.V, bases.dV
    wq = bases.vol_rule.weights
    pts = bases.vol_rule.points

    # --- volume terms, chunked over elements
    for lo in range(0, E, _CHUNK):
        hi = min(lo + _CHUNK, E)
        g = geometry.volume_geometry(slab.nodes[lo:hi], pts, d, check=False)
        _check_positive(g["detJ"], pts, lo)
        wdet = wq[None, :] * g["detJ"]
        x = g["x"].reshape(-1, d + 1)
        ne, nq = wdet.shape
        G = np.einsum("eqlk,qil->eqik", g["Jinv"], dV)
        if advection:
            B = prob.spacetime_beta(x).reshape(ne, nq, d + 1)
            T = np.einsum("eqk,eqik->eqi", B, G)
            Auu[lo:hi] -= (wdet[:, None, :] * T.transpose(0, 2, 1)) @ V
        if diffusion:
            Gs = G[..., 1:]
            L = Gs.transpose(0, 2, 1, 3).reshape(ne, n, nq * d)
            R = (wdet[..., None, None] * Gs).transpose(0, 1, 3, 2).reshape(ne, nq * d, n)
            Auu[lo:hi] += nu * (L @ R)
        fvals = np.asarray(prob.forcing(x), dtype=float).reshape(ne, nq)
        bu[lo:hi] += (wdet * fvals) @ V

    # --- vertical facets, grouped by (owner face, neighbor face, flip)
    wf = bases.face_rule.weights
    L = bases.Lvert
    for (of, nf, fl), ids in slab.vertical_groups().items():
        own = slab.vf_owner[ids]
        nbr = slab.vf_neigh[ids]
        gof = geometry.face_geometry(slab.nodes[own], of, bases.face_rule.points, d)
        W = wf[None, :] * gof["measure"]
        nrm = gof["normal"]
        x = gof["x"].reshape(-1, d + 1)
        Vo, dVo = bases.Vface[of], bases.dVface[of]
        bn = nrm[..., 0]
        if advection:
            bs = prob.beta(x).reshape(len(ids), -1, d)
            bn = bn + np.einsum("eqk,eqk->eq", bs, nrm[..., 1:])
        cp = 0.5 * (bn + np.abs(bn)) * W if advection else None
        cm = 0.5 * (bn - np.abs(bn)) * W if advection else None

        if advection:
            Auu_add = _face_nn(cp, Vo, Vo)
            Cul_o[ids] += np.einsum("eq,qi,qm->eim", cm, Vo, L)
            Clu_o[ids] -= np.einsum("eq,qm,qj->emj", cp, L, Vo)
            Cll_o[ids] -= np.einsum("eq,qm,qk->emk", cm, L, L)
        else:
            Auu_add = np.zeros((len(ids), n, n))
        if diffusion:
            pen = (nu * alpha / slab.h[own])[:, None] * W
            Go = np.einsum("eqlk,qil->eqik", gof["Jinv"], dVo)[..., 1:]
            gno = np.einsum("eqik,eqk->eqi", Go, nrm[..., 1:])
            Auu_add += _face_nn(pen, Vo, Vo)
            consis = _face_gn(W, gno, Vo)
            Auu_add -= nu * (consis + consis.transpose(0, 2, 1))
            Cul_o[ids] += -np.einsum("eq,qi,qm->eim", pen, Vo, L) \
                          + nu * np.einsum("eq,eqi,qm->eim", W, gno, L)
            Clu_o[ids] += -np.einsum("eq,qm,qj->emj", pen, L, Vo) \
                          + nu * np.einsum("eq,qm,eqj->emj", W, L, gno)
            Cll_o[ids] += np.einsum("eq,qm,qk->emk", pen, L, L)
        np.add.at(Auu, own, Auu_add)

        if nf >= 0:
            Vn = bases.Vface_flip[nf] if fl else bases.Vface[nf]
            dVn = bases.dVface_flip[nf] if fl else bases.dVface[nf]
            pts_n = bases.face_rule.points
            if fl:
                pts_n = pts_n.copy()
                pts_n[:, 1:] = -pts_n[:, 1:]
            gnf = geometry.face_geometry(slab.nodes[nbr], nf, pts_n, d)
            Auu_add = np.zeros((len(ids), n, n))
            if advection:
                Auu_add += _face_nn(-cm, Vn, Vn)
                Cul_n[ids] += np.einsum("eq,qi,qm->eim", -cp, Vn, L)
                Clu_n[ids] += np.einsum("eq,qm,qj->emj", cm, L, Vn)
                Cll_n[ids] += np.einsum("eq,qm,qk->emk", cp, L, L)
            if diffusion:
                pen = (nu * alpha / slab.h[nbr])[:, None] * W
                Gn = np.einsum("eqlk,qil->eqik", gnf["Jinv"], dVn)[..., 1:]
                gnn = np.einsum("eqik,eqk->eqi", Gn, -nrm[..., 1:])
                Auu_add += _face_nn(pen, Vn, Vn)
                consis = _face_gn(W, gnn, Vn)
                Auu_add -= nu * (consis + consis.transpose(0, 2, 1))
                Cul_n[ids] += -np.einsum("eq,qi,qm->eim", pen, Vn, L) \
                              + nu * np.einsum("eq,eqi,qm->eim", W, gnn, L)
                Clu_n[ids] += -np.einsum("eq,qm,qj->emj", pen, L, Vn) \
                              + nu * np.einsum("eq,qm,eqj->emj", W, L, gnn)
                Cll_n[ids] += np.einsum("eq,qm,qk->emk", pen, L, L)
            np.add.at(Auu, nbr, Auu_add)
        else:
            neu = np.asarray(slab.vf_kind[ids] == NEUMANN)
            if advection and np.any(neu):
                Cll_o[ids[neu]] += np.einsum("eq,qm,qk->emk", cp[neu], L, L)
            if np.any(neu):
                xn = gof["x"][neu].reshape(-1, d + 1)
                nn = nrm[neu].reshape(-1, d + 1)
                gvals = np.asarray(prob.bc_data(xn, nn), dtype=float)
                gvals = gvals.reshape(int(neu.sum()), -1)
                bl[ids[neu]] += np.einsum("eq,qm->em", gvals * W[neu], L)

    # --- bottom and top faces (normals are exactly (-+1, 0, ...))
    Lh = bases.Lhorz
    for face in (0, 1):
        gfh = geometry.face_geometry(slab.nodes, face, bases.face_rule.points, d)
        W = wf[None, :] * gfh["measure"]
        Vh = bases.Vface[face]
        if face == 0:
            Mb += _face_nn(W, Lh, Lh)
            if advection:
                Cul_b -= np.einsum("eq,qi,qm->eim", W, Vh, Lh)
            x = gfh["x"].reshape(-1, d + 1)
            nn = gfh["normal"].reshape(-1, d + 1)
            gvals = np.asarray(prob.bc_data(x, nn), dtype=float).reshape(E, -1)
            gb += (gvals * W) @ Lh
        else:
            Mt += _face_nn(W, Lh, Lh)
            if advection:
                Auu += _face_nn(W, Vh, Vh)
                Clu_t -= np.einsum("eq,qm,qj->emj", W, Lh, Vh)

    return SlabOperator(
        slab=slab, bases=bases, alpha=alpha, Auu=Auu, bu=bu,
        Cul_o=Cul_o, Clu_o=Clu_o, Cll_o=Cll_o,
        Cul_n=Cul_n, Clu_n=Clu_n, Cll_n=Cll_n, bl=bl,
        Cul_b=Cul_b, Mb=Mb, gb=gb, Clu_t=Clu_t, Mt=Mt,
    )


# ---------------------------------------------------------------------------
# per-element view (verification surface)


@dataclass
class LocalSystem:
    """One element's contribution, facet dofs ordered by local face.

    Face slots: bottom (m_horz wide), top (m_horz), then the 2d vertical
    faces (m_vert each).  ``facet_map`` lists (kind, facet_id, offset,
    width) per slot, where kind is 'bottom', 'top', 'interior', 'D' or 'N'.
    """

    e: int
    A_uu: np.ndarray
    A_ul: np.ndarray
    A_lu: np.ndarray
    A_ll: np.ndarray
    b_u: np.ndarray
    b_l: np.ndarray
    facet_map: list


def local_system(op: SlabOperator, e: int) -> LocalSystem:
    """Materialize the element-local block system for inspection/tests."""
    slab, bases = op.slab, op.bases
    d, n = slab.d, bases.n_u
    mv, mh = bases.m_vert, bases.m_horz
    fid, side = op.element_facets()
    nl = 2 * mh + 2 * d * mv
    A_ul = np.zeros((n, nl))
    A_lu = np.zeros((nl, n))
    A_ll = np.zeros((nl, nl))
    b_l = np.zeros(nl)
    fmap = [("bottom", e, 0, mh), ("top", e, mh, mh)]
    A_ul[:, 0:mh] = op.Cul_b[e]
    A_ll[0:mh, 0:mh] = op.Mb[e]
    b_l[0:mh] = op.gb[e]
    A_lu[mh : 2 * mh] = op.Clu_t[e]
    A_ll[mh : 2 * mh, mh : 2 * mh] = op.Mt[e]
    off = 2 * mh
    for s in range(2 * d):
        f = int(fid[e, s])
        owner_side = side[e, s] == 0
        kind = str(slab.vf_kind[f])
        fmap.append((kind, f, off, mv))
        A_ul[:, off : off + mv] = (op.Cul_o if owner_side else op.Cul_n)[f]
        A_lu[off : off + mv] = (op.Clu_o if owner_side else op.Clu_n)[f]
        A_ll[off : off + mv, off : off + mv] = (op.Cll_o if owner_side else op.Cll_n)[f]
        b_l[off : off + mv] = op.bl[f] if owner_side else 0.0
        off += mv
    return LocalSystem(
        e=e, A_uu=op.Auu[e].copy(), A_ul=A_ul, A_lu=A_lu, A_ll=A_ll,
        b_u=op.bu[e].copy(), b_l=b_l, facet_map=fmap,
    )


def assemble_advective(elem: geometry.ElementGeometry, prob: ProblemSpec,
                       bases: SlabBases) -> LocalSystem:
    """Advective part of one element's local system (element-side blocks)."""
    op = assemble_slab(elem.slab, prob, bases, alpha=0.0, diffusion=False)
    return local_system(op, elem.e)


def assemble_diffusive(elem: geometry.ElementGeometry, prob: ProblemSpec,
                       bases: SlabBases, alpha: float) -> LocalSystem:
    """Diffusive part (volume, penalty, consistency) of one element."""
    op = assemble_slab(elem.slab, prob, bases, alpha=alpha, advection=False)
    return local_system(op, elem.e)


def assemble_rhs(elem: geometry.ElementGeometry, prob: ProblemSpec,
                 bases: SlabBases):
    """Right-hand side moments (b_u, b_l) of one element."""
    op = assemble_slab(elem.slab, prob, bases, alpha=0.0)
    ls = local_system(op, elem.e)
    return ls.b_u, ls.b_l
