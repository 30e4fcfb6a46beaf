"""Mesh-dependent norms, inequality-constant estimates, and form sampling.

The error analysis of the scheme lives in three norms on the compound
space of element fields v and facet traces mu:

* the stability norm (``norm_v``): volume L2, the nu-weighted spatial
  gradient, the |beta.n|-weighted jump (v - mu) over every element
  boundary, the |beta.n|-weighted trace mu on the inflow/outflow boundary
  parts, and the penalty term (nu/h_K)(v - mu)^2 on vertical facets;
* its extension ``norm_s`` with the anisotropically weighted
  time-derivative term (Dt h_K^2 / (Dt + h_K)) |d_t v|^2;
* the larger ``norm_s_star`` adding outflow/inflow element-boundary
  terms, a weighted normal-gradient facet term, and a weighted volume L2
  term; it is the natural size of test functions in boundedness samples.

``field_norms`` integrates every component in one sweep over the slabs of
a solution, either for the discrete pair itself or for the error against
a supplied exact solution (facet terms then compare against the exact
trace).  The rest of the module is empirical verification: sharp
constants of the local trace/inverse inequalities via per-element
generalized eigenproblems, randomized Rayleigh-quotient sampling of
coercivity, boundedness and the inf-sup pairing on the assembled
monolithic operator, the discrete Poincare inequality, and a projection
rate study for the approximation orders of the local L2 projection.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import geometry, spaces
from .assembly import SlabBases, make_slab_bases
from .errors import ConfigError, EigSolveFailureError
from .geometry import DIRICHLET, NEUMANN, build_slabs, uniform_grid
from .problem import ProblemSpec
from .solver import SlabSolution, assemble_monolithic, unpack_vector

_CHUNK = 256


# ---------------------------------------------------------------------------
# norms


@dataclass
class NormReport:
    """Squared norm components accumulated over all slabs of a field.

    Components of the stability norm: ``l2_sq`` (volume L2), ``grad_sq``
    (nu-weighted spatial gradient), ``jump_sq`` (|beta.n| (v-mu)^2 over all
    element boundaries), ``neumann_sq`` (|beta.n| mu^2 on the non-Dirichlet
    domain boundary including the initial and final time levels), and
    ``penalty_sq`` ((nu/h_K)(v-mu)^2 on vertical facets).  ``dt_sq`` is the
    weighted time-derivative extension; the last four fields are the extra
    terms of the boundedness norm.
    """

    l2_sq: float = 0.0
    grad_sq: float = 0.0
    jump_sq: float = 0.0
    neumann_sq: float = 0.0
    penalty_sq: float = 0.0
    dt_sq: float = 0.0
    outflow_sq: float = 0.0
    inflow_sq: float = 0.0
    ngrad_sq: float = 0.0
    weighted_sq: float = 0.0

    @property
    def norm_v(self) -> float:
        return float(np.sqrt(self.l2_sq + self.grad_sq + self.jump_sq
                             + self.neumann_sq + self.penalty_sq))

    @property
    def norm_s(self) -> float:
        return float(np.sqrt(self.norm_v**2 + self.dt_sq))

    @property
    def norm_s_star(self) -> float:
        return float(np.sqrt(self.norm_s**2 + self.outflow_sq + self.inflow_sq
                             + self.ngrad_sq + self.weighted_sq))

    def as_dict(self) -> dict:
        out = {f.name: float(getattr(self, f.name)) for f in fields(self)}
        out["norm_v"] = self.norm_v
        out["norm_s"] = self.norm_s
        out["norm_s_star"] = self.norm_s_star
        return out


def _eval_exact(exact, x, shape):
    """Exact value and space-time gradient reshaped to quadrature layout."""
    flat = x.reshape(-1, x.shape[-1])
    u = np.asarray(exact.u(flat), dtype=float).reshape(shape)
    g = np.asarray(exact.grad(flat), dtype=float).reshape(shape + (x.shape[-1],))
    return u, g


def field_norms(slabs, steps, bases: SlabBases, prob: ProblemSpec,
                exact=None, qextra: int = 2) -> NormReport:
    """All norm components of a discrete pair, or of its error.

    ``steps`` supplies per slab the coefficient arrays u, lam, lam_bottom,
    lam_top.  With ``exact`` given, every term is evaluated for the
    difference against the exact field, using the exact trace on facets.
    Quadrature runs ``qextra`` orders above the assembly rule.
    """
    d = bases.d
    fb = make_slab_bases(bases.p_t, bases.p_s, d, bases.q + qextra)
    rep = NormReport()
    nu = prob.nu
    wq = fb.vol_rule.weights
    vpts = fb.vol_rule.points
    wf = fb.face_rule.weights
    fpts = fb.face_rule.points
    n_slabs = len(slabs)

    for k, (slab, step) in enumerate(zip(slabs, steps)):
        u = step.u
        dt = slab.dt
        cK = dt * slab.h**2 / (dt + slab.h)
        cW = (dt + slab.h) / (dt * slab.h**2)

        # volume terms, chunked to bound the Jacobian workspace
        E = slab.n_elements
        for lo in range(0, E, _CHUNK):
            hi = min(lo + _CHUNK, E)
            g = geometry.volume_geometry(slab.nodes[lo:hi], vpts, d, check=False)
            wdet = wq[None, :] * g["detJ"]
            v = u[lo:hi] @ fb.V.T
            rg = np.einsum("en,qnl->eql", u[lo:hi], fb.dV)
            gph = np.einsum("eql,eqlk->eqk", rg, g["Jinv"])
            if exact is not None:
                ue, ge = _eval_exact(exact, g["x"], v.shape)
                v = v - ue
                gph = gph - ge
            se = np.sum(wdet * v**2, axis=1)
            rep.l2_sq += float(se.sum())
            rep.weighted_sq += float((cW[lo:hi] * se).sum())
            rep.grad_sq += float(nu * np.sum(wdet[..., None] * gph[..., 1:] ** 2))
            sdt = np.sum(wdet * gph[..., 0] ** 2, axis=1)
            rep.dt_sq += float((cK[lo:hi] * sdt).sum())

        # vertical facets, both sides
        for (of, nf, fl), ids in slab.vertical_groups().items():
            own = slab.vf_owner[ids]
            gof = geometry.face_geometry(slab.nodes[own], of, fpts, d)
            W = wf[None, :] * gof["measure"]
            nrm = gof["normal"]
            x = gof["x"]
            bvals = np.asarray(prob.beta(x.reshape(-1, d + 1)), dtype=float)
            bn = nrm[..., 0] + np.einsum(
                "fqk,fqk->fq", bvals.reshape(len(ids), -1, d), nrm[..., 1:]
            )
            abn = np.abs(bn)
            mu = step.lam[ids] @ fb.Lvert.T
            v = u[own] @ fb.Vface[of].T
            rg = np.einsum("fn,qnl->fql", u[own], fb.dVface[of])
            gph = np.einsum("fql,fqlk->fqk", rg, gof["Jinv"])
            if exact is not None:
                ue, ge = _eval_exact(exact, x, v.shape)
                v = v - ue
                mu = mu - ue
                gph = gph - ge
            dvm = v - mu
            gn = np.einsum("fqk,fqk->fq", gph[..., 1:], nrm[..., 1:])
            rep.jump_sq += float(np.sum(W * abn * dvm**2))
            rep.penalty_sq += float(nu * np.sum(np.sum(W * dvm**2, axis=1) / slab.h[own]))
            rep.ngrad_sq += float(nu * np.sum(np.sum(W * gn**2, axis=1) * slab.h[own]))
            rep.outflow_sq += float(np.sum(W * np.maximum(bn, 0.0) * v**2))
            rep.inflow_sq += float(np.sum(W * np.maximum(-bn, 0.0) * mu**2))

            if nf >= 0:
                nbr = slab.vf_neigh[ids]
                pts_n = fpts
                if fl:
                    pts_n = fpts.copy()
                    pts_n[:, 1:] = -pts_n[:, 1:]
                gnf = geometry.face_geometry(slab.nodes[nbr], nf, pts_n, d)
                Vn = fb.Vface_flip[nf] if fl else fb.Vface[nf]
                dVn = fb.dVface_flip[nf] if fl else fb.dVface[nf]
                v2 = u[nbr] @ Vn.T
                rg2 = np.einsum("fn,qnl->fql", u[nbr], dVn)
                g2 = np.einsum("fql,fqlk->fqk", rg2, gnf["Jinv"])
                if exact is not None:
                    v2 = v2 - ue
                    g2 = g2 - ge
                dvm2 = v2 - mu
                gn2 = np.einsum("fqk,fqk->fq", g2[..., 1:], -nrm[..., 1:])
                rep.jump_sq += float(np.sum(W * abn * dvm2**2))
                rep.penalty_sq += float(nu * np.sum(np.sum(W * dvm2**2, axis=1) / slab.h[nbr]))
                rep.ngrad_sq += float(nu * np.sum(np.sum(W * gn2**2, axis=1) * slab.h[nbr]))
                rep.outflow_sq += float(np.sum(W * np.maximum(-bn, 0.0) * v2**2))
                rep.inflow_sq += float(np.sum(W * np.maximum(bn, 0.0) * mu**2))
            else:
                neu = np.asarray(slab.vf_kind[ids] == NEUMANN)
                if np.any(neu):
                    rep.neumann_sq += float(np.sum((W * abn * mu**2)[neu]))

        # bottom and top faces of the slab (|beta.n| = 1 exactly)
        for face in (0, 1):
            gfh = geometry.face_geometry(slab.nodes, face, fpts, d)
            W = wf[None, :] * gfh["measure"]
            v = u @ fb.Vface[face].T
            mu = (step.lam_bottom if face == 0 else step.lam_top) @ fb.Lhorz.T
            if exact is not None:
                ue, _ = _eval_exact(exact, gfh["x"], v.shape)
                v = v - ue
                mu = mu - ue
            rep.jump_sq += float(np.sum(W * (v - mu) ** 2))
            if face == 0:
                rep.inflow_sq += float(np.sum(W * mu**2))
                if k == 0:
                    rep.neumann_sq += float(np.sum(W * mu**2))
            else:
                rep.outflow_sq += float(np.sum(W * v**2))
                if k == n_slabs - 1:
                    rep.neumann_sq += float(np.sum(W * mu**2))
    return rep


def error_norms(sol, qextra: int = 2) -> NormReport:
    """Norm components of u - u_h for a solution with an exact reference."""
    if sol.problem.exact is None:
        raise ConfigError("exact: error norms need a problem with an exact solution")
    return field_norms(sol.slabs, sol.steps, sol.bases, sol.problem,
                       exact=sol.problem.exact, qextra=qextra)


def discrete_norms(sol, qextra: int = 2) -> NormReport:
    """Norm components of the discrete pair itself."""
    return field_norms(sol.slabs, sol.steps, sol.bases, sol.problem, qextra=qextra)


# ---------------------------------------------------------------------------
# sharp constants of the local trace / inverse inequalities


def _gen_eig_max(A: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Largest generalized eigenvalue of the symmetric pencils (A, M).

    Batched over the leading axis via a Cholesky congruence; M must be
    symmetric positive definite (a volume Gram matrix always is).
    """
    try:
        L = np.linalg.cholesky(M)
        X = np.linalg.solve(L, A)
        B = np.linalg.solve(L, X.transpose(0, 2, 1))
        B = 0.5 * (B + B.transpose(0, 2, 1))
        return np.linalg.eigvalsh(B)[..., -1]
    except np.linalg.LinAlgError as exc:
        raise EigSolveFailureError(f"generalized eigenvalue solve failed: {exc}") from exc


_CONSTANT_NAMES = ("c_TQ", "c_T_dK", "c_I_t", "c_I_s")


def estimate_trace_constants(slab, bases: SlabBases, which=None) -> dict:
    """Sharp constants of the local trace and inverse inequalities.

    Per element the squared constant is the top generalized eigenvalue of
    a boundary or derivative Gram matrix against the volume mass; the
    returned scalars are maxima over the slab, converted to the
    size-independent form of the inequalities:

    * ``c_TQ``:   ||v||_{dK,vert}  <= c_TQ h_K^(-1/2) ||v||_K
    * ``c_T_dK``: ||v||_{dK}       <= c_T_dK (Dt^(-1/2) + h_K^(-1/2)) ||v||_K
    * ``c_I_t``:  ||d_t v||_K      <= c_I_t (1/Dt + 1/h_K) ||v||_K
    * ``c_I_s``:  ||grad v||_K     <= c_I_s h_K^(-1) ||v||_K

    ``which`` restricts the computation to a subset of the names.
    """
    want = set(which) if which is not None else set(_CONSTANT_NAMES)
    unknown = want - set(_CONSTANT_NAMES)
    if unknown:
        raise ConfigError(f"which: unknown constant name(s) {sorted(unknown)}")
    d = slab.d
    V, dV = bases.V, bases.dV
    wq, pts = bases.vol_rule.weights, bases.vol_rule.points
    wfc, fpts = bases.face_rule.weights, bases.face_rule.points
    best = {name: 0.0 for name in want}
    E = slab.n_elements
    dt = slab.dt
    for lo in range(0, E, _CHUNK):
        hi = min(lo + _CHUNK, E)
        nodes = slab.nodes[lo:hi]
        h = slab.h[lo:hi]
        g = geometry.volume_geometry(nodes, pts, d, check=False)
        wdet = wq[None, :] * g["detJ"]
        M = np.matmul(V.T, wdet[:, :, None] * V)
        if want & {"c_TQ", "c_T_dK"}:
            GQ = np.zeros_like(M)
            GB = np.zeros_like(M)
            for face in range(2 * (d + 1)):
                gf = geometry.face_geometry(nodes, face, fpts, d)
                W = wfc[None, :] * gf["measure"]
                Vf = bases.Vface[face]
                Gf = np.matmul(Vf.T, W[:, :, None] * Vf)
                GB += Gf
                if face >= 2:
                    GQ += Gf
            if "c_TQ" in want:
                th = _gen_eig_max(GQ, M)
                best["c_TQ"] = max(best["c_TQ"], float(np.max(np.sqrt(th * h))))
            if "c_T_dK" in want:
                th = _gen_eig_max(GB, M)
                vals = np.sqrt(th) / (dt**-0.5 + h**-0.5)
                best["c_T_dK"] = max(best["c_T_dK"], float(np.max(vals)))
        if want & {"c_I_t", "c_I_s"}:

            def deriv_gram(comp):
                Gk = np.einsum("eql,qil->eqi", g["Jinv"][..., comp], dV)
                return np.matmul((wdet[..., None] * Gk).transpose(0, 2, 1), Gk)

            if "c_I_t" in want:
                th = _gen_eig_max(deriv_gram(0), M)
                vals = np.sqrt(th) / (1.0 / dt + 1.0 / h)
                best["c_I_t"] = max(best["c_I_t"], float(np.max(vals)))
            if "c_I_s" in want:
                As = deriv_gram(1)
                for comp in range(2, d + 1):
                    As += deriv_gram(comp)
                th = _gen_eig_max(As, M)
                best["c_I_s"] = max(best["c_I_s"], float(np.max(np.sqrt(th) * h)))
    return best


@dataclass
class ConstantEstimates:
    """Empirical inequality constants with the family they were measured on."""

    c_TQ: float = float("nan")
    c_T_dK: float = float("nan")
    c_I_t: float = float("nan")
    c_I_s: float = float("nan")
    c_p: float = float("nan")
    c_c: float = float("nan")
    family: str = ""

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# ---------------------------------------------------------------------------
# randomized verification of the discrete inequalities


def _zero_beta(tx):
    return np.zeros_like(np.asarray(tx)[..., 1:])


def _random_steps(slabs, bases: SlabBases, rng) -> list:
    """Random coefficient fields respecting homogeneous Dirichlet traces."""
    steps = []
    for slab in slabs:
        E = slab.n_elements
        u = rng.standard_normal((E, bases.n_u))
        lam = rng.standard_normal((slab.n_vertical_facets, bases.m_vert))
        lam[np.asarray(slab.vf_kind == DIRICHLET)] = 0.0
        lb = rng.standard_normal((E, bases.m_horz))
        lt = rng.standard_normal((E, bases.m_horz))
        steps.append(SlabSolution(u=u, lam=lam, lam_bottom=lb, lam_top=lt))
    return steps


def check_poincare(slabs, bases: SlabBases, n_samples: int = 100, seed: int = 42) -> dict:
    """Empirical constant of the discrete Poincare-type inequality.

    Samples random pairs and maximizes
    ``||v||_E / (sum_K ||grad v||^2 + sum h_K^(-1) ||v - mu||_Q^2)^(1/2)``.
    The denominator is read off a unit-diffusion norm sweep, so the exact
    same quadrature path as the error norms is exercised.
    """
    probe = ProblemSpec(nu=1.0, beta=_zero_beta, d=slabs[0].d,
                        bc_data=lambda tx, n: np.zeros(tx.shape[:-1]))
    rng = np.random.default_rng(seed)
    ratios = np.empty(n_samples)
    for i in range(n_samples):
        steps = _random_steps(slabs, bases, rng)
        rep = field_norms(slabs, steps, bases, probe, qextra=0)
        denom = rep.grad_sq + rep.penalty_sq
        ratios[i] = np.sqrt(rep.l2_sq / denom) if denom > 0 else np.inf
    return {"c_p": float(np.max(ratios)), "n_samples": n_samples,
            "ratios": ratios}


def check_coercivity(ops, prob: ProblemSpec, n_samples: int = 200,
                     seed: int = 42) -> dict:
    """Minimum Rayleigh quotient a(x, x) / norm_v(x)^2 over random pairs.

    ``ops`` are the assembled slab operators of one run (march with
    ``keep_ops=True``); the quotient uses the full monolithic bilinear
    form, so inter-slab coupling terms are included.
    """
    A, _, lay = assemble_monolithic(ops)
    Asym = (A + A.T) * 0.5
    slabs = [op.slab for op in ops]
    bases = ops[0].bases
    rng = np.random.default_rng(seed)
    quotients = np.empty(n_samples)
    for i in range(n_samples):
        x = rng.standard_normal(lay.size)
        steps = unpack_vector(ops, lay, x)
        rep = field_norms(slabs, steps, bases, prob, qextra=0)
        quotients[i] = float(x @ (Asym @ x)) / rep.norm_v**2
    return {"c_c": float(np.min(quotients)), "alpha": float(ops[0].alpha),
            "n_samples": n_samples, "quotients": quotients}


def check_boundedness(ops, prob: ProblemSpec, n_samples: int = 200,
                      seed: int = 42) -> dict:
    """Maximum of |a(x, y)| / (norm_s_star(x) norm_s(y)) over random pairs."""
    A, _, lay = assemble_monolithic(ops)
    slabs = [op.slab for op in ops]
    bases = ops[0].bases
    rng = np.random.default_rng(seed)
    ratios = np.empty(n_samples)
    for i in range(n_samples):
        x = rng.standard_normal(lay.size)
        y = rng.standard_normal(lay.size)
        nx = field_norms(slabs, unpack_vector(ops, lay, x), bases, prob, qextra=0)
        ny = field_norms(slabs, unpack_vector(ops, lay, y), bases, prob, qextra=0)
        ratios[i] = abs(float(y @ (A @ x))) / (nx.norm_s_star * ny.norm_s)
    return {"c_B": float(np.max(ratios)), "n_samples": n_samples, "ratios": ratios}


def _time_lift_matrices(ops) -> list:
    """Per slab: element matrices mapping u to the projected lift z.

    z on each element is the L2 projection of c_K d_t u with
    c_K = Dt h_K^2 / (Dt + h_K); used as the extra test-function component
    in the inf-sup sampling.
    """
    lifts = []
    for op in ops:
        slab, bases = op.slab, op.bases
        d = slab.d
        g = geometry.volume_geometry(slab.nodes, bases.vol_rule.points, d, check=False)
        wdet = bases.vol_rule.weights[None, :] * g["detJ"]
        M = np.matmul(bases.V.T, wdet[:, :, None] * bases.V)
        Gt = np.einsum("eql,qil->eqi", g["Jinv"][..., 0], bases.dV)
        Dt = np.matmul(bases.V.T, wdet[:, :, None] * Gt)
        cK = slab.dt * slab.h**2 / (slab.dt + slab.h)
        lifts.append(np.linalg.solve(M, Dt) * cK[:, None, None])
    return lifts


def check_infsup(ops, prob: ProblemSpec, n_samples: int = 50,
                 seed: int = 42) -> dict:
    """Sample the inf-sup pairing with the shifted-lift test function.

    For each random pair x the candidate test function is
    ``y = c2 x + (z, 0)`` with z the weighted time-derivative lift and c2
    the smallest power of two making ``a(x, y) >= norm_s(x)^2 / 2``.
    Reports the minimum of a(x, y) / (norm_s(x) norm_s(y)).
    """
    A, _, lay = assemble_monolithic(ops)
    lifts = _time_lift_matrices(ops)
    slabs = [op.slab for op in ops]
    bases = ops[0].bases
    E, n = lay.E, lay.n_u
    rng = np.random.default_rng(seed)
    ratios = np.empty(n_samples)
    c2_used = np.empty(n_samples)
    positive = True
    for i in range(n_samples):
        x = rng.standard_normal(lay.size)
        xs = unpack_vector(ops, lay, x)
        y0 = np.zeros(lay.size)
        for k, st in enumerate(xs):
            z = np.einsum("eij,ej->ei", lifts[k], st.u)
            y0[lay.u_off[k] : lay.u_off[k] + E * n] = z.ravel()
        ns_x = field_norms(slabs, xs, bases, prob, qextra=0).norm_s
        Ax = A @ x
        a_xx = float(x @ Ax)
        a_xy0 = float(y0 @ Ax)
        target = 0.5 * ns_x**2
        c2 = 1.0
        for _ in range(60):
            if c2 * a_xx + a_xy0 >= target:
                break
            c2 *= 2.0
        pair = c2 * a_xx + a_xy0
        positive = positive and pair > 0
        y = c2 * x + y0
        ns_y = field_norms(slabs, unpack_vector(ops, lay, y), bases, prob, qextra=0).norm_s
        ratios[i] = pair / (ns_x * ns_y)
        c2_used[i] = c2
    return {"c_i": float(np.min(ratios)), "all_positive": bool(positive),
            "max_c2": float(np.max(c2_used)), "n_samples": n_samples,
            "ratios": ratios}


# ---------------------------------------------------------------------------
# projection approximation orders


def convergence_rates(errors) -> np.ndarray:
    """log2 ratios of consecutive errors under uniform refinement."""
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log2(e[:-1] / e[1:])


def least_squares_rate(errors) -> float:
    """Least-squares slope of log2(error) against the refinement level."""
    e = np.asarray(errors, dtype=float)
    k = np.arange(e.size)
    return float(-np.polyfit(k, np.log2(e), 1)[0])


def projection_rate_study(exact, deform, levels, p_t: int, p_s: int,
                          lo=(-0.5, -0.5), hi=(0.5, 0.5),
                          t_start: float = 0.0, t_final: float = 1.0,
                          tag: str = "N", qextra: int = 2) -> dict:
    """Observed decay orders of the element-wise L2 projection error.

    ``levels`` is a list of (cells per direction, slab count) pairs refined
    simultaneously.  Five error ladders are measured per level: element
    L2, spatial gradient, time derivative, the element-boundary trace, and
    the normal gradient on vertical facets.  Rates are least-squares
    slopes; the ``expected`` entries assume equal degrees and simultaneous
    halving.
    """
    d = len(lo)
    fb = make_slab_bases(p_t, p_s, d, spaces.default_order(p_t, p_s) + qextra)
    wq, vpts = fb.vol_rule.weights, fb.vol_rule.points
    wf, fpts = fb.face_rule.weights, fb.face_rule.points
    acc: dict = {name: [] for name in ("l2", "grad", "dt", "trace", "ngrad")}
    for nx, n_slabs in levels:
        slabs = build_slabs(uniform_grid(nx, nx if d == 2 else None, lo=lo, hi=hi, tag=tag),
                            deform, t_start, t_final, n_slabs)
        sq = dict.fromkeys(acc, 0.0)
        for slab in slabs:
            proj = spaces.project_elements(exact.u, slab, fb.basis, quad=fb.vol_rule)
            g = geometry.volume_geometry(slab.nodes, vpts, d, check=False)
            wdet = wq[None, :] * g["detJ"]
            v = proj @ fb.V.T
            rg = np.einsum("en,qnl->eql", proj, fb.dV)
            gph = np.einsum("eql,eqlk->eqk", rg, g["Jinv"])
            ue, ge = _eval_exact(exact, g["x"], v.shape)
            sq["l2"] += float(np.sum(wdet * (v - ue) ** 2))
            err_g = gph - ge
            sq["grad"] += float(np.sum(wdet[..., None] * err_g[..., 1:] ** 2))
            sq["dt"] += float(np.sum(wdet * err_g[..., 0] ** 2))
            for face in range(2 * (d + 1)):
                gf = geometry.face_geometry(slab.nodes, face, fpts, d)
                W = wf[None, :] * gf["measure"]
                vf = proj @ fb.Vface[face].T
                uef, gef = _eval_exact(exact, gf["x"], vf.shape)
                sq["trace"] += float(np.sum(W * (vf - uef) ** 2))
                if face >= 2:
                    rgf = np.einsum("en,qnl->eql", proj, fb.dVface[face])
                    gphf = np.einsum("eql,eqlk->eqk", rgf, gf["Jinv"])
                    gn = np.einsum("eqk,eqk->eq", gphf[..., 1:] - gef[..., 1:],
                                   gf["normal"][..., 1:])
                    sq["ngrad"] += float(np.sum(W * gn**2))
        for name in acc:
            acc[name].append(np.sqrt(sq[name]))
    p = min(p_t, p_s)
    expected = {"l2": p + 1.0, "grad": float(p), "dt": float(p),
                "trace": p + 0.5, "ngrad": p - 0.5}
    out = {}
    for name, errs in acc.items():
        out[name] = {
            "errors": [float(e) for e in errs],
            "rates": [float(r) for r in convergence_rates(errs)],
            "rate": least_squares_rate(errs),
            "expected": expected[name],
        }
    out["levels"] = [list(map(int, lv)) for lv in levels]
    return out
