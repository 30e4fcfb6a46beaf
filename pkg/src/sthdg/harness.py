"""Experiment driver: built-in benchmark problems and verification suites.

Three layers live here.  ``builtin_problem`` constructs ready-to-run
problem definitions: a rotating Gaussian pulse with a closed-form exact
solution, a free-stream constant that any consistent scheme must
reproduce to rounding, and a space-time linear field that the discrete
space contains exactly.  ``RunConfig``/``run`` execute a single
simulation from a plain dict (JSON-friendly) and write machine-readable
summaries, optional VTK slabs, and optional checkpoints.
``convergence_study`` and ``verify`` drive the refinement tables and the
sampled stability checks; both write CSV files whose bytes are stable
across repeated runs so regressions show up in plain diffs.

All built-in problems live on the unit square centered at the origin,
with the mesh deforming in time through a prescribed sinusoidal map.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import os
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import analysis, geometry
from .assembly import assemble_slab, make_slab_bases
from .errors import ConfigError, UnknownProblemError
from .geometry import build_slab, build_slabs, uniform_grid, write_vtk
from .problem import ExactSolution, ProblemSpec
from .solver import march, resolve_alpha, save_solution

SIGMA = 0.1
CENTER = (-0.2, 0.1)
DOMAIN_LO = (-0.5, -0.5)
DOMAIN_HI = (0.5, 0.5)


# ---------------------------------------------------------------------------
# built-in problems


def pulse_exact(nu: float) -> ExactSolution:
    """Gaussian pulse advected by a rigid rotation while diffusing.

    The pulse starts centered at ``CENTER`` with width ``SIGMA`` and peak
    value one; the rotating frame turns at rate 4 and the variance grows
    linearly in time at rate 4 nu, so the closed form solves
    u_t + beta.grad(u) = nu lap(u) exactly for the velocity field of
    ``rotating_beta``.
    """
    s2 = SIGMA * SIGMA
    x1c, x2c = CENTER

    def parts(tx):
        tx = np.asarray(tx, dtype=float)
        t, x1, x2 = tx[..., 0], tx[..., 1], tx[..., 2]
        c, s = np.cos(4.0 * t), np.sin(4.0 * t)
        xt1 = x1 * c + x2 * s
        xt2 = -x1 * s + x2 * c
        r1, r2 = xt1 - x1c, xt2 - x2c
        D = 2.0 * s2 + 4.0 * nu * t
        u = (2.0 * s2 / D) * np.exp(-(r1 * r1 + r2 * r2) / D)
        return c, s, xt1, xt2, r1, r2, D, u

    def u_fun(tx):
        return parts(tx)[-1]

    def grad_fun(tx):
        tx = np.asarray(tx, dtype=float)
        c, s, xt1, xt2, r1, r2, D, u = parts(tx)
        g = np.empty_like(tx)
        rot = -8.0 * (r1 * xt2 - r2 * xt1) / D
        spread = 4.0 * nu * (r1 * r1 + r2 * r2) / D**2
        g[..., 0] = u * (-4.0 * nu / D + rot + spread)
        g[..., 1] = u * (-2.0 / D) * (r1 * c - r2 * s)
        g[..., 2] = u * (-2.0 / D) * (r1 * s + r2 * c)
        return g

    return ExactSolution(u=u_fun, grad=grad_fun)


def rotating_beta(tx):
    """Solid-body rotation about the origin, angular rate 4."""
    tx = np.asarray(tx, dtype=float)
    return np.stack([-4.0 * tx[..., 2], 4.0 * tx[..., 1]], axis=-1)


def pulse_deformation(amplitude: float = 0.1):
    """Time-periodic sinusoidal deformation of the unit square.

    Each coordinate is pulled toward its far edge by a sine whose phase
    travels in the other coordinate, so cells shear and stretch and the
    domain itself breathes in time.  Returns a callable ``deform(t, x)``
    mapping reference vertices to their position at time t.
    """
    A = float(amplitude)

    def deform(t, x0):
        x0 = np.asarray(x0, dtype=float)
        out = np.array(x0, copy=True)
        out[..., 0] = x0[..., 0] + A * (0.5 - x0[..., 0]) * np.sin(
            2.0 * np.pi * (0.5 - x0[..., 1] + t))
        out[..., 1] = x0[..., 1] + A * (0.5 - x0[..., 1]) * np.sin(
            2.0 * np.pi * (0.5 - x0[..., 0] + t))
        return out

    return deform


def identity_deformation():
    """A deformation map that leaves every vertex where it started."""
    return geometry.identity_deformation


def _zero_scalar(tx):
    tx = np.asarray(tx, dtype=float)
    return np.zeros(tx.shape[:-1])


def _one_scalar(tx):
    tx = np.asarray(tx, dtype=float)
    return np.ones(tx.shape[:-1])


def _zero_vector(tx):
    tx = np.asarray(tx, dtype=float)
    return np.zeros_like(tx)


_POLY = (0.3, 0.6, 0.8, -0.5)  # coefficients of 1, t, x1, x2


def _poly_u(tx):
    tx = np.asarray(tx, dtype=float)
    c0, ct, c1, c2 = _POLY
    return c0 + ct * tx[..., 0] + c1 * tx[..., 1] + c2 * tx[..., 2]


def _poly_grad(tx):
    tx = np.asarray(tx, dtype=float)
    g = np.empty_like(tx)
    g[..., 0] = _POLY[1]
    g[..., 1] = _POLY[2]
    g[..., 2] = _POLY[3]
    return g


def _poly_forcing(tx):
    b = rotating_beta(tx)
    return _POLY[1] + _POLY[2] * b[..., 0] + _POLY[3] * b[..., 1]


BUILTIN_PROBLEMS = ("rotating-pulse", "free-stream", "poly-exact")


def builtin_problem(name: str, nu: float = 1e-2, amplitude: float = 0.1):
    """Return ``(ProblemSpec, deformation)`` for a named benchmark.

    rotating-pulse
        The diffusing Gaussian under rigid rotation; the workhorse for
        convergence tables since the exact solution is smooth and the
        boundary data is genuinely time dependent.
    free-stream
        u identically one in the same rotating flow.  Any consistent
        discretization reproduces it to solver precision on every mesh,
        deforming or not.
    poly-exact
        A space-time linear field with matching volume forcing.  Linear
        fields survive the multilinear element maps, so the discrete
        solution must match to rounding even on deformed meshes.
    """
    deform = pulse_deformation(amplitude)
    if name == "rotating-pulse":
        prob = ProblemSpec(nu=nu, beta=rotating_beta, d=2, exact=pulse_exact(nu),
                           div_beta=_zero_scalar, name=name)
    elif name == "free-stream":
        exact = ExactSolution(u=_one_scalar, grad=_zero_vector)
        prob = ProblemSpec(nu=nu, beta=rotating_beta, d=2, exact=exact,
                           div_beta=_zero_scalar, name=name)
    elif name == "poly-exact":
        exact = ExactSolution(u=_poly_u, grad=_poly_grad)
        prob = ProblemSpec(nu=nu, beta=rotating_beta, d=2, exact=exact,
                           forcing=_poly_forcing, div_beta=_zero_scalar, name=name)
    else:
        raise UnknownProblemError(
            f"unknown problem {name!r}; available: " + ", ".join(BUILTIN_PROBLEMS))
    return prob, deform


# ---------------------------------------------------------------------------
# single runs


@dataclass
class RunConfig:
    """Everything needed to reproduce one simulation.

    ``grid`` counts cells per direction, ``slabs`` the number of time
    slabs between t = 0 and ``t_final``.  ``dt`` is redundant but may be
    given for readability; it must then equal t_final / slabs.  ``degrees``
    is (temporal, spatial).  ``alpha`` overrides the interior penalty; by
    default it is calibrated from a measured trace inequality on the
    first slab.
    """

    problem: str = "rotating-pulse"
    dimension: int = 2
    grid: tuple = (8, 8)
    slabs: int = 8
    t_final: float = 1.0
    dt: Optional[float] = None
    degrees: tuple = (1, 1)
    nu: float = 1e-2
    alpha: Optional[float] = None
    deform_amplitude: float = 0.1
    out_dir: Optional[str] = None
    seed: int = 42
    solver_tol: float = 1e-12
    write_vtk: bool = False
    write_checkpoint: bool = False

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        for key in raw:
            if key not in known:
                raise ConfigError(f"{key}: unknown config field")
        data = dict(raw)
        if "grid" in data:
            g = data["grid"]
            data["grid"] = (int(g), int(g)) if np.isscalar(g) else tuple(int(v) for v in g)
        if "degrees" in data:
            p = data["degrees"]
            data["degrees"] = (int(p), int(p)) if np.isscalar(p) else tuple(int(v) for v in p)
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.dimension != 2:
            raise ConfigError("dimension: built-in problems are two dimensional")
        if len(self.grid) != 2 or min(self.grid) < 1:
            raise ConfigError("grid: needs two positive cell counts")
        if self.slabs < 1:
            raise ConfigError("slabs: must be a positive integer")
        if not self.t_final > 0.0:
            raise ConfigError("t_final: must be positive")
        if self.dt is not None:
            if not self.dt > 0.0:
                raise ConfigError("dt: must be positive when given")
            if abs(self.dt * self.slabs - self.t_final) > 1e-10 * max(1.0, self.t_final):
                raise ConfigError("dt: slabs * dt must equal t_final")
        if len(self.degrees) != 2 or min(self.degrees) < 1:
            raise ConfigError("degrees: temporal and spatial degree must be at least 1")
        if not self.nu > 0.0:
            raise ConfigError("nu: diffusion parameter must be positive")
        if self.alpha is not None and not self.alpha > 0.0:
            raise ConfigError("alpha: must be positive when given")
        if not abs(self.deform_amplitude) < 0.5:
            raise ConfigError("deform_amplitude: magnitude below 0.5 keeps the map invertible")
        if not self.solver_tol > 0.0:
            raise ConfigError("solver_tol: must be positive")


def _config_dict(cfg: RunConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["grid"] = list(cfg.grid)
    out["degrees"] = list(cfg.degrees)
    return out


@dataclass
class RunResult:
    config: RunConfig
    solution: object
    report: analysis.NormReport
    summary: dict


def run(cfg: RunConfig) -> RunResult:
    """Execute one configured simulation and collect its summary.

    Marches the slabs, evaluates the mesh-dependent norms (errors when
    the problem has an exact solution, plain field norms otherwise), and
    writes ``summary.json`` plus any requested VTK/checkpoint output to
    ``cfg.out_dir``.
    """
    cfg.validate()
    prob, deform = builtin_problem(cfg.problem, nu=cfg.nu,
                                   amplitude=cfg.deform_amplitude)
    mesh = uniform_grid(cfg.grid[0], cfg.grid[1], lo=DOMAIN_LO, hi=DOMAIN_HI, tag="N")
    p_t, p_s = cfg.degrees
    tic = time.perf_counter()
    sol = march(mesh, deform, prob, n_slabs=cfg.slabs, t_start=0.0,
                t_final=cfg.t_final, p_t=p_t, p_s=p_s, alpha=cfg.alpha,
                tol=cfg.solver_tol)
    t_march = time.perf_counter() - tic
    tic = time.perf_counter()
    if prob.exact is not None:
        rep = analysis.error_norms(sol)
        norm_kind = "error"
    else:
        rep = analysis.discrete_norms(sol)
        norm_kind = "field"
    t_norms = time.perf_counter() - tic

    slab0 = sol.slabs[0]
    b = sol.bases
    free_vert = int(np.sum(slab0.vf_kind != geometry.DIRICHLET))
    summary = {
        "config": _config_dict(cfg),
        "alpha": float(sol.alpha),
        "n_elements": int(slab0.n_elements),
        "n_slabs": sol.n_slabs,
        "times": [float(t) for t in sol.times],
        "dofs": {
            "element_per_slab": int(slab0.n_elements) * b.n_u,
            "vertical_trace_per_slab": free_vert * b.m_vert,
            "horizontal_trace_per_slab": int(slab0.n_elements) * b.m_horz,
        },
        "max_residual": float(max(st.residual for st in sol.steps)),
        "norm_kind": norm_kind,
        "norms": {k: float(v) for k, v in rep.as_dict().items()},
        "timings": {"march_s": t_march, "norms_s": t_norms},
    }
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        with open(os.path.join(cfg.out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if cfg.write_checkpoint:
            save_solution(sol, os.path.join(cfg.out_dir, "checkpoint"))
        if cfg.write_vtk:
            for k in range(sol.n_slabs):
                write_vtk(os.path.join(cfg.out_dir, f"slab{k:04d}.vtk"), sol.slabs[k],
                          point_data={"u": sol.corner_values(k)})
    return RunResult(config=cfg, solution=sol, report=rep, summary=summary)


# ---------------------------------------------------------------------------
# convergence studies


def _write_convergence_csv(path, cells, slabs, errors) -> None:
    """One table, RFC-4180 lines; bytes are reproducible run to run."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["cells", "slabs", "error", "rate"])
        prev = None
        for c, s, e in zip(cells, slabs, errors):
            if prev is None:
                rate = ""
            elif e <= 1e-12 or prev <= 1e-12:
                rate = "n/a"
            else:
                rate = f"{np.log2(prev / e):.2f}"
            w.writerow([c, s, f"{e:.12e}", rate])
            prev = e


def _render_table(title, cells, slabs, errors, rates) -> list:
    lines = [title, f"  {'cells':>7} {'slabs':>6} {'error':>18} {'rate':>6}"]
    for i, (c, s, e) in enumerate(zip(cells, slabs, errors)):
        r = "-" if i == 0 else f"{rates[i - 1]:.2f}"
        lines.append(f"  {c:>7d} {s:>6d} {e:>18.6e} {r:>6}")
    lines.append("")
    return lines


def convergence_study(degrees=(1, 2, 3), levels=3, nus=(1e-2,), out_dir=None,
                      problem: str = "rotating-pulse", base_cells: int = 8,
                      base_slabs: int = 8, t_final: float = 1.0,
                      alpha: Optional[float] = None,
                      deform_amplitude: float = 0.1,
                      solver_tol: float = 1e-12, quiet: bool = True) -> dict:
    """Refinement tables of the mesh-dependent error norm.

    Level k uses ``base_cells * 2**k`` cells per direction and
    ``base_slabs * 2**k`` slabs, halving the space and time resolution
    together.  One CSV per (degree, nu) pair lands in ``out_dir`` along
    with a rendered text summary.  Returns the table data keyed by
    ``"p{degree}_nu{nu:.0e}"``.
    """
    if levels < 1:
        raise ConfigError("levels: at least one refinement level is needed")
    results: dict = {}
    lines: list = []
    for nu in nus:
        prob, deform = builtin_problem(problem, nu=nu, amplitude=deform_amplitude)
        if prob.exact is None:
            raise ConfigError("problem: convergence studies need an exact solution")
        for p in degrees:
            errors, cells, slab_counts, alphas = [], [], [], []
            for k in range(levels):
                n = base_cells * 2**k
                ns = base_slabs * 2**k
                mesh = uniform_grid(n, n, lo=DOMAIN_LO, hi=DOMAIN_HI, tag="N")
                tic = time.perf_counter()
                sol = march(mesh, deform, prob, n_slabs=ns, t_start=0.0,
                            t_final=t_final, p_t=p, p_s=p, alpha=alpha,
                            tol=solver_tol)
                rep = analysis.error_norms(sol)
                errors.append(float(rep.norm_s))
                cells.append(n * n)
                slab_counts.append(ns)
                alphas.append(float(sol.alpha))
                if not quiet:
                    print(f"p={p} nu={nu:g} {n}x{n}/{ns}: error {rep.norm_s:.6e} "
                          f"({time.perf_counter() - tic:.1f}s)", flush=True)
            rates = [float(r) for r in analysis.convergence_rates(errors)]
            key = f"p{p}_nu{nu:.0e}"
            results[key] = {"p": int(p), "nu": float(nu), "cells": cells,
                            "slabs": slab_counts, "errors": errors,
                            "rates": rates, "alphas": alphas}
            if out_dir:
                os.makedirs(out_dir, exist_ok=True)
                path = os.path.join(out_dir, f"convergence_{key}.csv")
                _write_convergence_csv(path, cells, slab_counts, errors)
                results[key]["csv"] = path
            lines.extend(_render_table(f"{problem}  p={p}  nu={nu:.0e}",
                                       cells, slab_counts, errors, rates))
    if out_dir:
        with open(os.path.join(out_dir, "convergence_summary.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write("\n".join(lines))
    return results


# ---------------------------------------------------------------------------
# verification suites


def _zero_bc(tx, n):
    tx = np.asarray(tx, dtype=float)
    return np.zeros(tx.shape[:-1])


def _zero_beta_field(tx):
    tx = np.asarray(tx, dtype=float)
    return np.zeros(tx.shape[:-1] + (tx.shape[-1] - 1,))


def _const_beta_field(tx):
    tx = np.asarray(tx, dtype=float)
    out = np.empty(tx.shape[:-1] + (2,))
    out[..., 0] = 0.9
    out[..., 1] = -0.4
    return out


def _suite_trace_constants(seed):
    """Measured inequality constants across an affine refinement family.

    Cells and the slab height halve together, so each constant is scale
    invariant and should sit still as the family refines; the reported
    drift is (max - min) / min per constant and degree.
    """
    names = ("c_TQ", "c_T_dK", "c_I_t", "c_I_s")
    rows, result = [], {}
    deform = identity_deformation()
    for p in (1, 2, 3):
        per_name = {n: [] for n in names}
        for lvl in range(3):
            n = 4 * 2**lvl
            dt = 0.25 / 2**lvl
            mesh = uniform_grid(n, n, lo=DOMAIN_LO, hi=DOMAIN_HI, tag="N")
            slab = build_slab(mesh, deform, 0.0, dt, index=0)
            bases = make_slab_bases(p, p, 2)
            est = analysis.estimate_trace_constants(slab, bases)
            rows.append([lvl, n, f"{dt:.6g}", p] + [f"{est[k]:.8e}" for k in names])
            for k in names:
                per_name[k].append(float(est[k]))
        drift = {k: float(max(v) / min(v) - 1.0) for k, v in per_name.items()}
        result[f"p{p}"] = {"values": per_name, "drift": drift,
                           "max_drift": max(drift.values())}
    header = ["level", "cells_per_side", "dt", "p"] + list(names)
    return result, header, rows


def _suite_poincare(seed):
    """Sampled mean-value constant on a deforming mesh, two levels."""
    rows, result = [], {}
    deform = pulse_deformation(0.1)
    for p in (1, 2):
        cps = []
        for n, ns in ((4, 2), (8, 4)):
            mesh = uniform_grid(n, n, lo=DOMAIN_LO, hi=DOMAIN_HI, tag="N")
            slabs = build_slabs(mesh, deform, 0.0, 1.0, ns)
            bases = make_slab_bases(p, p, 2)
            rep = analysis.check_poincare(slabs, bases, n_samples=100, seed=seed)
            cps.append(float(rep["c_p"]))
            rows.append([p, n, ns, f"{rep['c_p']:.6e}", rep["n_samples"]])
        result[f"p{p}"] = {"c_p": cps, "drift_factor": float(max(cps) / min(cps))}
    header = ["p", "cells_per_side", "slabs", "c_p", "n_samples"]
    return result, header, rows


def _coercivity_families():
    """Three deliberately different settings for the Rayleigh sampling."""
    fams = []
    mesh = uniform_grid(4, 4, lo=DOMAIN_LO, hi=DOMAIN_HI, tag="D")
    prob = ProblemSpec(nu=1.0, beta=_zero_beta_field, d=2, bc_data=_zero_bc,
                       div_beta=_zero_scalar, name="static-diffusion")
    fams.append(("static-diffusion", mesh, identity_deformation(), prob, 10.0))

    mesh = uniform_grid(4, 4, lo=DOMAIN_LO, hi=DOMAIN_HI, tag="N")
    prob, deform = builtin_problem("rotating-pulse", nu=1e-2)
    fams.append(("deforming-advection", mesh, deform, prob, 2.0))

    mesh = uniform_grid(4, 2, lo=DOMAIN_LO, hi=DOMAIN_HI, tag="N")
    prob = ProblemSpec(nu=1e-3, beta=_const_beta_field, d=2, bc_data=_zero_bc,
                       div_beta=_zero_scalar, name="stretched-advection")
    fams.append(("stretched-advection", mesh, identity_deformation(), prob, 2.0))
    return fams


def _suite_coercivity(seed):
    """Minimum Rayleigh quotient over random fields, three mesh families.

    The penalty is pinned to a multiple of the measured trace constant
    squared, so positivity here ties the stability claim directly to the
    measured inequality rather than to a magic number.
    """
    rows, result = [], {}
    for p in (1, 2):
        for name, mesh, deform, prob, factor in _coercivity_families():
            bases = make_slab_bases(p, p, 2)
            slabs = build_slabs(mesh, deform, 0.0, 0.5, 2)
            est = analysis.estimate_trace_constants(slabs[0], bases, which=("c_TQ",))
            alpha = float(factor * est["c_TQ"] ** 2)
            ops = [assemble_slab(s, prob, bases, alpha) for s in slabs]
            rep = analysis.check_coercivity(ops, prob, n_samples=200, seed=seed)
            result[f"{name}_p{p}"] = {
                "c_c": float(rep["c_c"]), "alpha": alpha,
                "c_TQ": float(est["c_TQ"]),
                "alpha_over_cTQ2": float(alpha / est["c_TQ"] ** 2),
                "n_samples": rep["n_samples"],
                "positive": bool(rep["c_c"] > 0),
            }
            rows.append([name, p, f"{alpha:.6e}", f"{est['c_TQ']:.6e}",
                         f"{rep['c_c']:.6e}", rep["n_samples"]])
    header = ["family", "p", "alpha", "c_TQ", "c_c", "n_samples"]
    return result, header, rows


def _suite_boundedness(seed):
    """Largest sampled |a(x, y)| against the split norm pair, two levels."""
    rows, result = [], {}
    prob, deform = builtin_problem("rotating-pulse", nu=1e-2)
    for p in (1, 2):
        cbs = []
        for n, ns in ((4, 2), (8, 4)):
            mesh = uniform_grid(n, n, lo=DOMAIN_LO, hi=DOMAIN_HI, tag="N")
            bases = make_slab_bases(p, p, 2)
            slabs = build_slabs(mesh, deform, 0.0, 1.0, ns)
            alpha = resolve_alpha(p, slabs[0], bases)
            ops = [assemble_slab(s, prob, bases, alpha) for s in slabs]
            rep = analysis.check_boundedness(ops, prob, n_samples=100, seed=seed)
            cbs.append(float(rep["c_B"]))
            rows.append([p, n, ns, f"{rep['c_B']:.6e}", rep["n_samples"]])
        result[f"p{p}"] = {"c_B": cbs, "drift_factor": float(max(cbs) / min(cbs))}
    header = ["p", "cells_per_side", "slabs", "c_B", "n_samples"]
    return result, header, rows


def _suite_infsup(seed):
    """Sampled inf-sup ratios with the shifted time-derivative lift."""
    rows, result = [], {}
    prob, deform = builtin_problem("rotating-pulse", nu=1e-2)
    for p in (1, 2):
        mesh = uniform_grid(4, 4, lo=DOMAIN_LO, hi=DOMAIN_HI, tag="N")
        bases = make_slab_bases(p, p, 2)
        slabs = build_slabs(mesh, deform, 0.0, 0.5, 2)
        alpha = resolve_alpha(p, slabs[0], bases)
        ops = [assemble_slab(s, prob, bases, alpha) for s in slabs]
        rep = analysis.check_infsup(ops, prob, n_samples=50, seed=seed)
        result[f"p{p}"] = {"c_i": float(rep["c_i"]),
                           "all_positive": bool(rep["all_positive"]),
                           "max_c2": float(rep["max_c2"]),
                           "n_samples": rep["n_samples"]}
        rows.append([p, f"{rep['c_i']:.6e}", rep["all_positive"],
                     f"{rep['max_c2']:.0f}", rep["n_samples"]])
    header = ["p", "c_i", "all_positive", "max_c2", "n_samples"]
    return result, header, rows


def _suite_projection_rates(seed):
    """Observed approximation orders of the element L2 projection."""
    rows, result = [], {}
    exact = pulse_exact(1e-2)
    deform = pulse_deformation(0.1)
    levels = [(8, 8), (16, 16), (32, 32)]
    quantities = ("l2", "grad", "dt", "trace", "ngrad")
    for p in (1, 2):
        study = analysis.projection_rate_study(exact, deform, levels, p, p)
        result[f"p{p}"] = {name: study[name] for name in quantities}
        for name in quantities:
            st = study[name]
            rows.append([p, name, f"{st['rate']:.3f}", f"{st['expected']:.1f}",
                         f"{st['errors'][-1]:.6e}"])
    result["levels"] = [list(lv) for lv in levels]
    header = ["p", "quantity", "ls_rate", "expected", "finest_error"]
    return result, header, rows


_SUITE_FUNCS = {
    "trace-constants": _suite_trace_constants,
    "poincare": _suite_poincare,
    "coercivity": _suite_coercivity,
    "boundedness": _suite_boundedness,
    "infsup": _suite_infsup,
    "projection-rates": _suite_projection_rates,
}

VERIFY_SUITES = tuple(_SUITE_FUNCS)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def verify(suite: str = "all", out_dir=None, seed: int = 42) -> dict:
    """Run one named verification suite (or all of them).

    Each suite returns a result dict and, when ``out_dir`` is given,
    writes ``{suite}.csv`` with the raw rows and ``{suite}.json`` with
    the digested numbers.
    """
    if suite != "all" and suite not in _SUITE_FUNCS:
        raise ConfigError("suite: unknown name " + repr(suite) + "; pick from "
                          + ", ".join(VERIFY_SUITES + ("all",)))
    names = VERIFY_SUITES if suite == "all" else (suite,)
    out = {}
    for name in names:
        result, header, rows = _SUITE_FUNCS[name](seed)
        out[name] = result
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, f"{name}.csv"), "w", newline="",
                      encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(rows)
            with open(os.path.join(out_dir, f"{name}.json"), "w", encoding="utf-8") as fh:
                json.dump(result, fh, indent=2, sort_keys=True, default=_json_default)
                fh.write("\n")
    return out
