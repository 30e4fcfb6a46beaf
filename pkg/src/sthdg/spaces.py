"""Tensor-product modal Legendre spaces and Gauss-Legendre quadrature.

Discrete fields live on reference elements: element unknowns are spanned by
``L_{m_t}(tau) * L_{m_1}(xi_1) * ... * L_{m_d}(xi_d)`` with ``m_t <= p_t``
and ``m_i <= p_s``; facet unknowns use the matching trace spaces (time x
tangential on vertical facets, purely spatial on bottom/top facets).  The
basis is plain (unnormalized) Legendre, so the constant mode has coefficient
equal to the mean-weighted value and reference Gram matrices are diagonal.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import legendre as npleg

from . import geometry
from .errors import SingularMassError, UnsupportedDegreeError

MAX_DEGREE = 4


@lru_cache(maxsize=None)
def gauss_rule(q: int):
    """1D Gauss-Legendre rule with q points, exact through degree 2q-1."""
    if q < 1:
        raise UnsupportedDegreeError(f"quadrature order must be >= 1, got {q}")
    x, w = npleg.leggauss(q)
    return x, w


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre rule on [-1, 1]^ndim."""

    q: int
    ndim: int
    points: np.ndarray  # (n, ndim)
    weights: np.ndarray  # (n,)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


@lru_cache(maxsize=None)
def tensor_rule(q: int, ndim: int) -> QuadratureRule:
    x, w = gauss_rule(q)
    grids = np.meshgrid(*([x] * ndim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*([w] * ndim), indexing="ij")
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(q=q, ndim=ndim, points=pts, weights=wts)


def default_order(p_t: int, p_s: int) -> int:
    """Assembly quadrature order: max degree plus a two-point margin."""
    return max(p_t, p_s) + 2


def legendre_table(x: np.ndarray, p: int):
    """Values and derivatives of L_0..L_p at the given points.

    Derivatives follow the recurrence L'_{k} = L'_{k-2} + (2k-1) L_{k-1}.
    """
    x = np.asarray(x, dtype=float).ravel()
    V = npleg.legvander(x, p)
    D = np.zeros_like(V)
    if p >= 1:
        D[:, 1] = 1.0
    for k in range(2, p + 1):
        D[:, k] = D[:, k - 2] + (2 * k - 1) * V[:, k - 1]
    return V, D


def _check_degree(name: str, p: int):
    if not (0 <= int(p) <= MAX_DEGREE):
        raise UnsupportedDegreeError(f"{name} must be in [0, {MAX_DEGREE}], got {p}")


def _tensor_modes(degrees: tuple[int, ...]) -> np.ndarray:
    return np.array(list(itertools.product(*(range(p + 1) for p in degrees))), dtype=np.int64)


def _tensor_eval(pts: np.ndarray, degrees: tuple[int, ...], modes: np.ndarray,
                 grad: bool = False):
    pts = np.asarray(pts, dtype=float)
    ndim = len(degrees)
    pts = pts.reshape(-1, ndim)
    tables = [legendre_table(pts[:, k], degrees[k]) for k in range(ndim)]
    V = np.ones((pts.shape[0], modes.shape[0]))
    for k in range(ndim):
        V *= tables[k][0][:, modes[:, k]]
    if not grad:
        return V
    G = np.empty((pts.shape[0], modes.shape[0], ndim))
    for k in range(ndim):
        Gk = tables[k][1][:, modes[:, k]]
        for j in range(ndim):
            if j != k:
                Gk = Gk * tables[j][0][:, modes[:, j]]
        G[:, :, k] = Gk
    return V, G


@dataclass(frozen=True)
class BasisSet:
    """Element basis Q(p_t, p_s) on the reference brick [-1,1]^(d+1)."""

    p_t: int
    p_s: int
    d: int

    @property
    def degrees(self) -> tuple[int, ...]:
        return (self.p_t,) + (self.p_s,) * self.d

    @property
    def modes(self) -> np.ndarray:
        return _modes_cached(self.degrees)

    @property
    def n_modes(self) -> int:
        return (self.p_t + 1) * (self.p_s + 1) ** self.d

    def eval(self, pts: np.ndarray) -> np.ndarray:
        return _tensor_eval(pts, self.degrees, self.modes)

    def eval_with_grad(self, pts: np.ndarray):
        return _tensor_eval(pts, self.degrees, self.modes, grad=True)


@dataclass(frozen=True)
class FacetBasisSet:
    """Facet trace basis.

    ``kind='vertical'`` spans time x tangential directions with parameters
    ``(tau, s_1, ..., s_{d-1})``; ``kind='horizontal'`` spans the spatial
    directions of a bottom/top facet with parameters ``(xi_1, ..., xi_d)``.
    """

    kind: str
    p_t: int
    p_s: int
    d: int

    @property
    def degrees(self) -> tuple[int, ...]:
        if self.kind == "vertical":
            return (self.p_t,) + (self.p_s,) * (self.d - 1)
        return (self.p_s,) * self.d

    @property
    def modes(self) -> np.ndarray:
        return _modes_cached(self.degrees)

    @property
    def n_modes(self) -> int:
        return int(np.prod([p + 1 for p in self.degrees]))

    def eval(self, pts: np.ndarray) -> np.ndarray:
        return _tensor_eval(pts, self.degrees, self.modes)


@lru_cache(maxsize=None)
def _modes_cached(degrees: tuple[int, ...]) -> np.ndarray:
    m = _tensor_modes(degrees)
    m.setflags(write=False)
    return m


def make_basis(p_t: int, p_s: int, d: int) -> BasisSet:
    _check_degree("p_t", p_t)
    _check_degree("p_s", p_s)
    if d not in (1, 2):
        raise UnsupportedDegreeError(f"spatial dimension must be 1 or 2, got {d}")
    return BasisSet(p_t=int(p_t), p_s=int(p_s), d=int(d))


def make_vertical_facet_basis(p_t: int, p_s: int, d: int) -> FacetBasisSet:
    _check_degree("p_t", p_t)
    _check_degree("p_s", p_s)
    return FacetBasisSet(kind="vertical", p_t=int(p_t), p_s=int(p_s), d=int(d))


def make_horizontal_facet_basis(p_s: int, d: int) -> FacetBasisSet:
    _check_degree("p_s", p_s)
    return FacetBasisSet(kind="horizontal", p_t=0, p_s=int(p_s), d=int(d))


def time_derivative_matrix(basis: BasisSet) -> np.ndarray:
    """Matrix of d/dtau on modal coefficients (reference time derivative)."""
    p_t = basis.p_t
    D1 = np.zeros((p_t + 1, p_t + 1))
    for k in range(p_t + 1):
        for j in range(k - 1, -1, -2):
            D1[j, k] = 2 * j + 1
    modes = basis.modes
    n = basis.n_modes
    D = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            if np.array_equal(modes[a, 1:], modes[b, 1:]):
                D[a, b] = D1[modes[a, 0], modes[b, 0]]
    return D


# ---------------------------------------------------------------------------
# L2 projections


def _solve_spd_batch(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMassError(str(exc)) from exc


def project_elements(
    f: Callable[[np.ndarray], np.ndarray],
    slab: geometry.SpaceTimeSlab,
    basis: BasisSet,
    quad: Optional[QuadratureRule] = None,
    elems: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Element-wise L2 projection of ``f(tx)`` onto the mapped basis.

    Returns coefficients with shape (n_elements, n_modes).  The projection
    is defined by orthogonality of the residual against every basis
    function in the physical (deformed) inner product.
    """
    quad = quad or tensor_rule(default_order(basis.p_t, basis.p_s) + 1, slab.d + 1)
    nodes = slab.nodes if elems is None else slab.nodes[np.asarray(elems)]
    g = geometry.volume_geometry(nodes, quad.points, slab.d, check=False)
    V = basis.eval(quad.points)
    w = quad.weights[None, :] * g["detJ"]
    M = np.einsum("eq,qi,qj->eij", w, V, V)
    vals = np.asarray(f(g["x"]), dtype=float)
    b = np.einsum("eq,qi->ei", w * vals, V)
    return _solve_spd_batch(M, b[..., None])[..., 0]


def project_element(
    f: Callable[[np.ndarray], np.ndarray],
    elem: geometry.ElementGeometry,
    basis: BasisSet,
    quad: Optional[QuadratureRule] = None,
) -> np.ndarray:
    """Single-element convenience wrapper around :func:`project_elements`."""
    return project_elements(f, elem.slab, basis, quad, elems=np.array([elem.e]))[0]


def project_facet(
    f: Callable[[np.ndarray], np.ndarray],
    slab: geometry.SpaceTimeSlab,
    kind: str,
    fid: int,
    fbasis: FacetBasisSet,
    quad: Optional[QuadratureRule] = None,
) -> np.ndarray:
    """Facet L2 projection of ``f(tx)``; ``kind`` in {vertical, bottom, top}.

    Vertical facets are parametrized from the owner side; bottom/top facets
    by the spatial reference coordinates of the element below/above.
    """
    quad = quad or tensor_rule(default_order(fbasis.p_t, fbasis.p_s) + 1, slab.d)
    if kind == "vertical":
        e = int(slab.vf_owner[fid])
        face = int(slab.vf_oface[fid])
    elif kind == "bottom":
        e, face = int(fid), 0
    elif kind == "top":
        e, face = int(fid), 1
    else:
        raise ValueError(f"unknown facet kind {kind!r}")
    g = geometry.face_geometry(slab.nodes[e : e + 1], face, quad.points, slab.d)
    L = fbasis.eval(quad.points)
    w = quad.weights[None, :] * g["measure"]
    M = np.einsum("eq,qi,qj->eij", w, L, L)[0]
    vals = np.asarray(f(g["x"]), dtype=float).reshape(1, -1)
    b = np.einsum("eq,qi->ei", w * vals, L)[0]
    return _solve_spd_batch(M, b)
