"""Spatial meshes, mesh motion, and space-time slab geometry.

Physical coordinates are ordered ``(t, x_1, ..., x_d)`` and reference
coordinates ``(tau, xi_1, ..., xi_d)``, all on ``[-1, 1]``.  A slab is the
extrusion of the deformed spatial mesh between two time levels: every
spatial cell (segment for d=1, counter-clockwise quadrilateral for d=2)
becomes a multilinear brick whose bottom corners are the cell vertices moved
to ``t0`` and whose top corners are the same vertices moved to ``t1``.
Because the time coordinate of the corners is constant per level, the time
component of the map is exactly ``t0 + (tau+1)/2 * dt`` and the bottom/top
faces are flat in time.

Local face numbering of an element: face 0 is the bottom (tau = -1), face 1
the top (tau = +1), and faces ``2 + 2*(i-1) + side`` fix the spatial
reference coordinate ``xi_i`` at -1 (side 0) or +1 (side 1).  Face
parameters: horizontal faces use ``(xi_1, ..., xi_d)``; vertical faces use
``(tau, s)`` where ``s`` runs over the remaining spatial coordinates in
increasing order.  Facet quadrature and facet unknowns always live on the
owner side's parametrization.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import MeshFormatError, NonPositiveJacobianError

DeformationMap = Callable[[float, np.ndarray], np.ndarray]

#: vertical facet kinds
INTERIOR = "interior"
DIRICHLET = "D"
NEUMANN = "N"

_VALID_TAGS = (DIRICHLET, NEUMANN)


def identity_deformation(t: float, x0: np.ndarray) -> np.ndarray:
    return np.asarray(x0, dtype=float)


# ---------------------------------------------------------------------------
# spatial meshes


@dataclass
class SpatialMesh:
    """Conforming segment (d=1) or quadrilateral (d=2) mesh.

    ``cells`` lists vertex ids; quadrilaterals are counter-clockwise
    ``(c0, c1, c2, c3)`` mapping to reference corners (-,-), (+,-), (+,+),
    (-,+).  ``bfacets``/``btags`` tag every boundary facet (a vertex for
    d=1, an edge for d=2) with 'D' (homogeneous Dirichlet) or 'N'
    (Neumann/inflow).
    """

    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    bfacets: np.ndarray
    btags: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.cells = np.asarray(self.cells, dtype=np.int64)
        self.bfacets = np.asarray(self.bfacets, dtype=np.int64)
        if self.bfacets.ndim == 1:
            self.bfacets = self.bfacets.reshape(-1, 1)
        self.btags = np.asarray(self.btags, dtype="U8")
        self._validate()

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    def _validate(self):
        d = self.dim
        if d not in (1, 2):
            raise MeshFormatError(f"unsupported spatial dimension {d}")
        if self.vertices.ndim != 2 or self.vertices.shape[1] != d:
            raise MeshFormatError("vertex array must have shape (nv, d)")
        if self.cells.ndim != 2 or self.cells.shape[1] != 2**d:
            raise MeshFormatError(f"cell array must have shape (nc, {2**d})")
        nv = self.n_vertices
        if self.cells.size and (self.cells.min() < 0 or self.cells.max() >= nv):
            raise MeshFormatError("cell vertex index out of range")
        if self.bfacets.shape[1] != 2 ** (d - 1):
            raise MeshFormatError("boundary facet array has wrong arity")
        if self.bfacets.size and (self.bfacets.min() < 0 or self.bfacets.max() >= nv):
            raise MeshFormatError("boundary facet vertex index out of range")
        if self.btags.shape[0] != self.bfacets.shape[0]:
            raise MeshFormatError("boundary tag count does not match facet count")
        for tag in self.btags:
            if tag not in _VALID_TAGS:
                raise MeshFormatError(f"unknown boundary tag {tag!r}")
        if d == 2:
            v = self.vertices[self.cells]  # (nc, 4, 2)
            x, y = v[..., 0], v[..., 1]
            area = 0.5 * np.sum(
                x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1
            )
            bad = np.nonzero(area <= 0)[0]
            if bad.size:
                raise MeshFormatError(
                    f"cell {bad[0]} is not counter-clockwise (signed area {area[bad[0]]:.3e})"
                )
        # boundary facets must coincide with the topological boundary
        counts: dict[tuple, int] = {}
        for edge in self._cell_facets().reshape(-1, 2 ** (d - 1)):
            key = tuple(sorted(edge.tolist()))
            counts[key] = counts.get(key, 0) + 1
        boundary_keys = {k for k, c in counts.items() if c == 1}
        over = {k for k, c in counts.items() if c > 2}
        if over:
            raise MeshFormatError(f"facet {next(iter(over))} shared by more than two cells")
        tagged = [tuple(sorted(f.tolist())) for f in self.bfacets]
        if len(set(tagged)) != len(tagged):
            raise MeshFormatError("duplicate boundary facet tag")
        if set(tagged) != boundary_keys:
            missing = boundary_keys - set(tagged)
            extra = set(tagged) - boundary_keys
            detail = f"untagged {sorted(missing)}" if missing else f"not on boundary {sorted(extra)}"
            raise MeshFormatError(f"boundary tags do not cover the boundary exactly: {detail}")

    def _cell_facets(self) -> np.ndarray:
        """Facets of every cell in local face order, shape (nc, 2d, 2^(d-1)).

        Vertex order within each facet follows the face parameter ``s``
        (ascending), which is what the facet orientation logic relies on.
        """
        c = self.cells
        if self.dim == 1:
            return np.stack([c[:, [0]], c[:, [1]]], axis=1)
        # faces 2..5 of the space-time element, spatial part
        return np.stack(
            [
                c[:, [0, 3]],  # xi_1 = -1, s = xi_2
                c[:, [1, 2]],  # xi_1 = +1
                c[:, [0, 1]],  # xi_2 = -1, s = xi_1
                c[:, [3, 2]],  # xi_2 = +1
            ],
            axis=1,
        )

    def boundary_tag_map(self) -> dict[tuple, str]:
        return {
            tuple(sorted(f.tolist())): str(t)
            for f, t in zip(self.bfacets, self.btags)
        }


def uniform_grid(nx: int, ny: Optional[int] = None, lo=None, hi=None, tag="N") -> SpatialMesh:
    """Uniform tensor grid on a box, default ``[-0.5, 0.5]^d``.

    ``tag`` is either a single boundary tag or a callable mapping the facet
    midpoint to a tag, so mixed Dirichlet/Neumann sides are easy to set up.
    """
    d = 1 if ny is None else 2
    if nx < 1 or (ny is not None and ny < 1):
        raise MeshFormatError("grid must have at least one cell per direction")
    lo = np.full(d, -0.5) if lo is None else np.asarray(lo, dtype=float)
    hi = np.full(d, 0.5) if hi is None else np.asarray(hi, dtype=float)
    if lo.shape != (d,) or hi.shape != (d,) or np.any(hi <= lo):
        raise MeshFormatError("invalid bounding box")
    tag_fn = tag if callable(tag) else (lambda mid, _t=tag: _t)

    if d == 1:
        xs = np.linspace(lo[0], hi[0], nx + 1)
        vertices = xs.reshape(-1, 1)
        cells = np.stack([np.arange(nx), np.arange(1, nx + 1)], axis=1)
        bfacets = np.array([[0], [nx]])
        btags = np.array([tag_fn(vertices[0]), tag_fn(vertices[nx])], dtype="U8")
        return SpatialMesh(1, vertices, cells, bfacets, btags)

    xs = np.linspace(lo[0], hi[0], nx + 1)
    ys = np.linspace(lo[1], hi[1], ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)  # index iy*(nx+1)+ix

    def vid(ix, iy):
        return iy * (nx + 1) + ix

    cells = np.empty((nx * ny, 4), dtype=np.int64)
    k = 0
    for iy in range(ny):
        for ix in range(nx):
            cells[k] = (vid(ix, iy), vid(ix + 1, iy), vid(ix + 1, iy + 1), vid(ix, iy + 1))
            k += 1
    edges = []
    for ix in range(nx):
        edges.append((vid(ix, 0), vid(ix + 1, 0)))
        edges.append((vid(ix, ny), vid(ix + 1, ny)))
    for iy in range(ny):
        edges.append((vid(0, iy), vid(0, iy + 1)))
        edges.append((vid(nx, iy), vid(nx, iy + 1)))
    bfacets = np.array(edges, dtype=np.int64)
    mids = 0.5 * (vertices[bfacets[:, 0]] + vertices[bfacets[:, 1]])
    btags = np.array([tag_fn(m) for m in mids], dtype="U8")
    return SpatialMesh(2, vertices, cells, bfacets, btags)


# ---------------------------------------------------------------------------
# mesh file format
#
# Plain text:  header "d nv nc nb", then nv vertex lines (d floats), nc cell
# lines (2^d vertex ids), nb boundary lines (2^(d-1) vertex ids + tag).
# '#' starts a comment; blank lines are ignored.


def read_mesh(path) -> SpatialMesh:
    with open(path, "r", encoding="utf-8") as fh:
        tokens_by_line = []
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                tokens_by_line.append(line.split())
    if not tokens_by_line:
        raise MeshFormatError(f"{path}: empty mesh file")
    header = tokens_by_line[0]
    if len(header) != 4:
        raise MeshFormatError(f"{path}: header must be 'd nv nc nb'")
    try:
        d, nv, nc, nb = (int(t) for t in header)
    except ValueError as exc:
        raise MeshFormatError(f"{path}: non-integer header field") from exc
    body = tokens_by_line[1:]
    if len(body) != nv + nc + nb:
        raise MeshFormatError(
            f"{path}: expected {nv + nc + nb} data lines, found {len(body)}"
        )
    try:
        vertices = np.array([[float(t) for t in line] for line in body[:nv]])
        cells = np.array(
            [[int(t) for t in line] for line in body[nv : nv + nc]], dtype=np.int64
        )
    except ValueError as exc:
        raise MeshFormatError(f"{path}: malformed vertex or cell line") from exc
    bfacets = []
    btags = []
    arity = 2 ** (d - 1) if d >= 1 else 0
    for line in body[nv + nc :]:
        if len(line) != arity + 1:
            raise MeshFormatError(f"{path}: boundary line needs {arity} ids and a tag")
        try:
            bfacets.append([int(t) for t in line[:arity]])
        except ValueError as exc:
            raise MeshFormatError(f"{path}: malformed boundary facet line") from exc
        btags.append(line[arity])
    if nv and vertices.shape != (nv, d):
        raise MeshFormatError(f"{path}: vertex lines must have {d} coordinates")
    if nc and cells.shape != (nc, 2**d):
        raise MeshFormatError(f"{path}: cell lines must have {2**d} vertex ids")
    bf = np.array(bfacets, dtype=np.int64).reshape(nb, arity)
    return SpatialMesh(d, vertices, cells, bf, np.array(btags, dtype="U8"))


def write_mesh(mesh: SpatialMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{mesh.dim} {mesh.n_vertices} {mesh.n_cells} {len(mesh.btags)}\n")
        for v in mesh.vertices:
            fh.write(" ".join(f"{c:.17g}" for c in v) + "\n")
        for c in mesh.cells:
            fh.write(" ".join(str(int(i)) for i in c) + "\n")
        for f, t in zip(mesh.bfacets, mesh.btags):
            fh.write(" ".join(str(int(i)) for i in f) + f" {t}\n")


# ---------------------------------------------------------------------------
# multilinear brick maps


@lru_cache(maxsize=None)
def _corner_signs(ndim: int) -> np.ndarray:
    """Corner sign pattern (+-1) in C order, shape (2^ndim, ndim)."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=ndim)))


def brick_shape(ref_pts: np.ndarray, ndim: int):
    """Multilinear shape functions and reference gradients.

    Returns ``N`` with shape (nq, 2^ndim) and ``dN`` with shape
    (nq, 2^ndim, ndim) for points on ``[-1, 1]^ndim``.
    """
    pts = np.asarray(ref_pts, dtype=float).reshape(-1, ndim)
    signs = _corner_signs(ndim)  # (na, ndim)
    # factors[q, a, k] = (1 + xi_k * sigma_ak) / 2
    factors = 0.5 * (1.0 + pts[:, None, :] * signs[None, :, :])
    N = np.prod(factors, axis=2)
    dN = np.empty((pts.shape[0], signs.shape[0], ndim))
    for k in range(ndim):
        others = [j for j in range(ndim) if j != k]
        partial = np.prod(factors[:, :, others], axis=2) if others else 1.0
        dN[:, :, k] = 0.5 * signs[None, :, k] * partial
    return N, dN


def map_points(nodes: np.ndarray, N: np.ndarray) -> np.ndarray:
    """Push reference points through element maps; nodes (..., 2^D, D)."""
    return np.einsum("qa,...ac->...qc", N, nodes)


def jacobians(nodes: np.ndarray, dN: np.ndarray) -> np.ndarray:
    """J[..., q, c, k] = d x_c / d xi_k at each point."""
    return np.einsum("qak,...ac->...qck", dN, nodes)


def embed_face(face: int, pts_f: np.ndarray, d: int) -> np.ndarray:
    """Lift face parameter points (nq, d) into element reference coords."""
    pts_f = np.asarray(pts_f, dtype=float).reshape(-1, d)
    nq = pts_f.shape[0]
    out = np.empty((nq, d + 1))
    if face < 2:
        out[:, 0] = -1.0 if face == 0 else 1.0
        out[:, 1:] = pts_f
        return out
    coord = (face - 2) // 2 + 1
    sign = -1.0 if face % 2 == 0 else 1.0
    out[:, 0] = pts_f[:, 0]
    cols = [c for c in range(1, d + 1) if c != coord]
    for j, c in enumerate(cols):
        out[:, c] = pts_f[:, 1 + j]
    out[:, coord] = sign
    return out


def face_coord_sign(face: int) -> tuple[int, float]:
    """Fixed reference coordinate index and its value for a local face."""
    if face < 2:
        return 0, (-1.0 if face == 0 else 1.0)
    return (face - 2) // 2 + 1, (-1.0 if face % 2 == 0 else 1.0)


def face_geometry(nodes: np.ndarray, face: int, pts_f: np.ndarray, d: int) -> dict:
    """Geometry of one local face for a batch of elements.

    ``nodes``: (E, 2^(d+1), d+1).  Returns physical points, space-time
    Jacobians and inverses, the unit outward normal (via the cofactor
    formula, so bottom/top faces get exactly (-+1, 0, ...)), and the surface
    measure factor pairing with the reference face quadrature weights.
    """
    coord, sign = face_coord_sign(face)
    P = embed_face(face, pts_f, d)
    N, dN = brick_shape(P, d + 1)
    x = map_points(nodes, N)
    J = jacobians(nodes, dN)
    detJ = np.linalg.det(J)
    if np.any(detJ <= 0):
        e, q = np.argwhere(detJ <= 0)[0]
        raise NonPositiveJacobianError(e, P[q], detJ[e, q])
    Jinv = np.linalg.inv(J)
    nt = sign * detJ[..., None] * Jinv[..., coord, :]
    measure = np.linalg.norm(nt, axis=-1)
    normal = nt / measure[..., None]
    return {"x": x, "J": J, "Jinv": Jinv, "detJ": detJ, "normal": normal, "measure": measure}


def volume_geometry(nodes: np.ndarray, pts: np.ndarray, d: int, check=True) -> dict:
    """Physical points, Jacobians, inverses and determinants in the volume."""
    N, dN = brick_shape(pts, d + 1)
    x = map_points(nodes, N)
    J = jacobians(nodes, dN)
    detJ = np.linalg.det(J)
    if check and np.any(detJ <= 0):
        e, q = np.argwhere(detJ <= 0)[0]
        raise NonPositiveJacobianError(e, np.asarray(pts).reshape(-1, d + 1)[q], detJ[e, q])
    Jinv = np.linalg.inv(J)
    return {"x": x, "J": J, "Jinv": Jinv, "detJ": detJ}


# ---------------------------------------------------------------------------
# space-time slabs


@dataclass
class SpaceTimeSlab:
    """One space-time slab: deformed mesh extruded between t0 and t1."""

    index: int
    t0: float
    t1: float
    mesh: SpatialMesh
    nodes: np.ndarray  # (nc, 2^(d+1), d+1), corner order (i_tau, i_1, ..., i_d) C-flat
    vf_owner: np.ndarray
    vf_oface: np.ndarray
    vf_neigh: np.ndarray  # -1 on boundary facets
    vf_nface: np.ndarray
    vf_flip: np.ndarray
    vf_kind: np.ndarray  # 'interior' / 'D' / 'N'
    h: np.ndarray  # circumradius-convention element diameter at mid-time
    rho: np.ndarray
    _groups: dict = field(default_factory=dict, repr=False)

    @property
    def d(self) -> int:
        return self.mesh.dim

    @property
    def dt(self) -> float:
        return self.t1 - self.t0

    @property
    def n_elements(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_vertical_facets(self) -> int:
        return self.vf_owner.shape[0]

    def vertical_groups(self) -> dict:
        """Facet ids grouped by (owner face, neighbor face, flipped)."""
        if not self._groups:
            keys = list(zip(self.vf_oface.tolist(), self.vf_nface.tolist(), self.vf_flip.tolist()))
            groups: dict[tuple, list] = {}
            for i, k in enumerate(keys):
                groups.setdefault(k, []).append(i)
            self._groups = {k: np.array(v, dtype=np.int64) for k, v in sorted(groups.items())}
        return self._groups

    def element(self, e: int) -> "ElementGeometry":
        return ElementGeometry(self, int(e))


@dataclass
class ElementGeometry:
    """View of one element of a slab, for point-wise geometry queries."""

    slab: SpaceTimeSlab
    e: int

    @property
    def nodes(self) -> np.ndarray:
        return self.slab.nodes[self.e]

    @property
    def h(self) -> float:
        return float(self.slab.h[self.e])

    @property
    def rho(self) -> float:
        return float(self.slab.rho[self.e])

    @property
    def dt(self) -> float:
        return self.slab.dt

    @property
    def d(self) -> int:
        return self.slab.d


def map_to_physical(elem: ElementGeometry, ref_pts: np.ndarray):
    """Map reference points of one element; returns (x, J, detJ)."""
    g = volume_geometry(elem.nodes[None], ref_pts, elem.d, check=False)
    return g["x"][0], g["J"][0], g["detJ"][0]


def facet_normal(elem: ElementGeometry, face: int, pts_f: np.ndarray):
    """Unit outward space-time normal and surface measure factor on a face."""
    g = face_geometry(elem.nodes[None], face, pts_f, elem.d)
    return g["normal"][0], g["measure"][0]


def _spatial_tensor_order(d: int) -> list[int]:
    # cell corner ids reordered to tensor (i_1, ..., i_d) C order
    if d == 1:
        return [0, 1]
    return [0, 3, 1, 2]


def build_slab(
    mesh: SpatialMesh,
    deform: Optional[DeformationMap],
    t0: float,
    dt: float,
    index: int = 0,
    check: bool = True,
) -> SpaceTimeSlab:
    """Extrude the deformed mesh between ``t0`` and ``t0 + dt``.

    Facet adjacency, orientation flags, and the mid-time size metrics
    ``h`` (circumradius of the directional-average-edge brick) and ``rho``
    (inradius) are precomputed here.  With ``check=True`` the Jacobian
    determinant is sampled on a tensor grid and must be positive.
    """
    if dt <= 0:
        raise MeshFormatError(f"slab height must be positive, got {dt}")
    d = mesh.dim
    deform = deform or identity_deformation
    t1 = t0 + dt
    xb = np.asarray(deform(t0, mesh.vertices), dtype=float)
    xt = np.asarray(deform(t1, mesh.vertices), dtype=float)
    if xb.shape != mesh.vertices.shape or xt.shape != mesh.vertices.shape:
        raise MeshFormatError("deformation map must preserve the vertex array shape")

    order = _spatial_tensor_order(d)
    corners = mesh.cells[:, order]  # (nc, 2^d) in spatial tensor order
    nc = mesh.n_cells
    na = 2 ** (d + 1)
    nodes = np.empty((nc, na, d + 1))
    for level, (tlev, xlev) in enumerate(((t0, xb), (t1, xt))):
        sl = slice(level * 2**d, (level + 1) * 2**d)
        nodes[:, sl, 0] = tlev
        nodes[:, sl, 1:] = xlev[corners]

    # vertical facet adjacency
    cell_facets = mesh._cell_facets()  # (nc, 2d, 2^(d-1)) ordered along +s
    by_key: dict[tuple, list] = {}
    for e in range(nc):
        for lf in range(2 * d):
            edge = cell_facets[e, lf]
            key = tuple(sorted(edge.tolist()))
            by_key.setdefault(key, []).append((e, lf + 2, tuple(edge.tolist())))
    tag_map = mesh.boundary_tag_map()
    owner, oface, neigh, nface, flip, kind = [], [], [], [], [], []
    for key in sorted(by_key):
        sides = by_key[key]
        if len(sides) == 2:
            sides.sort()  # owner = lower element id
            (e0, f0, edge0), (e1, f1, edge1) = sides
            if edge1 == edge0:
                fl = False
            elif edge1 == edge0[::-1]:
                fl = True
            else:  # pragma: no cover - valid sorted keys guarantee one branch
                raise MeshFormatError(f"nonconforming facet {key}")
            owner.append(e0), oface.append(f0), neigh.append(e1), nface.append(f1)
            flip.append(fl), kind.append(INTERIOR)
        else:
            (e0, f0, _) = sides[0]
            owner.append(e0), oface.append(f0), neigh.append(-1), nface.append(-1)
            flip.append(False), kind.append(tag_map[key])

    mid = 0.5 * (nodes[:, : 2**d, 1:] + nodes[:, 2**d :, 1:])  # (nc, 2^d, d)
    hdir = np.empty((nc, d))
    for i in range(d):
        stride = 2 ** (d - 1 - i)
        idx = np.arange(2**d)
        lowers = idx[(idx // stride) % 2 == 0]
        lengths = np.linalg.norm(mid[:, lowers + stride] - mid[:, lowers], axis=2)
        hdir[:, i] = lengths.mean(axis=1)
    h = 0.5 * np.sqrt(np.sum(hdir**2, axis=1))
    rho = 0.5 * hdir.min(axis=1)

    slab = SpaceTimeSlab(
        index=index,
        t0=float(t0),
        t1=float(t1),
        mesh=mesh,
        nodes=nodes,
        vf_owner=np.array(owner, dtype=np.int64),
        vf_oface=np.array(oface, dtype=np.int64),
        vf_neigh=np.array(neigh, dtype=np.int64),
        vf_nface=np.array(nface, dtype=np.int64),
        vf_flip=np.array(flip, dtype=bool),
        vf_kind=np.array(kind, dtype="U8"),
        h=h,
        rho=rho,
    )
    if check:
        s = np.linspace(-1.0, 1.0, 4)
        grids = np.meshgrid(*([s] * (d + 1)), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        volume_geometry(nodes, pts, d, check=True)
    return slab


def build_slabs(
    mesh: SpatialMesh,
    deform: Optional[DeformationMap],
    t_start: float,
    t_final: float,
    n_slabs: int,
    check: bool = True,
) -> list[SpaceTimeSlab]:
    """Uniform slab sequence covering [t_start, t_final]."""
    if n_slabs < 1:
        raise MeshFormatError("need at least one slab")
    dt = (t_final - t_start) / n_slabs
    return [
        build_slab(mesh, deform, t_start + n * dt, dt, index=n, check=check)
        for n in range(n_slabs)
    ]


def mesh_metrics(slab: SpaceTimeSlab, sample: int = 4) -> dict:
    """Size and shape-regularity report for one slab."""
    s = np.linspace(-1.0, 1.0, sample)
    grids = np.meshgrid(*([s] * (slab.d + 1)), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    g = volume_geometry(slab.nodes, pts, slab.d, check=False)
    return {
        "n_elements": slab.n_elements,
        "dt": slab.dt,
        "h_min": float(slab.h.min()),
        "h_max": float(slab.h.max()),
        "rho_min": float(slab.rho.min()),
        "aspect_max": float((slab.h / slab.rho).max()),
        "detJ_min": float(g["detJ"].min()),
        "detJ_max": float(g["detJ"].max()),
    }


# ---------------------------------------------------------------------------
# VTK legacy export


_VTK_PERM_2D = [0, 2, 3, 1]  # spatial tensor order -> CCW quad


def write_vtk(path, slab: SpaceTimeSlab, point_data: Optional[dict] = None,
              cell_data: Optional[dict] = None) -> None:
    """Write one slab as legacy-ASCII unstructured VTK.

    d=2 slabs become hexahedra in (x1, x2, t) coordinates; d=1 slabs become
    quads in (x, t).  ``point_data`` maps names to per-element corner values
    with shape (n_elements, 2^(d+1)) in the slab's corner order; points are
    duplicated per element so discontinuous fields render faithfully.
    """
    d = slab.d
    nc = slab.n_elements
    na = 2 ** (d + 1)
    if d == 2:
        perm = _VTK_PERM_2D
        conn = perm + [4 + p for p in perm]
        ctype = 12  # hexahedron
        coords = slab.nodes[:, :, [1, 2, 0]]  # (x1, x2, t)
    else:
        conn = [0, 1, 3, 2]
        ctype = 9  # quad
        coords = np.zeros((nc, na, 3))
        coords[:, :, 0] = slab.nodes[:, :, 1]
        coords[:, :, 1] = slab.nodes[:, :, 0]
    pts = coords.reshape(-1, 3)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"space-time slab {slab.index} t in [{slab.t0:.6g}, {slab.t1:.6g}]\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {pts.shape[0]} double\n")
        for p in pts:
            fh.write(f"{p[0]:.16g} {p[1]:.16g} {p[2]:.16g}\n")
        fh.write(f"CELLS {nc} {nc * (na + 1)}\n")
        for e in range(nc):
            ids = " ".join(str(e * na + c) for c in conn)
            fh.write(f"{na} {ids}\n")
        fh.write(f"CELL_TYPES {nc}\n")
        for _ in range(nc):
            fh.write(f"{ctype}\n")
        if point_data:
            fh.write(f"POINT_DATA {pts.shape[0]}\n")
            for name, values in point_data.items():
                vals = np.asarray(values, dtype=float).reshape(nc * na)
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in vals:
                    fh.write(f"{v:.16g}\n")
        if cell_data:
            fh.write(f"CELL_DATA {nc}\n")
            for name, values in cell_data.items():
                vals = np.asarray(values, dtype=float).reshape(nc)
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in vals:
                    fh.write(f"{v:.16g}\n")
