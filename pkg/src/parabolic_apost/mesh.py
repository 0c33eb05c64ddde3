"""Conforming triangulations of the square [-1, 1]^2 and their red refinements.

Meshes are produced by :func:`uniform_square_mesh`, which caches every level
so that all meshes of one hierarchy share their ancestors.  Children of
coarse triangle ``t`` are the fine triangles ``4t .. 4t+3`` and the vertices
of a refined mesh are ordered as "coarse vertices first, then one midpoint per
coarse edge".  Both facts are used to transfer data between levels.
"""

from __future__ import annotations

import functools
import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse as sp

MAX_LEVEL = 12


class MeshError(Exception):
    """Base class for mesh related failures."""


class MeshCapacityError(MeshError):
    """Requested mesh is larger than the memory guard allows."""


class MeshIncompatibleError(MeshError):
    """Two meshes do not belong to the same nested hierarchy."""


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(eq=False)
class TriangleMesh:
    """Immutable conforming triangulation.

    Parameters
    ----------
    vertices : (V, 2) array
    triangles : (T, 3) int array, counterclockwise
    level : int
        Number of red refinements applied to the base mesh.
    parent_mesh : TriangleMesh or None
        The mesh this one was refined from.
    parent : (T,) int array or None
        Index of the parent triangle in ``parent_mesh``.
    midpoint_parents : (V - V_parent, 2) int array or None
        Endpoints (in ``parent_mesh``) of the edge whose midpoint created each
        new vertex.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    level: int = 0
    parent_mesh: "TriangleMesh | None" = field(default=None, repr=False)
    parent: np.ndarray | None = field(default=None, repr=False)
    midpoint_parents: np.ndarray | None = field(default=None, repr=False)
    base_key: str = field(default="", repr=False)

    def __post_init__(self):
        self.vertices = _frozen(self.vertices, float)
        self.triangles = _frozen(self.triangles, np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be a (V, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be a (T, 3) array")
        if len(self.triangles) == 0:
            raise MeshError("empty mesh")
        if not self.base_key:
            h = hashlib.sha1(self.vertices.tobytes() + self.triangles.tobytes())
            self.base_key = h.hexdigest()
        self._build_topology()

    def _build_topology(self):
        tri = self.triangles
        ntri = len(tri)
        # local edge k is opposite to local vertex k: (1,2), (2,0), (0,1)
        starts = tri[:, [1, 2, 0]].ravel()
        ends = tri[:, [2, 0, 1]].ravel()
        lo = np.minimum(starts, ends)
        hi = np.maximum(starts, ends)
        keys = np.stack([lo, hi], axis=1)
        edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                           return_counts=True)
        inverse = inverse.ravel()
        if counts.max() > 2:
            raise MeshError("non-manifold edge found")
        owner = np.repeat(np.arange(ntri), 3)
        # an edge traversed start->end in a CCW triangle has that triangle on its left
        forward = starts == lo
        left = np.full(len(edges), -1, dtype=np.int64)
        right = np.full(len(edges), -1, dtype=np.int64)
        left[inverse[forward]] = owner[forward]
        right[inverse[~forward]] = owner[~forward]
        if np.any(counts == 2) and (np.any(left[counts == 2] < 0)
                                    or np.any(right[counts == 2] < 0)):
            raise MeshError("inconsistent triangle orientation")

        self.edges = _frozen(edges, np.int64)
        self.tri_edges = _frozen(inverse.reshape(ntri, 3), np.int64)
        interior = counts == 2
        self.edge_is_interior = _frozen(interior, bool)
        # boundary edges keep their single triangle on the left
        bnd_left = np.where(left >= 0, left, right)
        self.edge_left = _frozen(np.where(interior, left, bnd_left), np.int64)
        self.edge_right = _frozen(np.where(interior, right, -1), np.int64)

        # interior edges stored as (a, b) with the left triangle seeing a->b CCW
        ie = np.flatnonzero(interior)
        self.interior_edge_ids = _frozen(ie, np.int64)
        self.interior_edges = _frozen(edges[ie], np.int64)
        self.interior_left = _frozen(left[ie], np.int64)
        self.interior_right = _frozen(right[ie], np.int64)

        flags = np.zeros(len(self.vertices), dtype=bool)
        flags[edges[~interior].ravel()] = True
        self.boundary_vertex_flags = _frozen(flags, bool)

        p = self.vertices[tri]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        if np.any(area <= 0):
            raise MeshError("triangles must have positive signed area")
        self.areas = _frozen(area, float)
        d = self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]]
        self.edge_lengths = _frozen(np.hypot(d[:, 0], d[:, 1]), float)
        self.element_diameters = _frozen(self.edge_lengths[self.tri_edges].max(axis=1), float)

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def h(self):
        """Per-element meshsize function (element diameters)."""
        return self.element_diameters

    def edge_normals(self):
        """Unit normals of the interior edges pointing out of the left triangle."""
        a = self.vertices[self.interior_edges[:, 0]]
        b = self.vertices[self.interior_edges[:, 1]]
        d = b - a
        # CCW left triangle: the outward normal is the tangent rotated clockwise
        n = np.stack([d[:, 1], -d[:, 0]], axis=1)
        return n / np.hypot(n[:, 0], n[:, 1])[:, None]

    def euler_characteristic(self):
        return self.num_vertices - self.num_edges + self.num_triangles

    def __str__(self):
        return (f"TriangleMesh(level={self.level}, vertices={self.num_vertices}, "
                f"triangles={self.num_triangles})")


def square_base_mesh():
    """Level-0 mesh: [-1,1]^2 split by the diagonal from (-1,-1) to (1,1)."""
    vertices = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    triangles = np.array([[0, 1, 2], [0, 2, 3]])
    return TriangleMesh(vertices, triangles, level=0)


def red_refine(mesh):
    """Regular 1-to-4 refinement by connecting the edge midpoints."""
    nv = mesh.num_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    a, b, c = mesh.triangles.T
    # midpoints opposite to local vertex 0, 1, 2
    m_bc, m_ca, m_ab = (nv + mesh.tri_edges).T
    children = np.stack([
        np.stack([a, m_ab, m_ca], axis=1),
        np.stack([m_ab, b, m_bc], axis=1),
        np.stack([m_ca, m_bc, c], axis=1),
        np.stack([m_ab, m_bc, m_ca], axis=1),
    ], axis=1).reshape(-1, 3)
    parent = np.repeat(np.arange(mesh.num_triangles), 4)
    return TriangleMesh(vertices, children, level=mesh.level + 1, parent_mesh=mesh,
                        parent=parent, midpoint_parents=mesh.edges.copy(),
                        base_key=mesh.base_key)


@functools.lru_cache(maxsize=None)
def uniform_square_mesh(level):
    """Uniform mesh of [-1,1]^2 after ``level`` red refinements of the base mesh."""
    level = int(level)
    if level < 0:
        raise ValueError("level must be nonnegative")
    if level > MAX_LEVEL:
        raise MeshCapacityError(f"level {level} exceeds the guard of {MAX_LEVEL}")
    if level == 0:
        return square_base_mesh()
    return red_refine(uniform_square_mesh(level - 1))


def mesh_size_max(mesh):
    """Largest element diameter."""
    return float(mesh.element_diameters.max())


def _chain(fine, coarse):
    """Meshes from ``fine`` up to (excluding) ``coarse`` following ``parent_mesh``."""
    if fine.base_key != coarse.base_key or fine.level < coarse.level:
        raise MeshIncompatibleError("meshes are not members of one nested hierarchy")
    out = []
    m = fine
    while m.level > coarse.level:
        out.append(m)
        m = m.parent_mesh
        if m is None:
            raise MeshIncompatibleError("refinement history is incomplete")
    if m is not coarse and not (np.array_equal(m.vertices, coarse.vertices)
                                and np.array_equal(m.triangles, coarse.triangles)):
        raise MeshIncompatibleError("meshes are not members of one nested hierarchy")
    return out


def finer_coarser(a, b):
    """Return ``(fine, coarse)`` for two nested meshes."""
    if a.base_key != b.base_key:
        raise MeshIncompatibleError("meshes are not members of one nested hierarchy")
    return (a, b) if a.level >= b.level else (b, a)


def ancestor_map(fine, coarse):
    """Index of the coarse triangle containing each fine triangle."""
    idx = np.arange(fine.num_triangles)
    for m in _chain(fine, coarse):
        idx = m.parent[idx]
    return idx


def vertex_prolongation(coarse, fine):
    """Sparse (V_fine x V_coarse) matrix of nodal P1 interpolation weights."""
    chain = _chain(fine, coarse)
    P = sp.identity(coarse.num_vertices, format="csr")
    for m in reversed(chain):
        nc = m.parent_mesh.num_vertices
        nnew = m.num_vertices - nc
        rows = np.concatenate([np.arange(nc), np.repeat(np.arange(nc, m.num_vertices), 2)])
        cols = np.concatenate([np.arange(nc), m.midpoint_parents.ravel()])
        vals = np.concatenate([np.ones(nc), np.full(2 * nnew, 0.5)])
        step = sp.csr_matrix((vals, (rows, cols)), shape=(m.num_vertices, nc))
        P = step @ P
    return P.tocsr()


@dataclass(frozen=True)
class EdgeSets:
    """Interior edge sets of two consecutive meshes.

    ``sigma`` holds the interior edges of the current mesh.  The other two
    sets are expressed as edges of the finer mesh (the coarser skeleton is a
    union of fine edges for nested meshes).  Edges are ``(k, 2, 2)`` arrays of
    endpoint coordinates; ``hat_index``/``check_index`` index the fine mesh's
    interior edges and ``coarse_h`` gives, per fine interior edge, the coarse
    length scale used for ``max(h_n, h_{n-1})``.
    """

    sigma: np.ndarray
    sigma_hat: np.ndarray
    sigma_check_minus_hat: np.ndarray
    fine: TriangleMesh
    coarse: TriangleMesh
    hat_index: np.ndarray
    check_index: np.ndarray
    coarse_h: np.ndarray

    @staticmethod
    def measure(edges):
        d = edges[:, 1] - edges[:, 0]
        return float(np.hypot(d[:, 0], d[:, 1]).sum())


def _edge_coords(mesh, ids):
    return mesh.vertices[mesh.interior_edges[ids]]


def coarse_skeleton_lookup(fine, coarse, tol=1e-12):
    """Locate the fine interior edges on the coarse skeleton.

    Returns ``(coarse_edge, coarse_h)``: the global coarse edge containing each
    fine interior edge (-1 if the fine edge crosses the interior of a coarse
    triangle), and the coarse length scale (that edge's length, or the
    ancestor's diameter otherwise).
    """
    anc = ancestor_map(fine, coarse)
    t = anc[fine.interior_left]
    p = fine.vertices[fine.interior_edges[:, 0]]
    q = fine.vertices[fine.interior_edges[:, 1]]
    found = np.full(len(t), -1, dtype=np.int64)
    scale = coarse.element_diameters[t]
    for k in range(3):
        e = coarse.tri_edges[t, k]
        a = coarse.vertices[coarse.edges[e, 0]]
        d = coarse.vertices[coarse.edges[e, 1]] - a
        cp = d[:, 0] * (p - a)[:, 1] - d[:, 1] * (p - a)[:, 0]
        cq = d[:, 0] * (q - a)[:, 1] - d[:, 1] * (q - a)[:, 0]
        on = (np.abs(cp) <= tol * scale**2) & (np.abs(cq) <= tol * scale**2)
        found = np.where(on & (found < 0), e, found)
    coarse_h = np.where(found >= 0, coarse.edge_lengths[np.maximum(found, 0)],
                        coarse.element_diameters[t])
    return found, coarse_h


def interior_edge_sets(current, previous):
    """Sigma_n, its intersection with Sigma_{n-1}, and the remainder of the union."""
    fine, coarse = finer_coarser(current, previous)
    found, coarse_h = coarse_skeleton_lookup(fine, coarse)
    on_coarse_interior = np.zeros(len(found), dtype=bool)
    hit = found >= 0
    on_coarse_interior[hit] = coarse.edge_is_interior[found[hit]]
    hat = np.flatnonzero(on_coarse_interior)
    check = np.flatnonzero(~on_coarse_interior)
    return EdgeSets(
        sigma=_edge_coords(current, np.arange(len(current.interior_edges))),
        sigma_hat=_edge_coords(fine, hat),
        sigma_check_minus_hat=_edge_coords(fine, check),
        fine=fine, coarse=coarse,
        hat_index=hat, check_index=check,
        coarse_h=np.maximum(coarse_h, fine.edge_lengths[fine.interior_edge_ids]),
    )


def write_mesh(mesh, path):
    """Plain-text dump: ``v x y`` per vertex, ``t i j k`` per triangle."""
    with open(path, "w") as fh:
        for x, y in mesh.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"t {i} {j} {k}\n")


def read_mesh(path):
    verts, tris = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(parts[1]), float(parts[2])])
            elif parts[0] == "t":
                tris.append([int(parts[1]), int(parts[2]), int(parts[3])])
            else:
                raise MeshError(f"unknown record {parts[0]!r}")
    return TriangleMesh(np.array(verts), np.array(tris, dtype=np.int64))
