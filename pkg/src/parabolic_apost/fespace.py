"""P1 Lagrange spaces with homogeneous Dirichlet conditions.

Operators are scipy CSR matrices over the free (interior) vertices unless
``keep_boundary=True`` is requested.  Spaces on meshes of one nested
hierarchy can exchange functions exactly: prolongation is nodal
interpolation and restriction is the L2 projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse as sp
from scipy.sparse import linalg as spla

from .mesh import TriangleMesh, finer_coarser, vertex_prolongation
from .quadrature import quadrature_points

DEFAULT_TOL = 1e-12


class SolverError(ArithmeticError):
    """A linear solve did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class DiffusionMatrix:
    """Constant symmetric positive definite diffusion tensor.

    ``alpha`` and ``beta`` default to the extreme eigenvalues of ``A``, which
    are the sharp coercivity and continuity constants for the H1 seminorm.
    """

    A: tuple = ((1.0, 0.0), (0.0, 1.0))
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.shape != (2, 2) or not np.allclose(A, A.T, rtol=0, atol=0):
            raise ValueError("diffusion matrix must be a symmetric 2x2 matrix")
        ev = np.linalg.eigvalsh(A)
        object.__setattr__(self, "A", tuple(map(tuple, A)))
        if self.alpha is None:
            object.__setattr__(self, "alpha", float(ev[0]))
        if self.beta is None:
            object.__setattr__(self, "beta", float(ev[1]))
        if self.alpha <= 0:
            raise ValueError("diffusion matrix must be coercive (alpha > 0)")

    @property
    def matrix(self):
        return np.array(self.A)


class SpdSolver:
    """Solve with a fixed symmetric positive definite matrix.

    ``backend="cg"`` runs Jacobi preconditioned conjugate gradients to the
    relative residual ``tol``; ``backend="direct"`` factorizes once.
    """

    def __init__(self, matrix, tol=DEFAULT_TOL, backend="cg"):
        self.matrix = sp.csr_matrix(matrix)
        self.tol = tol
        self.backend = backend
        if backend == "direct":
            self._lu = spla.splu(self.matrix.tocsc())
        elif backend == "cg":
            d = self.matrix.diagonal()
            self._precond = spla.LinearOperator(self.matrix.shape, matvec=lambda x: x / d)
        else:
            raise ValueError(f"unknown solver backend {backend!r}")

    def solve(self, rhs, x0=None):
        rhs = np.asarray(rhs, dtype=float)
        if not np.any(rhs):
            return np.zeros_like(rhs)
        if self.backend == "direct":
            return self._lu.solve(rhs)
        x, info = spla.cg(self.matrix, rhs, x0=x0, rtol=self.tol, atol=0.0,
                          M=self._precond, maxiter=20 * len(rhs) + 100)
        if info != 0:
            res = np.linalg.norm(rhs - self.matrix @ x) / np.linalg.norm(rhs)
            raise SolverError(f"CG did not converge (relative residual {res:.3e})", res)
        return x


def p1_gradients(mesh):
    """Gradients of the barycentric coordinates, shape ``(T, 3, 2)``."""
    p = mesh.vertices[mesh.triangles]
    d = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]
    g = np.stack([-d[..., 1], d[..., 0]], axis=-1)
    return g / (2.0 * mesh.areas)[:, None, None]


class FeSpace:
    """Continuous P1 space on ``mesh`` vanishing on the boundary."""

    def __init__(self, mesh: TriangleMesh, degree: int = 1, tol: float = DEFAULT_TOL,
                 backend: str = "cg"):
        if degree != 1:
            raise NotImplementedError("only P1 elements are implemented")
        self.mesh = mesh
        self.degree = degree
        self.tol = tol
        self.backend = backend
        self.free = np.flatnonzero(~mesh.boundary_vertex_flags)
        self.boundary_dofs = np.flatnonzero(mesh.boundary_vertex_flags)
        gidx = np.full(mesh.num_vertices, -1, dtype=np.int64)
        gidx[self.free] = np.arange(len(self.free))
        self.vertex_to_dof = gidx
        # element-local -> global dof, -1 marks a constrained vertex
        self.dof_map = gidx[mesh.triangles]
        self._cache = {}

    @property
    def ndofs(self):
        return len(self.free)

    def __repr__(self):
        return f"FeSpace(P{self.degree}, level={self.mesh.level}, ndofs={self.ndofs})"

    def to_full(self, coeffs):
        out = np.zeros(self.mesh.num_vertices)
        out[self.free] = coeffs
        return out

    def from_full(self, values):
        return np.asarray(values)[self.free]

    def mass(self, keep_boundary=False):
        key = ("mass", keep_boundary)
        if key not in self._cache:
            self._cache[key] = assemble_mass(self, keep_boundary=keep_boundary)
        return self._cache[key]

    def stiffness(self, diff, keep_boundary=False):
        key = ("stiff", diff, keep_boundary)
        if key not in self._cache:
            self._cache[key] = assemble_stiffness(self, diff, keep_boundary=keep_boundary)
        return self._cache[key]

    def solver(self, key, matrix_factory):
        """Cached :class:`SpdSolver` for the matrix built by ``matrix_factory``."""
        k = ("solver", key)
        if k not in self._cache:
            self._cache[k] = SpdSolver(matrix_factory(), self.tol, self.backend)
        return self._cache[k]

    def mass_solver(self):
        return self.solver("mass", self.mass)

    def interpolate(self, func):
        x, y = self.mesh.vertices[self.free].T
        return DofVector(self, np.asarray(func(x, y), dtype=float) * np.ones(self.ndofs))

    def values_at(self, coeffs, degree):
        """Values at the quadrature points of :func:`quadrature_points`."""
        from .quadrature import triangle_rule

        bary, _ = triangle_rule(degree)
        full = self.to_full(coeffs)
        return full[self.mesh.triangles] @ bary.T


@dataclass
class DofVector:
    """Coefficients of a finite element function in ``space``."""

    space: FeSpace
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.ndofs,):
            raise ValueError(f"expected {self.space.ndofs} coefficients, "
                             f"got {self.coefficients.shape}")

    def full(self):
        return self.space.to_full(self.coefficients)


def _assemble(mesh, local, space, keep_boundary):
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.num_vertices
    M = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M.sum_duplicates()
    if keep_boundary:
        return M
    return M[space.free][:, space.free].tocsr()


def local_mass(areas):
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return areas[:, None, None] * base[None]


def assemble_mass(space, keep_boundary=False):
    """Consistent P1 mass matrix (exact integration)."""
    return _assemble(space.mesh, local_mass(space.mesh.areas), space, keep_boundary)


def assemble_stiffness(space, diff, keep_boundary=False):
    """Stiffness matrix of ``a(v, w) = (A grad v, grad w)``."""
    G = p1_gradients(space.mesh)
    local = np.einsum("tid,de,tje->tij", G, diff.matrix, G) * space.mesh.areas[:, None, None]
    K = _assemble(space.mesh, local, space, keep_boundary)
    # symmetrize exactly; contributions are symmetric up to rounding order
    return ((K + K.T) * 0.5).tocsr()


def _load_full(mesh, func, degree):
    from .quadrature import triangle_rule

    pts, wts = quadrature_points(mesh, degree)
    bary, _ = triangle_rule(degree)
    vals = np.broadcast_to(np.asarray(func(pts[..., 0], pts[..., 1]), dtype=float), wts.shape)
    local = np.einsum("tq,qa->ta", vals * wts, bary)
    return np.bincount(mesh.triangles.ravel(), weights=local.ravel(),
                       minlength=mesh.num_vertices)


def load_vector(space, func, degree=8):
    """Entries ``(f, phi_i)`` for the free basis functions, by quadrature."""
    return _load_full(space.mesh, func, degree)[space.free]


def prolongation(coarse_space, fine_space):
    """Exact embedding of the coarse space into a nested finer space."""
    P = vertex_prolongation(coarse_space.mesh, fine_space.mesh)
    return P[fine_space.free][:, coarse_space.free].tocsr()


def cross_mass(to_space, from_space):
    """Matrix ``B`` with ``B[i, j] = (phi_j^from, phi_i^to)``, exact for nested meshes."""
    if to_space is from_space or to_space.mesh is from_space.mesh:
        return to_space.mass()
    fine_mesh, _ = finer_coarser(to_space.mesh, from_space.mesh)
    if fine_mesh is to_space.mesh:
        return to_space.mass() @ prolongation(from_space, to_space)
    return (prolongation(to_space, from_space).T @ from_space.mass()).tocsr()


def transfer(coeffs, from_space, to_space):
    """L2 projection of a function of ``from_space`` into ``to_space``."""
    if to_space is from_space or to_space.mesh is from_space.mesh:
        return np.array(coeffs, dtype=float)
    fine_mesh, _ = finer_coarser(to_space.mesh, from_space.mesh)
    if fine_mesh is to_space.mesh:
        return prolongation(from_space, to_space) @ coeffs
    return to_space.mass_solver().solve(cross_mass(to_space, from_space) @ coeffs)


def to_common(coeffs, from_space, fine_space):
    """Represent a function of a (coarser or equal) space on ``fine_space``, exactly."""
    if fine_space.mesh is from_space.mesh:
        return np.asarray(coeffs, dtype=float)
    return prolongation(from_space, fine_space) @ coeffs


def l2_project(source, target_space, degree=8):
    """L2 projection of a callable ``f(x, y)`` or a :class:`DofVector`."""
    if isinstance(source, DofVector):
        return DofVector(target_space, transfer(source.coefficients, source.space, target_space))
    rhs = load_vector(target_space, source, degree)
    return DofVector(target_space, target_space.mass_solver().solve(rhs))


def l2_project_full(source, space, degree=8):
    """L2 projection of ``source(x, y)`` onto P1 without boundary constraints.

    Returns the values at all mesh vertices.
    """
    rhs = _load_full(space.mesh, source, degree)
    return space.solver("mass_full", lambda: space.mass(keep_boundary=True)).solve(rhs)


def discrete_elliptic_apply(v, space, diff):
    """``A_h v``: the element of ``space`` with ``(A_h v, phi) = a(v, phi)``."""
    coeffs = v.coefficients if isinstance(v, DofVector) else np.asarray(v, dtype=float)
    out = space.mass_solver().solve(space.stiffness(diff) @ coeffs)
    return DofVector(space, out)


def p1_weighted_norm(mesh, full_values, weights=None):
    """``|| w v ||_{L2}`` for a P1 function ``v`` and an elementwise constant ``w``."""
    v = np.asarray(full_values)[mesh.triangles]
    local = (np.sum(v * v, axis=1) + np.sum(v, axis=1) ** 2) * mesh.areas / 12.0
    if weights is not None:
        local = local * np.asarray(weights) ** 2
    return float(np.sqrt(max(np.sum(local), 0.0)))


def l2_norm(space, coeffs):
    return p1_weighted_norm(space.mesh, space.to_full(coeffs))


def element_gradients(mesh, full_values):
    """Constant gradient of a P1 function on each triangle, ``(T, 2)``."""
    G = p1_gradients(mesh)
    return np.einsum("ta,tad->td", np.asarray(full_values)[mesh.triangles], G)
