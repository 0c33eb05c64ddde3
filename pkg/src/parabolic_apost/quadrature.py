"""Quadrature on triangles, edges and time intervals."""

from __future__ import annotations

import functools

import numpy as np

MAX_TRIANGLE_DEGREE = 50


class QuadratureError(Exception):
    """Requested rule is not available."""


@functools.lru_cache(maxsize=None)
def triangle_rule(degree):
    """Symmetric rule on the reference triangle exact to total ``degree``.

    Returns
    -------
    bary : (q, 3) array
        Barycentric coordinates of the nodes.
    weights : (q,) array
        Weights normalized to sum to one, so that the integral over a
        triangle ``K`` is ``|K| * sum(weights * g(nodes))``.
    """
    import modepy

    degree = max(int(degree), 1)
    if degree > MAX_TRIANGLE_DEGREE:
        raise QuadratureError(f"no triangle rule of degree {degree} "
                              f"(max {MAX_TRIANGLE_DEGREE})")
    try:
        q = modepy.XiaoGimbutasSimplexQuadrature(degree, 2)
    except modepy.QuadratureRuleUnavailable as exc:
        raise QuadratureError(str(exc)) from exc
    # modepy uses the biunit triangle (-1,-1), (1,-1), (-1,1) of area 2
    xi = (q.nodes[0] + 1.0) / 2.0
    eta = (q.nodes[1] + 1.0) / 2.0
    bary = np.stack([1.0 - xi - eta, xi, eta], axis=1)
    w = q.weights / q.weights.sum()
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w


@functools.lru_cache(maxsize=None)
def gauss_legendre(npoints):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(int(npoints))
    return (x + 1.0) / 2.0, w / 2.0


def time_rule(t0, t1, npoints):
    """Gauss nodes and weights on the interval [t0, t1]."""
    s, w = gauss_legendre(npoints)
    return t0 + (t1 - t0) * s, (t1 - t0) * w


@functools.lru_cache(maxsize=64)
def quadrature_points(mesh, degree):
    """Physical quadrature points ``(T, q, 2)`` and weights ``(T, q)`` (read-only)."""
    bary, w = triangle_rule(degree)
    corners = mesh.vertices[mesh.triangles]
    x = corners[..., 0] @ bary.T
    y = corners[..., 1] @ bary.T
    pts = np.stack([x, y], axis=-1)
    wts = mesh.areas[:, None] * w[None, :]
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def quadrature_integrate(mesh, integrand, degree):
    """Integrate ``integrand(x, y)`` over the mesh with a rule of the given degree."""
    pts, wts = quadrature_points(mesh, degree)
    vals = np.asarray(integrand(pts[..., 0], pts[..., 1]), dtype=float)
    return float(np.sum(np.broadcast_to(vals, wts.shape) * wts))
