"""Fixed quadrature rules on the reference triangle and on segments.

Triangle rules are given as barycentric points and weights summing to one;
physical integrals scale by the element area.  Three tiers are used
throughout the package: the degree-2 side-midpoint rule for products of
broken polynomials, a degree-10 symmetric rule for manufactured data, and
a collapsed-coordinate Gauss rule of arbitrary degree for oracles.
"""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

# side-midpoint rule: exact for polynomials of degree 2
_MIDPOINT_BARY = np.array(
    [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]
)
_MIDPOINT_W = np.full(3, 1.0 / 3.0)


def _dunavant10():
    # symmetric 25-point rule of degree 10 (Dunavant 1985)
    groups = [
        (np.array([1 / 3, 1 / 3, 1 / 3]), 0.090817990382754, 1),
        (np.array([0.028844733232685, 0.485577633383657, 0.485577633383657]),
         0.036725957756467, 3),
        (np.array([0.781036849029926, 0.109481575485037, 0.109481575485037]),
         0.045321059435528, 3),
        (np.array([0.141707219414880, 0.307939838764121, 0.550352941820999]),
         0.072757916845420, 6),
        (np.array([0.025003534762686, 0.246672560639903, 0.728323904597411]),
         0.028327242531057, 6),
        (np.array([0.009540815400299, 0.066803251012200, 0.923655933587500]),
         0.009421666963733, 6),
    ]
    pts, ws = [], []
    for bary, w, mult in groups:
        if mult == 1:
            combos = [(0, 1, 2)]
        elif mult == 3:
            combos = [(0, 1, 2), (1, 0, 2), (2, 1, 0)]
        else:
            combos = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
        seen = set()
        for c in combos:
            p = tuple(bary[list(c)])
            if p in seen:
                continue
            seen.add(p)
            pts.append(p)
            ws.append(w)
    return np.array(pts), np.array(ws)


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Barycentric points (nq, 3) and weights (nq,) summing to 1."""
    if degree <= 2:
        return _MIDPOINT_BARY.copy(), _MIDPOINT_W.copy()
    if degree <= 10:
        return _dunavant10()
    # collapsed (Duffy) tensor rule: Gauss-Legendre x Gauss-Jacobi(1,0)
    n = degree // 2 + 2
    xg, wg = roots_legendre(n)
    xg = 0.5 * (xg + 1.0)
    wg = 0.5 * wg
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xj = 0.5 * (xj + 1.0)
    wj = 0.25 * wj  # absorbs the (1 - v) Jacobian
    u, v = np.meshgrid(xg, xj, indexing="ij")
    w = np.outer(wg, wj)
    x = u * (1.0 - v)
    y = v
    bary = np.stack([1.0 - x - y, x, y], axis=-1).reshape(-1, 3)
    return bary, 2.0 * w.ravel()


@lru_cache(maxsize=None)
def segment_rule(npoints):
    """Gauss-Legendre points on [0, 1] and weights summing to 1."""
    x, w = roots_legendre(npoints)
    return 0.5 * (x + 1.0), 0.5 * w


def physical_points(mesh, bary):
    """Map barycentric points to all elements: (ne, nq, 2)."""
    p = mesh.vertices[mesh.elements]  # (ne, 3, 2)
    return np.einsum("qk,nkd->nqd", bary, p)


def side_points(mesh, tpoints, sides=None):
    """Map [0,1] points along sides (in stored endpoint order): (ns, nq, 2)."""
    sv = mesh.side_vertices if sides is None else mesh.side_vertices[sides]
    a = mesh.vertices[sv[:, 0]]
    b = mesh.vertices[sv[:, 1]]
    return a[:, None, :] + tpoints[None, :, None] * (b - a)[:, None, :]
