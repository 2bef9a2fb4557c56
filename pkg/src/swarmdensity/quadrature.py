"""Symmetric triangle rules (Dunavant) and Gauss-Legendre edge rules."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

# (weight, orbit generator) with weights normalised to sum to one.
# generators: () centroid, (a,) -> (a, a, 1-2a), (a, b) -> all perms of (a, b, 1-a-b)
_DUNAVANT = {
    2: [(1.0 / 3.0, (1.0 / 6.0,))],
    4: [
        (0.223381589678011465944, (0.445948490915964886319,)),
        (0.109951743655321867389, (0.091576213509770743460,)),
    ],
    6: [
        (0.116786275726379366030, (0.249286745170910421291,)),
        (0.050844906370206816921, (0.063089014491502228340,)),
        (0.082851075618373575194, (0.053145049844816947353, 0.310352451033784405416)),
    ],
    8: [
        (0.144315607677787168251, ()),
        (0.095091634267284624793, (0.459292588292723156028,)),
        (0.103217370534718250281, (0.170569307751760206622,)),
        (0.032458497623198080310, (0.050547228317030975458,)),
        (0.027230314174434994264, (0.008394777409957605337, 0.263112829634638113421)),
    ],
}


def _orbit(gen):
    if len(gen) == 0:
        return [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]
    if len(gen) == 1:
        a = gen[0]
        b = 1.0 - 2.0 * a
        return [(b, a, a), (a, b, a), (a, a, b)]
    a, b = gen
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


@lru_cache(maxsize=None)
def triangle_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points (n, 3) and weights (n,) summing to one, exact to degree ``order``.

    The smallest tabulated rule with degree >= ``order`` is returned.
    """
    if order < 1:
        raise ValueError("quadrature order must be positive")
    degrees = sorted(_DUNAVANT)
    if order > degrees[-1]:
        raise ValueError(f"triangle rules available up to degree {degrees[-1]}, got {order}")
    deg = next(d for d in degrees if d >= order)
    pts, wts = [], []
    for w, gen in _DUNAVANT[deg]:
        orbit = _orbit(gen)
        pts.extend(orbit)
        wts.extend([w] * len(orbit))
    pts = np.array(pts)
    wts = np.array(wts)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


@lru_cache(maxsize=None)
def edge_rule(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points on [0, 1] and weights summing to one."""
    if n_points < 1:
        raise ValueError("edge rule needs at least one point")
    x, w = np.polynomial.legendre.leggauss(n_points)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w


def edge_points_for_order(order: int) -> int:
    """Number of Gauss points integrating degree ``order`` exactly."""
    return max(1, (order + 2) // 2)
