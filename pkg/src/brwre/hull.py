"""Position of the origin relative to the convex hull of a point cloud.

Dimensions 1 and 2 are decided exactly on :class:`~fractions.Fraction`
coordinates. Higher dimensions use floating-point linear programs and report
``inconclusive`` when the decision margin falls below ``tol``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

Point = tuple

INTERIOR, BOUNDARY, OUTSIDE, INCONCLUSIVE = "interior", "boundary", "outside", "inconclusive"


@dataclass(frozen=True)
class HullPosition:
    kind: str
    # for OUTSIDE: a direction r with max_p r.p < 0
    witness: Optional[tuple] = None
    # for INTERIOR (d <= 2): hull vertices, counter-clockwise
    vertices: tuple = ()
    margin: Optional[float] = None


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points: Sequence[Point]) -> list[Point]:
    """Strict hull vertices in counter-clockwise order (monotone chain)."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return hull


def hull_vertices(points: Sequence[Point], d: int) -> list[Point]:
    """Reduce a cloud to points spanning the same hull (exact for d <= 2)."""
    if d == 1:
        xs = [p[0] for p in points]
        return sorted({(min(xs),), (max(xs),)})
    if d == 2:
        return convex_hull_2d(points)
    arr = np.array([[float(c) for c in p] for p in points])
    if len(arr) <= d + 1:
        return list(points)
    try:
        from scipy.spatial import ConvexHull

        idx = ConvexHull(arr).vertices
    except Exception:  # degenerate (lower-dimensional) cloud
        return list(points)
    return [points[i] for i in idx]


def _position_1d(points) -> HullPosition:
    lo = min(p[0] for p in points)
    hi = max(p[0] for p in points)
    if lo < 0 < hi:
        return HullPosition(INTERIOR, vertices=((lo,), (hi,)))
    if lo > 0:
        return HullPosition(OUTSIDE, witness=(-1,))
    if hi < 0:
        return HullPosition(OUTSIDE, witness=(1,))
    return HullPosition(BOUNDARY, vertices=((lo,), (hi,)))


def _position_2d(points) -> HullPosition:
    hull = convex_hull_2d(points)
    zero = (Fraction(0), Fraction(0))
    if len(hull) == 1:
        p = hull[0]
        if p == zero or tuple(p) == (0, 0):
            return HullPosition(BOUNDARY, vertices=tuple(hull))
        return HullPosition(OUTSIDE, witness=(-p[0], -p[1]))
    if len(hull) == 2:
        a, b = hull
        ab = (b[0] - a[0], b[1] - a[1])
        if _cross(a, b, zero) != 0:
            n = (-ab[1], ab[0])
            if n[0] * a[0] + n[1] * a[1] > 0:
                n = (-n[0], -n[1])
            return HullPosition(OUTSIDE, witness=n)
        t = Fraction(-(a[0] * ab[0] + a[1] * ab[1])) / (ab[0] ** 2 + ab[1] ** 2)
        if t < 0:
            return HullPosition(OUTSIDE, witness=(a[0] - b[0], a[1] - b[1]))
        if t > 1:
            return HullPosition(OUTSIDE, witness=ab)
        return HullPosition(BOUNDARY, vertices=tuple(hull))
    k = len(hull)
    on_edge = False
    for i in range(k):
        a, b = hull[i], hull[(i + 1) % k]
        c = _cross(a, b, zero)
        if c < 0:
            # outward normal of a counter-clockwise edge
            return HullPosition(OUTSIDE, witness=(b[1] - a[1], a[0] - b[0]))
        if c == 0:
            on_edge = True
    return HullPosition(BOUNDARY if on_edge else INTERIOR, vertices=tuple(hull))


def _position_lp(points, tol: float) -> HullPosition:
    from scipy.optimize import linprog

    P = np.array([[float(c) for c in p] for p in points])
    n, d = P.shape
    # min z  s.t.  P r - z <= 0,  -1 <= r <= 1
    c = np.r_[np.zeros(d), 1.0]
    A = np.c_[P, -np.ones(n)]
    res = linprog(c, A_ub=A, b_ub=np.zeros(n), bounds=[(-1, 1)] * d + [(None, None)], method="highs")
    if res.status == 0 and res.fun < -tol:
        return HullPosition(OUTSIDE, witness=tuple(res.x[:d]), margin=float(res.fun))
    # inradius proxy: how far 0 can move along each signed axis inside the hull
    margin = np.inf
    for j in range(d):
        for sgn in (1.0, -1.0):
            e = np.zeros(d)
            e[j] = sgn
            # max t  s.t.  P^T lam = t e, sum lam = 1, lam >= 0
            A_eq = np.zeros((d + 1, n + 1))
            A_eq[:d, :n] = P.T
            A_eq[:d, n] = -e
            A_eq[d, :n] = 1.0
            b_eq = np.r_[np.zeros(d), 1.0]
            r = linprog(np.r_[np.zeros(n), -1.0], A_eq=A_eq, b_eq=b_eq,
                        bounds=[(0, None)] * n + [(None, None)], method="highs")
            t = -r.fun if r.status == 0 else -np.inf
            margin = min(margin, t)
    if margin > tol:
        return HullPosition(INTERIOR, margin=float(margin))
    return HullPosition(INCONCLUSIVE, margin=float(margin))


def origin_position(points: Sequence[Point], d: int, tol: float = 1e-9) -> HullPosition:
    """Classify 0 against conv(points): interior, boundary, outside or inconclusive."""
    if not points:
        raise ValueError("empty point cloud")
    if d == 1:
        return _position_1d(points)
    if d == 2:
        return _position_2d([tuple(Fraction(c) for c in p) for p in points])
    return _position_lp(points, tol)
