"""Small planar geometry predicates used by triangulation and transport."""

from __future__ import annotations

import numpy as np


def seg_point_distance(a: complex, b: complex, p: complex) -> float:
    """Distance from p to the closed segment [a, b]."""
    ab = b - a
    L2 = abs(ab) ** 2
    if L2 == 0:
        return abs(p - a)
    t = ((p - a) * np.conj(ab)).real / L2
    t = min(1.0, max(0.0, t))
    return abs(a + t * ab - p)


def polyline_point_distance(verts, p: complex) -> float:
    return min(
        seg_point_distance(verts[i], verts[i + 1], p) for i in range(len(verts) - 1)
    )


def _orient(a: complex, b: complex, c: complex) -> float:
    return ((b - a).conjugate() * (c - a)).imag


def seg_seg_status(a, b, c, d, eps: float):
    """Classify segments [a,b] and [c,d]: 'cross', 'touch' or 'none'.

    'cross' means a proper transversal interior crossing; anything within eps
    of an endpoint or collinear overlap reports 'touch'.
    """
    o1 = _orient(a, b, c)
    o2 = _orient(a, b, d)
    o3 = _orient(c, d, a)
    o4 = _orient(c, d, b)
    s1 = abs(b - a)
    s2 = abs(d - c)
    tol = eps * max(s1, 1e-300) * max(s2, 1e-300)
    if (o1 * o2 < -tol * tol) and (o3 * o4 < -tol * tol):
        return "cross"
    near = (
        min(seg_point_distance(a, b, c), seg_point_distance(a, b, d),
            seg_point_distance(c, d, a), seg_point_distance(c, d, b))
    )
    if near <= eps * max(s1, s2):
        # endpoint contact or collinear overlap within tolerance
        if (o1 * o2 <= tol * tol and o3 * o4 <= tol * tol) and \
                _boxes_overlap(a, b, c, d, eps * max(s1, s2)):
            return "touch"
    return "none"


def _boxes_overlap(a, b, c, d, pad):
    return (
        min(a.real, b.real) - pad <= max(c.real, d.real)
        and min(c.real, d.real) - pad <= max(a.real, b.real)
        and min(a.imag, b.imag) - pad <= max(c.imag, d.imag)
        and min(c.imag, d.imag) - pad <= max(a.imag, b.imag)
    )


def polyline_crossings(path, arc, eps: float):
    """(n_cross, n_touch) between two polylines given as vertex sequences."""
    n_cross = 0
    n_touch = 0
    for i in range(len(path) - 1):
        for j in range(len(arc) - 1):
            st = seg_seg_status(path[i], path[i + 1], arc[j], arc[j + 1], eps)
            if st == "cross":
                n_cross += 1
            elif st == "touch":
                n_touch += 1
    return n_cross, n_touch


def segment_crosses_polyline(a, b, arc, eps: float) -> bool:
    c, t = polyline_crossings([a, b], arc, eps)
    return c > 0 or t > 0


def min_pairwise_distance(pts) -> float:
    pts = np.asarray(pts)
    if len(pts) < 2:
        return float("inf")
    d = np.abs(pts[:, None] - pts[None, :])
    np.fill_diagonal(d, np.inf)
    return float(d.min())


def pair_min_distance_on_motion(p0, p1, q0, q1) -> float:
    """Min distance of two points moving linearly p(t), q(t) for t in [0, 1]."""
    r0 = p0 - q0
    v = (p1 - q1) - (p0 - q0)
    a = abs(v) ** 2
    if a == 0:
        return abs(r0)
    t = -((r0 * np.conj(v)).real) / a
    t = min(1.0, max(0.0, t))
    return abs(r0 + t * v)
