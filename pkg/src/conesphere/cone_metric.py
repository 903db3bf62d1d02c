"""Triangulated cone metrics: twisted cocycles, the area form, total area.

A chart configuration (last point at infinity, the rest finite) is
triangulated with vertices at the marked points: a Delaunay triangulation of
the finite points plus a fan of rays to the vertex at infinity.  Developing
the triangulation through a spanning tree of its dual graph yields one branch
of the integrand per triangle.  Edge periods in these branches satisfy the
triangle-closure condition, and edge values seen from the two sides of a cut
differ by a unit rotation determined by integer windings, which makes the
cocycle space a concrete kernel of a small complex matrix.  Its dimension is
n - 2 and the hermitian area form on it has signature (1, n - 3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError

from .errors import (
    CocycleInconsistent,
    CrossCheckFailure,
    DegenerateTriangulation,
    DimensionMismatch,
    OrientationInconsistent,
    RemeshFailure,
)
from .geometry import (
    min_pairwise_distance,
    polyline_crossings,
    polyline_point_distance,
    seg_point_distance,
)
from .periods import (
    DEFAULT_TOL,
    MonodromyDatum,
    _Scaffold,
    _wrap,
    chart_arrays,
    integrate_polyline,
    monodromy,
)
from .quadrature import quad2d
from .weights import Configuration, Weight, is_infinity

TWO_PI = 2.0 * math.pi

#: relative triangle-closure tolerance for period cocycles
RESIDUAL_TOL = 1e-8

#: singular values below this fraction of the largest are treated as zero
RANK_RTOL = 1e-9

#: configurations flatter than this use the collinear chain layout; shared
#: with the transport engine's combinatorics fingerprint so the two agree
COLLINEAR_RTOL = 3e-7


@dataclass(frozen=True)
class EdgePath:
    """Oriented edge realization from vertex `tail` to vertex `head`.

    `waypoints` is the finite polyline starting at the tail point; for a ray
    edge (head is the vertex at infinity) it ends at the ray origin and
    `ray_dir` gives the direction of the infinite tail.
    """

    tail: int
    head: int
    waypoints: tuple
    ray_dir: complex | None = None

    @property
    def is_ray(self) -> bool:
        return self.ray_dir is not None

    def moved(self, positions) -> "EdgePath":
        """Same combinatorics and interior controls, endpoints at new positions."""
        wp = list(self.waypoints)
        wp[0] = positions[self.tail]
        if not self.is_ray:
            wp[-1] = positions[self.head]
        return replace(self, waypoints=tuple(wp))


@dataclass(frozen=True)
class Triangulation:
    """Combinatorial sphere triangulation on the marked points.

    Vertices are the configuration points (infinity last); edges are homotopy
    class representatives, not geodesics.  `tri_edges[t]` lists the boundary
    of triangle t as (edge_id, sign) with sign +1 when the edge's own
    orientation agrees with the boundary orientation.
    """

    points: tuple
    edges: tuple
    triangles: tuple
    tri_edges: tuple

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def infinity_vertex(self) -> int:
        return len(self.points) - 1

    def finite_positions(self) -> np.ndarray:
        return np.array([p for p in self.points[:-1]], dtype=complex)

    def combinatorial_key(self):
        edge_pairs = tuple(sorted((min(e.tail, e.head), max(e.tail, e.head))
                                  for e in self.edges))
        return edge_pairs

    def with_positions(self, finite_pts) -> "Triangulation":
        """Move vertices to new positions, keeping combinatorics and controls."""
        pos = list(finite_pts)
        new_points = tuple(complex(p) for p in pos) + (self.points[-1],)
        new_edges = tuple(e.moved(pos) for e in self.edges)
        return Triangulation(new_points, new_edges, self.triangles, self.tri_edges)

    def euler_characteristic(self) -> int:
        return self.n - self.n_edges + self.n_triangles


def _ccw(a, b, c) -> bool:
    return ((b - a).conjugate() * (c - a)).imag > 0


def _assemble(points, finite_tris, hull, ray_dirs):
    """Build a Triangulation from finite triangles and the infinity fan."""
    k = len(points)
    inf_v = k
    edges = []
    edge_id = {}

    def get_edge(a, b):
        key = (min(a, b), max(a, b))
        if key not in edge_id:
            edge_id[key] = len(edges)
            edges.append(EdgePath(key[0], key[1], (points[key[0]], points[key[1]])))
        eid = edge_id[key]
        return eid, 1 if (a, b) == (edges[eid].tail, edges[eid].head) else -1

    ray_id = {}
    for v, d in ray_dirs.items():
        ray_id[v] = len(edges)
        edges.append(EdgePath(v, inf_v, (points[v],), ray_dir=complex(d)))

    triangles = []
    tri_edges = []
    for (a, b, c) in finite_tris:
        triangles.append((a, b, c))
        tri_edges.append((get_edge(a, b), get_edge(b, c), get_edge(c, a)))
    for idx in range(len(hull)):
        a = hull[idx]
        b = hull[(idx + 1) % len(hull)]
        triangles.append((b, a, inf_v))
        tri_edges.append((get_edge(b, a), (ray_id[a], 1), (ray_id[b], -1)))

    pts_full = tuple(complex(p) for p in points)
    from .weights import INFINITY
    return Triangulation(pts_full + (INFINITY,), tuple(edges),
                         tuple(triangles), tuple(tri_edges))


def _collinear_triangulation(pts) -> Triangulation:
    """Sphere triangulation for finite points lying on one line.

    Consecutive segments along the line, one outward ray at each extreme
    point and a pair of up/down rays at each interior point; the sphere is
    covered by upper and lower strips ending at the vertex at infinity.
    """
    k = len(pts)
    centered = pts - pts.mean()
    # dominant direction of the point set
    M = np.array([[np.sum(centered.real ** 2), np.sum(centered.real * centered.imag)],
                  [np.sum(centered.real * centered.imag), np.sum(centered.imag ** 2)]])
    evals, evecs = np.linalg.eigh(M)
    d = complex(evecs[0, -1], evecs[1, -1])
    d /= abs(d)
    nrm = 1j * d
    order = np.argsort([(p * np.conj(d)).real for p in pts])
    inf_v = k
    edges = []
    seg_ids = []
    for i in range(k - 1):
        a, b = int(order[i]), int(order[i + 1])
        seg_ids.append(len(edges))
        edges.append(EdgePath(a, b, (pts[a], pts[b])))
    up, dn = {}, {}
    for pos, vi in enumerate(order):
        v = int(vi)
        if pos == 0:
            up[pos] = dn[pos] = len(edges)
            edges.append(EdgePath(v, inf_v, (pts[v],), ray_dir=-d))
        elif pos == k - 1:
            up[pos] = dn[pos] = len(edges)
            edges.append(EdgePath(v, inf_v, (pts[v],), ray_dir=d))
        else:
            up[pos] = len(edges)
            edges.append(EdgePath(v, inf_v, (pts[v],), ray_dir=nrm))
            dn[pos] = len(edges)
            edges.append(EdgePath(v, inf_v, (pts[v],), ray_dir=-nrm))

    triangles = []
    tri_edges = []

    def seg_ref(i, forward):
        e = edges[seg_ids[i]]
        a, b = int(order[i]), int(order[i + 1])
        want = (a, b) if forward else (b, a)
        return (seg_ids[i], 1 if want == (e.tail, e.head) else -1)

    for i in range(k - 1):
        a, b = int(order[i]), int(order[i + 1])
        triangles.append((a, b, inf_v))
        tri_edges.append((seg_ref(i, True), (up[i + 1], 1), (up[i], -1)))
    for i in range(k - 1):
        a, b = int(order[i]), int(order[i + 1])
        triangles.append((b, a, inf_v))
        tri_edges.append((seg_ref(i, False), (dn[i], 1), (dn[i + 1], -1)))

    from .weights import INFINITY
    return Triangulation(tuple(pts) + (INFINITY,), tuple(edges),
                         tuple(triangles), tuple(tri_edges))


def _clip_arc(edge: EdgePath, r_far: float):
    wp = list(edge.waypoints)
    if edge.is_ray:
        wp.append(wp[-1] + edge.ray_dir * (r_far + abs(wp[-1]) + 1.0))
    return wp


def triangulation_clearance(tri: Triangulation) -> float:
    """Smallest distance between a marked point and a non-incident edge arc.

    Vanishes exactly when the realization degenerates; parallel transport
    uses it to size perturbations and to trigger remeshing.
    """
    pts = tri.finite_positions()
    scale = max(1.0, float(np.max(np.abs(pts))))
    arcs = [_clip_arc(e, 2.0 * scale + 3.0) for e in tri.edges]
    q = np.inf
    for eid, e in enumerate(tri.edges):
        for j, p in enumerate(pts):
            if j in (e.tail, e.head):
                continue
            q = min(q, polyline_point_distance(arcs[eid], p))
    return float(q)


def _validate_realization(tri: Triangulation, eps_rel: float = 1e-11) -> str | None:
    """Return a reason string when the edge arcs fail to embed, else None."""
    pts = tri.finite_positions()
    scale = max(1.0, float(np.max(np.abs(pts))))
    r_far = 2.0 * scale + 3.0
    arcs = [_clip_arc(e, r_far) for e in tri.edges]
    eps = eps_rel * scale
    # marked points must avoid non-incident arcs
    for eid, e in enumerate(tri.edges):
        for v, p in enumerate(pts):
            if v in (e.tail, e.head):
                continue
            if polyline_point_distance(arcs[eid], p) < 1e-9 * scale:
                return f"marked point {v} lies on edge {eid}"
    # arcs must not cross each other
    for i in range(len(arcs)):
        for j in range(i + 1, len(arcs)):
            ei, ej = tri.edges[i], tri.edges[j]
            shared = {ei.tail, ei.head} & {ej.tail, ej.head}
            c, t = polyline_crossings(arcs[i], arcs[j], eps)
            if c > 0:
                return f"edges {i} and {j} cross"
            if t > 0 and not shared:
                return f"edges {i} and {j} touch"
    return None


def _delaunay_structure(pts, jitter_seed=0):
    xy = np.column_stack([pts.real, pts.imag])
    if jitter_seed:
        rng = np.random.default_rng(jitter_seed)
        scale = max(1.0, float(np.max(np.abs(pts))))
        xy = xy + rng.normal(scale=1e-7 * scale * jitter_seed, size=xy.shape)
    tri = Delaunay(xy)
    hull = ConvexHull(xy)
    finite_tris = []
    for s in tri.simplices:
        a, b, c = (int(v) for v in s)
        pa, pb, pc = (complex(*xy[v]) for v in (a, b, c))
        if not _ccw(pa, pb, pc):
            b, c = c, b
        finite_tris.append((a, b, c))
    hv = [int(v) for v in hull.vertices]  # counterclockwise
    ray_dirs = {}
    for idx, v in enumerate(hv):
        u = hv[idx - 1]
        w = hv[(idx + 1) % len(hv)]
        # outward = negated bisector of the interior hull angle; robust even
        # at nearly straight vertices where edge normals almost cancel
        a = pts[u] - pts[v]
        b = pts[w] - pts[v]
        s = a / abs(a) + b / abs(b)
        if abs(s) < 1e-9:
            out = -1j * b / abs(b)
        else:
            out = -s / abs(s)
        ray_dirs[v] = out
    return finite_tris, hv, ray_dirs


def delaunay_key(finite_pts):
    """Cheap combinatorial fingerprint of the canonical triangulation.

    Used by parallel transport to detect Delaunay flips without building the
    full edge realization.  Raises QhullError on degenerate inputs; callers
    treat that as "changed".
    """
    pts = np.asarray(finite_pts, dtype=complex)
    if _is_collinear(pts):
        centered = pts - pts.mean()
        M = np.array([[np.sum(centered.real ** 2), np.sum(centered.real * centered.imag)],
                      [np.sum(centered.real * centered.imag), np.sum(centered.imag ** 2)]])
        _, evecs = np.linalg.eigh(M)
        d = complex(evecs[0, -1], evecs[1, -1])
        order = tuple(int(v) for v in np.argsort([(p * np.conj(d)).real for p in pts]))
        return ("collinear", min(order, order[::-1]))
    xy = np.column_stack([pts.real, pts.imag])
    tri = Delaunay(xy)
    pairs = set()
    for s in tri.simplices:
        a, b, c = (int(v) for v in s)
        pairs.update({(min(a, b), max(a, b)), (min(b, c), max(b, c)),
                      (min(c, a), max(c, a))})
    hull = ConvexHull(xy)
    hv = tuple(int(v) for v in hull.vertices)
    k = hv.index(min(hv))
    return (tuple(sorted(pairs)), hv[k:] + hv[:k])


def _is_collinear(pts, rtol=COLLINEAR_RTOL) -> bool:
    if len(pts) < 3:
        return True
    centered = pts - pts.mean()
    scale = max(np.max(np.abs(centered)), 1e-300)
    M = np.array([[np.sum(centered.real ** 2), np.sum(centered.real * centered.imag)],
                  [np.sum(centered.real * centered.imag), np.sum(centered.imag ** 2)]])
    evals = np.linalg.eigvalsh(M)
    return evals[0] <= (rtol * scale) ** 2 * len(pts)


def build_triangulation(c: Configuration, variant: str = "delaunay",
                        max_retries: int = 6) -> Triangulation:
    """Canonical sphere triangulation of a chart configuration.

    The configuration must have its point at infinity last (normalize first).
    `variant="flip"` returns a combinatorially different triangulation with
    one interior Delaunay edge flipped, for cross-validation.
    """
    if not c.is_chart():
        raise ValueError("configuration must be in the chart with infinity last; "
                         "apply normalize() first")
    pts = c.finite_values()
    if _is_collinear(pts):
        tri = _collinear_triangulation(pts)
        reason = _validate_realization(tri)
        if reason is not None:
            raise DegenerateTriangulation(reason)
        if variant == "flip":
            raise ValueError("flip variant is not available for collinear layouts")
        return tri
    last = "no attempt"
    for retry in range(max_retries):
        try:
            finite_tris, hull, ray_dirs = _delaunay_structure(pts, jitter_seed=retry)
        except QhullError as exc:
            last = str(exc)
            continue
        if variant == "flip":
            finite_tris = _flip_one(finite_tris, pts)
        tri = _assemble(pts, finite_tris, hull, ray_dirs)
        reason = _validate_realization(tri)
        if reason is None:
            return tri
        last = reason
    raise DegenerateTriangulation(f"no valid realization after {max_retries} tries: {last}")


def _flip_one(finite_tris, pts):
    """Flip the first interior edge whose surrounding quad is strictly convex."""
    by_edge = {}
    for t, (a, b, c) in enumerate(finite_tris):
        for u, v in ((a, b), (b, c), (c, a)):
            by_edge.setdefault((min(u, v), max(u, v)), []).append(t)
    for (u, v), ts in sorted(by_edge.items()):
        if len(ts) != 2:
            continue
        t1, t2 = ts
        c1 = [x for x in finite_tris[t1] if x not in (u, v)][0]
        c2 = [x for x in finite_tris[t2] if x not in (u, v)][0]
        quad = [u, c1, v, c2]
        convex = True
        for i in range(4):
            a, b, c = quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]
            if ((pts[b] - pts[a]).conjugate() * (pts[c] - pts[a])).imag <= 1e-12:
                convex = False
                break
        if not convex:
            quad = [u, c2, v, c1]
            convex = True
            for i in range(4):
                a, b, c = quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]
                if ((pts[b] - pts[a]).conjugate() * (pts[c] - pts[a])).imag <= 1e-12:
                    convex = False
                    break
        if not convex:
            continue
        new1 = (quad[0], quad[1], quad[3])
        new2 = (quad[2], quad[3], quad[1])
        out = [tr for t, tr in enumerate(finite_tris) if t not in (t1, t2)]
        for tr in (new1, new2):
            a, b, c = tr
            if not _ccw(pts[a], pts[b], pts[c]):
                tr = (a, c, b)
            out.append(tr)
        return out
    raise ValueError("no flippable interior edge")


# --- the developed system ----------------------------------------------------

class _Developed:
    """Branch development of a triangulation: anchors, windings, periods."""

    def __init__(self, pts, exps, mu_inf, tri: Triangulation, root_args=None,
                 tol=DEFAULT_TOL):
        self.pts = pts
        self.exps = exps
        self.mu_inf = mu_inf
        self.tri = tri
        self.tol = tol
        self.scale = max(1.0, float(np.max(np.abs(pts))))
        self.r_far = 2.0 * self.scale + 3.0
        self.arcs = [_clip_arc(e, self.r_far) for e in tri.edges]
        self.eps = 1e-11 * self.scale
        self._incidences()
        self._anchors()
        self._develop(root_args)
        self._edge_start_data()
        self._period_cache = None

    # -- combinatorial incidence data

    def _incidences(self):
        inc = [[] for _ in self.tri.edges]
        for t, slots in enumerate(self.tri.tri_edges):
            for slot, (eid, sign) in enumerate(slots):
                inc[eid].append((t, slot, sign))
        for eid, lst in enumerate(inc):
            if len(lst) != 2 or lst[0][2] * lst[1][2] != -1:
                raise DegenerateTriangulation(
                    f"edge {eid} is not shared by two triangles with opposite orientation"
                )
        self.incidences = inc
        adj = [[] for _ in self.tri.triangles]
        for eid, ((t1, _, _), (t2, _, _)) in enumerate(inc):
            adj[t1].append((t2, eid))
            adj[t2].append((t1, eid))
        self.tri_adj = adj

    def _anchors(self):
        inf_v = self.tri.infinity_vertex
        anchors = []
        for t, verts in enumerate(self.tri.triangles):
            if inf_v in verts:
                anchors.append(_wedge_anchor(self.tri, t, self.pts))
            else:
                zs = [complex(self.tri.points[v]) for v in verts]
                anchors.append(sum(zs) / 3.0)
        self.anchors = anchors

    # -- branch development through the dual tree

    def _develop(self, root_args):
        F = self.tri.n_triangles
        order = [0]
        parent = {0: None}
        seen = {0}
        qi = 0
        while qi < len(order):
            t = order[qi]
            qi += 1
            for t2, eid in self.tri_adj[t]:
                if t2 not in seen:
                    seen.add(t2)
                    parent[t2] = (t, eid)
                    order.append(t2)
        if len(order) != F:
            raise DegenerateTriangulation("dual graph is not connected")
        self.bfs_order = order
        a0 = self.anchors[0]
        if root_args is None:
            args0 = np.angle(a0 - self.pts)
        else:
            args0 = np.asarray(root_args, dtype=float).copy()
        anchor_args = [None] * F
        anchor_args[0] = args0
        tree_edges = set()
        for t in order[1:]:
            tp, eid = parent[t]
            tree_edges.add(eid)
            anchor_args[t] = self._cross_args(tp, t, eid, anchor_args[tp])
        self.anchor_args = anchor_args
        self.tree_edges = tree_edges
        # windings across non-tree cuts, from the first incidence to the second
        windings = {}
        for eid, ((t1, _, _), (t2, _, _)) in enumerate(self.incidences):
            if eid in tree_edges:
                windings[eid] = np.zeros(len(self.pts), dtype=int)
                continue
            crossed = self._cross_args(t1, t2, eid, anchor_args[t1])
            k = (crossed - anchor_args[t2]) / TWO_PI
            ki = np.rint(k)
            if np.max(np.abs(k - ki)) > 1e-6:
                raise RemeshFailure(
                    f"non-integer winding {k} across edge {eid}; inconsistent development"
                )
            windings[eid] = ki.astype(int)
        self.windings = windings

    def _cross_args(self, t_from, t_to, eid, args_from):
        """Continue branch arguments across edge eid between adjacent triangles."""
        qa, qb = self.anchors[t_from], self.anchors[t_to]
        for path in self._crossing_candidates(qa, qb, eid):
            if self._path_ok(path, target=eid):
                return _continue_chain(self.pts, args_from, path)
        raise RemeshFailure(
            f"no valid branch-continuation path between triangles {t_from} and {t_to}"
        )

    def _crossing_candidates(self, qa, qb, eid):
        yield [qa, qb]
        arc = self.arcs[eid]
        edge = self.tri.edges[eid]
        spots = []
        for frac in (0.5, 0.3, 0.7):
            spots.append(_polyline_point_dir(arc, frac))
        if edge.is_ray:
            # wedge-to-wedge crossings work best near the ray origin, where
            # both anchors are a short hop away
            origin = edge.waypoints[-1]
            others = np.abs(self.pts - origin)
            others = others[others > 1e-13 * self.scale]
            clr0 = float(np.min(others)) if len(others) else 1.0
            for t in (0.3 * clr0, clr0, 3.0 * clr0):
                spots.append((origin + t * edge.ray_dir, edge.ray_dir))
        for x, u in spots:
            clr = float(np.min(np.abs(x - self.pts))) if len(self.pts) else 1.0
            # skinny triangles leave little room: stay closer to the crossing
            # point than any other arc
            for k, other in enumerate(self.arcs):
                if k != eid:
                    clr = min(clr, polyline_point_distance(other, x))
            for delta in (0.3 * clr, 0.08 * clr, 0.02 * clr):
                if delta <= 0:
                    continue
                n = 1j * u
                yield [qa, x - delta * n, x + delta * n, qb]
                yield [qa, x + delta * n, x - delta * n, qb]

    def _path_ok(self, path, target=None) -> bool:
        for p in self.pts:
            if polyline_point_distance(path, p) < 1e-12 * self.scale:
                return False
        for eid, arc in enumerate(self.arcs):
            c, t = polyline_crossings(path, arc, self.eps)
            if t > 0:
                return False
            want = 1 if eid == target else 0
            if c != want:
                return False
        return True

    # -- per-edge start data in the owner branch

    def _edge_start_data(self):
        start_args = []
        for eid, e in enumerate(self.tri.edges):
            owner, slot, sign = self.incidences[eid][0]
            wp = e.waypoints
            a = wp[0]
            if len(wp) > 1:
                u = (wp[1] - a)
                seg_len = abs(u)
            else:
                u = e.ray_dir
                seg_len = None
            u = u / abs(u)
            others = np.abs(self.pts - a)
            others = others[others > 1e-13 * self.scale]
            clr = float(np.min(others)) if len(others) else 1.0
            delta = 0.1 * clr if seg_len is None else min(0.25 * seg_len, 0.1 * clr)
            z1 = a + delta * u
            n_own = 1j * u * sign
            # stay clear of the other arcs when stepping off the edge; skinny
            # triangles leave little room at a vertex
            d_other = min(
                (polyline_point_distance(arc, z1)
                 for k, arc in enumerate(self.arcs) if k != eid),
                default=delta,
            )
            args = None
            for h in (0.3 * min(delta, d_other), 0.08 * min(delta, d_other)):
                if h <= 0:
                    continue
                z1o = z1 + h * n_own
                for path in ([self.anchors[owner], z1o],
                             [self.anchors[owner], z1 + 2.0 * h * n_own, z1o]):
                    if self._path_ok(path, target=None):
                        args = _continue_chain(self.pts, self.anchor_args[owner],
                                               path + [z1])
                        break
                if args is not None:
                    break
            if args is None:
                raise RemeshFailure(f"no valid branch path from anchor to edge {eid}")
            # arguments at the tail itself: factors other than the tail's own
            # are continued down the first segment; the tail slot already holds
            # the direction argument
            tail_idx = self._vertex_point_index(e.tail)
            keep = np.arange(len(self.pts)) != tail_idx
            if np.any(keep):
                scaf = _Scaffold(self.pts[keep], args[keep], z1, a)
                full = args.copy()
                full[keep] = scaf.end_args()
            else:
                full = args.copy()
            start_args.append(full)
        self.edge_start_args = start_args

    def _vertex_point_index(self, v):
        # finite vertices are indexed in configuration order
        return v

    # -- periods

    def period_vector(self) -> np.ndarray:
        if self._period_cache is not None:
            return self._period_cache
        vals = np.zeros(self.tri.n_edges, dtype=complex)
        errs = np.zeros(self.tri.n_edges)
        for eid, e in enumerate(self.tri.edges):
            v, err, _ = integrate_polyline(
                self.pts, self.exps, list(e.waypoints), self.edge_start_args[eid],
                tol=self.tol, ray_dir=e.ray_dir, mu_inf=self.mu_inf,
            )
            vals[eid] = v
            errs[eid] = err
        self._period_cache = vals
        self._period_errs = errs
        return vals


def _wedge_anchor(tri: Triangulation, t: int, pts) -> complex:
    """Interior base point of a triangle incident to the vertex at infinity.

    Sits on the angular bisector of the wedge (the sector between its
    outgoing and incoming rays), pushed deep enough that straight chords from
    it to any boundary point stay inside even when the finite edge is tiny
    next to a collision pair.
    """
    dir_out = dir_in = None
    fin = None
    for eid, sign in tri.tri_edges[t]:
        e = tri.edges[eid]
        if e.is_ray:
            if sign > 0:
                dir_out = e.ray_dir
            else:
                dir_in = e.ray_dir
        else:
            fin = e
    wp = fin.waypoints
    mid = _polyline_midpoint(wp)
    length = sum(abs(wp[i + 1] - wp[i]) for i in range(len(wp) - 1))
    width = float(np.angle(dir_in / dir_out)) % TWO_PI
    bisector = dir_out * np.exp(0.5j * width)
    clr = np.inf
    for v in (fin.tail, fin.head):
        d = np.abs(pts - pts[v])
        d = d[d > 0]
        if len(d):
            clr = min(clr, float(np.min(d)))
    if not np.isfinite(clr):
        clr = length
    return mid + (0.8 * length + 0.4 * clr) * bisector


def _polyline_midpoint(wp):
    lengths = [abs(wp[i + 1] - wp[i]) for i in range(len(wp) - 1)]
    total = sum(lengths)
    if total == 0:
        return wp[0]
    target = 0.5 * total
    acc = 0.0
    for i, L in enumerate(lengths):
        if acc + L >= target:
            t = (target - acc) / L
            return wp[i] + t * (wp[i + 1] - wp[i])
        acc += L
    return wp[-1]


def _polyline_point_dir(wp, frac):
    lengths = [abs(wp[i + 1] - wp[i]) for i in range(len(wp) - 1)]
    total = sum(lengths)
    target = frac * total
    acc = 0.0
    for i, L in enumerate(lengths):
        if acc + L >= target and L > 0:
            t = (target - acc) / L
            u = (wp[i + 1] - wp[i]) / L
            return wp[i] + t * (wp[i + 1] - wp[i]), u
        acc += L
    u = (wp[-1] - wp[-2])
    return wp[-1], u / abs(u)


def _continue_chain(pts, args, chain):
    out = np.asarray(args, dtype=float)
    for a, b in zip(chain[:-1], chain[1:]):
        if a == b:
            continue
        scaf = _Scaffold(pts, out, a, b)
        out = scaf.end_args()
    return out


class CocycleSpace:
    """The space Z of twisted edge cocycles of a triangulated configuration.

    Carries the nullspace basis (complex dimension n - 2), the hermitian area
    form in that basis, and the period cocycle of the underlying
    configuration.  Also serves as the frame object for period vectors.
    """

    def __init__(self, w: Weight, tri: Triangulation, *, root_args=None,
                 tol: float = DEFAULT_TOL, config: Configuration | None = None):
        self.weight = w
        self.tri = tri
        self.config = config
        pts, exps, mu_inf, _ = _tri_chart(w, tri)
        self.dev = _Developed(pts, exps, mu_inf, tri, root_args=root_args, tol=tol)
        self._matrices()
        self._cocycle = None

    def _matrices(self):
        tri = self.tri
        dev = self.dev
        E, F = tri.n_edges, tri.n_triangles
        A = np.zeros((F, E), dtype=complex)
        fac = [[None] * 3 for _ in range(F)]
        for eid, ((t1, s1, g1), (t2, s2, g2)) in enumerate(dev.incidences):
            k = dev.windings[eid]
            rho = np.exp(2j * math.pi * float(dev.exps @ k))
            A[t1, eid] += g1
            A[t2, eid] += g2 * rho
            fac[t1][s1] = (eid, g1 * (1.0 + 0.0j))
            fac[t2][s2] = (eid, g2 * rho)
        self.constraints = A
        U, s, Vh = np.linalg.svd(A)
        smax = s[0] if len(s) else 0.0
        rank = int(np.sum(s > RANK_RTOL * smax))
        dim = E - rank
        n = tri.n
        if dim != n - 2:
            raise DimensionMismatch(
                f"cocycle space has numerical dimension {dim}, expected n - 2 = {n - 2}"
            )
        self.basis = Vh[rank:].conj().T  # (E, n-2), orthonormal columns
        M = np.zeros((E, E), dtype=complex)
        for t in range(F):
            (i1, c1), (i2, c2) = fac[t][0], fac[t][1]
            alpha = np.conj(c1) * c2 / 4j
            M[i1, i2] += alpha
            M[i2, i1] += np.conj(alpha)
        self.area_matrix = M
        G = self.basis.conj().T @ M @ self.basis
        self.area_gram = 0.5 * (G + G.conj().T)
        self.psi_gram = self.area_gram / math.pi

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def signature(self) -> tuple[int, int]:
        """(positive, negative) eigenvalue counts of the area form."""
        ev = np.linalg.eigvalsh(self.area_gram)
        thresh = RANK_RTOL * np.max(np.abs(ev))
        pos = int(np.sum(ev > thresh))
        neg = int(np.sum(ev < -thresh))
        if pos + neg != self.dim:
            raise DimensionMismatch(
                f"area form is numerically degenerate: eigenvalues {ev}"
            )
        return pos, neg

    def period_values(self) -> np.ndarray:
        """Raw edge periods in the owner-branch convention."""
        z = self.dev.period_vector()
        res = self.residuals(z)
        if np.max(res) > RESIDUAL_TOL:
            raise CocycleInconsistent(
                f"triangle residual {np.max(res):.3e} exceeds {RESIDUAL_TOL}"
            )
        return z

    def residuals(self, z) -> np.ndarray:
        """Per-triangle closure residual relative to the largest edge value."""
        out = np.zeros(self.tri.n_triangles)
        r = self.constraints @ z
        for t, slots in enumerate(self.tri.tri_edges):
            scale = max(abs(z[eid]) for eid, _ in slots)
            out[t] = abs(r[t]) / max(scale, 1e-300)
        return out

    def project(self, z) -> np.ndarray:
        """Coordinates of an edge vector in the cocycle basis."""
        return self.basis.conj().T @ np.asarray(z, dtype=complex)

    def in_span_residual(self, z) -> float:
        z = np.asarray(z, dtype=complex)
        c = self.project(z)
        return float(np.linalg.norm(z - self.basis @ c) / np.linalg.norm(z))

    def developed_area(self, z=None) -> float:
        """Total area of the developed cone metric carried by a cocycle."""
        if z is None:
            z = self.period_values()
        z = np.asarray(z, dtype=complex)
        a = float(np.real(z.conj() @ self.area_matrix @ z))
        return a

    def area_value(self, v_coords, w_coords) -> complex:
        """Hermitian area pairing in basis coordinates, linear in the first slot."""
        return complex(np.asarray(w_coords).conj() @ self.area_gram @ np.asarray(v_coords))

    def coords_at(self, finite_pts, root_args=None) -> np.ndarray:
        """Period coordinates of a nearby configuration in this frame.

        Rebuilds the edge geometry with vertices moved to `finite_pts`
        (interior controls kept), continues the root branch, and projects the
        new periods onto this frame's basis.  The combinatorial winding data
        must be unchanged, which limits the move to small steps.
        """
        finite_pts = np.asarray(finite_pts, dtype=complex)
        tri2 = self.tri.with_positions(finite_pts)
        if root_args is None:
            root_args = self.continued_root_args(finite_pts)
        dev2 = _Developed(finite_pts, self.dev.exps, self.dev.mu_inf,
                          tri2, root_args=root_args, tol=self.dev.tol)
        for eid in range(tri2.n_edges):
            if np.any(dev2.windings[eid] != self.dev.windings[eid]):
                raise RemeshFailure(
                    "edge-system windings changed; configuration moved too far"
                )
        z = dev2.period_vector()
        res = self.residuals(z)
        if np.max(res) > RESIDUAL_TOL:
            raise CocycleInconsistent(
                f"triangle residual {np.max(res):.3e} at displaced configuration"
            )
        return self.project(z)

    def continued_root_args(self, finite_pts) -> np.ndarray:
        """Root branch arguments continued to slightly moved vertex positions."""
        tri2 = self.tri.with_positions(finite_pts)
        dev_old = self.dev
        # recompute the root anchor on the moved geometry
        probe = _AnchorProbe(tri2, finite_pts)
        a_new = probe.anchor(0)
        a_old = dev_old.anchors[0]
        old = dev_old.anchor_args[0]
        delta = _wrap(np.angle(a_new - finite_pts) - np.angle(a_old - dev_old.pts))
        return old + delta

    def period_cocycle(self) -> "Cocycle":
        if self._cocycle is None:
            z = self.period_values()
            self._cocycle = Cocycle(tuple(z), monodromy(self.weight), self)
        return self._cocycle


class _AnchorProbe:
    """Anchor computation on a bare triangulation (no branch development)."""

    def __init__(self, tri, pts):
        self.tri = tri
        self.pts = pts

    def anchor(self, t):
        inf_v = self.tri.infinity_vertex
        verts = self.tri.triangles[t]
        if inf_v not in verts:
            return sum(complex(self.tri.points[v]) for v in verts) / 3.0
        return _wedge_anchor(self.tri, t, self.pts)


def _tri_chart(w: Weight, tri: Triangulation):
    pts = tri.finite_positions()
    exps = np.array(w.mu[:-1])
    mu_inf = w.mu[-1]
    if not is_infinity(tri.points[-1]):
        raise ValueError("triangulation must have its vertex at infinity last")
    if len(pts) != w.n - 1:
        raise ValueError("weight length does not match the triangulation")
    return pts, exps, mu_inf, None


@dataclass(frozen=True)
class Cocycle:
    """Edge-indexed complex values satisfying the twisted cocycle conditions."""

    values: tuple
    twisting: MonodromyDatum
    space: CocycleSpace

    def value(self, edge_id: int, reverse: bool = False) -> complex:
        v = self.values[edge_id]
        return -v if reverse else v

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=complex)

    def triangle_residual(self) -> float:
        return float(np.max(self.space.residuals(self.as_array())))

    def coords(self) -> np.ndarray:
        return self.space.project(self.as_array())


def cocycle_space(w: Weight, t: Triangulation, tol: float = DEFAULT_TOL) -> CocycleSpace:
    """Assemble the twisted cocycle space of a triangulation; dim must be n - 2."""
    return CocycleSpace(w, t, tol=tol)


def cocycle_from_periods(w: Weight, c: Configuration, t: Triangulation,
                         tol: float = DEFAULT_TOL) -> Cocycle:
    """Period cocycle of a configuration over its triangulation."""
    pts = t.finite_positions()
    cf = c.finite_values()
    if len(pts) != len(cf) or np.max(np.abs(pts - cf)) > 1e-12 * max(1.0, np.max(np.abs(pts))):
        raise ValueError("triangulation was built for a different configuration")
    return CocycleSpace(w, t, tol=tol, config=c).period_cocycle()


def area_form(space: CocycleSpace) -> np.ndarray:
    """Gram matrix of the hermitian area form in the cocycle basis."""
    return space.area_gram.copy()


def area_by_quadrature(w: Weight, c: Configuration, rel_tol: float = 1e-4) -> float:
    """Total cone-metric area by direct 2-D quadrature of prod |z - m_j|^(-2 mu_j).

    Independent of the cocycle machinery: the plane is cut into Delaunay
    triangles over the marked points plus a surrounding ring, with Duffy
    power substitutions at singular vertices, and polar wedges with an
    endpoint substitution covering the exterior out to infinity.
    """
    if not c.is_chart():
        raise ValueError("configuration must be in the chart with infinity last")
    pts = c.finite_values()
    exps = np.array(w.mu[:-1])
    mu_inf = w.mu[-1]
    scale = max(1.0, float(np.max(np.abs(pts))))
    R = 2.0 * scale + 2.0
    K = 24
    ring = R * np.exp(2j * math.pi * (np.arange(K) + 0.031) / K) \
        * (1.0 + 1e-3 * np.sin(2.7 * np.arange(K)))
    nodes = np.concatenate([pts, ring])
    xy = np.column_stack([nodes.real, nodes.imag])
    tri = Delaunay(xy)

    def density(z):
        d = np.abs(z[..., None] - pts[None, :])
        return np.exp(-2.0 * (np.log(d) @ exps))

    # split triangles until each has at most one marked vertex, which then
    # sits at a corner
    work = []
    for s in tri.simplices:
        work.append(tuple(complex(*xy[v]) for v in s))
    pieces = []
    marked = set(pts.tolist())
    while work:
        (a, b, cc) = work.pop()
        flags = [v in marked for v in (a, b, cc)]
        if sum(flags) <= 1:
            if flags[1]:
                a, b, cc = b, cc, a
            elif flags[2]:
                a, b, cc = cc, a, b
            pieces.append((a, b, cc, flags[0] or flags[1] or flags[2]))
        else:
            ab, bc, ca = 0.5 * (a + b), 0.5 * (b + cc), 0.5 * (cc + a)
            work.extend([(a, ab, ca), (b, bc, ab), (cc, ca, bc), (ab, bc, ca)])

    piece_tol = 0.25 * rel_tol
    total = 0.0
    err = 0.0
    for (v0, v1, v2, singular) in pieces:
        J0 = abs(((v1 - v0).conjugate() * (v2 - v0)).imag)  # twice the area
        if J0 == 0:
            continue
        if singular:
            mu_v = float(exps[np.argmin(np.abs(pts - v0))])
            q = 1.0 / (2.0 - 2.0 * mu_v)
            keep = np.abs(pts - v0) > 1e-13 * scale
            pr, er = pts[keep], exps[keep]

            def f(u, s2, v0=v0, v1=v1, v2=v2, q=q, mu_v=mu_v, pr=pr, er=er):
                edge = (1 - s2) * v1 + s2 * v2 - v0
                z = v0 + (u ** q) * edge
                d = np.abs(z[..., None] - pr)
                g = np.exp(-2.0 * (np.log(d) @ er))
                return q * np.abs(edge) ** (-2.0 * mu_v) * g
        else:
            def f(u, s2, v0=v0, v1=v1, v2=v2):
                edge = (1 - s2) * v1 + s2 * v2 - v0
                z = v0 + u * edge
                return u * density(z)

        v, e = quad2d(f, piece_tol)
        total += J0 * v
        err += J0 * e

    # exterior wedges: region beyond each hull chord out to infinity
    hull = ConvexHull(xy)
    hv = [int(i) for i in hull.vertices]
    q_inf = 1.0 / (2.0 - 2.0 * mu_inf)
    for idx in range(len(hv)):
        a = nodes[hv[idx]]
        b = nodes[hv[(idx + 1) % len(hv)]]
        J0 = abs(((b - a).conjugate() * a).imag)
        if J0 == 0:
            continue

        def f(u, s2, a=a, b=b):
            sig = u ** q_inf
            P = (1 - s2) * a + s2 * b
            d = np.abs(P[..., None] - sig[..., None] * pts)
            return q_inf * np.exp(-2.0 * (np.log(d) @ exps))

        v, e = quad2d(f, piece_tol)
        total += J0 * v
        err += J0 * e

    if err > 0.5 * rel_tol * total:
        raise CrossCheckFailure(
            f"2-D quadrature error estimate {err:.2e} too large for target {rel_tol}"
        )
    return float(total)


def total_area(w: Weight, c: Configuration, t: Triangulation | None = None,
               cross_check: bool = True, rel_tol: float = 1e-3,
               quad_tol: float = 1e-4) -> float:
    """Total area of the cone metric of a chart configuration.

    Computed from the period cocycle through the area form; when
    `cross_check` is set the independent 2-D quadrature must agree within
    `rel_tol` or CrossCheckFailure is raised.
    """
    if t is None:
        t = build_triangulation(c)
    space = CocycleSpace(w, t, config=c)
    a = space.developed_area()
    if a <= 0:
        raise OrientationInconsistent(f"developed area {a} is not positive")
    if cross_check:
        b = area_by_quadrature(w, c, rel_tol=quad_tol)
        if abs(a - b) / abs(b) > rel_tol:
            raise CrossCheckFailure(
                f"cocycle area {a!r} vs quadrature {b!r}: relative gap "
                f"{abs(a - b) / abs(b):.2e} exceeds {rel_tol}"
            )
    return a


@dataclass(frozen=True)
class ConeMetric:
    """A Euclidean cone metric on the sphere presented by its period cocycle."""

    cocycle: Cocycle
    cone_angles: tuple
    total_area: float


def build_cone_metric(w: Weight, c: Configuration, t: Triangulation | None = None,
                      cross_check: bool = False) -> ConeMetric:
    if t is None:
        t = build_triangulation(c)
    space = CocycleSpace(w, t, config=c)
    coc = space.period_cocycle()
    area = space.developed_area()
    if area <= 0:
        raise OrientationInconsistent(f"developed area {area} is not positive")
    if cross_check:
        b = area_by_quadrature(w, c)
        if abs(area - b) / abs(b) > 1e-3:
            raise CrossCheckFailure(f"area {area} vs quadrature {b}")
    angles = tuple(TWO_PI * (1.0 - m) for m in w.mu)
    return ConeMetric(coc, angles, area)


def triangulation_to_json(t: Triangulation) -> dict:
    """Vertices, edges and triangles in a plain JSON-ready structure."""
    pts = []
    for p in t.points:
        pts.append("inf" if is_infinity(p) else [p.real, p.imag])
    edges = []
    for e in t.edges:
        edges.append({
            "tail": e.tail,
            "head": e.head,
            "waypoints": [[z.real, z.imag] for z in e.waypoints],
            "ray_dir": None if e.ray_dir is None else [e.ray_dir.real, e.ray_dir.imag],
        })
    return {
        "n": t.n,
        "points": pts,
        "edges": edges,
        "triangles": [list(tr) for tr in t.triangles],
        "triangle_edges": [[[eid, sign] for eid, sign in slots] for slots in t.tri_edges],
    }
