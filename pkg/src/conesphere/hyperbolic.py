"""The hermitian period pairing, ball-model distance, and parallel transport.

Period vectors live in the twisted cocycle space of a triangulated
configuration (the frame); the pairing psi is the area form divided by pi,
with signature (1, n - 3), and the induced distance is normalized to constant
holomorphic sectional curvature -4.

Parallel transport along a path of configurations keeps the edge coordinates
of flat classes literally constant while the combinatorial edge system stays
fixed; all holonomy therefore accumulates in change-of-system maps, computed
by matching period vectors of sampled nearby configurations in both systems.
Edges deform by isotopy as marked points move: when a point crosses an edge a
polygonal detour is spliced in on the side the point came from, and the
system is immediately rebuilt through such a map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import QhullError

from .cone_metric import (
    CocycleSpace,
    EdgePath,
    Triangulation,
    _clip_arc,
    build_triangulation,
    delaunay_key,
)
from .errors import (
    FrameMismatch,
    HolonomyNotElliptic,
    NonPositiveVector,
    PathHitsDiagonal,
    RankDeficient,
    RemeshFailure,
)
from .geometry import (
    min_pairwise_distance,
    pair_min_distance_on_motion,
    polyline_crossings,
    polyline_point_distance,
)
from .periods import DEFAULT_TOL, _wrap
from .weights import Configuration, Weight, configuration

TWO_PI = 2.0 * math.pi


class HermitianFrame:
    """A bare hermitian form of signature (1, k), with no geometry attached."""

    def __init__(self, psi_gram):
        self.psi_gram = np.asarray(psi_gram, dtype=complex)


@dataclass(frozen=True)
class PeriodVector:
    """Coordinates of a cohomology class in a fixed cocycle-space frame."""

    coords: tuple
    frame: object

    def __post_init__(self):
        v = np.asarray(self.coords, dtype=complex)
        if len(v) != self.frame.psi_gram.shape[0]:
            raise FrameMismatch("coordinate length does not match the frame")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=complex)

    def self_pairing(self) -> float:
        return float(np.real(psi(self, self)))


@dataclass(frozen=True)
class BallPoint:
    """A positive period vector up to complex scale: a point of the ball model."""

    vector: PeriodVector

    def __post_init__(self):
        if self.vector.self_pairing() <= 0:
            raise NonPositiveVector("ball points require a positive vector")


def psi(v1: PeriodVector, v2: PeriodVector) -> complex:
    """Hermitian period pairing, linear in the first slot.

    For the period vector of a configuration, pi * psi(v, v) equals the area
    of its cone metric.
    """
    if v1.frame is not v2.frame:
        raise FrameMismatch("period vectors live in different frames")
    G = v1.frame.psi_gram
    return complex(v2.as_array().conj() @ G @ v1.as_array())


def period_vector(w: Weight, c: Configuration | None = None,
                  frame: CocycleSpace | None = None) -> PeriodVector:
    """The class of the weighted form in the frame of a configuration.

    Raises NonPositiveVector when the pairing is not positive, which for a
    genuine configuration signals a numerical failure.
    """
    if frame is None:
        if c is None:
            raise ValueError("need a configuration or a frame")
        from .weights import normalize
        cn, _ = normalize(c)
        frame = CocycleSpace(w, build_triangulation(cn), config=cn)
    v = PeriodVector(tuple(frame.project(frame.period_values())), frame)
    if v.self_pairing() <= 0:
        raise NonPositiveVector(f"psi(v, v) = {v.self_pairing()!r} is not positive")
    return v


def _gram_distance(G, a, b) -> float:
    aa = float(np.real(a.conj() @ G @ a))
    bb = float(np.real(b.conj() @ G @ b))
    if aa <= 0 or bb <= 0:
        raise NonPositiveVector("distance requires positive vectors")
    ab = complex(b.conj() @ G @ a)
    ratio = (abs(ab) ** 2) / (aa * bb)
    return float(np.arccosh(math.sqrt(max(ratio, 1.0))))


def distance(b1: BallPoint, b2: BallPoint) -> float:
    """Ball-model distance, holomorphic sectional curvature -4 normalization.

    d = arccosh sqrt( psi(v,w) psi(w,v) / (psi(v,v) psi(w,w)) ); scale
    invariant in both arguments.
    """
    v, w = b1.vector, b2.vector
    if v.frame is not w.frame:
        raise FrameMismatch("ball points live in different frames")
    return _gram_distance(v.frame.psi_gram, v.as_array(), w.as_array())


# --- parallel transport ------------------------------------------------------

@dataclass(frozen=True)
class Transport:
    """Linear identification of period frames at the ends of a path."""

    matrix: np.ndarray
    start_frame: CocycleSpace
    end_frame: CocycleSpace

    def apply(self, v: PeriodVector) -> PeriodVector:
        if v.frame is not self.start_frame:
            raise FrameMismatch("vector does not live in the transport's start frame")
        return PeriodVector(tuple(self.matrix @ v.as_array()), self.end_frame)

    def form_residual(self) -> float:
        G0 = self.start_frame.psi_gram
        G1 = self.end_frame.psi_gram
        M = self.matrix
        return float(np.linalg.norm(M.conj().T @ G1 @ M - G0) / np.linalg.norm(G0))


@dataclass(frozen=True)
class LoopHolonomy:
    """Holonomy of a closed configuration-space loop, in the base frame."""

    matrix: np.ndarray
    base: CocycleSpace

    def form_residual(self) -> float:
        G = self.base.psi_gram
        M = self.matrix
        return float(np.linalg.norm(M.conj().T @ G @ M - G) / np.linalg.norm(G))

    def to_json(self) -> dict:
        return {"matrix": [[[z.real, z.imag] for z in row] for row in self.matrix]}


def _free_points(c: Configuration) -> np.ndarray:
    if not c.is_normalized():
        raise ValueError("transport paths must consist of normalized configurations")
    return np.array([complex(p) for p in c.points[:-3]], dtype=complex)


def _config_from_free(free) -> Configuration:
    from .weights import INFINITY
    return configuration(list(free) + [0, 1, INFINITY])


class _TransportEngine:
    """Stepper maintaining (frame, dragged edge geometry, branch data, map)."""

    def __init__(self, w: Weight, c0: Configuration, tol=DEFAULT_TOL,
                 step_factor=1e-2):
        self.w = w
        self.tol = tol
        self.step_factor = step_factor
        self.free = _free_points(c0)
        self.base_frame = self._canonical_frame()
        self.frame = self.base_frame
        self.tri = self.base_frame.tri
        self.root_args = self.base_frame.dev.anchor_args[0].copy()
        self.key = self._key()
        self.bent = False
        d = self.base_frame.dim
        self.matrix = np.eye(d, dtype=complex)

    # -- helpers

    def finite(self, free=None) -> np.ndarray:
        f = self.free if free is None else free
        return np.concatenate([f, np.array([0.0 + 0j, 1.0 + 0j])])

    def _canonical_frame(self) -> CocycleSpace:
        c = _config_from_free(self.free)
        return CocycleSpace(self.w, build_triangulation(c), config=c, tol=self.tol)

    def _key(self):
        try:
            return delaunay_key(self.finite())
        except QhullError:
            return ("degenerate",)

    def _arcs(self, tri):
        pts = tri.finite_positions()
        scale = max(1.0, float(np.max(np.abs(pts))))
        return [_clip_arc(e, 2.0 * scale + 3.0) for e in tri.edges]

    def _quality(self, tri) -> float:
        from .cone_metric import triangulation_clearance
        return triangulation_clearance(tri)

    def _ray_drift(self) -> float:
        """Largest angle between a dragged fan ray and the current outward one."""
        from .cone_metric import _delaunay_structure, _is_collinear
        pts = self.tri.finite_positions()
        if _is_collinear(pts):
            return 0.0
        try:
            _, _, dirs = _delaunay_structure(pts)
        except QhullError:
            return 0.0
        worst = 0.0
        for e in self.tri.edges:
            if e.is_ray and e.tail in dirs:
                worst = max(worst, abs(float(np.angle(e.ray_dir / dirs[e.tail]))))
        return worst

    # -- main leg driver

    def run_leg(self, target_free):
        target_free = np.asarray(target_free, dtype=complex)
        snap = 1e-14 * (1.0 + float(np.max(np.abs(target_free))))
        guard = 0
        while True:
            if np.max(np.abs(target_free - self.free)) <= snap:
                self.free = target_free.copy()
                self.tri = self.tri.with_positions(self.finite())
                return
            guard += 1
            if guard > 500_000:
                raise RemeshFailure("transport failed to make progress along a leg")
            # a dragged system stays a valid frame indefinitely (splices are
            # isotopies and do not change the winding data), so rebuilding is
            # an optimization: do it when the system is stale, but only once
            # both the current and the canonical geometry are healthy, never
            # next to an unavoidable degeneracy
            drift = self._ray_drift()
            stale = self.bent or drift > 1.0 or self._key() != self.key
            if stale:
                minpair = min_pairwise_distance(self.finite())
                q_cur = self._quality(self.tri)
                try:
                    from .cone_metric import triangulation_clearance
                    q_canon = triangulation_clearance(
                        build_triangulation(_config_from_free(self.free)))
                except Exception:
                    q_canon = 0.0
                if min(q_cur, q_canon) >= 0.02 * minpair or drift > 2.0:
                    self._remesh()
                    continue
            delta = target_free - self.free
            finite = self.finite()
            minpair = min_pairwise_distance(finite)
            maxdisp = float(np.max(np.abs(delta)))
            h = min(1.0, self.step_factor * minpair / maxdisp)
            # keep each point's motion below a fraction of its clearance from
            # non-incident arcs, with a floor so crossings do happen
            arcs = self._arcs(self.tri)
            for j in range(len(self.free)):
                dj = self._arc_clearance(j, arcs)
                allowed = max(0.3 * dj, 1e-3 * minpair)
                if abs(delta[j]) * h > allowed:
                    h = allowed / abs(delta[j])
            h = min(h, 1.0)
            while True:
                ok = self._try_substep(h * delta, arcs)
                if ok:
                    break
                h *= 0.5
                if h < 1e-12:
                    raise RemeshFailure("substep size underflow during transport")

    def _arc_clearance(self, j, arcs):
        p = self.free[j]
        out = np.inf
        for eid, e in enumerate(self.tri.edges):
            if j in (e.tail, e.head):
                continue
            out = min(out, polyline_point_distance(arcs[eid], p))
        return out

    def _try_substep(self, step, arcs) -> bool:
        """Attempt one substep; False asks the caller to halve it."""
        new_free = self.free + step
        finite_old = self.finite()
        finite_new = self.finite(new_free)
        scale = max(1.0, float(np.max(np.abs(finite_new))))
        # diagonal guard over the linear motion
        m = len(finite_old)
        for a in range(m):
            for b in range(a + 1, m):
                if pair_min_distance_on_motion(finite_old[a], finite_new[a],
                                               finite_old[b], finite_new[b]) \
                        < 1e-9 * scale:
                    raise PathHitsDiagonal("marked points collide along the path")
        # root branch continuation must stay well within a half-turn
        tri_new = self.tri.with_positions(finite_new)
        from .cone_metric import _AnchorProbe
        a_old = _AnchorProbe(self.tri, finite_old).anchor(0)
        a_new = _AnchorProbe(tri_new, finite_new).anchor(0)
        dargs = _wrap(np.angle(a_new - finite_new) - np.angle(a_old - finite_old))
        if np.max(np.abs(dargs)) > 0.5 * math.pi:
            return False
        # crossing events: marked point j passing through non-incident edge eid
        arcs_new = self._arcs(tri_new)
        events = []
        for j in range(m):
            if finite_old[j] == finite_new[j]:
                continue
            for eid, e in enumerate(self.tri.edges):
                if j in (e.tail, e.head):
                    continue
                if self._point_edge_event(finite_old[j], finite_new[j],
                                          arcs[eid], arcs_new[eid], scale):
                    events.append((j, eid))
        if len({eid for _, eid in events}) < len(events):
            return False  # two points crossed one edge in one substep
        # commit
        self.free = new_free
        prev_tri, prev_args = self.tri, self.root_args
        self.tri = tri_new
        self.root_args = self.root_args + dargs
        for j, eid in events:
            self._splice(eid, complex(finite_new[j]),
                         complex(finite_new[j] - finite_old[j]))
        from .cone_metric import _validate_realization
        if _validate_realization(self.tri) is not None:
            # arcs started to scissor without a marked point crossing; back
            # out and rebuild from the still-valid previous geometry
            self.free = new_free - step
            self.tri, self.root_args = prev_tri, prev_args
            self._remesh()
            return False
        if events:
            self.bent = True
        return True

    @staticmethod
    def _point_edge_event(p_old, p_new, arc_old, arc_new, scale) -> bool:
        """Did the point cross the (moving) arc during this substep?"""
        # displacement of the arc near the point, to first order
        d = [abs(v - p_old) for v in arc_old]
        i = int(np.argmin(d))
        u = arc_new[i] - arc_old[i]
        rel = [p_old, p_new - u]
        c, t = polyline_crossings(rel, arc_old, 1e-11)
        return (c + t) > 0

    def _splice(self, eid, p, motion):
        """Reroute edge eid around marked point p on the side it came from."""
        e = self.tri.edges[eid]
        pts = self.tri.finite_positions()
        others = np.abs(pts - p)
        others = others[others > 0]
        rho = 0.25 * float(np.min(others))
        ext = list(e.waypoints)
        tail_cut = None
        if e.is_ray:
            L = rho + abs(ext[-1] - p) + 1.0
            ext.append(ext[-1] + e.ray_dir * L)
            tail_cut = len(ext) - 1
        new_pts = _detour_splice(ext, p, rho, -motion / abs(motion))
        if new_pts is None:
            raise RemeshFailure("failed to splice a detour around a crossing point")
        if e.is_ray:
            # drop the synthetic far endpoint; the ray continues from the exit
            new_pts = new_pts[:-1]
        edges = list(self.tri.edges)
        edges[eid] = EdgePath(e.tail, e.head, tuple(new_pts), e.ray_dir)
        self.tri = Triangulation(self.tri.points, tuple(edges),
                                 self.tri.triangles, self.tri.tri_edges)

    def _remesh(self, target_frame: CocycleSpace | None = None):
        """Replace the dragged edge system by a fresh canonical one."""
        S_old = CocycleSpace(self.w, self.tri, root_args=self.root_args,
                             tol=self.tol)
        if not np.allclose(S_old.constraints, self.frame.constraints,
                           rtol=0, atol=1e-9):
            raise RemeshFailure(
                "winding data drifted between remeshes (missed crossing?)"
            )
        if target_frame is None:
            S_new = self._canonical_frame()
        else:
            S_new = target_frame
        if _same_system(S_old, S_new):
            M = np.eye(S_old.dim, dtype=complex)
        else:
            M = _frame_map(S_old, S_new, self.free)
        self.matrix = M @ self.matrix
        self.frame = S_new
        self.tri = S_new.tri
        self.root_args = S_new.dev.anchor_args[0].copy()
        self.key = self._key()
        self.bent = False

    def finish(self, target_frame: CocycleSpace | None = None):
        self._remesh(target_frame)


def _detour_splice(waypoints, p, rho, back_dir, n_arc=10):
    """Replace the portion of a polyline inside |z - p| < rho by a circular
    detour passing on the side of `back_dir`."""
    # entry and exit parameters along the polyline
    hits = []
    for i in range(len(waypoints) - 1):
        a, b = waypoints[i], waypoints[i + 1]
        u = b - a
        L = abs(u)
        if L == 0:
            continue
        un = u / L
        B = ((a - p) * np.conj(un)).real
        C = abs(a - p) ** 2 - rho ** 2
        disc = B * B - C
        if disc <= 0:
            continue
        for t in (-B - math.sqrt(disc), -B + math.sqrt(disc)):
            if 0 <= t <= L:
                hits.append((i, t))
    if len(hits) < 2:
        return None
    (i1, t1), (i2, t2) = hits[0], hits[-1]
    a1 = waypoints[i1] + t1 * (waypoints[i1 + 1] - waypoints[i1]) / abs(waypoints[i1 + 1] - waypoints[i1])
    a2 = waypoints[i2] + t2 * (waypoints[i2 + 1] - waypoints[i2]) / abs(waypoints[i2 + 1] - waypoints[i2])
    phi1 = float(np.angle(a1 - p))
    phi2 = float(np.angle(a2 - p))
    phi_back = float(np.angle(back_dir))
    d_pos = (phi2 - phi1) % TWO_PI
    mid_pos = phi1 + 0.5 * d_pos
    if abs(_wrap(mid_pos - phi_back)) <= abs(_wrap(mid_pos + math.pi - phi_back)):
        phis = phi1 + d_pos * np.linspace(0, 1, n_arc + 2)
    else:
        phis = phi1 + (d_pos - TWO_PI) * np.linspace(0, 1, n_arc + 2)
    ring = [p + rho * complex(math.cos(ph), math.sin(ph)) for ph in phis]
    return list(waypoints[: i1 + 1]) + ring + list(waypoints[i2 + 1:])


def _same_system(S_a: CocycleSpace, S_b: CocycleSpace) -> bool:
    """True when two edge systems are geometrically the same frame."""
    ta, tb = S_a.tri, S_b.tri
    if ta.combinatorial_key() != tb.combinatorial_key():
        return False
    scale = max(1.0, float(np.max(np.abs(ta.finite_positions()))))
    for ea, eb in zip(ta.edges, tb.edges):
        if (ea.tail, ea.head) != (eb.tail, eb.head):
            return False
        if len(ea.waypoints) != len(eb.waypoints):
            return False
        if max(abs(a - b) for a, b in zip(ea.waypoints, eb.waypoints)) > 1e-9 * scale:
            return False
        if (ea.ray_dir is None) != (eb.ray_dir is None):
            return False
        if ea.ray_dir is not None and abs(ea.ray_dir - eb.ray_dir) > 1e-9:
            return False
    if np.max(np.abs(S_a.dev.anchor_args[0] - S_b.dev.anchor_args[0])) > 1e-9:
        return False
    if np.abs(S_a.constraints - S_b.constraints).max() > 1e-12:
        return False
    return True


def _frame_map(S_old: CocycleSpace, S_new: CocycleSpace, free) -> np.ndarray:
    """Flat identification of two edge systems at the same configuration.

    Matches period vectors of the base configuration and of central-difference
    samples along several configuration directions; the matched columns span
    the cocycle space generically, pinning the linear map.  Near a collision
    the single-point directions respond almost oppositely, so pair
    translations are sampled too and the best-conditioned columns are picked
    by pivoted QR.  The map must preserve the area form.
    """
    from scipy.linalg import qr

    free = np.asarray(free, dtype=complex)
    n_free = len(free)
    finite = np.concatenate([free, np.array([0.0 + 0j, 1.0 + 0j])])
    v0 = S_old.project(S_old.period_values())
    w0 = S_new.project(S_new.period_values())
    # perturbations must not flip any thin triangle of either system
    from .cone_metric import triangulation_clearance
    clr = min(triangulation_clearance(S_old.tri), triangulation_clearance(S_new.tri))

    dirs = []
    for k in range(n_free):
        d = np.zeros(n_free)
        d[k] = 1.0
        dirs.append(d)
    for j in range(n_free):
        for i in range(j + 1, n_free):
            d = np.zeros(n_free)
            d[j] = d[i] = 1.0 / math.sqrt(2.0)
            dirs.append(d)

    cols_v, cols_w, raw = [], [], []
    for d in dirs:
        caps = []
        for k in range(n_free):
            if d[k] == 0:
                continue
            others = np.abs(finite - finite[k])
            caps.append(0.02 * float(np.min(others[others > 0])) / abs(d[k]))
        eps = min(min(caps), 0.2 * clr)
        step = np.concatenate([eps * d, [0.0, 0.0]])
        cvp = S_old.coords_at(finite + step)
        cwp = S_new.coords_at(finite + step)
        cvm = S_old.coords_at(finite - step)
        cwm = S_new.coords_at(finite - step)
        raw.extend([(cvp, cwp), (cvm, cwm)])
        cols_v.append((cvp - cvm) / 2.0)
        cols_w.append((cwp - cwm) / 2.0)
    D_v = np.column_stack(cols_v)
    D_w = np.column_stack(cols_w)
    norms = np.linalg.norm(D_v, axis=0)
    norms[norms == 0] = 1.0
    D_v = D_v / norms
    D_w = D_w / norms
    _, _, piv = qr(D_v, pivoting=True, mode="economic")
    take = piv[: len(v0) - 1]
    V = np.column_stack([v0] + [D_v[:, k] for k in take])
    W = np.column_stack([w0] + [D_w[:, k] for k in take])
    cond = np.linalg.cond(V)
    if cond > 1e9:
        raise RemeshFailure(f"frame-matching samples are degenerate (cond {cond:.1e})")
    M = W @ np.linalg.inv(V)
    # verify on the raw one-sided samples
    for cv, cw in raw:
        r = np.linalg.norm(M @ cv - cw) / max(np.linalg.norm(cw), 1e-300)
        if r > 1e-6:
            raise RemeshFailure(f"frame map residual {r:.2e} too large")
    G0, G1 = S_old.area_gram, S_new.area_gram
    fr = np.linalg.norm(M.conj().T @ G1 @ M - G0) / np.linalg.norm(G0)
    if fr > 1e-6:
        raise RemeshFailure(f"frame map breaks the area form by {fr:.2e}")
    return M


def transport(w: Weight, path, tol: float = DEFAULT_TOL,
              step_factor: float = 1e-2) -> Transport:
    """Parallel transport of period frames along a configuration-space path.

    `path` is a sequence of normalized configurations; free points move
    linearly between consecutive entries.  Returns the frame identification
    from the canonical frame at the start to the canonical frame at the end.
    """
    if len(path) < 2:
        eng = _TransportEngine(w, path[0], tol=tol, step_factor=step_factor)
        return Transport(eng.matrix, eng.base_frame, eng.base_frame)
    eng = _TransportEngine(w, path[0], tol=tol, step_factor=step_factor)
    for c in path[1:]:
        eng.run_leg(_free_points(c))
    eng.finish()
    return Transport(eng.matrix, eng.base_frame, eng.frame)


def loop_holonomy(w: Weight, loop, tol: float = DEFAULT_TOL,
                  step_factor: float = 1e-2) -> LoopHolonomy:
    """Holonomy of a closed polyline of normalized configurations.

    The final frame is remeshed into the base frame itself, so the matrix
    acts on the base frame's coordinates and preserves its hermitian form.
    The convention is the monodromy of period vectors: the matrix expresses
    pairings with the loop-continued edge classes in terms of pairings with
    the original ones, so the vanishing period of a counterclockwise
    collision meridian picks up its branch factor directly.  Holonomies of
    concatenated loops (first segment first) compose left to right:
    hol(a.b) = hol(a) @ hol(b).
    """
    start = _free_points(loop[0])
    end = _free_points(loop[-1])
    if np.max(np.abs(start - end)) > 0:
        raise ValueError("loop is not closed")
    eng = _TransportEngine(w, loop[0], tol=tol, step_factor=step_factor)
    for c in loop[1:]:
        eng.run_leg(_free_points(c))
    eng.finish(target_frame=eng.base_frame)
    return LoopHolonomy(np.linalg.inv(eng.matrix), eng.base_frame)


def elliptic_rotation_angle(hol: LoopHolonomy):
    """Rotation angle of a complex-reflection-like holonomy.

    Returns (angle, kind) with angle = arg(lambda_rot / lambda_fix) in
    [0, 2*pi), where lambda_fix is the eigenvalue of the unique positive
    eigenvector and lambda_rot belongs to the most distant negative
    eigenvalue.  kind is "elliptic" or "parabolic" (eigenvalues clustered but
    the matrix is not diagonalizable, the cusp case).
    """
    M = hol.matrix
    G = hol.base.psi_gram
    ev, V = np.linalg.eig(M)
    norms = np.real(np.einsum("ij,ik,kj->j", V.conj(), G, V))
    pos = int(np.argmax(norms))
    if norms[pos] <= 0:
        raise HolonomyNotElliptic("no positive eigenvector; holonomy not elliptic")
    lam_p = ev[pos]
    ratios = ev / lam_p
    chordal = np.abs(ratios - 1.0)
    chordal[pos] = -1.0
    rot = int(np.argmax(chordal))
    spread = float(chordal[rot])
    if spread < 1e-4:
        # eigenvalues cluster; distinguish identity-like from parabolic by the
        # conditioning of the eigenvector matrix
        if np.linalg.cond(V) > 1e6:
            return 0.0, "parabolic"
        return 0.0, "elliptic"
    angle = float(np.angle(ratios[rot])) % TWO_PI
    return angle, "elliptic"


def local_biholomorphism_check(w: Weight, c: Configuration,
                               step: float = 1e-5) -> float:
    """Condition number of the finite-difference Jacobian of the period map.

    The map sends the n - 3 free points of a normalized configuration to the
    affine chart of the projective period coordinates; full rank n - 3
    certifies a local biholomorphism at the sample point.  Raises
    RankDeficient otherwise.
    """
    from .weights import normalize
    cn, _ = normalize(c)
    frame = CocycleSpace(w, build_triangulation(cn), config=cn)
    free = _free_points(cn)
    n_free = len(free)
    v0 = frame.project(frame.period_values())
    pivot = int(np.argmax(np.abs(v0)))

    def affine(v):
        a = v / v[pivot]
        return np.delete(a, pivot)

    finite = np.concatenate([free, np.array([0.0 + 0j, 1.0 + 0j])])
    cols = []
    for k in range(n_free):
        fp = finite.copy()
        fm = finite.copy()
        fp[k] += step
        fm[k] -= step
        cols.append((affine(frame.coords_at(fp)) - affine(frame.coords_at(fm)))
                    / (2 * step))
    J = np.column_stack(cols)
    s = np.linalg.svd(J, compute_uv=False)
    if s[-1] <= 1e-9 * s[0] or s[-1] == 0:
        raise RankDeficient(
            f"period map differential is rank deficient: singular values {s}"
        )
    return float(s[0] / s[-1])


def metric_curvature_probe(w: Weight, base_free: complex = 0.35 + 0.9j,
                           radii=(0.02, 0.03, 0.04, 0.055, 0.07, 0.085),
                           n_dirs: int = 48) -> float:
    """Fitted Gaussian curvature of the induced metric for n = 4.

    Measures circumferences of small metric circles around a base
    configuration and fits C(r)/(2 pi r) = a - (K/6) r^2 (the classical
    small-circle expansion), returning K.  Under the curvature -4
    normalization of `distance` the fit lands near -4.
    """
    if w.n != 4:
        raise ValueError("the curvature probe works on the n = 4 family")
    from .weights import INFINITY
    c0 = configuration([base_free, 0, 1, INFINITY])
    frame = CocycleSpace(w, build_triangulation(c0), config=c0)
    G = frame.psi_gram
    v0 = frame.project(frame.period_values())

    def coords(x):
        return frame.coords_at(np.array([x, 0.0 + 0j, 1.0 + 0j]))

    def dist_base(x):
        return _gram_distance(G, v0, coords(x))

    # local metric density, for the initial guess of euclidean radii
    e0 = 1e-4 * min(abs(base_free), abs(base_free - 1))
    lam = dist_base(base_free + e0) / e0

    ys = []
    for r in radii:
        circle = []
        for phi in np.linspace(0.0, TWO_PI, n_dirs, endpoint=False):
            u = complex(math.cos(phi), math.sin(phi))
            rho = r / lam
            for _ in range(60):
                d = dist_base(base_free + rho * u)
                if abs(d - r) <= 1e-8 * r:
                    break
                rho *= r / d
            circle.append(coords(base_free + rho * u))
        total = 0.0
        for i in range(n_dirs):
            total += _gram_distance(G, circle[i], circle[(i + 1) % n_dirs])
        ys.append(total / (TWO_PI * r))
    # fit y = a + b r^2; the discretization bias of the chordal sum is
    # r-independent and lands in a, not in b
    r2 = np.array(radii) ** 2
    A = np.column_stack([np.ones_like(r2), r2])
    coef, *_ = np.linalg.lstsq(A, np.array(ys), rcond=None)
    return float(-6.0 * coef[1])
