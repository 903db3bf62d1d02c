"""Branch-tracked contour integration of the multivalued 1-form.

The integrand attached to a weighted configuration is

    prod_j (z - m_j)**(-mu_j) dz

taken over the finite marked points (the factor of a point at infinity is
dropped; the exponent identity sum mu_j = 2 makes the form regular there).
Branches are fixed by tracking a continuous argument of each factor along the
integration path.  Endpoint singularities at marked points are removed
exactly by the power substitution t = s**(1/(1-mu)); the same device handles
the endpoint at infinity of ray paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EvaluationAtSingularity,
    PathThroughSingularity,
    QuadratureNoConvergence,
)
from .quadrature import panel_integrate
from .weights import Configuration, Weight, is_infinity

TWO_PI = 2.0 * math.pi

#: relative quadrature tolerance; failures are surfaced, never degraded
DEFAULT_TOL = 1e-11

#: detour radius factor for automatic paths, times the min pairwise distance
R_DETOUR_FACTOR = 1e-3


def _wrap(x):
    """Wrap to [-pi, pi)."""
    return (x + math.pi) % TWO_PI - math.pi


def chart_arrays(w: Weight, c: Configuration):
    """Finite marked points and exponents; exponent at infinity separately.

    Returns (pts, exps, mu_inf, finite_index) where finite_index maps
    configuration slots to positions in pts (or -1 for the infinite slot).
    """
    if w.n != c.n:
        raise ValueError(f"weight has n = {w.n} but configuration has n = {c.n}")
    pts, exps, index = [], [], []
    mu_inf = 0.0
    for j, p in enumerate(c.points):
        if is_infinity(p):
            mu_inf = w.mu[j]
            index.append(-1)
        else:
            index.append(len(pts))
            pts.append(complex(p))
            exps.append(w.mu[j])
    return np.array(pts, dtype=complex), np.array(exps), mu_inf, index


def principal_args(c: Configuration, z: complex) -> np.ndarray:
    """Principal arguments of (z - m_j) for each marked point (0 at infinity)."""
    out = np.zeros(c.n)
    for j, p in enumerate(c.points):
        if is_infinity(p):
            continue
        d = complex(z) - complex(p)
        if d == 0:
            raise EvaluationAtSingularity(f"z coincides with marked point {j + 1}")
        out[j] = math.atan2(d.imag, d.real)
    return out


class _Scaffold:
    """Continuously tracked arguments along a straight segment in the plane.

    For factor centers `pts`, stores sampled parameters and argument rows so
    that the continued argument at an arbitrary interior parameter can be
    recovered by unwrapping against the nearest sample (valid because samples
    are spaced so each factor turns by less than pi/2 between them).
    """

    MAX_STEPS = 200_000

    def __init__(self, pts: np.ndarray, args0: np.ndarray, z0: complex, z1: complex):
        self.pts = pts
        self.z0 = z0
        self.z1 = z1
        if len(pts) == 0:
            self.ts = np.array([0.0, 1.0])
            self.rows = np.zeros((2, 0))
            return
        ts = [0.0]
        rows = [np.array(args0, dtype=float)]
        t = 0.0
        cur = rows[0]
        zc = z0
        ang_c = np.angle(zc - pts)
        h = 1.0
        steps = 0
        while t < 1.0:
            h = min(h, 1.0 - t)
            while True:
                steps += 1
                if steps > self.MAX_STEPS:
                    raise PathThroughSingularity(
                        "argument tracking stalled; path passes through a marked point"
                    )
                zn = z0 + (t + h) * (z1 - z0)
                d = zn - pts
                if np.any(d == 0):
                    if h < 1e-15:
                        raise PathThroughSingularity(
                            "segment runs through a marked point"
                        )
                    h *= 0.5
                    continue
                ang_n = np.angle(d)
                dp = _wrap(ang_n - ang_c)
                if np.max(np.abs(dp)) <= 0.5 * math.pi:
                    break
                if h < 1e-15:
                    raise PathThroughSingularity("segment runs through a marked point")
                h *= 0.5
            cur = cur + dp
            t = t + h
            zc = zn
            ang_c = ang_n
            ts.append(t)
            rows.append(cur)
            h *= 2.0
        self.ts = np.array(ts)
        self.rows = np.vstack(rows)

    def end_args(self) -> np.ndarray:
        return self.rows[-1].copy()

    def args_at(self, t: np.ndarray) -> np.ndarray:
        """Continued argument rows at interior parameters t (shape (m, k))."""
        if len(self.pts) == 0:
            return np.zeros((len(t), 0))
        idx = np.clip(np.searchsorted(self.ts, t, side="right") - 1, 0, len(self.ts) - 1)
        z = self.z0 + np.asarray(t)[:, None] * (self.z1 - self.z0)
        zb = self.z0 + self.ts[idx][:, None] * (self.z1 - self.z0)
        d = z - self.pts[None, :]
        db = zb - self.pts[None, :]
        delta = _wrap(np.angle(d) - np.angle(db))
        return self.rows[idx] + delta


def continue_args(c: Configuration, args, z_from: complex, z_to: complex) -> np.ndarray:
    """Continue full-length argument data along the straight segment z_from -> z_to."""
    args = np.asarray(args, dtype=float)
    finite = [j for j, p in enumerate(c.points) if not is_infinity(p)]
    pts = np.array([complex(c.points[j]) for j in finite])
    scaf = _Scaffold(pts, args[finite], complex(z_from), complex(z_to))
    out = args.copy()
    out[finite] = scaf.end_args()
    return out


def continue_args_polyline(c: Configuration, args, vertices) -> np.ndarray:
    out = np.asarray(args, dtype=float)
    for a, b in zip(vertices[:-1], vertices[1:]):
        out = continue_args(c, out, a, b)
    return out


@dataclass(frozen=True)
class BranchPath:
    """Polyline integration path with chosen initial branch arguments.

    `start_args[j]` is the initial argument of (z_start - m_j); for a path
    starting at marked point m_s, slot s holds the limiting argument along
    the first segment (the direction argument).  Entries for a point at
    infinity are ignored.
    """

    vertices: tuple[complex, ...]
    start_args: tuple[float, ...]

    def __post_init__(self):
        if len(self.vertices) < 1:
            raise ValueError("path needs at least one vertex")

    @property
    def start(self) -> complex:
        return self.vertices[0]

    @property
    def end(self) -> complex:
        return self.vertices[-1]

    def reversed(self, end_args) -> "BranchPath":
        """Same polyline backwards, with supplied arguments at the old end."""
        return BranchPath(tuple(reversed(self.vertices)), tuple(end_args))


@dataclass(frozen=True)
class PeriodValue:
    """A contour integral of the weighted form along a branch path."""

    value: complex
    path: BranchPath
    error: float


@dataclass(frozen=True)
class MonodromyDatum:
    """Rotation of the form's branch under a positive loop around each point."""

    rotations: tuple[complex, ...]

    def loop_product(self, counts) -> complex:
        """Branch factor of a composite loop winding counts[j] times around m_j."""
        out = 1.0 + 0.0j
        for r, k in zip(self.rotations, counts):
            out *= r ** int(k)
        return out


def monodromy(w: Weight) -> MonodromyDatum:
    """rotation_j = exp(-2*pi*i*mu_j); depends only on the weight."""
    return MonodromyDatum(tuple(np.exp(-2j * math.pi * m) for m in w.mu))


def integrand_at(w: Weight, c: Configuration, z: complex, args) -> complex:
    """Evaluate prod |z - m_j|**(-mu_j) * exp(-i*mu_j*arg_j) at one point.

    `args` supplies the continued argument of each factor (full length n;
    infinite slots ignored).
    """
    pts, exps, _, index = chart_arrays(w, c)
    z = complex(z)
    d = z - pts
    if np.any(d == 0):
        raise EvaluationAtSingularity("z coincides with a marked point")
    a = np.asarray(args, dtype=float)
    finite_args = np.array([a[j] for j, k in enumerate(index) if k >= 0])
    logmag = -np.sum(exps * np.log(np.abs(d)))
    phase = -np.sum(exps * finite_args)
    return math.exp(logmag) * complex(math.cos(phase), math.sin(phase))


# --- piece integrators -------------------------------------------------------

def _grade_breaks(z_of_t, pts, t0=0.0, t1=1.0, depth=0, out=None):
    """Breakpoints splitting [t0, t1] until panel length < clearance."""
    if out is None:
        out = []
    if depth > 40:
        return out
    zm = z_of_t(0.5 * (t0 + t1))
    seg_len = abs(z_of_t(t1) - z_of_t(t0))
    clr = np.min(np.abs(zm - pts)) if len(pts) else np.inf
    if seg_len > 0.8 * clr and seg_len > 0:
        tm = 0.5 * (t0 + t1)
        _grade_breaks(z_of_t, pts, t0, tm, depth + 1, out)
        out.append(tm)
        _grade_breaks(z_of_t, pts, tm, t1, depth + 1, out)
    return out


_DYADIC = [2.0 ** -k for k in range(1, 11)]


def _product_values(t, z_of_t, scaffold, pts, exps):
    """Vectorized prod (z - m_j)**(-mu_j) with tracked arguments."""
    z = z_of_t(np.asarray(t))
    A = scaffold.args_at(np.asarray(t))
    d = z[:, None] - pts[None, :]
    r = np.abs(d)
    if np.any(r == 0):
        raise PathThroughSingularity("quadrature node hit a marked point")
    logmag = -(np.log(r) @ exps)
    phase = -(A @ exps)
    return np.exp(logmag + 1j * phase)


def _segment_regular(pts, exps, z0, z1, args0, tol):
    """Integral over straight segment [z0, z1]; no endpoint singularities."""
    scaf = _Scaffold(pts, args0, z0, z1)

    def z_of_t(t):
        return z0 + t * (z1 - z0)

    def f(t):
        return _product_values(t, z_of_t, scaf, pts, exps)

    breaks = _grade_breaks(z_of_t, pts)
    val, err = panel_integrate(f, tol, initial=breaks)
    return (z1 - z0) * val, abs(z1 - z0) * err, scaf.end_args()


def _segment_singular_start(pts, exps, s, z1, args0, tol):
    """Integral over [m_s, z1]; args0[s] is the direction argument.

    The singular factor is removed analytically:  with z = m_s + (z1-m_s)*u**p
    and p = 1/(1-mu_s), the integral equals

        (z1-m_s) * |z1-m_s|**(-mu_s) * exp(-i*mu_s*args0[s]) * p *
            integral_0^1 G(z(u)) du

    with G the product over the remaining factors.
    """
    a = pts[s]
    mu_s = exps[s]
    keep = np.arange(len(pts)) != s
    pts_r, exps_r = pts[keep], exps[keep]
    args_r = np.asarray(args0, dtype=float)[keep]
    scaf = _Scaffold(pts_r, args_r, a, z1)
    p = 1.0 / (1.0 - mu_s)

    def z_of_t(t):
        return a + (z1 - a) * np.asarray(t) ** p

    def f(u):
        u = np.asarray(u)
        tau = u ** p
        z = a + (z1 - a) * tau
        A = scaf.args_at(tau)
        d = z[:, None] - pts_r[None, :]
        r = np.abs(d)
        if np.any(r == 0):
            raise PathThroughSingularity("quadrature node hit a marked point")
        logmag = -(np.log(r) @ exps_r)
        phase = -(A @ exps_r)
        return np.exp(logmag + 1j * phase)

    breaks = sorted(set(_DYADIC + _grade_breaks(z_of_t, pts_r)))
    val, err = panel_integrate(f, tol, initial=breaks)
    L = abs(z1 - a)
    front = (z1 - a) * L ** (-mu_s) * np.exp(-1j * mu_s * args0[s]) * p
    args_end = np.asarray(args0, dtype=float).copy()
    args_end[keep] = scaf.end_args()
    # arg of (z - m_s) is constant along the segment
    return front * val, abs(front) * err, args_end


def _segment_singular_end(pts, exps, z0, e, args0, tol):
    """Integral over [z0, m_e]: reversed singular start, negated.

    The non-singular factors' arguments are continued from z0 to the marked
    endpoint first; slot e is constant along the segment and already holds
    the direction argument of the reversed path.
    """
    b = pts[e]
    keep = np.arange(len(pts)) != e
    scaf = _Scaffold(pts[keep], np.asarray(args0, dtype=float)[keep], z0, b)
    args_b = np.asarray(args0, dtype=float).copy()
    args_b[keep] = scaf.end_args()
    val, err, _ = _segment_singular_start(pts, exps, e, z0, args_b, tol)
    return -val, err, None


def _ray_piece(pts, exps, mu_inf, z0, direction, args0, tol, scale):
    """Integral over the ray z0 + t*direction, t in [0, inf).

    Written with z - m_j = num_j(s) / (1 - s) where
    num_j(s) = (z0 - m_j)(1 - s) + d*T*s is a straight segment in the plane,
    so magnitudes stay bounded and the net (1-s) exponent is exactly -mu_inf,
    removed by the endpoint power substitution.
    """
    if mu_inf <= 0.0:
        raise ValueError("ray paths need a marked point at infinity")
    d = direction / abs(direction)
    T = 1.0 + scale
    starts = z0 - pts          # num_j(0)
    ends = d * T * np.ones_like(pts)  # num_j(1)
    # track arguments of num_j along the straight segment starts -> ends;
    # reuse the scaffold machinery with a synthetic coordinate
    scaf = _NumScaffold(starts, ends, np.asarray(args0, dtype=float))
    p = 1.0 / (1.0 - mu_inf)

    def f(u):
        u = np.asarray(u)
        s = 1.0 - u ** p
        num = starts[None, :] * (1.0 - s)[:, None] + (d * T) * s[:, None]
        r = np.abs(num)
        if np.any(r == 0):
            raise PathThroughSingularity("ray passes through a marked point")
        A = scaf.args_at(s)
        logmag = -(np.log(r) @ exps)
        phase = -(A @ exps)
        return np.exp(logmag + 1j * phase)

    breaks = sorted(set(_DYADIC))
    val, err = panel_integrate(f, tol, initial=breaks)
    front = d * T * p
    return front * val, abs(front) * err


class _NumScaffold:
    """Argument tracking for factor numerators moving along straight segments.

    Unlike _Scaffold the factors move independently: factor j travels from
    starts[j] to ends[j] as s goes 0 -> 1.
    """

    MAX_STEPS = 200_000

    def __init__(self, starts, ends, args0):
        self.starts = starts
        self.ends = ends
        ss = [0.0]
        rows = [np.asarray(args0, dtype=float)]
        s = 0.0
        cur = rows[0]
        ang_c = np.angle(starts)
        h = 1.0
        steps = 0
        while s < 1.0:
            h = min(h, 1.0 - s)
            while True:
                steps += 1
                if steps > self.MAX_STEPS:
                    raise PathThroughSingularity("ray argument tracking stalled")
                num = starts * (1.0 - (s + h)) + ends * (s + h)
                if np.any(num == 0):
                    if h < 1e-15:
                        raise PathThroughSingularity("ray passes through a marked point")
                    h *= 0.5
                    continue
                ang_n = np.angle(num)
                dp = _wrap(ang_n - ang_c)
                if np.max(np.abs(dp)) <= 0.5 * math.pi:
                    break
                if h < 1e-15:
                    raise PathThroughSingularity("ray passes through a marked point")
                h *= 0.5
            cur = cur + dp
            s += h
            ang_c = ang_n
            ss.append(s)
            rows.append(cur)
            h *= 2.0
        self.ss = np.array(ss)
        self.rows = np.vstack(rows)

    def args_at(self, s):
        idx = np.clip(np.searchsorted(self.ss, s, side="right") - 1, 0, len(self.ss) - 1)
        num = self.starts[None, :] * (1.0 - np.asarray(s))[:, None] + \
            self.ends[None, :] * np.asarray(s)[:, None]
        numb = self.starts[None, :] * (1.0 - self.ss[idx])[:, None] + \
            self.ends[None, :] * self.ss[idx][:, None]
        delta = _wrap(np.angle(num) - np.angle(numb))
        return self.rows[idx] + delta


def _match_point(pts, z, scale):
    """Index of the marked point equal to z (exact or within 1e-13*scale)."""
    if len(pts) == 0:
        return None
    d = np.abs(pts - z)
    j = int(np.argmin(d))
    if d[j] <= 1e-13 * scale:
        return j
    return None


def integrate_polyline(pts, exps, vertices, args0, tol=DEFAULT_TOL,
                       ray_dir=None, mu_inf=0.0):
    """Core path integral over chart arrays.

    vertices is the finite polyline; if ray_dir is given the path continues
    from the last vertex to infinity along that direction.  args0 are the
    continued arguments of (z_start - m_j) at the first vertex (direction
    argument for a singular start).  Returns (value, error, args_at_end);
    args_at_end is None when the path terminates at a singular point or at
    infinity.
    """
    verts = [complex(v) for v in vertices]
    scale = float(max(1.0, np.max(np.abs(pts)) if len(pts) else 1.0))
    args = np.asarray(args0, dtype=float).copy()
    sing_start = _match_point(pts, verts[0], scale)
    sing_end = None
    if ray_dir is not None:
        d = complex(ray_dir)
        d /= abs(d)
        if len(verts) == 1 and sing_start is not None:
            # leave the marked point along the ray before the tail substitution
            others = np.abs(pts - verts[0])
            others = others[others > 0]
            t0 = 0.5 * float(np.min(others)) if len(others) else 1.0
            verts.append(verts[0] + t0 * d)
        elif len(verts) >= 2 and _match_point(pts, verts[-1], scale) is not None:
            raise PathThroughSingularity("ray origin is a marked point")
    elif len(verts) >= 2:
        sing_end = _match_point(pts, verts[-1], scale)
    for v in verts[1:-1]:
        if _match_point(pts, v, scale) is not None:
            raise PathThroughSingularity("interior path vertex is a marked point")
    if sing_start is not None and sing_end is not None and len(verts) == 2:
        verts = [verts[0], 0.5 * (verts[0] + verts[1]), verts[1]]
    if sing_start is not None and len(verts) >= 2 and \
            _match_point(pts, verts[1], scale) is not None:
        raise PathThroughSingularity("consecutive path vertices are marked points")

    total = 0.0 + 0.0j
    err = 0.0
    for k in range(len(verts) - 1):
        z0, z1 = verts[k], verts[k + 1]
        if z0 == z1:
            continue
        if k == 0 and sing_start is not None:
            v, e, args = _segment_singular_start(pts, exps, sing_start, z1, args, tol)
        elif k == len(verts) - 2 and sing_end is not None:
            v, e, args = _segment_singular_end(pts, exps, z0, sing_end, args, tol)
        else:
            v, e, args = _segment_regular(pts, exps, z0, z1, args, tol)
        total += v
        err += e
    if ray_dir is not None:
        v, e = _ray_piece(pts, exps, mu_inf, verts[-1], complex(ray_dir), args, tol, scale)
        total += v
        err += e
        args = None
    if not np.isfinite(total.real) or not np.isfinite(total.imag):
        raise QuadratureNoConvergence("non-finite path integral")
    return total, err, args


def integrate_edge(w: Weight, c: Configuration, path: BranchPath,
                   tol: float = DEFAULT_TOL) -> PeriodValue:
    """Contour integral of the weighted form along a branch path.

    Path endpoints may coincide with marked points (the singularities are
    integrable since every mu_j < 1); interior vertices may not.
    """
    pts, exps, _, index = chart_arrays(w, c)
    finite_slots = [j for j, k in enumerate(index) if k >= 0]
    args_full = np.asarray(path.start_args, dtype=float)
    if len(args_full) != c.n:
        raise ValueError(f"start_args must have length n = {c.n}")
    args0 = args_full[finite_slots]
    value, err, _ = integrate_polyline(pts, exps, path.vertices, args0, tol)
    return PeriodValue(value, path, err)


def default_base_point(c: Configuration) -> complex:
    """Barycenter of the finite marked points (arbitrary but fixed choice)."""
    pts = c.finite_values()
    base = complex(np.mean(pts))
    scale = max(1.0, float(np.max(np.abs(pts))))
    while np.min(np.abs(pts - base)) < 1e-6 * scale:
        base += 0.37j * scale  # nudge off a marked point, deterministically
    return base


def _detour_vertices(a, b, p, rho, n_arc=8):
    """Polygonal left-hand detour of segment [a, b] around nearby point p."""
    u = (b - a) / abs(b - a)
    # intersections of the segment with the circle |z - p| = rho
    w0 = a - p
    B = (w0 * np.conj(u)).real
    C = abs(w0) ** 2 - rho ** 2
    disc = B * B - C
    if disc <= 0:
        return []
    t1 = -B - math.sqrt(disc)
    t2 = -B + math.sqrt(disc)
    L = abs(b - a)
    if t2 <= 0 or t1 >= L:
        return []
    t1 = max(t1, 1e-9 * L)
    t2 = min(t2, (1 - 1e-9) * L)
    z_in = a + t1 * u
    z_out = a + t2 * u
    phi1 = np.angle(z_in - p)
    phi2 = np.angle(z_out - p)
    phi_left = np.angle(1j * u)
    # traverse from phi1 to phi2 passing through the left-normal direction
    d_pos = (phi2 - phi1) % TWO_PI
    mid_pos = phi1 + 0.5 * d_pos
    left_on_pos = abs(_wrap(mid_pos - phi_left)) < abs(_wrap(mid_pos + math.pi - phi_left))
    if left_on_pos:
        phis = phi1 + d_pos * np.linspace(0, 1, n_arc + 2)
    else:
        d_neg = d_pos - TWO_PI
        phis = phi1 + d_neg * np.linspace(0, 1, n_arc + 2)
    ring = [p + rho * complex(math.cos(ph), math.sin(ph)) for ph in phis]
    return [z_in] + ring[1:-1] + [z_out]


def straight_path(w: Weight, c: Configuration, start: complex, end: complex,
                  start_args=None, r_detour: float | None = None) -> BranchPath:
    """Straight segment start -> end, detouring around marked points.

    Marked points within the detour radius of the open segment are bypassed
    on the left by polygonal arcs of that radius.  Endpoints equal to marked
    points are left alone (handled as integrable singularities).
    """
    pts, _, _, _ = chart_arrays(w, c)
    start, end = complex(start), complex(end)
    if r_detour is None:
        dmin = np.inf
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                dmin = min(dmin, abs(pts[i] - pts[j]))
        r_detour = R_DETOUR_FACTOR * dmin
    verts = [start]
    if end != start:
        u = (end - start) / abs(end - start)
        L = abs(end - start)
        hits = []
        for p in pts:
            if p == start or p == end:
                continue
            t = ((p - start) * np.conj(u)).real
            if 0 < t < L and abs(start + t * u - p) < r_detour:
                hits.append((t, p))
        hits.sort(key=lambda h: h[0])
        for _, p in hits:
            verts.extend(_detour_vertices(start, end, p, r_detour))
        verts.append(end)
    if start_args is None:
        start_args = principal_args(c, start)
    return BranchPath(tuple(verts), tuple(np.asarray(start_args, dtype=float)))


def develop(w: Weight, c: Configuration, base: complex | None = None,
            targets=(), r_detour: float | None = None,
            tol: float = DEFAULT_TOL) -> list[complex]:
    """Developing-map images h(target) with h(base) = 0.

    Each target is reached along a straight segment from the base point,
    perturbed around singularities by polygonal detours; branches start from
    the principal arguments at the base.
    """
    if base is None:
        base = default_base_point(c)
    base = complex(base)
    args0 = principal_args(c, base)
    out = []
    for tgt in targets:
        tgt = complex(tgt)
        if tgt == base:
            out.append(0.0 + 0.0j)
            continue
        path = straight_path(w, c, base, tgt, start_args=args0, r_detour=r_detour)
        out.append(integrate_edge(w, c, path, tol=tol).value)
    return out
