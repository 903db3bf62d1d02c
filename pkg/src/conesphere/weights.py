"""Curvature weights, marked-point configurations and collision-pair combinatorics.

A weight is a vector mu of n curvature exponents with 0 < mu_j < 1 and
sum mu_j = 2.  It is dual to a cone-angle vector through theta_j =
2*pi*(1 - mu_j).  Configurations are ordered n-tuples of distinct points on
the projective line, at most one of which is the point at infinity; they are
normalized by the unique Moebius map sending the last three points to
0, 1, infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .errors import (
    BadPermutation,
    DegenerateConfiguration,
    InputParseError,
    TooFewPoints,
    WeightOutOfRange,
    WeightSumMismatch,
)

TWO_PI = 2.0 * math.pi

#: tolerance on |sum(mu) - 2|; inputs are typically exact rationals in decimal
EPS_WEIGHT = 1e-12

#: tolerance on |sum(2*pi - theta) - 4*pi| for angle vectors
EPS_ANGLE_SUM = 1e-10


class _Infinity:
    """Singleton marker for the point at infinity."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __reduce__(self):
        return (_Infinity, ())


INFINITY = _Infinity()


def is_infinity(p) -> bool:
    return isinstance(p, _Infinity)


@dataclass(frozen=True)
class Weight:
    """Curvature exponents mu = (mu_1, ..., mu_n)."""

    mu: tuple[float, ...]

    def __post_init__(self):
        if len(self.mu) < 4:
            raise TooFewPoints(f"need n >= 4 marked points, got {len(self.mu)}")
        for j, m in enumerate(self.mu):
            if not math.isfinite(m) or not 0.0 < m < 1.0:
                raise WeightOutOfRange(f"mu[{j}] = {m!r} not in the open interval (0, 1)")
        s = math.fsum(self.mu)
        if abs(s - 2.0) > EPS_WEIGHT:
            raise WeightSumMismatch(f"sum(mu) = {s!r}, expected 2 within {EPS_WEIGHT}")

    @property
    def n(self) -> int:
        return len(self.mu)

    def __iter__(self):
        return iter(self.mu)

    def __getitem__(self, j):
        return self.mu[j]


def validate_weight(mu) -> Weight:
    """Validate a sequence of curvature exponents and wrap it as a Weight."""
    return Weight(tuple(float(m) for m in mu))


@dataclass(frozen=True)
class AngleVector:
    """Cone angles theta = (theta_1, ..., theta_n) in radians."""

    theta: tuple[float, ...]

    def __post_init__(self):
        if len(self.theta) < 4:
            raise TooFewPoints(f"need n >= 4 cone angles, got {len(self.theta)}")
        for j, t in enumerate(self.theta):
            if not math.isfinite(t) or not 0.0 < t < TWO_PI:
                raise WeightOutOfRange(f"theta[{j}] = {t!r} not in (0, 2*pi)")
        s = math.fsum(TWO_PI - t for t in self.theta)
        if abs(s - 2.0 * TWO_PI) > EPS_ANGLE_SUM:
            raise WeightSumMismatch(
                f"sum(2*pi - theta) = {s!r}, expected 4*pi within {EPS_ANGLE_SUM}"
            )

    @property
    def n(self) -> int:
        return len(self.theta)

    def __iter__(self):
        return iter(self.theta)

    def __getitem__(self, j):
        return self.theta[j]


def weight_to_angles(w: Weight) -> AngleVector:
    """Cone angles theta_j = 2*pi*(1 - mu_j) dual to the curvature exponents."""
    return AngleVector(tuple(TWO_PI * (1.0 - m) for m in w.mu))


def angles_to_weight(a: AngleVector) -> Weight:
    """Inverse duality: mu_j = 1 - theta_j / (2*pi)."""
    return Weight(tuple(1.0 - t / TWO_PI for t in a.theta))


@dataclass(frozen=True)
class Configuration:
    """Ordered marked points on the projective line.

    Each point is a finite complex number or the INFINITY marker; at most one
    point may be infinite and all points must be pairwise distinct.
    """

    points: tuple

    def __post_init__(self):
        pts = self.points
        if len(pts) < 4:
            raise TooFewPoints(f"need n >= 4 marked points, got {len(pts)}")
        n_inf = sum(1 for p in pts if is_infinity(p))
        if n_inf > 1:
            raise DegenerateConfiguration("more than one point at infinity")
        finite = [p for p in pts if not is_infinity(p)]
        if any(not (math.isfinite(p.real) and math.isfinite(p.imag)) for p in finite):
            raise DegenerateConfiguration("non-finite coordinate in a finite point")
        if len(set(finite)) != len(finite):
            raise DegenerateConfiguration("marked points are not pairwise distinct")

    @property
    def n(self) -> int:
        return len(self.points)

    def infinity_index(self):
        """Index of the point at infinity, or None if all points are finite."""
        for j, p in enumerate(self.points):
            if is_infinity(p):
                return j
        return None

    def finite_values(self) -> np.ndarray:
        """Finite points as a complex array, in configuration order."""
        return np.array([p for p in self.points if not is_infinity(p)], dtype=complex)

    def is_normalized(self) -> bool:
        """True when the last three points are exactly 0, 1, infinity."""
        p = self.points
        return (
            not any(is_infinity(q) for q in p[:-1])
            and p[-3] == 0
            and p[-2] == 1
            and is_infinity(p[-1])
        )

    def is_chart(self) -> bool:
        """True when the last point is infinity and all others are finite."""
        return is_infinity(self.points[-1]) and not any(
            is_infinity(q) for q in self.points[:-1]
        )


def configuration(points) -> Configuration:
    """Build a Configuration, coercing finite entries to complex."""
    coerced = tuple(p if is_infinity(p) else complex(p) for p in points)
    return Configuration(coerced)


@dataclass(frozen=True)
class MoebiusMap:
    """Projective transformation z -> (a z + b) / (c z + d)."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        if self.a * self.d - self.b * self.c == 0:
            raise DegenerateConfiguration("Moebius matrix is singular")

    @classmethod
    def identity(cls) -> "MoebiusMap":
        return cls(1, 0, 0, 1)

    @classmethod
    def to_zero_one_inf(cls, p, q, r) -> "MoebiusMap":
        """The unique map sending p -> 0, q -> 1, r -> infinity."""
        if len({repr(x) for x in (p, q, r)}) != 3:
            raise DegenerateConfiguration("three distinct points required")
        if is_infinity(p):
            return cls(0, q - r, 1, -r)
        if is_infinity(q):
            return cls(1, -p, 1, -r)
        if is_infinity(r):
            return cls(1, -p, 0, q - p)
        return cls(q - r, -p * (q - r), q - p, -r * (q - p))

    def apply(self, p):
        if is_infinity(p):
            if self.c == 0:
                return INFINITY
            return self.a / self.c
        den = self.c * p + self.d
        if den == 0:
            return INFINITY
        return (self.a * p + self.b) / den

    def inverse(self) -> "MoebiusMap":
        return MoebiusMap(self.d, -self.b, -self.c, self.a)

    def compose(self, other: "MoebiusMap") -> "MoebiusMap":
        """The map applying `other` first, then self."""
        return MoebiusMap(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def is_identity(self) -> bool:
        return self.b == 0 and self.c == 0 and self.a == self.d


def normalize(c: Configuration) -> tuple[Configuration, MoebiusMap]:
    """Send the last three marked points to 0, 1, infinity.

    Returns the projectively equivalent configuration together with the
    Moebius map used.  Already-normalized configurations come back unchanged
    with the identity map.
    """
    if c.is_normalized():
        return c, MoebiusMap.identity()
    p, q, r = c.points[-3], c.points[-2], c.points[-1]
    T = MoebiusMap.to_zero_one_inf(p, q, r)
    head = tuple(T.apply(x) for x in c.points[:-3])
    if any(is_infinity(x) for x in head):
        # a leading point landed on infinity; cannot happen for distinct inputs
        raise DegenerateConfiguration("normalization sent a leading point to infinity")
    return Configuration(head + (0j, 1 + 0j, INFINITY)), T


def apply_permutation(w: Weight, c: Configuration, sigma) -> tuple[Weight, Configuration]:
    """Relabel marked points: entry k of the result is entry sigma[k] of the input.

    `sigma` is a sequence of n one-based indices forming a bijection of
    {1, ..., n}.  Weight and configuration are permuted simultaneously;
    permuting only one of them is meaningless and not offered.
    """
    n = w.n
    if c.n != n:
        raise BadPermutation(f"weight has n = {n} but configuration has n = {c.n}")
    sig = tuple(int(s) for s in sigma)
    if len(sig) != n or sorted(sig) != list(range(1, n + 1)):
        raise BadPermutation(f"{sigma!r} is not a bijection of 1..{n}")
    mu = tuple(w.mu[s - 1] for s in sig)
    pts = tuple(c.points[s - 1] for s in sig)
    return Weight(mu), Configuration(pts)


@dataclass(frozen=True, order=True)
class PairIndex:
    """Unordered pair of marked-point labels, stored as 1 <= j < i."""

    j: int
    i: int

    def __post_init__(self):
        if not (isinstance(self.j, int) and isinstance(self.i, int)):
            raise ValueError("pair labels must be integers")
        if not 1 <= self.j < self.i:
            raise ValueError(f"need 1 <= j < i, got ({self.j}, {self.i})")

    def labels(self) -> frozenset:
        return frozenset((self.j, self.i))

    def disjoint(self, other: "PairIndex") -> bool:
        return not (self.labels() & other.labels())


def collision_pairs(n: int) -> list[PairIndex]:
    """All C(n, 2) collision pairs in lexicographic order."""
    if n < 4:
        raise TooFewPoints(f"need n >= 4, got {n}")
    return [PairIndex(j, i) for j, i in combinations(range(1, n + 1), 2)]


def pairs_adjacent(p: PairIndex, q: PairIndex) -> bool:
    """Collision loci of two pairs intersect iff their label sets are disjoint."""
    return p.disjoint(q)


def collision_adjacency(n: int):
    """Collision pairs plus their boolean adjacency matrix."""
    pairs = collision_pairs(n)
    m = len(pairs)
    adj = np.zeros((m, m), dtype=bool)
    for a in range(m):
        for b in range(a + 1, m):
            adj[a, b] = adj[b, a] = pairs_adjacent(pairs[a], pairs[b])
    return pairs, adj


# --- JSON schema helpers (consumed by the CLI) ---

def _parse_real(x) -> float:
    if isinstance(x, str):
        return float(Fraction(x))
    return float(x)


def weight_from_json(obj) -> Weight:
    """Read {"mu": [...]} where entries are numbers or "p/q" strings."""
    if not isinstance(obj, dict) or "mu" not in obj:
        raise InputParseError('expected an object with a "mu" field')
    try:
        return validate_weight([_parse_real(x) for x in obj["mu"]])
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise InputParseError(f"bad mu entry: {exc}") from exc


def configuration_from_json(obj) -> Configuration:
    """Read {"points": [[re, im] | "inf", ...]}."""
    if not isinstance(obj, dict) or "points" not in obj:
        raise InputParseError('expected an object with a "points" field')
    pts = []
    for entry in obj["points"]:
        if entry == "inf":
            pts.append(INFINITY)
        elif isinstance(entry, (list, tuple)) and len(entry) == 2:
            try:
                pts.append(complex(_parse_real(entry[0]), _parse_real(entry[1])))
            except (TypeError, ValueError, ZeroDivisionError) as exc:
                raise InputParseError(f"bad point entry {entry!r}: {exc}") from exc
        else:
            raise InputParseError(f'point entries must be [re, im] or "inf", got {entry!r}')
    return configuration(pts)


def weight_to_json(w: Weight) -> dict:
    return {"mu": list(w.mu)}


def configuration_to_json(c: Configuration) -> dict:
    pts = []
    for p in c.points:
        if is_infinity(p):
            pts.append("inf")
        else:
            pts.append([p.real, p.imag])
    return {"points": pts}
