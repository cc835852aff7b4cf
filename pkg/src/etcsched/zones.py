"""Clock zones and federations on top of canonical difference bound matrices.

A ``Zone`` is a nonempty canonical DBM over ``dim`` clocks (indices 1..dim;
index 0 is the reference clock).  Operations returning a possibly-empty
convex set return ``None`` for the empty zone.  A ``Federation`` is a finite
union of zones over the same clock set; the empty federation denotes the
empty set.

All values are immutable from the caller's perspective and all operations
are pure.  ``pred_t`` implements the timed-predecessor operator used by the
safety-game fixpoint:

    pred_t(G, B) = {u | exists d >= 0: u+d in G and
                        forall d' in [0, d]: u+d' not in B}
"""

from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from . import _dbm
from ._dbm import (
    RAW_INF,
    RAW_LE_ZERO,
    raw_is_strict,
    raw_neg,
    raw_of,
    raw_value,
)

INF_VALUE = int(RAW_INF) // 2


class Bound(NamedTuple):
    """A single difference bound ``(value, strict)``; saturating arithmetic."""

    value: int
    strict: bool

    @property
    def is_infinite(self) -> bool:
        return self.value >= INF_VALUE

    def to_raw(self) -> int:
        if self.is_infinite:
            return int(RAW_INF)
        return raw_of(self.value, self.strict)

    @staticmethod
    def from_raw(raw: int) -> "Bound":
        if raw >= RAW_INF:
            return BOUND_INF
        return Bound(raw_value(raw), raw_is_strict(raw))

    def add(self, other: "Bound") -> "Bound":
        if self.is_infinite or other.is_infinite:
            return BOUND_INF
        return Bound(self.value + other.value, self.strict or other.strict)

    def __le__(self, other):
        return self.to_raw() <= other.to_raw()

    def __lt__(self, other):
        return self.to_raw() < other.to_raw()


BOUND_INF = Bound(INF_VALUE, True)
BOUND_LE_ZERO = Bound(0, False)


def _universe_matrix(dim: int) -> np.ndarray:
    m = np.full((dim + 1, dim + 1), RAW_INF, dtype=np.int64)
    m[0, :] = RAW_LE_ZERO
    np.fill_diagonal(m, RAW_LE_ZERO)
    return m


class Zone:
    """Nonempty canonical clock zone.  Use the classmethods to construct."""

    __slots__ = ("m", "dim")

    def __init__(self, m: np.ndarray, dim: int, _trusted: bool = False):
        if not _trusted:
            raise TypeError("use Zone.universe / Zone.from_constraints")
        self.m = m
        self.dim = dim

    @classmethod
    def _wrap(cls, m: np.ndarray) -> "Zone":
        z = cls(m, m.shape[0] - 1, _trusted=True)
        return z

    @classmethod
    def universe(cls, dim: int) -> "Zone":
        return cls._wrap(_universe_matrix(dim))

    @classmethod
    def from_constraints(
        cls, dim: int, constraints: Iterable[tuple]
    ) -> Optional["Zone"]:
        """Conjunction of ``(i, j, Bound)`` constraints ``x_i - x_j ~ n``.

        Returns the canonical zone or None when unsatisfiable.
        """
        m = _universe_matrix(dim)
        for i, j, b in constraints:
            raw = b.to_raw() if isinstance(b, Bound) else int(b)
            if raw < m[i, j]:
                m[i, j] = raw
        return canonicalize_matrix(m)

    @classmethod
    def point(cls, values: Sequence[float]) -> "Zone":
        """The singleton zone at integer clock values."""
        cons = []
        for i, v in enumerate(values, start=1):
            iv = int(v)
            if iv != v:
                raise ValueError("point zones need integer coordinates")
            cons.append((i, 0, Bound(iv, False)))
            cons.append((0, i, Bound(-iv, False)))
        z = cls.from_constraints(len(values), cons)
        assert z is not None
        return z

    # -- queries ---------------------------------------------------------

    def contains(self, point: Sequence[float]) -> bool:
        pt = np.zeros(self.dim + 1)
        pt[1:] = point
        return _dbm.contains_point(self.m, pt)

    def is_subset(self, other: "Zone") -> bool:
        return bool((self.m <= other.m).all())

    def __eq__(self, other):
        return isinstance(other, Zone) and np.array_equal(self.m, other.m)

    def __hash__(self):
        return hash(self.m.tobytes())

    def bound(self, i: int, j: int) -> Bound:
        return Bound.from_raw(int(self.m[i, j]))

    # -- operations ------------------------------------------------------

    def intersect(self, other: "Zone") -> Optional["Zone"]:
        m = np.minimum(self.m, other.m)
        if _dbm.close_inplace(m):
            return Zone._wrap(m)
        return None

    def up(self) -> "Zone":
        """Future elapse (delay successors)."""
        m = self.m.copy()
        _dbm.up_inplace(m)
        return Zone._wrap(m)

    def down(self) -> "Zone":
        """Past elapse (delay predecessors, clamped at clock zero)."""
        m = self.m.copy()
        _dbm.down_then_close(m)
        return Zone._wrap(m)

    def free(self, clock: int) -> "Zone":
        m = self.m.copy()
        _dbm.free_then_close(m, clock)
        return Zone._wrap(m)

    def reset(self, clocks: Iterable[int]) -> "Zone":
        """Exact image under setting the given clocks to 0."""
        m = self.m.copy()
        for c in clocks:
            _dbm.reset_zero(m, c)
        return Zone._wrap(m)

    def constrain(self, constraints: Iterable[tuple]) -> Optional["Zone"]:
        m = self.m.copy()
        changed = False
        for i, j, b in constraints:
            raw = b.to_raw() if isinstance(b, Bound) else int(b)
            if raw < m[i, j]:
                m[i, j] = raw
                changed = True
        if not changed:
            return self
        if _dbm.close_inplace(m):
            return Zone._wrap(m)
        return None

    def subtract(self, other: "Zone") -> list:
        """``self minus other`` as a list of disjoint zones."""
        pieces = []
        remainder = self
        n = self.dim + 1
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                raw = int(other.m[i, j])
                if raw >= RAW_INF:
                    continue
                if remainder is None:
                    break
                # piece where the (i, j) constraint of `other` fails
                piece = remainder.constrain([(j, i, raw_neg(raw))])
                if piece is not None:
                    pieces.append(piece)
                remainder = remainder.constrain([(i, j, raw)])
            if remainder is None:
                break
        return pieces

    def delay_window(self, point: Sequence[float]):
        """Delays d >= 0 with point + d inside this zone.

        Returns (lo, hi, lo_included, hi_included) or None; hi may be inf.
        """
        full = np.zeros(self.dim + 1)
        full[1:] = point
        lo, hi = 0.0, float("inf")
        lo_inc, hi_inc = True, True
        n = self.dim + 1
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                raw = int(self.m[i, j])
                if raw >= RAW_INF:
                    continue
                value = raw_value(raw)
                strict = raw_is_strict(raw)
                diff = full[i] - full[j]
                if (i > 0) == (j > 0):
                    # delay-invariant constraint: holds for every d or none
                    if (diff > value) or (strict and diff == value):
                        return None
                elif i > 0:
                    # u_i + d <= value: upper bound on d
                    b = value - diff
                    if b < hi or (b == hi and strict):
                        hi, hi_inc = b, not strict
                else:
                    # -(u_j + d) <= value: lower bound on d
                    b = -value - full[j]
                    if b > lo or (b == lo and strict):
                        lo, lo_inc = b, not strict
        if lo > hi or (lo == hi and not (lo_inc and hi_inc)):
            return None
        return lo, hi, lo_inc, hi_inc

    def pretty(self, names: Optional[Sequence[str]] = None) -> str:
        """Render as a conjunction of ``x - y <= n`` style atoms."""
        if names is None:
            names = ["x%d" % i for i in range(1, self.dim + 1)]
        terms = []
        univ = _universe_matrix(self.dim)
        for i in range(self.dim + 1):
            for j in range(self.dim + 1):
                if i == j:
                    continue
                raw = int(self.m[i, j])
                if raw >= univ[i, j]:
                    continue
                if i == 0:
                    lhs = "-%s" % names[j - 1]
                elif j == 0:
                    lhs = names[i - 1]
                else:
                    lhs = "%s - %s" % (names[i - 1], names[j - 1])
                op = "<" if raw_is_strict(raw) else "<="
                terms.append("%s %s %d" % (lhs, op, raw_value(raw)))
        return " && ".join(terms) if terms else "true"

    def __repr__(self):
        return "Zone(%s)" % self.pretty()


def canonicalize_matrix(m: np.ndarray) -> Optional[Zone]:
    """Tighten a raw bound matrix to canonical form; None if unsatisfiable.

    Idempotent: re-canonicalizing a canonical matrix is a no-op.
    """
    m = np.array(m, dtype=np.int64, copy=True)
    if _dbm.close_inplace(m):
        return Zone._wrap(m)
    return None


def elapse(z: Zone, direction: str) -> Zone:
    if direction == "future":
        return z.up()
    if direction == "past":
        return z.down()
    raise ValueError("direction must be 'future' or 'past'")


class Federation:
    """Finite union of zones over a common clock set."""

    __slots__ = ("dim", "zones")

    def __init__(self, dim: int, zones: Sequence[Zone] = ()):
        self.dim = dim
        self.zones = tuple(zones)

    @classmethod
    def empty(cls, dim: int) -> "Federation":
        return cls(dim)

    @classmethod
    def from_zone(cls, z: Optional[Zone], dim: Optional[int] = None) -> "Federation":
        if z is None:
            if dim is None:
                raise ValueError("dim required for the empty federation")
            return cls(dim)
        return cls(z.dim, (z,))

    @classmethod
    def universe(cls, dim: int) -> "Federation":
        return cls(dim, (Zone.universe(dim),))

    @property
    def is_empty(self) -> bool:
        return not self.zones

    def contains(self, point: Sequence[float]) -> bool:
        return any(z.contains(point) for z in self.zones)

    def reduce(self) -> "Federation":
        """Drop zones included in another member (no exact disjointness)."""
        zs = list(self.zones)
        keep = []
        for i, z in enumerate(zs):
            redundant = False
            for k, other in enumerate(zs):
                if k == i:
                    continue
                if z.is_subset(other):
                    if not other.is_subset(z) or k < i:
                        redundant = True
                        break
            if not redundant:
                keep.append(z)
        return Federation(self.dim, keep)

    def union(self, other: "Federation") -> "Federation":
        return Federation(self.dim, self.zones + other.zones).reduce()

    def intersect(self, other: "Federation") -> "Federation":
        out = []
        for a in self.zones:
            for b in other.zones:
                c = a.intersect(b)
                if c is not None:
                    out.append(c)
        return Federation(self.dim, out).reduce()

    def intersect_zone(self, z: Zone) -> "Federation":
        out = []
        for a in self.zones:
            c = a.intersect(z)
            if c is not None:
                out.append(c)
        return Federation(self.dim, out)

    def subtract(self, other: "Federation") -> "Federation":
        parts = list(self.zones)
        for b in other.zones:
            nxt = []
            for a in parts:
                nxt.extend(a.subtract(b))
            parts = nxt
            if not parts:
                break
        return Federation(self.dim, parts).reduce()

    def leq(self, other: "Federation") -> bool:
        """Point-set inclusion self <= other."""
        return self.subtract(other).is_empty

    def set_eq(self, other: "Federation") -> bool:
        return self.leq(other) and other.leq(self)

    def up(self) -> "Federation":
        return Federation(self.dim, [z.up() for z in self.zones]).reduce()

    def down(self) -> "Federation":
        return Federation(self.dim, [z.down() for z in self.zones]).reduce()

    def free(self, clock: int) -> "Federation":
        return Federation(self.dim, [z.free(clock) for z in self.zones]).reduce()

    def reset(self, clocks: Iterable[int]) -> "Federation":
        cl = tuple(clocks)
        return Federation(self.dim, [z.reset(cl) for z in self.zones]).reduce()

    def pretty(self, names=None) -> str:
        if self.is_empty:
            return "false"
        return " || ".join("(%s)" % z.pretty(names) for z in self.zones)

    def __repr__(self):
        return "Federation[%d](%s)" % (len(self.zones), self.pretty())


def fed_subtract(a: Federation, b: Federation) -> Federation:
    return a.subtract(b)


def fed_leq(a: Federation, b: Federation) -> bool:
    return a.leq(b)


def pred_t(goal: Federation, avoid: Federation) -> Federation:
    """Timed predecessors of ``goal`` that dodge ``avoid`` along the delay.

    Decomposition, validated against the discretized-time oracle: for a
    single convex avoid zone b, a segment [u, u+d] misses b iff either the
    whole ray from u misses b, or u+d lies diagonally strictly before b
    (below its entry face); intersecting the per-zone predecessor sets is
    exact because the blocked-delay windows are nested from 0.
    """
    if goal.is_empty:
        return Federation.empty(goal.dim)
    gdown = goal.down()
    if avoid.is_empty:
        return gdown
    result = None
    for b in avoid.zones:
        bdown = Federation(goal.dim, (b.down(),))
        before_b = bdown.subtract(Federation(goal.dim, (b,)))
        part = gdown.subtract(bdown).union(goal.intersect(before_b).down())
        result = part if result is None else result.intersect(part)
        if result.is_empty:
            break
    return result.reduce()
