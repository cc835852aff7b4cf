"""Brute-force oracles the solver and zone algebra are checked against.

The grid oracle enumerates half-integer points (sufficient to separate
strict from non-strict constraints when all constants are integers) and
answers membership questions directly from constraint lists, never through
the DBM code under test.
"""

import itertools

import numpy as np


def half_grid(dim, max_const):
    """All points with coordinates in {0, 0.5, ..., max_const + 1}."""
    axis = np.arange(0.0, max_const + 1.0 + 0.25, 0.5)
    return np.array(list(itertools.product(axis, repeat=dim)))


def zone_mask(zone, pts):
    """Membership mask of an (N, dim) point array for a Zone (or None)."""
    if zone is None:
        return np.zeros(len(pts), dtype=bool)
    full = np.concatenate([np.zeros((len(pts), 1)), pts], axis=1)
    ok = np.ones(len(pts), dtype=bool)
    n = zone.dim + 1
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            b = zone.bound(i, j)
            if b.is_infinite:
                continue
            diff = full[:, i] - full[:, j]
            ok &= (diff < b.value) if b.strict else (diff <= b.value)
    return ok


def fed_mask(fed, pts):
    ok = np.zeros(len(pts), dtype=bool)
    for z in fed.zones:
        ok |= zone_mask(z, pts)
    return ok


def constraints_mask(constraints, pts):
    """Membership from a raw constraint list [(i, j, value, strict)]."""
    full = np.concatenate([np.zeros((len(pts), 1)), pts], axis=1)
    ok = np.ones(len(pts), dtype=bool)
    for i, j, value, strict in constraints:
        diff = full[:, i] - full[:, j]
        ok &= (diff < value) if strict else (diff <= value)
    return ok


def _zone_holds(zone, pt):
    """Re-evaluate a zone matrix at one valuation (decoded, not Zone.contains)."""
    n = zone.dim + 1
    full = np.concatenate([[0.0], pt])
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            b = zone.bound(i, j)
            if b.is_infinite:
                continue
            diff = full[i] - full[j]
            if b.strict:
                if not diff < b.value:
                    return False
            elif not diff <= b.value:
                return False
    return True


def product_max_constant(product):
    """Largest |constant| appearing in guards and invariants."""
    from etcsched.zones import INF_VALUE

    best = 1
    mats = [t.guard_zone for t in product.templates]
    mats += [product.invariant_zone(s.locs) for s in product.states]
    for z in mats:
        n = z.dim + 1
        for i in range(n):
            for j in range(n):
                b = z.bound(i, j)
                if not b.is_infinite and abs(b.value) < INF_VALUE:
                    best = max(best, abs(b.value))
    return best


class GridGameSolver:
    """Brute-force safety game on a discretized clock grid.

    Clock values saturate at max_const + 1: with single-clock guards every
    valuation beyond the largest constant behaves identically, so the
    saturated grid game has exactly the winners of the real-valued game at
    grid points.  Winners are asserted at half-integer points; the delay
    quantum is finer (quarter steps by default) because a controller move
    may have to land strictly inside an open window between half-integer
    endpoints, which half stepping cannot express.  Coordinates are stored
    in 1/denom units (ints).
    """

    def __init__(self, product, bad, max_const=None, denom=4):
        self.product = product
        self.bad = bad
        self.cmax = max_const if max_const is not None else product_max_constant(product)
        self.denom = denom
        self.sat = denom * (self.cmax + 1)
        self.dim = product.dim
        self.inv = [product.invariant_zone(s.locs) for s in product.states]
        self.out = [product.edges_from(s) for s in product.states]
        self.winning = None

    def _floats(self, u2):
        return np.array(u2, dtype=float) / self.denom

    def _inv_ok(self, idx, u2):
        return _zone_holds(self.inv[idx], self._floats(u2))

    def _clamp(self, u2):
        return tuple(min(v, self.sat) for v in u2)

    def _succ(self, inst, u2):
        v2 = list(u2)
        for c in inst.template.resets:
            v2[c - 1] = 0
        return self._clamp(tuple(v2))

    def enumerate_states(self):
        out = []
        axes = range(0, self.sat + 1)
        for idx in range(self.product.num_states()):
            if self.bad(self.product.states[idx]):
                continue
            for u2 in itertools.product(axes, repeat=self.dim):
                if self._inv_ok(idx, u2):
                    out.append((idx, u2))
        return out

    def _survives(self, idx, u2, W):
        pt = lambda x2: self._floats(x2)
        k = 0
        v2 = u2
        while True:
            fv = pt(v2)
            # environment priority: a catch at this instant loses outright
            for inst in self.out[idx]:
                if inst.controllable:
                    continue
                if not _zone_holds(inst.template.guard_zone, fv):
                    continue
                t_idx = self.product.state_index[inst.target]
                w2 = self._succ(inst, v2)
                if not _zone_holds(self.inv[t_idx], pt(w2)):
                    continue  # target invariant blocks the edge
                if (t_idx, w2) not in W:
                    return False
            for inst in self.out[idx]:
                if not inst.controllable:
                    continue
                if not _zone_holds(inst.template.guard_zone, fv):
                    continue
                t_idx = self.product.state_index[inst.target]
                w2 = self._succ(inst, v2)
                if not _zone_holds(self.inv[t_idx], pt(w2)):
                    continue
                if (t_idx, w2) in W:
                    return True
            n2 = self._clamp(tuple(x + 1 for x in v2))
            if n2 == v2:
                return True  # frozen beyond every constant, uncaught forever
            if not self._inv_ok(idx, n2):
                return True  # survived the whole legal delay ray
            v2 = n2
            k += 1

    def solve(self):
        W = set(self.enumerate_states())
        changed = True
        while changed:
            changed = False
            for key in sorted(W):
                if not self._survives(key[0], key[1], W):
                    W.discard(key)
                    changed = True
        self.winning = W
        return W

    def compare_with(self, winning_set):
        """Mismatches against the zone solver at half-integer grid points."""
        if self.winning is None:
            self.solve()
        mism = []
        half = self.denom // 2
        axes = range(0, self.sat + 1, half)
        for idx in range(self.product.num_states()):
            state = self.product.states[idx]
            if self.bad(state):
                continue
            fed = winning_set.federation(state)
            for u2 in itertools.product(axes, repeat=self.dim):
                if not self._inv_ok(idx, u2):
                    continue
                zone_says = fed.contains(self._floats(u2))
                grid_says = (idx, u2) in self.winning
                if zone_says != grid_says:
                    mism.append((state, self._floats(u2), zone_says, grid_says))
        return mism


def pred_t_mask(goal_fed, avoid_fed, pts, max_const):
    """Discretized-time evaluation of the timed-predecessor definition.

    For each grid point u, scan delays d up to max_const + 1 (clock values
    beyond every constant are equivalent, so longer delays add nothing new)
    and test: u+d in goal while u+d' stays outside avoid for all scanned
    d' <= d.  Delays are sampled on the quarter-integer grid: from
    half-integer start points every goal/avoid hit window has half-integer
    endpoints, so quarter sampling sees the interior of every nonempty
    window and the scan realizes the real-valued definition exactly.
    """
    delays = np.arange(0.0, max_const + 1.0 + 0.125, 0.25)
    result = np.zeros(len(pts), dtype=bool)
    blocked = np.zeros(len(pts), dtype=bool)
    for d in delays:
        shifted = pts + d
        blocked |= fed_mask(avoid_fed, shifted)
        result |= ~blocked & fed_mask(goal_fed, shifted)
    return result
