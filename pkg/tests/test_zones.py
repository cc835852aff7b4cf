"""Zone/federation algebra against the half-integer grid oracle."""

import numpy as np
import pytest

from etcsched.zones import (
    BOUND_INF,
    Bound,
    Federation,
    Zone,
    canonicalize_matrix,
    elapse,
    fed_leq,
    fed_subtract,
    pred_t,
)

from oracles import fed_mask, half_grid, pred_t_mask, zone_mask

MAX_CONST = 8


def random_zone(rng, dim, max_const=MAX_CONST, tries=50):
    """A random nonempty canonical zone with integer constants."""
    for _ in range(tries):
        cons = []
        n_cons = rng.integers(1, 2 * dim + 2)
        for _ in range(n_cons):
            i = rng.integers(0, dim + 1)
            j = rng.integers(0, dim + 1)
            if i == j:
                continue
            value = int(rng.integers(-max_const if i == 0 else 0, max_const + 1))
            cons.append((int(i), int(j), Bound(value, bool(rng.integers(0, 2)))))
        z = Zone.from_constraints(dim, cons)
        if z is not None:
            return z
    return Zone.universe(dim)


def random_zone_closed(rng, dim, max_const=MAX_CONST):
    """Random nonempty zone with non-strict constraints only."""
    for _ in range(50):
        cons = []
        for _ in range(rng.integers(1, 2 * dim + 2)):
            i = rng.integers(0, dim + 1)
            j = rng.integers(0, dim + 1)
            if i == j:
                continue
            value = int(rng.integers(-max_const if i == 0 else 0, max_const + 1))
            cons.append((int(i), int(j), Bound(value, False)))
        z = Zone.from_constraints(dim, cons)
        if z is not None:
            return z
    return Zone.universe(dim)


def random_fed(rng, dim, max_zones=3):
    zones = [random_zone(rng, dim) for _ in range(rng.integers(0, max_zones + 1))]
    return Federation(dim, zones).reduce()


# -- Bound arithmetic ------------------------------------------------------


def test_bound_addition_saturates_at_infinity():
    assert Bound(3, False).add(BOUND_INF) == BOUND_INF
    assert BOUND_INF.add(Bound(-5, True)) == BOUND_INF
    assert Bound(2, True).add(Bound(3, False)) == Bound(5, True)
    assert Bound(2, False).add(Bound(3, False)) == Bound(5, False)


def test_bound_ordering_strict_tighter():
    assert Bound(3, True) < Bound(3, False)
    assert Bound(3, False) < Bound(4, True)
    assert Bound(3, False) < BOUND_INF


# -- canonicalize ----------------------------------------------------------


def test_canonicalize_contradiction_is_empty():
    # x <= 5 and x >= 7
    z = Zone.from_constraints(1, [(1, 0, Bound(5, False)), (0, 1, Bound(-7, False))])
    assert z is None


def test_canonicalize_tightens_implied_bound():
    # x - y <= 2, y <= 3 implies x <= 5
    z = Zone.from_constraints(2, [(1, 2, Bound(2, False)), (2, 0, Bound(3, False))])
    assert z.bound(1, 0) == Bound(5, False)


def test_canonicalize_idempotent_on_random_matrices():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(500):
        z = random_zone(rng, 3)
        again = canonicalize_matrix(z.m)
        assert again is not None and again == z
        checked += 1
    assert checked == 500


# -- intersect -------------------------------------------------------------


def test_intersect_with_universe_is_identity():
    rng = np.random.default_rng(1)
    for _ in range(20):
        z = random_zone(rng, 2)
        assert z.intersect(Zone.universe(2)) == z


def test_intersect_point_zone():
    lo = Zone.from_constraints(1, [(0, 1, Bound(-3, False))])  # x >= 3
    hi = Zone.from_constraints(1, [(1, 0, Bound(3, False))])  # x <= 3
    z = lo.intersect(hi)
    assert z.contains([3.0])
    assert not z.contains([2.5]) and not z.contains([3.5])


def test_intersect_grid_oracle():
    rng = np.random.default_rng(2)
    pts = half_grid(2, MAX_CONST)
    for _ in range(200):
        a, b = random_zone(rng, 2), random_zone(rng, 2)
        got = zone_mask(a.intersect(b), pts)
        want = zone_mask(a, pts) & zone_mask(b, pts)
        assert (got == want).all()


# -- reset -----------------------------------------------------------------


def test_reset_empty_clockset_is_identity():
    rng = np.random.default_rng(3)
    z = random_zone(rng, 2)
    assert z.reset(()) == z


def test_reset_pointwise():
    z = Zone.point([5, 2])
    r = z.reset([1])
    assert r.contains([0.0, 2.0]) and not r.contains([5.0, 2.0])


def test_reset_grid_oracle():
    # witness-based oracle: needs closed zones so that nonempty slices have
    # half-integer vertices (difference systems are totally unimodular)
    rng = np.random.default_rng(4)
    pts = half_grid(2, MAX_CONST)
    for _ in range(200):
        z = random_zone_closed(rng, 2)
        which = [c for c in (1, 2) if rng.integers(0, 2)]
        got = zone_mask(z.reset(which), pts)
        want = np.zeros(len(pts), dtype=bool)
        src = zone_mask(z, pts)
        zeroed = [c - 1 for c in which]
        for idx in np.nonzero(src)[0]:
            img = pts[idx].copy()
            img[zeroed] = 0.0
            want |= (pts == img).all(axis=1)
        assert (got == want).all()


# -- elapse ----------------------------------------------------------------


def test_elapse_future_from_origin_is_diagonal():
    z = Zone.point([0, 0])
    up = elapse(z, "future")
    assert up.contains([2.5, 2.5])
    assert not up.contains([2.5, 2.0])


def test_elapse_past_of_point():
    z = Zone.point([3])
    down = elapse(z, "past")
    assert down.contains([0.0]) and down.contains([3.0])
    assert not down.contains([3.5])


def test_elapse_grid_oracle():
    # quarter-step delay scan: witness windows along the diagonal have
    # half-integer endpoints, so quarter sampling hits every nonempty one
    rng = np.random.default_rng(5)
    pts = half_grid(2, MAX_CONST)
    deltas = np.arange(0.0, MAX_CONST + 1.125, 0.25)
    for _ in range(200):
        z = random_zone(rng, 2)
        want_up = np.zeros(len(pts), dtype=bool)
        want_down = np.zeros(len(pts), dtype=bool)
        for d in deltas:
            want_down |= zone_mask(z, pts + d)
            shifted = pts - d
            ok = (shifted >= -1e-9).all(axis=1)
            idx = np.nonzero(ok)[0]
            if len(idx):
                want_up[idx] |= zone_mask(z, shifted[idx])
        got_up = zone_mask(z.up(), pts)
        got_down = zone_mask(z.down(), pts)
        assert (got_up == want_up).all()
        assert (got_down == want_down).all()


# -- subtraction and inclusion ---------------------------------------------


def test_subtract_trivial_identities():
    rng = np.random.default_rng(6)
    for _ in range(20):
        a = random_fed(rng, 2)
        assert fed_subtract(a, Federation.empty(2)).set_eq(a)
        assert fed_subtract(a, a).is_empty


def test_subtract_grid_oracle_and_reconstruction():
    rng = np.random.default_rng(8)
    pts = half_grid(2, MAX_CONST)
    for _ in range(150):
        a, b = random_fed(rng, 2), random_fed(rng, 2)
        diff = fed_subtract(a, b)
        am, bm = fed_mask(a, pts), fed_mask(b, pts)
        dm = fed_mask(diff, pts)
        assert (dm == (am & ~bm)).all()
        # difference unioned with the intersection reconstructs the original
        rec = diff.union(a.intersect(b))
        assert (fed_mask(rec, pts) == am).all()


def test_fed_leq_matches_subtract():
    rng = np.random.default_rng(9)
    for _ in range(150):
        a, b = random_fed(rng, 2), random_fed(rng, 2)
        assert fed_leq(a, b) == fed_subtract(a, b).is_empty
        assert fed_leq(Federation.empty(2), a)
        assert fed_leq(a, a)


# -- pred_t ----------------------------------------------------------------


def test_pred_t_empty_goal():
    avoid = Federation(1, [Zone.point([3])])
    assert pred_t(Federation.empty(1), avoid).is_empty


def test_pred_t_one_clock_hand_case():
    # goal 3 <= x <= 5, avoid x >= 4  ->  x < 4
    goal = Federation(
        1, [Zone.from_constraints(1, [(0, 1, Bound(-3, False)), (1, 0, Bound(5, False))])]
    )
    avoid = Federation(1, [Zone.from_constraints(1, [(0, 1, Bound(-4, False))])])
    got = pred_t(goal, avoid)
    assert got.contains([0.0]) and got.contains([3.9])
    assert not got.contains([4.0]) and not got.contains([5.0])


def test_pred_t_with_empty_avoid_is_past_elapse():
    rng = np.random.default_rng(10)
    for _ in range(50):
        g = random_fed(rng, 2)
        assert pred_t(g, Federation.empty(2)).set_eq(g.down())


def test_pred_t_grid_oracle():
    rng = np.random.default_rng(11)
    pts = half_grid(2, MAX_CONST)
    for _ in range(150):
        goal, avoid = random_fed(rng, 2), random_fed(rng, 2)
        got = fed_mask(pred_t(goal, avoid), pts)
        want = pred_t_mask(goal, avoid, pts, MAX_CONST)
        assert (got == want).all()


# -- canonical-form preservation -------------------------------------------


def test_ops_preserve_canonical_form():
    rng = np.random.default_rng(12)
    for _ in range(100):
        a, b = random_zone(rng, 3), random_zone(rng, 3)
        for z in filter(
            None,
            [a.intersect(b), a.up(), a.down(), a.reset([1]), a.free(2)],
        ):
            again = canonicalize_matrix(z.m)
            assert again == z


def test_delay_window_against_scan():
    rng = np.random.default_rng(13)
    scan = np.arange(0.0, MAX_CONST + 2.0, 0.125)
    for _ in range(200):
        z = random_zone(rng, 2)
        u = rng.integers(0, 2 * (MAX_CONST + 1), size=2) / 2.0
        win = z.delay_window(u)
        member = np.array([z.contains(u + d) for d in scan])
        if win is None:
            assert not member.any()
            continue
        lo, hi, lo_inc, hi_inc = win
        for d, m in zip(scan, member):
            inside = (d > lo or (d == lo and lo_inc)) and (
                d < hi or (d == hi and hi_inc)
            )
            assert m == inside


def test_zone_pretty_renders_difference_atoms():
    z = Zone.from_constraints(2, [(1, 2, Bound(2, True)), (2, 0, Bound(3, False))])
    text = z.pretty(["x", "y"])
    assert "x - y < 2" in text and "y <= 3" in text
