"""Backward zone fixpoint for timed safety games, and strategies.

The solver computes the greatest fixpoint of ``W -> W /\\ pi(W)`` over the
explicit product, starting from all non-bad states restricted to their
invariants.  Per discrete state, with U = upred(S \\ W) the valuations from
which some uncontrollable edge exits W:

    pi(W) = pred_t(cpred(W), U)  union  (Inv \\ down(U))

The first disjunct holds the controller's plan "delay, dodging U, then fire
a controllable edge back into W"; the second holds "the whole remaining
delay ray is free of U" (time flows on its own, so merely being in W now is
never enough -- the future must be survivable).  Bad states are cut out up
front; the bad predicate is clock-independent, so delays never cross into a
bad state and the avoid set of pred_t only needs U.

Strategies are memoryless row tables per discrete state, first match wins:
delay rows where delaying forever is safe, then fire rows per controllable
edge in a deterministic preference order, then delay rows for the region
that must still travel toward a fire zone.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .automata import DiscreteState, EdgeInstance, ProductTga
from .errors import SynthesisError
from .zones import Bound, Federation, Zone, canonicalize_matrix, pred_t
from ._dbm import RAW_INF as RAW_INF_LOCAL

DELAY = "delay"
FIRE = "fire"


@dataclass(frozen=True)
class Decision:
    kind: str
    template_id: int = -1
    provenance: str = ""

    @staticmethod
    def delay() -> "Decision":
        return Decision(DELAY)

    def __str__(self):
        return "delay" if self.kind == DELAY else f"fire {self.provenance}"


DECISION_DELAY = Decision.delay()


@dataclass(frozen=True)
class StrategyRow:
    zone: Zone
    decision: Decision


class WinningSet:
    """Map from discrete state to its winning clock federation."""

    def __init__(self, product: ProductTga, feds: Dict[int, Federation]):
        self.product = product
        self.feds = {k: f for k, f in feds.items() if not f.is_empty}

    def federation(self, state: DiscreteState) -> Federation:
        idx = self.product.state_index.get(state)
        if idx is None or idx not in self.feds:
            return Federation.empty(self.product.dim)
        return self.feds[idx]

    def is_winning(self, state: DiscreteState, u) -> bool:
        return self.federation(state).contains(u)

    def __len__(self):
        return len(self.feds)


class Strategy:
    """Ordered (zone, decision) rows per winning discrete state."""

    def __init__(self, product: ProductTga, rows: Dict[int, List[StrategyRow]],
                 model_hash: str = "", bad_label: str = ""):
        self.product = product
        self.rows = rows
        self.model_hash = model_hash
        self.bad_label = bad_label

    def advise(self, state: DiscreteState, u) -> Optional[Decision]:
        """First-matching-row lookup; None when the valuation is not winning."""
        idx = self.product.state_index.get(state)
        if idx is None:
            return None
        for row in self.rows.get(idx, ()):
            if row.zone.contains(u):
                return row.decision
        return None

    def state_rows(self, state: DiscreteState) -> List[StrategyRow]:
        idx = self.product.state_index.get(state)
        return list(self.rows.get(idx, ()))

    def pretty(self, state: DiscreteState) -> str:
        """UPPAAL-Tiga style rendering of one state's advice."""
        product = self.product
        names = product.clocks
        lines = [
            "State: ( %s )%s"
            % (
                " ".join(
                    f"{c.name}.{loc}"
                    for c, loc in zip(product.components, state.locs)
                ),
                "".join(
                    f"  {v.name}={x}"
                    for v, x in zip(product.int_vars, state.ints)
                ),
            )
        ]
        rows = self.state_rows(state)
        fire_rows: Dict[str, List[Zone]] = {}
        for row in rows:
            if row.decision.kind == FIRE:
                fire_rows.setdefault(row.decision.provenance, []).append(row.zone)
        for prov, zs in fire_rows.items():
            cond = " || ".join("(%s)" % z.pretty(names) for z in zs)
            lines.append(f"When you are in {cond},")
            lines.append(f"take transition {prov}")
        if not fire_rows:
            lines.append("When you are in the winning zone, wait.")
        return "\n".join(lines)


def _pred_image(product: ProductTga, inst: EdgeInstance, target_fed: Federation,
                src_inv: Zone) -> Federation:
    """Exact predecessors through one edge: guard, resets, target invariant."""
    if target_fed.is_empty:
        return target_fed
    t = inst.template
    fed = target_fed
    if t.resets:
        zero = [(c, 0, Bound(0, False)) for c in t.resets]
        fed = Federation(
            fed.dim,
            [z for z in (x.constrain(zero) for x in fed.zones) if z is not None],
        )
        for c in t.resets:
            fed = fed.free(c)
    fed = fed.intersect_zone(t.guard_zone)
    fed = fed.intersect_zone(src_inv)
    return fed.reduce()


def _post_image(product: ProductTga, inst: EdgeInstance, source_fed: Federation,
                tgt_inv: Zone) -> Federation:
    """Exact successors through one edge from a set of source valuations."""
    if source_fed.is_empty:
        return source_fed
    t = inst.template
    fed = source_fed.intersect_zone(t.guard_zone)
    if t.resets:
        fed = fed.reset(t.resets)
    return fed.intersect_zone(tgt_inv).reduce()


def post_reach(start: Federation, avoid: Federation, inv: Zone) -> Federation:
    """Delay successors of ``start`` inside ``inv`` that never crossed
    ``avoid`` (mirror of pred_t; endpoints of the traversed segment
    included)."""
    if start.is_empty:
        return start
    sup = start.up().intersect_zone(inv)
    if avoid.is_empty:
        return sup.reduce()
    dim = start.dim
    result = None
    for b in avoid.zones:
        bup = Federation(dim, (b.up(),))
        after_b = bup.subtract(Federation(dim, (b,)))
        part = sup.subtract(bup).union(
            start.intersect(after_b).up().intersect_zone(inv)
        )
        result = part if result is None else result.intersect(part)
        if result.is_empty:
            break
    return result.reduce()


class _Solver:
    def __init__(self, product: ProductTga,
                 bad: Callable[[DiscreteState], bool]):
        self.product = product
        self.bad = bad
        self.dim = product.dim
        n = product.num_states()
        self.inv: List[Zone] = [
            product.invariant_zone(s.locs) for s in product.states
        ]
        self.bad_mask = np.array([bool(bad(s)) for s in product.states])
        self.W: List[Federation] = [
            Federation.empty(self.dim)
            if self.bad_mask[k]
            else Federation(self.dim, (self.inv[k],))
            for k in range(n)
        ]
        self._compl: Dict[int, Federation] = {}
        self.incoming = product.build_reverse_index()
        self.out = [product.edges_from(s) for s in product.states]

    def complement(self, idx: int) -> Federation:
        f = self._compl.get(idx)
        if f is None:
            inv_fed = Federation(self.dim, (self.inv[idx],))
            f = inv_fed.subtract(self.W[idx])
            self._compl[idx] = f
        return f

    def unsafe_now(self, idx: int) -> Federation:
        """U: valuations with an uncontrollable edge leaving W."""
        u = Federation.empty(self.dim)
        for inst in self.out[idx]:
            if inst.controllable:
                continue
            tgt = self.product.state_index[inst.target]
            escape = self.complement(tgt)
            if escape.is_empty:
                continue
            u = u.union(
                _pred_image(self.product, inst, escape, self.inv[idx])
            )
        return u

    def controllable_pred(self, idx: int) -> Federation:
        c = Federation.empty(self.dim)
        for inst in self.out[idx]:
            if not inst.controllable:
                continue
            tgt = self.product.state_index[inst.target]
            wt = self.W[tgt]
            if wt.is_empty:
                continue
            c = c.union(_pred_image(self.product, inst, wt, self.inv[idx]))
        return c

    def pi(self, idx: int) -> Federation:
        u = self.unsafe_now(idx)
        inv_fed = Federation(self.dim, (self.inv[idx],))
        if u.is_empty:
            return inv_fed
        safe_ray = inv_fed.subtract(u.down())
        reach_fire = pred_t(self.controllable_pred(idx), u)
        return safe_ray.union(reach_fire.intersect(inv_fed))

    def solve(self, max_pops: Optional[int] = None) -> Dict[int, Federation]:
        n = self.product.num_states()
        if max_pops is None:
            max_pops = 60 * n + 10_000
        from collections import deque

        queue = deque()
        queued = np.zeros(n, dtype=bool)

        def enqueue_preds(idx: int):
            for _tid, src in self.incoming[idx]:
                if not queued[src] and not self.bad_mask[src]:
                    queued[src] = True
                    queue.append(src)

        for k in range(n):
            if self.bad_mask[k]:
                enqueue_preds(k)
        pops = 0
        while queue:
            pops += 1
            if pops > max_pops:
                unstable = sorted({self.product.states[i] for i in queue})
                raise SynthesisError(
                    f"fixpoint did not stabilize within {max_pops} updates; "
                    f"{len(unstable)} states still unstable, e.g. {unstable[:3]}"
                )
            idx = queue.popleft()
            queued[idx] = False
            if self.bad_mask[idx] or self.W[idx].is_empty:
                continue
            new = self.W[idx].intersect(self.pi(idx))
            if self.W[idx].leq(new):
                continue
            self.W[idx] = new
            self._compl.pop(idx, None)
            enqueue_preds(idx)
        return {k: f for k, f in enumerate(self.W) if not f.is_empty}


def solve_safety(product: ProductTga, bad: Callable[[DiscreteState], bool],
                 max_pops: Optional[int] = None) -> WinningSet:
    """Greatest fixpoint winning set for 'always avoid bad states'."""
    solver = _Solver(product, bad)
    return WinningSet(product, solver.solve(max_pops))


def _edge_order_key(product: ProductTga, inst: EdgeInstance):
    t = inst.template
    comp = t.src_locs[0][0]
    return (comp, t.action_label, tuple(loc for _, loc in t.dst_locs))


def _time_interior(inv: Zone, dim: int) -> Federation:
    """Valuations with positive dwell time: strictify the invariant's
    upper bounds (at the boundary, time cannot advance and delay advice
    would stall, so fire rows take precedence there)."""
    m = inv.m.copy()
    for i in range(1, dim + 1):
        raw = int(m[i, 0])
        if raw < RAW_INF_LOCAL and raw % 2 == 1:
            m[i, 0] = raw - 1
    z = canonicalize_matrix(m)
    return Federation.from_zone(z, dim)


def _sorted_zones(fed: Federation) -> List[Zone]:
    return sorted(fed.zones, key=lambda z: z.m.tobytes())


def extract_strategy(product: ProductTga, winning: WinningSet,
                     bad_label: str = "", model_hash: str = "") -> Strategy:
    """Deterministic memoryless strategy covering every winning valuation.

    Row order per state: safe-forever delay rows first (preferring the
    event-triggered wait over early fires wherever both are safe), then
    fire rows in a fixed edge order, then delay rows for valuations still
    traveling toward a fire zone.
    """
    init = product.initial_state
    init_fed = winning.federation(init)
    if not init_fed.contains(np.zeros(product.dim)):
        raise SynthesisError(
            "initial state is not winning: "
            + _losing_trace_note(product, winning)
        )

    dim = product.dim
    rows: Dict[int, List[StrategyRow]] = {}
    for idx, wfed in winning.feds.items():
        state = product.states[idx]
        inv = product.invariant_zone(state.locs)
        # U relative to the final winning set
        u = Federation.empty(dim)
        fire_feds: List[Tuple[EdgeInstance, Federation]] = []
        for inst in product.edges_from(state):
            tfed = winning.federation(inst.target)
            if inst.controllable:
                f = _pred_image(product, inst, tfed, inv).intersect(wfed)
                if not f.is_empty:
                    fire_feds.append((inst, f))
            else:
                inv_t = product.invariant_zone(inst.target.locs)
                escape = Federation(dim, (inv_t,)).subtract(tfed)
                if not escape.is_empty:
                    u = u.union(_pred_image(product, inst, escape, inv))
        safe_forever = wfed.subtract(u.down())
        # leading delay rows only where time can actually pass
        lead_delay = safe_forever.intersect(_time_interior(inv, dim))
        state_rows: List[StrategyRow] = [
            StrategyRow(z, DECISION_DELAY) for z in _sorted_zones(lead_delay)
        ]
        fire_feds.sort(key=lambda pair: _edge_order_key(product, pair[0]))
        fire_union = Federation.empty(dim)
        for inst, f in fire_feds:
            dec = Decision(FIRE, inst.template_id, inst.provenance)
            state_rows.extend(StrategyRow(z, dec) for z in _sorted_zones(f))
            fire_union = fire_union.union(f)
        rest = wfed.subtract(lead_delay.union(fire_union))
        state_rows.extend(StrategyRow(z, DECISION_DELAY) for z in _sorted_zones(rest))
        rows[idx] = state_rows
    return Strategy(product, rows, model_hash=model_hash, bad_label=bad_label)


def _losing_trace_note(product: ProductTga, winning: WinningSet) -> str:
    """Short counterexample sketch: walk uncontrollable edges out of the
    winning region from the initial state."""
    state = product.initial_state
    u = np.zeros(product.dim)
    path = [f"{state}"]
    for _ in range(12):
        nxt = None
        for inst in product.edges_from(state):
            if inst.controllable:
                continue
            if not inst.template.guard_zone.contains(u):
                continue
            tfed = winning.federation(inst.target)
            v = u.copy()
            for c in inst.template.resets:
                v[c - 1] = 0.0
            if not tfed.contains(v):
                nxt = (inst, v)
                break
        if nxt is None:
            break
        inst, u = nxt
        state = inst.target
        path.append(f"--{inst.provenance}--> {state}")
        if winning.federation(state).is_empty:
            break
    return " ".join(path)


def advise(strategy: Strategy, state: DiscreteState, u) -> Optional[Decision]:
    """Runtime query; None means the valuation is outside the winning set."""
    return strategy.advise(state, u)


def check_inductive(product: ProductTga, winning: WinningSet,
                    strategy: Strategy,
                    bad: Callable[[DiscreteState], bool]) -> List[str]:
    """Symbolic audit of solver + strategy; returns violation messages.

    Checks: (a) no bad state carries a winning federation; (b) images of
    every uncontrollable edge from the delay-closure under the strategy stay
    winning; (c) every fire row is enabled where it applies and its successor
    set is winning; plus the structural row invariants (rows inside the
    winning federation and covering it).
    """
    problems: List[str] = []
    dim = product.dim
    for idx, wfed in winning.feds.items():
        state = product.states[idx]
        if bad(state):
            problems.append(f"{state}: bad state has a winning federation")
            continue
        inv = product.invariant_zone(state.locs)
        rows = strategy.rows.get(idx)
        if rows is None:
            problems.append(f"{state}: winning state has no strategy rows")
            continue
        row_union = Federation(dim, [r.zone for r in rows]).reduce()
        if not row_union.set_eq(wfed):
            problems.append(f"{state}: rows do not cover the winning federation")
        covered = Federation.empty(dim)
        match_fire = Federation.empty(dim)
        match_delay = Federation.empty(dim)
        for r in rows:
            zfed = Federation(dim, (r.zone,))
            if not zfed.leq(wfed):
                problems.append(f"{state}: a row zone leaves the winning set")
            eff = zfed.subtract(covered)
            if r.decision.kind == FIRE:
                t = product.templates[r.decision.template_id]
                if not t.controllable:
                    problems.append(
                        f"{state}: fire row uses uncontrollable edge "
                        f"{t.provenance}"
                    )
                if not eff.leq(Federation(dim, (t.guard_zone,))):
                    problems.append(
                        f"{state}: fire row not enabled on {t.provenance}"
                    )
                match_fire = match_fire.union(eff)
            else:
                match_delay = match_delay.union(eff)
            covered = covered.union(zfed)

        closure = post_reach(match_delay, match_fire, inv)
        if not closure.leq(wfed):
            problems.append(
                f"{state}: delaying under the strategy can exit the winning set"
            )
        reach = wfed.union(closure)
        for inst in product.edges_from(state):
            tfed = winning.federation(inst.target)
            tinv = product.invariant_zone(inst.target.locs)
            if inst.controllable:
                continue
            img = _post_image(product, inst, reach, tinv)
            if not img.leq(tfed):
                problems.append(
                    f"{state}: uncontrollable {inst.provenance} escapes the "
                    f"winning set"
                )
        for r in rows:
            if r.decision.kind != FIRE:
                continue
            inst = None
            for cand in product.edges_from(state):
                if cand.template_id == r.decision.template_id:
                    inst = cand
                    break
            if inst is None:
                problems.append(
                    f"{state}: fire row references an edge that does not "
                    f"apply here ({r.decision.provenance})"
                )
                continue
            tfed = winning.federation(inst.target)
            tinv = product.invariant_zone(inst.target.locs)
            img = _post_image(product, inst, Federation(dim, (r.zone,)), tinv)
            if not img.leq(tfed):
                problems.append(
                    f"{state}: firing {inst.provenance} leaves the winning set"
                )
    return problems
