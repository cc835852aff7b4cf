"""Timed game automata with handshake channels and bounded integers.

A ``Tga`` is a single component: locations with downward-closed invariants,
edges carrying clock guards, integer guards, resets and integer updates,
and actions split into controllable and uncontrollable.  ``compose`` builds
the explicit product: location tuples crossed with the valuations of the
bounded integer variables, so everything downstream of composition deals
with pure clock zones.

Synchronization is binary handshake: a ``send`` edge on a channel pairs
with a ``receive`` edge on the same channel in another component; the
product edge is controllable only when both halves are.
"""

import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CompositionError, StepError
from .zones import Bound, Zone

RELATIONS = ("<=", "<", "==", ">", ">=")


@dataclass(frozen=True)
class ClockConstraint:
    """Atomic constraint ``clock rel n`` or ``clock - other rel n``."""

    clock: str
    rel: str
    value: int
    other: Optional[str] = None

    def __str__(self):
        lhs = self.clock if self.other is None else f"{self.clock} - {self.other}"
        return f"{lhs} {self.rel} {self.value}"


@dataclass(frozen=True)
class IntConstraint:
    """Atomic constraint ``var rel value`` over a bounded integer."""

    var: str
    rel: str
    value: int

    def holds(self, valuation: Dict[str, int]) -> bool:
        v = valuation[self.var]
        return {
            "<=": v <= self.value,
            "<": v < self.value,
            "==": v == self.value,
            ">": v > self.value,
            ">=": v >= self.value,
        }[self.rel]

    def __str__(self):
        return f"{self.var} {self.rel} {self.value}"


@dataclass(frozen=True)
class IntUpdate:
    """``var := value`` (op 'set') or ``var := var + value`` (op 'inc')."""

    var: str
    op: str
    value: int

    def apply(self, valuation: Dict[str, int]) -> int:
        if self.op == "set":
            return self.value
        if self.op == "inc":
            return valuation[self.var] + self.value
        raise ValueError(f"unknown int update op {self.op!r}")

    def __str__(self):
        if self.op == "set":
            return f"{self.var} := {self.value}"
        return f"{self.var} := {self.var} + {self.value}"


@dataclass(frozen=True)
class Guard:
    clock_conjuncts: Tuple[ClockConstraint, ...] = ()
    int_conjuncts: Tuple[IntConstraint, ...] = ()

    @staticmethod
    def true() -> "Guard":
        return Guard()

    def __str__(self):
        parts = [str(c) for c in self.clock_conjuncts]
        parts += [str(c) for c in self.int_conjuncts]
        return " && ".join(parts) if parts else "true"


@dataclass(frozen=True)
class Action:
    """internal(name) | send(channel) | receive(channel), with ownership."""

    kind: str
    label: str
    controllable: bool

    def __str__(self):
        mark = {"send": "!", "receive": "?"}.get(self.kind, "")
        return f"{self.label}{mark}"


@dataclass(frozen=True)
class Edge:
    src: str
    guard: Guard
    action: Action
    clock_resets: Tuple[str, ...]
    dst: str
    int_updates: Tuple[IntUpdate, ...] = ()


@dataclass(frozen=True)
class Location:
    name: str
    invariant: Tuple[ClockConstraint, ...] = ()


@dataclass(frozen=True)
class IntVar:
    name: str
    lo: int
    hi: int
    init: int
    is_global: bool = True


@dataclass(frozen=True)
class Tga:
    name: str
    locations: Tuple[Location, ...]
    initial: str
    clocks: Tuple[str, ...]
    edges: Tuple[Edge, ...]
    int_vars: Tuple[IntVar, ...] = ()

    def location(self, name: str) -> Location:
        for loc in self.locations:
            if loc.name == name:
                return loc
        raise KeyError(name)

    def location_names(self) -> List[str]:
        return [loc.name for loc in self.locations]


def validate(tga: Tga) -> List[str]:
    """Structural validation; returns one message per violation."""
    problems = []
    names = set()
    for loc in tga.locations:
        if loc.name in names:
            problems.append(f"duplicate location {loc.name!r}")
        names.add(loc.name)
    if tga.initial not in names:
        problems.append(f"initial location {tga.initial!r} not declared")
    clockset = set(tga.clocks)
    varset = {v.name for v in tga.int_vars}

    for loc in tga.locations:
        for c in loc.invariant:
            if c.other is not None or c.rel not in ("<=", "<"):
                problems.append(
                    f"location {loc.name}: invariant not downward closed: {c}"
                )
            if c.clock not in clockset:
                problems.append(
                    f"location {loc.name}: invariant references undeclared clock {c.clock!r}"
                )

    for v in tga.int_vars:
        if not v.lo <= v.init <= v.hi:
            problems.append(f"int var {v.name}: initial {v.init} outside [{v.lo}, {v.hi}]")

    for k, e in enumerate(tga.edges):
        where = f"edge #{k} {e.src}->{e.dst}"
        if e.src not in names:
            problems.append(f"{where}: unknown source location")
        if e.dst not in names:
            problems.append(f"{where}: unknown target location")
        for c in e.guard.clock_conjuncts:
            for cl in (c.clock, c.other):
                if cl is not None and cl not in clockset:
                    problems.append(f"{where}: guard references undeclared clock {cl!r}")
            if c.rel not in RELATIONS:
                problems.append(f"{where}: bad relation {c.rel!r}")
            if c.value < 0:
                problems.append(f"{where}: negative guard constant in {c}")
        for c in e.guard.int_conjuncts:
            if c.var not in varset:
                problems.append(f"{where}: guard references undeclared variable {c.var!r}")
        for r in e.clock_resets:
            if r not in clockset:
                problems.append(f"{where}: resets undeclared clock {r!r}")
        for upd in e.int_updates:
            if upd.var not in varset:
                problems.append(f"{where}: updates undeclared variable {upd.var!r}")
    return problems


# -- product construction ----------------------------------------------------


class DiscreteState(tuple):
    """(location tuple, integer valuation tuple) of the product."""

    __slots__ = ()

    def __new__(cls, locs: Tuple[str, ...], ints: Tuple[int, ...] = ()):
        return super().__new__(cls, (tuple(locs), tuple(ints)))

    @property
    def locs(self) -> Tuple[str, ...]:
        return self[0]

    @property
    def ints(self) -> Tuple[int, ...]:
        return self[1]

    def __repr__(self):
        if self.ints:
            return f"DiscreteState({self.locs}, ints={self.ints})"
        return f"DiscreteState({self.locs})"


@dataclass(frozen=True, slots=True)
class EdgeTemplate:
    """A product edge family: fixed component moves, free elsewhere.

    ``src_locs``/``dst_locs`` map component index to the required source and
    resulting target location of the components that move; everything else
    interleaves.  ``provenance`` records which component edges synchronized,
    so strategies can name the original loop and mechanism.
    """

    kind: str  # 'internal' | 'sync'
    controllable: bool
    src_locs: Tuple[Tuple[int, str], ...]
    dst_locs: Tuple[Tuple[int, str], ...]
    guard_zone: Zone
    int_guard: Tuple[IntConstraint, ...]
    resets: Tuple[int, ...]  # product clock indices
    int_updates: Tuple[IntUpdate, ...]
    provenance: str
    action_label: str

    def __str__(self):
        return self.provenance


@dataclass(frozen=True, slots=True)
class EdgeInstance:
    """A template applied at a concrete source state."""

    template_id: int
    template: EdgeTemplate
    source: DiscreteState
    target: DiscreteState

    @property
    def controllable(self) -> bool:
        return self.template.controllable

    @property
    def provenance(self) -> str:
        return self.template.provenance

    def __repr__(self):
        return f"EdgeInstance({self.template.provenance} @ {self.source})"


def _constraint_raws(c: ClockConstraint, idx: Dict[str, int]) -> List[tuple]:
    i = idx[c.clock]
    j = 0 if c.other is None else idx[c.other]
    out = []
    if c.rel in ("<=", "<", "=="):
        out.append((i, j, Bound(c.value, c.rel == "<")))
    if c.rel in (">=", ">", "=="):
        out.append((j, i, Bound(-c.value, c.rel == ">")))
    return out


class ProductTga:
    """Explicit parallel composition with expanded integer valuations."""

    def __init__(self, components, clocks, int_vars, loc_tuples, valuations,
                 templates, initial_state, name="product"):
        self.name = name
        self.components: Tuple[Tga, ...] = tuple(components)
        self.clocks: Tuple[str, ...] = tuple(clocks)
        self.clock_index = {c: k + 1 for k, c in enumerate(self.clocks)}
        self.dim = len(self.clocks)
        self.int_vars: Tuple[IntVar, ...] = tuple(int_vars)
        self.var_order = [v.name for v in self.int_vars]
        self.templates: List[EdgeTemplate] = list(templates)
        self.states: List[DiscreteState] = [
            DiscreteState(lt, iv) for lt in loc_tuples for iv in valuations
        ]
        self.state_index: Dict[DiscreteState, int] = {
            s: k for k, s in enumerate(self.states)
        }
        self.initial_state = initial_state
        self._inv_cache: Dict[Tuple[str, ...], Zone] = {}
        self._loc_index = [
            {loc.name: loc for loc in comp.locations} for comp in self.components
        ]
        self._templates_by_src: Dict[Tuple[int, str], List[int]] = {}
        for tid, t in enumerate(self.templates):
            comp0, loc0 = t.src_locs[0]
            self._templates_by_src.setdefault((comp0, loc0), []).append(tid)
        self._out_cache: Dict[int, List[EdgeInstance]] = {}
        self._in_arrays = None

    # -- structure -------------------------------------------------------

    def num_states(self) -> int:
        return len(self.states)

    def invariant_zone(self, locs: Tuple[str, ...]) -> Zone:
        z = self._inv_cache.get(locs)
        if z is None:
            cons = []
            for k, name in enumerate(locs):
                for c in self._loc_index[k][name].invariant:
                    cons.extend(
                        _constraint_raws(
                            ClockConstraint(
                                f"{self.components[k].name}.{c.clock}",
                                c.rel,
                                c.value,
                            ),
                            self.clock_index,
                        )
                    )
            z = Zone.universe(self.dim) if not cons else Zone.from_constraints(self.dim, cons)
            if z is None:
                raise CompositionError(f"contradictory invariant at {locs}")
            self._inv_cache[locs] = z
        return z

    def _valuation_dict(self, ints: Tuple[int, ...]) -> Dict[str, int]:
        return dict(zip(self.var_order, ints))

    def _apply_template(self, tid: int, state: DiscreteState) -> Optional[EdgeInstance]:
        t = self.templates[tid]
        locs, ints = state.locs, state.ints
        for comp, loc in t.src_locs:
            if locs[comp] != loc:
                return None
        vals = self._valuation_dict(ints)
        for c in t.int_guard:
            if not c.holds(vals):
                return None
        new_locs = list(locs)
        for comp, loc in t.dst_locs:
            new_locs[comp] = loc
        for upd in t.int_updates:
            vals[upd.var] = upd.apply(vals)
        new_ints = []
        for v in self.int_vars:
            value = vals[v.name]
            if not v.lo <= value <= v.hi:
                raise CompositionError(
                    f"update on edge {t.provenance} drives {v.name} to {value}, "
                    f"outside [{v.lo}, {v.hi}]"
                )
            new_ints.append(value)
        target = DiscreteState(tuple(new_locs), tuple(new_ints))
        return EdgeInstance(tid, t, state, target)

    def edges_from(self, state: DiscreteState) -> List[EdgeInstance]:
        idx = self.state_index[state]
        cached = self._out_cache.get(idx)
        if cached is not None:
            return cached
        out = []
        seen = set()
        for k, loc in enumerate(state.locs):
            for tid in self._templates_by_src.get((k, loc), ()):
                if tid in seen:
                    continue
                seen.add(tid)
                inst = self._apply_template(tid, state)
                if inst is not None:
                    out.append(inst)
        self._out_cache[idx] = out
        return out

    def build_reverse_index(self):
        """(template_id, src_idx) lists per target state, for backward solving."""
        if self._in_arrays is not None:
            return self._in_arrays
        incoming: List[List[Tuple[int, int]]] = [[] for _ in self.states]
        for s in self.states:
            sidx = self.state_index[s]
            for inst in self.edges_from(s):
                incoming[self.state_index[inst.target]].append((inst.template_id, sidx))
        self._in_arrays = incoming
        return incoming

    def describe(self) -> str:
        lines = [
            f"product {self.name}: {len(self.states)} states, "
            f"{len(self.templates)} edge templates, clocks {list(self.clocks)}"
        ]
        for t in self.templates:
            tag = "c" if t.controllable else "u"
            lines.append(f"  [{tag}] {t.provenance} guard[{t.guard_zone.pretty(self.clocks)}]")
        return "\n".join(lines)


def compose(components: Sequence[Tga], location_budget: int = 500_000,
            name: str = "product") -> ProductTga:
    """Explicit product of a network of TGAs (environment has priority:
    a synchronized edge is controllable iff both halves are)."""
    components = list(components)
    for comp in components:
        problems = validate(comp)
        if problems:
            raise CompositionError(
                f"component {comp.name} invalid: " + "; ".join(problems)
            )
    names = [c.name for c in components]
    if len(set(names)) != len(names):
        raise CompositionError("component names must be unique")

    clocks = [f"{c.name}.{clk}" for c in components for clk in c.clocks]
    clock_index = {c: k + 1 for k, c in enumerate(clocks)}

    # merge integer variables; globals must agree across declarations
    merged: Dict[str, IntVar] = {}
    for comp in components:
        for v in comp.int_vars:
            key = v.name if v.is_global else f"{comp.name}.{v.name}"
            vv = IntVar(key, v.lo, v.hi, v.init, v.is_global)
            if key in merged and merged[key] != vv:
                raise CompositionError(
                    f"inconsistent declarations of global variable {v.name!r}"
                )
            merged[key] = vv
    int_vars = list(merged.values())

    n_locs = 1
    for comp in components:
        n_locs *= len(comp.locations)
    n_vals = 1
    for v in int_vars:
        n_vals *= v.hi - v.lo + 1
    if n_locs * n_vals > location_budget:
        raise CompositionError(
            f"product would have {n_locs * n_vals} discrete states, "
            f"over the budget of {location_budget}"
        )

    def qualify_var(comp: Tga, varname: str) -> str:
        for v in comp.int_vars:
            if v.name == varname:
                return varname if v.is_global else f"{comp.name}.{varname}"
        raise CompositionError(f"{comp.name}: unknown variable {varname}")

    def guard_parts(comp_idx: int, e: Edge):
        comp = components[comp_idx]
        raws = []
        for c in e.guard.clock_conjuncts:
            qc = ClockConstraint(
                f"{comp.name}.{c.clock}",
                c.rel,
                c.value,
                None if c.other is None else f"{comp.name}.{c.other}",
            )
            raws.extend(_constraint_raws(qc, clock_index))
        ints = tuple(
            IntConstraint(qualify_var(comp, c.var), c.rel, c.value)
            for c in e.guard.int_conjuncts
        )
        resets = tuple(clock_index[f"{comp.name}.{r}"] for r in e.clock_resets)
        updates = tuple(
            IntUpdate(qualify_var(comp, u.var), u.op, u.value) for u in e.int_updates
        )
        return raws, ints, resets, updates

    templates: List[EdgeTemplate] = []
    dim = len(clocks)

    # channel wiring: map channel -> receiving component (binary handshake)
    receivers: Dict[str, int] = {}
    for k, comp in enumerate(components):
        for e in comp.edges:
            if e.action.kind == "receive":
                prev = receivers.get(e.action.label)
                if prev is not None and prev != k:
                    raise CompositionError(
                        f"channel {e.action.label!r} has receivers in "
                        f"{components[prev].name} and {comp.name}; only one "
                        "receiving automaton is supported"
                    )
                receivers[e.action.label] = k

    for k, comp in enumerate(components):
        for e in comp.edges:
            if e.action.kind == "internal":
                raws, ints, resets, updates = guard_parts(k, e)
                gz = Zone.from_constraints(dim, raws) if raws else Zone.universe(dim)
                if gz is None:
                    continue  # unsatisfiable guard: edge can never fire
                templates.append(
                    EdgeTemplate(
                        kind="internal",
                        controllable=e.action.controllable,
                        src_locs=((k, e.src),),
                        dst_locs=((k, e.dst),),
                        guard_zone=gz,
                        int_guard=ints,
                        resets=resets,
                        int_updates=updates,
                        provenance=f"{comp.name}.{e.src}->{comp.name}.{e.dst}",
                        action_label=str(e.action),
                    )
                )
            elif e.action.kind == "send":
                ridx = receivers.get(e.action.label)
                if ridx is None:
                    continue  # no receiver anywhere: the edge can never fire
                if ridx == k:
                    raise CompositionError(
                        f"channel {e.action.label!r}: send and receive in the "
                        f"same component {comp.name}"
                    )
                rcomp = components[ridx]
                for re in rcomp.edges:
                    if re.action.kind != "receive" or re.action.label != e.action.label:
                        continue
                    raws_s, ints_s, resets_s, upd_s = guard_parts(k, e)
                    raws_r, ints_r, resets_r, upd_r = guard_parts(ridx, re)
                    gz = (
                        Zone.from_constraints(dim, raws_s + raws_r)
                        if raws_s + raws_r
                        else Zone.universe(dim)
                    )
                    if gz is None:
                        continue
                    templates.append(
                        EdgeTemplate(
                            kind="sync",
                            controllable=e.action.controllable
                            and re.action.controllable,
                            src_locs=((k, e.src), (ridx, re.src)),
                            dst_locs=((k, e.dst), (ridx, re.dst)),
                            guard_zone=gz,
                            int_guard=ints_s + ints_r,
                            # sender's updates first, then receiver's
                            resets=resets_s + resets_r,
                            int_updates=upd_s + upd_r,
                            provenance=(
                                f"{comp.name}.{e.src}->{comp.name}.{e.dst} "
                                f"{e.action.label}! | "
                                f"{rcomp.name}.{re.src}->{rcomp.name}.{re.dst}"
                            ),
                            action_label=e.action.label,
                        )
                    )

    loc_tuples = list(itertools.product(*[c.location_names() for c in components]))
    valuations = list(
        itertools.product(*[range(v.lo, v.hi + 1) for v in int_vars])
    ) or [()]
    initial = DiscreteState(
        tuple(c.initial for c in components), tuple(v.init for v in int_vars)
    )
    return ProductTga(
        components, clocks, int_vars, loc_tuples, valuations, templates, initial,
        name=name,
    )


# -- operational semantics ----------------------------------------------------


def delay_step(product: ProductTga, state: DiscreteState, u: np.ndarray,
               d: float) -> np.ndarray:
    """Advance all clocks by d; both endpoints must satisfy the invariant."""
    if d < 0:
        raise StepError("negative delay")
    inv = product.invariant_zone(state.locs)
    if not inv.contains(u):
        raise StepError(f"state violates invariant before delay: {inv.pretty(product.clocks)}")
    nu = np.asarray(u, dtype=float) + d
    if not inv.contains(nu):
        raise StepError(
            f"delay {d} violates invariant {inv.pretty(product.clocks)} at {state.locs}"
        )
    return nu


def discrete_step(product: ProductTga, state: DiscreteState, u: np.ndarray,
                  edge: EdgeInstance):
    """Fire an edge: guard must hold, resets apply, target invariant must hold."""
    if edge.source != state:
        raise StepError("edge does not start at the given state")
    if not edge.template.guard_zone.contains(u):
        raise StepError(
            f"guard {edge.template.guard_zone.pretty(product.clocks)} unsatisfied "
            f"on {edge.provenance}"
        )
    nu = np.asarray(u, dtype=float).copy()
    for c in edge.template.resets:
        nu[c - 1] = 0.0
    tinv = product.invariant_zone(edge.target.locs)
    if not tinv.contains(nu):
        raise StepError(
            f"target invariant {tinv.pretty(product.clocks)} violated after "
            f"{edge.provenance}"
        )
    return edge.target, nu
