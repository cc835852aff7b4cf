"""Closed-loop co-simulation of plants, synthesized scheduler and network.

The hybrid execution integrates the true plant dynamics between events and
consults the strategy at every decision point.  Event triggering is
resolved by physics: the next event-triggered transmission of a loop
happens exactly when its quadratic triggering condition first fires on the
true trajectory, and the destination region is the region containing the
new sampled state.  Delay advice stands until either an uncontrollable
event occurs or the valuation crosses into a fire row; a fire row is taken
at the earliest instant it is entered (at a representative interior instant
when the crossing region is left-open).  Ties between simultaneous events
resolve deterministically: physical triggers before scheduler fires, lower
loop index first.

All clock arithmetic runs in integer-scaled ticks; plant integration runs
in continuous time units (ticks / scale).
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .automata import DiscreteState, EdgeInstance, ProductTga, discrete_step
from .errors import AbstractionError, ConfigError, SimulationError
from .etc import ConicPartition, LtiLoop, TriggerConfig, hold_flow, inter_sample_times
from .game import FIRE, Strategy

TRIGGER_NEVER = 1e300  # disables the trigger condition in the integrator


@dataclass(frozen=True)
class SimConfig:
    horizon: float
    seed: int = 0
    policy: str = "fixed"  # 'fixed' | 'random' (seeded initial states)
    initial_states: Tuple[Tuple[float, float], ...] = ()
    store_trajectories: bool = False
    trajectory_dt: float = 0.01

    def __post_init__(self):
        if self.horizon <= 0:
            raise ConfigError("simulation horizon must be positive")
        if self.policy not in ("fixed", "random"):
            raise ConfigError("policy must be 'fixed' or 'random'")
        for x in self.initial_states:
            if not any(x):
                raise ConfigError("initial plant states must be nonzero")


@dataclass(frozen=True)
class UpdateEvent:
    time: float  # ticks
    loop: int  # loop index, 0-based
    mechanism: str  # 'early' | 'etc'
    coeff: int  # triggering-coefficient index used for this cycle
    src_region: int
    dst_region: int
    inter_ticks: float  # time since the previous update of this loop
    ear_num: int  # counter value right after the event
    sample: Tuple[float, float]  # new sampled plant state


@dataclass
class SimTrace:
    scale: int
    horizon_ticks: float
    events: List[UpdateEvent] = field(default_factory=list)
    busy: List[Tuple[float, float, int, str]] = field(default_factory=list)
    conflicts: int = 0
    samples: List[List[Tuple[float, float, float, float]]] = field(default_factory=list)
    trajectories: List[List[Tuple[float, float, float, float]]] = field(default_factory=list)
    ear_series: List[Tuple[float, int]] = field(default_factory=list)
    seed: int = 0
    initial_states: Tuple[Tuple[float, float], ...] = ()
    model_hash: str = ""
    coefficients_used: Dict[int, set] = field(default_factory=dict)

    def loop_events(self, i: int) -> List[UpdateEvent]:
        return [e for e in self.events if e.loop == i]


class _LoopRuntime:
    def __init__(self, idx, loop, abstraction):
        self.idx = idx
        self.loop = loop
        self.ab = abstraction
        self.x_hold = None
        self.t_last = 0.0  # ticks of the last update (clock reset instant)
        self.coeff = None
        self.trigger_at = None  # absolute ticks of the physical trigger
        self.trigger_state = None
        self.region = None


def _classify(product: ProductTga, inst: EdgeInstance):
    """(kind, loop_component_index) for a product edge instance."""
    t = inst.template
    comp, src = t.src_locs[0]
    dst = dict(t.dst_locs)[comp]
    if t.kind == "sync":
        return ("transmit", comp)
    if comp == 0:
        return ("release", comp)
    if "a" in dst and src == dst.split("a")[0]:
        return ("choose", comp)
    if dst.startswith("Ear"):
        return ("early", comp)
    return ("other", comp)


def _region_of_loc(name: str) -> int:
    return int(name[1:].split("a")[0]) - 1


def _coeff_of_loc(name: str) -> int:
    return int(name.split("a")[1]) - 1


def simulate(abstractions, product: ProductTga, strategy: Strategy,
             config: SimConfig) -> SimTrace:
    """Run the scheduled closed loop; abstractions[i] drives loop i, which
    must be component i+1 of the product (component 0 is the network)."""
    n_loops = len(abstractions)
    if len(config.initial_states) != n_loops:
        raise ConfigError("one initial state per loop required")
    if strategy.model_hash and hasattr(product, "content_hash"):
        if strategy.model_hash != product.content_hash:
            raise SimulationError("strategy was synthesized for a different model")

    scale = abstractions[0].bounds.scale
    rng = np.random.default_rng(config.seed)
    horizon = config.horizon * scale

    init = []
    for i, ab in enumerate(abstractions):
        x0 = np.asarray(config.initial_states[i], dtype=float)
        if config.policy == "random":
            s = ab.partition.region_of(x0)
            width = 2 * math.pi / ab.partition.q
            angle = (s + rng.uniform(0.0, 1.0)) * width
            mag = float(np.linalg.norm(x0)) * rng.uniform(0.5, 2.0)
            x0 = mag * np.array([math.cos(angle), math.sin(angle)])
        init.append(x0)

    trace = SimTrace(
        scale=scale,
        horizon_ticks=horizon,
        seed=config.seed,
        initial_states=tuple(tuple(map(float, x)) for x in init),
        model_hash=strategy.model_hash,
        samples=[[] for _ in range(n_loops)],
        trajectories=[[] for _ in range(n_loops)],
        coefficients_used={i: set() for i in range(n_loops)},
    )

    rts = []
    for i, ab in enumerate(abstractions):
        rt = _LoopRuntime(i, ab.loop, ab)
        rt.x_hold = init[i]
        rt.region = ab.partition.region_of(init[i])
        rts.append(rt)
        v = float(ab.loop.K @ init[i])
        trace.samples[i].append((0.0, init[i][0], init[i][1], v))

    state = product.initial_state
    u = np.zeros(product.dim)
    t = 0.0
    trace.ear_series.append((0.0, state.ints[0] if state.ints else 0))

    def plant_state_at(rt, ticks):
        dt = (ticks - rt.t_last) / scale
        if dt <= 0:
            return rt.x_hold
        w = (rt.loop.hold_input_gain() @ rt.x_hold)[None, :]
        _, xs = _integrate(rt.loop, w, rt.x_hold[None, :], dt, rt.ab.trigger)
        return xs[0]

    def schedule_trigger(rt, j):
        rt.coeff = j
        taus, xs = inter_sample_times(
            rt.loop, rt.x_hold[None, :], rt.ab.trigger.sigmas[j], rt.ab.trigger
        )
        rt.trigger_at = rt.t_last + taus[0] * scale
        rt.trigger_state = xs[0]
        lo = rt.ab.bounds.lo[rt.region, j]
        hi = rt.ab.bounds.hi[rt.region, j]
        gap = taus[0] * scale
        if not (lo <= gap <= hi):
            raise AbstractionError(
                f"loop {rt.idx} region {rt.region + 1}: trigger after "
                f"{gap:.3f} ticks, outside the stored [{lo}, {hi}]",
            )

    net = product.components[0]
    delta_ticks = next(
        c.value for c in net.location("InUse").invariant if c.clock == "c"
    )

    def record_update(rt, ticks, mech, dst_region, new_sample, coeff):
        inter = ticks - rt.t_last
        ear = state.ints[0] if state.ints else 0
        ev = UpdateEvent(
            time=ticks,
            loop=rt.idx,
            mechanism=mech,
            coeff=coeff,
            src_region=rt.region,
            dst_region=dst_region,
            inter_ticks=inter,
            ear_num=ear,
            sample=tuple(map(float, new_sample)),
        )
        trace.events.append(ev)
        trace.busy.append((ticks, ticks + delta_ticks, rt.idx, mech))
        trace.ear_series.append((ticks, ear))
        v = float(rt.loop.K @ new_sample)
        trace.samples[rt.idx].append((ticks / scale, new_sample[0], new_sample[1], v))
        rt.x_hold = np.asarray(new_sample, dtype=float)
        rt.t_last = ticks
        rt.region = dst_region
        rt.coeff = None
        rt.trigger_at = None
        rt.trigger_state = None

    def transmit(rt, ticks, mech, new_sample, coeff, src_loc):
        nonlocal state, u
        dst_region = rt.ab.partition.region_of(new_sample)
        cands = [
            e
            for e in product.edges_from(state)
            if e.template.kind == "sync"
            and e.template.src_locs[0][0] == rt.idx + 1
            and e.template.src_locs[0][1] == src_loc
            and dict(e.template.dst_locs)[rt.idx + 1] == f"R{dst_region + 1}"
        ]
        if not cands:
            raise AbstractionError(
                f"loop {rt.idx}: sampled state landed in region "
                f"{dst_region + 1}, not a successor of {src_loc}",
            )
        if state.locs[0] != "Idle":
            trace.conflicts += 1
            raise SimulationError(
                f"transmission of loop {rt.idx} at {ticks} ticks found the "
                f"network {state.locs[0]}",
                trace=trace,
            )
        state, u = discrete_step(product, state, u, cands[0])
        record_update(rt, ticks, mech, dst_region, new_sample, coeff)

    def advance_to(ticks):
        nonlocal t, u
        d = ticks - t
        if d < -1e-9:
            raise SimulationError(f"time went backwards at {ticks}", trace=trace)
        if d > 0:
            u = u + d
            t = ticks

    max_steps = int(1e6)
    for _ in range(max_steps):
        if t >= horizon:
            break
        dec = strategy.advise(state, u)
        if dec is None:
            raise SimulationError(
                f"strategy has no advice at {state} {u} (abstraction/solver "
                "inconsistency)",
                trace=trace,
            )
        if dec.kind == FIRE:
            inst = next(
                e for e in product.edges_from(state)
                if e.template_id == dec.template_id
            )
            kind, comp = _classify(product, inst)
            if kind == "choose":
                state, u = discrete_step(product, state, u, inst)
                rt = rts[comp - 1]
                j = _coeff_of_loc(dict(inst.template.dst_locs)[comp])
                trace.coefficients_used[rt.idx].add(j)
                schedule_trigger(rt, j)
            elif kind == "early":
                rt = rts[comp - 1]
                src_loc = dict(inst.template.dst_locs)[comp]  # Ear{s}
                new_sample = plant_state_at(rt, t)
                coeff = rt.coeff
                state, u = discrete_step(product, state, u, inst)
                transmit(rt, t, "early", new_sample, coeff, src_loc)
            elif kind == "release":
                state, u = discrete_step(product, state, u, inst)
            else:
                raise SimulationError(
                    f"strategy advised unexpected edge {inst.provenance}",
                    trace=trace,
                )
            continue

        # delay advice: find the next event
        candidates = []  # (ticks, priority, payload)
        for rt in rts:
            if rt.trigger_at is not None and rt.trigger_at <= horizon:
                candidates.append((rt.trigger_at, 0, rt.idx))
        cross = _next_fire_crossing(strategy, state, u)
        if cross is not None:
            candidates.append((t + cross, 1, -1))
        if not candidates:
            advance_to(horizon)
            break
        ticks, prio, payload = min(candidates, key=lambda c: (c[0], c[1], c[2]))
        if ticks >= horizon:
            advance_to(horizon)
            break
        advance_to(ticks)
        if prio == 0:
            rt = rts[payload]
            src_loc = f"R{rt.region + 1}a{rt.coeff + 1}"
            transmit(rt, ticks, "etc", rt.trigger_state, rt.coeff, src_loc)
        # otherwise: crossed into a fire row; the next advise handles it
    else:
        raise SimulationError("event budget exhausted", trace=trace)

    if config.store_trajectories:
        _fill_trajectories(trace, rts, config, horizon)
    return trace


def _integrate(loop, w_rows, x0s, dt, trigger_cfg):
    from ._timing import trigger_times_batch

    return trigger_times_batch(
        loop.A, w_rows, x0s, TRIGGER_NEVER, trigger_cfg.step, dt, trigger_cfg.refine
    )


def _next_fire_crossing(strategy: Strategy, state: DiscreteState, u) -> Optional[float]:
    """Earliest delay at which the first-matching row becomes a fire row.

    The advice along the diagonal ray is piecewise constant between the
    entry/exit instants of the row zones.  Probing every boundary and every
    interval midpoint in ascending order therefore finds the first flip
    exactly; when the fire region is left-open (no earliest instant) the
    midpoint serves as the deterministic representative.
    """
    rows = strategy.state_rows(state)
    if not any(r.decision.kind == FIRE for r in rows):
        return None
    boundaries = set()
    for row in rows:
        win = row.zone.delay_window(u)
        if win is None:
            continue
        lo, hi, _, _ = win
        if lo > 1e-12:
            boundaries.add(lo)
        if hi != float("inf") and hi > 1e-12:
            boundaries.add(hi)
    probes = []
    prev = 0.0
    for b in sorted(boundaries):
        if b - prev > 1e-12:
            probes.append(prev + (b - prev) / 2)
        probes.append(b)
        prev = b
    for d in probes:
        dec = strategy.advise(state, u + d)
        if dec is not None and dec.kind == FIRE:
            return d
    return None


def _fill_trajectories(trace: SimTrace, rts, config: SimConfig, horizon):
    scale = trace.scale
    for rt in rts:
        pts = []
        events = [e for e in trace.events if e.loop == rt.idx]
        anchors = [(0.0, np.asarray(trace.initial_states[rt.idx]))]
        anchors += [(e.time, np.asarray(e.sample)) for e in events]
        for k, (t0, x0) in enumerate(anchors):
            t1 = anchors[k + 1][0] if k + 1 < len(anchors) else horizon
            if t1 <= t0:
                continue
            offs = np.arange(0.0, (t1 - t0) / scale, config.trajectory_dt)
            phis = hold_flow(rt.loop, offs)
            v = float(rt.loop.K @ x0)
            for dt_off, phi in zip(offs, phis):
                xi = phi @ x0
                pts.append(((t0 / scale) + dt_off, xi[0], xi[1], v))
        trace.trajectories[rt.idx] = pts


def verify_trace(trace: SimTrace, delta_ticks: int, ear_max: Optional[int],
                 abstractions) -> List[str]:
    """Post-hoc audit of a trace; returns one message per violation.

    Checks conflict spacing, the consecutive-early-update counter, timing
    envelopes per mechanism, and Lyapunov decrease across update instants.
    """
    problems = []
    times = sorted(e.time for e in trace.events)
    for a, b in zip(times, times[1:]):
        if b - a < delta_ticks - 1e-9:
            problems.append(
                f"conflict: updates {a:.3f} and {b:.3f} ticks are closer "
                f"than the channel occupancy {delta_ticks}"
            )
    if ear_max is not None:
        for tk, num in trace.ear_series:
            if num > ear_max:
                problems.append(
                    f"counter exceeded: earNum={num} at {tk:.3f} ticks"
                )
        for e in trace.events:
            if e.mechanism == "etc" and e.ear_num != 0:
                problems.append(
                    f"counter not reset by the event-triggered update at "
                    f"{e.time:.3f} ticks"
                )
    for e in trace.events:
        ab = abstractions[e.loop]
        if e.mechanism == "etc":
            lo = ab.bounds.lo[e.src_region, e.coeff]
            hi = ab.bounds.hi[e.src_region, e.coeff]
            if not (lo - 1e-9 <= e.inter_ticks <= hi + 1e-9):
                problems.append(
                    f"loop {e.loop}: event-triggered gap {e.inter_ticks:.3f} "
                    f"outside [{lo}, {hi}] in region {e.src_region + 1}"
                )
        else:
            lo = ab.early.d_lo[e.src_region]
            hi = ab.early.d_hi[e.src_region]
            if not (lo - 1e-9 <= e.inter_ticks <= hi + 1e-9):
                problems.append(
                    f"loop {e.loop}: early gap {e.inter_ticks:.3f} outside "
                    f"[{lo}, {hi}] in region {e.src_region + 1}"
                )
    for i, ab in enumerate(abstractions):
        P = ab.loop.lyapunov_matrix()
        series = trace.samples[i]
        vals = [float(np.array(x[1:3]) @ P @ np.array(x[1:3])) for x in series]
        for k in range(len(vals) - 1):
            if not vals[k + 1] < vals[k]:
                problems.append(
                    f"loop {i}: Lyapunov value did not decrease across the "
                    f"update at t={series[k + 1][0]:.4f}"
                )
    return problems
