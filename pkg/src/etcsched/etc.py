"""Event-triggered-control front end.

Planar LTI loops under quadratic relative-error triggering, the conic
partition of the plane, sampled inter-sample-time bounds per region and
triggering coefficient, flow-pipe region transitions, and the builders for
the network and control-loop game automata.

Times entering the automata are scaled to integer ticks (lower bounds
floored, upper bounds ceiled, then widened by a one-tick safety margin) so
all clock constants are integers.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from ._timing import trigger_times_batch
from .automata import (
    Action,
    ClockConstraint,
    Edge,
    Guard,
    IntConstraint,
    IntUpdate,
    IntVar,
    Location,
    Tga,
)
from .errors import AbstractionError, ConfigError

DEFAULT_STEP = 1e-4
DEFAULT_REFINE = 1e-8
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class LtiLoop:
    """One control loop: plant (A, B) under sampled state feedback K."""

    name: str
    A: np.ndarray
    B: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float).reshape(2, 2))
        object.__setattr__(self, "B", np.asarray(self.B, dtype=float).reshape(2, 1))
        object.__setattr__(self, "K", np.asarray(self.K, dtype=float).reshape(1, 2))
        eig = np.linalg.eigvals(self.closed_loop())
        if not (eig.real < 0).all():
            raise ConfigError(
                f"loop {self.name}: A + BK is not Hurwitz (eigenvalues {eig})"
            )

    def closed_loop(self) -> np.ndarray:
        return self.A + self.B @ self.K

    def hold_input_gain(self) -> np.ndarray:
        """BK: the constant drive produced by a held sample."""
        return self.B @ self.K

    def lyapunov_matrix(self) -> np.ndarray:
        """P > 0 with (A+BK)^T P + P (A+BK) = -I."""
        acl = self.closed_loop()
        return scipy.linalg.solve_continuous_lyapunov(acl.T, -np.eye(2))


@dataclass(frozen=True)
class TriggerConfig:
    sigmas: Tuple[float, ...]
    sigma_bar: float
    tau_cap: float
    step: float = DEFAULT_STEP
    refine: float = DEFAULT_REFINE

    def __post_init__(self):
        if not self.sigmas:
            raise ConfigError("at least one triggering coefficient required")
        if list(self.sigmas) != sorted(self.sigmas) or len(set(self.sigmas)) != len(
            self.sigmas
        ):
            raise ConfigError("triggering coefficients must be strictly increasing")
        for s in self.sigmas:
            if not 0.0 < s < self.sigma_bar:
                raise ConfigError(
                    f"triggering coefficient {s} outside ]0, {self.sigma_bar}["
                )
        if self.tau_cap <= 0:
            raise ConfigError("tau_cap must be positive")


@dataclass(frozen=True)
class ConicPartition:
    """q equal angular sectors over [0, 2pi), boundaries at 2*pi*s/q."""

    q: int

    def __post_init__(self):
        if self.q < 2 or self.q % 2 != 0:
            raise ConfigError("region count q must be even and at least 2")

    def boundaries(self) -> np.ndarray:
        return np.arange(self.q) * (TWO_PI / self.q)

    def region_of(self, x: Sequence[float]) -> int:
        """0-based sector index of a nonzero state."""
        x = np.asarray(x, dtype=float)
        if not np.any(x):
            raise ValueError("the origin belongs to no conic region")
        angle = math.atan2(x[1], x[0]) % TWO_PI
        s = int(angle / (TWO_PI / self.q))
        return min(s, self.q - 1)

    def sample_directions(self, s: int, count: int) -> np.ndarray:
        """Unit directions across sector s, both boundary rays included."""
        width = TWO_PI / self.q
        angles = s * width + np.linspace(0.0, width, count)
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)

    def neighbors(self, s: int) -> Tuple[int, int]:
        return ((s - 1) % self.q, (s + 1) % self.q)


@dataclass(frozen=True)
class TimingBounds:
    """Scaled inter-sample intervals: lo[s, j] .. hi[s, j] ticks."""

    lo: np.ndarray
    hi: np.ndarray
    scale: int

    def __post_init__(self):
        if (self.lo <= 0).any():
            raise AbstractionError("inter-sample lower bounds must be positive ticks")
        if (self.lo > self.hi).any():
            raise AbstractionError("inter-sample interval inverted")

    @property
    def q(self) -> int:
        return self.lo.shape[0]

    @property
    def p(self) -> int:
        return self.lo.shape[1]


@dataclass(frozen=True)
class EarlyParams:
    """Scaled early-update windows d_lo[s] .. d_hi[s] ticks."""

    d_lo: np.ndarray
    d_hi: np.ndarray

    def validate_against(self, bounds: TimingBounds):
        for s in range(bounds.q):
            if not (self.d_hi[s] <= bounds.lo[s, :]).any():
                raise AbstractionError(
                    f"region {s + 1}: early upper bound {self.d_hi[s]} exceeds "
                    f"every coefficient's minimum inter-sample time"
                )
            if self.d_lo[s] <= 0 or self.d_lo[s] > self.d_hi[s]:
                raise AbstractionError(f"region {s + 1}: bad early window")


@dataclass(frozen=True)
class TransitionMap:
    """Region successor sets: etc_succ[s][j] and early_succ[s] (0-based)."""

    etc_succ: Tuple[Tuple[Tuple[int, ...], ...], ...]
    early_succ: Tuple[Tuple[int, ...], ...]


# -- timing computations ------------------------------------------------------


def inter_sample_times(
    loop: LtiLoop, x0s: np.ndarray, sigma: float, cfg: TriggerConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """Trigger times and end states for a batch of samples (rows of x0s)."""
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    w = x0s @ loop.hold_input_gain().T
    taus, xs = trigger_times_batch(
        loop.A, w, x0s, sigma, cfg.step, cfg.tau_cap, cfg.refine
    )
    zero = ~x0s.any(axis=1)
    if zero.any():
        # the equilibrium never violates the trigger; the cap applies
        taus = taus.copy()
        taus[zero] = cfg.tau_cap
        xs[zero] = 0.0
    return taus, xs


def inter_sample_time(loop: LtiLoop, x: Sequence[float], sigma: float,
                      cfg: TriggerConfig) -> float:
    taus, _ = inter_sample_times(loop, np.asarray(x, dtype=float)[None, :], sigma, cfg)
    return float(taus[0])


def compute_bounds(
    loop: LtiLoop,
    partition: ConicPartition,
    cfg: TriggerConfig,
    samples_per_region: int,
    scale: int,
    margin: int = 1,
) -> TimingBounds:
    """Sampled per-region inter-sample intervals, outward-rounded to ticks."""
    if samples_per_region < 2:
        raise ConfigError("need at least two sampled directions per region")
    q, p = partition.q, len(cfg.sigmas)
    lo = np.empty((q, p), dtype=np.int64)
    hi = np.empty((q, p), dtype=np.int64)
    cap_ticks = int(math.ceil(cfg.tau_cap * scale))
    for s in range(q):
        dirs = partition.sample_directions(s, samples_per_region)
        prev = None
        for j, sigma in enumerate(cfg.sigmas):
            taus, _ = inter_sample_times(loop, dirs, sigma, cfg)
            if prev is not None and (taus < prev - 1e-9).any():
                raise AbstractionError(
                    f"loop {loop.name} region {s + 1}: inter-sample time not "
                    f"monotone in the triggering coefficient"
                )
            prev = taus
            lo[s, j] = max(1, int(math.floor(taus.min() * scale)) - margin)
            hi[s, j] = min(cap_ticks, int(math.ceil(taus.max() * scale)) + margin)
    return TimingBounds(lo=lo, hi=hi, scale=scale)


def hold_flow(loop: LtiLoop, times: np.ndarray) -> np.ndarray:
    """Propagators Phi(t) with xi(t) = Phi(t) x0 under the held sample x0."""
    aug = np.zeros((4, 4))
    aug[:2, :2] = loop.A
    aug[:2, 2:] = loop.hold_input_gain()
    out = np.empty((len(times), 2, 2))
    for k, t in enumerate(times):
        e = scipy.linalg.expm(aug * t)
        out[k] = e[:2, :2] + e[:2, 2:]
    return out


def _regions_hit(
    loop: LtiLoop,
    partition: ConicPartition,
    dirs: np.ndarray,
    t_lo: float,
    t_hi: float,
    time_points: int,
) -> set:
    times = np.linspace(t_lo, t_hi, time_points)
    phis = hold_flow(loop, times)
    hit = set()
    for phi in phis:
        pts = dirs @ phi.T
        angles = np.arctan2(pts[:, 1], pts[:, 0]) % TWO_PI
        idx = np.minimum(
            (angles / (TWO_PI / partition.q)).astype(int), partition.q - 1
        )
        hit.update(int(i) for i in idx)
    return hit


def compute_transitions(
    loop: LtiLoop,
    partition: ConicPartition,
    bounds: TimingBounds,
    early: EarlyParams,
    samples_per_region: int,
    time_points: int = 64,
) -> TransitionMap:
    """Region-to-region reachability over the stored timing windows.

    Every region hit by a sampled trajectory is inflated with its angular
    neighbors, compensating the sampling under-approximation of the flow
    pipe.
    """
    q, p = bounds.q, bounds.p
    scale = float(bounds.scale)
    etc_succ: List[Tuple[Tuple[int, ...], ...]] = []
    early_succ: List[Tuple[int, ...]] = []
    for s in range(q):
        dirs = partition.sample_directions(s, samples_per_region)
        per_j = []
        for j in range(p):
            hit = _regions_hit(
                loop, partition, dirs, bounds.lo[s, j] / scale,
                bounds.hi[s, j] / scale, time_points,
            )
            if not hit:
                raise AbstractionError(
                    f"region {s + 1}, coefficient {j + 1}: empty successor set"
                )
            inflated = set(hit)
            for t in hit:
                inflated.update(partition.neighbors(t))
            per_j.append(tuple(sorted(inflated)))
        etc_succ.append(tuple(per_j))
        hit = _regions_hit(
            loop, partition, dirs, early.d_lo[s] / scale, early.d_hi[s] / scale,
            time_points,
        )
        if not hit:
            raise AbstractionError(f"region {s + 1}: empty early successor set")
        inflated = set(hit)
        for t in hit:
            inflated.update(partition.neighbors(t))
        early_succ.append(tuple(sorted(inflated)))
    return TransitionMap(etc_succ=tuple(etc_succ), early_succ=tuple(early_succ))


def default_early_params(bounds: TimingBounds, offset_ticks: int) -> EarlyParams:
    """Offset rule: window ends at the smallest coefficient minimum and
    opens ``offset_ticks`` earlier (clamped at one tick)."""
    anchor = bounds.lo.min(axis=1)
    d_hi = anchor.astype(np.int64)
    d_lo = np.maximum(1, d_hi - offset_ticks).astype(np.int64)
    return EarlyParams(d_lo=d_lo, d_hi=d_hi)


# -- automaton builders -------------------------------------------------------


@dataclass(frozen=True)
class LoopAbstraction:
    """Everything the pipeline carries per control loop."""

    loop: LtiLoop
    partition: ConicPartition
    trigger: TriggerConfig
    bounds: TimingBounds
    early: EarlyParams
    transitions: TransitionMap
    initial_regions: Tuple[int, ...]

    def build_tga(self, ear_max: Optional[int] = None) -> Tga:
        if ear_max is None:
            return build_tga_cl(
                self.loop.name, self.partition, self.bounds, self.early,
                self.transitions, self.initial_regions,
            )
        return build_tga_clim(
            self.loop.name, self.partition, self.bounds, self.early,
            self.transitions, self.initial_regions, ear_max,
        )


def abstract_loop(
    loop: LtiLoop,
    partition: ConicPartition,
    trigger: TriggerConfig,
    scale: int,
    initial_state,
    samples_bounds: int = 40,
    samples_transitions: int = 24,
    early_offset_ticks: int = 5,
    early_table=None,
    margin: int = 1,
) -> LoopAbstraction:
    """Run the timing abstraction for one loop."""
    bounds = compute_bounds(loop, partition, trigger, samples_bounds, scale,
                            margin=margin)
    if early_table is not None:
        early = EarlyParams(
            d_lo=np.asarray(early_table[0], dtype=np.int64),
            d_hi=np.asarray(early_table[1], dtype=np.int64),
        )
    else:
        early = default_early_params(bounds, early_offset_ticks)
    early.validate_against(bounds)
    transitions = compute_transitions(loop, partition, bounds, early,
                                      samples_transitions)
    s0 = partition.region_of(np.asarray(initial_state, dtype=float))
    return LoopAbstraction(
        loop=loop,
        partition=partition,
        trigger=trigger,
        bounds=bounds,
        early=early,
        transitions=transitions,
        initial_regions=(s0,),
    )


def region_name(s: int) -> str:
    return f"R{s + 1}"


def coeff_name(s: int, j: int) -> str:
    return f"R{s + 1}a{j + 1}"


def early_name(s: int) -> str:
    return f"Ear{s + 1}"


def _window_guard(lo: int, hi: int) -> Guard:
    return Guard(
        clock_conjuncts=(
            ClockConstraint("c", ">=", int(lo)),
            ClockConstraint("c", "<=", int(hi)),
        )
    )


def _zero_guard() -> Guard:
    return Guard(clock_conjuncts=(ClockConstraint("c", "==", 0),))


def build_tga_net(delta_scaled: int, name: str = "net") -> Tga:
    """The three-location shared-network automaton (Idle, InUse, Bad)."""
    if delta_scaled < 1:
        raise ConfigError("channel occupancy time must be at least one tick")
    up = Action("receive", "up", controllable=False)
    star = Action("internal", "*", controllable=True)
    locations = (
        Location("Idle"),
        Location("InUse", invariant=(ClockConstraint("c", "<=", delta_scaled),)),
        Location("Bad"),
    )
    edges = (
        Edge("Idle", Guard.true(), up, ("c",), "InUse"),
        Edge("InUse", Guard(clock_conjuncts=(ClockConstraint("c", "==", delta_scaled),)),
             star, (), "Idle"),
        Edge("InUse", Guard.true(), up, (), "Bad"),
        Edge("Bad", Guard.true(), up, (), "Bad"),
    )
    return Tga(name=name, locations=locations, initial="Idle", clocks=("c",),
               edges=edges)


def build_ta_sigma(
    loop_name: str,
    partition: ConicPartition,
    bounds: TimingBounds,
    j: int,
    transitions: TransitionMap,
    initial_region: int,
) -> Tga:
    """Single-coefficient timing abstraction: one location per region."""
    q = partition.q
    star = Action("internal", "*", controllable=False)
    locations = tuple(
        Location(
            coeff_name(s, j),
            invariant=(ClockConstraint("c", "<=", int(bounds.hi[s, j])),),
        )
        for s in range(q)
    )
    edges = []
    for s in range(q):
        for t in transitions.etc_succ[s][j]:
            edges.append(
                Edge(
                    coeff_name(s, j),
                    _window_guard(bounds.lo[s, j], bounds.hi[s, j]),
                    star,
                    ("c",),
                    coeff_name(t, j),
                )
            )
    return Tga(
        name=loop_name,
        locations=locations,
        initial=coeff_name(initial_region, j),
        clocks=("c",),
        edges=tuple(edges),
    )


def _loop_tga(
    loop_name: str,
    partition: ConicPartition,
    bounds: TimingBounds,
    early: EarlyParams,
    transitions: TransitionMap,
    initial_regions: Sequence[int],
    ear_max: Optional[int],
) -> Tga:
    early.validate_against(bounds)
    q, p = bounds.q, bounds.p
    zero_inv = (ClockConstraint("c", "<=", 0),)
    locations = []
    for s in range(q):
        locations.append(Location(region_name(s), invariant=zero_inv))
        for j in range(p):
            locations.append(
                Location(
                    coeff_name(s, j),
                    invariant=(ClockConstraint("c", "<=", int(bounds.hi[s, j])),),
                )
            )
        locations.append(Location(early_name(s), invariant=zero_inv))

    counting = ear_max is not None
    early_guard_ints = (IntConstraint("earNum", "<", ear_max),) if counting else ()
    early_updates = (IntUpdate("earNum", "inc", 1),) if counting else ()
    etc_updates = (IntUpdate("earNum", "set", 0),) if counting else ()

    up = Action("send", "up", controllable=False)
    star = Action("internal", "*", controllable=True)
    edges = []
    for s in range(q):
        for j in range(p):
            edges.append(
                Edge(region_name(s), _zero_guard(),
                     Action("internal", f"a{j + 1}", controllable=True),
                     (), coeff_name(s, j))
            )
            edges.append(
                Edge(
                    coeff_name(s, j),
                    Guard(
                        clock_conjuncts=_window_guard(
                            early.d_lo[s], early.d_hi[s]
                        ).clock_conjuncts,
                        int_conjuncts=early_guard_ints,
                    ),
                    star,
                    ("c",),
                    early_name(s),
                    int_updates=early_updates,
                )
            )
            for t in transitions.etc_succ[s][j]:
                edges.append(
                    Edge(
                        coeff_name(s, j),
                        _window_guard(bounds.lo[s, j], bounds.hi[s, j]),
                        up,
                        ("c",),
                        region_name(t),
                        int_updates=etc_updates,
                    )
                )
        for t in transitions.early_succ[s]:
            edges.append(
                Edge(early_name(s), _zero_guard(), up, (), region_name(t))
            )

    if len(initial_regions) == 1:
        initial = region_name(initial_regions[0])
    else:
        # nondeterministic initial region: the environment picks one
        locations.insert(0, Location("R0", invariant=zero_inv))
        blob = Action("internal", "init", controllable=False)
        for t in initial_regions:
            edges.append(Edge("R0", _zero_guard(), blob, (), region_name(t)))
        initial = "R0"

    int_vars = (
        (IntVar("earNum", 0, ear_max, 0, is_global=True),) if counting else ()
    )
    return Tga(
        name=loop_name,
        locations=tuple(locations),
        initial=initial,
        clocks=("c",),
        edges=tuple(edges),
        int_vars=int_vars,
    )


def build_tga_cl(
    loop_name: str,
    partition: ConicPartition,
    bounds: TimingBounds,
    early: EarlyParams,
    transitions: TransitionMap,
    initial_regions: Sequence[int],
) -> Tga:
    """Control-loop game automaton: coefficient choice plus early updates."""
    return _loop_tga(loop_name, partition, bounds, early, transitions,
                     initial_regions, ear_max=None)


def build_tga_clim(
    loop_name: str,
    partition: ConicPartition,
    bounds: TimingBounds,
    early: EarlyParams,
    transitions: TransitionMap,
    initial_regions: Sequence[int],
    ear_max: int,
) -> Tga:
    """As build_tga_cl, with the global consecutive-early-update counter."""
    if ear_max < 1:
        raise ConfigError("the early-update limit must be at least 1")
    return _loop_tga(loop_name, partition, bounds, early, transitions,
                     initial_regions, ear_max=ear_max)
