"""Deterministic fixed-step kinematic swarm simulation.

World state is kept in flat numpy arrays so a tick is a handful of
vectorized operations regardless of swarm size.  All stochasticity flows
from one per-episode generator seeded by the scenario; draws happen in a
fixed order (robots by id, then adversary squads by id), so an episode is
a pure function of (scenario, policy, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import topo_map
from .encoding import TargetBelief, update_target_belief
from .scenarios import ScenarioConfig

UGV, UAV_A, UAV_B = 0, 1, 2


@dataclass(frozen=True)
class RobotTypeParams:
    name: str
    max_speed: float            # m/s
    perception_range: float     # m
    neutralize_prob: float      # per second of engagement
    indoor_capable: bool
    search_rate: float          # m^2/s


DEFAULT_TYPES = (
    RobotTypeParams("ugv", 1.0, 30.0, 0.15, True, 4.0),
    RobotTypeParams("uav_a", 5.0, 50.0, 0.05, False, 40.0),
    RobotTypeParams("uav_b", 5.0, 60.0, 0.05, False, 40.0),
)


@dataclass(frozen=True)
class FormationParams:
    alpha: float = 1.0
    beta: float = 1.0
    d_min: float = 1.0
    region_center: tuple[float, float] = (0.0, 0.0)
    region_radius: float = 5.0


@dataclass(frozen=True)
class RuntimeConfig:
    dt: float = 0.1                 # simulation tick, seconds
    decide_period: float = 60.0     # tactical decision cadence, seconds
    c_s: float = 1.0                # smoke edge-weight scale
    c_a: float = 4.0                # caution edge-weight scale
    r_a: float = 20.0               # adversary influence radius on edges, m
    smoke_slowdown: float = 0.5     # speed loss fraction at a smoke center
    engage_radius: float = 15.0     # m
    engage_risk: float = 0.1        # robot disable probability per second
    obs_radius: float = 30.0        # outdoor search range around buildings, m
    identify_threshold: float = 0.5
    alpha: float = 1.0              # formation collision-avoidance gain
    beta: float = 1.0               # formation region-keeping gain
    d_min: float = 1.0              # m
    region_radius: float = 5.0      # m
    node_tolerance: float = 3.0     # waypoint arrival distance, m
    n_max_per_type: int = 40        # raw-encoding robot slots
    robot_types: tuple[RobotTypeParams, ...] = DEFAULT_TYPES

    @property
    def v_max(self) -> float:
        return max(p.max_speed for p in self.robot_types)


@dataclass
class BuildingState:
    spec_id: int
    rect: tuple[float, float, float, float]
    entrance: tuple[float, float]
    entrance_node: int
    area: float
    candidate: bool
    is_true: bool
    psi_in: float = 0.0
    psi_out: float = 0.0
    resolved: bool = False

    @property
    def center(self) -> np.ndarray:
        x, y, w, h = self.rect
        return np.array([x + w / 2.0, y + h / 2.0])


@dataclass
class AdversarySquad:
    id: int
    pos: np.ndarray
    waypoints: np.ndarray
    wp_next: int
    speed: float
    size: int
    observed: bool = False


@dataclass
class EpisodeResult:
    success: bool
    rescue_time: float
    t_f: float
    survival_rate: float
    survivors_per_type: tuple[int, int, int]
    psi: tuple[tuple[float, float], ...]    # (psi_in, psi_out) per candidate
    trace_hash: int
    decisions: tuple[str, ...]


class WorldState:
    """Mutable simulation state over one scenario instance."""

    def __init__(self, scenario: ScenarioConfig, grid, base_graph, rtc: RuntimeConfig,
                 robot_counts=None):
        self.rtc = rtc
        self.scenario = scenario
        self.t = 0.0
        self.t_f = scenario.t_f
        self.rng = np.random.default_rng(scenario.seed)
        self.map_width, self.map_height = grid.size_meters()

        self.graph = base_graph.copy()
        self.buildings: list[BuildingState] = []
        for b in scenario.buildings:
            node = topo_map.register_poi(self.graph, b.entrance, "entrance")
            self.buildings.append(
                BuildingState(
                    spec_id=b.id, rect=b.rect, entrance=b.entrance,
                    entrance_node=node, area=b.area, candidate=b.candidate,
                    is_true=(b.id == scenario.true_target),
                )
            )
        self.candidates = [i for i, b in enumerate(self.buildings) if b.candidate]
        self.belief = TargetBelief.uniform(len(self.candidates))
        self.belief_changed = False

        counts = list(robot_counts if robot_counts is not None else scenario.robot_counts)
        self.initial_counts = tuple(int(c) for c in counts)
        n = sum(self.initial_counts)
        self.n = n
        self.type_idx = np.repeat(np.arange(3), self.initial_counts)
        sx, sy, sw, sh = scenario.spawn_rect
        self.pos = np.column_stack(
            [self.rng.uniform(sx, sx + sw, n), self.rng.uniform(sy, sy + sh, n)]
        ) if n else np.zeros((0, 2))
        self.active = np.ones(n, dtype=bool)

        types = rtc.robot_types
        self.speed = np.array([types[t].max_speed for t in self.type_idx])
        self.perception = np.array([types[t].perception_range for t in self.type_idx])
        self.neutralize = np.array([types[t].neutralize_prob for t in self.type_idx])
        self.indoor = np.array([types[t].indoor_capable for t in self.type_idx])
        self.search_rate = np.array([types[t].search_rate for t in self.type_idx])

        self.squad = np.full(n, -1, dtype=int)
        self.assigned = np.zeros(n, dtype=bool)
        self.reached = np.zeros(n, dtype=bool)
        self.dest_node = np.full(n, -1, dtype=int)
        self.dest_pos = np.zeros((n, 2))
        self.dest_building = np.full(n, -1, dtype=int)  # candidate entrance dest
        self.entered = np.full(n, -1, dtype=int)        # building index when inside
        self.path_id = np.full(n, -1, dtype=int)
        self.wp_idx = np.zeros(n, dtype=int)
        self.path_len = np.zeros(n, dtype=int)
        self.target = self.pos.copy()   # current steering point per robot
        self._paths: list[np.ndarray] = []

        self.adversaries = [
            AdversarySquad(
                id=i,
                pos=np.asarray(a.waypoints[0], dtype=float).copy(),
                waypoints=np.asarray(a.waypoints, dtype=float),
                wp_next=1 % len(a.waypoints),
                speed=a.speed,
                size=a.size,
            )
            for i, a in enumerate(scenario.dynamic_adversaries)
        ]
        self.static_pos = np.array(
            [[a.x, a.y] for a in scenario.static_adversaries]
        ).reshape(-1, 2)
        self.static_r = np.array([a.kill_radius for a in scenario.static_adversaries])
        self.smoke_pos = np.array([[s.x, s.y] for s in scenario.smokes]).reshape(-1, 2)
        self.smoke_r = np.array([s.radius for s in scenario.smokes])

        self.success = False
        self.rescue_time = math.inf

    # ---- views consumed by the tactics encoders -------------------------

    @property
    def alive_counts(self) -> tuple[int, int, int]:
        return tuple(int(np.sum(self.active & (self.type_idx == t))) for t in range(3))

    @property
    def goal_positions(self) -> list[np.ndarray]:
        return [self.buildings[i].center for i in self.candidates]

    @property
    def goal_nodes(self) -> list[int]:
        return [self.buildings[i].entrance_node for i in self.candidates]

    @property
    def observed_adversary_positions(self):
        return [(a.id, a.pos.copy()) for a in self.adversaries
                if a.observed and a.size > 0]

    @property
    def active_positions(self) -> np.ndarray:
        return self.pos[self.active]

    def positions_by_type(self) -> list[list[tuple[float, float]]]:
        out = []
        for t in range(3):
            mask = self.active & (self.type_idx == t)
            out.append([tuple(p) for p in self.pos[mask]])
        return out

    def robot_slots(self, t: int):
        mask = self.type_idx == t
        for x, y, a in zip(self.pos[mask, 0], self.pos[mask, 1], self.active[mask]):
            yield float(x), float(y), bool(a)

    def idle_mask(self) -> np.ndarray:
        return self.active & (~self.assigned | self.reached)

    def idle_counts(self) -> tuple[int, int, int]:
        idle = self.idle_mask()
        return tuple(int(np.sum(idle & (self.type_idx == t))) for t in range(3))

    def observed_for_caution(self):
        return [{"position": a.pos, "radius": self.rtc.r_a}
                for a in self.adversaries if a.observed and a.size > 0]

    def smokes_for_weights(self):
        return [{"center": c, "radius": r}
                for c, r in zip(self.smoke_pos, self.smoke_r)]

    def set_plain_weights(self) -> None:
        self.graph.reset_weights()
        topo_map.apply_smoke_weights(self.graph, self.smokes_for_weights(), self.rtc.c_s)


def build_world(scenario: ScenarioConfig, grid, base_graph, rtc: RuntimeConfig,
                robot_counts=None) -> WorldState:
    return WorldState(scenario, grid, base_graph, rtc, robot_counts)


# ---------------------------------------------------------------------------
# Formation control.

def formation_velocity(position, neighbor_positions, params: FormationParams,
                       path_velocity, max_speed: float, rng=None):
    """Single-robot formation rule: v = path + alpha*H + beta*F, speed-clamped."""
    p = np.asarray(position, dtype=float)
    v = np.asarray(path_velocity, dtype=float).copy()
    h = np.zeros(2)
    for q in neighbor_positions:
        delta = p - np.asarray(q, dtype=float)
        d = float(np.linalg.norm(delta))
        if d >= params.d_min:
            continue
        if d < 1e-9:
            if rng is None:
                raise ValueError("coincident robots need an rng for tie-breaking")
            theta = rng.uniform(0.0, 2.0 * math.pi)
            h += params.d_min * np.array([math.cos(theta), math.sin(theta)])
        else:
            h += (params.d_min - d) * (delta / d)
    delta = np.asarray(params.region_center, dtype=float) - p
    d = float(np.linalg.norm(delta))
    f = np.zeros(2)
    overshoot = d - params.region_radius
    if overshoot > 0 and d > 1e-12:
        f = overshoot * (delta / d)
    v = v + params.alpha * h + params.beta * f
    speed = float(np.linalg.norm(v))
    if speed > max_speed:
        v *= max_speed / speed
    return v


def _squad_repulsion(world: WorldState, rtc: RuntimeConfig):
    """H term: summed (d_min - d) push-offs between same-squad robots."""
    hx = np.zeros(world.n)
    hy = np.zeros(world.n)
    sel = np.nonzero(world.active & (world.squad >= 0))[0]
    if len(sel) < 2:
        return hx, hy
    px, py = world.pos[sel, 0], world.pos[sel, 1]
    dxm = px[:, None] - px[None, :]
    dym = py[:, None] - py[None, :]
    dm = np.hypot(dxm, dym)
    same = world.squad[sel][:, None] == world.squad[sel][None, :]
    close = same & (dm < rtc.d_min)
    np.fill_diagonal(close, False)
    if not close.any():
        return hx, hy
    overlap = close & (dm > 1e-9)
    if overlap.any():
        w = np.where(overlap, (rtc.d_min - dm) / np.where(dm > 0, dm, 1.0), 0.0)
        hx[sel] = (w * dxm).sum(axis=1)
        hy[sel] = (w * dym).sum(axis=1)
    stacked = close & (dm <= 1e-9)
    if stacked.any():
        for a_i, b_i in np.argwhere(np.triu(stacked, 1)):
            theta = world.rng.uniform(0.0, 2.0 * math.pi)
            hx[sel[a_i]] += rtc.d_min * math.cos(theta)
            hy[sel[a_i]] += rtc.d_min * math.sin(theta)
            hx[sel[b_i]] -= rtc.d_min * math.cos(theta)
            hy[sel[b_i]] -= rtc.d_min * math.sin(theta)
    return hx, hy


def _tick_motion(world: WorldState, rtc: RuntimeConfig) -> None:
    """Move robots one tick and advance their waypoint bookkeeping."""
    if world.n == 0:
        return
    act = world.active
    pos = world.pos
    dx = world.target[:, 0] - pos[:, 0]
    dy = world.target[:, 1] - pos[:, 1]
    dist = np.hypot(dx, dy)
    inv = 1.0 / np.maximum(dist, 1e-12)
    ux = dx * inv
    uy = dy * inv

    traveling = world.assigned & act & ~world.reached
    inside = (world.entered >= 0) & act
    move = traveling | (inside & (dist > 1.0))
    spd = world.speed * move
    vx = ux * spd
    vy = uy * spd

    hx, hy = _squad_repulsion(world, rtc)
    keep = (world.assigned & act) | inside
    over = np.maximum(0.0, dist - rtc.region_radius) * keep
    vx += rtc.alpha * hx + rtc.beta * over * ux
    vy += rtc.alpha * hy + rtc.beta * over * uy

    speed = np.hypot(vx, vy)
    scale = np.where(speed > world.speed, world.speed / np.maximum(speed, 1e-12), 1.0)
    if len(world.smoke_pos):
        slow = np.zeros(world.n)
        for c, r in zip(world.smoke_pos, world.smoke_r):
            d = np.hypot(pos[:, 0] - c[0], pos[:, 1] - c[1])
            np.maximum(slow, np.clip(1.0 - d / r, 0.0, 1.0), out=slow)
        scale = scale * (1.0 - rtc.smoke_slowdown * slow)
    scale *= rtc.dt
    pos[:, 0] += vx * scale
    pos[:, 1] += vy * scale

    # waypoint bookkeeping reuses the pre-move distances; arrivals within one
    # tick of the tolerance boundary resolve next tick
    near = traveling & (dist < rtc.node_tolerance)
    if near.any():
        rows = np.nonzero(near)[0]
        world.wp_idx[rows] += 1
        done = rows[world.wp_idx[rows] >= world.path_len[rows]]
        still = rows[world.wp_idx[rows] < world.path_len[rows]]
        for i in still:
            world.target[i] = world._paths[world.path_id[i]][world.wp_idx[i]]
        if len(done):
            world.reached[done] = True
            world.target[done] = world.dest_pos[done]
            enter = done[(world.dest_building[done] >= 0) & world.indoor[done]]
            if len(enter):
                world.entered[enter] = world.dest_building[enter]
                for i in enter:
                    world.target[i] = world.buildings[world.entered[i]].center


# ---------------------------------------------------------------------------
# Task allocation.

def allocate_tasks(world: WorldState, sizes_by_squad, dest_positions, rng=None):
    """Distribute idle robots over squads, nearest-to-destination first.

    `sizes_by_squad` and `dest_positions` have one entry per squad (9).
    Returns {squad index: [robot ids]}.  Requested sizes beyond the idle
    pool shrink proportionally (largest remainder); non-idle robots are
    untouched.
    """
    rng = world.rng if rng is None else rng
    idle = world.idle_mask()
    out: dict[int, list[int]] = {j: [] for j in range(9)}
    for t in range(3):
        pool = np.nonzero(idle & (world.type_idx == t))[0]
        sizes = [int(sizes_by_squad[3 * t + k]) for k in range(3)]
        total = sum(sizes)
        if total > len(pool) and total > 0:
            shares = np.array(sizes, dtype=float) / total
            target = shares * len(pool)
            scaled = np.floor(target).astype(int)
            rem = len(pool) - scaled.sum()
            order = sorted(range(3), key=lambda i: (-(target[i] - scaled[i]), i))
            for i in order[:rem]:
                scaled[i] += 1
            sizes = scaled.tolist()
        remaining = list(rng.permutation(pool))
        for k in range(3):
            j = 3 * t + k
            want = sizes[k]
            if want <= 0 or not remaining:
                continue
            dest = np.asarray(dest_positions[j], dtype=float)
            remaining.sort(key=lambda i: float(np.linalg.norm(world.pos[i] - dest)))
            take, remaining = remaining[:want], remaining[want:]
            out[j] = [int(i) for i in take]
    return out


def command_squads(world: WorldState, rtc: RuntimeConfig, dest_nodes,
                   cautions, assignments) -> None:
    """Install paths for newly assigned robots; leaves plain edge weights."""
    entrance_to_building = {
        world.buildings[i].entrance_node: i for i in world.candidates
    }
    for j in range(9):
        robots = assignments.get(j, [])
        if not robots:
            continue
        dest = dest_nodes[j]
        world.set_plain_weights()
        topo_map.apply_caution_weights(
            world.graph, world.observed_for_caution(), cautions[j], rtc.c_a, rtc.r_a
        )
        centroid = world.pos[robots].mean(axis=0)
        src = topo_map.nearest_node(world.graph, centroid)
        path, _ = topo_map.shortest_path(world.graph, src, dest)
        if path is None:
            path = [dest]
        waypoints = np.array([world.graph.nodes[nid].position for nid in path])
        pid = len(world._paths)
        world._paths.append(waypoints)
        dest_pos = world.graph.nodes[dest].position
        dest_b = entrance_to_building.get(dest, -1)
        for i in robots:
            already_there = (
                world.dest_node[i] == dest and world.reached[i]
            )
            world.squad[i] = j
            world.assigned[i] = True
            world.dest_node[i] = dest
            world.dest_pos[i] = dest_pos
            world.dest_building[i] = dest_b
            world.path_id[i] = pid
            world.path_len[i] = len(waypoints)
            world.wp_idx[i] = len(waypoints) if already_there else 0
            world.reached[i] = already_there
            if already_there and world.entered[i] == dest_b and dest_b >= 0:
                world.target[i] = world.buildings[dest_b].center
            else:
                world.entered[i] = -1
                world.target[i] = dest_pos if already_there else waypoints[0]
    world.set_plain_weights()


def apply_tactics(world: WorldState, rtc: RuntimeConfig, action, dest_nodes):
    """Decode-side glue: allocate idle robots and path the affected squads."""
    dest_positions = [world.graph.nodes[nid].position for nid in dest_nodes]
    sizes = [cmd.size for cmd in action.squads]
    cautions = [cmd.caution for cmd in action.squads]
    assignments = allocate_tasks(world, sizes, dest_positions)
    command_squads(world, rtc, dest_nodes, cautions, assignments)
    return assignments


# ---------------------------------------------------------------------------
# Tick pipeline.

def step(world: WorldState, rtc: RuntimeConfig | None = None) -> list[tuple[str, int]]:
    """Advance one tick; returns belief events emitted by the search update."""
    rtc = world.rtc if rtc is None else rtc
    dt = rtc.dt

    # (1) observation: adversary squads in any active robot's perception range
    for adv in world.adversaries:
        if adv.size <= 0 or adv.observed:
            continue
        d = np.hypot(world.pos[:, 0] - adv.pos[0], world.pos[:, 1] - adv.pos[1])
        if bool(np.any(world.active & (d < world.perception))):
            adv.observed = True

    # (2) motion
    _tick_motion(world, rtc)
    for adv in world.adversaries:
        if adv.size <= 0 or len(adv.waypoints) < 2:
            continue
        remaining = adv.speed * dt
        wp = adv.waypoints[adv.wp_next]
        delta = wp - adv.pos
        d = float(np.linalg.norm(delta))
        if d <= remaining:
            adv.pos = wp.copy()
            adv.wp_next = (adv.wp_next + 1) % len(adv.waypoints)
        elif d > 0:
            adv.pos = adv.pos + delta / d * remaining

    # (3) static kill zones
    for c, r in zip(world.static_pos, world.static_r):
        d = np.hypot(world.pos[:, 0] - c[0], world.pos[:, 1] - c[1])
        hit = world.active & (d < r)
        if hit.any():
            world.active[hit] = False

    # (4) engagement
    engagement_tick(world, rtc)

    # (5) search progress and belief events
    events = search_tick(world, rtc)
    for ev in events:
        world.belief = update_target_belief(world.belief, ev)
        world.belief_changed = True

    # (6) clock
    world.t += dt
    return events


def engagement_tick(world: WorldState, rtc: RuntimeConfig | None = None,
                    rng=None) -> None:
    """Mutual attrition between robots and each dynamic adversary squad."""
    rtc = world.rtc if rtc is None else rtc
    rng = world.rng if rng is None else rng
    dt = rtc.dt
    for adv in world.adversaries:
        if adv.size <= 0:
            continue
        d = np.hypot(world.pos[:, 0] - adv.pos[0], world.pos[:, 1] - adv.pos[1])
        engaged = np.nonzero(world.active & (d < rtc.engage_radius))[0]
        n = len(engaged)
        if n == 0:
            continue
        p_disable = min(1.0, rtc.engage_risk * dt / n)
        disabled = rng.random(n) < p_disable
        neutralized = rng.random(n) < world.neutralize[engaged] * dt
        world.active[engaged[disabled]] = False
        adv.size = max(0, adv.size - int(neutralized.sum()))
        if adv.size == 0:
            adv.observed = False


def _rect_distance(pos: np.ndarray, rect) -> np.ndarray:
    x, y, w, h = rect
    dx = np.maximum(np.maximum(x - pos[:, 0], pos[:, 0] - (x + w)), 0.0)
    dy = np.maximum(np.maximum(y - pos[:, 1], pos[:, 1] - (y + h)), 0.0)
    return np.hypot(dx, dy)


def _inside_rect(pos: np.ndarray, rect) -> np.ndarray:
    x, y, w, h = rect
    return (
        (pos[:, 0] >= x) & (pos[:, 0] <= x + w)
        & (pos[:, 1] >= y) & (pos[:, 1] <= y + h)
    )


def search_tick(world: WorldState, rtc: RuntimeConfig | None = None) -> list:
    """Accumulate indoor/outdoor progress; emit belief events at threshold."""
    rtc = world.rtc if rtc is None else rtc
    dt = rtc.dt
    events = []
    for ci, bi in enumerate(world.candidates):
        b = world.buildings[bi]
        if b.psi_out < 1.0:
            uav = world.active & ~world.indoor
            if uav.any():
                near = _rect_distance(world.pos[uav], b.rect) <= rtc.obs_radius
                rate = float(world.search_rate[uav][near].sum())
                if rate > 0:
                    b.psi_out = min(1.0, b.psi_out + dt * rate / b.area)
        inside = (
            world.active & world.indoor & (world.entered == bi)
            & _inside_rect(world.pos, b.rect)
        )
        if b.psi_in < 1.0:
            rate = float(world.search_rate[inside].sum())
            if rate > 0:
                b.psi_in = min(1.0, b.psi_in + dt * rate / b.area)
        if not b.resolved and max(b.psi_in, b.psi_out) >= rtc.identify_threshold:
            b.resolved = True
            events.append(("confirmed_true" if b.is_true else "searched_empty", ci))
        if b.is_true and b.psi_in >= 1.0 and bool(inside.any()) and not world.success:
            world.success = True
            world.rescue_time = world.t + dt
    return events
