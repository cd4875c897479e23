"""State/action encoding for the tactics policy.

The observation is a fixed 148-entry vector built from the mission clock,
target beliefs, per-type robot clusters, graph distances to a fixed set of
Pareto-filtered destination nodes, and adversary line-of-advance distances.
The action is 27 raw network outputs in [-1, 1] decoded into per-squad
destination, size, and caution commands.  Raw (ablation) variants bypass
the clustering on the input side and the Pareto filter on the output side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import topo_map

N_TYPES = 3
N_CLUSTERS = 3          # input-side clusters per robot type
N_SQUADS_PER_TYPE = 3   # output-side squads per robot type
N_GOAL_SLOTS = 3        # candidate target buildings encoded
N_ADV_SLOTS = 2         # tracked observed adversary squads
N_PLAIN = 5             # Pareto nodes under plain weighting
N_CAUTIOUS = 3          # Pareto nodes under full-caution weighting
N_PARETO = N_PLAIN + N_CAUTIOUS

OBS_DIM = 1 + N_GOAL_SLOTS + 9 + 9 + 9 * N_PARETO + 9 * N_GOAL_SLOTS * N_ADV_SLOTS
ACT_DIM = 3 * N_TYPES * N_SQUADS_PER_TYPE

DIST_SENTINEL = 1.0  # normalized stand-in for absent clusters/goals/adversaries


@dataclass(frozen=True)
class EncodingConfig:
    t_f: float                  # mission time limit, seconds
    v_max: float                # fastest robot speed, m/s
    map_width: float            # meters
    map_height: float           # meters
    n_max_per_type: int = 40    # robot slots per type in the raw observation

    @property
    def diag(self) -> float:
        return math.hypot(self.map_width, self.map_height)


# ---------------------------------------------------------------------------
# Target belief.

@dataclass(frozen=True)
class TargetBelief:
    probabilities: tuple[float, ...]
    searched_empty: tuple[bool, ...]
    confirmed: int | None = None

    @classmethod
    def uniform(cls, n_candidates: int) -> "TargetBelief":
        if n_candidates < 1:
            raise ValueError("need at least one candidate building")
        p = 1.0 / n_candidates
        return cls((p,) * n_candidates, (False,) * n_candidates)

    def __len__(self) -> int:
        return len(self.probabilities)


def update_target_belief(belief: TargetBelief, event: tuple[str, int]) -> TargetBelief:
    """Apply a search outcome; events after confirmation are no-ops."""
    kind, idx = event
    if not 0 <= idx < len(belief):
        raise ValueError(f"candidate index {idx} out of range")
    if belief.confirmed is not None:
        return belief
    if kind == "confirmed_true":
        probs = tuple(1.0 if i == idx else 0.0 for i in range(len(belief)))
        return replace(belief, probabilities=probs, confirmed=idx)
    if kind == "searched_empty":
        flags = tuple(f or i == idx for i, f in enumerate(belief.searched_empty))
        survivors = [i for i, f in enumerate(flags) if not f]
        share = 1.0 / len(survivors) if survivors else 0.0
        probs = tuple(share if i in survivors else 0.0 for i in range(len(belief)))
        return TargetBelief(probs, flags, None)
    raise ValueError(f"unknown belief event {kind!r}")


def most_probable_goal(belief: TargetBelief) -> int:
    return int(np.argmax(belief.probabilities))


# ---------------------------------------------------------------------------
# Pareto filtering and crowding selection.

def pareto_filter(candidates, objectives) -> list[int]:
    """Keep candidates not dominated in all objectives, ordered by node id."""
    candidates = list(candidates)
    if not candidates:
        return []
    obj = np.asarray(objectives, dtype=float)
    if obj.shape[0] != len(candidates):
        raise ValueError("one objective row per candidate required")
    if not np.isfinite(obj).all():
        raise ValueError("objective matrix must be finite")
    le = (obj[:, None, :] <= obj[None, :, :]).all(axis=2)
    lt = (obj[:, None, :] < obj[None, :, :]).any(axis=2)
    dominated = (le & lt).any(axis=0)
    keep = [candidates[i] for i in range(len(candidates)) if not dominated[i]]
    return sorted(keep)


def crowding_distances(node_ids, objectives) -> dict[int, float]:
    """NSGA-II crowding: boundary points infinite, duplicates exactly zero."""
    obj = np.asarray(objectives, dtype=float)
    ids = list(node_ids)
    crowd = {nid: 0.0 for nid in ids}
    # Duplicated objective vectors carry no diversity; only their smallest-id
    # representative competes for boundary/interior credit.
    rep_of: dict[tuple, int] = {}
    reps, rep_rows = [], []
    for nid, row in sorted(zip(ids, obj.tolist())):
        key = tuple(row)
        if key not in rep_of:
            rep_of[key] = nid
            reps.append(nid)
            rep_rows.append(row)
    rows = np.asarray(rep_rows)
    if len(reps) == 1:
        crowd[reps[0]] = math.inf
        return crowd
    for m in range(rows.shape[1]):
        order = sorted(range(len(reps)), key=lambda i: (rows[i, m], reps[i]))
        lo, hi = rows[order[0], m], rows[order[-1], m]
        crowd[reps[order[0]]] = math.inf
        crowd[reps[order[-1]]] = math.inf
        span = hi - lo
        if span <= 0:
            continue
        for k in range(1, len(order) - 1):
            nid = reps[order[k]]
            if not math.isinf(crowd[nid]):
                crowd[nid] += (rows[order[k + 1], m] - rows[order[k - 1], m]) / span
    return crowd


def crowding_select(node_ids, objectives, quota: int) -> list[int]:
    """Cut a set to `quota` members, keeping the most spread-out vectors."""
    if quota < 1:
        raise ValueError("quota must be >= 1")
    ids = sorted(node_ids)
    if len(ids) <= quota:
        return ids
    crowd = crowding_distances(node_ids, objectives)
    ranked = sorted(ids, key=lambda nid: (-crowd[nid], nid))
    return sorted(ranked[:quota])


@dataclass(frozen=True)
class ParetoNodes:
    plain: tuple[int, ...]      # N_PLAIN node ids, gamma = 0 weighting
    cautious: tuple[int, ...]   # N_CAUTIOUS node ids, gamma = 1 weighting

    @property
    def slots(self) -> tuple[int, ...]:
        return self.plain + self.cautious


def _goal_travel_times(graph, goal_nodes, v_max, t_f):
    """t(node -> goal) for every node and goal under current edge weights."""
    n = len(graph.nodes)
    times = np.empty((n, len(goal_nodes)))
    sentinel = 2.0 * t_f
    for j, g in enumerate(goal_nodes):
        d = topo_map.dijkstra(graph, g) / v_max
        times[:, j] = np.where(np.isfinite(d), d, sentinel)
    return times


def _front(graph, goal_nodes, probs, v_max, t_f, quota):
    times = _goal_travel_times(graph, goal_nodes, v_max, t_f)
    objectives = times * np.asarray(probs)[None, :]
    front = pareto_filter(range(len(graph.nodes)), objectives)
    return crowding_select(front, objectives[front], quota)


def pareto_nodes(graph, belief: TargetBelief, goal_nodes, cfg: EncodingConfig,
                 smokes=(), observed_adversaries=(), c_s=1.0, c_a=4.0,
                 r_a=20.0) -> ParetoNodes:
    """Select the 5 plain + 3 cautious destination nodes.

    Leaves the graph in the plain (smoke-only) weighting.  Fronts smaller
    than their quota are padded with the most probable goal's node.
    """
    if not graph.nodes:
        raise topo_map.MapError("pareto_nodes needs a nonempty graph")
    probs = list(belief.probabilities)

    graph.reset_weights()
    topo_map.apply_smoke_weights(graph, smokes, c_s)
    plain = _front(graph, goal_nodes, probs, cfg.v_max, cfg.t_f, N_PLAIN)

    topo_map.apply_caution_weights(graph, observed_adversaries, 1.0, c_a, r_a)
    cautious = _front(graph, goal_nodes, probs, cfg.v_max, cfg.t_f, N_CAUTIOUS)

    graph.reset_weights()
    topo_map.apply_smoke_weights(graph, smokes, c_s)

    pad = goal_nodes[most_probable_goal(belief)]
    plain = (plain + [pad] * N_PLAIN)[:N_PLAIN]
    cautious = (cautious + [pad] * N_CAUTIOUS)[:N_CAUTIOUS]
    return ParetoNodes(tuple(plain), tuple(cautious))


# ---------------------------------------------------------------------------
# Robot clustering (input side).

@dataclass(frozen=True)
class Cluster:
    centroid: tuple[float, float]
    size: int


@dataclass(frozen=True)
class ClusterSet:
    by_type: tuple[tuple[Cluster, ...], ...]  # N_TYPES x N_CLUSTERS


def _kmeans(points: np.ndarray, k: int, rng) -> list[Cluster]:
    n = len(points)
    if n == 0:
        return []
    # k-means++ seeding
    centers = [points[rng.integers(n)]]
    while len(centers) < min(k, n):
        d2 = np.min(
            [np.sum((points - c) ** 2, axis=1) for c in centers], axis=0
        )
        total = d2.sum()
        if total <= 0:
            centers.append(points[rng.integers(n)])
            continue
        centers.append(points[rng.choice(n, p=d2 / total)])
    centers = np.array(centers)
    assign = None
    for _ in range(50):
        d = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
        new_assign = np.argmin(d, axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(len(centers)):
            members = points[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    clusters = []
    for j in range(len(centers)):
        size = int(np.sum(assign == j))
        clusters.append(Cluster((float(centers[j][0]), float(centers[j][1])), size))
    return clusters


def cluster_robots(positions_by_type, seed: int, map_center=(0.0, 0.0)) -> ClusterSet:
    """Seeded K-means (k=3) per robot type; layout is always 3x3 clusters.

    Empty clusters take the type centroid as a stand-in position (the map
    center when the type is extinct) so the observation layout never moves.
    """
    rng = np.random.default_rng(seed)
    out = []
    for positions in positions_by_type:
        pts = np.asarray(positions, dtype=float).reshape(-1, 2)
        clusters = _kmeans(pts, N_CLUSTERS, rng)
        fallback = (
            tuple(pts.mean(axis=0)) if len(pts) else (float(map_center[0]), float(map_center[1]))
        )
        clusters = [c if c.size > 0 else Cluster(fallback, 0) for c in clusters]
        while len(clusters) < N_CLUSTERS:
            clusters.append(Cluster(fallback, 0))
        # canonical order: populated clusters by centroid, empties last
        clusters.sort(key=lambda c: (c.size == 0, c.centroid))
        out.append(tuple(clusters))
    return ClusterSet(tuple(out))


def adversary_line_distance(c, g, r) -> float:
    """Perpendicular distance from r to the line through c and g."""
    c = np.asarray(c, dtype=float)
    g = np.asarray(g, dtype=float)
    r = np.asarray(r, dtype=float)
    axis = g - c
    norm = float(np.linalg.norm(axis))
    if norm < 1e-9:
        return float(np.linalg.norm(r - c))
    return float(abs(axis[0] * (r - c)[1] - axis[1] * (r - c)[0])) / norm


# ---------------------------------------------------------------------------
# Observation encoding.

OBS_LAYOUT = (
    ("time_remaining", 1),
    ("target_beliefs", N_GOAL_SLOTS),
    ("cluster_sizes", 9),
    ("inter_cluster_dist", 9),
    ("cluster_to_pareto_dist", 9 * N_PARETO),
    ("adversary_line_dist", 9 * N_GOAL_SLOTS * N_ADV_SLOTS),
)


def _norm_dist(value: float, diag: float) -> float:
    if not math.isfinite(value):
        return 2.0
    return min(max(value / diag, 0.0), 2.0)


def encode_state(world, belief: TargetBelief, clusters: ClusterSet,
                 pareto: ParetoNodes, cfg: EncodingConfig) -> np.ndarray:
    """Build the 148-entry observation.

    `world` supplies: t, graph, initial_counts (per type), alive_counts
    (per type), goal_positions (candidate building centers), and
    observed_adversary_positions (list of (squad id, xy)).
    """
    diag = cfg.diag
    obs = np.empty(OBS_DIM)
    k = 0
    obs[k] = (cfg.t_f - world.t) * cfg.v_max / diag
    k += 1

    probs = list(belief.probabilities)[:N_GOAL_SLOTS]
    probs += [0.0] * (N_GOAL_SLOTS - len(probs))
    obs[k:k + N_GOAL_SLOTS] = probs
    k += N_GOAL_SLOTS

    initial = list(world.initial_counts)
    alive = list(world.alive_counts)
    for t in range(N_TYPES):
        for c in clusters.by_type[t]:
            obs[k] = c.size / initial[t] if initial[t] > 0 else 0.0
            k += 1

    # Fixed inter-cluster pairing: cluster i of type t pairs with cluster i
    # of the next type in cyclic order.
    for t in range(N_TYPES):
        other = (t + 1) % N_TYPES
        for i in range(N_CLUSTERS):
            if alive[t] == 0 or alive[other] == 0:
                obs[k] = DIST_SENTINEL
            else:
                a = np.asarray(clusters.by_type[t][i].centroid)
                b = np.asarray(clusters.by_type[other][i].centroid)
                obs[k] = _norm_dist(float(np.linalg.norm(a - b)), diag)
            k += 1

    # Graph distances from each cluster anchor node to each Pareto slot,
    # computed on the current (plain) weighting.
    slots = pareto.slots
    dist_from_slot = {}
    for nid in set(slots):
        dist_from_slot[nid] = topo_map.dijkstra(world.graph, nid)
    for t in range(N_TYPES):
        for i in range(N_CLUSTERS):
            if alive[t] == 0:
                obs[k:k + N_PARETO] = DIST_SENTINEL
                k += N_PARETO
                continue
            anchor = topo_map.nearest_node(world.graph, clusters.by_type[t][i].centroid)
            for nid in slots:
                obs[k] = _norm_dist(float(dist_from_slot[nid][anchor]), diag)
                k += 1

    # Two tracked observed adversary squads, nearest to the swarm first.
    goals = list(world.goal_positions)[:N_GOAL_SLOTS]
    tracked = _tracked_adversaries(world)
    for t in range(N_TYPES):
        for i in range(N_CLUSTERS):
            centroid = clusters.by_type[t][i].centroid
            for g in range(N_GOAL_SLOTS):
                for a in range(N_ADV_SLOTS):
                    if alive[t] == 0 or g >= len(goals) or a >= len(tracked):
                        obs[k] = DIST_SENTINEL
                    else:
                        obs[k] = _norm_dist(
                            adversary_line_distance(centroid, goals[g], tracked[a]),
                            diag,
                        )
                    k += 1
    assert k == OBS_DIM
    return obs


def _tracked_adversaries(world):
    observed = list(world.observed_adversary_positions)
    if not observed:
        return []
    robots = getattr(world, "active_positions", None)
    if robots is not None and len(robots):
        ref = np.asarray(robots).mean(axis=0)
    else:
        ref = np.array([world.map_width / 2.0, world.map_height / 2.0])
    ranked = sorted(
        observed, key=lambda item: (np.linalg.norm(np.asarray(item[1]) - ref), item[0])
    )
    return [np.asarray(pos, dtype=float) for _, pos in ranked[:N_ADV_SLOTS]]


# ---------------------------------------------------------------------------
# Action decoding.

@dataclass(frozen=True)
class SquadCommand:
    robot_type: int
    node_index: int   # into the Pareto slots (or all graph nodes in raw mode)
    size: int
    caution: float


@dataclass(frozen=True)
class TacticsAction:
    squads: tuple[SquadCommand, ...]  # 9 commands, type-major


def _node_bin(o: float, n_bins: int) -> int:
    return min(int((o + 1.0) / 2.0 * n_bins), n_bins - 1)


def _largest_remainder(shares: np.ndarray, total: int) -> list[int]:
    target = shares * total
    counts = np.floor(target).astype(int)
    rem = total - counts.sum()
    order = sorted(range(len(shares)), key=lambda i: (-(target[i] - counts[i]), i))
    for i in order[:rem]:
        counts[i] += 1
    return counts.tolist()


def decode_action(raw, idle_counts, n_bins: int = N_PARETO) -> TacticsAction:
    """Map 27 raw outputs in [-1, 1] to per-squad commands."""
    raw = np.clip(np.asarray(raw, dtype=float), -1.0, 1.0)
    if raw.shape != (ACT_DIM,):
        raise ValueError(f"expected {ACT_DIM} action outputs, got {raw.shape}")
    node_raw, size_raw, caution_raw = raw[:9], raw[9:18], raw[18:27]
    squads = []
    for t in range(N_TYPES):
        shares = (size_raw[3 * t:3 * t + 3] + 1.0) / 2.0
        if shares.sum() <= 1e-12:
            shares = np.full(3, 1.0 / 3.0)
        else:
            shares = shares / shares.sum()
        sizes = _largest_remainder(shares, int(idle_counts[t]))
        for i in range(N_SQUADS_PER_TYPE):
            j = 3 * t + i
            squads.append(
                SquadCommand(
                    robot_type=t,
                    node_index=_node_bin(float(node_raw[j]), n_bins),
                    size=sizes[i],
                    caution=float((caution_raw[j] + 1.0) / 2.0),
                )
            )
    return TacticsAction(tuple(squads))


# ---------------------------------------------------------------------------
# Raw (ablation) encodings.

def raw_obs_dim(cfg: EncodingConfig) -> int:
    return 1 + N_GOAL_SLOTS + 3 * cfg.n_max_per_type * N_TYPES


def encode_state_raw(world, belief: TargetBelief, cfg: EncodingConfig) -> np.ndarray:
    """Per-robot observation: time, beliefs, then (x, y, alive) robot slots."""
    diag = cfg.diag
    obs = np.zeros(raw_obs_dim(cfg))
    obs[0] = (cfg.t_f - world.t) * cfg.v_max / diag
    probs = list(belief.probabilities)[:N_GOAL_SLOTS]
    obs[1:1 + len(probs)] = probs
    k = 1 + N_GOAL_SLOTS
    for t in range(N_TYPES):
        entries = list(world.robot_slots(t))[:cfg.n_max_per_type]
        for x, y, active in entries:
            if active:
                obs[k] = x / diag
                obs[k + 1] = y / diag
                obs[k + 2] = 1.0
            k += 3
        k += 3 * (cfg.n_max_per_type - len(entries))
    return obs


def decode_action_raw(raw, idle_counts, n_nodes: int) -> TacticsAction:
    """Ablation decode: destinations bin over every graph node."""
    return decode_action(raw, idle_counts, n_bins=n_nodes)


# ---------------------------------------------------------------------------
# Self-describing layout dump.

def layout_text(cfg: EncodingConfig, mode: str = "both") -> str:
    """Render the observation/action slice table written next to run logs."""
    lines = [f"mode {mode}", "observation:"]
    if mode in ("both", "input"):
        offset = 0
        for name, length in OBS_LAYOUT:
            lines.append(f"  {name} offset={offset} length={length}")
            offset += length
        lines.append(f"  total {offset}")
    else:
        n = cfg.n_max_per_type
        lines.append("  time_remaining offset=0 length=1")
        lines.append(f"  target_beliefs offset=1 length={N_GOAL_SLOTS}")
        offset = 1 + N_GOAL_SLOTS
        for t in range(N_TYPES):
            lines.append(
                f"  robot_slots_type{t} offset={offset} length={3 * n}"
            )
            offset += 3 * n
        lines.append(f"  total {offset}")
    lines.append("action:")
    lines.append("  squad_node offset=0 length=9")
    lines.append("  squad_size offset=9 length=9")
    lines.append("  squad_caution offset=18 length=9")
    lines.append(f"  total {ACT_DIM}")
    node_bins = N_PARETO if mode in ("both", "output") else "|V|"
    lines.append(f"  node bins: {node_bins}")
    return "\n".join(lines) + "\n"
