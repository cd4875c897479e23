"""Topology-and-weight evolution of tactics networks.

Genomes are feed-forward DAGs with innovation-tagged connections, grown
from a minimal sparse input/output wiring.  Structural signatures (from,
to) map to stable innovation ids through a per-run registry, so equal
mutations in different genomes stay alignable for crossover and distance.
Reproduction-operator strengths adapt online: stagnation widens the weight
perturbation, low population diversity raises the structural rates.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

WORKERS_ENV = "SWARMTACTICS_WORKERS"

ROLE_INPUT = "input"
ROLE_BIAS = "bias"
ROLE_HIDDEN = "hidden"
ROLE_OUTPUT = "output"


class GenomeError(ValueError):
    pass


@dataclass
class ConnGene:
    innovation: int
    src: int
    dst: int
    weight: float
    enabled: bool = True


@dataclass
class Genome:
    n_inputs: int
    n_outputs: int
    nodes: dict[int, str]                 # id -> role
    connections: dict[int, ConnGene]      # innovation -> gene

    @property
    def bias_id(self) -> int:
        return self.n_inputs

    def input_ids(self):
        return range(self.n_inputs)

    def output_ids(self):
        return range(self.n_inputs + 1, self.n_inputs + 1 + self.n_outputs)

    def hidden_ids(self):
        return [i for i, role in self.nodes.items() if role == ROLE_HIDDEN]

    def enabled(self):
        return [c for _, c in sorted(self.connections.items()) if c.enabled]

    def copy(self) -> "Genome":
        return Genome(
            self.n_inputs,
            self.n_outputs,
            dict(self.nodes),
            {k: replace(c) for k, c in self.connections.items()},
        )

    def has_edge(self, src: int, dst: int) -> bool:
        return any(c.src == src and c.dst == dst for c in self.connections.values())

    def size(self) -> tuple[int, int, int]:
        """(nodes, enabled connections, total connections)."""
        return (
            len(self.nodes),
            sum(c.enabled for c in self.connections.values()),
            len(self.connections),
        )


class InnovationRegistry:
    """Run-wide structural bookkeeping shared by every genome."""

    def __init__(self, n_inputs: int, n_outputs: int):
        self.n_inputs = n_inputs
        self.n_outputs = n_outputs
        self._conn: dict[tuple[int, int], int] = {}
        self._split: dict[tuple[int, int], int] = {}
        self._next_innovation = 0
        self._next_node = n_inputs + 1 + n_outputs

    def connection(self, src: int, dst: int) -> int:
        key = (src, dst)
        if key not in self._conn:
            self._conn[key] = self._next_innovation
            self._next_innovation += 1
        return self._conn[key]

    def split_node(self, conn_innovation: int, taken) -> int:
        """Node id for splitting a connection; same split -> same id."""
        occurrence = 0
        while True:
            key = (conn_innovation, occurrence)
            if key not in self._split:
                self._split[key] = self._next_node
                self._next_node += 1
            node = self._split[key]
            if node not in taken:
                return node
            occurrence += 1


def creates_cycle(genome: Genome, src: int, dst: int) -> bool:
    """Would an edge src -> dst close a directed cycle?"""
    if src == dst:
        return True
    out: dict[int, list[int]] = {}
    for c in genome.connections.values():
        out.setdefault(c.src, []).append(c.dst)
    stack, seen = [dst], set()
    while stack:
        node = stack.pop()
        if node == src:
            return True
        if node in seen:
            continue
        seen.add(node)
        stack.extend(out.get(node, ()))
    return False


def is_acyclic(genome: Genome) -> bool:
    indeg = {n: 0 for n in genome.nodes}
    out: dict[int, list[int]] = {n: [] for n in genome.nodes}
    for c in genome.connections.values():
        out[c.src].append(c.dst)
        indeg[c.dst] += 1
    queue = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        n = queue.pop()
        seen += 1
        for m in out[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                queue.append(m)
    return seen == len(genome.nodes)


def initial_genome(registry: InnovationRegistry, rng,
                   conn_prob: float = 0.1) -> Genome:
    """Minimal start: sparse direct wiring, every output reachable."""
    n_in, n_out = registry.n_inputs, registry.n_outputs
    nodes = {i: ROLE_INPUT for i in range(n_in)}
    nodes[n_in] = ROLE_BIAS
    sources = list(range(n_in + 1))
    genome = Genome(n_in, n_out, nodes, {})
    for out_id in range(n_in + 1, n_in + 1 + n_out):
        genome.nodes[out_id] = ROLE_OUTPUT
        wired = False
        for src in sources:
            if rng.random() < conn_prob:
                innov = registry.connection(src, out_id)
                genome.connections[innov] = ConnGene(
                    innov, src, out_id, float(rng.normal(0.0, 1.0))
                )
                wired = True
        if not wired:
            src = int(rng.integers(0, len(sources)))
            innov = registry.connection(src, out_id)
            genome.connections[innov] = ConnGene(
                innov, src, out_id, float(rng.normal(0.0, 1.0))
            )
    return genome


# ---------------------------------------------------------------------------
# Forward evaluation.

class GenomeNetwork:
    """Compiled feed-forward evaluator for one genome."""

    def __init__(self, genome: Genome):
        if not is_acyclic(genome):
            raise GenomeError("genome has a directed cycle")
        self.genome = genome
        order = self._topo_order(genome)
        incoming: dict[int, list[tuple[int, float]]] = {}
        for c in genome.enabled():
            incoming.setdefault(c.dst, []).append((c.src, c.weight))
        self._plan = [
            (node, incoming.get(node, []))
            for node in order
            if genome.nodes[node] in (ROLE_HIDDEN, ROLE_OUTPUT)
        ]
        self._slots = {n: i for i, n in enumerate(sorted(genome.nodes))}
        self.n_inputs = genome.n_inputs
        self.n_outputs = genome.n_outputs

    @staticmethod
    def _topo_order(genome: Genome):
        indeg = {n: 0 for n in genome.nodes}
        out: dict[int, list[int]] = {n: [] for n in genome.nodes}
        for c in genome.enabled():
            out[c.src].append(c.dst)
            indeg[c.dst] += 1
        ready = sorted(n for n, d in indeg.items() if d == 0)
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for m in sorted(out[n]):
                indeg[m] -= 1
                if indeg[m] == 0:
                    ready.append(m)
        return order

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape != (self.n_inputs,):
            raise GenomeError(
                f"expected {self.n_inputs} inputs, got {x.shape[0]}"
            )
        values = np.zeros(len(self._slots))
        for i in range(self.n_inputs):
            values[self._slots[i]] = x[i]
        values[self._slots[self.genome.bias_id]] = 1.0
        for node, incoming in self._plan:
            total = 0.0
            for src, w in incoming:
                total += w * values[self._slots[src]]
            values[self._slots[node]] = math.tanh(total)
        return np.array([values[self._slots[o]] for o in self.genome.output_ids()])


def forward(genome: Genome, x) -> np.ndarray:
    return GenomeNetwork(genome)(x)


class GenomePolicy:
    """Picklable policy wrapper; compiles the network on first use."""

    def __init__(self, genome: Genome):
        self.genome = genome
        self._net = None

    def __call__(self, obs):
        if self._net is None:
            self._net = GenomeNetwork(self.genome)
        return self._net(obs)

    def __getstate__(self):
        return {"genome": self.genome}

    def __setstate__(self, state):
        self.genome = state["genome"]
        self._net = None


# ---------------------------------------------------------------------------
# Mutation operators.

def mutate_weights(genome: Genome, sigma: float, rng, rate: float = 0.8) -> Genome:
    out = genome.copy()
    if sigma <= 0 or rate <= 0:
        return out
    for _, conn in sorted(out.connections.items()):
        if rng.random() < rate:
            conn.weight += float(rng.normal(0.0, sigma))
    return out


def mutate_add_connection(genome: Genome, registry: InnovationRegistry, rng,
                          sigma: float = 1.0, attempts: int = 20) -> Genome:
    out = genome.copy()
    sources = list(out.input_ids()) + [out.bias_id] + out.hidden_ids()
    targets = out.hidden_ids() + list(out.output_ids())
    for _ in range(attempts):
        src = sources[int(rng.integers(0, len(sources)))]
        dst = targets[int(rng.integers(0, len(targets)))]
        if src == dst or out.has_edge(src, dst):
            continue
        if creates_cycle(out, src, dst):
            continue
        innov = registry.connection(src, dst)
        out.connections[innov] = ConnGene(
            innov, src, dst, float(rng.normal(0.0, sigma))
        )
        return out
    return out


def mutate_add_node(genome: Genome, registry: InnovationRegistry, rng) -> Genome:
    out = genome.copy()
    enabled = out.enabled()
    if not enabled:
        return out
    conn = enabled[int(rng.integers(0, len(enabled)))]
    conn = out.connections[conn.innovation]
    conn.enabled = False
    node = registry.split_node(conn.innovation, out.nodes)
    out.nodes[node] = ROLE_HIDDEN
    up = registry.connection(conn.src, node)
    down = registry.connection(node, conn.dst)
    out.connections[up] = ConnGene(up, conn.src, node, conn.weight)
    out.connections[down] = ConnGene(down, node, conn.dst, 1.0)
    return out


def mutate_prune(genome: Genome, rng) -> Genome:
    """Disable a connection or drop an isolated hidden node; outputs stay fed."""
    out = genome.copy()
    isolated = [
        n for n in out.hidden_ids()
        if not any(c.enabled and n in (c.src, c.dst)
                   for c in out.connections.values())
    ]
    if isolated:
        victim = isolated[int(rng.integers(0, len(isolated)))]
        del out.nodes[victim]
        for innov in [k for k, c in out.connections.items()
                      if victim in (c.src, c.dst)]:
            del out.connections[innov]
        return out
    in_degree: dict[int, int] = {}
    for c in out.connections.values():
        if c.enabled:
            in_degree[c.dst] = in_degree.get(c.dst, 0) + 1
    candidates = [
        c for c in out.enabled()
        if out.nodes[c.dst] != ROLE_OUTPUT or in_degree[c.dst] > 1
    ]
    if not candidates:
        return out
    victim = candidates[int(rng.integers(0, len(candidates)))]
    out.connections[victim.innovation].enabled = False
    return out


def crossover(fitter: Genome, other: Genome, rng) -> Genome:
    """Child carries the fitter parent's structure; matching weights mix."""
    if (fitter.n_inputs, fitter.n_outputs) != (other.n_inputs, other.n_outputs):
        raise GenomeError("crossover requires matching input/output widths")
    child = fitter.copy()
    for innov, gene in child.connections.items():
        twin = other.connections.get(innov)
        if twin is not None and rng.random() < 0.5:
            gene.weight = twin.weight
            gene.enabled = twin.enabled
    return child


def distance(a: Genome, b: Genome, weight_coef: float = 0.4) -> float:
    """NEAT-style genome distance: disjoint/excess plus mean weight gap."""
    keys_a, keys_b = set(a.connections), set(b.connections)
    matching = keys_a & keys_b
    mismatched = len(keys_a ^ keys_b)
    n = max(len(keys_a), len(keys_b), 1)
    w = (
        sum(abs(a.connections[k].weight - b.connections[k].weight) for k in matching)
        / len(matching)
        if matching
        else 0.0
    )
    return mismatched / n + weight_coef * w


# ---------------------------------------------------------------------------
# Evolution loop.

@dataclass(frozen=True)
class EvolutionConfig:
    n_inputs: int
    n_outputs: int
    population: int = 36
    generations: int = 10
    weight_rate: float = 0.8
    weight_sigma: float = 0.4
    add_conn_rate: float = 0.15
    add_node_rate: float = 0.08
    prune_rate: float = 0.05
    conn_sigma: float = 1.0
    init_conn_prob: float = 0.1
    tournament: int = 3
    elites: int = 2
    stagnation_window: int = 5
    diversity_floor: float = 0.3
    sigma_cap: float = 2.0
    structural_rate_cap: float = 0.4
    seed: int = 0
    n_jobs: int | None = None

    def __post_init__(self):
        if self.population < 2:
            raise GenomeError("population must be >= 2")


@dataclass
class ControllerState:
    sigma: float
    add_conn_rate: float
    add_node_rate: float


@dataclass
class GenerationStats:
    generation: int
    best: float
    mean: float
    std: float
    diversity: float
    nodes_best: int
    edges_best: int
    edges_total_best: int
    sigma: float
    add_conn_rate: float
    add_node_rate: float


def adapt_controllers(history: list[GenerationStats], state: ControllerState,
                      cfg: EvolutionConfig) -> ControllerState:
    """Stagnation widens weight noise; low diversity boosts structural rates."""
    sigma = state.sigma
    window = cfg.stagnation_window
    if len(history) > window:
        recent = history[-1].best
        past = history[-1 - window].best
        if recent <= past + 1e-12:
            sigma = min(sigma * 1.5, cfg.sigma_cap)
        else:
            sigma = max(cfg.weight_sigma, sigma / 1.5)
    add_conn, add_node = state.add_conn_rate, state.add_node_rate
    if history:
        if history[-1].diversity < cfg.diversity_floor:
            add_conn = min(add_conn * 1.25, cfg.structural_rate_cap)
            add_node = min(add_node * 1.25, cfg.structural_rate_cap)
        else:
            add_conn = max(cfg.add_conn_rate, add_conn / 1.25)
            add_node = max(cfg.add_node_rate, add_node / 1.25)
    return ControllerState(sigma, add_conn, add_node)


def resolve_workers(requested: int | None = None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if requested is not None:
        return max(1, requested)
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _mean_pairwise_distance(population, rng, max_pairs: int = 200) -> float:
    n = len(population)
    if n < 2:
        return 0.0
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if len(pairs) > max_pairs:
        picks = rng.choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[int(k)] for k in picks]
    return float(
        np.mean([distance(population[i], population[j]) for i, j in pairs])
    )


def evolve(cfg: EvolutionConfig, evaluate, on_generation=None):
    """Generational loop over a fitness callable; returns (best, history).

    `evaluate(genome) -> float`; evaluations run in parallel and reduce in
    genome order, so the run is deterministic for a fixed seed.
    """
    rng = np.random.default_rng(cfg.seed)
    registry = InnovationRegistry(cfg.n_inputs, cfg.n_outputs)
    population = [initial_genome(registry, rng, cfg.init_conn_prob)
                  for _ in range(cfg.population)]
    state = ControllerState(cfg.weight_sigma, cfg.add_conn_rate, cfg.add_node_rate)
    history: list[GenerationStats] = []
    best_genome, best_fit = None, -math.inf
    n_jobs = resolve_workers(cfg.n_jobs)

    for gen in range(cfg.generations):
        if n_jobs > 1 and len(population) > 1:
            fits = Parallel(n_jobs=n_jobs)(
                delayed(evaluate)(g) for g in population
            )
        else:
            fits = [evaluate(g) for g in population]
        fits = [float(f) for f in fits]

        order = sorted(range(len(population)), key=lambda i: (-fits[i], i))
        gen_best = population[order[0]]
        if fits[order[0]] > best_fit:
            best_fit = fits[order[0]]
            best_genome = gen_best.copy()
        nodes_b, edges_b, edges_total_b = gen_best.size()
        stats = GenerationStats(
            generation=gen,
            best=fits[order[0]],
            mean=float(np.mean(fits)),
            std=float(np.std(fits)),
            diversity=_mean_pairwise_distance(population, rng),
            nodes_best=nodes_b,
            edges_best=edges_b,
            edges_total_best=edges_total_b,
            sigma=state.sigma,
            add_conn_rate=state.add_conn_rate,
            add_node_rate=state.add_node_rate,
        )
        history.append(stats)
        if on_generation is not None:
            on_generation(stats)
        state = adapt_controllers(history, state, cfg)

        if gen == cfg.generations - 1:
            break

        def tournament() -> int:
            picks = rng.integers(0, len(population), size=cfg.tournament)
            return max(picks, key=lambda i: (fits[i], -i))

        next_pop = [population[i].copy() for i in order[:cfg.elites]]
        while len(next_pop) < cfg.population:
            pa, pb = tournament(), tournament()
            if fits[pa] < fits[pb] or (fits[pa] == fits[pb] and pb < pa):
                pa, pb = pb, pa
            child = crossover(population[pa], population[pb], rng)
            child = mutate_weights(child, state.sigma, rng, cfg.weight_rate)
            if rng.random() < state.add_conn_rate:
                child = mutate_add_connection(child, registry, rng, cfg.conn_sigma)
            if rng.random() < state.add_node_rate:
                child = mutate_add_node(child, registry, rng)
            if rng.random() < cfg.prune_rate:
                child = mutate_prune(child, rng)
            next_pop.append(child)
        population = next_pop

    return best_genome, history


# ---------------------------------------------------------------------------
# Serialization.

def genome_to_dict(genome: Genome) -> dict:
    return {
        "kind": "genome",
        "n_inputs": genome.n_inputs,
        "n_outputs": genome.n_outputs,
        "nodes": [{"id": i, "role": r} for i, r in sorted(genome.nodes.items())],
        "connections": [
            {
                "innovation": c.innovation,
                "src": c.src,
                "dst": c.dst,
                "weight": c.weight,
                "enabled": c.enabled,
            }
            for _, c in sorted(genome.connections.items())
        ],
    }


def genome_from_dict(doc: dict) -> Genome:
    if doc.get("kind") != "genome":
        raise GenomeError("not a genome document")
    nodes = {int(n["id"]): n["role"] for n in doc["nodes"]}
    conns = {
        int(c["innovation"]): ConnGene(
            int(c["innovation"]), int(c["src"]), int(c["dst"]),
            float(c["weight"]), bool(c["enabled"]),
        )
        for c in doc["connections"]
    }
    return Genome(int(doc["n_inputs"]), int(doc["n_outputs"]), nodes, conns)


def save_genome(genome: Genome, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(genome_to_dict(genome), fh, indent=1)


def load_genome(path) -> Genome:
    with open(path, encoding="utf-8") as fh:
        return genome_from_dict(json.load(fh))
