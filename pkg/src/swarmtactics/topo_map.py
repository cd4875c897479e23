"""Topological abstraction of an urban occupancy grid.

Converts the road cells of a grid map into a sparse undirected graph
(junctions, curve tips, registered points of interest) that answers
shortest-path queries under mutable edge weights.  Edge weights start at
the geometric length and only ever grow when smoke or adversary penalties
are applied; `reset_weights` restores the geometric baseline, so the
reweighting pipeline is reset-and-reapply rather than cumulative.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

ROAD = 0
OBSTACLE = 1
BUILDING = 2

_CELL_CHARS = {".": ROAD, "#": OBSTACLE, "B": BUILDING}
_CHARS_CELL = {v: k for k, v in _CELL_CHARS.items()}

# Node kinds, in upgrade precedence order (a POI kind replaces a structural one).
NODE_KINDS = ("junction", "waypoint", "building", "entrance")


class MapError(ValueError):
    """Malformed grid file or invalid graph query."""


@dataclass
class OccupancyGrid:
    width: int
    height: int
    resolution: float
    cells: np.ndarray  # (height, width) int8 of ROAD/OBSTACLE/BUILDING

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int8)
        if self.cells.shape != (self.height, self.width):
            raise MapError(
                f"cell block is {self.cells.shape}, header says "
                f"{(self.height, self.width)}"
            )
        if self.resolution <= 0:
            raise MapError("resolution must be positive")

    @property
    def road_mask(self) -> np.ndarray:
        return self.cells == ROAD

    def size_meters(self) -> tuple[float, float]:
        return self.width * self.resolution, self.height * self.resolution


@dataclass
class Skeleton:
    """Medial-axis pixels of the road region, as (row, col) pairs."""

    pixels: set[tuple[int, int]]


@dataclass
class Node:
    id: int
    position: np.ndarray  # (x, y) meters
    kind: str


@dataclass
class Edge:
    a: int
    b: int
    base_length: float
    weight: float


@dataclass
class TopoGraph:
    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    _adj: list[list[tuple[int, int]]] | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.nodes)

    def positions(self) -> np.ndarray:
        if not self.nodes:
            return np.zeros((0, 2))
        return np.array([n.position for n in self.nodes])

    def add_node(self, position, kind: str) -> int:
        nid = len(self.nodes)
        self.nodes.append(Node(nid, np.asarray(position, dtype=float), kind))
        self._adj = None
        return nid

    def add_edge(self, a: int, b: int, base_length: float) -> int:
        eid = len(self.edges)
        self.edges.append(Edge(a, b, base_length, base_length))
        self._adj = None
        return eid

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Adjacency lists of (neighbor id, edge index); rebuilt after mutation."""
        if self._adj is None:
            adj: list[list[tuple[int, int]]] = [[] for _ in self.nodes]
            for ei, e in enumerate(self.edges):
                adj[e.a].append((e.b, ei))
                if e.b != e.a:
                    adj[e.b].append((e.a, ei))
            for lst in adj:
                lst.sort()
            self._adj = adj
        return self._adj

    def copy(self) -> "TopoGraph":
        g = TopoGraph()
        g.nodes = [Node(n.id, n.position.copy(), n.kind) for n in self.nodes]
        g.edges = [Edge(e.a, e.b, e.base_length, e.weight) for e in self.edges]
        return g

    def reset_weights(self) -> None:
        for e in self.edges:
            e.weight = e.base_length

    def edge_midpoints(self) -> np.ndarray:
        if not self.edges:
            return np.zeros((0, 2))
        pos = self.positions()
        a = np.array([e.a for e in self.edges])
        b = np.array([e.b for e in self.edges])
        return 0.5 * (pos[a] + pos[b])


# ---------------------------------------------------------------------------
# Grid file format: header "W H RES", then H rows of W characters.

def parse_grid(text: str) -> OccupancyGrid:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MapError("empty grid file")
    head = lines[0].split()
    if len(head) != 3:
        raise MapError(f"bad header {lines[0]!r}, expected 'W H RES'")
    w, h, res = int(head[0]), int(head[1]), float(head[2])
    rows = lines[1:]
    if len(rows) != h:
        raise MapError(f"expected {h} rows, found {len(rows)}")
    cells = np.empty((h, w), dtype=np.int8)
    for r, row in enumerate(rows):
        if len(row) != w:
            raise MapError(f"row {r} has {len(row)} cells, expected {w}")
        for c, ch in enumerate(row):
            if ch not in _CELL_CHARS:
                raise MapError(f"unknown cell char {ch!r} at row {r}, col {c}")
            cells[r, c] = _CELL_CHARS[ch]
    return OccupancyGrid(w, h, res, cells)


def load_grid(path) -> OccupancyGrid:
    with open(path, encoding="utf-8") as fh:
        return parse_grid(fh.read())


def dump_grid(grid: OccupancyGrid) -> str:
    lines = [f"{grid.width} {grid.height} {grid.resolution:g}"]
    for r in range(grid.height):
        lines.append("".join(_CHARS_CELL[int(v)] for v in grid.cells[r]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Skeletonization: sequential thinning ordered by the distance transform,
# peeling boundary pixels first so the surviving curve rides the ridge.

_ORTHO = ((-1, 0), (1, 0), (0, -1), (0, 1))


def _neighbors8(mask, r, c):
    h, w = mask.shape
    out = []
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and mask[rr, cc]:
                out.append((rr, cc))
    return out


def _removable(mask, r, c):
    nb = _neighbors8(mask, r, c)
    if len(nb) <= 1:
        return False  # endpoint / isolated pixel anchors the curve
    h, w = mask.shape
    if not any(
        not (0 <= r + dr < h and 0 <= c + dc < w) or not mask[r + dr, c + dc]
        for dr, dc in _ORTHO
    ):
        return False  # interior pixel: removal would punch a hole
    # Deletable iff the remaining neighbors stay one 8-connected component.
    seen = {nb[0]}
    stack = [nb[0]]
    while stack:
        pr, pc = stack.pop()
        for q in nb:
            if q not in seen and max(abs(q[0] - pr), abs(q[1] - pc)) <= 1:
                seen.add(q)
                stack.append(q)
    return len(seen) == len(nb)


def skeletonize(grid: OccupancyGrid) -> Skeleton:
    """Thin the road region to its 1-pixel-wide medial axis."""
    mask = grid.road_mask.copy()
    if not mask.any():
        return Skeleton(set())
    dist = ndimage.distance_transform_edt(mask)
    changed = True
    while changed:
        changed = False
        order = sorted(zip(*np.nonzero(mask)), key=lambda rc: (dist[rc], rc[0], rc[1]))
        for r, c in order:
            if mask[r, c] and _removable(mask, r, c):
                mask[r, c] = False
                changed = True
    # Single cleanup pass: drop tips hanging diagonally off the curve end,
    # a thinning-order artifact at corridor ends.
    pixels = set(zip(*np.nonzero(mask)))
    for r, c in sorted(pixels):
        nb = [p for p in _neighbors8(mask, r, c) if p in pixels]
        if len(nb) == 1 and abs(nb[0][0] - r) == 1 and abs(nb[0][1] - c) == 1:
            pixels.discard((r, c))
            mask[r, c] = False
    return Skeleton({(int(r), int(c)) for r, c in pixels})


def _reduced_neighbors(pixels: set[tuple[int, int]], p):
    """8-neighbors, minus diagonal links shortcut by an orthogonal pixel.

    Without the reduction every pixel orthogonally adjacent to a crossing
    counts phantom diagonal links and gets misclassified as a junction.
    """
    r, c = p
    out = []
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            q = (r + dr, c + dc)
            if q not in pixels:
                continue
            if dr != 0 and dc != 0:
                if (r + dr, c) in pixels or (r, c + dc) in pixels:
                    continue
            out.append(q)
    return out


def build_graph(skeleton: Skeleton, resolution: float) -> TopoGraph:
    """Collapse degree-2 pixel chains into edges between junctions and tips."""
    graph = TopoGraph()
    pixels = skeleton.pixels
    if not pixels:
        return graph
    nbrs = {p: _reduced_neighbors(pixels, p) for p in pixels}
    node_pixels = sorted(p for p in pixels if len(nbrs[p]) != 2)

    # Pure cycles have no junctions; anchor each one at its smallest pixel.
    anchored = set(node_pixels)
    if len(anchored) < len(pixels):
        seen = set(anchored)
        stack = list(anchored)
        while stack:
            p = stack.pop()
            for q in nbrs[p]:
                if q not in seen:
                    seen.add(q)
                    stack.append(q)
        for p in sorted(pixels - seen):
            if p not in seen:
                node_pixels.append(p)
                comp = [p]
                seen.add(p)
                while comp:
                    u = comp.pop()
                    for q in nbrs[u]:
                        if q not in seen:
                            seen.add(q)
                            comp.append(q)
        node_pixels.sort()

    def pix_pos(p):
        return ((p[1] + 0.5) * resolution, (p[0] + 0.5) * resolution)

    ids = {}
    for p in node_pixels:
        kind = "junction" if len(nbrs[p]) > 2 else "waypoint"
        ids[p] = graph.add_node(pix_pos(p), kind)

    def step_len(p, q):
        return resolution * math.hypot(q[0] - p[0], q[1] - p[1])

    traversed = set()
    for p in node_pixels:
        for first in sorted(nbrs[p]):
            if (p, first) in traversed:
                continue
            length = step_len(p, first)
            prev, cur = p, first
            while cur not in ids:
                nxt = [q for q in nbrs[cur] if q != prev]
                if not nxt:
                    break  # degenerate stub; treat current pixel as a tip
                length += step_len(cur, nxt[0])
                prev, cur = cur, nxt[0]
            if cur not in ids:
                ids[cur] = graph.add_node(pix_pos(cur), "waypoint")
            traversed.add((p, first))
            traversed.add((cur, prev))
            graph.add_edge(ids[p], ids[cur], length)
    return graph


# ---------------------------------------------------------------------------
# Queries and reweighting.

def nearest_node(graph: TopoGraph, position) -> int:
    if not graph.nodes:
        raise MapError("nearest_node on empty graph")
    d = np.linalg.norm(graph.positions() - np.asarray(position, dtype=float), axis=1)
    return int(np.argmin(d))  # argmin takes the first (= smallest id) on ties


def register_poi(graph: TopoGraph, position, kind: str) -> int:
    """Attach a point of interest to the graph, merging onto coincident nodes."""
    if not graph.nodes:
        raise MapError("no anchor node: cannot register POI on an empty graph")
    position = np.asarray(position, dtype=float)
    anchor = nearest_node(graph, position)
    dist = float(np.linalg.norm(graph.nodes[anchor].position - position))
    if dist < 1e-9:
        graph.nodes[anchor].kind = kind
        return anchor
    nid = graph.add_node(position, kind)
    graph.add_edge(anchor, nid, dist)
    return nid


def dijkstra(graph: TopoGraph, src: int) -> np.ndarray:
    """Distance from `src` to every node under current edge weights."""
    n = len(graph.nodes)
    dist = np.full(n, math.inf)
    dist[src] = 0.0
    adj = graph.adjacency()
    weights = [e.weight for e in graph.edges]
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, ei in adj[u]:
            nd = d + weights[ei]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def shortest_path(graph: TopoGraph, src: int, dst: int):
    """Minimum-weight path as (node list, cost); (None, inf) when unreachable.

    Equal-cost ties resolve to the lexicographically smallest node sequence.
    """
    n = len(graph.nodes)
    if not (0 <= src < n and 0 <= dst < n):
        raise MapError(f"shortest_path endpoints ({src}, {dst}) not in graph")
    dist_to = dijkstra(graph, dst)
    total = float(dist_to[src])
    if math.isinf(total):
        return None, math.inf
    tol = 1e-9 * max(1.0, total)
    path = [src]
    u = src
    adj = graph.adjacency()
    while u != dst:
        best = None
        for v, ei in adj[u]:
            if graph.edges[ei].weight + dist_to[v] <= dist_to[u] + tol:
                if best is None or v < best:
                    best = v
        path.append(best)
        u = best
    return path, total


def apply_smoke_weights(graph: TopoGraph, smokes, c_s: float = 1.0) -> None:
    """Scale edges near smoke: x(1 + c_s * (1 - d/r)) per smoke unit in range."""
    if not smokes or not graph.edges:
        return
    mid = graph.edge_midpoints()
    for smoke in smokes:
        center = np.asarray(smoke["center"], dtype=float)
        r_s = float(smoke["radius"])
        if r_s <= 0:
            raise MapError("smoke radius must be positive")
        d = np.linalg.norm(mid - center, axis=1)
        factor = 1.0 + c_s * np.clip(1.0 - d / r_s, 0.0, None) * (d < r_s)
        for ei in np.nonzero(factor > 1.0)[0]:
            graph.edges[ei].weight *= float(factor[ei])


def apply_caution_weights(graph: TopoGraph, observed_adversaries, gamma: float,
                          c_a: float = 4.0, r_a: float = 20.0) -> None:
    """Scale edges near each observed adversary by (1 + gamma * c_a)."""
    if not 0.0 <= gamma <= 1.0:
        raise MapError(f"caution level {gamma} outside [0, 1]")
    if gamma == 0.0 or not observed_adversaries or not graph.edges:
        return
    mid = graph.edge_midpoints()
    for adv in observed_adversaries:
        pos = np.asarray(adv["position"], dtype=float)
        radius = float(adv.get("radius", r_a))
        d = np.linalg.norm(mid - pos, axis=1)
        for ei in np.nonzero(d < radius)[0]:
            graph.edges[ei].weight *= 1.0 + gamma * c_a


# ---------------------------------------------------------------------------
# Graph export: line-per-record text.

def dump_graph(graph: TopoGraph) -> str:
    lines = []
    for node in graph.nodes:
        lines.append(
            f"node {node.id} {node.position[0]:.6f} {node.position[1]:.6f} {node.kind}"
        )
    for e in graph.edges:
        lines.append(f"edge {e.a} {e.b} {e.base_length:.6f}")
    return "\n".join(lines) + "\n"


def load_graph(text: str) -> TopoGraph:
    graph = TopoGraph()
    for ln in text.splitlines():
        parts = ln.split()
        if not parts:
            continue
        if parts[0] == "node":
            nid = graph.add_node((float(parts[2]), float(parts[3])), parts[4])
            if nid != int(parts[1]):
                raise MapError("node records out of order")
        elif parts[0] == "edge":
            graph.add_edge(int(parts[1]), int(parts[2]), float(parts[3]))
        else:
            raise MapError(f"unknown record {parts[0]!r}")
    return graph
