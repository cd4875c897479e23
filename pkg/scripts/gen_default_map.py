#!/usr/bin/env python3
"""Regenerate the bundled 300 m x 150 m urban grid map.

Writes src/swarmtactics/data/urban_300x150.grid and prints graph
diagnostics plus the building-site table mirrored by
scenarios.BUILDING_SITES.  Cells are 2 m; the map is 150 x 75 cells.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from swarmtactics import topo_map  # noqa: E402

W, H, RES = 150, 75, 2.0

H_STREETS = ((2, 4), (22, 24), (46, 48), (70, 72))
V_STREETS = ((2, 4), (32, 34), (55, 57), (78, 80), (113, 115), (145, 147))

# (rows, cols) rectangles of extra road: connectors and dead-end alleys
EXTRA_ROADS = (
    ((25, 31), (14, 16)),    # alley south of H2, block A
    ((25, 33), (100, 102)),  # alley south of H2, block D
    ((8, 21), (130, 132)),   # alley north from H2, block E
    ((49, 56), (38, 40)),    # alley south of H3, block B
    ((49, 58), (120, 122)),  # alley south of H3, block E
    ((58, 69), (7, 9)),      # alley north from H4, block A
    ((36, 38), (5, 20)),     # horizontal alley off V1, block A
    ((10, 12), (58, 74)),    # horizontal alley off V3, block C
    ((67, 69), (81, 100)),   # horizontal alley off V4, south
    ((10, 12), (116, 128)),  # stub east of V5, block E
    ((62, 64), (116, 130)),  # stub east of V5, south
    ((14, 16), (35, 50)),    # stub east of V2, block B
    ((27, 29), (35, 50)),    # stub east of V2, block B south
    ((40, 42), (94, 112)),   # alley west of V5, block D
    ((60, 62), (46, 52)),    # stub in block B south
    ((49, 56), (60, 62)),    # stub south of H3, block C
    ((30, 32), (5, 12)),     # stub west, block A south of H2
    ((8, 14), (106, 108)),   # stub in block D, crosses the diagonal
    ((52, 54), (123, 140)),  # alley east from the V5 south stub
    ((58, 69), (70, 72)),    # alley north from H4, block C
)

# diagonal bands: (r0, c0, steps); each step paints a 2x2 block
DIAGONALS = (
    (5, 96, 17),   # H1 -> H2 through block D
    (49, 35, 21),  # H3 -> H4 through block B
)

# building sites: block rect + driveway stub + entrance cell (driveway end)
SITES = (
    dict(rows=(7, 17), cols=(8, 26), drive=((18, 21), (16, 18)), door=(18, 17)),
    dict(rows=(7, 17), cols=(81, 94), drive=((18, 21), (86, 88)), door=(18, 87)),
    dict(rows=(27, 39), cols=(122, 141), drive=((32, 34), (116, 121)), door=(33, 121)),
    dict(rows=(53, 65), cols=(11, 29), drive=((49, 52), (19, 21)), door=(52, 20)),
    dict(rows=(53, 65), cols=(84, 103), drive=((49, 52), (92, 94)), door=(52, 93)),
    dict(rows=(28, 40), cols=(60, 76), drive=((25, 27), (67, 69)), door=(27, 68)),
)


def build():
    cells = np.full((H, W), topo_map.OBSTACLE, dtype=np.int8)

    def road(rows, cols):
        cells[rows[0]:rows[1] + 1, cols[0]:cols[1] + 1] = topo_map.ROAD

    for r0, r1 in H_STREETS:
        road((r0, r1), (2, 147))
    for c0, c1 in V_STREETS:
        road((2, 72), (c0, c1))
    for rows, cols in EXTRA_ROADS:
        road(rows, cols)
    for r0, c0, steps in DIAGONALS:
        for k in range(steps):
            cells[r0 + k:r0 + k + 2, c0 + k:c0 + k + 2] = topo_map.ROAD

    sites = []
    for i, s in enumerate(SITES):
        road(*s["drive"])
        r0, r1 = s["rows"]
        c0, c1 = s["cols"]
        block = cells[r0:r1 + 1, c0:c1 + 1]
        if (block == topo_map.ROAD).any():
            raise SystemExit(f"site {i} overlaps a road; adjust the layout")
        cells[r0:r1 + 1, c0:c1 + 1] = topo_map.BUILDING
        rect = (c0 * RES, r0 * RES, (c1 - c0 + 1) * RES, (r1 - r0 + 1) * RES)
        dr, dc = s["door"]
        entrance = ((dc + 0.5) * RES, (dr + 0.5) * RES)
        sites.append((rect, entrance))
    return topo_map.OccupancyGrid(W, H, RES, cells), sites


def main():
    grid, sites = build()
    skel = topo_map.skeletonize(grid)
    graph = topo_map.build_graph(skel, RES)
    print(f"nodes={len(graph.nodes)} edges={len(graph.edges)}")

    dist = topo_map.dijkstra(graph, 0)
    bad = np.nonzero(~np.isfinite(dist))[0]
    print(f"unreachable nodes from 0: {len(bad)}")
    for nid in bad[:10]:
        print(f"  node {nid} at {graph.nodes[nid].position}")

    pos = graph.positions()
    print("BUILDING_SITES = (")
    for i, (rect, entrance) in enumerate(sites):
        d = np.linalg.norm(pos - np.asarray(entrance), axis=1).min()
        print(f"    BuildingSpec({i}, {rect}, {entrance}),  # nearest node {d:.1f} m")
    print(")")

    out = Path(__file__).resolve().parents[1] / "src" / "swarmtactics" / "data"
    out.mkdir(parents=True, exist_ok=True)
    (out / "urban_300x150.grid").write_text(topo_map.dump_grid(grid))
    print(f"wrote {out / 'urban_300x150.grid'}")


if __name__ == "__main__":
    main()
