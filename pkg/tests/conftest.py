import numpy as np
import pytest

from asknav import agent as A
from asknav import env as E

OPEN_5 = """\
.....
.....
.....
.....
.....
"""

RING_5 = """\
#####
#...#
#...#
#...#
#####
"""

# wall splits a corridor, forcing a detour
DETOUR_5 = """\
.....
.###.
.....
.....
.....
"""

L_CORRIDOR = """\
#######
#.....#
#####.#
#####.#
#######
"""

# U-shaped pocket opening east; greedy agents heading west fall in
TRAP_12 = """\
############
#..........#
#..........#
#...#####..#
#...#......#
#...#......#
#...#......#
#...#####..#
#..........#
#..........#
#..........#
############
"""


@pytest.fixture(scope="session")
def open5():
    return E.load_map(OPEN_5, map_id="open5")


@pytest.fixture(scope="session")
def ring5():
    return E.load_map(RING_5, map_id="ring5")


@pytest.fixture(scope="session")
def detour5():
    return E.load_map(DETOUR_5, map_id="detour5")


@pytest.fixture(scope="session")
def corridor():
    return E.load_map(L_CORRIDOR, map_id="corridor")


@pytest.fixture(scope="session")
def trap12():
    return E.load_map(TRAP_12, map_id="trap12")


@pytest.fixture(scope="session")
def scripted_agent():
    return A.make_scripted_agent(seed=7)


def random_map(rng: np.random.Generator, width=None, height=None, p_block=0.25,
               map_id="rand") -> E.GridMap:
    """Random occupancy grid that always keeps a connected free region."""
    width = width or int(rng.integers(4, 13))
    height = height or int(rng.integers(4, 13))
    while True:
        blocked = rng.random((height, width)) < p_block
        free = np.argwhere(~blocked)
        if len(free) < 2:
            continue
        try:
            return E.GridMap(blocked, map_id=map_id)
        except E.UnreachableMap:
            continue


def oracle_bfs(gridmap: E.GridMap, a, b):
    """Independent plain-dict BFS distance in steps; None if disconnected."""
    if a == b:
        return 0
    seen = {a: 0}
    frontier = [a]
    while frontier:
        nxt = []
        for (x, y) in frontier:
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                c = (x + dx, y + dy)
                if c in seen or not gridmap.is_free(*c):
                    continue
                seen[c] = seen[(x, y)] + 1
                if c == b:
                    return seen[c]
                nxt.append(c)
        frontier = nxt
    return None
