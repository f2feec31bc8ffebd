"""Map and episode suite generation.

Three room families: open rooms, rooms with one rectangular (convex) block,
and rooms with a U-shaped pocket that captures the greedy agent whenever
the goal hides behind it. Suites pair maps with episodes whose baseline
outcome is verified at generation time, which pins the autonomous success
rate of the validation set by construction.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import agent as A
from . import env as E

OPEN = "open"
BLOCK = "block"
TRAP = "trap"

# suite composition: (easy, trap) episode counts
TRAIN_MIX = (40, 26)
VAL_MIX = (33, 17)
DEMO_MIX = (3, 5)
SUITE_MAX_STEPS = 400
EASY_MIN_GEODESIC = 0.8
TRAP_MIN_GEODESIC = 1.0


def _room(width: int, height: int) -> np.ndarray:
    blocked = np.zeros((height, width), dtype=bool)
    blocked[0, :] = blocked[-1, :] = True
    blocked[:, 0] = blocked[:, -1] = True
    return blocked


def open_room(width: int = 10, height: int = 10) -> np.ndarray:
    return _room(width, height)


def block_room(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    """Bordered room with one rectangular block, margins kept free."""
    blocked = _room(width, height)
    bw = int(rng.integers(2, max(3, width // 3) + 1))
    bh = int(rng.integers(2, max(3, height // 3) + 1))
    x0 = int(rng.integers(2, width - bw - 1))
    y0 = int(rng.integers(2, height - bh - 1))
    blocked[y0:y0 + bh, x0:x0 + bw] = True
    return blocked


def trap_room(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    """Bordered room with a U-shaped pocket; the mouth faces a random side."""
    inner = int(rng.integers(2, 4))       # pocket interior height
    depth = int(rng.integers(4, 8))       # pocket interior depth
    ph, pw = inner + 2, depth + 1         # pocket footprint, mouth on the east
    pocket = np.zeros((ph, pw), dtype=bool)
    pocket[0, :] = True
    pocket[-1, :] = True
    pocket[:, 0] = True
    rot = int(rng.integers(4))
    pocket = np.rot90(pocket, rot)
    ph, pw = pocket.shape
    blocked = _room(width, height)
    if width - pw - 4 <= 2 or height - ph - 4 <= 2:
        raise ValueError("room too small for the pocket")
    x0 = int(rng.integers(2, width - pw - 2))
    y0 = int(rng.integers(2, height - ph - 2))
    blocked[y0:y0 + ph, x0:x0 + pw] |= pocket
    return blocked


def make_map(kind: str, rng: np.random.Generator, map_id: str,
             cell_size: float = E.DEFAULT_CELL_SIZE) -> E.GridMap:
    width = int(rng.integers(10, 15))
    height = int(rng.integers(10, 15))
    if kind == OPEN:
        blocked = open_room(width, height)
    elif kind == BLOCK:
        blocked = block_room(width, height, rng)
    elif kind == TRAP:
        blocked = trap_room(max(width, 14), max(height, 14), rng)
    else:
        raise ValueError(f"unknown map kind {kind!r}")
    return E.GridMap(blocked, cell_size=cell_size, map_id=map_id)


def map_kind(map_id: str) -> str:
    for kind in (OPEN, BLOCK, TRAP):
        if kind in map_id:
            return kind
    return "other"


# -- episode selection -------------------------------------------------------


def _baseline_succeeds(gridmap: E.GridMap, spec: E.EpisodeSpec,
                       agent_policy: A.AgentPolicy) -> bool:
    state = E.start_state(gridmap, spec)
    while not state.terminated:
        obs = E.observe(gridmap, state.pose, spec.goal,
                        num_rays=agent_policy.num_rays,
                        max_range_cells=agent_policy.max_range_cells)
        E.step(gridmap, state, A.scripted_action(obs, gridmap.cell_size))
    return E.is_success(gridmap, state)


def pick_episodes(maps: list[E.GridMap], agent_policy: A.AgentPolicy, count: int,
                  want_success: bool, rng: np.random.Generator,
                  min_geodesic: float, max_steps: int = SUITE_MAX_STEPS,
                  attempts: int = 4000) -> list[E.EpisodeSpec]:
    """Draw episodes whose autonomous baseline outcome is known."""
    out: list[E.EpisodeSpec] = []
    seen = set()
    for _ in range(attempts):
        if len(out) >= count:
            return out
        gridmap = maps[int(rng.integers(len(maps)))]
        try:
            spec = E.sample_episode(gridmap, int(rng.integers(2 ** 31)), min_geodesic,
                                    max_steps=max_steps)
        except E.NoFeasiblePair:
            continue
        key = (spec.map_id, spec.start, spec.goal)
        if key in seen:
            continue
        if _baseline_succeeds(gridmap, spec, agent_policy) == want_success:
            seen.add(key)
            out.append(spec)
    raise E.NoFeasiblePair(
        f"only {len(out)}/{count} episodes with baseline success={want_success}")


# -- suite assembly ------------------------------------------------------------


@dataclass
class Suite:
    maps: dict[str, E.GridMap]
    train: list[E.EpisodeSpec]
    val: list[E.EpisodeSpec]
    demos: list[E.EpisodeSpec]


def build_suite(seed: int = 0, agent_policy: A.AgentPolicy | None = None) -> Suite:
    agent_policy = agent_policy or A.make_scripted_agent(seed=seed)
    root = np.random.default_rng(seed)
    maps: dict[str, E.GridMap] = {}

    def gen(kind: str, split: str, n: int) -> list[E.GridMap]:
        out = []
        for i in range(n):
            for _ in range(20):
                map_id = f"{split}_{kind}_{i}"
                try:
                    m = make_map(kind, root, map_id)
                except ValueError:
                    continue
                maps[map_id] = m
                out.append(m)
                break
            else:
                raise RuntimeError(f"could not generate {kind} map")
        return out

    train_easy = gen(OPEN, "train", 2) + gen(BLOCK, "train", 3)
    train_trap = gen(TRAP, "train", 3)
    val_easy = gen(OPEN, "val", 1) + gen(BLOCK, "val", 2)
    val_trap = gen(TRAP, "val", 2)

    train = (pick_episodes(train_easy, agent_policy, TRAIN_MIX[0], True, root,
                           EASY_MIN_GEODESIC)
             + pick_episodes(train_trap, agent_policy, TRAIN_MIX[1], False, root,
                             TRAP_MIN_GEODESIC))
    val = (pick_episodes(val_easy, agent_policy, VAL_MIX[0], True, root,
                         EASY_MIN_GEODESIC)
           + pick_episodes(val_trap, agent_policy, VAL_MIX[1], False, root,
                           TRAP_MIN_GEODESIC))
    demos = (pick_episodes(train_easy, agent_policy, DEMO_MIX[0], True, root,
                           EASY_MIN_GEODESIC)
             + pick_episodes(train_trap, agent_policy, DEMO_MIX[1], False, root,
                             TRAP_MIN_GEODESIC))
    return Suite(maps=maps, train=train, val=val, demos=demos)


def write_suite(suite: Suite, out_dir) -> None:
    out = Path(out_dir)
    maps_dir = out / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)
    for map_id, m in suite.maps.items():
        (maps_dir / f"{map_id}.map").write_text(m.to_text(), encoding="utf-8")
    for name, specs in (("train", suite.train), ("val", suite.val), ("demos", suite.demos)):
        write_episodes(specs, out / f"{name}.jsonl")


def write_episodes(specs: list[E.EpisodeSpec], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for spec in specs:
            f.write(json.dumps(spec.to_dict()) + "\n")


def load_episodes(path) -> list[E.EpisodeSpec]:
    with open(path, encoding="utf-8") as f:
        return [E.EpisodeSpec.from_dict(json.loads(ln)) for ln in f if ln.strip()]


def load_maps(maps_dir) -> dict[str, E.GridMap]:
    maps = {}
    for p in sorted(Path(maps_dir).glob("*.map")):
        maps[p.stem] = E.load_map(p.read_text(encoding="utf-8"), map_id=p.stem)
    return maps


def load_suite(root_dir) -> Suite:
    root = Path(root_dir)
    return Suite(
        maps=load_maps(root / "maps"),
        train=load_episodes(root / "train.jsonl"),
        val=load_episodes(root / "val.jsonl"),
        demos=load_episodes(root / "demos.jsonl"),
    )
