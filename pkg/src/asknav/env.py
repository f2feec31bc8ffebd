"""Deterministic 2D grid point-goal navigation world.

Maps are occupancy grids with a metric cell size. The agent occupies one
cell, faces one of four compass headings, and moves with discrete actions
(one-cell forward, 90-degree turns, stop). Observations are egocentric
ray-cast distances plus a point-goal (distance, relative heading) pair.
Geodesic distances are exact shortest 4-connected path lengths.

Frame convention: x is the column index (east positive), y is the row
index (south positive). Math angles live in the usual frame where north
is +pi/2, so bearing to a cell at (gx, gy) is atan2(y - gy, gx - x).
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

# Actions
FORWARD = "FORWARD"
TURN_LEFT = "TURN_LEFT"
TURN_RIGHT = "TURN_RIGHT"
STOP = "STOP"
ACTIONS = (FORWARD, TURN_LEFT, TURN_RIGHT, STOP)

# Actors
AGENT = "AGENT"
HUMAN = "HUMAN"
EXPERT = "EXPERT"
ACTORS = (AGENT, HUMAN, EXPERT)

HEADINGS = ("N", "E", "S", "W")
HEADING_VEC = {"N": (0, -1), "E": (1, 0), "S": (0, 1), "W": (-1, 0)}
HEADING_ANGLE = {"E": 0.0, "N": math.pi / 2, "W": math.pi, "S": -math.pi / 2}
# counterclockwise order, so a left turn moves one step forward in this tuple
_CCW = ("E", "N", "W", "S")

DEFAULT_CELL_SIZE = 0.1
DEFAULT_NUM_RAYS = 16
DEFAULT_MAX_RANGE_CELLS = 10
DEFAULT_MAX_STEPS = 500
SUCCESS_RADIUS_CELLS = 2.0  # success needs euclidean distance < 2 * agent width

SAMPLE_ATTEMPTS = 10_000


class MalformedMap(ValueError):
    """Map text is ragged or contains an illegal character."""


class UnreachableMap(ValueError):
    """Map has no connected free region of at least 2 cells."""


class BlockedEndpoint(ValueError):
    """Geodesic endpoint sits on a blocked cell."""


class EpisodeTerminated(RuntimeError):
    """step() called after the episode already terminated."""


class NoFeasiblePair(RuntimeError):
    """Rejection sampling found no start/goal pair within the attempt cap."""


class GridMap:
    """Occupancy grid. Immutable after construction; caches live on the map."""

    def __init__(self, blocked: np.ndarray, cell_size: float = DEFAULT_CELL_SIZE,
                 map_id: str = "map"):
        blocked = np.asarray(blocked, dtype=bool)
        if blocked.ndim != 2:
            raise MalformedMap("occupancy array must be 2-D")
        self.height, self.width = blocked.shape
        if self.width < 3 or self.height < 3:
            raise MalformedMap(f"map must be at least 3x3, got {self.width}x{self.height}")
        self.blocked = blocked
        self.blocked.setflags(write=False)
        self.cell_size = float(cell_size)
        self.map_id = map_id
        self._check_free_region()
        self._dist_fields: dict[tuple[int, int], np.ndarray] = {}
        self._ray_cache: dict[tuple[int, int], np.ndarray] = {}

    def _check_free_region(self) -> None:
        free = int((~self.blocked).sum())
        if free < 2:
            raise UnreachableMap("map needs a free region of at least 2 cells")
        # largest connected free component must have >= 2 cells
        for x, y in zip(*np.nonzero(~self.blocked.T)):
            comp = self._flood(int(x), int(y))
            if comp >= 2:
                return
        raise UnreachableMap("no connected free region of 2+ cells")

    def _flood(self, x: int, y: int) -> int:
        seen = np.zeros_like(self.blocked)
        q = deque([(x, y)])
        seen[y, x] = True
        n = 0
        while q:
            cx, cy = q.popleft()
            n += 1
            for dx, dy in ((0, -1), (1, 0), (0, 1), (-1, 0)):
                nx, ny = cx + dx, cy + dy
                if self.in_bounds(nx, ny) and not self.blocked[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    q.append((nx, ny))
        return n

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and not self.blocked[y, x]

    def free_cells(self) -> list[tuple[int, int]]:
        ys, xs = np.nonzero(~self.blocked)
        return [(int(x), int(y)) for x, y in zip(xs, ys)]

    def dist_field(self, goal: tuple[int, int]) -> np.ndarray:
        """BFS step counts from every cell to goal; -1 where unreachable."""
        goal = (int(goal[0]), int(goal[1]))
        cached = self._dist_fields.get(goal)
        if cached is not None:
            return cached
        gx, gy = goal
        if not self.is_free(gx, gy):
            raise BlockedEndpoint(f"goal cell {goal} is blocked or out of bounds")
        dist = np.full((self.height, self.width), -1, dtype=np.int32)
        dist[gy, gx] = 0
        q = deque([(gx, gy)])
        while q:
            cx, cy = q.popleft()
            d = dist[cy, cx] + 1
            for dx, dy in ((0, -1), (1, 0), (0, 1), (-1, 0)):  # N, E, S, W
                nx, ny = cx + dx, cy + dy
                if self.is_free(nx, ny) and dist[ny, nx] < 0:
                    dist[ny, nx] = d
                    q.append((nx, ny))
        dist.setflags(write=False)
        self._dist_fields[goal] = dist
        return dist

    def to_text(self) -> str:
        lines = [f"cellsize {self.cell_size:g}"]
        for y in range(self.height):
            lines.append("".join("#" if self.blocked[y, x] else "." for x in range(self.width)))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Pose:
    x: int
    y: int
    heading: str

    def __post_init__(self):
        if self.heading not in HEADINGS:
            raise ValueError(f"bad heading {self.heading!r}")

    @property
    def cell(self) -> tuple[int, int]:
        return (self.x, self.y)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "heading": self.heading}

    @staticmethod
    def from_dict(d: dict) -> "Pose":
        return Pose(int(d["x"]), int(d["y"]), str(d["heading"]))


@dataclass(frozen=True)
class EpisodeSpec:
    map_id: str
    start: Pose
    goal: tuple[int, int]
    shortest_path_length: float
    max_steps: int = DEFAULT_MAX_STEPS
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "map_id": self.map_id,
            "start": self.start.to_dict(),
            "goal": {"x": self.goal[0], "y": self.goal[1]},
            "shortest_path_length": self.shortest_path_length,
            "max_steps": self.max_steps,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "EpisodeSpec":
        return EpisodeSpec(
            map_id=str(d["map_id"]),
            start=Pose.from_dict(d["start"]),
            goal=(int(d["goal"]["x"]), int(d["goal"]["y"])),
            shortest_path_length=float(d["shortest_path_length"]),
            max_steps=int(d["max_steps"]),
            seed=int(d["seed"]),
        )


@dataclass(frozen=True)
class PointGoal:
    distance: float       # euclidean, meters
    relative_heading: float  # radians in (-pi, pi]


@dataclass(frozen=True)
class Observation:
    rays: np.ndarray      # R distances in meters, index 0 straight ahead, CCW
    pointgoal: PointGoal


@dataclass
class EpisodeState:
    """Live episode bookkeeping; owned by exactly one runner."""
    spec: EpisodeSpec
    pose: Pose
    steps: int = 0
    C_r: int = 0
    C_h: int = 0
    C_a: int = 0
    c_p: int = 0              # length of the current intervention path, 0 outside one
    path_length: float = 0.0  # meters of executed translation
    distance_history: list[float] = field(default_factory=list)  # geodesic meters, index 0 = start
    terminated: bool = False
    terminal_action: str | None = None

    @property
    def distance_to_goal(self) -> float:
        return self.distance_history[-1]

    @property
    def r_nav_history(self) -> list[float]:
        return [-d for d in self.distance_history]


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    r = math.remainder(a, 2 * math.pi)
    if r <= -math.pi:
        r = math.pi
    return r


def turn(heading: str, action: str) -> str:
    i = _CCW.index(heading)
    if action == TURN_LEFT:
        return _CCW[(i + 1) % 4]
    if action == TURN_RIGHT:
        return _CCW[(i - 1) % 4]
    return heading


def load_map(text: str, map_id: str = "map") -> GridMap:
    """Parse the ASCII map format: optional `cellsize <m>` header, then
    equal-length lines of '#' (blocked) and '.' (free)."""
    lines = [ln for ln in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    cell_size = DEFAULT_CELL_SIZE
    if lines and lines[0].startswith("cellsize"):
        parts = lines[0].split()
        if len(parts) != 2:
            raise MalformedMap(f"bad cellsize header: {lines[0]!r}")
        try:
            cell_size = float(parts[1])
        except ValueError as e:
            raise MalformedMap(f"bad cellsize value: {parts[1]!r}") from e
        if cell_size <= 0:
            raise MalformedMap("cellsize must be positive")
        lines = lines[1:]
    if not lines:
        raise MalformedMap("empty map")
    width = len(lines[0])
    rows = []
    for i, ln in enumerate(lines):
        if len(ln) != width:
            raise MalformedMap(f"row {i} has length {len(ln)}, expected {width}")
        row = []
        for ch in ln:
            if ch == "#":
                row.append(True)
            elif ch == ".":
                row.append(False)
            else:
                raise MalformedMap(f"illegal character {ch!r} in row {i}")
        rows.append(row)
    return GridMap(np.array(rows, dtype=bool), cell_size=cell_size, map_id=map_id)


def geodesic_distance(gridmap: GridMap, a: tuple[int, int], b: tuple[int, int]) -> float:
    """Shortest 4-connected path length in meters; inf if disconnected."""
    ax, ay = int(a[0]), int(a[1])
    if not gridmap.is_free(ax, ay):
        raise BlockedEndpoint(f"cell {a} is blocked or out of bounds")
    steps = gridmap.dist_field((int(b[0]), int(b[1])))[ay, ax]
    if steps < 0:
        return math.inf
    return float(steps) * gridmap.cell_size


def _ray_table(gridmap: GridMap, x: int, y: int,
               num_rays: int = DEFAULT_NUM_RAYS,
               max_range_cells: int = DEFAULT_MAX_RANGE_CELLS) -> np.ndarray:
    """Distances for all num_rays absolute directions from cell (x, y).

    Direction k has math angle 2*pi*k/num_rays. March one cell length at a
    time; the first sample landing on a blocked or out-of-bounds cell sets
    the distance, clipped at max_range.
    """
    key = (x, y)
    cached = gridmap._ray_cache.get(key)
    if cached is not None:
        return cached
    out = np.empty(num_rays, dtype=np.float64)
    for k in range(num_rays):
        ang = 2 * math.pi * k / num_rays
        dx = math.cos(ang)
        dy = -math.sin(ang)  # math frame -> row index
        dist_cells = max_range_cells
        for step_i in range(1, max_range_cells + 1):
            cx = int(round(x + step_i * dx))
            cy = int(round(y + step_i * dy))
            if not gridmap.is_free(cx, cy):
                dist_cells = step_i
                break
        out[k] = dist_cells * gridmap.cell_size
    out.setflags(write=False)
    gridmap._ray_cache[key] = out
    return out


def observe(gridmap: GridMap, pose: Pose, goal: tuple[int, int],
            num_rays: int = DEFAULT_NUM_RAYS,
            max_range_cells: int = DEFAULT_MAX_RANGE_CELLS) -> Observation:
    """Egocentric observation: ray 0 points straight ahead, rays proceed
    counterclockwise at equal angular spacing."""
    if num_rays % 4 == 0:
        table = _ray_table(gridmap, pose.x, pose.y, num_rays, max_range_cells)
        shift = _CCW.index(pose.heading) * (num_rays // 4)
        rays = np.roll(table, -shift)
    else:
        rays = np.empty(num_rays, dtype=np.float64)
        base = HEADING_ANGLE[pose.heading]
        for i in range(num_rays):
            ang = base + 2 * math.pi * i / num_rays
            dx, dy = math.cos(ang), -math.sin(ang)
            dist_cells = max_range_cells
            for step_i in range(1, max_range_cells + 1):
                if not gridmap.is_free(int(round(pose.x + step_i * dx)),
                                       int(round(pose.y + step_i * dy))):
                    dist_cells = step_i
                    break
            rays[i] = dist_cells * gridmap.cell_size
    gx, gy = goal
    dx, dy = gx - pose.x, gy - pose.y
    distance = math.hypot(dx, dy) * gridmap.cell_size
    if dx == 0 and dy == 0:
        rel = 0.0
    else:
        bearing = math.atan2(-dy, dx)
        rel = wrap_angle(bearing - HEADING_ANGLE[pose.heading])
    rays = np.asarray(rays, dtype=np.float64)
    rays.setflags(write=False)
    return Observation(rays=rays, pointgoal=PointGoal(distance=distance, relative_heading=rel))


def start_state(gridmap: GridMap, spec: EpisodeSpec) -> EpisodeState:
    if not gridmap.is_free(spec.start.x, spec.start.y):
        raise BlockedEndpoint(f"start {spec.start.cell} is blocked")
    d0 = geodesic_distance(gridmap, spec.start.cell, spec.goal)
    return EpisodeState(spec=spec, pose=spec.start, distance_history=[d0])


def step(gridmap: GridMap, state: EpisodeState, action: str, actor: str = AGENT) -> EpisodeState:
    """Advance one step. Collisions are silent position no-ops; STOP or
    hitting max_steps terminates."""
    if state.terminated:
        raise EpisodeTerminated("episode already terminated")
    if action not in ACTIONS:
        raise ValueError(f"bad action {action!r}")
    if actor not in ACTORS:
        raise ValueError(f"bad actor {actor!r}")
    pose = state.pose
    if action == FORWARD:
        vx, vy = HEADING_VEC[pose.heading]
        nx, ny = pose.x + vx, pose.y + vy
        if gridmap.is_free(nx, ny):
            pose = replace(pose, x=nx, y=ny)
            state.path_length += gridmap.cell_size
    elif action in (TURN_LEFT, TURN_RIGHT):
        pose = replace(pose, heading=turn(pose.heading, action))
    state.pose = pose
    state.steps += 1
    if actor == AGENT:
        state.C_a += 1
    else:
        state.C_h += 1
    state.distance_history.append(geodesic_distance(gridmap, pose.cell, state.spec.goal))
    if action == STOP:
        state.terminated = True
        state.terminal_action = STOP
    elif state.steps >= state.spec.max_steps:
        state.terminated = True
        state.terminal_action = action
    return state


def euclidean_to_goal(gridmap: GridMap, pose: Pose, goal: tuple[int, int]) -> float:
    return math.hypot(goal[0] - pose.x, goal[1] - pose.y) * gridmap.cell_size


def is_success(gridmap: GridMap, state: EpisodeState) -> bool:
    """True iff the terminal action was STOP and the stop cell sits within
    2 agent widths (euclidean) of the goal."""
    if not state.terminated:
        raise EpisodeTerminated("episode not yet terminated")
    if state.terminal_action != STOP:
        return False
    radius = SUCCESS_RADIUS_CELLS * gridmap.cell_size
    return euclidean_to_goal(gridmap, state.pose, state.spec.goal) < radius


def sample_episode(gridmap: GridMap, rng_seed: int, min_geodesic: float,
                   max_steps: int = DEFAULT_MAX_STEPS) -> EpisodeSpec:
    """Uniform start/goal among connected free pairs with geodesic >= min_geodesic."""
    rng = np.random.default_rng(rng_seed)
    cells = gridmap.free_cells()
    for _ in range(SAMPLE_ATTEMPTS):
        si = int(rng.integers(len(cells)))
        gi = int(rng.integers(len(cells)))
        heading = HEADINGS[int(rng.integers(4))]
        start_cell, goal = cells[si], cells[gi]
        if start_cell == goal:
            continue
        d = geodesic_distance(gridmap, start_cell, goal)
        if not math.isfinite(d) or d < min_geodesic:
            continue
        return EpisodeSpec(
            map_id=gridmap.map_id,
            start=Pose(start_cell[0], start_cell[1], heading),
            goal=goal,
            shortest_path_length=d,
            max_steps=max_steps,
            seed=rng_seed,
        )
    raise NoFeasiblePair(
        f"no start/goal pair with geodesic >= {min_geodesic} after {SAMPLE_ATTEMPTS} attempts")
