"""Intervention sources.

The simulated expert replans a shortest path from the current pose at every
help request and hands back at most M actions. The noisy variant corrupts
that plan step by step, which is what makes long intervention budgets
wasteful. Live humans fulfill the same contract through the session server.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import env as E

SIM_EXPERT = "sim"
NOISY_EXPERT = "noisy"
LIVE_HUMAN = "live"

DEFAULT_BUDGET = 25
DEFAULT_NOISE_RATE = 0.2

_NON_STOP = (E.FORWARD, E.TURN_LEFT, E.TURN_RIGHT)


class Unreachable(RuntimeError):
    """No path from the pose to the goal."""


@dataclass(frozen=True)
class InterventionBudget:
    max_steps_per_request: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.max_steps_per_request < 1:
            raise ValueError("budget must allow at least one step")


@dataclass(frozen=True)
class Intervener:
    kind: str = SIM_EXPERT
    noise_rate: float = DEFAULT_NOISE_RATE

    def __post_init__(self):
        if self.kind not in (SIM_EXPERT, NOISY_EXPERT, LIVE_HUMAN):
            raise ValueError(f"bad intervener kind {self.kind!r}")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ValueError("noise_rate must be in [0, 1)")


def _bfs_path(gridmap: E.GridMap, start: tuple[int, int],
              goal: tuple[int, int]) -> list[tuple[int, int]]:
    """Shortest cell path start..goal inclusive. Neighbor expansion order is
    N, E, S, W, which fixes the reconstruction among ties."""
    if start == goal:
        return [start]
    parent: dict[tuple[int, int], tuple[int, int]] = {start: start}
    from collections import deque
    q = deque([start])
    while q:
        cx, cy = q.popleft()
        for dx, dy in ((0, -1), (1, 0), (0, 1), (-1, 0)):
            nxt = (cx + dx, cy + dy)
            if not gridmap.is_free(*nxt) or nxt in parent:
                continue
            parent[nxt] = (cx, cy)
            if nxt == goal:
                path = [nxt]
                while path[-1] != start:
                    path.append(parent[path[-1]])
                return path[::-1]
            q.append(nxt)
    raise Unreachable(f"no path {start} -> {goal} on {gridmap.map_id}")


def _turns_to(heading: str, wanted: str) -> list[str]:
    ccw = ("E", "N", "W", "S")
    delta = (ccw.index(wanted) - ccw.index(heading)) % 4
    if delta == 0:
        return []
    if delta == 1:
        return [E.TURN_LEFT]
    if delta == 3:
        return [E.TURN_RIGHT]
    return [E.TURN_LEFT, E.TURN_LEFT]  # 180 degrees, left pair by convention


_DIR_OF = {(0, -1): "N", (1, 0): "E", (0, 1): "S", (-1, 0): "W"}


def shortest_path_actions(gridmap: E.GridMap, pose: E.Pose,
                          goal: tuple[int, int]) -> list[str]:
    """Turns + forwards along a shortest path to the goal cell, then STOP."""
    path = _bfs_path(gridmap, pose.cell, (int(goal[0]), int(goal[1])))
    actions: list[str] = []
    heading = pose.heading
    for (ax, ay), (bx, by) in zip(path[:-1], path[1:]):
        wanted = _DIR_OF[(bx - ax, by - ay)]
        actions.extend(_turns_to(heading, wanted))
        heading = wanted
        actions.append(E.FORWARD)
    actions.append(E.STOP)
    return actions


def provide_intervention(intervener: Intervener, gridmap: E.GridMap,
                         state: E.EpisodeState, budget: InterventionBudget,
                         rng: np.random.Generator | None = None) -> list[str]:
    """At most M actions toward the goal from the current pose.

    The terminal STOP is included only when the plan fits inside the budget.
    The noisy expert substitutes a uniform random non-STOP action at each
    position with probability noise_rate.
    """
    if intervener.kind == LIVE_HUMAN:
        raise ValueError("live interventions flow through the session server")
    plan = shortest_path_actions(gridmap, state.pose, state.spec.goal)
    actions = plan[:budget.max_steps_per_request]
    if intervener.kind == NOISY_EXPERT and intervener.noise_rate > 0:
        if rng is None:
            raise ValueError("noisy expert needs an rng")
        actions = [
            _NON_STOP[int(rng.integers(len(_NON_STOP)))]
            if rng.random() < intervener.noise_rate else a
            for a in actions
        ]
    return actions


@dataclass
class ScriptedOperator:
    """Stand-in demonstrator for unattended demo recording.

    Watches the live episode and interrupts once the best geodesic distance
    has not improved for stall_window steps; the takeover then follows the
    expert plan for up to max_takeover steps.
    """
    stall_window: int = 8
    max_takeover: int = DEFAULT_BUDGET
    _best: float | None = None
    _stale: int = 0

    def reset(self) -> None:
        self._best = None
        self._stale = 0

    def wants_interrupt(self, state: E.EpisodeState) -> bool:
        d = state.distance_to_goal
        if self._best is None or d < self._best - 1e-12:
            self._best = d
            self._stale = 0
            return False
        self._stale += 1
        return self._stale >= self.stall_window

    def takeover_actions(self, gridmap: E.GridMap, state: E.EpisodeState) -> list[str]:
        self._best = None
        self._stale = 0
        plan = shortest_path_actions(gridmap, state.pose, state.spec.goal)
        return plan[:self.max_takeover]
