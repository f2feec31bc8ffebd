"""The frozen navigation agent.

Two kinds share one interface: a scripted greedy-bearing controller (the
default baseline, deterministic and deliberately imperfect in concave
geometry) and a small learned policy. Both run an encoder MLP over the
observation so the help policy always receives the same feature vector
the agent saw.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import env as E
from . import nnet

SCRIPTED = "scripted"
LEARNED = "learned"

DEFAULT_FEATURE_WIDTH = 64
OBS_DIST_SCALE = 5.0  # meters; soft input normalization for the encoder
AGENT_FORMAT_VERSION = 1


class DivergedTraining(RuntimeError):
    """Mean return went non-finite during pre-training."""


@dataclass
class AgentPolicy:
    kind: str
    encoder: nnet.MlpParams          # (num_rays + 2) -> feature_width
    head: nnet.MlpParams | None      # feature_width -> 4 action logits, learned only
    frozen: bool = True
    num_rays: int = E.DEFAULT_NUM_RAYS
    max_range_cells: int = E.DEFAULT_MAX_RANGE_CELLS
    cell_size: float = E.DEFAULT_CELL_SIZE

    @property
    def feature_width(self) -> int:
        return self.encoder.layer_sizes[-1]

    @property
    def max_range(self) -> float:
        return self.max_range_cells * self.cell_size


def encode_obs(policy: AgentPolicy, obs: E.Observation) -> np.ndarray:
    """Normalized encoder input: rays scaled to [0,1], then distance and
    relative heading scaled to order one."""
    vec = np.empty(policy.num_rays + 2, dtype=np.float64)
    vec[:policy.num_rays] = obs.rays / policy.max_range
    vec[policy.num_rays] = obs.pointgoal.distance / OBS_DIST_SCALE
    vec[policy.num_rays + 1] = obs.pointgoal.relative_heading / math.pi
    return vec


def make_scripted_agent(num_rays: int = E.DEFAULT_NUM_RAYS,
                        feature_width: int = DEFAULT_FEATURE_WIDTH,
                        max_range_cells: int = E.DEFAULT_MAX_RANGE_CELLS,
                        cell_size: float = E.DEFAULT_CELL_SIZE,
                        seed: int = 0) -> AgentPolicy:
    """Scripted controller with a fixed seeded random encoder."""
    rng = np.random.default_rng(seed)
    encoder = nnet.init_params([num_rays + 2, feature_width, feature_width], rng)
    return AgentPolicy(kind=SCRIPTED, encoder=encoder, head=None, frozen=True,
                       num_rays=num_rays, max_range_cells=max_range_cells,
                       cell_size=cell_size)


def make_learned_agent(num_rays: int = E.DEFAULT_NUM_RAYS,
                       feature_width: int = DEFAULT_FEATURE_WIDTH,
                       max_range_cells: int = E.DEFAULT_MAX_RANGE_CELLS,
                       cell_size: float = E.DEFAULT_CELL_SIZE,
                       seed: int = 0) -> AgentPolicy:
    rng = np.random.default_rng(seed)
    encoder = nnet.init_params([num_rays + 2, feature_width, feature_width], rng)
    head = nnet.init_params([feature_width, 64, len(E.ACTIONS)], rng)
    return AgentPolicy(kind=LEARNED, encoder=encoder, head=head, frozen=True,
                       num_rays=num_rays, max_range_cells=max_range_cells,
                       cell_size=cell_size)


def scripted_action(obs: E.Observation, cell_size: float) -> str:
    """Greedy bearing rule with wall-aware turning.

    Stops inside the success radius; otherwise heads toward the goal,
    turning along walls when the wanted direction is blocked. No memory,
    so concave pockets trap it by design.
    """
    rays = obs.rays
    n = len(rays)
    q = n // 4
    front, left, right = rays[0], rays[q], rays[-q]
    open_ = cell_size * 1.5  # neighbor cell free iff ray reaches past it
    d = obs.pointgoal.distance
    rel = obs.pointgoal.relative_heading
    if d < E.SUCCESS_RADIUS_CELLS * cell_size:
        return E.STOP
    if abs(rel) > 3 * math.pi / 4:
        return E.TURN_LEFT if rel > 0 else E.TURN_RIGHT
    if abs(rel) <= math.pi / 4:
        if front > open_:
            return E.FORWARD
        return E.TURN_LEFT if left >= right else E.TURN_RIGHT
    # goal off to one side
    if rel > 0:
        if left > open_:
            return E.TURN_LEFT
    else:
        if right > open_:
            return E.TURN_RIGHT
    if front > open_:
        return E.FORWARD
    return E.TURN_LEFT if left >= right else E.TURN_RIGHT


def agent_act(policy: AgentPolicy, obs: E.Observation,
              rng: np.random.Generator | None = None) -> tuple[str, np.ndarray]:
    """Pick an action and return it with the shared encoder features.

    The scripted agent ignores rng. The learned agent samples from its head
    when rng is given (pre-training) and takes the argmax otherwise.
    """
    features, _ = nnet.mlp_forward(policy.encoder, encode_obs(policy, obs))
    if policy.kind == SCRIPTED:
        return scripted_action(obs, policy.cell_size), features
    logits, _ = nnet.mlp_forward(policy.head, features)
    if rng is None:
        action_i = int(np.argmax(logits))
    else:
        p = nnet.softmax(logits)
        action_i = int(rng.choice(len(E.ACTIONS), p=p))
    return E.ACTIONS[action_i], features


def pretrain_agent(maps: list[E.GridMap], steps: int, seed: int = 0,
                   feature_width: int = DEFAULT_FEATURE_WIDTH,
                   min_geodesic: float = 0.4,
                   log_rows: list | None = None) -> AgentPolicy:
    """Train a learned agent with the shared optimizer core on dense
    progress reward, then freeze it. steps = 0 returns the frozen init."""
    if not maps:
        raise ValueError("need at least one training map")
    from .ppo import pretrain_agent_ppo  # lazy: ppo imports this module's types
    policy = make_learned_agent(num_rays=E.DEFAULT_NUM_RAYS, feature_width=feature_width,
                                cell_size=maps[0].cell_size, seed=seed)
    if steps <= 0:
        return policy
    policy = pretrain_agent_ppo(policy, maps, steps, seed=seed,
                                min_geodesic=min_geodesic, log_rows=log_rows)
    policy.frozen = True
    return policy


def agent_hash(policy: AgentPolicy) -> str:
    parts = [nnet.params_hash(policy.encoder)]
    if policy.head is not None:
        parts.append(nnet.params_hash(policy.head))
    return "-".join(parts)


def agent_to_dict(policy: AgentPolicy) -> dict:
    return {
        "format_version": AGENT_FORMAT_VERSION,
        "kind": policy.kind,
        "frozen": policy.frozen,
        "num_rays": policy.num_rays,
        "max_range_cells": policy.max_range_cells,
        "cell_size": policy.cell_size,
        "encoder": nnet.params_to_dict(policy.encoder),
        "head": nnet.params_to_dict(policy.head) if policy.head is not None else None,
    }


def agent_from_dict(d: dict) -> AgentPolicy:
    return AgentPolicy(
        kind=d["kind"],
        encoder=nnet.params_from_dict(d["encoder"]),
        head=nnet.params_from_dict(d["head"]) if d.get("head") else None,
        frozen=bool(d.get("frozen", True)),
        num_rays=int(d.get("num_rays", E.DEFAULT_NUM_RAYS)),
        max_range_cells=int(d.get("max_range_cells", E.DEFAULT_MAX_RANGE_CELLS)),
        cell_size=float(d.get("cell_size", E.DEFAULT_CELL_SIZE)),
    )


def save_agent(policy: AgentPolicy, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(agent_to_dict(policy), f)


def load_agent(path) -> AgentPolicy:
    with open(path, encoding="utf-8") as f:
        return agent_from_dict(json.load(f))
