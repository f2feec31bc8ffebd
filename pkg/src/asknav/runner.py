"""Episode runner: wires the environment, agent, help policy, and
interveners into one control loop and records traces.

One driver serves batch evaluation, PPO rollout collection, and the live
session server, so every consumer sees identical episode mechanics. After
an intervention ends, the agent always executes at least one step before
the gate is consulted again; this keeps every contiguous non-agent run
within the per-request budget.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import agent as A
from . import env as E
from . import expert as X
from . import help_policy as H
from . import metrics as M
from . import rewards as R
from . import trace as T

ALWAYS_PROCEED = "always_proceed"
ALWAYS_ASK = "always_ask"


@dataclass
class Decision:
    obs: E.Observation
    agent_action: str
    encoder_features: np.ndarray
    features_step: int  # state.steps at computation time


class EpisodeDriver:
    """Owns one live episode: counters, feature inputs, reward increments,
    and the trace."""

    def __init__(self, gridmap: E.GridMap, spec: E.EpisodeSpec, agent_policy: A.AgentPolicy,
                 writer: T.TraceWriter | None = None,
                 reward_config: R.RewardConfig | None = None):
        self.map = gridmap
        self.spec = spec
        self.agent = agent_policy
        self.writer = writer
        self.reward_config = reward_config
        self.state = E.start_state(gridmap, spec)
        self.requests = 0               # policy asks + operator interrupts
        self.steps_since_help = 0
        self.path_cells_since_help = 0.0
        self._prev_euclid: float | None = None
        self._help_prev = 0.0
        self._pending_reward = 0.0
        self._cached: Decision | None = None

    # -- observation / decision inputs ------------------------------------

    @property
    def terminated(self) -> bool:
        return self.state.terminated

    def observe(self) -> E.Observation:
        return E.observe(self.map, self.state.pose, self.spec.goal,
                         num_rays=self.agent.num_rays,
                         max_range_cells=self.agent.max_range_cells)

    def decision(self) -> Decision:
        if self._cached is not None and self._cached.features_step == self.state.steps:
            return self._cached
        obs = self.observe()
        action, feats = A.agent_act(self.agent, obs)
        self._cached = Decision(obs=obs, agent_action=action, encoder_features=feats,
                                features_step=self.state.steps)
        return self._cached

    def features(self, variant: str) -> H.HelpFeatures:
        d = self.decision()
        pg = d.obs.pointgoal
        prev = None if self._prev_euclid is None else (self._prev_euclid, 0.0)
        return H.assemble_features(
            variant=variant,
            encoder_features=d.encoder_features,
            pointgoal_now=(pg.distance, pg.relative_heading),
            pointgoal_prev=prev,
            steps_since_help=self.steps_since_help,
            path_len_since_help=self.path_cells_since_help,
            max_steps=self.spec.max_steps,
        )

    # -- step execution ----------------------------------------------------

    def _execute(self, action: str, actor: str, help_requested: bool, interrupt: bool,
                 ask_probability: float | None, fallback: bool = False) -> None:
        pose_before = self.state.pose
        euclid_before = E.euclidean_to_goal(self.map, pose_before, self.spec.goal)
        path_before = self.state.path_length
        index = self.state.steps
        E.step(self.map, self.state, action, actor)
        self._prev_euclid = euclid_before
        self.steps_since_help += 1
        self.path_cells_since_help += (self.state.path_length - path_before) / self.map.cell_size
        if self.writer is not None:
            self.writer.append_step(T.StepRecord(
                index=index, pose_before=pose_before, action=action, actor=actor,
                help_requested=help_requested, interrupt=interrupt,
                distance_to_goal=self.state.distance_to_goal,
                ask_probability=ask_probability, fallback=fallback))
        if self.reward_config is not None:
            h = R.help_reward(self.state.r_nav_history, self.state.C_r, self.state.c_p,
                              self.reward_config)
            self._pending_reward += h - self._help_prev
            self._help_prev = h
            if self.state.terminated:
                res = self.result()
                self._pending_reward += (
                    res.spl - self.reward_config.lambda_h * res.human_contribution)

    def act_agent(self, ask_probability: float | None = None) -> None:
        d = self.decision()
        self._execute(d.agent_action, E.AGENT, help_requested=False, interrupt=False,
                      ask_probability=ask_probability)

    def step_agent_action(self, action: str, ask_probability: float | None = None) -> None:
        """Execute a given action as the agent (trace replay, learned rollout)."""
        self._execute(action, E.AGENT, help_requested=False, interrupt=False,
                      ask_probability=ask_probability)

    def begin_request(self, interrupt: bool = False) -> None:
        self.requests += 1
        self.state.C_r += 1
        self.steps_since_help = 0
        self.path_cells_since_help = 0.0
        self._interrupt_pending = interrupt

    def step_human(self, action: str, actor: str = E.EXPERT, first: bool = False,
                   ask_probability: float | None = None, fallback: bool = False) -> None:
        self.state.c_p += 1
        interrupt = first and getattr(self, "_interrupt_pending", False)
        self._execute(action, actor, help_requested=first and not interrupt,
                      interrupt=interrupt, ask_probability=ask_probability,
                      fallback=fallback)

    def end_request(self) -> None:
        self.state.c_p = 0
        self._interrupt_pending = False

    def run_intervention(self, actions: list[str], actor: str = E.EXPERT,
                         ask_probability: float | None = None, fallback: bool = False) -> None:
        for j, a in enumerate(actions):
            if self.state.terminated:
                break
            self.step_human(a, actor=actor, first=(j == 0),
                            ask_probability=ask_probability if j == 0 else None,
                            fallback=fallback)
        self.end_request()

    def take_reward(self) -> float:
        r = self._pending_reward
        self._pending_reward = 0.0
        return r

    # -- wrap-up -----------------------------------------------------------

    def result(self, tags: dict[str, str] | None = None) -> M.EpisodeResult:
        s = self.state
        return M.make_result(
            success=E.is_success(self.map, s),
            l=self.spec.shortest_path_length,
            p=s.path_length,
            C_h=s.C_h, C_a=s.C_a, C_r=self.requests,
            tags=tags,
        )

    def finalize(self, tags: dict[str, str] | None = None) -> tuple[T.EpisodeTrace | None, M.EpisodeResult]:
        status = "stop" if self.state.terminal_action == E.STOP else "timeout"
        res = self.result(tags)
        trace = self.writer.finish(status, res) if self.writer is not None else None
        return trace, res


def run_episode(gridmap: E.GridMap, spec: E.EpisodeSpec, agent_policy: A.AgentPolicy,
                help_policy, intervener: X.Intervener, budget: X.InterventionBudget,
                mode: str = H.ARGMAX, seed: int = 0, trace_path=None,
                agent_id: str = "scripted", help_id: str | None = None,
                tags: dict[str, str] | None = None,
                reward_config: R.RewardConfig | None = None,
                ) -> tuple[T.EpisodeTrace, M.EpisodeResult]:
    """Run one episode to termination.

    help_policy is a HelpPolicy, None (fully autonomous), ALWAYS_PROCEED,
    or ALWAYS_ASK. Deterministic per (spec, seed) for sim/noisy interveners.
    """
    if not agent_policy.frozen:
        raise ValueError("agent must be frozen before running evaluation episodes")
    rng = np.random.default_rng(seed)
    if help_id is None:
        help_id = help_policy if isinstance(help_policy, str) else (
            "none" if help_policy is None else f"{help_policy.variant}")
    header = T.make_header(spec, agent_id=agent_id, help_policy_id=help_id,
                           budget=budget.max_steps_per_request, intervener=intervener.kind)
    writer = T.TraceWriter(header, path=trace_path)
    driver = EpisodeDriver(gridmap, spec, agent_policy, writer=writer,
                           reward_config=reward_config)
    gate = help_policy
    while not driver.terminated:
        if gate is None or gate == ALWAYS_PROCEED:
            decision, p = H.PROCEED, None
        elif gate == ALWAYS_ASK:
            decision, p = H.ASK, None
        else:
            decision, p = H.decide_help(gate, driver.features(gate.variant), mode, rng)
        if decision == H.PROCEED:
            driver.act_agent(ask_probability=p)
        else:
            driver.begin_request()
            actions = X.provide_intervention(intervener, gridmap, driver.state, budget, rng)
            driver.run_intervention(actions, actor=E.EXPERT, ask_probability=p)
            if not driver.terminated:
                driver.act_agent()  # mandatory autonomous step between requests
    trace, res = driver.finalize(tags)
    return trace, res


def autonomous_success(gridmap: E.GridMap, spec: E.EpisodeSpec,
                       agent_policy: A.AgentPolicy) -> bool:
    """Cheap check: does the bare agent solve this episode?"""
    _, res = run_episode(gridmap, spec, agent_policy, None,
                         X.Intervener(X.SIM_EXPERT), X.InterventionBudget(1))
    return bool(res.success)
