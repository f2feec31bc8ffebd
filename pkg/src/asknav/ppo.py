"""Proximal policy optimization, from scratch on the dense kernel.

Trains the help policy against a simulated expert (and doubles as the
agent pre-trainer). Rollouts run complete episodes; each gate decision is
one optimization sample whose reward accumulates everything the decision
caused: the agent step, or the whole intervention plus the mandatory
follow-up step. Advantages come from generalized advantage estimation per
episode and are normalized across the update batch.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import agent as A
from . import env as E
from . import expert as X
from . import help_policy as H
from . import nnet
from . import rewards as R
from .runner import EpisodeDriver


class DivergedTraining(RuntimeError):
    """A loss or return went non-finite."""


class FrozenViolation(RuntimeError):
    """Agent weights changed during help-policy training."""


class LengthMismatch(ValueError):
    """GAE inputs disagree in length."""


@dataclass
class PpoConfig:
    total_timesteps: int = 100_000
    rollout_length: int = 1024
    clip_epsilon: float = 0.2
    gae_lambda: float = 0.95
    gamma: float = 0.99
    epochs_per_update: int = 4
    minibatch_size: int = 256
    entropy_coeff: float = 0.01
    learning_rate: float = 3e-4
    value_hidden: int = 64

    def __post_init__(self):
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip_epsilon must be in (0, 1)")
        for name in ("total_timesteps", "rollout_length", "epochs_per_update",
                     "minibatch_size"):
            if getattr(self, name) < 0 or (name != "total_timesteps" and getattr(self, name) == 0):
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpisodePool:
    """Training episode source: named maps plus episode specs."""
    maps: dict[str, E.GridMap]
    specs: list[E.EpisodeSpec]

    def sample(self, rng: np.random.Generator) -> tuple[E.GridMap, E.EpisodeSpec]:
        spec = self.specs[int(rng.integers(len(self.specs)))]
        return self.maps[spec.map_id], spec


def compute_gae(rewards, values, gamma: float, gae_lambda: float):
    """Per-episode advantage/return recursion with terminal value 0.
    Returns raw (unnormalized) advantages."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape:
        raise LengthMismatch(f"rewards {rewards.shape} vs values {values.shape}")
    n = len(rewards)
    adv = np.zeros(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        next_v = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + gamma * next_v - values[t]
        last = delta + gamma * gae_lambda * last
        adv[t] = last
    return adv, adv + values


# -- losses and manual gradients -------------------------------------------


def policy_loss_and_grads(net: nnet.MlpParams, xs: np.ndarray, actions: np.ndarray,
                          old_logp: np.ndarray, advantages: np.ndarray,
                          clip_epsilon: float, entropy_coeff: float,
                          ) -> tuple[float, nnet.Grads, float]:
    """Clipped-surrogate loss with entropy bonus; exact gradients.

    Returns (loss, grads, mean entropy).
    """
    n = len(xs)
    logits, cache = nnet.mlp_forward(net, xs)
    logp = nnet.log_softmax(logits)
    p = np.exp(logp)
    lp_act = logp[np.arange(n), actions]
    ratio = np.exp(lp_act - old_logp)
    surr1 = ratio * advantages
    clipped = np.clip(ratio, 1 - clip_epsilon, 1 + clip_epsilon)
    surr2 = clipped * advantages
    obj = np.minimum(surr1, surr2)
    entropy = -(p * logp).sum(axis=1)
    loss = float(-obj.mean() - entropy_coeff * entropy.mean())
    # d obj / d lp_act: ratio*adv where the unclipped branch is active, else 0
    unclipped = surr1 <= surr2
    w = np.where(unclipped, ratio * advantages, 0.0)
    onehot = np.zeros_like(p)
    onehot[np.arange(n), actions] = 1.0
    g = (-w[:, None] * (onehot - p)
         + entropy_coeff * p * (logp + entropy[:, None])) / n
    grads = nnet.mlp_backward(net, cache, g)
    return loss, grads, float(entropy.mean())


def value_loss_and_grads(net: nnet.MlpParams, xs: np.ndarray,
                         returns: np.ndarray) -> tuple[float, nnet.Grads]:
    """Half mean squared error against the empirical returns."""
    n = len(xs)
    v, cache = nnet.mlp_forward(net, xs)
    v = v[:, 0]
    err = v - returns
    loss = float(0.5 * (err ** 2).mean())
    g = np.zeros((n, 1))
    g[:, 0] = err / n
    grads = nnet.mlp_backward(net, cache, g)
    return loss, grads


# -- help-policy training ----------------------------------------------------


@dataclass
class _Rollout:
    vectors: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    logps: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)


def _collect_help_episode(pool: EpisodePool, agent_policy: A.AgentPolicy,
                          policy: H.HelpPolicy, value_net: nnet.MlpParams,
                          intervener: X.Intervener, budget: X.InterventionBudget,
                          reward_config: R.RewardConfig,
                          rng: np.random.Generator) -> tuple[_Rollout, int, float]:
    gridmap, spec = pool.sample(rng)
    driver = EpisodeDriver(gridmap, spec, agent_policy, reward_config=reward_config)
    ro = _Rollout()
    while not driver.terminated:
        vec = driver.features(policy.variant).vector()
        logits, _ = nnet.mlp_forward(policy.net, vec)
        logp = nnet.log_softmax(logits)
        p_ask = float(np.exp(logp[H.ASK_INDEX]))
        act = H.ASK_INDEX if rng.random() < p_ask else 0
        value = float(nnet.mlp_forward(value_net, vec)[0][0])
        if act == H.ASK_INDEX:
            driver.begin_request()
            actions = X.provide_intervention(intervener, gridmap, driver.state, budget, rng)
            driver.run_intervention(actions, actor=E.EXPERT, ask_probability=p_ask)
            if not driver.terminated:
                driver.act_agent()
        else:
            driver.act_agent(ask_probability=p_ask)
        ro.vectors.append(vec)
        ro.actions.append(act)
        ro.logps.append(float(logp[act]))
        ro.values.append(value)
        ro.rewards.append(driver.take_reward())
    return ro, driver.state.steps, float(sum(ro.rewards))


def ppo_train(pool: EpisodePool, agent_policy: A.AgentPolicy, policy: H.HelpPolicy,
              intervener: X.Intervener, budget: X.InterventionBudget,
              reward_config: R.RewardConfig = R.RewardConfig(),
              ppo_config: PpoConfig = PpoConfig(), seed: int = 0,
              log_path=None) -> tuple[H.HelpPolicy, list[dict]]:
    """Train the gating policy; the agent stays byte-identical throughout."""
    if not agent_policy.frozen:
        raise FrozenViolation("agent must be frozen before help-policy training")
    cfg = ppo_config
    if cfg.total_timesteps <= 0:
        return policy, []
    agent_before = A.agent_hash(agent_policy)
    rng = np.random.default_rng(seed)
    net = nnet.clone_params(policy.net)
    value_net = nnet.init_params([policy.input_width, cfg.value_hidden, cfg.value_hidden, 1], rng)
    opt_p = nnet.init_opt_state(net, learning_rate=cfg.learning_rate)
    opt_v = nnet.init_opt_state(value_net, learning_rate=cfg.learning_rate)
    work = H.HelpPolicy(net=net, variant=policy.variant, ask_threshold=policy.ask_threshold)
    log_rows: list[dict] = []
    steps_done = 0
    update = 0
    while steps_done < cfg.total_timesteps:
        rollouts: list[_Rollout] = []
        batch_steps = 0
        returns_log = []
        while batch_steps < cfg.rollout_length:
            ro, ep_steps, total = _collect_help_episode(
                pool, agent_policy, work, value_net, intervener, budget,
                reward_config, rng)
            rollouts.append(ro)
            batch_steps += ep_steps
            returns_log.append(total)
        steps_done += batch_steps
        mean_return = float(np.mean(returns_log))
        if not np.isfinite(mean_return):
            raise DivergedTraining(f"mean return {mean_return} at update {update}")
        xs = np.concatenate([np.asarray(r.vectors) for r in rollouts])
        acts = np.concatenate([np.asarray(r.actions, dtype=np.int64) for r in rollouts])
        old_logp = np.concatenate([np.asarray(r.logps) for r in rollouts])
        advs, rets = [], []
        for r in rollouts:
            a, ret = compute_gae(r.rewards, r.values, cfg.gamma, cfg.gae_lambda)
            advs.append(a)
            rets.append(ret)
        adv = np.concatenate(advs)
        ret = np.concatenate(rets)
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        n = len(xs)
        p_losses, v_losses = [], []
        for _ in range(cfg.epochs_per_update):
            perm = rng.permutation(n)
            for lo in range(0, n, cfg.minibatch_size):
                idx = perm[lo:lo + cfg.minibatch_size]
                loss_p, g_p, _ = policy_loss_and_grads(
                    net, xs[idx], acts[idx], old_logp[idx], adv[idx],
                    cfg.clip_epsilon, cfg.entropy_coeff)
                net, opt_p = nnet.adam_step(net, g_p, opt_p)
                loss_v, g_v = value_loss_and_grads(value_net, xs[idx], ret[idx])
                value_net, opt_v = nnet.adam_step(value_net, g_v, opt_v)
                if not (np.isfinite(loss_p) and np.isfinite(loss_v)):
                    raise DivergedTraining(f"non-finite loss at update {update}")
                p_losses.append(loss_p)
                v_losses.append(loss_v)
            work.net = net
        update += 1
        log_rows.append({
            "update": update,
            "steps": steps_done,
            "mean_return": mean_return,
            "ask_rate": float(np.mean(acts == H.ASK_INDEX)),
            "loss_policy": float(np.mean(p_losses)),
            "loss_value": float(np.mean(v_losses)),
        })
    if A.agent_hash(agent_policy) != agent_before:
        raise FrozenViolation("agent weights changed during ppo_train")
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as f:
            for row in log_rows:
                f.write(json.dumps(row) + "\n")
    return H.HelpPolicy(net=net, variant=policy.variant,
                        ask_threshold=policy.ask_threshold), log_rows


# -- agent pre-training -------------------------------------------------------

AGENT_SUCCESS_BONUS = 5.0
AGENT_STEP_PENALTY = 0.05


def _collect_agent_episode(maps: list[E.GridMap], encoder: nnet.MlpParams,
                           head: nnet.MlpParams, value_net: nnet.MlpParams,
                           agent_policy: A.AgentPolicy, min_geodesic: float,
                           rng: np.random.Generator):
    gridmap = maps[int(rng.integers(len(maps)))]
    spec = E.sample_episode(gridmap, int(rng.integers(2 ** 31)), min_geodesic)
    driver = EpisodeDriver(gridmap, spec, agent_policy)
    obs_vecs, acts, logps, values, rews = [], [], [], [], []
    prev_d = driver.state.distance_to_goal
    while not driver.terminated:
        obs = driver.observe()
        vec = A.encode_obs(agent_policy, obs)
        feats, _ = nnet.mlp_forward(encoder, vec)
        logits, _ = nnet.mlp_forward(head, feats)
        logp = nnet.log_softmax(logits)
        a = int(rng.choice(len(E.ACTIONS), p=np.exp(logp)))
        value = float(nnet.mlp_forward(value_net, vec)[0][0])
        driver.step_agent_action(E.ACTIONS[a])
        d = driver.state.distance_to_goal
        r = (prev_d - d) / gridmap.cell_size - AGENT_STEP_PENALTY
        prev_d = d
        if driver.terminated and E.is_success(gridmap, driver.state):
            r += AGENT_SUCCESS_BONUS
        obs_vecs.append(vec)
        acts.append(a)
        logps.append(float(logp[a]))
        values.append(value)
        rews.append(r)
    return obs_vecs, acts, logps, values, rews, driver.state.steps


def pretrain_agent_ppo(policy: A.AgentPolicy, maps: list[E.GridMap], steps: int,
                       seed: int = 0, min_geodesic: float = 0.4,
                       cfg: PpoConfig | None = None,
                       log_rows: list | None = None) -> A.AgentPolicy:
    """PPO over the learned agent's encoder and head on dense progress
    reward. The value net reads the raw observation so its input stays
    stationary while the encoder trains."""
    cfg = cfg or PpoConfig(total_timesteps=steps)
    rng = np.random.default_rng(seed)
    encoder = nnet.clone_params(policy.encoder)
    head = nnet.clone_params(policy.head)
    in_width = policy.num_rays + 2
    value_net = nnet.init_params([in_width, cfg.value_hidden, cfg.value_hidden, 1], rng)
    opt_e = nnet.init_opt_state(encoder, learning_rate=cfg.learning_rate)
    opt_h = nnet.init_opt_state(head, learning_rate=cfg.learning_rate)
    opt_v = nnet.init_opt_state(value_net, learning_rate=cfg.learning_rate)
    steps_done = 0
    update = 0
    while steps_done < steps:
        data = []
        batch_steps = 0
        ep_returns = []
        live = A.AgentPolicy(kind=A.LEARNED, encoder=encoder, head=head, frozen=True,
                             num_rays=policy.num_rays, max_range_cells=policy.max_range_cells,
                             cell_size=policy.cell_size)
        while batch_steps < cfg.rollout_length:
            ov, ac, lp, va, rw, n = _collect_agent_episode(
                maps, encoder, head, value_net, live, min_geodesic, rng)
            data.append((ov, ac, lp, va, rw))
            batch_steps += n
            ep_returns.append(sum(rw))
        steps_done += batch_steps
        mean_return = float(np.mean(ep_returns))
        if not np.isfinite(mean_return):
            raise A.DivergedTraining(f"mean return {mean_return} at update {update}")
        xs = np.concatenate([np.asarray(d[0]) for d in data])
        acts = np.concatenate([np.asarray(d[1], dtype=np.int64) for d in data])
        old_logp = np.concatenate([np.asarray(d[2]) for d in data])
        advs, rets = [], []
        for _, _, _, va, rw in data:
            a, ret = compute_gae(rw, va, cfg.gamma, cfg.gae_lambda)
            advs.append(a)
            rets.append(ret)
        adv = np.concatenate(advs)
        ret = np.concatenate(rets)
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        n = len(xs)
        for _ in range(cfg.epochs_per_update):
            perm = rng.permutation(n)
            for lo in range(0, n, cfg.minibatch_size):
                idx = perm[lo:lo + cfg.minibatch_size]
                bx, ba, blp, badv = xs[idx], acts[idx], old_logp[idx], adv[idx]
                m = len(bx)
                feats, cache_e = nnet.mlp_forward(encoder, bx)
                logits, cache_h = nnet.mlp_forward(head, feats)
                logp = nnet.log_softmax(logits)
                p = np.exp(logp)
                lp_act = logp[np.arange(m), ba]
                ratio = np.exp(lp_act - blp)
                surr1 = ratio * badv
                surr2 = np.clip(ratio, 1 - cfg.clip_epsilon, 1 + cfg.clip_epsilon) * badv
                unclipped = surr1 <= surr2
                w = np.where(unclipped, ratio * badv, 0.0)
                onehot = np.zeros_like(p)
                onehot[np.arange(m), ba] = 1.0
                entropy = -(p * logp).sum(axis=1)
                g = (-w[:, None] * (onehot - p)
                     + cfg.entropy_coeff * p * (logp + entropy[:, None])) / m
                g_head, g_feats = nnet.mlp_backward_with_input(head, cache_h, g)
                g_enc = nnet.mlp_backward(encoder, cache_e, g_feats)
                head, opt_h = nnet.adam_step(head, g_head, opt_h)
                encoder, opt_e = nnet.adam_step(encoder, g_enc, opt_e)
                loss_v, g_v = value_loss_and_grads(value_net, bx, ret[idx])
                value_net, opt_v = nnet.adam_step(value_net, g_v, opt_v)
                if not np.isfinite(loss_v):
                    raise A.DivergedTraining(f"non-finite value loss at update {update}")
        update += 1
        if log_rows is not None:
            log_rows.append({"update": update, "steps": steps_done,
                             "mean_return": mean_return})
    return A.AgentPolicy(kind=A.LEARNED, encoder=encoder, head=head, frozen=True,
                         num_rays=policy.num_rays, max_range_cells=policy.max_range_cells,
                         cell_size=policy.cell_size)
