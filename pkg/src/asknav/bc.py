"""Behavioral cloning for the help policy.

Demonstration traces mark operator takeovers with an interrupt flag; those
decision points become ASK labels, ordinary agent steps become PROCEED, and
the steps executed under human control are dropped. Training is a few-shot
affair: three epochs by default, with the rare ASK class upweighted.
"""
from __future__ import annotations

import numpy as np

from . import agent as A
from . import env as E
from . import help_policy as H
from . import nnet
from . import trace as T
from .runner import EpisodeDriver


class EmptyDataset(ValueError):
    """No labeled samples to train on."""


class NoPositiveLabels(ValueError):
    """Dataset holds no ASK label."""


def label_demonstration(trace: T.EpisodeTrace, gridmap: E.GridMap,
                        agent_policy: A.AgentPolicy, variant: str = H.ALL,
                        ) -> list[tuple[H.HelpFeatures, str]]:
    """Replay a demonstration and emit (features, PROCEED|ASK) pairs.

    The features at an interrupt step describe the state the operator saw
    when deciding to take over. Human-control steps after the interrupt are
    excluded from the dataset but still replayed, so the counters feeding
    later features stay faithful.
    """
    if trace.footer is None:
        raise T.MalformedTrace("demonstration trace has no footer")
    driver = EpisodeDriver(gridmap, trace.spec, agent_policy)
    samples: list[tuple[H.HelpFeatures, str]] = []
    in_intervention = False
    for rec in trace.steps:
        if driver.terminated:
            raise T.MalformedTrace(f"step {rec.index} appears after termination")
        if rec.actor == E.AGENT:
            if in_intervention:
                driver.end_request()
                in_intervention = False
            samples.append((driver.features(variant), H.PROCEED))
            driver.step_agent_action(rec.action)
        else:
            if rec.interrupt or rec.help_requested:
                if in_intervention:
                    driver.end_request()
                if rec.interrupt:
                    samples.append((driver.features(variant), H.ASK))
                driver.begin_request(interrupt=rec.interrupt)
                in_intervention = True
            elif not in_intervention:
                raise T.MalformedTrace(
                    f"step {rec.index}: human action without interrupt or request")
            driver.step_human(rec.action, actor=rec.actor, first=False)
    if not driver.terminated:
        raise T.MalformedTrace("demonstration does not reach a terminal state")
    return samples


def bc_train(dataset: list[tuple[H.HelpFeatures, str]], policy: H.HelpPolicy,
             epochs: int = 3, class_weight: float | None = None, seed: int = 0,
             learning_rate: float = 3e-3, batch_size: int = 64,
             ) -> tuple[H.HelpPolicy, list[float]]:
    """Weighted cross-entropy over the labeled dataset.

    class_weight multiplies ASK-sample losses; None derives it from the
    PROCEED:ASK count ratio. Returns the trained policy and per-epoch mean
    losses. epochs = 0 leaves the policy untouched.
    """
    if not dataset:
        raise EmptyDataset("no samples")
    xs = np.stack([f.vector() for f, _ in dataset])
    ys = np.array([1 if label == H.ASK else 0 for _, label in dataset], dtype=np.int64)
    n_ask = int(ys.sum())
    if n_ask == 0:
        raise NoPositiveLabels("dataset holds no ASK label")
    if xs.shape[1] != policy.input_width:
        raise H.VariantShapeMismatch(
            f"dataset width {xs.shape[1]} vs policy input {policy.input_width}")
    if class_weight is None:
        class_weight = (len(ys) - n_ask) / n_ask
    weights = np.where(ys == 1, class_weight, 1.0)
    if epochs <= 0:
        return policy, []
    rng = np.random.default_rng(seed)
    net = nnet.clone_params(policy.net)
    opt = nnet.init_opt_state(net, learning_rate=learning_rate)
    n = len(xs)
    epoch_losses: list[float] = []
    for _ in range(epochs):
        perm = rng.permutation(n)
        losses = []
        for lo in range(0, n, batch_size):
            idx = perm[lo:lo + batch_size]
            bx, by, bw = xs[idx], ys[idx], weights[idx]
            m = len(bx)
            logits, cache = nnet.mlp_forward(net, bx)
            logp = nnet.log_softmax(logits)
            p = np.exp(logp)
            wsum = bw.sum()
            loss = float(-(bw * logp[np.arange(m), by]).sum() / wsum)
            onehot = np.zeros_like(p)
            onehot[np.arange(m), by] = 1.0
            g = bw[:, None] * (p - onehot) / wsum
            grads = nnet.mlp_backward(net, cache, g)
            net, opt = nnet.adam_step(net, grads, opt)
            losses.append(loss)
        epoch_losses.append(float(np.mean(losses)))
    return H.HelpPolicy(net=net, variant=policy.variant,
                        ask_threshold=policy.ask_threshold), epoch_losses
