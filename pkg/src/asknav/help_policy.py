"""The gating policy: PROCEED autonomously or ASK for intervention.

Supports three feature variants. ENCODER feeds the agent's shared encoder
features alone; POINT_PATH feeds the instantaneous change in goal distance,
the current relative heading, and the path length since the last help
request; ALL concatenates everything plus the time since the last request.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import nnet

ENCODER = "encoder"
POINT_PATH = "point_path"
ALL = "all"
VARIANTS = (ENCODER, POINT_PATH, ALL)

PROCEED = "PROCEED"
ASK = "ASK"
ASK_INDEX = 1

SAMPLE = "SAMPLE"
ARGMAX = "ARGMAX"

HELP_FORMAT_VERSION = 1


class VariantShapeMismatch(ValueError):
    """Feature layout does not match the policy's variant."""


def variant_input_width(variant: str, feature_width: int) -> int:
    if variant == ENCODER:
        return feature_width
    if variant == POINT_PATH:
        return 3
    if variant == ALL:
        return feature_width + 4
    raise VariantShapeMismatch(f"unknown variant {variant!r}")


@dataclass
class HelpFeatures:
    variant: str
    encoder_features: np.ndarray | None
    pointgoal_diff: np.ndarray        # (prev distance - current distance, relative heading)
    path_len_feature: float           # path cells since last help request / max_steps
    time_since_help: float            # steps since last help request / max_steps

    def vector(self) -> np.ndarray:
        scalars = np.array([self.path_len_feature, self.time_since_help])
        if self.variant == ENCODER:
            return np.asarray(self.encoder_features, dtype=np.float64)
        if self.variant == POINT_PATH:
            return np.concatenate([self.pointgoal_diff, scalars[:1]])
        if self.variant == ALL:
            return np.concatenate([self.encoder_features, self.pointgoal_diff, scalars])
        raise VariantShapeMismatch(f"unknown variant {self.variant!r}")


@dataclass
class HelpPolicy:
    net: nnet.MlpParams        # [input per variant, 64, 64, 2]
    variant: str
    ask_threshold: float = 0.5

    @property
    def input_width(self) -> int:
        return self.net.layer_sizes[0]


def init_help_policy(variant: str, feature_width: int = 64, hidden: int = 64,
                     seed: int = 0) -> HelpPolicy:
    rng = np.random.default_rng(seed)
    width = variant_input_width(variant, feature_width)
    net = nnet.init_params([width, hidden, hidden, 2], rng)
    return HelpPolicy(net=net, variant=variant)


def assemble_features(variant: str,
                      encoder_features: np.ndarray | None,
                      pointgoal_now: tuple[float, float],
                      pointgoal_prev: tuple[float, float] | None,
                      steps_since_help: int,
                      path_len_since_help: float,
                      max_steps: int) -> HelpFeatures:
    """Build the per-step feature bundle.

    pointgoal tuples are (euclidean distance, relative heading); the first
    step has no previous pointgoal and gets a zero distance difference.
    path_len_since_help is measured in cells of executed translation.
    """
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    dist_now, rel_now = pointgoal_now
    if pointgoal_prev is None:
        diff = 0.0
    else:
        diff = pointgoal_prev[0] - dist_now
    values = [dist_now, diff, rel_now, float(steps_since_help), float(path_len_since_help)]
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"non-finite feature input: {values}")
    if variant not in VARIANTS:
        raise VariantShapeMismatch(f"unknown variant {variant!r}")
    if variant != POINT_PATH and encoder_features is None:
        raise VariantShapeMismatch(f"variant {variant} needs encoder features")
    return HelpFeatures(
        variant=variant,
        encoder_features=None if variant == POINT_PATH else np.asarray(encoder_features),
        pointgoal_diff=np.array([diff, rel_now], dtype=np.float64),
        path_len_feature=min(1.0, max(0.0, path_len_since_help / max_steps)),
        time_since_help=min(1.0, max(0.0, steps_since_help / max_steps)),
    )


def ask_probability(policy: HelpPolicy, features: HelpFeatures) -> float:
    vec = features.vector()
    if features.variant != policy.variant or vec.shape[0] != policy.input_width:
        raise VariantShapeMismatch(
            f"features {features.variant}/{vec.shape[0]} vs policy "
            f"{policy.variant}/{policy.input_width}")
    logits, _ = nnet.mlp_forward(policy.net, vec)
    return float(nnet.softmax(logits)[ASK_INDEX])


def decide_help(policy: HelpPolicy, features: HelpFeatures, mode: str = ARGMAX,
                rng: np.random.Generator | None = None) -> tuple[str, float]:
    """Returns (decision, ask probability). SAMPLE draws from the softmax;
    ARGMAX asks iff the probability exceeds the threshold."""
    p_ask = ask_probability(policy, features)
    if mode == SAMPLE:
        if rng is None:
            raise ValueError("SAMPLE mode needs an rng")
        decision = ASK if rng.random() < p_ask else PROCEED
    elif mode == ARGMAX:
        decision = ASK if p_ask > policy.ask_threshold else PROCEED
    else:
        raise ValueError(f"bad mode {mode!r}")
    return decision, p_ask


def help_policy_to_dict(policy: HelpPolicy) -> dict:
    return {
        "format_version": HELP_FORMAT_VERSION,
        "variant": policy.variant,
        "ask_threshold": policy.ask_threshold,
        "net": nnet.params_to_dict(policy.net),
    }


def help_policy_from_dict(d: dict) -> HelpPolicy:
    return HelpPolicy(net=nnet.params_from_dict(d["net"]), variant=d["variant"],
                      ask_threshold=float(d.get("ask_threshold", 0.5)))


def save_help_policy(policy: HelpPolicy, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(help_policy_to_dict(policy), f)


def load_help_policy(path) -> HelpPolicy:
    with open(path, encoding="utf-8") as f:
        return help_policy_from_dict(json.load(f))
