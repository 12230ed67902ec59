"""Task-aware quality decoder and per-dimension regression heads.

Learnable task tokens are refined in two passes, each pass running a token
self-attention followed by cross-attention against the unified feature map
flattened to spatial tokens. The attention blocks are bare softmax mixing
with no projection weights; all decoder learnables live in the task tokens
and the per-task regression heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NumericalError
from .profiles import TASK_ORDER, ModelProfile
from .tensor import (Parameter, Tensor, concat, matmul, mean_all, narrow,
                     reshape, scaled_dot_attention, softplus, square, transpose)

INIT_STD = 0.02
SCORE_MIN, SCORE_MAX = 1.0, 5.0
SCORE_MID = 3.0  # final-layer bias starts at the rating-scale midpoint
DECODER_PASSES = 2


@dataclass
class ScoreVector:
    """Six quality scores in task order, with clamped reporting values."""

    values: np.ndarray  # raw regression outputs, kept for losses

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.isfinite(self.values).all():
            raise NumericalError("scores must be finite")

    def clamped(self) -> np.ndarray:
        return np.clip(self.values, SCORE_MIN, SCORE_MAX)

    def to_dict(self, tasks=TASK_ORDER) -> dict[str, float]:
        return {name: float(v) for name, v in zip(tasks, self.clamped())}


class Head:
    """Per-task 3-layer perceptron d -> d -> d -> 1 with smooth rectifiers."""

    def __init__(self, name: str, d: int, rng: np.random.Generator):
        from .encoder import glorot_std
        # gain 2 on the hidden layers offsets the rectifier's 1/2 slope
        std = 2.0 * glorot_std(d, d)
        self.w1 = Parameter(f"{name}.w1", rng.normal(0.0, std, (d, d)))
        self.b1 = Parameter(f"{name}.b1", np.zeros((1, d)))
        self.w2 = Parameter(f"{name}.w2", rng.normal(0.0, std, (d, d)))
        self.b2 = Parameter(f"{name}.b2", np.zeros((1, d)))
        self.w3 = Parameter(f"{name}.w3", rng.normal(0.0, glorot_std(d, 1), (d, 1)))
        self.b3 = Parameter(f"{name}.b3", np.full((1, 1), SCORE_MID))

    def __call__(self, token: Tensor) -> Tensor:
        h = softplus(matmul(token, self.w1) + self.b1)
        h = softplus(matmul(h, self.w2) + self.b2)
        return matmul(h, self.w3) + self.b3

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]


class Decoder:
    """Task tokens, two refinement passes, and independent regression heads."""

    def __init__(self, profile: ModelProfile, rng: np.random.Generator):
        self.profile = profile
        self.tasks = TASK_ORDER[:profile.task_count] if profile.task_count <= 6 else tuple(
            f"task{k}" for k in range(profile.task_count))
        self.tokens = Parameter(
            "decoder.tokens", rng.normal(0.0, INIT_STD, (profile.task_count, profile.d_o)))
        self.heads = [Head(f"decoder.head_{t}", profile.d_o, rng) for t in self.tasks]

    def parameters(self):
        out = [self.tokens]
        for head in self.heads:
            out.extend(head.parameters())
        return out

    def decode(self, feature: Tensor, tokens: Tensor | None = None) -> Tensor:
        """Refine task tokens against a (D_o,H,W) unified feature map."""
        if feature.data.ndim != 3:
            raise DimensionError("decode expects a (C,H,W) feature map")
        tokens = self.tokens if tokens is None else tokens
        width = tokens.shape[1]
        if feature.shape[0] != width:
            raise ConfigError(
                f"feature channels {feature.shape[0]} != decoder width {width}; "
                "set the profile's d_o equal to the decoder width (128 in the default profiles)")
        c, h, w = feature.shape
        kv = transpose(reshape(feature, (c, h * w)))  # (H*W, D_o) spatial tokens
        heads = self.profile.decoder_heads
        cur = tokens
        for _ in range(DECODER_PASSES):
            cur = scaled_dot_attention(cur, cur, cur, heads=heads)
            cur = scaled_dot_attention(cur, kv, kv, heads=heads)
        return cur

    def regress(self, task_tokens: Tensor) -> Tensor:
        """Map each refined token through its own head; returns (task_count,)."""
        if task_tokens.shape[0] != len(self.heads):
            raise DimensionError(
                f"expected {len(self.heads)} token rows, got {task_tokens.shape[0]}")
        outs = [head(narrow(task_tokens, 0, k, 1)) for k, head in enumerate(self.heads)]
        return reshape(concat(outs, axis=0), (len(self.heads),))


def mse_loss(predicted: Tensor, target) -> Tensor:
    """Mean squared error across the quality dimensions."""
    target = target if isinstance(target, Tensor) else Tensor(target)
    if predicted.shape != target.shape:
        raise DimensionError(f"score shapes differ: {predicted.shape} vs {target.shape}")
    if not (np.isfinite(predicted.data).all() and np.isfinite(target.data).all()):
        raise NumericalError("loss inputs must be finite")
    return mean_all(square(predicted - target))
