"""Facial quality feature encoder.

One shared convolutional backbone produces multi-scale stage features for
each of the three views. Per view, every stage map is channel-projected to
a common width, pooled onto the deepest grid, concatenated and fused with
a 1x1 conv. Across views, pooled descriptors are down-projected, mixed by
a small self-attention, up-projected, and used as channel gates on a mean
over the views.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError
from .profiles import ModelProfile
from .tensor import (Parameter, Tensor, adaptive_average_pool, concat, conv2d,
                     global_average_pool, matmul, narrow, reshape, scale,
                     scaled_dot_attention, silu, transpose)

def glorot_std(fan_in: int, fan_out: int) -> float:
    # variance-preserving init; flat 0.02 collapses activations through the
    # gated fusion at desk scale
    return float(np.sqrt(2.0 / (fan_in + fan_out)))


class Conv:
    """k x k convolution with bias, stride and zero padding."""

    def __init__(self, name: str, c_in: int, c_out: int, k: int, stride: int,
                 padding: int, rng: np.random.Generator, gain: float = 1.0):
        # gain 2 compensates the ~1/2 small-signal slope of the rectifier
        std = gain * glorot_std(c_in * k * k, c_out * k * k)
        self.weight = Parameter(f"{name}.weight",
                                rng.normal(0.0, std, (c_out, c_in, k, k)))
        self.bias = Parameter(f"{name}.bias", np.zeros((c_out, 1, 1)))
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.stride, self.padding) + self.bias

    def parameters(self):
        return [self.weight, self.bias]


class Affine:
    """Channel-wise affine map, applied to row stacks or per spatial site."""

    def __init__(self, name: str, d_in: int, d_out: int, rng: np.random.Generator):
        std = glorot_std(d_in, d_out)
        self.weight = Parameter(f"{name}.weight", rng.normal(0.0, std, (d_in, d_out)))
        self.bias = Parameter(f"{name}.bias", np.zeros((1, d_out)))

    def __call__(self, rows: Tensor) -> Tensor:
        return matmul(rows, self.weight) + self.bias

    def apply_spatial(self, x: Tensor) -> Tensor:
        c, h, w = x.shape
        rows = transpose(reshape(x, (c, h * w)))
        out = self(rows)
        return reshape(transpose(out), (out.shape[1], h, w))

    def parameters(self):
        return [self.weight, self.bias]


class Encoder:
    """Stage extraction, per-view scale fusion, and cross-view fusion."""

    def __init__(self, profile: ModelProfile, rng: np.random.Generator):
        self.profile = profile
        k = profile.kernel
        self.stages = []
        c_prev = 3
        for i, (c, s) in enumerate(zip(profile.stage_channels, profile.stage_strides)):
            self.stages.append(
                Conv(f"backbone.stage{i}", c_prev, c, k, s, k // 2, rng, gain=2.0))
            c_prev = c
        self.scale_projections = [
            Affine(f"encoder.proj{i}", c, profile.d_o, rng)
            for i, c in enumerate(profile.stage_channels)
        ]
        self.fuse_conv = Conv("encoder.fuse", profile.n_stages * profile.d_o,
                              profile.d_o, 1, 1, 0, rng)
        # the projection pair feeds multiplicative channel gates; init so the
        # gates start near unit scale for pooled features of magnitude ~0.15,
        # otherwise the gated mean squeezes the whole feature path toward zero
        self.w_d = Parameter("encoder.lrp.weight",
                             rng.normal(0.0, 6.0 / np.sqrt(profile.d_o),
                                        (profile.d_o, profile.d_l)))
        self.w_u = Parameter("encoder.hrp.weight",
                             rng.normal(0.0, 1.0 / np.sqrt(profile.d_l),
                                        (profile.d_l, profile.d_o)))

    def parameters(self):
        out = []
        for stage in self.stages:
            out.extend(stage.parameters())
        for proj in self.scale_projections:
            out.extend(proj.parameters())
        out.extend(self.fuse_conv.parameters())
        out.extend([self.w_d, self.w_u])
        return out

    def backbone_forward(self, x: Tensor) -> list[Tensor]:
        """Run the shared backbone on one view, returning all stage maps."""
        _, h, w = x.shape
        total = 1
        for s in self.profile.stage_strides:
            total *= s
        if total > min(h, w):
            raise ConfigError(f"stride product {total} exceeds input size {min(h, w)}")
        feats = []
        cur = x
        for stage in self.stages:
            # rectifier-like activation: local-variance cues survive pooling
            cur = silu(stage(cur))
            feats.append(cur)
        return feats

    def fuse_scales(self, stage_feats: list[Tensor]) -> Tensor:
        """Project each stage to the common width, align grids, and fuse."""
        if len(stage_feats) != len(self.scale_projections):
            raise ConfigError(
                f"expected {len(self.scale_projections)} stage maps, got {len(stage_feats)}")
        deep_h, deep_w = stage_feats[-1].shape[1], stage_feats[-1].shape[2]
        aligned = []
        for feat, proj in zip(stage_feats, self.scale_projections):
            projected = proj.apply_spatial(feat)
            aligned.append(adaptive_average_pool(projected, deep_h, deep_w))
        return self.fuse_conv(concat(aligned, axis=0))

    def cross_view_fuse(self, f_o: Tensor, f_f: Tensor, f_em: Tensor) -> Tensor:
        """Gate each view's map by attention-mixed channel vectors, then average."""
        if not (f_o.shape == f_f.shape == f_em.shape):
            raise DimensionError(
                f"view maps differ: {f_o.shape}, {f_f.shape}, {f_em.shape}")
        views = (f_o, f_f, f_em)
        pooled = [reshape(global_average_pool(v), (1, self.profile.d_o)) for v in views]
        low = concat([matmul(p, self.w_d) for p in pooled], axis=0)  # (3, D_l)
        mixed = scaled_dot_attention(low, low, low, heads=self.profile.view_heads)
        gates = matmul(mixed, self.w_u)  # (3, D_o)
        c = f_o.shape[0]
        total = None
        for j, v in enumerate(views):
            gate = reshape(narrow(gates, 0, j, 1), (c, 1, 1))
            term = v * gate
            total = term if total is None else total + term
        return scale(total, 1.0 / 3.0)

    def forward(self, x_o: Tensor, x_f: Tensor, x_em: Tensor) -> Tensor:
        per_view = [self.fuse_scales(self.backbone_forward(x)) for x in (x_o, x_f, x_em)]
        return self.cross_view_fuse(*per_view)
