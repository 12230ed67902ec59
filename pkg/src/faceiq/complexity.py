"""Analytic parameter/MAC accounting and wall-clock latency measurement.

MACs follow the usual counting conventions: a conv layer costs
C_out*C_in*k^2 per output site, an affine map costs in*out per site, and an
attention block costs n*m*d for the logits and again for the value mix
(summed over heads). Pooling, nonlinearities, and elementwise gating are
not counted. The MAC total covers one full three-view forward pass.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .model import QualityModel
from .profiles import ModelProfile
from .views import build_views

N_VIEWS = 3
DECODER_PASSES = 2


@dataclass
class ComplexityReport:
    params: int
    macs: int
    latency_ms: float | None = None

    def as_dict(self) -> dict:
        out = {"params": self.params, "macs": self.macs,
               "gmacs": self.macs / 1e9, "params_m": self.params / 1e6}
        if self.latency_ms is not None:
            out["latency_ms"] = self.latency_ms
        return out


def conv_macs(c_out: int, c_in: int, k: int, out_h: int, out_w: int) -> int:
    return c_out * c_in * k * k * out_h * out_w


def affine_macs(d_in: int, d_out: int, sites: int = 1) -> int:
    return d_in * d_out * sites


def attention_macs(n: int, m: int, d: int) -> int:
    # logits Q K^T plus the value mix, each n*m*d_h per head summed over heads
    return 2 * n * m * d


def count_params_macs(profile: ModelProfile) -> ComplexityReport:
    params = 0
    macs = 0
    sizes = profile.stage_sizes()
    k = profile.kernel
    deep = profile.deep_size
    d_o, d_l = profile.d_o, profile.d_l

    c_prev = 3
    for c, size in zip(profile.stage_channels, sizes):
        params += c * c_prev * k * k + c
        macs += N_VIEWS * conv_macs(c, c_prev, k, size, size)
        c_prev = c

    for c, size in zip(profile.stage_channels, sizes):
        params += c * d_o + d_o
        macs += N_VIEWS * affine_macs(c, d_o, size * size)

    params += (profile.n_stages * d_o) * d_o + d_o
    macs += N_VIEWS * conv_macs(d_o, profile.n_stages * d_o, 1, deep, deep)

    params += d_o * d_l  # down projection
    macs += N_VIEWS * affine_macs(d_o, d_l)
    macs += attention_macs(N_VIEWS, N_VIEWS, d_l)
    params += d_l * d_o  # up projection
    macs += N_VIEWS * affine_macs(d_l, d_o)

    tasks = profile.task_count
    params += tasks * d_o  # task tokens
    spatial_tokens = deep * deep
    for _ in range(DECODER_PASSES):
        macs += attention_macs(tasks, tasks, d_o)
        macs += attention_macs(tasks, spatial_tokens, d_o)

    per_head = (d_o * d_o + d_o) * 2 + (d_o + 1)
    params += tasks * per_head
    macs += tasks * (affine_macs(d_o, d_o) * 2 + affine_macs(d_o, 1))

    return ComplexityReport(params=params, macs=macs)


def measure_latency(model: QualityModel, records, n_images: int = 100,
                    warmup: int = 10) -> tuple[float, list[float]]:
    """Mean per-image wall time (ms), preprocessing included, after warm-up.

    Records are cycled if fewer than ``warmup + n_images`` are supplied.
    Returns the mean over the measured images and the individual timings.
    """
    if warmup < 10:
        raise ValueError("at least 10 warm-up iterations are required")
    size = model.profile.input_size

    def run(record):
        t0 = time.perf_counter()
        triplet = build_views(record, out_size=size)
        model.forward_views(triplet)
        return (time.perf_counter() - t0) * 1e3

    records = list(records)
    total = warmup + n_images
    seq = [records[i % len(records)] for i in range(total)]
    timings = [run(r) for r in seq]
    measured = timings[warmup:]
    return sum(measured) / len(measured), measured
