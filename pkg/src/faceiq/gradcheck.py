"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .errors import ConfigError, NumericalError
from .tensor import Parameter, Tensor


def check_gradients(loss_fn: Callable[[], Tensor],
                    params: Iterable[Parameter],
                    epsilon: float = 1e-5) -> float:
    """Compare analytic gradients of ``loss_fn`` against central differences.

    ``loss_fn`` must recompute the scalar loss from the parameters' current
    data on every call. Returns the maximum over all parameter elements of
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``.
    """
    if not (0.0 < epsilon <= 1e-3):
        raise ConfigError(f"epsilon must lie in (0, 1e-3], got {epsilon}")
    params = list(params)

    for p in params:
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise NumericalError("loss is non-finite before perturbation")
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = float(loss_fn().data)
            flat[i] = orig - epsilon
            lo = float(loss_fn().data)
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                name = getattr(p, "name", f"param{params.index(p)}")
                raise NumericalError(f"non-finite loss while perturbing {name}[{i}]")
            numeric = (hi - lo) / (2.0 * epsilon)
            an = float(a.reshape(-1)[i])
            err = abs(an - numeric) / max(abs(an), abs(numeric), 1e-8)
            if err > worst:
                worst = err
    return worst
