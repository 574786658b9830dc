"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .tensor import GradTape, Tensor, parameter


def grad_check_fd(build_loss, params: dict, h: float = 1e-5) -> float:
    """Compare analytic gradients against central differences.

    build_loss maps a {name: Tensor} dict to a scalar loss tensor and is
    called fresh for every evaluation, so it must be a pure function of the
    parameter values. Returns the worst relative error over all parameter
    entries: |analytic - numeric| / max(1, |numeric|). Runs in float64; pass
    float64 parameter data for meaningful tolerances.
    """
    f64_params = {
        name: parameter(np.asarray(p.data, dtype=np.float64), dtype=np.float64)
        for name, p in params.items()
    }
    tape = GradTape(f64_params)
    loss = build_loss(f64_params)
    grads = tape.backward(loss)

    def eval_loss(values: dict) -> float:
        frozen = {
            name: parameter(values[name], dtype=np.float64) for name in f64_params
        }
        return float(build_loss(frozen).data)

    worst = 0.0
    base = {name: p.data.copy() for name, p in f64_params.items()}
    for name, p in f64_params.items():
        analytic = grads[name].data
        flat = base[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = eval_loss(base)
            flat[i] = orig - h
            down = eval_loss(base)
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst


def check_param_grads(build_loss, params: dict, h: float = 1e-5, tol: float = 1e-4) -> None:
    """Assert-style wrapper: raise if the worst relative error exceeds tol."""
    worst = grad_check_fd(build_loss, params, h=h)
    if worst > tol:
        raise AssertionError(f"gradient check failed: worst relative error {worst:.3e} > {tol:.1e}")
