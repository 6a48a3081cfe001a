"""Shared test helpers: finite-difference gradient oracle."""

from __future__ import annotations

import numpy as np


def finite_difference_grad(f, params: dict[str, np.ndarray], h: float = 1e-5):
    """Central finite differences of a scalar function of named arrays.

    f takes a dict of arrays and returns a float; the dict is copied and
    perturbed one coordinate at a time.
    """
    grads = {}
    for name, base in params.items():
        g = np.zeros_like(base, dtype=np.float64)
        flat = g.ravel()
        for i in range(base.size):
            bumped = {k: v.copy() for k, v in params.items()}
            bumped[name].ravel()[i] = base.ravel()[i] + h
            up = f(bumped)
            bumped[name].ravel()[i] = base.ravel()[i] - h
            down = f(bumped)
            flat[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def max_relative_error(analytic: dict, numeric: dict) -> float:
    """Max over parameter blocks of ||a - n||_inf / max(||n||_inf, 1e-8)."""
    worst = 0.0
    for name, n in numeric.items():
        a = np.asarray(analytic[name], dtype=np.float64)
        scale = max(np.max(np.abs(n)) if n.size else 0.0, 1e-8)
        err = np.max(np.abs(a - n)) / scale if n.size else 0.0
        worst = max(worst, float(err))
    return worst
