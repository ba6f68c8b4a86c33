"""Compiled inner loop for per-pattern delta-rule training."""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def online_epoch(w, b, w2, b2, slope, x, t, order, eta):
    """One epoch of per-pattern updates in ``order``; weights are modified in place.

    Mirrors ``mlp.backprop_step`` exactly (same error convention) and
    returns the sum of pre-update squared errors.
    """
    n_hidden = w.shape[0]
    h = np.empty(n_hidden)
    half = 0.5 * slope
    sse = 0.0
    for p in range(order.shape[0]):
        s = order[p]
        x0 = x[s, 0]
        x1 = x[s, 1]
        y = b2[0]
        for j in range(n_hidden):
            h[j] = math.tanh(half * (w[j, 0] * x0 + w[j, 1] * x1 + b[j]))
            y += w2[0, j] * h[j]
        err = t[s] - y
        sse += err * err
        g = -2.0 * err
        for j in range(n_hidden):
            delta = g * w2[0, j] * (half * (1.0 - h[j] * h[j]))
            w[j, 0] -= eta * delta * x0
            w[j, 1] -= eta * delta * x1
            b[j] -= eta * delta
            w2[0, j] -= eta * g * h[j]
        b2[0] -= eta * g
    return sse
