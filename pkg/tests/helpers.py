"""Independent oracles shared by the unit and acceptance tests."""

import numpy as np

from riscovert import detector as det
from riscovert.adversarial import fgm_direction

FD_STEP = 1e-4


def random_model(seed, m=16, filters=4, hidden=8, dropout_rate=0.1):
    """Small model with non-zero biases so every code path is exercised."""
    rng = np.random.default_rng(seed)
    model = det.init_model(m, filters, hidden, dropout_rate, seed=rng)
    for name in ("conv_bias", "dense1_bias", "out_bias"):
        getattr(model, name)[...] = rng.normal(0, 0.3, getattr(model, name).shape)
    return model


def fd_input_gradient(model, x, target, h=FD_STEP):
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (det.mean_loss(model, xp, [target]) - det.mean_loss(model, xm, [target])) / (2 * h)
    return grad


def fd_param_gradients(model, x, labels, h=FD_STEP):
    grads = {}
    for name, p in model.params().items():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = det.mean_loss(model, x, labels)
            p[idx] = old - h
            down = det.mean_loss(model, x, labels)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads[name] = g
    return grads


def max_relative_error(analytic, numeric, floor=1e-7):
    """Elementwise |a - n| / max(|a|, |n|, floor), maximised."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def linear_sweep_epsilon(eve_model, tx_frame, g_eve, e_max, points=256):
    """Smallest grid norm on the FGM ray that flips the eavesdropper to 'noise'.

    Returns ``(eps_found, eps_previous)`` or ``None`` when no grid point flips.
    Uses only single-frame public calls, independent of the batched bisection.
    """
    y = g_eve * tx_frame
    if det.predict_label(eve_model, y) is det.Label.NOISE:
        return 0.0, 0.0
    unit = fgm_direction(eve_model, y, g_eve)
    grid = np.linspace(0.0, np.sqrt(e_max), points)
    for k, eps in enumerate(grid):
        if det.predict_label(eve_model, g_eve * (tx_frame - eps * unit)) is det.Label.NOISE:
            return eps, grid[max(k - 1, 0)]
    return None
