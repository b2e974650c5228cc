"""Closed-form travelling-interface solution used by the deterministic test.

The interface sits at x1 = t; the field exceeds 1 behind it and is negative
ahead of it, and the transformed variable is continuous across it.  Points on
the interface itself take the ahead-branch by convention (a measure-zero set,
irrelevant to any integral).
"""

from __future__ import annotations

import numpy as np

__all__ = ["exact_u", "exact_zeta", "exact_zeta_gradient", "initial_u"]


def exact_u(x1, x2, t):
    """u(x1, x2, t): 2 exp(t - x1) - 1 behind the interface, exp(t - x1) - 1 ahead."""
    x1 = np.asarray(x1, dtype=float)
    e = np.exp(t - x1)
    out = np.where(x1 < t, 2.0 * e - 1.0, e - 1.0)
    return out if out.ndim else float(out)


def exact_zeta(x1, x2, t):
    """The transformed variable of the exact solution (continuous at x1 = t)."""
    x1 = np.asarray(x1, dtype=float)
    e = np.exp(t - x1)
    out = np.where(x1 < t, 2.0 * e - 2.0, e - 1.0)
    return out if out.ndim else float(out)


def exact_zeta_gradient(x1, x2, t):
    """Spatial gradient of the transformed variable; x2-component vanishes."""
    x1 = np.asarray(x1, dtype=float)
    e = np.exp(t - x1)
    gx = np.where(x1 < t, -2.0 * e, -e)
    return np.stack([gx, np.zeros_like(gx)], axis=-1)


def initial_u(x1, x2):
    """Exact field at t = 0 (entirely at or below the freezing value)."""
    return exact_u(x1, x2, 0.0)
