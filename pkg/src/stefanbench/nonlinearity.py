"""Monotone piecewise-linear constitutive laws and their regularisations.

The Stefan constitutive law is piecewise linear with a flat plateau, so every
quantity the solvers need (values, one-sided derivatives, the primitive, the
regularised variant and its inverse) has a closed form.  This module stores the
breakpoint/slope representation as the canonical one; numerical quadrature only
appears in the test suite as an independent oracle.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Nonlinearity",
    "RegularisedNonlinearity",
    "stefan_zeta",
    "identity_zeta",
    "regularise",
    "primitive",
    "check_slope_bounds",
]


class Nonlinearity:
    """Non-decreasing piecewise-linear function anchored at f(0) = 0.

    Parameters
    ----------
    breakpoints:
        Sorted kink locations (may be empty for a globally linear function).
    slopes:
        One slope per interval, ``len(breakpoints) + 1`` entries, all >= 0.
        At a kink the derivative takes the right-hand limit so that solver
        behaviour is deterministic.
    """

    def __init__(self, breakpoints, slopes):
        bp = np.atleast_1d(np.asarray(breakpoints, dtype=float))
        sl = np.atleast_1d(np.asarray(slopes, dtype=float))
        if bp.size + 1 != sl.size:
            raise ValueError("need len(slopes) == len(breakpoints) + 1")
        if bp.size > 1 and np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(sl < 0):
            raise ValueError("slopes must be nonnegative")
        self.breakpoints = bp
        self.slopes = sl
        self.lipschitz = float(sl.max())
        self._knot_values = self._accumulate_values()
        self._knot_primitives = self._accumulate_primitives()

    def _accumulate_values(self):
        # f at each breakpoint, anchored so that f(0) = 0.
        bp, sl = self.breakpoints, self.slopes
        if bp.size == 0:
            return np.zeros(0)
        vals = np.zeros(bp.size)
        for j in range(1, bp.size):
            vals[j] = vals[j - 1] + sl[j] * (bp[j] - bp[j - 1])
        vals -= self._piece_eval(bp, vals, 0.0)
        return vals

    def _accumulate_primitives(self):
        # integral of f from breakpoints[0] to each breakpoint, then shifted
        # so that the primitive vanishes at 0.
        bp, sl, vals = self.breakpoints, self.slopes, self._knot_values
        if bp.size == 0:
            return np.zeros(0)
        prim = np.zeros(bp.size)
        for j in range(1, bp.size):
            d = bp[j] - bp[j - 1]
            prim[j] = prim[j - 1] + vals[j - 1] * d + 0.5 * sl[j] * d * d
        prim -= self._piece_primitive(bp, vals, prim, 0.0)
        return prim

    def _piece_eval(self, bp, vals, u):
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(bp, u, side="right")
        ref = np.clip(idx - 1, 0, bp.size - 1)
        x0 = np.where(idx == 0, bp[0], bp[ref])
        f0 = np.where(idx == 0, vals[0], vals[ref])
        return f0 + self.slopes[idx] * (u - x0)

    def _piece_primitive(self, bp, vals, prim, u):
        u = np.asarray(u, dtype=float)
        idx = np.searchsorted(bp, u, side="right")
        ref = np.clip(idx - 1, 0, bp.size - 1)
        x0 = np.where(idx == 0, bp[0], bp[ref])
        f0 = np.where(idx == 0, vals[0], vals[ref])
        p0 = np.where(idx == 0, prim[0], prim[ref])
        d = u - x0
        return p0 + f0 * d + 0.5 * self.slopes[idx] * d * d

    def eval(self, u):
        """f(u), vectorised; scalars in, scalar out."""
        if self.breakpoints.size == 0:
            out = self.slopes[0] * np.asarray(u, dtype=float)
        else:
            out = self._piece_eval(self.breakpoints, self._knot_values, u)
        return out if np.ndim(u) else float(out)

    __call__ = eval

    def derivative(self, u):
        """Right-hand derivative f'(u)."""
        if self.breakpoints.size == 0:
            out = np.full_like(np.asarray(u, dtype=float), self.slopes[0])
        else:
            idx = np.searchsorted(self.breakpoints, np.asarray(u, dtype=float), side="right")
            out = self.slopes[idx]
        return out if np.ndim(u) else float(out)

    def primitive(self, v):
        """Integral of f from 0 to v (convex, vanishing at 0)."""
        if self.breakpoints.size == 0:
            out = 0.5 * self.slopes[0] * np.square(np.asarray(v, dtype=float))
        else:
            out = self._piece_primitive(
                self.breakpoints, self._knot_values, self._knot_primitives, v
            )
        return out if np.ndim(v) else float(out)


class RegularisedNonlinearity(Nonlinearity):
    """Perturbation of a base law with derivative pinched into [epsilon, L].

    Strict monotonicity makes the function invertible; the inverse is again
    piecewise linear and exposed as :attr:`inverse`.
    """

    def __init__(self, breakpoints, slopes, epsilon):
        super().__init__(breakpoints, slopes)
        self.epsilon = float(epsilon)
        inv_bp = self.eval(self.breakpoints) if self.breakpoints.size else []
        self.inverse = Nonlinearity(inv_bp, 1.0 / self.slopes)


def stefan_zeta() -> Nonlinearity:
    """The Stefan law: identity below 0, flat on [0, 1], identity - 1 above."""
    return Nonlinearity([0.0, 1.0], [1.0, 0.0, 1.0])


def identity_zeta() -> Nonlinearity:
    """The trivial law f(u) = u (turns the scheme into the heat equation)."""
    return Nonlinearity([], [1.0])


def regularise(base: Nonlinearity, epsilon: float) -> RegularisedNonlinearity:
    """Lift every slope of ``base`` to at least ``epsilon``.

    Equivalent to integrating max(epsilon, f') from 0, so the result agrees
    with ``base`` up to a constant wherever the slope already exceeds epsilon.
    """
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    if epsilon > base.lipschitz:
        raise ValueError("epsilon must not exceed the Lipschitz constant")
    return RegularisedNonlinearity(
        base.breakpoints, np.maximum(epsilon, base.slopes), epsilon
    )


def primitive(base: Nonlinearity, v):
    """Convenience alias for ``base.primitive(v)``."""
    return base.primitive(v)


def check_slope_bounds(
    fn,
    L: float,
    *,
    slope_min: float = 0.0,
    samples: int = 10_000,
    seed: int = 0,
    support: tuple[float, float] = (-5.0, 5.0),
):
    """Sample-check that u -> L*u - fn(u) is Lipschitz with constant L - slope_min.

    With ``slope_min=0`` this is the bound used by the plain linearised update
    (valid for L >= lipschitz/2); with ``slope_min`` equal to a positive lower
    derivative bound it is the sharper gap estimate for invertible laws (valid
    for L >= sup fn').  Returns ``(holds, worst_pair)`` where ``worst_pair`` is
    the sampled (a, b) with the smallest margin.
    """
    rng = np.random.default_rng(seed)
    lo, hi = support
    a = rng.uniform(lo, hi, samples)
    b = rng.uniform(lo, hi, samples)
    lhs = np.abs(L * (a - b) - (fn(a) - fn(b)))
    rhs = (L - slope_min) * np.abs(a - b)
    # tiny relative slack: both sides are exact reals, compared in floats
    ok = lhs <= rhs * (1.0 + 1e-12) + 1e-15
    holds = bool(np.all(ok))
    worst = int(np.argmin(rhs - lhs))
    return holds, (float(a[worst]), float(b[worst]))
