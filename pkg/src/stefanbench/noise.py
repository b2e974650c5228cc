"""Finite-rank Q-Wiener increments and the multiplicative noise operator.

The covariance is diagonal in the Laplace eigenbasis of the unit square,
phi_{(m,l)}(x, y) = 2 sin(m pi x) sin(l pi y), with trace-class eigenvalues
q_k = k^{-decay}.  Increment coefficients are independent Gaussians addressed
statelessly by (seed, realisation, step) through a counter-based generator,
so realisations can run concurrently and any coefficient can be regenerated
bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import ndtri

from .discretisation import DiscreteField, GradientDiscretisation

__all__ = [
    "QWienerModel",
    "WienerIncrement",
    "NoiseOperator",
    "laplace_mode_model",
    "sample_increment",
    "apply_noise",
    "mc_expectation",
]

_NOISE_MODES = ("multiplicative_zeta", "zero")


@dataclass
class QWienerModel:
    rank: int
    sqrt_eigenvalues: np.ndarray  # (K,)
    basis: np.ndarray  # (K, nv) mode values at vertices
    gd: GradientDiscretisation

    def __post_init__(self):
        q = self.sqrt_eigenvalues**2
        if np.any(np.diff(q) >= 0):
            raise ValueError("eigenvalues must be strictly decreasing")
        self.trace = float(q.sum())

    @property
    def basis_fields(self) -> list[DiscreteField]:
        return [DiscreteField(row.copy(), self.gd) for row in self.basis]


@dataclass
class WienerIncrement:
    coefficients: np.ndarray  # (K,) Gaussian draws with variance q_k * dt
    step_index: int


@dataclass
class NoiseOperator:
    """Diagonal multiplicative operator w -> intensity * zeta(w) * (mode sum).

    ``zeta`` is applied vertex-wise before the modal product; pass ``None``
    for the identity (used when the driving field is already the regular
    variable).  Mode ``zero`` short-circuits to the exact zero field.
    """

    intensity: float
    mode: str = "multiplicative_zeta"
    zeta: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.mode not in _NOISE_MODES:
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if self.intensity < 0:
            raise ValueError("intensity must be nonnegative")


def _mode_order(rank: int) -> list[tuple[int, int]]:
    pairs = [(m, l) for m in range(1, rank + 2) for l in range(1, rank + 2)]
    pairs.sort(key=lambda ml: (ml[0] ** 2 + ml[1] ** 2, ml))
    return pairs[:rank]


def laplace_mode_model(
    gd: GradientDiscretisation, rank: int = 9, decay_exponent: float = 3.0
) -> QWienerModel:
    """Default model: sine modes ordered by frequency, eigenvalues k^{-decay}."""
    if rank < 1:
        raise ValueError("rank must be at least 1")
    if decay_exponent <= 1.0:
        raise ValueError("decay exponent must exceed 1 for a finite trace")
    x, y = gd.mesh.vertices[:, 0], gd.mesh.vertices[:, 1]
    basis = np.stack(
        [
            2.0 * np.sin(m * np.pi * x) * np.sin(l * np.pi * y)
            for m, l in _mode_order(rank)
        ]
    )
    k = np.arange(1, rank + 1, dtype=float)
    return QWienerModel(rank, k ** (-decay_exponent / 2.0), basis, gd)


def sample_increment(
    model: QWienerModel, seed: int, realisation: int, step: int, dt: float
) -> WienerIncrement:
    """Increment coefficients for one (realisation, step) pair.

    A Philox stream keyed by the seed and countered by (step, realisation)
    yields uniforms in (0, 1); the Gaussians come from the inverse CDF, so the
    draw is a pure function of its arguments on every platform.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    gen = Generator(Philox(key=seed, counter=[0, step, realisation, 0]))
    u = gen.integers(1, 2**53, size=model.rank) / float(2**53)
    z = ndtri(u)
    return WienerIncrement(model.sqrt_eigenvalues * np.sqrt(dt) * z, step)


def apply_noise(
    op: NoiseOperator, model: QWienerModel, v, inc: WienerIncrement
) -> DiscreteField:
    """Vertex field intensity * zeta(v) * sum_k c_k phi_k (or exact zero)."""
    vals = v.values if isinstance(v, DiscreteField) else np.asarray(v, dtype=float)
    if vals.shape[0] != model.basis.shape[1]:
        raise ValueError("field and model live on different discretisations")
    if op.mode == "zero" or op.intensity == 0.0:
        return DiscreteField(np.zeros_like(vals), model.gd)
    w = op.zeta(vals) if op.zeta is not None else vals
    modal = inc.coefficients @ model.basis
    return DiscreteField(op.intensity * w * modal, model.gd)


def mc_expectation(fields: list[DiscreteField]) -> DiscreteField:
    """Vertex-wise mean over realisations, in fixed index order.

    Computed as first field plus the mean of deviations from it, which keeps
    the sum exact when all inputs coincide (a zero-noise ensemble collapses
    bit-for-bit onto the single trajectory).
    """
    if not fields:
        raise ValueError("cannot average an empty ensemble")
    gd = fields[0].gd
    base = fields[0].values
    acc = np.zeros_like(base)
    for f in fields[1:]:
        if len(f.values) != len(base):
            raise ValueError("ensemble members live on different discretisations")
        acc += f.values - base
    return DiscreteField(base + acc / len(fields), gd)
