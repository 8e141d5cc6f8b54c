"""Hebbian training and weight-to-memristor mapping."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .netlist import BridgeConductances, NeuronParams

__all__ = [
    "WeightMatrix",
    "MappingParams",
    "InfeasibleCouplingError",
    "as_patterns",
    "hebbian_weights",
    "normalize_magnitudes",
    "map_conductance",
    "split_signs",
    "g0_bounds",
    "g0_feasible_interval",
    "bridges_from_weights",
]

log = logging.getLogger(__name__)


class InfeasibleCouplingError(ValueError):
    """No memristor conductance can keep the network oscillating."""


@dataclass(frozen=True)
class WeightMatrix:
    w: np.ndarray
    n_patterns: int

    @property
    def n(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class MappingParams:
    alpha: float = 1.8
    beta: float = 0.2
    g0: float = 1e-5

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError("alpha must exceed 1")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.g0 > 0:
            raise ValueError("g0 must be positive")


def as_patterns(patterns) -> np.ndarray:
    """Validate a list of +/-1 patterns into an integer array of shape (P, N)."""
    arr = np.asarray(patterns)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("patterns must be a non-empty list of equal-length vectors")
    if not np.all((arr == 1) | (arr == -1)):
        raise ValueError("pattern pixels must be +1 or -1")
    return arr.astype(int)


def hebbian_weights(patterns) -> WeightMatrix:
    b = as_patterns(patterns)
    n = b.shape[1]
    w = (b.T @ b) / n
    np.fill_diagonal(w, 0.0)
    return WeightMatrix(w, b.shape[0])


def normalize_magnitudes(w: WeightMatrix) -> tuple[np.ndarray, np.ndarray, bool]:
    """Min-max normalized ``|1/w|`` over the non-zero off-diagonal weights.

    Returns ``(m_norm, nonzero_mask, degenerate)``. Entries outside the mask are
    zero. When every non-zero weight has the same magnitude the normalization
    is 0/0; all normalized values are then 0 and ``degenerate`` is True.
    """
    a = np.asarray(w.w, dtype=float)
    off = ~np.eye(a.shape[0], dtype=bool)
    # weights are multiples of 1/N; round away float noise before comparing magnitudes
    mag = np.round(np.abs(a) * a.shape[0], 9) / a.shape[0]
    mask = off & (mag > 0)
    m = np.zeros_like(a)
    if not mask.any():
        return m, mask, True
    inv = 1.0 / mag[mask]
    lo, hi = inv.min(), inv.max()
    if hi == lo:
        log.debug("single distinct weight magnitude; normalized values set to 0")
        return m, mask, True
    m[mask] = (inv - lo) / (hi - lo)
    return m, mask, False


def map_conductance(w: WeightMatrix, mp: MappingParams) -> np.ndarray:
    """Strong-side conductance per pair, between g0/(1 + beta P) and g0."""
    m, mask, _ = normalize_magnitudes(w)
    bp = mp.beta * w.n_patterns
    g = np.where(mask, mp.g0 / (1.0 + bp * m), mp.g0 / (1.0 + bp))
    np.fill_diagonal(g, 0.0)
    return g


def split_signs(w_ij: float, g_ij: float, alpha: float) -> BridgeConductances:
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    if w_ij > 0:
        return BridgeConductances(g_d=g_ij, g_c=g_ij / alpha)
    if w_ij < 0:
        return BridgeConductances(g_d=g_ij / alpha, g_c=g_ij)
    return BridgeConductances(g_d=g_ij / alpha, g_c=g_ij / alpha)


def g0_bounds(n: int, p: NeuronParams) -> tuple[float, float]:
    """Upper bounds on the coupling conductance from the two oscillation conditions.

    The first keeps an insulating branch able to climb past v_high, the second
    keeps a metallic branch able to fall below v_low, with all N-1 synapses
    pulling the other way.
    """
    if n < 2:
        raise ValueError("need at least two neurons")
    vo2, gs = p.vo2, p.g_series
    denom = (n - 1) * (vo2.v_high - vo2.v_low)
    rise = gs * p.v_dd - vo2.v_high * (gs + vo2.g_low)
    fall = vo2.v_low * (gs + vo2.g_high) - gs * p.v_dd
    return rise / denom, fall / denom


def g0_feasible_interval(n: int, p: NeuronParams, safety: float = 0.9) -> tuple[tuple[float, float], float]:
    """``((bound_rise, bound_fall), g0)`` with ``g0 = safety * min(bounds)``."""
    rise, fall = g0_bounds(n, p)
    if rise <= 0:
        raise InfeasibleCouplingError(
            "rise condition fails: the insulating branch cannot reach v_high (v_high >= v_max)")
    if fall <= 0:
        raise InfeasibleCouplingError(
            "fall condition fails: the metallic branch cannot drop below v_low (v_low <= v_min)")
    return (rise, fall), safety * min(rise, fall)


def bridges_from_weights(w: WeightMatrix, mp: MappingParams) -> dict[tuple[int, int], BridgeConductances]:
    g = map_conductance(w, mp)
    n = w.n
    return {(i, j): split_signs(w.w[i, j], g[i, j], mp.alpha)
            for i in range(n) for j in range(i + 1, n)}
