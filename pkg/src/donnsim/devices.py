"""VO2 device model.

The device is a two-terminal element whose conductance follows a continuous
metallicity state ``s`` in [0, 1]. A smoothed comparator decides the target
state, and the state relaxes toward it with time constant ``tau``. The
threshold the comparator sees depends on ``s`` itself, which is what opens
the hysteresis window between ``v_low`` and ``v_high``.

Two modes are supported:

* ``DeviceMode.SMOOTH``: ``ds/dt = (comparator(v, V_th(s)) - s) / tau``.
* ``DeviceMode.IDEAL_SWITCH``: a binary state flips at the thresholds and
  ``s`` relaxes exponentially toward it (instantly when ``tau == 0``).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "DeviceMode",
    "Vo2Params",
    "NOMINAL_VO2",
    "vo2_conductance",
    "vo2_threshold",
    "comparator_output",
    "vo2_state_derivative",
    "ideal_switch_update",
    "INSULATING",
    "METALLIC",
]

INSULATING = 0
METALLIC = 1


class DeviceMode(str, enum.Enum):
    SMOOTH = "smooth"
    IDEAL_SWITCH = "ideal_switch"


@dataclass(frozen=True)
class Vo2Params:
    """Parameters of one VO2 device (SI units)."""

    v_high: float = 2.0
    v_low: float = 1.0
    r_high: float = 100e3
    r_low: float = 1e3
    tau: float = 100e-9
    cmp_slope: float = 40.0

    def __post_init__(self):
        if not self.v_high > self.v_low > 0:
            raise ValueError(f"need v_high > v_low > 0, got {self.v_high}, {self.v_low}")
        if not self.r_high > self.r_low > 0:
            raise ValueError(f"need r_high > r_low > 0, got {self.r_high}, {self.r_low}")
        # tau == 0 is only meaningful for the ideal switch (instant relaxation)
        if self.tau < 0:
            raise ValueError(f"tau must be non-negative, got {self.tau}")
        if self.cmp_slope <= 0:
            raise ValueError(f"cmp_slope must be positive, got {self.cmp_slope}")

    @property
    def g_low(self) -> float:
        return 1.0 / self.r_high

    @property
    def g_high(self) -> float:
        return 1.0 / self.r_low

    def with_(self, **changes) -> "Vo2Params":
        return replace(self, **changes)


NOMINAL_VO2 = Vo2Params()


def _clip01(s):
    return np.clip(s, 0.0, 1.0)


def vo2_conductance(s, p: Vo2Params):
    """Conductance at metallicity ``s``: linear between 1/r_high and 1/r_low."""
    s = _clip01(s)
    return p.g_low + (p.g_high - p.g_low) * s


def vo2_threshold(s, p: Vo2Params):
    """State-dependent comparator threshold, v_high at s=0 and v_low at s=1."""
    s = _clip01(s)
    return p.v_high - (p.v_high - p.v_low) * s


def comparator_output(v_plus, v_minus, p: Vo2Params):
    return 0.5 * (1.0 + np.tanh(2.0 * p.cmp_slope * (np.asarray(v_plus) - v_minus)))


def vo2_state_derivative(v_device, s, p: Vo2Params):
    """Smooth-mode ``ds/dt`` in 1/s."""
    target = comparator_output(v_device, vo2_threshold(s, p), p)
    return (target - _clip01(s)) / p.tau


def ideal_switch_update(v_device: float, state: int, p: Vo2Params) -> int:
    """Next binary state of an ideal hysteretic switch."""
    if state == INSULATING and v_device >= p.v_high:
        return METALLIC
    if state == METALLIC and v_device <= p.v_low:
        return INSULATING
    return state

