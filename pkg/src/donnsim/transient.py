"""Nodal transient simulation of oscillator networks.

Every branch is a series resistor from its (switched) supply to the output
node, a VO2 device from the node to ground and a capacitor to ground. The
system integrated is ``M dv/dt = i(v, s, t)`` together with the VO2 state
equations, where ``M`` is the nodal capacitance matrix.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernel
from .devices import DeviceMode, Vo2Params
from .netlist import Netlist, NeuronParams

__all__ = [
    "NotOscillatingError",
    "SimulationError",
    "PowerSchedule",
    "SimConfig",
    "Trace",
    "CircuitArrays",
    "analytic_period",
    "branch_period",
    "swing_limits",
    "assemble_capacitance_matrix",
    "compile_netlist",
    "node_currents",
    "nominal_branch_period",
    "simulate",
    "schedule_from_pattern",
    "single_ended_schedule",
]


class NotOscillatingError(ValueError):
    """Raised when a branch latches instead of oscillating."""


class SimulationError(RuntimeError):
    pass


def swing_limits(vo2: Vo2Params, r_series: float, v_dd: float) -> tuple[float, float]:
    """Steady-state node voltages ``(v_max, v_min)`` with the device insulating / metallic."""
    gs = 1.0 / r_series
    return gs * v_dd / (vo2.g_low + gs), gs * v_dd / (vo2.g_high + gs)


def branch_period(vo2: Vo2Params, r_series: float, c_star: float, v_dd: float) -> float:
    """Relaxation period of one branch: rise from v_low to v_high plus fall back."""
    gs = 1.0 / r_series
    v_max, v_min = swing_limits(vo2, r_series, v_dd)
    if not (v_min < vo2.v_low < vo2.v_high < v_max):
        raise NotOscillatingError(
            f"branch latches: need v_min < v_low < v_high < v_max, got "
            f"v_min={v_min:.4g}, v_low={vo2.v_low:.4g}, v_high={vo2.v_high:.4g}, v_max={v_max:.4g}")
    rise = math.log((v_max - vo2.v_low) / (v_max - vo2.v_high)) / (vo2.g_low + gs)
    fall = math.log((v_min - vo2.v_high) / (v_min - vo2.v_low)) / (vo2.g_high + gs)
    return c_star * (rise + fall)


def analytic_period(p: NeuronParams) -> float:
    """Period of a differential neuron with the output-node capacitance lumped as C + C_c."""
    return branch_period(p.vo2, p.r_series, p.c_parallel + p.c_coupling, p.v_dd)


@dataclass(frozen=True)
class PowerSchedule:
    t_on: np.ndarray

    def __post_init__(self):
        t_on = np.asarray(self.t_on, dtype=float)
        if np.any(t_on < 0):
            raise ValueError("supply enable times must be non-negative")
        object.__setattr__(self, "t_on", t_on)

    @classmethod
    def simultaneous(cls, n_nodes: int) -> "PowerSchedule":
        return cls(np.zeros(n_nodes))


def _check_pattern(pattern) -> np.ndarray:
    b = np.asarray(pattern)
    if b.ndim != 1 or not np.all((b == 1) | (b == -1)):
        raise ValueError("pattern pixels must be +1 or -1")
    return b.astype(int)


def schedule_from_pattern(pattern, nominal_period: float) -> PowerSchedule:
    """Phase-initialize a differential network: the leading branch starts at 0, the other at T/2."""
    b = _check_pattern(pattern)
    half = 0.5 * nominal_period
    t_on = np.empty(2 * b.size)
    t_on[0::2] = np.where(b == 1, 0.0, half)
    t_on[1::2] = np.where(b == 1, half, 0.0)
    return PowerSchedule(t_on)


def single_ended_schedule(pattern, nominal_period: float) -> PowerSchedule:
    b = _check_pattern(pattern)
    return PowerSchedule(np.where(b == 1, 0.0, 0.5 * nominal_period))


@dataclass(frozen=True)
class SimConfig:
    dt: float = 2e-9
    duration: float | None = None  # None: n_periods nominal periods
    n_periods: float = 50
    record_stride: int = 1
    device_mode: DeviceMode = DeviceMode.SMOOTH

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.duration is not None and self.duration < 0:
            raise ValueError("duration must be non-negative")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        object.__setattr__(self, "device_mode", DeviceMode(self.device_mode))

    def resolved_duration(self, nominal_period: float) -> float:
        if self.duration is not None:
            return self.duration
        return self.n_periods * nominal_period


@dataclass(frozen=True)
class Trace:
    times: np.ndarray
    voltages: np.ndarray  # (n_samples, n_nodes)
    states: np.ndarray    # (n_samples, n_nodes)
    node_names: tuple[str, ...]
    nominal_period: float

    def __len__(self):
        return self.times.size

    @property
    def sample_interval(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else math.nan

    def channel(self, name: str | int) -> np.ndarray:
        k = name if isinstance(name, (int, np.integer)) else self.node_names.index(name)
        return self.voltages[:, k]

    def to_csv(self, path, nodes: Sequence[str] | None = None) -> None:
        nodes = list(self.node_names if nodes is None else nodes)
        cols = [self.node_names.index(nm) for nm in nodes]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", *nodes])
            for t, row in zip(self.times, self.voltages[:, cols]):
                w.writerow([f"{t:.9g}", *(f"{x:.9g}" for x in row)])


@dataclass(frozen=True)
class CircuitArrays:
    """Per-node parameter arrays of a compiled netlist."""

    node_names: tuple[str, ...]
    cap: np.ndarray
    cap_inv: np.ndarray
    conductance: np.ndarray  # symmetric inter-node conductances, zero diagonal
    g_series: np.ndarray
    v_dd: np.ndarray
    v_high: np.ndarray
    v_low: np.ndarray
    g_low: np.ndarray
    g_high: np.ndarray
    tau: np.ndarray
    cmp_slope: np.ndarray
    laplacian: np.ndarray = field(init=False)

    def __post_init__(self):
        lap = self.conductance - np.diag(self.conductance.sum(axis=1))
        object.__setattr__(self, "laplacian", lap)

    @property
    def n_nodes(self) -> int:
        return len(self.node_names)


def assemble_capacitance_matrix(netlist: Netlist) -> np.ndarray:
    n = netlist.n_nodes
    cap = np.zeros((n, n))
    for c in netlist.components:
        if c.kind == "c_parallel":
            (k,) = c.nodes
            cap[k, k] += c.value
        elif c.kind in ("c_coupling", "c_synapse"):
            k, l = c.nodes
            cap[k, k] += c.value
            cap[l, l] += c.value
            cap[k, l] -= c.value
            cap[l, k] -= c.value
    try:
        np.linalg.cholesky(cap)
    except np.linalg.LinAlgError:
        raise ValueError("capacitance matrix is not positive definite") from None
    return cap


def compile_netlist(netlist: Netlist) -> CircuitArrays:
    n = netlist.n_nodes
    per_node = {kind: [None] * n for kind in ("supply", "r_series", "vo2")}
    g = np.zeros((n, n))
    for c in netlist.components:
        if c.kind in per_node:
            (k,) = c.nodes
            if per_node[c.kind][k] is not None:
                raise ValueError(f"node {netlist.node_names[k]} has two {c.kind} components")
            per_node[c.kind][k] = c.value
        elif c.kind == "memristor":
            k, l = c.nodes
            cond = 0.0 if math.isinf(c.value) else 1.0 / c.value
            g[k, l] += cond
            g[l, k] += cond
    for kind, vals in per_node.items():
        if any(v is None for v in vals):
            raise ValueError(f"every node needs a {kind} component")
    cap = assemble_capacitance_matrix(netlist)
    vo2s: list[Vo2Params] = per_node["vo2"]
    return CircuitArrays(
        node_names=netlist.node_names,
        cap=cap,
        cap_inv=np.linalg.inv(cap),
        conductance=g,
        g_series=1.0 / np.array(per_node["r_series"], dtype=float),
        v_dd=np.array(per_node["supply"], dtype=float),
        v_high=np.array([p.v_high for p in vo2s]),
        v_low=np.array([p.v_low for p in vo2s]),
        g_low=np.array([p.g_low for p in vo2s]),
        g_high=np.array([p.g_high for p in vo2s]),
        tau=np.array([p.tau for p in vo2s]),
        cmp_slope=np.array([p.cmp_slope for p in vo2s]),
    )


def _arrays(circuit) -> CircuitArrays:
    return circuit if isinstance(circuit, CircuitArrays) else compile_netlist(circuit)


def node_currents(circuit, v, s, t: float, schedule: PowerSchedule) -> np.ndarray:
    """Net current (A) injected into each node's capacitance."""
    a = _arrays(circuit)
    v = np.asarray(v, dtype=float)
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    v_sup = np.where(t >= schedule.t_on, a.v_dd, 0.0)
    g_vo2 = a.g_low + (a.g_high - a.g_low) * s
    return a.g_series * (v_sup - v) - g_vo2 * v + a.laplacian @ v


def nominal_branch_period(a: CircuitArrays, node: int = 0) -> float:
    vo2 = Vo2Params(v_high=a.v_high[node], v_low=a.v_low[node], r_high=1 / a.g_low[node],
                    r_low=1 / a.g_high[node], tau=a.tau[node], cmp_slope=a.cmp_slope[node])
    return branch_period(vo2, 1 / a.g_series[node], a.cap[node, node], a.v_dd[node])


def simulate(circuit, schedule: PowerSchedule, cfg: SimConfig = SimConfig(),
             nominal_period: float | None = None) -> Trace:
    """Integrate from the all-zero state with fixed-step RK4."""
    a = _arrays(circuit)
    if schedule.t_on.shape != (a.n_nodes,):
        raise ValueError(f"schedule has {schedule.t_on.size} entries for {a.n_nodes} nodes")
    if nominal_period is None:
        try:
            nominal_period = nominal_branch_period(a)
        except NotOscillatingError as exc:
            warnings.warn(f"nominal branch does not oscillate: {exc}", stacklevel=2)
            nominal_period = math.nan
    duration = cfg.resolved_duration(nominal_period)
    if not math.isfinite(duration):
        raise ValueError("duration needed when the nominal period is undefined")
    ideal = cfg.device_mode is DeviceMode.IDEAL_SWITCH
    tau_min = float(a.tau.min())
    if ideal and tau_min == 0:
        pass
    elif tau_min <= 0:
        raise ValueError("smooth mode needs tau > 0")
    elif cfg.dt > tau_min / 20 * (1 + 1e-9):
        raise ValueError(f"dt={cfg.dt:g} exceeds tau/20={tau_min / 20:g}")

    n_steps = int(round(duration / cfg.dt))
    if n_steps == 0:
        empty = np.empty((0, a.n_nodes))
        return Trace(np.empty(0), empty, empty.copy(), a.node_names, nominal_period)
    n_rec = n_steps // cfg.record_stride + 1
    v_out = np.empty((n_rec, a.n_nodes))
    s_out = np.empty((n_rec, a.n_nodes))
    step, node = _kernel.integrate(
        a.cap_inv, a.laplacian, a.g_series, a.v_dd, schedule.t_on, a.v_high, a.v_low,
        a.g_low, a.g_high, a.tau, a.cmp_slope, ideal, cfg.dt, n_steps, cfg.record_stride,
        v_out, s_out)
    if step >= 0:
        raise SimulationError(
            f"non-finite state at node {a.node_names[node]} (t={step * cfg.dt:.6g} s); "
            f"reduce dt")
    times = np.arange(n_rec) * (cfg.dt * cfg.record_stride)
    return Trace(times, v_out, s_out, a.node_names, nominal_period)
