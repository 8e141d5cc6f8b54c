"""Frequency sensitivities and design-space exploration grids.

Sensitivities are normalized derivatives ``(x/f) df/dx`` of the analytic
natural frequency, taken by central finite differences. The DSE helpers only
build and reduce grids; the per-cell evaluation (training, simulation,
scoring) is passed in as a callable so this module stays simulation-free.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .netlist import NeuronParams
from .storage import InfeasibleCouplingError, g0_feasible_interval
from .transient import NotOscillatingError, analytic_period

__all__ = [
    "SENSITIVITY_PARAMETERS",
    "LUMPED_CAPACITANCE",
    "SensitivityReport",
    "Surface",
    "DsePoint",
    "DseResult",
    "get_parameter",
    "set_parameter",
    "set_parameters",
    "natural_frequency",
    "sensitivity",
    "sensitivity_report",
    "sensitivity_surface",
    "max_tolerated_rsd",
    "stage1_cells",
    "dse_stage1",
    "dse_stage2",
    "write_long_csv",
]

SENSITIVITY_PARAMETERS = ("V_H", "V_L", "R_H", "R_L", "R_S", "C", "C_c")
LUMPED_CAPACITANCE = "C_star"  # C and C_c scaled together
REL_STEP = 1e-6
MIN_THRESHOLD_GAP = 0.4  # volts between v_high and v_low in the stage-1 grid
PASS_LEVEL = 0.8

_VO2_FIELD = {"V_H": "v_high", "V_L": "v_low", "R_H": "r_high", "R_L": "r_low"}
_NEURON_FIELD = {"R_S": "r_series", "C": "c_parallel", "C_c": "c_coupling"}


def get_parameter(p: NeuronParams, name: str) -> float:
    if name in _VO2_FIELD:
        return getattr(p.vo2, _VO2_FIELD[name])
    if name in _NEURON_FIELD:
        return getattr(p, _NEURON_FIELD[name])
    if name == LUMPED_CAPACITANCE:
        return p.c_parallel + p.c_coupling
    raise KeyError(f"unknown parameter {name!r}")


def set_parameter(p: NeuronParams, name: str, value: float) -> NeuronParams:
    if name in _VO2_FIELD:
        return replace(p, vo2=replace(p.vo2, **{_VO2_FIELD[name]: float(value)}))
    if name in _NEURON_FIELD:
        return replace(p, **{_NEURON_FIELD[name]: float(value)})
    if name == LUMPED_CAPACITANCE:
        k = value / get_parameter(p, LUMPED_CAPACITANCE)
        return replace(p, c_parallel=p.c_parallel * k, c_coupling=p.c_coupling * k)
    raise KeyError(f"unknown parameter {name!r}")


def set_parameters(p: NeuronParams, values: dict[str, float]) -> NeuronParams:
    """Apply several parameters at once (VO2 fields are validated together)."""
    vo2 = {_VO2_FIELD[k]: float(v) for k, v in values.items() if k in _VO2_FIELD}
    if vo2:
        p = replace(p, vo2=replace(p.vo2, **vo2))
    for k, v in values.items():
        if k not in _VO2_FIELD:
            p = set_parameter(p, k, v)
    return p


def natural_frequency(p: NeuronParams) -> float:
    return 1.0 / analytic_period(p)


def sensitivity(name: str, point: NeuronParams, rel_step: float = REL_STEP) -> float:
    """Normalized frequency sensitivity to one parameter by central difference.

    Raises NotOscillatingError if either stencil point latches.
    """
    x = get_parameter(point, name)
    h = rel_step * x
    f_plus = natural_frequency(set_parameter(point, name, x + h))
    f_minus = natural_frequency(set_parameter(point, name, x - h))
    f0 = natural_frequency(point)
    return (x / f0) * (f_plus - f_minus) / (2.0 * h)


@dataclass(frozen=True)
class SensitivityReport:
    point: NeuronParams
    values: dict[str, float]

    def ranking(self) -> list[str]:
        """Parameter names by decreasing magnitude."""
        return sorted(self.values, key=lambda k: -abs(self.values[k]))


def sensitivity_report(point: NeuronParams, names: Sequence[str] = SENSITIVITY_PARAMETERS,
                       rel_step: float = REL_STEP) -> SensitivityReport:
    return SensitivityReport(point, {nm: sensitivity(nm, point, rel_step) for nm in names})


@dataclass(frozen=True)
class Surface:
    """Values on an (x, y) grid; NaN where the point is masked."""

    x_name: str
    y_name: str
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray  # shape (len(x), len(y))

    def rows(self):
        for i, xv in enumerate(self.x):
            for j, yv in enumerate(self.y):
                yield float(xv), float(yv), float(self.values[i, j])


def sensitivity_surface(x_name: str, y_name: str, x_grid, y_grid, point: NeuronParams,
                        target: str = "V_H", valid: Callable[[float, float], bool] | None = None,
                        rel_step: float = REL_STEP) -> Surface:
    """Sensitivity to ``target`` over a two-parameter grid.

    Points that latch, or that ``valid`` rejects, are NaN.
    """
    xs = np.asarray(x_grid, dtype=float)
    ys = np.asarray(y_grid, dtype=float)
    out = np.full((xs.size, ys.size), np.nan)
    for i, xv in enumerate(xs):
        for j, yv in enumerate(ys):
            if valid is not None and not valid(xv, yv):
                continue
            try:
                p = set_parameters(point, {x_name: xv, y_name: yv})
                out[i, j] = sensitivity(target, p, rel_step)
            except (NotOscillatingError, ValueError):
                pass
    return Surface(x_name, y_name, xs, ys, out)


def max_tolerated_rsd(rsd_grid: Sequence[float], syn, stb, acc,
                      threshold: float = PASS_LEVEL) -> float:
    """Largest grid rsd whose averaged syn, stb and acc all exceed ``threshold``; 0 if none."""
    rsd = np.asarray(rsd_grid, dtype=float)
    ok = ((np.asarray(syn) > threshold) & (np.asarray(stb) > threshold)
          & (np.asarray(acc) > threshold))
    return float(rsd[ok].max()) if ok.any() else 0.0


@dataclass
class DsePoint:
    coords: dict[str, float]
    rsd_grid: tuple[float, ...]
    params: NeuronParams
    g0: float = math.nan
    status: str = "ok"  # or "infeasible"
    syn: list[float] = field(default_factory=list)
    stb: list[float] = field(default_factory=list)
    acc: list[float] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status == "ok"

    @property
    def max_tolerated_rsd(self) -> float:
        if not self.feasible:
            return math.nan
        return max_tolerated_rsd(self.rsd_grid, self.syn, self.stb, self.acc)


@dataclass
class DseResult:
    x_name: str
    y_name: str
    points: list[DsePoint]

    def best(self) -> DsePoint:
        """Cell with the largest tolerated rsd; ties go to the smallest x, then smallest y."""
        cand = [p for p in self.points if p.feasible]
        if not cand:
            raise ValueError("no feasible cell")
        return min(cand, key=lambda p: (-p.max_tolerated_rsd, p.coords[self.x_name],
                                        p.coords[self.y_name]))

    def surface_rows(self, metric: str, rsd_index: int | None = None):
        """``(x, y, value)`` rows; ``metric`` is syn/stb/acc (at ``rsd_index``) or max_rsd."""
        for p in self.points:
            x, y = p.coords[self.x_name], p.coords[self.y_name]
            if metric == "max_rsd":
                yield x, y, p.max_tolerated_rsd
            elif not p.feasible:
                yield x, y, math.nan
            else:
                yield x, y, getattr(p, metric)[rsd_index]


# evaluate(params, g0, rsd) -> (syn, stb, acc) averaged over trials and test patterns
CellEvaluator = Callable[[NeuronParams, float, float], tuple[float, float, float]]


def stage1_cells(vh_grid, vl_grid, gap: float = MIN_THRESHOLD_GAP) -> list[tuple[float, float]]:
    """Grid pairs satisfying ``v_high >= v_low + gap`` in (v_high, v_low) order."""
    return [(float(vh), float(vl)) for vh in vh_grid for vl in vl_grid
            if vh >= vl + gap - 1e-9]


def _run_cells(cells, x_name, y_name, base, rsd_grid, n, evaluate, safety):
    points = []
    for xv, yv in cells:
        pt = DsePoint({x_name: xv, y_name: yv}, tuple(rsd_grid), base)
        try:
            pt.params = p = set_parameters(base, {x_name: xv, y_name: yv})
            analytic_period(p)
            _, pt.g0 = g0_feasible_interval(n, p, safety)
        except (NotOscillatingError, InfeasibleCouplingError, ValueError):
            pt.status = "infeasible"
            points.append(pt)
            continue
        for rsd in rsd_grid:
            s, b, a = evaluate(p, pt.g0, rsd)
            pt.syn.append(s)
            pt.stb.append(b)
            pt.acc.append(a)
        points.append(pt)
    return points


def dse_stage1(vh_grid, vl_grid, rsd_grid, n: int, evaluate: CellEvaluator,
               base: NeuronParams, safety: float = 0.9,
               extra_cells: Sequence[tuple[float, float]] = ()) -> DseResult:
    """Threshold-voltage grid; cells breaking the minimum gap are left out.

    ``extra_cells`` adds individual (v_high, v_low) points, e.g. a baseline.
    """
    cells = stage1_cells(vh_grid, vl_grid)
    for vh, vl in extra_cells:
        c = (float(vh), float(vl))
        if c[0] >= c[1] + MIN_THRESHOLD_GAP - 1e-9 and c not in cells:
            cells.append(c)
    return DseResult("V_H", "V_L", _run_cells(cells, "V_H", "V_L", base, rsd_grid, n,
                                              evaluate, safety))


def dse_stage2(rh_grid, rl_grid, rsd_grid, n: int, evaluate: CellEvaluator,
               base: NeuronParams, safety: float = 0.9) -> DseResult:
    """Resistance grid at fixed thresholds (take ``base`` from the stage-1 optimum)."""
    cells = [(float(rh), float(rl)) for rh in rh_grid for rl in rl_grid]
    return DseResult("R_H", "R_L", _run_cells(cells, "R_H", "R_L", base, rsd_grid, n,
                                              evaluate, safety))


def write_long_csv(path, rows) -> None:
    """``x,y,value`` long-format surface; NaN is written as ``nan``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "value"])
        for x, y, v in rows:
            w.writerow([f"{x:.9g}", f"{y:.9g}", f"{v:.9g}"])
