import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from donnsim import analysis
from donnsim.analysis import (DsePoint, DseResult, dse_stage1, dse_stage2, get_parameter,
                              max_tolerated_rsd, sensitivity, sensitivity_report,
                              sensitivity_surface, set_parameter, set_parameters, stage1_cells)

from oracles import nominal_values, symbolic_sensitivities

FROZEN = {"V_H": -3.909152842, "V_L": 0.659066278, "R_H": 0.134784405, "R_L": -0.112375373,
          "R_S": -1.022409032, "C": -0.909090909, "C_c": -0.090909091}


def test_sensitivities_match_symbolic_derivative(nominal):
    exact = symbolic_sensitivities(nominal_values())
    report = sensitivity_report(nominal)
    for name, value in report.values.items():
        assert value == pytest.approx(exact[name], rel=1e-6), name
        assert value == pytest.approx(FROZEN[name], rel=1e-6), name


def test_step_halving_agrees(nominal):
    for name in FROZEN:
        a = sensitivity(name, nominal, 1e-6)
        b = sensitivity(name, nominal, 5e-7)
        assert float(f"{a:.4g}") == float(f"{b:.4g}"), name


def test_lumped_capacitance_is_minus_one(nominal):
    assert sensitivity("C_star", nominal) == pytest.approx(-1.0, abs=1e-8)


def test_capacitance_parts_sum_to_lumped(nominal):
    assert sensitivity("C", nominal) + sensitivity("C_c", nominal) == pytest.approx(-1.0, abs=1e-8)


def test_ranking_is_by_magnitude(nominal):
    assert sensitivity_report(nominal).ranking()[:3] == ["V_H", "R_S", "C"]


def test_parameter_access_roundtrip(nominal):
    for name in list(FROZEN) + ["C_star"]:
        x = get_parameter(nominal, name)
        assert get_parameter(set_parameter(nominal, name, 1.01 * x), name) == pytest.approx(1.01 * x)
    with pytest.raises(KeyError):
        get_parameter(nominal, "V_dd")


def test_joint_threshold_update(nominal):
    # setting V_L above the old V_H is only legal together with the new V_H
    p = set_parameters(nominal, {"V_L": 2.1, "V_H": 2.3})
    assert (p.vo2.v_high, p.vo2.v_low) == (2.3, 2.1)


def test_sensitivity_raises_when_latched(nominal):
    from donnsim.transient import NotOscillatingError
    p = set_parameter(nominal, "V_H", 2.3585)
    with pytest.raises(NotOscillatingError):
        sensitivity("V_H", p)


def test_single_cell_surface(nominal):
    s = sensitivity_surface("R_H", "R_L", [100e3], [1e3], nominal)
    assert s.values.shape == (1, 1)
    assert s.values[0, 0] == pytest.approx(FROZEN["V_H"], rel=1e-6)


def test_surface_masks_invalid_cells(nominal):
    s = sensitivity_surface("V_H", "V_L", [1.2, 2.0, 2.4], [0.4, 1.0, 1.6], nominal,
                            valid=lambda vh, vl: vh >= vl + 0.4)
    assert math.isnan(s.values[0, 2])         # gap violated
    assert np.isnan(s.values[2]).all()        # above the insulating swing limit
    assert s.values[1, 1] == pytest.approx(FROZEN["V_H"], rel=1e-6)
    assert len(list(s.rows())) == 9


def test_magnitude_drops_with_larger_low_resistance(nominal):
    vals = [abs(sensitivity("V_H", set_parameter(nominal, "R_L", r))) for r in
            (500.0, 750.0, 1000.0, 1250.0, 1500.0)]
    assert np.all(np.diff(vals) < 0)


@pytest.mark.parametrize("syn, stb, acc, expected", [
    ([0.9, 0.9, 0.9], [0.9, 0.9, 0.9], [0.9, 0.85, 0.7], 0.002),
    ([0.9, 0.9, 0.9], [0.9, 0.9, 0.9], [0.9, 0.7, 0.9], 0.003),   # not required contiguous
    ([0.8, 0.8, 0.8], [0.9, 0.9, 0.9], [0.9, 0.9, 0.9], 0.0),     # strict comparison
    ([0.5, 0.5, 0.5], [0.5, 0.5, 0.5], [0.5, 0.5, 0.5], 0.0),
])
def test_max_tolerated_rsd(syn, stb, acc, expected):
    assert max_tolerated_rsd([0.001, 0.002, 0.003], syn, stb, acc) == expected


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)), min_size=1,
                max_size=8))
def test_max_tolerated_rsd_is_a_passing_grid_value(metrics):
    grid = [0.001 * (k + 1) for k in range(len(metrics))]
    syn, stb, acc = zip(*metrics)
    r = max_tolerated_rsd(grid, syn, stb, acc)
    if r > 0:
        k = grid.index(r)
        assert min(syn[k], stb[k], acc[k]) > 0.8
        assert all(min(m) <= 0.8 for m in metrics[k + 1:])
    else:
        assert all(min(m) <= 0.8 for m in metrics)


def test_stage1_cells_respect_gap():
    cells = stage1_cells([1.0, 1.4, 2.0], [0.6, 1.0, 1.6])
    assert (1.0, 0.6) in cells and (2.0, 1.6) in cells and (1.4, 1.6) not in cells
    assert (1.0, 1.0) not in cells and (1.4, 1.1) not in stage1_cells([1.4], [1.1])
    assert all(vh >= vl + 0.4 - 1e-9 for vh, vl in cells)


def _fake_evaluator(calls):
    def evaluate(params, g0, rsd):
        calls.append((params.vo2.v_high, params.vo2.v_low, params.vo2.r_high, g0, rsd))
        good = params.vo2.v_high < 1.8
        return (0.95, 0.95, 0.95) if good and rsd <= 0.002 else (0.5, 0.5, 0.5)
    return evaluate


def test_stage1_marks_infeasible_and_keeps_gap(nominal):
    calls = []
    res = dse_stage1([1.0, 1.4, 2.36], [0.6, 1.0], [0.001, 0.002, 0.003], 8,
                     _fake_evaluator(calls), nominal, extra_cells=[(2.0, 1.0), (1.0, 0.9)])
    coords = [(p.coords["V_H"], p.coords["V_L"]) for p in res.points]
    assert (1.0, 1.0) not in coords and (1.0, 0.9) not in coords
    infeasible = [p for p in res.points if not p.feasible]
    assert {p.coords["V_H"] for p in infeasible} == {2.36}
    assert all(math.isnan(p.max_tolerated_rsd) for p in infeasible)
    # g0 is recomputed for each cell
    g0s = {(vh, vl): g0 for vh, vl, _, g0, _ in calls}
    assert len(set(g0s.values())) == len(g0s)
    best = res.best()
    assert (best.coords["V_H"], best.coords["V_L"]) == (1.0, 0.6)   # tie goes to smallest
    assert best.max_tolerated_rsd == 0.002
    rows = list(res.surface_rows("acc", 0))
    assert len(rows) == len(res.points)


def test_stage2_sweeps_resistances_at_fixed_thresholds(nominal):
    calls = []
    base = set_parameters(nominal, {"V_H": 1.4, "V_L": 0.6})
    res = dse_stage2([100e3, 300e3], [500.0, 1500.0], [0.001], 8, _fake_evaluator(calls), base)
    assert len(res.points) == 4
    assert {(c[0], c[1]) for c in calls} == {(1.4, 0.6)}
    assert {c[2] for c in calls} == {100e3, 300e3}


def test_best_requires_a_feasible_cell(nominal):
    res = DseResult("V_H", "V_L", [DsePoint({"V_H": 1, "V_L": 0.5}, (0.001,), nominal,
                                            status="infeasible")])
    with pytest.raises(ValueError):
        res.best()


def test_write_long_csv(tmp_path):
    path = tmp_path / "s.csv"
    analysis.write_long_csv(path, [(1.0, 2.0, 0.5), (1.0, 3.0, math.nan)])
    assert path.read_text().splitlines() == ["x,y,value", "1,2,0.5", "1,3,nan"]
