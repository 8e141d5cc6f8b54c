import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from donnsim.devices import DeviceMode, vo2_state_derivative
from donnsim.metrics import detect_peaks
from donnsim.netlist import BridgeConductances, NeuronParams, build_donn, build_single_ended
from donnsim.transient import (NotOscillatingError, PowerSchedule, SimConfig, analytic_period,
                               branch_period, compile_netlist, node_currents, schedule_from_pattern,
                               simulate, single_ended_schedule, swing_limits)

from oracles import branch_period_by_events

# direct evaluation of the two-phase RC period at the default neuron
NOMINAL_PERIOD = 1.0005822209620847e-06


def isolated_branch(nom):
    return build_single_ended(2, {(0, 1): (math.inf, 0.0)}, nom)


def measured_period(trace, period_guess, channel=0, skip=5):
    pk = detect_peaks(trace, channel, period_guess, transient_cycles=skip)
    return float(np.median(np.diff(pk)))


def test_analytic_period_value(nominal):
    assert analytic_period(nominal) == pytest.approx(NOMINAL_PERIOD, rel=1e-12)


def test_swing_limits(nominal):
    v_max, v_min = swing_limits(nominal.vo2, nominal.r_series, nominal.v_dd)
    assert v_max == pytest.approx(2.3585, abs=1e-4)
    assert v_min == pytest.approx(0.35714, abs=1e-5)


def test_period_matches_event_integration(nominal):
    vo2 = nominal.vo2
    c_star = nominal.c_parallel + nominal.c_coupling
    ref = branch_period_by_events(nominal.v_dd, nominal.r_series, vo2.r_high, vo2.r_low,
                                  vo2.v_high, vo2.v_low, c_star)
    assert analytic_period(nominal) == pytest.approx(ref, rel=1e-8)


@given(k=st.floats(0.1, 10.0))
def test_period_linear_in_capacitance(k):
    nom = NeuronParams()
    scaled = nom.with_(c_parallel=nom.c_parallel * k, c_coupling=nom.c_coupling * k)
    assert analytic_period(scaled) == pytest.approx(k * analytic_period(nom), rel=1e-12)


def test_doubling_capacitance_doubles_period(nominal):
    doubled = nominal.with_(c_parallel=2 * nominal.c_parallel, c_coupling=2 * nominal.c_coupling)
    assert analytic_period(doubled) == 2 * analytic_period(nominal)


@pytest.mark.parametrize("v_high, v_low", [(2.4, 1.0), (2.0, 0.3)])
def test_latching_branch(nominal, v_high, v_low):
    vo2 = nominal.vo2.with_(v_high=v_high, v_low=v_low)
    with pytest.raises(NotOscillatingError):
        branch_period(vo2, nominal.r_series, 1e-10, nominal.v_dd)


def test_node_currents_examples(nominal):
    net = isolated_branch(nominal)
    a = compile_netlist(net)
    off = PowerSchedule(np.array([1.0, 1.0]))
    np.testing.assert_array_equal(node_currents(a, [0, 0], [0, 0], 0.0, off), [0, 0])
    on = PowerSchedule.simultaneous(2)
    i = node_currents(a, [0, 0], [0, 0], 0.0, on)
    assert i[0] == pytest.approx(2.5 / 6e3, rel=1e-12)
    assert i[0] == pytest.approx(4.1667e-4, rel=1e-4)


def test_bridge_carries_no_current_at_equal_voltages(nominal):
    net = build_donn(2, {(0, 1): BridgeConductances(1e-5, 5e-6)}, nominal)
    a = compile_netlist(net)
    v = np.full(4, 1.3)
    assert np.all(a.laplacian @ v == pytest.approx(0.0, abs=1e-18))


def test_schedules():
    s = schedule_from_pattern([1], 1e-6)
    np.testing.assert_allclose(s.t_on, [0.0, 0.5e-6])
    np.testing.assert_allclose(schedule_from_pattern([-1], 1e-6).t_on, [0.5e-6, 0.0])
    white = schedule_from_pattern([1, 1, 1], 1e-6).t_on
    assert np.all(white[0::2] == 0) and np.all(white[1::2] == 0.5e-6)
    np.testing.assert_allclose(single_ended_schedule([1, -1], 2e-6).t_on, [0.0, 1e-6])
    with pytest.raises(ValueError):
        schedule_from_pattern([1, 0], 1e-6)


def test_zero_duration_gives_empty_trace(nominal):
    tr = simulate(build_donn(1, {}, nominal), PowerSchedule.simultaneous(2),
                  SimConfig(duration=0.0))
    assert len(tr) == 0


def test_step_must_resolve_tau(nominal):
    with pytest.raises(ValueError, match="tau/20"):
        simulate(build_donn(1, {}, nominal), PowerSchedule.simultaneous(2), SimConfig(dt=1e-8))


def test_schedule_length_checked(nominal):
    with pytest.raises(ValueError):
        simulate(build_donn(1, {}, nominal), PowerSchedule.simultaneous(3))


def test_kernel_matches_adaptive_reference(nominal):
    """Compiled RK4 trajectory against scipy's adaptive integrator on the same equations."""
    net = build_donn(2, {(0, 1): BridgeConductances(8e-6, 4e-6)}, nominal)
    a = compile_netlist(net)
    sched = schedule_from_pattern([1, -1], 1.25e-6)
    duration = 3e-6
    tr = simulate(a, sched, SimConfig(dt=1e-9, duration=duration))
    vo2 = nominal.vo2
    times = [0.8e-6, 1.7e-6, 2.9e-6]

    def rhs(t, y):
        v, s = y[:4], y[4:]
        dv = a.cap_inv @ node_currents(a, v, s, t, sched)
        return np.concatenate([dv, vo2_state_derivative(v, s, vo2)])

    ref = solve_ivp(rhs, (0, duration), np.zeros(8), t_eval=times, method="LSODA",
                    rtol=1e-9, atol=1e-12, max_step=1e-9)
    for k, t in enumerate(times):
        idx = int(round(t / 1e-9))
        np.testing.assert_allclose(tr.voltages[idx], ref.y[:4, k], atol=2e-3)


def test_ideal_switch_period_close_to_analytic(nominal):
    nom = nominal.with_(vo2=nominal.vo2.with_(tau=0.0))
    net = isolated_branch(nom)
    t_a = branch_period(nom.vo2, nom.r_series, nom.c_parallel, nom.v_dd)
    tr = simulate(net, PowerSchedule.simultaneous(2),
                  SimConfig(dt=0.25e-9, n_periods=15, device_mode=DeviceMode.IDEAL_SWITCH))
    assert measured_period(tr, t_a) == pytest.approx(t_a, rel=0.003)


def test_smooth_converges_to_ideal_switch(nominal):
    """Sharp comparator and fast relaxation: smooth and ideal periods agree within 2%."""
    periods = {}
    for mode, slope in ((DeviceMode.SMOOTH, 2000.0), (DeviceMode.IDEAL_SWITCH, 40.0)):
        nom = nominal.with_(vo2=nominal.vo2.with_(tau=1e-9, cmp_slope=slope))
        tr = simulate(isolated_branch(nom), PowerSchedule.simultaneous(2),
                      SimConfig(dt=2e-11, n_periods=12, device_mode=mode))
        periods[mode] = measured_period(tr, analytic_period(nom))
    ratio = periods[DeviceMode.SMOOTH] / periods[DeviceMode.IDEAL_SWITCH]
    assert abs(ratio - 1) < 0.02


def test_step_halving(nominal):
    net = isolated_branch(nominal)
    t_a = analytic_period(nominal)
    p1 = measured_period(simulate(net, PowerSchedule.simultaneous(2),
                                  SimConfig(dt=2e-9, n_periods=25)), t_a)
    p2 = measured_period(simulate(net, PowerSchedule.simultaneous(2),
                                  SimConfig(dt=1e-9, n_periods=25)), t_a)
    assert abs(p1 / p2 - 1) < 1e-3


def test_voltages_stay_within_swing(nominal):
    net = build_donn(3, {(0, 1): BridgeConductances(8e-6, 4e-6),
                         (0, 2): BridgeConductances(4e-6, 8e-6),
                         (1, 2): BridgeConductances(8e-6, 4e-6)}, nominal)
    tr = simulate(net, schedule_from_pattern([1, -1, 1], 1.25e-6), SimConfig(n_periods=20))
    v_max, v_min = swing_limits(nominal.vo2, nominal.r_series, nominal.v_dd)
    late = tr.voltages[tr.times > 5 * 1.25e-6]
    assert late.max() <= v_max + 0.1
    assert late.min() >= v_min - 0.1


def test_simulation_is_bitwise_deterministic(nominal):
    net = build_donn(2, {(0, 1): BridgeConductances(8e-6, 4e-6)}, nominal)
    sched = schedule_from_pattern([1, 1], 1.25e-6)
    a = simulate(net, sched, SimConfig(n_periods=5))
    b = simulate(net, sched, SimConfig(n_periods=5))
    assert np.array_equal(a.voltages, b.voltages) and np.array_equal(a.states, b.states)


def test_record_stride(nominal):
    net = build_donn(1, {}, nominal)
    sched = schedule_from_pattern([1], 1e-6)
    full = simulate(net, sched, SimConfig(n_periods=2))
    thin = simulate(net, sched, SimConfig(n_periods=2, record_stride=5))
    np.testing.assert_array_equal(full.voltages[::5], thin.voltages)


def test_complement_swaps_branch_roles(nominal):
    """Driving the complement pattern exchanges the p and n traces exactly."""
    w = BridgeConductances(8e-6, 4e-6)
    net = build_donn(2, {(0, 1): w}, nominal)
    a = simulate(net, schedule_from_pattern([1, -1], 1.25e-6), SimConfig(n_periods=6))
    b = simulate(net, schedule_from_pattern([-1, 1], 1.25e-6), SimConfig(n_periods=6))
    swap = [1, 0, 3, 2]
    np.testing.assert_allclose(a.voltages, b.voltages[:, swap], atol=1e-12)


def test_trace_csv(tmp_path, nominal):
    tr = simulate(build_donn(1, {}, nominal), schedule_from_pattern([1], 1e-6),
                  SimConfig(n_periods=0.01))
    path = tmp_path / "t.csv"
    tr.to_csv(path, nodes=["p0"])
    lines = path.read_text().splitlines()
    assert lines[0] == "time,p0"
    assert len(lines) == len(tr) + 1
