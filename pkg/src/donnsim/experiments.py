"""Recall pipeline and experiment runners.

A trial draws stored and probe patterns, trains a network, perturbs one
parameter class, drives every probe into the network and scores the runs.
Every random draw comes from a substream keyed by (master seed, purpose, N,
trial[, parameter class]), so the same trial sees the same patterns and the
same normal deviates at every rsd level and at every grid cell.
"""
from __future__ import annotations

import csv
import functools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import analysis
from .config import ExperimentConfig, MappingSettings, SimulationSettings, SingleEndedSettings
from .devices import DeviceMode
from .metrics import MetricsReport, accuracy, detect_peaks, evaluate_trace, pattern_from_str, pattern_to_str
from .netlist import (DIFFERENTIAL, Netlist, NeuronParams, build_donn,
                      build_single_ended, netlist_to_json)
from .storage import (MappingParams, WeightMatrix, as_patterns, bridges_from_weights,
                      g0_feasible_interval, hebbian_weights, map_conductance)
from .transient import (SimConfig, SimulationError, compile_netlist, nominal_branch_period,
                        schedule_from_pattern, simulate, single_ended_schedule)
from .variability import MismatchSpec, apply_mismatch, branch_frequencies, substream, write_histogram

__all__ = [
    "DONN",
    "SINGLE_ENDED_NET",
    "RESULT_FIELDS",
    "AGGREGATE_FIELDS",
    "TrainedNetwork",
    "ProbeOutcome",
    "WorkItem",
    "ResultRow",
    "ResultStore",
    "RunSummary",
    "random_patterns",
    "probe_patterns",
    "train_donn",
    "train_single_ended",
    "calibrated_period",
    "recall",
    "run_probes",
    "score",
    "execute_trial",
    "aggregate",
    "run_train",
    "run_demo",
    "run_synapse_sweep",
    "run_neuron_sweep",
    "run_single_ended_compare",
    "run_sensitivity",
    "run_dse",
    "run_experiment",
]

DONN = "donn"
SINGLE_ENDED_NET = "single_ended"
MAX_PATTERN_DRAWS = 10_000


# ---------------------------------------------------------------- patterns

def random_patterns(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    """``count`` random +/-1 patterns, no two equal or complementary."""
    for _ in range(MAX_PATTERN_DRAWS):
        b = rng.choice(np.array([-1, 1]), size=(count, n))
        if all(abs(int(b[i] @ b[j])) < n for i in range(count) for j in range(i + 1, count)):
            return b.astype(int)
    raise ValueError(f"cannot draw {count} distinct patterns of length {n}")


def probe_patterns(rng: np.random.Generator, stored, count: int,
                   radius: int | None) -> np.ndarray:
    """Test inputs.

    With ``radius`` None every probe is uniformly random. Otherwise each probe
    is a uniformly chosen stored pattern with a uniformly chosen number
    (0..radius) of distinct pixels flipped.
    """
    stored = as_patterns(stored)
    p, n = stored.shape
    if radius is None:
        return rng.choice(np.array([-1, 1]), size=(count, n)).astype(int)
    out = np.empty((count, n), dtype=int)
    for k in range(count):
        x = stored[rng.integers(p)].copy()
        d = int(rng.integers(min(radius, n) + 1))
        x[rng.choice(n, size=d, replace=False)] *= -1
        out[k] = x
    return out


# ---------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainedNetwork:
    stored: np.ndarray
    weights: WeightMatrix
    netlist: Netlist
    conductance: np.ndarray | None = None  # strong-side conductance per pair (DONN)
    g0: float | None = None
    g0_bounds: tuple[float, float] | None = None

    @property
    def topology(self) -> str:
        return self.netlist.topology


def train_donn(stored, nominal: NeuronParams, mapping: MappingSettings = MappingSettings()
               ) -> TrainedNetwork:
    """Hebbian weights mapped onto memristor bridges; g0 from the oscillation bounds."""
    stored = as_patterns(stored)
    n = stored.shape[1]
    w = hebbian_weights(stored)
    bounds, g0 = g0_feasible_interval(n, nominal, mapping.g0_safety)
    if mapping.g0 is not None:
        g0 = mapping.g0
    mp = MappingParams(alpha=mapping.alpha, beta=mapping.beta, g0=g0)
    net = build_donn(n, bridges_from_weights(w, mp), nominal)
    return TrainedNetwork(stored, w, net, map_conductance(w, mp), g0, bounds)


def train_single_ended(stored, nominal: NeuronParams,
                       se: SingleEndedSettings = SingleEndedSettings()) -> TrainedNetwork:
    """One resistor-capacitor synapse per pair: low resistance for positive weights."""
    stored = as_patterns(stored)
    n = stored.shape[1]
    w = hebbian_weights(stored)
    c_syn = se.c_ratio * nominal.c_parallel
    syn = {}
    for i in range(n):
        for j in range(i + 1, n):
            if w.w[i, j] > 0:
                syn[(i, j)] = (se.r_positive, c_syn)
            elif w.w[i, j] < 0:
                syn[(i, j)] = (se.r_negative, c_syn)
            else:
                syn[(i, j)] = (math.inf, 0.0)
    return TrainedNetwork(stored, w, build_single_ended(n, syn, nominal))


def _train(network: str, stored, nominal: NeuronParams, cfg: ExperimentConfig) -> TrainedNetwork:
    if network == DONN:
        return train_donn(stored, nominal, cfg.mapping)
    if network == SINGLE_ENDED_NET:
        return train_single_ended(stored, nominal, cfg.single_ended)
    raise ValueError(f"unknown network kind {network!r}")


# ---------------------------------------------------------------- simulation

def _isolated(topology: str, nominal: NeuronParams) -> Netlist:
    if topology == DIFFERENTIAL:
        return build_donn(1, {}, nominal)
    return build_single_ended(2, {(0, 1): (math.inf, 0.0)}, nominal)


@functools.lru_cache(maxsize=512)
def calibrated_period(nominal: NeuronParams, topology: str = DIFFERENTIAL, dt: float = 2e-9,
                      device_mode: str = "smooth", n_periods: int = 40) -> float:
    """Simulated period of one isolated, mismatch-free neuron of the given topology.

    The analytic formula ignores the VO2 switching delay, so the supply
    stagger and the run length are set from this measured value instead.
    """
    arrays = compile_netlist(_isolated(topology, nominal))
    t_analytic = nominal_branch_period(arrays)
    schedule = _schedule(topology, np.ones(1 if topology == DIFFERENTIAL else 2, dtype=int),
                         t_analytic)
    trace = simulate(arrays, schedule,
                     SimConfig(dt=dt, n_periods=n_periods, device_mode=DeviceMode(device_mode)),
                     nominal_period=t_analytic)
    peaks = detect_peaks(trace, 0, t_analytic, transient_cycles=10)
    if peaks.size < 3:
        raise SimulationError("isolated neuron does not oscillate")
    return float(np.median(np.diff(peaks)))


def _schedule(topology: str, pattern, period: float):
    if topology == DIFFERENTIAL:
        return schedule_from_pattern(pattern, period)
    return single_ended_schedule(pattern, period)


def recall(netlist: Netlist, pattern, period: float, sim: SimulationSettings) -> MetricsReport:
    """Write ``pattern`` by staggered power-up, run ``sim.cycles`` periods and score the trace.

    ``period`` is the calibrated single-neuron period; it sets the stagger,
    the duration, the transient cutoff and the peak spacing.
    """
    cfg = SimConfig(dt=sim.dt, duration=sim.cycles * period,
                    device_mode=DeviceMode(sim.device_mode))
    trace = simulate(netlist, _schedule(netlist.topology, pattern, period), cfg,
                     nominal_period=period)
    return evaluate_trace(trace, netlist.topology, period, sim.transient_cycles, sim.window)


@dataclass
class ProbeOutcome:
    input: np.ndarray
    report: MetricsReport | None
    correct: bool
    error: str = ""

    @property
    def failed(self) -> bool:
        return self.report is None


def run_probes(netlist: Netlist, stored, probes, period: float,
               sim: SimulationSettings) -> list[ProbeOutcome]:
    out = []
    for x in as_patterns(probes):
        try:
            rep = recall(netlist, x, period, sim)
        except SimulationError as exc:
            out.append(ProbeOutcome(x, None, False, str(exc)))
            continue
        # unstable runs count as incorrect
        ok = rep.stable and accuracy(rep.final, stored, x)
        out.append(ProbeOutcome(x, rep, bool(ok)))
    return out


def score(outcomes: Sequence[ProbeOutcome]) -> tuple[float, float, float]:
    """Mean converged SYN, stable fraction and correct fraction; failed runs score 0."""
    if not outcomes:
        return math.nan, math.nan, math.nan
    syn = np.mean([o.report.syn_converged if o.report else 0.0 for o in outcomes])
    stb = np.mean([bool(o.report and o.report.stable) for o in outcomes])
    acc = np.mean([o.correct for o in outcomes])
    return float(syn), float(stb), float(acc)


# ---------------------------------------------------------------- result rows

RESULT_FIELDS = ("experiment", "network", "point", "N", "P", "parameter", "level", "rsd",
                 "trial", "seed", "syn", "stb", "acc", "freq_rsd", "n_probes", "n_failed",
                 "status")
KEY_FIELDS = ("experiment", "network", "point", "N", "parameter", "level", "trial")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    return str(x)


@dataclass(frozen=True)
class WorkItem:
    """One (point, trial) unit of work."""

    experiment: str
    network: str
    point: str
    n: int
    p: int
    parameter: str
    level: int
    rsd: float
    trial: int
    nominal: NeuronParams = field(default_factory=NeuronParams, compare=False)

    def key(self) -> tuple[str, ...]:
        return (self.experiment, self.network, self.point, str(self.n), self.parameter,
                str(self.level), str(self.trial))


@dataclass
class ResultRow:
    experiment: str
    network: str
    point: str
    N: int
    P: int
    parameter: str
    level: int
    rsd: float
    trial: int
    seed: int
    syn: float
    stb: float
    acc: float
    freq_rsd: float
    n_probes: int
    n_failed: int
    status: str
    wall_time: float = math.nan  # kept out of results.csv

    def key(self) -> tuple[str, ...]:
        return (self.experiment, self.network, self.point, str(self.N), self.parameter,
                str(self.level), str(self.trial))

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def record(self) -> dict[str, str]:
        return {k: _fmt(getattr(self, k)) for k in RESULT_FIELDS}

    @classmethod
    def from_record(cls, rec: dict[str, str]) -> "ResultRow":
        kw = {}
        for f in fields(cls):
            if f.name not in rec:
                continue
            v = rec[f.name]
            if f.name in ("N", "P", "level", "trial", "seed", "n_probes", "n_failed"):
                kw[f.name] = int(v)
            elif f.name in ("rsd", "syn", "stb", "acc", "freq_rsd", "wall_time"):
                kw[f.name] = float(v)
            else:
                kw[f.name] = v
        return cls(**kw)


def execute_trial(item: WorkItem, cfg: ExperimentConfig) -> ResultRow:
    """Run every probe of one trial; failures become a row with a failure status."""
    t0 = time.perf_counter()
    seed = cfg.seed
    n_probes = cfg.probe_count(item.n)
    syn = stb = acc = freq_rsd = math.nan
    n_failed = 0
    status = "ok"
    try:
        stored = random_patterns(substream(seed, "stored", item.n, item.trial), item.p, item.n)
        probes = probe_patterns(substream(seed, "probes", item.n, item.trial), stored,
                                n_probes, cfg.probes.radius)
        net = _train(item.network, stored, item.nominal, cfg)
        rng = substream(seed, "mismatch", item.n, item.trial, item.parameter)
        inst = apply_mismatch(net.netlist, MismatchSpec(item.parameter, item.rsd, seed), rng)
        _, freq_rsd, latched = branch_frequencies(inst)
        if latched:
            status = f"latched:{len(latched)}"
        period = calibrated_period(item.nominal, net.topology, cfg.simulation.dt,
                                   cfg.simulation.device_mode)
        outcomes = run_probes(inst.netlist, stored, probes, period, cfg.simulation)
        n_failed = sum(o.failed for o in outcomes)
        syn, stb, acc = score(outcomes)
    except (ValueError, SimulationError) as exc:
        status = f"failed:{type(exc).__name__}"
    return ResultRow(item.experiment, item.network, item.point, item.n, item.p, item.parameter,
                     item.level, item.rsd, item.trial, seed, syn, stb, acc, freq_rsd, n_probes,
                     n_failed, status, time.perf_counter() - t0)


class ResultStore:
    """Persists trial rows under ``out_dir``; rows already on disk are not recomputed.

    ``results.csv`` is rewritten on :meth:`close` in the order items were
    requested, so a resumed run ends with the same bytes as a fresh one.
    Wall times go to ``timing.csv``.
    """

    def __init__(self, out_dir, cfg: ExperimentConfig, threads: int = 1, resume: bool = True):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.threads = max(1, int(threads))
        self.done: dict[tuple, ResultRow] = {}
        self.order: list[tuple] = []
        self.path = self.out_dir / "results.csv"
        if resume and self.path.exists():
            with open(self.path, newline="", encoding="utf-8") as fh:
                for rec in csv.DictReader(fh):
                    row = ResultRow.from_record(rec)
                    self.done[row.key()] = row
        self._write_all(list(self.done.values()), self.path)

    @staticmethod
    def _write_all(rows: Iterable[ResultRow], path: Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, RESULT_FIELDS, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow(r.record())

    def run(self, items: Sequence[WorkItem]) -> list[ResultRow]:
        todo = [it for it in items if it.key() not in self.done]
        if todo:
            with ThreadPoolExecutor(max_workers=self.threads) as pool, \
                    open(self.path, "a", newline="", encoding="utf-8") as fh:
                w = csv.DictWriter(fh, RESULT_FIELDS, lineterminator="\n")
                # map yields in submission order: a single writer, deterministic order
                for row in pool.map(lambda it: execute_trial(it, self.cfg), todo):
                    self.done[row.key()] = row
                    w.writerow(row.record())
                    fh.flush()
        for it in items:
            if it.key() not in self.order:
                self.order.append(it.key())
        return [self.done[it.key()] for it in items]

    def rows(self) -> list[ResultRow]:
        seen = set(self.order)
        return [self.done[k] for k in self.order] + \
            [r for k, r in self.done.items() if k not in seen]

    def close(self, pool_parameters: bool = False) -> list[dict]:
        rows = self.rows()
        self._write_all(rows, self.path)
        with open(self.out_dir / "timing.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*KEY_FIELDS, "wall_time"])
            for r in rows:
                w.writerow([*r.key(), _fmt(r.wall_time)])
        agg = aggregate(rows, pool_parameters=pool_parameters)
        write_aggregate(self.out_dir / "aggregate.csv", agg)
        return agg


AGGREGATE_FIELDS = ("experiment", "network", "point", "N", "parameter", "level", "rsd",
                    "n_trials", "n_failed", "syn_mean", "syn_std", "stb_mean", "stb_std",
                    "acc_mean", "acc_std", "freq_rsd_mean", "freq_rsd_std")


def _mean_std(x: list[float]) -> tuple[float, float]:
    a = np.asarray([v for v in x if math.isfinite(v)], dtype=float)
    if a.size == 0:
        return math.nan, math.nan
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else math.nan


def aggregate(rows: Sequence[ResultRow], pool_parameters: bool = False) -> list[dict]:
    """Mean and sample std per point, plus rows pooled over N (``N=all``).

    With ``pool_parameters`` an extra ``parameter=all`` row per level pools
    every parameter class and size.
    """
    groups: dict[tuple, list[ResultRow]] = {}

    def add(key, r):
        groups.setdefault(key, []).append(r)

    for r in rows:
        add((r.experiment, r.network, r.point, str(r.N), r.parameter, r.level), r)
    for r in rows:
        add((r.experiment, r.network, r.point, "all", r.parameter, r.level), r)
    if pool_parameters:
        for r in rows:
            add((r.experiment, r.network, r.point, "all", "all", r.level), r)
    out = []
    for key, rs in groups.items():
        good = [r for r in rs if r.ok or r.status.startswith("latched")]
        rec = dict(zip(("experiment", "network", "point", "N", "parameter", "level"), key))
        rsds = {r.rsd for r in rs}
        rec["rsd"] = rsds.pop() if len(rsds) == 1 else math.nan
        rec["n_trials"] = len(rs)
        rec["n_failed"] = len(rs) - len(good)
        for m in ("syn", "stb", "acc", "freq_rsd"):
            rec[f"{m}_mean"], rec[f"{m}_std"] = _mean_std([getattr(r, m) for r in good])
        out.append(rec)
    return out


def write_aggregate(path, agg: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, AGGREGATE_FIELDS, lineterminator="\n")
        w.writeheader()
        for rec in agg:
            w.writerow({k: _fmt(v) for k, v in rec.items()})


def find_aggregate(agg: Sequence[dict], **match) -> list[dict]:
    return [a for a in agg if all(str(a[k]) == str(v) for k, v in match.items())]


@dataclass
class RunSummary:
    out_dir: Path
    rows: list[ResultRow] = field(default_factory=list)
    aggregate: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------- runners

def _items(cfg: ExperimentConfig, parameter: str, grid: Sequence[float], network: str = DONN,
           point: str = "", nominal: NeuronParams | None = None,
           sizes: Sequence[int] | None = None) -> list[WorkItem]:
    nominal = cfg.nominal() if nominal is None else nominal
    return [WorkItem(cfg.id, network, point, n, cfg.pattern_count(n), parameter, level,
                     float(rsd), trial, nominal)
            for n in (cfg.sizes if sizes is None else sizes)
            for level, rsd in enumerate(grid)
            for trial in range(cfg.trials)]


def _write_config(cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")


def run_synapse_sweep(cfg: ExperimentConfig, out, threads: int = 1) -> RunSummary:
    """Memristance mismatch over the rsd grid, every size and trial."""
    out = Path(out)
    _write_config(cfg, out)
    store = ResultStore(out, cfg, threads)
    items = []
    for parameter in cfg.parameters or ["memristance"]:
        items += _items(cfg, parameter, cfg.rsd_grid(parameter))
    rows = store.run(items)
    return RunSummary(out, rows, store.close())


def neuron_rsd_grid(cfg: ExperimentConfig, parameter: str) -> tuple[list[float], list[str]]:
    """Parameter rsd grid and point labels.

    With ``freq_rsd`` targets, each parameter rsd is target / |sensitivity| at
    the nominal point (first-order inverse of the frequency spread).
    """
    if cfg.freq_rsd:
        s = abs(analysis.sensitivity(parameter, cfg.nominal()))
        return ([t / s for t in cfg.freq_rsd],
                [f"target_freq_rsd={t:.9g}" for t in cfg.freq_rsd])
    grid = cfg.rsd_grid(parameter)
    return list(grid), [""] * len(grid)


def run_neuron_sweep(cfg: ExperimentConfig, out, threads: int = 1) -> RunSummary:
    """One neuron parameter class at a time, plus the all-class average."""
    out = Path(out)
    _write_config(cfg, out)
    store = ResultStore(out, cfg, threads)
    items = []
    for parameter in cfg.parameters or list(analysis.SENSITIVITY_PARAMETERS):
        grid, labels = neuron_rsd_grid(cfg, parameter)
        for level, (rsd, label) in enumerate(zip(grid, labels)):
            items += [replace(it, level=level) for it in
                      _items(cfg, parameter, [rsd], point=label)]
    rows = store.run(items)
    return RunSummary(out, rows, store.close(pool_parameters=True))


def _demo_run(cfg: ExperimentConfig, network: str, stored, x, nominal: NeuronParams,
              rsd: float = 0.0, parameter: str = "V_H", trial: int = 0):
    net = _train(network, stored, nominal, cfg)
    rng = substream(cfg.seed, "mismatch", stored.shape[1], trial, parameter)
    inst = apply_mismatch(net.netlist, MismatchSpec(parameter, rsd, cfg.seed), rng)
    period = calibrated_period(nominal, net.topology, cfg.simulation.dt, cfg.simulation.device_mode)
    sim = cfg.simulation
    sc = SimConfig(dt=sim.dt, duration=sim.cycles * period, device_mode=DeviceMode(sim.device_mode))
    trace = simulate(inst.netlist, _schedule(net.topology, x, period), sc, nominal_period=period)
    rep = evaluate_trace(trace, net.topology, period, sim.transient_cycles, sim.window)
    return net, trace, rep


def _report_lines(stored, x, rep: MetricsReport, correct: bool) -> list[str]:
    lines = [f"stored   {pattern_to_str(s)}" for s in stored]
    lines.append(f"input    {pattern_to_str(x)}")
    first = next((p for p in rep.retrieved if p is not None), None)
    lines.append(f"first    {pattern_to_str(first)}")
    lines.append(f"final    {pattern_to_str(rep.final)}")
    lines.append(f"syn      {rep.syn_converged:.4f}")
    lines.append(f"stable   {rep.stable}")
    lines.append(f"correct  {correct}")
    lines.append(f"period   {rep.period:.6g}")
    lines.append("cycle  syn     pattern")
    for c, (s, p) in enumerate(zip(rep.syn_per_cycle, rep.retrieved)):
        lines.append(f"{c:5d}  {s:.4f}  {pattern_to_str(p)}")
    return lines


def _demo_patterns(cfg: ExperimentConfig):
    d = cfg.demo
    if d.stored:
        stored = as_patterns([pattern_from_str(s) for s in d.stored])
    else:
        n = cfg.sizes[0]
        stored = random_patterns(substream(cfg.seed, "stored", n, 0), cfg.pattern_count(n), n)
    if d.input is not None:
        x = pattern_from_str(d.input)
        if x.size != stored.shape[1]:
            raise ValueError("demo input length differs from the stored patterns")
    else:
        rng = substream(cfg.seed, "probes", stored.shape[1], 0)
        x = stored[0].copy()
        x[rng.choice(x.size, size=min(d.flips, x.size), replace=False)] *= -1
    return stored, x


def run_demo(cfg: ExperimentConfig, out, threads: int = 1) -> RunSummary:
    """One retrieval: full trace, per-cycle SYN and readout, text report."""
    out = Path(out)
    _write_config(cfg, out)
    stored, x = _demo_patterns(cfg)
    d = cfg.demo
    net, trace, rep = _demo_run(cfg, d.network, stored, x, cfg.nominal(), d.rsd, d.parameter)
    correct = bool(rep.stable and accuracy(rep.final, stored, x))
    trace.to_csv(out / "trace_demo.csv")
    with open(out / "cycles.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cycle", "syn", "pattern"])
        for c, (s, p) in enumerate(zip(rep.syn_per_cycle, rep.retrieved)):
            w.writerow([c, _fmt(float(s)), pattern_to_str(p)])
    lines = _report_lines(stored, x, rep, correct)
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return RunSummary(out, extra={"report": rep, "stored": stored, "input": x,
                                  "correct": correct, "lines": lines})


def run_train(cfg: ExperimentConfig, out, threads: int = 1) -> RunSummary:
    """Weights, bridge conductances and the netlist for the configured patterns.

    With ``demo.rsd`` > 0 the netlist is also perturbed (``demo.parameter``)
    and a histogram of the sampled values is written.
    """
    out = Path(out)
    _write_config(cfg, out)
    stored, _ = _demo_patterns(cfg)
    net = _train(cfg.demo.network, stored, cfg.nominal(), cfg)
    n = stored.shape[1]
    (out / "patterns.txt").write_text("\n".join(pattern_to_str(s) for s in stored) + "\n",
                                      encoding="utf-8")
    _write_matrix(out / "weights.csv", net.weights.w)
    if net.conductance is not None:
        _write_matrix(out / "conductance.csv", net.conductance)
    netlist = net.netlist
    if cfg.demo.rsd > 0:
        rng = substream(cfg.seed, "mismatch", n, 0, cfg.demo.parameter)
        inst = apply_mismatch(netlist, MismatchSpec(cfg.demo.parameter, cfg.demo.rsd, cfg.seed), rng)
        netlist = inst.netlist
        finite = inst.values[np.isfinite(inst.values)]
        mean = float(np.mean(inst.nominal[np.isfinite(inst.nominal)]))
        write_histogram(out / "histogram.csv", finite, mean, cfg.demo.rsd)
    (out / "netlist.json").write_text(netlist_to_json(netlist) + "\n", encoding="utf-8")
    info = {"n": n, "p": int(stored.shape[0]), "g0": net.g0, "g0_bounds": net.g0_bounds}
    (out / "train.json").write_text(json.dumps(info, indent=2) + "\n", encoding="utf-8")
    return RunSummary(out, extra={"network": net, "netlist": netlist, **info})


def _write_matrix(path, a: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in a:
            w.writerow([_fmt(float(v)) for v in row])


def run_single_ended_compare(cfg: ExperimentConfig, out, threads: int = 1) -> RunSummary:
    """DONN and single-ended networks on identical seeds, plus a zero-mismatch demo of each."""
    out = Path(out)
    _write_config(cfg, out)
    store = ResultStore(out, cfg, threads)
    parameter = (cfg.parameters or ["V_H"])[0]
    items = []
    for network in (DONN, SINGLE_ENDED_NET):
        items += _items(cfg, parameter, cfg.rsd_grid(parameter), network=network)
    rows = store.run(items)
    agg = store.close()
    demos = {}
    stored, _ = _demo_patterns(cfg)
    lines = []
    for network in (DONN, SINGLE_ENDED_NET):
        _, _, rep = _demo_run(cfg, network, stored, stored[0], cfg.nominal())
        ok = bool(rep.stable and accuracy(rep.final, stored, stored[0]))
        demos[network] = ok
        lines += [f"[{network}]", *_report_lines(stored, stored[0], rep, ok)[:8], ""]
    (out / "demo_zero_mismatch.txt").write_text("\n".join(lines), encoding="utf-8")
    return RunSummary(out, rows, agg, extra={"demo_correct": demos})


def run_sensitivity(cfg: ExperimentConfig, out, threads: int = 1) -> RunSummary:
    """Sensitivity table at the nominal point and the two V_H-sensitivity surfaces."""
    out = Path(out)
    _write_config(cfg, out)
    nominal = cfg.nominal()
    report = analysis.sensitivity_report(nominal)
    with open(out / "sensitivity.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "nominal", "sensitivity"])
        for name in analysis.SENSITIVITY_PARAMETERS:
            w.writerow([name, _fmt(analysis.get_parameter(nominal, name)),
                        _fmt(report.values[name])])
        w.writerow([analysis.LUMPED_CAPACITANCE,
                    _fmt(analysis.get_parameter(nominal, analysis.LUMPED_CAPACITANCE)),
                    _fmt(analysis.sensitivity(analysis.LUMPED_CAPACITANCE, nominal))])
    s = cfg.surfaces
    r_surf = analysis.sensitivity_surface("R_H", "R_L", s.r_high, s.r_low, nominal)
    v_surf = analysis.sensitivity_surface(
        "V_H", "V_L", s.v_high, s.v_low, nominal,
        valid=lambda vh, vl: vh >= vl + analysis.MIN_THRESHOLD_GAP - 1e-9)
    analysis.write_long_csv(out / "surface_rh_rl.csv", r_surf.rows())
    analysis.write_long_csv(out / "surface_vh_vl.csv", v_surf.rows())
    return RunSummary(out, extra={"report": report, "surface_r": r_surf, "surface_v": v_surf})


def _dse_evaluator(cfg: ExperimentConfig, store: ResultStore, stage: str, rsd_grid):
    parameter = (cfg.parameters or ["V_H"])[0]
    level_of = {float(r): k for k, r in enumerate(rsd_grid)}

    def evaluate(params: NeuronParams, g0: float, rsd: float):
        point = (f"stage{stage}:V_H={params.vo2.v_high:.9g};V_L={params.vo2.v_low:.9g};"
                 f"R_H={params.vo2.r_high:.9g};R_L={params.vo2.r_low:.9g}")
        items = [WorkItem(cfg.id, DONN, point, n, cfg.pattern_count(n), parameter,
                          level_of[float(rsd)], float(rsd), trial, params)
                 for n in cfg.sizes for trial in range(cfg.trials)]
        rows = [r for r in store.run(items) if r.ok or r.status.startswith("latched")]
        if not rows:
            return 0.0, 0.0, 0.0
        return (float(np.mean([r.syn for r in rows])), float(np.mean([r.stb for r in rows])),
                float(np.mean([r.acc for r in rows])))

    return evaluate


def _write_dse(out: Path, tag: str, res: analysis.DseResult, rsd_grid) -> None:
    analysis.write_long_csv(out / f"surface_{tag}_max_rsd.csv", res.surface_rows("max_rsd"))
    for metric in ("syn", "stb", "acc"):
        for k, rsd in enumerate(rsd_grid):
            analysis.write_long_csv(out / f"surface_{tag}_{metric}_rsd{k}.csv",
                                    res.surface_rows(metric, k))


def run_dse(cfg: ExperimentConfig, out, threads: int = 1) -> RunSummary:
    """Two-stage grid: thresholds first, then resistances at the stage-1 optimum."""
    out = Path(out)
    _write_config(cfg, out)
    store = ResultStore(out, cfg, threads)
    parameter = (cfg.parameters or ["V_H"])[0]
    rsd_grid = cfg.rsd_grid(parameter)
    n = max(cfg.sizes)
    d = cfg.dse
    base = cfg.nominal()
    extra: dict = {}
    lines = []
    if d.stage in ("1", "both"):
        res1 = analysis.dse_stage1(d.v_high, d.v_low, rsd_grid, n,
                                   _dse_evaluator(cfg, store, "1", rsd_grid), base,
                                   cfg.mapping.g0_safety, extra_cells=[tuple(p) for p in d.pairs])
        _write_dse(out, "vh_vl", res1, rsd_grid)
        extra["stage1"] = res1
        for p in res1.points:
            lines.append(f"stage1 V_H={p.coords['V_H']:g} V_L={p.coords['V_L']:g} "
                         f"status={p.status} max_rsd={p.max_tolerated_rsd:.6g}")
        try:
            best = res1.best()
            base = best.params
            lines.append(f"stage1 optimum V_H={best.coords['V_H']:g} V_L={best.coords['V_L']:g}")
        except ValueError:
            lines.append("stage1 has no feasible cell")
    if d.stage in ("2", "both"):
        res2 = analysis.dse_stage2(d.r_high, d.r_low, rsd_grid, n,
                                   _dse_evaluator(cfg, store, "2", rsd_grid), base,
                                   cfg.mapping.g0_safety)
        _write_dse(out, "rh_rl", res2, rsd_grid)
        extra["stage2"] = res2
        for p in res2.points:
            lines.append(f"stage2 R_H={p.coords['R_H']:g} R_L={p.coords['R_L']:g} "
                         f"status={p.status} max_rsd={p.max_tolerated_rsd:.6g}")
    agg = store.close()
    (out / "dse_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return RunSummary(out, store.rows(), agg, extra)


RUNNERS: dict[str, Callable[..., RunSummary]] = {
    "train": run_train,
    "demo-retrieval": run_demo,
    "synapse-sweep": run_synapse_sweep,
    "neuron-sweep": run_neuron_sweep,
    "sensitivity": run_sensitivity,
    "dse": run_dse,
    "single-ended-compare": run_single_ended_compare,
}


def run_experiment(cfg: ExperimentConfig, out, threads: int = 1) -> RunSummary:
    return RUNNERS[cfg.experiment](cfg, out, threads)
