"""Peak extraction, synchronization level, pattern readout and scoring.

Phases are read from the positive-branch voltages (all nodes for a
single-ended network) relative to neuron 0. Offsets near 0 or T count as
in-phase (white, +1); everything else, including exactly T/4, is anti-phase.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from .netlist import DIFFERENTIAL
from .storage import as_patterns
from .transient import Trace

__all__ = [
    "TRANSIENT_CYCLES",
    "CONVERGENCE_WINDOW",
    "PeakSeries",
    "MetricsReport",
    "detect_peaks",
    "peak_series",
    "map_timediff",
    "syn_level",
    "read_pattern",
    "stability",
    "accuracy",
    "evaluate_trace",
    "pattern_to_str",
    "pattern_from_str",
]

TRANSIENT_CYCLES = 10
CONVERGENCE_WINDOW = 5
MIN_SEPARATION = 0.6  # fraction of the period between accepted maxima
MIN_PROMINENCE = 0.1  # volts
# anti-phase neurons sit at +/-T/2, so the match window must exceed T/2
MATCH_WINDOW = 0.6


def detect_peaks(trace: Trace, channel, nominal_period: float | None = None,
                 transient_cycles: int = TRANSIENT_CYCLES) -> np.ndarray:
    """Interpolated peak times of one channel, transient cycles dropped.

    Fewer than two returned peaks means the channel is not oscillating.
    """
    T = trace.nominal_period if nominal_period is None else nominal_period
    if len(trace) < 3:
        return np.empty(0)
    v = trace.channel(channel)
    h = trace.sample_interval
    idx, _ = find_peaks(v, distance=max(1, int(MIN_SEPARATION * T / h)),
                        prominence=MIN_PROMINENCE)
    idx = idx[(idx > 0) & (idx < v.size - 1)]
    y0, y1, y2 = v[idx - 1], v[idx], v[idx + 1]
    curv = y0 - 2.0 * y1 + y2
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(curv < 0, 0.5 * (y0 - y2) / curv, 0.0)
    t = trace.times[idx] + np.clip(shift, -0.5, 0.5) * h
    return t[t >= transient_cycles * T]


@dataclass(frozen=True)
class PeakSeries:
    times: tuple[np.ndarray, ...]
    ref: int = 0

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def oscillating(self) -> np.ndarray:
        return np.array([t.size >= 2 for t in self.times])

    @property
    def n_cycles(self) -> int:
        return self.times[self.ref].size

    def period(self) -> float:
        """Median spacing of the reference peaks."""
        r = self.times[self.ref]
        return float(np.median(np.diff(r))) if r.size >= 2 else float("nan")

    def offsets(self, c: int, T: float) -> np.ndarray:
        """Peak-time offsets to the reference at reference cycle ``c``; NaN where unmatched."""
        t_ref = self.times[self.ref][c]
        out = np.full(self.n, np.nan)
        for i, t in enumerate(self.times):
            if t.size == 0:
                continue
            k = int(np.argmin(np.abs(t - t_ref)))
            d = t[k] - t_ref
            if abs(d) <= MATCH_WINDOW * T:
                out[i] = d
        return out


def peak_series(trace: Trace, topology: str, nominal_period: float | None = None,
                transient_cycles: int = TRANSIENT_CYCLES) -> PeakSeries:
    n_nodes = len(trace.node_names)
    channels = range(0, n_nodes, 2) if topology == DIFFERENTIAL else range(n_nodes)
    return PeakSeries(tuple(detect_peaks(trace, ch, nominal_period, transient_cycles)
                            for ch in channels))


def map_timediff(dt, T: float):
    """Triangular map with period T/2: 1 at in-phase/anti-phase, 0 at odd multiples of T/4."""
    if not T > 0:
        raise ValueError("period must be positive")
    half = 0.5 * T
    d = np.mod(dt, half)
    return 1.0 - (4.0 / T) * np.minimum(d, half - d)


def syn_level(peaks: PeakSeries, c: int, T: float) -> tuple[float, bool]:
    """Synchronization level at reference cycle ``c`` and whether every neuron matched."""
    d = peaks.offsets(c, T)
    matched = ~np.isnan(d)
    terms = np.where(matched, map_timediff(np.nan_to_num(d), T), 0.0)
    return float(terms.mean()), bool(matched.all())


def read_pattern(peaks: PeakSeries, c: int, T: float) -> np.ndarray | None:
    """Readout at reference cycle ``c``; None when some neuron has no matching peak."""
    d = peaks.offsets(c, T)
    if np.isnan(d).any():
        return None
    r = np.mod(np.abs(d), T)
    circ = np.minimum(r, T - r)
    pat = np.where(circ < 0.25 * T, 1, -1)
    pat[peaks.ref] = 1
    return pat


def stability(runs: Sequence[Sequence[np.ndarray | None]],
              window: int = CONVERGENCE_WINDOW) -> float:
    """Fraction of runs whose readout is identical over the last ``window`` cycles."""
    if not runs:
        return 0.0
    return sum(_is_stable(r, window) for r in runs) / len(runs)


def _is_stable(patterns: Sequence[np.ndarray | None], window: int) -> bool:
    if len(patterns) < window:
        return False
    tail = patterns[-window:]
    if any(p is None for p in tail):
        return False
    return all(np.array_equal(p, tail[-1]) for p in tail)


def _anchor(p: np.ndarray) -> np.ndarray:
    return p * p[0]


def accuracy(retrieved, stored, input_pattern) -> bool:
    """Retrieved readout equals, up to complement, a stored pattern nearest to the input."""
    if retrieved is None:
        return False
    stored = as_patterns(stored)
    x = np.asarray(input_pattern)
    dist = np.array([min(np.sum(s != x), np.sum(-s != x)) for s in stored])
    targets = stored[dist == dist.min()]
    r = _anchor(np.asarray(retrieved))
    return any(np.array_equal(r, _anchor(s)) for s in targets)


@dataclass
class MetricsReport:
    syn_per_cycle: np.ndarray
    retrieved: list
    syn_converged: float
    stable: bool
    period: float
    correct: bool | None = None
    matched: bool = True
    cycles_to_converge: int = -1

    @property
    def final(self) -> np.ndarray | None:
        return self.retrieved[-1] if self.retrieved else None


def evaluate_trace(trace: Trace, topology: str, nominal_period: float | None = None,
                   transient_cycles: int = TRANSIENT_CYCLES,
                   window: int = CONVERGENCE_WINDOW) -> MetricsReport:
    """Per-cycle SYN and readout for one run.

    ``nominal_period`` sets the peak separation and the transient cutoff; the
    phase maps use the period measured from the reference neuron.
    """
    T_nom = trace.nominal_period if nominal_period is None else nominal_period
    all_peaks = peak_series(trace, topology, T_nom, transient_cycles=0)
    t0 = transient_cycles * T_nom
    peaks = PeakSeries(tuple(t[t >= t0] for t in all_peaks.times), all_peaks.ref)
    T = peaks.period()
    if peaks.n_cycles < 2 or not np.isfinite(T):
        return MetricsReport(np.zeros(0), [], 0.0, False, T, matched=False)
    syn, pats, ok = [], [], True
    for c in range(peaks.n_cycles):
        s, m = syn_level(peaks, c, T)
        syn.append(s)
        ok &= m
        pats.append(read_pattern(peaks, c, T))
    syn = np.array(syn)
    tail = syn[-window:]
    stable = _is_stable(pats, window)
    return MetricsReport(
        syn_per_cycle=syn,
        retrieved=pats,
        syn_converged=float(tail.mean()),
        stable=stable,
        period=T,
        matched=ok,
        cycles_to_converge=_cycles_to_converge(all_peaks, T) if stable else -1,
    )


def _cycles_to_converge(peaks: PeakSeries, T: float) -> int:
    """First cycle (counted from power-up) after which the readout never changes."""
    pats = [read_pattern(peaks, c, T) for c in range(peaks.n_cycles)]
    if not pats or pats[-1] is None:
        return -1
    k = len(pats) - 1
    while k > 0 and pats[k - 1] is not None and np.array_equal(pats[k - 1], pats[-1]):
        k -= 1
    return k


def pattern_to_str(p) -> str:
    if p is None:
        return "?"
    return "".join("+" if x > 0 else "-" for x in p)


def pattern_from_str(s: str) -> np.ndarray:
    s = s.strip()
    table = {"+": 1, "1": 1, "-": -1, "0": -1}
    try:
        return np.array([table[ch] for ch in s], dtype=int)
    except KeyError as exc:
        raise ValueError(f"invalid pattern character {exc.args[0]!r} in {s!r}") from None
