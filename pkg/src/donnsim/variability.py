"""Device-to-device mismatch sampling and per-branch natural frequencies.

Random streams are Philox generators keyed by a ``SeedSequence`` built from
the master seed plus integer/string keys (strings go through CRC-32), so a
given key always yields the same draws regardless of call order or thread.
"""
from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .devices import Vo2Params
from .netlist import Netlist, override_many
from .transient import NotOscillatingError, assemble_capacitance_matrix, branch_period

__all__ = [
    "PARAMETER_CLASSES",
    "MismatchSpec",
    "SampledInstance",
    "substream",
    "sample_normal",
    "apply_mismatch",
    "branch_frequencies",
    "histogram",
    "write_histogram",
]

# parameter class -> (component kind, parameter name on that component)
PARAMETER_CLASSES = {
    "memristance": ("memristor", "value"),
    "V_H": ("vo2", "v_high"),
    "V_L": ("vo2", "v_low"),
    "R_H": ("vo2", "r_high"),
    "R_L": ("vo2", "r_low"),
    "R_S": ("r_series", "value"),
    "C": ("c_parallel", "value"),
    "C_c": ("c_coupling", "value"),
}
MAX_REJECTIONS = 1000


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    if isinstance(k, float):
        raise TypeError("float stream keys are ambiguous; pass an index")
    return int(k)


def substream(master_seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(master_seed, *keys)``."""
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), *(_key(k) for k in keys)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class MismatchSpec:
    target: str
    rsd: float
    seed: int = 0

    def __post_init__(self):
        if self.target not in PARAMETER_CLASSES:
            raise KeyError(f"unknown parameter class {self.target!r}; "
                           f"expected one of {sorted(PARAMETER_CLASSES)}")
        if self.rsd < 0:
            raise ValueError("rsd must be non-negative")


def sample_normal(mean, rsd: float, count: int | None, rng: np.random.Generator):
    """Draw ``Normal(mean, (rsd*mean)^2)`` values, redrawing non-positive ones.

    ``mean`` may be a scalar (then ``count`` draws) or an array of per-device
    nominals. Returns ``(values, n_rejected)``.
    """
    if rsd < 0:
        raise ValueError("rsd must be non-negative")
    mean = np.asarray(mean, dtype=float)
    if mean.ndim == 0:
        if count is None or count < 1:
            raise ValueError("count must be >= 1")
        mean = np.full(count, float(mean))
    values = mean * (1.0 + rsd * rng.standard_normal(mean.shape))
    rejected = 0
    for k in np.flatnonzero(values <= 0):
        for _ in range(MAX_REJECTIONS):
            rejected += 1
            values[k] = mean[k] * (1.0 + rsd * rng.standard_normal())
            if values[k] > 0:
                break
        else:
            raise ValueError(f"{MAX_REJECTIONS} consecutive non-positive draws; rsd={rsd} is absurd")
    return values, rejected


@dataclass(frozen=True)
class SampledInstance:
    base: Netlist
    netlist: Netlist
    spec: MismatchSpec
    component_ids: tuple[str, ...]
    nominal: np.ndarray
    values: np.ndarray
    n_rejected: int = 0


def _targets(netlist: Netlist, target: str):
    kind, parameter = PARAMETER_CLASSES[target]
    comps = netlist.of_kind(kind)
    if kind == "vo2":
        nominal = np.array([getattr(c.value, parameter) for c in comps])
    else:
        nominal = np.array([c.value for c in comps], dtype=float)
    return comps, parameter, nominal


def apply_mismatch(netlist: Netlist, spec: MismatchSpec,
                   rng: np.random.Generator | None = None) -> SampledInstance:
    """Independently perturb every component of the targeted class."""
    if rng is None:
        rng = substream(spec.seed, spec.target)
    comps, parameter, nominal = _targets(netlist, spec.target)
    # open arms (infinite resistance) carry no current and stay open
    finite = np.isfinite(nominal)
    values = nominal.copy()
    rejected = 0
    if finite.any():
        values[finite], rejected = sample_normal(nominal[finite], spec.rsd, None, rng)
    if spec.rsd == 0:
        sampled = netlist
    else:
        sampled = override_many(netlist, [(c.id, parameter, float(x))
                                          for c, x in zip(comps, values)])
    return SampledInstance(netlist, sampled, spec, tuple(c.id for c in comps),
                           nominal, values, rejected)


def branch_frequencies(instance) -> tuple[np.ndarray, float, list[str]]:
    """Per-branch natural frequencies, their RSD, and the names of latched branches.

    Each branch is evaluated in isolation with its own components and its
    output-node capacitance (diagonal of the capacitance matrix, i.e.
    C + C_c for a differential branch). Latched branches give NaN and are left
    out of the RSD.
    """
    netlist = instance.netlist if isinstance(instance, SampledInstance) else instance
    cap = assemble_capacitance_matrix(netlist)
    n = netlist.n_nodes
    vo2: list[Vo2Params] = [None] * n
    rs = np.empty(n)
    vdd = np.empty(n)
    for c in netlist.components:
        if c.kind == "vo2":
            vo2[c.nodes[0]] = c.value
        elif c.kind == "r_series":
            rs[c.nodes[0]] = c.value
        elif c.kind == "supply":
            vdd[c.nodes[0]] = c.value
    freqs = np.full(n, np.nan)
    latched = []
    for k in range(n):
        try:
            freqs[k] = 1.0 / branch_period(vo2[k], rs[k], cap[k, k], vdd[k])
        except NotOscillatingError:
            latched.append(netlist.node_names[k])
    ok = freqs[np.isfinite(freqs)]
    rsd = float(np.std(ok, ddof=1) / np.mean(ok)) if ok.size >= 2 else math.nan
    return freqs, rsd, latched


def histogram(values: Sequence[float], mean: float, rsd: float) -> tuple[np.ndarray, np.ndarray]:
    """Counts on bins of width ``mean*rsd/4`` anchored at zero; returns (centers, counts)."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    width = mean * rsd / 4.0
    if not width > 0:
        uniq, counts = np.unique(values, return_counts=True)
        return uniq, counts
    bins = np.floor(values / width).astype(np.int64)
    uniq, counts = np.unique(bins, return_counts=True)
    return (uniq + 0.5) * width, counts


def write_histogram(path, values, mean: float, rsd: float) -> None:
    centers, counts = histogram(values, mean, rsd)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "count"])
        for c, k in zip(centers, counts):
            w.writerow([f"{c:.9g}", int(k)])
