"""Circuit graphs for differential and single-ended oscillator networks.

Component ordering is fixed: neurons ascending, branch ``p`` before ``n``,
neuron pairs in lexicographic ``(i < j)`` order. Mismatch sampling relies on
this ordering to assign draws to devices reproducibly.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Iterable, Mapping, Sequence

from .devices import NOMINAL_VO2, Vo2Params

__all__ = [
    "NeuronParams",
    "BridgeConductances",
    "Component",
    "Netlist",
    "NOMINAL_NEURON",
    "DIFFERENTIAL",
    "SINGLE_ENDED",
    "build_donn",
    "build_single_ended",
    "override_component",
    "override_many",
    "netlist_to_json",
    "netlist_from_json",
]

DIFFERENTIAL = "differential"
SINGLE_ENDED = "single_ended"

# kinds whose `value` is a scalar, with the smallest admissible value
_SCALAR_KINDS = {
    "supply": "positive",
    "r_series": "positive",
    "c_parallel": "positive",
    "c_coupling": "positive",
    "memristor": "positive",  # resistance; inf encodes an open (g = 0) arm
    "c_synapse": "non-negative",
}
_VO2_FIELDS = tuple(f.name for f in fields(Vo2Params))


@dataclass(frozen=True)
class NeuronParams:
    r_series: float = 6e3
    c_parallel: float = 109e-12
    c_coupling: float = 10.9e-12
    vo2: Vo2Params = NOMINAL_VO2
    v_dd: float = 2.5

    def __post_init__(self):
        for name in ("r_series", "c_parallel", "c_coupling", "v_dd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def g_series(self) -> float:
        return 1.0 / self.r_series

    def with_(self, **changes) -> "NeuronParams":
        return replace(self, **changes)


NOMINAL_NEURON = NeuronParams()


@dataclass(frozen=True)
class BridgeConductances:
    g_d: float
    g_c: float

    def __post_init__(self):
        if self.g_d < 0 or self.g_c < 0:
            raise ValueError("bridge conductances must be non-negative")

    @property
    def sign(self) -> int:
        return int(self.g_d > self.g_c) - int(self.g_d < self.g_c)


@dataclass(frozen=True)
class Component:
    id: str
    kind: str
    nodes: tuple[int, ...]
    value: float | Vo2Params


@dataclass(frozen=True)
class Netlist:
    topology: str
    n_neurons: int
    node_names: tuple[str, ...]
    components: tuple[Component, ...]
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {c.id: k for k, c in enumerate(self.components)})

    @property
    def n_nodes(self) -> int:
        return len(self.node_names)

    def component(self, cid: str) -> Component:
        try:
            return self.components[self._index[cid]]
        except KeyError:
            raise KeyError(f"unknown component id {cid!r}") from None

    def of_kind(self, kind: str) -> list[Component]:
        return [c for c in self.components if c.kind == kind]

    def count(self, kind: str) -> int:
        return sum(1 for c in self.components if c.kind == kind)


def _pair_keys(mapping: Mapping, n: int) -> dict[tuple[int, int], object]:
    out = {}
    for (i, j), val in mapping.items():
        if i == j:
            raise ValueError(f"self-synapse ({i}, {j}) is not allowed")
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"pair ({i}, {j}) out of range for n={n}")
        key = (min(i, j), max(i, j))
        if key in out:
            raise ValueError(f"duplicate entry for pair {key}")
        out[key] = val
    missing = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in out]
    if missing:
        raise ValueError(f"missing synapse entries for pairs {missing[:5]}")
    return out


def _branch_components(names: Sequence[str], nominal: NeuronParams) -> list[Component]:
    comps: list[Component] = []
    for kind, prefix, value in (
        ("supply", "VDD", nominal.v_dd),
        ("r_series", "RS", nominal.r_series),
        ("vo2", "VO2", nominal.vo2),
        ("c_parallel", "C", nominal.c_parallel),
    ):
        comps += [Component(f"{prefix}.{nm}", kind, (k,), value) for k, nm in enumerate(names)]
    return comps


def _resistance(g: float) -> float:
    return math.inf if g == 0 else 1.0 / g


def build_donn(n: int, bridges: Mapping[tuple[int, int], BridgeConductances],
               nominal: NeuronParams = NOMINAL_NEURON) -> Netlist:
    """Differential network: 2N branches, N coupling caps, one 4-arm bridge per pair.

    ``n=1`` gives an isolated differential neuron (no bridges).
    """
    if n < 1:
        raise ValueError("need at least one neuron")
    pairs = _pair_keys(bridges, n)
    names = tuple(f"{b}{i}" for i in range(n) for b in "pn")
    comps = _branch_components(names, nominal)
    comps += [Component(f"CC.{i}", "c_coupling", (2 * i, 2 * i + 1), nominal.c_coupling)
              for i in range(n)]
    for (i, j) in sorted(pairs):
        br = pairs[(i, j)]
        pi, ni, pj, nj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
        rd, rc = _resistance(br.g_d), _resistance(br.g_c)
        comps += [
            Component(f"M.{i}-{j}.pp", "memristor", (pi, pj), rd),
            Component(f"M.{i}-{j}.nn", "memristor", (ni, nj), rd),
            Component(f"M.{i}-{j}.pn", "memristor", (pi, nj), rc),
            Component(f"M.{i}-{j}.np", "memristor", (ni, pj), rc),
        ]
    return Netlist(DIFFERENTIAL, n, names, tuple(comps))


def build_single_ended(n: int, synapses: Mapping[tuple[int, int], tuple[float, float]],
                       nominal: NeuronParams = NOMINAL_NEURON) -> Netlist:
    """Single-ended network; each synapse is ``(memristance_ohm, capacitance_F)`` in parallel."""
    if n < 2:
        raise ValueError("a network needs at least two neurons")
    pairs = _pair_keys(synapses, n)
    names = tuple(f"x{i}" for i in range(n))
    comps = _branch_components(names, nominal)
    for (i, j) in sorted(pairs):
        r, c = pairs[(i, j)]
        comps.append(Component(f"M.{i}-{j}", "memristor", (i, j), float(r)))
        comps.append(Component(f"CS.{i}-{j}", "c_synapse", (i, j), float(c)))
    for comp in comps:
        _check_value(comp, comp.value)
    return Netlist(SINGLE_ENDED, n, names, tuple(comps))


def _check_value(comp: Component, value):
    if comp.kind == "vo2":
        return
    rule = _SCALAR_KINDS[comp.kind]
    if rule == "positive" and not value > 0:
        raise ValueError(f"{comp.id}: value must be positive, got {value}")
    if rule == "non-negative" and not value >= 0:
        raise ValueError(f"{comp.id}: value must be non-negative, got {value}")


def _updated(comp: Component, parameter: str, value: float) -> Component:
    if comp.kind == "vo2":
        if parameter not in _VO2_FIELDS:
            raise KeyError(f"{comp.id}: unknown VO2 parameter {parameter!r}")
        if not value > 0:
            raise ValueError(f"{comp.id}: {parameter} must be positive, got {value}")
        return replace(comp, value=replace(comp.value, **{parameter: float(value)}))
    if parameter != "value":
        raise KeyError(f"{comp.id}: scalar component has only 'value', not {parameter!r}")
    _check_value(comp, value)
    return replace(comp, value=float(value))


def override_component(netlist: Netlist, cid: str, parameter: str, value: float) -> Netlist:
    """Copy of ``netlist`` with one parameter of one component changed."""
    return override_many(netlist, [(cid, parameter, value)])


def override_many(netlist: Netlist, updates: Iterable[tuple[str, str, float]]) -> Netlist:
    comps = list(netlist.components)
    for cid, parameter, value in updates:
        k = netlist._index.get(cid)
        if k is None:
            raise KeyError(f"unknown component id {cid!r}")
        comps[k] = _updated(comps[k], parameter, value)
    return replace(netlist, components=tuple(comps))


def netlist_to_json(netlist: Netlist, indent: int | None = 2) -> str:
    def encode(c: Component):
        value = asdict(c.value) if isinstance(c.value, Vo2Params) else c.value
        if value == math.inf:
            value = "inf"
        return {"id": c.id, "kind": c.kind,
                "nodes": [netlist.node_names[k] for k in c.nodes], "value": value}

    doc = {
        "topology": netlist.topology,
        "n_neurons": netlist.n_neurons,
        "nodes": list(netlist.node_names),
        "components": [encode(c) for c in netlist.components],
    }
    return json.dumps(doc, indent=indent)


def netlist_from_json(text: str) -> Netlist:
    doc = json.loads(text)
    names = tuple(doc["nodes"])
    pos = {nm: k for k, nm in enumerate(names)}
    comps = []
    for c in doc["components"]:
        value = c["value"]
        if c["kind"] == "vo2":
            value = Vo2Params(**value)
        elif value == "inf":
            value = math.inf
        comps.append(Component(c["id"], c["kind"], tuple(pos[nm] for nm in c["nodes"]), value))
    return Netlist(doc["topology"], int(doc["n_neurons"]), names, tuple(comps))
