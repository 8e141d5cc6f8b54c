"""Experiment configuration documents.

Configs are YAML mappings with a ``schema_version`` field. Unknown keys are
rejected so that typos do not silently fall back to defaults. Named presets
live in ``donnsim/presets``.
"""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .devices import DeviceMode, Vo2Params
from .netlist import NeuronParams
from .variability import PARAMETER_CLASSES

__all__ = [
    "SCHEMA_VERSION",
    "EXPERIMENT_KINDS",
    "ConfigError",
    "SimulationSettings",
    "ProbeSettings",
    "MappingSettings",
    "SingleEndedSettings",
    "DseSettings",
    "SurfaceSettings",
    "DemoSettings",
    "ExperimentConfig",
    "load_config",
    "load_preset",
    "list_presets",
    "default_pattern_count",
    "neuron_from_overrides",
]

SCHEMA_VERSION = 1
EXPERIMENT_KINDS = ("train", "demo-retrieval", "synapse-sweep", "neuron-sweep",
                    "sensitivity", "dse", "single-ended-compare")


class ConfigError(ValueError):
    pass


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e-9`` (no dot) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                   |[0-9][0-9_]*[eE][-+]?[0-9]+
                   |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                   |[-+]?\.(?:inf|Inf|INF)
                   |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def parse_yaml(text: str):
    return yaml.load(text, Loader=_Loader)


@dataclass
class SimulationSettings:
    dt: float = 2e-9
    cycles: float = 30  # run length in calibrated neuron periods
    device_mode: str = "smooth"
    transient_cycles: int = 10
    window: int = 5

    def __post_init__(self):
        self.device_mode = DeviceMode(self.device_mode).value
        if not self.dt > 0 or not self.cycles > 0:
            raise ConfigError("simulation.dt and simulation.cycles must be positive")
        if self.cycles <= self.transient_cycles + self.window:
            raise ConfigError("simulation.cycles must exceed transient_cycles + window")


@dataclass
class ProbeSettings:
    """Test inputs: ``radius`` None draws uniform random patterns, otherwise stored
    patterns with 0..radius flipped pixels. ``count`` None means round(1.5 N)."""

    count: int | None = None
    radius: int | None = 1


@dataclass
class MappingSettings:
    alpha: float = 1.8
    beta: float = 0.2
    g0_safety: float = 0.9
    g0: float | None = None  # explicit coupling conductance overrides the safety rule


@dataclass
class SingleEndedSettings:
    r_positive: float = 8e3
    r_negative: float = 180e3
    c_ratio: float = 0.01  # synapse capacitance as a fraction of C


@dataclass
class DseSettings:
    stage: str = "1"  # "1", "2" or "both"
    v_high: list[float] = field(default_factory=list)
    v_low: list[float] = field(default_factory=list)
    pairs: list[list[float]] = field(default_factory=list)  # extra (v_high, v_low) cells
    r_high: list[float] = field(default_factory=list)
    r_low: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.stage = str(self.stage)
        if self.stage not in ("1", "2", "both"):
            raise ConfigError("dse.stage must be 1, 2 or both")


@dataclass
class SurfaceSettings:
    r_high: list[float] = field(default_factory=lambda: [100e3, 200e3, 300e3, 400e3, 500e3])
    r_low: list[float] = field(default_factory=lambda: [500.0, 750.0, 1000.0, 1250.0, 1500.0])
    v_high: list[float] = field(default_factory=lambda: [1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2])
    v_low: list[float] = field(default_factory=lambda: [0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6])


@dataclass
class DemoSettings:
    stored: list[str] = field(default_factory=list)  # empty: random
    input: str | None = None  # None: a stored pattern with ``flips`` pixels flipped
    flips: int = 1
    network: str = "donn"  # or "single_ended"
    rsd: float = 0.0
    parameter: str = "V_H"


_NESTED = {
    "simulation": SimulationSettings,
    "probes": ProbeSettings,
    "mapping": MappingSettings,
    "single_ended": SingleEndedSettings,
    "dse": DseSettings,
    "surfaces": SurfaceSettings,
    "demo": DemoSettings,
}


@dataclass
class ExperimentConfig:
    experiment: str
    id: str = ""
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    sizes: list[int] = field(default_factory=lambda: [8])
    patterns: dict[int, int] = field(default_factory=dict)
    trials: int = 10
    parameters: list[str] = field(default_factory=list)
    rsd: Any = field(default_factory=list)  # list, or {parameter class: list}
    freq_rsd: list[float] = field(default_factory=list)
    neuron: dict[str, float] = field(default_factory=dict)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    probes: ProbeSettings = field(default_factory=ProbeSettings)
    mapping: MappingSettings = field(default_factory=MappingSettings)
    single_ended: SingleEndedSettings = field(default_factory=SingleEndedSettings)
    dse: DseSettings = field(default_factory=DseSettings)
    surfaces: SurfaceSettings = field(default_factory=SurfaceSettings)
    demo: DemoSettings = field(default_factory=DemoSettings)

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if self.experiment not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; "
                              f"expected one of {EXPERIMENT_KINDS}")
        if not self.id:
            self.id = self.experiment
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if any(n < 2 for n in self.sizes):
            raise ConfigError("network sizes must be >= 2")
        self.patterns = {int(k): int(v) for k, v in self.patterns.items()}
        for name in self.parameters:
            if name not in PARAMETER_CLASSES:
                raise ConfigError(f"unknown parameter class {name!r}")
        if isinstance(self.rsd, dict):
            self.rsd = {k: [float(x) for x in v] for k, v in self.rsd.items()}
        else:
            self.rsd = [float(x) for x in self.rsd]
        self.seed = int(self.seed) & (2**64 - 1)
        neuron_from_overrides(self.neuron)  # validate early

    def pattern_count(self, n: int) -> int:
        return self.patterns.get(n, default_pattern_count(n))

    def probe_count(self, n: int) -> int:
        return self.probes.count if self.probes.count is not None else int(1.5 * n + 0.5)

    def rsd_grid(self, parameter: str) -> list[float]:
        if isinstance(self.rsd, dict):
            if parameter not in self.rsd:
                raise ConfigError(f"no rsd grid for {parameter!r}")
            return self.rsd[parameter]
        return self.rsd

    def nominal(self) -> NeuronParams:
        return neuron_from_overrides(self.neuron)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def default_pattern_count(n: int) -> int:
    return 2 if n <= 8 else 3


_NEURON_KEYS = {f.name for f in dataclasses.fields(NeuronParams)} - {"vo2"}
_VO2_KEYS = {f.name for f in dataclasses.fields(Vo2Params)}


def neuron_from_overrides(overrides: dict) -> NeuronParams:
    """Nominal neuron with flat field overrides (e.g. ``v_high``, ``r_series``)."""
    unknown = set(overrides) - _NEURON_KEYS - _VO2_KEYS
    if unknown:
        raise ConfigError(f"unknown neuron fields {sorted(unknown)}")
    base = NeuronParams()
    vo2 = dataclasses.replace(base.vo2, **{k: float(v) for k, v in overrides.items()
                                           if k in _VO2_KEYS})
    return dataclasses.replace(base, vo2=vo2, **{k: float(v) for k, v in overrides.items()
                                                if k in _NEURON_KEYS})


def _from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kwargs = dict(data)
    for key, cls in _NESTED.items():
        if key in kwargs:
            sub = kwargs[key] or {}
            sub_known = {f.name for f in dataclasses.fields(cls)}
            bad = set(sub) - sub_known
            if bad:
                raise ConfigError(f"unknown keys in {key}: {sorted(bad)}")
            kwargs[key] = cls(**sub)
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    return _from_dict(parse_yaml(text))


def list_presets() -> list[str]:
    root = resources.files("donnsim") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> ExperimentConfig:
    root = resources.files("donnsim") / "presets"
    f = root / f"{name}.yaml"
    if not f.is_file():
        raise ConfigError(f"no preset {name!r}; available: {list_presets()}")
    return _from_dict(parse_yaml(f.read_text(encoding="utf-8")))
