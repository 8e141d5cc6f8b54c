"""Command-line entry point: ``donnsim <verb> --config ... --seed ... --out ... --threads ...``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, list_presets, load_config, load_preset
from .experiments import run_experiment
from .metrics import pattern_from_str, pattern_to_str

VERBS = {
    "train": ("train", "train"),
    "demo": ("demo-retrieval", "demo"),
    "sweep-synapse": ("synapse-sweep", "memristance-sweep-desk"),
    "sweep-neuron": ("neuron-sweep", "neuron-sweep-desk"),
    "sensitivity": ("sensitivity", "sensitivity"),
    "dse": ("dse", "threshold-dse-desk"),
    "compare-single-ended": ("single-ended-compare", "single-ended-compare-desk"),
}


def read_pattern_file(path) -> list[str]:
    """One pattern per line (``+``/``-`` or ``1``/``0``); blank lines and ``#`` comments skipped."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(pattern_to_str(pattern_from_str(line)))
    if len({len(p) for p in out}) > 1:
        raise ConfigError(f"{path}: patterns have different lengths")
    return out


def _resolve_config(verb: str, source: str | None) -> ExperimentConfig:
    kind, default = VERBS[verb]
    if source is None:
        cfg = load_preset(default)
    elif Path(source).is_file():
        cfg = load_config(source)
    else:
        cfg = load_preset(source)
    if cfg.experiment != kind:
        raise ConfigError(f"config is a {cfg.experiment!r} experiment; '{verb}' needs {kind!r}")
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="donnsim", description=__doc__)
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb, (kind, default) in VERBS.items():
        p = sub.add_parser(verb, help=f"{kind} experiment (default preset: {default})")
        p.add_argument("--config", help="YAML config file or preset name")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("-v", "--verbose", action="store_true")
        if verb in ("train", "demo", "compare-single-ended"):
            p.add_argument("--patterns", help="file of stored patterns, one per line")
        if verb == "demo":
            p.add_argument("--input", help="input pattern, e.g. +--+-++-")
    sub.add_parser("presets", help="list bundled preset names")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "presets":
        print("\n".join(list_presets()))
        return 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args.verb, args.config)
        demo = cfg.demo
        if getattr(args, "patterns", None):
            demo = dataclasses.replace(demo, stored=read_pattern_file(args.patterns))
        if getattr(args, "input", None):
            demo = dataclasses.replace(demo, input=pattern_to_str(pattern_from_str(args.input)))
        cfg = dataclasses.replace(cfg, demo=demo,
                                  seed=cfg.seed if args.seed is None else args.seed)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"donnsim: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out or Path("results") / cfg.id)
    summary = run_experiment(cfg, out, threads=args.threads)
    if "lines" in summary.extra:
        print("\n".join(summary.extra["lines"][:8]))
    for rec in summary.aggregate:
        if rec["N"] == "all":
            print(f"{rec['network']:12s} {rec['parameter']:11s} level={rec['level']} "
                  f"rsd={rec['rsd']:.4g} syn={rec['syn_mean']:.3f} stb={rec['stb_mean']:.3f} "
                  f"acc={rec['acc_mean']:.3f} {rec['point']}")
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
