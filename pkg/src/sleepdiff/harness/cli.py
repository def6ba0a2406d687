"""Command-line entry point: ``sleepdiff <command> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from ..config import AblationFlags, ExperimentConfig
from ..data.container import read_container
from ..data.sequences import sequences_from_recordings
from ..data.synth import GeneratorConfig, generate_domains
from .checkpoint import load_checkpoint, save_checkpoint
from .export import export_attention
from .gradsuite import run_suite
from .loocv import run_ablation, run_loocv
from .train import DomainStore, evaluate, run_experiment

CONFIG_FIELDS = [f for f in dataclasses.fields(ExperimentConfig) if f.name != "flags"]
FLAG_NAMES = [f.name for f in dataclasses.fields(AblationFlags)]


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.split(",") if s.strip())


def add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value experiment config file")
    for f in CONFIG_FIELDS:
        if f.name == "seed":
            continue
        kind = {"int": int, "float": float, "str": str}.get(str(f.type), str)
        if f.name == "sources":
            kind = _int_list
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, type=kind, default=None)
    for name in FLAG_NAMES:
        p.add_argument(f"--no-{name}", dest=f"flag_{name}", action="store_false", default=None,
                       help=f"ablate the {name.upper()} component")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then the config file, then explicit flags."""
    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {f.name: getattr(args, f.name) for f in CONFIG_FIELDS
               if getattr(args, f.name, None) is not None}
    if args.seed is not None:
        changes["seed"] = args.seed
    flags = {n: False for n in FLAG_NAMES if getattr(args, f"flag_{n}", None) is False}
    if flags:
        changes["flags"] = dataclasses.replace(base.flags, **flags)
    if "target" in changes and "sources" not in changes:
        changes["sources"] = tuple(d for d in sorted(set(base.sources) | {base.target}) if d != changes["target"])
    return dataclasses.replace(base, **changes)


def cmd_generate(args) -> int:
    gen = GeneratorConfig.from_text(args.config.read_text()) if args.config else GeneratorConfig()
    if args.seed is not None:
        gen.seed = args.seed
    if args.recordings is not None:
        gen.n_recordings = args.recordings
    paths = generate_domains(args.out, gen.specs, gen.n_recordings, gen.n_epochs, gen.seed)
    for d, p in paths.items():
        print(f"domain {d}: {p}")
    return 0


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    store = DomainStore(args.data, cfg.n_seq)
    result, report = run_experiment(cfg, store, on_epoch=lambda e, s: print(
        f"epoch {e}: " + " ".join(f"{k}={v:.4f}" for k, v in s.items() if k != "epoch")))
    print(f"target {cfg.target}: {report}")
    if args.out:
        save_checkpoint(result.model, result.optimizer, cfg, args.out)
        print(f"checkpoint: {args.out}")
    return 0


def cmd_loocv(args) -> int:
    cfg = config_from_args(args)
    run_loocv(cfg, DomainStore(args.data, cfg.n_seq), args.domains, args.seeds or (cfg.seed,), out_dir=args.out)
    return 0


def cmd_ablate(args) -> int:
    cfg = config_from_args(args)
    run_ablation(cfg, DomainStore(args.data, cfg.n_seq), args.domains, args.seeds or (cfg.seed,), out_dir=args.out)
    return 0


def cmd_eval(args) -> int:
    model, _, cfg = load_checkpoint(args.checkpoint)
    seqs = sequences_from_recordings(read_container(args.data), cfg.n_seq)
    report = evaluate(model, seqs)
    print(report)
    if args.json:
        print(json.dumps(report.as_dict()))
    return 0


def cmd_export(args) -> int:
    model, _, cfg = load_checkpoint(args.checkpoint)
    seqs = sequences_from_recordings(read_container(args.data), cfg.n_seq)
    if not 0 <= args.index < len(seqs):
        print(f"sequence index {args.index} out of range (0..{len(seqs) - 1})", file=sys.stderr)
        return 2
    index = export_attention(model, seqs.x[args.index], args.out, svg=not args.no_svg)
    print(f"index: {index}")
    return 0


def cmd_gradcheck(args) -> int:
    base = 0 if args.seed is None else args.seed
    results = run_suite(range(base, base + args.seeds), echo=print)
    failed = [r for r in results if not r.report.passed]
    for r in failed:
        print(f"{r.name} seed {r.seed}: {r.report}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sleepdiff", description="two-stream differential transformer sleep staging")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic domains as SLPD files")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--config", type=Path, help="generator key = value file")
    p.add_argument("--recordings", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    for name, func, text in (("train", cmd_train, "train one held-out split"),
                             ("loocv", cmd_loocv, "leave-one-domain-out over all domains"),
                             ("ablate", cmd_ablate, "leave-one-domain-out for each ablation row")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--data", type=Path, required=True, help="directory of domain_<id>.slpd files")
        p.add_argument("--seed", type=int)
        add_config_args(p)
        if name == "train":
            p.add_argument("--out", type=Path, help="checkpoint path")
        else:
            p.add_argument("--out", type=Path, help="summary directory")
            p.add_argument("--domains", type=_int_list, default=(0, 1, 2, 3, 4))
            p.add_argument("--seeds", type=_int_list)
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="score a checkpoint on one SLPD file")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--json", action="store_true")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-attn", help="write attention maps for one sequence")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-svg", action="store_true")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed", type=int, help="first seed")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
