"""Command-line entry points: gen, train, eval, gradcheck, ablate.

Exit codes: 0 success, 1 configuration error, 2 IO or parse error,
3 numerical failure (including a failed gradient check).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from sctc import gradcheck
from sctc.errors import (ConfigurationError, LoadError, NumericalError, ParseError,
                         ValidationError, VocabularyError)
from sctc.fixtures import GeneratorConfig, generate_dataset, load_dataset, save_dataset
from sctc.model import HoiModel, ModelConfig
from sctc.train import ARM_GRIDS, LOSS_COLUMNS, TrainConfig, evaluate_model, run_arm, train

log = logging.getLogger("sctc")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


def _threads(args):
    if args.threads is not None:
        n = args.threads
    else:
        try:
            n = int(os.environ.get("SCTC_THREADS", "1"))
        except ValueError:
            raise ConfigurationError("SCTC_THREADS must be an integer") from None
    if n < 1:
        raise ConfigurationError("thread count must be >= 1")
    return n


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


# -- shared flags ------------------------------------------------------------

def _add_model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--seed", type=int, default=0, help="model and training seed")
    g.add_argument("--top-k", type=int, default=32)
    g.add_argument("--layers", type=int, default=6, help="decoder layers")
    g.add_argument("--alpha", type=float, default=1.0, help="weight of the distillation loss")
    g.add_argument("--beta", type=float, default=1.0, help="weight of the pair loss")
    g.add_argument("--gamma", type=float, default=1.0, help="weight of the action loss")
    g.add_argument("--no-kd", action="store_true")
    g.add_argument("--no-sta", action="store_true")
    g.add_argument("--no-ctd", action="store_true")
    g.add_argument("--mlp-baseline", action="store_true",
                   help="MLP fusion without STA or CTD (implies --no-sta --no-ctd)")
    g.add_argument("--edge", default="IF+SF", help="IF+SF, IF, SF or LE")
    g.add_argument("--relations", default="IR,SR,LR", help="comma list of IR, SR, LR, or LE")
    g.add_argument("--adj-norm", default="softmax", help="softmax, sigmoid or raw")
    t = p.add_argument_group("training")
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--batch-size", type=int, default=4)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--weight-decay", type=float, default=1e-4)


def _model_overrides(args):
    kw = dict(top_k=args.top_k, layers=args.layers, alpha=args.alpha, beta=args.beta,
              gamma=args.gamma, kd=not args.no_kd, sta=not args.no_sta, ctd=not args.no_ctd,
              mlp_baseline=args.mlp_baseline, edge=args.edge,
              relations=tuple(r.strip() for r in args.relations.split(",") if r.strip()),
              adj_norm=args.adj_norm)
    if args.mlp_baseline:
        kw.update(sta=False, ctd=False)
    return kw


def _train_config(args):
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                      weight_decay=args.weight_decay, seed=args.seed)
    cfg.validate()
    return cfg


# -- commands ----------------------------------------------------------------

def cmd_gen(args):
    test = args.test_scenes if args.test_scenes is not None else args.scenes // 4
    cfg = GeneratorConfig(seed=args.seed, num_train=args.scenes, num_test=test,
                          cross_triplet=not args.no_cross_triplet)
    train_s, test_s, vocab = generate_dataset(cfg)
    manifest = save_dataset(_out(args), train_s, test_s, vocab, cfg.to_dict())
    sp = manifest["splits"]
    print(f"train: {sp['train']['num_scenes']} scenes, {sp['train']['num_triplets']} triplets")
    print(f"test: {sp['test']['num_scenes']} scenes, {sp['test']['num_triplets']} triplets")
    print(f"HOI categories: {vocab.num_hoi} ({sum(vocab.rare)} rare)")
    return EXIT_OK


def cmd_train(args):
    train_s, _, vocab, _ = load_dataset(args.data)
    if not train_s:
        raise ConfigurationError("dataset has no training scenes")
    mcfg = ModelConfig.for_data(vocab, train_s[0], seed=args.seed, **_model_overrides(args))
    tcfg = _train_config(args)
    out = _out(args)
    model = HoiModel(mcfg, vocab)
    with open(out / "losses.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOSS_COLUMNS)
        writer.writeheader()

        def on_epoch(row):
            writer.writerow({k: (row[k] if k == "epoch" else repr(row[k])) for k in LOSS_COLUMNS})
            fh.flush()

        train(model, train_s, tcfg, on_epoch)
    model.save(out / "checkpoint.bin")
    _write_json(out / "config.json", {"model": mcfg.to_dict(), "train": asdict(tcfg)})
    print(f"wrote {out / 'checkpoint.bin'}")
    return EXIT_OK


def cmd_eval(args):
    train_s, test_s, vocab, _ = load_dataset(args.data)
    scenes = test_s if args.split == "test" else train_s
    if not scenes:
        raise ConfigurationError(f"dataset has no {args.split} scenes")
    expect = ModelConfig.for_data(vocab, scenes[0])
    model = HoiModel.load(args.checkpoint, vocab, expect=expect)
    metrics = evaluate_model(model, scenes, _threads(args))
    _write_json(_out(args) / "metrics.json", metrics)
    fmt = lambda v: "n/a" if v is None else f"{v:.4f}"  # noqa: E731
    print(f"full {fmt(metrics['full'])}  rare {fmt(metrics['rare'])}  "
          f"non-rare {fmt(metrics['non_rare'])}")
    return EXIT_OK


def cmd_gradcheck(args):
    results = gradcheck.check_model(samples=args.samples, seed=args.seed, corrupt=args.corrupt)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.group:<28s} {r.error:.3e}  ({r.checked} entries)")
    if args.out:
        _write_json(_out(args) / "gradcheck.json",
                    [{"group": r.group, "error": r.error, "passed": r.passed} for r in results])
    bad = [r.group for r in results if not r.passed]
    if bad:
        print(f"{len(bad)} group(s) above {gradcheck.TOLERANCE:g}: {', '.join(bad)}")
        return EXIT_NUMERIC
    print(f"all {len(results)} groups within {gradcheck.TOLERANCE:g}")
    return EXIT_OK


def cmd_ablate(args):
    train_s, test_s, vocab, _ = load_dataset(args.data)
    if not train_s or not test_s:
        raise ConfigurationError("ablation needs training and test scenes")
    grid = ARM_GRIDS[args.grid]
    arms = list(grid) if not args.arms else [a.strip() for a in args.arms.split(",")]
    unknown = [a for a in arms if a not in grid]
    if unknown:
        raise ConfigurationError(f"unknown arm(s) {unknown} for grid {args.grid!r}; "
                                 f"choose from {list(grid)}")
    seeds = [int(s) for s in args.seeds.split(",")]
    base = _model_overrides(args)
    tcfg = _train_config(args)
    threads = _threads(args)
    out = _out(args)
    rows, runs = [], []
    for arm in arms:
        got = []
        for seed in seeds:
            _, _, m = run_arm(train_s, test_s, vocab, grid[arm], seed, tcfg, base, threads)
            runs.append({"arm": arm, "seed": seed, "full": m["full"], "rare": m["rare"],
                         "non_rare": m["non_rare"]})
            got.append(m)
        row = {"arm": arm}
        for k in ("full", "rare", "non_rare"):
            vals = [m[k] for m in got if m[k] is not None]
            row[k] = float(np.mean(vals)) if vals else None
        rows.append(row)
        print(f"{arm:<14s} full {row['full']:.4f}")
    for name, table, cols in (("ablation.csv", rows, ("arm", "full", "rare", "non_rare")),
                              ("ablation_runs.csv", runs, ("arm", "seed", "full", "rare", "non_rare"))):
        with open(out / name, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            w.writerows(table)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="sctc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--scenes", type=int, default=200, help="training scenes")
    p.add_argument("--test-scenes", type=int, default=None, help="default: scenes // 4")
    p.add_argument("--no-cross-triplet", action="store_true",
                   help="no correlations between triplets sharing an instance")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train and write a checkpoint and loss log")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint and write metrics.json")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("test", "train"), default="test")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every parameter group")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=4, help="entries sampled per tensor")
    p.add_argument("--corrupt", default=None, help=argparse.SUPPRESS)  # test hook
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train and evaluate a grid of arms")
    p.add_argument("--data", required=True)
    p.add_argument("--grid", choices=sorted(ARM_GRIDS), default="modules")
    p.add_argument("--arms", default=None, help="comma list; default every arm of the grid")
    p.add_argument("--seeds", default="0", help="comma list; metrics are averaged over seeds")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ParseError, LoadError, ValidationError, VocabularyError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
