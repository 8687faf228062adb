"""Command-line entry point: synth -> train -> evaluate -> trace.

Every command exits 0 on success and nonzero on any error; diagnostics go
to stderr, requested artifacts and paths to stdout.  A fixed --seed fully
determines all outputs.
"""

from __future__ import annotations

import argparse
import sys
from typing import Dict, List, Sequence

import numpy as np

from . import evaluation, noise
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_run_config
from .ctdg import Label
from .data import EventDataset, chronological_split, export_csv, ingest_csv, synth_generate
from .heads import ModelBundle, train


def _load_cfg(args, **extra) -> RunConfig:
    overrides = {"seed": getattr(args, "seed", None), "head": getattr(args, "head", None)}
    overrides.update(extra)
    return load_run_config(getattr(args, "config", None), overrides)


def _prepared_splits(dataset: EventDataset, cfg: RunConfig, scaler):
    splits = chronological_split(dataset, cfg.split_spec())
    return splits, scaler.apply(splits.train), scaler.apply(splits.val), scaler.apply(splits.test)


def cmd_synth(args) -> int:
    cfg = _load_cfg(args)
    dataset = synth_generate(cfg.synth_config())
    export_csv(dataset, args.out)
    print(args.out)
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args, train_epochs=args.epochs, train_lr=args.lr)
    dataset = ingest_csv(args.data)
    splits = chronological_split(dataset, cfg.split_spec())
    from .data import standardize

    train_events, _, _, scaler = standardize(splits.train, splits.val, splits.test)
    enc_cfg = cfg.encoder_config(dataset.n_features)
    result = train(train_events, dataset.n_nodes, enc_cfg, cfg.train_config(), scaler,
                   log_fn=lambda msg: print(msg, file=sys.stderr))
    save_checkpoint(args.out, result.bundle)

    loss_path = args.loss_out or (args.out + ".loss.csv")
    with open(loss_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,positive_loss,negative_loss\n")
        for epoch, pos, neg in result.loss_trace:
            fh.write(f"{epoch},{pos!r},{neg!r}\n")
    print(args.out)
    print(loss_path)
    return 0


def _trial_rng(master_seed: int, pct: float, resample: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((master_seed, int(round(pct * 100)), resample)))


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    if args.ratios is not None:
        cfg.eval_ratios = [float(x) for x in args.ratios.split(",") if x.strip()]
    if args.resamples is not None:
        cfg.eval_resamples = args.resamples
    if cfg.eval_resamples < 2:
        raise ValueError(
            f"eval needs >= 2 resamples to report mean ± std, got {cfg.eval_resamples}; "
            f"pass --resamples 2 or more"
        )

    dataset = ingest_csv(args.data)
    bundles: List[ModelBundle] = []
    for path in args.checkpoint:
        bundle = load_checkpoint(path)
        if bundle.params.config.n_features != dataset.n_features:
            raise ValueError(
                f"{path}: checkpoint expects {bundle.params.config.n_features} features, "
                f"dataset has {dataset.n_features}"
            )
        if bundle.scaler is None:
            raise ValueError(f"{path}: checkpoint carries no feature scaler")
        bundles.append(bundle)

    # all checkpoints must come from the same data pipeline
    splits, train_s, val_s, test_s = _prepared_splits(dataset, cfg, bundles[0].scaler)
    node_pool = sorted({ev.src for ev in dataset.events} | {ev.dst for ev in dataset.events})
    tau_grid = cfg.tau_grid()

    scorers = []
    for bundle in bundles:
        scorer = evaluation.StreamScorer(bundle, dataset.n_nodes, train_s[0].t,
                                         update_state=cfg.eval_update_state)
        scorer.warm(train_s + val_s)
        scorers.append((scorer, scorer.snapshot()))

    trials: Dict[tuple, List[evaluation.TrialResult]] = {}
    for pct in cfg.eval_ratios:
        count = noise.noise_count(pct / 100.0, test_s)
        noise_cfg = noise.NoiseConfig(ratio=pct / 100.0, feature_var=cfg.noise_feature_var,
                                      t_start=splits.t_test, t_end=splits.t_max)
        for resample in range(cfg.eval_resamples):
            rng = _trial_rng(cfg.seed, pct, resample)
            crafted = noise.craft_noise_events(node_pool, count, noise_cfg, rng,
                                               dataset.n_features)
            merged = noise.inject(test_s, crafted)
            for bundle, (scorer, snap) in zip(bundles, scorers):
                scorer.restore(snap)
                scored = scorer.score(merged)
                trial = evaluation.trial_from_scores(scored, tau_grid, pct, resample)
                trials.setdefault((bundle.model_name, pct), []).append(trial)
        print(f"noise {pct:g}%: {cfg.eval_resamples} resamples done", file=sys.stderr)

    rows = [
        evaluation.summarize(trials[(bundle.model_name, pct)], bundle.model_name)
        for bundle in bundles
        for pct in cfg.eval_ratios
    ]
    table, csv_text = evaluation.render_report(rows)
    with open(args.report_out, "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    print(table)
    print(args.report_out)
    return 0


def cmd_trace(args) -> int:
    cfg = _load_cfg(args)
    dataset = ingest_csv(args.data)
    bundle = load_checkpoint(args.checkpoint)
    if bundle.scaler is None:
        raise ValueError(f"{args.checkpoint}: checkpoint carries no feature scaler")
    splits, train_s, val_s, test_s = _prepared_splits(dataset, cfg, bundle.scaler)

    events = train_s + val_s + test_s
    evaluation.export_traces(bundle, events, dataset.n_nodes, args.out,
                             update_state=cfg.eval_update_state)
    sidecar = args.out + ".boundaries.csv"
    with open(sidecar, "w", encoding="utf-8") as fh:
        fh.write(f"{splits.t_val!r}\n{splits.t_test!r}\n")
    print(args.out)
    print(sidecar)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rtgnsvdd",
        description="One-class intrusion detection on continuous-time dynamic graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration file (key = value lines)")
        p.add_argument("--seed", type=int, help="master seed, overrides the config")

    p = sub.add_parser("synth", help="generate a synthetic benchmark dataset CSV")
    common(p)
    p.add_argument("--out", required=True, help="output dataset CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a detector on the normal prefix of a dataset")
    common(p)
    p.add_argument("--head", choices=["svdd", "gaussian"],
                   help="svdd = deterministic baseline, gaussian = probabilistic model")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--loss-out", help="loss trace CSV (default: <out>.loss.csv)")
    p.add_argument("--epochs", type=int, help="override train_epochs")
    p.add_argument("--lr", type=float, help="override train_lr")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="noise-injection evaluation with resampling")
    common(p)
    p.add_argument("--checkpoint", action="append", required=True,
                   help="checkpoint path (repeat for a multi-model report)")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--ratios", help="comma list of noise percentages (default from config)")
    p.add_argument("--resamples", type=int, help="noise resamples per ratio (default from config)")
    p.add_argument("--report-out", required=True, help="report CSV output path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("trace", help="export per-event score traces over the whole stream")
    common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--out", required=True, help="trace CSV output path")
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv: Sequence[str] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        raise
    except Exception as exc:  # CLI boundary: report and signal failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
