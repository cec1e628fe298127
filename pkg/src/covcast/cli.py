"""Command-line entry point.

Subcommands: generate, augment, train, forecast, evaluate, experiment,
check-grad. Every subcommand takes --seed; identical flags and seed produce
byte-identical output files. Machine-readable results go to files, log lines
to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .augment import CovariatePool, augment_sample
from .config import AugmentationConfig, EvalConfig, ModelConfig, TrainConfig
from .dataio import (
    ForecastRecord,
    load_config,
    load_corpus,
    load_forecasts,
    save_corpus,
    save_forecasts,
    TimeSeriesSample,
)
from .errors import CovcastError
from .evaluation import aggregate, mase, rolling_tasks, task_view, wql
from .experiments import (
    FORECAST_METHODS,
    ablation_csv_rows,
    make_forecaster,
    run_ablation,
    run_impact_sensitivity,
    sensitivity_csv_rows,
)
from .model import init_params, load_checkpoint, save_checkpoint
from .preprocess import fit_scaler, normalize
from .rng import substream
from .synthgen import generate_synthetic_covariate
from .training import gradient_check, train


def log(message: str) -> None:
    print(message, file=sys.stderr)


def _load_configs(path: str | None):
    if path is None:
        return AugmentationConfig(), ModelConfig(), TrainConfig(), EvalConfig()
    return load_config(path)


def _write_json(path: str | Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _write_csv(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    aug, _, _, _ = _load_configs(args.config)
    horizon = args.horizon
    if args.length <= horizon:
        raise CovcastError("--length must exceed --horizon")
    samples = []
    for i in range(args.samples):
        rng = substream(args.seed, "generate", i)
        values = generate_synthetic_covariate(args.length, aug.synth, rng)
        samples.append(TimeSeriesSample(
            id=f"synth{i:05d}", target=values,
            context_length=args.length - horizon, horizon=horizon,
            period=args.period,
        ))
    save_corpus(samples, args.out)
    log(f"wrote {len(samples)} synthetic records to {args.out}")
    return 0


def cmd_augment(args) -> int:
    aug, _, _, _ = _load_configs(args.config)
    corpus = load_corpus(args.corpus)
    if not corpus:
        raise CovcastError(f"{args.corpus}: empty corpus")
    pool = CovariatePool(corpus=[s.target for s in corpus], synth=aug.synth)
    n_out = args.samples if args.samples is not None else len(corpus)
    augmented = []
    for i in range(n_out):
        rng = substream(args.seed, "augment", i)
        source = corpus[int(rng.integers(0, len(corpus)))]
        total = source.context_length + source.horizon
        start = int(rng.integers(0, len(source.target) - total + 1))
        window = np.asarray(source.target[start : start + total])
        y = normalize(window, fit_scaler(window))
        sample = augment_sample(
            y, pool, aug, rng,
            context_length=source.context_length,
            sample_id=f"{source.id}#aug{i:05d}",
            period=source.period,
            apply_impact=not args.no_impact,
        )
        augmented.append(sample)
    save_corpus(augmented, args.out)
    log(f"wrote {len(augmented)} augmented samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    _, model_cfg, train_cfg, _ = _load_configs(args.config)
    corpus = load_corpus(args.corpus)
    params = init_params(model_cfg, substream(args.seed, "init"))
    log(f"training on {len(corpus)} samples for {train_cfg.steps} steps")
    result = train(params, corpus, model_cfg, train_cfg, substream(args.seed, "train"))
    save_checkpoint(args.out, params, model_cfg)
    if result.losses:
        log(f"final loss {np.mean(result.losses[-20:]):.4f}")
    if args.loss_out:
        _write_csv(args.loss_out,
                   [{"step": i, "loss": v} for i, v in enumerate(result.losses)])
    log(f"wrote checkpoint to {args.out}")
    return 0


def cmd_forecast(args) -> int:
    _, model_cfg, _, eval_cfg = _load_configs(args.config)
    params = None
    if args.model:
        params, model_cfg = load_checkpoint(args.model)
    elif args.method in ("transformer", "transformer-nocov"):
        raise CovcastError(f"--method {args.method} requires --model")
    forecaster = make_forecaster(args.method, params=params,
                                 model_config=model_cfg, eval_config=eval_cfg)
    corpus = load_corpus(args.corpus)
    records = []
    for sample in corpus:
        if args.tasks == "origin":
            views = [(sample.context_length, sample)]
        else:
            tasks, warnings = rolling_tasks(sample, eval_cfg.horizon_periods)
            for w in warnings:
                log(w)
            views = [(t.origin, task_view(sample, t)) for t in tasks]
        for origin, view in views:
            fc = forecaster(view)
            records.append(ForecastRecord(
                sample_id=sample.id, origin=origin,
                levels=fc.levels, values=fc.values,
            ))
    save_forecasts(records, args.out)
    log(f"wrote {len(records)} forecasts to {args.out}")
    return 0


def _group_of(sample_id: str) -> str:
    return sample_id.split("/", 1)[0] if "/" in sample_id else "default"


def cmd_evaluate(args) -> int:
    _, _, _, eval_cfg = _load_configs(args.config)
    corpus = load_corpus(args.corpus)
    by_id = {s.id: s for s in corpus}

    model_files = {}
    for spec in args.forecasts:
        if "=" in spec:
            name, _, path = spec.partition("=")
        else:
            name, path = Path(spec).stem, spec
        model_files[name] = path
    if "seasonal_naive" in model_files:
        raise CovcastError("model name 'seasonal_naive' is reserved for the baseline")

    forecasts = {
        name: {(r.sample_id, r.origin, r.values.shape[0]): r
               for r in load_forecasts(path)}
        for name, path in model_files.items()
    }

    naive = make_forecaster("seasonal-naive")
    per_task_rows = []
    scores_by_metric = {"mase": {}, "wql": {}}
    for sample in corpus:
        tasks, warnings = rolling_tasks(sample, eval_cfg.horizon_periods)
        for w in warnings:
            log(w)
        group = _group_of(sample.id)
        for task in tasks:
            view = task_view(by_id[task.sample_id], task)
            truth = np.asarray(view.target[task.origin : task.origin + task.horizon])
            context = np.asarray(view.target[: task.origin])
            key = (task.sample_id, task.origin, task.horizon)
            evaluated = {"seasonal_naive": naive(view)}
            for name, table in forecasts.items():
                record = table.get(key)
                if record is None:
                    raise CovcastError(
                        f"forecast file for {name!r} misses task {key}"
                    )
                evaluated[name] = record
            for name, fc in evaluated.items():
                values = fc.values if hasattr(fc, "values") else fc
                median = values[:, 4]
                m = mase(median, truth, context, task.period)
                w = wql(values, truth)
                per_task_rows.append({
                    "group": group, "model": name, "sample_id": task.sample_id,
                    "origin": task.origin, "horizon": task.horizon,
                    "mase": m, "wql": w,
                })
                for metric, value in (("mase", m), ("wql", w)):
                    scores_by_metric[metric].setdefault(group, {}).setdefault(
                        name, []).append(value)

    tables = {}
    for metric, by_group in scores_by_metric.items():
        means = {g: {m: float(np.mean(vs)) for m, vs in models.items()}
                 for g, models in by_group.items()}
        table = aggregate(means, "seasonal_naive")
        for warning in table.warnings:
            log(warning)
        tables[metric] = {
            "raw": table.raw,
            "relative": table.relative,
            "geo_mean": table.geo_mean,
            "avg_rank": table.avg_rank,
        }

    _write_json(args.out, {"tables": tables, "per_task": per_task_rows})
    log(f"wrote scores to {args.out}")
    return 0


def cmd_experiment(args) -> int:
    aug, model_cfg, train_cfg, eval_cfg = _load_configs(args.config)
    if args.study == "ablation":
        report = run_ablation(
            args.seed, aug_config=aug, model_config=model_cfg,
            train_config=train_cfg, eval_config=eval_cfg,
            corpus_size=args.corpus_size, eval_size=args.eval_size,
        )
        rows = ablation_csv_rows(report)
    else:
        if not args.model:
            raise CovcastError("impact-sensitivity requires --model")
        params, ckpt_cfg = load_checkpoint(args.model)
        models = {
            "transformer": make_forecaster("transformer", params=params,
                                           model_config=ckpt_cfg, eval_config=eval_cfg),
            "transformer-nocov": make_forecaster("transformer-nocov", params=params,
                                                 model_config=ckpt_cfg, eval_config=eval_cfg),
            "ridge-ctx": make_forecaster("ridge-ctx", params=params,
                                         model_config=ckpt_cfg, eval_config=eval_cfg),
            "seasonal-naive": make_forecaster("seasonal-naive"),
        }
        report = run_impact_sensitivity(
            args.seed, models,
            event_counts=tuple(int(x) for x in args.event_counts.split(",")),
            n_covariates=tuple(int(x) for x in args.n_covariates.split(",")),
            lag_mode=args.lag_mode,
            samples_per_cell=args.samples_per_cell,
        )
        rows = sensitivity_csv_rows(report)
    _write_json(args.out, report)
    _write_csv(Path(args.out).with_suffix(".csv"), rows)
    log(f"wrote report to {args.out}")
    return 0


def cmd_check_grad(args) -> int:
    _, model_cfg, _, _ = _load_configs(args.config)
    rng = substream(args.seed, "check-grad")
    params = init_params(model_cfg, substream(args.seed, "init"))
    T = 4 * model_cfg.input_patch_len
    h = model_cfg.output_patch_len
    target = rng.normal(size=T + h).cumsum() * 0.3 + 2.0
    from .dataio import Covariate

    sample = TimeSeriesSample(
        id="gradcheck", target=target, context_length=T, horizon=h,
        covariates={"x": Covariate(kind="past_and_future",
                                   values=rng.normal(size=T + h))},
    )
    error = gradient_check(params, sample, model_cfg, epsilon=args.epsilon,
                           n_checks=args.checks, rng=rng)
    print(f"max relative error: {error:.3e}")
    if error >= args.tolerance:
        log(f"FAIL: {error:.3e} >= {args.tolerance:.0e}")
        return 1
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covcast",
        description="Covariate-aware probabilistic time-series forecasting toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True):
        p.add_argument("--seed", type=int, required=True, help="root random seed")
        if config:
            p.add_argument("--config", default=None, help="flat key=value config file")

    p = sub.add_parser("generate", help="emit synthetic covariate-style records")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--length", type=int, default=256)
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--period", type=int, default=1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("augment", help="apply covariate augmentation to a corpus")
    add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=None,
                   help="number of augmented samples (default: corpus size)")
    p.add_argument("--no-impact", action="store_true",
                   help="attach covariates without applying impacts")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train the forecaster on an augmented corpus")
    add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss-out", default=None, help="optional CSV loss trace")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="forecast a corpus")
    add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=FORECAST_METHODS, default="transformer")
    p.add_argument("--model", default=None, help="checkpoint path")
    p.add_argument("--tasks", choices=("rolling", "origin"), default="rolling",
                   help="rolling evaluation schedule or the record's own origin")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", help="score forecasts against a corpus")
    add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--forecasts", nargs="+", required=True,
                   help="forecast files, optionally name=path")
    p.add_argument("--out", required=True, help="scores JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a scripted study")
    p.add_argument("study", choices=("ablation", "impact-sensitivity"))
    add_common(p)
    p.add_argument("--out", required=True, help="report JSON path (CSV written next to it)")
    p.add_argument("--model", default=None, help="checkpoint (impact-sensitivity)")
    p.add_argument("--corpus-size", type=int, default=5000)
    p.add_argument("--eval-size", type=int, default=500)
    p.add_argument("--event-counts", default="0,1,2,4,8")
    p.add_argument("--n-covariates", default="1")
    p.add_argument("--lag-mode", choices=("fixed0", "geometric"), default="fixed0")
    p.add_argument("--samples-per-cell", type=int, default=200)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("check-grad", help="verify analytic gradients")
    add_common(p)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--checks", type=int, default=200)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_check_grad)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CovcastError as exc:
        log(f"error: {exc}")
        return 1
    except OSError as exc:
        log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
