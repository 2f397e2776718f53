from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

from lithos.config import ExplainConfig, RunConfig, dump_config, load_config
from lithos.data import (
    Corpus,
    generate_synthetic,
    resize_image,
    scan_corpus,
    stratified_split,
    write_corpus,
)
from lithos.errors import ConfigError, LithosError, SplitError
from lithos.explain import explain, pointing_game, rotation_stability, write_rendered
from lithos.runtime import Runtime
from lithos.train import (
    CrossValidation,
    MetricsReport,
    aggregate_seeds,
    cross_validate,
    evaluate,
    metrics_from_predictions,
    misclassifications_from_predictions,
    normalization_for,
    predict,
    train,
    write_aggregate_csv,
    write_confusion_csv,
    write_consistency_csv,
    write_grid_csv,
    write_history_csv,
    write_metrics_csv,
    write_misclassification_csv,
)
from lithos.train.report import write_rows
from lithos.zoo import Model, build_model, import_named_tensors, load_checkpoint

logger = logging.getLogger(__name__)

RESOLVED = "config.resolved"
BEST_CONFIG = "best.config"


def prepare_run(config: RunConfig) -> Path:
    """Create the run directory and echo the fully resolved config into it."""
    run_dir = config.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    dump_config(config, run_dir / RESOLVED)
    return run_dir


def load_corpus(config: RunConfig) -> Corpus:
    if config.data.source == "dir":
        return scan_corpus(config.data.root)
    return generate_synthetic(config.data.synth.spec())


def split_corpus(config: RunConfig) -> Corpus:
    return stratified_split(
        load_corpus(config),
        train_fraction=config.split.train_fraction,
        seed=config.split.seed,
        group_by_sample=config.split.group_by_sample,
        imagenet_stats=config.split.imagenet_stats,
    )


def fresh_model(config: RunConfig, seed: int) -> Model:
    model = build_model(config.model, seed)
    if config.init.path:
        import_named_tensors(config.init.path, model, exclude=config.init.exclude)
        logger.info("Initialized %s from %s", model.model_id, config.init.path)
    return model


def checkpoint_path(config: RunConfig, seed: int) -> Path:
    return config.run_dir / "checkpoints" / f"seed{seed}.flck"


def check_classes(config: RunConfig, corpus: Corpus) -> None:
    if config.model.num_classes != corpus.num_classes:
        raise ConfigError(
            f"model.num_classes={config.model.num_classes} but the corpus has "
            f"{corpus.num_classes} classes ({', '.join(corpus.class_names)}); "
            f"set model.num_classes={corpus.num_classes}."
        )


def trained_model(checkpoint: Optional[str], config: RunConfig, corpus: Corpus) -> Model:
    path = Path(checkpoint) if checkpoint else checkpoint_path(config, config.seeds[0])
    if not path.is_file():
        raise ConfigError(f"Checkpoint {path} does not exist; run 'lithos train' first or set the checkpoint key.")
    model = load_checkpoint(path)
    if model.class_names and list(model.class_names) != list(corpus.class_names):
        raise ConfigError(
            f"Checkpoint classes {model.class_names} do not match the corpus classes {corpus.class_names}."
        )
    return model


def cmd_synth(config: RunConfig) -> Path:
    """Write the synthetic corpus (images, masks, manifest) in the scan layout."""
    run_dir = prepare_run(config)
    target = Path(config.data.root) if config.data.root else run_dir / "corpus"
    return write_corpus(generate_synthetic(config.data.synth.spec()), target)


def cmd_train(config: RunConfig) -> list[Path]:
    """One training per seed, then per-seed metrics and the seed aggregate."""
    run_dir = prepare_run(config)
    corpus = split_corpus(config)
    check_classes(config, corpus)
    has_test = bool(corpus.indices("test"))

    checkpoints = []
    reports: list[tuple[int, MetricsReport]] = []
    for seed in config.seeds:
        train_config = config.train.model_copy(update={"seed": seed})
        path = checkpoint_path(config, seed)
        result = train(fresh_model(config, seed), corpus, train_config, checkpoint_path=path)
        checkpoints.append(path)
        seed_dir = run_dir / "metrics" / f"seed{seed}"
        write_history_csv(seed_dir / "history.csv", result.history)
        if has_test:
            report = evaluate(result.model, corpus, "test", train_config.eval_batch_size)
            write_metrics_csv(seed_dir / "metrics.csv", [(seed, report)])
            write_confusion_csv(seed_dir / "confusion.csv", report)
            reports.append((seed, report))

    if reports:
        write_metrics_csv(run_dir / "metrics" / "metrics.csv", reports)
        aggregate = aggregate_seeds([r for _, r in reports], [s for s, _ in reports])
        write_aggregate_csv(run_dir / "metrics" / "aggregate.csv", aggregate)
        logger.info("Test accuracy over %d run(s): %s", aggregate.runs, aggregate.render("accuracy"))
    else:
        logger.warning("The test split is empty; no metrics were written.")
    return checkpoints


def cmd_xval(config: RunConfig) -> CrossValidation:
    """Grid search with k folds of the train split; writes the grid CSV and the winning train settings."""
    run_dir = prepare_run(config)
    corpus = split_corpus(config)
    check_classes(config, corpus)
    cv = cross_validate(
        lambda seed: fresh_model(config, seed),
        corpus,
        config.xval.k,
        config.xval.grid(),
        config.train,
        seed=config.xval.seed,
    )
    write_grid_csv(run_dir / "metrics" / "grid.csv", cv)
    dump_config(cv.best_config, run_dir / BEST_CONFIG, prefix="train.")
    logger.info(
        "Best of %d trainings: lr=%g wd=%g",
        cv.trainings,
        cv.best.learning_rate,
        cv.best.weight_decay,
    )
    return cv


def cmd_eval(config: RunConfig) -> MetricsReport:
    run_dir = prepare_run(config)
    corpus = split_corpus(config)
    model = trained_model(config.eval.checkpoint, config, corpus)
    split = config.eval.split
    indices = corpus.indices(split)
    if not indices:
        raise SplitError(f"The {split} split is empty; there is nothing to evaluate.")

    samples = [corpus.samples[i] for i in indices]
    predictions, _ = predict(
        model, samples, normalization_for(model, corpus), config.train.eval_batch_size
    )
    report = metrics_from_predictions([s.label for s in samples], predictions, corpus.class_names)
    errors = misclassifications_from_predictions(corpus, indices, predictions)

    eval_dir = run_dir / "metrics" / "eval"
    write_metrics_csv(eval_dir / "metrics.csv", [("", report)])
    write_confusion_csv(eval_dir / "confusion.csv", report)
    write_misclassification_csv(eval_dir / "misclassified.csv", errors)
    write_consistency_csv(eval_dir / "consistency.csv", errors)
    logger.info("%s accuracy %.4f over %d images", split, report.accuracy, len(indices))
    return report


def _attention_slots(model: Model, options: ExplainConfig, method: str) -> list[tuple[Optional[int], Optional[int]]]:
    if method != "attention" or (options.layers is None and options.heads is None):
        return [(None, None)]
    depth = model.spec.depth
    layers = [layer % depth for layer in (options.layers or [-1])]
    heads = options.heads or [None]
    return list(itertools.product(layers, heads))


def cmd_explain(config: RunConfig) -> Path:
    """Render explanations for one split; pointing game where masks exist, rotation sweep on request."""
    run_dir = prepare_run(config)
    options = config.explain
    corpus = split_corpus(config)
    model = trained_model(options.checkpoint, config, corpus)
    indices = corpus.indices(options.split)[: options.limit]
    if not indices:
        raise SplitError(f"The {options.split} split is empty; there is nothing to explain.")

    out = run_dir / "explain"
    resolution = model.spec.input_resolution
    kinds = tuple(options.renders)
    pointing_rows, rotation_rows = [], []
    for index in indices:
        sample = corpus.samples[index]
        target = sample.label if options.target == "label" else None
        image = sample.image
        if image.shape[:2] != (resolution, resolution):
            image = resize_image(image, resolution)

        for method in options.methods:
            if options.rotation:
                result = rotation_stability(
                    model,
                    sample,
                    options.angles,
                    method=method,
                    target_class=target,
                    top_fraction=options.top_fraction,
                    layer=None if method == "attention" else options.cam_layer,
                    product=options.product,
                )
                for saliency in result.maps:
                    write_rendered(out / method, sample.stem, image, saliency, kinds, options.alpha, options.threshold)
                rotation_rows.append(
                    (
                        sample.stem,
                        method,
                        result.target_class,
                        result.stability,
                        int(result.prediction_invariant),
                        " ".join(str(p) for p in result.predictions),
                    )
                )
                continue

            for slot, (layer, head) in enumerate(_attention_slots(model, options, method)):
                saliency = explain(
                    model,
                    image,
                    method,
                    target_class=target,
                    layer=options.cam_layer if layer is None and method != "attention" else layer,
                    head=head,
                    product=options.product,
                )
                write_rendered(
                    out / method,
                    sample.stem,
                    image,
                    saliency,
                    kinds,
                    options.alpha,
                    options.threshold,
                    layer_index=layer,
                )
                if slot == 0 and sample.mask is not None:
                    pointing_rows.append((sample.stem, method, int(pointing_game(saliency, sample.mask))))

    if pointing_rows:
        write_rows(out / "pointing.csv", ("stem", "method", "hit"), pointing_rows)
        logger.info(
            "Pointing game: %d/%d hits",
            sum(row[2] for row in pointing_rows),
            len(pointing_rows),
        )
    if rotation_rows:
        write_rows(
            out / "rotation.csv",
            ("stem", "method", "target", "stability", "prediction_invariant", "predictions"),
            rotation_rows,
        )
    return out


COMMANDS: dict[str, Callable[[RunConfig], object]] = {
    "synth": cmd_synth,
    "train": cmd_train,
    "xval": cmd_xval,
    "eval": cmd_eval,
    "explain": cmd_explain,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lithos",
        description="Train and explain thin-section classifiers.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="pipeline step to run")
    parser.add_argument("--config", type=str, default=None, help="key=value run configuration file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    parser.add_argument("--threads", type=int, default=None, help="worker threads for per-sample preprocessing")
    parser.add_argument("--deterministic", action="store_true", help="force deterministic execution")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="log warnings and errors only")
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides: list[str | tuple[str, str]] = list(args.overrides)
    if args.threads is not None:
        overrides.append(("runtime.threads", str(args.threads)))
    if args.deterministic:
        overrides.append(("runtime.deterministic", "true"))
    return load_config(args.config, overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        config = resolve_config(args)
        with Runtime(threads=config.runtime.threads, deterministic=config.runtime.deterministic):
            COMMANDS[args.command](config)
    except LithosError as error:
        logger.error("%s failed: %s", args.command, error)
        return error.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
