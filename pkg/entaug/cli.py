"""
Command-line entry point: train, compare, preview-augment, bench-throughput, eval.

Every subcommand resolves its RunConfig as preset < --config file < flags.
"""
import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

from entaug import __version__
from entaug.augmentation.augmenter import write_previews
from entaug.augmentation.transforms import TransformKind
from entaug.config import (
    DEFAULT_PRESET, PRESETS, LossConfig, OptimizerConfig, RunConfig, build_run_config,
    configure_logging,
)
from entaug.evaluation.metrics import LINKAGES, evaluate_dataset, feature_dunn_index
from entaug.exceptions import EntAugError, InvalidInputError
from entaug.model.network import build_network
from entaug.training.benchmark import bench_throughput
from entaug.training.checkpoint import FINAL_CHECKPOINT_NAME, load_checkpoint
from entaug.training.compare import MIN_SEEDS, compare, default_arms
from entaug.training.trainer import load_datasets, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_ERROR = 2

# Flat RunConfig keys exposed as --flags; values are parsed by the pydantic models
_FLAT_FIELDS = (
    [name for name in RunConfig.__fields__ if name not in ("optimizer", "loss")]
    + list(OptimizerConfig.__fields__)
    + list(LossConfig.__fields__)
)


def _add_run_options(parser: argparse.ArgumentParser):
    parser.add_argument("--preset", default=DEFAULT_PRESET, choices=sorted(PRESETS))
    parser.add_argument("--config", dest="config_file", default=None, help="flat key=value config file")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
    group = parser.add_argument_group("run configuration overrides")
    for name in _FLAT_FIELDS:
        group.add_argument(f"--{name.replace('_', '-')}", dest=f"cfg_{name}", default=None, metavar="VALUE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entaug", description="Entropy-driven adaptive augmentation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model")
    _add_run_options(p_train)

    p_compare = sub.add_parser("compare", help="CE vs CE+EntLoss across augmentation modes and seeds")
    _add_run_options(p_compare)
    p_compare.add_argument("--seeds", default="0,1,2", help="comma-separated seeds (at least 3)")
    p_compare.add_argument("--arms", default=None,
                           help=f"comma-separated subset of {','.join(a.name for a in default_arms())}")

    p_preview = sub.add_parser("preview-augment", help="write augmented samples as PPM files")
    _add_run_options(p_preview)
    p_preview.add_argument("--count", type=int, default=8)
    p_preview.add_argument("--split", choices=("train", "test"), default="train")
    p_preview.add_argument("--kind", choices=[k.value for k in TransformKind], default=None)
    p_preview.add_argument("--magnitude", type=float, default=None)
    p_preview.add_argument("--out", default=None, help="output directory (default: <output_dir>/previews)")

    p_bench = sub.add_parser("bench-throughput", help="time the augmentation stage per magnitude source")
    _add_run_options(p_bench)
    p_bench.add_argument("--n-batches", type=int, default=100)
    p_bench.add_argument("--warmup", type=int, default=2)

    p_eval = sub.add_parser("eval", help="evaluate a saved checkpoint on the test split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data-dir", default=None)
    p_eval.add_argument("--linkage", choices=LINKAGES, default="single")
    p_eval.add_argument("--log-level", default=None)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {name: getattr(args, f"cfg_{name}") for name in _FLAT_FIELDS
            if getattr(args, f"cfg_{name}") is not None}


def _run_config(args: argparse.Namespace) -> RunConfig:
    return build_run_config(args.preset, args.config_file, _overrides(args))


def _parse_seeds(text: str) -> List[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as e:
        raise InvalidInputError(f"seeds must be integers: {text}") from e


def cmd_train(args) -> Dict[str, Any]:
    result = train(_run_config(args))
    return {"output_dir": os.path.dirname(result.final_checkpoint_path), **result.summary}


def cmd_compare(args) -> Dict[str, Any]:
    seeds = _parse_seeds(args.seeds)
    arms = default_arms()
    if args.arms:
        wanted = [a.strip() for a in args.arms.split(",") if a.strip()]
        known = {arm.name: arm for arm in arms}
        unknown = [name for name in wanted if name not in known]
        if unknown:
            raise InvalidInputError(f"unknown arms {unknown}")
        arms = [known[name] for name in wanted]
    if len(seeds) < MIN_SEEDS:
        raise InvalidInputError(f"compare needs at least {MIN_SEEDS} seeds")
    report = compare(_run_config(args), seeds, arms)
    return {"output_dir": report.output_dir, "claims": report.claims}


def cmd_preview(args) -> Dict[str, Any]:
    cfg = _run_config(args)
    train_set, test_set = load_datasets(cfg)
    ds = train_set if args.split == "train" else test_set
    out_dir = args.out or os.path.join(cfg.output_dir, "previews")
    kind = TransformKind(args.kind) if args.kind else None
    paths = write_previews(ds, out_dir, args.count, cfg.seed, kind, args.magnitude, cfg.fill)
    return {"output_dir": out_dir, "files": [os.path.basename(p) for p in paths]}


def cmd_bench(args) -> Dict[str, Any]:
    cfg = _run_config(args)
    report = bench_throughput(cfg, args.n_batches, args.warmup, output_dir=cfg.output_dir)
    return {"modes": report.reset_index().to_dict(orient="records")}


def cmd_eval(args) -> Dict[str, Any]:
    path = args.checkpoint
    if os.path.isdir(path):
        path = os.path.join(path, FINAL_CHECKPOINT_NAME)
    ckpt = load_checkpoint(path)
    cfg = ckpt.config.with_updates(data_dir=args.data_dir) if args.data_dir else ckpt.config
    train_set, test_set = load_datasets(cfg)
    net = build_network(cfg.arch, train_set.image_shape, train_set.k, cfg.hidden_dim, seed=cfg.seed)
    ckpt.restore(net)
    acc, ce = evaluate_dataset(net, test_set)
    return {
        "checkpoint": path,
        "epoch": ckpt.epoch,
        "test_accuracy": acc,
        "test_empirical_ce": ce,
        "test_dunn_index": feature_dunn_index(net, test_set, args.linkage),
        "linkage": args.linkage,
    }


COMMANDS = {
    "train": cmd_train,
    "compare": cmd_compare,
    "preview-augment": cmd_preview,
    "bench-throughput": cmd_bench,
    "eval": cmd_eval,
}


def _error_line(exc: BaseException) -> str:
    return "error: " + json.dumps({"type": type(exc).__name__, "message": str(exc)})


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        output = COMMANDS[args.command](args)
    except (EntAugError, OSError) as e:
        print(_error_line(e), file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        logger.exception(f"Unexpected failure in '{args.command}'")
        print(_error_line(e), file=sys.stderr)
        return EXIT_UNEXPECTED
    print(json.dumps(output, indent=2, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
