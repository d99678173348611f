"""Command-line entry point: train, eval, classify, sweep, gradcheck, ablate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Progress and diagnostics go to stderr; machine-readable output (JSON
reports, CSV tables) goes to stdout and, when --out is given, to files.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evaluator, kg_data, trainer
from .baselines import BASELINE_KINDS, BaselineConfig
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .hie_model import HieConfig
from .kg_data import DataError, classify_relations, dataset_stats, load_kg
from .trainer import NumericError, TrainConfig, grad_check, init_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

MODEL_KINDS = ("hie",) + BASELINE_KINDS
NORM_NAMES = {"l1": 1, "l2": 2}


class UsageError(Exception):
    """Bad flags or config values; maps to exit code 1."""


@dataclass(frozen=True)
class RunConfig:
    """One run's worth of settings: model + training + data + command extras.

    Every field can come from a JSON config document and be overridden by
    the command-line flag of the same name.
    """

    data_dir: str = None
    model: str = "hie"
    dim: int = 64
    levels: int = 2
    lambda1: float = 0.5
    gamma: float = 6.0
    alpha_temp: float = 1.0
    negatives: int = 16
    batch_size: int = 256
    steps: int = 1000
    lr: float = 1e-4
    norm: str = "l1"
    transform: str = "diagonal"
    seed: int = 0
    out: str = None
    no_distance: bool = False
    no_semantic: bool = False
    no_distance_deep: bool = False
    no_semantic_deep: bool = False
    tie_break: str = "pessimistic"
    adversarial_sign: str = "plausibility"
    # command-specific
    checkpoint: str = None
    split: str = "test"
    eta: float = 1.5
    fd_step: float = 1e-6
    tolerance: float = 1e-4
    batches: int = 3
    dump_dicts: bool = False
    sweep_levels: tuple = None
    sweep_lambda1: tuple = None
    sweep_gamma: tuple = None
    sweep_dim: tuple = None
    sweep_batch_size: tuple = None


RUN_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def derive_lambdas(levels, lambda1):
    """Level weights (lambda1, rest sharing 1 - lambda1 equally)."""
    if levels == 1:
        return (1.0,)
    if not 0.0 <= lambda1 <= 1.0:
        raise UsageError(f"lambda1 must lie in [0, 1], got {lambda1}")
    rest = (1.0 - lambda1) / (levels - 1)
    return (lambda1,) + (rest,) * (levels - 1)


def model_config_from(run: RunConfig):
    try:
        if run.model == "hie":
            return HieConfig(
                dim=run.dim,
                levels=run.levels,
                lambdas=derive_lambdas(run.levels, run.lambda1),
                norm_p=NORM_NAMES[run.norm],
                transform=run.transform,
                disable_distance=run.no_distance,
                disable_semantic=run.no_semantic,
                disable_distance_deep=run.no_distance_deep,
                disable_semantic_deep=run.no_semantic_deep,
            )
        return BaselineConfig(kind=run.model, dim=run.dim, norm_p=NORM_NAMES[run.norm])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def train_config_from(run: RunConfig) -> TrainConfig:
    try:
        return TrainConfig(
            gamma=run.gamma,
            alpha_temp=run.alpha_temp,
            num_negatives=run.negatives,
            learning_rate=run.lr,
            steps=run.steps,
            batch_size=run.batch_size,
            seed=run.seed,
            adversarial_sign=run.adversarial_sign,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _config_as_doc(config) -> dict:
    doc = dataclasses.asdict(config)
    if "lambdas" in doc:
        doc["lambdas"] = list(doc["lambdas"])
    return doc


def _model_config_from_doc(kind, doc):
    if kind == "hie":
        doc = dict(doc)
        doc["lambdas"] = tuple(doc["lambdas"])
        return HieConfig(**doc)
    return BaselineConfig(**doc)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_run_flags(parser):
    g = parser.add_argument_group("run configuration")
    g.add_argument("--config", metavar="JSON", help="JSON config document; flags override it")
    g.add_argument("--data-dir", dest="data_dir")
    g.add_argument("--model", choices=MODEL_KINDS)
    g.add_argument("--dim", type=int)
    g.add_argument("--levels", type=int)
    g.add_argument("--lambda1", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--alpha-temp", dest="alpha_temp", type=float)
    g.add_argument("--negatives", type=int)
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--steps", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--norm", choices=sorted(NORM_NAMES))
    g.add_argument("--transform", choices=("diagonal", "rank1"))
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.add_argument("--no-distance", dest="no_distance", action="store_const", const=True)
    g.add_argument("--no-semantic", dest="no_semantic", action="store_const", const=True)
    g.add_argument(
        "--no-distance-deep", dest="no_distance_deep", action="store_const", const=True
    )
    g.add_argument(
        "--no-semantic-deep", dest="no_semantic_deep", action="store_const", const=True
    )
    g.add_argument("--tie-break", dest="tie_break", choices=("pessimistic", "strict"))
    g.add_argument(
        "--adversarial-sign", dest="adversarial_sign", choices=("plausibility", "literal")
    )


def _comma_list(kind):
    def parse(text):
        try:
            return tuple(kind(part) for part in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated {kind.__name__}s")

    return parse


def build_parser() -> _Parser:
    parser = _Parser(prog="hiekge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p_train = sub.add_parser("train", help="train a model, write checkpoint + loss log")
    _add_run_flags(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint, write a JSON report")
    _add_run_flags(p_eval)
    p_eval.add_argument("--checkpoint")
    p_eval.add_argument("--split", choices=("train", "valid", "test"))

    p_classify = sub.add_parser("classify", help="relation category table (CSV)")
    _add_run_flags(p_classify)
    p_classify.add_argument("--eta", type=float)

    p_sweep = sub.add_parser("sweep", help="grid search: one CSV row per point")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--sweep-levels", dest="sweep_levels", type=_comma_list(int))
    p_sweep.add_argument("--sweep-lambda1", dest="sweep_lambda1", type=_comma_list(float))
    p_sweep.add_argument("--sweep-gamma", dest="sweep_gamma", type=_comma_list(float))
    p_sweep.add_argument("--sweep-dim", dest="sweep_dim", type=_comma_list(int))
    p_sweep.add_argument(
        "--sweep-batch-size", dest="sweep_batch_size", type=_comma_list(int)
    )

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient check")
    _add_run_flags(p_grad)
    p_grad.add_argument("--fd-step", dest="fd_step", type=float)
    p_grad.add_argument("--tolerance", type=float)
    p_grad.add_argument("--batches", type=int)

    p_ablate = sub.add_parser("ablate", help="score-space ablation comparison table")
    _add_run_flags(p_ablate)

    p_stats = sub.add_parser("stats", help="dataset summary")
    _add_run_flags(p_stats)
    p_stats.add_argument("--dump-dicts", dest="dump_dicts", action="store_const", const=True)

    return parser


def merge_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the JSON config document, then explicit flags."""
    merged = {}
    config_path = getattr(args, "config", None)
    if config_path is not None:
        try:
            with open(config_path, encoding="utf-8") as f:
                doc = json.load(f)
        except OSError as exc:
            raise DataError(f"cannot read config {config_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {config_path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError(f"config {config_path} must hold a JSON object")
        for key, value in doc.items():
            if key not in RUN_FIELDS:
                raise UsageError(f"unknown config field {key!r}")
            if key.startswith("sweep_") and value is not None:
                value = tuple(value)
            merged[key] = value
    for key, value in vars(args).items():
        if key in RUN_FIELDS and value is not None:
            merged[key] = value
    run = RunConfig(**merged)
    _validate_run(run)
    return run


def _validate_run(run: RunConfig):
    if run.model not in MODEL_KINDS:
        raise UsageError(f"unknown model {run.model!r}")
    if run.norm not in NORM_NAMES:
        raise UsageError(f"unknown norm {run.norm!r}")
    if run.tie_break not in ("pessimistic", "strict"):
        raise UsageError(f"unknown tie_break {run.tie_break!r}")
    if run.split not in ("train", "valid", "test"):
        raise UsageError(f"unknown split {run.split!r}")


def _require(run: RunConfig, *names):
    for name in names:
        if getattr(run, name) is None:
            flag = "--" + name.replace("_", "-")
            raise UsageError(f"{flag} is required for this command")


def _info(message):
    print(message, file=sys.stderr)


def _out_dir(run: RunConfig) -> Path:
    path = Path(run.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_dataset(run: RunConfig):
    _require(run, "data_dir")
    return load_kg(run.data_dir)


def _evaluation_doc(params, model_config, kg, split, tie_break):
    results = evaluator.evaluate(params, model_config, kg, split=split, tie_break=tie_break)
    categories = classify_relations(kg.train)
    try:
        report = evaluator.full_report(results, categories)
    except ValueError as exc:
        # a relation in this split never appears in train, so it has no category
        raise DataError(str(exc)) from exc
    conventions = {"filtered": True, "tie_break": tie_break, "split": split}
    return evaluator.report_to_dict(report, conventions=conventions)


def _print_json(doc):
    print(json.dumps(doc, indent=2, sort_keys=True))


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_loss_log(path, log):
    lines = ["step,mean_loss,alpha"]
    for step, loss_value, alpha in log:
        alpha_text = "" if alpha is None else f"{alpha:.17g}"
        lines.append(f"{step},{loss_value:.17g},{alpha_text}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _checkpoint_meta(run, kg, model_config, train_config) -> dict:
    return {
        "model_kind": run.model,
        "num_entities": kg.num_entities,
        "num_relations": kg.num_relations,
        "step": train_config.steps,
        "seed": train_config.seed,
        "model_config": _config_as_doc(model_config),
        "train_config": _config_as_doc(train_config),
    }


def _train_once(run: RunConfig, kg, out_dir: Path, stem="model"):
    """Shared by train/sweep/ablate: fit, checkpoint, return artifacts."""
    model_config = model_config_from(run)
    train_config = train_config_from(run)
    params, log = trainer.train(kg, run.model, model_config, train_config)
    ckpt_path = out_dir / f"{stem}.ckpt"
    save_checkpoint(params, _checkpoint_meta(run, kg, model_config, train_config), ckpt_path)
    _write_loss_log(out_dir / f"{stem}_loss.csv", log)
    return params, model_config, log, ckpt_path


def cmd_train(run: RunConfig) -> int:
    _require(run, "out")
    kg = _load_dataset(run)
    out_dir = _out_dir(run)
    _info(
        f"training {run.model} on {run.data_dir} "
        f"({kg.num_entities} entities, {kg.num_relations} relations, "
        f"{len(kg.train)} train triples)"
    )
    params, model_config, log, ckpt_path = _train_once(run, kg, out_dir)
    if log:
        _info(f"final training loss {log[-1][1]:.6f} at step {log[-1][0]}")
    _info(f"checkpoint written to {ckpt_path}")
    doc = _evaluation_doc(params, model_config, kg, "valid", run.tie_break)
    _print_json(doc)
    _write_json(out_dir / "validation.json", doc)
    return EXIT_OK


def cmd_eval(run: RunConfig) -> int:
    _require(run, "checkpoint")
    kg = _load_dataset(run)
    loaded = load_checkpoint(run.checkpoint)
    params, meta = loaded.params, loaded.meta
    declared = (meta.get("num_entities"), meta.get("num_relations"))
    actual = (kg.num_entities, kg.num_relations)
    if params.num_entities != kg.num_entities or params.num_relations != kg.num_relations:
        raise DataError(
            f"checkpoint was trained on {params.num_entities} entities / "
            f"{params.num_relations} relations but {run.data_dir} has "
            f"{actual[0]} / {actual[1]}"
        )
    if declared[0] is not None and declared != actual:
        raise DataError(
            f"checkpoint metadata declares vocab {declared}, dataset has {actual}"
        )
    kind = meta.get("model_kind", run.model)
    if meta.get("model_config") is not None:
        model_config = _model_config_from_doc(kind, meta["model_config"])
    else:
        model_config = model_config_from(dataclasses.replace(run, model=kind))
    doc = _evaluation_doc(params, model_config, kg, run.split, run.tie_break)
    _print_json(doc)
    if run.out is not None:
        _write_json(_out_dir(run) / "report.json", doc)
    return EXIT_OK


CLASSIFY_HEADER = "relation,hco,tcs,category"


def cmd_classify(run: RunConfig) -> int:
    kg = _load_dataset(run)
    try:
        categories = classify_relations(kg.train, eta=run.eta)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    lines = [CLASSIFY_HEADER]
    for rel_id in sorted(categories):
        cat = categories[rel_id]
        name = kg.relation_names[rel_id]
        lines.append(f"{name},{cat.hco:.6f},{cat.tcs:.6f},{cat.category}")
    text = "\n".join(lines)
    print(text)
    if run.out is not None:
        (_out_dir(run) / "relations.csv").write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


SWEEP_HEADER = "levels,lambda1,gamma,dim,batch_size,status,mr,mrr,hits1,hits3,hits10,count"


def cmd_sweep(run: RunConfig) -> int:
    _require(run, "out")
    kg = _load_dataset(run)
    out_dir = _out_dir(run)
    axes = [
        ("levels", run.sweep_levels),
        ("lambda1", run.sweep_lambda1),
        ("gamma", run.sweep_gamma),
        ("dim", run.sweep_dim),
        ("batch_size", run.sweep_batch_size),
    ]
    axes = [(name, values) for name, values in axes if values]
    if axes:
        names = [name for name, _ in axes]
        points = [
            dict(zip(names, combo))
            for combo in itertools.product(*(values for _, values in axes))
        ]
    else:
        points = [{}]  # 1-point grid: the base configuration itself
    lines = [SWEEP_HEADER]
    print(SWEEP_HEADER)
    for index, overrides in enumerate(points):
        point = dataclasses.replace(run, **overrides)
        prefix = f"{point.levels},{point.lambda1:g},{point.gamma:g},{point.dim},{point.batch_size}"
        try:
            params, model_config, _, _ = _train_once(kg=kg, run=point, out_dir=out_dir, stem=f"point_{index:03d}")
            doc = _evaluation_doc(params, model_config, kg, "valid", point.tie_break)
            row = (
                f"{prefix},ok,{doc['mr']:.6f},{doc['mrr']:.6f},{doc['hits1']:.6f},"
                f"{doc['hits3']:.6f},{doc['hits10']:.6f},{doc['count']}"
            )
        except (UsageError, DataError, NumericError, ValueError) as exc:
            _info(f"sweep point {index} failed: {exc}")
            row = f"{prefix},error:{type(exc).__name__},,,,,,"
        lines.append(row)
        print(row)
    (out_dir / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_gradcheck(run: RunConfig) -> int:
    kg = _load_dataset(run)
    model_config = model_config_from(run)
    train_config = train_config_from(run)
    params = init_model(run.model, kg.num_entities, kg.num_relations, model_config, run.seed)
    total = sum(t.size for _, t in params.field_items())
    max_coords = None if total <= 5000 else 2000
    rng = np.random.default_rng(run.seed)
    worst = 0.0
    for index in range(run.batches):
        batch = kg_data.sample_batch(kg.train, min(8, len(kg.train)), rng)
        err = grad_check(
            params, model_config, train_config, batch,
            fd_step=run.fd_step, max_coords=max_coords, rng=rng, floor=None,
        )
        _info(f"batch {index}: max relative error {err:.3e}")
        worst = max(worst, err)
    print(f"max_relative_error={worst:.6e}")
    if worst > run.tolerance:
        raise NumericError(
            f"gradient check failed: {worst:.3e} exceeds tolerance {run.tolerance:.1e}"
        )
    return EXIT_OK


ABLATE_HEADER = "variant,mr,mrr,hits1,hits3,hits10,count"
ABLATE_VARIANTS = (
    ("full", {}),
    ("no_distance", {"no_distance": True}),
    ("no_semantic", {"no_semantic": True}),
    ("no_distance_deep", {"no_distance_deep": True}),
    ("no_semantic_deep", {"no_semantic_deep": True}),
)


def cmd_ablate(run: RunConfig) -> int:
    if run.model != "hie":
        raise UsageError("ablate only applies to the hie model")
    _require(run, "out")
    kg = _load_dataset(run)
    out_dir = _out_dir(run)
    lines = [ABLATE_HEADER]
    print(ABLATE_HEADER)
    for name, overrides in ABLATE_VARIANTS:
        variant = dataclasses.replace(run, **overrides)
        params, model_config, _, _ = _train_once(kg=kg, run=variant, out_dir=out_dir, stem=name)
        doc = _evaluation_doc(params, model_config, kg, "valid", variant.tie_break)
        row = (
            f"{name},{doc['mr']:.6f},{doc['mrr']:.6f},{doc['hits1']:.6f},"
            f"{doc['hits3']:.6f},{doc['hits10']:.6f},{doc['count']}"
        )
        lines.append(row)
        print(row)
    (out_dir / "ablate.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_stats(run: RunConfig) -> int:
    kg = _load_dataset(run)
    _print_json(dataset_stats(kg))
    if run.dump_dicts:
        _require(run, "out")
        out_dir = _out_dir(run)
        kg_data.write_dictionary(out_dir / "entities.dict", kg.entity_names)
        kg_data.write_dictionary(out_dir / "relations.dict", kg.relation_names)
        _info(f"dictionaries written to {out_dir}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "classify": cmd_classify,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "ablate": cmd_ablate,
    "stats": cmd_stats,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        run = merge_run_config(args)
        return COMMANDS[args.command](run)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
