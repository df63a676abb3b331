"""Command-line entry point.

Subcommands: prep, vocab, train, grid, eval, predict, mc, explain, serve,
plus synth (bundled synthetic dataset generator). Flag resolution order is
flag > --config file > built-in default, and every run prints the resolved
configuration to stderr.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime/divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from . import corpus, evaluation, features, model as model_lib, report, synthetic, train as train_lib, vocab
from .errors import DATA_ERRORS, ArgumentError, BowimgError, DivergenceError
from .inference import VqaEngine
from .model import Hyperparams
from .service import ServiceConfig, serve
from .train import TrainConfig


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


@dataclass(frozen=True)
class Opt:
    name: str                      # underscore form; flag is --name-with-dashes
    type: Callable = str
    default: Any = None
    required: bool = False
    help: str = ""
    choices: Optional[Sequence[str]] = None
    flag: bool = False             # boolean switch


_HYPER_OPTS = (
    Opt("lr_embedding", float, 0.1, help="embedding learning rate"),
    Opt("lr_softmax", float, 0.01, help="softmax learning rate"),
    Opt("clip_embedding", float, 20.0, help="embedding max row norm"),
    Opt("clip_softmax", float, 20.0, help="softmax max row norm"),
    Opt("epochs", int, 50),
    Opt("batch_size", int, 128),
    Opt("seed", int, 0),
)

_TRAIN_CFG_OPTS = (
    Opt("embed_dim", int, 256, help="word embedding dimension"),
    Opt("word_min_count", int, 1, help="min frequency for question words"),
    Opt("answer_min_count", int, 1, help="min frequency for answer classes"),
    Opt("evals_per_epoch", int, 1),
    Opt("patience", int, 0, help="epochs without improvement before stop (0 = fixed)"),
)

SUBCOMMANDS: Dict[str, Sequence[Opt]] = {
    "prep": (
        Opt("questions", str, required=True, help="question JSON file"),
        Opt("annotations", str, required=True, help="annotation JSON file"),
        Opt("out", str, "pairs.jsonl", help="output pair file (JSON lines)"),
        Opt("split", float, 0.7, help="fraction of images in split A"),
        Opt("seed", int, 0),
    ),
    "vocab": (
        Opt("pairs", str, required=True, help="pair file from prep"),
        Opt("word_min_count", int, 1),
        Opt("answer_min_count", int, 1),
        Opt("out", str, ".", help="directory for words.json / answers.json"),
    ),
    "train": (
        Opt("train_pairs", str, required=True),
        Opt("val_pairs", str, required=True),
        Opt("features", str, required=True, help="vector store (.ibf)"),
        Opt("out", str, "checkpoint", help="checkpoint directory"),
        Opt("words", str, help="optional prebuilt words.json"),
        Opt("answers", str, help="optional prebuilt answers.json"),
        Opt("report_dir", str, help="write report.json, CSVs, and figures here"),
        *_HYPER_OPTS,
        *_TRAIN_CFG_OPTS,
    ),
    "grid": (
        Opt("param", str, required=True,
            choices=train_lib.HYPER_PARAM_NAMES + train_lib.CONFIG_PARAM_NAMES),
        Opt("values", str, required=True, help="comma-separated candidate values"),
        Opt("train_pairs", str, required=True),
        Opt("val_pairs", str, required=True),
        Opt("features", str, required=True),
        Opt("out", str, help="optional CSV path for the result table"),
        Opt("report_dir", str),
        *_HYPER_OPTS,
        *_TRAIN_CFG_OPTS,
    ),
    "eval": (
        Opt("checkpoint", str, required=True),
        Opt("questions", str, required=True),
        Opt("annotations", str, required=True),
        Opt("features", str, required=True),
        Opt("track", str, "open-ended", choices=(evaluation.OPEN_ENDED, evaluation.MULTIPLE_CHOICE)),
        Opt("export", str, help="write scoring-server results JSON here"),
        Opt("report_dir", str),
        Opt("simple_metric", flag=True, help="use single-shot min(matches/3,1) instead of leave-one-out"),
    ),
    "predict": (
        Opt("checkpoint", str, required=True),
        Opt("features", str, required=True),
        Opt("maps", str, help="optional map store (.ibm) for CAM output"),
        Opt("question", str, required=True),
        Opt("image_id", int, required=True),
        Opt("topk", int, 3),
    ),
    "mc": (
        Opt("checkpoint", str, required=True),
        Opt("features", str, required=True),
        Opt("question", str, required=True),
        Opt("image_id", int, required=True),
        Opt("choices", str, required=True, help="comma-separated answer choices"),
    ),
    "explain": (
        Opt("checkpoint", str, required=True),
        Opt("features", str, required=True),
        Opt("maps", str, help="map store, required for --cam"),
        Opt("question", str, required=True),
        Opt("image_id", int, required=True),
        Opt("topk", int, 3),
        Opt("cam", str, help="write the activation map as a PGM (P2) file here"),
        Opt("report_dir", str),
    ),
    "serve": (
        Opt("checkpoint", str, required=True),
        Opt("features", str, required=True),
        Opt("maps", str),
        Opt("image_dir", str, help="directory of <image_id>.jpg/.png thumbnails"),
        Opt("host", str, "127.0.0.1"),
        Opt("port", int, 8080),
        Opt("max_question_length", int, 512),
    ),
    "synth": (
        Opt("kind", str, "separable", choices=("separable", "word-biased")),
        Opt("out", str, required=True, help="output directory"),
        Opt("images", int, 1200),
        Opt("questions_per_image", int, 1),
        Opt("image_dim", int, 16),
        Opt("seed", int, 0),
    ),
}


def build_parser() -> _Parser:
    parser = _Parser(prog="bowimg", description=__doc__.splitlines()[0])
    subparsers = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    for command, opts in SUBCOMMANDS.items():
        sub = subparsers.add_parser(command)
        sub.add_argument("--config", default=None, help="JSON config file; flags override it")
        for opt in opts:
            flag = "--" + opt.name.replace("_", "-")
            if opt.flag:
                sub.add_argument(flag, dest=opt.name, action="store_const", const=True, default=None, help=opt.help)
            else:
                sub.add_argument(flag, dest=opt.name, type=opt.type, default=None,
                                 choices=opt.choices, help=opt.help)
    return parser


def resolve_options(command: str, args: argparse.Namespace) -> Dict[str, Any]:
    """Merge defaults, config-file values, and explicit flags (highest wins)."""
    opts = {o.name: o for o in SUBCOMMANDS[command]}
    resolved: Dict[str, Any] = {name: o.default if not o.flag else False for name, o in opts.items()}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                loaded = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError(f"config {args.config} must be a JSON object")
        for key, value in loaded.items():
            if key not in opts:
                raise UsageError(f"config {args.config}: unknown option {key!r} for {command}")
            resolved[key] = value if opts[key].flag else opts[key].type(value)
    for name in opts:
        value = getattr(args, name)
        if value is not None:
            resolved[name] = value
    missing = [n for n, o in opts.items() if o.required and resolved[n] is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"{command}: missing required option(s): {flags}")
    print(f"config[{command}]: {json.dumps(resolved, sort_keys=True)}", file=sys.stderr)
    return resolved


def _hyper_from(options: Dict[str, Any]) -> Hyperparams:
    return Hyperparams(**{o.name: options[o.name] for o in _HYPER_OPTS})


def _train_config_from(options: Dict[str, Any]) -> TrainConfig:
    return TrainConfig(
        hyper=_hyper_from(options),
        **{o.name: options[o.name] for o in _TRAIN_CFG_OPTS},
    )


def _load_engine(options: Dict[str, Any], with_maps: bool = True) -> VqaEngine:
    checkpoint = model_lib.load(options["checkpoint"])
    vector_store = features.VectorStore(options["features"])
    map_store = None
    if with_maps and options.get("maps"):
        map_store = features.MapStore(options["maps"])
    return VqaEngine.from_checkpoint(checkpoint, vector_store, map_store)


# --- handlers ---

def cmd_prep(options: Dict[str, Any]) -> int:
    questions = corpus.parse_questions(options["questions"])
    annotations = corpus.parse_annotations(options["annotations"])
    pairs = corpus.build_pairs(questions, annotations)
    pairs_a, pairs_b, split_spec = corpus.split_by_image(pairs, options["split"], options["seed"])
    out = Path(options["out"])
    base = out.with_suffix("") if out.suffix else out
    corpus.write_pairs(pairs, out)
    corpus.write_pairs(pairs_a, f"{base}.train.jsonl")
    corpus.write_pairs(pairs_b, f"{base}.val.jsonl")
    split_spec.save(f"{base}.split.json")
    print(
        f"wrote {len(pairs)} pairs ({len(pairs_a)} train / {len(pairs_b)} val over "
        f"{len(split_spec.assignment)} images) to {out}",
        file=sys.stderr,
    )
    return 0


def cmd_vocab(options: Dict[str, Any]) -> int:
    pairs = corpus.read_pairs(options["pairs"])
    word_dict = vocab.build_word_dict(pairs, options["word_min_count"])
    answer_dict = vocab.build_answer_dict(pairs, options["answer_min_count"])
    out = Path(options["out"])
    out.mkdir(parents=True, exist_ok=True)
    word_dict.save(out / "words.json")
    answer_dict.save(out / "answers.json")
    print(f"{len(word_dict)} words, {len(answer_dict)} answer classes -> {out}", file=sys.stderr)
    return 0


def _log_eval(epoch: int, mean_loss: float, val_accuracy: float) -> None:
    print(f"epoch {epoch} loss {mean_loss:.6f} val_acc {val_accuracy:.4f}", file=sys.stderr)


def cmd_train(options: Dict[str, Any]) -> int:
    pairs_train = corpus.read_pairs(options["train_pairs"])
    pairs_val = corpus.read_pairs(options["val_pairs"])
    store = features.VectorStore(options["features"])
    config = _train_config_from(options)
    word_dict = vocab.WordDict.load(options["words"]) if options.get("words") else None
    answer_dict = vocab.AnswerDict.load(options["answers"]) if options.get("answers") else None
    result = train_lib.train(
        pairs_train, pairs_val, store, config,
        word_dict=word_dict, answer_dict=answer_dict, log_fn=_log_eval,
    )
    model_lib.save(result.params, result.word_dict, result.answer_dict, config.hyper, options["out"])
    if options.get("report_dir"):
        report.write_train_report(result.report, options["report_dir"])
    print(json.dumps({
        "checkpoint": str(options["out"]),
        "best_epoch": result.report.best_epoch,
        "best_accuracy": result.report.best_accuracy,
        "epochs_run": len(result.report.epoch_losses),
    }, sort_keys=True))
    return 0


def _parse_grid_values(param: str, text: str) -> List:
    kind = int if param in ("epochs", "word_min_count", "answer_min_count") else float
    values = [kind(v) for v in text.split(",") if v.strip() != ""]
    if not values:
        raise ArgumentError("grid needs at least one candidate value")
    return values


def cmd_grid(options: Dict[str, Any]) -> int:
    pairs_train = corpus.read_pairs(options["train_pairs"])
    pairs_val = corpus.read_pairs(options["val_pairs"])
    store = features.VectorStore(options["features"])
    config = _train_config_from(options)
    values = _parse_grid_values(options["param"], options["values"])
    rows = train_lib.grid_search(options["param"], values, config, pairs_train, pairs_val, store)
    print(f"{options['param']}\tval_accuracy")
    for row in rows:
        print(f"{row.value}\t{row.accuracy:.6f}")
    if options.get("out"):
        with open(options["out"], "w", encoding="utf-8") as f:
            f.write(f"{options['param']},val_accuracy\n")
            for row in rows:
                f.write(f"{row.value},{row.accuracy:.6f}\n")
    if options.get("report_dir"):
        report.write_grid_report(options["param"], rows, options["report_dir"])
    return 0


def cmd_eval(options: Dict[str, Any]) -> int:
    track = options["track"]
    if track == evaluation.MULTIPLE_CHOICE:
        questions, choices_by_qid = corpus.parse_multiple_choices(options["questions"])
    else:
        questions = corpus.parse_questions(options["questions"])
        choices_by_qid = None
    annotations = corpus.parse_annotations(options["annotations"])
    pairs = corpus.build_pairs(questions, annotations)
    engine = _load_engine(options, with_maps=False)
    result = evaluation.evaluate(
        engine, pairs, annotations, track=track,
        choices_by_qid=choices_by_qid, leave_one_out=not options["simple_metric"],
    )
    if options.get("export"):
        predictions = evaluation.predict_for_export(engine, pairs, track=track, choices_by_qid=choices_by_qid)
        evaluation.export_results(predictions, options["export"])
    if options.get("report_dir"):
        report.write_eval_report(result, options["report_dir"])
    print(json.dumps(result.to_row(), sort_keys=True))
    return 0


def cmd_predict(options: Dict[str, Any]) -> int:
    engine = _load_engine(options)
    entries = engine.predict_topk(options["question"], options["image_id"], k=options["topk"])
    payload = {
        "question": options["question"],
        "image_id": options["image_id"],
        "answers": [e.to_json() for e in entries],
        "word_importance": [w.to_json() for w in engine.word_importance(options["question"], entries[0].class_index)],
        "cam": None,
    }
    if engine.map_store is not None:
        payload["cam"] = engine.cam_for_image(options["image_id"], entries[0].class_index).to_json()
    print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_mc(options: Dict[str, Any]) -> int:
    engine = _load_engine(options, with_maps=False)
    choices = [c.strip() for c in options["choices"].split(",") if c.strip()]
    result = engine.predict_multiple_choice(options["question"], options["image_id"], choices)
    print(json.dumps(result.to_json(), sort_keys=True))
    return 0


def cmd_explain(options: Dict[str, Any]) -> int:
    if options.get("cam") and not options.get("maps"):
        raise ArgumentError("--cam needs a map store; pass --maps pointing at a .ibm file")
    engine = _load_engine(options)
    question, image_id = options["question"], options["image_id"]
    entries = engine.predict_topk(question, image_id, k=options["topk"])
    importances = engine.word_importance(question, entries[0].class_index)

    print(f"question: {question}")
    print(f"image: {image_id}")
    print()
    print("top answers:")
    for e in entries:
        print(f"  {e.answer} ({e.logit:.2f} = {e.image_contrib:.2f} [image] + {e.word_contrib:.2f} [word])")
    side_k = min(3, engine.num_answers)
    words_only = ", ".join(f"{e.answer} ({e.logit:.2f})" for e in engine.words_only_topk(question, k=side_k))
    image_only = ", ".join(f"{e.answer} ({e.logit:.2f})" for e in engine.image_only_topk(image_id, k=side_k))
    print(f"words only: {words_only}")
    print(f"image only: {image_only}")
    print()
    print(f"word importance for {entries[0].answer!r}:")
    for w in importances:
        suffix = "  [out-of-vocabulary]" if w.oov else ""
        print(f"  {w.rank}. {w.token:<16} {w.importance:+.4f}{suffix}")

    cam_grid = None
    if engine.map_store is not None:
        cam_grid = engine.cam_for_image(image_id, entries[0].class_index)
    if options.get("cam"):
        report.write_cam_pgm(cam_grid, options["cam"])
        print(f"wrote activation map to {options['cam']}", file=sys.stderr)
    if options.get("report_dir"):
        report.write_explain_report(question, image_id, entries, importances, options["report_dir"], cam_grid)
    return 0


def cmd_serve(options: Dict[str, Any]) -> int:
    serve(ServiceConfig(
        checkpoint=options["checkpoint"],
        vector_store=options["features"],
        map_store=options.get("maps"),
        image_dir=options.get("image_dir"),
        host=options["host"],
        port=options["port"],
        max_question_length=options["max_question_length"],
    ))
    return 0


def cmd_synth(options: Dict[str, Any]) -> int:
    maker = synthetic.separable_corpus if options["kind"] == "separable" else synthetic.word_biased_corpus
    data = maker(
        n_images=options["images"],
        questions_per_image=options["questions_per_image"],
        image_dim=options["image_dim"],
        seed=options["seed"],
    )
    paths = synthetic.write_dataset(data, options["out"])
    print(json.dumps(paths, sort_keys=True))
    return 0


HANDLERS: Dict[str, Callable[[Dict[str, Any]], int]] = {
    "prep": cmd_prep,
    "vocab": cmd_vocab,
    "train": cmd_train,
    "grid": cmd_grid,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "mc": cmd_mc,
    "explain": cmd_explain,
    "serve": cmd_serve,
    "synth": cmd_synth,
}


def run(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        options = resolve_options(args.command, args)
        return HANDLERS[args.command](options)
    except UsageError as exc:
        print(f"bowimg {args.command}: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"bowimg {args.command}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"bowimg {args.command}: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"bowimg {args.command}: {exc}", file=sys.stderr)
        return 3
    except BowimgError as exc:
        print(f"bowimg {args.command}: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 3
        print(f"bowimg {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
