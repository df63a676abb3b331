"""Epoch-driven SGD training with validation tracking and grid search.

Dictionaries are built from the training pairs only. Pairs whose majority
answer falls below the answer-frequency threshold are excluded from training
but still count against validation accuracy (they can never match). The
checkpoint returned is the one with the best validation accuracy seen.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import model as model_lib
from .corpus import QAPair
from .errors import ArgumentError, DivergenceError, NotFoundError
from .features import VectorStore
from .model import Hyperparams, ModelParams
from .vocab import AnswerDict, BowVector, WordDict, build_answer_dict, build_word_dict, encode_bow

HYPER_PARAM_NAMES = ("epochs", "lr_embedding", "lr_softmax", "clip_embedding", "clip_softmax")
CONFIG_PARAM_NAMES = ("word_min_count", "answer_min_count")


@dataclass
class TrainConfig:
    hyper: Hyperparams = field(default_factory=Hyperparams)
    embed_dim: int = 256
    word_min_count: int = 1
    answer_min_count: int = 1
    evals_per_epoch: int = 1
    patience: int = 0  # epochs without improvement before stopping; 0 = fixed epochs
    shuffle_seed: Optional[int] = None  # defaults to hyper.seed

    def __post_init__(self) -> None:
        if self.evals_per_epoch < 1:
            raise ValueError("evals_per_epoch must be >= 1")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")


@dataclass
class TrainReport:
    epoch_losses: List[float]
    val_accuracies: List[float]
    eval_epochs: List[int]  # epoch index of each evaluation
    best_epoch: int
    best_accuracy: float
    wall_seconds: float
    train_examples: int
    excluded_pairs: int

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainResult:
    params: ModelParams
    report: TrainReport
    word_dict: WordDict
    answer_dict: AnswerDict


LogFn = Callable[[int, float, float], None]


def _fetch_vectors(pairs: Sequence[QAPair], store: VectorStore) -> Dict[int, np.ndarray]:
    vectors: Dict[int, np.ndarray] = {}
    for pair in pairs:
        if pair.image_id not in vectors:
            if pair.image_id not in store:
                raise NotFoundError(f"feature store has no vector for image_id {pair.image_id}")
            vectors[pair.image_id] = np.asarray(store.get_vector(pair.image_id), dtype=np.float64)
    return vectors


def _top1_matches(params: ModelParams, bow: BowVector, vector: np.ndarray, answer: str, answer_dict: AnswerDict) -> bool:
    scores = model_lib.forward(params, bow, vector)
    return answer_dict.answer_of(int(np.argmax(scores))) == answer


def top1_accuracy(
    params: ModelParams,
    pairs: Sequence[QAPair],
    word_dict: WordDict,
    answer_dict: AnswerDict,
    vectors: Dict[int, np.ndarray],
) -> float:
    """Exact-match accuracy of the argmax answer against the majority answer."""
    if not pairs:
        return 0.0
    hits = 0
    for pair in pairs:
        bow = encode_bow(pair.tokens, word_dict)
        if _top1_matches(params, bow, vectors[pair.image_id], pair.answer, answer_dict):
            hits += 1
    return hits / len(pairs)


def train(
    pairs_train: Sequence[QAPair],
    pairs_val: Sequence[QAPair],
    store: VectorStore,
    config: TrainConfig,
    word_dict: Optional[WordDict] = None,
    answer_dict: Optional[AnswerDict] = None,
    log_fn: Optional[LogFn] = None,
) -> TrainResult:
    """Run SGD for config.hyper.epochs and return the best checkpoint seen."""
    start = time.perf_counter()
    hyper = config.hyper
    if word_dict is None:
        word_dict = build_word_dict(pairs_train, config.word_min_count)
    if answer_dict is None:
        answer_dict = build_answer_dict(pairs_train, config.answer_min_count)

    trainable = [p for p in pairs_train if p.answer in answer_dict]
    excluded = len(pairs_train) - len(trainable)
    train_vectors = _fetch_vectors(trainable, store)
    val_vectors = _fetch_vectors(pairs_val, store)

    examples: List[Tuple[BowVector, np.ndarray, int]] = [
        (encode_bow(p.tokens, word_dict), train_vectors[p.image_id], answer_dict.class_of(p.answer))
        for p in trainable
    ]
    if not examples:
        raise ArgumentError("no trainable pairs: every answer fell below the frequency threshold")

    params = model_lib.init(
        vocab_size=len(word_dict),
        embed_dim=config.embed_dim,
        image_dim=store.dim,
        num_answers=len(answer_dict),
        seed=hyper.seed,
    )

    shuffle_seed = config.shuffle_seed if config.shuffle_seed is not None else hyper.seed
    shuffle_rng = np.random.default_rng(shuffle_seed)

    n = len(examples)
    batch_size = hyper.batch_size
    n_batches = (n + batch_size - 1) // batch_size
    # Evaluation points: after these many batches within an epoch (last = epoch end).
    eval_marks = sorted({max(1, (j + 1) * n_batches // config.evals_per_epoch) for j in range(config.evals_per_epoch)})

    best_params = params.copy()
    best_accuracy = -1.0
    best_epoch = 0
    epoch_losses: List[float] = []
    val_accuracies: List[float] = []
    eval_epochs: List[int] = []
    epochs_without_improvement = 0

    for epoch in range(hyper.epochs):
        previous_best = best_accuracy
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        seen = 0
        for b in range(n_batches):
            batch = [examples[i] for i in order[b * batch_size:(b + 1) * batch_size]]
            loss, grads = model_lib.loss_and_grads(params, batch)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}")
            params = model_lib.sgd_step(params, grads, hyper)
            loss_sum += loss * len(batch)
            seen += len(batch)
            if (b + 1) in eval_marks:
                accuracy = top1_accuracy(params, pairs_val, word_dict, answer_dict, val_vectors)
                val_accuracies.append(accuracy)
                eval_epochs.append(epoch)
                if accuracy > best_accuracy:
                    best_accuracy = accuracy
                    best_params = params.copy()
                    best_epoch = epoch
                if log_fn is not None:
                    log_fn(epoch, loss_sum / seen, accuracy)
        epoch_losses.append(loss_sum / seen)
        if best_accuracy > previous_best:
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
        if config.patience and epochs_without_improvement >= config.patience:
            break

    report = TrainReport(
        epoch_losses=epoch_losses,
        val_accuracies=val_accuracies,
        eval_epochs=eval_epochs,
        best_epoch=best_epoch,
        best_accuracy=max(best_accuracy, 0.0),
        wall_seconds=time.perf_counter() - start,
        train_examples=n,
        excluded_pairs=excluded,
    )
    return TrainResult(params=best_params, report=report, word_dict=word_dict, answer_dict=answer_dict)


@dataclass(frozen=True)
class GridRow:
    value: float
    accuracy: float


def _config_with(config: TrainConfig, param_name: str, value) -> TrainConfig:
    if param_name in HYPER_PARAM_NAMES:
        if param_name == "epochs":
            value = int(value)
        hyper = dataclasses.replace(config.hyper, **{param_name: value})
        return dataclasses.replace(config, hyper=hyper)
    if param_name in CONFIG_PARAM_NAMES:
        return dataclasses.replace(config, **{param_name: int(value)})
    raise ArgumentError(
        f"unknown grid parameter {param_name!r}; expected one of {HYPER_PARAM_NAMES + CONFIG_PARAM_NAMES}"
    )


def grid_search(
    param_name: str,
    values: Sequence,
    base_config: TrainConfig,
    pairs_train: Sequence[QAPair],
    pairs_val: Sequence[QAPair],
    store: VectorStore,
    log_fn: Optional[LogFn] = None,
) -> List[GridRow]:
    """One full training run per candidate value, sorted by accuracy descending."""
    if not values:
        raise ArgumentError("grid_search needs at least one candidate value")
    rows: List[GridRow] = []
    for value in values:
        config = _config_with(base_config, param_name, value)
        result = train(pairs_train, pairs_val, store, config, log_fn=log_fn)
        rows.append(GridRow(value=value, accuracy=result.report.best_accuracy))
    rows.sort(key=lambda r: -r.accuracy)
    return rows
