"""Prediction and interpretation against a loaded model.

Because the text path is two linear maps (embedding then softmax block) and
the image path one, every answer score decomposes exactly:

    score = word_contribution + image_contribution

and the word side further splits into per-token contributions. The image-side
weights applied to a spatial feature map give a class activation map whose
spatial mean equals the image contribution when the pooled vector is the
global average of the map.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import model as model_lib
from .corpus import normalize_answer
from .errors import ArgumentError, DimensionError
from .features import MapStore, VectorStore
from .model import Checkpoint, ModelParams
from .vocab import AnswerDict, BowVector, WordDict, encode_bow, tokenize


@dataclass(frozen=True)
class Decomposition:
    """Per-class scores: total = word + image, elementwise."""

    total: np.ndarray
    word: np.ndarray
    image: np.ndarray


@dataclass(frozen=True)
class PredictionEntry:
    answer: str
    class_index: int
    logit: float
    prob: float
    word_contrib: float
    image_contrib: float

    def to_json(self) -> dict:
        return {
            "answer": self.answer,
            "logit": self.logit,
            "prob": self.prob,
            "word_contrib": self.word_contrib,
            "image_contrib": self.image_contrib,
        }


@dataclass(frozen=True)
class WordImportanceEntry:
    token: str
    count: int
    importance: float  # multiplicity-weighted contribution to the class score
    rank: int
    oov: bool

    def to_json(self) -> dict:
        return {
            "token": self.token,
            "count": self.count,
            "importance": self.importance,
            "rank": self.rank,
            "oov": self.oov,
        }


@dataclass(frozen=True)
class McResult:
    chosen: str
    chosen_index: int
    probabilities: List[float]
    mapped: List[bool]
    unscored: bool

    def to_json(self) -> dict:
        return {
            "chosen": self.chosen,
            "probabilities": self.probabilities,
            "mapped": self.mapped,
            "unscored": self.unscored,
        }


@dataclass(frozen=True)
class CamGrid:
    """Raw class activation values for one answer class."""

    values: np.ndarray  # (H, W)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def normalized(self) -> np.ndarray:
        """Min-max rescaled copy in [0, 1]; all zeros when the grid is constant."""
        lo = float(self.values.min())
        hi = float(self.values.max())
        if hi == lo:
            return np.zeros_like(self.values)
        return (self.values - lo) / (hi - lo)

    def to_json(self) -> dict:
        return {
            "h": self.height,
            "w": self.width,
            "values": [float(v) for v in self.values.reshape(-1)],
        }


def decompose_scores(params: ModelParams, bow: BowVector, image_vector: np.ndarray) -> Decomposition:
    """Split scores into word and image sides; total is their exact sum."""
    x_v = np.asarray(image_vector, dtype=np.float64)
    if x_v.shape != (params.image_dim,):
        raise DimensionError(f"image vector has shape {x_v.shape}, expected ({params.image_dim},)")
    word = params.word_weights @ model_lib.word_feature(params, bow)
    image = params.image_weights @ x_v
    return Decomposition(total=word + image, word=word, image=image)


def rank_classes(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k highest scores; ties go to the lower class index."""
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    return order[:k]


def cam(params: ModelParams, conv_map: np.ndarray, target_class: int) -> CamGrid:
    """Apply one class's image-side weights to every spatial fiber of the map."""
    conv_map = np.asarray(conv_map, dtype=np.float64)
    if conv_map.ndim != 3:
        raise DimensionError(f"conv map must be H x W x K, got shape {conv_map.shape}")
    if conv_map.shape[2] != params.image_dim:
        raise DimensionError(
            f"conv map has {conv_map.shape[2]} channels, image weights expect {params.image_dim}"
        )
    if not 0 <= target_class < params.num_answers:
        raise ArgumentError(f"target_class {target_class} out of range [0, {params.num_answers})")
    return CamGrid(values=conv_map @ params.image_weights[target_class])


def upsample_bilinear(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear interpolation of a 2D grid to (out_h, out_w)."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise DimensionError(f"expected a 2D grid, got shape {grid.shape}")
    in_h, in_w = grid.shape
    if out_h < in_h or out_w < in_w:
        raise ArgumentError(f"output dims ({out_h}, {out_w}) must be >= grid dims ({in_h}, {in_w})")

    def positions(n_in: int, n_out: int) -> np.ndarray:
        if n_out == 1:
            return np.zeros(1)
        return np.linspace(0.0, n_in - 1.0, n_out)

    ys = positions(in_h, out_h)
    xs = positions(in_w, out_w)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = grid[np.ix_(y0, x0)] * (1 - wx) + grid[np.ix_(y0, x1)] * wx
    bottom = grid[np.ix_(y1, x0)] * (1 - wx) + grid[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


class VqaEngine:
    """Immutable question-answering frontend over params, dictionaries, stores.

    All methods are pure reads; one engine can serve any number of threads.
    """

    def __init__(
        self,
        params: ModelParams,
        word_dict: WordDict,
        answer_dict: AnswerDict,
        vector_store: Optional[VectorStore] = None,
        map_store: Optional[MapStore] = None,
    ):
        if params.vocab_size != len(word_dict):
            raise DimensionError(
                f"params vocab_size {params.vocab_size} does not match word dict of {len(word_dict)}"
            )
        if params.num_answers != len(answer_dict):
            raise DimensionError(
                f"params num_answers {params.num_answers} does not match answer dict of {len(answer_dict)}"
            )
        self.params = params
        self.word_dict = word_dict
        self.answer_dict = answer_dict
        self.vector_store = vector_store
        self.map_store = map_store

    @classmethod
    def from_checkpoint(
        cls,
        checkpoint: Checkpoint,
        vector_store: Optional[VectorStore] = None,
        map_store: Optional[MapStore] = None,
    ) -> "VqaEngine":
        return cls(checkpoint.params, checkpoint.word_dict, checkpoint.answer_dict, vector_store, map_store)

    @property
    def num_answers(self) -> int:
        return self.params.num_answers

    # --- feature access ---

    def _image_vector(self, image_id: int) -> np.ndarray:
        if self.vector_store is None:
            raise ArgumentError("engine has no vector store configured")
        return np.asarray(self.vector_store.get_vector(image_id), dtype=np.float64)

    def encode_question(self, question: str) -> BowVector:
        return encode_bow(tokenize(question), self.word_dict)

    # --- decomposition and ranking ---

    def decompose(self, question: str, image_id: int) -> Decomposition:
        return decompose_scores(self.params, self.encode_question(question), self._image_vector(image_id))

    def decompose_bow(self, bow: BowVector, image_id: int) -> Decomposition:
        return decompose_scores(self.params, bow, self._image_vector(image_id))

    def _entries(self, dec: Decomposition, ranking_scores: np.ndarray, k: int) -> List[PredictionEntry]:
        k = self._clamp_k(k)
        probs = model_lib.softmax(ranking_scores)
        entries = []
        for c in rank_classes(ranking_scores, k):
            entries.append(
                PredictionEntry(
                    answer=self.answer_dict.answer_of(int(c)),
                    class_index=int(c),
                    logit=float(ranking_scores[c]),
                    prob=float(probs[c]),
                    word_contrib=float(dec.word[c]),
                    image_contrib=float(dec.image[c]),
                )
            )
        return entries

    def _clamp_k(self, k: int) -> int:
        if k < 1:
            raise ArgumentError(f"k must be >= 1, got {k}")
        if k > self.num_answers:
            warnings.warn(f"k={k} exceeds the {self.num_answers} answer classes; truncating", stacklevel=3)
            return self.num_answers
        return k

    def predict_topk(self, question: str, image_id: int, k: int = 3) -> List[PredictionEntry]:
        """Top-k answers by total score, each with its exact two-way split."""
        return self.predict_topk_bow(self.encode_question(question), image_id, k)

    def predict_topk_bow(self, bow: BowVector, image_id: int, k: int = 3) -> List[PredictionEntry]:
        dec = self.decompose_bow(bow, image_id)
        return self._entries(dec, dec.total, k)

    def words_only_topk(self, question: str, k: int = 3) -> List[PredictionEntry]:
        """What the model would answer from the question words alone."""
        bow = self.encode_question(question)
        word = self.params.word_weights @ model_lib.word_feature(self.params, bow)
        dec = Decomposition(total=word, word=word, image=np.zeros_like(word))
        return self._entries(dec, word, k)

    def image_only_topk(self, image_id: int, k: int = 3) -> List[PredictionEntry]:
        """What the model would answer from the image alone."""
        image = self.params.image_weights @ self._image_vector(image_id)
        dec = Decomposition(total=image, word=np.zeros_like(image), image=image)
        return self._entries(dec, image, k)

    # --- multiple choice ---

    def predict_multiple_choice(self, question: str, image_id: int, choices: Sequence[str]) -> McResult:
        return self.predict_multiple_choice_bow(self.encode_question(question), image_id, choices)

    def predict_multiple_choice_bow(self, bow: BowVector, image_id: int, choices: Sequence[str]) -> McResult:
        """Score each choice by its softmax probability and take the largest.

        Choices are normalized with the corpus answer rule before lookup;
        choices outside the answer dictionary get probability 0. If nothing
        maps, the first choice is returned flagged unscored.
        """
        if not choices:
            raise ArgumentError("choices must be non-empty")
        dec = self.decompose_bow(bow, image_id)
        probs = model_lib.softmax(dec.total)
        choice_probs: List[float] = []
        mapped: List[bool] = []
        for choice in choices:
            cls = self.answer_dict.answer_to_class.get(normalize_answer(choice))
            mapped.append(cls is not None)
            choice_probs.append(float(probs[cls]) if cls is not None else 0.0)
        if not any(mapped):
            return McResult(
                chosen=choices[0], chosen_index=0, probabilities=choice_probs, mapped=mapped, unscored=True
            )
        candidates = [i for i in range(len(choices)) if mapped[i]]
        best = max(candidates, key=lambda i: (choice_probs[i], -i))
        return McResult(
            chosen=choices[best], chosen_index=best, probabilities=choice_probs, mapped=mapped, unscored=False
        )

    # --- word importance ---

    def word_importance(self, question: str, target_class: int) -> List[WordImportanceEntry]:
        """Per-token contribution to the target class's word-side score.

        Repeated tokens are listed once with a multiplicity-weighted value, so
        the values sum exactly to the word contribution. Out-of-dictionary
        tokens appear with importance 0 and the oov flag.
        """
        if not 0 <= target_class < self.num_answers:
            raise ArgumentError(f"target_class {target_class} out of range [0, {self.num_answers})")
        class_weights = self.params.word_weights[target_class]
        scored: List[Tuple[str, int, float, bool]] = []
        for token, count in Counter(tokenize(question)).items():
            idx = self.word_dict.word_to_index.get(token)
            if idx is None:
                scored.append((token, count, 0.0, True))
            else:
                per_occurrence = float(class_weights @ self.params.embedding[:, idx])
                scored.append((token, count, count * per_occurrence, False))
        scored.sort(key=lambda item: (-item[2], item[0]))
        return [
            WordImportanceEntry(token=t, count=c, importance=v, rank=rank, oov=oov)
            for rank, (t, c, v, oov) in enumerate(scored, start=1)
        ]

    # --- class activation maps ---

    def cam_for_image(self, image_id: int, target_class: int) -> CamGrid:
        if self.map_store is None:
            raise ArgumentError("engine has no map store configured")
        return cam(self.params, self.map_store.get_map(image_id), target_class)
