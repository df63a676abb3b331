"""Linear VQA classifier: word embedding + softmax over concatenated features.

The answer score vector is

    scores = word_weights @ (embedding @ bow) + image_weights @ image_vector

with no bias term, so every score splits exactly into a word contribution and
an image contribution. Training is plain minibatch SGD with separate learning
rates for the embedding and the softmax blocks, followed by per-row max-norm
weight clipping. Parameters live in float64; checkpoints store float32.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import CheckpointError, DimensionError, LabelError
from .vocab import AnswerDict, BowVector, WordDict

WEIGHTS_MAGIC = b"IBW1"
CHECKPOINT_VERSION = 1
MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"

# Rows are "over the norm" only beyond this relative slack; keeps clipping an
# exact fixed point under repeated application despite float rounding.
_CLIP_SLACK = 1e-9

INIT_SCALE = 0.08


@dataclass
class Hyperparams:
    lr_embedding: float = 0.1
    lr_softmax: float = 0.01
    clip_embedding: float = 20.0
    clip_softmax: float = 20.0
    epochs: int = 50
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("lr_embedding", "lr_softmax"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("clip_embedding", "clip_softmax"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr_embedding < self.lr_softmax:
            warnings.warn(
                "lr_embedding < lr_softmax: the embedding usually needs the much "
                "higher learning rate of the two",
                stacklevel=2,
            )

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "Hyperparams":
        return cls(**obj)


@dataclass
class ModelParams:
    embedding: np.ndarray      # (embed_dim, vocab_size)
    word_weights: np.ndarray   # (num_answers, embed_dim)
    image_weights: np.ndarray  # (num_answers, image_dim)

    @property
    def embed_dim(self) -> int:
        return self.embedding.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[1]

    @property
    def num_answers(self) -> int:
        return self.word_weights.shape[0]

    @property
    def image_dim(self) -> int:
        return self.image_weights.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(
            embedding=self.embedding.copy(),
            word_weights=self.word_weights.copy(),
            image_weights=self.image_weights.copy(),
        )


@dataclass
class Gradients:
    embedding: np.ndarray
    word_weights: np.ndarray
    image_weights: np.ndarray


def init(vocab_size: int, embed_dim: int, image_dim: int, num_answers: int, seed: int) -> ModelParams:
    """I.i.d. uniform [-0.08, 0.08] entries, deterministic per seed.

    Draws are snapped to the float32 grid so a freshly initialized model
    round-trips bit-identically through the float32 checkpoint format.
    """
    dims = {"vocab_size": vocab_size, "embed_dim": embed_dim, "image_dim": image_dim, "num_answers": num_answers}
    for name, value in dims.items():
        if value < 1:
            raise DimensionError(f"{name} must be >= 1, got {value}")
    rng = np.random.default_rng(seed)

    def draw(shape: Tuple[int, int]) -> np.ndarray:
        block = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape).astype(np.float32)
        # snapping to the f32 grid can round a boundary draw just past the
        # range; nudge those back toward zero (still exactly representable)
        over = np.abs(block) > INIT_SCALE
        if np.any(over):
            block[over] = np.nextafter(block[over], np.float32(0.0))
        return block.astype(np.float64)

    return ModelParams(
        embedding=draw((embed_dim, vocab_size)),
        word_weights=draw((num_answers, embed_dim)),
        image_weights=draw((num_answers, image_dim)),
    )


def word_feature(params: ModelParams, bow: BowVector) -> np.ndarray:
    """Embed a bag-of-words: sum of count-weighted embedding columns."""
    if not bow:
        return np.zeros(params.embed_dim)
    indices = np.fromiter(bow.keys(), dtype=np.intp, count=len(bow))
    counts = np.fromiter(bow.values(), dtype=np.float64, count=len(bow))
    if indices.min() < 0 or indices.max() >= params.vocab_size:
        raise DimensionError(
            f"bag-of-words index out of range for vocab_size {params.vocab_size}"
        )
    return params.embedding[:, indices] @ counts


def forward(params: ModelParams, bow: BowVector, image_vector: np.ndarray) -> np.ndarray:
    """Answer scores before softmax normalization (no bias term)."""
    x_v = np.asarray(image_vector, dtype=np.float64)
    if x_v.shape != (params.image_dim,):
        raise DimensionError(f"image vector has shape {x_v.shape}, expected ({params.image_dim},)")
    x_w = word_feature(params, bow)
    return params.word_weights @ x_w + params.image_weights @ x_v


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-shifted softmax; stable for any finite logits."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


Batch = Sequence[Tuple[BowVector, np.ndarray, int]]


def loss_and_grads(params: ModelParams, batch: Batch) -> Tuple[float, Gradients]:
    """Mean cross-entropy over the batch and its exact analytic gradients."""
    if not batch:
        raise ValueError("batch must be non-empty")
    b = len(batch)
    num_answers = params.num_answers
    x_w = np.empty((b, params.embed_dim))
    x_v = np.empty((b, params.image_dim))
    counts = np.zeros((b, params.vocab_size))
    labels = np.empty(b, dtype=np.intp)
    for i, (bow, image_vector, label) in enumerate(batch):
        if not 0 <= label < num_answers:
            raise LabelError(f"label {label} out of range [0, {num_answers})")
        x_w[i] = word_feature(params, bow)
        vec = np.asarray(image_vector, dtype=np.float64)
        if vec.shape != (params.image_dim,):
            raise DimensionError(f"image vector has shape {vec.shape}, expected ({params.image_dim},)")
        x_v[i] = vec
        labels[i] = label
        for idx, count in bow.items():
            counts[i, idx] = count

    logits = x_w @ params.word_weights.T + x_v @ params.image_weights.T
    probs = softmax(logits)
    with np.errstate(divide="ignore"):  # p can underflow; the inf loss is the divergence signal
        loss = float(-np.mean(np.log(probs[np.arange(b), labels])))

    delta = probs.copy()
    delta[np.arange(b), labels] -= 1.0
    delta /= b
    grad_word = delta.T @ x_w                       # (A, embed_dim)
    grad_image = delta.T @ x_v                      # (A, image_dim)
    grad_x_w = delta @ params.word_weights          # (B, embed_dim)
    grad_embedding = grad_x_w.T @ counts            # (embed_dim, vocab_size)
    return loss, Gradients(embedding=grad_embedding, word_weights=grad_word, image_weights=grad_image)


def weight_clip(matrix: np.ndarray, max_norm: float) -> np.ndarray:
    """Rescale every row with L2 norm above max_norm down to exactly max_norm."""
    if max_norm <= 0:
        raise ValueError(f"max_norm must be > 0, got {max_norm}")
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    over = norms > max_norm * (1.0 + _CLIP_SLACK)
    if not np.any(over):
        return matrix.copy()
    scale = np.ones_like(norms)
    scale[over] = max_norm / norms[over]
    return matrix * scale[:, None]


def sgd_step(params: ModelParams, grads: Gradients, hyper: Hyperparams) -> ModelParams:
    """One SGD update with per-layer learning rates, then per-row weight clipping."""
    return ModelParams(
        embedding=weight_clip(params.embedding - hyper.lr_embedding * grads.embedding, hyper.clip_embedding),
        word_weights=weight_clip(params.word_weights - hyper.lr_softmax * grads.word_weights, hyper.clip_softmax),
        image_weights=weight_clip(params.image_weights - hyper.lr_softmax * grads.image_weights, hyper.clip_softmax),
    )


@dataclass
class Checkpoint:
    params: ModelParams
    word_dict: WordDict
    answer_dict: AnswerDict
    hyper: Hyperparams


def save(params: ModelParams, word_dict: WordDict, answer_dict: AnswerDict, hyper: Hyperparams, path) -> None:
    """Write manifest.json + weights.bin into the directory at path."""
    if params.vocab_size != len(word_dict):
        raise CheckpointError(
            f"vocab_size {params.vocab_size} does not match word dict of {len(word_dict)}"
        )
    if params.num_answers != len(answer_dict):
        raise CheckpointError(
            f"num_answers {params.num_answers} does not match answer dict of {len(answer_dict)}"
        )
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": CHECKPOINT_VERSION,
        "vocab_size": params.vocab_size,
        "embed_dim": params.embed_dim,
        "image_dim": params.image_dim,
        "num_answers": params.num_answers,
        "hyperparams": hyper.to_json(),
        "word_dict": word_dict.to_json(),
        "answer_dict": answer_dict.to_json(),
    }
    with open(directory / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, sort_keys=True)
    with open(directory / WEIGHTS_NAME, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(
            struct.pack(
                "<5I",
                CHECKPOINT_VERSION,
                params.vocab_size,
                params.embed_dim,
                params.image_dim,
                params.num_answers,
            )
        )
        for block in (params.embedding, params.word_weights, params.image_weights):
            f.write(np.ascontiguousarray(block, dtype="<f4").tobytes())


def load(
    path,
    expected_vocab_size: Optional[int] = None,
    expected_num_answers: Optional[int] = None,
) -> Checkpoint:
    """Read a checkpoint directory; reject version/dim mismatches and truncation."""
    directory = Path(path)
    manifest_path = directory / MANIFEST_NAME
    weights_path = directory / WEIGHTS_NAME
    if not manifest_path.is_file() or not weights_path.is_file():
        raise CheckpointError(f"{path}: not a checkpoint (needs {MANIFEST_NAME} and {WEIGHTS_NAME})")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{manifest_path}: invalid manifest: {exc.msg}") from exc
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {manifest.get('version')}")

    dims = tuple(int(manifest[k]) for k in ("vocab_size", "embed_dim", "image_dim", "num_answers"))
    vocab_size, embed_dim, image_dim, num_answers = dims
    if expected_vocab_size is not None and vocab_size != expected_vocab_size:
        raise CheckpointError(f"{path}: vocab_size {vocab_size}, expected {expected_vocab_size}")
    if expected_num_answers is not None and num_answers != expected_num_answers:
        raise CheckpointError(f"{path}: num_answers {num_answers}, expected {expected_num_answers}")

    blob = weights_path.read_bytes()
    header_len = 4 + 5 * 4
    if len(blob) < header_len or blob[:4] != WEIGHTS_MAGIC:
        raise CheckpointError(f"{weights_path}: bad weights header")
    version, *blob_dims = struct.unpack("<5I", blob[4:header_len])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{weights_path}: unsupported weights version {version}")
    if tuple(blob_dims) != dims:
        raise CheckpointError(f"{weights_path}: weights dims {tuple(blob_dims)} do not match manifest {dims}")
    sizes = (embed_dim * vocab_size, num_answers * embed_dim, num_answers * image_dim)
    expected_bytes = header_len + 4 * sum(sizes)
    if len(blob) != expected_bytes:
        raise CheckpointError(f"{weights_path}: expected {expected_bytes} bytes, found {len(blob)}")

    flat = np.frombuffer(blob, dtype="<f4", offset=header_len)
    offsets = np.cumsum((0,) + sizes)
    embedding = flat[offsets[0]:offsets[1]].reshape(embed_dim, vocab_size).astype(np.float64)
    word_weights = flat[offsets[1]:offsets[2]].reshape(num_answers, embed_dim).astype(np.float64)
    image_weights = flat[offsets[2]:offsets[3]].reshape(num_answers, image_dim).astype(np.float64)

    word_dict = WordDict.from_json(manifest["word_dict"])
    answer_dict = AnswerDict.from_json(manifest["answer_dict"])
    if len(word_dict) != vocab_size:
        raise CheckpointError(f"{path}: word dict size {len(word_dict)} does not match vocab_size {vocab_size}")
    if len(answer_dict) != num_answers:
        raise CheckpointError(
            f"{path}: answer dict size {len(answer_dict)} does not match num_answers {num_answers}"
        )
    return Checkpoint(
        params=ModelParams(embedding=embedding, word_weights=word_weights, image_weights=image_weights),
        word_dict=word_dict,
        answer_dict=answer_dict,
        hyper=Hyperparams.from_json(manifest["hyperparams"]),
    )


def fingerprint(path) -> str:
    """Stable content hash of a checkpoint directory (manifest + weights)."""
    directory = Path(path)
    digest = hashlib.sha256()
    digest.update((directory / MANIFEST_NAME).read_bytes())
    digest.update((directory / WEIGHTS_NAME).read_bytes())
    return digest.hexdigest()
