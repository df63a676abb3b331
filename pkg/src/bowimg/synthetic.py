"""Synthetic corpora and feature stores for tests, benchmarks, and demos.

Two generators:

  separable_corpus: the answer is a joint function of one question keyword
    (4 choices) and the image's cluster (4 orthogonal feature directions),
    giving 16 answer classes. Words alone narrow the answer to 4 candidates;
    the keyword-cluster pair pins it down with a linear margin.

  word_biased_corpus: a keyword determines the answer on a given fraction of
    questions (default 80%); the rest ask what is visible and are answerable
    only from the image cluster. Words alone do well, the image alone poorly,
    and both together best.

Keyword/cluster combinations are quota-balanced (not sampled independently)
so that neither modality picks up spurious plurality signal. Each keyword has
a fixed question template, making the word signal exactly the keyword signal.

Image vectors are scaled one-hot cluster directions plus Gaussian noise.
Conv feature maps are built so their global average equals the stored vector,
with the cluster channel's mass concentrated in one cell (a CAM hot spot).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .corpus import AnnotationRecord, QAPair, Question, build_pairs
from .features import write_map_store, write_vector_store

SEPARABLE_KEYWORDS = ("color", "doing", "many", "where")
CLUSTERS = ("beach", "kitchen", "street", "forest")

TEMPLATES = {
    "color": "what color is in this picture",
    "doing": "what are they doing in this picture",
    "many": "how many things are in this picture",
    "where": "where is this picture taken",
    "visible": "what is visible in this picture",
}

SEPARABLE_ANSWERS = {
    ("color", "beach"): "blue",
    ("color", "kitchen"): "white",
    ("color", "street"): "gray",
    ("color", "forest"): "green",
    ("doing", "beach"): "surfing",
    ("doing", "kitchen"): "cooking",
    ("doing", "street"): "driving",
    ("doing", "forest"): "hiking",
    ("many", "beach"): "2",
    ("many", "kitchen"): "3",
    ("many", "street"): "5",
    ("many", "forest"): "1",
    ("where", "beach"): "on the sand",
    ("where", "kitchen"): "at the table",
    ("where", "street"): "on the road",
    ("where", "forest"): "in the trees",
}

WORD_ANSWERS = {"color": "red", "doing": "running", "many": "4", "where": "outside"}
IMAGE_KEYWORD = "visible"
IMAGE_ANSWERS = {"beach": "ocean", "kitchen": "stove", "street": "cars", "forest": "pines"}

_NUMBER_KEYWORDS = ("many",)


@dataclass
class SyntheticData:
    questions: List[Question]
    annotations: List[AnnotationRecord]
    pairs: List[QAPair]
    vectors: Dict[int, np.ndarray]
    maps: Dict[int, np.ndarray]
    choices_by_qid: Dict[int, List[str]]
    image_dim: int
    map_shape: Tuple[int, int, int]


def _balanced(items: Sequence, n: int, rng: np.random.Generator) -> List:
    """n draws with counts as equal as possible, in shuffled order."""
    reps = -(-n // len(items))
    pool = list(items) * reps
    order = rng.permutation(len(pool))[:n]
    return [pool[i] for i in order]


def _image_vector(rng: np.random.Generator, cluster_index: int, image_dim: int, scale: float, noise: float) -> np.ndarray:
    vec = rng.normal(0.0, noise, size=image_dim)
    vec[cluster_index] += scale
    return vec.astype(np.float32)


def _conv_map(
    rng: np.random.Generator, vector: np.ndarray, cluster_index: int, map_hw: Tuple[int, int], noise: float
) -> np.ndarray:
    """H x W x K map whose spatial mean is the vector, hot spot on the cluster channel."""
    h, w = map_hw
    k = vector.shape[0]
    grid = np.tile(np.asarray(vector, dtype=np.float64), (h, w, 1))
    pattern = rng.normal(0.0, noise, size=(h, w, k))
    pattern -= pattern.mean(axis=(0, 1), keepdims=True)
    hot = (int(rng.integers(h)), int(rng.integers(w)))
    spot = np.full((h, w), -1.0 / (h * w))
    spot[hot] += 1.0
    pattern[:, :, cluster_index] += float(vector[cluster_index]) * spot
    return (grid + pattern).astype(np.float32)


def _annotation_answers(rng: np.random.Generator, answer: str, all_answers: Sequence[str], agreement: int) -> List[str]:
    answers = [answer] * agreement
    others = [a for a in all_answers if a != answer] or [answer]
    answers += [others[int(rng.integers(len(others)))] for _ in range(10 - agreement)]
    perm = rng.permutation(10)
    return [answers[i] for i in perm]


def _build(
    rng: np.random.Generator,
    clusters_per_image: List[int],
    keyword_plan: List[List[str]],  # per image, one keyword per question slot
    answer_for,  # (keyword, cluster_name) -> answer string
    all_answers: Sequence[str],
    image_dim: int,
    image_scale: float,
    image_noise: float,
    map_hw: Tuple[int, int],
    agreement: int,
    first_image_id: int,
) -> SyntheticData:
    if image_dim < len(CLUSTERS):
        raise ValueError(f"image_dim must be >= {len(CLUSTERS)}")
    if not 1 <= agreement <= 10:
        raise ValueError("agreement must be in [1, 10]")
    questions: List[Question] = []
    annotations: List[AnnotationRecord] = []
    vectors: Dict[int, np.ndarray] = {}
    maps: Dict[int, np.ndarray] = {}
    choices_by_qid: Dict[int, List[str]] = {}
    questions_per_image = len(keyword_plan[0]) if keyword_plan else 1
    qid = first_image_id * questions_per_image
    for i, cluster_index in enumerate(clusters_per_image):
        image_id = first_image_id + i
        cluster = CLUSTERS[cluster_index]
        vectors[image_id] = _image_vector(rng, cluster_index, image_dim, image_scale, image_noise)
        maps[image_id] = _conv_map(rng, vectors[image_id], cluster_index, map_hw, image_noise)
        for keyword in keyword_plan[i]:
            answer = answer_for(keyword, cluster)
            answer_type = "number" if keyword in _NUMBER_KEYWORDS else "other"
            questions.append(Question(question_id=qid, image_id=image_id, text=TEMPLATES[keyword]))
            annotations.append(
                AnnotationRecord(
                    question_id=qid,
                    image_id=image_id,
                    human_answers=tuple(_annotation_answers(rng, answer, all_answers, agreement)),
                    answer_type=answer_type,
                )
            )
            distractors = [a for a in all_answers if a != answer]
            picked = [distractors[int(j)] for j in rng.choice(len(distractors), size=3, replace=False)]
            options = [answer] + picked
            choices_by_qid[qid] = [options[int(j)] for j in rng.permutation(4)]
            qid += 1
    pairs = build_pairs(questions, annotations)
    return SyntheticData(
        questions=questions,
        annotations=annotations,
        pairs=pairs,
        vectors=vectors,
        maps=maps,
        choices_by_qid=choices_by_qid,
        image_dim=image_dim,
        map_shape=(map_hw[0], map_hw[1], image_dim),
    )


def _keyword_plan_balanced(
    clusters_per_image: List[int], questions_per_image: int, keywords: Sequence[str], rng: np.random.Generator
) -> List[List[str]]:
    """Assign keywords so each cluster sees each keyword equally often."""
    plan: List[List[str]] = [[] for _ in clusters_per_image]
    for c in set(clusters_per_image):
        slots = [i for i, ci in enumerate(clusters_per_image) if ci == c]
        assigned = _balanced(keywords, len(slots) * questions_per_image, rng)
        for j, i in enumerate(slots):
            plan[i] = assigned[j * questions_per_image:(j + 1) * questions_per_image]
    return plan


def separable_corpus(
    n_images: int = 1200,
    questions_per_image: int = 1,
    image_dim: int = 16,
    image_scale: float = 4.0,
    image_noise: float = 0.1,
    map_hw: Tuple[int, int] = (3, 3),
    agreement: int = 10,
    seed: int = 0,
    first_image_id: int = 0,
) -> SyntheticData:
    """Corpus whose answers need both the keyword and the image cluster."""
    rng = np.random.default_rng(seed)
    clusters = _balanced(range(len(CLUSTERS)), n_images, rng)
    plan = _keyword_plan_balanced(clusters, questions_per_image, SEPARABLE_KEYWORDS, rng)
    return _build(
        rng,
        clusters,
        plan,
        lambda kw, cl: SEPARABLE_ANSWERS[(kw, cl)],
        sorted(set(SEPARABLE_ANSWERS.values())),
        image_dim,
        image_scale,
        image_noise,
        map_hw,
        agreement,
        first_image_id,
    )


def word_biased_corpus(
    n_images: int = 800,
    questions_per_image: int = 1,
    keyword_bias: float = 0.8,
    image_dim: int = 16,
    image_scale: float = 4.0,
    image_noise: float = 0.1,
    map_hw: Tuple[int, int] = (3, 3),
    agreement: int = 10,
    seed: int = 0,
    first_image_id: int = 0,
) -> SyntheticData:
    """Corpus where the keyword alone determines the answer keyword_bias of the time."""
    rng = np.random.default_rng(seed)
    clusters = _balanced(range(len(CLUSTERS)), n_images, rng)
    n_questions = n_images * questions_per_image
    n_word = int(round(keyword_bias * n_questions))
    flat = _balanced(SEPARABLE_KEYWORDS, n_word, rng) + [IMAGE_KEYWORD] * (n_questions - n_word)
    order = rng.permutation(n_questions)
    plan = [
        [flat[order[i * questions_per_image + j]] for j in range(questions_per_image)]
        for i in range(n_images)
    ]

    def answer_for(keyword: str, cluster: str) -> str:
        if keyword == IMAGE_KEYWORD:
            return IMAGE_ANSWERS[cluster]
        return WORD_ANSWERS[keyword]

    return _build(
        rng,
        clusters,
        plan,
        answer_for,
        sorted(set(WORD_ANSWERS.values()) | set(IMAGE_ANSWERS.values())),
        image_dim,
        image_scale,
        image_noise,
        map_hw,
        agreement,
        first_image_id,
    )


def write_dataset(data: SyntheticData, out_dir) -> Dict[str, str]:
    """Materialize a synthetic corpus as the file formats the CLI consumes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "questions": str(out / "questions.json"),
        "annotations": str(out / "annotations.json"),
        "features": str(out / "features.ibf"),
        "maps": str(out / "maps.ibm"),
        "manifest": str(out / "dataset.json"),
    }
    q_records = []
    for q in data.questions:
        q_records.append(
            {
                "question_id": q.question_id,
                "image_id": q.image_id,
                "question": q.text,
                "multiple_choices": data.choices_by_qid.get(q.question_id, []),
            }
        )
    with open(paths["questions"], "w", encoding="utf-8") as f:
        json.dump({"questions": q_records}, f, ensure_ascii=False)
    a_records = [
        {
            "question_id": a.question_id,
            "image_id": a.image_id,
            "answer_type": a.answer_type,
            "answers": [{"answer": ans} for ans in a.human_answers],
        }
        for a in data.annotations
    ]
    with open(paths["annotations"], "w", encoding="utf-8") as f:
        json.dump({"annotations": a_records}, f, ensure_ascii=False)
    write_vector_store(paths["features"], sorted(data.vectors.items()), dim=data.image_dim)
    write_map_store(paths["maps"], sorted(data.maps.items()), shape=data.map_shape)
    with open(paths["manifest"], "w", encoding="utf-8") as f:
        json.dump(
            {
                "images": len(data.vectors),
                "questions": len(data.questions),
                "image_dim": data.image_dim,
                "map_shape": list(data.map_shape),
            },
            f,
        )
    return paths
