"""Question/annotation ingestion, majority voting, image-grouped splits.

Each question carries 10 human answers; a single training label is the
majority answer after normalization, with ties broken by corpus-global
answer frequency and then lexicographically. Train/validation splits are
made per image so no image contributes questions to both sides.
"""

from __future__ import annotations

import hashlib
import json
import string
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import ArityError, IntegrityError, JoinError, ParseError, SchemaError
from .vocab import tokenize

ANSWER_TYPES = ("yes/no", "number", "other", "unknown")
ANSWERS_PER_QUESTION = 10


@dataclass(frozen=True)
class Question:
    question_id: int
    image_id: int
    text: str


@dataclass(frozen=True)
class AnnotationRecord:
    question_id: int
    image_id: int
    human_answers: Tuple[str, ...]  # exactly 10, normalized, non-empty
    answer_type: str


@dataclass(frozen=True)
class QAPair:
    image_id: int
    tokens: Tuple[str, ...]
    answer: str
    answer_type: str
    question_id: int


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    fraction_a: float
    assignment: Dict[int, str]  # image_id -> "A" | "B"

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "fraction_a": self.fraction_a,
            "assignment": {str(k): v for k, v in sorted(self.assignment.items())},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SplitSpec":
        return cls(
            seed=int(obj["seed"]),
            fraction_a=float(obj["fraction_a"]),
            assignment={int(k): str(v) for k, v in obj["assignment"].items()},
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, ensure_ascii=False, sort_keys=True)

    @classmethod
    def load(cls, path) -> "SplitSpec":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(json.load(f))


def normalize_answer(raw: str) -> str:
    """Lowercase, trim, collapse internal whitespace, strip trailing punctuation."""
    collapsed = " ".join(raw.lower().split())
    return collapsed.rstrip(string.punctuation).rstrip()


def _load_json(path) -> dict:
    with open(path, "rb") as f:
        data = f.read()
    try:
        return json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 at byte {exc.start}") from exc
    except json.JSONDecodeError as exc:
        byte_offset = len(data.decode("utf-8", errors="replace")[: exc.pos].encode("utf-8"))
        raise ParseError(f"{path}: invalid JSON at byte {byte_offset}: {exc.msg}") from exc


def _require(record: Mapping, field: str, kind, where: str):
    if field not in record:
        raise SchemaError(f"{where}: missing field {field!r}")
    value = record[field]
    if kind is int:
        # bool is an int subclass; ids must be genuine integers
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(f"{where}: field {field!r} must be an integer, got {type(value).__name__}")
    elif not isinstance(value, kind):
        raise SchemaError(f"{where}: field {field!r} must be {kind.__name__}, got {type(value).__name__}")
    return value


def _question_records(path) -> List[dict]:
    doc = _load_json(path)
    if not isinstance(doc, dict) or "questions" not in doc:
        raise SchemaError(f"{path}: top-level object must contain a 'questions' array")
    records = doc["questions"]
    if not isinstance(records, list):
        raise SchemaError(f"{path}: 'questions' must be an array")
    return records


def parse_questions(path) -> List[Question]:
    """Read a question file: {"questions": [{question_id, image_id, question}]}."""
    questions: List[Question] = []
    seen: set = set()
    for i, rec in enumerate(_question_records(path)):
        where = f"{path}: questions[{i}]"
        if not isinstance(rec, dict):
            raise SchemaError(f"{where}: record must be an object")
        qid = _require(rec, "question_id", int, where)
        image_id = _require(rec, "image_id", int, where)
        text = _require(rec, "question", str, where)
        if not text:
            raise SchemaError(f"{where}: field 'question' must be non-empty")
        if qid in seen:
            raise IntegrityError(f"{where}: duplicate question_id {qid}")
        seen.add(qid)
        questions.append(Question(question_id=qid, image_id=image_id, text=text))
    return questions


def parse_annotations(path) -> List[AnnotationRecord]:
    """Read an annotation file: {"annotations": [{question_id, image_id, answer_type?, answers}]}."""
    doc = _load_json(path)
    if not isinstance(doc, dict) or "annotations" not in doc:
        raise SchemaError(f"{path}: top-level object must contain an 'annotations' array")
    records = doc["annotations"]
    if not isinstance(records, list):
        raise SchemaError(f"{path}: 'annotations' must be an array")

    annotations: List[AnnotationRecord] = []
    seen: set = set()
    for i, rec in enumerate(records):
        where = f"{path}: annotations[{i}]"
        if not isinstance(rec, dict):
            raise SchemaError(f"{where}: record must be an object")
        qid = _require(rec, "question_id", int, where)
        image_id = _require(rec, "image_id", int, where)
        raw_answers = _require(rec, "answers", list, where)
        if len(raw_answers) != ANSWERS_PER_QUESTION:
            raise ArityError(f"{where}: expected {ANSWERS_PER_QUESTION} answers, got {len(raw_answers)}")
        answers = []
        for j, entry in enumerate(raw_answers):
            if not isinstance(entry, dict) or not isinstance(entry.get("answer"), str):
                raise SchemaError(f"{where}: answers[{j}] must be an object with a string 'answer'")
            normalized = normalize_answer(entry["answer"])
            if not normalized:
                raise SchemaError(f"{where}: answers[{j}] is empty after normalization")
            answers.append(normalized)
        answer_type = rec.get("answer_type", "unknown")
        if answer_type not in ANSWER_TYPES:
            answer_type = "unknown"
        if qid in seen:
            raise IntegrityError(f"{where}: duplicate question_id {qid}")
        seen.add(qid)
        annotations.append(
            AnnotationRecord(
                question_id=qid,
                image_id=image_id,
                human_answers=tuple(answers),
                answer_type=answer_type,
            )
        )
    return annotations


def parse_multiple_choices(path) -> Tuple[List[Question], Dict[int, List[str]]]:
    """Read a multiple-choice question file (questions plus 'multiple_choices')."""
    questions = parse_questions(path)
    choices_by_qid: Dict[int, List[str]] = {}
    for i, rec in enumerate(_question_records(path)):
        where = f"{path}: questions[{i}]"
        choices = _require(rec, "multiple_choices", list, where)
        if not all(isinstance(c, str) for c in choices):
            raise SchemaError(f"{where}: 'multiple_choices' must be an array of strings")
        choices_by_qid[questions[i].question_id] = list(choices)
    return questions, choices_by_qid


def majority_vote(answers: Sequence[str], global_freq: Optional[Mapping[str, int]] = None) -> str:
    """Modal answer of the 10; ties go to higher corpus frequency, then lexicographic."""
    if len(answers) != ANSWERS_PER_QUESTION:
        raise ArityError(f"majority_vote needs exactly {ANSWERS_PER_QUESTION} answers, got {len(answers)}")
    counts: Dict[str, int] = {}
    for a in answers:
        counts[a] = counts.get(a, 0) + 1
    top = max(counts.values())
    modal = [a for a, n in counts.items() if n == top]
    if global_freq is None:
        global_freq = {}
    modal.sort(key=lambda a: (-global_freq.get(a, 0), a))
    return modal[0]


def answer_frequencies(annotations: Iterable[AnnotationRecord]) -> Dict[str, int]:
    """Corpus-global counts over every human answer (the vote tiebreak key)."""
    freq: Dict[str, int] = {}
    for ann in annotations:
        for a in ann.human_answers:
            freq[a] = freq.get(a, 0) + 1
    return freq


def build_pairs(questions: Sequence[Question], annotations: Sequence[AnnotationRecord]) -> List[QAPair]:
    """One training pair per annotation: tokenized question + majority answer."""
    by_qid = {q.question_id: q for q in questions}
    missing = sorted({a.question_id for a in annotations if a.question_id not in by_qid})
    if missing:
        raise JoinError(f"annotations reference unknown question_ids: {missing}")
    freq = answer_frequencies(annotations)
    pairs: List[QAPair] = []
    for ann in annotations:
        q = by_qid[ann.question_id]
        if q.image_id != ann.image_id:
            raise JoinError(
                f"question_id {ann.question_id}: image_id mismatch "
                f"(question has {q.image_id}, annotation has {ann.image_id})"
            )
        pairs.append(
            QAPair(
                image_id=ann.image_id,
                tokens=tuple(tokenize(q.text)),
                answer=majority_vote(ann.human_answers, freq),
                answer_type=ann.answer_type,
                question_id=ann.question_id,
            )
        )
    return pairs


def _image_rank(image_id: int, seed: int) -> int:
    digest = hashlib.sha256(f"{seed}:{image_id}".encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big")


def split_by_image(
    pairs: Sequence[QAPair], fraction_a: float, seed: int
) -> Tuple[List[QAPair], List[QAPair], SplitSpec]:
    """Partition pairs by image: images hash-shuffled, first round(f*n) go to A."""
    if not 0.0 < fraction_a < 1.0:
        raise ValueError(f"fraction_a must be in (0, 1), got {fraction_a}")
    image_ids = sorted({p.image_id for p in pairs})
    order = sorted(image_ids, key=lambda iid: (_image_rank(iid, seed), iid))
    n_a = int(round(fraction_a * len(order)))
    assignment = {iid: ("A" if i < n_a else "B") for i, iid in enumerate(order)}
    pairs_a = [p for p in pairs if assignment[p.image_id] == "A"]
    pairs_b = [p for p in pairs if assignment[p.image_id] == "B"]
    spec = SplitSpec(seed=seed, fraction_a=fraction_a, assignment=assignment)
    return pairs_a, pairs_b, spec


# --- pair (de)serialization: one JSON object per line, fixed key order ---

def pair_to_json(pair: QAPair) -> dict:
    return {
        "question_id": pair.question_id,
        "image_id": pair.image_id,
        "tokens": list(pair.tokens),
        "answer": pair.answer,
        "answer_type": pair.answer_type,
    }


def pair_from_json(obj: dict) -> QAPair:
    return QAPair(
        image_id=int(obj["image_id"]),
        tokens=tuple(obj["tokens"]),
        answer=str(obj["answer"]),
        answer_type=str(obj["answer_type"]),
        question_id=int(obj["question_id"]),
    )


def write_pairs(pairs: Iterable[QAPair], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for pair in pairs:
            f.write(json.dumps(pair_to_json(pair), ensure_ascii=False))
            f.write("\n")


def read_pairs(path) -> List[QAPair]:
    pairs: List[QAPair] = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                pairs.append(pair_from_json(json.loads(line)))
    return pairs
