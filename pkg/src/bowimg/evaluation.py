"""Accuracy metric, per-answer-type breakdown, and result export.

A prediction is scored against the 10 human answers with the
inter-annotator-robust rule: min(#matches/3, 1), averaged over the ten
9-answer subsets obtained by leaving each annotator out in turn (the
convention used by the official scoring server). The simpler single-shot
min(#matches/3, 1) is available behind a flag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .corpus import ANSWERS_PER_QUESTION, AnnotationRecord, QAPair, normalize_answer
from .errors import ArgumentError, ArityError, IntegrityError
from .inference import VqaEngine

TYPE_BUCKETS = ("yes/no", "number", "other")

OPEN_ENDED = "open-ended"
MULTIPLE_CHOICE = "multiple-choice"


def vqa_accuracy(predicted: str, human_answers: Sequence[str], leave_one_out: bool = True) -> float:
    """Score one prediction against 10 normalized human answers, in [0, 1]."""
    if len(human_answers) != ANSWERS_PER_QUESTION:
        raise ArityError(
            f"vqa_accuracy needs exactly {ANSWERS_PER_QUESTION} human answers, got {len(human_answers)}"
        )
    matches = sum(1 for a in human_answers if a == predicted)
    if not leave_one_out:
        return min(matches / 3.0, 1.0)
    total = 0.0
    for i in range(ANSWERS_PER_QUESTION):
        remaining = matches - (1 if human_answers[i] == predicted else 0)
        total += min(remaining / 3.0, 1.0)
    return total / ANSWERS_PER_QUESTION


@dataclass
class EvalResult:
    overall: float
    by_type: Dict[str, float]   # accuracy per bucket with at least one question
    counts: Dict[str, int]      # question count per bucket (incl. "unknown")
    total: int

    def to_json(self) -> dict:
        return {
            "overall": self.overall,
            "by_type": dict(self.by_type),
            "counts": dict(self.counts),
            "total": self.total,
        }

    def to_row(self) -> dict:
        """Benchmark-table row shape: percentages rounded to 2 decimals."""
        row = {"overall": round(100.0 * self.overall, 2)}
        for bucket, key in (("yes/no", "yes_no"), ("number", "number"), ("other", "other")):
            acc = self.by_type.get(bucket)
            row[key] = None if acc is None else round(100.0 * acc, 2)
        return row


def evaluate(
    engine: VqaEngine,
    pairs: Sequence[QAPair],
    annotations: Iterable[AnnotationRecord],
    track: str = OPEN_ENDED,
    choices_by_qid: Optional[Mapping[int, Sequence[str]]] = None,
    leave_one_out: bool = True,
) -> EvalResult:
    """Mean per-question accuracy, bucketed by answer type.

    Unknown-type questions count toward the overall number only. For the
    multiple-choice track every evaluated question needs an entry in
    choices_by_qid.
    """
    if track not in (OPEN_ENDED, MULTIPLE_CHOICE):
        raise ArgumentError(f"unknown track {track!r}")
    ann_by_qid = {a.question_id: a for a in annotations}
    missing = [p.question_id for p in pairs if p.question_id not in ann_by_qid]
    if missing:
        raise ArgumentError(f"no annotations for question_ids: {sorted(missing)[:10]}")
    if track == MULTIPLE_CHOICE and choices_by_qid is None:
        raise ArgumentError("multiple-choice track needs choices_by_qid")

    sums: Dict[str, float] = {}
    counts: Dict[str, int] = {}
    for pair in pairs:
        ann = ann_by_qid[pair.question_id]
        bow = {}
        for token in pair.tokens:
            idx = engine.word_dict.word_to_index.get(token)
            if idx is not None:
                bow[idx] = bow.get(idx, 0) + 1
        if track == OPEN_ENDED:
            predicted = engine.predict_topk_bow(bow, pair.image_id, k=1)[0].answer
        else:
            choices = choices_by_qid.get(pair.question_id)
            if choices is None:
                raise ArgumentError(f"no choices for question_id {pair.question_id}")
            predicted = engine.predict_multiple_choice_bow(bow, pair.image_id, choices).chosen
        acc = vqa_accuracy(normalize_answer(predicted), ann.human_answers, leave_one_out=leave_one_out)
        bucket = ann.answer_type
        sums[bucket] = sums.get(bucket, 0.0) + acc
        counts[bucket] = counts.get(bucket, 0) + 1

    total = sum(counts.values())
    overall = sum(sums.values()) / total if total else 0.0
    by_type = {b: sums[b] / counts[b] for b in TYPE_BUCKETS if counts.get(b)}
    return EvalResult(overall=overall, by_type=by_type, counts=counts, total=total)


def export_results(predictions: Iterable[Tuple[int, str]], path) -> None:
    """Write scoring-server input: a JSON array of {question_id, answer}."""
    rows = [(int(qid), str(answer)) for qid, answer in predictions]
    seen: set = set()
    for qid, _ in rows:
        if qid in seen:
            raise IntegrityError(f"duplicate question_id {qid} in results")
        seen.add(qid)
    rows.sort(key=lambda r: r[0])
    payload = [{"question_id": qid, "answer": answer} for qid, answer in rows]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False)


def predict_for_export(
    engine: VqaEngine,
    pairs: Sequence[QAPair],
    track: str = OPEN_ENDED,
    choices_by_qid: Optional[Mapping[int, Sequence[str]]] = None,
) -> List[Tuple[int, str]]:
    """Top-1 (or chosen) answer per question, ready for export_results."""
    if track == MULTIPLE_CHOICE and choices_by_qid is None:
        raise ArgumentError("multiple-choice track needs choices_by_qid")
    out: List[Tuple[int, str]] = []
    for pair in pairs:
        question = " ".join(pair.tokens)
        if track == OPEN_ENDED:
            answer = engine.predict_topk(question, pair.image_id, k=1)[0].answer
        else:
            choices = choices_by_qid.get(pair.question_id)
            if choices is None:
                raise ArgumentError(f"no choices for question_id {pair.question_id}")
            answer = engine.predict_multiple_choice(question, pair.image_id, choices).chosen
        out.append((pair.question_id, answer))
    return out
