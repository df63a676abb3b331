"""Tokenization, frequency-thresholded dictionaries, bag-of-words encoding.

Questions are reduced to lowercase [a-z0-9'] tokens. Dictionaries map tokens
(or answer strings) to dense indices ordered by descending corpus frequency,
lexicographic on ties, so construction is deterministic. Encoding a question
is a sparse count vector over the word dictionary; out-of-dictionary tokens
are dropped rather than mapped to an unknown slot, which keeps the additive
score decomposition exact.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence

# Sparse bag-of-words: word index -> occurrence count (>= 1).
BowVector = Dict[int, int]

_KEPT = frozenset("abcdefghijklmnopqrstuvwxyz0123456789'")


def tokenize(text: str) -> List[str]:
    """Lowercase, replace anything outside [a-z0-9'] with space, split."""
    lowered = text.lower()
    cleaned = "".join(ch if ch in _KEPT else " " for ch in lowered)
    return cleaned.split()


def _ranked_by_frequency(counts: Counter, min_count: int) -> List[str]:
    kept = [(item, n) for item, n in counts.items() if n >= min_count]
    kept.sort(key=lambda kv: (-kv[1], kv[0]))
    return [item for item, _ in kept]


@dataclass
class WordDict:
    """Question-word dictionary: words[i] has index i."""

    words: List[str]
    min_count: int

    def __post_init__(self) -> None:
        self.word_to_index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.word_to_index

    def index_of(self, word: str) -> int:
        return self.word_to_index[word]

    def to_json(self) -> dict:
        return {"words": list(self.words), "min_count": self.min_count}

    @classmethod
    def from_json(cls, obj: dict) -> "WordDict":
        return cls(words=list(obj["words"]), min_count=int(obj["min_count"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "WordDict":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(json.load(f))


@dataclass
class AnswerDict:
    """Answer-class dictionary: answers[c] is the string for class c."""

    answers: List[str]
    min_count: int

    def __post_init__(self) -> None:
        self.answer_to_class = {a: c for c, a in enumerate(self.answers)}

    def __len__(self) -> int:
        return len(self.answers)

    def __contains__(self, answer: str) -> bool:
        return answer in self.answer_to_class

    def class_of(self, answer: str) -> int:
        return self.answer_to_class[answer]

    def answer_of(self, class_index: int) -> str:
        return self.answers[class_index]

    def to_json(self) -> dict:
        return {"answers": list(self.answers), "min_count": self.min_count}

    @classmethod
    def from_json(cls, obj: dict) -> "AnswerDict":
        return cls(answers=list(obj["answers"]), min_count=int(obj["min_count"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "AnswerDict":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(json.load(f))


def build_word_dict(pairs: Iterable, min_count: int = 1) -> WordDict:
    """Dictionary of every token with corpus frequency >= min_count."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts: Counter = Counter()
    for pair in pairs:
        counts.update(pair.tokens)
    return WordDict(words=_ranked_by_frequency(counts, min_count), min_count=min_count)


def build_answer_dict(pairs: Iterable, min_count: int = 1) -> AnswerDict:
    """Dictionary of every majority answer with frequency >= min_count."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts: Counter = Counter(pair.answer for pair in pairs)
    return AnswerDict(answers=_ranked_by_frequency(counts, min_count), min_count=min_count)


def encode_bow(tokens: Sequence[str], word_dict: WordDict) -> BowVector:
    """Count in-dictionary tokens; out-of-dictionary tokens are dropped."""
    bow: BowVector = {}
    index = word_dict.word_to_index
    for token in tokens:
        idx = index.get(token)
        if idx is not None:
            bow[idx] = bow.get(idx, 0) + 1
    return bow
