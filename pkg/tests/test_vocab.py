"""Tokenizer, dictionary construction, and bag-of-words encoding."""

import json

from hypothesis import given, strategies as st

from bowimg.corpus import QAPair
from bowimg.vocab import (
    AnswerDict,
    WordDict,
    build_answer_dict,
    build_word_dict,
    encode_bow,
    tokenize,
)


def pair(tokens, answer="yes"):
    return QAPair(image_id=0, tokens=tuple(tokens), answer=answer, answer_type="other", question_id=0)


class TestTokenize:
    def test_strips_punctuation_and_lowercases(self):
        assert tokenize("What is the color of sofa?") == ["what", "is", "the", "color", "of", "sofa"]

    def test_empty_string(self):
        assert tokenize("") == []

    def test_keeps_apostrophes(self):
        assert tokenize("What's this??") == ["what's", "this"]

    def test_digits_kept(self):
        assert tokenize("Are there 2 cats?") == ["are", "there", "2", "cats"]

    @given(st.text(max_size=60))
    def test_tokens_use_only_kept_characters(self, text):
        for token in tokenize(text):
            assert token
            assert set(token) <= set("abcdefghijklmnopqrstuvwxyz0123456789'")

    @given(st.text(max_size=60))
    def test_deterministic(self, text):
        assert tokenize(text) == tokenize(text)


class TestWordDict:
    def test_threshold_excludes_rare(self):
        pairs = [pair(["what"] * 5 + ["sofa"])]
        d = build_word_dict(pairs, min_count=2)
        assert "what" in d and "sofa" not in d

    def test_min_count_one_keeps_everything(self):
        pairs = [pair(["a", "b", "b"]), pair(["c"])]
        d = build_word_dict(pairs, min_count=1)
        assert sorted(d.words) == ["a", "b", "c"]

    def test_ordering_frequency_then_lexicographic(self):
        pairs = [pair(["b", "b", "a", "a", "z"])]
        d = build_word_dict(pairs, min_count=1)
        assert d.words == ["a", "b", "z"]
        assert [d.index_of(w) for w in ("a", "b", "z")] == [0, 1, 2]

    def test_raising_min_count_never_adds(self):
        pairs = [pair(["a"] * 3 + ["b"] * 2 + ["c"])]
        previous = set(build_word_dict(pairs, 1).words)
        for mc in (2, 3, 4):
            current = set(build_word_dict(pairs, mc).words)
            assert current <= previous
            previous = current

    def test_empty_corpus(self):
        assert len(build_word_dict([], 1)) == 0

    def test_json_round_trip(self, tmp_path):
        d = build_word_dict([pair(["a", "b", "a"])], 1)
        path = tmp_path / "words.json"
        d.save(path)
        with open(path) as f:
            raw = json.load(f)
        assert set(raw) == {"words", "min_count"}
        loaded = WordDict.load(path)
        assert loaded.words == d.words and loaded.min_count == d.min_count


class TestAnswerDict:
    def test_threshold(self):
        pairs = [pair([], "yes")] * 10 + [pair([], "blue")]
        d = build_answer_dict(pairs, min_count=2)
        assert d.answers == ["yes"]

    def test_min_count_one(self):
        pairs = [pair([], a) for a in ("x", "y", "y")]
        d = build_answer_dict(pairs, 1)
        assert set(d.answers) == {"x", "y"}

    def test_multiword_answer_is_single_class(self):
        pairs = [pair([], "playing baseball")] * 3
        d = build_answer_dict(pairs, 1)
        assert d.answers == ["playing baseball"]
        assert d.class_of("playing baseball") == 0

    def test_ordered_by_descending_frequency(self):
        pairs = [pair([], "b")] * 3 + [pair([], "a")] * 3 + [pair([], "c")] * 5
        d = build_answer_dict(pairs, 1)
        assert d.answers == ["c", "a", "b"]

    def test_round_trip(self, tmp_path):
        d = build_answer_dict([pair([], "no"), pair([], "no"), pair([], "yes")], 1)
        path = tmp_path / "answers.json"
        d.save(path)
        loaded = AnswerDict.load(path)
        assert loaded.answers == d.answers


class TestEncodeBow:
    DICT = WordDict(words=["what", "is"], min_count=1)

    def test_counts(self):
        assert encode_bow(["what", "is", "what"], self.DICT) == {0: 2, 1: 1}

    def test_all_oov(self):
        assert encode_bow(["sofa", "color"], self.DICT) == {}

    def test_empty(self):
        assert encode_bow([], self.DICT) == {}

    @given(
        st.lists(st.sampled_from(["what", "is", "sofa", "red"]), max_size=10),
        st.lists(st.sampled_from(["what", "is", "sofa", "red"]), max_size=10),
    )
    def test_additive_in_token_concatenation(self, t1, t2):
        combined = encode_bow(t1 + t2, self.DICT)
        left, right = encode_bow(t1, self.DICT), encode_bow(t2, self.DICT)
        merged = dict(left)
        for k, v in right.items():
            merged[k] = merged.get(k, 0) + v
        assert combined == merged

    @given(st.lists(st.sampled_from(["what", "is", "sofa"]), max_size=12))
    def test_total_count_bounded_by_tokens(self, tokens):
        bow = encode_bow(tokens, self.DICT)
        total = sum(bow.values())
        assert total <= len(tokens)
        oov = sum(1 for t in tokens if t not in self.DICT)
        assert (total == len(tokens)) == (oov == 0)
