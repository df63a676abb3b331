"""Prediction ranking, score decomposition, word importance, CAM, upsampling."""

import numpy as np
import pytest

from bowimg import features, model as model_lib
from bowimg.errors import ArgumentError, DimensionError
from bowimg.inference import (
    CamGrid,
    VqaEngine,
    cam,
    decompose_scores,
    upsample_bilinear,
)
from bowimg.vocab import AnswerDict, WordDict

from conftest import make_params, random_bow


def build_engine(tmp_path, params, vectors, maps=None):
    words = [f"w{i}" for i in range(params.vocab_size)]
    answers = [f"a{i}" for i in range(params.num_answers)]
    vpath = tmp_path / "v.ibf"
    features.write_vector_store(vpath, sorted(vectors.items()), dim=params.image_dim)
    map_store = None
    if maps:
        mpath = tmp_path / "m.ibm"
        shape = next(iter(maps.values())).shape
        features.write_map_store(mpath, sorted(maps.items()), shape=shape)
        map_store = features.MapStore(mpath)
    return VqaEngine(
        params,
        WordDict(words, 1),
        AnswerDict(answers, 1),
        features.VectorStore(vpath),
        map_store,
    )


@pytest.fixture
def engine(tmp_path, rng):
    params = make_params(vocab_size=8, embed_dim=4, image_dim=5, num_answers=6, seed=13)
    vectors = {i: rng.normal(size=5).astype(np.float32) for i in range(3)}
    maps = {i: rng.normal(size=(3, 4, 5)).astype(np.float32) for i in range(3)}
    return build_engine(tmp_path, params, vectors, maps)


class TestDecomposition:
    def test_total_is_exact_sum(self, engine, rng):
        for _ in range(50):
            bow = random_bow(rng, engine.params.vocab_size)
            image_id = int(rng.integers(3))
            dec = engine.decompose_bow(bow, image_id)
            assert np.max(np.abs(dec.total - (dec.word + dec.image))) <= 1e-6
            forward = model_lib.forward(
                engine.params, bow, engine.vector_store.get_vector(image_id).astype(np.float64)
            )
            assert np.max(np.abs(dec.total - forward)) <= 1e-6

    def test_zero_image_zeroes_image_side(self, tmp_path, rng):
        params = make_params()
        eng = build_engine(tmp_path, params, {0: np.zeros(params.image_dim, dtype=np.float32)})
        dec = eng.decompose("w0 w1", 0)
        assert np.array_equal(dec.image, np.zeros(params.num_answers))
        assert np.array_equal(dec.total, dec.word)

    def test_empty_question_zeroes_word_side(self, engine):
        dec = engine.decompose("", 0)
        assert np.array_equal(dec.word, np.zeros(engine.num_answers))
        assert np.array_equal(dec.total, dec.image)


class TestPredictTopk:
    def test_k_equals_all_classes_is_permutation(self, engine):
        entries = engine.predict_topk("w0 w3", 1, k=engine.num_answers)
        assert sorted(e.class_index for e in entries) == list(range(engine.num_answers))

    def test_zero_image_weights_match_words_only(self, tmp_path, rng):
        params = make_params(num_answers=4, seed=3)
        params.image_weights = np.zeros_like(params.image_weights)
        eng = build_engine(tmp_path, params, {0: rng.normal(size=params.image_dim).astype(np.float32)})
        full = eng.predict_topk("w0 w1 w1", 0, k=4)
        words = eng.words_only_topk("w0 w1 w1", k=4)
        assert [e.answer for e in full] == [e.answer for e in words]

    def test_matches_brute_force_enumeration(self, engine, rng):
        # Oracle: recompute every logit by explicit loops and sort exhaustively.
        for _ in range(20):
            bow = random_bow(rng, engine.params.vocab_size)
            image_id = int(rng.integers(3))
            x_v = engine.vector_store.get_vector(image_id).astype(np.float64)
            p = engine.params
            logits = []
            for c in range(p.num_answers):
                total = 0.0
                for idx, count in bow.items():
                    for d in range(p.embed_dim):
                        total += p.word_weights[c, d] * p.embedding[d, idx] * count
                for j in range(p.image_dim):
                    total += p.image_weights[c, j] * x_v[j]
                logits.append(total)
            oracle_order = sorted(range(p.num_answers), key=lambda c: (-logits[c], c))
            entries = engine.predict_topk_bow(bow, image_id, k=p.num_answers)
            assert [e.class_index for e in entries] == oracle_order
            for e in entries:
                assert abs(e.logit - logits[e.class_index]) <= 1e-9

    def test_k_truncation_warns(self, engine):
        with pytest.warns(UserWarning, match="truncat"):
            entries = engine.predict_topk("w0", 0, k=engine.num_answers + 5)
        assert len(entries) == engine.num_answers

    def test_k_below_one_rejected(self, engine):
        with pytest.raises(ArgumentError):
            engine.predict_topk("w0", 0, k=0)

    def test_entry_identity(self, engine):
        for e in engine.predict_topk("w0 w1 w2", 2, k=3):
            assert abs(e.logit - (e.word_contrib + e.image_contrib)) <= 1e-6


class TestSideRankings:
    def test_words_only_ignores_image(self, engine):
        assert [e.answer for e in engine.words_only_topk("w0 w5", k=3)] == [
            e.answer for e in engine.words_only_topk("w0 w5", k=3)
        ]
        # no image argument exists; ranking must equal prediction with zero image
        dec_word = engine.params.word_weights @ model_lib.word_feature(engine.params, {0: 1, 5: 1})
        order = np.lexsort((np.arange(dec_word.size), -dec_word))[:3]
        assert [e.class_index for e in engine.words_only_topk("w0 w5", k=3)] == list(order)

    def test_image_only_ignores_question(self, engine):
        a = engine.image_only_topk(0, k=3)
        b = engine.image_only_topk(0, k=3)
        assert [e.answer for e in a] == [e.answer for e in b]
        empty_q = engine.predict_topk("", 0, k=3)
        assert [e.answer for e in a] == [e.answer for e in empty_q]

    def test_image_only_matches_brute_force(self, engine):
        x_v = engine.vector_store.get_vector(1).astype(np.float64)
        scores = [float(engine.params.image_weights[c] @ x_v) for c in range(engine.num_answers)]
        oracle = sorted(range(engine.num_answers), key=lambda c: (-scores[c], c))[:3]
        assert [e.class_index for e in engine.image_only_topk(1, k=3)] == oracle


class TestMultipleChoice:
    def test_all_answers_equals_open_ended_top1(self, engine):
        top1 = engine.predict_topk("w0 w2", 0, k=1)[0].answer
        choices = list(engine.answer_dict.answers)
        assert engine.predict_multiple_choice("w0 w2", 0, choices).chosen == top1

    def test_single_choice(self, engine):
        result = engine.predict_multiple_choice("w0", 0, ["a3"])
        assert result.chosen == "a3" and not result.unscored

    def test_matches_brute_force_probability_lookup(self, engine, rng):
        probs = model_lib.softmax(engine.decompose("w0 w1", 2).total)
        choices = ["a4", "a0", "not-an-answer", "a2"]
        result = engine.predict_multiple_choice("w0 w1", 2, choices)
        expected = [float(probs[4]), float(probs[0]), 0.0, float(probs[2])]
        assert result.probabilities == expected
        assert result.chosen == choices[int(np.argmax(expected))]
        assert result.mapped == [True, True, False, True]

    def test_empty_choices(self, engine):
        with pytest.raises(ArgumentError):
            engine.predict_multiple_choice("w0", 0, [])

    def test_no_choice_maps_returns_first_unscored(self, engine):
        result = engine.predict_multiple_choice("w0", 0, ["nope", "also nope"])
        assert result.chosen == "nope" and result.unscored
        assert result.probabilities == [0.0, 0.0]

    def test_choices_are_normalized_before_lookup(self, engine):
        result = engine.predict_multiple_choice("w0", 0, ["  A3 "])
        assert result.mapped == [True]


class TestWordImportance:
    def test_single_word_equals_word_contribution(self, engine):
        dec = engine.decompose("w2", 0)
        entries = engine.word_importance("w2", target_class=4)
        assert len(entries) == 1
        assert abs(entries[0].importance - dec.word[4]) <= 1e-9

    def test_sum_equals_word_contribution(self, engine, rng):
        question = "w0 w1 w1 w7 unknownword w0 w0"
        for target in range(engine.num_answers):
            dec = engine.decompose(question, 0)
            total = sum(e.importance for e in engine.word_importance(question, target))
            assert abs(total - dec.word[target]) <= 1e-6

    def test_leave_one_out_delta(self, engine):
        question = "w0 w3 w5"
        target = 2
        full = engine.decompose(question, 0).word[target]
        entries = {e.token: e for e in engine.word_importance(question, target)}
        reduced = engine.decompose("w0 w5", 0).word[target]
        assert abs((full - reduced) - entries["w3"].importance) <= 1e-9

    def test_oov_flagged_with_zero(self, engine):
        entries = engine.word_importance("w0 zebra", target_class=0)
        by_token = {e.token: e for e in entries}
        assert by_token["zebra"].oov and by_token["zebra"].importance == 0.0
        assert not by_token["w0"].oov

    def test_sorted_descending_with_ranks(self, engine):
        entries = engine.word_importance("w0 w1 w2 w3 w4", target_class=1)
        values = [e.importance for e in entries]
        assert values == sorted(values, reverse=True)
        assert [e.rank for e in entries] == list(range(1, len(entries) + 1))

    def test_repeated_token_multiplicity_weighted(self, engine):
        single = {e.token: e for e in engine.word_importance("w1", 0)}["w1"]
        triple = {e.token: e for e in engine.word_importance("w1 w1 w1", 0)}["w1"]
        assert triple.count == 3
        assert abs(triple.importance - 3 * single.importance) <= 1e-9


class TestCam:
    def test_constant_map_constant_grid(self):
        params = make_params(image_dim=3)
        grid = np.tile(np.array([1.0, 2.0, -1.0]), (4, 4, 1))
        out = cam(params, grid, target_class=0)
        expected = float(params.image_weights[0] @ np.array([1.0, 2.0, -1.0]))
        assert np.allclose(out.values, expected, atol=1e-12)
        assert np.array_equal(out.normalized(), np.zeros((4, 4)))

    def test_spatial_mean_matches_image_contribution(self, rng):
        params = make_params(image_dim=6)
        conv = rng.normal(size=(5, 7, 6))
        pooled = features.gap(conv)
        for c in range(params.num_answers):
            grid = cam(params, conv, c)
            r_v = float(params.image_weights[c] @ pooled)
            assert abs(grid.values.mean() - r_v) <= 1e-5

    def test_matches_triple_loop_oracle(self, rng):
        params = make_params(image_dim=8, num_answers=4, seed=2)
        conv = rng.normal(size=(7, 7, 8))
        target = 3
        oracle = np.zeros((7, 7))
        for x in range(7):
            for y in range(7):
                for k in range(8):
                    oracle[x, y] += params.image_weights[target, k] * conv[x, y, k]
        out = cam(params, conv, target)
        assert np.max(np.abs(out.values - oracle)) <= 1e-5

    def test_channel_mismatch(self):
        params = make_params(image_dim=5)
        with pytest.raises(DimensionError):
            cam(params, np.zeros((2, 2, 4)), 0)

    def test_normalized_range(self, rng):
        grid = CamGrid(values=rng.normal(size=(3, 3)))
        norm = grid.normalized()
        assert norm.min() == 0.0 and norm.max() == 1.0


class TestUpsampleBilinear:
    def test_identity_dims(self, rng):
        grid = rng.normal(size=(3, 4))
        assert np.allclose(upsample_bilinear(grid, 3, 4), grid, atol=1e-12)

    def test_constant_grid(self):
        grid = np.full((2, 2), 3.25)
        out = upsample_bilinear(grid, 5, 7)
        assert np.allclose(out, 3.25, atol=1e-12)

    def test_hand_evaluated_middle_column(self):
        grid = np.array([[0.0, 1.0], [0.0, 1.0]])
        out = upsample_bilinear(grid, 2, 3)
        # Corner-aligned: sample positions 0, 0.5, 1 -> middle is the average.
        assert np.allclose(out, [[0.0, 0.5, 1.0], [0.0, 0.5, 1.0]], atol=1e-12)

    def test_downsampling_rejected(self):
        with pytest.raises(ArgumentError):
            upsample_bilinear(np.zeros((4, 4)), 2, 8)

    def test_single_row_grid(self):
        out = upsample_bilinear(np.array([[1.0, 3.0]]), 2, 3)
        assert np.allclose(out, [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]], atol=1e-12)


class TestEngineCamForImage:
    def test_cam_for_image_uses_map_store(self, engine):
        grid = engine.cam_for_image(0, target_class=1)
        conv = engine.map_store.get_map(0).astype(np.float64)
        expected = cam(engine.params, conv, 1)
        assert np.array_equal(grid.values, expected.values)

    def test_missing_map_store(self, tmp_path, rng):
        params = make_params()
        eng = build_engine(tmp_path, params, {0: rng.normal(size=params.image_dim).astype(np.float32)})
        with pytest.raises(ArgumentError):
            eng.cam_for_image(0, 0)
