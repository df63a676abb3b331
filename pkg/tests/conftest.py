"""Shared fixtures: tiny random models, synthetic stores, a toy service checkpoint."""

import numpy as np
import pytest

from bowimg import model as model_lib, synthetic

# Acceptance-criterion results, printed as a summary section after the run.
_criterion_results = []


def record_criterion(name: str, passed: bool) -> None:
    _criterion_results.append((name, passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_results:
        terminalreporter.section("acceptance criteria")
        for name, ok in _criterion_results:
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}")


def make_params(vocab_size=6, embed_dim=4, image_dim=5, num_answers=3, seed=0):
    return model_lib.init(vocab_size, embed_dim, image_dim, num_answers, seed)


def random_bow(rng, vocab_size, max_tokens=6):
    n = int(rng.integers(0, max_tokens + 1))
    bow = {}
    for _ in range(n):
        idx = int(rng.integers(vocab_size))
        bow[idx] = bow.get(idx, 0) + 1
    return bow


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_data(tmp_path_factory):
    """Small separable corpus with stores on disk."""
    root = tmp_path_factory.mktemp("toy_data")
    data = synthetic.separable_corpus(n_images=48, questions_per_image=1, image_dim=8, seed=9)
    paths = synthetic.write_dataset(data, root)
    return data, paths


@pytest.fixture(scope="session")
def toy_checkpoint(tmp_path_factory, toy_data):
    """Untrained checkpoint wired to the toy corpus dictionaries and stores."""
    data, paths = toy_data
    from bowimg.vocab import build_answer_dict, build_word_dict

    word_dict = build_word_dict(data.pairs, 1)
    answer_dict = build_answer_dict(data.pairs, 1)
    params = model_lib.init(len(word_dict), 6, data.image_dim, len(answer_dict), seed=3)
    hyper = model_lib.Hyperparams()
    ckpt_dir = tmp_path_factory.mktemp("toy_ckpt") / "ckpt"
    model_lib.save(params, word_dict, answer_dict, hyper, ckpt_dir)
    return {"dir": str(ckpt_dir), "paths": paths, "data": data}
