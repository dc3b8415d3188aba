"""Encoder contract: toy backend training, gradients, determinism, persistence."""

from __future__ import annotations

import numpy as np
import pytest

from arahate import encoder
from arahate.encoder import (
    BackendNotInstalledError,
    BackendWeightsError,
    EncoderError,
    EncoderSpec,
    HyperParams,
    PretrainedBackend,
    ToyParams,
    hashed_ngram_features,
    load_model,
    save_model,
    toy_forward_backward,
)
from arahate.labels import Label

from conftest import class_word, make_separable_corpus

TOY = EncoderSpec("toy")
HP = HyperParams(epochs=5, batch_size=8, learning_rate=0.1, seed=1)


def random_batch(rng, n_rows=5, n_buckets=17):
    features = np.abs(rng.normal(size=(n_rows, n_buckets)))
    labels = rng.integers(0, 5, size=n_rows)
    return features, labels


def random_params(rng, n_buckets=17):
    return ToyParams(
        weights=rng.normal(size=(5, n_buckets)),
        bias=rng.normal(size=5),
        n_buckets=n_buckets,
    )


def finite_difference(params: ToyParams, features, labels, h=1e-6):
    grads = []
    for arr in (params.weights, params.bias):
        grad = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            original = arr[idx]
            arr[idx] = original + h
            up, _ = toy_forward_backward(params, features, labels)
            arr[idx] = original - h
            down, _ = toy_forward_backward(params, features, labels)
            arr[idx] = original
            grad[idx] = (up - down) / (2 * h)
        grads.append(grad)
    return tuple(grads)


def max_relative_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-4)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


class TestHyperParams:
    @pytest.mark.parametrize(
        "epochs,batch,lr",
        [(4, 16, 1e-5), (2, 8, 1e-5), (3, 8, 1e-5)],  # published optima roster
    )
    def test_published_optima_are_valid(self, epochs, batch, lr):
        hp = HyperParams(epochs=epochs, batch_size=batch, learning_rate=lr)
        assert hp.epochs == epochs

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epochs": 0, "batch_size": 8, "learning_rate": 1e-5},
            {"epochs": 1, "batch_size": 0, "learning_rate": 1e-5},
            {"epochs": 1, "batch_size": 8, "learning_rate": 0.0},
            {"epochs": 1, "batch_size": 8, "learning_rate": -1e-5},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(EncoderError):
            HyperParams(**kwargs)


class TestEncoderSpec:
    def test_unknown_backend_rejected(self):
        with pytest.raises(EncoderError, match="unknown backend"):
            EncoderSpec("no-such-backend")

    def test_max_tokens_capped_at_backend_limit(self):
        assert EncoderSpec("toy", max_sequence_tokens=10_000).max_sequence_tokens == 512

    def test_registry_lists_roster(self):
        keys = encoder.backend_keys()
        assert "toy" in keys
        assert "bert-base-arabertv02-twitter" in keys
        assert "bert-large-arabertv02-twitter" in keys
        assert "MARBERT" in keys


class TestToyForwardBackward:
    def test_zero_params_uniform_loss(self):
        rng = np.random.default_rng(0)
        features, labels = random_batch(rng)
        params = ToyParams(weights=np.zeros((5, 17)), bias=np.zeros(5), n_buckets=17)
        loss, _ = toy_forward_backward(params, features, labels)
        assert loss == pytest.approx(np.log(5), abs=1e-12)

    def test_perfect_prediction_zero_loss(self):
        params = ToyParams(weights=np.zeros((5, 3)), bias=np.array([1e4, 0, 0, 0, 0.0]))
        features = np.zeros((1, 3))
        loss, _ = toy_forward_backward(params, features, [0])
        assert loss == 0.0

    def test_gradient_matches_finite_differences(self):
        worst = 0.0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            params = random_params(rng)
            features, labels = random_batch(rng)
            _, analytic = toy_forward_backward(params, features, labels)
            numeric = finite_difference(params, features, labels)
            worst = max(worst, max_relative_error(analytic, numeric))
        assert worst < 1e-4

    def test_gradient_matches_on_sparse_features(self):
        rng = np.random.default_rng(99)
        texts = ["".join(rng.choice(list("ابجدهو"), size=8)) for _ in range(4)]
        features = hashed_ngram_features(texts, n_buckets=17).toarray()
        labels = rng.integers(0, 5, size=4)
        params = random_params(rng)
        _, analytic = toy_forward_backward(params, features, labels)
        numeric = finite_difference(params, features, labels)
        assert max_relative_error(analytic, numeric) < 1e-4

    def test_non_finite_params_rejected(self):
        params = ToyParams(weights=np.full((5, 3), np.nan), bias=np.zeros(5))
        with pytest.raises(EncoderError, match="non-finite"):
            toy_forward_backward(params, np.zeros((1, 3)), [0])


class TestFeaturization:
    def test_deterministic_across_calls(self):
        texts = ["نص عربي قصير", "اخر"]
        a = hashed_ngram_features(texts).toarray()
        b = hashed_ngram_features(texts).toarray()
        assert np.array_equal(a, b)

    def test_short_text_zero_row(self):
        row = hashed_ngram_features(["اب"], n_buckets=16).toarray()
        assert row.sum() == 0

    def test_truncation_limits_tokens(self):
        long_text = " ".join(["كلمه"] * 50)
        short = hashed_ngram_features([" ".join(["كلمه"] * 3)], n_buckets=64, max_tokens=3)
        truncated = hashed_ngram_features([long_text], n_buckets=64, max_tokens=3)
        assert np.array_equal(short.toarray(), truncated.toarray())


class TestFit:
    def test_training_loss_strictly_decreases(self):
        rows = make_separable_corpus(n_per_class=20, seed=1)
        model = encoder.fit(TOY, HP, rows)
        assert len(model.epoch_losses) == HP.epochs
        assert all(a > b for a, b in zip(model.epoch_losses, model.epoch_losses[1:]))

    def test_single_class_training_set_rejected(self):
        rows = [
            row for row in make_separable_corpus(n_per_class=5, seed=2) if row.label == Label.NH
        ]
        with pytest.raises(EncoderError, match="single class"):
            encoder.fit(TOY, HP, rows)

    def test_unnormalized_rows_rejected(self):
        rows = make_separable_corpus(n_per_class=3, seed=3, normalized=False)
        with pytest.raises(EncoderError, match="normalize"):
            encoder.fit(TOY, HP, rows)

    def test_seed_determinism(self):
        rows = make_separable_corpus(n_per_class=10, seed=4)
        m1 = encoder.fit(TOY, HP, rows)
        m2 = encoder.fit(TOY, HP, rows)
        assert m1.train_fingerprint == m2.train_fingerprint
        texts = [row.norm_text for row in rows[:7]]
        assert np.array_equal(
            encoder.predict_proba(m1, texts).probs, encoder.predict_proba(m2, texts).probs
        )

    def test_different_seed_changes_fingerprint(self):
        rows = make_separable_corpus(n_per_class=10, seed=4)
        m1 = encoder.fit(TOY, HP, rows)
        m2 = encoder.fit(TOY, HyperParams(5, 8, 0.1, seed=2), rows)
        assert m1.train_fingerprint != m2.train_fingerprint


@pytest.fixture(scope="module")
def model():
    return encoder.fit(TOY, HP, make_separable_corpus(n_per_class=20, seed=5))


class TestPredictProba:
    def test_rows_sum_to_one(self, model):
        texts = [row.norm_text for row in make_separable_corpus(n_per_class=2, seed=6)]
        probs = encoder.predict_proba(model, texts).probs
        assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-6
        assert (probs >= 0).all()

    def test_probe_word_from_class_vocabulary(self, model):
        rng = np.random.default_rng(7)
        probe = class_word(Label.Re, rng)
        assert encoder.predict_proba(model, [probe]).argmax_labels() == [Label.Re]

    def test_empty_text_list_gives_empty_matrix(self, model):
        matrix = encoder.predict_proba(model, [])
        assert matrix.probs.shape == (0, 5)
        assert matrix.ids == []

    def test_duplicate_inputs_identical_rows(self, model):
        probs = encoder.predict_proba(model, ["نص نص نص", "نص نص نص"]).probs
        assert np.array_equal(probs[0], probs[1])

    def test_batch_invariance(self, model):
        # Padding/batching must never change per-row predictions.
        texts = [row.norm_text for row in make_separable_corpus(n_per_class=3, seed=8)]
        batched = encoder.predict_proba(model, texts).probs
        single = np.vstack([encoder.predict_proba(model, [t]).probs for t in texts])
        assert np.abs(batched - single).max() < 1e-5

    def test_ids_attached(self, model):
        matrix = encoder.predict_proba(model, ["نص اول", "نص ثاني"], ids=["a", "b"])
        assert matrix.ids == ["a", "b"]


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        rows = make_separable_corpus(n_per_class=10, seed=9)
        model = encoder.fit(TOY, HP, rows)
        directory = save_model(model, tmp_path / "model")
        assert (directory / "manifest.txt").exists()
        assert (directory / "weights.npz").exists()
        loaded = load_model(directory)
        assert loaded.train_fingerprint == model.train_fingerprint
        assert loaded.hyperparams == model.hyperparams
        texts = [row.norm_text for row in rows[:5]]
        assert np.array_equal(
            encoder.predict_proba(loaded, texts).probs,
            encoder.predict_proba(model, texts).probs,
        )

    def test_load_rejects_non_artifact_dir(self, tmp_path):
        with pytest.raises(EncoderError, match="manifest"):
            load_model(tmp_path)


class TestPretrainedErrorTaxonomy:
    def test_not_installed_is_distinguished(self):
        def broken_import():
            raise BackendNotInstalledError("backend 'x' requires the 'pretrained' extra")

        backend = PretrainedBackend("x", "org/x", runtime_importer=broken_import)
        rows = make_separable_corpus(n_per_class=2, seed=10)
        with pytest.raises(BackendNotInstalledError):
            backend.fit(EncoderSpec("toy"), HP, rows)

    def test_download_failure_is_distinguished(self):
        class FakeTorch:
            @staticmethod
            def manual_seed(seed):
                pass

        def fake_import():
            return FakeTorch, None

        def failing_loader():
            raise OSError("connection refused")

        backend = PretrainedBackend(
            "x", "org/x", runtime_importer=fake_import, weight_loader=failing_loader
        )
        rows = make_separable_corpus(n_per_class=2, seed=10)
        with pytest.raises(BackendWeightsError, match="download failed or local cache"):
            backend.fit(EncoderSpec("toy"), HP, rows)
