"""Trainable-classifier contract plus a deterministic reference backend.

Every backend registered here exposes the same two operations: fine-tune on
labelled rows (``fit``) and produce an N x 5 class-probability matrix
(``predict_proba``). The bundled ``toy`` backend is a linear softmax model
over hashed character 3-to-5-gram counts (2^16 buckets) trained with
mini-batch gradient descent: no heavyweight dependencies, bit-reproducible
under a fixed seed, and fast enough to exercise the whole pipeline in tests.

Three pretrained encoder slots are registered by name; their weights are
fetched by the run environment (never vendored), so using them requires the
``pretrained`` extra plus network or cache access to the weights.
"""

from __future__ import annotations

import hashlib
import json
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from .corpus import LabeledText
from .ensemble import ProbabilityMatrix
from .errors import ArahateError
from .labels import LABEL_INDEX, N_CLASSES

log = logging.getLogger(__name__)

DEFAULT_MAX_TOKENS = 512
TOY_BACKEND_KEY = "toy"
TOY_DEFAULT_BUCKETS = 2**16
TOY_NGRAM_SIZES = (3, 4, 5)

# Backend names from the fine-tuned model roster, mapped to the hub ids the
# run environment resolves them from.
PRETRAINED_MODEL_IDS = {
    "bert-base-arabertv02-twitter": "aubmindlab/bert-base-arabertv02-twitter",
    "bert-large-arabertv02-twitter": "aubmindlab/bert-large-arabertv02-twitter",
    "MARBERT": "UBC-NLP/MARBERT",
}

ARTIFACT_MANIFEST = "manifest.txt"
ARTIFACT_WEIGHTS = "weights.npz"


class EncoderError(ArahateError):
    pass


class BackendNotInstalledError(EncoderError):
    """The backend's runtime dependencies are missing from the environment."""


class BackendWeightsError(EncoderError):
    """Dependencies are present but the pretrained weights could not be fetched."""


@dataclass(frozen=True)
class HyperParams:
    """Fine-tuning knobs: epochs / batch size / learning rate, plus the seed."""

    epochs: int
    batch_size: int
    learning_rate: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise EncoderError("epochs must be >= 1")
        if self.batch_size < 1:
            raise EncoderError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise EncoderError("learning_rate must be positive")


@dataclass(frozen=True)
class EncoderSpec:
    """Which backend to use and how many tokens it may see per input."""

    backend_key: str
    max_sequence_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        backend = get_backend(self.backend_key)  # unknown key fails here
        if self.max_sequence_tokens < 1:
            raise EncoderError("max_sequence_tokens must be >= 1")
        if self.max_sequence_tokens > backend.token_limit:
            # Inputs are padded to the longest text in a batch, but never past
            # the backend's own sequence limit.
            object.__setattr__(self, "max_sequence_tokens", backend.token_limit)


@dataclass
class ToyParams:
    """Linear softmax parameters over hashed n-gram buckets."""

    weights: np.ndarray  # (K, D)
    bias: np.ndarray  # (K,)
    n_buckets: int = TOY_DEFAULT_BUCKETS
    ngram_sizes: tuple[int, ...] = TOY_NGRAM_SIZES


@dataclass
class TrainedModel:
    """A fitted classifier; predict is a pure function of (params, input)."""

    spec: EncoderSpec
    hyperparams: HyperParams
    params: object
    train_fingerprint: str
    epoch_losses: list[float] = field(default_factory=list)
    artifact_dir: str | None = None


def _truncate(text: str, max_tokens: int) -> str:
    tokens = text.split()
    if len(tokens) <= max_tokens:
        return text
    return " ".join(tokens[:max_tokens])


def hashed_ngram_features(
    texts: Sequence[str],
    n_buckets: int = TOY_DEFAULT_BUCKETS,
    ngram_sizes: Sequence[int] = TOY_NGRAM_SIZES,
    max_tokens: int | None = None,
) -> sparse.csr_matrix:
    """Hashed character n-gram counts per row.

    Hashing uses CRC-32 of the UTF-8 n-gram bytes, so features are stable
    across processes and platforms. Texts shorter than the smallest n-gram
    yield an all-zero row (predictions then come from the bias alone).
    """
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for text in texts:
        if max_tokens is not None:
            text = _truncate(text, max_tokens)
        counts: dict[int, int] = {}
        for n in ngram_sizes:
            for i in range(len(text) - n + 1):
                bucket = zlib.crc32(text[i : i + n].encode("utf-8")) % n_buckets
                counts[bucket] = counts.get(bucket, 0) + 1
        for bucket in sorted(counts):
            indices.append(bucket)
            data.append(float(counts[bucket]))
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (
            np.asarray(data, dtype=float),
            np.asarray(indices, dtype=np.int64),
            np.asarray(indptr, dtype=np.int64),
        ),
        shape=(len(texts), n_buckets),
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def toy_forward_backward(
    params: ToyParams, features, labels: Sequence[int]
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Mean softmax cross-entropy over a batch plus its analytic gradient.

    ``features`` is an (N, D) matrix (dense or CSR) of hashed n-gram counts;
    ``labels`` are class indices. Returns (loss, (grad_weights, grad_bias)).
    """
    if not (np.isfinite(params.weights).all() and np.isfinite(params.bias).all()):
        raise EncoderError("non-finite model parameters")
    y = np.asarray(labels, dtype=int)
    n = features.shape[0]
    if n == 0:
        raise EncoderError("empty batch")
    logits = features @ params.weights.T + params.bias
    probs = _softmax(np.asarray(logits))
    loss = float(-np.log(probs[np.arange(n), y]).mean())
    grad_out = probs
    grad_out[np.arange(n), y] -= 1.0
    grad_out /= n
    grad_weights = np.asarray((features.T @ grad_out).T)
    grad_bias = grad_out.sum(axis=0)
    return loss, (grad_weights, grad_bias)


def train_fingerprint(spec: EncoderSpec, hp: HyperParams, train_ids: Sequence[str]) -> str:
    payload = json.dumps(
        {
            "backend": spec.backend_key,
            "max_sequence_tokens": spec.max_sequence_tokens,
            "epochs": hp.epochs,
            "batch_size": hp.batch_size,
            "learning_rate": hp.learning_rate,
            "seed": hp.seed,
            "train_ids": sorted(train_ids),
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _validate_training_rows(train: Sequence[LabeledText]) -> None:
    if not train:
        raise EncoderError("empty training set")
    for row in train:
        if not row.norm_text:
            raise EncoderError(
                f"row {row.id!r} is not normalized (or normalized to empty); "
                "normalize the corpus and drop flagged rows before training"
            )
    if len({row.label for row in train}) < 2:
        raise EncoderError("training set covers a single class; need at least two")


class ToyBackend:
    """Hashed character n-gram bag-of-features + linear softmax head."""

    key = TOY_BACKEND_KEY
    token_limit = DEFAULT_MAX_TOKENS

    def __init__(self, n_buckets: int = TOY_DEFAULT_BUCKETS, ngram_sizes=TOY_NGRAM_SIZES):
        self.n_buckets = n_buckets
        self.ngram_sizes = tuple(ngram_sizes)

    def fit(self, spec: EncoderSpec, hp: HyperParams, train: Sequence[LabeledText]) -> TrainedModel:
        texts = [row.norm_text or "" for row in train]
        y = np.asarray([LABEL_INDEX[row.label] for row in train], dtype=int)
        features = hashed_ngram_features(
            texts, self.n_buckets, self.ngram_sizes, max_tokens=spec.max_sequence_tokens
        )
        params = ToyParams(
            weights=np.zeros((N_CLASSES, self.n_buckets)),
            bias=np.zeros(N_CLASSES),
            n_buckets=self.n_buckets,
            ngram_sizes=self.ngram_sizes,
        )
        rng = np.random.default_rng(hp.seed)
        n = features.shape[0]
        losses = []
        for _ in range(hp.epochs):
            order = rng.permutation(n)
            running = 0.0
            for start in range(0, n, hp.batch_size):
                batch = order[start : start + hp.batch_size]
                loss, (grad_w, grad_b) = toy_forward_backward(params, features[batch], y[batch])
                params.weights -= hp.learning_rate * grad_w
                params.bias -= hp.learning_rate * grad_b
                running += loss * len(batch)
            losses.append(running / n)
        return TrainedModel(
            spec=spec,
            hyperparams=hp,
            params=params,
            train_fingerprint=train_fingerprint(spec, hp, [row.id for row in train]),
            epoch_losses=losses,
        )

    def predict_proba_array(self, model: TrainedModel, texts: Sequence[str]) -> np.ndarray:
        params = model.params
        if not isinstance(params, ToyParams):
            raise EncoderError("model was not trained by the toy backend")
        if not texts:
            return np.zeros((0, N_CLASSES))
        features = hashed_ngram_features(
            texts,
            params.n_buckets,
            params.ngram_sizes,
            max_tokens=model.spec.max_sequence_tokens,
        )
        return _softmax(np.asarray(features @ params.weights.T + params.bias))

    def save(self, model: TrainedModel, directory: Path) -> None:
        params = model.params
        np.savez(
            directory / ARTIFACT_WEIGHTS, weights=params.weights, bias=params.bias
        )
        _write_manifest(
            directory,
            model,
            extra={
                "n_buckets": str(params.n_buckets),
                "ngram_sizes": ",".join(str(n) for n in params.ngram_sizes),
            },
        )

    def load(self, directory: Path, manifest: dict[str, str]) -> TrainedModel:
        blob = np.load(directory / ARTIFACT_WEIGHTS)
        params = ToyParams(
            weights=blob["weights"],
            bias=blob["bias"],
            n_buckets=int(manifest["n_buckets"]),
            ngram_sizes=tuple(int(n) for n in manifest["ngram_sizes"].split(",")),
        )
        return _model_from_manifest(manifest, params, directory)


class PretrainedBackend:
    """Adapter slot for a pretrained transformer encoder with a 5-way head.

    The actual runtime (torch + transformers) and the weights are supplied by
    the environment; both loaders are injectable so the error taxonomy stays
    testable without either.
    """

    token_limit = DEFAULT_MAX_TOKENS

    def __init__(
        self,
        key: str,
        model_id: str,
        runtime_importer: Callable | None = None,
        weight_loader: Callable | None = None,
    ):
        self.key = key
        self.model_id = model_id
        self._runtime_importer = runtime_importer or self._import_runtime
        self._weight_loader = weight_loader

    def _import_runtime(self):
        try:
            import torch
            import transformers
        except ImportError as exc:
            raise BackendNotInstalledError(
                f"backend {self.key!r} requires the 'pretrained' extra "
                f"(torch + transformers): {exc}"
            ) from exc
        return torch, transformers

    def _load_pretrained(self, transformers):
        loader = self._weight_loader
        try:
            if loader is not None:
                return loader()
            tokenizer = transformers.AutoTokenizer.from_pretrained(self.model_id)
            model = transformers.AutoModelForSequenceClassification.from_pretrained(
                self.model_id, num_labels=N_CLASSES
            )
            return tokenizer, model
        except (BackendNotInstalledError, BackendWeightsError):
            raise
        except Exception as exc:
            raise BackendWeightsError(
                f"backend {self.key!r}: could not fetch weights for {self.model_id!r} "
                f"(download failed or local cache missing): {exc}"
            ) from exc

    def fit(self, spec: EncoderSpec, hp: HyperParams, train: Sequence[LabeledText]) -> TrainedModel:
        torch, transformers = self._runtime_importer()
        tokenizer, model = self._load_pretrained(transformers)
        torch.manual_seed(hp.seed)
        texts = [row.norm_text or "" for row in train]
        labels = torch.tensor([LABEL_INDEX[row.label] for row in train])
        optimizer = torch.optim.AdamW(model.parameters(), lr=hp.learning_rate)
        model.train()
        order = np.random.default_rng(hp.seed)
        losses = []
        n = len(texts)
        for _ in range(hp.epochs):
            perm = order.permutation(n)
            running = 0.0
            for start in range(0, n, hp.batch_size):
                idx = perm[start : start + hp.batch_size]
                # Pad to the longest text in the batch, capped at the backend limit.
                batch = tokenizer(
                    [texts[i] for i in idx],
                    padding="longest",
                    truncation=True,
                    max_length=spec.max_sequence_tokens,
                    return_tensors="pt",
                )
                out = model(**batch, labels=labels[idx])
                optimizer.zero_grad()
                out.loss.backward()
                optimizer.step()
                running += float(out.loss) * len(idx)
            losses.append(running / n)
        return TrainedModel(
            spec=spec,
            hyperparams=hp,
            params=(tokenizer, model),
            train_fingerprint=train_fingerprint(spec, hp, [row.id for row in train]),
            epoch_losses=losses,
        )

    def predict_proba_array(self, model: TrainedModel, texts: Sequence[str]) -> np.ndarray:
        torch, _ = self._runtime_importer()
        tokenizer, net = model.params
        if not texts:
            return np.zeros((0, N_CLASSES))
        net.eval()
        rows = []
        with torch.no_grad():
            for start in range(0, len(texts), model.hyperparams.batch_size):
                chunk = list(texts[start : start + model.hyperparams.batch_size])
                batch = tokenizer(
                    chunk,
                    padding="longest",
                    truncation=True,
                    max_length=model.spec.max_sequence_tokens,
                    return_tensors="pt",
                )
                logits = net(**batch).logits
                rows.append(torch.softmax(logits, dim=-1).cpu().numpy())
        return np.concatenate(rows, axis=0)

    def save(self, model: TrainedModel, directory: Path) -> None:
        tokenizer, net = model.params
        tokenizer.save_pretrained(directory / "hf")
        net.save_pretrained(directory / "hf")
        _write_manifest(directory, model, extra={"model_id": self.model_id})

    def load(self, directory: Path, manifest: dict[str, str]) -> TrainedModel:
        _, transformers = self._runtime_importer()
        try:
            tokenizer = transformers.AutoTokenizer.from_pretrained(directory / "hf")
            net = transformers.AutoModelForSequenceClassification.from_pretrained(
                directory / "hf"
            )
        except Exception as exc:
            raise BackendWeightsError(f"cannot load weights from {directory}: {exc}") from exc
        return _model_from_manifest(manifest, (tokenizer, net), directory)


_REGISTRY: dict[str, object] = {}


def register_backend(backend) -> None:
    _REGISTRY[backend.key] = backend


def backend_keys() -> list[str]:
    return sorted(_REGISTRY)


def get_backend(key: str):
    try:
        return _REGISTRY[key]
    except KeyError:
        raise EncoderError(
            f"unknown backend key {key!r}; registered: {', '.join(backend_keys())}"
        ) from None


register_backend(ToyBackend())
for _key, _model_id in PRETRAINED_MODEL_IDS.items():
    register_backend(PretrainedBackend(_key, _model_id))


def fit(spec: EncoderSpec, hp: HyperParams, train: Sequence[LabeledText]) -> TrainedModel:
    """Fine-tune the spec'd backend on normalized rows covering >= 2 classes."""
    backend = get_backend(spec.backend_key)
    _validate_training_rows(train)
    return backend.fit(spec, hp, list(train))


def predict_proba(
    model: TrainedModel, texts: Sequence[str], ids: Sequence[str] | None = None
) -> ProbabilityMatrix:
    """N x 5 class probabilities; an empty text list gives an empty matrix."""
    backend = get_backend(model.spec.backend_key)
    probs = backend.predict_proba_array(model, list(texts))
    if ids is None:
        ids = [str(i) for i in range(len(texts))]
    return ProbabilityMatrix(ids=list(ids), probs=probs)


def _write_manifest(directory: Path, model: TrainedModel, extra: dict[str, str]) -> None:
    lines = {
        "format_version": "1",
        "backend": model.spec.backend_key,
        "max_sequence_tokens": str(model.spec.max_sequence_tokens),
        "epochs": str(model.hyperparams.epochs),
        "batch_size": str(model.hyperparams.batch_size),
        "learning_rate": repr(model.hyperparams.learning_rate),
        "seed": str(model.hyperparams.seed),
        "fingerprint": model.train_fingerprint,
    }
    lines.update(extra)
    content = "".join(f"{k}={v}\n" for k, v in lines.items())
    (directory / ARTIFACT_MANIFEST).write_text(content, encoding="utf-8")


def _read_manifest(directory: Path) -> dict[str, str]:
    path = directory / ARTIFACT_MANIFEST
    if not path.exists():
        raise EncoderError(f"not a model artifact directory (no {ARTIFACT_MANIFEST}): {directory}")
    manifest = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line and "=" in line:
            key, value = line.split("=", 1)
            manifest[key] = value
    return manifest


def _model_from_manifest(manifest: dict[str, str], params, directory: Path) -> TrainedModel:
    spec = EncoderSpec(
        backend_key=manifest["backend"],
        max_sequence_tokens=int(manifest["max_sequence_tokens"]),
    )
    hp = HyperParams(
        epochs=int(manifest["epochs"]),
        batch_size=int(manifest["batch_size"]),
        learning_rate=float(manifest["learning_rate"]),
        seed=int(manifest["seed"]),
    )
    return TrainedModel(
        spec=spec,
        hyperparams=hp,
        params=params,
        train_fingerprint=manifest["fingerprint"],
        artifact_dir=str(directory),
    )


def save_model(model: TrainedModel, directory: str | Path) -> Path:
    """Persist a model artifact: weights blob + key=value manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    backend = get_backend(model.spec.backend_key)
    backend.save(model, directory)
    model.artifact_dir = str(directory)
    return directory


def load_model(directory: str | Path) -> TrainedModel:
    directory = Path(directory)
    manifest = _read_manifest(directory)
    backend = get_backend(manifest.get("backend", ""))
    return backend.load(directory, manifest)
