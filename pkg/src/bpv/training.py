"""Training and inference for paragraph vector models.

The hot loops live in numba kernels (:mod:`bpv._kernels`); this module
owns configuration, the proposal sampler, AdaGrad, epoch orchestration,
and the numpy reference ops used by correctness tests.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .corpus import CorpusDocument, Vocabulary
from .errors import (
    ConfigError,
    DivergedError,
    EmptyCorpus,
    IncompatibleModel,
    NonFiniteGradient,
)
from .models import (
    BINARY_PVDBOW,
    BINARY_PVDM,
    NEURAL_KINDS,
    PLAIN_PVDBOW,
    REAL_BINARY_PVDBOW,
    ModelParams,
    _restricted_softmax,
    init_params,
)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


@dataclass
class TrainConfig:
    """Hyperparameters shared by training and inference.

    ``dropout`` only applies while shared parameters are being learned;
    inference always runs with dropout off. ``negative_samples = 0``
    selects the exact full softmax, a test-only mode that is quadratic
    in the vocabulary.
    """

    epochs: int = 10
    learning_rate: float = 0.1
    adagrad_epsilon: float = 1e-8
    dropout: float = 0.1
    negative_samples: int = 64
    context_window: int = 1
    proposal_power: float = 0.75
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (np.isfinite(self.adagrad_epsilon) and self.adagrad_epsilon > 0):
            raise ConfigError(f"adagrad_epsilon must be positive, got {self.adagrad_epsilon}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.negative_samples < 0:
            raise ConfigError(f"negative_samples must be >= 0, got {self.negative_samples}")
        if self.context_window < 1:
            raise ConfigError(f"context_window must be >= 1, got {self.context_window}")
        if self.proposal_power < 0:
            raise ConfigError(f"proposal_power must be >= 0, got {self.proposal_power}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    seconds: float
    updates: int


def write_train_report(path: str, stats: Sequence[EpochStats], zero_seconds: bool = False) -> None:
    """One JSON object per epoch: {"epoch", "mean_loss", "seconds"}.

    ``zero_seconds`` writes 0.0 wall times so deterministic runs produce
    byte-identical reports.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for st in stats:
            record = {
                "epoch": st.epoch,
                "mean_loss": st.mean_loss,
                "seconds": 0.0 if zero_seconds else st.seconds,
            }
            fh.write(json.dumps(record) + "\n")


# ---------------------------------------------------------------------------
# AdaGrad and dropout reference ops
# ---------------------------------------------------------------------------


def adagrad_update(
    param: np.ndarray,
    grad: np.ndarray,
    state: np.ndarray,
    lr: float,
    eps: float,
    rows: np.ndarray | None = None,
) -> None:
    """In-place AdaGrad step: state += g^2; param -= lr * g / (eps + sqrt(state)).

    The step uses the freshly accumulated state, so the very first update
    moves by exactly lr in each nonzero coordinate. With ``rows`` given,
    ``param`` and ``state`` are matrices and only those rows are touched;
    rows must be unique (merge duplicate-row gradients beforehand).
    """
    grad = np.asarray(grad)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("gradient contains NaN or infinity")
    if rows is None:
        state += grad * grad
        param -= lr * grad / (eps + np.sqrt(state))
        return
    rows = np.asarray(rows)
    if len(np.unique(rows)) != len(rows):
        raise ValueError("duplicate rows in sparse AdaGrad update")
    state[rows] += grad * grad
    param[rows] -= lr * grad / (eps + np.sqrt(state[rows]))


def dropout_mask(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: entries are 0 with probability p, else 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout must be in [0, 1), got {p}")
    if p == 0.0:
        return np.ones(n, dtype=np.float64)
    return np.where(rng.random(n) >= p, 1.0 / (1.0 - p), 0.0)


def dropout_apply(vec: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Apply inverted dropout; the expected output equals the input."""
    vec = np.asarray(vec, dtype=np.float64)
    return vec * dropout_mask(vec.shape[-1], p, rng)


# ---------------------------------------------------------------------------
# Proposal sampler
# ---------------------------------------------------------------------------


def _build_alias(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias table construction for O(1) categorical draws."""
    n = probs.shape[0]
    alias_prob = np.ones(n, dtype=np.float64)
    alias_idx = np.arange(n, dtype=np.int64)
    work = probs * n
    small = [i for i in range(n) if work[i] < 1.0]
    large = [i for i in range(n) if work[i] >= 1.0]
    while small and large:
        s = small.pop()
        l = large.pop()
        alias_prob[s] = work[s]
        alias_idx[s] = l
        work[l] -= 1.0 - work[s]
        if work[l] < 1.0:
            small.append(l)
        else:
            large.append(l)
    # leftovers are numerically ~1; they keep alias_prob = 1
    return alias_prob, alias_idx


@dataclass
class SamplerTable:
    """Unigram-power proposal distribution with an alias table."""

    probs: np.ndarray  # (V,) float64, strictly positive, sums to 1
    alias_prob: np.ndarray
    alias_idx: np.ndarray

    @classmethod
    def from_counts(cls, counts: np.ndarray, power: float = 0.75) -> "SamplerTable":
        counts = np.asarray(counts, dtype=np.float64)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("counts must be a nonempty 1-D array")
        if np.any(counts <= 0):
            raise ValueError("all term counts must be positive")
        weights = counts**power
        probs = weights / weights.sum()
        total = probs.sum()
        if abs(total - 1.0) > 1e-9 or np.any(probs <= 0):
            raise ValueError("proposal probabilities failed normalization")
        alias_prob, alias_idx = _build_alias(probs)
        return cls(probs=probs, alias_prob=alias_prob, alias_idx=alias_idx)

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Vectorized draws through the alias table (numpy stream)."""
        u1 = rng.random(n)
        u2 = rng.random(n)
        j = np.minimum((u1 * self.size).astype(np.int64), self.size - 1)
        return np.where(u2 < self.alias_prob[j], j, self.alias_idx[j])


def sampled_softmax_loss_grad(
    code: np.ndarray,
    target: int,
    sample_ids: np.ndarray,
    proposal_probs: np.ndarray,
    n_samples: int,
    weights: np.ndarray,
    bias: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Importance-sampled softmax over {target} + proposal draws.

    Sampled logits are corrected by -log(n_samples * Q(id)); the target
    logit is used as-is. Draws equal to the target are dropped (the
    target already participates); duplicate draws stay as separate
    entries. Returns ``(loss, candidate_ids, candidate_grad, grad_code)``
    where row gradients are ``candidate_grad[i] * code`` and duplicate
    rows add.
    """
    sample_ids = np.asarray(sample_ids, dtype=np.int64)
    proposal_probs = np.asarray(proposal_probs, dtype=np.float64)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    kept = sample_ids[sample_ids != target]
    ids = np.concatenate(([target], kept))
    corrections = np.concatenate(
        ([0.0], np.log(n_samples * proposal_probs[kept]))
    )
    code = np.asarray(code, dtype=np.float64)
    loss, g, grad_code = _restricted_softmax(code, ids, corrections, weights, bias)
    return loss, ids, g, grad_code


def full_softmax_loss_grad(
    code: np.ndarray, target: int, weights: np.ndarray, bias: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Exact softmax over the whole vocabulary (test-only mode)."""
    from .models import full_candidates

    ids, corrections = full_candidates(weights.shape[0], target)
    code = np.asarray(code, dtype=np.float64)
    loss, g, grad_code = _restricted_softmax(code, ids, corrections, weights, bias)
    return loss, ids, g, grad_code


# ---------------------------------------------------------------------------
# Seeds and shard running
# ---------------------------------------------------------------------------


def _doc_seed(doc_id: str, seed: int) -> int:
    digest = hashlib.blake2b(doc_id.encode("utf-8"), digest_size=8).digest()
    h = int.from_bytes(digest, "little")
    return h ^ int(_kernels.mix64(np.uint64(seed & _MASK64)))


def _doc_seeds(doc_ids: Sequence[str], seed: int) -> np.ndarray:
    return np.array([_doc_seed(d, seed) for d in doc_ids], dtype=np.uint64)


def _salt(seed: int, stream: int) -> np.uint64:
    base = ((seed & _MASK64) * _GOLDEN + stream) & _MASK64
    # mix64 unboxes to a Python int; re-wrap so kernels see a uint64
    return np.uint64(_kernels.mix64(np.uint64(base)))


def _flatten(docs: Sequence[CorpusDocument]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    offsets = np.zeros(len(docs) + 1, dtype=np.int64)
    for i, doc in enumerate(docs):
        offsets[i + 1] = offsets[i] + doc.terms.size
    terms = np.zeros(offsets[-1], dtype=np.int32)
    for i, doc in enumerate(docs):
        terms[offsets[i] : offsets[i + 1]] = doc.terms
    n_words = np.array([doc.n_words for doc in docs], dtype=np.int64)
    return terms, offsets, n_words


def _check_term_ids(terms: np.ndarray, vocab_size: int) -> None:
    if terms.size and (terms.min() < 0 or terms.max() >= vocab_size):
        raise IncompatibleModel(
            f"corpus term ids outside [0, {vocab_size}); was the corpus "
            "encoded with a different vocabulary?"
        )


def _run_shards(fn: Callable, argsets: list[tuple]) -> None:
    if len(argsets) == 1:
        fn(*argsets[0])
        return
    threads = [threading.Thread(target=fn, args=args) for args in argsets]
    for t in threads:
        t.start()
    for t in threads:
        t.join()


_DUMMY_F32_2D = np.zeros((0, 0), dtype=np.float32)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def train(
    docs: Sequence[CorpusDocument],
    vocabulary: Vocabulary,
    kind: str,
    code_bits: int = 0,
    dim: int | None = None,
    word_dim: int | None = None,
    config: TrainConfig | None = None,
    checkpoint: Callable[[ModelParams, EpochStats], None] | None = None,
) -> tuple[ModelParams, list[EpochStats]]:
    """Fit a model on encoded documents.

    Documents are visited in a fresh random order each epoch, positions
    within a document in order. Shared parameters, per-document vectors,
    and all AdaGrad accumulators update in place via the kernels; with
    ``workers > 1`` shards run on threads over shared arrays without
    locks, so exact results are only reproducible at workers = 1.

    Returns the trained parameters (document rows follow the input doc
    order) and per-epoch statistics.
    """
    config = config or TrainConfig()
    config.validate()
    if not docs:
        raise EmptyCorpus("no documents to train on")
    if kind not in NEURAL_KINDS:
        raise ConfigError(f"unknown trainable kind {kind!r}")
    if kind == BINARY_PVDM and vocabulary.include_bigrams:
        raise ConfigError("binary-pvdm does not support bigram vocabularies")
    if config.negative_samples > 0 and vocabulary.size < 2:
        raise ConfigError("sampled softmax needs a vocabulary of at least 2 terms")

    params = init_params(
        kind,
        vocabulary,
        code_bits,
        dim=dim,
        word_dim=word_dim,
        context_window=config.context_window,
        doc_count=len(docs),
        seed=config.seed,
    )
    terms, offsets, n_words = _flatten(docs)
    _check_term_ids(terms, vocabulary.size)
    seeds = _doc_seeds([d.doc_id for d in docs], config.seed)
    sampler = SamplerTable.from_counts(vocabulary.counts, config.proposal_power)

    acc_doc = np.zeros_like(params.doc_embeddings)
    acc_w = np.zeros_like(params.softmax_weights)
    acc_b = np.zeros_like(params.softmax_bias)
    acc_proj = (
        np.zeros_like(params.projection) if params.projection is not None else _DUMMY_F32_2D
    )
    acc_word = (
        np.zeros_like(params.word_embeddings)
        if params.word_embeddings is not None
        else _DUMMY_F32_2D
    )
    proj = params.projection if params.projection is not None else _DUMMY_F32_2D

    order_rng = np.random.default_rng(config.seed)
    n_samples = int(config.negative_samples)
    stats: list[EpochStats] = []
    for epoch in range(config.epochs):
        t_start = time.perf_counter()
        order = order_rng.permutation(len(docs)).astype(np.int64)
        shards = np.array_split(order, config.workers)
        loss_out = np.zeros(config.workers, dtype=np.float64)
        count_out = np.zeros(config.workers, dtype=np.int64)
        salt = _salt(config.seed, epoch + 1)
        argsets = []
        for slot, shard in enumerate(shards):
            if kind == BINARY_PVDM:
                argsets.append(
                    (
                        params.doc_embeddings,
                        acc_doc,
                        params.word_embeddings,
                        acc_word,
                        params.softmax_weights,
                        params.softmax_bias,
                        acc_w,
                        acc_b,
                        terms,
                        offsets,
                        n_words,
                        config.context_window,
                        np.ascontiguousarray(shard),
                        seeds,
                        salt,
                        sampler.alias_prob,
                        sampler.alias_idx,
                        sampler.probs,
                        n_samples,
                        config.learning_rate,
                        config.adagrad_epsilon,
                        config.dropout,
                        loss_out,
                        count_out,
                        slot,
                    )
                )
            else:
                argsets.append(
                    (
                        params.doc_embeddings,
                        acc_doc,
                        proj,
                        acc_proj,
                        params.softmax_weights,
                        params.softmax_bias,
                        acc_w,
                        acc_b,
                        terms,
                        offsets,
                        np.ascontiguousarray(shard),
                        seeds,
                        salt,
                        sampler.alias_prob,
                        sampler.alias_idx,
                        sampler.probs,
                        n_samples,
                        config.learning_rate,
                        config.adagrad_epsilon,
                        config.dropout,
                        kind == REAL_BINARY_PVDBOW,
                        kind != PLAIN_PVDBOW,
                        loss_out,
                        count_out,
                        slot,
                    )
                )
        fn = _kernels.pvdm_train_shard if kind == BINARY_PVDM else _kernels.dbow_train_shard
        _run_shards(fn, argsets)
        elapsed = time.perf_counter() - t_start
        total_updates = int(count_out.sum())
        mean_loss = float(loss_out.sum() / max(total_updates, 1))
        if not np.isfinite(mean_loss):
            raise DivergedError(f"epoch {epoch + 1}: mean loss is not finite")
        for mat in (
            params.doc_embeddings,
            params.softmax_weights,
            params.softmax_bias,
            params.projection,
            params.word_embeddings,
        ):
            if mat is not None and not np.all(np.isfinite(mat)):
                raise DivergedError(
                    f"epoch {epoch + 1}: parameters left the finite range"
                )
        stats.append(EpochStats(epoch + 1, mean_loss, elapsed, total_updates))
        if checkpoint is not None:
            checkpoint(params, stats[-1])
    params.doc_ids = [d.doc_id for d in docs]
    return params, stats


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


@dataclass
class InferenceResult:
    """Codes and vectors for inferred documents.

    ``empty_ids`` lists documents that had no trainable positions (no
    in-vocabulary terms, or too few words to fill a context window);
    their codes come from the initialized vector and are flagged rather
    than raised.
    """

    doc_ids: list[str]
    vectors: np.ndarray  # (N, dim) float32
    code_words: np.ndarray | None  # (N, words_per_code) uint64
    code_width: int | None
    empty_ids: list[str] = field(default_factory=list)


def infer_codes(
    params: ModelParams,
    docs: Sequence[CorpusDocument],
    config: TrainConfig | None = None,
) -> InferenceResult:
    """Infer codes for unseen documents against frozen shared parameters.

    Each document gets a freshly initialized vector and AdaGrad
    accumulator; the training objective then runs for ``config.epochs``
    updating only that vector. Softmax weights, projection, and word
    embeddings are never written. Per-document seeding makes the result
    independent of batch composition and worker count.
    """
    config = config or TrainConfig()
    config.validate()
    if params.kind not in NEURAL_KINDS:
        raise IncompatibleModel(f"cannot infer with kind {params.kind!r}")
    if config.negative_samples > 0 and params.vocabulary.size < 2:
        raise ConfigError("sampled softmax needs a vocabulary of at least 2 terms")
    docs = list(docs)
    terms, offsets, n_words = _flatten(docs)
    _check_term_ids(terms, params.vocabulary.size)
    seeds = _doc_seeds([d.doc_id for d in docs], config.seed)
    sampler = SamplerTable.from_counts(params.vocabulary.counts, config.proposal_power)
    n = len(docs)
    vectors = np.zeros((n, params.dim), dtype=np.float32)
    salts = np.array(
        [_salt(config.seed, s) for s in range(config.epochs + 1)], dtype=np.uint64
    )
    window = params.context_window
    if params.kind == BINARY_PVDM:
        empty = [d.doc_id for d in docs if d.n_words <= window]
    else:
        empty = [d.doc_id for d in docs if d.terms.size == 0]

    indices = np.arange(n, dtype=np.int64)
    shards = [s for s in np.array_split(indices, config.workers)]
    n_samples = int(config.negative_samples)
    proj = params.projection if params.projection is not None else _DUMMY_F32_2D
    argsets = []
    for shard in shards:
        if params.kind == BINARY_PVDM:
            argsets.append(
                (
                    params.word_embeddings,
                    params.softmax_weights,
                    params.softmax_bias,
                    terms,
                    offsets,
                    n_words,
                    window,
                    np.ascontiguousarray(shard),
                    seeds,
                    salts,
                    sampler.alias_prob,
                    sampler.alias_idx,
                    sampler.probs,
                    n_samples,
                    config.learning_rate,
                    config.adagrad_epsilon,
                    vectors,
                )
            )
        else:
            argsets.append(
                (
                    proj,
                    params.softmax_weights,
                    params.softmax_bias,
                    terms,
                    offsets,
                    np.ascontiguousarray(shard),
                    seeds,
                    salts,
                    sampler.alias_prob,
                    sampler.alias_idx,
                    sampler.probs,
                    n_samples,
                    config.learning_rate,
                    config.adagrad_epsilon,
                    params.kind == REAL_BINARY_PVDBOW,
                    params.kind != PLAIN_PVDBOW,
                    vectors,
                )
            )
    fn = _kernels.pvdm_infer_shard if params.kind == BINARY_PVDM else _kernels.dbow_infer_shard
    _run_shards(fn, argsets)
    if not np.all(np.isfinite(vectors)):
        raise DivergedError("inferred vectors left the finite range")

    code_words = None
    width = None
    if params.kind in (BINARY_PVDBOW, BINARY_PVDM):
        bits = (vectors >= 0).astype(np.uint8)
        width = params.code_bits
    elif params.kind == REAL_BINARY_PVDBOW:
        projected = vectors.astype(np.float64) @ params.projection.astype(np.float64)
        bits = (projected >= 0).astype(np.uint8)
        width = params.code_bits
    else:
        bits = None
    if bits is not None:
        from .codes import pack_bits

        code_words = pack_bits(bits)
    return InferenceResult(
        doc_ids=[d.doc_id for d in docs],
        vectors=vectors,
        code_words=code_words,
        code_width=width,
        empty_ids=empty,
    )
