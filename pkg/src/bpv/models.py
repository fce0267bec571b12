"""Model math and the binary model container.

All models share one trick: a sigmoid layer whose activations are rounded
to {0, 1} on the forward pass, while gradients flow through the un-rounded
sigmoid on the backward pass. The rounded activations are the binary code.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from .corpus import Vocabulary
from .errors import ConfigError, IncompatibleModel, NonFiniteLoss
from .codes import BinaryCode, pack_bits

BINARY_PVDBOW = "binary-pvdbow"
BINARY_PVDM = "binary-pvdm"
REAL_BINARY_PVDBOW = "real-binary-pvdbow"
PLAIN_PVDBOW = "plain-pvdbow"
RHP = "rhp"
ITQ = "itq"

KIND_TAGS = {
    BINARY_PVDBOW: 0,
    BINARY_PVDM: 1,
    REAL_BINARY_PVDBOW: 2,
    PLAIN_PVDBOW: 3,
    RHP: 4,
    ITQ: 5,
}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}

NEURAL_KINDS = (BINARY_PVDBOW, BINARY_PVDM, REAL_BINARY_PVDBOW, PLAIN_PVDBOW)

_MAGIC = b"BPV1"
_INFERENCE_ONLY_FLAG = 0x80


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x)
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def binarize_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sigmoid followed by round-half-up to {0, 1}.

    An activation of exactly 0.5 (input 0) rounds to 1. Returns the bits
    and the un-rounded sigmoid values needed by the backward pass.

    >>> bits, _ = binarize_forward(np.array([-2.0, 0.0, 3.0]))
    >>> bits.tolist()
    [0, 1, 1]
    """
    s = sigmoid(x)
    bits = (np.asarray(x) >= 0).astype(np.uint8)
    return bits, s


def binarize_backward(grad_out: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Straight-through gradient: rounding is skipped, sigmoid is not.

    ``grad_out`` is the loss gradient with respect to the bits; the
    result is the gradient with respect to the pre-sigmoid input,
    ``grad_out * s * (1 - s)``.
    """
    return grad_out * s * (1.0 - s)


@dataclass
class ForwardResult:
    """Loss and gradients for one (document, target) pair.

    ``candidate_ids`` lists the softmax rows that participated (target
    first); ``candidate_grad`` holds dL/d(logit) per candidate, so the
    gradient for softmax row i is ``candidate_grad[i] * code`` and the
    bias gradient is ``candidate_grad[i]``. Duplicate candidate ids are
    separate softmax entries whose row gradients add.
    """

    loss: float
    code: np.ndarray  # softmax input (bits, or real activations)
    candidate_ids: np.ndarray
    candidate_grad: np.ndarray
    grad_doc: np.ndarray
    grad_projection: np.ndarray | None = None
    grad_context: np.ndarray | None = None


def _restricted_softmax(
    code: np.ndarray,
    candidate_ids: np.ndarray,
    corrections: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Softmax over a candidate subset with per-candidate logit corrections.

    The target must sit at index 0 with correction 0. Returns
    ``(loss, g, grad_code)`` with g = dL/d(logit) per candidate.
    """
    logits = weights[candidate_ids] @ code + bias[candidate_ids] - corrections
    m = logits.max()
    with np.errstate(invalid="ignore"):  # non-finite logits are caught below
        exps = np.exp(logits - m)
        z = exps.sum()
        loss = float(np.log(z) + m - logits[0])
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"softmax loss is not finite (max logit {m})")
    g = exps / z
    g[0] -= 1.0
    grad_code = g @ weights[candidate_ids]
    return loss, g, grad_code


def full_candidates(vocab_size: int, target: int) -> tuple[np.ndarray, np.ndarray]:
    """Candidate set covering the whole vocabulary, target first, no corrections."""
    others = np.concatenate(
        (np.arange(target, dtype=np.int64), np.arange(target + 1, vocab_size, dtype=np.int64))
    )
    ids = np.concatenate(([target], others))
    return ids, np.zeros(len(ids), dtype=np.float64)


def pvdbow_forward(
    doc_vector: np.ndarray,
    target: int,
    candidate_ids: np.ndarray,
    corrections: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray,
    binarize: bool = True,
) -> ForwardResult:
    """Predict one target term from a document vector.

    With ``binarize`` the document vector passes through the rounded
    sigmoid and the straight-through gradient; without it the raw vector
    feeds the softmax (the real-valued variant used to source vectors
    for hashing baselines).
    """
    if candidate_ids[0] != target:
        raise ValueError("candidate_ids[0] must be the target")
    doc_vector = np.asarray(doc_vector, dtype=np.float64)
    if binarize:
        bits, s = binarize_forward(doc_vector)
        code = bits.astype(np.float64)
    else:
        code = doc_vector
    loss, g, grad_code = _restricted_softmax(code, candidate_ids, corrections, weights, bias)
    grad_doc = binarize_backward(grad_code, s) if binarize else grad_code
    return ForwardResult(
        loss=loss,
        code=code,
        candidate_ids=np.asarray(candidate_ids),
        candidate_grad=g,
        grad_doc=grad_doc,
    )


def real_binary_forward(
    doc_vector: np.ndarray,
    projection: np.ndarray,
    target: int,
    candidate_ids: np.ndarray,
    corrections: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray,
) -> ForwardResult:
    """Variant with a linear projection squeezed before the binary layer.

    The document keeps a high-dimensional real embedding; the projection
    maps it down to the code size. Gradients are returned for both the
    document vector and the dense projection matrix.
    """
    if candidate_ids[0] != target:
        raise ValueError("candidate_ids[0] must be the target")
    doc_vector = np.asarray(doc_vector, dtype=np.float64)
    projected = doc_vector @ projection
    bits, s = binarize_forward(projected)
    code = bits.astype(np.float64)
    loss, g, grad_code = _restricted_softmax(code, candidate_ids, corrections, weights, bias)
    grad_projected = binarize_backward(grad_code, s)
    grad_doc = projection @ grad_projected
    grad_projection = np.outer(doc_vector, grad_projected)
    return ForwardResult(
        loss=loss,
        code=code,
        candidate_ids=np.asarray(candidate_ids),
        candidate_grad=g,
        grad_doc=grad_doc,
        grad_projection=grad_projection,
    )


def pvdm_forward(
    doc_vector: np.ndarray,
    context_vectors: np.ndarray,
    target: int,
    candidate_ids: np.ndarray,
    corrections: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray,
) -> ForwardResult:
    """Predict a target from the document vector and preceding context words.

    The document vector and the context word embeddings are concatenated,
    passed through the rounded sigmoid as one block, and fed to the
    softmax. Only the leading document segment of the rounded activations
    is the document code.
    """
    if candidate_ids[0] != target:
        raise ValueError("candidate_ids[0] must be the target")
    doc_vector = np.asarray(doc_vector, dtype=np.float64)
    context_vectors = np.asarray(context_vectors, dtype=np.float64)
    concat = np.concatenate([doc_vector, context_vectors.ravel()])
    bits, s = binarize_forward(concat)
    code = bits.astype(np.float64)
    loss, g, grad_code = _restricted_softmax(code, candidate_ids, corrections, weights, bias)
    grad_concat = binarize_backward(grad_code, s)
    c = doc_vector.shape[0]
    return ForwardResult(
        loss=loss,
        code=code,
        candidate_ids=np.asarray(candidate_ids),
        candidate_grad=g,
        grad_doc=grad_concat[:c],
        grad_context=grad_concat[c:].reshape(context_vectors.shape),
    )


@dataclass
class ModelParams:
    """Parameters of a trained paragraph vector model.

    ``doc_embeddings`` rows follow the order of the training documents;
    the container stores the matrix only in full checkpoints, and ids are
    not serialized (inference derives fresh vectors anyway).
    """

    kind: str
    code_bits: int
    dim: int
    word_dim: int
    context_window: int
    vocabulary: Vocabulary
    softmax_weights: np.ndarray  # (V, softmax_dim) float32
    softmax_bias: np.ndarray  # (V,) float32
    doc_embeddings: np.ndarray | None = None  # (doc_count, dim) float32
    projection: np.ndarray | None = None  # (dim, code_bits) float32
    word_embeddings: np.ndarray | None = None  # (V, word_dim) float32
    doc_ids: list[str] | None = field(default=None, repr=False)

    @property
    def softmax_dim(self) -> int:
        return softmax_input_dim(
            self.kind, self.code_bits, self.dim, self.word_dim, self.context_window
        )


def softmax_input_dim(
    kind: str, code_bits: int, dim: int, word_dim: int, context_window: int
) -> int:
    if kind in (BINARY_PVDBOW, REAL_BINARY_PVDBOW):
        return code_bits
    if kind == BINARY_PVDM:
        return code_bits + context_window * word_dim
    if kind == PLAIN_PVDBOW:
        return dim
    raise ConfigError(f"kind {kind!r} has no softmax layer")


def init_params(
    kind: str,
    vocabulary: Vocabulary,
    code_bits: int,
    dim: int | None = None,
    word_dim: int | None = None,
    context_window: int = 1,
    doc_count: int = 0,
    seed: int = 0,
) -> ModelParams:
    """Seeded initialization.

    Embedding rows draw from U[-0.5/dim, 0.5/dim]; the projection draws
    from U[+/- sqrt(6 / (dim + code_bits))]; softmax weights and biases
    start at zero, so the initial loss sits near log(V). Draw order:
    document embeddings, projection, word embeddings.
    """
    v = vocabulary.size
    if kind == BINARY_PVDBOW:
        if dim is None:
            dim = code_bits
        if dim != code_bits:
            raise ConfigError(
                f"{kind} requires dim == code_bits, got dim={dim} bits={code_bits}"
            )
        word_dim, context_window = 0, 0
    elif kind == BINARY_PVDM:
        if dim is None:
            dim = code_bits
        if dim != code_bits:
            raise ConfigError(
                f"{kind} requires dim == code_bits, got dim={dim} bits={code_bits}"
            )
        if word_dim is None:
            word_dim = code_bits
        if context_window < 1:
            raise ConfigError("context_window must be >= 1 for binary-pvdm")
    elif kind == REAL_BINARY_PVDBOW:
        if dim is None or dim < 1:
            raise ConfigError(f"{kind} requires an explicit dim >= 1")
        word_dim, context_window = 0, 0
    elif kind == PLAIN_PVDBOW:
        if dim is None or dim < 1:
            raise ConfigError(f"{kind} requires an explicit dim >= 1")
        code_bits, word_dim, context_window = 0, 0, 0
    else:
        raise ConfigError(f"unknown trainable kind {kind!r}")
    if kind != PLAIN_PVDBOW and code_bits < 1:
        raise ConfigError(f"code_bits must be >= 1, got {code_bits}")

    rng = np.random.default_rng(seed)
    half = 0.5 / dim
    doc_emb = rng.uniform(-half, half, size=(doc_count, dim)).astype(np.float32)
    projection = None
    if kind == REAL_BINARY_PVDBOW:
        bound = np.sqrt(6.0 / (dim + code_bits))
        projection = rng.uniform(-bound, bound, size=(dim, code_bits)).astype(np.float32)
    word_emb = None
    if kind == BINARY_PVDM:
        half_w = 0.5 / word_dim
        word_emb = rng.uniform(-half_w, half_w, size=(v, word_dim)).astype(np.float32)
    sm_dim = softmax_input_dim(kind, code_bits, dim, word_dim, context_window)
    return ModelParams(
        kind=kind,
        code_bits=code_bits,
        dim=dim,
        word_dim=word_dim,
        context_window=context_window,
        vocabulary=vocabulary,
        softmax_weights=np.zeros((v, sm_dim), dtype=np.float32),
        softmax_bias=np.zeros(v, dtype=np.float32),
        doc_embeddings=doc_emb,
        projection=projection,
        word_embeddings=word_emb,
    )


def doc_code(params: ModelParams, doc_vector: np.ndarray) -> BinaryCode:
    """Binary code of a document vector under a trained model."""
    if params.kind in (BINARY_PVDBOW, BINARY_PVDM):
        bits, _ = binarize_forward(np.asarray(doc_vector, dtype=np.float64))
    elif params.kind == REAL_BINARY_PVDBOW:
        projected = np.asarray(doc_vector, dtype=np.float64) @ params.projection.astype(np.float64)
        bits, _ = binarize_forward(projected)
    else:
        raise IncompatibleModel(f"kind {params.kind!r} does not produce binary codes")
    return BinaryCode(words=pack_bits(bits), width=len(bits))


# ---------------------------------------------------------------------------
# Container I/O
# ---------------------------------------------------------------------------


def _write_u32(fh: BinaryIO, value: int) -> None:
    fh.write(int(value).to_bytes(4, "little"))


def _read_u32(fh: BinaryIO, path: str) -> int:
    raw = fh.read(4)
    if len(raw) != 4:
        raise IncompatibleModel(f"{path}: truncated header")
    return int.from_bytes(raw, "little")


def _write_matrix(fh: BinaryIO, mat: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())


def _read_matrix(fh: BinaryIO, shape: tuple[int, ...], path: str) -> np.ndarray:
    n_bytes = int(np.prod(shape)) * 4
    raw = fh.read(n_bytes)
    if len(raw) != n_bytes:
        raise IncompatibleModel(f"{path}: truncated matrix of shape {shape}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def _write_vocab_block(fh: BinaryIO, vocabulary: Vocabulary | None) -> None:
    buf = io.StringIO()
    if vocabulary is None:
        buf.write("BPV-VOCAB v1 0 0\n")
    else:
        flag = 1 if vocabulary.include_bigrams else 0
        buf.write(f"BPV-VOCAB v1 {vocabulary.size} {flag}\n")
        for term, count in zip(vocabulary.terms, vocabulary.counts):
            buf.write(f"{term}\t{int(count)}\n")
    fh.write(buf.getvalue().encode("utf-8"))


def _read_vocab_block(fh: BinaryIO, path: str) -> Vocabulary | None:
    header = fh.readline().decode("utf-8").rstrip("\n")
    parts = header.split(" ")
    if len(parts) != 4 or parts[0] != "BPV-VOCAB" or parts[1] != "v1":
        raise IncompatibleModel(f"{path}: bad embedded vocabulary header {header!r}")
    try:
        size, flag = int(parts[2]), int(parts[3])
    except ValueError as exc:
        raise IncompatibleModel(f"{path}: bad embedded vocabulary header") from exc
    if size == 0:
        return None
    terms: list[str] = []
    counts: list[int] = []
    for _ in range(size):
        line = fh.readline().decode("utf-8").rstrip("\n")
        try:
            term, count_s = line.split("\t")
            counts.append(int(count_s))
        except ValueError as exc:
            raise IncompatibleModel(f"{path}: bad embedded vocabulary line") from exc
        terms.append(term)
    return Vocabulary(
        terms=terms,
        counts=np.array(counts, dtype=np.int64),
        include_bigrams=bool(flag),
        index={t: i for i, t in enumerate(terms)},
    )


def save_model(path: str, params: ModelParams, inference_only: bool = False) -> None:
    """Write a model container.

    Layout: magic ``BPV1``; one kind byte (high bit set when the document
    embedding matrix is omitted); little-endian u32 fields V, dim,
    code_bits, word_dim, context_window, doc_count; the vocabulary block
    (same text format as the vocabulary file); then row-major float32
    matrices in fixed order: doc_embeddings (full checkpoints only),
    projection, word_embeddings, softmax_weights, softmax_bias.
    """
    if params.kind not in NEURAL_KINDS:
        raise IncompatibleModel(f"save_model handles trainable kinds, not {params.kind!r}")
    write_docs = not inference_only and params.doc_embeddings is not None
    doc_count = params.doc_embeddings.shape[0] if write_docs else 0
    tag = KIND_TAGS[params.kind] | (0 if write_docs else _INFERENCE_ONLY_FLAG)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(bytes([tag]))
        for value in (
            params.vocabulary.size,
            params.dim,
            params.code_bits,
            params.word_dim,
            params.context_window,
            doc_count,
        ):
            _write_u32(fh, value)
        _write_vocab_block(fh, params.vocabulary)
        if write_docs:
            _write_matrix(fh, params.doc_embeddings)
        if params.projection is not None:
            _write_matrix(fh, params.projection)
        if params.word_embeddings is not None:
            _write_matrix(fh, params.word_embeddings)
        _write_matrix(fh, params.softmax_weights)
        _write_matrix(fh, params.softmax_bias)


def load_model(path: str):
    """Read any model container; returns the matching parameter object.

    Trainable kinds come back as :class:`ModelParams`; hashing baselines
    come back as their own classes from :mod:`bpv.baselines`.
    """
    from . import baselines  # deferred to avoid an import cycle

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise IncompatibleModel(f"{path}: bad magic {magic!r}")
        tag_raw = fh.read(1)
        if len(tag_raw) != 1:
            raise IncompatibleModel(f"{path}: truncated header")
        tag = tag_raw[0]
        inference_only = bool(tag & _INFERENCE_ONLY_FLAG)
        kind = TAG_KINDS.get(tag & ~_INFERENCE_ONLY_FLAG)
        if kind is None:
            raise IncompatibleModel(f"{path}: unknown kind tag {tag}")
        v = _read_u32(fh, path)
        dim = _read_u32(fh, path)
        code_bits = _read_u32(fh, path)
        word_dim = _read_u32(fh, path)
        context_window = _read_u32(fh, path)
        doc_count = _read_u32(fh, path)
        vocabulary = _read_vocab_block(fh, path)

        if kind == RHP:
            projection = _read_matrix(fh, (dim, code_bits), path)
            _expect_eof(fh, path)
            return baselines.RandomHyperplaneHasher(projection=projection)
        if kind == ITQ:
            mean = _read_matrix(fh, (1, dim), path)[0]
            basis = _read_matrix(fh, (dim, code_bits), path)
            rotation = _read_matrix(fh, (code_bits, code_bits), path)
            _expect_eof(fh, path)
            return baselines.ItqModel(mean=mean, basis=basis, rotation=rotation)

        if vocabulary is None:
            raise IncompatibleModel(f"{path}: trainable model without vocabulary")
        if vocabulary.size != v:
            raise IncompatibleModel(
                f"{path}: header V={v} but vocabulary has {vocabulary.size} terms"
            )
        doc_emb = None
        if not inference_only:
            doc_emb = _read_matrix(fh, (doc_count, dim), path)
        projection = None
        if kind == REAL_BINARY_PVDBOW:
            projection = _read_matrix(fh, (dim, code_bits), path)
        word_emb = None
        if kind == BINARY_PVDM:
            word_emb = _read_matrix(fh, (v, word_dim), path)
        sm_dim = softmax_input_dim(kind, code_bits, dim, word_dim, context_window)
        weights = _read_matrix(fh, (v, sm_dim), path)
        bias = _read_matrix(fh, (v,), path)
        _expect_eof(fh, path)
    return ModelParams(
        kind=kind,
        code_bits=code_bits,
        dim=dim,
        word_dim=word_dim,
        context_window=context_window,
        vocabulary=vocabulary,
        softmax_weights=weights,
        softmax_bias=bias,
        doc_embeddings=doc_emb,
        projection=projection,
        word_embeddings=word_emb,
    )


def _expect_eof(fh: BinaryIO, path: str) -> None:
    if fh.read(1):
        raise IncompatibleModel(f"{path}: trailing bytes after matrices")
