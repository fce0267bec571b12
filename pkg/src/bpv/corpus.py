"""Text corpus handling: tokenization, vocabulary, encoding, splits, loaders."""

from __future__ import annotations

import json
import os
import re
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateId,
    EmptyVocabulary,
    FormatError,
)
from .stopwords import ENGLISH_STOPWORDS

# Unicode letter runs: word characters minus digits and underscore.
_LETTER_RUN = re.compile(r"[^\W\d_]+", re.UNICODE)

MIN_TOKEN_LEN = 2
MAX_TOKEN_LEN = 15

_VOCAB_MAGIC = "BPV-VOCAB v1"


def tokenize(text: str, stopwords: frozenset[str] = ENGLISH_STOPWORDS) -> list[str]:
    """Split text into lowercased letter-run tokens.

    Runs shorter than 2 or longer than 15 characters are dropped, then
    stopwords are removed. Bigrams are formed downstream from this
    filtered sequence, so a stopword never appears inside a bigram.
    """
    tokens = _LETTER_RUN.findall(text.lower())
    return [
        t
        for t in tokens
        if MIN_TOKEN_LEN <= len(t) <= MAX_TOKEN_LEN and t not in stopwords
    ]


def extract_bigrams(tokens: Sequence[str]) -> list[str]:
    """Adjacent token pairs joined with an underscore."""
    return [f"{a}_{b}" for a, b in zip(tokens, tokens[1:])]


def document_terms(tokens: Sequence[str], include_bigrams: bool) -> list[str]:
    """Unigrams in order, then bigrams when enabled."""
    terms = list(tokens)
    if include_bigrams:
        terms.extend(extract_bigrams(tokens))
    return terms


@dataclass(frozen=True)
class RawDocument:
    doc_id: str
    text: str
    labels: tuple[str, ...] = ()


@dataclass(frozen=True)
class CorpusDocument:
    """An encoded document: term ids with unigrams before bigrams."""

    doc_id: str
    terms: np.ndarray  # int32 term ids, unigrams first
    n_words: int  # count of leading unigram ids
    labels: tuple[str, ...] = ()


@dataclass
class Vocabulary:
    """Term-to-id mapping ordered by descending frequency.

    Ties in frequency break lexicographically, so ids are a pure function
    of the term counts.
    """

    terms: list[str]
    counts: np.ndarray  # int64, aligned with terms
    include_bigrams: bool
    index: dict[str, int]

    @property
    def size(self) -> int:
        return len(self.terms)

    @classmethod
    def from_counts(
        cls, counts: Counter[str] | dict[str, int], min_count: int, include_bigrams: bool
    ) -> "Vocabulary":
        kept = [(t, c) for t, c in counts.items() if c >= min_count]
        if not kept:
            raise EmptyVocabulary(
                f"no term reaches min_count={min_count} "
                f"(saw {len(counts)} distinct terms)"
            )
        kept.sort(key=lambda tc: (-tc[1], tc[0]))
        terms = [t for t, _ in kept]
        arr = np.array([c for _, c in kept], dtype=np.int64)
        return cls(
            terms=terms,
            counts=arr,
            include_bigrams=include_bigrams,
            index={t: i for i, t in enumerate(terms)},
        )

    def save(self, path: str) -> None:
        flag = 1 if self.include_bigrams else 0
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{_VOCAB_MAGIC} {self.size} {flag}\n")
            for term, count in zip(self.terms, self.counts):
                fh.write(f"{term}\t{int(count)}\n")

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            parts = header.split(" ")
            if parts[:2] != _VOCAB_MAGIC.split(" ") or len(parts) != 4:
                raise FormatError(f"{path}: not a vocabulary file")
            try:
                size, flag = int(parts[2]), int(parts[3])
            except ValueError as exc:
                raise FormatError(f"{path}: bad vocabulary header") from exc
            if flag not in (0, 1):
                raise FormatError(f"{path}: bigram flag must be 0 or 1")
            terms: list[str] = []
            counts: list[int] = []
            for i, line in enumerate(fh):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    term, count_s = line.split("\t")
                    count = int(count_s)
                except ValueError as exc:
                    raise FormatError(f"{path}: bad line {i + 2}") from exc
                terms.append(term)
                counts.append(count)
        if len(terms) != size:
            raise FormatError(
                f"{path}: header says {size} terms, file has {len(terms)}"
            )
        if size == 0:
            raise EmptyVocabulary(f"{path}: empty vocabulary")
        order = [(-c, t) for t, c in zip(terms, counts)]
        if any(order[i] > order[i + 1] for i in range(len(order) - 1)):
            raise FormatError(f"{path}: terms not in id order")
        if len(set(terms)) != len(terms):
            raise FormatError(f"{path}: duplicate terms")
        return cls(
            terms=terms,
            counts=np.array(counts, dtype=np.int64),
            include_bigrams=bool(flag),
            index={t: i for i, t in enumerate(terms)},
        )


def build_vocabulary(
    token_docs: Iterable[Sequence[str]], min_count: int, include_bigrams: bool
) -> Vocabulary:
    """Count unigrams (and bigrams when enabled) and keep frequent terms.

    The min_count threshold applies to the combined unigram plus bigram
    pool with a single cutoff.
    """
    counts: Counter[str] = Counter()
    for tokens in token_docs:
        counts.update(document_terms(tokens, include_bigrams))
    return Vocabulary.from_counts(counts, min_count, include_bigrams)


def encode_document(raw: RawDocument, vocabulary: Vocabulary) -> CorpusDocument:
    """Map a raw document to term ids; out-of-vocabulary terms are dropped."""
    tokens = tokenize(raw.text)
    index = vocabulary.index
    word_ids = [index[t] for t in tokens if t in index]
    term_ids = list(word_ids)
    if vocabulary.include_bigrams:
        term_ids.extend(
            index[b] for b in extract_bigrams(tokens) if b in index
        )
    return CorpusDocument(
        doc_id=raw.doc_id,
        terms=np.array(term_ids, dtype=np.int32),
        n_words=len(word_ids),
        labels=tuple(raw.labels),
    )


def encode_documents(
    raw_docs: Sequence[RawDocument], vocabulary: Vocabulary
) -> tuple[list[CorpusDocument], list[str]]:
    """Encode a document collection.

    Returns:
        ``(docs, dropped_ids)``: encoded documents that kept at least one
        term, plus the ids of documents that became empty and were
        excluded.
    """
    docs: list[CorpusDocument] = []
    dropped: list[str] = []
    for raw in raw_docs:
        doc = encode_document(raw, vocabulary)
        if doc.terms.size == 0:
            dropped.append(doc.doc_id)
        else:
            docs.append(doc)
    return docs, dropped


@dataclass
class Corpus:
    """Encoded train and test splits sharing one vocabulary."""

    vocabulary: Vocabulary
    train_docs: list[CorpusDocument]
    test_docs: list[CorpusDocument]


def split_fraction(
    docs: Sequence, test_fraction: float, seed: int
) -> tuple[list, list]:
    """Deterministic random split; ``test_fraction`` is held out for test.

    Documents are ordered by id before permutation, so the split depends
    only on the id set, the fraction, and the seed.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    ordered = sorted(docs, key=lambda d: d.doc_id)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ordered))
    n_test = int(round(test_fraction * len(ordered)))
    test_idx = set(perm[:n_test].tolist())
    train = [d for i, d in enumerate(ordered) if i not in test_idx]
    test = [d for i, d in enumerate(ordered) if i in test_idx]
    return train, test


def filter_test_labels(docs: Sequence, min_docs_per_label: int) -> list:
    """Drop rare labels, then documents left without any label.

    Works on any document type with a ``labels`` field. A label survives
    when at least ``min_docs_per_label`` input documents carry it; a
    dropped document never carried a surviving label, so surviving label
    counts are unaffected by the document drop.
    """
    label_counts: Counter[str] = Counter()
    for doc in docs:
        label_counts.update(set(doc.labels))
    keep = {lab for lab, c in label_counts.items() if c >= min_docs_per_label}
    out = []
    for doc in docs:
        labels = tuple(lab for lab in doc.labels if lab in keep)
        if labels:
            out.append(replace(doc, labels=labels))
    return out


# ---------------------------------------------------------------------------
# Loaders and writers
# ---------------------------------------------------------------------------


def load_jsonl(path: str) -> list[RawDocument]:
    """Load documents from JSON lines: {"id": ..., "text": ..., "labels": [...]}."""
    docs: list[RawDocument] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON") from exc
            if not isinstance(record, dict):
                raise FormatError(f"{path}:{lineno}: record is not an object")
            doc_id = record.get("id")
            text = record.get("text")
            labels = record.get("labels", [])
            if not isinstance(doc_id, str) or not doc_id:
                raise FormatError(f"{path}:{lineno}: missing or invalid 'id'")
            if not isinstance(text, str):
                raise FormatError(f"{path}:{lineno}: missing or invalid 'text'")
            if not isinstance(labels, list) or not all(
                isinstance(lab, str) for lab in labels
            ):
                raise FormatError(f"{path}:{lineno}: 'labels' must be a string list")
            if doc_id in seen:
                raise DuplicateId(f"{path}:{lineno}: duplicate id {doc_id!r}")
            seen.add(doc_id)
            docs.append(RawDocument(doc_id=doc_id, text=text, labels=tuple(labels)))
    return docs


def write_jsonl(path: str, docs: Iterable[RawDocument]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(
                json.dumps(
                    {"id": doc.doc_id, "text": doc.text, "labels": list(doc.labels)},
                    ensure_ascii=False,
                )
                + "\n"
            )


def _load_label_dirs(root: str) -> list[RawDocument]:
    docs: list[RawDocument] = []
    seen: set[str] = set()
    for label in sorted(os.listdir(root)):
        label_dir = os.path.join(root, label)
        if not os.path.isdir(label_dir):
            continue
        for fname in sorted(os.listdir(label_dir)):
            fpath = os.path.join(label_dir, fname)
            if not os.path.isfile(fpath):
                continue
            with open(fpath, "r", encoding="latin-1") as fh:
                text = fh.read()
            doc_id = f"{label}/{fname}"
            if doc_id in seen:
                raise DuplicateId(f"duplicate document id {doc_id!r} under {root}")
            seen.add(doc_id)
            docs.append(RawDocument(doc_id=doc_id, text=text, labels=(label,)))
    return docs


def load_newsgroup_dirs(
    root: str,
) -> tuple[list[RawDocument], list[RawDocument] | None]:
    """Load a newsgroup-style directory tree.

    Two layouts are accepted: a root holding ``*train*`` and ``*test*``
    subdirectories (the reference split), or a root holding label
    directories directly (a single unsplit collection, second element
    ``None``). Each label directory holds one file per message; the label
    is the directory name and the document id is ``label/filename``.
    """
    subdirs = [d for d in sorted(os.listdir(root)) if os.path.isdir(os.path.join(root, d))]
    train_dirs = [d for d in subdirs if "train" in d.lower()]
    test_dirs = [d for d in subdirs if "test" in d.lower()]
    if len(train_dirs) == 1 and len(test_dirs) == 1:
        train = _load_label_dirs(os.path.join(root, train_dirs[0]))
        test = _load_label_dirs(os.path.join(root, test_dirs[0]))
        if not train or not test:
            raise FormatError(f"{root}: empty train or test split")
        return train, test
    if train_dirs or test_dirs:
        raise FormatError(
            f"{root}: ambiguous split layout (train dirs {train_dirs}, "
            f"test dirs {test_dirs})"
        )
    docs = _load_label_dirs(root)
    if not docs:
        raise FormatError(f"{root}: no label directories found")
    return docs, None


def load_tokenized_collection(
    token_paths: Sequence[str], topics_path: str | None = None
) -> list[RawDocument]:
    """Load a pre-tokenized collection in .I/.W block format.

    Each document starts with a ``.I <id>`` line, followed by a ``.W``
    line and then token lines until the next ``.I``. When given,
    ``topics_path`` maps topic labels onto documents; each of its lines
    is ``<topic> <doc-id> 1``.
    """
    labels: dict[str, list[str]] = {}
    if topics_path is not None:
        with open(topics_path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 3:
                    raise FormatError(f"{topics_path}:{lineno}: expected 3 fields")
                topic, doc_id = parts[0], parts[1]
                labels.setdefault(doc_id, []).append(topic)
    docs: list[RawDocument] = []
    seen: set[str] = set()
    for path in token_paths:
        cur_id: str | None = None
        cur_lines: list[str] = []

        def flush() -> None:
            if cur_id is None:
                return
            if cur_id in seen:
                raise DuplicateId(f"{path}: duplicate document id {cur_id!r}")
            seen.add(cur_id)
            docs.append(
                RawDocument(
                    doc_id=cur_id,
                    text=" ".join(cur_lines),
                    labels=tuple(sorted(labels.get(cur_id, ()))),
                )
            )

        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line.startswith(".I"):
                    flush()
                    parts = line.split()
                    if len(parts) != 2:
                        raise FormatError(f"{path}: bad .I line {line!r}")
                    cur_id = parts[1]
                    cur_lines = []
                elif line == ".W":
                    continue
                elif line:
                    if cur_id is None:
                        raise FormatError(f"{path}: token line before any .I")
                    cur_lines.append(line)
        flush()
    return docs
