"""Hamming-space retrieval and its evaluation.

Ranking is deterministic: documents live in the index sorted by id, and
every ranker uses a stable sort on the distance or similarity, which
makes ascending document id the tie-break everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .codes import hamming_to_many, words_per_code
from .errors import (
    DuplicateId,
    MissingLabels,
    UnknownQuery,
    WidthMismatch,
)

JUDGE_MODES = ("same-label", "label-overlap-fraction", "shared-any-label")

PR_LEVELS = np.linspace(0.0, 1.0, 11)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; a zero vector yields 0 rather than an error."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ v / (nu * nv))


@dataclass
class CodeIndex:
    """Searchable collection of binary codes and/or real vectors.

    Built sorted by document id; ``zero_vector_ids`` flags documents
    whose real vector has zero norm (their cosine to anything is 0).
    """

    ids: list[str]
    code_words: np.ndarray | None  # (N, words) uint64
    code_width: int | None
    vectors: np.ndarray | None  # (N, dim) float64
    unit_vectors: np.ndarray | None = field(default=None, repr=False)
    zero_vector_ids: list[str] = field(default_factory=list)
    _pos: dict[str, int] = field(default_factory=dict, repr=False)

    @classmethod
    def build(
        cls,
        ids: Sequence[str],
        code_words: np.ndarray | None = None,
        code_width: int | None = None,
        vectors: np.ndarray | None = None,
    ) -> "CodeIndex":
        ids = list(ids)
        if len(set(ids)) != len(ids):
            raise DuplicateId("index ids must be unique")
        if code_words is None and vectors is None:
            raise ValueError("need codes, vectors, or both")
        order = np.argsort(np.array(ids, dtype=object), kind="stable")
        sorted_ids = [ids[i] for i in order]
        words = None
        if code_words is not None:
            if code_width is None:
                raise ValueError("code_width is required with code_words")
            words = np.asarray(code_words, dtype=np.uint64)
            if words.ndim != 2 or words.shape[0] != len(ids):
                raise ValueError("code_words must be (n_docs, n_words)")
            if words.shape[1] != words_per_code(code_width):
                raise WidthMismatch(
                    f"width {code_width} needs {words_per_code(code_width)} "
                    f"words per code, got {words.shape[1]}"
                )
            words = np.ascontiguousarray(words[order])
        vecs = None
        unit = None
        zero_ids: list[str] = []
        if vectors is not None:
            vecs = np.asarray(vectors, dtype=np.float64)
            if vecs.ndim != 2 or vecs.shape[0] != len(ids):
                raise ValueError("vectors must be (n_docs, dim)")
            vecs = np.ascontiguousarray(vecs[order])
            norms = np.linalg.norm(vecs, axis=1)
            zero = norms == 0.0
            zero_ids = [sorted_ids[i] for i in np.flatnonzero(zero)]
            safe = np.where(zero, 1.0, norms)
            unit = vecs / safe[:, np.newaxis]
        return cls(
            ids=sorted_ids,
            code_words=words,
            code_width=code_width if words is not None else None,
            vectors=vecs,
            unit_vectors=unit,
            zero_vector_ids=zero_ids,
            _pos={doc_id: i for i, doc_id in enumerate(sorted_ids)},
        )

    def __len__(self) -> int:
        return len(self.ids)

    def position(self, doc_id: str) -> int:
        try:
            return self._pos[doc_id]
        except KeyError:
            raise UnknownQuery(f"document id {doc_id!r} is not in the index") from None


def _hamming_order(index: CodeIndex, qpos: int) -> np.ndarray:
    if index.code_words is None:
        raise ValueError("index holds no codes")
    dist = hamming_to_many(index.code_words[qpos], index.code_words)
    order = np.argsort(dist, kind="stable")
    return order[order != qpos]


def _cosine_order(index: CodeIndex, qpos: int) -> np.ndarray:
    if index.unit_vectors is None:
        raise ValueError("index holds no vectors")
    sims = index.unit_vectors @ index.unit_vectors[qpos]
    order = np.argsort(-sims, kind="stable")
    return order[order != qpos]


def _rerank_order(index: CodeIndex, qpos: int, radius: int) -> np.ndarray:
    if index.code_words is None:
        raise ValueError("index holds no codes")
    if index.unit_vectors is None:
        raise ValueError("filter-then-rerank needs vectors in the index")
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    dist = hamming_to_many(index.code_words[qpos], index.code_words)
    cand = np.flatnonzero(dist <= radius)
    cand = cand[cand != qpos]
    sims = index.unit_vectors[cand] @ index.unit_vectors[qpos]
    return cand[np.argsort(-sims, kind="stable")]


def rank_by_code(index: CodeIndex, query_id: str) -> list[str]:
    """All other documents by ascending Hamming distance to the query.

    Ties order by ascending document id; the result does not depend on
    index insertion order.
    """
    order = _hamming_order(index, index.position(query_id))
    return [index.ids[i] for i in order]


def rank_by_cosine(index: CodeIndex, query_id: str) -> list[str]:
    """All other documents by descending cosine to the query vector."""
    order = _cosine_order(index, index.position(query_id))
    return [index.ids[i] for i in order]


def filter_then_rerank(index: CodeIndex, query_id: str, radius: int) -> list[str]:
    """Hamming-radius candidate filter, then cosine rerank.

    Only documents within ``radius`` bits of the query code make the
    candidate list; those are ordered by descending cosine between real
    vectors (ties by ascending id). The list may be short or empty.
    """
    order = _rerank_order(index, index.position(query_id), radius)
    return [index.ids[i] for i in order]


# ---------------------------------------------------------------------------
# Relevance judgments
# ---------------------------------------------------------------------------


@dataclass
class RelevanceJudge:
    """Label-based graded relevance between documents.

    Modes: ``same-label`` (grade 1 when label sets are equal, meant for
    single-label corpora), ``shared-any-label`` (grade 1 when any label
    is shared), ``label-overlap-fraction`` (Jaccard overlap by default;
    ``overlap_denominator="query"`` divides by the query's label count
    instead).
    """

    mode: str
    label_sets: dict[str, frozenset[str]]
    overlap_denominator: str = "union"

    def __post_init__(self) -> None:
        if self.mode not in JUDGE_MODES:
            raise ValueError(f"mode must be one of {JUDGE_MODES}, got {self.mode!r}")
        if self.overlap_denominator not in ("union", "query"):
            raise ValueError("overlap_denominator must be 'union' or 'query'")

    @classmethod
    def from_docs(
        cls, docs: Iterable, mode: str, overlap_denominator: str = "union"
    ) -> "RelevanceJudge":
        label_sets = {doc.doc_id: frozenset(doc.labels) for doc in docs}
        return cls(mode=mode, label_sets=label_sets, overlap_denominator=overlap_denominator)

    @classmethod
    def from_mapping(
        cls, labels: Mapping[str, Iterable[str]], mode: str, overlap_denominator: str = "union"
    ) -> "RelevanceJudge":
        label_sets = {k: frozenset(v) for k, v in labels.items()}
        return cls(mode=mode, label_sets=label_sets, overlap_denominator=overlap_denominator)

    def labels_of(self, doc_id: str) -> frozenset[str]:
        labels = self.label_sets.get(doc_id)
        if not labels:
            raise MissingLabels(f"document {doc_id!r} has no labels")
        return labels

    def grade(self, query_id: str, doc_id: str) -> float:
        lq = self.labels_of(query_id)
        ld = self.labels_of(doc_id)
        if self.mode == "same-label":
            return 1.0 if lq == ld else 0.0
        inter = len(lq & ld)
        if self.mode == "shared-any-label":
            return 1.0 if inter else 0.0
        denom = len(lq | ld) if self.overlap_denominator == "union" else len(lq)
        return inter / denom


def relevance(judge: RelevanceJudge, query_id: str, doc_id: str) -> float:
    """Pairwise relevance grade under the judge's mode."""
    return judge.grade(query_id, doc_id)


class _GradeTable:
    """Vectorized per-query grades over one index, via an inverted label index."""

    def __init__(self, judge: RelevanceJudge, index: CodeIndex) -> None:
        self.judge = judge
        self.n = len(index)
        label_sets = [judge.labels_of(doc_id) for doc_id in index.ids]
        self.label_sets = label_sets
        self.sizes = np.array([len(s) for s in label_sets], dtype=np.float64)
        if judge.mode == "same-label":
            keys: dict[frozenset, int] = {}
            arr = np.zeros(self.n, dtype=np.int64)
            for i, s in enumerate(label_sets):
                arr[i] = keys.setdefault(s, len(keys))
            self.keys = arr
        else:
            postings: dict[str, list[int]] = {}
            for i, s in enumerate(label_sets):
                for lab in s:
                    postings.setdefault(lab, []).append(i)
            self.postings = {
                lab: np.array(pos, dtype=np.int64) for lab, pos in postings.items()
            }

    def grades(self, qpos: int) -> np.ndarray:
        if self.judge.mode == "same-label":
            return (self.keys == self.keys[qpos]).astype(np.float64)
        inter = np.zeros(self.n, dtype=np.float64)
        q_labels = self.label_sets[qpos]
        for lab in q_labels:
            inter[self.postings[lab]] += 1.0
        if self.judge.mode == "shared-any-label":
            return (inter > 0).astype(np.float64)
        if self.judge.overlap_denominator == "union":
            union = len(q_labels) + self.sizes - inter
            return inter / union
        return inter / len(q_labels)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def average_precision(grades: Sequence[float], total_relevant: int | None = None) -> float:
    """Average precision of a ranked grade list; grade > 0 is relevant.

    ``total_relevant`` is the relevant count in the whole candidate pool;
    relevant documents missing from a truncated ranking contribute zero.
    It defaults to the count within the list.

    >>> average_precision([1.0, 0.0, 2.0])
    0.8333333333333333
    """
    rel = np.asarray(grades, dtype=np.float64) > 0
    hits = int(rel.sum())
    if total_relevant is None:
        total_relevant = hits
    if total_relevant <= 0:
        return 0.0
    ranks = np.flatnonzero(rel) + 1
    precisions = np.cumsum(rel)[rel] / ranks
    return float(precisions.sum() / total_relevant)


def ndcg_at_k(
    grades: Sequence[float], k: int = 10, ideal_grades: Sequence[float] | None = None
) -> float:
    """Graded NDCG at rank k with a log2 position discount.

    The ideal ranking comes from ``ideal_grades`` (the full candidate
    pool's grades) when given, otherwise from the list itself. Lists
    shorter than k contribute zeros for the missing tail.

    >>> round(ndcg_at_k([1.0, 0.0, 1.0], k=3), 5)
    0.91972
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    grades = np.asarray(grades, dtype=np.float64)
    top = grades[:k]
    dcg = float((top / np.log2(np.arange(2, top.size + 2))).sum())
    pool = grades if ideal_grades is None else np.asarray(ideal_grades, dtype=np.float64)
    if pool.size > k:
        ideal_top = -np.sort(np.partition(-pool, k - 1)[:k])
    else:
        ideal_top = np.sort(pool)[::-1]
    idcg = float((ideal_top / np.log2(np.arange(2, ideal_top.size + 2))).sum())
    if idcg <= 0.0:
        return 0.0
    return dcg / idcg


def precision_recall_11pt(
    grades: Sequence[float], total_relevant: int | None = None
) -> np.ndarray:
    """Interpolated precision at the 11 standard recall levels 0.0 .. 1.0.

    Interpolation takes the maximum precision at any rank whose recall
    meets the level; levels no rank reaches get precision 0.
    """
    rel = np.asarray(grades, dtype=np.float64) > 0
    hits = int(rel.sum())
    if total_relevant is None:
        total_relevant = hits
    out = np.zeros(11, dtype=np.float64)
    if total_relevant <= 0 or rel.size == 0:
        return out
    cum = np.cumsum(rel)
    ranks = np.arange(1, rel.size + 1)
    precision = cum / ranks
    recall = cum / total_relevant
    # running max of precision from the tail gives the interpolated curve
    interp = np.maximum.accumulate(precision[::-1])[::-1]
    for i, level in enumerate(PR_LEVELS):
        reach = np.flatnonzero(recall >= level - 1e-12)
        if reach.size:
            out[i] = interp[reach[0]]
    return out


# ---------------------------------------------------------------------------
# End-to-end evaluation
# ---------------------------------------------------------------------------


@dataclass
class QueryResult:
    query_id: str
    ap: float
    ndcg: float
    n_relevant: int


@dataclass
class EvalRun:
    mode: str
    judge_mode: str
    ndcg_k: int
    n_queries: int
    n_skipped_no_relevant: int
    map_score: float
    ndcg_score: float
    pr_precisions: np.ndarray  # (11,)
    radius: int | None = None
    per_query: list[QueryResult] | None = None


def evaluate(
    index: CodeIndex,
    judge: RelevanceJudge,
    query_ids: Sequence[str] | None = None,
    mode: str = "hamming",
    radius: int | None = None,
    ndcg_k: int = 10,
    keep_per_query: bool = False,
) -> EvalRun:
    """Run retrieval for each query and aggregate MAP, NDCG@k, and the
    11-point precision-recall curve.

    Modes: ``hamming`` (codes), ``cosine`` (real vectors), and
    ``filter-rerank`` (Hamming radius filter, cosine rerank; requires
    ``radius``). Queries rank every other indexed document. Queries with
    no relevant document in the pool are excluded from every aggregate
    and reported in ``n_skipped_no_relevant``.
    """
    if mode not in ("hamming", "cosine", "filter-rerank"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "filter-rerank" and radius is None:
        raise ValueError("filter-rerank needs a radius")
    ids = list(query_ids) if query_ids is not None else list(index.ids)
    table = _GradeTable(judge, index)
    ap_list: list[float] = []
    ndcg_list: list[float] = []
    pr_sum = np.zeros(11, dtype=np.float64)
    skipped = 0
    per_query: list[QueryResult] = []
    for query_id in ids:
        qpos = index.position(query_id)
        grades_all = table.grades(qpos)
        own = grades_all[qpos]
        total_rel = int((grades_all > 0).sum()) - (1 if own > 0 else 0)
        if total_rel == 0:
            skipped += 1
            continue
        if mode == "hamming":
            order = _hamming_order(index, qpos)
        elif mode == "cosine":
            order = _cosine_order(index, qpos)
        else:
            order = _rerank_order(index, qpos, radius)
        ranked = grades_all[order]
        pool = np.delete(grades_all, qpos)
        ap = average_precision(ranked, total_relevant=total_rel)
        ndcg = ndcg_at_k(ranked, k=ndcg_k, ideal_grades=pool)
        pr_sum += precision_recall_11pt(ranked, total_relevant=total_rel)
        ap_list.append(ap)
        ndcg_list.append(ndcg)
        if keep_per_query:
            per_query.append(QueryResult(query_id, ap, ndcg, total_rel))
    n_counted = len(ap_list)
    return EvalRun(
        mode=mode,
        judge_mode=judge.mode,
        ndcg_k=ndcg_k,
        n_queries=n_counted,
        n_skipped_no_relevant=skipped,
        map_score=float(np.mean(ap_list)) if n_counted else 0.0,
        ndcg_score=float(np.mean(ndcg_list)) if n_counted else 0.0,
        pr_precisions=pr_sum / n_counted if n_counted else pr_sum,
        radius=radius,
        per_query=per_query if keep_per_query else None,
    )


def format_eval_report(run: EvalRun) -> str:
    """Flat text summary, one ``name value`` pair per line."""
    lines = [
        f"mode {run.mode}",
        f"judge {run.judge_mode}",
    ]
    if run.radius is not None:
        lines.append(f"radius {run.radius}")
    lines += [
        f"queries {run.n_queries}",
        f"skipped_no_relevant {run.n_skipped_no_relevant}",
        f"map {run.map_score:.6f}",
        f"ndcg@{run.ndcg_k} {run.ndcg_score:.6f}",
    ]
    return "\n".join(lines) + "\n"


def write_eval_report(path: str, run: EvalRun) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_eval_report(run))


def write_pr_csv(path: str, run: EvalRun) -> None:
    """Interpolated precision-recall points as ``recall,precision`` CSV."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("recall,precision\n")
        for level, precision in zip(PR_LEVELS, run.pr_precisions):
            fh.write(f"{level:.1f},{precision:.6f}\n")
