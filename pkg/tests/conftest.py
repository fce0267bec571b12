"""Shared fixtures: a small labeled corpus with clearly separated topics."""

from __future__ import annotations

import numpy as np
import pytest

from bpv.corpus import (
    RawDocument,
    Vocabulary,
    build_vocabulary,
    encode_documents,
    tokenize,
)

_TOPIC_WORDS = {
    "space": [
        "galaxy", "orbit", "telescope", "comet", "nebula", "rocket",
        "astronaut", "lander", "crater", "satellite", "probe", "eclipse",
    ],
    "cooking": [
        "garlic", "simmer", "saucepan", "oregano", "dough", "risotto",
        "paprika", "marinade", "skillet", "broth", "zest", "braise",
    ],
    "finance": [
        "dividend", "ledger", "equity", "invoice", "arbitrage", "bond",
        "portfolio", "audit", "currency", "futures", "margin", "hedge",
    ],
}

_FILLER = ["report", "today", "people", "small", "large", "often", "never"]


def make_raw_docs(
    docs_per_topic: int = 30, words_per_doc: int = 40, seed: int = 0
) -> list[RawDocument]:
    """Synthetic labeled documents, mostly topic words plus shared filler."""
    rng = np.random.default_rng(seed)
    docs = []
    for topic, pool in sorted(_TOPIC_WORDS.items()):
        for i in range(docs_per_topic):
            words = []
            for _ in range(words_per_doc):
                if rng.random() < 0.8:
                    words.append(pool[rng.integers(len(pool))])
                else:
                    words.append(_FILLER[rng.integers(len(_FILLER))])
            docs.append(
                RawDocument(
                    doc_id=f"{topic}-{i:03d}",
                    text=" ".join(words),
                    labels=(topic,),
                )
            )
    return docs


@pytest.fixture(scope="session")
def raw_docs() -> list[RawDocument]:
    return make_raw_docs()


@pytest.fixture(scope="session")
def tiny_corpus(raw_docs):
    """(vocabulary, encoded docs) over the synthetic corpus, unigrams only."""
    vocab = build_vocabulary(
        (tokenize(d.text) for d in raw_docs), min_count=1, include_bigrams=False
    )
    docs, dropped = encode_documents(raw_docs, vocab)
    assert not dropped
    return vocab, docs


@pytest.fixture(scope="session")
def tiny_vocab(tiny_corpus) -> Vocabulary:
    return tiny_corpus[0]
