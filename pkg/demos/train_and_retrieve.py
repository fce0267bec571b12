"""
Training binary codes and retrieving by Hamming distance
========================================================

End-to-end on a synthetic three-topic corpus: build a vocabulary, train
a binary bag-of-words document model, infer codes for held-out
documents, and score topic retrieval in Hamming space.
"""

import numpy as np

from _synthetic import make_topic_corpus
from bpv import corpus
from bpv.codes import hamming_to_many
from bpv.evaluate import CodeIndex, RelevanceJudge, evaluate, format_eval_report
from bpv.models import BINARY_PVDBOW
from bpv.training import TrainConfig, infer_codes, train

raw = make_topic_corpus(docs_per_topic=50, words_per_doc=40, seed=0)
train_raw, test_raw = corpus.split_fraction(raw, test_fraction=0.3, seed=1)
print(f"{len(train_raw)} training documents, {len(test_raw)} held out")

# Vocabulary from the training split only; bigrams add word-order signal
# that a bag of unigrams misses.
vocab = corpus.build_vocabulary(
    (corpus.tokenize(d.text) for d in train_raw), min_count=2, include_bigrams=True
)
print(f"vocabulary: {vocab.size} terms (unigrams + bigrams)")

train_docs, _ = corpus.encode_documents(train_raw, vocab)
test_docs, _ = corpus.encode_documents(test_raw, vocab)

# 16 bits is plenty for three topics. Word prediction uses 16 sampled
# negatives per position instead of the full softmax.
config = TrainConfig(epochs=8, negative_samples=16, seed=0, workers=1)
params, stats = train(train_docs, vocab, BINARY_PVDBOW, code_bits=16, config=config)
print("\nepoch  mean loss")
for st in stats:
    print(f"{st.epoch:5d}  {st.mean_loss:.4f}")

# Held-out documents get codes by running the same optimization with the
# word matrix frozen; only the new document vectors move.
result = infer_codes(params, test_docs, config)
print(f"\ninferred {len(result.doc_ids)} codes of width {result.code_width}")

index = CodeIndex.build(result.doc_ids, result.code_words, result.code_width)
judge = RelevanceJudge.from_docs(test_raw, "same-label")

# Show one query's nearest neighbors the way a search system would.
query = result.doc_ids[0]
qpos = index.position(query)
dist = hamming_to_many(index.code_words[qpos], index.code_words)
order = np.argsort(dist, kind="stable")
print(f"\nnearest neighbors of {query}:")
for i in order[1:6]:
    print(f"  {index.ids[i]:<16} hamming {int(dist[i]):2d}")

# Every held-out document queries the rest; a result is relevant when it
# carries the same topic label.
run = evaluate(index, judge, mode="hamming")
print()
print(format_eval_report(run))
