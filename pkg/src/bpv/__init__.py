"""Short binary codes for text documents, learned with paragraph vector
models that carry a rounded sigmoid layer, plus classical hashing
baselines and Hamming-space retrieval evaluation.
"""

from . import errors
from .baselines import ItqModel, RandomHyperplaneHasher, itq_fit, pca_top_c, rhp_hash, save_baseline
from .codes import (
    BinaryCode,
    hamming,
    pack_bits,
    read_codes,
    read_vectors,
    unpack_bits,
    write_codes,
    write_vectors,
)
from .corpus import (
    Corpus,
    CorpusDocument,
    RawDocument,
    Vocabulary,
    build_vocabulary,
    encode_document,
    encode_documents,
    extract_bigrams,
    filter_test_labels,
    load_jsonl,
    load_newsgroup_dirs,
    load_tokenized_collection,
    split_fraction,
    tokenize,
    write_jsonl,
)
from .evaluate import (
    CodeIndex,
    EvalRun,
    RelevanceJudge,
    average_precision,
    cosine,
    evaluate,
    filter_then_rerank,
    ndcg_at_k,
    precision_recall_11pt,
    rank_by_code,
    rank_by_cosine,
    relevance,
)
from .models import (
    BINARY_PVDBOW,
    BINARY_PVDM,
    PLAIN_PVDBOW,
    REAL_BINARY_PVDBOW,
    ModelParams,
    binarize_backward,
    binarize_forward,
    doc_code,
    init_params,
    load_model,
    pvdbow_forward,
    pvdm_forward,
    real_binary_forward,
    save_model,
    sigmoid,
)
from .training import (
    InferenceResult,
    SamplerTable,
    TrainConfig,
    adagrad_update,
    dropout_apply,
    dropout_mask,
    full_softmax_loss_grad,
    infer_codes,
    sampled_softmax_loss_grad,
    train,
    write_train_report,
)

__version__ = "0.1.0"
