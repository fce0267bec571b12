"""Small synthetic topic corpus shared by the demo scripts.

Each document draws most of its words from one topic's vocabulary and
the rest from a shared filler pool, so retrieval by topic is learnable
but not trivial.
"""

import numpy as np

from bpv.corpus import RawDocument

TOPICS = {
    "space": [
        "orbit", "rocket", "launch", "satellite", "lunar", "crater",
        "telescope", "astronaut", "module", "thrust", "apogee", "probe",
    ],
    "medicine": [
        "patient", "dosage", "clinical", "symptom", "therapy", "diagnosis",
        "vaccine", "antibody", "chronic", "infection", "remission", "trial",
    ],
    "hockey": [
        "goalie", "puck", "slapshot", "penalty", "playoff", "rink",
        "defenseman", "overtime", "faceoff", "powerplay", "roster", "skate",
    ],
}

FILLER = ["said", "report", "group", "year", "people", "found", "early"]


def make_topic_corpus(docs_per_topic=50, words_per_doc=40, seed=0):
    rng = np.random.default_rng(seed)
    docs = []
    for topic, words in TOPICS.items():
        for i in range(docs_per_topic):
            n_topical = int(rng.integers(words_per_doc // 2, words_per_doc))
            drawn = list(rng.choice(words, size=n_topical)) + list(
                rng.choice(FILLER, size=words_per_doc - n_topical)
            )
            rng.shuffle(drawn)
            docs.append(
                RawDocument(
                    doc_id=f"{topic}-{i:03d}",
                    text=" ".join(drawn),
                    labels=(topic,),
                )
            )
    return docs
