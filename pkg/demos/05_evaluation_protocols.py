"""Evaluation protocols: metrics, seen/unseen generalization, and the ablation.

Three experiments on synthetic corpora:
  1. the seen/unseen split, which deletes training queries for half the
     documents and reports both halves separately,
  2. the identifier-form ablation, decoding the same index with term-set
     and fixed-sequence constraints under one shared scorer,
  3. the efficiency table (memory plus latency per beam size).
"""

import numpy as np

from termset_retrieval import (
    ablate_identifier_scheme,
    build_identifiers,
    build_index,
    build_term_weights,
    efficiency_report,
    evaluate_seen_unseen,
    sample_negatives,
    search,
    seen_unseen_split,
    train_importance,
)
from termset_retrieval.importance import ImportanceModel
from termset_retrieval.learning import TrainingConfig, make_dataset, run_training
from termset_retrieval.scorer import FeatureScorer
from termset_retrieval.synthetic import (
    make_bridging_corpus,
    make_order_noise_corpus,
    split_by_wave,
)

# --- 1. seen/unseen -------------------------------------------------------
corpus, queries, judgments = make_bridging_corpus(num_docs=30, seed=6)
train_q, train_j, test_q, test_j = split_by_wave(queries, judgments, test_wave=1)
split = seen_unseen_split(corpus, train_j, fraction=0.5, seed=0)
kept = [q for q in train_q if q.query_id in split.train_query_ids]
kept_j = train_j.restricted_to(split.train_query_ids)
print(f"seen/unseen split: {len(split.seen_doc_ids)} seen docs, "
      f"{len(split.unseen_doc_ids)} unseen, {len(kept)}/{len(train_q)} training queries kept")

pairs = sample_negatives(kept, kept_j, corpus, m=4, seed=7)
model = train_importance(pairs, corpus, epochs=150, lr=0.05, seed=0)
table = build_identifiers(corpus, model, n_min=2, n_max=8)
index = build_index(table)
dataset = make_dataset(kept, kept_j, val_fraction=0.2, seed=1)
scorer, _ = run_training(
    dataset, index, TrainingConfig(iterations=1, epochs=8, lr=0.5, seed=0),
    initial_scorer=FeatureScorer.zeros(index, build_term_weights(index, corpus, model)),
)
run = {q.query_id: search(q, index, scorer, beam_size=10).doc_ids() for q in test_q}
print(evaluate_seen_unseen(run, test_j, split, cutoffs=(1, 10)).format_table())

# --- 2. identifier-form ablation ------------------------------------------
corpus2, queries2, judgments2 = make_order_noise_corpus(seed=0)
_, _, noisy_q, noisy_j = split_by_wave(queries2, judgments2, test_wave=1)
freq_model = ImportanceModel(np.array([1.0, 0, 0, 0, 0, 0]))
table2 = build_identifiers(corpus2, freq_model, n_min=3, n_max=6)
index2 = build_index(table2)
shared = FeatureScorer.zeros(index2, build_term_weights(index2, corpus2, freq_model))
shared.weights[0] = 4.0
print("\nidentifier-form ablation (order-noise queries, shared scorer):")
print(ablate_identifier_scheme(index2, shared, noisy_q, noisy_j, beam_size=10,
                               cutoffs=(10,)).format_table())

# --- 3. efficiency ----------------------------------------------------------
print("\nefficiency (toy-scale numbers, schema only):")
print(efficiency_report(index2, shared, noisy_q[:6], beam_sizes=(10, 100)).format_table())
