"""The likelihood-adapted training loop.

Iteration 1 teacher-forces the importance-ordered permutation of each
training document. Later iterations re-sample candidate orderings from the
current model, keep the one the model already likes best, and train on
that instead, so the targets drift toward orderings the decoder will
actually explore at query time.
"""

from termset_retrieval import (
    build_identifiers,
    build_index,
    build_term_weights,
    sample_negatives,
    search,
    train_importance,
)
from termset_retrieval.learning import TrainingConfig, make_dataset, run_training, validation_recall
from termset_retrieval.scorer import FeatureScorer
from termset_retrieval.synthetic import make_bridging_corpus, split_by_wave

corpus, queries, judgments = make_bridging_corpus(num_docs=30, seed=4)
train_q, train_j, test_q, test_j = split_by_wave(queries, judgments, test_wave=1)
print(f"bridging corpus: {len(corpus)} docs, {len(train_q)} train / {len(test_q)} test queries")

pairs = sample_negatives(train_q, train_j, corpus, m=4, seed=7)
model = train_importance(pairs, corpus, epochs=150, lr=0.05, seed=0)
table = build_identifiers(corpus, model, n_min=2, n_max=8)
index = build_index(table)
term_weights = build_term_weights(index, corpus, model)
dataset = make_dataset(train_q, train_j, val_fraction=0.25, seed=1)

print("\nadaptive run (2 iterations):")
adaptive, stats = run_training(
    dataset,
    index,
    TrainingConfig(iterations=2, samples=4, topk_sampling=4, epochs=8, lr=0.5, seed=5),
    initial_scorer=FeatureScorer.zeros(index, term_weights),
)
for s in stats:
    print(
        f"  iteration {s.iteration}: mean objective loglik {s.mean_objective_logprob:+.3f}, "
        f"val recall@10 {s.val_recall:.3f}, target churn {s.target_churn:.2f}"
    )

print("\nnon-adaptive baseline (1 iteration, same seeds):")
baseline, base_stats = run_training(
    dataset,
    index,
    TrainingConfig(iterations=1, epochs=8, lr=0.5, seed=5),
    initial_scorer=FeatureScorer.zeros(index, term_weights),
)
print(f"  iteration 1: mean objective loglik {base_stats[0].mean_objective_logprob:+.3f}, "
      f"val recall@10 {base_stats[0].val_recall:.3f}")

a = validation_recall(adaptive, index, dataset.validation, beam_size=10)
b = validation_recall(baseline, index, dataset.validation, beam_size=10)
print(f"\nfinal validation recall@10: adaptive {a:.3f} vs non-adaptive {b:.3f}")

# Held-out wave of queries, never seen by either run.
hits = 0
for q in test_q:
    docs = search(q, index, adaptive, beam_size=10).doc_ids()
    hits += bool(docs) and docs[0] in test_j.relevant(q.query_id)
print(f"held-out top-1 hits: {hits}/{len(test_q)}")
