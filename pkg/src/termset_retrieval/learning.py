"""Likelihood-adapted sequence training.

Each iteration re-derives a target permutation per (query, positive) pair:
candidate orderings are sampled stepwise from the current model restricted
to the document's remaining identifier terms, and the candidate with the
highest overall likelihood becomes the teacher-forcing target for the next
round. Iteration one starts from an initialization policy instead.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import Judgments, Query
from .decoder import search
from .errors import DataError, InvariantError
from .index import Index
from .scorer import FeatureScorer, Scorer, sequence_logprob

INIT_POLICIES = ("importance", "random", "likelihood")


@dataclass
class TrainingConfig:
    iterations: int = 2
    samples: int = 4
    topk_sampling: int = 4
    init: str = "importance"
    epochs: int = 10
    lr: float = 0.5
    seed: int = 0
    beam_eval: int = 10

    def __post_init__(self):
        if self.iterations < 1 or self.samples < 1 or self.topk_sampling < 1:
            raise DataError("iterations, samples, and topk_sampling must all be >= 1")
        if self.init not in INIT_POLICIES:
            raise DataError(f"unknown init policy {self.init!r}; choose from {INIT_POLICIES}")
        if self.epochs < 1 or self.lr <= 0:
            raise DataError("epochs must be >= 1 and lr positive")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "TrainingConfig":
        kwargs = {}
        for key, cast in (
            ("iterations", int),
            ("samples", int),
            ("topk_sampling", int),
            ("init", str),
            ("epochs", int),
            ("lr", float),
            ("seed", int),
            ("beam_eval", int),
        ):
            if key in mapping:
                kwargs[key] = cast(mapping[key])
        return cls(**kwargs)


@dataclass
class IterationStats:
    iteration: int
    mean_objective_logprob: float
    val_recall: float | None
    target_churn: float
    num_pairs: int
    num_pseudo: int

    def to_record(self) -> dict:
        return {
            "iteration": self.iteration,
            "mean_objective_logprob": self.mean_objective_logprob,
            "val_recall": self.val_recall,
            "target_churn": self.target_churn,
            "num_pairs": self.num_pairs,
            "num_pseudo": self.num_pseudo,
        }


@dataclass
class LearningPair:
    query: Query
    doc_id: str
    pseudo: bool = False


@dataclass
class LearningDataset:
    train: list[LearningPair]
    validation: list[tuple[Query, set[str]]] = field(default_factory=list)


def make_dataset(
    queries: list[Query],
    judgments: Judgments,
    val_fraction: float = 0.2,
    seed: int = 0,
    pseudo_pairs: list[tuple[Query, str]] | None = None,
) -> LearningDataset:
    """Split judged queries into train pairs and a held-out validation set.

    The split is by query, so validation queries contribute no training
    pairs. Pseudo pairs always train and are tagged for the stats.
    """
    if not 0 <= val_fraction < 1:
        raise DataError(f"val_fraction must be in [0, 1), got {val_fraction}")
    by_id = {q.query_id: q for q in queries}
    qids = [q for q in judgments.query_ids if q in by_id]
    if not qids:
        raise DataError("no judged queries available")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(qids))
    n_val = int(round(val_fraction * len(qids)))
    val_ids = {qids[i] for i in order[:n_val]}
    train, validation = [], []
    for qid in qids:
        if qid in val_ids:
            validation.append((by_id[qid], judgments.relevant(qid)))
        else:
            for doc_id in sorted(judgments.relevant(qid)):
                train.append(LearningPair(by_id[qid], doc_id))
    for query, doc_id in pseudo_pairs or []:
        train.append(LearningPair(query, doc_id, pseudo=True))
    if not train:
        raise DataError("empty training split; lower val_fraction")
    return LearningDataset(train, validation)


def _derived_seed(*parts) -> int:
    digest = hashlib.blake2b(":".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "big")


def init_permutation(
    doc_id: str,
    index: Index,
    policy: str,
    scorer: Scorer | None = None,
    seed: int = 0,
    query: Query | None = None,
) -> tuple[int, ...]:
    """Initial target ordering of a document's identifier terms.

    importance: the stored importance-descending order. random: a seeded
    shuffle (stable per document). likelihood: greedy argmax rollout of the
    supplied scorer over the remaining identifier terms, ties falling back
    to the stored order.
    """
    ordered = [int(t) for t in index.identifier_ids(doc_id, ordered=True)]
    if policy == "importance":
        return tuple(ordered)
    if policy == "random":
        rng = np.random.default_rng(_derived_seed("init", seed, doc_id))
        return tuple(ordered[i] for i in rng.permutation(len(ordered)))
    if policy == "likelihood":
        if scorer is None:
            raise DataError("likelihood initialization requires a scorer")
        query = query or Query("", "", [])
        node = index.root()
        remaining = list(ordered)
        out = []
        while remaining:
            logprobs = scorer.step_logprob(query, node, np.array(remaining))
            pick = remaining[int(np.argmax(logprobs))]
            out.append(pick)
            remaining.remove(pick)
            node = node.extend(pick)
        return tuple(out)
    raise DataError(f"unknown init policy {policy!r}")


def sample_permutations(
    query: Query,
    doc_id: str,
    index: Index,
    scorer: Scorer,
    samples: int,
    topk: int,
    seed: int = 0,
) -> list[tuple[int, ...]]:
    """Sample identifier orderings stepwise from the scorer's distribution.

    At each step the distribution is restricted to the topk most probable
    of the document's remaining identifier terms and renormalized. topk=1
    degenerates to a greedy rollout that ignores the seed.
    """
    if samples < 1 or topk < 1:
        raise DataError("samples and topk must be >= 1")
    ordered = [int(t) for t in index.identifier_ids(doc_id, ordered=True)]
    rng = np.random.default_rng(_derived_seed("sample", seed, query.query_id, doc_id))
    out = []
    for _ in range(samples):
        node = index.root()
        remaining = list(ordered)
        seq = []
        while remaining:
            logprobs = scorer.step_logprob(query, node, np.array(remaining))
            k = min(topk, len(remaining))
            # stable sort keeps stored-order precedence between tied terms
            top = np.argsort(-logprobs, kind="stable")[:k]
            shifted = logprobs[top] - logprobs[top].max()
            probs = np.exp(shifted)
            probs /= probs.sum()
            pick = remaining[int(top[rng.choice(k, p=probs)])]
            seq.append(pick)
            remaining.remove(pick)
            node = node.extend(pick)
        out.append(tuple(seq))
    return out


def select_objective(
    candidates: list[tuple[int, ...]],
    query: Query,
    scorer: Scorer,
    index: Index,
) -> tuple[tuple[int, ...], float]:
    """Pick the candidate permutation with the highest sequence likelihood.

    All candidates must order the same identifier set; ties go to the
    lexicographically smaller sequence.
    """
    if not candidates:
        raise DataError("no candidate permutations")
    reference = frozenset(candidates[0])
    n = len(candidates[0])
    best_seq, best_ll = None, -math.inf
    for seq in candidates:
        if len(seq) != n or frozenset(seq) != reference or len(set(seq)) != n:
            raise DataError(f"candidate {seq} is not a permutation of the identifier")
        ll = sequence_logprob(scorer, query, seq, index)
        if ll > best_ll or (ll == best_ll and seq < best_seq):
            best_seq, best_ll = seq, ll
    return best_seq, best_ll


def _validate_target(index: Index, doc_id: str, target: tuple[int, ...]) -> None:
    registered = frozenset(int(t) for t in index.identifier_ids(doc_id))
    if frozenset(target) != registered or len(target) != index.n:
        raise InvariantError(f"target for {doc_id} is not a permutation of its identifier")


def validation_recall(
    scorer: Scorer,
    index: Index,
    validation: list[tuple[Query, set[str]]],
    beam_size: int,
    cutoff: int = 10,
) -> float | None:
    if not validation:
        return None
    total = 0.0
    for query, relevant in validation:
        result = search(query, index, scorer, beam_size)
        top = result.doc_ids()[:cutoff]
        total += len(relevant.intersection(top)) / len(relevant)
    return total / len(validation)


def run_training(
    dataset: LearningDataset,
    index: Index,
    config: TrainingConfig,
    initial_scorer: FeatureScorer | None = None,
) -> tuple[FeatureScorer, list[IterationStats]]:
    """The iterative loop: derive targets, teacher-force, track validation recall.

    Iteration 1 trains on initialization-policy targets; later iterations
    sample candidates under the previous model (plus the previous target,
    so the selected objective never regresses) and keep the highest-
    likelihood ordering. Stops early once validation recall stops
    improving and returns the best snapshot.
    """
    if not dataset.train:
        raise DataError("empty dataset")
    scorer = initial_scorer.copy() if initial_scorer is not None else FeatureScorer.zeros(index)
    stats: list[IterationStats] = []
    prev_targets: list[tuple[int, ...]] | None = None
    best_scorer, best_recall = scorer, -math.inf
    num_pseudo = sum(1 for p in dataset.train if p.pseudo)

    for t in range(1, config.iterations + 1):
        targets: list[tuple[int, ...]] = []
        objective_total = 0.0
        for i, pair in enumerate(dataset.train):
            if t == 1:
                target = init_permutation(
                    pair.doc_id,
                    index,
                    config.init,
                    scorer=scorer,
                    seed=config.seed,
                    query=pair.query,
                )
                ll = sequence_logprob(scorer, pair.query, target, index)
            else:
                candidates = sample_permutations(
                    pair.query,
                    pair.doc_id,
                    index,
                    scorer,
                    config.samples,
                    config.topk_sampling,
                    seed=_derived_seed(config.seed, t),
                )
                candidates.append(prev_targets[i])
                target, ll = select_objective(candidates, pair.query, scorer, index)
            _validate_target(index, pair.doc_id, target)
            targets.append(target)
            objective_total += ll
        churn = (
            0.0
            if prev_targets is None
            else sum(a != b for a, b in zip(targets, prev_targets)) / len(targets)
        )

        batch = [(pair.query, target) for pair, target in zip(dataset.train, targets)]
        for _ in range(config.epochs):
            scorer.train_step(batch, index, config.lr)

        recall = validation_recall(scorer, index, dataset.validation, config.beam_eval)
        stats.append(
            IterationStats(
                iteration=t,
                mean_objective_logprob=objective_total / len(targets),
                val_recall=recall,
                target_churn=churn,
                num_pairs=len(targets),
                num_pseudo=num_pseudo,
            )
        )
        prev_targets = targets

        if recall is not None:
            if recall > best_recall:
                best_recall, best_scorer = recall, scorer.copy()
            elif t >= 2:
                break  # validation recall stopped improving
        else:
            best_scorer = scorer

    return best_scorer, stats
