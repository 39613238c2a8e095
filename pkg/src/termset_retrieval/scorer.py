"""Conditional term-generation probabilities Pr(next term | prefix, query).

The scorer interface normalizes over the candidate (feasible) set it is
handed at each step. The reference implementation is a linear model over
cheap query/prefix features with an exact softmax, so gradients are
analytic and the whole pipeline stays deterministic. Neural plug-ins can
implement the same interface and normalize however they like.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod

import numpy as np

from .corpus import Corpus, CorpusStats, Query
from .errors import DataError
from .importance import ImportanceModel, score_terms
from .index import Index

STEP_FEATURES = (
    "in_query",
    "query_prefix4",
    "term_weight",
    "log1p_postings",
    "position",
    "bias",
)

_SCORER_FORMAT = "termset-scorer/1"


class Scorer(ABC):
    """Per-step log-probabilities over a candidate term set.

    Plug-in contract: implementations receive the feasible candidate set
    but may normalize over their own (larger) vocabulary; the reference
    implementation normalizes over the candidates. A scorer built on a
    subword model must treat its term-separator symbol as the term
    boundary and return each candidate term's total log-probability.
    """

    @abstractmethod
    def step_logprob(self, query: Query, node, candidates: np.ndarray) -> np.ndarray:
        """Return one log-probability per candidate term id."""


class UniformScorer(Scorer):
    """Every feasible candidate equally likely; handy for oracles and ties."""

    def step_logprob(self, query, node, candidates):
        if len(candidates) == 0:
            raise DataError("empty candidate set")
        return np.full(len(candidates), -math.log(len(candidates)))


class FeatureScorer(Scorer):
    """Linear softmax over step features, trainable by teacher forcing.

    `terms` mirrors the index dictionary (sorted); `term_weights` holds the
    corpus-max importance weight per term. Both are fixed at construction,
    only `weights` learns.
    """

    def __init__(self, weights: np.ndarray, terms: list[str], term_weights: np.ndarray):
        if len(terms) != len(term_weights):
            raise DataError("term list and term weight table differ in length")
        self.weights = np.asarray(weights, dtype=float)
        if self.weights.shape != (len(STEP_FEATURES),):
            raise DataError(f"expected {len(STEP_FEATURES)} step weights")
        self.terms = list(terms)
        self.term_weights = np.asarray(term_weights, dtype=float)
        self._term_id = {t: i for i, t in enumerate(self.terms)}
        self._by_prefix4: dict[str, list[int]] = {}
        for i, t in enumerate(self.terms):
            self._by_prefix4.setdefault(t[:4], []).append(i)

    @classmethod
    def zeros(cls, index: Index, term_weights: np.ndarray | None = None) -> "FeatureScorer":
        if term_weights is None:
            term_weights = np.zeros(len(index.dictionary))
        return cls(np.zeros(len(STEP_FEATURES)), index.dictionary.terms, term_weights)

    def copy(self) -> "FeatureScorer":
        return FeatureScorer(self.weights.copy(), self.terms, self.term_weights)

    def _query_term_ids(self, query: Query) -> tuple[np.ndarray, np.ndarray]:
        exact = sorted({self._term_id[t] for t in query.terms if t in self._term_id})
        prefix: set[int] = set()
        for t in query.terms:
            prefix.update(self._by_prefix4.get(t[:4], ()))
        return np.array(exact, dtype=np.int64), np.array(sorted(prefix), dtype=np.int64)

    def step_features(self, query: Query, node, candidates: np.ndarray) -> np.ndarray:
        candidates = np.asarray(candidates, dtype=np.int64)
        exact_ids, prefix_ids = self._query_term_ids(query)
        feats = np.empty((len(candidates), len(STEP_FEATURES)))
        feats[:, 0] = np.isin(candidates, exact_ids)
        feats[:, 1] = np.isin(candidates, prefix_ids)
        feats[:, 2] = self.term_weights[candidates]
        feats[:, 3] = np.log1p(node.child_sizes(candidates))
        feats[:, 4] = (node.depth + 1) / node.index.n
        feats[:, 5] = 1.0
        return feats

    def step_logprob(self, query, node, candidates):
        if len(candidates) == 0:
            raise DataError("empty candidate set")
        scores = self.step_features(query, node, candidates) @ self.weights
        return scores - _logsumexp(scores)

    # -- training -----------------------------------------------------------

    def loss_and_grad(self, batch, searchable):
        """Teacher-forced cross-entropy over (query, target id sequence) pairs.

        Loss is the mean negative sequence log-likelihood; the gradient is
        the usual softmax difference E_p[features] - features[target],
        accumulated along each target's prefix chain.
        """
        if not batch:
            raise DataError("empty training batch")
        total_loss = 0.0
        grad = np.zeros_like(self.weights)
        for query, target in batch:
            node = searchable.root()
            for term_id in target:
                candidates = node.feasible_terms()
                pos = int(np.searchsorted(candidates, term_id))
                if pos >= len(candidates) or candidates[pos] != term_id:
                    raise DataError(
                        f"target term id {term_id} infeasible at prefix {node.prefix_ids}"
                    )
                feats = self.step_features(query, node, candidates)
                scores = feats @ self.weights
                logprobs = scores - _logsumexp(scores)
                total_loss -= logprobs[pos]
                probs = np.exp(logprobs)
                grad += probs @ feats - feats[pos]
                node = node.extend(int(term_id))
        return total_loss / len(batch), grad / len(batch)

    def train_step(self, batch, searchable, lr: float) -> float:
        """One full-batch gradient step; returns the pre-update loss."""
        loss, grad = self.loss_and_grad(batch, searchable)
        if not math.isfinite(loss):
            raise ArithmeticError(f"non-finite teacher-forcing loss {loss} (lr={lr})")
        self.weights -= lr * grad
        return loss


def _logsumexp(scores: np.ndarray) -> float:
    m = scores.max()
    return m + math.log(np.exp(scores - m).sum())


def sequence_logprob(scorer: Scorer, query: Query, term_ids, searchable) -> float:
    """Sum of step log-probabilities along a valid identifier prefix."""
    node = searchable.root()
    total = 0.0
    for term_id in term_ids:
        candidates = node.feasible_terms()
        pos = int(np.searchsorted(candidates, term_id))
        if pos >= len(candidates) or candidates[pos] != term_id:
            raise DataError(f"term id {int(term_id)} infeasible at prefix {node.prefix_ids}")
        total += float(scorer.step_logprob(query, node, candidates)[pos])
        node = node.extend(int(term_id))
    return total


def build_term_weights(
    index: Index, corpus: Corpus, model: ImportanceModel, stats: CorpusStats | None = None
) -> np.ndarray:
    """Corpus-max importance weight per dictionary term (0 for synthetic terms)."""
    stats = stats or corpus.stats
    table = np.zeros(len(index.dictionary))
    for doc in corpus.documents:
        for term, weight in score_terms(model, doc, stats).items():
            if term in index.dictionary:
                tid = index.dictionary.id_of(term)
                table[tid] = max(table[tid], weight)
    return table


def save_scorer(scorer: FeatureScorer, path) -> None:
    lines = [
        _SCORER_FORMAT,
        "features\t" + " ".join(STEP_FEATURES),
        "weights\t" + " ".join(repr(float(w)) for w in scorer.weights),
        f"terms\t{len(scorer.terms)}",
    ]
    for term, weight in zip(scorer.terms, scorer.term_weights):
        lines.append(f"{term}\t{float(weight)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scorer(path) -> FeatureScorer:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _SCORER_FORMAT:
        raise DataError(f"{path}: not a {_SCORER_FORMAT} file")
    fields = dict(line.split("\t", 1) for line in lines[1:4])
    if fields.get("features") != " ".join(STEP_FEATURES):
        raise DataError(f"{path}: unexpected step-feature schema")
    weights = np.array([float(x) for x in fields["weights"].split(" ")])
    count = int(fields["terms"])
    terms, term_weights = [], []
    for line in lines[4:]:
        if not line:
            continue
        term, _, weight = line.rpartition("\t")
        terms.append(term)
        term_weights.append(float(weight))
    if len(terms) != count:
        raise DataError(f"{path}: vocabulary count mismatch")
    return FeatureScorer(weights, terms, np.array(term_weights))


def check_compatible(scorer: FeatureScorer, index: Index) -> None:
    if scorer.terms != index.dictionary.terms:
        raise DataError("vocabulary mismatch between index and scorer")
