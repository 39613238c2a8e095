"""Validity-constrained beam search over term-set identifiers.

At every step each surviving hypothesis is extended with every feasible
term, the extensions are scored globally, and the top K by cumulative
log-likelihood survive. After exactly N steps every hypothesis names one
document; documents reached through several permutations are scored by the
maximum likelihood among them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .corpus import Query
from .errors import DataError, InvariantError
from .scorer import Scorer, sequence_logprob


@dataclass
class Hypothesis:
    term_ids: tuple[int, ...]
    logprob: float
    node: object  # prefix node handle

    def terms(self) -> tuple[str, ...]:
        dictionary = self.node.index.dictionary
        return tuple(dictionary.term_of(int(t)) for t in self.term_ids)


@dataclass
class RankedDoc:
    doc_id: str
    score: float
    permutation: tuple[str, ...]


@dataclass
class SearchResult:
    query_id: str
    beam_size: int | None
    entries: list[RankedDoc] = field(default_factory=list)

    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    def canonical(self) -> str:
        """Stable textual form, used by determinism checks."""
        return "\n".join(
            f"{e.doc_id}\t{e.score!r}\t{','.join(e.permutation)}" for e in self.entries
        )


def constrained_beam_search(
    query: Query,
    searchable,
    scorer: Scorer,
    beam_size: int | None = 100,
    dedupe_sets: bool = False,
) -> list[Hypothesis]:
    """Run N constrained decoding steps and return the completed hypotheses.

    `searchable` is an index-like object exposing root(), n, doc_ids and a
    dictionary; beam_size=None keeps every valid extension (exhaustive).
    With dedupe_sets, order variants of the same prefix set collapse to
    their best-scoring member before the top-K cut; by default they stay
    distinct because position-aware scorers rate them differently.
    """
    if beam_size is not None and beam_size < 1:
        raise DataError(f"beam size must be >= 1, got {beam_size}")
    beam = [Hypothesis((), 0.0, searchable.root())]
    for _ in range(searchable.n):
        extensions = []
        for hyp in beam:
            candidates = hyp.node.feasible_terms()
            logprobs = scorer.step_logprob(query, hyp.node, candidates)
            for term_id, lp in zip(candidates, logprobs):
                extensions.append((hyp, int(term_id), hyp.logprob + float(lp)))
        extensions.sort(key=_extension_order(searchable))
        if dedupe_sets:
            extensions = _dedupe_by_set(extensions)
        if beam_size is not None:
            extensions = extensions[:beam_size]
        beam = [
            Hypothesis(hyp.term_ids + (term_id,), ll, hyp.node.extend(term_id))
            for hyp, term_id, ll in extensions
        ]
    return beam


def _extension_order(searchable):
    """Deterministic tie rule: likelihood desc, then leading posting doc, then sequence.

    Term ids are assigned in sorted term order, so comparing id tuples is
    the same as comparing the term strings lexicographically.
    """
    doc_ids = searchable.doc_ids

    def key(ext):
        hyp, term_id, ll = ext
        child = hyp.node.child_postings(term_id)
        return (-ll, doc_ids[int(child[0])], hyp.term_ids + (term_id,))

    return key


def _dedupe_by_set(extensions):
    seen: set[frozenset] = set()
    kept = []
    for ext in extensions:
        hyp, term_id, _ = ext
        key = frozenset(hyp.term_ids) | {term_id}
        if key not in seen:
            seen.add(key)
            kept.append(ext)
    return kept


def rank_documents(
    hypotheses: list[Hypothesis],
    query_id: str = "",
    beam_size: int | None = None,
) -> SearchResult:
    """Group completed hypotheses by document and keep each one's best permutation."""
    best: dict[str, tuple[float, tuple[int, ...], Hypothesis]] = {}
    for hyp in hypotheses:
        doc_id = hyp.node.complete_doc()
        if doc_id is None:
            raise InvariantError("cannot rank an incomplete hypothesis")
        cur = best.get(doc_id)
        if cur is None or hyp.logprob > cur[0] or (hyp.logprob == cur[0] and hyp.term_ids < cur[1]):
            best[doc_id] = (hyp.logprob, hyp.term_ids, hyp)
    ranked = sorted(best.items(), key=lambda kv: (-kv[1][0], kv[0]))
    entries = [RankedDoc(doc_id, score, hyp.terms()) for doc_id, (score, _, hyp) in ranked]
    return SearchResult(query_id, beam_size, entries)


def search(
    query: Query,
    searchable,
    scorer: Scorer,
    beam_size: int | None = 100,
    dedupe_sets: bool = False,
) -> SearchResult:
    hyps = constrained_beam_search(query, searchable, scorer, beam_size, dedupe_sets)
    return rank_documents(hyps, query.query_id, beam_size)


def brute_force_best_permutation(
    query: Query,
    doc_id: str,
    scorer: Scorer,
    index,
    max_n: int = 8,
) -> tuple[tuple[str, ...], float]:
    """Exact argmax over all N! identifier orderings; the decoder's test oracle."""
    if index.n > max_n:
        raise DataError(f"refusing {index.n}! permutations (limit n <= {max_n})")
    ids = [int(t) for t in index.identifier_ids(doc_id)]
    best_seq: tuple[int, ...] | None = None
    best_ll = -np.inf
    for perm in itertools.permutations(sorted(ids)):
        ll = sequence_logprob(scorer, query, perm, index)
        if ll > best_ll:
            best_ll, best_seq = ll, perm
    terms = tuple(index.dictionary.term_of(t) for t in best_seq)
    return terms, float(best_ll)


# ---------------------------------------------------------------------------
# Run output ("query_id Q0 doc_id rank score run_tag")
# ---------------------------------------------------------------------------


def format_run_lines(results: list[SearchResult], tag: str = "termset") -> list[str]:
    if any(c.isspace() for c in tag):
        raise DataError("run tag must not contain whitespace")
    lines = []
    for result in results:
        for rank, entry in enumerate(result.entries, start=1):
            lines.append(
                f"{result.query_id} Q0 {entry.doc_id} {rank} {entry.score:.6f} {tag}"
            )
    return lines


def write_run_file(results: list[SearchResult], path, tag: str = "termset") -> None:
    lines = format_run_lines(results, tag)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
