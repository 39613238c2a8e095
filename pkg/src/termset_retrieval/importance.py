"""Term-importance estimation and document identifier construction.

A linear feature model with a ReLU clamp produces nonnegative per-term
weights for documents and queries. It is trained with an InfoNCE loss over
(query, positive, negatives) pairs where the matching score of a pair is
the sum of w_q(t) * w_d(t) over shared distinct terms. Each document's
identifier is its top-N terms by weight, deduplicated against collisions.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, CorpusStats, Document, Query, TrainingPair
from .errors import DataError, InvariantError

PLACEHOLDER_MARK = "⟂"  # prepended to synthetic per-document filler terms

TFIDF_FEATURES = ("tf_norm", "idf", "in_title", "first_pos", "term_len", "bias")


class TfidfFeaturizer:
    """Fixed six-feature schema computed from the text and corpus stats."""

    schema = "tfidf/1"
    names = TFIDF_FEATURES

    @property
    def dim(self) -> int:
        return len(self.names)

    def features(self, terms: list[str], title_terms: set[str], stats: CorpusStats):
        """Feature vector per distinct term of a term sequence."""
        length = max(len(terms), 1)
        counts = Counter(terms)
        first: dict[str, int] = {}
        for pos, term in enumerate(terms):
            first.setdefault(term, pos)
        out: dict[str, np.ndarray] = {}
        for term, count in counts.items():
            # df can be 0 for query-only terms; clamp so idf stays finite
            idf = math.log(stats.num_docs / max(stats.df.get(term, 1), 1))
            out[term] = np.array(
                [
                    count / length,
                    idf,
                    1.0 if term in title_terms else 0.0,
                    first[term] / length,
                    len(term) / 10.0,  # keep comparable to the other features
                    1.0,
                ]
            )
        return out


class EmbeddingFeaturizer:
    """Adapter for externally computed term embeddings (plus a bias slot).

    Terms missing from the table fall back to a zero vector, so only the
    bias contributes for them.
    """

    schema = "embedding/1"

    def __init__(self, table: dict[str, np.ndarray]):
        if not table:
            raise DataError("empty embedding table")
        dims = {len(v) for v in table.values()}
        if len(dims) != 1:
            raise DataError(f"inconsistent embedding dimensions: {sorted(dims)}")
        self.embedding_dim = dims.pop()
        self.table = {t: np.asarray(v, dtype=float) for t, v in table.items()}
        self.names = tuple(f"e{i}" for i in range(self.embedding_dim)) + ("bias",)

    @property
    def dim(self) -> int:
        return self.embedding_dim + 1

    def features(self, terms: list[str], title_terms: set[str], stats: CorpusStats):
        zero = np.zeros(self.embedding_dim)
        out: dict[str, np.ndarray] = {}
        for term in set(terms):
            out[term] = np.append(self.table.get(term, zero), 1.0)
        return out


def load_term_embeddings(path) -> dict[str, np.ndarray]:
    """Read "term<TAB>v1,v2,..." lines into an embedding table."""
    table: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"malformed embedding at line {lineno}")
            table[parts[0]] = np.array([float(x) for x in parts[1].split(",")])
    return table


@dataclass
class ImportanceModel:
    """Linear term-importance model: weight(term) = relu(features . weights)."""

    weights: np.ndarray
    tau: float = 1.0
    featurizer: TfidfFeaturizer | EmbeddingFeaturizer = field(default_factory=TfidfFeaturizer)

    @classmethod
    def zeros(cls, tau: float = 1.0, featurizer=None) -> "ImportanceModel":
        featurizer = featurizer or TfidfFeaturizer()
        return cls(np.zeros(featurizer.dim), tau, featurizer)


def featurize_term(term: str, document: Document, stats: CorpusStats, featurizer=None) -> np.ndarray:
    if term not in document.terms:
        raise DataError(f"term {term!r} does not occur in document {document.doc_id}")
    featurizer = featurizer or TfidfFeaturizer()
    return featurizer.features(document.terms, document.title_terms, stats)[term]


def score_terms(model: ImportanceModel, document: Document, stats: CorpusStats) -> dict[str, float]:
    """Nonnegative weight per distinct document term."""
    feats = model.featurizer.features(document.terms, document.title_terms, stats)
    return {t: float(max(f @ model.weights, 0.0)) for t, f in feats.items()}


def score_query_terms(model: ImportanceModel, query: Query, stats: CorpusStats) -> dict[str, float]:
    """Query-side weights; queries have no title, otherwise same featurization."""
    feats = model.featurizer.features(query.terms, set(), stats)
    return {t: float(max(f @ model.weights, 0.0)) for t, f in feats.items()}


# ---------------------------------------------------------------------------
# InfoNCE training
# ---------------------------------------------------------------------------


@dataclass
class _PreparedPair:
    """Per-candidate stacked features over the terms shared with the query."""

    query_feats: list[np.ndarray]  # one (k_c, dim) matrix per candidate
    doc_feats: list[np.ndarray]


def prepare_training_batch(
    pairs: list[TrainingPair],
    corpus: Corpus,
    featurizer=None,
    stats: CorpusStats | None = None,
) -> list[_PreparedPair]:
    """Precompute shared-term feature matrices; features are static during training."""
    featurizer = featurizer or TfidfFeaturizer()
    stats = stats or corpus.stats
    dim = featurizer.dim
    doc_cache: dict[str, dict[str, np.ndarray]] = {}

    def doc_features(doc_id: str) -> dict[str, np.ndarray]:
        if doc_id not in doc_cache:
            doc = corpus[doc_id]
            doc_cache[doc_id] = featurizer.features(doc.terms, doc.title_terms, stats)
        return doc_cache[doc_id]

    prepared = []
    for pair in pairs:
        qf = featurizer.features(pair.query.terms, set(), stats)
        query_feats, doc_feats = [], []
        for doc_id in [pair.positive] + list(pair.negatives):
            df = doc_features(doc_id)
            shared = sorted(set(qf) & set(df))
            if shared:
                query_feats.append(np.stack([qf[t] for t in shared]))
                doc_feats.append(np.stack([df[t] for t in shared]))
            else:
                query_feats.append(np.zeros((0, dim)))
                doc_feats.append(np.zeros((0, dim)))
        prepared.append(_PreparedPair(query_feats, doc_feats))
    return prepared


def infonce_loss_and_grad(weights: np.ndarray, batch: list[_PreparedPair], tau: float):
    """Mean InfoNCE loss over the batch and its analytic gradient.

    Candidate 0 of each pair is the positive. The matching score of a
    candidate is sum over shared terms of relu(fq.w) * relu(fd.w); the loss
    is the negative log-softmax (temperature tau) of the positive's score.
    """
    if tau <= 0:
        raise DataError(f"temperature must be positive, got {tau}")
    total_loss = 0.0
    total_grad = np.zeros_like(weights)
    for pair in batch:
        n_cand = len(pair.query_feats)
        scores = np.empty(n_cand)
        score_grads = []
        for c in range(n_cand):
            fq, fd = pair.query_feats[c], pair.doc_feats[c]
            zq, zd = fq @ weights, fd @ weights
            wq, wd = np.maximum(zq, 0.0), np.maximum(zd, 0.0)
            scores[c] = wq @ wd
            grad = ((zq > 0) * wd) @ fq + ((zd > 0) * wq) @ fd
            score_grads.append(grad)
        shifted = scores / tau
        shifted -= shifted.max()
        logits = np.exp(shifted)
        probs = logits / logits.sum()
        total_loss += -math.log(probs[0])
        dscore = probs.copy()
        dscore[0] -= 1.0
        for c in range(n_cand):
            total_grad += (dscore[c] / tau) * score_grads[c]
    n = max(len(batch), 1)
    return total_loss / n, total_grad / n


def train_importance(
    pairs: list[TrainingPair],
    corpus: Corpus,
    tau: float = 1.0,
    epochs: int = 50,
    lr: float = 0.05,
    seed: int = 0,
    featurizer=None,
) -> ImportanceModel:
    """Fit the importance model by full-batch gradient descent on the InfoNCE loss.

    Weights start from a small seeded positive perturbation: all features
    are nonnegative, so this keeps every ReLU alive, whereas at (or below)
    zero the clamp kills every gradient path.
    """
    if not pairs:
        raise DataError("no training pairs")
    featurizer = featurizer or TfidfFeaturizer()
    batch = prepare_training_batch(pairs, corpus, featurizer)
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.001, 0.01, size=featurizer.dim)
    for epoch in range(epochs):
        loss, grad = infonce_loss_and_grad(weights, batch, tau)
        if not math.isfinite(loss):
            raise ArithmeticError(
                f"non-finite InfoNCE loss {loss} at epoch {epoch} (lr={lr}, tau={tau})"
            )
        weights = weights - lr * grad
    return ImportanceModel(weights, tau, featurizer)


# ---------------------------------------------------------------------------
# Identifier selection
# ---------------------------------------------------------------------------


@dataclass
class IdentifierTable:
    """Per-document identifier: exactly n distinct terms, importance-descending."""

    n: int
    terms_by_doc: dict[str, list[str]]

    def __post_init__(self):
        self.validate()

    @property
    def doc_ids(self) -> list[str]:
        return sorted(self.terms_by_doc)

    @property
    def num_placeholders(self) -> int:
        return sum(
            1 for terms in self.terms_by_doc.values() for t in terms if is_placeholder(t)
        )

    def validate(self) -> None:
        seen: dict[frozenset, str] = {}
        for doc_id, terms in self.terms_by_doc.items():
            if len(terms) != self.n:
                raise InvariantError(f"identifier of {doc_id} has {len(terms)} terms, want {self.n}")
            key = frozenset(terms)
            if len(key) != self.n:
                raise InvariantError(f"identifier of {doc_id} repeats a term")
            if key in seen:
                raise InvariantError(f"identifier collision between {seen[key]} and {doc_id}")
            seen[key] = doc_id


def is_placeholder(term: str) -> bool:
    return term.startswith(PLACEHOLDER_MARK)


def _placeholder(doc_id: str, k: int) -> str:
    return f"{PLACEHOLDER_MARK}{doc_id}:{k}"


def ranked_terms(document: Document, weights: dict[str, float]) -> list[str]:
    """All distinct terms, best first: weight desc, then first occurrence, then text."""
    first: dict[str, int] = {}
    for pos, term in enumerate(document.terms):
        first.setdefault(term, pos)
    return sorted(first, key=lambda t: (-weights.get(t, 0.0), first[t], t))


def select_identifier(document: Document, weights: dict[str, float], n: int) -> list[str]:
    """Top-n distinct terms by weight, padded with synthetic terms when short."""
    if n < 1:
        raise DataError(f"identifier size must be >= 1, got {n}")
    ranked = ranked_terms(document, weights)
    selected = ranked[:n]
    k = 0
    while len(selected) < n:
        selected.append(_placeholder(document.doc_id, k))
        k += 1
    return selected


def resolve_collisions(
    identifiers: dict[str, list[str]],
    ranked: dict[str, list[str]],
    n: int,
) -> IdentifierTable:
    """Repair colliding identifier sets while keeping every identifier at length n.

    Within each group sharing the same term set, the smallest doc_id keeps
    its identifier; every other member drops its worst-ranked term for its
    next-ranked never-used term (a unique synthetic term once exhausted).
    The consumed-rank cursor only moves forward, so the loop terminates.
    """
    current = {d: list(terms) for d, terms in identifiers.items()}
    cursor = {d: n for d in current}
    placeholder_next = {
        d: sum(1 for t in terms if is_placeholder(t)) for d, terms in current.items()
    }

    def reorder(doc_id: str, terms: list[str]) -> list[str]:
        pos = {t: i for i, t in enumerate(ranked[doc_id])}
        real = sorted((t for t in terms if not is_placeholder(t)), key=lambda t: pos[t])
        fillers = sorted(t for t in terms if is_placeholder(t))
        return real + fillers

    while True:
        groups: dict[frozenset, list[str]] = {}
        for doc_id, terms in current.items():
            groups.setdefault(frozenset(terms), []).append(doc_id)
        colliding = [sorted(g) for g in groups.values() if len(g) > 1]
        if not colliding:
            break
        for group in sorted(colliding):
            for doc_id in group[1:]:
                terms = current[doc_id]
                ranks = ranked[doc_id]
                if cursor[doc_id] < len(ranks):
                    replacement = ranks[cursor[doc_id]]
                    cursor[doc_id] += 1
                else:
                    replacement = _placeholder(doc_id, placeholder_next[doc_id])
                    placeholder_next[doc_id] += 1
                # the worst-ranked term sits last in the ordered identifier
                current[doc_id] = reorder(doc_id, terms[:-1] + [replacement])
    return IdentifierTable(n, current)


def build_identifiers(
    corpus: Corpus,
    model: ImportanceModel,
    n_min: int = 1,
    n_max: int = 12,
    stats: CorpusStats | None = None,
) -> IdentifierTable:
    """Scan identifier sizes upward; stop at the first n needing no synthetic terms.

    If every n in [n_min, n_max] needs placeholders (duplicate or tiny
    documents), the table with the fewest placeholders wins, smallest n
    breaking ties. Callers should warn when the result still has
    placeholders.
    """
    if not len(corpus):
        raise DataError("empty corpus")
    if not 1 <= n_min <= n_max:
        raise DataError(f"bad identifier size range [{n_min}, {n_max}]")
    stats = stats or corpus.stats
    weights = {d.doc_id: score_terms(model, d, stats) for d in corpus.documents}
    ranked = {d.doc_id: ranked_terms(d, weights[d.doc_id]) for d in corpus.documents}
    best: IdentifierTable | None = None
    for n in range(n_min, n_max + 1):
        identifiers = {
            d.doc_id: select_identifier(d, weights[d.doc_id], n) for d in corpus.documents
        }
        table = resolve_collisions(identifiers, ranked, n)
        if table.num_placeholders == 0:
            return table
        if best is None or table.num_placeholders < best.num_placeholders:
            best = table
    return best


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_MODEL_FORMAT = "termset-importance/1"
_IDENTIFIER_FORMAT = "termset-identifiers/1"


def save_model(model: ImportanceModel, path) -> None:
    lines = [_MODEL_FORMAT, f"schema\t{model.featurizer.schema}", f"tau\t{model.tau!r}"]
    for name, value in zip(model.featurizer.names, model.weights):
        lines.append(f"feature\t{name}\t{float(value)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path, embedding_table: dict[str, np.ndarray] | None = None) -> ImportanceModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != _MODEL_FORMAT:
        raise DataError(f"{path}: not a {_MODEL_FORMAT} file")
    fields = {}
    features: list[tuple[str, float]] = []
    for line in lines[1:]:
        parts = line.split("\t")
        if parts[0] == "feature":
            features.append((parts[1], float(parts[2])))
        else:
            fields[parts[0]] = parts[1]
    schema = fields.get("schema", "")
    if schema == TfidfFeaturizer.schema:
        featurizer = TfidfFeaturizer()
    elif schema == EmbeddingFeaturizer.schema:
        if embedding_table is None:
            raise DataError(f"{path}: schema {schema} needs an embedding table to load")
        featurizer = EmbeddingFeaturizer(embedding_table)
    else:
        raise DataError(f"{path}: unknown feature schema {schema!r}")
    if tuple(name for name, _ in features) != tuple(featurizer.names):
        raise DataError(f"{path}: feature names do not match schema {schema}")
    weights = np.array([value for _, value in features])
    return ImportanceModel(weights, float(fields["tau"]), featurizer)


def write_identifier_file(table: IdentifierTable, path) -> None:
    lines = [f"{_IDENTIFIER_FORMAT}\t{table.n}"]
    for doc_id in table.doc_ids:
        lines.append(f"{doc_id}\t{','.join(table.terms_by_doc[doc_id])}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_identifier_file(path) -> IdentifierTable:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith(_IDENTIFIER_FORMAT):
        raise DataError(f"{path}: not a {_IDENTIFIER_FORMAT} file")
    header = lines[0].split("\t")
    if len(header) != 2:
        raise DataError(f"{path}: malformed identifier header")
    n = int(header[1])
    terms_by_doc: dict[str, list[str]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}: malformed identifier line {lineno}")
        doc_id, terms = parts
        if doc_id in terms_by_doc:
            raise DataError(f"{path}: duplicate doc_id {doc_id}")
        terms_by_doc[doc_id] = terms.split(",")
    return IdentifierTable(n, terms_by_doc)
