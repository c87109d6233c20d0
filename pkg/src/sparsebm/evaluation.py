"""Held-out evaluation: AIS partition estimation, exact small-scale oracles,
per-word perplexity, and the embedding-based interpretability score."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .corpus import Document, dense_counts
from .errors import FileFormatError
from .replicated_softmax import _softmax_rows
from .sbm import SbmModel, _gibbs_hidden_sweep, tree_sum_product
from .util import log_mean_exp, sigmoid, softplus

_AIS_STREAM = 41


# ---------------------------------------------------------------------------
# annealing schedule


@dataclass
class AisSchedule:
    """Piecewise-uniform ladder of inverse temperatures from 0 to 1.

    Each (start, end, count) segment contributes count values spaced
    uniformly over (start, end], so betas() returns the leading 0 followed
    by sum-of-counts intermediate temperatures ending exactly at 1.
    """

    segments: tuple

    def __init__(self, segments):
        segments = tuple((float(s), float(e), int(c)) for s, e, c in segments)
        if not segments:
            raise ValueError("schedule needs at least one segment")
        prev = 0.0
        for s, e, c in segments:
            if c < 1:
                raise ValueError("segment counts must be positive")
            if s < prev or e < s:
                raise ValueError("segments must be non-decreasing and contiguous")
            prev = e
        if segments[0][0] != 0.0 or segments[-1][1] != 1.0:
            raise ValueError("schedule must start at 0 and end at 1")
        object.__setattr__(self, "segments", segments)

    @property
    def n_intermediate(self) -> int:
        return sum(c for _, _, c in self.segments)

    def betas(self) -> np.ndarray:
        """All temperatures including the leading 0."""
        parts = [np.zeros(1)]
        for s, e, c in self.segments:
            parts.append(s + (e - s) * (np.arange(1, c + 1) / c))
        return np.concatenate(parts)


def default_schedule() -> AisSchedule:
    """10,000 intermediate distributions: 500 over (0, 0.5], 3,000 over
    (0.5, 0.9], 6,500 over (0.9, 1.0]."""
    return AisSchedule([(0.0, 0.5, 500), (0.5, 0.9, 3000), (0.9, 1.0, 6500)])


@dataclass
class AisEstimate:
    """Log partition estimate with per-run statistics."""

    log_z_mean: float
    log_z_base: float
    per_run_log_weights: np.ndarray
    doc_length: int

    @property
    def n_runs(self) -> int:
        return self.per_run_log_weights.size

    @property
    def standard_error(self) -> float:
        """Delta-method standard error of log Z from the run weights."""
        lw = self.per_run_log_weights
        if lw.size < 2:
            return float("inf")
        m = lw.max()
        w = np.exp(lw - m)
        mean = w.mean()
        std = w.std(ddof=1)
        return float(std / (math.sqrt(lw.size) * mean))


# ---------------------------------------------------------------------------
# unnormalized visible marginals (hidden units summed out exactly)


def _is_sbm(model) -> bool:
    return isinstance(model, SbmModel)


def _log_p_star_batch(model, counts_matrix, lengths, beta=1.0):
    """log sum_h exp(-E_beta) for each row; beta scales W, Wt and a."""
    base = counts_matrix @ model.b
    theta = counts_matrix @ model.W.T + lengths[:, None] * model.a
    if _is_sbm(model) and model.structure.n_tree_edges:
        edge_logw = beta * lengths[:, None] * model.Wt[None, :]
        _, _, logz_h = tree_sum_product(
            model.structure, beta * theta, edge_logw, want_marginals=False
        )
        return base + logz_h
    if _is_sbm(model):
        _, _, logz_h = tree_sum_product(
            model.structure,
            beta * theta,
            np.zeros((counts_matrix.shape[0], 0)),
            want_marginals=False,
        )
        return base + logz_h
    return base + softplus(beta * theta).sum(axis=1)


def log_p_star(model, doc: Document) -> float:
    """Unnormalized log probability of one document (token-sequence scale)."""
    u = dense_counts([doc], model.n_visible)
    return float(_log_p_star_batch(model, u, u.sum(axis=1))[0])


def log_multinomial_coeff(doc: Document) -> float:
    """log of the number of token orderings with the document's counts."""
    counts = doc.counts.astype(np.float64)
    return float(gammaln(doc.length + 1) - gammaln(counts + 1).sum())


# ---------------------------------------------------------------------------
# AIS


def _gibbs_full_step(model, u, h, lengths_int, lengths, beta, rng):
    """Hidden sweep then visible resample at inverse temperature beta."""
    if _is_sbm(model):
        h = _gibbs_hidden_sweep(model, u, lengths, h, rng, beta=beta)
    else:
        act = u @ model.W.T + lengths[:, None] * model.a
        p = sigmoid(beta * act)
        h = (rng.random(p.shape) < p).astype(np.float64)
    p_vis = _softmax_rows(model.b + beta * (h @ model.W))
    u = rng.multinomial(lengths_int, p_vis).astype(np.float64)
    return u, h


def ais_log_z(
    model,
    doc_length: int,
    schedule: AisSchedule,
    runs: int,
    rng: np.random.Generator,
) -> AisEstimate:
    """Annealed importance sampling estimate of log Z for one length class.

    The base distribution keeps the visible biases and scales all other
    parameters to zero, so its partition function is available in closed
    form: F log 2 + D log sum_k exp(b_k). Each run anneals a sampled
    document through the schedule with one full Gibbs sweep per
    temperature; log Z is the base value plus the log-mean-exp of the run
    weights.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if doc_length < 1:
        raise ValueError("doc_length must be at least 1")
    f = model.n_hidden
    betas = schedule.betas()
    log_z_base = f * math.log(2.0) + doc_length * float(logsumexp(model.b))

    p0 = np.exp(model.b - model.b.max())
    p0 /= p0.sum()
    u = rng.multinomial(doc_length, p0, size=runs).astype(np.float64)
    h = np.zeros((runs, f))
    lengths = np.full(runs, float(doc_length))
    lengths_int = np.full(runs, doc_length, dtype=np.int64)

    log_w = np.zeros(runs)
    lp_prev = _log_p_star_batch(model, u, lengths, beta=betas[0])
    for k in range(1, betas.size):
        beta = betas[k]
        lp_here = _log_p_star_batch(model, u, lengths, beta=beta)
        log_w += lp_here - lp_prev
        if k < betas.size - 1:
            u, h = _gibbs_full_step(model, u, h, lengths_int, lengths, beta, rng)
            lp_prev = _log_p_star_batch(model, u, lengths, beta=beta)
    return AisEstimate(
        log_z_mean=log_z_base + log_mean_exp(log_w),
        log_z_base=log_z_base,
        per_run_log_weights=log_w,
        doc_length=doc_length,
    )


# ---------------------------------------------------------------------------
# exact enumeration oracle


def _compositions(total: int, parts: int) -> np.ndarray:
    """All count vectors of the given length summing to total."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    rows = []
    for first in range(total + 1):
        rest = _compositions(total - first, parts - 1)
        block = np.empty((rest.shape[0], parts), dtype=np.int64)
        block[:, 0] = first
        block[:, 1:] = rest
        rows.append(block)
    return np.concatenate(rows, axis=0)


def _hidden_states(f: int) -> np.ndarray:
    states = np.arange(2**f)[:, None]
    return ((states >> np.arange(f)[None, :]) & 1).astype(np.float64)


def _model_parts(model):
    if _is_sbm(model):
        return model.W, model.a, model.b, model.structure.tree_edges, model.Wt
    return model.W, model.a, model.b, [], np.zeros(0)


def enumeration_cost(model, doc_length: int) -> int:
    k = model.n_visible
    f = model.n_hidden
    return math.comb(doc_length + k - 1, k - 1) * (2**f)


def _exact_terms(model, doc_length: int):
    """Joint unnormalized log weights over (count vector, hidden state).

    Token-level enumeration is collapsed analytically: each count vector is
    weighted by its multinomial coefficient, so the sum runs over the
    token-sequence space the partition function is defined on.
    """
    cost = enumeration_cost(model, doc_length)
    if cost > 10**7:
        raise ValueError(
            f"exact enumeration needs {cost} weighted terms, above the 1e7 limit"
        )
    w, a, b, edges, wt = _model_parts(model)
    comps = _compositions(doc_length, model.n_visible).astype(np.float64)
    mlog = gammaln(doc_length + 1) - gammaln(comps + 1).sum(axis=1)
    states = _hidden_states(model.n_hidden)
    theta = comps @ w.T + doc_length * a
    tree = np.zeros(states.shape[0])
    for e, (j, l) in enumerate(edges):
        tree += doc_length * wt[e] * states[:, j] * states[:, l]
    logits = (mlog + comps @ b)[:, None] + theta @ states.T + tree[None, :]
    return comps, states, logits


def exact_log_z(model, doc_length: int) -> float:
    """Exact log partition for documents of one length, by enumeration over
    all count vectors and all hidden states. Refuses oversized problems."""
    _, _, logits = _exact_terms(model, doc_length)
    return float(logsumexp(logits))


def exact_expectations(model, doc_length: int):
    """Exact model expectations used for gradient oracles.

    Returns a dict with E[h] (F,), E[u] (K,), E[h u^T] (F, K) and E[h_j h_l]
    per tree edge (E,), all under the model at the given document length.
    """
    comps, states, logits = _exact_terms(model, doc_length)
    log_z = logsumexp(logits)
    p = np.exp(logits - log_z)
    _, _, _, edges, _ = _model_parts(model)
    e_u = p.sum(axis=1) @ comps
    e_h = p.sum(axis=0) @ states
    e_hu = states.T @ (p.T @ comps)
    e_hh = np.zeros(len(edges))
    for e, (j, l) in enumerate(edges):
        e_hh[e] = p.sum(axis=0) @ (states[:, j] * states[:, l])
    return {"h": e_h, "u": e_u, "hu": e_hu, "hh": e_hh, "log_z": float(log_z)}


def exact_log_prob(model, doc: Document, include_multinomial: bool = False) -> float:
    """Exact held-out log probability via enumeration, for tiny models."""
    lp = log_p_star(model, doc) - exact_log_z(model, doc.length)
    if include_multinomial:
        lp += log_multinomial_coeff(doc)
    return lp


# ---------------------------------------------------------------------------
# perplexity


def per_document_log_probs(
    model, docs, log_z_by_length, include_multinomial: bool = False
) -> np.ndarray:
    """log P(doc) for each document given per-length log partition values."""
    u = dense_counts(docs, model.n_visible)
    lengths = u.sum(axis=1)
    lp = _log_p_star_batch(model, u, lengths)
    lp -= np.array([log_z_by_length[int(d)] for d in lengths])
    if include_multinomial:
        lp += np.array([log_multinomial_coeff(doc) for doc in docs])
    return lp


def perplexity(
    model,
    docs,
    schedule: AisSchedule | None = None,
    runs: int = 100,
    rng: np.random.Generator | None = None,
    include_multinomial: bool = False,
    log_z_fn=None,
) -> float:
    """Average per-word perplexity over held-out documents.

    One partition estimate is shared per distinct document length. log_z_fn
    overrides AIS with any callable (model, length) -> log Z, e.g. the exact
    oracle for tiny models. The multinomial token-permutation factor is off
    by default; with it off, the zero-weight model scores exactly the
    vocabulary size.
    """
    docs = list(docs)
    if not docs:
        raise ValueError("docs must be non-empty")
    lengths = sorted({doc.length for doc in docs})
    if log_z_fn is None:
        if schedule is None:
            schedule = default_schedule()
        if rng is None:
            raise ValueError("rng is required when estimating log Z with AIS")
        log_z_by_length = {
            d: ais_log_z(model, d, schedule, runs, rng).log_z_mean for d in lengths
        }
    else:
        log_z_by_length = {d: float(log_z_fn(model, d)) for d in lengths}
    lp = per_document_log_probs(model, docs, log_z_by_length, include_multinomial)
    d = np.array([doc.length for doc in docs], dtype=np.float64)
    return float(np.exp(-np.mean(lp / d)))


# ---------------------------------------------------------------------------
# embeddings and interpretability


class EmbeddingTable:
    """Word vectors of one fixed dimension."""

    def __init__(self, vectors: dict, dim: int):
        self.vectors = vectors
        self.dim = dim

    def __contains__(self, word) -> bool:
        return word in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def get(self, word):
        return self.vectors.get(word)


def load_embeddings(path) -> EmbeddingTable:
    """Parse "word v1 ... vd" lines; the first line fixes the dimension.

    Duplicate words keep the last occurrence (with a warning); inconsistent
    dimensions or unparseable values raise with the line number.
    """
    vectors: dict = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            parts = raw.split()
            if len(parts) < 2:
                raise FileFormatError(f"{path}: expected word and values at line {ln}")
            word = parts[0]
            try:
                values = np.array([float(tok) for tok in parts[1:]])
            except ValueError:
                raise FileFormatError(
                    f"{path}: unparseable vector value at line {ln}"
                ) from None
            if np.any(np.isnan(values)):
                raise FileFormatError(f"{path}: NaN vector value at line {ln}")
            if dim is None:
                dim = values.size
            elif values.size != dim:
                raise FileFormatError(f"{path}: dimension mismatch at line {ln}")
            if word in vectors:
                warnings.warn(f"duplicate embedding for {word!r}, keeping last")
            vectors[word] = values
    if not vectors:
        raise FileFormatError(f"{path}: embedding file is empty")
    return EmbeddingTable(vectors, dim)


def _unit_weight_row(model, j: int, mask=None):
    if _is_sbm(model):
        candidates = model.structure.visible_indices(j)
        return candidates, np.abs(model.W[j, candidates])
    if mask is not None:
        candidates = np.nonzero(mask[j])[0]
        return candidates, np.abs(model.W[j, candidates])
    candidates = np.arange(model.n_visible)
    return candidates, np.abs(model.W[j])


def unit_top_words(model, vocab, j: int, top_n: int = 10, mask=None):
    """The unit's top words by absolute weight, ties toward lower index.

    For sparse models only connected words compete; a pruned model's mask
    restricts the candidates the same way.
    """
    if not 0 <= j < model.n_hidden:
        raise ValueError(f"hidden index {j} out of range")
    candidates, magnitude = _unit_weight_row(model, j, mask)
    order = np.lexsort((candidates, -magnitude))
    return [vocab[candidates[i]] for i in order[:top_n]]


def _cosine(u, v) -> float:
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return float("nan")
    return float(np.dot(u, v) / (nu * nv))


def interpretability_unit(
    model, vocab, j: int, emb: EmbeddingTable, top_n: int = 10, mask=None
) -> float:
    """Mean pairwise cosine similarity of the unit's top-weighted words.

    Words missing from the table (or with a zero vector) are skipped; with
    fewer than two surviving words the score is 0.
    """
    words = unit_top_words(model, vocab, j, top_n, mask)
    vecs = [emb.get(w) for w in words]
    vecs = [v for v in vecs if v is not None and np.linalg.norm(v) > 0.0]
    if len(vecs) < 2:
        return 0.0
    total = 0.0
    pairs = 0
    for i in range(len(vecs)):
        for k in range(i + 1, len(vecs)):
            total += _cosine(vecs[i], vecs[k])
            pairs += 1
    return total / pairs


def interpretability_model(
    model, vocab, emb: EmbeddingTable, top_n: int = 10, mask=None
) -> float:
    """Model score: mean of the per-unit compactness over all hidden units."""
    scores = [
        interpretability_unit(model, vocab, j, emb, top_n, mask)
        for j in range(model.n_hidden)
    ]
    return float(np.mean(scores))
