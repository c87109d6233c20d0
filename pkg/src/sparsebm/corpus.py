"""Bag-of-words corpora in the UCI sparse text format.

Covers loading and writing docword/vocab file pairs, vocabulary selection by
total frequency or average TF-IDF, deterministic train/validation/test
splits, and per-epoch minibatch schedules. Word IDs are 1-based on disk and
0-based everywhere in memory.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FileFormatError, StructureError
from .util import rng_from

# stream tags so different operations sharing one user seed stay decoupled
_SPLIT_STREAM = 12
_SHUFFLE_STREAM = 11


class Document:
    """Sparse word-count vector held as parallel index/count arrays.

    Indices are sorted, unique and 0-based; counts are strictly positive,
    so the total token count is at least 1.
    """

    __slots__ = ("words", "counts")

    def __init__(self, words, counts):
        words = np.asarray(words, dtype=np.int64).ravel()
        counts = np.asarray(counts, dtype=np.int64).ravel()
        if words.shape != counts.shape:
            raise ValueError("words and counts must have equal length")
        if words.size == 0:
            raise ValueError("document must contain at least one token")
        if np.any(counts <= 0):
            raise ValueError("counts must be strictly positive")
        if np.any(words < 0):
            raise ValueError("word indices must be non-negative")
        order = np.argsort(words, kind="stable")
        words = words[order]
        counts = counts[order]
        if words.size > 1 and np.any(np.diff(words) == 0):
            raise ValueError("duplicate word index in document")
        self.words = words
        self.counts = counts

    @classmethod
    def from_counts(cls, counts) -> "Document":
        """Build from a mapping of word index to count; zero counts dropped."""
        items = [(w, c) for w, c in counts.items() if c != 0]
        if not items:
            raise ValueError("document must contain at least one token")
        words, vals = zip(*sorted(items))
        return cls(np.array(words), np.array(vals))

    @property
    def length(self) -> int:
        """Total token count D."""
        return int(self.counts.sum())

    def to_dense(self, vocab_size: int) -> np.ndarray:
        out = np.zeros(vocab_size, dtype=np.float64)
        out[self.words] = self.counts
        return out

    def to_dict(self) -> dict:
        return {int(w): int(c) for w, c in zip(self.words, self.counts)}

    def __eq__(self, other):
        if not isinstance(other, Document):
            return NotImplemented
        return np.array_equal(self.words, other.words) and np.array_equal(
            self.counts, other.counts
        )

    def __repr__(self):
        return f"Document({self.to_dict()!r})"


class Corpus:
    """Immutable collection of documents over one fixed vocabulary."""

    def __init__(self, vocab, docs, name: str = ""):
        vocab = list(vocab)
        if any(not w for w in vocab):
            raise StructureError("vocabulary entries must be non-empty")
        if len(set(vocab)) != len(vocab):
            raise StructureError("vocabulary entries must be unique")
        k = len(vocab)
        docs = list(docs)
        for i, d in enumerate(docs):
            if d.words.size and int(d.words[-1]) >= k:
                raise StructureError(
                    f"document {i} references word index {int(d.words[-1])} >= K={k}"
                )
        self.vocab = vocab
        self.docs = docs
        self.name = name

    @property
    def n_words(self) -> int:
        return len(self.vocab)

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    def counts_matrix(self) -> np.ndarray:
        """Dense (n_docs, n_words) count matrix."""
        return dense_counts(self.docs, self.n_words)

    def occurrence_matrix(self) -> np.ndarray:
        """Dense 0/1 (n_docs, n_words) word-presence matrix."""
        out = self.counts_matrix()
        return (out > 0).astype(np.float64)

    def total_counts(self) -> np.ndarray:
        out = np.zeros(self.n_words, dtype=np.int64)
        for d in self.docs:
            out[d.words] += d.counts
        return out

    def doc_frequencies(self) -> np.ndarray:
        out = np.zeros(self.n_words, dtype=np.int64)
        for d in self.docs:
            out[d.words] += 1
        return out

    def __repr__(self):
        return f"Corpus(name={self.name!r}, n_docs={self.n_docs}, n_words={self.n_words})"


@dataclass
class CorpusSplit:
    """Disjoint train/validation/test corpora drawn from one source corpus."""

    train: Corpus
    validation: Corpus
    test: Corpus
    seed: int
    train_indices: np.ndarray = field(repr=False, default=None)
    validation_indices: np.ndarray = field(repr=False, default=None)
    test_indices: np.ndarray = field(repr=False, default=None)


def dense_counts(docs, n_words: int) -> np.ndarray:
    out = np.zeros((len(docs), n_words), dtype=np.float64)
    for i, d in enumerate(docs):
        out[i, d.words] = d.counts
    return out


def load_uci_bow(docword_path, vocab_path):
    """Load a UCI docword/vocab file pair.

    The docword file carries three header lines (N, K, NNZ) followed by NNZ
    lines of "docID wordID count" with 1-based IDs. Documents with no tokens
    are dropped; their number is returned alongside the corpus.

    Returns:
        (Corpus, n_dropped)
    """
    with open(vocab_path, encoding="utf-8") as fh:
        vocab = []
        for i, line in enumerate(fh, start=1):
            word = line.strip()
            if not word:
                raise FileFormatError(f"{vocab_path}: empty word at line {i}")
            vocab.append(word)
    if not vocab:
        raise FileFormatError(f"{vocab_path}: vocabulary file is empty")

    with open(docword_path, encoding="utf-8") as fh:
        header = []
        for ln in range(1, 4):
            raw = fh.readline()
            try:
                header.append(int(raw.strip()))
            except ValueError:
                raise FileFormatError(
                    f"expected integer header at line {ln}, got {raw.strip()!r}"
                ) from None
        n_docs, k, nnz = header
        if n_docs < 0 or k <= 0 or nnz < 0:
            raise FileFormatError(f"invalid header values N={n_docs} K={k} NNZ={nnz}")
        if k != len(vocab):
            raise StructureError(
                f"docword K={k} does not match vocab size {len(vocab)}"
            )
        per_doc = [dict() for _ in range(n_docs)]
        n_entries = 0
        for ln, raw in enumerate(fh, start=4):
            if not raw.strip():
                continue
            parts = raw.split()
            if len(parts) != 3:
                raise FileFormatError(f"expected 'docID wordID count' at line {ln}")
            try:
                doc_id, word_id, count = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError:
                raise FileFormatError(
                    f"expected 'docID wordID count' at line {ln}"
                ) from None
            if not 1 <= doc_id <= n_docs:
                raise FileFormatError(
                    f"doc ID {doc_id} exceeds N={n_docs} at line {ln}"
                )
            if not 1 <= word_id <= k:
                raise FileFormatError(f"word ID {word_id} exceeds K={k} at line {ln}")
            if count <= 0:
                raise FileFormatError(f"count {count} must be positive at line {ln}")
            entry = per_doc[doc_id - 1]
            entry[word_id - 1] = entry.get(word_id - 1, 0) + count
            n_entries += 1
        if n_entries != nnz:
            raise FileFormatError(
                f"header promises {nnz} entries, file contains {n_entries}"
            )

    docs = []
    dropped = 0
    for entry in per_doc:
        if entry:
            docs.append(Document.from_counts(entry))
        else:
            dropped += 1
    name = str(docword_path)
    return Corpus(vocab, docs, name=name), dropped


def save_uci_bow(corpus: Corpus, docword_path, vocab_path) -> None:
    """Write a corpus back out as a UCI docword/vocab pair (1-based IDs)."""
    with open(vocab_path, "w", encoding="utf-8") as fh:
        for word in corpus.vocab:
            fh.write(word + "\n")
    nnz = sum(d.words.size for d in corpus.docs)
    with open(docword_path, "w", encoding="utf-8") as fh:
        fh.write(f"{corpus.n_docs}\n{corpus.n_words}\n{nnz}\n")
        for i, d in enumerate(corpus.docs, start=1):
            for w, c in zip(d.words, d.counts):
                fh.write(f"{i} {int(w) + 1} {int(c)}\n")


def select_vocab(corpus: Corpus, k: int, method: str = "frequency") -> Corpus:
    """Restrict the corpus to its top-k words.

    method="frequency" ranks by total corpus count; method="tfidf" ranks by
    the average over all documents of (count/doc_length) * log(N / df),
    where df is the number of documents containing the word and documents
    missing the word contribute zero. Ties break toward the lower original
    index. Documents left empty by the cut are dropped.
    """
    if k > corpus.n_words:
        raise ValueError(f"K={k} exceeds vocabulary size {corpus.n_words}")
    if k <= 0:
        raise ValueError("K must be positive")
    if method == "frequency":
        scores = corpus.total_counts().astype(np.float64)
    elif method == "tfidf":
        n = corpus.n_docs
        df = corpus.doc_frequencies().astype(np.float64)
        idf = np.zeros(corpus.n_words)
        present = df > 0
        idf[present] = np.log(n / df[present])
        acc = np.zeros(corpus.n_words)
        for d in corpus.docs:
            acc[d.words] += (d.counts / d.length) * idf[d.words]
        scores = acc / n
    else:
        raise ValueError(f"unknown method {method!r}")

    order = np.lexsort((np.arange(corpus.n_words), -scores))
    keep = np.sort(order[:k])
    remap = -np.ones(corpus.n_words, dtype=np.int64)
    remap[keep] = np.arange(k)

    new_vocab = [corpus.vocab[i] for i in keep]
    new_docs = []
    for d in corpus.docs:
        mask = remap[d.words] >= 0
        if not mask.any():
            continue
        new_docs.append(Document(remap[d.words[mask]], d.counts[mask]))
    return Corpus(new_vocab, new_docs, name=corpus.name)


def split_indices(n_docs: int, seed: int, n_train: int, n_val: int, n_test: int):
    """Shuffled document indices assigned in order to train/val/test."""
    if min(n_train, n_val, n_test) < 0:
        raise ValueError("split sizes must be non-negative")
    if n_train + n_val + n_test > n_docs:
        raise ValueError(
            f"split sizes {n_train}+{n_val}+{n_test} exceed corpus size {n_docs}"
        )
    perm = rng_from(seed, _SPLIT_STREAM).permutation(n_docs)
    a, b = n_train, n_train + n_val
    c = b + n_test
    return perm[:a], perm[a:b], perm[b:c]


def split_corpus(
    corpus: Corpus, seed: int, n_train: int, n_val: int, n_test: int
) -> CorpusSplit:
    """Deterministically split a corpus; all three parts share the vocab."""
    tr, va, te = split_indices(corpus.n_docs, seed, n_train, n_val, n_test)

    def take(idx):
        return Corpus(corpus.vocab, [corpus.docs[i] for i in idx], name=corpus.name)

    return CorpusSplit(
        train=take(tr),
        validation=take(va),
        test=take(te),
        seed=seed,
        train_indices=tr,
        validation_indices=va,
        test_indices=te,
    )


def save_split_manifest(split: CorpusSplit, path) -> None:
    """Plain-text record of which source document went to which part."""
    with open(path, "w", encoding="utf-8") as fh:
        for section, idx in (
            ("train", split.train_indices),
            ("validation", split.validation_indices),
            ("test", split.test_indices),
        ):
            fh.write(f"[{section}]\n")
            for i in idx:
                fh.write(f"{int(i)}\n")


def minibatch_indices(n_docs: int, batch_size: int, seed: int, epoch: int = 0):
    """Index arrays for one epoch's minibatches.

    Every document appears exactly once per epoch; the shuffle is re-drawn
    per epoch from the (seed, epoch) pair, so the same pair always produces
    the same batch order.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    perm = rng_from(seed, _SHUFFLE_STREAM, epoch).permutation(n_docs)
    return [perm[i : i + batch_size] for i in range(0, n_docs, batch_size)]


def minibatches(corpus: Corpus, batch_size: int, seed: int, epoch: int = 0):
    """Minibatches of documents for one epoch; see minibatch_indices."""
    return [
        [corpus.docs[i] for i in idx]
        for idx in minibatch_indices(corpus.n_docs, batch_size, seed, epoch)
    ]
