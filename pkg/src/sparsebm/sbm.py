"""Sparse Boltzmann Machines for word counts.

Each hidden unit connects to a subset of the visible (word) units, and the
hidden units themselves are coupled through a forest of pairwise weights.
The hidden posterior given a document is therefore tree-structured, so the
positive phase of contrastive divergence uses exact sum-product inference;
the negative phase runs Gibbs sampling with sequential hidden sweeps.
"""
from __future__ import annotations

import numpy as np

from .corpus import Corpus, Document, dense_counts, minibatch_indices
from .errors import FileFormatError, StructureError
from .replicated_softmax import (
    TrainConfig,
    _bias_lr_factor,
    _check_hidden,
    _fmt,
    _parse_dims,
    _parse_vector,
    _softmax_rows,
    read_sections,
    write_sections,
)
from .util import rng_from, sigmoid

_INIT_STREAM = 31
_CD_STREAM = 32

_NEG_INF = -np.inf


class SbmStructure:
    """Connectivity of a sparse Boltzmann machine.

    visible_edges is the bipartite hidden-to-visible edge set, tree_edges the
    forest of hidden-to-hidden couplings. Every hidden unit must keep at
    least one visible edge; tree edges may leave the hidden graph
    disconnected (a forest) but never cyclic.
    """

    def __init__(self, n_hidden: int, n_visible: int, visible_edges, tree_edges):
        if n_hidden < 1 or n_visible < 1:
            raise ValueError("n_hidden and n_visible must be positive")
        self.n_hidden = int(n_hidden)
        self.n_visible = int(n_visible)

        by_hidden = [[] for _ in range(self.n_hidden)]
        seen = set()
        for j, k in visible_edges:
            j, k = int(j), int(k)
            if not 0 <= j < self.n_hidden:
                raise StructureError(f"hidden index {j} out of range")
            if not 0 <= k < self.n_visible:
                raise StructureError(f"visible index {k} out of range")
            if (j, k) in seen:
                raise StructureError(f"duplicate visible edge ({j}, {k})")
            seen.add((j, k))
            by_hidden[j].append(k)
        for j, ks in enumerate(by_hidden):
            if not ks:
                raise StructureError(f"hidden unit {j} has no visible edge")
        self.visible_by_hidden = [np.array(sorted(ks), dtype=np.int64) for ks in by_hidden]

        canon = []
        seen_t = set()
        parent = list(range(self.n_hidden))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for j, l in tree_edges:
            j, l = int(j), int(l)
            if j == l:
                raise StructureError(f"tree edge ({j}, {l}) is a self loop")
            if not (0 <= j < self.n_hidden and 0 <= l < self.n_hidden):
                raise StructureError(f"tree edge ({j}, {l}) out of range")
            j, l = min(j, l), max(j, l)
            if (j, l) in seen_t:
                raise StructureError(f"duplicate tree edge ({j}, {l})")
            seen_t.add((j, l))
            rj, rl = find(j), find(l)
            if rj == rl:
                raise StructureError("hidden graph is not a forest")
            parent[rj] = rl
            canon.append((j, l))
        self.tree_edges = sorted(canon)

        self._neighbors = [[] for _ in range(self.n_hidden)]
        for e, (j, l) in enumerate(self.tree_edges):
            self._neighbors[j].append((l, e))
            self._neighbors[l].append((j, e))

        # component id = smallest hidden index in the component
        comp = np.array([find(j) for j in range(self.n_hidden)], dtype=np.int64)
        labels = {}
        for j in range(self.n_hidden):
            labels.setdefault(comp[j], j)
        self.component = np.array([labels[c] for c in comp], dtype=np.int64)

        self._mask = None
        self._plan = None

    # -- constructors ------------------------------------------------------

    @classmethod
    def full(cls, n_hidden: int, n_visible: int) -> "SbmStructure":
        """Fully connected bipartite structure with no tree edges."""
        edges = [(j, k) for j in range(n_hidden) for k in range(n_visible)]
        return cls(n_hidden, n_visible, edges, [])

    @classmethod
    def from_groups(cls, groups, tree_edges, n_visible: int) -> "SbmStructure":
        """One hidden unit per group of visible indices."""
        edges = [(j, int(k)) for j, ks in enumerate(groups) for k in ks]
        return cls(len(groups), n_visible, edges, tree_edges)

    # -- views -------------------------------------------------------------

    @property
    def n_tree_edges(self) -> int:
        return len(self.tree_edges)

    def visible_indices(self, j: int) -> np.ndarray:
        return self.visible_by_hidden[j]

    def neighbors(self, j: int):
        """Tree neighbours of hidden unit j as (other, edge_index) pairs."""
        return self._neighbors[j]

    def visible_edge_set(self) -> set:
        return {
            (j, int(k))
            for j in range(self.n_hidden)
            for k in self.visible_by_hidden[j]
        }

    def mask(self) -> np.ndarray:
        """Boolean (F, K) matrix, True on structure edges. Cached."""
        if self._mask is None:
            m = np.zeros((self.n_hidden, self.n_visible), dtype=bool)
            for j, ks in enumerate(self.visible_by_hidden):
                m[j, ks] = True
            self._mask = m
        return self._mask

    def __eq__(self, other):
        if not isinstance(other, SbmStructure):
            return NotImplemented
        return (
            self.n_hidden == other.n_hidden
            and self.n_visible == other.n_visible
            and self.tree_edges == other.tree_edges
            and all(
                np.array_equal(a, b)
                for a, b in zip(self.visible_by_hidden, other.visible_by_hidden)
            )
        )

    def __repr__(self):
        n_vis = sum(len(ks) for ks in self.visible_by_hidden)
        return (
            f"SbmStructure(F={self.n_hidden}, K={self.n_visible},"
            f" visible_edges={n_vis}, tree_edges={self.n_tree_edges})"
        )

    # -- message-passing plan ---------------------------------------------

    def _bp_plan(self):
        """Rooted traversal orders for sum-product, cached per structure."""
        if self._plan is not None:
            return self._plan
        f = self.n_hidden
        visited = np.zeros(f, dtype=bool)
        roots = []
        down_steps = []  # (parent, child, edge)
        for start in range(f):
            if visited[start]:
                continue
            roots.append(start)
            visited[start] = True
            queue = [start]
            while queue:
                node = queue.pop(0)
                for other, e in self._neighbors[node]:
                    if not visited[other]:
                        visited[other] = True
                        down_steps.append((node, other, e))
                        queue.append(other)
        up_steps = [(c, p, e) for (p, c, e) in reversed(down_steps)]
        self._plan = (roots, up_steps, down_steps)
        return self._plan


class SbmModel:
    """Parameters bound to an SbmStructure.

    W is stored dense (F, K); package operations keep every off-structure
    entry at exactly zero (apply_mask restores the invariant if outside code
    writes elsewhere). Wt holds one coupling weight per tree edge, in the
    structure's canonical edge order.
    """

    __slots__ = ("structure", "W", "Wt", "a", "b")

    def __init__(self, structure: SbmStructure, W, Wt, a, b):
        W = np.asarray(W, dtype=np.float64)
        Wt = np.asarray(Wt, dtype=np.float64).ravel()
        a = np.asarray(a, dtype=np.float64).ravel()
        b = np.asarray(b, dtype=np.float64).ravel()
        if W.shape != (structure.n_hidden, structure.n_visible):
            raise ValueError(
                f"W shape {W.shape} does not match structure"
                f" ({structure.n_hidden}, {structure.n_visible})"
            )
        if Wt.size != structure.n_tree_edges:
            raise ValueError(
                f"Wt holds {Wt.size} values, structure has"
                f" {structure.n_tree_edges} tree edges"
            )
        if a.size != structure.n_hidden or b.size != structure.n_visible:
            raise ValueError("bias vector sizes do not match structure")
        for name, arr in (("W", W), ("Wt", Wt), ("a", a), ("b", b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        self.structure = structure
        self.W = W
        self.Wt = Wt
        self.a = a
        self.b = b

    @property
    def n_hidden(self) -> int:
        return self.structure.n_hidden

    @property
    def n_visible(self) -> int:
        return self.structure.n_visible

    def copy(self) -> "SbmModel":
        return SbmModel(
            self.structure, self.W.copy(), self.Wt.copy(), self.a.copy(), self.b.copy()
        )

    def off_structure_weight(self) -> float:
        """Sum of |W| over entries outside the structure; 0 when conforming."""
        return float(np.abs(np.where(self.structure.mask(), 0.0, self.W)).sum())

    def __repr__(self):
        return (
            f"SbmModel(F={self.n_hidden}, K={self.n_visible},"
            f" tree_edges={self.structure.n_tree_edges})"
        )


class TreePosterior:
    """Exact hidden posterior for one document.

    singleton[j] = P(h_j = 1 | doc); pairwise maps each canonical tree edge
    (j, l) to its 2x2 table P(h_j, h_l | doc); log_hidden_partition is
    log sum_h of the unnormalized hidden factor given the document.
    """

    __slots__ = ("singleton", "pairwise", "log_hidden_partition")

    def __init__(self, singleton, pairwise, log_hidden_partition):
        self.singleton = singleton
        self.pairwise = pairwise
        self.log_hidden_partition = log_hidden_partition


def apply_mask(model: SbmModel) -> SbmModel:
    """Zero every off-structure weight in place and return the model."""
    np.copyto(model.W, 0.0, where=~model.structure.mask())
    return model


def sbm_energy(model: SbmModel, doc: Document, h) -> float:
    """Energy of a (document, hidden state) pair, including tree couplings."""
    if doc.words.size and int(doc.words[-1]) >= model.n_visible:
        raise ValueError(
            f"document references word index {int(doc.words[-1])}"
            f" >= K={model.n_visible}"
        )
    h = _check_hidden(model, h)
    d = doc.length
    wu = model.W[:, doc.words] @ doc.counts.astype(np.float64)
    base = -(h @ wu) - doc.counts @ model.b[doc.words] - d * (h @ model.a)
    tree = 0.0
    for e, (j, l) in enumerate(model.structure.tree_edges):
        tree += model.Wt[e] * h[j] * h[l]
    return float(base - d * tree)


def sbm_gibbs_hidden_conditional(model: SbmModel, doc: Document, h, j: int) -> float:
    """P(h_j = 1 | doc, other hidden units) for the Gibbs sweep."""
    if not 0 <= j < model.n_hidden:
        raise ValueError(f"hidden index {j} out of range")
    h = _check_hidden(model, h)
    d = doc.length
    act = model.W[j, doc.words] @ doc.counts.astype(np.float64) + d * model.a[j]
    for other, e in model.structure.neighbors(j):
        act += d * model.Wt[e] * h[other]
    return float(sigmoid(act))


# ---------------------------------------------------------------------------
# batched sum-product on the hidden forest


def tree_sum_product(
    structure: SbmStructure,
    theta: np.ndarray,
    edge_logw: np.ndarray,
    want_marginals: bool = True,
    want_pairwise: bool = True,
    clamp=None,
):
    """Sum-product over the hidden forest for a batch of documents.

    theta[n, j] is the log node potential for h_j = 1 (the h_j = 0 potential
    is 0); edge_logw[n, e] is the log edge potential for both endpoints on.
    clamp is an optional {node: value} dict fixing hidden states, used for
    conditioned inference.

    Returns (singleton, pairwise, logz) where singleton is (B, F), pairwise
    (B, E, 2, 2) indexed by the canonical (lower, higher) edge endpoints, and
    logz (B,). Entries not requested come back as None.
    """
    b, f = theta.shape
    n_edges = structure.n_tree_edges
    roots, up_steps, down_steps = structure._bp_plan()

    u0 = np.zeros((b, f))
    u1 = theta.copy()
    if clamp:
        for node, value in clamp.items():
            if value == 0:
                u1[:, node] = _NEG_INF
            else:
                u0[:, node] = _NEG_INF

    up0 = np.empty((b, n_edges)) if n_edges else None
    up1 = np.empty((b, n_edges)) if n_edges else None
    for c, p, e in up_steps:
        m0 = np.logaddexp(u0[:, c], u1[:, c])
        m1 = np.logaddexp(u0[:, c], u1[:, c] + edge_logw[:, e])
        up0[:, e] = m0
        up1[:, e] = m1
        u0[:, p] += m0
        u1[:, p] += m1

    logz = np.zeros(b)
    for r in roots:
        logz += np.logaddexp(u0[:, r], u1[:, r])

    if not want_marginals:
        return None, None, logz

    bel0 = u0.copy()
    bel1 = u1.copy()
    pairwise = np.empty((b, n_edges, 2, 2)) if (want_pairwise and n_edges) else None
    for p, c, e in down_steps:
        ex0 = bel0[:, p] - up0[:, e]
        ex1 = bel1[:, p] - up1[:, e]
        if want_pairwise:
            # joint over (parent, child) before orientation
            t00 = ex0 + u0[:, c]
            t01 = ex0 + u1[:, c]
            t10 = ex1 + u0[:, c]
            t11 = ex1 + u1[:, c] + edge_logw[:, e]
            stack = np.stack([t00, t01, t10, t11], axis=1)
            stack -= stack.max(axis=1, keepdims=True)
            tab = np.exp(stack)
            tab /= tab.sum(axis=1, keepdims=True)
            j, _ = structure.tree_edges[e]
            if p == j:  # parent is the lower endpoint: table rows are h_j
                pairwise[:, e, 0, 0] = tab[:, 0]
                pairwise[:, e, 0, 1] = tab[:, 1]
                pairwise[:, e, 1, 0] = tab[:, 2]
                pairwise[:, e, 1, 1] = tab[:, 3]
            else:
                pairwise[:, e, 0, 0] = tab[:, 0]
                pairwise[:, e, 0, 1] = tab[:, 2]
                pairwise[:, e, 1, 0] = tab[:, 1]
                pairwise[:, e, 1, 1] = tab[:, 3]
        d0 = np.logaddexp(ex0, ex1)
        d1 = np.logaddexp(ex0, ex1 + edge_logw[:, e])
        bel0[:, c] += d0
        bel1[:, c] += d1

    singleton = sigmoid(bel1 - bel0)
    if want_pairwise and n_edges == 0:
        pairwise = np.empty((b, 0, 2, 2))
    return singleton, pairwise, logz


def _batch_theta(model: SbmModel, counts_matrix: np.ndarray, lengths: np.ndarray):
    theta = counts_matrix @ model.W.T + lengths[:, None] * model.a
    if model.structure.n_tree_edges:
        edge_logw = lengths[:, None] * model.Wt[None, :]
    else:
        edge_logw = np.zeros((counts_matrix.shape[0], 0))
    return theta, edge_logw


def sbm_tree_marginals(model: SbmModel, doc: Document) -> TreePosterior:
    """Exact singleton and pairwise hidden marginals for one document."""
    d = doc.length
    theta = model.W[:, doc.words] @ doc.counts.astype(np.float64) + d * model.a
    theta = theta[None, :]
    if model.structure.n_tree_edges:
        edge_logw = (d * model.Wt)[None, :]
    else:
        edge_logw = np.zeros((1, 0))
    singleton, pairwise, logz = tree_sum_product(model.structure, theta, edge_logw)
    tables = {
        edge: pairwise[0, e] for e, edge in enumerate(model.structure.tree_edges)
    }
    return TreePosterior(singleton[0], tables, float(logz[0]))


# ---------------------------------------------------------------------------
# contrastive divergence


def _gibbs_hidden_sweep(model, counts_matrix, lengths, h, rng, beta=1.0):
    """One sequential Gibbs sweep over hidden units, ascending index order."""
    base = counts_matrix @ model.W.T + lengths[:, None] * model.a
    for j in range(model.n_hidden):
        act = base[:, j].copy()
        for other, e in model.structure.neighbors(j):
            act += lengths * model.Wt[e] * h[:, other]
        p = sigmoid(beta * act)
        h[:, j] = rng.random(p.shape) < p
    return h


def _sbm_negative_phase(model, counts_matrix, lengths, t, rng, mean_field):
    """T full Gibbs steps started at the data.

    Returns (h_singleton_stat, h_pair_stat, counts): the statistics pairing
    for the final visible sample, either sampled states (default) or exact
    posterior expectations (mean_field).
    """
    u = counts_matrix
    lengths_int = lengths.astype(np.int64)
    h = np.zeros((u.shape[0], model.n_hidden))
    for _ in range(t):
        h = _gibbs_hidden_sweep(model, u, lengths, h, rng)
        p_vis = _softmax_rows(model.b + h @ model.W)
        u = rng.multinomial(lengths_int, p_vis).astype(np.float64)
    if mean_field:
        theta, edge_logw = _batch_theta(model, u, lengths)
        singleton, pairwise, _ = tree_sum_product(model.structure, theta, edge_logw)
        pair_stat = (
            pairwise[:, :, 1, 1]
            if model.structure.n_tree_edges
            else np.zeros((u.shape[0], 0))
        )
        return singleton, pair_stat, u
    h = _gibbs_hidden_sweep(model, u, lengths, h, rng)
    edges = model.structure.tree_edges
    if edges:
        pair_stat = np.stack([h[:, j] * h[:, l] for j, l in edges], axis=1)
    else:
        pair_stat = np.zeros((u.shape[0], 0))
    return h, pair_stat, u


def sbm_cd_gradients(model, batch, t, rng, mean_field_negative=False):
    """Batch-averaged CD-T gradients for W, Wt, a, b.

    The positive phase uses exact tree posteriors; hidden and tree-coupling
    gradients carry the per-document length factor. The W gradient is
    restricted to structure edges.
    """
    if t < 1:
        raise ValueError("cd_steps must be at least 1")
    u = dense_counts(batch, model.n_visible)
    lengths = u.sum(axis=1)
    n = u.shape[0]

    theta, edge_logw = _batch_theta(model, u, lengths)
    e_h, pairwise, _ = tree_sum_product(model.structure, theta, edge_logw)
    e_hh = (
        pairwise[:, :, 1, 1]
        if model.structure.n_tree_edges
        else np.zeros((n, 0))
    )

    grad_w = e_h.T @ u
    grad_b = u.sum(axis=0)
    grad_a = e_h.T @ lengths
    grad_wt = (e_hh * lengths[:, None]).sum(axis=0)

    h_neg, hh_neg, u_neg = _sbm_negative_phase(
        model, u, lengths, t, rng, mean_field_negative
    )
    grad_w -= h_neg.T @ u_neg
    grad_b -= u_neg.sum(axis=0)
    grad_a -= h_neg.T @ lengths
    grad_wt -= (hh_neg * lengths[:, None]).sum(axis=0)

    grad_w = np.where(model.structure.mask(), grad_w, 0.0)
    return {"W": grad_w / n, "Wt": grad_wt / n, "a": grad_a / n, "b": grad_b / n}


def sbm_cd_step(
    model: SbmModel,
    batch,
    t: int,
    lr: float,
    rng: np.random.Generator,
    mean_field_negative: bool = False,
    weight_decay: float = 0.0,
) -> SbmModel:
    """One CD-T update; returns a new model with the mask re-applied."""
    grads = sbm_cd_gradients(model, batch, t, rng, mean_field_negative)
    w = model.W + lr * (grads["W"] - weight_decay * model.W)
    wt = model.Wt + lr * grads["Wt"]
    a = model.a + lr * grads["a"]
    b = model.b + lr * grads["b"]
    return apply_mask(SbmModel(model.structure, w, wt, a, b))


def init_sbm_model(corpus: Corpus, structure: SbmStructure, config: TrainConfig) -> SbmModel:
    """Fresh model: on-structure W ~ Normal(0, std^2), tree weights zero."""
    rng = rng_from(config.seed, _INIT_STREAM)
    w = rng.normal(
        0.0, config.weight_init_std, size=(structure.n_hidden, structure.n_visible)
    )
    w = np.where(structure.mask(), w, 0.0)
    wt = np.zeros(structure.n_tree_edges)
    a = np.zeros(structure.n_hidden)
    if config.visible_bias_init == "log-frequency":
        counts = corpus.total_counts().astype(np.float64)
        b = np.log((counts + 1.0) / (counts.sum() + corpus.n_words))
    else:
        b = np.zeros(corpus.n_words)
    return SbmModel(structure, w, wt, a, b)


def sbm_fit(
    model: SbmModel,
    corpus: Corpus,
    config: TrainConfig,
    epochs: int | None = None,
    rng: np.random.Generator | None = None,
    epoch_offset: int = 0,
) -> SbmModel:
    """CD training epochs on a copy of the model; mask holds throughout."""
    if epochs is None:
        epochs = config.epochs
    if rng is None:
        rng = rng_from(config.seed, _CD_STREAM)
    work = apply_mask(model.copy())
    vel = None
    dense = corpus.counts_matrix()
    lr = config.learning_rate
    lr_h = lr * _bias_lr_factor(config, corpus)
    mom = config.momentum
    for epoch in range(epochs):
        batches = minibatch_indices(
            corpus.n_docs, config.batch_size, config.seed, epoch_offset + epoch
        )
        for idx in batches:
            batch_u = dense[idx]
            lengths = batch_u.sum(axis=1)
            n = batch_u.shape[0]

            theta, edge_logw = _batch_theta(work, batch_u, lengths)
            e_h, pairwise, _ = tree_sum_product(work.structure, theta, edge_logw)
            e_hh = (
                pairwise[:, :, 1, 1]
                if work.structure.n_tree_edges
                else np.zeros((n, 0))
            )
            gw = e_h.T @ batch_u
            gb = batch_u.sum(axis=0)
            ga = e_h.T @ lengths
            gwt = (e_hh * lengths[:, None]).sum(axis=0)

            h_neg, hh_neg, u_neg = _sbm_negative_phase(
                work, batch_u, lengths, config.cd_steps, rng,
                config.mean_field_negative,
            )
            gw -= h_neg.T @ u_neg
            gb -= u_neg.sum(axis=0)
            ga -= h_neg.T @ lengths
            gwt -= (hh_neg * lengths[:, None]).sum(axis=0)

            gw = np.where(work.structure.mask(), gw, 0.0) / n
            ga /= n
            gb /= n
            gwt /= n
            if config.weight_decay:
                gw -= config.weight_decay * work.W
            if mom:
                if vel is None:
                    vel = [np.zeros_like(x) for x in (work.W, work.Wt, work.a, work.b)]
                for v, g, rate in zip(
                    vel, (gw, gwt, ga, gb), (lr, lr_h, lr_h, lr)
                ):
                    v *= mom
                    v += rate * g
                work.W += vel[0]
                work.Wt += vel[1]
                work.a += vel[2]
                work.b += vel[3]
            else:
                work.W += lr * gw
                work.Wt += lr_h * gwt
                work.a += lr_h * ga
                work.b += lr * gb
            apply_mask(work)
    return work


def sbm_train(corpus: Corpus, structure: SbmStructure, config: TrainConfig) -> SbmModel:
    """Initialise and CD-train a sparse Boltzmann machine."""
    if structure.n_visible != corpus.n_words:
        raise ValueError(
            f"structure K={structure.n_visible} does not match corpus"
            f" vocabulary size {corpus.n_words}"
        )
    if corpus.n_docs == 0:
        raise ValueError("corpus is empty")
    model = init_sbm_model(corpus, structure, config)
    if config.epochs == 0:
        return model
    return sbm_fit(model, corpus, config)


# ---------------------------------------------------------------------------
# serialization


def save_structure(structure: SbmStructure, path) -> None:
    sections = [
        ("dims", [f"F {structure.n_hidden}", f"K {structure.n_visible}"]),
        (
            "visible_edges",
            [
                f"{j} {int(k)}"
                for j in range(structure.n_hidden)
                for k in structure.visible_by_hidden[j]
            ],
        ),
        ("tree_edges", [f"{j} {l}" for j, l in structure.tree_edges]),
    ]
    write_sections(path, "sbm-structure", sections)


def load_structure(path) -> SbmStructure:
    sections = read_sections(path, "sbm-structure")
    f, k = _parse_dims(sections, path, "F", "K")
    visible = []
    for line in sections.get("visible_edges", []):
        parts = line.split()
        if len(parts) != 2:
            raise FileFormatError(f"{path}: malformed visible edge {line!r}")
        visible.append((int(parts[0]), int(parts[1])))
    tree = []
    for line in sections.get("tree_edges", []):
        parts = line.split()
        if len(parts) != 2:
            raise FileFormatError(f"{path}: malformed tree edge {line!r}")
        tree.append((int(parts[0]), int(parts[1])))
    return SbmStructure(f, k, visible, tree)


def save_sbm_model(model: SbmModel, path) -> None:
    s = model.structure
    sections = [
        ("dims", [f"F {model.n_hidden}", f"K {model.n_visible}"]),
        (
            "visible_edges",
            [
                f"{j} {int(k)} {_fmt(model.W[j, k])}"
                for j in range(s.n_hidden)
                for k in s.visible_by_hidden[j]
            ],
        ),
        (
            "tree_edges",
            [
                f"{j} {l} {_fmt(model.Wt[e])}"
                for e, (j, l) in enumerate(s.tree_edges)
            ],
        ),
        ("a", [" ".join(_fmt(x) for x in model.a)]),
        ("b", [" ".join(_fmt(x) for x in model.b)]),
    ]
    write_sections(path, "sbm-model", sections)


def load_sbm_model(path) -> SbmModel:
    sections = read_sections(path, "sbm-model")
    f, k = _parse_dims(sections, path, "F", "K")
    visible = []
    weights = []
    for line in sections.get("visible_edges", []):
        parts = line.split()
        if len(parts) != 3:
            raise FileFormatError(f"{path}: malformed visible edge {line!r}")
        visible.append((int(parts[0]), int(parts[1])))
        weights.append(float(parts[2]))
    tree = []
    tree_weights = []
    for line in sections.get("tree_edges", []):
        parts = line.split()
        if len(parts) != 3:
            raise FileFormatError(f"{path}: malformed tree edge {line!r}")
        tree.append((int(parts[0]), int(parts[1])))
        tree_weights.append(float(parts[2]))
    structure = SbmStructure(f, k, visible, tree)
    w = np.zeros((f, k))
    for (j, kk), value in zip(visible, weights):
        w[j, kk] = value
    wt = np.zeros(structure.n_tree_edges)
    for (j, l), value in zip(tree, tree_weights):
        wt[structure.tree_edges.index((min(j, l), max(j, l)))] = value
    a = _parse_vector(sections, "a", f, path)
    b = _parse_vector(sections, "b", k, path)
    return SbmModel(structure, w, wt, a, b)
