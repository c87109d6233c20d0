"""Structure learning for sparse Boltzmann machines.

A two-stage greedy grouping over word-occurrence indicators produces a
skeleton (one hidden unit per word group plus a spanning tree over the
groups); externally produced skeletons can be loaded from a simple text
format. The skeleton is then expanded by connecting each hidden unit to the
out-of-group words carrying the highest conditional mutual information,
estimated from exact posteriors of a tree model trained on the skeleton.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .errors import FileFormatError, StructureError
from .sbm import SbmModel, SbmStructure, tree_sum_product

# 99% quantile of chi-squared with one degree of freedom; 2*N*MI of two
# independent binary variables is asymptotically chi-squared(1), so this
# screens out estimation noise when deciding whether a dependence is real.
_CHI2_99_DF1 = 6.6348966010212145


@dataclass
class Skeleton:
    """Disjoint word groups plus a forest over the groups' hidden units."""

    groups: list
    tree_edges: list
    provenance: str = "built"

    def __post_init__(self):
        self.groups = [np.array(sorted(int(v) for v in g), dtype=np.int64) for g in self.groups]
        self.tree_edges = sorted(
            (min(int(j), int(l)), max(int(j), int(l))) for j, l in self.tree_edges
        )
        seen = {}
        for j, g in enumerate(self.groups):
            if g.size == 0:
                raise StructureError(f"hidden unit {j} has an empty group")
            for v in g:
                if int(v) in seen:
                    raise StructureError(f"visible {int(v)} assigned twice")
                seen[int(v)] = j
        k = max(seen) + 1 if seen else 0
        for v in range(k):
            if v not in seen:
                raise StructureError(f"visible {v} unassigned")
        # forest check is delegated to SbmStructure, which owns that invariant
        self.to_structure()

    @property
    def n_hidden(self) -> int:
        return len(self.groups)

    @property
    def n_visible(self) -> int:
        return sum(g.size for g in self.groups)

    def owner_of(self) -> np.ndarray:
        """Array mapping each visible index to its group's hidden unit."""
        owner = np.full(self.n_visible, -1, dtype=np.int64)
        for j, g in enumerate(self.groups):
            owner[g] = j
        return owner

    def to_structure(self) -> SbmStructure:
        return SbmStructure.from_groups(self.groups, self.tree_edges, self.n_visible)


@dataclass
class CmiTable:
    """Per hidden unit, candidate words sorted by descending score."""

    scores: list  # list over hidden units of [(visible index, score), ...]

    def top(self, j: int, m: int):
        return self.scores[j][:m]


# ---------------------------------------------------------------------------
# pairwise mutual information over binary indicators


def pairwise_binary_mi(indicators: np.ndarray) -> np.ndarray:
    """MI in nats between all pairs of binary columns; diagonal zeroed."""
    n, k = indicators.shape
    x = indicators.astype(np.float64)
    n11 = x.T @ x
    n1 = x.sum(axis=0)
    p11 = n11 / n
    p10 = (n1[:, None] - n11) / n
    p01 = (n1[None, :] - n11) / n
    p00 = 1.0 - p11 - p10 - p01
    pa1 = n1 / n
    pa0 = 1.0 - pa1
    mi = np.zeros((k, k))
    for pab, pa, pb in (
        (p11, pa1[:, None], pa1[None, :]),
        (p10, pa1[:, None], pa0[None, :]),
        (p01, pa0[:, None], pa1[None, :]),
        (p00, pa0[:, None], pa0[None, :]),
    ):
        denom = pa * pb
        with np.errstate(divide="ignore", invalid="ignore"):
            term = pab * np.log(pab / denom)
        term[~np.isfinite(term)] = 0.0
        mi += term
    np.fill_diagonal(mi, 0.0)
    return np.maximum(mi, 0.0)


def _greedy_groups(mi: np.ndarray, max_size: int, floor: float):
    """Seed with the strongest unassigned pair, grow by highest average MI.

    Growth stops at max_size or when no candidate clears the floor; members
    left over when no seed pair clears the floor become singletons.
    """
    k = mi.shape[0]
    if max_size < 2:
        return [[v] for v in range(k)]
    unassigned = np.ones(k, dtype=bool)
    groups = []
    while unassigned.sum() >= 2:
        work = np.where(
            unassigned[:, None] & unassigned[None, :], mi, -np.inf
        )
        np.fill_diagonal(work, -np.inf)
        flat = int(np.argmax(work))
        i, j = divmod(flat, k)
        if work[i, j] <= floor:
            break
        group = [min(i, j), max(i, j)]
        unassigned[i] = unassigned[j] = False
        while len(group) < max_size:
            cand = np.nonzero(unassigned)[0]
            if cand.size == 0:
                break
            avg = mi[np.ix_(cand, group)].mean(axis=1)
            best = int(np.argmax(avg))
            if avg[best] <= floor:
                break
            member = int(cand[best])
            group.append(member)
            unassigned[member] = False
        groups.append(sorted(group))
    for v in np.nonzero(unassigned)[0]:
        groups.append([int(v)])
    return groups


def _max_spanning_tree(mi: np.ndarray):
    """Kruskal over the complete graph, ties toward the lower index pair."""
    k = mi.shape[0]
    edges = sorted(
        ((j, l) for j in range(k) for l in range(j + 1, k)),
        key=lambda e: (-mi[e[0], e[1]], e[0], e[1]),
    )
    parent = list(range(k))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    out = []
    for j, l in edges:
        rj, rl = find(j), find(l)
        if rj != rl:
            parent[rj] = rl
            out.append((j, l))
            if len(out) == k - 1:
                break
    return sorted(out)


def build_skeleton(
    corpus: Corpus,
    island_max: int = 7,
    supergroup_max: int = 5,
    mi_floor="auto",
) -> Skeleton:
    """Two-level greedy grouping of word-occurrence indicators.

    Words are binarized to presence indicators, gathered greedily into
    islands of at most island_max strongly dependent words, and islands are
    merged the same way into supergroups of at most supergroup_max islands.
    Each supergroup becomes one hidden unit owning the union of its islands'
    words; the hidden tree is a maximum spanning tree over the supergroup
    indicators' pairwise MI. Constant words (present in every document or
    none) carry no signal and are appended to the smallest group at the end.

    mi_floor="auto" uses a 99% chi-squared significance threshold on 2*N*MI,
    which rejects the positive bias of empirical MI between independent
    variables; a float fixes the floor directly.
    """
    if corpus.n_words < 2:
        raise ValueError("need at least two words to build a skeleton")
    occ = corpus.occurrence_matrix()
    n = corpus.n_docs
    if n < 2:
        raise ValueError("need at least two documents to build a skeleton")
    floor = _CHI2_99_DF1 / (2.0 * n) if mi_floor == "auto" else float(mi_floor)

    df = occ.sum(axis=0)
    informative = np.nonzero((df > 0) & (df < n))[0]
    degenerate = np.nonzero((df == 0) | (df == n))[0]
    if informative.size == 0:
        raise StructureError("corpus has no informative words")

    mi_words = pairwise_binary_mi(occ[:, informative])
    island_local = _greedy_groups(mi_words, island_max, floor)
    islands = [[int(informative[i]) for i in local] for local in island_local]

    island_ind = np.stack(
        [occ[:, members].any(axis=1) for members in islands], axis=1
    ).astype(np.float64)
    mi_islands = pairwise_binary_mi(island_ind)
    supergroup_islands = _greedy_groups(mi_islands, supergroup_max, floor)

    groups = [
        sorted(v for isl in sg for v in islands[isl]) for sg in supergroup_islands
    ]

    # attach constant words to the smallest group, lowest index on ties
    group_ind = np.stack(
        [occ[:, g].any(axis=1) for g in groups], axis=1
    ).astype(np.float64)
    for v in degenerate:
        sizes = [len(g) for g in groups]
        target = int(np.argmin(sizes))
        groups[target] = sorted(groups[target] + [int(v)])

    if len(groups) > 1:
        tree = _max_spanning_tree(pairwise_binary_mi(group_ind))
    else:
        tree = []
    return Skeleton(groups=groups, tree_edges=tree, provenance="built")


# ---------------------------------------------------------------------------
# skeleton text format


def save_skeleton(skeleton: Skeleton, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for j, g in enumerate(skeleton.groups):
            fh.write(f"{j}: " + " ".join(str(int(v)) for v in g) + "\n")
        fh.write("[tree]\n")
        for j, l in skeleton.tree_edges:
            fh.write(f"{j} {l}\n")


def load_skeleton(path, n_visible: int) -> Skeleton:
    """Parse "j: v v v ..." group lines followed by a [tree] section.

    Validates the disjoint-cover and forest invariants; violations raise a
    StructureError naming the problem.
    """
    group_lines = {}
    tree = []
    in_tree = False
    with open(path, encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line == "[tree]":
                in_tree = True
                continue
            if in_tree:
                parts = line.split()
                if len(parts) != 2:
                    raise FileFormatError(f"{path}: malformed tree edge at line {ln}")
                tree.append((int(parts[0]), int(parts[1])))
            else:
                if ":" not in line:
                    raise FileFormatError(
                        f"{path}: expected 'j: v v ...' at line {ln}"
                    )
                head, _, rest = line.partition(":")
                try:
                    j = int(head)
                    members = [int(tok) for tok in rest.split()]
                except ValueError:
                    raise FileFormatError(
                        f"{path}: unparseable group line at line {ln}"
                    ) from None
                if j in group_lines:
                    raise FileFormatError(f"{path}: duplicate group {j} at line {ln}")
                group_lines[j] = members
    if not group_lines:
        raise FileFormatError(f"{path}: no groups found")
    n_hidden = max(group_lines) + 1
    for j in range(n_hidden):
        if j not in group_lines:
            raise StructureError(f"hidden unit {j} has no group line")
    groups = [group_lines[j] for j in range(n_hidden)]
    for g in groups:
        for v in g:
            if not 0 <= v < n_visible:
                raise StructureError(f"visible index {v} out of range")
    seen = set()
    for g in groups:
        for v in g:
            if v in seen:
                raise StructureError(f"visible {v} assigned twice")
            seen.add(v)
    for v in range(n_visible):
        if v not in seen:
            raise StructureError(f"visible {v} unassigned")
    skeleton = Skeleton(groups=groups, tree_edges=tree, provenance="loaded")
    skeleton.provenance = "loaded"
    return skeleton


# ---------------------------------------------------------------------------
# conditional mutual information


def cmi_from_joint(joint: np.ndarray) -> float:
    """CMI of axes (hidden, word | conditioner) from a 2x2x2 joint.

    joint[z, z', v] holds p(hidden=z, conditioner=z', word=v); zero cells
    contribute zero. Natural log.
    """
    joint = np.asarray(joint, dtype=np.float64)
    if joint.shape != (2, 2, 2):
        raise ValueError("joint must be a 2x2x2 array")
    total = joint.sum()
    if total <= 0:
        raise ValueError("joint must have positive mass")
    p = joint / total
    p_zp = p.sum(axis=(0, 2))
    out = 0.0
    for zp in range(2):
        if p_zp[zp] <= 0:
            continue
        block = p[:, zp, :] / p_zp[zp]  # p(z, v | z')
        pz = block.sum(axis=1)
        pv = block.sum(axis=0)
        for z in range(2):
            for v in range(2):
                cell = block[z, v]
                if cell > 0:
                    out += p_zp[zp] * cell * np.log(cell / (pz[z] * pv[v]))
    return float(out)


def _skeleton_owner(structure: SbmStructure) -> np.ndarray:
    """Owner map for a skeleton-shaped structure (a partition of the words)."""
    owner = np.full(structure.n_visible, -1, dtype=np.int64)
    for j in range(structure.n_hidden):
        for v in structure.visible_indices(j):
            if owner[v] != -1:
                raise ValueError(
                    "tree model structure is not a skeleton: visible"
                    f" {int(v)} has several hidden owners"
                )
            owner[v] = j
    if np.any(owner < 0):
        missing = int(np.nonzero(owner < 0)[0][0])
        raise ValueError(
            f"tree model structure is not a skeleton: visible {missing} unowned"
        )
    return owner


def _posterior_pass(model: SbmModel, counts: np.ndarray):
    """Unclamped and clamped posteriors for a batch of documents.

    Returns (singleton (B,F), pairwise (B,E,2,2), cond[jp][v] (B,F)) where
    cond[jp][v][n, j] = P(h_j = 1 | doc n, h_jp = v).
    """
    lengths = counts.sum(axis=1)
    theta = counts @ model.W.T + lengths[:, None] * model.a
    if model.structure.n_tree_edges:
        edge_logw = lengths[:, None] * model.Wt[None, :]
    else:
        edge_logw = np.zeros((counts.shape[0], 0))
    singleton, pairwise, _ = tree_sum_product(model.structure, theta, edge_logw)
    cond = []
    for jp in range(model.n_hidden):
        per_value = []
        for value in (0, 1):
            s, _, _ = tree_sum_product(
                model.structure,
                theta,
                edge_logw,
                want_pairwise=False,
                clamp={jp: value},
            )
            per_value.append(s)
        cond.append(per_value)
    return singleton, pairwise, cond


def _pair_joint(model, singleton, pairwise, cond, j, jp):
    """P(h_j, h_jp | doc) per document, shape (B, 2, 2), axes (h_j, h_jp)."""
    structure = model.structure
    edge = (min(j, jp), max(j, jp))
    if edge in structure.tree_edges:
        e = structure.tree_edges.index(edge)
        table = pairwise[:, e]
        if j < jp:
            return table
        return np.transpose(table, (0, 2, 1))
    p_jp1 = singleton[:, jp]
    if structure.component[j] != structure.component[jp]:
        p_j1 = singleton[:, j]
        out = np.empty((singleton.shape[0], 2, 2))
        out[:, 1, 1] = p_j1 * p_jp1
        out[:, 1, 0] = p_j1 * (1 - p_jp1)
        out[:, 0, 1] = (1 - p_j1) * p_jp1
        out[:, 0, 0] = (1 - p_j1) * (1 - p_jp1)
        return out
    out = np.empty((singleton.shape[0], 2, 2))
    for value, weight in ((0, 1.0 - p_jp1), (1, p_jp1)):
        c = cond[jp][value][:, j]
        out[:, 1, value] = c * weight
        out[:, 0, value] = (1 - c) * weight
    return out


_CMI_CHUNK = 2048


def build_cmi_table(tree_model: SbmModel, corpus: Corpus) -> CmiTable:
    """Score every (hidden unit, out-of-group word) pair.

    For each pair, the joint over (posterior of the unit, posterior of the
    word's owner, word presence) is accumulated over all documents and fed
    through the CMI formula. Posteriors come from exact inference in the
    tree model; non-adjacent hidden pairs use conditioned inference runs.
    """
    structure = tree_model.structure
    _skeleton_owner(structure)  # validates the partition property
    f = structure.n_hidden
    k = structure.n_visible
    n = corpus.n_docs
    occ = corpus.occurrence_matrix()
    dense = corpus.counts_matrix()

    # accumulators: per ordered pair (j, jp), flattened 2x2 posterior mass
    # against word presence for words owned by jp, plus the total mass
    acc_present = np.zeros((f, f, 4, k))
    acc_total = np.zeros((f, f, 4))
    for start in range(0, n, _CMI_CHUNK):
        chunk = slice(start, min(start + _CMI_CHUNK, n))
        counts = dense[chunk]
        occ_chunk = occ[chunk]
        singleton, pairwise, cond = _posterior_pass(tree_model, counts)
        for jp in range(f):
            members = structure.visible_indices(jp)
            for j in range(f):
                if j == jp:
                    continue
                joint = _pair_joint(tree_model, singleton, pairwise, cond, j, jp)
                flat = joint.reshape(-1, 4)
                acc_present[j, jp][:, members] += flat.T @ occ_chunk[:, members]
                acc_total[j, jp] += flat.sum(axis=0)

    scores = []
    for j in range(f):
        rows = []
        for jp in range(f):
            if j == jp:
                continue
            for v in structure.visible_indices(jp):
                present = acc_present[j, jp][:, v] / n
                absent = acc_total[j, jp] / n - present
                joint = np.stack([absent, present], axis=1).reshape(2, 2, 2)
                rows.append((int(v), cmi_from_joint(joint)))
        rows.sort(key=lambda item: (-item[1], item[0]))
        scores.append(rows)
    return CmiTable(scores=scores)


def estimate_cmi(tree_model: SbmModel, corpus: Corpus, j: int, v: int) -> float:
    """Conditional mutual information between hidden unit j and word v given
    the unit owning v, estimated over the corpus."""
    structure = tree_model.structure
    owner = _skeleton_owner(structure)
    if not 0 <= v < structure.n_visible:
        raise ValueError(f"visible index {v} out of range")
    if not 0 <= j < structure.n_hidden:
        raise ValueError(f"hidden index {j} out of range")
    jp = int(owner[v])
    if jp == j:
        raise ValueError(f"word {v} belongs to hidden unit {j}'s own group")
    n = corpus.n_docs
    dense = corpus.counts_matrix()
    occ = corpus.occurrence_matrix()[:, v]
    joint = np.zeros((2, 2, 2))
    for start in range(0, n, _CMI_CHUNK):
        chunk = slice(start, min(start + _CMI_CHUNK, n))
        counts = dense[chunk]
        lengths = counts.sum(axis=1)
        theta = counts @ tree_model.W.T + lengths[:, None] * tree_model.a
        if structure.n_tree_edges:
            edge_logw = lengths[:, None] * tree_model.Wt[None, :]
        else:
            edge_logw = np.zeros((counts.shape[0], 0))
        singleton, pairwise, _ = tree_sum_product(structure, theta, edge_logw)
        cond = [None] * structure.n_hidden
        edge = (min(j, jp), max(j, jp))
        if edge not in structure.tree_edges and (
            structure.component[j] == structure.component[jp]
        ):
            per_value = []
            for value in (0, 1):
                s, _, _ = tree_sum_product(
                    structure, theta, edge_logw, want_pairwise=False,
                    clamp={jp: value},
                )
                per_value.append(s)
            cond[jp] = per_value
        pair = _pair_joint(tree_model, singleton, pairwise, cond, j, jp)
        ind = occ[chunk]
        joint[:, :, 1] += (pair * ind[:, None, None]).sum(axis=0)
        joint[:, :, 0] += (pair * (1.0 - ind)[:, None, None]).sum(axis=0)
    joint /= n
    return cmi_from_joint(joint)


def save_cmi_table(table: CmiTable, path) -> None:
    """TSV dump: hidden, visible, score."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("hidden\tvisible\tscore\n")
        for j, rows in enumerate(table.scores):
            for v, score in rows:
                fh.write(f"{j}\t{v}\t{score!r}\n")


# ---------------------------------------------------------------------------
# skeleton expansion


def resolve_new_edges(skeleton: Skeleton, m) -> list:
    """Per-unit counts of new connections from an int, fraction or sequence.

    A float in (0, 1) is a target total-degree fraction: each unit ends with
    ceil(m * K) visible connections. An int adds that many edges to every
    unit; a sequence gives per-unit counts directly.
    """
    k = skeleton.n_visible
    if isinstance(m, float):
        if not 0.0 < m < 1.0:
            raise ValueError("fractional target must lie in (0, 1)")
        target = int(np.ceil(m * k))
        return [max(0, target - g.size) for g in skeleton.groups]
    if isinstance(m, (int, np.integer)):
        if m < 0:
            raise ValueError("new-connection count must be non-negative")
        return [int(m)] * skeleton.n_hidden
    counts = [int(x) for x in m]
    if len(counts) != skeleton.n_hidden:
        raise ValueError("per-unit counts must cover every hidden unit")
    if any(c < 0 for c in counts):
        raise ValueError("new-connection counts must be non-negative")
    return counts


def sbm_sfc(
    skeleton: Skeleton,
    tree_model: SbmModel,
    corpus: Corpus,
    m=0.2,
    cmi_table: CmiTable | None = None,
) -> SbmStructure:
    """Expand a skeleton by the highest-CMI out-of-group words per unit.

    m may be a per-unit count of new connections, a target total-degree
    fraction of the vocabulary (default 0.2), or a per-unit sequence.
    Requests beyond the available out-of-group words are clamped with a
    warning. The hidden tree is copied from the skeleton unchanged.
    """
    if tree_model.structure != skeleton.to_structure():
        raise ValueError("tree model was not trained on this skeleton")
    if corpus.n_words != skeleton.n_visible:
        raise ValueError("corpus vocabulary does not match the skeleton")
    per_unit = resolve_new_edges(skeleton, m)
    if cmi_table is None:
        cmi_table = build_cmi_table(tree_model, corpus)
    k = skeleton.n_visible
    edges = []
    for j, g in enumerate(skeleton.groups):
        available = k - g.size
        want = per_unit[j]
        if want > available:
            warnings.warn(
                f"hidden unit {j}: requested {want} new edges,"
                f" only {available} words available"
            )
            want = available
        edges.extend((j, int(v)) for v in g)
        edges.extend((j, v) for v, _ in cmi_table.top(j, want))
    return SbmStructure(skeleton.n_hidden, k, edges, skeleton.tree_edges)
