"""Nested subtree sequences and cross-validated final tree selection.

Both pruning schemes are weakest-link pruning over a per-internal-node
"gain": the split statistic for PASD trees (split-complexity pruning) and the
reduction in training heterogeneity for CART-TO trees (cost-complexity
pruning).  ``g(m)`` is the mean gain over the internal nodes of the branch
rooted at ``m``; the branch with the smallest ``g`` is collapsed first and
``g`` becomes the next threshold.  Branches tied at the minimum are
collapsed together so the thresholds are strictly increasing.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import GroupLevelMeasure, MeasureMismatch
from .measures import Measure
from .tree import Criterion, GrowthConfig, Tree, TreeNode, grow, make_target, node_stats_on

__all__ = [
    "PrunedSequence",
    "SelectionRule",
    "SelectionConfig",
    "split_complexity",
    "g_value",
    "weakest_link_sequence",
    "cost_complexity_sequence",
    "CrossValidatedFit",
    "fit_cv",
    "select_final_cv_error",
    "select_final_cv_split_complexity",
]

_GAIN_RTOL = 1e-10


@dataclass(frozen=True)
class PrunedSequence:
    """Thresholds ``alphas`` and, per threshold, the ids of collapsed nodes.

    ``collapsed[k]`` lists the nodes of the initial tree that are leaves in
    the k-th subtree (their descendants are implicitly removed).
    """

    alphas: tuple[float, ...]
    collapsed: tuple[frozenset[int], ...]

    def __len__(self) -> int:
        return len(self.alphas)

    def subtree(self, tree: Tree, k: int) -> Tree:
        return tree.prune(self.collapsed[k])

    def index_at(self, alpha: float) -> int:
        """Index of the optimal subtree for penalty ``alpha`` (largest k with alphas[k] <= alpha)."""
        return max(0, int(np.searchsorted(np.asarray(self.alphas), alpha, side="right")) - 1)

    def to_dict(self) -> dict:
        return {
            "format": "pasd-pruned-sequence",
            "version": 1,
            "alphas": list(self.alphas),
            "collapsed": [sorted(c) for c in self.collapsed],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PrunedSequence":
        return cls(tuple(float(a) for a in d["alphas"]), tuple(frozenset(c) for c in d["collapsed"]))


def split_complexity(tree: Tree, alpha: float) -> float:
    internal = tree.internal_nodes()
    return float(sum(nd.statistic for nd in internal) - alpha * len(internal))


def g_value(node: TreeNode, tree: Tree | None = None) -> float:
    """Mean split statistic over the branch rooted at ``node``; +inf for a leaf."""
    stats = [nd.statistic for nd in node.walk() if nd.split is not None]
    if not stats:
        return math.inf
    return float(sum(stats) / len(stats))


def _weakest_link(tree: Tree, gain: dict[int, float]) -> PrunedSequence:
    collapsed: set[int] = set()
    alphas = [0.0]
    seqs = [frozenset()]
    while True:
        # post-order accumulation of branch gain sums / internal counts
        branch = {}
        order = []
        stack = [tree.root]
        while stack:
            node = stack.pop()
            if node.split is None or node.node_id in collapsed:
                continue
            order.append(node)
            stack.append(node.left)
            stack.append(node.right)
        if not order:
            break
        for node in reversed(order):
            s, c = gain[node.node_id], 1
            for child in (node.left, node.right):
                if child.node_id in branch:
                    cs, cc = branch[child.node_id]
                    s += cs
                    c += cc
            branch[node.node_id] = (s, c)
        g = {nid: s / c for nid, (s, c) in branch.items()}
        gmin = min(g.values())
        tol = _GAIN_RTOL * max(1.0, abs(gmin))
        weakest = {nid for nid, v in g.items() if v <= gmin + tol}
        # keep the set minimal: drop collapsed descendants of newly collapsed nodes
        for nid in weakest:
            for nd in tree.node(nid).walk():
                if nd.node_id != nid:
                    collapsed.discard(nd.node_id)
        collapsed |= {nid for nid in weakest if not _has_ancestor_in(tree, nid, weakest)}
        snapshot = frozenset(collapsed)
        if gmin <= alphas[-1] + _GAIN_RTOL * max(1.0, abs(alphas[-1])):
            seqs[-1] = snapshot
        else:
            alphas.append(float(gmin))
            seqs.append(snapshot)
    return PrunedSequence(tuple(alphas), tuple(seqs))


def _has_ancestor_in(tree: Tree, nid: int, ids: set[int]) -> bool:
    for a in ids:
        if a != nid and any(nd.node_id == nid for nd in tree.node(a).walk()):
            return True
    return False


def weakest_link_sequence(tree: Tree) -> PrunedSequence:
    """Split-complexity pruning sequence of a tree with stored split statistics."""
    gain = {nd.node_id: float(nd.statistic) for nd in tree.internal_nodes()}
    return _weakest_link(tree, gain)


def cost_complexity_sequence(tree: Tree, measure: Measure | None = None) -> PrunedSequence:
    """Cost-complexity pruning sequence over the training heterogeneity of a CART-TO tree."""
    measure = Measure.parse(measure) if measure is not None else tree.measure
    if not measure.is_individual:
        raise MeasureMismatch("cost-complexity pruning needs an individual-level measure")
    gain = {}
    for nd in tree.internal_nodes():
        if nd.risk is None or nd.left.risk is None or nd.right.risk is None:
            raise MeasureMismatch("tree was not grown with the CART-TO criterion")
        gain[nd.node_id] = nd.risk - nd.left.risk - nd.right.risk
    return _weakest_link(tree, gain)


def pruning_sequence(tree: Tree) -> PrunedSequence:
    if tree.config.criterion is Criterion.CART_TO:
        return cost_complexity_sequence(tree)
    return weakest_link_sequence(tree)


# --------------------------------------------------------------------------
# cross-validation
# --------------------------------------------------------------------------


class SelectionRule(str, enum.Enum):
    CV_PREDICTION_ERROR = "cv-error"
    CV_SPLIT_COMPLEXITY = "cv-split-complexity"


@dataclass(frozen=True)
class SelectionConfig:
    folds: int = 10
    rule: SelectionRule = SelectionRule.CV_SPLIT_COMPLEXITY
    alpha_prime: float = 4.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rule", SelectionRule(self.rule))
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if self.rule is SelectionRule.CV_SPLIT_COMPLEXITY and not self.alpha_prime > 0:
            raise ValueError("alpha_prime must be positive")


def fold_assignment(n: int, folds: int, rng, labels=None) -> np.ndarray:
    """Fold index per row; stratified by ``labels`` when given."""
    out = np.empty(n, dtype=np.int64)
    if labels is None:
        perm = rng.permutation(n)
        out[perm] = np.arange(n) % folds
        return out
    offset = 0
    for cls in np.unique(labels):
        rows = np.flatnonzero(labels == cls)
        perm = rng.permutation(rows)
        out[perm] = (np.arange(rows.size) + offset) % folds
        offset += rows.size
    return out


def _evaluation_points(alphas) -> np.ndarray:
    a = np.asarray(alphas, dtype=float)
    pts = np.empty_like(a)
    pts[:-1] = np.sqrt(a[:-1] * a[1:])
    pts[-1] = math.inf
    return pts


@dataclass
class CrossValidatedFit:
    """Full-data tree, its pruning sequence, and the per-fold trees needed to score it.

    Scoring by prediction error and by held-out split complexity (for any
    ``alpha_prime``) reuses the same fold trees.
    """

    X: np.ndarray
    target: object
    tree: Tree
    sequence: PrunedSequence
    fold_trees: list[Tree]
    fold_sequences: list[PrunedSequence]
    holdout_rows: list[np.ndarray]
    _fold_stats: list = field(default_factory=list, repr=False)

    @property
    def n_candidates(self) -> int:
        return len(self.sequence)

    def fold_index(self, v: int, k: int) -> int:
        pts = _evaluation_points(self.sequence.alphas)
        return self.fold_sequences[v].index_at(pts[k])

    def fold_subtree(self, v: int, k: int) -> Tree:
        return self.fold_sequences[v].subtree(self.fold_trees[v], self.fold_index(v, k))

    def cv_errors(self) -> np.ndarray:
        """Summed held-out mean squared error of the performance prediction, per candidate."""
        if not self.target.measure.is_individual:
            raise GroupLevelMeasure("prediction-error selection needs individual-level values")
        mu = self.target.values
        out = np.zeros(self.n_candidates)
        for v, rows in enumerate(self.holdout_rows):
            cache = {}
            for k in range(self.n_candidates):
                j = self.fold_index(v, k)
                if j not in cache:
                    sub = self.fold_sequences[v].subtree(self.fold_trees[v], j)
                    cache[j] = float(np.mean((mu[rows] - sub.predict(self.X[rows])) ** 2))
                out[k] += cache[j]
        return out

    def _held_out_statistics(self, v: int) -> dict[int, float]:
        while len(self._fold_stats) <= v:
            self._fold_stats.append(None)
        if self._fold_stats[v] is None:
            tree = self.fold_trees[v]
            stats = node_stats_on(tree, self.X, self.target, self.holdout_rows[v])
            s = {}
            for nd in tree.internal_nodes():
                left, right = stats[nd.left.node_id], stats[nd.right.node_id]
                value = 0.0
                if left is not None and right is not None:
                    denom = left.variance + right.variance
                    if denom > 0:
                        value = (left.estimate - right.estimate) ** 2 / denom
                s[nd.node_id] = value
            self._fold_stats[v] = s
        return self._fold_stats[v]

    def cv_split_complexity(self, alpha_prime: float) -> np.ndarray:
        """Fold-averaged held-out split complexity, per candidate."""
        V = len(self.holdout_rows)
        out = np.zeros(self.n_candidates)
        for v in range(V):
            s = self._held_out_statistics(v)
            tree = self.fold_trees[v]
            for k in range(self.n_candidates):
                sub = self.fold_sequences[v].subtree(tree, self.fold_index(v, k))
                internal = [nd.node_id for nd in sub.internal_nodes()]
                out[k] += sum(s[i] for i in internal) - alpha_prime * len(internal)
        return out / V

    def select_error(self) -> int:
        return _pick(self.cv_errors(), minimize=True)

    def select_split_complexity(self, alpha_prime: float) -> int:
        return _pick(self.cv_split_complexity(alpha_prime), minimize=False)

    def final_tree(self, k: int) -> Tree:
        return self.sequence.subtree(self.tree, k)


def _pick(scores: np.ndarray, minimize: bool) -> int:
    """Best index; exact-ish ties go to the larger index (the smaller tree)."""
    s = -scores if minimize else scores
    top = s.max()
    tol = 1e-12 * max(1.0, abs(top))
    return int(np.flatnonzero(s >= top - tol)[-1])


def fit_cv(X, target, growth_config: GrowthConfig, folds: int = 10, seed: int = 0) -> CrossValidatedFit:
    """Grow the full-data tree and one tree per training complement."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    rng = np.random.default_rng(seed)
    labels = None if target.measure.is_individual else target.labels
    assign = fold_assignment(n, folds, rng, labels)
    tree = grow(X, target, growth_config)
    seq = pruning_sequence(tree)
    fold_trees, fold_seqs, holdout = [], [], []
    for v in range(folds):
        train = np.flatnonzero(assign != v)
        t = grow(X, target, growth_config, rows=train)
        fold_trees.append(t)
        fold_seqs.append(pruning_sequence(t))
        holdout.append(np.flatnonzero(assign == v))
    return CrossValidatedFit(X, target, tree, seq, fold_trees, fold_seqs, holdout)


def _fit_for(data: Dataset, measure, model_index, growth_config, selection_config):
    measure = Measure.parse(measure)
    target = make_target(measure, data.y, data.H[:, model_index])
    fit = fit_cv(data.X, target, growth_config, selection_config.folds, selection_config.rng_seed)
    fit.tree.model_index = model_index
    return fit


def select_final_cv_error(data: Dataset, measure, model_index: int = 0,
                          growth_config: GrowthConfig | None = None,
                          selection_config: SelectionConfig | None = None) -> Tree:
    """Subtree minimising the cross-validated error of the performance prediction."""
    measure = Measure.parse(measure)
    if not measure.is_individual:
        raise GroupLevelMeasure("prediction-error selection needs an individual-level measure")
    growth_config = growth_config or GrowthConfig()
    selection_config = selection_config or SelectionConfig(rule=SelectionRule.CV_PREDICTION_ERROR)
    fit = _fit_for(data, measure, model_index, growth_config, selection_config)
    return fit.final_tree(fit.select_error())


def select_final_cv_split_complexity(data: Dataset, measure, model_index: int = 0,
                                     growth_config: GrowthConfig | None = None,
                                     selection_config: SelectionConfig | None = None) -> Tree:
    """Subtree maximising the fold-averaged held-out split complexity."""
    growth_config = growth_config or GrowthConfig()
    selection_config = selection_config or SelectionConfig()
    fit = _fit_for(data, measure, model_index, growth_config, selection_config)
    return fit.final_tree(fit.select_split_complexity(selection_config.alpha_prime))
