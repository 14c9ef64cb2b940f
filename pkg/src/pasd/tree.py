"""Binary performance trees.

Two growth criteria are supported:

* ``CART_TO`` minimises within-child heterogeneity of the observed losses
  (L2 or L1 distance to the child mean); it needs an individual-level
  measure.
* ``PASD`` maximises the squared standardized difference between the two
  children, ``(m_L - m_R)^2 / (v_L + v_R)``, and works for any measure that
  supplies a subgroup estimate and a variance estimate, AUC included.

Candidate cutpoints are midpoints between consecutive distinct values of a
feature; an observation goes left iff ``x[feature] <= cutpoint``.  Ties
between equally good splits go to the lowest feature index, then the
smallest cutpoint.

Trees are grown on row-index subsets of shared arrays, so bootstrap
resamples, cross-validation folds and honest splits never copy data.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterator

import numpy as np

from . import _fast
from .data import Dataset
from .errors import DatasetTooSmall, DimensionMismatch, GroupLevelMeasure, MeasureMismatch
from .measures import (
    Measure,
    SubgroupStats,
    auc_counts,
    individual_loss,
    standardized_difference,
)

TREE_FORMAT = "pasd-tree"
TREE_FORMAT_VERSION = 1

# Products m*n of cases and controls above which the AUC scan falls back to
# evaluating candidates one at a time instead of building m x n prefix tables.
_AUC_TABLE_LIMIT = 1_500_000
# Relative tolerance used to declare two split scores tied.
_TIE_RTOL = 1e-12


class Criterion(str, enum.Enum):
    CART_TO = "cart-to"
    PASD = "pasd"


class Heterogeneity(str, enum.Enum):
    L2 = "l2"
    L1 = "l1"


@dataclass(frozen=True)
class GrowthConfig:
    """Stopping rules and split-search options.

    ``min_node_size`` is the minimum number of observations in each child.
    For AUC, each child also needs ``min_cases`` cases and ``min_controls``
    controls.  ``max_depth=None`` grows until no admissible split remains.
    """

    max_depth: int | None = 10
    min_node_size: int = 20
    min_cases: int = 10
    min_controls: int = 10
    criterion: Criterion = Criterion.PASD
    heterogeneity: Heterogeneity = Heterogeneity.L2
    mtry: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "criterion", Criterion(self.criterion))
        object.__setattr__(self, "heterogeneity", Heterogeneity(self.heterogeneity))

    @classmethod
    def fully_grown(cls, measure: Measure, **overrides) -> "GrowthConfig":
        """Config bounded only by the estimators' minimum subgroup sizes."""
        measure = Measure.parse(measure)
        if measure.is_individual:
            base = dict(max_depth=None, min_node_size=2, min_cases=0, min_controls=0)
        else:
            base = dict(max_depth=None, min_node_size=4, min_cases=2, min_controls=2)
        base.update(overrides)
        return cls(**base)

    def validate(self, measure: Measure, p: int) -> None:
        measure = Measure.parse(measure)
        if measure.is_individual:
            if self.min_node_size < 2:
                raise ValueError("min_node_size must be >= 2 for loss measures")
        else:
            if self.min_cases < 2 or self.min_controls < 2:
                raise ValueError("AUC trees need min_cases >= 2 and min_controls >= 2")
            if self.criterion is Criterion.CART_TO:
                raise MeasureMismatch("CART-TO needs an individual-level measure")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.mtry is not None and not 1 <= self.mtry <= p:
            raise ValueError(f"mtry must lie in [1, {p}], got {self.mtry}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["criterion"] = self.criterion.value
        d["heterogeneity"] = self.heterogeneity.value
        return d


@dataclass(frozen=True)
class Split:
    feature: int
    cutpoint: float


@dataclass
class TreeNode:
    node_id: int
    depth: int
    stats: SubgroupStats
    split: Split | None = None
    statistic: float | None = None
    risk: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    indices: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def is_leaf(self) -> bool:
        return self.split is None

    def walk(self) -> Iterator["TreeNode"]:
        """Pre-order traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            if node.split is not None:
                stack.append(node.right)
                stack.append(node.left)


# --------------------------------------------------------------------------
# targets: what a node's rows are summarised by
# --------------------------------------------------------------------------


class LossTarget:
    """Per-observation performance values (losses, or boosting residuals)."""

    def __init__(self, values, measure: Measure = Measure.SQUARED_ERROR):
        self.values = np.asarray(values, dtype=float)
        self.measure = Measure.parse(measure)
        if not self.measure.is_individual:
            raise GroupLevelMeasure("LossTarget needs an individual-level measure")

    @property
    def n(self) -> int:
        return self.values.size

    def node_stats(self, rows) -> SubgroupStats | None:
        v = self.values[rows]
        n = v.size
        if n < 2:
            return None
        est = float(v.mean())
        var = float(np.sum((v - est) ** 2) / (n * (n - 1)))
        return SubgroupStats(est, var, n)

    def risk(self, rows, heterogeneity: Heterogeneity) -> float:
        v = self.values[rows]
        if v.size == 0:
            return 0.0
        d = v - v.mean()
        if heterogeneity is Heterogeneity.L1:
            return float(np.abs(d).sum())
        return float(np.dot(d, d))

    def splittable(self, rows, config: GrowthConfig) -> bool:
        return len(rows) >= 2 * config.min_node_size

    def scan(self, x, rows, config: GrowthConfig):
        """Score every admissible cut on one feature.

        Returns ``(cuts, scores)`` where higher scores are better: the PASD
        statistic, or the negated CART-TO criterion.  Undefined PASD
        statistics (zero variance of the difference) come back as NaN.
        """
        order = np.argsort(x, kind="stable")
        xs = x[order]
        v = self.values[rows][order]
        n = xs.size
        k = config.min_node_size
        t = np.arange(k, n - k + 1)
        if t.size == 0:
            return np.empty(0), np.empty(0)
        ok = xs[t - 1] < xs[t]
        t = t[ok]
        if t.size == 0:
            return np.empty(0), np.empty(0)
        cuts = _midpoints(xs[t - 1], xs[t])

        if config.criterion is Criterion.CART_TO and config.heterogeneity is Heterogeneity.L1:
            crit = np.array([
                np.abs(v[:i] - v[:i].mean()).sum() + np.abs(v[i:] - v[i:].mean()).sum() for i in t
            ])
            return cuts, -crit

        center = v.mean()
        vc = v - center
        cs = np.cumsum(vc)
        cs2 = np.cumsum(vc * vc)
        tot, tot2 = cs[-1], cs2[-1]
        n_l = t.astype(float)
        n_r = n - n_l
        sum_l = cs[t - 1]
        sum_r = tot - sum_l
        ss_l = cs2[t - 1] - sum_l * sum_l / n_l
        ss_r = (tot2 - cs2[t - 1]) - sum_r * sum_r / n_r
        floor = 1e-11 * tot2
        ss_l = np.where(ss_l <= floor, 0.0, ss_l)
        ss_r = np.where(ss_r <= floor, 0.0, ss_r)

        if config.criterion is Criterion.CART_TO:
            return cuts, -(ss_l + ss_r)

        diff = sum_l / n_l - sum_r / n_r
        denom = ss_l / (n_l * (n_l - 1)) + ss_r / (n_r * (n_r - 1))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(denom > 0, diff * diff / denom, np.nan)
        return cuts, s


class AUCTarget:
    """Binary outcome with one score column; summarised by the subgroup AUC."""

    measure = Measure.AUC

    def __init__(self, labels, scores):
        self.labels = np.asarray(labels).astype(np.int8)
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("AUC needs a binary 0/1 outcome")
        self.scores = np.asarray(scores, dtype=float)

    @property
    def n(self) -> int:
        return self.labels.size

    def node_stats(self, rows) -> SubgroupStats | None:
        lab = self.labels[rows]
        n1 = int(lab.sum())
        n0 = lab.size - n1
        if n1 < 2 or n0 < 2:
            return None
        c, d = auc_counts(lab, self.scores[rows])
        est, var = _auc_moments(c.sum(), float(c @ c), float(d @ d), float(n1), float(n0))
        raw = float(var)
        return SubgroupStats(float(est), max(raw, 0.0), lab.size, n1, n0, clamped=raw < 0)

    def risk(self, rows, heterogeneity) -> float:  # pragma: no cover - guarded by validate()
        raise MeasureMismatch("CART-TO needs an individual-level measure")

    def splittable(self, rows, config: GrowthConfig) -> bool:
        lab = self.labels[rows]
        n1 = int(lab.sum())
        n0 = lab.size - n1
        mc, m0 = max(config.min_cases, 2), max(config.min_controls, 2)
        return lab.size >= 2 * config.min_node_size and n1 >= 2 * mc and n0 >= 2 * m0

    def scan(self, x, rows, config: GrowthConfig):
        order = np.argsort(x, kind="stable")
        xs = x[order]
        lab = self.labels[rows][order].astype(np.int64)
        sc = self.scores[rows][order]
        n = xs.size
        m1 = int(lab.sum())
        m0 = n - m1
        mc, mk = max(config.min_cases, 2), max(config.min_controls, 2)
        kmin = max(config.min_node_size, 1)
        t = np.arange(1, n)
        cases_left = np.cumsum(lab)[t - 1]
        ctrl_left = t - cases_left
        ok = (
            (xs[t - 1] < xs[t])
            & (t >= kmin) & (n - t >= kmin)
            & (cases_left >= mc) & (ctrl_left >= mk)
            & (m1 - cases_left >= mc) & (m0 - ctrl_left >= mk)
        )
        t = t[ok]
        if t.size == 0:
            return np.empty(0), np.empty(0)
        cuts = _midpoints(xs[t - 1], xs[t])
        ml = cases_left[ok]
        nl = ctrl_left[ok]
        a = sc[lab == 1]
        b = sc[lab == 0]
        if m1 * m0 <= _AUC_TABLE_LIMIT:
            u_l, c2_l, d2_l, u_r, c2_r, d2_r = _auc_prefix_tables(a, b, ml, nl)
        else:
            u_l, c2_l, d2_l, u_r, c2_r, d2_r = _auc_prefix_direct(lab, sc, t)
        est_l, var_l = _auc_moments(u_l, c2_l, d2_l, ml.astype(float), nl.astype(float))
        est_r, var_r = _auc_moments(u_r, c2_r, d2_r, (m1 - ml).astype(float), (m0 - nl).astype(float))
        denom = np.maximum(var_l, 0.0) + np.maximum(var_r, 0.0)
        diff = est_l - est_r
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(denom > 0, diff * diff / denom, np.nan)
        return cuts, s


def _midpoints(lo, hi):
    cuts = 0.5 * (lo + hi)
    # adjacent doubles can round the midpoint up onto the right value
    return np.where(cuts >= hi, lo, cuts)


def _auc_moments(u, sc2, sd2, m, n):
    """Vectorised AUC estimate and (unclamped) unbiased variance from win counts."""
    mu = u / (m * n)
    mu_sq = (u * u - sc2 - sd2 + u) / (m * (m - 1) * n * (n - 1))
    xi01 = (sd2 - u) / (m * (m - 1) * n) - mu_sq
    xi10 = (sc2 - u) / (m * n * (n - 1)) - mu_sq
    var = (mu - mu_sq + (m - 1) * xi01 + (n - 1) * xi10) / (m * n)
    return mu, var


def _auc_prefix_tables(a, b, ml, nl):
    """Win-count sums for every (cases-left, controls-left) pair via prefix tables.

    ``a`` and ``b`` are case and control scores in feature order, so the left
    child at a cut holds the first ``ml`` cases and the first ``nl`` controls.
    """
    m, n = a.size, b.size
    G = (a[:, None] > b[None, :]).astype(float)
    Cr = np.zeros((m, n + 1))
    np.cumsum(G, axis=1, out=Cr[:, 1:])
    Crr = Cr[:, -1:] - Cr
    Dc = np.zeros((m + 1, n))
    np.cumsum(G, axis=0, out=Dc[1:])
    Ddr = Dc[-1:] - Dc
    del G

    def prefix0(A):
        out = np.zeros((A.shape[0] + 1, A.shape[1]))
        np.cumsum(A, axis=0, out=out[1:])
        return out

    def suffix0(A):
        out = np.zeros((A.shape[0] + 1, A.shape[1]))
        out[:-1] = np.cumsum(A[::-1], axis=0)[::-1]
        return out

    mr = ml
    nr = nl
    u_l = prefix0(Cr)[mr, nr]
    c2_l = prefix0(Cr * Cr)[mr, nr]
    u_r = suffix0(Crr)[mr, nr]
    c2_r = suffix0(Crr * Crr)[mr, nr]
    d2_l = prefix0((Dc * Dc).T)[nr, mr]
    d2_r = suffix0((Ddr * Ddr).T)[nr, mr]
    return u_l, c2_l, d2_l, u_r, c2_r, d2_r


def _auc_prefix_direct(lab, sc, t):
    out = np.empty((6, t.size))
    for j, i in enumerate(t):
        for side, (ll, ss) in enumerate(((lab[:i], sc[:i]), (lab[i:], sc[i:]))):
            c, d = auc_counts(ll, ss)
            out[3 * side:3 * side + 3, j] = (c.sum(), c @ c, d @ d)
    return tuple(out)


def make_target(measure: Measure, y, h):
    """Target for ``measure`` on outcome ``y`` and model output ``h``."""
    measure = Measure.parse(measure)
    if measure.is_individual:
        return LossTarget(individual_loss(measure, y, h), measure)
    return AUCTarget(y, h)


# --------------------------------------------------------------------------
# split search
# --------------------------------------------------------------------------


def _search(X, target, rows, config: GrowthConfig, features) -> tuple[Split, float] | None:
    best_score = -math.inf
    best = None
    for f in features:
        cuts, scores = target.scan(X[rows, f], rows, config)
        if scores.size == 0:
            continue
        finite = np.isfinite(scores)
        if not finite.any():
            continue
        scores = np.where(finite, scores, -np.inf)
        top = scores.max()
        tol = _TIE_RTOL * max(1.0, abs(top))
        i = int(np.flatnonzero(scores >= top - tol)[np.argmin(cuts[scores >= top - tol])])
        if best is None or scores[i] > best_score + _TIE_RTOL * max(1.0, abs(best_score)):
            best_score = float(scores[i])
            best = Split(int(f), float(cuts[i]))
    if best is None:
        return None
    return best, best_score


def _feature_keys(n_rows: int, p: int, config: GrowthConfig, rng) -> np.ndarray | None:
    """One row of uniform keys per potential node id, or None without subsampling.

    The subset for node ``i`` is the ``mtry`` smallest keys of row ``i``, so
    the draw depends only on the node id and not on traversal details.
    """
    if config.mtry is None or config.mtry >= p:
        return None
    return rng.random((2 * n_rows + 1, p))


def _features(p, config: GrowthConfig, keys, node_id: int) -> np.ndarray:
    if keys is None:
        return np.arange(p)
    return np.sort(np.argsort(keys[node_id])[: config.mtry])


def best_split_pasd(X, target, config: GrowthConfig | None = None, rows=None, features=None):
    """Split maximising the standardized difference; ``None`` if none is admissible.

    Returns ``(Split, s)``.
    """
    config = replace(config or GrowthConfig(), criterion=Criterion.PASD)
    X = np.asarray(X, dtype=float)
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows)
    if not target.splittable(rows, config):
        return None
    features = np.arange(X.shape[1]) if features is None else features
    return _search(X, target, rows, config, features)


def best_split_cart_to(X, target, config: GrowthConfig | None = None, rows=None, features=None):
    """Split minimising summed within-child heterogeneity; returns ``(Split, criterion)``."""
    if not isinstance(target, LossTarget):
        raise GroupLevelMeasure("CART-TO needs individual-level performance values")
    config = replace(config or GrowthConfig(), criterion=Criterion.CART_TO)
    X = np.asarray(X, dtype=float)
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows)
    if not target.splittable(rows, config):
        return None
    features = np.arange(X.shape[1]) if features is None else features
    found = _search(X, target, rows, config, features)
    if found is None:
        return None
    split, score = found
    return split, -score


# --------------------------------------------------------------------------
# tree
# --------------------------------------------------------------------------


@dataclass
class Tree:
    root: TreeNode
    measure: Measure
    model_index: int
    config: GrowthConfig
    n_features: int

    def __post_init__(self):
        self._index = None
        self._flat = None
        self._values = None

    def flat(self):
        """Array form ``(feature, cut, left, right, node_ids)``; leaves have feature -1."""
        if self._flat is None:
            nodes = self.nodes()
            pos = {nd.node_id: i for i, nd in enumerate(nodes)}
            k = len(nodes)
            feature = np.full(k, -1, np.int64)
            cut = np.zeros(k)
            left = np.full(k, -1, np.int64)
            right = np.full(k, -1, np.int64)
            for i, nd in enumerate(nodes):
                if nd.split is not None:
                    feature[i] = nd.split.feature
                    cut[i] = nd.split.cutpoint
                    left[i] = pos[nd.left.node_id]
                    right[i] = pos[nd.right.node_id]
            ids = np.array([nd.node_id for nd in nodes], dtype=np.int64)
            self._flat = (feature, cut, left, right, ids)
        return self._flat

    # -- structure -------------------------------------------------------
    def nodes(self) -> list[TreeNode]:
        return list(self.root.walk())

    def leaves(self) -> list[TreeNode]:
        return [nd for nd in self.root.walk() if nd.is_leaf]

    def internal_nodes(self) -> list[TreeNode]:
        return [nd for nd in self.root.walk() if not nd.is_leaf]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    def node(self, node_id: int) -> TreeNode:
        if self._index is None:
            self._index = {nd.node_id: nd for nd in self.root.walk()}
        return self._index[node_id]

    def split_features(self) -> set[int]:
        return {nd.split.feature for nd in self.root.walk() if nd.split is not None}

    # -- prediction ------------------------------------------------------
    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} covariates, got {X.shape[1]}")
        return X

    def apply(self, X) -> np.ndarray:
        """Terminal node id for each row of ``X``."""
        X = self._check(X)
        feature, cut, left, right, ids = self.flat()
        return ids[_fast.apply_flat(np.ascontiguousarray(X), feature, cut, left, right)]

    def predict(self, X) -> np.ndarray:
        """Terminal-node performance estimate for each row of ``X``."""
        X = self._check(X)
        feature, cut, left, right, ids = self.flat()
        if self._values is None:
            est = {nd.node_id: nd.stats.estimate for nd in self.root.walk()}
            self._values = np.array([est[i] for i in ids.tolist()])
        return self._values[_fast.apply_flat(np.ascontiguousarray(X), feature, cut, left, right)]

    def route(self, X, rows=None) -> dict[int, np.ndarray]:
        """Row indices reaching every node (internal nodes included)."""
        X = self._check(X)
        rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows)
        out = {}
        stack = [(self.root, rows)]
        while stack:
            node, r = stack.pop()
            out[node.node_id] = r
            if node.split is not None:
                go_left = X[r, node.split.feature] <= node.split.cutpoint
                stack.append((node.left, r[go_left]))
                stack.append((node.right, r[~go_left]))
        return out

    # -- derived trees ---------------------------------------------------
    def prune(self, collapsed) -> "Tree":
        """Copy of the tree with the nodes in ``collapsed`` turned into leaves."""
        collapsed = set(collapsed)

        def copy(node):
            if node.split is None or node.node_id in collapsed:
                return replace(node, split=None, statistic=None, left=None, right=None)
            return replace(node, left=copy(node.left), right=copy(node.right))

        return Tree(copy(self.root), self.measure, self.model_index, self.config, self.n_features)

    def with_stats(self, stats: dict[int, SubgroupStats]) -> "Tree":
        def copy(node):
            new = replace(node, stats=stats.get(node.node_id, node.stats))
            if node.split is not None:
                new.left = copy(node.left)
                new.right = copy(node.right)
            return new

        return Tree(copy(self.root), self.measure, self.model_index, self.config, self.n_features)

    # -- serialisation ---------------------------------------------------
    def to_dict(self) -> dict:
        def enc(node):
            d = {"id": node.node_id, "depth": node.depth, **node.stats.to_dict()}
            if node.risk is not None:
                d["risk"] = node.risk
            if node.split is not None:
                d["feature"] = node.split.feature
                d["cutpoint"] = node.split.cutpoint
                d["statistic"] = node.statistic
                d["left"] = enc(node.left)
                d["right"] = enc(node.right)
            return d

        return {
            "format": TREE_FORMAT,
            "version": TREE_FORMAT_VERSION,
            "measure": self.measure.value,
            "model_index": self.model_index,
            "n_features": self.n_features,
            "config": self.config.to_dict(),
            "root": enc(self.root),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        if doc.get("format") != TREE_FORMAT:
            raise ValueError("not a serialized tree")

        def dec(d):
            node = TreeNode(int(d["id"]), int(d["depth"]), SubgroupStats.from_dict(d), risk=d.get("risk"))
            if "feature" in d:
                node.split = Split(int(d["feature"]), float(d["cutpoint"]))
                node.statistic = float(d["statistic"])
                node.left = dec(d["left"])
                node.right = dec(d["right"])
            return node

        return cls(dec(doc["root"]), Measure(doc["measure"]), int(doc["model_index"]),
                   GrowthConfig(**doc["config"]), int(doc["n_features"]))

    def render(self, feature_names=None, digits: int = 4) -> str:
        """Indented text rendering, one line per node."""
        names = feature_names or [f"X{j + 1}" for j in range(self.n_features)]
        lines = []

        def fmt(node):
            s = node.stats
            extra = f", cases={s.n_cases}, controls={s.n_controls}" if s.n_cases is not None else ""
            flag = " [fallback]" if s.fallback else ""
            return f"n={s.n}{extra}, estimate={s.estimate:.{digits}g}, se={math.sqrt(s.variance):.{digits}g}{flag}"

        def visit(node, indent, label):
            lines.append(f"{'    ' * indent}{label}{fmt(node)}")
            if node.split is not None:
                nm = names[node.split.feature]
                c = node.split.cutpoint
                stat = f"  (split statistic {node.statistic:.{digits}g})"
                lines[-1] += stat
                visit(node.left, indent + 1, f"{nm} <= {c:.{digits}g}: ")
                visit(node.right, indent + 1, f"{nm} > {c:.{digits}g}: ")

        visit(self.root, 0, "root: ")
        return "\n".join(lines)


def grow(X, target, config: GrowthConfig | None = None, rows=None, rng=None, keep_indices=False,
         reference=False) -> Tree:
    """Grow an initial tree on ``rows`` of ``X`` summarised by ``target``.

    Squared-error loss trees use the compiled kernel unless ``reference`` is
    set or node row indices are requested; both paths give the same tree.
    """
    config = config or GrowthConfig()
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    measure = target.measure
    config.validate(measure, p)
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows)
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    cart = config.criterion is Criterion.CART_TO
    if cart and not isinstance(target, LossTarget):
        raise MeasureMismatch("CART-TO needs an individual-level measure")

    root_stats = target.node_stats(rows)
    if root_stats is None or len(rows) < config.min_node_size:
        raise DatasetTooSmall(f"{len(rows)} rows cannot form an admissible root node")
    keys = _feature_keys(len(rows), p, config, rng)
    if _fast_eligible(target, config) and not (keep_indices or reference):
        return _grow_compiled(X, target, config, rows, keys)

    next_id = 0
    root = None
    # (parent, side, rows, depth, stats)
    stack = [(None, None, rows, 0, root_stats)]
    while stack:
        parent, side, r, depth, stats = stack.pop()
        node = TreeNode(next_id, depth, stats, indices=r if keep_indices else None)
        next_id += 1
        if cart:
            node.risk = target.risk(r, config.heterogeneity)
        if parent is None:
            root = node
        else:
            setattr(parent, side, node)

        if config.max_depth is not None and depth >= config.max_depth:
            continue
        if not target.splittable(r, config):
            continue
        if cart and node.risk <= 0.0:
            continue
        found = _search(X, target, r, config, _features(p, config, keys, node.node_id))
        if found is None:
            continue
        split, _ = found
        go_left = X[r, split.feature] <= split.cutpoint
        rl, rr = r[go_left], r[~go_left]
        sl, sr = target.node_stats(rl), target.node_stats(rr)
        if sl is None or sr is None:
            continue
        if cart:
            stat = target.risk(rl, config.heterogeneity) + target.risk(rr, config.heterogeneity)
        else:
            stat = standardized_difference(sl, sr)
            if not math.isfinite(stat):
                continue
        node.split = split
        node.statistic = float(stat)
        stack.append((node, "right", rr, depth + 1, sr))
        stack.append((node, "left", rl, depth + 1, sl))
    return Tree(root, measure, 0, config, p)


def _fast_eligible(target, config: GrowthConfig) -> bool:
    return isinstance(target, LossTarget) and config.heterogeneity is Heterogeneity.L2


def _grow_compiled(X, target: LossTarget, config: GrowthConfig, rows, keys) -> Tree:
    p = X.shape[1]
    feature, cut, left, right, depth, count, est, ss, stat = _fast.grow_loss(
        np.ascontiguousarray(X), target.values, rows.astype(np.int64), int(config.min_node_size),
        -1 if config.max_depth is None else int(config.max_depth),
        config.criterion is Criterion.CART_TO, int(config.mtry or p),
        np.empty((1, p)) if keys is None else keys, _TIE_RTOL,
    )
    cart = config.criterion is Criterion.CART_TO
    nodes = []
    for i in range(feature.size):
        n = int(count[i])
        node = TreeNode(i, int(depth[i]), SubgroupStats(float(est[i]), float(ss[i]) / (n * (n - 1)), n))
        if cart:
            node.risk = float(ss[i])
        if feature[i] >= 0:
            node.split = Split(int(feature[i]), float(cut[i]))
            node.statistic = float(stat[i])
        nodes.append(node)
    for i in np.flatnonzero(feature >= 0):
        nodes[i].left = nodes[left[i]]
        nodes[i].right = nodes[right[i]]
    tree = Tree(nodes[0], target.measure, 0, config, p)
    tree._flat = (feature, cut, left, right, np.arange(feature.size))
    return tree


def grow_tree(data: Dataset, measure: Measure, model_index: int = 0,
              config: GrowthConfig | None = None) -> Tree:
    """Grow the initial tree for model ``model_index`` of ``data``."""
    measure = Measure.parse(measure)
    target = make_target(measure, data.y, data.H[:, model_index])
    tree = grow(data.X, target, config)
    tree.model_index = model_index
    return tree


def predict(tree: Tree, x) -> float:
    """Estimated performance at a single covariate vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != tree.n_features:
        raise DimensionMismatch(f"expected a vector of length {tree.n_features}")
    node = tree.root
    while node.split is not None:
        node = node.left if x[node.split.feature] <= node.split.cutpoint else node.right
    return node.stats.estimate


def node_stats_on(tree: Tree, X, target, rows=None) -> dict[int, SubgroupStats | None]:
    """Subgroup statistics of every node recomputed from the given rows."""
    routed = tree.route(X, rows)
    return {nid: target.node_stats(r) for nid, r in routed.items()}


def _loss_node_stats(tree: Tree, X, target: LossTarget, rows) -> dict[int, SubgroupStats | None]:
    X = tree._check(X)
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows)
    feature, cut, left, right, ids = tree.flat()
    count, mean, ss = _fast.path_moments(np.ascontiguousarray(X), target.values, rows.astype(np.int64),
                                         feature, cut, left, right)
    out = {}
    for i, nid in enumerate(ids.tolist()):
        n = int(count[i])
        out[nid] = SubgroupStats(float(mean[i]), float(ss[i]) / (n * (n - 1)), n) if n >= 2 else None
    return out


def reestimate(tree: Tree, X, target, rows=None) -> Tree:
    """Replace node estimates with ones computed from independent rows.

    Nodes whose rows are too few for the measure inherit the nearest
    ancestor's re-estimated stats and are flagged ``fallback``; if even the
    root is too small the training stats are kept, flagged.
    """
    if isinstance(target, LossTarget):
        fresh = _loss_node_stats(tree, X, target, rows)
    else:
        fresh = node_stats_on(tree, X, target, rows)
    out: dict[int, SubgroupStats] = {}
    stack = [(tree.root, None)]
    while stack:
        node, inherited = stack.pop()
        s = fresh[node.node_id]
        if s is None:
            base = inherited if inherited is not None else node.stats
            s = replace(base, fallback=True)
            inherited_next = inherited
        else:
            inherited_next = s
        out[node.node_id] = s
        if node.split is not None:
            stack.append((node.right, inherited_next))
            stack.append((node.left, inherited_next))
    return tree.with_stats(out)


def honest_estimate(tree: Tree, holdout: Dataset) -> Tree:
    """Re-estimate every node of ``tree`` on an independent holdout set."""
    target = make_target(tree.measure, holdout.y, holdout.H[:, tree.model_index])
    return reestimate(tree, holdout.X, target)
