"""Brute-force reference computations used by the unit and acceptance tests.

Everything here is written for clarity over speed: explicit loops over
pairs, exhaustive enumeration of candidate splits and of pruned subtrees.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

TIE_RTOL = 1e-12


# --------------------------------------------------------------------------
# AUC by enumeration
# --------------------------------------------------------------------------


def auc_components_brute(labels, scores):
    """Exact (Fraction) AUC estimate and the unbiased U-statistic components.

    Returns ``(mu_hat, mu_sq, xi01, xi10)`` where ``mu_sq`` averages
    ``I(a_i > b_j) I(a_k > b_l)`` over distinct cases i != k and distinct
    controls j != l, ``xi01`` averages pairs of distinct cases sharing a
    control minus ``mu_sq``, and ``xi10`` pairs of distinct controls sharing a
    case minus ``mu_sq``.
    """
    a = [s for s, y in zip(scores, labels) if y == 1]
    b = [s for s, y in zip(scores, labels) if y == 0]
    m, n = len(a), len(b)

    def ind(i, j):
        return 1 if a[i] > b[j] else 0

    u = sum(ind(i, j) for i in range(m) for j in range(n))
    both = sum(ind(i, j) * ind(k, l)
               for i in range(m) for k in range(m) if k != i
               for j in range(n) for l in range(n) if l != j)
    share_control = sum(ind(i, j) * ind(k, j)
                        for j in range(n) for i in range(m) for k in range(m) if k != i)
    share_case = sum(ind(i, j) * ind(i, l)
                     for i in range(m) for j in range(n) for l in range(n) if l != j)
    mu_hat = Fraction(u, m * n)
    mu_sq = Fraction(both, m * (m - 1) * n * (n - 1))
    xi01 = Fraction(share_control, n * m * (m - 1)) - mu_sq
    xi10 = Fraction(share_case, m * n * (n - 1)) - mu_sq
    return mu_hat, mu_sq, xi01, xi10


def auc_variance_brute(labels, scores) -> Fraction:
    a = sum(1 for y in labels if y == 1)
    b = sum(1 for y in labels if y == 0)
    mu_hat, mu_sq, xi01, xi10 = auc_components_brute(labels, scores)
    return (mu_hat - mu_sq + (a - 1) * xi01 + (b - 1) * xi10) / (a * b)


# --------------------------------------------------------------------------
# exhaustive tree growth
# --------------------------------------------------------------------------


def _loss_stats(v):
    n = len(v)
    mean = sum(v) / n
    var = sum((x - mean) ** 2 for x in v) / (n * (n - 1))
    return mean, var


def _candidate_cuts(x):
    vals = sorted(set(x.tolist()))
    for lo, hi in zip(vals[:-1], vals[1:]):
        c = 0.5 * (lo + hi)
        yield lo if c >= hi else c


def _admissible(kind, rows, values, labels, min_node, min_cases, min_controls):
    if len(rows) < min_node:
        return False
    if kind == "auc":
        cases = sum(1 for r in rows if labels[r] == 1)
        return cases >= min_cases and len(rows) - cases >= min_controls
    return True


def _child_score(kind, criterion, values, labels, L, R):
    if criterion == "cart-to":
        def sse(rows):
            v = [values[r] for r in rows]
            m = sum(v) / len(v)
            return sum((x - m) ** 2 for x in v)
        return -(sse(L) + sse(R))
    if kind == "auc":
        def stats(rows):
            y = [labels[r] for r in rows]
            s = [values[r] for r in rows]
            est, _, _, _ = auc_components_brute(y, s)
            return float(est), max(float(auc_variance_brute(y, s)), 0.0)
        (el, vl), (er, vr) = stats(L), stats(R)
    else:
        el, vl = _loss_stats([values[r] for r in L])
        er, vr = _loss_stats([values[r] for r in R])
    denom = vl + vr
    if not denom > 0:
        return math.nan
    return (el - er) ** 2 / denom


def best_split_brute(X, rows, kind, criterion, values, labels=None, min_node=2, min_cases=2,
                     min_controls=2):
    """Exhaustive search with the package's tie rule.

    Within a feature the smallest cut among near-maximal scores wins; a later
    feature replaces an earlier one only when strictly better beyond the
    tolerance.
    """
    best = None
    best_score = -math.inf
    for f in range(X.shape[1]):
        x = X[rows, f]
        found = []
        for c in _candidate_cuts(x):
            L = [r for r in rows if X[r, f] <= c]
            R = [r for r in rows if X[r, f] > c]
            if not (_admissible(kind, L, values, labels, min_node, min_cases, min_controls)
                    and _admissible(kind, R, values, labels, min_node, min_cases, min_controls)):
                continue
            s = _child_score(kind, criterion, values, labels, L, R)
            if math.isfinite(s):
                found.append((c, s))
        if not found:
            continue
        top = max(s for _, s in found)
        tol = TIE_RTOL * max(1.0, abs(top))
        c, s = min(((c, s) for c, s in found if s >= top - tol), key=lambda t: t[0])
        if best is None or s > best_score + TIE_RTOL * max(1.0, abs(best_score)):
            best, best_score = (f, c), s
    return best


def grow_brute(X, kind, criterion, values, labels=None, min_node=2, min_cases=2, min_controls=2,
               max_depth=None):
    """Nested-tuple tree: ``("leaf", rows)`` or ``("split", f, c, left, right)``."""

    def build(rows, depth):
        if max_depth is not None and depth >= max_depth:
            return ("leaf", tuple(rows))
        found = best_split_brute(X, rows, kind, criterion, values, labels, min_node, min_cases,
                                 min_controls)
        if found is None:
            return ("leaf", tuple(rows))
        f, c = found
        L = [r for r in rows if X[r, f] <= c]
        R = [r for r in rows if X[r, f] > c]
        return ("split", f, c, build(L, depth + 1), build(R, depth + 1))

    return build(list(range(X.shape[0])), 0)


def tree_shape(node):
    """Same nested-tuple form for a package ``TreeNode``, rows taken from ``indices``."""
    if node.split is None:
        return ("leaf", tuple(sorted(node.indices.tolist())))
    return ("split", node.split.feature, node.split.cutpoint, tree_shape(node.left), tree_shape(node.right))


# --------------------------------------------------------------------------
# pruned subtrees
# --------------------------------------------------------------------------


def pruned_subtrees(node):
    """Every rooted subtree of ``node`` as a frozenset of retained internal node ids."""
    if node.split is None:
        return [frozenset()]
    out = [frozenset()]
    for left in pruned_subtrees(node.left):
        for right in pruned_subtrees(node.right):
            out.append(frozenset({node.node_id}) | left | right)
    return out


def best_split_complexity(tree, alpha):
    """Max over all pruned subtrees of ``sum(statistics) - alpha * |internal|``."""
    stat = {nd.node_id: nd.statistic for nd in tree.internal_nodes()}
    return max(sum(stat[i] for i in kept) - alpha * len(kept) for kept in pruned_subtrees(tree.root))


# --------------------------------------------------------------------------
# finite differences
# --------------------------------------------------------------------------


def numeric_gradient(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def numeric_jacobian(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.column_stack(cols)


def subsets_with_classes(labels, max_size, min_each=2):
    """Index tuples of every subset with at most ``max_size`` rows and ``min_each`` of each class."""
    n = len(labels)
    for size in range(2 * min_each, min(max_size, n) + 1):
        for idx in itertools.combinations(range(n), size):
            cases = sum(labels[i] for i in idx)
            if cases >= min_each and size - cases >= min_each:
                yield idx
