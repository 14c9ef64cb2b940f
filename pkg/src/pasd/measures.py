"""Performance measures and their subgroup estimators.

Individual-level measures (squared error, absolute error, Brier score) are a
loss per observation; the subgroup estimate is the sample mean of the losses
and its variance estimate is the usual ``s^2 / n``.

AUC is group-level: it only exists for a set of cases and controls.  The
subgroup estimate is the Mann-Whitney statistic with a strict inequality
(ties count 0), and the variance estimate is the unbiased two-sample
U-statistic estimator built from four component U-statistics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import GroupLevelMeasure, SubgroupTooSmall

__all__ = [
    "Level",
    "Orientation",
    "Measure",
    "SubgroupStats",
    "individual_loss",
    "loss_subgroup_stats",
    "auc_counts",
    "auc_variance_components",
    "auc_subgroup_stats",
    "subgroup_stats",
]


class Level(str, enum.Enum):
    INDIVIDUAL = "individual"
    GROUP = "group"


class Orientation(str, enum.Enum):
    LOWER_IS_BETTER = "lower_is_better"
    HIGHER_IS_BETTER = "higher_is_better"


class Measure(str, enum.Enum):
    SQUARED_ERROR = "squared_error"
    ABSOLUTE_ERROR = "absolute_error"
    BRIER = "brier"
    AUC = "auc"

    @classmethod
    def parse(cls, value: "str | Measure") -> "Measure":
        if isinstance(value, Measure):
            return value
        key = value.strip().lower().replace("-", "_")
        aliases = {"mse": "squared_error", "se": "squared_error", "mae": "absolute_error",
                   "ae": "absolute_error"}
        return cls(aliases.get(key, key))

    @property
    def level(self) -> Level:
        return Level.GROUP if self is Measure.AUC else Level.INDIVIDUAL

    @property
    def orientation(self) -> Orientation:
        if self is Measure.AUC:
            return Orientation.HIGHER_IS_BETTER
        return Orientation.LOWER_IS_BETTER

    @property
    def is_individual(self) -> bool:
        return self.level is Level.INDIVIDUAL

    @property
    def higher_is_better(self) -> bool:
        return self.orientation is Orientation.HIGHER_IS_BETTER


@dataclass(frozen=True)
class SubgroupStats:
    """Point estimate and variance estimate of performance in one subgroup.

    ``clamped`` records that a negative unbiased variance estimate was set
    to zero.  ``fallback`` is set by honest/out-of-bag re-estimation when
    the node had too few held-out observations and inherited an ancestor's
    estimate.
    """

    estimate: float
    variance: float
    n: int
    n_cases: int | None = None
    n_controls: int | None = None
    clamped: bool = False
    fallback: bool = False

    def to_dict(self) -> dict:
        out = {"estimate": self.estimate, "variance": self.variance, "n": self.n}
        if self.n_cases is not None:
            out["n_cases"] = self.n_cases
            out["n_controls"] = self.n_controls
        if self.clamped:
            out["clamped"] = True
        if self.fallback:
            out["fallback"] = True
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SubgroupStats":
        return cls(
            estimate=float(d["estimate"]),
            variance=float(d["variance"]),
            n=int(d["n"]),
            n_cases=d.get("n_cases"),
            n_controls=d.get("n_controls"),
            clamped=bool(d.get("clamped", False)),
            fallback=bool(d.get("fallback", False)),
        )


def individual_loss(measure: Measure, y, h):
    """Observed loss L(y, h); works elementwise on arrays."""
    measure = Measure.parse(measure)
    if not measure.is_individual:
        raise GroupLevelMeasure(f"{measure.value} has no per-observation value")
    y = np.asarray(y, dtype=float)
    h = np.asarray(h, dtype=float)
    if measure is Measure.ABSOLUTE_ERROR:
        out = np.abs(y - h)
    else:
        # Brier score is squared error on predicted probabilities.
        out = (y - h) ** 2
    return out if out.ndim else float(out)


def loss_subgroup_stats(losses) -> SubgroupStats:
    """Sample mean of the losses and the unbiased variance of that mean."""
    mu = np.asarray(losses, dtype=float)
    n = mu.size
    if n < 2:
        raise SubgroupTooSmall(f"loss subgroup needs at least 2 observations, got {n}")
    est = float(mu.mean())
    var = float(np.sum((mu - est) ** 2) / (n * (n - 1)))
    return SubgroupStats(est, var, n)


def auc_counts(labels, scores):
    """Per-case and per-control win counts under the strict-inequality indicator.

    Returns ``(c, d)`` where ``c[i]`` counts controls scored strictly below
    case ``i`` and ``d[j]`` counts cases scored strictly above control ``j``.
    """
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=float)
    a = scores[labels == 1]
    b = scores[labels == 0]
    c = np.searchsorted(np.sort(b), a, side="left")
    d = a.size - np.searchsorted(np.sort(a), b, side="right")
    return c.astype(float), d.astype(float)


def _components_from_counts(c, d):
    m, n = c.size, d.size
    if m < 2 or n < 2:
        raise SubgroupTooSmall(f"AUC needs >= 2 cases and >= 2 controls, got {m} cases / {n} controls")
    u = c.sum()
    sc2 = float(np.dot(c, c))
    sd2 = float(np.dot(d, d))
    mu_hat = u / (m * n)
    # sum over i != k (cases), j != l (controls) of I(a_i > b_j) I(a_k > b_l)
    mu_sq = (u * u - sc2 - sd2 + u) / (m * (m - 1) * n * (n - 1))
    xi01 = (sd2 - u) / (m * (m - 1) * n) - mu_sq
    xi10 = (sc2 - u) / (m * n * (n - 1)) - mu_sq
    return float(mu_hat), float(mu_sq), float(xi01), float(xi10), m, n


def auc_variance_components(labels, scores) -> tuple[float, float, float]:
    """Unbiased estimates of (mu^2, xi_01, xi_10) for the subgroup AUC."""
    c, d = auc_counts(labels, scores)
    _, mu_sq, xi01, xi10, _, _ = _components_from_counts(c, d)
    return mu_sq, xi01, xi10


def _auc_stats_from_counts(c, d) -> SubgroupStats:
    mu_hat, mu_sq, xi01, xi10, m, n = _components_from_counts(c, d)
    var = (mu_hat - mu_sq + (m - 1) * xi01 + (n - 1) * xi10) / (m * n)
    clamped = var < 0
    return SubgroupStats(mu_hat, max(var, 0.0), m + n, m, n, clamped=bool(clamped))


def auc_subgroup_stats(labels, scores, *, clamp: bool = True) -> SubgroupStats:
    """Mann-Whitney AUC of ``scores`` for binary ``labels`` with its variance.

    With ``clamp=False`` the raw (possibly negative) unbiased variance is
    returned, which is what unbiasedness checks need.
    """
    c, d = auc_counts(labels, scores)
    if clamp:
        return _auc_stats_from_counts(c, d)
    mu_hat, mu_sq, xi01, xi10, m, n = _components_from_counts(c, d)
    var = (mu_hat - mu_sq + (m - 1) * xi01 + (n - 1) * xi10) / (m * n)
    return SubgroupStats(mu_hat, var, m + n, m, n)


def subgroup_stats(measure: Measure, y, h) -> SubgroupStats:
    """Dispatch to the estimator appropriate for ``measure``."""
    measure = Measure.parse(measure)
    if measure.is_individual:
        return loss_subgroup_stats(individual_loss(measure, y, h))
    return auc_subgroup_stats(y, h)


def min_subgroup_size(measure: Measure) -> tuple[int, int]:
    """(minimum observations, minimum of each class) forced by the estimators."""
    return (2, 0) if Measure.parse(measure).is_individual else (4, 2)


def standardized_difference(left: SubgroupStats, right: SubgroupStats) -> float:
    """Squared standardized difference between two disjoint subgroups.

    Returns NaN when the variance of the difference is zero.
    """
    denom = left.variance + right.variance
    if denom <= 0.0 or not math.isfinite(denom):
        return math.nan
    return (left.estimate - right.estimate) ** 2 / denom
