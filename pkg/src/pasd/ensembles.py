"""Random PASD forests and gradient-boosted PASD trees.

A forest grows one fully grown PASD tree per bootstrap resample, drawing a
fresh random feature subset at every split, and then re-estimates every
leaf from that resample's out-of-bag rows.  Prediction averages the trees.

Boosting fits small PASD trees stagewise to the residuals of the current
fit (squared-error loss) or to their signs (absolute-error loss).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .errors import DatasetTooSmall, DimensionMismatch, GroupLevelMeasure
from .measures import Measure
from .tree import Criterion, GrowthConfig, LossTarget, Tree, grow, make_target, reestimate

__all__ = [
    "Forest",
    "BoostedModel",
    "default_mtry",
    "fit_forest",
    "fit_forest_target",
    "forest_predict",
    "fit_boosting",
    "boosting_predict",
]

FOREST_FORMAT = "pasd-forest"
BOOSTING_FORMAT = "pasd-boosting"


def default_mtry(p: int) -> int:
    return max(1, math.ceil(p / 3))


def _as_matrix(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != n_features:
        raise DimensionMismatch(f"expected {n_features} covariates, got {X.shape[1]}")
    return X


@dataclass
class Forest:
    trees: list[Tree]
    bootstrap_indices: list[np.ndarray]
    mtry: int
    seed: int
    measure: Measure
    model_index: int = 0

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def tree_predictions(self, X) -> np.ndarray:
        """Per-tree predictions, shape (B, n)."""
        X = _as_matrix(X, self.n_features)
        return np.vstack([t.predict(X) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        return self.tree_predictions(X).mean(axis=0)

    def oob_rows(self, b: int, n: int) -> np.ndarray:
        inbag = np.zeros(n, dtype=bool)
        inbag[self.bootstrap_indices[b]] = True
        return np.flatnonzero(~inbag)

    def to_dict(self) -> dict:
        return {
            "format": FOREST_FORMAT,
            "version": 1,
            "measure": self.measure.value,
            "model_index": self.model_index,
            "B": len(self.trees),
            "mtry": self.mtry,
            "seed": self.seed,
            "bootstrap_indices": [b.tolist() for b in self.bootstrap_indices],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        return cls(
            [Tree.from_dict(t) for t in d["trees"]],
            [np.asarray(b, dtype=np.int64) for b in d["bootstrap_indices"]],
            int(d["mtry"]),
            int(d["seed"]),
            Measure(d["measure"]),
            int(d.get("model_index", 0)),
        )


def _bootstrap(n: int, rng) -> np.ndarray:
    return np.sort(rng.integers(0, n, size=n))


def fit_forest_target(X, target, B: int = 100, mtry: int | None = None,
                      growth_config: GrowthConfig | None = None, seed: int = 0,
                      bootstrap_indices: list[np.ndarray] | None = None) -> Forest:
    """Forest on a prepared target.

    ``bootstrap_indices`` overrides resampling (used to share resamples
    across models, and as a test hook for an identity "resample").
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if B < 1:
        raise ValueError("B must be >= 1")
    mtry = default_mtry(p) if mtry is None else int(mtry)
    config = growth_config or GrowthConfig.fully_grown(target.measure)
    config = replace(config, mtry=mtry, criterion=Criterion.PASD)
    streams = np.random.SeedSequence(seed).spawn(B)
    trees, boots = [], []
    for b in range(B):
        rng = np.random.default_rng(streams[b])
        rows = _bootstrap(n, rng) if bootstrap_indices is None else np.asarray(bootstrap_indices[b])
        try:
            tree = grow(X, target, config, rows=rows, rng=rng, keep_indices=False)
        except DatasetTooSmall:
            raise DatasetTooSmall(f"bootstrap resample {b} cannot form an admissible root node") from None
        inbag = np.zeros(n, dtype=bool)
        inbag[rows] = True
        trees.append(reestimate(tree, X, target, np.flatnonzero(~inbag)))
        boots.append(rows)
    return Forest(trees, boots, mtry, seed, target.measure)


def fit_forest(data: Dataset, measure, model_index: int = 0, B: int = 100, mtry: int | None = None,
               growth_config: GrowthConfig | None = None, seed: int = 0,
               bootstrap_indices: list[np.ndarray] | None = None) -> Forest:
    """Random PASD forest estimating the conditional performance of one model."""
    measure = Measure.parse(measure)
    target = make_target(measure, data.y, data.H[:, model_index])
    forest = fit_forest_target(data.X, target, B, mtry, growth_config, seed, bootstrap_indices)
    forest.model_index = model_index
    for t in forest.trees:
        t.model_index = model_index
    return forest


def forest_predict(forest: Forest, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("forest_predict takes a single covariate vector")
    return float(forest.predict(x)[0])


@dataclass
class BoostedModel:
    initial_value: float
    stages: list[Tree]
    shrinkage: float
    loss: str
    n_features: int
    seed: int = 0

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X, self.n_features)
        out = np.full(X.shape[0], self.initial_value)
        for t in self.stages:
            out += self.shrinkage * t.predict(X)
        return out

    def staged_predict(self, X):
        """Yield predictions after 0, 1, ..., M stages."""
        X = _as_matrix(X, self.n_features)
        out = np.full(X.shape[0], self.initial_value)
        yield out.copy()
        for t in self.stages:
            out += self.shrinkage * t.predict(X)
            yield out.copy()

    def to_dict(self) -> dict:
        return {
            "format": BOOSTING_FORMAT,
            "version": 1,
            "initial_value": self.initial_value,
            "M": len(self.stages),
            "lambda": self.shrinkage,
            "loss": self.loss,
            "n_features": self.n_features,
            "seed": self.seed,
            "stages": [t.to_dict() for t in self.stages],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedModel":
        return cls(float(d["initial_value"]), [Tree.from_dict(t) for t in d["stages"]],
                   float(d["lambda"]), d["loss"], int(d["n_features"]), int(d.get("seed", 0)))


def fit_boosting(X, targets, M: int = 200, shrinkage: float = 0.1,
                 base_config: GrowthConfig | None = None, loss: str = "l2", seed: int = 0,
                 measure: Measure = Measure.SQUARED_ERROR) -> BoostedModel:
    """Gradient-boosted PASD trees for individual-level performance values ``targets``."""
    if not Measure.parse(measure).is_individual:
        raise GroupLevelMeasure("boosting needs individual-level performance values")
    if isinstance(X, Dataset):
        X = X.X
    X = np.asarray(X, dtype=float)
    mu = np.asarray(targets, dtype=float)
    if mu.size != X.shape[0]:
        raise DimensionMismatch("targets length differs from the number of rows")
    if M < 0:
        raise ValueError("M must be >= 0")
    if not 0 < shrinkage <= 1:
        raise ValueError("shrinkage must lie in (0, 1]")
    loss = loss.lower()
    if loss not in ("l2", "l1"):
        raise ValueError("loss must be 'l2' or 'l1'")
    config = base_config or GrowthConfig(max_depth=3)
    config = replace(config, criterion=Criterion.PASD)
    rng = np.random.default_rng(seed)

    init = float(mu.mean())
    fitted = np.full(mu.size, init)
    stages = []
    for _ in range(M):
        resid = mu - fitted
        work = np.sign(resid) if loss == "l1" else resid
        try:
            tree = grow(X, LossTarget(work), config, rng=rng, keep_indices=False)
        except DatasetTooSmall:
            break
        stages.append(tree)
        fitted = fitted + shrinkage * tree.predict(X)
    return BoostedModel(init, stages, float(shrinkage), loss, X.shape[1], seed)


def boosting_predict(model: BoostedModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("boosting_predict takes a single covariate vector")
    return float(model.predict(x)[0])
