"""In-memory dataset: covariates, outcome and fixed model predictions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True)
class Dataset:
    """Covariate matrix ``X`` (n x p), outcome ``y`` (n,) and predictions ``H`` (n x K).

    Column ``k`` of ``H`` holds the output of the k-th fixed prediction model.
    ``mu_true`` optionally carries the true conditional performance of
    model 0 when a simulation knows it analytically.
    """

    X: np.ndarray
    y: np.ndarray
    H: np.ndarray
    feature_names: tuple[str, ...] = ()
    model_names: tuple[str, ...] = ()
    mu_true: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        H = np.asarray(self.H, dtype=float)
        if H.ndim == 1:
            H = H[:, None]
        if X.shape[0] != y.size or H.shape[0] != y.size:
            raise DimensionMismatch(
                f"row counts differ: X has {X.shape[0]}, y has {y.size}, H has {H.shape[0]}"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "H", H)
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"X{j + 1}" for j in range(X.shape[1])))
        if not self.model_names:
            object.__setattr__(self, "model_names", tuple(f"h{k + 1}" for k in range(H.shape[1])))
        if len(self.feature_names) != X.shape[1]:
            raise DimensionMismatch("feature_names length does not match X")
        if len(self.model_names) != H.shape[1]:
            raise DimensionMismatch("model_names length does not match H")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_models(self) -> int:
        return self.H.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            self.X[rows],
            self.y[rows],
            self.H[rows],
            self.feature_names,
            self.model_names,
            None if self.mu_true is None else self.mu_true[rows],
        )
