"""Synthetic data generators, tree-evaluation metrics and replicated experiments.

Settings ``S1``-``S4`` share one outcome model and differ in the fixed
prediction model, the error variance and the covariate correlation; they
carry a known partition of the covariate space into subgroups of equal
true performance, against which fitted trees are scored.  ``FRIEDMAN``
is the heteroscedastic Friedman regression surface, ``LOGISTIC_COMB`` a
binary outcome with four misspecified logistic models, and ``MOONS`` /
``CIRCLES`` the two-dimensional classification toys.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import expit

from .combination import fit_em_combiner, fit_vote_combiner
from .data import Dataset
from .ensembles import fit_boosting, fit_forest
from .errors import ReplicateError, TooFewRows
from .measures import Measure, auc_subgroup_stats, individual_loss
from .pruning import fit_cv
from .tree import Criterion, GrowthConfig, Tree, make_target

__all__ = [
    "Setting",
    "DGPSpec",
    "TruePartition",
    "FitVerdict",
    "generate",
    "true_partition",
    "pps",
    "classify_fit",
    "ExperimentConfig",
    "run_experiment",
    "EnsembleConfig",
    "run_ensemble_experiment",
    "summarize_ensemble",
    "CombinationConfig",
    "run_combination_experiment",
    "summarize_combination",
    "fixed_split_statistics",
    "write_csv",
]

PPS_EXACT_LIMIT = 2000
PPS_SAMPLED_PAIRS = 2_000_000


class Setting(str, enum.Enum):
    S1 = "1"
    S2 = "2"
    S3 = "3"
    S4 = "4"
    FRIEDMAN = "friedman"
    LOGISTIC_COMB = "logistic"
    MOONS = "moons"
    CIRCLES = "circles"

    @classmethod
    def parse(cls, value) -> "Setting":
        if isinstance(value, Setting):
            return value
        key = str(value).strip().lower()
        aliases = {"s1": "1", "s2": "2", "s3": "3", "s4": "4", "logisticcomb": "logistic",
                   "logistic_comb": "logistic"}
        return cls(aliases.get(key, key))


_DEFAULT_C = {Setting.S1: 0.0, Setting.S2: 0.0, Setting.S3: 0.3, Setting.S4: 0.0,
              Setting.LOGISTIC_COMB: 0.3}
# Gaussian jitter of the two toy classification sets, calibrated so the two
# fixed classifiers reach their reference accuracies (see CIRCLES_FACTOR).
_DEFAULT_NOISE = {Setting.MOONS: 0.44, Setting.CIRCLES: 0.27}


@dataclass(frozen=True)
class DGPSpec:
    setting: Setting
    n: int
    seed: int | np.random.SeedSequence = 0
    c: float | None = None
    noise: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "setting", Setting.parse(self.setting))
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.c is None:
            object.__setattr__(self, "c", _DEFAULT_C.get(self.setting, 0.0))
        if not 0.0 <= self.c < 1.0:
            raise ValueError("c must lie in [0, 1)")
        if self.noise is None:
            object.__setattr__(self, "noise", _DEFAULT_NOISE.get(self.setting, 0.0))


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------


def _equicorrelated(rng, n, d, c):
    cov = np.full((d, d), c) + (1.0 - c) * np.eye(d)
    return rng.standard_normal((n, d)) @ np.linalg.cholesky(cov).T


def _table1_covariates(rng, n, c):
    X = np.empty((n, 6))
    X[:, :4] = _equicorrelated(rng, n, 4, c)
    X[:, 4] = rng.random(n) < 0.5
    X[:, 5] = rng.random(n) < 0.7
    return X


def _table1_mean(X):
    x1, x2, x3, x5 = X[:, 0], X[:, 1], X[:, 2], X[:, 4]
    return 2 + x1 - x2**2 + (x3 > 0) + 1.5 * x5 + 1.5 * x2 * x5


def _table1(spec, rng):
    X = _table1_covariates(rng, spec.n, spec.c)
    f = _table1_mean(X)
    s = spec.setting
    if s in (Setting.S2, Setting.S3):
        x1, x2, x5 = X[:, 0], X[:, 1], X[:, 4]
        h = 2 + x1 - x2**2 + 0.5 * x5 + 1.5 * x2 * x5
    else:
        h = f
    sd = X[:, 5] / 2 + 1 if s is Setting.S4 else np.full(spec.n, 2.0)
    y = f + sd * rng.standard_normal(spec.n)
    mu = (f - h) ** 2 + sd**2
    return Dataset(X, y, h, mu_true=mu)


def friedman_mean(X):
    return (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2 + 10 * X[:, 3]
            + 5 * X[:, 4])


# Covariates each restricted linear model leaves out (0-based).
FRIEDMAN_SUBSET_DROPS = ((0,), (1,), (3,), (4,))


@lru_cache(maxsize=None)
def friedman_models() -> tuple[np.ndarray, ...]:
    """Coefficients (intercept first) of the fixed linear models.

    Fit once by least squares on a large pilot sample drawn from a fixed
    seed: the full linear regression, then one model per entry of
    ``FRIEDMAN_SUBSET_DROPS``, each missing some relevant covariates.
    """
    rng = np.random.default_rng(20240101)
    n = 100_000
    X = rng.random((n, 10))
    y = friedman_mean(X) + np.sqrt(2 * X[:, 3]) * rng.standard_normal(n)
    out = []
    for drop in ((),) + FRIEDMAN_SUBSET_DROPS:
        keep = [j for j in range(10) if j not in drop]
        A = np.column_stack([np.ones(n), X[:, keep]])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        full = np.zeros(11)
        full[0] = coef[0]
        full[[j + 1 for j in keep]] = coef[1:]
        out.append(full)
    return tuple(out)


def _friedman(spec, rng):
    X = rng.random((spec.n, 10))
    f = friedman_mean(X)
    var = 2 * X[:, 3]
    y = f + np.sqrt(var) * rng.standard_normal(spec.n)
    H = np.column_stack([b[0] + X @ b[1:] for b in friedman_models()])
    mu = (f - H[:, 0]) ** 2 + var
    names = ("ols",) + tuple(f"subset{k + 1}" for k in range(len(FRIEDMAN_SUBSET_DROPS)))
    return Dataset(X, y, H, model_names=names, mu_true=mu)


def _logistic(spec, rng):
    X = _table1_covariates(rng, spec.n, spec.c)
    x1, x2, x3, x4, x5, x6 = X.T
    i3 = (x3 > 0).astype(float)
    eta = (2 + x1 - 1.5 * x2 + x2**2 - 2 * i3 + 1.5 * x4 - 2 * x4**3 + x5 + 0.5 * x2 * x5
           + rng.logistic(size=spec.n))
    y = (eta > 0).astype(float)
    etas = [
        2 + 2 * x1 + 1.5 * x4 - x4**3 + 2 * x5 + 2.5 * x2 * x5,
        2 + x1 - 1.5 * x2 + x2**2 - 2 * i3 + 1.5 * x4 - x4**2 + x5 + 1.5 * x2 * x5 + 0.5 * x6,
        2 + x1 - 1.5 * x2 + x2**2 + 1.5 * x4 - 1.5 * x4**2 + x5 + x2 * x5,
        2 + x1 - 2 * i3 + 1.5 * x4 - x4**3 + 0.8 * x5 + x2 * x5 + 2.5 * x6,
    ]
    H = np.column_stack([expit(e) for e in etas])
    return Dataset(X, y, H, model_names=("m1", "m2", "m3", "m4"))


def _moons(spec, rng):
    n_out = spec.n // 2
    n_in = spec.n - n_out
    t_out = rng.uniform(0, np.pi, n_out)
    t_in = rng.uniform(0, np.pi, n_in)
    X = np.vstack([
        np.column_stack([np.cos(t_out), np.sin(t_out)]),
        np.column_stack([1 - np.cos(t_in), 1 - np.sin(t_in) - 0.5]),
    ])
    y = np.r_[np.zeros(n_out), np.ones(n_in)]
    X += spec.noise * rng.standard_normal(X.shape)
    perm = rng.permutation(spec.n)
    X, y = X[perm], y[perm]
    x1, x2 = X.T
    H = np.column_stack([(0.5 - x1**2 - x2 > 0), ((x1 - 1) ** 2 - 0.2 - x2 > 0)]).astype(float)
    return Dataset(X, y, H)


# inner-circle radius relative to the outer one
CIRCLES_FACTOR = 0.5


def _circles(spec, rng):
    n_out = spec.n // 2
    n_in = spec.n - n_out
    t_out = rng.uniform(0, 2 * np.pi, n_out)
    t_in = rng.uniform(0, 2 * np.pi, n_in)
    X = np.vstack([
        np.column_stack([np.cos(t_out), np.sin(t_out)]),
        CIRCLES_FACTOR * np.column_stack([np.cos(t_in), np.sin(t_in)]),
    ])
    y = np.r_[np.zeros(n_out), np.ones(n_in)]
    X += spec.noise * rng.standard_normal(X.shape)
    perm = rng.permutation(spec.n)
    X, y = X[perm], y[perm]
    x1, x2 = X.T
    H = np.column_stack([(1 - (1.5 * x1) ** 2 - x2 > 0), ((1.5 * x1) ** 2 - 1 - x2 < 0)]).astype(float)
    return Dataset(X, y, H)


_GENERATORS = {
    Setting.S1: _table1, Setting.S2: _table1, Setting.S3: _table1, Setting.S4: _table1,
    Setting.FRIEDMAN: _friedman, Setting.LOGISTIC_COMB: _logistic,
    Setting.MOONS: _moons, Setting.CIRCLES: _circles,
}


def generate(spec: DGPSpec) -> Dataset:
    """Draw ``spec.n`` observations; ``mu_true`` is set where it is known in closed form."""
    rng = np.random.default_rng(spec.seed)
    return _GENERATORS[spec.setting](spec, rng)


# --------------------------------------------------------------------------
# true partitions, PPS and the fit taxonomy
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TruePartition:
    assign: Callable[[np.ndarray], np.ndarray]
    features: frozenset[int]
    n_groups: int


def _assign_root(X):
    return np.zeros(len(X), dtype=np.int64)


def _assign_s23(X):
    return (X[:, 2] > 0).astype(np.int64) * 2 + (X[:, 4] > 0.5).astype(np.int64)


def _assign_s4(X):
    return (X[:, 5] > 0.5).astype(np.int64)


def true_partition(setting) -> TruePartition:
    setting = Setting.parse(setting)
    if setting is Setting.S1:
        return TruePartition(_assign_root, frozenset(), 1)
    if setting in (Setting.S2, Setting.S3):
        return TruePartition(_assign_s23, frozenset({2, 4}), 4)
    if setting is Setting.S4:
        return TruePartition(_assign_s4, frozenset({5}), 2)
    raise ValueError(f"setting {setting.value} has no subgroup structure")


def _same_group_pairs(labels) -> float:
    _, counts = np.unique(labels, return_counts=True)
    return float(np.sum(counts * (counts - 1) / 2))


def pps_from_labels(true_labels, fitted_labels, method: str = "auto", seed=0) -> float:
    """Share of pairs on whose co-membership the two labelings agree."""
    a = np.asarray(true_labels)
    b = np.asarray(fitted_labels)
    N = a.size
    if N < 2:
        raise TooFewRows(f"PPS needs at least 2 rows, got {N}")
    if method == "auto":
        method = "exact" if N <= PPS_EXACT_LIMIT else "sampled"
    if method == "exact":
        # pairs together in exactly one labeling = T + F - 2 * (together in both)
        _, joint = np.unique(np.stack([a, b]), axis=1, return_inverse=True)
        both = _same_group_pairs(joint.reshape(-1))
        disagree = _same_group_pairs(a) + _same_group_pairs(b) - 2 * both
        return 1.0 - disagree / (N * (N - 1) / 2)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, N, PPS_SAMPLED_PAIRS)
    j = rng.integers(0, N - 1, PPS_SAMPLED_PAIRS)
    j = np.where(j >= i, j + 1, j)  # uniform over ordered pairs with i != j
    return 1.0 - float(np.mean((a[i] == a[j]) != (b[i] == b[j])))


def pps(partition: TruePartition, fitted_tree: Tree, eval_data, method: str = "auto", seed=0) -> float:
    """Pairwise prediction similarity between the true and fitted partitions."""
    X = eval_data.X if isinstance(eval_data, Dataset) else np.asarray(eval_data, dtype=float)
    return pps_from_labels(partition.assign(X), fitted_tree.apply(X), method, seed)


class FitCategory(str, enum.Enum):
    GOOD = "GoodFit"
    OVER = "Overfit"
    UNDER = "Underfit"


@dataclass(frozen=True)
class FitVerdict:
    category: FitCategory
    subcode: str
    no_noise: bool


def classify_fit(fitted, partition: TruePartition) -> FitVerdict:
    """Score a fitted tree (or a ``(features, n_leaves)`` pair) against the truth.

    Covariate relation: 0 strict subset, 1 equal, 2 noise covariate present.
    Size relation: 0 fewer, 1 equal, 2 more terminal nodes.
    """
    if isinstance(fitted, Tree):
        S_F, n_F = fitted.split_features(), fitted.n_leaves
    else:
        S_F, n_F = fitted
    S_F, S_T, n_T = frozenset(S_F), partition.features, partition.n_groups
    if not S_F <= S_T:
        return FitVerdict(FitCategory.OVER, "(2,.)", False)
    rel = 1 if S_F == S_T else 0
    size = 0 if n_F < n_T else (1 if n_F == n_T else 2)
    code = f"({rel},{size})"
    if rel == 1 and size == 1:
        cat = FitCategory.GOOD
    elif size == 0:
        cat = FitCategory.UNDER
    else:
        cat = FitCategory.OVER
    return FitVerdict(cat, code, True)


# --------------------------------------------------------------------------
# replicate plumbing
# --------------------------------------------------------------------------


def _replicate_seed(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))


def _run_replicates(fn, jobs: list, threads: int):
    """Apply ``fn`` to each job, in parallel processes when ``threads > 1``.

    Results come back in job order.  The first failing replicate aborts the
    run with its index attached.
    """
    if threads <= 1 or len(jobs) <= 1:
        out = []
        for i, job in enumerate(jobs):
            try:
                out.append(fn(job))
            except Exception as exc:  # noqa: BLE001 - re-raised with context
                raise ReplicateError(i, exc) from exc
        return out
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, job) for job in jobs]
        out = []
        for i, fut in enumerate(futures):
            try:
                out.append(fut.result())
            except Exception as exc:  # noqa: BLE001
                for f in futures:
                    f.cancel()
                raise ReplicateError(i, exc) from exc
        return out


def write_csv(rows: list[dict], path=None) -> str:
    """Serialise rows (dicts sharing keys) as CSV; also written to ``path`` if given."""
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else str(float(v))
    return v


# --------------------------------------------------------------------------
# subgroup-discovery experiment (Tables 2, 5-8)
# --------------------------------------------------------------------------


METHODS = ("cart-to", "pasd1", "pasd2")
SUBCODES = ("(2,.)", "(1,2)", "(0,1)", "(0,2)", "(1,0)", "(0,0)")


@dataclass(frozen=True)
class ExperimentConfig:
    settings: tuple[str, ...] = ("1", "2", "3", "4")
    methods: tuple[str, ...] = METHODS
    reps: int = 200
    n: int = 1000
    eval_n: int = 1000
    alpha_primes: tuple[float, ...] = (4.0,)
    folds: int = 10
    threads: int = 1
    growth: GrowthConfig = field(default_factory=GrowthConfig)

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")


def _tree_metrics(tree: Tree, partition, evald: Dataset, mu_obs) -> dict:
    pred = tree.predict(evald.X)
    verdict = classify_fit(tree, partition)
    return {
        "mse": float(np.mean((mu_obs - pred) ** 2)),
        "mse_true": float(np.mean((evald.mu_true - pred) ** 2)),
        "pps": pps(partition, tree, evald),
        "no_noise": verdict.no_noise,
        "category": verdict.category.value,
        "subcode": verdict.subcode,
        "n_leaves": tree.n_leaves,
        "features": " ".join(str(f + 1) for f in sorted(tree.split_features())),
    }


def _experiment_replicate(job) -> list[dict]:
    setting, rep, seed, cfg = job
    seq = _replicate_seed(seed, _SETTING_INDEX[setting], rep)
    s_train, s_eval, s_cv = seq.spawn(3)
    train = generate(DGPSpec(setting, cfg.n, s_train))
    evald = generate(DGPSpec(setting, cfg.eval_n, s_eval))
    partition = true_partition(setting)
    measure = Measure.SQUARED_ERROR
    target = make_target(measure, train.y, train.H[:, 0])
    mu_obs = individual_loss(measure, evald.y, evald.H[:, 0])
    cv_seed = int(s_cv.generate_state(1)[0])
    rows = []
    if "pasd1" in cfg.methods or "pasd2" in cfg.methods:
        fit = fit_cv(train.X, target, cfg.growth, cfg.folds, cv_seed)
        if "pasd1" in cfg.methods:
            rows.append({"method": "pasd1", "alpha_prime": "NA",
                         **_tree_metrics(fit.final_tree(fit.select_error()), partition, evald, mu_obs)})
        if "pasd2" in cfg.methods:
            for ap in cfg.alpha_primes:
                t = fit.final_tree(fit.select_split_complexity(ap))
                rows.append({"method": "pasd2", "alpha_prime": ap, **_tree_metrics(t, partition, evald, mu_obs)})
    if "cart-to" in cfg.methods:
        cart = replace(cfg.growth, criterion=Criterion.CART_TO)
        fit = fit_cv(train.X, target, cart, cfg.folds, cv_seed)
        rows.append({"method": "cart-to", "alpha_prime": "NA",
                     **_tree_metrics(fit.final_tree(fit.select_error()), partition, evald, mu_obs)})
    for r in rows:
        r["setting"] = setting
        r["replicate"] = rep
    return rows


_SETTING_INDEX = {s.value: i for i, s in enumerate(Setting)}


def run_experiment(config: ExperimentConfig, seed: int = 0):
    """Replicated subgroup-discovery study.

    Returns ``(summary_rows, replicate_rows)``.  Summary rows hold, per
    setting, method and alpha', the mean MSE against observed losses, the
    mean MSE against the true conditional MSE, mean PPS, the no-noise and
    good-fit proportions and the over/underfit subcode frequencies.
    """
    settings = [Setting.parse(s).value for s in config.settings]
    jobs = [(s, r, seed, config) for s in settings for r in range(config.reps)]
    results = _run_replicates(_experiment_replicate, jobs, config.threads)
    per_rep = [row for rows in results for row in rows]
    summary = []
    keys = []
    for row in per_rep:
        k = (row["setting"], row["method"], row["alpha_prime"])
        if k not in keys:
            keys.append(k)
    order = {m: i for i, m in enumerate(METHODS)}
    keys.sort(key=lambda k: (settings.index(k[0]), order[k[1]], -1 if k[2] == "NA" else k[2]))
    for s, m, ap in keys:
        rows = [r for r in per_rep if (r["setting"], r["method"], r["alpha_prime"]) == (s, m, ap)]
        cnt = len(rows)
        codes = {c: sum(r["subcode"] == c for r in rows) / cnt for c in SUBCODES}
        summary.append({
            "setting": s,
            "method": m,
            "alpha_prime": ap,
            "reps": cnt,
            "mean_mse": float(np.mean([r["mse"] for r in rows])),
            "mean_mse_true": float(np.mean([r["mse_true"] for r in rows])),
            "mean_pps": float(np.mean([r["pps"] for r in rows])),
            "no_noise": sum(r["no_noise"] for r in rows) / cnt,
            "overfit": sum(r["category"] == "Overfit" for r in rows) / cnt,
            "over_2x": codes["(2,.)"],
            "over_12": codes["(1,2)"],
            "over_01": codes["(0,1)"],
            "over_02": codes["(0,2)"],
            "underfit": sum(r["category"] == "Underfit" for r in rows) / cnt,
            "under_10": codes["(1,0)"],
            "under_00": codes["(0,0)"],
            "good_fit": sum(r["category"] == "GoodFit" for r in rows) / cnt,
        })
    return summary, per_rep


# --------------------------------------------------------------------------
# single tree versus ensembles on the Friedman surface
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleConfig:
    reps: int = 100
    n: int = 1000
    test_n: int = 10_000
    B: int = 100
    mtry: int | None = None
    M: int = 200
    shrinkage: float = 0.1
    alpha_prime: float = 4.0
    folds: int = 10
    threads: int = 1


def _ensemble_replicate(job) -> dict:
    rep, seed, cfg = job
    s_train, s_test, s_fit = _replicate_seed(seed, _SETTING_INDEX["friedman"], rep).spawn(3)
    train = generate(DGPSpec(Setting.FRIEDMAN, cfg.n, s_train))
    test = generate(DGPSpec(Setting.FRIEDMAN, cfg.test_n, s_test))
    measure = Measure.SQUARED_ERROR
    target = make_target(measure, train.y, train.H[:, 0])
    a, b, c = (int(x) for x in s_fit.generate_state(3))
    fit = fit_cv(train.X, target, GrowthConfig(), cfg.folds, a)
    tree = fit.final_tree(fit.select_split_complexity(cfg.alpha_prime))
    forest = fit_forest(train, measure, 0, cfg.B, cfg.mtry, seed=b)
    boost = fit_boosting(train.X, target.values, cfg.M, cfg.shrinkage, seed=c)
    mu = test.mu_true
    out = {"replicate": rep}
    for name, model in (("tree", tree), ("forest", forest), ("boosting", boost)):
        out[f"mse_{name}"] = float(np.mean((mu - model.predict(test.X)) ** 2))
    out["tree_leaves"] = tree.n_leaves
    out["forest_minus_tree"] = out["mse_forest"] - out["mse_tree"]
    out["boosting_minus_tree"] = out["mse_boosting"] - out["mse_tree"]
    return out


def run_ensemble_experiment(config: EnsembleConfig, seed: int = 0) -> list[dict]:
    """Per-replicate test MSE of the selected PASD tree, the forest and boosting.

    The targets are the true conditional squared errors of the fixed linear
    regression on an independent test sample.
    """
    jobs = [(r, seed, config) for r in range(config.reps)]
    return _run_replicates(_ensemble_replicate, jobs, config.threads)


# --------------------------------------------------------------------------
# model combination experiments
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CombinationConfig:
    setting: str = "logistic"
    method: str = "mv"
    reps: int = 100
    n: int = 1000
    test_n: int = 10_000
    B: int = 100
    mtry: int | None = None
    measure: str | None = None
    threads: int = 1
    models: tuple[int, ...] | None = None


def _accuracy(y, p):
    return float(np.mean((p >= 0.5) == (y > 0.5)))


def _auc(y, p):
    return auc_subgroup_stats(y, p).estimate


def _combination_replicate(job) -> dict:
    rep, seed, cfg = job
    setting = Setting.parse(cfg.setting)
    s_train, s_test, s_fit = _replicate_seed(seed, _SETTING_INDEX[setting.value], rep, 1).spawn(3)
    train = generate(DGPSpec(setting, cfg.n, s_train))
    test = generate(DGPSpec(setting, cfg.test_n, s_test))
    fit_seed = int(s_fit.generate_state(1)[0])
    if setting is Setting.FRIEDMAN:
        models = cfg.models or tuple(range(1, train.n_models))
    else:
        models = cfg.models or tuple(range(train.n_models))
    out = {"replicate": rep}
    if cfg.method == "mv":
        measure = Measure.parse(cfg.measure or ("brier" if setting is Setting.LOGISTIC_COMB else "squared_error"))
        comb = fit_vote_combiner(train, models, measure, cfg.B, cfg.mtry, fit_seed)
    elif cfg.method in ("em", "em-analytic"):
        comb = fit_em_combiner(train, models, analytic=cfg.method == "em-analytic", B=cfg.B,
                               mtry=cfg.mtry, seed=fit_seed)
    else:
        raise ValueError(f"unknown combination method {cfg.method!r}")

    if setting is Setting.LOGISTIC_COMB:
        score, name, higher = _auc, "auc", True
    elif setting is Setting.FRIEDMAN:
        score, name, higher = (lambda y, p: float(np.mean((y - p) ** 2))), "mse", False
    else:
        score, name, higher = _accuracy, "accuracy", True
    for label, data in (("test", test), ("train", train)):
        if label == "train" and setting not in (Setting.MOONS, Setting.CIRCLES):
            continue
        H = data.H[:, list(models)]
        combined = comb.predict(data.X, H)
        out[f"{label}_{name}_combined"] = score(data.y, combined)
        for k, m in enumerate(models):
            out[f"{label}_{name}_{data.model_names[m]}"] = score(data.y, H[:, k])
    for m in models:
        diff = out[f"test_{name}_combined"] - out[f"test_{name}_{train.model_names[m]}"]
        out[f"diff_{train.model_names[m]}"] = diff if higher else -diff
    return out


def run_combination_experiment(config: CombinationConfig, seed: int = 0) -> list[dict]:
    """Per-replicate scores of the combined and individual models.

    ``diff_*`` columns are oriented so that positive means the combined
    model is better (higher AUC or accuracy, lower MSE).
    """
    if config.reps < 1:
        raise ValueError("reps must be >= 1")
    jobs = [(r, seed, config) for r in range(config.reps)]
    return _run_replicates(_combination_replicate, jobs, config.threads)


def summarize_ensemble(rows: list[dict]) -> list[dict]:
    """Mean test MSE per model and the share of replicates each ensemble beats the tree."""
    if not rows:
        return []
    out = {"reps": len(rows)}
    for name in ("tree", "forest", "boosting"):
        out[f"mean_mse_{name}"] = float(np.mean([r[f"mse_{name}"] for r in rows]))
    for name in ("forest", "boosting"):
        out[f"{name}_beats_tree"] = float(np.mean([r[f"mse_{name}"] < r["mse_tree"] for r in rows]))
    return [out]


def summarize_combination(rows: list[dict]) -> list[dict]:
    """Column means, plus the share of replicates the combined model beats each model and all of them."""
    if not rows:
        return []
    out = {"reps": len(rows)}
    for key in rows[0]:
        if key != "replicate":
            out[f"mean_{key}"] = float(np.mean([r[key] for r in rows]))
    diffs = [k for k in rows[0] if k.startswith("diff_")]
    for key in diffs:
        out[f"beats_{key[5:]}"] = float(np.mean([r[key] > 0 for r in rows]))
    out["beats_all"] = float(np.mean([all(r[k] > 0 for k in diffs) for r in rows]))
    return [out]


# --------------------------------------------------------------------------
# null distribution of the splitting statistic
# --------------------------------------------------------------------------


def fixed_split_statistics(reps: int = 2000, n: int = 1000, feature: int = 0, cutpoint: float = 0.0,
                           seed: int = 0) -> np.ndarray:
    """PASD statistic of one pre-chosen split under setting 1, once per replicate."""
    from .measures import loss_subgroup_stats, standardized_difference

    out = np.empty(reps)
    for r in range(reps):
        d = generate(DGPSpec(Setting.S1, n, _replicate_seed(seed, 99, r)))
        mu = individual_loss(Measure.SQUARED_ERROR, d.y, d.H[:, 0])
        left = d.X[:, feature] <= cutpoint
        out[r] = standardized_difference(loss_subgroup_stats(mu[left]), loss_subgroup_stats(mu[~left]))
    return out


def default_threads() -> int:
    return max(1, os.cpu_count() or 1)
