"""Combining fixed prediction models with covariate-dependent weights.

Three weightings are provided:

* majority voting over per-model PASD forests grown on shared bootstrap
  resamples: the weight of model k at x is the share of resamples in which
  k has the best estimated performance at x;
* a mixture of experts fit by EM, where the gating is a softmax of
  ``beta_k * mu_k(x)`` with ``beta_K = 0`` and the gating step uses Fisher
  scoring;
* the same mixture with gating proportional to ``beta_k`` times a scaled
  chi-square(1) density of ``mu_k(x)``, which has closed-form updates.

``mu_k(x)`` is an estimate of model k's conditional performance, normally
from a random PASD forest or boosted PASD trees.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .data import Dataset
from .ensembles import BoostedModel, Forest, fit_boosting, fit_forest
from .errors import (
    DegenerateComponent,
    DimensionMismatch,
    GroupLevelMeasure,
    NonpositiveMu,
    SingularHessian,
    WeightSumViolation,
)
from .measures import Measure, individual_loss
from .tree import GrowthConfig

__all__ = [
    "VoteCombiner",
    "EMParams",
    "AnalyticEMParams",
    "EMCombiner",
    "fit_vote_combiner",
    "vote_weights",
    "vote_weights_from_estimates",
    "combine_predict",
    "combine_predictions",
    "softmax_weights",
    "gating_objective",
    "gating_score_hessian",
    "fisher_scoring_step",
    "e_step",
    "em_fit",
    "em_fit_analytic",
    "chi2_scaled_density",
    "fit_em_combiner",
    "combiner_from_dict",
]

WEIGHT_SUM_TOL = 1e-9
RIDGE = 1e-8
MU_FLOOR = 1e-12


# --------------------------------------------------------------------------
# majority voting
# --------------------------------------------------------------------------


def vote_weights_from_estimates(estimates, higher_is_better: bool = False) -> np.ndarray:
    """Voting weights from per-resample estimates.

    ``estimates`` has shape ``(B, K)`` for one x, or ``(B, K, n)`` for n
    points.  In each resample the best model gets 1, shared equally among
    exact ties; the result is averaged over resamples.
    """
    est = np.asarray(estimates, dtype=float)
    best = est.max(axis=1, keepdims=True) if higher_is_better else est.min(axis=1, keepdims=True)
    win = (est == best).astype(float)
    win /= win.sum(axis=1, keepdims=True)
    return win.mean(axis=0)


@dataclass
class VoteCombiner:
    forests: list[Forest]
    measure: Measure
    model_indices: tuple[int, ...]

    @property
    def B(self) -> int:
        return len(self.forests[0].trees)

    @property
    def K(self) -> int:
        return len(self.forests)

    @property
    def n_features(self) -> int:
        return self.forests[0].n_features

    def estimates(self, X) -> np.ndarray:
        """Per-resample, per-model leaf estimates with shape ``(B, K, n)``."""
        return np.stack([f.tree_predictions(X) for f in self.forests], axis=1)

    def weights(self, X) -> np.ndarray:
        """Voting weights, shape ``(n, K)``."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} covariates, got {X.shape[1]}")
        return vote_weights_from_estimates(self.estimates(X), self.measure.higher_is_better).T

    def predict(self, X, H) -> np.ndarray:
        H = np.asarray(H, dtype=float)
        if H.ndim == 1:
            H = H[None, :]
        return combine_predictions(self.weights(X), H[:, list(self.model_indices)] if H.shape[1] != self.K else H)

    def to_dict(self) -> dict:
        return {
            "format": "pasd-combiner",
            "version": 1,
            "method": "mv",
            "measure": self.measure.value,
            "model_indices": list(self.model_indices),
            "forests": [f.to_dict() for f in self.forests],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VoteCombiner":
        return cls([Forest.from_dict(f) for f in d["forests"]], Measure(d["measure"]),
                   tuple(d["model_indices"]))


def shared_bootstrap(n: int, B: int, seed) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [np.sort(rng.integers(0, n, size=n)) for _ in range(B)]


def fit_vote_combiner(data: Dataset, models=None, measure="squared_error", B: int = 100,
                      mtry: int | None = None, seed: int = 0,
                      growth_config: GrowthConfig | None = None, threads: int = 1) -> VoteCombiner:
    """One forest per model, all on the same bootstrap resamples."""
    measure = Measure.parse(measure)
    models = tuple(range(data.n_models)) if models is None else tuple(int(k) for k in models)
    if not models:
        raise ValueError("need at least one model")
    boot_seq, *model_seqs = np.random.SeedSequence(seed).spawn(1 + len(models))
    boots = shared_bootstrap(data.n, B, boot_seq)

    def fit(k):
        s = int(model_seqs[k].generate_state(1)[0])
        return fit_forest(data, measure, models[k], B, mtry, growth_config, s, bootstrap_indices=boots)

    if threads > 1 and len(models) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            forests = list(pool.map(fit, range(len(models))))
    else:
        forests = [fit(k) for k in range(len(models))]
    return VoteCombiner(forests, measure, models)


def vote_weights(combiner: VoteCombiner, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("vote_weights takes a single covariate vector")
    return combiner.weights(x)[0]


def combine_predict(weights, model_predictions) -> float:
    """Weighted sum of the K model predictions at one x."""
    w = np.asarray(weights, dtype=float)
    h = np.asarray(model_predictions, dtype=float)
    if w.shape != h.shape:
        raise DimensionMismatch(f"{w.size} weights for {h.size} predictions")
    if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise WeightSumViolation(f"weights sum to {w.sum()!r}")
    return float(np.dot(w, h))


def combine_predictions(W, H) -> np.ndarray:
    """Row-wise weighted sums; ``W`` and ``H`` are both ``(n, K)``."""
    W = np.asarray(W, dtype=float)
    H = np.asarray(H, dtype=float)
    if W.shape != H.shape:
        raise DimensionMismatch(f"weights {W.shape} vs predictions {H.shape}")
    bad = np.abs(W.sum(axis=1) - 1.0) > WEIGHT_SUM_TOL
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise WeightSumViolation(f"weights in row {i} sum to {W[i].sum()!r}")
    return np.einsum("ik,ik->i", W, H)


# --------------------------------------------------------------------------
# softmax gating and Fisher scoring
# --------------------------------------------------------------------------


def softmax_weights(beta, mu_at_x) -> np.ndarray:
    """``exp(beta_k mu_k) / sum_j exp(beta_j mu_j)``; works row-wise on 2-D ``mu``."""
    z = np.asarray(beta, dtype=float) * np.asarray(mu_at_x, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _gating_probs(mu, beta):
    """Probabilities of all K components given the K-1 free columns."""
    eta = mu * beta
    full = np.concatenate([eta, np.zeros((eta.shape[0], 1))], axis=1)
    full -= full.max(axis=1, keepdims=True)
    e = np.exp(full)
    return e / e.sum(axis=1, keepdims=True)


def _prep(lam, mu, beta):
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if lam.shape != mu.shape or lam.shape[1] != beta.size:
        raise DimensionMismatch(f"lambda {lam.shape}, mu {mu.shape}, beta {beta.shape}")
    return lam, mu, beta


def gating_objective(lam, mu, beta) -> float:
    """``sum_i sum_k lambda_ik log pi_ik`` with the reference column implied.

    ``lam`` and ``mu`` hold the K-1 non-reference columns; the reference
    responsibility is ``1 - sum`` of the others.
    """
    lam, mu, beta = _prep(lam, mu, beta)
    eta = mu * beta
    full = np.concatenate([eta, np.zeros((eta.shape[0], 1))], axis=1)
    lognorm = logsumexp(full, axis=1)
    lam_ref = 1.0 - lam.sum(axis=1)
    return float(np.sum(lam * (eta - lognorm[:, None])) + np.sum(lam_ref * (-lognorm)))


def gating_score_hessian(lam, mu, beta):
    """Score vector and Hessian of :func:`gating_objective` in ``beta``."""
    lam, mu, beta = _prep(lam, mu, beta)
    pi = _gating_probs(mu, beta)[:, :-1]
    score = np.sum((lam - pi) * mu, axis=0)
    mp = mu * pi
    hess = mp.T @ mp
    hess[np.diag_indices_from(hess)] = -np.sum(mu * mu * pi * (1.0 - pi), axis=0)
    return score, hess


def fisher_scoring_step(lam, mu, beta, max_halvings: int = 20) -> np.ndarray:
    """One Newton/Fisher-scoring update of the free gating coefficients.

    The step is halved (up to ``max_halvings`` times) until the objective
    does not decrease; if no halving helps, ``beta`` is returned unchanged.
    """
    lam, mu, beta = _prep(lam, mu, beta)
    score, hess = gating_score_hessian(lam, mu, beta)
    step = _newton_direction(hess, score)
    base = gating_objective(lam, mu, beta)
    t = 1.0
    for _ in range(max_halvings + 1):
        cand = beta + t * step
        if gating_objective(lam, mu, cand) >= base:
            return cand
        t *= 0.5
    return beta.copy()


def _newton_direction(hess, score):
    """``-H^{-1} u``, retrying with a small ridge when H is singular."""
    k = score.size
    for ridge in (0.0, RIDGE):
        # H is negative semi-definite, so the ridge shifts it further negative
        m = hess - ridge * np.eye(k)
        if np.all(np.isfinite(m)) and np.linalg.cond(m) < 1.0 / np.finfo(float).eps:
            return -np.linalg.solve(m, score)
    raise SingularHessian("gating Hessian is singular even after ridge regularisation")


# --------------------------------------------------------------------------
# numerical EM
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EMParams:
    sigmas: np.ndarray
    betas: np.ndarray
    loglik_trace: tuple[float, ...]
    n_iter: int = 0
    converged: bool = False

    def weights(self, mu) -> np.ndarray:
        return softmax_weights(self.betas, np.atleast_2d(mu))

    def to_dict(self) -> dict:
        return {"sigmas": self.sigmas.tolist(), "betas": self.betas.tolist(),
                "loglik_trace": list(self.loglik_trace), "n_iter": self.n_iter,
                "converged": self.converged}

    @classmethod
    def from_dict(cls, d: dict) -> "EMParams":
        return cls(np.asarray(d["sigmas"], float), np.asarray(d["betas"], float),
                   tuple(d["loglik_trace"]), int(d["n_iter"]), bool(d["converged"]))


def _log_normal(y, H, sig2):
    r = y[:, None] - H
    return -0.5 * np.log(2 * math.pi * sig2) - 0.5 * r * r / sig2


def e_step(y, H, sig2, log_pi):
    """Responsibilities ``lambda_ik`` and the observed-data log-likelihood."""
    joint = _log_normal(y, H, sig2) + log_pi
    norm = logsumexp(joint, axis=1)
    return np.exp(joint - norm[:, None]), float(norm.sum())


def _sigma_update(y, H, lam):
    mass = lam.sum(axis=0)
    if np.any(mass < 1e-12):
        k = int(np.argmin(mass))
        raise DegenerateComponent(f"component {k} has total responsibility {mass[k]:.3g}")
    sig2 = np.sum(lam * (H - y[:, None]) ** 2, axis=0) / mass
    if np.any(sig2 <= 0):
        k = int(np.argmin(sig2))
        raise DegenerateComponent(f"component {k} fits its responsibility mass exactly")
    return sig2


def _check_em_inputs(y, H, mu):
    y = np.asarray(y, dtype=float).reshape(-1)
    H = np.asarray(H, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if H.ndim == 1:
        H = H[:, None]
    if mu.ndim == 1:
        mu = mu[:, None]
    if H.shape != mu.shape or H.shape[0] != y.size:
        raise DimensionMismatch(f"y {y.shape}, predictions {H.shape}, estimates {mu.shape}")
    if not np.all(np.isfinite(mu)):
        raise ValueError("performance estimates must be finite")
    return y, H, mu


def _unpack(data, models):
    if isinstance(data, Dataset):
        y = data.y
        H = data.H if models is None else data.H[:, list(models)]
        return y, H
    y, H = data
    return np.asarray(y, float), np.asarray(H, float) if models is None else np.asarray(H, float)[:, list(models)]


def em_fit(data, models=None, mu_estimates=None, init: EMParams | None = None,
           tolerance: float = 1e-8, max_iter: int = 500, fisher_steps: int = 5) -> EMParams:
    """Mixture of the K fixed models with softmax gating on ``beta_k * mu_k(x)``.

    ``data`` is a :class:`Dataset` or a ``(y, H)`` pair.  ``mu_estimates`` is
    ``(n, K)``.  Each M-step updates the variances in closed form and then
    takes up to ``fisher_steps`` Fisher-scoring steps on the gating
    coefficients, so every iteration is a generalized EM step.
    """
    y, H = _unpack(data, models)
    y, H, mu = _check_em_inputs(y, H, mu_estimates)
    n, K = H.shape
    if init is None:
        sig2 = np.mean((H - y[:, None]) ** 2, axis=0)
        beta = np.zeros(K)
    else:
        sig2 = np.asarray(init.sigmas, float).copy()
        beta = np.asarray(init.betas, float).copy()
    if np.any(sig2 <= 0):
        raise DegenerateComponent("a model reproduces the outcome exactly; its variance is zero")
    beta[-1] = 0.0

    def log_pi(b):
        z = mu * b
        return z - logsumexp(z, axis=1, keepdims=True)

    lam, ll = e_step(y, H, sig2, log_pi(beta))
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        sig2 = _sigma_update(y, H, lam)
        if K > 1:
            free = beta[:-1]
            for _ in range(fisher_steps):
                new = fisher_scoring_step(lam[:, :-1], mu[:, :-1], free)
                moved = np.max(np.abs(new - free)) if free.size else 0.0
                free = new
                if moved < 1e-10 * (1.0 + np.max(np.abs(free))):
                    break
            beta = np.append(free, 0.0)
        lam, ll = e_step(y, H, sig2, log_pi(beta))
        trace.append(ll)
        if abs(trace[-1] - trace[-2]) < tolerance:
            converged = True
            break
    return EMParams(sig2, beta, tuple(trace), it, converged)


# --------------------------------------------------------------------------
# analytic EM
# --------------------------------------------------------------------------


def chi2_scaled_density(m, tau_sq):
    """Density of ``tau_sq * chi2_1`` at ``m`` (``m > 0``)."""
    m = np.asarray(m, dtype=float)
    return np.exp(_log_chi2_scaled(m, tau_sq))


def _log_chi2_scaled(m, tau_sq):
    return -0.5 * np.log(2 * math.pi * tau_sq * m) - m / (2 * tau_sq)


@dataclass(frozen=True)
class AnalyticEMParams:
    sigmas: np.ndarray
    betas: np.ndarray
    tau_sq: float
    loglik_trace: tuple[float, ...] = ()
    n_iter: int = 0
    converged: bool = False
    clamped_mu: bool = False

    def weights(self, mu) -> np.ndarray:
        mu = np.atleast_2d(np.asarray(mu, dtype=float))
        logw = np.log(self.betas) + _log_chi2_scaled(np.maximum(mu, MU_FLOOR), self.tau_sq)
        return np.exp(logw - logsumexp(logw, axis=1, keepdims=True))

    def to_dict(self) -> dict:
        return {"sigmas": self.sigmas.tolist(), "betas": self.betas.tolist(), "tau_sq": self.tau_sq,
                "loglik_trace": list(self.loglik_trace), "n_iter": self.n_iter,
                "converged": self.converged, "clamped_mu": self.clamped_mu}

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyticEMParams":
        return cls(np.asarray(d["sigmas"], float), np.asarray(d["betas"], float), float(d["tau_sq"]),
                   tuple(d.get("loglik_trace", ())), int(d.get("n_iter", 0)),
                   bool(d.get("converged", False)), bool(d.get("clamped_mu", False)))


def em_fit_analytic(data, models=None, mu_estimates=None, init: AnalyticEMParams | None = None,
                    tolerance: float = 1e-8, max_iter: int = 500) -> AnalyticEMParams:
    """Mixture with gating ``beta_k * p(mu_k(x); tau^2)`` and closed-form updates.

    The traced log-likelihood is that of ``(y, mu)`` jointly, which is the
    quantity these updates increase.
    """
    y, H = _unpack(data, models)
    y, H, mu = _check_em_inputs(y, H, mu_estimates)
    n, K = H.shape
    clamped = bool(np.any(mu <= 0))
    if clamped:
        warnings.warn(f"{int(np.sum(mu <= 0))} non-positive performance estimates clamped to {MU_FLOOR}",
                      NonpositiveMu, stacklevel=2)
        mu = np.maximum(mu, MU_FLOOR)
    if init is None:
        sig2 = np.mean((H - y[:, None]) ** 2, axis=0)
        beta = np.full(K, 1.0 / K)
        tau = float(mu.mean())
    else:
        sig2, beta, tau = np.asarray(init.sigmas, float), np.asarray(init.betas, float), float(init.tau_sq)
    if np.any(sig2 <= 0):
        raise DegenerateComponent("a model reproduces the outcome exactly; its variance is zero")

    def step_e(sig2, beta, tau):
        with np.errstate(divide="ignore"):
            log_prior = np.log(beta) + _log_chi2_scaled(mu, tau)
        return e_step(y, H, sig2, log_prior)

    lam, ll = step_e(sig2, beta, tau)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        sig2 = _sigma_update(y, H, lam)
        beta = lam.mean(axis=0)
        beta = beta / beta.sum()
        tau = float(np.sum(lam * mu) / n)
        lam, ll = step_e(sig2, beta, tau)
        trace.append(ll)
        if abs(trace[-1] - trace[-2]) < tolerance:
            converged = True
            break
    return AnalyticEMParams(sig2, beta, tau, tuple(trace), it, converged, clamped)


# --------------------------------------------------------------------------
# EM combiner with its performance-estimate providers
# --------------------------------------------------------------------------


@dataclass
class EMCombiner:
    params: EMParams | AnalyticEMParams
    providers: list[Forest | BoostedModel]
    model_indices: tuple[int, ...]
    method: str = "em"
    n_features: int = field(default=0)

    @property
    def K(self) -> int:
        return len(self.providers)

    def mu_estimates(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if self.n_features and X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} covariates, got {X.shape[1]}")
        return np.column_stack([p.predict(X) for p in self.providers])

    def weights(self, X) -> np.ndarray:
        return self.params.weights(self.mu_estimates(X))

    def predict(self, X, H) -> np.ndarray:
        H = np.asarray(H, dtype=float)
        if H.ndim == 1:
            H = H[None, :]
        if H.shape[1] != self.K:
            H = H[:, list(self.model_indices)]
        return combine_predictions(self.weights(X), H)

    def to_dict(self) -> dict:
        return {
            "format": "pasd-combiner",
            "version": 1,
            "method": self.method,
            "model_indices": list(self.model_indices),
            "n_features": self.n_features,
            "params": self.params.to_dict(),
            "providers": [p.to_dict() for p in self.providers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EMCombiner":
        params_cls = AnalyticEMParams if d["method"] == "em-analytic" else EMParams
        providers = [Forest.from_dict(p) if p["format"] == "pasd-forest" else BoostedModel.from_dict(p)
                     for p in d["providers"]]
        return cls(params_cls.from_dict(d["params"]), providers, tuple(d["model_indices"]), d["method"],
                   int(d.get("n_features", 0)))


def fit_em_combiner(data: Dataset, models=None, analytic: bool = False, provider: str = "forest",
                    B: int = 100, mtry: int | None = None, M: int = 200, shrinkage: float = 0.1,
                    seed: int = 0, tolerance: float = 1e-8, max_iter: int = 500,
                    measure="squared_error") -> EMCombiner:
    """Estimate each model's conditional squared error, then fit the EM weights."""
    measure = Measure.parse(measure)
    if not measure.is_individual:
        raise GroupLevelMeasure("EM combination needs an individual-level measure")
    models = tuple(range(data.n_models)) if models is None else tuple(int(k) for k in models)
    seqs = np.random.SeedSequence(seed).spawn(len(models))
    providers = []
    for k, s in zip(models, seqs):
        s = int(s.generate_state(1)[0])
        if provider == "forest":
            providers.append(fit_forest(data, measure, k, B, mtry, seed=s))
        elif provider == "boosting":
            providers.append(fit_boosting(data.X, individual_loss(measure, data.y, data.H[:, k]), M,
                                          shrinkage, seed=s, measure=measure))
        else:
            raise ValueError(f"unknown provider {provider!r}")
    mu = np.column_stack([p.predict(data.X) for p in providers])
    fit = em_fit_analytic if analytic else em_fit
    params = fit((data.y, data.H[:, list(models)]), None, mu, None, tolerance, max_iter)
    return EMCombiner(params, providers, models, "em-analytic" if analytic else "em", data.p)


def combiner_from_dict(d: dict):
    return VoteCombiner.from_dict(d) if d["method"] == "mv" else EMCombiner.from_dict(d)
