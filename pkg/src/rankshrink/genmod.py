"""Rank-wise bias correction for arbitrary parametric models.

The Gaussian machinery generalizes: any model that can simulate datasets from
(mu, theta), refit by maximum likelihood, and expose a per-feature statistic
can have its selection bias estimated by the same parametric bootstrap.  The
concrete instance here is a balanced 3-class one-way layout where the
statistic is the per-column coefficient of determination R^2.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any

import numpy as np

from .core import (
    BiasCurve,
    EffectEstimates,
    FloatArray,
    InvalidInputError,
    NumericalError,
    RngSpec,
    as_effect_vector,
    rank_sample,
)
from .gauss_bias import _check_budget, _apply_window

__all__ = [
    "ModelFit",
    "ParametricModel",
    "GaussianMeansModel",
    "Anova3Model",
    "generic_bias",
    "generic_boot",
    "anova3_make",
    "anova3_fit",
]

# Stream layout mirrors gauss_bias.boot2: child(0) plug-in curve, child(1, b)
# outer dataset b, child(2, b) its bias run.  Replicate b of a bias run uses
# child(b), retries child(b, attempt).
_STREAM_BASE = 0
_STREAM_OUTER_DATA = 1
_STREAM_OUTER_BIAS = 2
_MAX_RETRIES = 3


@dataclass(frozen=True)
class ModelFit:
    """Maximum-likelihood fit: parameters of interest plus nuisance."""

    mu: FloatArray
    theta: Any = None


class ParametricModel(ABC):
    """A simulatable model with per-feature parameters mu and nuisance theta.

    Subclasses must keep the plug-in step closed: ``fit(simulate(*fit(D)))``
    has to be well-defined for any fit the model can emit.
    """

    @abstractmethod
    def simulate(self, mu, theta, rng: RngSpec):
        """Draw one dataset with parameters of interest mu and nuisance theta."""

    @abstractmethod
    def fit(self, dataset) -> ModelFit:
        """Maximum-likelihood fit of a dataset."""

    def statistic(self, fit: ModelFit) -> FloatArray:
        """Per-feature estimates used for ranking (default: the mu part)."""
        return fit.mu

    def plugin_params(self, fit: ModelFit):
        """(mu, theta) to resimulate from when the fit is used as truth."""
        return fit.mu, fit.theta

    def clip_corrected(self, values: FloatArray) -> FloatArray:
        """Map corrected estimates back into the parameter space."""
        return values


class GaussianMeansModel(ParametricModel):
    """z_i ~ N(mu_i, 1): the many-means model as a ParametricModel.

    With this instance generic_bias reproduces mc_bias (and generic_boot the
    gauss_bias bootstraps) bit for bit under matched seeds.
    """

    def simulate(self, mu, theta, rng: RngSpec):
        mu = np.asarray(mu, dtype=np.float64)
        return mu + rng.generator().standard_normal(mu.size)

    def fit(self, dataset) -> ModelFit:
        return ModelFit(mu=as_effect_vector(dataset, name="dataset"))


def generic_bias(model: ParametricModel, mu, theta, B: int,
                 rng: RngSpec | int) -> BiasCurve:
    """Monte Carlo rank-wise bias of the model's ranked statistic.

    Averages statistic_(k) - mu_i(k) over B simulated datasets from
    (mu, theta).  A replicate whose fit raises NumericalError is retried with
    a fresh child seed at most 3 times before the whole run fails.
    """
    mu = as_effect_vector(mu, name="mu")
    B = _check_budget(B, "B")
    spec = RngSpec.of(rng)
    acc = np.zeros(mu.size)
    for b in range(B):
        stat = None
        for attempt in range(_MAX_RETRIES + 1):
            stream = spec.child(b) if attempt == 0 else spec.child(b, attempt)
            try:
                fitted = model.fit(model.simulate(mu, theta, stream))
                stat = model.statistic(fitted)
                break
            except NumericalError as exc:
                failure = exc
        if stat is None:
            raise NumericalError(
                f"replicate {b} failed {_MAX_RETRIES + 1} fits: {failure}",
                iterations=_MAX_RETRIES + 1,
            ) from failure
        if stat.size != mu.size:
            raise InvalidInputError(
                f"model statistic has length {stat.size}, expected {mu.size}")
        idx = np.argsort(stat, kind="stable")
        acc += stat[idx] - mu[idx]
    return BiasCurve(beta=acc / B, provenance="mc", budget=B)


def _assemble_general(model: ParametricModel, tag: str, stat: FloatArray,
                      applied: FloatArray, *, beta: FloatArray,
                      beta2: FloatArray | None = None, window: int | None = None,
                      budget: tuple[int, ...] = ()) -> EffectEstimates:
    ranked = rank_sample(stat)
    corrected = np.empty(ranked.p)
    corrected[ranked.order_index] = ranked.order - applied
    corrected = model.clip_corrected(corrected)
    corrected.flags.writeable = False
    return EffectEstimates(
        tag=tag,
        z=ranked.z,
        corrected=corrected,
        order=ranked.order,
        inv_rank=ranked.inv_rank,
        beta=beta,
        beta2=beta2,
        window=window,
        budget=budget,
    )


def generic_boot(model: ParametricModel, dataset, B, order: int = 1,
                 rng: RngSpec | int = 0, *,
                 window: int | None = None) -> EffectEstimates:
    """Parametric-bootstrap correction of the model's ranked statistic.

    Fits the dataset, computes the rank-wise bias at the fitted (plug-in)
    model, and subtracts it from the ranked statistic.  order=2 nests the
    scheme exactly as gauss_bias.boot2: B may then be a single budget used
    for both levels or a (B_outer, B_inner) pair.
    """
    if order not in (1, 2):
        raise InvalidInputError(f"order must be 1 or 2, got {order!r}")
    spec = RngSpec.of(rng)
    fit = model.fit(dataset)
    stat = model.statistic(fit)
    mu_hat, theta_hat = model.plugin_params(fit)
    if order == 1:
        B = _check_budget(B, "B")
        curve = _apply_window(generic_bias(model, mu_hat, theta_hat, B, spec),
                              window)
        return _assemble_general(model, "boot1", stat, curve.beta,
                                 beta=curve.beta, window=window,
                                 budget=(curve.budget,))
    if isinstance(B, tuple):
        B_outer, B_inner = B
    else:
        B_outer = B_inner = B
    B_outer = _check_budget(B_outer, "B_outer")
    B_inner = _check_budget(B_inner, "B_inner")
    base = generic_bias(model, mu_hat, theta_hat, B_inner,
                        spec.child(_STREAM_BASE))
    star_sum = np.zeros(stat.size)
    for b in range(B_outer):
        outer = model.simulate(mu_hat, theta_hat, spec.child(_STREAM_OUTER_DATA, b))
        mu_star, theta_star = model.plugin_params(model.fit(outer))
        star_sum += generic_bias(model, mu_star, theta_star, B_inner,
                                 spec.child(_STREAM_OUTER_BIAS, b)).beta
    second = BiasCurve(
        beta=base.beta + (base.beta - star_sum / B_outer),
        provenance="mc2",
        budget=B_outer * B_inner,
    )
    first = _apply_window(base, window)
    second = _apply_window(second, window)
    return _assemble_general(model, "boot2", stat, second.beta,
                             beta=first.beta, beta2=second.beta, window=window,
                             budget=(B_outer, B_inner))


class Anova3Model(ParametricModel):
    """Balanced 3-class one-way layout; the statistic is per-column R^2.

    Y_ij = theta_j[X_ij] + eps_ij with eps ~ N(0, sigma_j^2) and X an n x p
    matrix of class labels in {0, 1, 2}, held fixed across resimulations.
    The parameter of interest is the population coefficient of determination
    rho^2_j = Var(E[Y|X]) / (Var(E[Y|X]) + sigma^2) with class probabilities
    exactly 1/3.  Nuisance: the class means and sigma^2.
    """

    def __init__(self, X):
        X = np.asarray(X)
        if X.ndim != 2:
            raise InvalidInputError(f"X must be 2-D, got shape {X.shape}")
        if not np.isin(X, (0, 1, 2)).all():
            raise InvalidInputError("class labels must be in {0, 1, 2}")
        self.X = np.ascontiguousarray(X, dtype=np.int64)
        self.n, self.p = self.X.shape
        self._masks = np.stack([(self.X == k) for k in range(3)])
        self._counts = self._masks.sum(axis=1)
        if (self._counts < 2).any():
            raise InvalidInputError(
                "every column needs at least 2 observations per class")
        self._cols = np.arange(self.p)

    def class_means(self, Y: FloatArray) -> FloatArray:
        """(3, p) sample means of Y within each class of X."""
        return np.stack([
            (Y * self._masks[k]).sum(axis=0) for k in range(3)
        ]) / self._counts

    def simulate(self, mu, theta, rng: RngSpec):
        """Draw Y (n x p).  theta=None derives the canonical symmetric
        pattern (-delta, 0, delta) with sigma^2 = 1 from mu = rho^2."""
        if theta is None:
            rho2 = as_effect_vector(mu, name="rho2")
            if rho2.size != self.p:
                raise InvalidInputError(
                    f"rho2 has length {rho2.size}, design has p={self.p}")
            if (rho2 < 0).any() or (rho2 > 0.99).any():
                raise InvalidInputError("rho2 entries must lie in [0, 0.99]")
            delta = np.sqrt(1.5 * rho2 / (1.0 - rho2))
            means = np.stack([-delta, np.zeros(self.p), delta])
            sigma = np.ones(self.p)
        else:
            theta_means, sigma2 = theta
            means = np.asarray(theta_means, dtype=np.float64)
            sigma = np.sqrt(np.asarray(sigma2, dtype=np.float64))
        signal = means[self.X, self._cols]
        noise = rng.generator().standard_normal((self.n, self.p))
        return signal + sigma * noise

    def fit(self, dataset) -> ModelFit:
        Y = np.asarray(dataset, dtype=np.float64)
        if Y.shape != (self.n, self.p):
            raise InvalidInputError(
                f"dataset shape {Y.shape} does not match design {(self.n, self.p)}")
        means = self.class_means(Y)
        resid = Y - means[self.X, self._cols]
        rss = (resid * resid).sum(axis=0)
        centered = Y - Y.mean(axis=0)
        tss = (centered * centered).sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            r2 = np.where(tss > 0.0, 1.0 - rss / tss, 0.0)
        return ModelFit(mu=r2, theta=(means, rss / self.n))

    def plugin_params(self, fit: ModelFit):
        return np.clip(fit.mu, 0.0, 0.99), fit.theta

    def clip_corrected(self, values: FloatArray) -> FloatArray:
        return np.clip(values, 0.0, 1.0)


def anova3_make(n: int, p: int, rho2, rng: RngSpec | int):
    """Sample a design and dataset for prespecified per-column rho^2.

    X is uniform over the 3 classes, columns resampled until each class has
    at least 2 observations; theta_j = (-delta_j, 0, delta_j) with
    delta_j = sqrt(1.5 rho2_j / (1 - rho2_j)) makes the between-class
    variance (2/3) delta^2 = rho2/(1-rho2) times sigma^2 = 1.

    Returns (model, dataset); the X draw uses child(0) of rng, the noise
    child(1).
    """
    if n < 9:
        raise InvalidInputError(f"need n >= 9 for 2 per class plus residual df, got {n}")
    rho2 = as_effect_vector(rho2, name="rho2")
    if rho2.size != p:
        raise InvalidInputError(f"rho2 has length {rho2.size}, expected p={p}")
    if (rho2 < 0).any() or (rho2 > 0.99).any():
        raise InvalidInputError("rho2 entries must lie in [0, 0.99]")
    spec = RngSpec.of(rng)
    gen = spec.child(0).generator()
    X = gen.integers(0, 3, size=(n, p))
    while True:
        counts = np.stack([(X == k).sum(axis=0) for k in range(3)])
        bad = (counts < 2).any(axis=0).nonzero()[0]
        if bad.size == 0:
            break
        X[:, bad] = gen.integers(0, 3, size=(n, bad.size))
    model = Anova3Model(X)
    dataset = model.simulate(rho2, None, spec.child(1))
    return model, dataset


def anova3_fit(model: Anova3Model, dataset):
    """(R^2, theta_hat, sigma2_hat) for every column of the dataset.

    theta_hat are the class sample means, sigma2_hat = RSS/n (the MLE) and
    R^2 = 1 - RSS/TSS, with the convention R^2 = 0 when TSS = 0.
    """
    fit = model.fit(dataset)
    means, sigma2 = fit.theta
    return fit.mu, means, sigma2
