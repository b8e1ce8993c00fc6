"""Rank-wise bias correction for the Gaussian many-means model z_i ~ N(mu_i, 1).

The selection bias of the k-th order statistic is

    beta_k = E[z_(k) - mu_i(k)]

where i(k) is the (stochastic) original index holding rank k.  Subtracting
beta_k from z_(k) removes the bias incurred by ranking; the functions here
estimate the curve by direct Monte Carlo at known means (`mc_bias`), by a
plug-in parametric bootstrap (`boot1`), and by a nested second-order bootstrap
(`boot2`), plus a James-Stein comparator.
"""

from __future__ import annotations

import numpy as np

from .core import (
    BiasCurve,
    EffectEstimates,
    FloatArray,
    InvalidInputError,
    RankedSample,
    RngSpec,
    as_effect_vector,
    rank_sample,
)

__all__ = [
    "mc_bias",
    "oracle_estimates",
    "boot1",
    "boot2",
    "smooth_bias",
    "default_window",
    "james_stein",
]

# Stream layout inside boot2: child(0) for the plug-in curve, child(1, b) for
# the b-th resimulated dataset, child(2, b) for its inner bias run.  boot1 and
# oracle_estimates pass their rng through to mc_bias unchanged.
_STREAM_BASE = 0
_STREAM_OUTER_DATA = 1
_STREAM_OUTER_BIAS = 2


def _check_budget(value: int, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
        raise InvalidInputError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def mc_bias(mu, B: int, rng: RngSpec | int) -> BiasCurve:
    """Monte Carlo estimate of the rank-wise selection bias at known means.

    Parameters
    ----------
    mu : array_like
        True means, length p.
    B : int
        Number of Monte Carlo replicates.
    rng : RngSpec or int
        Stream spec; replicate b draws from ``rng.child(b)`` so results are
        independent of evaluation order.

    Returns
    -------
    BiasCurve
        beta_hat[k-1] = (1/B) sum_b (z^b_(k) - mu_i(k)^b), ranks ascending.
    """
    means = as_effect_vector(mu, name="mu")
    B = _check_budget(B, "B")
    spec = RngSpec.of(rng)
    p = means.size
    acc = np.zeros(p)
    for b in range(B):
        gen = spec.child(b).generator()
        z = means + gen.standard_normal(p)
        idx = np.argsort(z, kind="stable")
        acc += z[idx] - means[idx]
    return BiasCurve(beta=acc / B, provenance="mc", budget=B)


def default_window(p: int) -> int:
    """Default smoothing window: the odd integer nearest p/50, at least 1."""
    return max(1, (int(p) // 50) | 1)


def smooth_bias(beta: BiasCurve, window: int) -> BiasCurve:
    """Centered moving average of a bias curve over rank.

    The window must be odd and no longer than the curve.  Near the endpoints
    the window is clipped to the available ranks (so the first and last ranks
    average over (window+1)/2 values).
    """
    if not isinstance(window, (int, np.integer)) or isinstance(window, bool):
        raise InvalidInputError(f"window must be an integer, got {window!r}")
    if window < 1 or window % 2 == 0:
        raise InvalidInputError(f"window must be a positive odd integer, got {window}")
    if window > beta.p:
        raise InvalidInputError(f"window {window} exceeds curve length {beta.p}")
    smoothed = _moving_average(beta.beta, int(window))
    return BiasCurve(
        beta=smoothed,
        provenance=f"smoothed({beta.provenance}, window={int(window)})",
        budget=beta.budget,
    )


def _moving_average(values: FloatArray, window: int) -> FloatArray:
    half = window // 2
    csum = np.concatenate(([0.0], np.cumsum(values)))
    i = np.arange(values.size)
    lo = np.maximum(i - half, 0)
    hi = np.minimum(i + half, values.size - 1)
    return (csum[hi + 1] - csum[lo]) / (hi - lo + 1)


def _apply_window(curve: BiasCurve, window: int | None) -> BiasCurve:
    if window is None:
        return curve
    return smooth_bias(curve, window)


def _assemble(tag: str, ranked: RankedSample, applied: FloatArray, *,
              beta: FloatArray, beta2: FloatArray | None = None,
              window: int | None = None, budget: tuple[int, ...] = ()) -> EffectEstimates:
    # applied is the curve actually subtracted per rank (beta or beta2).
    corrected = np.empty(ranked.p)
    corrected[ranked.order_index] = ranked.order - applied
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


def oracle_estimates(z: RankedSample, mu_true, B: int, rng: RngSpec | int,
                     *, window: int | None = None) -> EffectEstimates:
    """Bias-corrected estimates using the TRUE means (unattainable benchmark).

    Computes beta from ``mc_bias(mu_true, B)`` and returns
    mu_tilde_i(k) = z_(k) - beta_k mapped back to original positions.
    """
    mu = as_effect_vector(mu_true, name="mu_true")
    if mu.size != z.p:
        raise InvalidInputError(f"mu_true has length {mu.size}, sample has p={z.p}")
    curve = _apply_window(mc_bias(mu, B, rng), window)
    return _assemble("oracle", z, curve.beta, beta=curve.beta,
                     window=window, budget=(curve.budget,))


def boot1(z: RankedSample, B: int, rng: RngSpec | int,
          *, window: int | None = None) -> EffectEstimates:
    """First-order parametric bootstrap: plug in the MLE mu_hat = z.

    Parameters
    ----------
    z : RankedSample
        Observed statistics.
    B : int
        Bootstrap replicates for the bias curve.
    rng : RngSpec or int
        Passed through to `mc_bias` unchanged.
    window : int, optional
        Odd smoothing window applied to the bias curve before subtraction.

    Returns
    -------
    EffectEstimates
        mu_tilde_i(k) = z_(k) - beta_hat_k, tag ``"boot1"``.
    """
    curve = _apply_window(mc_bias(z.z, B, rng), window)
    return _assemble("boot1", z, curve.beta, beta=curve.beta,
                     window=window, budget=(curve.budget,))


def boot2(z: RankedSample, B_outer: int, B_inner: int, rng: RngSpec | int,
          *, window: int | None = None) -> EffectEstimates:
    """Second-order (nested) parametric bootstrap.

    Estimates the bias of the plug-in bias curve itself: with
    beta_hat = mc_bias(z, B_inner), each outer replicate b draws a dataset
    mu*_b ~ N(z, I) (whose MLE is the raw draw) and recomputes the plug-in
    curve there, giving

        betabeta_hat = (1/B_outer) sum_b [beta_hat - mc_bias(mu*_b, B_inner)]
        beta2_hat    = beta_hat + betabeta_hat

    and the corrected values z_(k) - beta2_hat_k.

    Parameters
    ----------
    z : RankedSample
    B_outer, B_inner : int
        Outer resimulation count and inner Monte Carlo budget.
    rng : RngSpec or int
    window : int, optional
        Odd smoothing window applied to both curves before subtraction.
    """
    B_outer = _check_budget(B_outer, "B_outer")
    B_inner = _check_budget(B_inner, "B_inner")
    spec = RngSpec.of(rng)
    base = mc_bias(z.z, B_inner, spec.child(_STREAM_BASE))
    star_sum = np.zeros(z.p)
    for b in range(B_outer):
        gen = spec.child(_STREAM_OUTER_DATA, b).generator()
        mu_star = z.z + gen.standard_normal(z.p)
        star_sum += mc_bias(mu_star, B_inner, spec.child(_STREAM_OUTER_BIAS, b)).beta
    second = BiasCurve(
        beta=base.beta + (base.beta - star_sum / B_outer),
        provenance="mc2",
        budget=B_outer * B_inner,
    )
    first = _apply_window(base, window)
    second = _apply_window(second, window)
    return _assemble("boot2", z, second.beta, beta=first.beta, beta2=second.beta,
                     window=window, budget=(B_outer, B_inner))


def james_stein(z) -> EffectEstimates:
    """Positive-part James-Stein shrinkage toward the grand mean.

    mu_hat_i = zbar + max(0, 1 - (p-3)/S) (z_i - zbar) with
    S = sum (z_i - zbar)^2; requires p >= 4.  S = 0 degenerates to the grand
    mean for every coordinate.
    """
    ranked = z if isinstance(z, RankedSample) else rank_sample(z)
    if ranked.p < 4:
        raise InvalidInputError(f"james_stein needs p >= 4, got p={ranked.p}")
    values = ranked.z
    center = values.mean()
    spread = float(np.sum((values - center) ** 2))
    factor = max(0.0, 1.0 - (values.size - 3) / spread) if spread > 0 else 0.0
    corrected = center + factor * (values - center)
    corrected.flags.writeable = False
    beta = ranked.order - corrected[ranked.order_index]
    beta.flags.writeable = False
    return EffectEstimates(
        tag="js",
        z=ranked.z,
        corrected=corrected,
        order=ranked.order,
        inv_rank=ranked.inv_rank,
        beta=beta,
    )
