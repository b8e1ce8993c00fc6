"""Simulation studies: named scenarios, trial execution, convergence checks.

Two scenario families are built in.  The Gaussian family (schemes G1-G6)
draws z ~ N(mu, I) for six patterns of means; the anova3 family (C1-C3)
simulates a 3-class one-way layout per feature and ranks the per-column R^2.
Every estimator's summed squared error is reported as a fraction of the naive
estimate's, averaged over independently redrawn trials.

Also here: the convergence experiment comparing the empirical rank-wise bias
at a fixed quantile against its analytic large-p limit
F^{-1}(t) - E[mu | z = F^{-1}(t)], and the t-statistic ingestion path that
maps two-sample t values to approximately standard-normal z values.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .core import (
    ConfigError,
    FloatArray,
    InvalidInputError,
    RngSpec,
    as_effect_vector,
    rank_sample,
)
from .gauss_bias import boot1, boot2, james_stein, oracle_estimates, smooth_bias
from .genmod import anova3_make, generic_bias, generic_boot
from .tweedie import bin_z, fit_lindsey, tweedie_correct

__all__ = [
    "ScenarioSpec",
    "TrialReport",
    "Theorem1Row",
    "TwoPointPrior",
    "UniformPrior",
    "make_prior",
    "gen_scenario",
    "run_table",
    "theorem1_experiment",
    "t_to_z",
    "two_sample_t",
    "thread_count",
]

GAUSSIAN_SCHEMES = ("G1", "G2", "G3", "G4", "G5", "G6")
ANOVA3_SCHEMES = ("C1", "C2", "C3")

# Stream ids inside one trial: 0 truth draw, 1 data, 2 boot1, 3 boot2,
# 4 oracle.  The trial root is seed.child(scheme_id, t).
_SCHEME_ID = {s: i for i, s in enumerate(GAUSSIAN_SCHEMES)}
_SCHEME_ID.update({s: 10 + i for i, s in enumerate(ANOVA3_SCHEMES)})

_GAUSS_ESTIMATORS = ("boot1", "boot2", "oracle", "james_stein",
                     "tweedie3", "tweedie5", "tweedie7")
_ANOVA3_ESTIMATORS = ("boot1", "boot2", "oracle")


def thread_count() -> int:
    """Worker threads for trial execution: RANKSHRINK_THREADS or cpu count."""
    raw = os.environ.get("RANKSHRINK_THREADS", "")
    if raw.strip():
        try:
            value = int(raw)
        except ValueError as exc:
            raise ConfigError(f"RANKSHRINK_THREADS must be an integer, got {raw!r}") from exc
        if value < 1:
            raise ConfigError(f"RANKSHRINK_THREADS must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation-table cell: a scheme, its sizes, and the budgets.

    ``estimators`` names the columns to compute; valid tokens are boot1,
    boot2, oracle, james_stein and tweedie3/5/7 for the gaussian family,
    boot1/boot2/oracle for anova3.  ``window`` is an odd smoothing window
    applied to every rank-wise bias curve (None = raw curves).
    """

    family: str
    scheme: str
    p: int = 1000
    n: int = 50
    trials: int = 20
    estimators: tuple[str, ...] = ("boot1", "boot2")
    B: int = 100
    B_outer: int = 100
    B_inner: int = 100
    oracle_B: int = 10_000
    bins: int = 90
    window: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("gaussian", "anova3"):
            raise ConfigError(f"unknown family {self.family!r}")
        schemes = GAUSSIAN_SCHEMES if self.family == "gaussian" else ANOVA3_SCHEMES
        if self.scheme not in schemes:
            raise ConfigError(
                f"unknown scheme {self.scheme!r} for family {self.family!r}: "
                f"expected one of {', '.join(schemes)}")
        allowed = _GAUSS_ESTIMATORS if self.family == "gaussian" else _ANOVA3_ESTIMATORS
        if not self.estimators:
            raise ConfigError("estimator list is empty")
        for name in self.estimators:
            if name not in allowed:
                raise ConfigError(
                    f"estimator {name!r} is not available for family "
                    f"{self.family!r}: expected one of {', '.join(allowed)}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.p < 1:
            raise ConfigError(f"p must be >= 1, got {self.p}")


@dataclass(frozen=True)
class TrialReport:
    """Per-trial MSE ratios for every estimator of one scenario.

    The ratio is sum_i (estimate_i - truth_i)^2 over the naive estimator's
    same sum, so the naive row would be exactly 1 in every trial and is
    omitted.
    """

    spec: ScenarioSpec
    per_trial: dict[str, FloatArray] = field(repr=False)

    def mean(self, estimator: str) -> float:
        return float(self.per_trial[estimator].mean())

    def se(self, estimator: str) -> float:
        values = self.per_trial[estimator]
        if values.size < 2:
            return float("nan")
        return float(values.std(ddof=1) / math.sqrt(values.size))

    def rows(self):
        """(estimator, mean ratio, MC standard error) per estimator."""
        return [(name, self.mean(name), self.se(name))
                for name in self.spec.estimators]


def _gaussian_means(scheme: str, p: int, rng: RngSpec) -> FloatArray:
    gen = rng.generator()
    if scheme == "G1":
        return np.zeros(p)
    if scheme == "G2":
        return np.concatenate([np.zeros(p - p // 2), np.full(p // 2, 6.0)])
    if scheme == "G3":
        k = p - round(0.1 * p)
        return np.concatenate([np.zeros(k), np.full(p - k, 6.0)])
    if scheme == "G4":
        # N(0, 2) read as scale 2: the wider reading matches the reported
        # oracle row, the variance-2 reading does not.
        k = p - round(0.1 * p)
        return np.concatenate([np.zeros(k), 2.0 * gen.standard_normal(p - k)])
    if scheme == "G5":
        return gen.standard_normal(p)
    if scheme == "G6":
        sizes = [p // 5] * 4 + [p - 4 * (p // 5)]
        return np.repeat([6.0, 12.0, 18.0, 24.0, 30.0], sizes)
    raise ConfigError(f"unknown gaussian scheme {scheme!r}")


def _anova3_rho2(scheme: str, p: int, rng: RngSpec) -> FloatArray:
    gen = rng.generator()
    if scheme == "C1":
        return np.zeros(p)
    if scheme == "C2":
        # exponential(10) read as rate 10 (mean 0.1), truncated at 0.99.
        return np.minimum(gen.exponential(0.1, p), 0.99)
    if scheme == "C3":
        k = p - round(0.2 * p)
        bulk = gen.exponential(0.05, k)
        cluster = 0.55 + 0.05 * gen.standard_normal(p - k)
        return np.clip(np.concatenate([bulk, cluster]), 0.0, 0.99)
    raise ConfigError(f"unknown anova3 scheme {scheme!r}")


def _trial_root(spec: ScenarioSpec, t: int) -> RngSpec:
    return RngSpec.of(spec.seed).child(_SCHEME_ID[spec.scheme], t)


def gen_scenario(spec: ScenarioSpec, t: int):
    """Truth and dataset for trial t, deterministic in (seed, scheme, t).

    Gaussian family: returns (mu, z).  anova3: returns (rho2, (model,
    dataset)) with the design X baked into the model.  Random truths (G4,
    G5, C2, C3) are redrawn every trial.
    """
    if not 0 <= t:
        raise InvalidInputError(f"trial index must be >= 0, got {t}")
    root = _trial_root(spec, t)
    if spec.family == "gaussian":
        mu = _gaussian_means(spec.scheme, spec.p, root.child(0))
        z = mu + root.child(1).generator().standard_normal(spec.p)
        return mu, z
    rho2 = _anova3_rho2(spec.scheme, spec.p, root.child(0))
    model, dataset = anova3_make(spec.n, spec.p, rho2, root.child(1))
    return rho2, (model, dataset)


def _gaussian_trial(spec: ScenarioSpec, t: int) -> dict[str, float]:
    root = _trial_root(spec, t)
    mu, z = gen_scenario(spec, t)
    ranked = rank_sample(z)
    naive = float(np.sum((z - mu) ** 2))
    out: dict[str, float] = {}
    density_cache: dict[int, object] = {}
    for name in spec.estimators:
        if name == "boot1":
            est = boot1(ranked, spec.B, root.child(2), window=spec.window)
        elif name == "boot2":
            est = boot2(ranked, spec.B_outer, spec.B_inner, root.child(3),
                        window=spec.window)
        elif name == "oracle":
            est = oracle_estimates(ranked, mu, spec.oracle_B, root.child(4),
                                   window=spec.window)
        elif name == "james_stein":
            est = james_stein(z)
        else:
            degree = int(name.removeprefix("tweedie"))
            if degree not in density_cache:
                density_cache[degree] = fit_lindsey(bin_z(z, spec.bins), degree)
            est = tweedie_correct(z, density_cache[degree])
        out[name] = float(np.sum((est.corrected - mu) ** 2)) / naive
    return out


def _anova3_trial(spec: ScenarioSpec, t: int) -> dict[str, float]:
    root = _trial_root(spec, t)
    rho2, (model, dataset) = gen_scenario(spec, t)
    stat = model.statistic(model.fit(dataset))
    naive = float(np.sum((stat - rho2) ** 2))
    out: dict[str, float] = {}
    for name in spec.estimators:
        if name == "boot1":
            est = generic_boot(model, dataset, spec.B, 1, root.child(2),
                               window=spec.window)
            corrected = est.corrected
        elif name == "boot2":
            est = generic_boot(model, dataset, (spec.B_outer, spec.B_inner), 2,
                               root.child(3), window=spec.window)
            corrected = est.corrected
        else:
            curve = generic_bias(model, rho2, None, spec.oracle_B, root.child(4))
            beta = curve.beta
            if spec.window is not None:
                beta = smooth_bias(curve, spec.window).beta
            ranked = rank_sample(stat)
            corrected = np.empty(spec.p)
            corrected[ranked.order_index] = ranked.order - beta
            corrected = model.clip_corrected(corrected)
        out[name] = float(np.sum((corrected - rho2) ** 2)) / naive
    return out


def run_table(spec: ScenarioSpec) -> TrialReport:
    """Run all trials of one scenario and collect per-trial MSE ratios.

    Trials are independent jobs on a thread pool (RANKSHRINK_THREADS caps
    it); every trial's draws depend only on (seed, scheme, t), so the result
    is bit-identical to serial execution.
    """
    trial = _gaussian_trial if spec.family == "gaussian" else _anova3_trial
    workers = min(thread_count(), spec.trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda t: trial(spec, t), range(spec.trials)))
    else:
        results = [trial(spec, t) for t in range(spec.trials)]
    per_trial = {}
    for name in spec.estimators:
        values = np.array([r[name] for r in results])
        values.flags.writeable = False
        per_trial[name] = values
    return TrialReport(spec=spec, per_trial=per_trial)


# --- Theorem-1 convergence experiment ------------------------------------

_SQRT2PI = math.sqrt(2.0 * math.pi)


def _phi(x):
    return np.exp(-0.5 * np.square(x)) / _SQRT2PI


def _Phi(x):
    return stats.norm.cdf(x)


@dataclass(frozen=True)
class TwoPointPrior:
    """mu = +-a with probability 1/2 each."""

    a: float = 2.0

    def draw(self, gen: np.random.Generator, size: int) -> FloatArray:
        return np.where(gen.random(size) < 0.5, -self.a, self.a)

    def marginal_pdf(self, z) -> FloatArray:
        return 0.5 * (_phi(z - self.a) + _phi(z + self.a))

    def marginal_cdf(self, z) -> FloatArray:
        return 0.5 * (_Phi(z - self.a) + _Phi(z + self.a))

    def posterior_mean(self, z) -> FloatArray:
        return self.a * np.tanh(self.a * np.asarray(z, dtype=np.float64))


@dataclass(frozen=True)
class UniformPrior:
    """mu uniform on [-a, a]."""

    a: float = 1.0

    def draw(self, gen: np.random.Generator, size: int) -> FloatArray:
        return gen.uniform(-self.a, self.a, size)

    def marginal_pdf(self, z) -> FloatArray:
        z = np.asarray(z, dtype=np.float64)
        return (_Phi(z + self.a) - _Phi(z - self.a)) / (2.0 * self.a)

    def marginal_cdf(self, z) -> FloatArray:
        # antiderivative of Phi is Psi(x) = x Phi(x) + phi(x)
        z = np.asarray(z, dtype=np.float64)
        hi, lo = z + self.a, z - self.a
        psi = lambda x: x * _Phi(x) + _phi(x)
        return (psi(hi) - psi(lo)) / (2.0 * self.a)

    def posterior_mean(self, z) -> FloatArray:
        # Tweedie on the analytic marginal: z + f'(z)/f(z)
        z = np.asarray(z, dtype=np.float64)
        num = _phi(z - self.a) - _phi(z + self.a)
        return z - num / (_Phi(z + self.a) - _Phi(z - self.a))

    def posterior_mean_quadrature(self, z: float, tol: float = 1e-8) -> float:
        """E[mu|z] by adaptive quadrature, as an independent cross-check."""
        num = integrate.quad(lambda u: u * float(_phi(z - u)), -self.a, self.a,
                             epsabs=tol, epsrel=tol)[0]
        den = integrate.quad(lambda u: float(_phi(z - u)), -self.a, self.a,
                             epsabs=tol, epsrel=tol)[0]
        return num / den


def make_prior(name: str, a: float):
    """Named bounded priors with analytic marginals."""
    if name == "two_point":
        return TwoPointPrior(a=float(a))
    if name == "uniform":
        return UniformPrior(a=float(a))
    raise InvalidInputError(f"unsupported prior {name!r}: "
                            "expected 'two_point' or 'uniform'")


def _marginal_quantile(prior, t: float) -> float:
    """F^{-1}(t) by bisection to 1e-10."""
    lo, hi = -prior.a - 12.0, prior.a + 12.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(prior.marginal_cdf(mid)) < t:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Theorem1Row:
    """Empirical vs analytic rank-wise bias at one sample size."""

    p: int
    rank: int
    empirical: float
    se: float
    analytic: float

    @property
    def gap(self) -> float:
        return self.empirical - self.analytic


def theorem1_experiment(prior, quantile: float, p_grid, R: int,
                        rng: RngSpec | int) -> tuple[Theorem1Row, ...]:
    """Convergence of E[z_(k) - mu_i(k)] at rank k = floor(t p) to its limit.

    ``prior`` is a prior instance or a name for :func:`make_prior` (default
    amplitude).  For each p in the grid, R replicates draw mu ~ prior and
    z ~ N(mu, I), record the bias at the fixed quantile rank, and the row
    compares the empirical mean against the analytic limit
    F^{-1}(t) - E[mu | z = F^{-1}(t)].
    """
    if isinstance(prior, str):
        prior = make_prior(prior, 2.0 if prior == "two_point" else 1.0)
    if not 0.0 < quantile < 1.0:
        raise InvalidInputError(f"quantile must be in (0, 1), got {quantile}")
    p_grid = tuple(int(p) for p in p_grid)
    if any(p < 1 for p in p_grid):
        raise InvalidInputError(f"sample sizes must be >= 1, got {p_grid}")
    if R < 2:
        raise InvalidInputError(f"need R >= 2 replicates, got {R}")
    spec = RngSpec.of(rng)
    zq = _marginal_quantile(prior, quantile)
    analytic = zq - float(prior.posterior_mean(zq))
    rows = []
    for p in p_grid:
        k = max(1, math.floor(quantile * p))
        vals = np.empty(R)
        for r in range(R):
            gen = spec.child(p, r).generator()
            mu = prior.draw(gen, p)
            z = mu + gen.standard_normal(p)
            idx = np.argsort(z, kind="stable")[k - 1]
            vals[r] = z[idx] - mu[idx]
        rows.append(Theorem1Row(
            p=p, rank=k,
            empirical=float(vals.mean()),
            se=float(vals.std(ddof=1) / math.sqrt(R)),
            analytic=analytic,
        ))
    return tuple(rows)


# --- t-statistic ingestion -------------------------------------------------


def t_to_z(t_stats, df) -> FloatArray:
    """Map Student-t values to standard-normal quantiles of equal tail mass.

    z_i = Phi^{-1}(T_df(t_i)); computed through the survival function on the
    positive side so extreme statistics keep full precision.  ``df`` may be a
    scalar or a per-entry array (Welch).
    """
    values = as_effect_vector(t_stats, name="t_stats")
    df = np.asarray(df, dtype=np.float64)
    if df.ndim not in (0, 1) or (df.ndim == 1 and df.size != values.size):
        raise InvalidInputError(
            f"df must be a scalar or match t_stats, got shape {df.shape}")
    if not np.all(np.isfinite(df)) or np.any(df < 1):
        raise InvalidInputError("df must be finite and >= 1")
    tail = stats.t.sf(np.abs(values), df)
    z = stats.norm.isf(tail)
    return np.copysign(z, values)


def two_sample_t(matrix, labels, *, welch: bool = False):
    """Per-row two-sample t statistics for a features x samples matrix.

    ``labels`` marks each column as group 0 or 1.  Returns (t, df); the
    pooled-variance statistic has scalar df = n0 + n1 - 2, the Welch variant
    a per-row Welch-Satterthwaite df.
    """
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError(f"matrix must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("matrix contains non-finite values")
    labels = np.asarray(labels)
    if labels.shape != (X.shape[1],):
        raise InvalidInputError(
            f"labels length {labels.shape} does not match {X.shape[1]} columns")
    g1 = labels.astype(bool)
    n0, n1 = int((~g1).sum()), int(g1.sum())
    if n0 < 2 or n1 < 2:
        raise InvalidInputError(f"need >= 2 samples per group, got {n0} and {n1}")
    a, b = X[:, ~g1], X[:, g1]
    ma, mb = a.mean(axis=1), b.mean(axis=1)
    va, vb = a.var(axis=1, ddof=1), b.var(axis=1, ddof=1)
    if welch:
        sa, sb = va / n0, vb / n1
        se = np.sqrt(sa + sb)
        df = (sa + sb) ** 2 / (sa ** 2 / (n0 - 1) + sb ** 2 / (n1 - 1))
        return (mb - ma) / se, df
    sp2 = ((n0 - 1) * va + (n1 - 1) * vb) / (n0 + n1 - 2)
    se = np.sqrt(sp2 * (1.0 / n0 + 1.0 / n1))
    return (mb - ma) / se, float(n0 + n1 - 2)
