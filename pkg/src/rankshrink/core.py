"""Shared primitives: validated effect vectors, ranking, bias curves, seeding.

Rank convention used throughout the package: ranks are ascending, rank 1 is
the smallest statistic and rank p the largest.  All rank-indexed arrays are
stored 0-based internally; the ``inv_rank`` permutation is 1-based because it
names positions in the original vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "ConfigError",
    "InputFormatError",
    "InvalidInputError",
    "NumericalError",
    "BiasCurve",
    "EffectEstimates",
    "RankedSample",
    "RngSpec",
    "as_effect_vector",
    "rank_sample",
]

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]


class InvalidInputError(ValueError):
    """A caller-supplied value violates an operation's preconditions."""


class NumericalError(RuntimeError):
    """An iterative numerical procedure diverged or hit a singular system."""

    def __init__(self, message: str, *, iterations: int | None = None,
                 trace: tuple[float, ...] = ()):
        super().__init__(message)
        self.iterations = iterations
        self.trace = trace


class ConfigError(ValueError):
    """A run configuration is internally inconsistent or unsupported."""


class InputFormatError(ValueError):
    """An input file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message: str, *, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def as_effect_vector(values, *, name: str = "values") -> FloatArray:
    """Validate and return ``values`` as a read-only 1-D float64 array.

    Requires length >= 1 and every entry finite; raises
    :class:`InvalidInputError` otherwise.
    """
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < 1:
        raise InvalidInputError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return _frozen(arr)


@dataclass(frozen=True)
class RankedSample:
    """A vector together with its order statistics and inverse-rank map.

    ``inv_rank[k-1] = i(k)`` is the 1-based original index of the k-th
    smallest value, so ``z[inv_rank[k-1] - 1] == order[k-1]``.
    """

    z: FloatArray
    order: FloatArray
    inv_rank: IntArray

    @property
    def p(self) -> int:
        return int(self.z.size)

    @property
    def order_index(self) -> IntArray:
        """0-based companion of ``inv_rank`` for array indexing."""
        return self.inv_rank - 1


def rank_sample(z) -> RankedSample:
    """Sort ``z`` ascending and record which original index holds each rank.

    Ties are broken by original index (stable sort) so the result is a pure
    function of the input.
    """
    values = as_effect_vector(z, name="z")
    idx = np.argsort(values, kind="stable")
    return RankedSample(
        z=values,
        order=_frozen(values[idx]),
        inv_rank=_frozen((idx + 1).astype(np.int64)),
    )


@dataclass(frozen=True)
class BiasCurve:
    """Per-rank bias estimates: ``beta[k-1]`` estimates E[z_(k) - mu_i(k)].

    ``provenance`` records how the curve was produced (``"mc"`` for direct
    Monte Carlo at known means, ``"smoothed(...)"`` after smoothing);
    ``budget`` is the Monte Carlo replicate count behind it.
    """

    beta: FloatArray
    provenance: str
    budget: int

    def __post_init__(self):
        object.__setattr__(self, "beta", as_effect_vector(self.beta, name="beta"))

    @property
    def p(self) -> int:
        return int(self.beta.size)


@dataclass(frozen=True)
class EffectEstimates:
    """Naive and bias-corrected estimates for one sample.

    ``corrected`` is aligned with the original input order.  ``beta`` is the
    per-rank curve that was subtracted (for rank-based estimators; implied
    ``z_(k) - corrected_i(k)`` otherwise) and ``beta2`` the second-order curve
    when the tag is ``"boot2"``.  ``window`` records the smoothing window
    applied to the curve, None for raw.
    """

    tag: str
    z: FloatArray
    corrected: FloatArray
    order: FloatArray
    inv_rank: IntArray
    beta: FloatArray
    beta2: FloatArray | None = None
    window: int | None = None
    budget: tuple[int, ...] = ()
    notes: tuple[str, ...] = ()

    @property
    def p(self) -> int:
        return int(self.z.size)

    @property
    def corrected_by_rank(self) -> FloatArray:
        """Corrected estimates in rank order: value at rank k is ``[k-1]``."""
        return self.corrected[self.inv_rank - 1]


@dataclass(frozen=True)
class RngSpec:
    """Deterministic stream addressing for all Monte Carlo in the package.

    A stream is identified by ``(master_seed, path)``.  Replicate b of any
    operation derives its child as ``spec.child(b)`` (or a documented longer
    path), so identical ``(master_seed, path)`` yields the identical draw
    regardless of execution order or parallelism.
    """

    master_seed: int
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not isinstance(self.master_seed, (int, np.integer)) or self.master_seed < 0:
            raise InvalidInputError("master_seed must be a nonnegative integer")
        for entry in self.path:
            if not isinstance(entry, (int, np.integer)) or entry < 0:
                raise InvalidInputError("stream path entries must be nonnegative integers")

    @classmethod
    def of(cls, spec: "RngSpec | int") -> "RngSpec":
        """Coerce a bare integer seed into a root RngSpec."""
        if isinstance(spec, RngSpec):
            return spec
        return cls(int(spec))

    def child(self, *indices: int) -> "RngSpec":
        return RngSpec(self.master_seed, self.path + tuple(int(i) for i in indices))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=self.path)
        return np.random.default_rng(seq)
