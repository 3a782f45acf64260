"""The four permutation schemes for testing the treatment coefficient.

Each scheme turns ``(dataset, permutation)`` into a refit whose treatment
t-statistic is one draw from the null distribution:

=====================  =====================================  ==========================
scheme                 refit                                  t*
=====================  =====================================  ==========================
``PERMUTE_Y``          y[perm] ~ x1 + x2                      b*/SE(b*)
``PERMUTE_X2``         y ~ x1 + x2[perm]                      b*/SE(b*)
``REDUCED_RESIDUALS``  (fit_red + r_red[perm]) ~ x1 + x2      b*/SE(b*)
``FULL_RESIDUALS``     (fit_full + r_full[perm]) ~ x1 + x2    (b* - b)/SE(b*)
=====================  =====================================  ==========================

The observed statistic is always ``b/SE(b)`` from the full fit.

:func:`draw_t_star` is the scalar reference path (one full QR refit per
draw).  :func:`null_distribution` evaluates draws in vectorised batches and
must agree with it to rounding error.
"""

from __future__ import annotations

import enum
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, NamedTuple

import numpy as np

from . import _rng
from .core_lm import X2, Dataset, FixedDesignBatch, TreatmentBatch, fit_full, fit_reduced, t_statistic
from .errors import DegenerateScheme, SpaceTooLarge

#: enumerate instead of sampling when the space has at most this many elements
ENUMERATION_CAP = 10_000
#: per-draw retry budget for degenerate permutations
MAX_RETRIES = 20
#: draws per vectorised batch; part of the determinism contract, since BLAS
#: rounding depends on matrix shape
CHUNK = 256
#: |r(x1, x2)| above this triggers the collinearity warning
COLLINEARITY_THRESHOLD = 0.9

Mode = Literal["auto", "sample", "enumerate"]


class Scheme(str, enum.Enum):
    PERMUTE_Y = "permute_y"
    PERMUTE_X2 = "permute_x2"
    REDUCED_RESIDUALS = "reduced_residuals"
    FULL_RESIDUALS = "full_residuals"

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def cli_name(self) -> str:
        return _CLI_NAMES[self]

    @classmethod
    def from_name(cls, name: str) -> "Scheme":
        key = name.strip().lower()
        for s in cls:
            if key in (s.value, s.cli_name):
                return s
        raise ValueError(f"unknown permutation scheme: {name!r}")


_LABELS = {
    Scheme.PERMUTE_Y: "response variable (Manly)",
    Scheme.PERMUTE_X2: "treatment variable (Draper & Stoneman)",
    Scheme.REDUCED_RESIDUALS: "reduced model residuals (Freedman & Lane)",
    Scheme.FULL_RESIDUALS: "full model residuals (ter Braak)",
}
_CLI_NAMES = {
    Scheme.PERMUTE_Y: "manly",
    Scheme.PERMUTE_X2: "draper-stoneman",
    Scheme.REDUCED_RESIDUALS: "freedman-lane",
    Scheme.FULL_RESIDUALS: "terbraak",
}


@dataclass(frozen=True, eq=False)
class Permutation:
    """A bijection on ``0..n-1``; applying it to ``v`` gives ``v[indices]``."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.ndim != 1 or not np.issubdtype(idx.dtype, np.integer):
            idx = np.asarray(idx, dtype=np.int64)
        n = idx.shape[0]
        seen = np.zeros(n, dtype=bool)
        if n and (idx.min() < 0 or idx.max() >= n):
            raise ValueError("permutation index out of range")
        seen[idx] = True
        if not seen.all():
            raise ValueError("not a bijection: repeated indices")
        idx = idx.astype(np.int64, copy=True)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def apply(self, v) -> np.ndarray:
        return np.asarray(v)[self.indices]


@dataclass(frozen=True, eq=False)
class NullDistribution:
    """Permutation draws of the treatment t-statistic.

    ``exact`` marks a fully enumerated space, in which case ``t_stars`` holds
    one entry per element and the p-value is an exact proportion.  ``center``
    records what the scheme subtracted in the numerator of each draw (the
    observed coefficient for full-model residuals, else 0); the stored draws
    are already centred.
    """

    t_stars: np.ndarray
    scheme: Scheme
    b: int
    seed: int | None
    t_obs: float
    center: float = 0.0
    exact: bool = False
    n_retried: int = 0
    restriction: str | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t_stars, dtype=float)
        if t.shape != (self.b,):
            raise ValueError(f"expected {self.b} draws, got shape {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("null distribution contains non-finite draws")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "t_stars", t)


class CollinearityDiagnostic(NamedTuple):
    r: float
    flagged: bool


def collinearity_diagnostic(data: Dataset, threshold: float = COLLINEARITY_THRESHOLD) -> CollinearityDiagnostic:
    """Sample correlation of ``x1`` and ``x2``, flagged when ``|r| > threshold``.

    A flag means the reduced-residual scheme may not break the x2-y relation.
    """
    a = data.x1 - data.x1.mean()
    b = data.x2 - data.x2.mean()
    r = float(a @ b / math.sqrt((a @ a) * (b @ b)))
    r = max(-1.0, min(1.0, r))
    return CollinearityDiagnostic(r, abs(r) > threshold)


# ------------------------------------------------------------------ #
# scalar reference path
# ------------------------------------------------------------------ #


def apply_scheme(scheme: Scheme, data: Dataset, perm: Permutation) -> Dataset:
    """The transformed dataset a scheme refits for one permutation."""
    if len(perm) != data.n:
        raise ValueError(f"permutation has length {len(perm)}, dataset has {data.n}")
    scheme = Scheme(scheme)
    if scheme is Scheme.PERMUTE_Y:
        return data.replace(y=perm.apply(data.y))
    if scheme is Scheme.PERMUTE_X2:
        return data.replace(x2=perm.apply(data.x2))
    fit = fit_reduced(data) if scheme is Scheme.REDUCED_RESIDUALS else fit_full(data)
    # fitted + r[perm], written so the identity reproduces y bit for bit
    return data.replace(y=data.y + (perm.apply(fit.residuals) - fit.residuals))


def observed_t(data: Dataset) -> float:
    return t_statistic(fit_full(data), X2, 0.0)


def draw_t_star(scheme: Scheme, data: Dataset, perm: Permutation) -> float:
    """One null draw of the treatment t-statistic under ``scheme``."""
    scheme = Scheme(scheme)
    null = fit_full(data).coefficients[X2] if scheme is Scheme.FULL_RESIDUALS else 0.0
    return t_statistic(fit_full(apply_scheme(scheme, data, perm)), X2, float(null))


# ------------------------------------------------------------------ #
# batch engine
# ------------------------------------------------------------------ #

BatchStat = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]


def scheme_batch(scheme: Scheme, data: Dataset) -> tuple[BatchStat, float]:
    """Vectorised ``perms (k, n) -> (t*, ok)`` for a scheme, plus its centre."""
    scheme = Scheme(scheme)
    if scheme is Scheme.PERMUTE_X2:
        tb = TreatmentBatch(data)
        x2 = np.asarray(data.x2)

        def stat(perms):
            b2, se, ok = tb.stats(x2[perms])
            return _ratio(b2, se, ok), ok

        return stat, 0.0

    fb = FixedDesignBatch(data)
    center = 0.0
    if scheme is Scheme.PERMUTE_Y:
        base, material = np.zeros(data.n), np.asarray(data.y)
    else:
        fit = fit_reduced(data) if scheme is Scheme.REDUCED_RESIDUALS else fit_full(data)
        base, material = data.y - fit.residuals, fit.residuals
        if scheme is Scheme.FULL_RESIDUALS:
            center = float(fit.coefficients[X2])

    def stat(perms):
        b2, se, ok = fb.stats(base[None, :] + material[perms])
        return _ratio(b2 - center, se, ok), ok

    return stat, center


def _ratio(num, den, ok):
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=ok)
    return out


def sample_statistics(
    b: int,
    key: np.ndarray,
    draw: Callable[[np.random.Generator], np.ndarray],
    stat: BatchStat,
    *,
    n_jobs: int = 1,
    max_retries: int = MAX_RETRIES,
) -> tuple[np.ndarray, int]:
    """Evaluate ``b`` seeded draws; returns ``(statistics, n_retried)``.

    Draw ``i`` uses the stream ``(key, i)``; a degenerate draw is redrawn from
    ``(key, i, attempt)`` until it succeeds or ``max_retries`` is exhausted.
    Draws are evaluated in fixed blocks of :data:`CHUNK`; ``n_jobs`` only
    changes which thread evaluates a block, so results are bit-identical for
    any degree of parallelism.
    """
    if b < 1:
        raise ValueError("need at least one draw")
    bounds = [(s, min(s + CHUNK, b)) for s in range(0, b, CHUNK)]

    def run(bound):
        lo, hi = bound
        rows = np.stack([draw(_rng.draw_rng(key, i)) for i in range(lo, hi)])
        t, ok = stat(rows)
        retried = 0
        for j in np.flatnonzero(~ok):
            i = lo + int(j)
            for attempt in range(1, max_retries + 1):
                tt, okk = stat(draw(_rng.draw_rng(key, i, attempt))[None, :])
                if okk[0]:
                    t[j] = tt[0]
                    retried += 1
                    break
            else:
                raise DegenerateScheme(
                    f"draw {i} still degenerate after {max_retries} retries"
                )
        return t, retried

    if n_jobs == 1 or len(bounds) == 1:
        parts = [run(bd) for bd in bounds]
    else:
        with ThreadPoolExecutor(max_workers=None if n_jobs < 0 else n_jobs) as pool:
            parts = list(pool.map(run, bounds))
    return np.concatenate([p[0] for p in parts]), sum(p[1] for p in parts)


def all_permutations(n: int) -> np.ndarray:
    """Every permutation of ``0..n-1`` in lexicographic order (identity first)."""
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64)


def null_distribution(
    scheme: Scheme,
    data: Dataset,
    b: int,
    seed: int,
    *,
    mode: Mode = "auto",
    cap: int = ENUMERATION_CAP,
    n_jobs: int = 1,
    max_retries: int = MAX_RETRIES,
) -> NullDistribution:
    """Null distribution of the treatment t-statistic under ``scheme``.

    ``mode="auto"`` enumerates all ``n!`` permutations when that space is no
    larger than both ``cap`` and ``b`` and samples otherwise; ``"sample"`` and
    ``"enumerate"`` force one path.  Sampled permutations are uniform with
    replacement (the identity may occur) and draw ``i`` depends only on
    ``(seed, i)``.
    """
    scheme = Scheme(scheme)
    if b < 1:
        raise ValueError("B must be at least 1")
    t_obs = observed_t(data)
    stat, center = scheme_batch(scheme, data)
    space = math.factorial(data.n) if data.n <= 20 else None
    exact = mode == "enumerate" or (
        mode == "auto" and space is not None and space <= cap and space <= b
    )
    if exact:
        if space is None or space > cap:
            raise SpaceTooLarge(f"{data.n}! permutations exceed the cap of {cap}")
        perms = all_permutations(data.n)
        t, ok = stat(perms)
        if not ok.all():
            bad = int(np.flatnonzero(~ok)[0])
            raise DegenerateScheme(
                f"enumerated permutation {bad} ({perms[bad].tolist()}) gives a degenerate fit"
            )
        return NullDistribution(
            t_stars=t, scheme=scheme, b=len(t), seed=seed, t_obs=t_obs, center=center, exact=True
        )

    n = data.n
    key = _rng.stream_key(seed)
    t, retried = sample_statistics(
        b, key, lambda rng: rng.permutation(n), stat, n_jobs=n_jobs, max_retries=max_retries
    )
    return NullDistribution(
        t_stars=t, scheme=scheme, b=b, seed=seed, t_obs=t_obs, center=center, n_retried=retried
    )


def seeded_permutation(seed: int, index: int, n: int) -> Permutation:
    """The permutation :func:`null_distribution` uses for sampled draw ``index``."""
    return Permutation(_rng.draw_rng(_rng.stream_key(seed), index).permutation(n))


__all__ = [
    "COLLINEARITY_THRESHOLD",
    "ENUMERATION_CAP",
    "CollinearityDiagnostic",
    "NullDistribution",
    "Permutation",
    "Scheme",
    "all_permutations",
    "apply_scheme",
    "collinearity_diagnostic",
    "draw_t_star",
    "null_distribution",
    "observed_t",
    "sample_statistics",
    "scheme_batch",
    "seeded_permutation",
]
