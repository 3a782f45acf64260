"""p-values and the binomial interval used for Type I error reporting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.stats import norm

from .core_lm import X2, FitResult, t_statistic
from .errors import EmptyDistribution
from .schemes import NullDistribution

# draws within this relative distance of |t_obs| count as ties (at least as extreme)
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class TestResult:
    method: str
    t_obs: float
    p_value: float
    b: int = 0
    seed: int | None = None
    warnings: tuple[str, ...] = field(default=())

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0.0 < self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside (0, 1]")


def exceedances(t_obs: float, t_stars: np.ndarray, center: float = 0.0) -> int:
    thr = abs(t_obs - center) * (1.0 - TIE_RTOL)
    return int(np.count_nonzero(np.abs(np.asarray(t_stars) - center) >= thr))


def permutation_p_value(t_obs: float, null: NullDistribution) -> float:
    """Two-sided permutation p-value.

    Sampled distributions use ``(1 + r) / (B + 1)`` where ``r`` counts draws
    with ``|t*| >= |t_obs|``; an enumerated distribution gives the exact
    proportion ``r / B`` (the identity is already among its elements).  Draws
    are compared as stored, so full-model residual draws, which are centred
    on the observed coefficient, need no further shift.
    """
    if null.b == 0 or len(null.t_stars) == 0:
        raise EmptyDistribution("null distribution has no draws")
    r = exceedances(t_obs, null.t_stars)
    if null.exact:
        # the exact space always contains a draw matching t_obs for the
        # identity-reproducing schemes; guard the others against p = 0
        return max(r, 1) / null.b
    return (1 + r) / (null.b + 1)


def t_cdf(t: float, df: float) -> float:
    """Student-t CDF through the regularised incomplete beta function."""
    if df <= 0:
        raise ValueError("df must be positive")
    if t == 0:
        return 0.5
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    x = df / (df + t * t)
    tail = 0.5 * float(special.betainc(0.5 * df, 0.5, x))
    return 1.0 - tail if t > 0 else tail


def t_two_sided(t: float, df: float) -> float:
    """``2 * (1 - t_cdf(|t|, df))`` without cancellation in the far tail."""
    if math.isinf(t):
        return 0.0
    return float(special.betainc(0.5 * df, 0.5, df / (df + t * t)))


def ols_p_value(fit: FitResult, index: int = X2) -> float:
    """Classical two-sided t-test p-value for the coefficient at ``index``."""
    return t_two_sided(t_statistic(fit, index, 0.0), fit.df)


def proportion_ci(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    z = float(norm.ppf(0.5 + level / 2))
    p = successes / trials
    z2n = z * z / trials
    center = (p + z2n / 2) / (1 + z2n)
    half = z * math.sqrt(p * (1 - p) / trials + z2n / (4 * trials)) / (1 + z2n)
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return lo, hi
