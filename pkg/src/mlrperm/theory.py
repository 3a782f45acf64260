"""Numerical checks of two resampling identities.

``rho_ystar_x2`` is the large-sample approximation to the correlation
between a reduced-residual pseudo-response ``Y* = fitted_1 + R*`` and the
treatment ``x2``; ``monte_carlo_rho`` estimates the same quantity directly.

``terbraak_moment_check`` compares full-residual permutation with the
residual bootstrap: both centre the treatment slope on its observed value
and the bootstrap variance is ``(1 - 1/n)`` times the permutation variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.stats import ks_2samp

from . import _rng
from .core_lm import X1, X2, Dataset, fit_full, fit_reduced, full_design, t_statistic
from .errors import InvalidRegime
from .schemes import CHUNK, Scheme, null_distribution


@dataclass(frozen=True)
class RhoInputs:
    b1: float       # reduced-model slope on x1
    beta12: float   # full-model slope on x1
    beta21: float   # full-model slope on x2
    var_x1: float
    var_x2: float
    var_y: float
    rho_x1x2: float

    def __post_init__(self):
        if min(self.var_x1, self.var_x2, self.var_y) <= 0:
            raise ValueError("variances must be strictly positive")
        if not -1 <= self.rho_x1x2 <= 1:
            raise ValueError("rho_x1x2 must lie in [-1, 1]")


def rho_ystar_x2(inp: RhoInputs) -> float:
    cov12 = inp.rho_x1x2 * math.sqrt(inp.var_x1 * inp.var_x2)
    radicand = 2 * inp.b1 * ((inp.b1 - inp.beta12) * inp.var_x1 - inp.beta21 * cov12) + inp.var_y
    if not radicand > 0:
        raise InvalidRegime(f"variance term {radicand:.4g} is not positive; approximation does not apply")
    return inp.b1 * inp.rho_x1x2 * math.sqrt(inp.var_x1) / math.sqrt(radicand)


def rho_inputs_from_data(data: Dataset) -> RhoInputs:
    """Plug-in inputs: fitted slopes and sample (n - 1) moments."""
    red, full = fit_reduced(data), fit_full(data)
    return RhoInputs(
        b1=float(red.coefficients[1]),
        beta12=float(full.coefficients[X1]),
        beta21=float(full.coefficients[X2]),
        var_x1=float(np.var(data.x1, ddof=1)),
        var_x2=float(np.var(data.x2, ddof=1)),
        var_y=float(np.var(data.y, ddof=1)),
        rho_x1x2=float(np.corrcoef(data.x1, data.x2)[0, 1]),
    )


def correlated_dataset(
    n: int,
    rho: float,
    seed: int,
    *,
    beta: tuple[float, float, float] = (0.0, 1.0, 0.0),
    sigma_e: float = 1.0,
    binary_x2: bool = False,
) -> Dataset:
    """Standard-normal ``x1`` and ``x2`` with correlation ``rho`` and normal errors.

    With ``binary_x2`` the treatment is the sign of the latent ``x2`` (its
    correlation with ``x1`` is then ``rho * sqrt(2 / pi)``).
    """
    rng = _rng.path_rng(seed, 0)
    z1, z2 = rng.standard_normal((2, n))
    x1 = z1
    x2 = rho * z1 + math.sqrt(max(0.0, 1 - rho * rho)) * z2
    if binary_x2:
        x2 = (x2 > 0).astype(float)
    y = beta[0] + beta[1] * x1 + beta[2] * x2 + sigma_e * rng.standard_normal(n)
    return Dataset(y=y, x1=x1, x2=x2)


def monte_carlo_rho(data: Dataset, B: int, seed: int) -> float:
    """Mean sample correlation of reduced-residual pseudo-responses with ``x2``."""
    if B < 1:
        raise ValueError("B must be at least 1")
    red = fit_reduced(data)
    fitted, resid = red.fitted, red.residuals
    x2c = data.x2 - data.x2.mean()
    x2n = math.sqrt(float(x2c @ x2c))
    key = _rng.stream_key(seed)
    n = data.n
    total = 0.0
    for lo in range(0, B, CHUNK):
        hi = min(lo + CHUNK, B)
        perms = np.stack([_rng.draw_rng(key, i).permutation(n) for i in range(lo, hi)])
        ys = fitted[None, :] + resid[perms]
        ys -= ys.mean(axis=1, keepdims=True)
        total += float(np.sum((ys @ x2c) / (np.linalg.norm(ys, axis=1) * x2n)))
    return total / B


class MomentCheck(NamedTuple):
    mean_perm: float
    mean_boot: float
    var_perm: float
    var_boot: float
    n: int
    b_obs: float = 0.0
    B: int = 0

    @property
    def se_perm(self) -> float:
        return math.sqrt(self.var_perm / self.B) if self.B else float("nan")

    @property
    def se_boot(self) -> float:
        return math.sqrt(self.var_boot / self.B) if self.B else float("nan")

    @property
    def ratio(self) -> float:
        """``var_boot / var_perm``; the identity predicts ``1 - 1/n``."""
        return self.var_boot / self.var_perm if self.var_perm > 0 else float("nan")


def terbraak_moment_check(data: Dataset, B: int, seed: int) -> MomentCheck:
    """Moments of the treatment slope under residual permutation and bootstrap.

    Both resamples are added to the full-model fitted values.  The slope is
    linear in the response, so each draw reduces to ``b + w . r_resampled``
    with ``w`` the treatment row of the least-squares solve.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    fit = fit_full(data)
    n = data.n
    b = float(fit.coefficients[X2])
    resid = fit.residuals if fit.sigma2_hat > 0 else np.zeros(n)
    w = np.linalg.pinv(full_design(data))[X2]
    perm_key, boot_key = _rng.stream_key(seed, 0), _rng.stream_key(seed, 1)
    d_perm = np.empty(B)
    d_boot = np.empty(B)
    for lo in range(0, B, CHUNK):
        hi = min(lo + CHUNK, B)
        perms = np.stack([_rng.draw_rng(perm_key, i).permutation(n) for i in range(lo, hi)])
        boots = np.stack([_rng.draw_rng(boot_key, i).integers(0, n, n) for i in range(lo, hi)])
        d_perm[lo:hi] = resid[perms] @ w
        d_boot[lo:hi] = resid[boots] @ w
    # moments of the deviations from b, so an exact fit gives exactly zero
    return MomentCheck(
        mean_perm=b + float(d_perm.mean()),
        mean_boot=b + float(d_boot.mean()),
        var_perm=float(d_perm.var(ddof=1)),
        var_boot=float(d_boot.var(ddof=1)),
        n=n,
        b_obs=b,
        B=B,
    )


def cdf_agreement(
    n: int = 100, draws: int = 2000, seed: int = 0, *, rho: float = 0.4,
    beta: tuple[float, float, float] = (1.0, 1.0, 0.5),
) -> float:
    """KS distance between the full-residual permutation t* of one dataset
    and the sampling distribution of ``(b - beta2) / SE(b)`` over fresh
    datasets from the same generator."""
    base = correlated_dataset(n, rho, _rng.child_seed(seed, "base"), beta=beta)
    null = null_distribution(Scheme.FULL_RESIDUALS, base, draws, _rng.child_seed(seed, "perm"), mode="sample")
    pivots = np.empty(draws)
    for i in range(draws):
        d = correlated_dataset(n, rho, _rng.child_seed(seed, f"rep{i}"), beta=beta)
        pivots[i] = t_statistic(fit_full(d), X2, beta[2])
    return float(ks_2samp(null.t_stars, pivots).statistic)


class CheckRow(NamedTuple):
    check: str
    value: float
    target: float
    tolerance: float
    passed: bool


RHO_GRID = (0.0, 0.3, -0.3, 0.8, -0.8)


def verification_report(
    seed: int = 0,
    tolerance_rho: float = 0.05,
    tolerance_var: float = 0.05,
    *,
    n_rho: int = 5000,
    b_rho: int = 2000,
    n_moment: int = 50,
    b_moment: int = 20000,
) -> list[CheckRow]:
    """Run the correlation-formula grid and the moment identities."""
    rows = []
    for rho in RHO_GRID:
        data = correlated_dataset(n_rho, rho, _rng.child_seed(seed, f"rho{rho:+.2f}"))
        mc = monte_carlo_rho(data, b_rho, _rng.child_seed(seed, f"mc{rho:+.2f}"))
        inputs = rho_inputs_from_data(data)
        formula = rho_ystar_x2(inputs)
        rows.append(CheckRow(f"rho(Y*, x2) at rho(x1, x2) = {rho:+.1f}", mc, formula,
                             tolerance_rho, abs(mc - formula) <= tolerance_rho))
        if rho == 0.0:
            zero = rho_ystar_x2(replace(inputs, rho_x1x2=0.0))
            rows.append(CheckRow("formula at rho(x1, x2) = 0", zero, 0.0, 0.0, zero == 0.0))
    data = correlated_dataset(n_moment, 0.4, _rng.child_seed(seed, "moments"), beta=(1.0, 1.0, 0.5))
    m = terbraak_moment_check(data, b_moment, _rng.child_seed(seed, "moment-draws"))
    rows.append(CheckRow("permutation mean of b2 (z-score)", (m.mean_perm - m.b_obs) / m.se_perm, 0.0, 4.0,
                         abs(m.mean_perm - m.b_obs) <= 4 * m.se_perm))
    rows.append(CheckRow("bootstrap mean of b2 (z-score)", (m.mean_boot - m.b_obs) / m.se_boot, 0.0, 4.0,
                         abs(m.mean_boot - m.b_obs) <= 4 * m.se_boot))
    target = 1 - 1 / m.n
    rows.append(CheckRow("var_boot / var_perm", m.ratio, target, tolerance_var,
                         abs(m.ratio - target) <= tolerance_var))
    return rows
