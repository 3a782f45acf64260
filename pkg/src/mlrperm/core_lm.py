"""Ordinary least squares for an intercept plus up to two predictors.

The full model regresses ``y`` on ``[1, x1, x2]`` and the reduced model on
``[1, x1]``.  Fits go through a QR decomposition of the column-equilibrated
design so that highly (but not perfectly) collinear predictors still solve
cleanly; exact collinearity is reported as :class:`RankDeficient`.

Besides the scalar API (:func:`fit_full`, :func:`fit_reduced`,
:func:`t_statistic`) the module carries two batch helpers used by the
permutation engine, which compute the treatment t-statistic for many
responses or many treatment vectors at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidDataset, RankDeficient, ZeroStandardError

# smallest/largest R-diagonal ratio of the equilibrated design
RANK_TOL = 1e-12
# residual norm below this fraction of ||y|| counts as an exact fit
EXACT_FIT_TOL = 1e-12

#: coefficient positions in a full-model FitResult
INTERCEPT, X1, X2 = 0, 1, 2


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response ``y``, covariate ``x1``, treatment ``x2`` and optional family labels."""

    y: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    family_id: tuple[str, ...] | None = None

    def __post_init__(self):
        y, x1, x2 = (_frozen(v) for v in (self.y, self.x1, self.x2))
        for name, v in (("y", y), ("x1", x1), ("x2", x2)):
            if v.ndim != 1:
                raise InvalidDataset(f"{name} must be one-dimensional")
        n = y.shape[0]
        if x1.shape[0] != n or x2.shape[0] != n:
            raise DimensionMismatch(
                f"lengths differ: y={n}, x1={x1.shape[0]}, x2={x2.shape[0]}"
            )
        if n < 4:
            raise InvalidDataset(f"need at least 4 observations, got {n}")
        for name, v in (("y", y), ("x1", x1), ("x2", x2)):
            if not np.all(np.isfinite(v)):
                raise InvalidDataset(f"{name} contains non-finite values")
        if np.unique(x1).size < 2:
            raise InvalidDataset("x1 is constant")
        if np.unique(x2).size < 2:
            raise InvalidDataset("x2 is constant")
        fam = self.family_id
        if fam is not None:
            fam = tuple(str(f) for f in fam)
            if len(fam) != n:
                raise DimensionMismatch(f"family_id has length {len(fam)}, expected {n}")
            if any(f == "" for f in fam):
                raise InvalidDataset("empty family label")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)
        object.__setattr__(self, "family_id", fam)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    def replace(self, **changes) -> "Dataset":
        kw = dict(y=self.y, x1=self.x1, x2=self.x2, family_id=self.family_id)
        kw.update(changes)
        return Dataset(**kw)


@dataclass(frozen=True, eq=False)
class FitResult:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    df: int
    sigma2_hat: float

    @property
    def rss(self) -> float:
        return float(self.residuals @ self.residuals)


@dataclass(frozen=True, eq=False)
class _Design:
    """QR factors of an equilibrated design, reusable across responses."""

    q: np.ndarray        # (n, p) orthonormal columns
    r_inv: np.ndarray    # (p, p) inverse of R for the scaled design
    scale: np.ndarray    # (p,) column norms
    se_factor: np.ndarray = field(init=False)  # sqrt(diag((X'X)^-1))

    def __post_init__(self):
        se = np.sqrt(np.sum(self.r_inv**2, axis=1)) / self.scale
        object.__setattr__(self, "se_factor", se)

    @property
    def p(self) -> int:
        return self.q.shape[1]


def _factor(X: np.ndarray) -> _Design:
    scale = np.linalg.norm(X, axis=0)
    if np.any(scale == 0):
        raise RankDeficient("design has an all-zero column")
    q, r = np.linalg.qr(X / scale)
    d = np.abs(np.diag(r))
    if d.min() <= RANK_TOL * d.max():
        raise RankDeficient(
            f"design matrix is rank deficient (R-diagonal ratio {d.min() / d.max():.3g})"
        )
    r_inv = np.linalg.solve(r, np.eye(r.shape[0]))
    return _Design(q=q, r_inv=r_inv, scale=scale)


def _fit(design: _Design, y: np.ndarray) -> FitResult:
    n, p = design.q.shape
    qty = design.q.T @ y
    coef = (design.r_inv @ qty) / design.scale
    fitted = design.q @ qty
    resid = y - fitted
    df = n - p
    rss = float(resid @ resid)
    if rss <= (EXACT_FIT_TOL * float(np.linalg.norm(y))) ** 2:
        rss = 0.0
    sigma2 = rss / df
    se = np.sqrt(sigma2) * design.se_factor
    return FitResult(
        coefficients=_frozen(coef),
        standard_errors=_frozen(se),
        residuals=_frozen(resid),
        fitted=_frozen(fitted),
        df=df,
        sigma2_hat=sigma2,
    )


def full_design(data: Dataset) -> np.ndarray:
    return np.column_stack([np.ones(data.n), data.x1, data.x2])


def reduced_design(data: Dataset) -> np.ndarray:
    return np.column_stack([np.ones(data.n), data.x1])


def fit_full(data: Dataset) -> FitResult:
    """Regress ``y`` on ``[1, x1, x2]``; coefficients are (b0.12, b1.2, b2.1)."""
    return _fit(_factor(full_design(data)), data.y)


def fit_reduced(data: Dataset) -> FitResult:
    """Regress ``y`` on ``[1, x1]``; residuals are the covariate-adjusted response."""
    return _fit(_factor(reduced_design(data)), data.y)


def fit_arrays(y: Sequence[float], *columns: Sequence[float]) -> FitResult:
    """OLS with an intercept on arbitrary predictor columns.

    Unlike the Dataset-based fits this skips the minimum-size and
    non-constant checks, so it also serves tiny hand examples.
    """
    y = np.asarray(y, dtype=float)
    cols = [np.asarray(c, dtype=float) for c in columns]
    if any(c.shape != y.shape for c in cols):
        raise DimensionMismatch("predictor and response lengths differ")
    X = np.column_stack([np.ones(y.shape[0]), *cols])
    if y.shape[0] <= X.shape[1]:
        raise InvalidDataset("no residual degrees of freedom")
    return _fit(_factor(X), y)


def t_statistic(fit: FitResult, index: int = X2, null_value: float = 0.0) -> float:
    """(coefficient - null_value) / standard error at ``index``."""
    if not -len(fit.coefficients) <= index < len(fit.coefficients):
        raise IndexError(f"coefficient index {index} out of range")
    se = float(fit.standard_errors[index])
    if se == 0.0:
        raise ZeroStandardError(f"standard error of coefficient {index} is zero")
    return (float(fit.coefficients[index]) - null_value) / se


# ------------------------------------------------------------------ #
# Batch helpers
# ------------------------------------------------------------------ #


class FixedDesignBatch:
    """Treatment t-statistics for many responses against one fixed design.

    Used by the schemes that rebuild the response (permute Y, reduced and
    full residuals) while leaving ``x1`` and ``x2`` untouched.
    """

    def __init__(self, data: Dataset):
        self._d = _factor(full_design(data))
        self.df = data.n - 3

    def stats(self, Y: np.ndarray):
        """Return ``(b2, se2, ok)`` for the rows of ``Y`` (shape ``(B, n)``).

        ``ok`` is False where the refit is exact and the standard error vanishes.
        """
        d = self._d
        qty = Y @ d.q                                 # (B, p)
        coef2 = (qty @ d.r_inv[X2]) / d.scale[X2]
        resid = Y - qty @ d.q.T
        rss = np.einsum("ij,ij->i", resid, resid)
        ok = rss > EXACT_FIT_TOL**2 * np.einsum("ij,ij->i", Y, Y)
        se2 = np.sqrt(rss / self.df) * d.se_factor[X2]
        return coef2, se2, ok


class TreatmentBatch:
    """Treatment t-statistics for many treatment vectors with ``y`` and ``x1`` fixed.

    Applies the Frisch-Waugh-Lovell identity: the coefficient on ``x2`` in the
    full model equals the slope of the ``[1, x1]``-residualised response on the
    ``[1, x1]``-residualised treatment, with the same residuals.
    """

    def __init__(self, data: Dataset):
        self._d = _factor(reduced_design(data))
        q = self._d.q
        self._yr = data.y - q @ (q.T @ data.y)
        self._y_norm2 = float(data.y @ data.y)
        self.df = data.n - 3

    def stats(self, X2: np.ndarray):
        """Return ``(b2, se2, ok)`` for the rows of ``X2`` (shape ``(B, n)``).

        ``ok`` is False where ``x2*`` is collinear with ``[1, x1]`` or the
        refit is exact.
        """
        q = self._d.q
        xr = X2 - (X2 @ q) @ q.T
        den = np.einsum("ij,ij->i", xr, xr)
        tot = np.einsum("ij,ij->i", X2, X2)
        ok = den > (RANK_TOL**2) * np.maximum(tot, 1e-300)
        safe = np.where(ok, den, 1.0)
        b2 = (xr @ self._yr) / safe
        resid = self._yr[None, :] - b2[:, None] * xr
        rss = np.einsum("ij,ij->i", resid, resid)
        ok &= rss > EXACT_FIT_TOL**2 * self._y_norm2
        se2 = np.sqrt(rss / self.df / safe)
        return b2, se2, ok
