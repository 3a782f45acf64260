"""Type I error simulation for clustered two-group designs.

Each simulated study has ``n_per_group`` subjects in each treatment arm.  A
``singleton_fraction`` of every arm are unrelated singletons; the rest sit in
two-member families, either inside one arm (homogeneous) or split across the
arms (heterogeneous).  A family random intercept ``u ~ N(0, sigma_u^2)`` is
shared by family members, so ``sigma_u`` controls the within-family
correlation ``sigma_u^2 / (sigma_u^2 + sigma_e^2)``.

Random streams: dataset ``i`` is generated from ``(seed, i, 0)`` and its
permutation draws come from the counter-based stream ``(seed, i, 1)``, so a
simulation's result never depends on scheduling.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

from . import _rng
from .cluster import ClusterStructure, Scenario, cluster_null_distribution
from .core_lm import Dataset, fit_full
from .errors import ConfigError, MlrPermError
from .inference import ols_p_value, permutation_p_value, proportion_ci


class Method(str, enum.Enum):
    OLS_T = "ols_t"
    NAIVE_PERMUTATION = "naive_permutation"
    CORRECT_PERMUTATION = "correct_permutation"

    @property
    def label(self) -> str:
        return {"ols_t": "lm", "naive_permutation": "naïve permutation",
                "correct_permutation": "correct permutation"}[self.value]


MATCHES = "matches desired alpha level"
ANTICONSERVATIVE = "anticonservative"
CONSERVATIVE = "conservative"

ERROR_DISTRIBUTIONS = ("normal", "exponential")


@dataclass(frozen=True)
class SimConfig:
    scenario: Scenario = Scenario.INDEPENDENT
    method: Method = Method.OLS_T
    n_per_group: int = 20
    singleton_fraction: float = 0.5
    S: int = 2000
    B: int = 2000
    alpha: float = 0.05
    beta0: float = 0.0
    beta1: float = 1.0
    beta2: float = 0.0
    sigma_u: float = 1.0
    sigma_e: float = 1.0
    seed: int = 0
    error_dist: str = "normal"
    label: str | None = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "scenario", Scenario(self.scenario))
            object.__setattr__(self, "method", Method(self.method))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.beta2 != 0:
            raise ConfigError("Type I error runs need beta2 = 0")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.S < 1 or self.B < 1:
            raise ConfigError("S and B must be at least 1")
        if self.n_per_group < 2:
            raise ConfigError("n_per_group must be at least 2")
        if not 0 <= self.singleton_fraction <= 1:
            raise ConfigError("singleton_fraction must lie in [0, 1]")
        if self.sigma_u < 0 or self.sigma_e <= 0:
            raise ConfigError("sigma_u must be >= 0 and sigma_e > 0")
        if self.seed < 0:
            raise ConfigError("seed must be unsigned")
        if self.error_dist not in ERROR_DISTRIBUTIONS:
            raise ConfigError(f"error_dist must be one of {ERROR_DISTRIBUTIONS}")
        n_paired = self.n_per_group - self.n_singletons
        if self.scenario is Scenario.HOMOGENEOUS and n_paired % 2:
            raise ConfigError("homogeneous families need an even number of paired subjects per group")

    @property
    def n_singletons(self) -> int:
        """Singletons per arm; the independent layout is all singletons."""
        if self.scenario is Scenario.INDEPENDENT:
            return self.n_per_group
        return int(round(self.n_per_group * self.singleton_fraction))

    @property
    def name(self) -> str:
        return self.label or f"{self.method.label} {self.scenario.value}"

    @classmethod
    def from_dict(cls, raw: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenario"] = self.scenario.value
        d["method"] = self.method.value
        return d


@dataclass(frozen=True)
class SimResult:
    rejection_rate: float
    ci: tuple[float, float]
    classification: str
    rejections: int = 0
    S: int = 0
    label: str = ""
    config: SimConfig | None = field(default=None, compare=False)
    error: str | None = None

    def __post_init__(self):
        if self.error is None:
            lo, hi = self.ci
            if not (0 <= self.rejection_rate <= 1 and lo <= self.rejection_rate <= hi):
                raise ValueError("rejection rate must lie in [0, 1] and inside its interval")


def layout(config: SimConfig) -> tuple[np.ndarray, list[str]]:
    """Treatment vector and family labels for one simulated study.

    Rows are ordered control arm first.  Family labels are zero-padded so
    that label order equals row-of-first-appearance order.
    """
    g = config.n_per_group
    k = config.n_singletons
    n_paired = g - k
    x2 = np.repeat([0.0, 1.0], g)
    fam: list[int] = [0] * (2 * g)
    next_id = 0
    for arm in (0, 1):
        for j in range(k):
            fam[arm * g + j] = next_id
            next_id += 1
    if config.scenario is Scenario.HOMOGENEOUS:
        for arm in (0, 1):
            for j in range(0, n_paired, 2):
                fam[arm * g + k + j] = fam[arm * g + k + j + 1] = next_id
                next_id += 1
    else:
        # heterogeneous: the j-th paired control shares a family with the j-th paired exposed
        for j in range(n_paired):
            fam[k + j] = fam[g + k + j] = next_id
            next_id += 1
    width = len(str(next_id))
    return x2, [f"f{i:0{width}d}" for i in fam]


def _errors(config: SimConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    if config.error_dist == "exponential":
        # mean-zero, variance sigma_e^2, strongly right-skewed
        return config.sigma_e * (rng.exponential(1.0, n) - 1.0)
    return rng.normal(0.0, config.sigma_e, n)


def generate_dataset(config: SimConfig, rng: np.random.Generator) -> Dataset:
    x2, fam = layout(config)
    n = x2.shape[0]
    codes = np.unique(fam, return_inverse=True)[1]
    u = rng.normal(0.0, config.sigma_u, codes.max() + 1)[codes]
    x1 = rng.standard_normal(n)
    e = _errors(config, rng, n)
    y = config.beta0 + config.beta1 * x1 + config.beta2 * x2 + u + e
    return Dataset(y=y, x1=x1, x2=x2, family_id=fam)


def simulate_p_value(config: SimConfig, index: int) -> float:
    """p-value of simulated study ``index``."""
    data = generate_dataset(config, _rng.path_rng(config.seed, index, 0))
    if config.method is Method.OLS_T:
        return ols_p_value(fit_full(data))
    if config.method is Method.NAIVE_PERMUTATION:
        structure = ClusterStructure.independent(data.x2)
    else:
        structure = ClusterStructure.from_labels(data.family_id, data.x2, config.scenario)
    null = cluster_null_distribution(
        data, structure, config.B, config.seed, key=_rng.stream_key(config.seed, index, 1)
    )
    return permutation_p_value(null.t_obs, null)


def classify(alpha: float, ci: tuple[float, float]) -> str:
    lo, hi = ci
    if alpha < lo:
        return ANTICONSERVATIVE
    if alpha > hi:
        return CONSERVATIVE
    return MATCHES


def run_scenario(config: SimConfig, *, n_jobs: int = 1) -> SimResult:
    """Estimate the rejection rate of ``config.method`` over ``config.S`` studies."""

    def one(i):
        try:
            return simulate_p_value(config, i)
        except MlrPermError as exc:
            raise type(exc)(f"simulation {i}: {exc}") from exc

    if n_jobs == 1:
        ps = [one(i) for i in range(config.S)]
    else:
        with ThreadPoolExecutor(max_workers=None if n_jobs < 0 else n_jobs) as pool:
            ps = list(pool.map(one, range(config.S)))
    rejections = int(np.count_nonzero(np.asarray(ps) <= config.alpha))
    ci = proportion_ci(rejections, config.S)
    return SimResult(
        rejection_rate=rejections / config.S,
        ci=ci,
        classification=classify(config.alpha, ci),
        rejections=rejections,
        S=config.S,
        label=config.name,
        config=config,
    )


def compare_methods(configs: Sequence[SimConfig], *, n_jobs: int = 1) -> list[SimResult]:
    """One result per config, in input order; a failing row carries its error."""
    out = []
    for cfg in configs:
        try:
            out.append(run_scenario(cfg, n_jobs=n_jobs))
        except (MlrPermError, ValueError, ArithmeticError) as exc:
            out.append(SimResult(float("nan"), (float("nan"), float("nan")), "error",
                                 S=cfg.S, label=cfg.name, config=cfg, error=str(exc)))
    return out


TABLE_ROWS: tuple[tuple[Method, Scenario], ...] = (
    (Method.OLS_T, Scenario.INDEPENDENT),
    (Method.CORRECT_PERMUTATION, Scenario.INDEPENDENT),
    (Method.OLS_T, Scenario.HOMOGENEOUS),
    (Method.NAIVE_PERMUTATION, Scenario.HOMOGENEOUS),
    (Method.CORRECT_PERMUTATION, Scenario.HOMOGENEOUS),
    (Method.OLS_T, Scenario.HETEROGENEOUS),
    (Method.NAIVE_PERMUTATION, Scenario.HETEROGENEOUS),
    (Method.CORRECT_PERMUTATION, Scenario.HETEROGENEOUS),
)

# classification reported for each of the rows above
EXPECTED = (MATCHES, MATCHES, ANTICONSERVATIVE, ANTICONSERVATIVE, MATCHES,
            CONSERVATIVE, CONSERVATIVE, MATCHES)


def table_configs(S: int = 2000, B: int = 2000, seed: int = 0, **overrides) -> list[SimConfig]:
    """The eight lm / permutation rows of the Type I error study.

    Every row shares ``seed`` so methods within a scenario see the same
    simulated datasets.
    """
    return [SimConfig(scenario=sc, method=m, S=S, B=B, seed=seed, **overrides) for m, sc in TABLE_ROWS]


def configs_from_json(raw) -> list[SimConfig]:
    """Accept a list of row dicts or ``{"defaults": {...}, "rows": [...]}``."""
    if isinstance(raw, dict):
        defaults = raw.get("defaults", {})
        rows = raw.get("rows", [])
        extra = sorted(set(raw) - {"defaults", "rows"})
        if extra:
            raise ConfigError(f"unknown top-level keys: {', '.join(extra)}")
    elif isinstance(raw, list):
        defaults, rows = {}, raw
    else:
        raise ConfigError("config must be a list of rows or an object with 'rows'")
    if not isinstance(defaults, dict) or not isinstance(rows, list):
        raise ConfigError("'defaults' must be an object and 'rows' a list")
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, dict):
            raise ConfigError(f"row {i}: expected an object")
        try:
            out.append(SimConfig.from_dict({**defaults, **row}))
        except (ConfigError, TypeError) as exc:
            raise ConfigError(f"row {i}: {exc}") from None
    return out


def result_rows(results: Iterable[SimResult]) -> list[dict]:
    rows = []
    for r in results:
        rows.append({
            "label": r.label,
            "rejection_rate": None if r.error else r.rejection_rate,
            "ci_low": None if r.error else r.ci[0],
            "ci_high": None if r.error else r.ci[1],
            "rejections": r.rejections,
            "S": r.S,
            "classification": r.classification,
            "error": r.error,
            "config": r.config.to_dict() if r.config else None,
        })
    return rows
