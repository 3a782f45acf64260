"""CSV ingestion and the multi-method analysis report."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, _rng
from .cluster import Scenario, cluster_null_distribution, infer_scenario, permutation_space_size, structure_for
from .core_lm import Dataset, fit_full
from .errors import (
    AllRowsDropped,
    ConfigError,
    MissingColumn,
    MlrPermError,
    NonNumeric,
    SpaceOverflow,
)
from .inference import ols_p_value, permutation_p_value
from .schemes import (
    COLLINEARITY_THRESHOLD,
    NullDistribution,
    Scheme,
    collinearity_diagnostic,
    null_distribution,
    observed_t,
)

MISSING = frozenset({"", "NA", "NaN", "nan", "null", "NULL"})

# "all" expands to this order
METHOD_ORDER = ("draper-stoneman", "manly", "freedman-lane", "terbraak", "ols")
METHOD_LABELS = {
    "draper-stoneman": Scheme.PERMUTE_X2.label,
    "manly": Scheme.PERMUTE_Y.label,
    "freedman-lane": Scheme.REDUCED_RESIDUALS.label,
    "terbraak": Scheme.FULL_RESIDUALS.label,
    "ols": "OLS",
}
CLUSTER_MODES = ("auto", "independent", "homogeneous", "heterogeneous")


@dataclass(frozen=True)
class ParsedInput:
    y: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    family_id: tuple[str, ...] | None
    n_read: int
    n_dropped: int
    treatment_mapping: dict[str, int] | None = None

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    def dataset(self) -> Dataset:
        return Dataset(y=self.y, x1=self.x1, x2=self.x2, family_id=self.family_id)


def _number(token: str, line: int, column: str) -> float:
    try:
        v = float(token)
    except ValueError:
        raise NonNumeric(line, column, token) from None
    if not math.isfinite(v):
        raise NonNumeric(line, column, token)
    return v


def parse_dataset(
    path: str | Path,
    response: str,
    covariate: str,
    treatment: str,
    family: str | None = None,
) -> ParsedInput:
    """Read the named columns of a comma-separated file with a header row.

    Rows missing any named column are dropped.  A treatment column holding
    exactly two non-numeric labels is coded 0/1 in order of first appearance.
    Row numbers in errors are file line numbers (the header is line 1).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumn(response) from None
        wanted = [response, covariate, treatment] + ([family] if family else [])
        for name in wanted:
            if name not in header:
                raise MissingColumn(name)
        idx = [header.index(name) for name in wanted]
        kept: list[tuple[int, list[str]]] = []
        n_read = 0
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            n_read += 1
            vals = [rec[i].strip() if i < len(rec) else "" for i in idx]
            if any(v in MISSING for v in vals):
                continue
            kept.append((line, vals))
    if not kept:
        raise AllRowsDropped(f"all {n_read} rows have a missing value in {', '.join(wanted)}")

    y = np.array([_number(v[0], ln, response) for ln, v in kept])
    x1 = np.array([_number(v[1], ln, covariate) for ln, v in kept])
    mapping = None
    raw_t = [(ln, v[2]) for ln, v in kept]
    try:
        x2 = np.array([_number(t, ln, treatment) for ln, t in raw_t])
    except NonNumeric as exc:
        labels = list(dict.fromkeys(t for _, t in raw_t))
        if len(labels) != 2:
            raise exc
        mapping = {labels[0]: 0, labels[1]: 1}
        x2 = np.array([float(mapping[t]) for _, t in raw_t])
    fam = tuple(v[3] for _, v in kept) if family else None
    return ParsedInput(y, x1, x2, fam, n_read, n_read - len(kept), mapping)


@dataclass(frozen=True)
class AnalysisConfig:
    input_path: str
    response: str
    covariate: str
    treatment: str
    family_column: str | None = None
    methods: tuple[str, ...] = ("all",)
    cluster_mode: str = "auto"
    B: int = 2000
    seed: int = 0
    output_format: str = "text"

    def __post_init__(self):
        if self.B < 1:
            raise ConfigError("B must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be unsigned")
        if self.cluster_mode not in CLUSTER_MODES:
            raise ConfigError(f"cluster mode must be one of {', '.join(CLUSTER_MODES)}")
        if self.output_format not in ("text", "json"):
            raise ConfigError("format must be text or json")
        if isinstance(self.methods, str):
            object.__setattr__(self, "methods", tuple(m.strip() for m in self.methods.split(",") if m.strip()))
        bad = [m for m in self.methods if m not in METHOD_ORDER and m != "all"]
        if bad or not self.methods:
            raise ConfigError(f"unknown method(s): {', '.join(bad) or '(none)'}; choose from "
                              f"{', '.join(METHOD_ORDER)}, all")

    def expanded_methods(self) -> list[str]:
        out: list[str] = []
        for m in self.methods:
            for name in (METHOD_ORDER if m == "all" else (m,)):
                if name not in out:
                    out.append(name)
        return out


@dataclass
class Report:
    rows: list[dict]
    diagnostics: dict
    provenance: dict
    nulls: dict[str, NullDistribution] = field(default_factory=dict, repr=False)

    def to_json(self) -> str:
        doc = {"provenance": self.provenance, "diagnostics": self.diagnostics, "rows": self.rows}
        return json.dumps(_clean(doc), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def to_text(self) -> str:
        return render_text(self)


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def _summary(v: np.ndarray) -> dict:
    return {"mean": float(v.mean()), "sd": float(v.std(ddof=1)), "min": float(v.min()), "max": float(v.max())}


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


NAIVE_WARNING = "ignores family clustering; naive permutation is not advised for dependent observations"
OLS_WARNING = "assumes independent observations; family clustering is ignored"


def run_analysis(config: AnalysisConfig, *, n_jobs: int = 1) -> Report:
    parsed = parse_dataset(config.input_path, config.response, config.covariate,
                           config.treatment, config.family_column)
    data = parsed.dataset()
    methods = config.expanded_methods()
    coll = collinearity_diagnostic(data)

    if config.cluster_mode == "auto":
        structure_err = None
        try:
            structure = structure_for(data)
        except MlrPermError as exc:
            structure, structure_err = None, str(exc)
    else:
        structure = structure_for(data, config.cluster_mode)
        structure_err = None
    scenario = structure.scenario if structure else infer_scenario(data.family_id, data.x2)
    clustered = scenario is not Scenario.INDEPENDENT

    cluster_diag = {"scenario": scenario.value}
    if structure is not None:
        cluster_diag["families"] = len(structure.families)
        cluster_diag["pairs"] = len(structure.pairs())
        try:
            cluster_diag["permutation_space"] = permutation_space_size(structure)
        except SpaceOverflow:
            cluster_diag["permutation_space"] = None
    if structure_err:
        cluster_diag["error"] = structure_err

    rows, nulls = [], {}
    for name in methods:
        seed = _rng.child_seed(config.seed, name)
        warnings: list[str] = []
        row = {"method": name, "label": METHOD_LABELS[name], "t_obs": None, "p_value": None,
               "B": 0 if name == "ols" else config.B, "seed": None if name == "ols" else seed,
               "warnings": warnings, "error": None}
        try:
            if name == "ols":
                fit = fit_full(data)
                row["t_obs"] = observed_t(data)
                row["p_value"] = ols_p_value(fit)
                if clustered:
                    warnings.append(OLS_WARNING)
            else:
                scheme = Scheme.from_name(name)
                if scheme is Scheme.PERMUTE_X2 and clustered:
                    if structure is None:
                        raise ConfigError(f"restricted permutation unavailable: {structure_err}")
                    null = cluster_null_distribution(data, structure, config.B, seed, n_jobs=n_jobs)
                else:
                    null = null_distribution(scheme, data, config.B, seed, n_jobs=n_jobs)
                    if clustered:
                        warnings.append(NAIVE_WARNING)
                if scheme is Scheme.REDUCED_RESIDUALS and coll.flagged:
                    warnings.append(f"|r(x1, x2)| = {abs(coll.r):.3f} exceeds {COLLINEARITY_THRESHOLD}; "
                                    "pseudo-responses inherit correlation with the treatment")
                if null.n_retried:
                    warnings.append(f"{null.n_retried} degenerate draw(s) redrawn")
                if null.exact:
                    row["B"] = null.b
                    warnings.append(f"exact: all {null.b} permutations enumerated")
                row["t_obs"] = null.t_obs
                row["p_value"] = permutation_p_value(null.t_obs, null)
                nulls[name] = null
        except (MlrPermError, ValueError, ArithmeticError) as exc:
            row["error"] = f"{name}: {exc}"
        rows.append(row)

    diagnostics = {
        "n": data.n,
        "n_read": parsed.n_read,
        "n_dropped": parsed.n_dropped,
        "collinearity": {"r": coll.r, "flagged": coll.flagged, "threshold": COLLINEARITY_THRESHOLD},
        "treatment_mapping": parsed.treatment_mapping,
        "cluster": cluster_diag,
        "columns": {
            config.response: _summary(data.y),
            config.covariate: _summary(data.x1),
            config.treatment: _summary(data.x2),
        },
    }
    provenance = {
        "version": __version__,
        "input": {"path": str(config.input_path), "sha256": _sha256(config.input_path)},
        "columns": {"response": config.response, "covariate": config.covariate,
                    "treatment": config.treatment, "family": config.family_column},
        "methods": methods,
        "cluster_mode": config.cluster_mode,
        "B": config.B,
        "seed": config.seed,
    }
    return Report(rows, diagnostics, provenance, nulls)


def _fmt(v, spec: str) -> str:
    return "-" if v is None else format(v, spec)


def _table(header: Sequence[str], body: Sequence[Sequence[str]], right: set[int]) -> list[str]:
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]

    def line(r):
        cells = [c.rjust(w) if i in right else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths))]
        return "  ".join(cells).rstrip()

    return [line(header), "  ".join("-" * w for w in widths), *(line(r) for r in body)]


def render_text(report: Report) -> str:
    d, p = report.diagnostics, report.provenance
    out = [
        f"input: {p['input']['path']}  (n = {d['n']}, dropped {d['n_dropped']})",
        f"model: {p['columns']['response']} ~ {p['columns']['covariate']} + {p['columns']['treatment']}",
        f"collinearity r(x1, x2) = {d['collinearity']['r']:.3f}"
        + ("  [flagged]" if d["collinearity"]["flagged"] else ""),
    ]
    if d["treatment_mapping"]:
        out.append("treatment coding: " + ", ".join(f"{k} = {v}" for k, v in d["treatment_mapping"].items()))
    out.append(f"clustering: {d['cluster']['scenario']}")
    out.append(f"permutations: {p['B']}  seed: {p['seed']}")
    out.append("")
    body = []
    for r in report.rows:
        body.append([r["label"], _fmt(r["p_value"], ".2f"), _fmt(r["t_obs"], ".3f"),
                     str(r["B"]) if r["B"] else "-"])
    out += _table(["permutation type", "p-value", "t_obs", "B"], body, {1, 2, 3})
    notes = [(r["label"], w) for r in report.rows for w in r["warnings"]]
    notes += [(r["label"], "error: " + r["error"]) for r in report.rows if r["error"]]
    if notes:
        out.append("")
        out += [f"note [{label}]: {w}" for label, w in notes]
    return "\n".join(out) + "\n"
