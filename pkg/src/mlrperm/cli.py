"""``mlrperm`` command line: analyze, simulate, verify."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .analysis import CLUSTER_MODES, AnalysisConfig, _clean, run_analysis
from .errors import ConfigError, MlrPermError
from .simulation import compare_methods, configs_from_json, result_rows
from .theory import cdf_agreement, verification_report


def _dump(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _table(header, body, right=()):
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.rjust(w) if i in right else c.ljust(w)  # noqa: E731
                              for i, (c, w) in enumerate(zip(r, widths))).rstrip()
    return "\n".join([fmt(header), "  ".join("-" * w for w in widths), *map(fmt, body)]) + "\n"


def cmd_analyze(args) -> int:
    cfg = AnalysisConfig(
        input_path=args.input, response=args.response, covariate=args.covariate,
        treatment=args.treatment, family_column=args.family, methods=args.method,
        cluster_mode=args.cluster_mode, B=args.permutations, seed=args.seed,
        output_format=args.format,
    )
    report = run_analysis(cfg, n_jobs=args.jobs)
    sys.stdout.write(report.to_json() if args.format == "json" else report.to_text())
    if args.figures:
        from .analysis import METHOD_LABELS
        from .plotting import null_histograms

        null_histograms(report.nulls, METHOD_LABELS, args.figures)
    return 0


def load_sim_config(path: str):
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text) if text.strip() else []
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if exc.lineno <= len(text.splitlines()) else ""
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line}") from None
    return configs_from_json(raw)


def cmd_simulate(args) -> int:
    configs = load_sim_config(args.config)
    rows = result_rows(compare_methods(configs, n_jobs=args.jobs))
    if args.format == "json":
        sys.stdout.write(_dump({"rows": rows}))
    else:
        body = [[r["label"],
                 "-" if r["error"] else f"{r['rejection_rate']:.3f} ({r['ci_low']:.3f}-{r['ci_high']:.3f})",
                 r["classification"] if not r["error"] else f"error: {r['error']}"] for r in rows]
        sys.stdout.write(_table(["Model/Scenario", "Type I error rate (95% CI)", "Results"], body))
    if args.figures and rows:
        from .plotting import rejection_rates

        alpha = configs[0].alpha
        rejection_rates(rows, alpha, Path(args.figures) / "type1_error.png")
    return 0


def cmd_verify(args) -> int:
    rows = verification_report(args.seed, args.tolerance_rho, args.tolerance_var)
    ks = cdf_agreement(seed=args.seed)
    rows.append(type(rows[0])("KS distance, permutation t* vs sampling t", ks, 0.0, 0.05, ks < 0.05))
    if args.format == "json":
        sys.stdout.write(_dump({"seed": args.seed, "checks": [r._asdict() for r in rows]}))
    else:
        body = [[r.check, f"{r.value:.4f}", f"{r.target:.4f}", f"{r.tolerance:g}", "pass" if r.passed else "FAIL"]
                for r in rows]
        sys.stdout.write(_table(["check", "value", "target", "tolerance", "status"], body, right={1, 2, 3}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mlrperm", description="Permutation tests for a treatment effect in "
                                "two-predictor linear regression.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="test the treatment coefficient on a CSV file")
    a.add_argument("--input", required=True)
    a.add_argument("--response", required=True)
    a.add_argument("--covariate", required=True)
    a.add_argument("--treatment", required=True)
    a.add_argument("--family", default=None, help="column of family labels for clustered data")
    a.add_argument("--method", default="all",
                   help="comma list of draper-stoneman, manly, freedman-lane, terbraak, ols, all")
    a.add_argument("--permutations", type=int, default=2000)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--cluster-mode", choices=CLUSTER_MODES, default="auto")
    a.add_argument("--format", choices=("text", "json"), default="text")
    a.add_argument("--figures", metavar="DIR", help="also write null-distribution histograms to DIR")
    a.add_argument("--jobs", type=int, default=1, help="worker threads (results do not depend on it)")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="estimate Type I error rates from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.add_argument("--figures", metavar="DIR", help="also write a rejection-rate chart to DIR")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="check the correlation formula and resampling moment identities")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--tolerance-rho", type=float, default=0.05)
    v.add_argument("--tolerance-var", type=float, default=0.05)
    v.add_argument("--format", choices=("text", "json"), default="text")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MlrPermError, OSError, ValueError) as exc:
        print(f"mlrperm {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
