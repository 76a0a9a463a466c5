"""Command-line front end: estimate, approx, table, sample.

Exit codes: 0 success, 2 validation, 3 numerical failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

from .. import __version__
from ..analytic import (
    Centering,
    MPLaw,
    UnsupportedBetaError,
    b_rate,
    default_tw_table,
    ldp_rate,
    load_tw_table,
    log_tail_min,
    sharp_log_tail_max,
    tw_log_tail,
)
from ..ensemble import EnsembleError, EnsembleParams, Regime, Side, TailQuery, validate
from ..estimators import EstimationError, Method, ValidationError, run_estimate
from ..numerics import NumericalError
from ..sampler import EigenSolverError, RngStream, sample_spectra
from .config import ConfigError, RunConfig, TableSpec
from .display import format_log_prob

SCHEMA_VERSION = 1
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
SAMPLE_BLOCK = 1000

TABLE_COLUMNS = [
    "n", "p", "x", "Est", "Std", "Std/Est", "TA", "TW-classic", "TW-refined", "DMC",
    "log_Est", "log_Std", "log_TA", "log_TW-classic", "log_TW-refined", "log_DMC",
    "seed", "error",
]


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _write(out_path: str | None, text: str) -> None:
    if out_path is None or out_path == "-":
        sys.stdout.write(text)
        return
    with open(out_path, "w", newline="") as fh:
        fh.write(text)


def _num(v):
    return v if v is None or math.isfinite(v) else None


def _tw_table(path):
    return default_tw_table() if path is None else load_tw_table(path)


def _side_threshold(args) -> tuple[str, float]:
    if args.x is not None and args.y is not None:
        raise ConfigError("give only one of --x (max side) and --y (min side)")
    if args.x is not None:
        side, t = "max", args.x
    elif args.y is not None:
        side, t = "min", args.y
    else:
        raise ConfigError("a threshold is required: --x for the max side or --y for the min side")
    if args.side is not None and args.side != side:
        raise ConfigError(f"--side {args.side} conflicts with --{'x' if side == 'max' else 'y'}")
    return side, t


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def config_from_args(args) -> RunConfig:
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = RunConfig.from_json(fh.read()).to_dict()
        # reps default depends on the method, so let it re-resolve if method changes
        if args.method is not None and args.reps is None and args.method != base["method"]:
            base["reps"] = None
    overrides = {
        "n": args.n, "p": args.p, "beta": args.beta, "method": args.method, "reps": args.reps,
        "seed": args.seed, "rate_j": args.rate_j, "format": args.format, "tw_table": args.tw_table,
        "workers": args.workers,
    }
    if args.x is not None or args.y is not None:
        overrides["side"], overrides["threshold"] = _side_threshold(args)
    elif args.side is not None:
        overrides["side"] = args.side
    base.update({k: v for k, v in overrides.items() if v is not None})
    missing = [k for k in ("n", "p", "beta", "side", "threshold") if k not in base]
    if missing:
        raise ConfigError(f"missing required settings: {', '.join(missing)}")
    return RunConfig.from_dict(base)


def estimate_document(cfg: RunConfig) -> dict:
    report = run_estimate(
        cfg.params, cfg.query, cfg.estimator, cfg.reps, cfg.seed, rate_j=cfg.rate_j, workers=cfg.workers
    )
    result = report.to_dict()
    log_se = report.log_std - 0.5 * math.log(report.n_reps)
    result.update(
        {
            "estimate": format_log_prob(report.log_estimate),
            "std": format_log_prob(report.log_std),
            "std_error": format_log_prob(log_se),
            "log_std_error": _num(log_se),
        }
    )
    return {
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "tw_table_sha256": _tw_table(cfg.tw_table).sha256,
        "config": cfg.to_dict(),
        "result": result,
    }


ESTIMATE_CSV_COLUMNS = [
    "method", "n", "p", "beta", "side", "threshold", "n_reps", "seed", "rate",
    "estimate", "std", "std_over_est", "log_estimate", "log_std", "log_second_moment",
    "efficiency_ratio", "max_weight_share", "flags",
]


def render_estimate(doc: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    r = doc["result"]
    row = [r[c] if c != "flags" else ";".join(r["flags"]) for c in ESTIMATE_CSV_COLUMNS]
    row = ["" if v is None else v for v in row]
    return _csv_text(ESTIMATE_CSV_COLUMNS, [row])


def cmd_estimate(args) -> int:
    cfg = config_from_args(args)
    _write(args.out, render_estimate(estimate_document(cfg), cfg.format))
    return EXIT_OK


# ---------------------------------------------------------------------------
# approx
# ---------------------------------------------------------------------------

APPROX_KINDS = ("theorem1", "corollary1", "theorem5", "tw-classic", "tw-refined", "ldp")


def approx_document(params: EnsembleParams, side: str, t: float, which: str, tw_path=None) -> dict:
    query = TailQuery(Side(side), t)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "which": which,
        "n": params.n,
        "p": params.p,
        "beta": params.beta,
        "side": side,
        "threshold": t,
    }
    if which == "theorem5":
        if query.side is not Side.MIN:
            raise ConfigError("theorem5 approximates the min side; use --y")
        _raise_violations(params, query, Regime.P_OVER_N_INFTY)
        log_p = log_tail_min(params, t)
    else:
        if query.side is not Side.MAX:
            raise ConfigError(f"{which} approximates the max side; use --x")
        if which == "ldp":
            law = MPLaw.for_params(params)
            if t < law.x_star_upper:
                raise ValidationError(validate(params, query, Regime.GAMMA_FINITE))
            rate = ldp_rate(law, t)
            doc["rate"] = rate
            doc["x_star_upper"] = law.x_star_upper
            log_p = -params.n * rate
        elif which in ("tw-classic", "tw-refined"):
            table = _tw_table(tw_path)
            centering = Centering.CLASSIC if which == "tw-classic" else Centering.REFINED
            log_p = tw_log_tail(params, t, centering, table)
            doc["tw_table_sha256"] = table.sha256
        else:
            _raise_violations(params, query, Regime.P_OVER_N_INFTY)
            log_p = sharp_log_tail_max(params, t) if which == "theorem1" else b_rate(params, t)
    doc["log_probability"] = _num(log_p)
    doc["probability"] = format_log_prob(log_p)
    return doc


def _raise_violations(params, query, regime):
    v = validate(params, query, regime)
    if v:
        raise ValidationError(v)


def cmd_approx(args) -> int:
    side, t = _side_threshold(args)
    params = EnsembleParams(args.n, args.p, args.beta)
    doc = approx_document(params, side, t, args.which, args.tw_table)
    if args.format == "json":
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        cols = ["which", "n", "p", "beta", "side", "threshold", "probability", "log_probability"]
        text = _csv_text(cols, [["" if doc[c] is None else doc[c] for c in cols]])
    _write(args.out, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# table
# ---------------------------------------------------------------------------


def table_rows(spec: TableSpec, seed: int = 0, workers: int = 1, reps=None, dmc_reps=None, tw_path=None):
    """One list per spec row in TABLE_COLUMNS order; failures go to the error cell."""
    table = None
    out = []
    for row in spec.rows:
        cells = {c: "" for c in TABLE_COLUMNS}
        cells.update(n=row.n, p=row.p, x=row.x, seed=seed)
        errors = []
        bad = spec.row_violation(row)
        if bad:
            cells["error"] = bad
            out.append([cells[c] for c in TABLE_COLUMNS])
            continue
        params = EnsembleParams(row.n, row.p, spec.beta)
        query = TailQuery(Side.MAX, row.x)

        def put(col, log_v):
            cells[col] = format_log_prob(log_v)
            cells["log_" + col] = repr(float(log_v))

        if "is" in row.methods:
            try:
                rep = run_estimate(params, query, Method.IS_MAX, reps or row.reps, seed, workers=workers)
                put("Est", rep.log_estimate)
                put("Std", rep.log_std)
                cells["Std/Est"] = f"{rep.std_over_est:.2f}"
            except Exception as exc:  # noqa: BLE001 - recorded per row
                errors.append(f"is: {exc}")
        if "ta" in row.methods:
            try:
                put("TA", sharp_log_tail_max(params, row.x))
            except Exception as exc:  # noqa: BLE001
                errors.append(f"ta: {exc}")
        if "tw" in row.methods:
            try:
                if table is None:
                    table = _tw_table(tw_path)
                put("TW-classic", tw_log_tail(params, row.x, Centering.CLASSIC, table))
                put("TW-refined", tw_log_tail(params, row.x, Centering.REFINED, table))
            except Exception as exc:  # noqa: BLE001
                errors.append(f"tw: {exc}")
        if "dmc" in row.methods:
            try:
                rep = run_estimate(params, query, Method.DMC, dmc_reps or row.dmc_reps, seed, workers=workers)
                put("DMC", rep.log_estimate)
            except Exception as exc:  # noqa: BLE001
                errors.append(f"dmc: {exc}")
        cells["error"] = "; ".join(errors)
        out.append([cells[c] for c in TABLE_COLUMNS])
    return out


def cmd_table(args) -> int:
    spec = TableSpec.load(args.spec)
    if args.no_dmc:
        spec = TableSpec(
            spec.name,
            spec.beta,
            tuple(type(r)(r.n, r.p, r.x, r.reps, tuple(m for m in r.methods if m != "dmc"), r.dmc_reps) for r in spec.rows),
        )
    rows = table_rows(spec, args.seed, args.workers, args.reps, args.dmc_reps, args.tw_table)
    _write(args.out, _csv_text(TABLE_COLUMNS, rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------


def sample_lines(params: EnsembleParams, count: int, seed: int):
    """Yield ``count`` spectra as comma-separated full-precision lines.

    Spectra come in blocks of SAMPLE_BLOCK drawn from substream b of the seed,
    so the first k lines do not depend on ``count``.
    """
    if count < 0:
        raise ConfigError(f"count must be nonnegative, got {count}")
    done = 0
    b = 0
    while done < count:
        rng = RngStream(seed).substream(b).generator
        block = sample_spectra(params.n, params.p, params.beta, rng, SAMPLE_BLOCK, "all")
        for row in block[: count - done]:
            yield ",".join(repr(float(v)) for v in row)
        done += min(SAMPLE_BLOCK, count - done)
        b += 1


def cmd_sample(args) -> int:
    params = EnsembleParams(args.n, args.p, args.beta)
    lines = sample_lines(params, args.count, args.seed)
    if args.out is None or args.out == "-":
        for line in lines:
            sys.stdout.write(line + "\n")
    else:
        with open(args.out, "w") as fh:
            for line in lines:
                fh.write(line + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lagtail",
        description="Tail probabilities of extreme beta-Laguerre eigenvalues.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def ensemble_args(p, required=True):
        p.add_argument("--n", type=int, required=required, help="number of eigenvalues")
        p.add_argument("--p", type=int, required=required, help="dimension (p >= n)")
        p.add_argument("--beta", type=float, required=required, help="beta > 0")

    def threshold_args(p):
        p.add_argument("--x", type=float, help="max side: P(lambda_1 > p x)")
        p.add_argument("--y", type=float, help="min side: P(lambda_n < p y)")
        p.add_argument("--side", choices=["max", "min"])

    est = sub.add_parser("estimate", help="run a Monte Carlo estimator")
    ensemble_args(est, required=False)
    threshold_args(est)
    est.add_argument("--method", choices=["dmc", "is", "is-gamma"])
    est.add_argument("--rate-j", type=float, dest="rate_j", help="tilting rate for is-gamma")
    est.add_argument("--reps", type=int, help="replicates (default 1e4 for IS, 1e6 for DMC)")
    est.add_argument("--seed", type=int)
    est.add_argument("--workers", type=int)
    est.add_argument("--format", choices=["json", "csv"])
    est.add_argument("--tw-table", dest="tw_table", help="TW CDF table to record in provenance")
    est.add_argument("--config", help="JSON RunConfig; flags override its fields")
    est.add_argument("--out", help="output path (default stdout)")
    est.set_defaults(func=cmd_estimate)

    apx = sub.add_parser("approx", help="evaluate a closed-form approximation")
    ensemble_args(apx)
    threshold_args(apx)
    apx.add_argument("--which", choices=APPROX_KINDS, required=True)
    apx.add_argument("--format", choices=["json", "csv"], default="json")
    apx.add_argument("--tw-table", dest="tw_table")
    apx.add_argument("--out")
    apx.set_defaults(func=cmd_approx)

    tab = sub.add_parser("table", help="reproduce a table of estimates and approximations")
    tab.add_argument("--spec", default="table1", help="bundled name (table1, table2) or JSON path")
    tab.add_argument("--reps", type=int, help="override per-row IS replicates")
    tab.add_argument("--dmc-reps", type=int, dest="dmc_reps", help="override per-row DMC replicates")
    tab.add_argument("--no-dmc", action="store_true", dest="no_dmc")
    tab.add_argument("--seed", type=int, default=0)
    tab.add_argument("--workers", type=int, default=1)
    tab.add_argument("--format", choices=["csv"], default="csv")
    tab.add_argument("--tw-table", dest="tw_table")
    tab.add_argument("--out")
    tab.set_defaults(func=cmd_table)

    smp = sub.add_parser("sample", help="dump sampled spectra, one per line")
    ensemble_args(smp)
    smp.add_argument("--count", type=int, default=1)
    smp.add_argument("--seed", type=int, default=0)
    smp.add_argument("--out")
    smp.set_defaults(func=cmd_sample)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ConfigError, EnsembleError, UnsupportedBetaError) as exc:
        print(f"lagtail: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, EigenSolverError, EstimationError) as exc:
        print(f"lagtail: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"lagtail: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"lagtail: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
