"""Command-line entry point: ``effnoise {estimate,calibrate,test,test-partial,simulate}``.

Exit status is 0 on success, 1 on usage or input errors and 2 on numeric
failures (non-convergence, rank-deficient unpenalized block).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data_model import DataError, Dataset, RngSpec, load_csv, standardize
from .effective_noise import estimate_lambda_hat
from .inference import RankDeficiencyError, calibrate, global_test, partial_test
from .lasso import SOLVER_SETTINGS, ConvergenceError
from .reporting import emit_histogram, emit_results, histogram_table, size_power_table, write_rows_csv
from .simulation import LOSSES, ScenarioConfig, run_calibration_experiment, run_test_experiment

EXIT_USAGE = 1
EXIT_NUMERIC = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _level(s: str) -> float:
    v = float(s)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {s}")
    return v


def _nonneg(s: str) -> float:
    v = float(s)
    if not v >= 0.0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="effnoise", allow_abbrev=False,
                     description="Tuning-parameter calibration and tests for the lasso.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_cmd(name, help_):
        p = sub.add_parser(name, help=help_, allow_abbrev=False)
        p.add_argument("--data", required=True, help="CSV file with the response and predictors")
        p.add_argument("--response", default="1",
                       help="response column: header name or 1-based column index (default 1)")
        p.add_argument("--no-header", action="store_true", help="the CSV has no header line")
        p.add_argument("--standardize", action="store_true",
                       help="center and scale predictors before fitting")
        p.add_argument("--alpha", type=_level, default=0.05)
        p.add_argument("--L", type=_positive_int, default=100, help="multiplier draws")
        p.add_argument("--M", type=_positive_int, default=100, help="grid size")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", help="output directory")
        return p

    data_cmd("estimate", "estimate lambda_hat_alpha (writes estimate.json)")
    p = data_cmd("calibrate", "fit the lasso at (1 + delta) lambda_hat (writes calibration.json)")
    p.add_argument("--delta", type=_nonneg, default=0.0)
    p.add_argument("--phi", type=float, default=None,
                   help="l_inf restricted-eigenvalue constant; enables the sup-norm bound")
    data_cmd("test", "global test of beta = 0 (writes test.json)")
    p = data_cmd("test-partial", "test beta_B = 0 with X_A unpenalized (writes test.json)")
    p.add_argument("--set-a", required=True,
                   help="comma-separated predictor names or 1-based predictor indices forming A")

    p = sub.add_parser("simulate", help="run a simulation scenario", allow_abbrev=False)
    p.add_argument("--config", required=True, help="scenario JSON file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    p.add_argument("--only", choices=("calibration", "tests"), default=None,
                   help="run a single experiment instead of both")
    return parser


def _load(args) -> Dataset:
    resp = args.response
    if resp.isdigit():
        idx = int(resp)
        if idx < 1:
            raise UsageError("--response index is 1-based")
        resp = idx - 1
    elif args.no_header:
        raise UsageError("--response must be an index when --no-header is given")
    data = load_csv(args.data, has_header=not args.no_header, response_column=resp)
    return standardize(data) if args.standardize else data


def parse_set_a(spec: str, names) -> list[int]:
    out = []
    for tok in (t.strip() for t in spec.split(",")):
        if not tok:
            continue
        if tok in names:
            out.append(names.index(tok))
        elif tok.isdigit() and 1 <= int(tok) <= len(names):
            out.append(int(tok) - 1)
        else:
            raise UsageError(f"--set-a entry {tok!r} is neither a predictor name nor an index in 1..{len(names)}")
    return out


def _outdir(path: str) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _settings(args) -> dict:
    return {"alpha": args.alpha, "L": args.L, "M": args.M, "seed": args.seed,
            "standardize": args.standardize}


def cmd_estimate(args) -> int:
    data = _load(args)
    est = estimate_lambda_hat(data, args.alpha, args.L, args.M, RngSpec(args.seed))
    body = {"command": "estimate", "data": str(args.data), "n": data.n, "p": data.p, **est.to_dict(),
            "solver": SOLVER_SETTINGS}
    emit_results(body, _outdir(args.out) / "estimate.json")
    print(f"lambda_hat = {est.lambda_hat:.6g} (lambda_bar = {est.lambda_bar:.6g}, m_hat = {est.m_hat}"
          f"{', fallback' if est.fallback else ''})")
    return 0


def cmd_calibrate(args) -> int:
    data = _load(args)
    rep = calibrate(data, args.alpha, args.delta, args.phi, args.L, args.M, RngSpec(args.seed))
    body = {"command": "calibrate", "data": str(args.data), "settings": _settings(args),
            **rep.to_dict(data.names), "solver": SOLVER_SETTINGS}
    emit_results(body, _outdir(args.out) / "calibration.json")
    print(f"lambda = {rep.lam:.6g}, {np.count_nonzero(rep.beta_hat)} nonzero coefficients")
    return 0


def _emit_test(args, data, res) -> int:
    body = {"command": args.command, "data": str(args.data), "columns": list(data.names), **res.to_dict(),
            "solver": SOLVER_SETTINGS}
    emit_results(body, _outdir(args.out) / "test.json")
    verdict = "reject" if res.reject else "do not reject"
    print(f"T = {res.T:.6g}, critical value = {res.lambda_hat_alpha:.6g}: {verdict} at alpha = {args.alpha}")
    return 0


def cmd_test(args) -> int:
    data = _load(args)
    return _emit_test(args, data, global_test(data, args.alpha, args.L, args.M, RngSpec(args.seed)))


def cmd_test_partial(args) -> int:
    data = _load(args)
    A = parse_set_a(args.set_a, list(data.names))
    res = partial_test(data, A, args.alpha, args.L, args.M, RngSpec(args.seed))
    return _emit_test(args, data, res)


def cmd_simulate(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError("scenario config must be a JSON object")
    experiments = raw.pop("experiments", ["calibration", "tests"])
    if args.only:
        experiments = [args.only]
    try:
        config = ScenarioConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None
    out = _outdir(args.out)
    summary: dict = {"command": "simulate", "config": config.to_dict(), "solver": SOLVER_SETTINGS}

    if "calibration" in experiments:
        rep = run_calibration_experiment(config, args.threads)
        write_rows_csv(rep.records, out / "losses.csv",
                       ["replicate", "method", "lambda", *LOSSES])
        summary["calibration"] = rep.summary()
        if rep.n_included:
            lam_bar = float(np.mean(rep.lambda_bar))
            emit_histogram(
                histogram_table({"lambda_hat": rep.lambda_hat}, config.hist_bins, (0.0, lam_bar),
                                {"lambda_star": rep.lambda_star}, "estimates of the tuning parameter"),
                out / "hist_lambda.svg",
            )
            for loss in LOSSES:
                series = {m: rep.values(m, loss) for m in rep.methods}
                emit_histogram(histogram_table(series, config.hist_bins, title=f"{loss} loss"),
                               out / f"hist_{loss}.svg")

    if "tests" in experiments:
        tp = run_test_experiment(config, args.threads)
        rows = tp.rows()
        write_rows_csv(rows, out / "tests.csv")
        (out / "size_power.txt").write_text(size_power_table(rows))
        summary["tests"] = {
            "lambda_star": {f"{a:g}": v for a, v in tp.lambda_star.items()},
            "rates": rows,
        }

    emit_results(summary, out / "summary.json")
    print(f"wrote results to {out}")
    return 0


COMMANDS = {
    "estimate": cmd_estimate,
    "calibrate": cmd_calibrate,
    "test": cmd_test,
    "test-partial": cmd_test_partial,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"effnoise: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, RankDeficiencyError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"effnoise: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"effnoise: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
