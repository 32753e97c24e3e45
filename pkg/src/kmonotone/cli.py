"""``kmono`` command-line interface.

Exit codes: 0 accept / ok, 1 usage error, 2 data error, 3 rejection,
4 inapplicable order, 5 no k-monotone order accepted.
"""

import argparse
import json
import math
import sys

import numpy as np

from . import schemas
from .degree import estimate_k
from .errors import (CalibrationError, DegenerateSupportError, EmptySampleError,
                     InapplicableOrderError, InvalidArgumentError, KMonotoneError, SolverError)
from .io import DataError, read_counts
from .monotest import PROCEDURES, FreqSample, TestConfig, run_test
from .richness import AbundanceSample, chao1, estimate, richness_auto
from .shape import lambda_threshold
from . import simulation

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_REJECT = 3
EXIT_INAPPLICABLE = 4
EXIT_NO_ORDER = 5

DEFAULT_MAX_SUPPORT = 20


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _alpha(text):
    v = _float(text)
    if not 0 < v < 0.5:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 0.5), got {v}")
    return v


def _level(text):
    v = _float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"level must lie in (0, 1), got {v}")
    return v


def _float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"{text!r} is not finite")
    return v


def _positive(minimum=1):
    def conv(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
        if v < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}, got {v}")
        return v
    return conv


def _k_choice(text):
    if text in ("auto", "all"):
        return text
    return _positive(1)(text)


def _seed(text):
    return _positive(0)(text)


def build_parser():
    p = _Parser(prog="kmono", description="Tests of k-monotonicity and k-monotone richness estimation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, support=True):
        sp.add_argument("--seed", type=_seed, default=None, help="root seed (results are reproducible given it)")
        sp.add_argument("--format", choices=("json", "text"), default="json")
        if support:
            sp.add_argument("--max-support", type=_positive(1), default=DEFAULT_MAX_SUPPORT,
                            help="number of tested constraints is min(this, tau_hat) (default 20)")

    def testing(sp):
        sp.add_argument("--alpha", type=_alpha, default=0.05)
        sp.add_argument("--proc", choices=PROCEDURES, default="p1")
        sp.add_argument("--mc-reps", type=_positive(100), default=10_000)
        sp.add_argument("--boot-reps", type=_positive(1), default=1000)
        sp.add_argument("--boot-reps2", type=_positive(1), default=1000)

    t = sub.add_parser("test", help="test H^k: the distribution is k-monotone")
    t.add_argument("file")
    t.add_argument("--k", type=_positive(1), required=True)
    testing(t)
    common(t)

    d = sub.add_parser("degree", help="estimate the degree of monotonicity")
    d.add_argument("file")
    d.add_argument("--kmax", type=_positive(1), default=6)
    testing(d)
    common(d)

    r = sub.add_parser("richness", help="estimate the number of classes from abundances")
    r.add_argument("file")
    r.add_argument("--k", type=_k_choice, default="auto", help="auto, all or an integer order")
    r.add_argument("--estimator", choices=("empirical", "ls"), default="empirical")
    r.add_argument("--kmax", type=_positive(1), default=6)
    r.add_argument("--ci-level", type=_level, default=0.95)
    testing(r)
    common(r)

    s = sub.add_parser("simulate", help="run a simulation study from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=_positive(1), default=None, help="overrides the config value")
    common(s, support=False)

    lt = sub.add_parser("lambda-table", help="largest lambda for which Poisson(lambda) is h-monotone")
    lt.add_argument("--hmax", type=_positive(1), default=10)
    lt.add_argument("--tol", type=_float, default=1e-9)
    common(lt, support=False)
    return p


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"{type(o).__name__} is not JSON serialisable")


def _clean(obj):
    """Round-trip through JSON so numpy scalars become plain values."""
    return json.loads(json.dumps(obj, default=_json_default))


def _emit(out, payload, fmt, text):
    if fmt == "json":
        out.write(json.dumps(payload, indent=2, default=_json_default) + "\n")
    else:
        out.write(text + "\n")


def _kv(pairs):
    width = max(len(k) for k, _ in pairs)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in pairs)


def _cfg(args, k):
    return TestConfig(k=k, alpha=args.alpha, procedure=args.proc, mc_reps=args.mc_reps,
                      max_support=args.max_support, seed=args.seed, boot_reps=args.boot_reps,
                      boot_reps2=args.boot_reps2)


def _report_text(rep):
    lines = [_kv([("procedure", rep["procedure"]), ("k", rep["k"]), ("alpha", rep["alpha"]),
                  ("d", rep["d"]), ("effective_tau", rep["effective_tau"]),
                  ("statistic", f"{rep['statistic']:.6g}"), ("threshold", f"{rep['threshold']:.6g}"),
                  ("reject", rep["reject"])])]
    lines.append(f"{'j':>4} {'nabla':>12} {'zeta':>12} {'contribution':>14}")
    for row in rep["per_index"]:
        c = "" if row["contribution"] is None else f"{row['contribution']:.6g}"
        lines.append(f"{row['j']:>4} {row['nabla']:>12.6g} {row['zeta']:>12.6g} {c:>14}")
    return "\n".join(lines)


def cmd_test(args, out):
    s = FreqSample.from_mapping(read_counts(args.file))
    rep = _clean(run_test(s, _cfg(args, args.k)).to_dict())
    rep["seed"] = args.seed
    _emit(out, rep, args.format, _report_text(rep))
    return EXIT_REJECT if rep["reject"] else EXIT_OK


def cmd_degree(args, out):
    s = FreqSample.from_mapping(read_counts(args.file))
    rep = estimate_k(s, k_max=args.kmax, alpha=args.alpha, procedure=args.proc, cfg=_cfg(args, 1))
    payload = _clean(rep.to_dict())
    payload["seed"] = args.seed
    rows = [f"k_hat = {rep.k_hat} (k_max = {rep.k_max}, {rep.procedure}, alpha = {rep.alpha})",
            f"{'k':>3} {'statistic':>12} {'threshold':>12}  reject"]
    rows += [f"{r.k:>3} {r.statistic:>12.6g} {r.threshold:>12.6g}  {r.reject}" for r in rep.per_level]
    _emit(out, payload, args.format, "\n".join(rows))
    return EXIT_OK


def _estimate_row(a, k, args):
    try:
        est = estimate(a, k, args.estimator)
    except InapplicableOrderError as exc:
        return {"k": k, "N_hat": None, "se": None, "ci": None, "error": str(exc)}
    d = est.to_dict(args.ci_level)
    return {"k": k, "N_hat": d["N_hat"], "se": d["se"], "ci": d["ci"]}


def cmd_richness(args, out):
    a = AbundanceSample.from_mapping(read_counts(args.file, min_value=1))
    base = {"D": a.D, "n": a.n, "chao1": chao1(a)}
    if args.k == "all":
        rows = [_estimate_row(a, k, args) for k in range(1, args.kmax + 1)]
        payload = _clean({**base, "method": "empirical" if args.estimator == "empirical" else "least_squares",
                          "per_k": rows, "ci_level": args.ci_level})
        lines = [f"D = {a.D}, n = {a.n}", f"{'k':>3} {'N_hat':>12} {'se':>10}"]
        for row in rows:
            if row["N_hat"] is None:
                lines.append(f"{row['k']:>3} {'n/a':>12} {'':>10}  ({row['error']})")
            else:
                se = "" if row["se"] is None else f"{row['se']:.4g}"
                lines.append(f"{row['k']:>3} {row['N_hat']:>12.6g} {se:>10}")
        _emit(out, payload, args.format, "\n".join(lines))
        return EXIT_OK

    degree = None
    if args.k == "auto":
        degree, est = richness_auto(a, k_max=args.kmax, alpha=args.alpha, procedure=args.proc,
                                    method=args.estimator, cfg=_cfg(args, 1))
        if est is None:
            payload = _clean({**base, "N_hat": None, "k_used": None, "degree": {**degree.to_dict(), "seed": args.seed},
                              "error": "no k-monotone order accepted (k_hat = 0)"})
            _emit(out, payload, args.format, "no k-monotone order accepted (k_hat = 0)")
            return EXIT_NO_ORDER
    else:
        est = estimate(a, args.k, args.estimator)
    payload = _clean({**base, **est.to_dict(args.ci_level)})
    if degree is not None:
        payload["degree"] = _clean({**degree.to_dict(), "seed": args.seed})
    pairs = [("N_hat", f"{est.n_hat:.6g}"), ("se", "" if est.se is None else f"{est.se:.4g}"),
             ("ci", "" if payload.get("ci") is None else "[{:.6g}, {:.6g}]".format(*payload["ci"])),
             ("k_used", est.k_used), ("D", a.D), ("method", est.method),
             ("chao1", "" if base["chao1"] is None else f"{base['chao1']:.6g}")]
    _emit(out, payload, args.format, _kv(pairs))
    return EXIT_OK


def scenario_from_config(cfg, seed=None, workers=None):
    sc = cfg["scenario"]
    size = cfg.get("d", cfg.get("N"))
    extra = {}
    for key, attr in (("procedures", "procedures"), ("ks", "ks"), ("kmax", "k_max"), ("alpha", "alpha"),
                      ("mc_reps", "mc_reps"), ("boot_reps", "boot_reps"), ("boot_reps2", "boot_reps2"),
                      ("max_support", "max_support"), ("estimators", "estimators"),
                      ("degree_procedure", "degree_procedure"), ("workers", "workers"), ("seed", "seed")):
        if key in cfg:
            extra[attr] = tuple(cfg[key]) if isinstance(cfg[key], list) else cfg[key]
    if cfg["study"] == "richness" and "ks" not in cfg:
        extra["ks"] = (1, 2, 3, 4)
    if seed is not None:
        extra["seed"] = seed
    if workers is not None:
        extra["workers"] = workers
    return simulation.Scenario(
        family=sc["family"], size=size, replicates=cfg["replicates"], h=sc.get("h"),
        lam=sc.get("lambda"), k_true=sc.get("k_true"), components=tuple(map(tuple, sc.get("components", ()))),
        k_construct=sc.get("k_construct"), **extra)


def cmd_simulate(args, out):
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {args.config}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.config}: line {exc.lineno}: invalid JSON ({exc.msg})") from None
    errs = schemas.errors("simulate_config", cfg)
    if errs:
        path, msg = errs[0]
        raise DataError(f"{args.config}: {path}: {msg}")
    try:
        sc = scenario_from_config(cfg, args.seed, args.workers)
    except InvalidArgumentError as exc:
        raise DataError(f"{args.config}: $.scenario: {exc}") from None
    report = simulation.run_study(cfg["study"], sc)
    outputs = cfg.get("output", {})
    if "csv" in outputs:
        _write(outputs["csv"], report.to_csv())
    if "markdown" in outputs:
        _write(outputs["markdown"], report.to_markdown() + "\n")
    payload = _clean(report.to_dict())
    if "json" in outputs:
        _write(outputs["json"], json.dumps(payload, indent=2) + "\n")
    _emit(out, payload, args.format, report.to_markdown())
    return EXIT_OK


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_lambda_table(args, out):
    if not args.tol > 0:
        raise UsageError("kmono lambda-table: error: --tol must be positive")
    rows = [{"h": h, "lambda": lambda_threshold(h, tol=args.tol)} for h in range(1, args.hmax + 1)]
    digits = max(4, min(12, int(math.ceil(-math.log10(args.tol)))))
    text = "\n".join([f"{'h':>4}  lambda"] + [f"{r['h']:>4}  {r['lambda']:.{digits}f}" for r in rows])
    _emit(out, {"tol": args.tol, "rows": rows}, args.format, text)
    return EXIT_OK


COMMANDS = {"test": cmd_test, "degree": cmd_degree, "richness": cmd_richness,
            "simulate": cmd_simulate, "lambda-table": cmd_lambda_table}


def main(argv=None, out=None, err=None):
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_USAGE
    except InapplicableOrderError as exc:
        err.write(f"inapplicable order: {exc} (the estimator needs sum_h (-1)^h C(k,h) S_h <= 0)\n")
        return EXIT_INAPPLICABLE
    except (DataError, EmptySampleError, DegenerateSupportError) as exc:
        err.write(f"data error: {exc}\n")
        return EXIT_DATA
    except InvalidArgumentError as exc:
        # raised by the library for values it cannot use, e.g. a non-integer count
        err.write(f"data error: {exc}\n")
        return EXIT_DATA
    except (CalibrationError, SolverError, KMonotoneError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
