"""Command-line front end.

Every command writes one JSON report holding the schema version, the
command, the configuration needed to rerun it (the worker count and output
path excepted, since they do not change results) and the result.

Exit codes: 0 success, 2 usage error, 3 ingestion error, 4 a fit did not
converge (the report is still written), 5 input/output failure.
"""

from __future__ import annotations

import argparse
import sys
import warnings

from . import __version__, kernels
from .errors import EsagError, IngestionError
from .inference import DEFAULT_MC_SIZE, bootstrap_tests, gof_T
from .io import SCHEMA_VERSION, IngestConfig, dump_report, ingest
from .predict import regions
from .regress import NullSpec, OptimizerConfig, fit, predict_params
from .sim import concentration_profile, dgm, profile_setting, run_coverage_study, run_rejection_study
from .dist import sample
from .parallel import substream

COMMANDS = ("fit", "test", "predict", "gof", "simulate", "profile")
SEEDED = ("test", "predict", "simulate")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INGEST = 3
EXIT_CONVERGENCE = 4
EXIT_IO = 5

_NOT_ECHOED = {"workers", "out", "command_flag"}


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="esag", description="ESAG regression for directional data.")
    ap.add_argument("command", nargs="?", choices=COMMANDS)
    ap.add_argument("--command", dest="command_flag", choices=COMMANDS, help="alternative to the positional command")
    ap.add_argument("--input", help="CSV file with a header row")
    ap.add_argument("--responses", type=_names, help="comma-separated response columns")
    ap.add_argument("--covariates", type=_names, default=[], help="comma-separated covariate columns")
    ap.add_argument("--compositional", action="store_true", help="responses are compositions; take square roots")
    ap.add_argument("--null", default=None, help="isotropy, mu_const, gamma_const, alpha_K or beta_K (fit: full)")
    ap.add_argument("--alt", default="full", help="alternative specification (default: full)")
    ap.add_argument("--statistic", type=_names, default=["roc"], help="comma-separated: roc, d, m, lr")
    ap.add_argument("--plus-one", action="store_true", help="report (s + 1) / (B + 1) p-values")
    ap.add_argument("-B", type=int, default=None, help="bootstrap size")
    ap.add_argument("-m", type=int, default=2000, help="parametric draws per fit for prediction regions")
    ap.add_argument("--levels", type=_floats, default=None, help="comma-separated levels")
    ap.add_argument("--x0", action="append", type=_floats, default=None, help="raw covariate vector; repeatable")
    ap.add_argument("--mc-size", type=int, default=None, help="null draws per observation for the M statistic")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", help="report path (default: stdout)")
    ap.add_argument("--method", choices=("bfgs", "nelder-mead"), default="bfgs")
    ap.add_argument("--restarts", type=int, default=5)
    ap.add_argument("--gtol", type=float, default=1e-6)
    ap.add_argument("--maxiter", type=int, default=None)
    ap.add_argument("--bins", type=int, default=30, help="histogram bins for gof")
    sim = ap.add_argument_group("simulate / profile")
    sim.add_argument("--kind", choices=("rejection", "coverage"), default="rejection")
    sim.add_argument("--dgm", default="V0", help="mechanism name, e.g. V0, mu1, gamma2")
    sim.add_argument("--r", type=float, default=0.0, help="severity of the mechanism")
    sim.add_argument("-n", type=int, default=None, help="sample size")
    sim.add_argument("--reps", type=int, default=200)
    return ap


def _config(args) -> OptimizerConfig:
    return OptimizerConfig(method=args.method, n_restarts=args.restarts, gtol=args.gtol,
                           maxiter=args.maxiter, seed=args.seed or 0)


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}


def _load(args):
    if not args.input or not args.responses:
        raise _Usage("--input and --responses are required")
    return ingest(IngestConfig(args.input, tuple(args.responses), tuple(args.covariates), args.compositional))


class _Usage(Exception):
    pass


def _model(fr, data) -> dict:
    rec = data.standardization_record
    return {
        "d": data.d,
        "q": data.q,
        "coefficients": fr.coefficients.to_dict(),
        "standardization": rec.to_dict() if rec is not None else None,
    }


def _cmd_fit(args):
    data = _load(args)
    fr = fit(data, NullSpec.by_name(args.null or "full"), _config(args))
    return {"model": _model(fr, data), "fit": fr.summary(), "n": data.n}, fr.converged


def _cmd_test(args):
    if args.null is None:
        raise _Usage("--null is required for test")
    data = _load(args)
    cfg = _config(args)
    null, alt = NullSpec.by_name(args.null), NullSpec.by_name(args.alt)
    fit0 = fit(data, null, cfg)
    fitA = fit(data, alt, cfg, start=fit0)
    reps = bootstrap_tests(
        data, null, alt, args.statistic, args.B or 300, args.seed,
        mc_size=args.mc_size or DEFAULT_MC_SIZE, config=cfg, plus_one=args.plus_one,
        workers=args.workers, fits=(fit0, fitA),
    )
    return {
        "null": null.to_dict(),
        "alt": alt.to_dict(),
        "null_model": _model(fit0, data),
        "alt_model": _model(fitA, data),
        "tests": {k: v.to_dict() for k, v in reps.items()},
    }, fit0.converged and fitA.converged


def _cmd_predict(args):
    data = _load(args)
    cfg = _config(args)
    fr = fit(data, NullSpec.full(), cfg)
    levels = args.levels or [0.9, 0.95, 0.99]
    points = args.x0 or [None]
    if data.q == 0:
        points = [None]
    out = []
    for x0 in points:
        if x0 is None and data.q:
            raise _Usage("--x0 is required when the model has covariates")
        regs = regions(data, x0, levels, args.m, 100 if args.B is None else args.B, args.seed,
                       config=cfg, workers=args.workers, fit_result=fr)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            par = predict_params(fr.coefficients, x0, data.standardization_record)
        out.append({
            "x0": x0,
            "mu": par.mu.tolist(),
            "gamma": par.gamma.tolist(),
            "regions": [r.to_dict() for r in regs],
        })
    return {"model": _model(fr, data), "fit": fr.summary(), "predictions": out}, fr.converged


def _cmd_gof(args):
    data = _load(args)
    cfg = _config(args)
    fr = fit(data, NullSpec.full(), cfg)
    rep = gof_T(fr, data, 200 if args.B is None else args.B, args.seed or 0, config=cfg, workers=args.workers)
    return {"model": _model(fr, data), "fit": fr.summary(), "gof": rep.to_dict(args.bins)}, fr.converged


def _cmd_simulate(args):
    if args.kind == "coverage":
        res = run_coverage_study(args.n or 200, args.levels or (0.9, 0.95, 0.99), args.m,
                                 100 if args.B is None else args.B, args.reps, args.seed, workers=args.workers)
    else:
        res = run_rejection_study(dgm(args.dgm, args.r), args.n or 200, args.statistic, args.B or 200,
                                  args.reps, args.levels or (0.05,), args.seed,
                                  mc_size=args.mc_size or 500, workers=args.workers)
    return {"study": res.to_dict()}, True


def _cmd_profile(args):
    n = args.n or 10_000
    seed = args.seed or 0
    cells = []
    for a in (1, 2, 3):
        for r in (1, 2, 3):
            P, R = profile_setting(a, r)
            Y = sample(P, n, substream(seed, a))
            res = concentration_profile(Y, P.mu, R)
            cells.append({"anisotropy": a, "rotation": r, "gamma": P.gamma.tolist(),
                          "R": R.tolist(), **res.to_dict()})
    return {"profiles": cells}, True


_DISPATCH = {
    "fit": _cmd_fit,
    "test": _cmd_test,
    "predict": _cmd_predict,
    "gof": _cmd_gof,
    "simulate": _cmd_simulate,
    "profile": _cmd_profile,
}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    cmd = args.command or args.command_flag
    if cmd is None:
        ap.print_usage(sys.stderr)
        print("esag: error: a command is required", file=sys.stderr)
        return EXIT_USAGE
    if args.command and args.command_flag and args.command != args.command_flag:
        print("esag: error: conflicting commands", file=sys.stderr)
        return EXIT_USAGE
    args.command = cmd
    if cmd in SEEDED and args.seed is None:
        print(f"esag: error: --seed is required for {cmd}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result, ok = _DISPATCH[cmd](args)
    except _Usage as exc:
        print(f"esag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IngestionError as exc:
        print(f"esag: ingestion error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except OSError as exc:
        print(f"esag: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EsagError, ValueError) as exc:
        print(f"esag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "command": cmd,
        "backend": kernels.BACKEND,
        "config": _echo(args),
        "converged": bool(ok),
        "result": result,
    }
    try:
        text = dump_report(report, args.out)
    except OSError as exc:
        print(f"esag: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.out is None:
        sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_CONVERGENCE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
