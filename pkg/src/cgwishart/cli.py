"""Command-line front end.

Exit codes: 0 success, 1 selftest failure, 2 invalid parameters or
configuration, 3 I/O failure, 4 solver breakdown.
"""

from __future__ import annotations

import argparse
import datetime
import os
import sys
from pathlib import Path

from . import BreakdownError, ParameterError, __version__, theory
from .ensembles import EnsembleSpec
from .experiments import ExperimentConfig, dumps, run_experiment, write_csv, write_json

EXIT_OK, EXIT_SELFTEST, EXIT_PARAM, EXIT_IO, EXIT_BREAKDOWN = 0, 1, 2, 3, 4

RUN_COMMANDS = ("errors", "halting", "clt", "spectrum", "ks")

_LIST_KEYS = {"ell", "eps"}
_KINDS = {"gaussian": "gaussian", "bernoulli": "bernoulli", "chi": "chi"}

_DEFAULTS = {
    "n": 200, "d": 0.2, "beta": 1, "kind": "gaussian", "seed": 0, "samples": 2000,
    "rhs": "auto", "output": None, "workers": None,
}
_DEFAULT_KMAX = {"errors": 10, "clt": 8, "spectrum": 1, "ks": 1}
_DEFAULT_ELL = {"errors": [1, 2], "halting": [2], "clt": [2], "spectrum": [2], "ks": [2]}


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment.  List
    values (``ell``, ``eps``) are comma-separated."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            out[key] = [v.strip() for v in value.split(",") if v.strip()] if key in _LIST_KEYS else value
    return out


def _add_run_flags(p):
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=float)
    p.add_argument("--beta", type=int, choices=(1, 2))
    p.add_argument("--kind", choices=sorted(_KINDS), help="ensemble (default gaussian)")
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--kmax", type=int)
    p.add_argument("--ell", type=int, action="append")
    p.add_argument("--eps", type=float, action="append")
    p.add_argument("--rhs", choices=("auto", "e1", "random"))
    p.add_argument("--workers", type=int, help="0 = all cores (env CG_WISHART_WORKERS)")
    p.add_argument("--output", help="output path stem; writes STEM.json and STEM.csv")


def build_parser():
    parser = argparse.ArgumentParser(prog="cg-wishart", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("theory-table", help="limit error norms, halting times, exceptional sets")
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--ell", type=int, action="append")
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--eps", type=float, action="append")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.add_argument("--output")

    p = sub.add_parser("predict", help="limit halting time for one tolerance")
    p.add_argument("--ell", type=int, required=True)
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)

    for name, text in (("errors", "error-norm concentration"), ("halting", "halting-time histograms"),
                       ("clt", "residual fluctuations"), ("spectrum", "spectrum vs Marchenko-Pastur"),
                       ("ks", "weighted vs unweighted spectral measure")):
        _add_run_flags(sub.add_parser(name, help=text))

    sub.add_parser("selftest", help="fast invariant checks")
    return parser


def effective_config(command, args) -> tuple[ExperimentConfig, dict]:
    """Merge defaults, config file and flags (in increasing priority)."""
    values = dict(_DEFAULTS)
    if args.config:
        values.update(read_config(args.config))
    for key in ("n", "d", "beta", "kind", "seed", "samples", "kmax", "ell", "eps", "rhs", "workers", "output"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    try:
        n, d, beta = int(values["n"]), float(values["d"]), int(values["beta"])
        seed, samples = int(values["seed"]), int(values["samples"])
        ells = [int(x) for x in values.get("ell") or _DEFAULT_ELL[command]]
        eps = [float(x) for x in values.get("eps") or []]
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"bad configuration value: {exc}") from exc
    kind = _KINDS.get(str(values["kind"]))
    if kind is None:
        raise ParameterError(f"unknown ensemble {values['kind']!r}")
    spec = EnsembleSpec(n=n, d=d, beta=beta, kind=kind, seed=seed)
    if values.get("kmax") is not None:
        kmax = int(values["kmax"])
    elif command == "halting":
        taus = [theory.predict_halting(l, e, d) for l in ells if l in (1, 2) for e in eps] or [0]
        kmax = max(taus) + 10
    else:
        kmax = _DEFAULT_KMAX[command]
    workers = values.get("workers")
    if workers is None:
        workers = int(os.environ.get("CG_WISHART_WORKERS", "0"))
    cfg = ExperimentConfig(ensemble=spec, samples=samples, kmax=kmax, ell_list=ells, eps_list=eps,
                           rhs=str(values["rhs"]), output_path=values.get("output"), workers=int(workers))
    return cfg, values


def _output_stem(command, output):
    if output:
        stem = Path(output)
        if stem.suffix in (".json", ".csv"):
            stem = stem.with_suffix("")
        return stem
    stamp = datetime.datetime.now().strftime("%Y%m%d-%H%M%S")
    return Path("out") / f"{command}-{stamp}"


def cmd_run(command, args) -> int:
    cfg, _ = effective_config(command, args)
    summary = run_experiment(command, cfg)
    stem = _output_stem(command, cfg.output_path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    json_path, csv_path = stem.with_suffix(".json"), stem.with_suffix(".csv")
    write_json(summary, json_path)
    write_csv(summary, csv_path)
    print(f"{command}: {cfg.samples} samples in {summary.metadata['wall_time']:.2f} s "
          f"-> {json_path}, {csv_path}")
    for h in summary.halting_histograms:
        print(f"  ell={h['ell']} eps={h['eps']:.6g}: tau={h['tau']} modal={h['modal']} "
              f"({100 * h['modal_fraction']:.1f}%)")
    return EXIT_OK


def cmd_theory_table(args, out=None) -> int:
    d = args.d
    ells = args.ell or [1, 2]
    for l in ells:
        theory.limit_error(l, 0, d)  # domain check
    ks = list(range(args.kmax + 1))
    table = {f"e_{l}": [theory.limit_error(l, k, d) for k in ks] for l in ells}
    halting = []
    for l in (1, 2):
        for e in args.eps or []:
            if l in ells:
                halting.append({"ell": l, "eps": e, "tau": theory.predict_halting(l, e, d),
                                "exceptional": theory.is_exceptional(l, e, d)})
    exceptional = {f"S_{l}": theory.exceptional_set(l, d, args.kmax) for l in ells if l in (1, 2) and d < 1}
    doc = {"version": __version__, "config": {"d": d, "ell": ells, "kmax": args.kmax, "eps": args.eps or []},
           "k": ks, "limits": table, "halting": halting, "exceptional_sets": exceptional}
    if args.format == "json":
        text = dumps(doc) + "\n"
    elif args.format == "csv":
        lines = [f"# version {__version__} d={d!r} ell={ells} kmax={args.kmax}", "k," + ",".join(table)]
        lines += [f"{k}," + ",".join(format(table[c][k], ".17g") for c in table) for k in ks]
        lines += [f"# tau ell={h['ell']} eps={h['eps']!r}: {h['tau']}" for h in halting]
        text = "\n".join(lines) + "\n"
    else:
        lines = [f"d = {d}", f"{'k':>3}  " + "  ".join(f"{c:>22}" for c in table)]
        lines += [f"{k:>3}  " + "  ".join(f"{table[c][k]:>22.15g}" for c in table) for k in ks]
        for h in halting:
            flag = "  (two-value boundary)" if h["exceptional"] else ""
            lines.append(f"tau(ell={h['ell']}, eps={h['eps']:.6g}) = {h['tau']}{flag}")
        text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        (out or sys.stdout).write(text)
    return EXIT_OK


def cmd_predict(args) -> int:
    tau = theory.predict_halting(args.ell, args.eps, args.d)
    print(tau)
    if theory.is_exceptional(args.ell, args.eps, args.d):
        print(f"warning: eps is a limit error value; halting splits over {tau} and {tau + 1}",
              file=sys.stderr)
    return EXIT_OK


def cmd_selftest() -> int:
    from .selftest import CHECKS, run_selftest

    failures = run_selftest()
    print(f"{len(CHECKS) - len(failures)}/{len(CHECKS)} checks passed")
    if failures:
        print("failed: " + ", ".join(failures))
        return EXIT_SELFTEST
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "theory-table":
            return cmd_theory_table(args)
        if args.command == "predict":
            return cmd_predict(args)
        if args.command == "selftest":
            return cmd_selftest()
        return cmd_run(args.command, args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except BreakdownError as exc:
        where = f" (sample {exc.sample_index})" if exc.sample_index is not None else ""
        print(f"solver breakdown{where}: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
