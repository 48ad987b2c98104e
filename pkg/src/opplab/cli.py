"""Command-line front end: ``opplab <subcommand> [flags]``.

Every run writes ``result.csv``, ``summary.txt`` and ``manifest.txt`` into
``--out``.  Exit status is 0 when all checks pass, 1 when any fails and 2
on configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, battery
from .analytic import parse_plan, parse_weights
from .errors import ConfigError, DomainError, NoLipschitzConstant, QuadratureBudgetExceeded
from .expansion import parse_scheme, simulate
from .experiments import (ExperimentConfig, ExperimentResult, Mode, run_strong_law, run_weak_law,
                          trunc_diagnostic, validate_cf, validate_independence, validate_tailequiv,
                          validate_tails)
from .rng import stream

log = logging.getLogger("opplab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
PLOT_STATS = ("median", "q05", "q25", "q75", "q95", "centering", "limit")


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# value parsers


def _count(text: str) -> int:
    """Positive integer; accepts ``1e6`` style."""
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if v != int(v) or v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(v)


def _int_list(text: str) -> tuple:
    return tuple(_count(t) for t in text.split(",") if t.strip())


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _pairs(text: str) -> tuple:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        x, sep, y = item.partition(":")
        try:
            out.append((float(x), float(y)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad pair {item!r}, expected x:y") from None
        if not sep:
            raise argparse.ArgumentTypeError(f"bad pair {item!r}, expected x:y")
    return tuple(out)


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


# ---------------------------------------------------------------------------
# parser


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    """Return the parser and, per subcommand, the set of long flag names."""
    parser = _Parser(prog="opplab", description="Oppenheim-expansion laws of large numbers lab.")
    parser.add_argument("--version", action="version", version=f"opplab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    flags: dict[str, set] = {}

    def add(name, help_text, scheme=True):
        p = sub.add_parser(name, help=help_text, description=help_text)
        flags[name] = set()

        def opt(flag, **kw):
            p.add_argument(flag, **kw)
            flags[name].add(flag[2:])

        if scheme:
            opt("--scheme", default="luroth", help="scheme grammar, e.g. 'luroth' or 'phi=const:2,y=const:0.5,dist=uniform'")
        opt("--seed", type=_seed, default=0, help="base seed (default 0)")
        opt("--out", default="opplab-out", help="output directory (created if absent)")
        opt("--config", help="file of key=value lines; command-line flags override it")
        return opt

    opt = add("simulate", "Simulate trajectories and write their digits and ratios.")
    opt("--n", type=_count, default=100, help="steps per trajectory")
    opt("--reps", type=_count, default=1, help="number of trajectories")

    opt = add("weaklaw", "Weak law: W_n = b_n^-1 sum a_k R_k over replications.")
    opt("--weights", help="e.g. 'a=log^0(k)/k,b=log^2(n)'")
    opt("--ngrid", type=_int_list, default=(10**3, 10**4))
    opt("--reps", type=_count, default=100)
    opt("--eps", type=_float_list, default=(0.05, 0.1, 0.2))
    opt("--tolerance", type=float, default=0.1, help="allowed |median(W_n - centering)|")

    opt = add("stronglaw", "Strong laws along long single trajectories.")
    opt("--mode", choices=("exact", "general"), default="exact")
    opt("--weights", help="weights for --mode exact")
    opt("--plan", default="gamma=1.2", help="for --mode general, e.g. 'gamma=1.2'")
    opt("--ngrid", type=_int_list, default=(10**2, 10**3, 10**4, 10**5))
    opt("--reps", type=_count, default=20)
    opt("--tolerance", type=float, default=None, help="default 0.1 (exact) or 0.01 (general)")
    opt("--min-fraction", type=float, default=None, help="default 0.9 (exact) or 0.95 (general)")
    opt("--exploratory", action="store_true", help="allow non-constant schemes; assert nothing")

    opt = add("validate-tails", "Monte Carlo tails of R_n against the sandwich and the exact tail.")
    opt("--x", type=_float_list, default=(1.5, 2.0, 5.0, 10.0))
    opt("--samples", type=_count, default=10**5)
    opt("--step", type=_count, default=1)

    opt = add("validate-indep", "Joint tails of (R_i, R_j) against the product and the dependence bound.")
    opt("--pairs", type=_pairs, default=((2.0, 3.0), (3.0, 5.0)), help="e.g. '2:3,3:5'")
    opt("--samples", type=_count, default=10**5)
    opt("--steps", type=_int_list, default=(1, 2), help="i,j")

    opt = add("validate-cf", "Joint characteristic function against the product of psi.")
    opt("--t", type=_float_list, default=(0.05, -0.03), help="e.g. '--t=0.05,-0.03'")
    opt("--samples", type=_count, default=10**5)

    opt = add("validate-tailequiv", "P(R_n >= x)/P(Y_n > x) against its envelope.")
    opt("--x", type=_float_list, default=(2.0, 5.0, 10.0, 50.0))
    opt("--samples", type=_count, default=10**5)
    opt("--step", type=_count, default=1)

    opt = add("trunc-diagnostic", "Centered truncated sums normalised by n^gamma.")
    opt("--plan", default="trunc.b=2,gamma=0.75")
    opt("--ngrid", type=_int_list, default=(10**2, 10**3, 10**4, 10**5))
    opt("--reps", type=_count, default=20)
    opt("--tolerance", type=float, default=0.05)
    opt("--min-fraction", type=float, default=0.9)

    opt = add("suite", "Run the acceptance battery.", scheme=False)
    opt("--only", type=_int_list, default=None, help="criterion numbers, e.g. '1,2,11'")
    return parser, flags


def read_config(path: str, allowed: set) -> list[str]:
    """Turn ``key = value`` lines into argv tokens; '#' starts a comment."""
    tokens = []
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip().lstrip("-"), val.strip()
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        if key not in allowed or key == "config":
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key == "exploratory":
            if val.lower() in ("1", "true", "yes"):
                tokens.append("--exploratory")
            elif val.lower() not in ("0", "false", "no"):
                raise ConfigError(f"{path}:{lineno}: exploratory must be true or false")
            continue
        tokens.append(f"--{key}={val}")
    return tokens


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser, flags = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        extra = read_config(args.config, flags[args.command])
        argv = list(argv)
        i = argv.index(args.command)
        args = parser.parse_args(argv[: i + 1] + extra + argv[i + 1:])
    return args


# ---------------------------------------------------------------------------
# output


def _write_text(path: Path, lines) -> None:
    path.write_text("".join(line + "\n" for line in lines))


def _manifest(args: argparse.Namespace, cfg_lines=()) -> list[str]:
    lines = [f"opplab {__version__}", f"command: {args.command}"]
    for key in sorted(vars(args)):
        if key in ("command", "verbose"):
            continue
        lines.append(f"arg.{key}: {_fmt(getattr(args, key))}")
    lines.extend(f"config.{line}" for line in cfg_lines)
    return lines


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_plot_csv(res: ExperimentResult, path: Path) -> None:
    """Wide table n, median, quantile band, centering/limit for direct plotting."""
    rows: dict[str, dict] = {}
    for n, s, v in res.records:
        if s in PLOT_STATS:
            rows.setdefault(n, {})[s] = v
    cols = [s for s in PLOT_STATS if any(s in r for r in rows.values())]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n"] + cols)
        for n, r in rows.items():
            w.writerow([n] + [repr(r[c]) if c in r else "" for c in cols])


def write_result(res: ExperimentResult, out: Path, args, cfg_lines=(), plot=False) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with (out / "result.csv").open("w", newline="") as fh:
        res.write_csv(fh)
    _write_text(out / "summary.txt", res.summary_lines())
    _write_text(out / "manifest.txt", _manifest(args, cfg_lines))
    if plot:
        write_plot_csv(res, out / "plot.csv")


# ---------------------------------------------------------------------------
# commands


def _config(args, mode: Mode, **kw) -> ExperimentConfig:
    return ExperimentConfig(parse_scheme(args.scheme), mode, base_seed=args.seed, **kw)


def cmd_simulate(args) -> ExperimentResult:
    scheme = parse_scheme(args.scheme)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = ExperimentResult("simulate", "", args.seed)
    with (out / "trajectories.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "step", "B", "Y", "R", "U", "overflow"])
        for r in range(args.reps):
            traj = simulate(scheme, args.n, stream(args.seed, r, "simulate"), seed=args.seed, stream_id=(r,))
            buf = _Rows()
            traj.write_csv(buf)
            for row in buf.rows[1:]:
                w.writerow([r] + row)
            res.add(r, "overflow_count", int(traj.overflow.sum()))
            res.add(r, "max_R", float(traj.ratios.max()))
            res.add(r, "median_R", float(sorted(traj.ratios)[len(traj) // 2]))
    return res


class _Rows:
    """File-like sink that collects csv rows."""

    def __init__(self):
        self.rows = []

    def write(self, line):
        self.rows.extend(csv.reader([line]))


def cmd_weaklaw(args) -> tuple[ExperimentResult, ExperimentConfig]:
    if not args.weights:
        raise ConfigError("weaklaw needs --weights")
    scheme = parse_scheme(args.scheme)
    w = parse_weights(args.weights, scheme.dist)
    cfg = ExperimentConfig(scheme, Mode.WEAK_LAW, w, args.ngrid, args.reps, args.seed, args.eps,
                           tolerance=args.tolerance)
    return run_weak_law(cfg), cfg


def cmd_stronglaw(args) -> tuple[ExperimentResult, ExperimentConfig]:
    scheme = parse_scheme(args.scheme)
    exact = args.mode == "exact"
    tol = args.tolerance if args.tolerance is not None else (0.1 if exact else 0.01)
    frac = args.min_fraction if args.min_fraction is not None else (0.9 if exact else 0.95)
    if exact:
        if not args.weights:
            raise ConfigError("stronglaw --mode exact needs --weights")
        cfg = ExperimentConfig(scheme, Mode.STRONG_EXACT, parse_weights(args.weights, scheme.dist), args.ngrid,
                               args.reps, args.seed, tolerance=tol, min_fraction=frac,
                               exploratory=args.exploratory)
    else:
        cfg = ExperimentConfig(scheme, Mode.STRONG_GENERAL, None, args.ngrid, args.reps, args.seed,
                               plan=parse_plan(args.plan), tolerance=tol, min_fraction=frac,
                               exploratory=args.exploratory)
    return run_strong_law(cfg), cfg


def cmd_validate_tails(args):
    cfg = _config(args, Mode.TAIL, replications=args.samples)
    return validate_tails(cfg, args.x, args.step), cfg


def cmd_validate_indep(args):
    if len(args.steps) != 2:
        raise ConfigError("--steps needs exactly two indices i,j")
    cfg = _config(args, Mode.INDEP, replications=args.samples)
    return validate_independence(cfg, args.pairs, tuple(args.steps)), cfg


def cmd_validate_cf(args):
    cfg = _config(args, Mode.CF)
    return validate_cf(cfg, args.t, args.samples), cfg


def cmd_validate_tailequiv(args):
    cfg = _config(args, Mode.TAIL_EQUIV, replications=args.samples)
    return validate_tailequiv(cfg, args.x, args.step), cfg


def cmd_trunc(args):
    cfg = _config(args, Mode.TRUNC, n_grid=args.ngrid, replications=args.reps, plan=parse_plan(args.plan),
                  tolerance=args.tolerance, min_fraction=args.min_fraction)
    return trunc_diagnostic(cfg), cfg


def cmd_suite(args) -> bool:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    wanted = set(args.only) if args.only else None
    summary = [f"suite seed: {args.seed}"]
    all_ok = True
    with (out / "result.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["criterion", "n", "stat", "value"])
        for number, fn in battery.CRITERIA:
            if wanted is not None and number not in wanted:
                continue
            res = fn(args.seed)
            sub = out / res.name
            write_result(res, sub, args, [f"criterion={number}"])
            for n, s, v in res.records:
                w.writerow([res.name, n, s, repr(v)])
            status = "PASS" if res.passed else "FAIL"
            all_ok &= res.passed
            summary.append(f"{status} criterion {number} ({res.name})")
            summary.extend("    " + line for line in res.summary_lines()[3:-1])
            print(f"{status} criterion {number} ({res.name}) [{res.wall_time:.1f} s]", flush=True)
    summary.append(f"overall: {'PASS' if all_ok else 'FAIL'}")
    _write_text(out / "summary.txt", summary)
    _write_text(out / "manifest.txt", _manifest(args))
    return all_ok


COMMANDS = {
    "weaklaw": cmd_weaklaw,
    "stronglaw": cmd_stronglaw,
    "validate-tails": cmd_validate_tails,
    "validate-indep": cmd_validate_indep,
    "validate-cf": cmd_validate_cf,
    "validate-tailequiv": cmd_validate_tailequiv,
    "trunc-diagnostic": cmd_trunc,
}


def dispatch(argv: Sequence[str]) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        if args.command == "suite":
            ok = cmd_suite(args)
        elif args.command == "simulate":
            res = cmd_simulate(args)
            write_result(res, Path(args.out), args, [f"scheme={parse_scheme(args.scheme).describe()}"])
            ok = True
        else:
            res, cfg = COMMANDS[args.command](args)
            plot = args.command in ("weaklaw", "stronglaw", "trunc-diagnostic")
            write_result(res, Path(args.out), args, cfg.describe() + [f"config_hash={cfg.config_hash()}"], plot)
            for line in res.summary_lines():
                print(line)
            ok = res.passed
    except (ConfigError, DomainError, NoLipschitzConstant) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except QuadratureBudgetExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    log.info("finished in %.2f s", time.perf_counter() - t0)
    return EXIT_OK if ok else EXIT_FAIL


def main(argv: Optional[Sequence[str]] = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    return dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
