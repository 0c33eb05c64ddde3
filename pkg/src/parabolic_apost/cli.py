"""Command line entry point.

Subcommands::

    run       convergence study, writes CSV tables
    selftest  invariant checks, exit status 3 on failure
    coeffs    duality and energy accumulation weights for a uniform partition
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, fields

from .accumulation import energy_rate
from .bench import StudyConfig, coefficient_rows, format_value, run_study, write_study
from .fespace import SolverError
from .indicators import EstimatorConstants
from .mesh import MeshError
from .timestepper import INITIAL_MODES, RHS_MODES, TimePartition

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_SELFTEST = 0, 1, 2, 3


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""


def _parse_levels(text):
    text = str(text).strip()
    if ".." in text:
        lo, hi = text.split("..")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _positive(cast):
    def parse(text):
        v = cast(text)
        if not v > 0:
            raise ValueError(text)
        return v

    return parse


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(text)
        return text

    return parse


@dataclass
class RunConfig:
    kappa: int = 1
    T: float = 1.0
    levels: tuple = (2, 3, 4, 5)
    c_tau: float = 0.05
    rhs_mode: str = "time_average"
    initial_mode: str = "interpolation"
    C62: float = 1.0
    C102: float = 1.0
    C142: float = 1.0
    C_PF: float = math.sqrt(2.0) / math.pi
    alpha: float = 1.0
    half_factor_theta: bool = True
    quad_degree: int = 8
    solver_tol: float = 1e-12
    solver: str = "cg"
    output_dir: str = "results"
    ei_mode: str = "core"
    workers: int = 1

    def consts(self):
        return EstimatorConstants(self.C62, self.C102, self.C142, self.C_PF, self.alpha,
                                  self.half_factor_theta)

    def study(self):
        modes = ("core", "full") if self.ei_mode == "both" else (self.ei_mode,)
        return StudyConfig(kappa=self.kappa, T=self.T, levels=self.levels, c_tau=self.c_tau,
                           rhs_mode=self.rhs_mode, initial_mode=self.initial_mode,
                           consts=self.consts(), quad_degree=self.quad_degree,
                           tol=self.solver_tol, backend=self.solver, ei_modes=modes)


PARSERS = {
    "kappa": _positive(int),
    "T": _positive(float),
    "levels": _parse_levels,
    "c_tau": _positive(float),
    "rhs_mode": _choice(RHS_MODES),
    "initial_mode": _choice(INITIAL_MODES),
    "C62": _positive(float),
    "C102": _positive(float),
    "C142": _positive(float),
    "C_PF": _positive(float),
    "alpha": _positive(float),
    "half_factor_theta": _parse_bool,
    "quad_degree": _positive(int),
    "solver_tol": _positive(float),
    "solver": _choice(("cg", "direct")),
    "output_dir": str,
    "ei_mode": _choice(("core", "full", "both")),
    "workers": _positive(int),
}
assert set(PARSERS) == {f.name for f in fields(RunConfig)}


def read_config_file(path):
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def parse_config(overrides=None, path=None):
    """Build a :class:`RunConfig` from a config file and flag overrides.

    Flags win over file entries; unknown keys and malformed values raise
    :class:`ConfigError` naming the key.
    """
    raw = read_config_file(path) if path else {}
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values = {}
    for key, text in raw.items():
        if key not in PARSERS:
            raise ConfigError(f"unknown configuration key {key!r}")
        try:
            values[key] = PARSERS[key](text) if isinstance(text, str) else PARSERS[key](str(text))
        except (TypeError, ValueError):
            raise ConfigError(f"invalid value for {key!r}: {text!r}") from None
    if "levels" in values and not values["levels"]:
        raise ConfigError("invalid value for 'levels': empty")
    return RunConfig(**values)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="parabolic-apost",
                     description="Backward Euler heat solver with duality and energy "
                                 "a posteriori error estimators.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run_p = sub.add_parser("run", help="run the convergence study and write CSV files")
    run_p.add_argument("--config", help="key = value configuration file")
    for key in PARSERS:
        run_p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                           metavar=key.upper())

    sub.add_parser("selftest", help="run the invariant checks")

    co = sub.add_parser("coeffs", help="print accumulation weights for a uniform partition")
    co.add_argument("--tau", type=float, default=0.25)
    co.add_argument("--T", type=float, default=10.0)
    co.add_argument("--a-rate", type=float, default=None,
                    help="energy decay rate (default alpha / C_PF^2 = pi^2/2)")
    return parser


def cmd_run(args, out):
    overrides = {k: getattr(args, k) for k in PARSERS}
    cfg = parse_config(overrides, args.config)
    study = run_study(cfg.study(), workers=cfg.workers)
    for path in write_study(study, cfg.output_dir):
        out(path)
    return EXIT_OK


def cmd_coeffs(args, out):
    if not (args.tau > 0 and args.T > 0):
        raise ConfigError("tau and T must be positive")
    N = round(args.T / args.tau)
    if N < 2 or abs(N * args.tau - args.T) > 1e-9 * args.T:
        raise ConfigError("T must be an integer multiple (>= 2) of tau")
    part = TimePartition.uniform(args.T, N)
    consts = EstimatorConstants()
    a_rate = args.a_rate if args.a_rate is not None else energy_rate(consts.alpha, consts.C_PF)
    rows, c, d = coefficient_rows(part, a_rate)
    cols = ("n", "t_n", "a_n-1", "b_n", "d_n")
    out(",".join(cols))
    for row in rows:
        out(",".join(format_value(row[k]) for k in cols))
    out(f"# sum_a = {format_value(float(c.a.sum()))}")
    out(f"# log(T/tau_N) = {format_value(math.log(part.T / part.tau[-1]))}")
    out(f"# sum_b = {format_value(float(c.b.sum()))}")
    out(f"# a_rate = {format_value(a_rate)}")
    return EXIT_OK


def main(argv=None, out=print):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args, out)
        if args.command == "coeffs":
            return cmd_coeffs(args, out)
        from .selftest import run_selftest

        return EXIT_SELFTEST if run_selftest(out) else EXIT_OK
    except (ConfigError, MeshError) as exc:
        print(f"parabolic-apost: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, ArithmeticError, ValueError) as exc:
        print(f"parabolic-apost: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
