"""Command-line interface.

Values come from the built-in defaults, then ``--config FILE`` (JSON), then
explicit flags, each overriding the previous.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__, pipeline
from .config import ConfigError, RunConfig, load_config_file

log = logging.getLogger("forster")

S = argparse.SUPPRESS


def _add_simulation(p):
    g = p.add_argument_group("simulation")
    g.add_argument("--i", type=int, nargs="+", default=S, help="atom count(s), 1..8")
    g.add_argument("--t0", type=float, default=S, help="interaction time, µs (0.515)")
    g.add_argument("--L", type=float, default=S, help="cube side, µm (18)")
    g.add_argument("--realizations", type=int, default=S, help="random geometries per spectrum (500)")
    g.add_argument("--seed", type=int, default=S, help="64-bit master seed (42)")
    g.add_argument("--c3", type=float, default=S, help="Förster C3, MHz·µm³ (300)")
    g.add_argument("--c3-exchange-s", type=float, default=S, help="S<->P hopping C3 (defaults to --c3)")
    g.add_argument("--c3-exchange-sp", type=float, default=S, help="S'<->P hopping C3 (defaults to --c3)")
    g.add_argument("--grid-min", type=float, default=S, help="detuning grid start, MHz (-15)")
    g.add_argument("--grid-max", type=float, default=S, help="detuning grid end, MHz (15)")
    g.add_argument("--grid-step", type=float, default=S, help="detuning grid step, MHz (0.25)")
    g.add_argument("--workers", type=int, default=S, help="parallel worker processes (1)")


def _add_chain(p):
    g = p.add_argument_group("detection chain")
    g.add_argument("--nbar", type=float, default=S, help="mean excited Rydberg atoms per pulse (1.05)")
    g.add_argument("--T", type=float, default=S, help="detection efficiency (0.65)")
    g.add_argument("--p32", type=float, default=S, help="37P3/2 excitation probability (0.52)")
    g.add_argument("--rho-bg", type=float, default=S, help="nonresonant background (0.01)")
    g.add_argument("--imax", type=int, default=S, help="largest excited atom number kept (5)")
    g.add_argument("--tail-closure", choices=["saturate", "truncate"], default=S, help="Poisson tail beyond imax")


def _add_stark(p, fields=False):
    g = p.add_argument_group("Stark map")
    g.add_argument("--fres", type=float, default=S, help="resonance field, V/cm (1.79)")
    g.add_argument("--slope", type=float, default=S, help="dΔ/dF, MHz per V/cm (-118.3)")
    if fields:
        g.add_argument("--field-min", type=float, default=S, help="V/cm (1.69)")
        g.add_argument("--field-max", type=float, default=S, help="V/cm (1.89)")
        g.add_argument("--field-step", type=float, default=S, help="V/cm (0.001)")


def _add_io(p, input_help=None):
    g = p.add_argument_group("input/output")
    g.add_argument("--out", default=S, help="output directory (out)")
    g.add_argument("--config", default=None, help="JSON config file")
    g.add_argument("--format", choices=["csv", "tsv"], default=S, help="table format (csv)")
    if input_help:
        g.add_argument("--input", default=S, help=input_help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forster", description="Stark-tuned Förster resonance spectra of few Rydberg atoms")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="Monte-Carlo spectra rho_i for the given atom counts")
    _add_simulation(p)
    _add_io(p)

    p = sub.add_parser("detect", help="post-selected signals S_N, summary and histogram tables")
    _add_simulation(p)
    _add_chain(p)
    _add_stark(p)
    _add_io(p, "directory with rho_<i> tables (computed in-run if absent)")

    p = sub.add_parser("histogram", help="distribution of interacting atom numbers per detected N")
    _add_chain(p)
    _add_io(p)

    p = sub.add_parser("calibrate", help="n_bar and T from the S1/S2 amplitude ratio")
    p.add_argument("--alpha", type=float, required=True, help="(S1 - rho)/(S2 - rho)")
    p.add_argument("--nbarT", type=float, required=True, help="measured mean detected count")

    p = sub.add_parser("fieldscan", help="S_N on an electric-field axis")
    _add_simulation(p)
    _add_chain(p)
    _add_stark(p, fields=True)
    _add_io(p, "directory with s_<N> or rho_<i> tables (computed in-run if absent)")

    p = sub.add_parser("lineshape", help="FWHM, amplitude and Lorentz fit of one spectrum table")
    _add_io(p, "spectrum table: detuning_mhz,<value>[,stderr]")

    p = sub.add_parser("reproduce-fig2", help="rho_2..rho_5 at the paper parameters plus the Lorentz comparison")
    _add_simulation(p)
    _add_io(p, "directory with precomputed rho_<i> tables")

    p = sub.add_parser("reproduce-fig3", help="full chain: spectra, S_N, amplitude/width tables, field scan")
    _add_simulation(p)
    _add_chain(p)
    _add_stark(p, fields=True)
    _add_io(p, "directory with precomputed rho_<i> tables")
    return parser


RUNNERS = {
    "spectrum": pipeline.cmd_spectrum,
    "detect": pipeline.cmd_detect,
    "histogram": pipeline.cmd_histogram,
    "fieldscan": pipeline.cmd_fieldscan,
    "lineshape": pipeline.cmd_lineshape,
    "reproduce-fig2": pipeline.reproduce_fig2,
    "reproduce-fig3": pipeline.reproduce_fig3,
}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = cfg.merged(load_config_file(args.config))
    flags = {k: v for k, v in vars(args).items() if k in RunConfig.field_names()}
    cfg = cfg.merged(flags)
    return cfg.validate(needs_fields=args.command in ("fieldscan", "reproduce-fig3"))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "calibrate":
            sys.stdout.write(pipeline.cmd_calibrate(args.alpha, args.nbarT))
            return 0
        cfg = config_from_args(args)
        result = RUNNERS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"command": result.command, "out": str(result.out), "summary": result.summary}, indent=2, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
