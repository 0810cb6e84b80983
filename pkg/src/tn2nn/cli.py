"""Command-line entry point: ``tn2nn {gen-mps,compile,verify,scaling,dump-params}``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .heads import RangeOverflowError
from .log_compiler import CompileOptions
from .nn_ir import LOG_ZERO, NeuralNet
from .pipeline import build_quad, compile_full, scaling_report, verification_states, verify
from .tensor_core import MPS, PreconditionError, random_mps, state_array

log = logging.getLogger("tn2nn")


def _write(text: str, out: str | None):
    if out in (None, "-"):
        sys.stdout.write(text + ("" if text.endswith("\n") else "\n"))
    else:
        Path(out).write_text(text)


def _load_mps(path: str) -> MPS:
    return MPS.from_json(Path(path).read_text())


def _add_compile_args(p):
    p.add_argument("--mps", required=True)
    p.add_argument("--scheme", choices=["sequential", "parallel"], default="parallel")
    p.add_argument("--epsilon", type=float, default=1e-2)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--f-min", type=float, default=None)
    grp.add_argument("--empirical-f-min", action="store_true",
                     help="measure f_min by enumeration (the default when --f-min is absent)")
    p.add_argument("--part-bound", type=float, default=None,
                   help="upper bound on every part value (default: measured, or the circuit-size bound with --f-min)")
    p.add_argument("--log-zero", type=float, default=LOG_ZERO)


def _compile(args, paranoid=False):
    opts = CompileOptions(strict_softplus=getattr(args, "strict_softplus", False), log_zero=args.log_zero)
    bound = math.log(args.part_bound) if args.part_bound else None
    return compile_full(_load_mps(args.mps), args.scheme, args.epsilon, args.f_min, bound, opts, paranoid=paranoid)


def cmd_gen_mps(args):
    mps = random_mps(args.n, args.d, args.chi, args.seed, args.scale)
    _write(mps.to_json(), args.out)
    return 0


def cmd_compile(args):
    comp = _compile(args, paranoid=args.paranoid)
    _write(comp.nn.to_json(), args.out)
    if args.params_out:
        Path(args.params_out).write_text(comp.params.to_json())
    if args.dump_params:
        sys.stderr.write(comp.params.to_json() + "\n")
    log.info("compiled %d nodes, T=%d, timings %s", len(comp.nn), comp.params.T, comp.timings)
    return 0


def cmd_dump_params(args):
    comp = _compile(args)
    _write(comp.params.to_json(), args.out)
    return 0


def cmd_verify(args):
    mps = _load_mps(args.mps)
    nn = NeuralNet.from_json(Path(args.nn).read_text())
    if args.exhaustive:
        states = state_array(mps.dims)
    else:
        states = verification_states(mps, seed=args.seed, sample=args.sample)
    quad = build_quad(mps, args.scheme)[2]
    rep = verify(mps, nn, args.epsilon, states, quad=quad, log_zero=args.log_zero)
    summary = rep.summary()
    if args.report:
        Path(args.report).write_text(json.dumps(summary | {"excluded_states": rep.excluded,
                                                           "records": rep.records}, indent=2))
    print(f"{'PASS' if rep.passed else 'FAIL'} max_error={rep.max_error:.6g} eps={args.epsilon:g} "
          f"states={summary['states']} excluded={summary['excluded']}")
    return 0 if rep.passed else 1


def cmd_scaling(args):
    n_list = [int(x) for x in args.n_list.split(",")]
    _, text = scaling_report(args.d, args.chi, args.epsilon, n_list, args.scheme, args.seed, args.sample)
    _write(text, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tn2nn", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-mps", help="write a random MPS as JSON")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--chi", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_gen_mps)

    p = sub.add_parser("compile", help="compile an MPS into a network JSON")
    _add_compile_args(p)
    p.add_argument("--strict-softplus", action="store_true")
    p.add_argument("--paranoid", action="store_true", help="assert every pass's equivalence invariant")
    p.add_argument("--params-out", default=None)
    p.add_argument("--dump-params", action="store_true", help="also print the head parameters to stderr")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("verify", help="check a compiled network against exact contraction")
    p.add_argument("--mps", required=True)
    p.add_argument("--nn", required=True)
    p.add_argument("--epsilon", type=float, default=1e-2)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--exhaustive", action="store_true")
    grp.add_argument("--sample", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scheme", choices=["sequential", "parallel"], default="parallel",
                   help="scheme used to rebuild part values for the cancellation filter")
    p.add_argument("--log-zero", type=float, default=LOG_ZERO)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("scaling", help="depth/edge sweep over N as CSV")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--chi", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=1e-2)
    p.add_argument("--n-list", default="4,8,16,32,64")
    p.add_argument("--scheme", choices=["sequential", "parallel"], default="parallel")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample", type=int, default=256)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("dump-params", help="print the derived head parameters as JSON")
    _add_compile_args(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_dump_params)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (PreconditionError, RangeOverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
