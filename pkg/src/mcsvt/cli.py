"""Command-line entry point: ``mcsvt complete | simulate | probe | packing``.

Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import bench, engine, io, probe
from .sampling import NoiseModel, SamplingModel, marginals

logger = logging.getLogger("mcsvt")

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _noise_from_args(kind: str, sigma: float, b: float) -> NoiseModel:
    if b is None or b == 0:
        if sigma:
            raise InputError("a noise level sigma needs a positive bound --b")
        return NoiseModel.none()
    if kind == "auto":
        if sigma is None or math.isclose(sigma, b):
            kind = "scaled_rademacher"
        elif math.isclose(sigma, b / math.sqrt(3.0)):
            kind = "uniform_bounded"
        else:
            kind = "truncated_gaussian"
    return NoiseModel.from_dict({"kind": kind, "sigma": sigma, "b": b})


def cmd_complete(args) -> int:
    obs = io.read_observations(args.input)
    if args.config:
        cfg = io.read_config_json(args.config)
    else:
        if args.a is None:
            raise InputError("--a is required unless --config is given")
        lam = args.lam
        if lam == "auto-dense":
            if args.b is None:
                raise InputError("--lambda auto-dense needs --b")
            lam = engine.DenseRule(args.b)
        elif lam == "auto-general":
            if args.b is None or args.sigma is None:
                raise InputError("--lambda auto-general needs --sigma and --b")
            lam = engine.GeneralRule(args.sigma, args.b, args.c_star)
        else:
            try:
                lam = float(lam)
            except ValueError:
                raise InputError(f"--lambda must be a number, auto-dense or auto-general, got {lam!r}")
        cfg = engine.CompletionConfig(lam=lam, a=args.a, max_iters=args.max_iters, post_clip=args.post_clip)
    summary = None
    if args.sampling:
        summary = marginals(io.read_sampling_model(args.sampling, obs.shape))
    result = engine.run(obs, cfg, summary)
    io.write_matrix_csv(result.estimate, args.out)
    if args.trace:
        io.write_trace_csv(result.trace, args.trace)
    logger.info("lambda=%.6g iterations=%d converged=%s", result.lam, result.iterations, result.converged)
    return EXIT_OK


def cmd_simulate(args) -> int:
    d = json.loads(Path(args.spec).read_text())
    if args.seed is not None:
        d["seed"] = args.seed
    spec = bench.ExperimentSpec.from_dict(d)
    bundle = bench.scaling_study(spec)
    bench.emit_report(bundle, args.out_dir)
    for f in bundle.slope_fits:
        logger.info("%s slope in log %s (fixed %g): %.3f +/- %.3f", f.estimator, f.axis, f.fixed, f.slope, f.stderr)
    return EXIT_OK


def cmd_probe_sigma(args) -> int:
    model = SamplingModel.uniform(args.p, (args.m1, args.m2))
    noise = _noise_from_args(args.noise, args.sigma, args.b)
    t = args.t if args.t is not None else math.sqrt(2.0 * math.log(args.m1 + args.m2))
    report = probe.check_sigma_bound(model, noise, t, args.c_star, args.reps, args.seed)
    io.write_probe_json(report, args.out)
    return EXIT_OK


def cmd_probe_sigma_r(args) -> int:
    model = SamplingModel.uniform(args.p, (args.m1, args.m2))
    report = probe.estimate_expected_sigma_r(model, args.reps, args.seed)
    io.write_probe_json(report, args.out)
    return EXIT_OK


def cmd_packing(args) -> int:
    ps = probe.build_packing_set(args.m1, args.m2, args.r, args.p, args.sigma, args.a, args.gamma,
                                 args.count, args.seed)
    io.write_packing_set(ps, args.out_dir)
    if ps.shortfall:
        logger.warning("packing set short: %d of %d members", len(ps), ps.requested)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mcsvt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("complete", help="complete a matrix from an observations file")
    p.add_argument("--input", required=True)
    p.add_argument("--lambda", dest="lam", default="auto-dense", help="number, auto-dense or auto-general")
    p.add_argument("--a", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--c-star", type=float, default=3.0)
    p.add_argument("--sampling", help="sampling model file; supplies L for the lambda rules")
    p.add_argument("--config", help="JSON config; overrides --lambda/--a")
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--post-clip", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("simulate", help="run a scaling study from a JSON experiment spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides the spec's seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("probe", help="Monte Carlo probes of the stochastic terms")
    psub = p.add_subparsers(dest="probe", required=True, parser_class=_Parser)
    for name, func in (("sigma", cmd_probe_sigma), ("sigma-r", cmd_probe_sigma_r)):
        q = psub.add_parser(name)
        q.add_argument("--m1", type=int, required=True)
        q.add_argument("--m2", type=int, required=True)
        q.add_argument("--p", type=float, required=True)
        q.add_argument("--reps", type=int, default=200)
        q.add_argument("--out", required=True)
        q.add_argument("--seed", type=int, default=0)
        if name == "sigma":
            q.add_argument("--sigma", type=float, required=True)
            q.add_argument("--b", type=float, required=True)
            q.add_argument("--t", type=float, help="defaults to sqrt(2 log(m1 + m2))")
            q.add_argument("--c-star", type=float, default=3.0)
            q.add_argument("--noise", default="auto",
                           choices=["auto", "scaled_rademacher", "uniform_bounded", "truncated_gaussian"])
        q.set_defaults(func=func)

    p = sub.add_parser("packing", help="build a separated packing set of low-rank matrices")
    for name in ("m1", "m2", "r"):
        p.add_argument(f"--{name}", type=int, required=True)
    for name in ("p", "sigma", "a"):
        p.add_argument(f"--{name}", type=float, required=True)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_packing)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, ValueError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"mcsvt: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:
        print(f"mcsvt: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
