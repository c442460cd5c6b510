"""Command line entry point ``isac-im``.

Exit codes: 0 success, 1 certification failed, 2 configuration error,
3 infeasible scheme, 4 too many degenerate channel draws.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import bia, dof, tim
from .channel import build_topology, make_rng, sample_channel
from .config import SimConfig, load_config
from .errors import CapExceeded, ConfigError, DegenerateChannel, InfeasibleScheme, InvalidArgument, InvalidTopology

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_CAP = 0, 1, 2, 3, 4


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def _scheme_args(p: argparse.ArgumentParser, defaults: bool) -> None:
    d = SimConfig() if defaults else None
    p.add_argument("--scheme", default=None if d is None else d.scheme, help="bia_ic, bia_miso, bia_mimo, "
                   "tim_antidote or tim_regular")
    for name in ("K", "U", "D", "d", "m"):
        p.add_argument(f"--{name}", type=int, default=None if d is None else getattr(d, name))
    p.add_argument("--n", type=_int_list, default=None if d is None else d.n, help="receive antennas, e.g. 2,2")
    p.add_argument("--mode", choices=("replace", "add"), default=None if d is None else d.mode)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isac-im", description="Interference management for bistatic ISAC")
    sub = parser.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="Monte Carlo CEE/SER sweep over SNR")
    sw.add_argument("--config", help="key = value configuration file")
    _scheme_args(sw, defaults=False)
    sw.add_argument("--snr-min", type=float)
    sw.add_argument("--snr-max", type=float)
    sw.add_argument("--snr-step", type=float)
    sw.add_argument("--trials", type=int)
    sw.add_argument("--symbols", type=int)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--workers", type=int)
    sw.add_argument("--out-dir")
    sw.add_argument("--no-plots", action="store_true", help="skip the PNG figures")

    dp = sub.add_parser("dof", help="closed-form tradeoff point, hull and time-sharing gap")
    _scheme_args(dp, defaults=True)
    dp.add_argument("--json", action="store_true")

    cp = sub.add_parser("certify", help="check a plan numerically on a random channel")
    _scheme_args(cp, defaults=True)
    cp.add_argument("--seed", type=int, default=0)
    cp.add_argument("--tol", type=float, default=1e-8)
    cp.add_argument("--json", action="store_true")
    return parser


def _cfg_from_args(args) -> SimConfig:
    overrides = {
        "scheme": args.scheme, "K": args.K, "U": args.U, "D": args.D, "d": args.d, "m": args.m,
        "n": args.n, "mode": args.mode, "snr_min": args.snr_min, "snr_max": args.snr_max,
        "snr_step": args.snr_step, "n_trials": args.trials, "n_symbols": args.symbols, "seed": args.seed,
        "workers": args.workers, "out_dir": args.out_dir,
    }
    if args.no_plots:
        overrides["plots"] = False
    return load_config(args.config, overrides)


def _cmd_sweep(args) -> int:
    from . import harness

    cfg = _cfg_from_args(args)
    result = harness.run_sweep(cfg)
    paths = harness.emit_outputs(result)
    print(f"{cfg.scheme} {cfg.scheme_params()} trials={cfg.n_trials} resamples={result.degenerate_resamples}")
    print(f"{'snr_db':>7} {'proposed':>9} {'tin':>9} {'sic':>9}  (CEE dB)   ser")
    for r in result.rows:
        print(f"{r.snr_db:7.1f} {r.cee_db['proposed']:9.2f} {r.cee_db['tin']:9.2f} {r.cee_db['sic']:9.2f}"
              f"   {r.ser['proposed']:.4g}")
    for name in sorted(paths):
        print(f"wrote {paths[name]}")
    return EXIT_OK


def _scheme(args) -> tuple:
    cfg = SimConfig(scheme=args.scheme, K=args.K, U=args.U, D=args.D, d=args.d, m=args.m, n=args.n, mode=args.mode)
    return cfg.scheme, cfg.scheme_params()


def _cmd_dof(args) -> int:
    family, params = _scheme(args)
    try:
        point = dof.scheme_point(family, params)
        ext = dof.extremes(family, params)
    except InvalidArgument as exc:
        raise InfeasibleScheme(str(exc)) from None
    hull = dof.pareto_hull([ext[0], point, ext[1]])
    gap = dof.compare_time_sharing(point, ext)
    if args.json:
        blob = {"family": family, "params": {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()},
                "point": point.as_list(), "comm_only": ext[1].as_list(),
                "time_sharing_gap": [gap.numerator, gap.denominator], "hull": hull.to_dict()}
        print(json.dumps(blob, indent=2))
    else:
        print(f"{point.label}: (sDoF, cDoF) = ({point.sdof}, {point.cdof})")
        print(f"communication only: (0, {ext[1].cdof}); gap over time sharing: {gap}")
        print("hull: " + " -> ".join(f"({v.sdof}, {v.cdof})" for v in hull.vertices))
    return EXIT_OK


def _certify_setup(family: str, params: dict, seed: int):
    rng = make_rng(seed)
    if family == "bia_ic":
        plan = bia.plan_ic(params["K"])
        topo = build_topology("full", K=params["K"], n_tx=params["K"])
        return plan, sample_channel(topo, None, plan.t0, "heterogeneous", rng)
    if family in ("bia_miso", "bia_mimo"):
        m = params["m"]
        rx = [1] * params["K"] if family == "bia_miso" else list(params["n"])
        a = -(-m // sum(rx))
        if a < 2:
            raise InfeasibleScheme(f"m={m} leaves no room for sensing")
        topo = build_topology("full", K=len(rx), n_tx=1)
        H = sample_channel(topo, (rx, [m]), a * -(-m // (a - 1)), "heterogeneous", rng)
        plan = bia.plan_miso(m, params["K"], H) if family == "bia_miso" else bia.plan_mimo(m, params["n"], H)
        return plan, H
    if family == "tim_antidote":
        plan = tim.plan_antidote(params["K"], params["U"], params["D"], params["mode"], rng=rng)
    else:
        plan = tim.plan_regular(params["K"], params["d"], params["mode"], rng=rng)
    return plan, sample_channel(plan.topology, None, plan.t0, "block", rng)


def _cmd_certify(args) -> int:
    family, params = _scheme(args)
    try:
        dof.scheme_point(family, params)
        plan, H = _certify_setup(family, params, args.seed)
    except (InvalidArgument, InvalidTopology) as exc:
        raise InfeasibleScheme(str(exc)) from None
    rep = dof.certify_plan(plan, H, tol=args.tol)
    if args.json:
        print(json.dumps(rep.to_dict(), indent=2))
    else:
        print(f"{family} {params}: {'PASS' if rep.passed else 'FAIL'}")
        print(f"claimed ({rep.claimed.sdof}, {rep.claimed.cdof}), counted ({rep.achieved.sdof}, {rep.achieved.cdof})")
        print(f"sensor leakage {rep.sensor_leakage:.3e}")
        for r in rep.receivers:
            print(f"  receiver {r.receiver}: desired {r.desired_rank}/{r.n_desired}, "
                  f"interference {r.interference_rank}, margin {r.margin:.3e}")
        for f in rep.failures:
            print(f"  failure: {f}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"sweep": _cmd_sweep, "dof": _cmd_dof, "certify": _cmd_certify}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleScheme, DegenerateChannel) as exc:
        print(f"infeasible scheme: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except CapExceeded as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
