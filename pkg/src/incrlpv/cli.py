"""Command-line interface.

Subcommands::

    incrlpv synthesize [--config C] [--mode l2|li2] --out controller.json
    incrlpv simulate   [--config C] --controller K [--disturbance N] --out run.csv
    incrlpv bode       [--config C] --controller K --out bode.csv
    incrlpv demo duffing [--config C] [--mode l2|li2] [--disturbance N] [--out DIR]

Without ``--config`` the built-in Duffing case study is used. Exit codes:
0 success, 1 runtime failure (infeasible synthesis, blow-up), 2 invalid
configuration or controller file.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from .config import (Config, ConfigError, ControllerFile, default_config, load_config,
                     load_controller, save_controller)
from .duffing import duffing_incremental, duffing_plant, duffing_primal, duffing_scheduling
from .genplant import TrackingGenplantSpec, build_tracking_genplant
from .models import AffinePlant, ModelError
from .realization import realize_primal
from .sdp import SdpError
from .simulation import oscillation_metric, process_sensitivity_bode, simulate_closed_loop
from .synthesis import SynthesisError, SynthesisResult, synthesize_polytopic

logger = logging.getLogger("incrlpv")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class RuntimeFailure(RuntimeError):
    """Failure after a valid configuration was read (exit code 1)."""


# --------------------------------------------------------------------------
# Pipeline
# --------------------------------------------------------------------------


def design_plant(cfg: Config, mode: str) -> AffinePlant:
    """Generalized plant for ``mode``: incremental form (li2) or primal embedding (l2)."""
    params, box = cfg.duffing_params(), cfg.box()
    lpv = duffing_incremental(params, box) if mode == "li2" else duffing_primal(params, box)
    return build_tracking_genplant(TrackingGenplantSpec(lpv.to_affine(), cfg.weight_set()))


def run_synthesis(cfg: Config, mode: str) -> SynthesisResult:
    try:
        return synthesize_polytopic(design_plant(cfg, mode), cfg.synthesis_options())
    except (SynthesisError, SdpError) as exc:
        raise RuntimeFailure(f"synthesis failed: {exc}") from exc


def loop_controller(cf: ControllerFile):
    """Controller placed in the nonlinear loop: realized for li2, direct for l2."""
    return realize_primal(cf.controller) if cf.mode == "li2" else cf.controller


def _check_compatible(cfg: Config, cf: ControllerFile) -> None:
    k = cf.controller
    if k.box != cfg.box():
        raise ConfigError("controller scheduling box differs from the configuration")
    if k.n_inputs != 1 or k.n_outputs != 1:
        raise ConfigError("controller must have one input and one output for this plant")


def _synthesize(cfg: Config, mode: str, out: str) -> SynthesisResult:
    t0 = time.perf_counter()
    res = run_synthesis(cfg, mode)
    save_controller(out, mode, res.gamma, res.controller)
    print(f"mode={mode} gamma={res.gamma:.6f} gamma_opt={res.gamma_opt:.6f} "
          f"lyapunov={res.lyapunov} time={time.perf_counter() - t0:.1f}s -> {out}")
    return res


def _simulate(cfg: Config, cf: ControllerFile, disturbance: float | None, out: str) -> int:
    _check_compatible(cfg, cf)
    scenario = cfg.scenario_obj(disturbance)
    if len(scenario.x0) != 2:
        raise ConfigError("scenario.x0 must have two entries for the Duffing plant")
    plant = duffing_plant(cfg.duffing_params(), cfg.box())
    run = simulate_closed_loop(plant, loop_controller(cf), scenario,
                               duffing_scheduling(cfg.box()))
    run.to_csv(out)
    osc = oscillation_metric(run) if run.t.size else float("nan")
    print(f"final_error={run.e[-1]:.6g} oscillation={osc:.6g} "
          f"clamp_violations={run.violations}", file=sys.stderr)
    if run.aborted:
        raise RuntimeFailure(run.message)
    return EXIT_OK


def _bode(cfg: Config, cf: ControllerFile, out: str) -> int:
    _check_compatible(cfg, cf)
    table = process_sensitivity_bode(design_plant(cfg, cf.mode), cf.controller,
                                     cfg.bode.rho, cfg.omega_grid(), cfg.weight_set())
    table.to_csv(out)
    if not table.stable.all():
        raise RuntimeFailure("frozen closed loop unstable at some rho; entries are nan")
    return EXIT_OK


# --------------------------------------------------------------------------
# Argument handling
# --------------------------------------------------------------------------


def _config(args) -> Config:
    return load_config(args.config) if args.config else default_config()


def cmd_synthesize(args) -> int:
    cfg = _config(args)
    _synthesize(cfg, args.mode or cfg.synthesis.mode, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _simulate(_config(args), load_controller(args.controller), args.disturbance, args.out)


def cmd_bode(args) -> int:
    return _bode(_config(args), load_controller(args.controller), args.out)


def cmd_demo(args) -> int:
    cfg = _config(args)
    mode = args.mode or cfg.synthesis.mode
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"controller_{mode}.json")
    _synthesize(cfg, mode, path)
    cf = load_controller(path)
    _simulate(cfg, cf, args.disturbance, os.path.join(args.out, f"sim_{mode}.csv"))
    return _bode(cfg, cf, os.path.join(args.out, f"bode_{mode}.csv"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="incrlpv", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, controller=False):
        p.add_argument("--config", help="TOML configuration (default: built-in Duffing)")
        if controller:
            p.add_argument("--controller", required=True, help="controller file")

    p = sub.add_parser("synthesize", help="synthesize and store a controller")
    common(p)
    p.add_argument("--mode", choices=("l2", "li2"), help="overrides synthesis.mode")
    p.add_argument("--out", required=True, help="controller file to write")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="closed-loop simulation to CSV")
    common(p, controller=True)
    p.add_argument("--disturbance", type=float, help="input disturbance in N")
    p.add_argument("--out", required=True, help="CSV file to write")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bode", help="frozen process sensitivity to CSV")
    common(p, controller=True)
    p.add_argument("--out", required=True, help="CSV file to write")
    p.set_defaults(func=cmd_bode)

    p = sub.add_parser("demo", help="run a built-in case study end to end")
    p.add_argument("case", choices=("duffing",))
    common(p)
    p.add_argument("--mode", choices=("l2", "li2"), help="overrides synthesis.mode")
    p.add_argument("--disturbance", type=float, help="input disturbance in N")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:          # argparse uses 2 for usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeFailure, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
