"""``dcbus`` command line: design, simulate, sweep.

Exit codes: 0 success, 2 usage error, 3 solver or divergence error.
Numeric output uses 9 significant digits unless ``DCBUS_PRECISION`` is set.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
from sklearn.base import clone

from . import __version__, lti
from .design import DCBusVoltageTuner
from .harmonics import analyze_harmonics, write_harmonics_csv
from .performance import (
    evaluate,
    itae,
    max_voltage_fluctuation,
    robustness_sweep,
    third_harmonic_percent,
    write_metrics_csv,
    write_sweep_csv,
)
from .plant import VscParams
from .scenario import EXAMPLES, example_path, load_plant, load_scenario
from .sim import SimulationDivergedError, simulate, simulate_linear

EXIT_SOLVER = 3


class SolverError(Exception):
    pass


def precision() -> int:
    try:
        return max(1, min(17, int(os.environ.get("DCBUS_PRECISION", "9"))))
    except ValueError:
        return 9


def _fmt(x) -> str:
    return f"{x:.{precision()}g}"


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_manifest(out_dir: Path, argv, digest_inputs: dict, outputs, started: float) -> Path:
    digest = hashlib.sha256(json.dumps(digest_inputs, sort_keys=True).encode()).hexdigest()
    manifest = {
        "command": list(argv),
        "config_digest": digest,
        "version": __version__,
        "outputs": sorted(str(p.name) for p in outputs),
        "wall_clock_s": round(time.perf_counter() - started, 6),
    }
    path = out_dir / "manifest.json"
    _atomic_write(path, json.dumps(manifest, indent=2) + "\n")
    return path


def _digest_args(args: argparse.Namespace, files=()) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in ("func", "parser", "out", "argv")}
    d = {k: (str(v) if isinstance(v, Path) else v) for k, v in d.items()}
    d["files"] = {str(f): hashlib.sha256(Path(f).read_bytes()).hexdigest() for f in files}
    return d


def _plant(args) -> VscParams:
    return load_plant(args.plant) if args.plant else VscParams()


def _tuner_from_args(args, parser) -> DCBusVoltageTuner:
    if args.scheme == "improved" and args.xi is not None:
        parser.error("--xi applies to --scheme conventional")
    if args.scheme == "conventional" and args.beta is not None:
        parser.error("--beta applies to --scheme improved")
    if args.phase_margin is not None and (args.beta is not None or args.xi is not None):
        parser.error("give --phase-margin or --beta/--xi, not both")
    if getattr(args, "target_i3", None) is not None and getattr(args, "bandwidth_hz", None) is not None:
        parser.error("give --target-i3 or --bandwidth-hz, not both")
    return DCBusVoltageTuner(
        scheme=args.scheme,
        phase_margin=45.0 if args.phase_margin is None else args.phase_margin,
        beta=args.beta,
        xi=args.xi,
        target_i3=2.0 if getattr(args, "target_i3", None) is None else args.target_i3,
        bandwidth_hz=getattr(args, "bandwidth_hz", None),
    )


def design_report(tuner: DCBusVoltageTuner, p_step: float) -> str:
    dp, plant = tuner.design_, tuner.plant_
    rep = evaluate(dp, plant, p_step)
    gvl = tuner.gvl_(2j * plant.omega_s)
    shape = f"beta = {_fmt(dp.beta)}" if dp.scheme == "improved" else f"xi = {_fmt(dp.xi)}"
    lines = [
        "[design]",
        f"scheme = {dp.scheme}",
        shape,
        f"theta_max_deg = {_fmt(dp.theta_max)}",
        f"omega_n_rad_s = {_fmt(dp.omega_n)}",
        f"f_n_hz = {_fmt(dp.f_n)}",
        f"k_p = {_fmt(dp.gains.k_p)}",
        f"t_i = {_fmt(dp.gains.t_i)}",
        f"t_f = {_fmt(dp.gains.t_f) if dp.gains.t_f is not None else 'none'}",
        "",
        "[prediction]",
        f"p_step_w = {_fmt(p_step)}",
        f"gvl_2ws_mag = {_fmt(abs(gvl))}",
        f"gvl_2ws_phase_deg = {_fmt(math.degrees(np.angle(gvl)))}",
        f"i3_pct = {_fmt(rep.i3_percent)}",
        f"thd_pct = {_fmt(rep.thd_percent)}",
        f"delta_v_max_v = {_fmt(rep.delta_v_max)}",
        f"settling_time_s = {_fmt(rep.settling_time)}",
        f"itae_vs2 = {_fmt(rep.itae)}",
        f"ripple_amp_v = {_fmt(rep.ripple_amp)}",
        f"q_injected_var = {_fmt(rep.q_injected)}",
    ]
    return "\n".join(lines) + "\n"


def cmd_design(args, parser) -> int:
    started = time.perf_counter()
    tuner = _tuner_from_args(args, parser)
    plant = _plant(args)
    try:
        tuner.fit(plant)
        text = design_report(tuner, args.p_step)
    except (ValueError, lti.NoCrossoverError, lti.UnstableResponseError) as exc:
        raise SolverError(str(exc)) from exc
    if args.out is None:
        sys.stdout.write(text)
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = [out / "design.txt", out / "metrics.csv"]
    _atomic_write(outputs[0], text)
    write_metrics_csv([(args.id, evaluate(tuner.design_, plant, args.p_step))], outputs[1], precision())
    if args.bode:
        pts = lti.bode_sweep(tuner.gvl_, 2 * math.pi * 0.1, 2 * math.pi * 1e4, 50)
        outputs.append(out / "bode.csv")
        lti.write_bode_csv(pts, outputs[-1], precision())
    write_manifest(out, args.argv, _digest_args(args, [args.plant] if args.plant else []), outputs, started)
    return 0


def _resolve_config(name: str) -> Path:
    if name in EXAMPLES:
        return Path(str(example_path(name)))
    return Path(name)


def cmd_simulate(args, parser) -> int:
    started = time.perf_counter()
    path = _resolve_config(args.config)
    if not path.exists():
        parser.error(f"config file {args.config} not found")
    sc = load_scenario(path)
    cfg = sc.config
    if args.t_end is not None:
        cfg = cfg.replace(t_end=args.t_end)
    run = simulate_linear if args.linear else simulate
    try:
        trace = run(cfg)
    except SimulationDivergedError as exc:
        raise SolverError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = [out / "trace.csv"]
    trace.to_csv(outputs[0], precision())
    span = sc.harmonic_window_cycles / cfg.plant.f_grid
    start = sc.harmonic_window_start
    if start is not None and len(trace) and start + span <= trace.t[-1] + trace.dt_out / 2:
        rep = analyze_harmonics(trace, "i_s", sc.harmonic_window_cycles, cfg.plant.f_grid, start)
        outputs.append(out / "harmonics.csv")
        write_harmonics_csv([(sc.name, rep)], outputs[-1], precision())
    write_manifest(out, args.argv, _digest_args(args, [path]), outputs, started)
    return 0


def _freqs(args) -> np.ndarray:
    if args.freqs_hz:
        return np.array(args.freqs_hz, dtype=float)
    return np.linspace(args.f_min, args.f_max, args.points)


def cmd_sweep(args, parser) -> int:
    started = time.perf_counter()
    plant = _plant(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{args.curve}.csv"
    fmt = _fmt
    try:
        if args.curve == "robustness":
            tuner = _tuner_from_args(args, parser).fit(plant)
            pts = robustness_sweep(tuner.design_, plant, (args.scale_min, args.scale_max), args.points)
            write_sweep_csv(pts, path, precision())
        else:
            if args.bandwidth_hz is not None or args.target_i3 is not None:
                parser.error(f"--curve {args.curve} sweeps the bandwidth; use --f-min/--f-max or --freqs-hz")
            col = {"i3": "i3_pct", "dvmax": "dvmax_v", "itae": "itae_vs2"}[args.curve]
            base = _tuner_from_args(args, parser)
            rows = []
            for f in _freqs(args):
                tuner = clone(base).set_params(bandwidth_hz=float(f)).fit(plant)
                if args.curve == "i3":
                    val = third_harmonic_percent(tuner.gvl_, plant.omega_s)
                elif args.curve == "dvmax":
                    val = max_voltage_fluctuation(tuner.gdp_, args.p_step).delta_v_max
                else:
                    val = itae(tuner.gdp_, args.p_step)
                rows.append(f"{fmt(f)},{fmt(val)}")
            _atomic_write(path, "f_n_hz," + col + "\n" + "\n".join(rows) + "\n")
    except (ValueError, lti.NoCrossoverError, lti.UnstableResponseError) as exc:
        raise SolverError(str(exc)) from exc
    write_manifest(out, args.argv, _digest_args(args, [args.plant] if args.plant else []), [path], started)
    return 0


def _add_design_flags(p, bandwidth=True):
    p.add_argument("--scheme", choices=("improved", "conventional"), default="improved")
    p.add_argument("--phase-margin", type=float, metavar="DEG")
    p.add_argument("--beta", type=float)
    p.add_argument("--xi", type=float)
    if bandwidth:
        p.add_argument("--target-i3", type=float, metavar="PCT")
        p.add_argument("--bandwidth-hz", type=float)
    p.add_argument("--plant", type=Path, metavar="FILE", help="scenario/plant file with a [plant] section")
    p.add_argument("--p-step", type=float, default=1000.0, metavar="W")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dcbus", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="compute regulator gains and predicted metrics")
    _add_design_flags(p)
    p.add_argument("--out", metavar="DIR", help="write design.txt, metrics.csv, manifest.json here")
    p.add_argument("--id", default="design", help="design_id column in metrics.csv")
    p.add_argument("--bode", action="store_true", help="also write the closed-loop Bode sweep")
    p.set_defaults(func=cmd_design, parser=p)

    p = sub.add_parser("simulate", help="run a scenario file through the time-domain model")
    p.add_argument("--config", required=True, metavar="FILE", help=f"scenario file or one of {', '.join(EXAMPLES)}")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--linear", action="store_true", help="use the simplified linear-average model")
    p.add_argument("--t-end", type=float, help="override the scenario end time (s)")
    p.set_defaults(func=cmd_simulate, parser=p)

    p = sub.add_parser("sweep", help="write a design-curve CSV")
    p.add_argument("--curve", choices=("i3", "dvmax", "itae", "robustness"), required=True)
    _add_design_flags(p)
    p.add_argument("--f-min", type=float, default=1.0)
    p.add_argument("--f-max", type=float, default=20.0)
    p.add_argument("--points", type=int, default=61)
    p.add_argument("--freqs-hz", type=float, nargs="+", metavar="HZ")
    p.add_argument("--scale-min", type=float, default=0.7)
    p.add_argument("--scale-max", type=float, default=1.3)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_sweep, parser=p)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.argv = ["dcbus", *argv]
    try:
        return args.func(args, args.parser)
    except SolverError as exc:
        print(f"dcbus: error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
