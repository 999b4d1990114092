"""Command-line interface.

Subcommands: ``spectrum``, ``evolve``, ``sweep``, ``presets list`` and
``presets run <name>``. Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 model or target resolution failure.
"""

import argparse
import logging
import os
import sys
from importlib import resources

from . import config as config_mod
from . import io
from .errors import ConfigParse, SchemaViolation, TopoLyapError
from .experiment import build_model, run_config, spectrum_of, sweep_axis
from .robustness import run_sweep

log = logging.getLogger("topolyap")

PANELS = {"fig8": ["fig8a", "fig8b"], "fig10": ["fig10a", "fig10b"]}


def preset_names():
    files = resources.files("topolyap").joinpath("presets").iterdir()
    return sorted((f.name[:-5] for f in files if f.name.endswith(".toml")),
                  key=lambda s: (int("".join(c for c in s if c.isdigit())), s))


def preset_path(name):
    p = resources.files("topolyap").joinpath("presets", f"{name}.toml")
    if not p.is_file():
        raise ConfigParse(f"unknown preset {name!r}; see 'topolyap presets list'")
    return str(p)


def _apply_overrides(cfg, seed=None, record_every=None):
    if seed is not None:
        cfg = cfg.replace(seed=int(seed))
    if record_every is not None and cfg.integrator is not None:
        from dataclasses import replace
        cfg = cfg.replace(integrator=replace(cfg.integrator, record_every=int(record_every)))
    return cfg


def do_spectrum(cfg, out, svg=False):
    os.makedirs(out, exist_ok=True)
    spec = spectrum_of(build_model(cfg.model))
    paths = io.write_spectrum(out, cfg.name, spec, cfg.to_dict())
    if svg or cfg.outputs.svg:
        paths.append(io.svg_spectrum(os.path.join(out, f"{cfg.name}_spectrum.svg"), spec))
    return paths


def do_evolve(cfg, out, svg=False):
    os.makedirs(out, exist_ok=True)
    res = run_config(cfg)
    paths = []
    if cfg.outputs.csv:
        paths.append(io.write_trajectory(os.path.join(out, f"{cfg.name}_trajectory.csv"),
                                         res.trajectory, cfg.to_dict(), res.seed))
    if cfg.outputs.json:
        paths.append(io.write_json(os.path.join(out, f"{cfg.name}_summary.json"),
                                   res.summary()))
    if svg or cfg.outputs.svg:
        paths.append(io.svg_trajectory(os.path.join(out, f"{cfg.name}_trajectory.svg"),
                                       res.trajectory))
    return res, paths


def sweep_horizon(cfg, sw):
    if sw.horizon == "clean_stop":
        return None if cfg.integrator.stop_fidelity is not None else cfg.integrator.t_end
    if sw.horizon == "t_end":
        return cfg.integrator.t_end
    return float(sw.horizon)


def do_sweep(cfg, out, workers=1, svg=False):
    if not cfg.sweeps:
        raise SchemaViolation("sweeps", "configuration has no [[sweeps]] entries")
    os.makedirs(out, exist_ok=True)
    results, paths = [], []
    horizon_cache = {}
    for i, sw in enumerate(cfg.sweeps):
        label = sw.label or f"{i}"
        h = sweep_horizon(cfg, sw)
        if h is None:
            if "clean" not in horizon_cache:
                from .robustness import clean_horizon
                horizon_cache["clean"] = clean_horizon(cfg)
            h = horizon_cache["clean"]
        res = run_sweep(cfg, sweep_axis(sw), sw.runs_per_point, workers,
                        master_seed=cfg.seed + 1000003 * i, horizon=h)
        results.append((label, res))
        paths += io.write_sweep(out, cfg.name, label, res, cfg.to_dict())
        if svg or cfg.outputs.svg:
            paths.append(io.svg_sweep(os.path.join(out, f"{cfg.name}_sweep_{label}.svg"),
                                      res, label))
    return results, paths


def run_from_config(path, out, command="auto", seed=None, workers=1, record_every=None,
                    svg=False):
    """Load a configuration and produce its artifacts.

    ``command`` is ``spectrum``, ``evolve``, ``sweep`` or ``auto`` (sweeps if
    the file defines any, else evolution if it has an integrator table,
    else the spectrum).
    """
    cfg = _apply_overrides(config_mod.load(path), seed, record_every)
    if command == "auto":
        command = "sweep" if cfg.sweeps else ("evolve" if cfg.integrator else "spectrum")
    if command == "spectrum":
        return do_spectrum(cfg, out, svg)
    if command == "evolve":
        return do_evolve(cfg, out, svg)[1]
    return do_sweep(cfg, out, workers, svg)[1]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--workers", type=int, default=1, help="sweep worker processes")
    common.add_argument("--record-every", type=int, default=None,
                        help="record every m-th integrator step")
    common.add_argument("--svg", action="store_true", help="also write SVG plots")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="topolyap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [("spectrum", "eigenvalues and edge-mode profiles"),
                       ("evolve", "integrate one controlled trajectory"),
                       ("sweep", "run the configured robustness sweeps")]:
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("--config", required=True, help="TOML configuration file")
    pr = sub.add_parser("presets", help="bundled figure configurations")
    psub = pr.add_subparsers(dest="action", required=True)
    psub.add_parser("list", help="list bundled presets")
    run = psub.add_parser("run", parents=[common], help="run a bundled preset")
    run.add_argument("name")
    show = psub.add_parser("show", help="print a preset file")
    show.add_argument("name")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "presets":
            if args.action == "list":
                for n in preset_names():
                    cfg = config_mod.load(preset_path(n))
                    print(f"{n:8s} {cfg.description}")
                return 0
            if args.action == "show":
                with open(preset_path(args.name), encoding="utf-8") as fh:
                    sys.stdout.write(fh.read())
                return 0
            names = PANELS.get(args.name, [args.name])
            for n in names:
                paths = run_from_config(preset_path(n), args.out, "auto", args.seed,
                                        args.workers, args.record_every, args.svg)
                for path in paths:
                    print(path)
            return 0
        paths = run_from_config(args.config, args.out, args.command, args.seed, args.workers,
                                args.record_every, args.svg)
        for path in paths:
            print(path)
        return 0
    except TopoLyapError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
