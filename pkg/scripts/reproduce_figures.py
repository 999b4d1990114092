#!/usr/bin/env python3
"""Run bundled presets and print a one-line summary for each.

Usage::

    python scripts/reproduce_figures.py --out results fig2 fig3 fig7
    python scripts/reproduce_figures.py --out results --all --workers 4
"""

import argparse
import json
import os
import sys
import time

from topolyap import cli, config


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", help="preset names (fig8 and fig10 expand to panels)")
    p.add_argument("--all", action="store_true", help="run every preset")
    p.add_argument("--out", default="results")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--svg", action="store_true")
    args = p.parse_args(argv)
    names = cli.preset_names() if args.all else args.names
    if not names:
        p.error("give preset names or --all")
    todo = [n for name in names for n in cli.PANELS.get(name, [name])]
    for name in todo:
        t0 = time.perf_counter()
        cfg = config.load(cli.preset_path(name))
        if cfg.sweeps:
            results, _ = cli.do_sweep(cfg, args.out, args.workers, args.svg)
            for label, res in results:
                means = ", ".join(f"{x:g}:{m:.4f}" for x, m in zip(res.axis, res.fidelities))
                print(f"{name} [{label}] horizon {res.horizon:.6g}  {means}")
        elif cfg.integrator is None:
            cli.do_spectrum(cfg, args.out, args.svg)
            print(f"{name} spectrum written")
        else:
            res, _ = cli.do_evolve(cfg, args.out, args.svg)
            s = res.summary()
            occ = json.dumps({k: round(v, 6) for k, v in s["final_occupations"].items()})
            print(f"{name} t={s['stop_time']:.6g} occupations {occ} "
                  f"fidelity {s['fidelity']:.6f} drift {s['norm_drift']:.1e}")
        print(f"  ({time.perf_counter() - t0:.1f} s)", file=sys.stderr)
    return 0


if __name__ == "__main__":
    os.environ.setdefault("MPLBACKEND", "Agg")
    sys.exit(main())
