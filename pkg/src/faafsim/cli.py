"""Command line: ``faafsim run | oracle | show-config``."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import geometry as geo
from .compliance import load_calibration
from .harness import (SCENARIOS, config_text, load_config, render_matrix,
                      render_plunge_csv, run_experiment, tally_text)
from .simulator import plunge_sweep


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="faafsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment table")
    r.add_argument("--config", help="INI file overriding the scenario preset")
    r.add_argument("--scenario", choices=SCENARIOS)
    r.add_argument("--trials", type=int, help="repetitions per cell")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="output directory")
    r.add_argument("--traces", action="store_true", default=None, help="write per-trial traces")
    r.add_argument("--workers", type=int)

    o = sub.add_parser("oracle", help="insertion-limit sweep for one object/site pair")
    o.add_argument("--object", required=True)
    o.add_argument("--site", required=True)
    o.add_argument("--sweep-yaw", action="store_true", help="report plunge limits (default)")
    o.add_argument("--max-yaw", type=int, default=20)

    s = sub.add_parser("show-config", help="print the resolved configuration")
    s.add_argument("--config")
    s.add_argument("--scenario", choices=SCENARIOS)
    return p


def _cmd_run(a) -> int:
    cfg = load_config(a.config, a.scenario, repetitions=a.trials, seed=a.seed,
                      output_dir=a.out, traces=a.traces, workers=a.workers)
    res = run_experiment(cfg)
    if res.matrix is not None:
        sys.stdout.write(render_matrix(res.matrix))
        sys.stdout.write(tally_text(res))
    else:
        sys.stdout.write(render_plunge_csv(res.plunge))
    return 0 if res.completed else 1


def _cmd_oracle(a) -> int:
    cat = geo.load_catalog()
    obj, site = cat.object(a.object), cat.site(a.site)
    cal = load_calibration()
    comp = cal.compliance.with_grip_width(cat.grip_widths.get(a.object, 0.0))
    rigid = geo.geometric_insertability_limit(obj, site, max_yaw=a.max_yaw)
    compliant = plunge_sweep(obj, site, comp, max_yaw=a.max_yaw, calibration=cal)
    print(f"geometric limit: {rigid} deg")
    print(f"compliant plunge limit: {compliant} deg")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    a = _build_parser().parse_args(argv)
    try:
        if a.command == "run":
            return _cmd_run(a)
        if a.command == "oracle":
            return _cmd_oracle(a)
        sys.stdout.write(config_text(load_config(a.config, a.scenario)))
        return 0
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
