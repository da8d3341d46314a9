"""Command line front-end.

    deeprf theory   --preset fig1_left --d 1000 --out out/
    deeprf simulate --preset fig2_left --seeds 20 --out out/
    deeprf compare  --preset fig1_left --d 300 --seeds 10 --out out/
    deeprf compare  --preset fig1_left --gcm --out out/
    deeprf spectrum --preset fig4_top --out out/
    deeprf implicit-reg-study --d 300 --out out/

--config takes a JSON run spec instead of a preset; see README for the
schema. Exit status is nonzero when a compare-mode threshold is violated.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .exceptions import DeepRFError
from .harness import run
from .presets import PRESETS, config_from_json, get_preset


def _add_common(p):
    p.add_argument("--preset", help=f"one of: {', '.join(sorted(PRESETS))}")
    p.add_argument("--config", help="JSON run spec (file path)")
    p.add_argument("--d", type=int, help="input dimension override")
    p.add_argument("--seeds", type=int, help="number of simulation seeds")
    p.add_argument("--out", default="deeprf-out", help="output directory")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--paper-scale", action="store_true",
                   help="use the source-figure dimensions (d=1000, more seeds)")
    p.add_argument("--master-seed", type=int, default=None)


def _load(args):
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        cfg = config_from_json(doc)
        if args.paper_scale:
            cfg = cfg.with_overrides(d=1000, seeds=max(cfg.seeds, 20))
        cfg = cfg.with_overrides(d=args.d, seeds=args.seeds)
    elif args.preset:
        cfg = get_preset(args.preset, d=args.d, seeds=args.seeds,
                         paper_scale=args.paper_scale)
    else:
        raise DeepRFError("provide --preset or --config")
    if args.master_seed is not None:
        cfg = cfg.with_overrides(master_seed=args.master_seed)
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="deeprf", description="deep random features: asymptotics vs simulation"
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in ("theory", "simulate", "compare", "spectrum", "implicit-reg-study"):
        p = sub.add_parser(mode)
        _add_common(p)
        if mode == "compare":
            p.add_argument("--gcm", action="store_true",
                           help="compare true features against equivalent Gaussian features")
    args = parser.parse_args(argv)
    try:
        if args.mode == "implicit-reg-study" and not (args.preset or args.config):
            from .presets import fig3_config

            cfg = fig3_config("tanh", 1).with_overrides(d=args.d, seeds=args.seeds)
            if args.master_seed is not None:
                cfg = cfg.with_overrides(master_seed=args.master_seed)
        else:
            cfg = _load(args)
        report = run(cfg, args.mode, args.out, threads=args.threads,
                     gcm=getattr(args, "gcm", False))
    except DeepRFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summary = {k: v for k, v in report.items() if k != "exit_code"}
    print(json.dumps(summary, indent=2, default=float))
    return int(report.get("exit_code", 0))


if __name__ == "__main__":
    sys.exit(main())
