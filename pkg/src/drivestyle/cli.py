"""Command-line entry point.

    drivestyle [--config PATH] [--seed N] [--workers N] [--out DIR] <command> ...

Commands run one pipeline stage each and read the previous stage's files
from the output directory:

    gen       write the synthetic scenario corpus
    plan      plan every scenario under every style
    filter    robust per-style conformance filtering
    emit      build the BEV/FPV instruction datasets
    evaluate  score a predictions file against the emitted ground truth
    plot      render SVG charts from reports
    losses    finite-difference check of the analytic loss gradients

Exit codes: 0 ok, 1 usage or config error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback

import numpy as np

from . import pipeline
from .scenario import ScenarioError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def build_parser():
    p = _Parser(prog="drivestyle", description="Style-conditioned trajectory dataset pipeline.")
    p.add_argument("--config", help="JSON file mirroring PipelineConfig")
    p.add_argument("--seed", type=int, help="global seed (overrides the config)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for plan/emit (default 1)")
    p.add_argument("--out", help="output directory (overrides config output_dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("gen", help="write the scenario corpus")
    sub.add_parser("plan", help="plan all scenarios under all styles")
    sub.add_parser("filter", help="conformance filtering and ordering checks")
    sub.add_parser("emit", help="build instruction datasets")

    ev = sub.add_parser("evaluate", help="score predictions")
    ev.add_argument("--predictions", required=True, help="JSON {id: response} or list of {id, response}")
    ev.add_argument("--ground-truth", help="defaults to <out>/emit/ground_truth.json")
    ev.add_argument("--mode", choices=("per_sample_mean", "aggregate_then_score"))
    ev.add_argument("--success-ade", type=float)
    ev.add_argument("--miss-fde", type=float)
    ev.add_argument("--label", default="model")

    pl = sub.add_parser("plot", help="render charts")
    pl.add_argument("reports", nargs="*", help="report JSON files (default: filter and evaluate reports)")

    lo = sub.add_parser("losses", help="gradient check of the loss functions")
    lo.add_argument("--cases", type=int, default=20)
    return p


def _config(args):
    overrides = {"seed": args.seed, "output_dir": args.out}
    cfg = pipeline.load_config(args.config, **overrides)
    if args.command == "evaluate":
        ev = dict(cfg.evaluate)
        for key in ("mode", "success_ade", "miss_fde"):
            val = getattr(args, key)
            if val is not None:
                ev[key] = val
        cfg.evaluate = ev
        cfg.validate()
    return cfg


def _loss_check(cases, seed):
    from . import losses

    rng = np.random.default_rng(seed)
    worst = {}

    def fd(f, x, h=1e-6):
        g = np.zeros_like(x)
        for i in np.ndindex(x.shape):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            g[i] = (f(xp) - f(xm)) / (2 * h)
        return g

    def rel(a, b):
        return float(np.max(np.abs(a - b)) / max(1e-12, np.max(np.abs(b))))

    for _ in range(cases):
        pred = rng.normal(size=(7, 5))
        gt = rng.normal(size=(7, 5))
        logits = rng.normal(size=(4, 6))
        tgt = rng.integers(0, 6, size=4)
        checks = {
            "ce_loss": (lambda z: losses.ce_loss(z, tgt), logits),
            "reg_loss": (lambda z: losses.reg_loss(z, gt), pred),
            "pikc_loss": (lambda z: losses.pikc_loss(z, 0.5), pred),
            "reg_total": (lambda z: losses.reg_total(losses.PredictedSequence(0.5, z), losses.PredictedSequence(0.5, gt)), pred),
        }
        for name, (f, x) in checks.items():
            _, g = f(x)
            worst[name] = max(worst.get(name, 0.0), rel(g, fd(lambda z: f(z)[0], x)))
    return worst


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers is not None and args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        if args.command == "losses":
            print(json.dumps(_loss_check(args.cases, args.seed or 0), indent=2, sort_keys=True))
            return EXIT_OK
        cfg = _config(args)
        if args.command == "gen":
            man = pipeline.cmd_gen(cfg)
            print(f"wrote {man['count']} scenarios to {cfg.output_dir}/corpus")
        elif args.command == "plan":
            summary = pipeline.cmd_plan(cfg, workers=args.workers)
            counts = ", ".join(f"{k}={v}" for k, v in summary["per_style_instances"].items())
            print(f"planned {len(summary['streams'])} streams ({counts}); {len(summary['failures'])} failures")
        elif args.command == "filter":
            rep = pipeline.cmd_filter(cfg)
            print(f"retained {rep['count_retained']} of {rep['count_in']} instances")
            for v in rep["orderings"]:
                print(f"  {'PASS' if v['passed'] else 'FAIL'} {v['name']}: {v['detail']}")
        elif args.command == "emit":
            mans = pipeline.cmd_emit(cfg, workers=args.workers)
            for dom, man in mans.items():
                print(f"{dom}: {man['count']} samples")
        elif args.command == "evaluate":
            rep = pipeline.cmd_evaluate(cfg, args.predictions, args.ground_truth, args.label)
            print(f"S_final={rep.s_final:.4f} generated={rep.n_generated}/{rep.n_total}" + (" (partial)" if rep.partial else ""))
        elif args.command == "plot":
            for path in pipeline.cmd_plot(cfg, args.reports):
                print(path)
        return EXIT_OK
    except pipeline.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (pipeline.DataError, ScenarioError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # noqa: BLE001 - report and map to the internal-error code
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
