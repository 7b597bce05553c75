"""``casediff`` command line: synth, run, check, report."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from ..casebase import SynthConfig, generate_synthetic, save_cases
from ..nn import MlpModel, NetworkSpec, TripletLossParams, check_gradient, finite_diff_check, hidden_stack, mse_loss, triplet_margin_loss
from .config import ExperimentConfig, load_config
from .experiment import run_experiment
from .report import emit_report, parse_report, render_table


def _add_synth_flags(p, prefix=""):
    p.add_argument(f"--{prefix}n", dest="synth_case_count", type=int, help="number of cases")
    p.add_argument(f"--{prefix}dim", dest="synth_feature_dim", type=int, help="feature dimension")
    p.add_argument(f"--{prefix}noise", dest="synth_noise_sigma", type=float, help="feature noise sd")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="casediff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic feature file")
    _add_synth_flags(p)
    p.add_argument("--seed", dest="synth_seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="run the normal or novel-query protocol")
    p.add_argument("--config", help="INI config file ([section] key = value); flags override it")
    p.add_argument("--data", dest="data_path", help="feature file (default: synthetic data)")
    p.add_argument("--setting", choices=("normal", "novel"))
    p.add_argument("--backend", dest="retrieval_backends", help="l1, siamese or 'l1,siamese'")
    p.add_argument("--folds", dest="fold_count", type=int, help="number of folds")
    p.add_argument("--only-folds", dest="folds", help="comma-separated subset of folds to run")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--jobs", dest="n_jobs", type=int, help="folds run in parallel")
    p.add_argument("--out", dest="output", help="report CSV path (default report.csv)")
    p.add_argument("--checkpoint-dir", help="save every trained network per fold into this directory")
    p.add_argument("--quiet", action="store_true", help="do not print the table")
    _add_synth_flags(p, "synth-")

    p = sub.add_parser("check", help="finite-difference gradient suite")
    p.add_argument("--networks", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)

    p = sub.add_parser("report", help="re-render a saved report")
    p.add_argument("path")
    return parser


def _cmd_synth(args):
    changes = {k[len("synth_"):]: v for k, v in vars(args).items() if k.startswith("synth_") and v is not None}
    cfg = SynthConfig(**changes)
    save_cases(generate_synthetic(cfg), args.out)
    print(f"wrote {cfg.case_count} cases (dim {cfg.feature_dim}) to {args.out}")
    return 0


def _cmd_run(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {
        k: v
        for k, v in vars(args).items()
        if k not in ("command", "config", "quiet") and v is not None
    }
    cfg = cfg.override(**overrides)
    report = run_experiment(cfg)
    emit_report(report, cfg.output, stream=None if args.quiet else sys.stdout)
    return 0


def gradient_suite(networks=20, seed=0, tolerance=1e-4, h=1e-5):
    """Check random dense/relu/dropout networks (eval mode) and the triplet loss.

    Returns a list of ``(label, report)``.
    """
    rng = np.random.default_rng(seed)
    results = []
    for k in range(networks):
        depth = int(rng.integers(1, 4))
        widths = rng.integers(1, 33, size=depth)
        d_in = int(rng.integers(1, 9))
        d_out = int(rng.integers(1, 4))
        spec = NetworkSpec(d_in, hidden_stack(widths, dropout_rate=float(rng.choice([0.0, 0.2, 0.5]))), d_out)
        model = MlpModel.initialize(spec, rng).eval()
        for b in model.biases:
            b[:] = rng.normal(0.0, 0.1, size=b.shape)
        X = rng.uniform(-1.0, 1.0, size=(int(rng.integers(1, 6)), d_in))
        target = rng.normal(size=(X.shape[0], d_out))
        report = finite_diff_check(model, X, lambda out: mse_loss(out, target), tolerance, h)
        results.append((f"network {k} sizes={spec.layer_sizes}", report))
    for k in range(5):
        dim = int(rng.integers(2, 9))
        # hinge active, every coordinate >= 0.1 from a kink, and opposite-sided offsets so
        # no anchor coordinate has an exactly flat slope (roundoff would dominate there)
        a = rng.normal(size=dim)
        side = rng.choice([-1, 1], size=dim)
        p = a + side * rng.uniform(0.1, 1.0, size=dim)
        n = a - side * rng.uniform(0.1, 1.0, size=dim)
        params = TripletLossParams(margin=float(np.abs(a - n).sum() + 1.0))
        _, grads = triplet_margin_loss(a, p, n, params)
        report = check_gradient(lambda *v: triplet_margin_loss(*v, params)[0], [a, p, n], grads, tolerance, h)
        results.append((f"triplet {k} dim={dim}", report))
    return results


def _cmd_check(args):
    results = gradient_suite(args.networks, args.seed, args.tolerance)
    failed = 0
    for label, report in results:
        status = "PASS" if report.passed else "FAIL"
        failed += not report.passed
        print(f"{status}  max_rel_err={report.max_relative_error:.3e}  {label}")
    print(f"{len(results) - failed}/{len(results)} gradient checks passed")
    return 1 if failed else 0


def _cmd_report(args):
    print(render_table(parse_report(args.path)))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    handler = {"synth": _cmd_synth, "run": _cmd_run, "check": _cmd_check, "report": _cmd_report}[args.command]
    try:
        return handler(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"casediff {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
