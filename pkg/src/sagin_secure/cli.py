"""Command-line entry point: ``sagin-secure <command> [options]``.

Exit codes: 0 success, 1 usage / missing input / bad config, 3 invariant
violation (a budget, one-hot or range contract broke, or a gradient check
failed its tolerance).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from sagin_secure import harness
from sagin_secure.config import ConfigError

EXIT_ERROR = 1
EXIT_INVARIANT = 3
GRADCHECK_TOL = 1e-4

log = logging.getLogger("sagin_secure")


def _schemes(text):
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = set(names) - set(harness.SCHEMES)
    if bad or not names:
        raise argparse.ArgumentTypeError(f"schemes must be a comma list from {','.join(harness.SCHEMES)}")
    return names


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run config (scenario keys + training sections)")
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default ./out)")
    common.add_argument("--log-every", type=int, default=0, help="log a JSON line every N epochs")

    p = argparse.ArgumentParser(prog="sagin-secure",
                                description="Secure access selection and power control for a "
                                            "satellite / UAV / base-station downlink.")
    p.add_argument("-v", "--verbose", action="store_true", help="INFO-level structured logs on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="draw a seeded channel dataset")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--split", choices=("train", "test"), default="train",
                   help="train draws start at index 0, test draws at a disjoint offset")
    g.add_argument("--name", help="output file name (default <split>.sagds)")

    t = sub.add_parser("train-power", parents=[common], help="train the 27 power nets")
    t.add_argument("--data", type=Path, required=True, help="dataset from `generate`")

    b = sub.add_parser("build-targets", parents=[common], help="27-way sum secrecy targets per draw")
    b.add_argument("--data", type=Path, required=True)
    b.add_argument("--power-bundle", type=Path, required=True)

    a = sub.add_parser("train-access", parents=[common], help="fit the access net; writes the inference bundle")
    a.add_argument("--data", type=Path, required=True)
    a.add_argument("--targets", type=Path, required=True)
    a.add_argument("--power-bundle", type=Path, required=True)

    e = sub.add_parser("evaluate", parents=[common], help="score schemes on a test set")
    e.add_argument("--bundle", type=Path, help="inference bundle directory")
    e.add_argument("--data", type=Path, help="test dataset (default: draw --count test samples)")
    e.add_argument("--count", type=int, help="test draws when --data is absent (default from config)")
    e.add_argument("--schemes", type=_schemes, default=("learned", "equal_power", "fractional_power",
                                                        "random_access"))

    s = sub.add_parser("sweep", parents=[common], help="retrain and evaluate across a budget sweep")
    s.add_argument("--variable", choices=sorted(harness.SWEEP_VARIABLES), default="P_S")
    s.add_argument("--values", type=_floats, default=(0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0),
                   help="comma list of dB values, ascending")
    s.add_argument("--schemes", type=_schemes, default=harness.SCHEMES)

    pl = sub.add_parser("pipeline", parents=[common], help="train everything, check inference, evaluate")
    pl.add_argument("--schemes", type=_schemes, default=("learned", "equal_power", "fractional_power",
                                                         "random_access"))

    gc = sub.add_parser("gradcheck", parents=[common], help="backprop vs finite differences")
    gc.add_argument("--instances", type=int, default=100)
    gc.add_argument("--step", type=float, default=1e-4)
    return p


def _progress(n, net):
    log.info(json.dumps({"event": "power_net_done", "access": n,
                         "final_loss": net.loss_history[-1] if net.loss_history else None}))


def cmd_generate(args, run):
    from sagin_secure.dataset import generate_dataset
    start = 0 if args.split == "train" else harness.TEST_OFFSET
    ds = generate_dataset(run.scenario, args.count, args.seed, start=start)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / (args.name or f"{args.split}.sagds")
    ds.save(path)
    print(f"wrote {len(ds)} draws to {path}")


def _load_dataset(path, run):
    from sagin_secure.dataset import Dataset
    if not Path(path).exists():
        raise harness.MissingArtifact(f"no dataset at {path}; create one with `sagin-secure generate`")
    ds = Dataset.load(path)
    if ds.config.fingerprint() != run.scenario.fingerprint():
        log.warning("dataset %s was drawn under a different scenario config", path)
    return ds


def cmd_train_power(args, run):
    from sagin_secure.plots import plot_loss_histories
    from sagin_secure.power_trainer import train_power_bundle
    ds = _load_dataset(args.data, run)
    tc = run.power.train_config()
    bundle = train_power_bundle(ds, tc, run.scenario, log_every=args.log_every, progress=_progress,
                                dropout_rate=run.power.dropout_rate)
    args.out.mkdir(parents=True, exist_ok=True)
    bundle.save(args.out / "power_bundle.json")
    plot_loss_histories(bundle, args.out / "power_loss.png")
    print(f"wrote {args.out / 'power_bundle.json'}")


def cmd_build_targets(args, run):
    from sagin_secure.access_trainer import build_q_targets
    ds = _load_dataset(args.data, run)
    bundle = harness.load_power_bundle(args.power_bundle)
    q = build_q_targets(ds, bundle, run.scenario, mask_infeasible=run.data.mask_infeasible)
    args.out.mkdir(parents=True, exist_ok=True)
    q.save(args.out / "q_targets.npz")
    print(f"wrote {args.out / 'q_targets.npz'} ({len(q)} x 27); "
          f"mean max target {q.targets.max(axis=1).mean():.4f}")


def cmd_train_access(args, run):
    from sagin_secure.access_trainer import InferencePipeline, QTargetTable, train_access_net
    ds = _load_dataset(args.data, run)
    bundle = harness.load_power_bundle(args.power_bundle)
    if not args.targets.exists():
        raise harness.MissingArtifact(f"no targets at {args.targets}; run `sagin-secure build-targets`")
    q = QTargetTable.load(args.targets)
    net = train_access_net(q, ds, run.access.train_config(), (bundle.feature_mean, bundle.feature_std),
                           dropout_rate=run.access.dropout_rate, log_every=args.log_every)
    path = InferencePipeline(net, bundle).save(args.out)
    print(f"wrote inference bundle {path}")


def _write_rows(rows, out, stem, plot):
    from sagin_secure import plots
    out.mkdir(parents=True, exist_ok=True)
    harness.write_csv(rows, out / f"{stem}.csv")
    plot(rows, out / f"{stem}.png")
    for r in rows:
        print(f"{r.sweep_db:>6g}  {r.scheme:<17} mean {r.mean_sum_secrecy:.4f}  "
              f"violations {r.qos_violation_rate:.2%}")
    print(f"wrote {out / (stem + '.csv')} and {out / (stem + '.png')}")


def cmd_evaluate(args, run):
    from sagin_secure.dataset import generate_dataset
    from sagin_secure.plots import plot_schemes
    pipe = harness.load_pipeline(args.bundle) if args.bundle else None
    if args.data:
        test = _load_dataset(args.data, run)
    else:
        test = generate_dataset(run.scenario, args.count or run.data.n_test, args.seed,
                                start=harness.TEST_OFFSET)
    results = harness.evaluate_schemes(test, run.scenario, args.schemes, pipe, args.seed,
                                       run.data.oracle_grid)
    rows = harness.results_to_rows(results, run.scenario.p_sat_db, args.seed)
    _write_rows(rows, args.out, "evaluation", plot_schemes)


def cmd_sweep(args, run):
    from sagin_secure.plots import plot_sweep
    spec = harness.ExperimentSpec(run, args.variable, args.values, args.schemes, args.seed)
    rows = harness.run_sweep(spec, log_every=args.log_every)
    _write_rows(rows, args.out, "sweep", lambda r, p: plot_sweep(r, p, args.variable))


def cmd_pipeline(args, run):
    from sagin_secure.plots import plot_loss_histories, plot_schemes
    out = harness.run_pipeline(run, args.seed, args.out, args.schemes, log_every=args.log_every,
                               progress=_progress)
    plot_schemes(out.rows, args.out / "evaluation.png")
    plot_loss_histories(out.pipeline.power_bundle, args.out / "power_loss.png")
    for r in out.rows:
        print(f"{r.scheme:<17} mean {r.mean_sum_secrecy:.4f}  violations {r.qos_violation_rate:.2%}")
    print(f"wrote {out.bundle_path} and {out.csv_path}")


def cmd_gradcheck(args, run):
    s = harness.gradcheck_both_shapes(run.scenario, args.instances, args.seed, args.step)
    print(f"power net  (12-20-20-3) max relative error {s.power_max_error:.3e}")
    print(f"access net (12-40-27)   max relative error {s.access_max_error:.3e}")
    print(f"{s.instances} instances, {s.kinks_skipped} ReLU-kink coordinates skipped")
    if not s.max_error < GRADCHECK_TOL:
        raise harness.InvariantViolation(f"gradient check above tolerance {GRADCHECK_TOL:g}")


COMMANDS = {
    "generate": cmd_generate, "train-power": cmd_train_power, "build-targets": cmd_build_targets,
    "train-access": cmd_train_access, "evaluate": cmd_evaluate, "sweep": cmd_sweep,
    "pipeline": cmd_pipeline, "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    np.seterr(over="ignore", under="ignore")
    try:
        run = harness.load_run_config(args.config)
        COMMANDS[args.command](args, run)
    except harness.InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, harness.MissingArtifact, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
