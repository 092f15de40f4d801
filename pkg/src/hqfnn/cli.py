"""Command-line entry point: ``train``, ``eval``, ``gradcheck`` and ``noise-sweep``.

Settings come from (lowest to highest precedence) built-in defaults, a ``--preset``,
an INI file given with ``--config`` and explicit flags. INI keys are flag names
without the leading dashes (``qnn-layers = 2``), placed in a section named after the
subcommand or in ``[DEFAULT]``.

Exit codes: 0 success, 1 check failure, 2 usage/config error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import gradcheck, noiselab, qnn
from .errors import HQFNNError, NumericFailure
from .metrics import MetricBundle
from .model import (Checkpoint, Model, ModelSpec, TrainConfig, evaluate, load_checkpoint,
                    save_checkpoint, train)

log = logging.getLogger("hqfnn")

DEFAULT_DATA_DIR = Path(__file__).resolve().parents[2] / "data" / "mnist"

PRESETS = {
    "desk-mnist": {
        "dataset": "idx",
        "images": "{data}/train-images-idx3-ubyte.gz",
        "labels": "{data}/train-labels-idx1-ubyte.gz",
        "test_images": "{data}/t10k-images-idx3-ubyte.gz",
        "test_labels": "{data}/t10k-labels-idx1-ubyte.gz",
        "train_limit": 2000,
        "test_limit": 500,
        "noise_std": 0.05,
        "epochs": 10,
        "qnn_layers": 2,
        "batch": 128,
        "lr": 0.1,
        "seed": 7,
    },
}


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_common(p):
    p.add_argument("--config", help="INI file with default values for the flags (default: none)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    p.add_argument("--threads", type=int, default=1,
                   help="cap on BLAS worker threads; 1 is the serial reference mode (default: %(default)s)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_data(p):
    p.add_argument("--dataset", choices=("idx", "csv"), default="idx",
                   help="input format (default: %(default)s)")
    p.add_argument("--images", help="IDX images file for training/evaluation (default: none)")
    p.add_argument("--labels", help="IDX labels file (default: none)")
    p.add_argument("--csv", help="CSV feature file, header label,f0,f1,... (default: none)")
    p.add_argument("--classes", type=int, default=None,
                   help="class count k (default: 10 for idx, required for csv)")
    p.add_argument("--noise-std", type=float, default=0.0,
                   help="stddev of additive Gaussian pixel noise (default: %(default)s)")
    p.add_argument("--data-dir", default=str(DEFAULT_DATA_DIR),
                   help="directory substituted into preset paths (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hqfnn", description=__doc__.splitlines()[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model and write trace, metrics, confusion, checkpoint")
    _add_common(t)
    _add_data(t)
    t.add_argument("--preset", choices=sorted(PRESETS), default=None,
                   help="named reproducible profile (default: none)")
    t.add_argument("--model", choices=("hqfnn", "fdnn", "cnn", "dnn"), default="hqfnn",
                   help="architecture (default: %(default)s)")
    t.add_argument("--test-images", help="IDX images for the final metrics (default: none)")
    t.add_argument("--test-labels", help="IDX labels for the final metrics (default: none)")
    t.add_argument("--test-csv", help="CSV features for the final metrics (default: none)")
    t.add_argument("--train-limit", type=int, default=None,
                   help="use only the first N training samples (default: all)")
    t.add_argument("--test-limit", type=int, default=None,
                   help="use only the first N test samples (default: all)")
    t.add_argument("--epochs", type=int, default=200, help="training epochs (default: %(default)s)")
    t.add_argument("--batch", type=int, default=128, help="mini-batch size (default: %(default)s)")
    t.add_argument("--lr", type=float, default=0.01, help="initial learning rate (default: %(default)s)")
    t.add_argument("--decay", type=float, default=0.1, help="learning-rate decay factor (default: %(default)s)")
    t.add_argument("--milestone-fraction", type=float, default=0.58,
                   help="decay once after this fraction of the epochs (default: %(default)s)")
    t.add_argument("--val-fraction", type=float, default=0.1,
                   help="share of training data held out for the validation trace (default: %(default)s)")
    t.add_argument("--hidden", type=int, default=None,
                   help="hidden width h (default: 128 for images, 256 for features)")
    t.add_argument("--fuzzy-sets", type=int, default=None, help="fuzzy sets (default: k)")
    t.add_argument("--qnn-layers", type=int, default=2, help="circuit layers L (default: %(default)s)")
    t.add_argument("--qnn-qubits", type=int, default=1, help="qubits per circuit (default: %(default)s)")
    t.add_argument("--dropout", type=float, default=0.4, help="dropout probability (default: %(default)s)")
    t.add_argument("--out", default="run", help="output directory (default: %(default)s)")

    e = sub.add_parser("eval", help="evaluate a checkpoint; writes metrics.json and confusion.csv")
    _add_common(e)
    _add_data(e)
    e.add_argument("--checkpoint", required=False, help="checkpoint file (required)")
    e.add_argument("--limit", type=int, default=None, help="use only the first N samples (default: all)")
    e.add_argument("--out", default="eval", help="output directory (default: %(default)s)")

    g = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    _add_common(g)
    g.add_argument("--tolerance", type=float, default=gradcheck.CIRCUIT_TOL,
                   help="circuit-level max relative error (default: %(default)s)")
    g.add_argument("--model-tolerance", type=float, default=gradcheck.MODEL_TOL,
                   help="end-to-end max relative error (default: %(default)s)")
    g.add_argument("--cases", type=int, default=100, help="random circuits (default: %(default)s)")
    g.add_argument("--max-layers", type=int, default=4, help="largest L sampled (default: %(default)s)")
    g.add_argument("--max-qubits", type=int, default=1, help="largest qubit count sampled (default: %(default)s)")

    n = sub.add_parser("noise-sweep", help="fidelity of a noisy membership circuit over x and gamma")
    _add_common(n)
    n.add_argument("--channel", default="mix_dp", help="ad, dp or mix_dp (default: %(default)s)")
    n.add_argument("--placement", default="end",
                   help="end / end_of_circuit or each / after_each_gate (default: %(default)s)")
    n.add_argument("--gammas", type=_floats, default=list(noiselab.DEFAULT_GAMMAS),
                   help="comma-separated noise probabilities (default: 0.01,0.03,0.05,0.07,0.1)")
    n.add_argument("--x-samples", type=int, default=100, help="evenly spaced x in [-1,1] (default: %(default)s)")
    n.add_argument("--layers", type=int, default=2, help="circuit layers L (default: %(default)s)")
    n.add_argument("--qubits", type=int, default=1, help="circuit qubits (default: %(default)s)")
    n.add_argument("--thetas", type=_floats, default=None,
                   help="comma-separated circuit angles (default: all zero, or random with --random-thetas)")
    n.add_argument("--random-thetas", action="store_true",
                   help="draw angles uniformly in [-pi, pi] from --seed")
    n.add_argument("--out", default="sweep", help="output directory (default: %(default)s)")
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from a preset and an INI file."""
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    defaults = {}
    if getattr(args, "preset", None):
        defaults.update(PRESETS[args.preset])
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise UsageError(f"cannot parse config {path}: {exc}")
        section = cp[args.command] if cp.has_section(args.command) else cp.defaults()
        known = {a.dest: a for a in sub._actions}
        for key, raw in dict(section).items():
            dest = key.replace("-", "_")
            if dest not in known:
                raise UsageError(f"unknown key {key!r} in {path}")
            action = known[dest]
            if action.type is not None:
                try:
                    raw = action.type(raw)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise UsageError(f"bad value for {key} in {path}: {exc}")
            elif isinstance(action, argparse._StoreTrueAction):
                raw = raw.strip().lower() in ("1", "true", "yes", "on")
            defaults[dest] = raw
    if defaults:
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    for key in ("images", "labels", "test_images", "test_labels", "csv", "test_csv"):
        val = getattr(args, key, None)
        if isinstance(val, str) and "{data}" in val:
            setattr(args, key, val.replace("{data}", args.data_dir))
    return args


def _require_file(path, what):
    if not path:
        raise UsageError(f"missing {what}")
    if not Path(path).is_file():
        raise UsageError(f"file not found: {path}")
    return path


def _load(args, role, limit=None, scaling=None, noise_seed=None):
    """Load the dataset named by the main flags (role='train') or the --test-* flags."""
    prefix = "" if role == "train" else "test_"
    if args.dataset == "idx":
        images = getattr(args, f"{prefix}images", None)
        labels = getattr(args, f"{prefix}labels", None)
        if role == "test" and not images and not labels:
            return None
        ds = data_mod.load_idx(_require_file(images, f"--{prefix.replace('_', '-')}images"),
                               _require_file(labels, f"--{prefix.replace('_', '-')}labels"))
        if args.classes and args.classes != ds.num_classes:
            ds = data_mod.Dataset(ds.inputs, ds.labels, ds.kind, args.classes)
    else:
        path = getattr(args, f"{prefix}csv", None)
        if role == "test" and not path:
            return None
        if not args.classes:
            raise UsageError("--classes is required for csv datasets")
        ds = data_mod.load_csv_features(_require_file(path, f"--{prefix.replace('_', '-')}csv"),
                                        args.classes, scaling=scaling)
    if limit is not None:
        ds = ds.subset(np.arange(min(limit, len(ds))))
    if args.noise_std:
        # held-out data gets its own noise stream (seed + 1) so `eval` can reproduce it
        seed = noise_seed if noise_seed is not None else args.seed + (role == "test")
        ds = data_mod.add_gaussian_noise(ds, args.noise_std, seed)
    return ds


def _metrics_json(m: MetricBundle, n: int) -> str:
    payload = {
        "accuracy": round(m.accuracy, 6),
        "macro_precision": round(m.macro_precision, 6),
        "macro_recall": round(m.macro_recall, 6),
        "macro_f1": round(m.macro_f1, 6),
        "n_samples": int(n),
    }
    return json.dumps(payload, indent=2) + "\n"


def _trace_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "loss", "train_acc", "val_acc"])
    for row in trace:
        w.writerow([row["epoch"], f"{row['loss']:.6f}", f"{row['train_acc']:.6f}",
                    f"{row['val_acc']:.6f}"])
    return buf.getvalue()


def _write_eval(out: Path, model, ds):
    cm, metrics = evaluate(model, ds)
    (out / "metrics.json").write_text(_metrics_json(metrics, len(ds)))
    (out / "confusion.csv").write_text(cm.to_csv())
    return metrics


def cmd_train(args) -> int:
    train_ds = _load(args, "train", args.train_limit)
    if len(train_ds) == 0:
        raise UsageError("training dataset is empty")
    test_ds = _load(args, "test", args.test_limit, scaling=train_ds.scaling)
    k = args.classes or train_ds.num_classes
    if train_ds.labels.max() >= k:
        raise UsageError(f"labels exceed class count {k}")
    if args.dataset == "idx":
        spec = ModelSpec(kind=args.model, input_kind="image", classes=k, hidden=args.hidden,
                         fuzzy_sets=args.fuzzy_sets, qnn_layers=args.qnn_layers,
                         qnn_qubits=args.qnn_qubits, dropout_p=args.dropout)
    else:
        spec = ModelSpec(kind=args.model, input_kind="feature", input_dim=train_ds.inputs.shape[1],
                         classes=k, hidden=args.hidden, fuzzy_sets=args.fuzzy_sets,
                         qnn_layers=args.qnn_layers, qnn_qubits=args.qnn_qubits,
                         dropout_p=args.dropout)
    cfg = TrainConfig(epochs=args.epochs, batch=args.batch, lr=args.lr, decay=args.decay,
                      milestone_fraction=args.milestone_fraction, seed=args.seed,
                      val_fraction=args.val_fraction)
    model = Model(spec, seed=args.seed)

    def progress(row):
        print(f"epoch {row['epoch']:3d}  loss {row['loss']:.6f}  train_acc {row['train_acc']:.4f}"
              f"  val_acc {row['val_acc']:.4f}", flush=True)

    result = train(model, train_ds, cfg, progress=progress)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.csv").write_text(_trace_csv(result.trace))
    held = test_ds if test_ds is not None else result.val
    if held is None or len(held) == 0:
        held = train_ds
    metrics = _write_eval(out, model, held)
    save_checkpoint(result.checkpoint, out / "model.ckpt")
    print(f"{spec.kind}: accuracy {metrics.accuracy:.4f}  macro_f1 {metrics.macro_f1:.4f}"
          f"  on {len(held)} samples; outputs in {out}")
    return 0


def cmd_eval(args) -> int:
    ckpt_path = _require_file(args.checkpoint, "--checkpoint")
    ckpt = load_checkpoint(ckpt_path)
    ds = _load(args, "train", args.limit, noise_seed=args.seed + 1)
    if len(ds) == 0:
        raise UsageError("evaluation dataset is empty")
    spec = ckpt.spec
    want_kind = "image" if args.dataset == "idx" else "feature"
    if spec.input_kind != want_kind or (want_kind == "feature" and ds.inputs.shape[1] != spec.input_dim):
        raise UsageError(f"checkpoint expects {spec.input_kind} inputs of size {spec.input_dim}")
    if ds.labels.max() >= spec.classes:
        raise UsageError(f"dataset labels exceed the checkpoint's {spec.classes} classes")
    model = ckpt.to_model()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    m = _write_eval(out, model, ds)
    print(f"accuracy {m.accuracy:.6f}  macro_precision {m.macro_precision:.6f}  "
          f"macro_recall {m.macro_recall:.6f}  macro_f1 {m.macro_f1:.6f}  n={len(ds)}")
    return 0


def cmd_gradcheck(args) -> int:
    reports = [
        gradcheck.circuit_check(args.cases, args.seed, args.tolerance,
                                max_layers=args.max_layers, max_qubits=args.max_qubits),
        gradcheck.model_check(args.seed, args.model_tolerance),
    ]
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: {r.cases} cases, max relative error {r.max_error:.3e} "
              f"(tolerance {r.tolerance:g})")
        if not r.passed:
            print(f"  worst: {r.worst}")
    if all(r.passed for r in reports):
        return 0
    worst = max(reports, key=lambda r: r.max_error / r.tolerance)
    print(f"error: gradient check failed; worst case {worst.name}: {worst.worst}", file=sys.stderr)
    return 1


def cmd_noise_sweep(args) -> int:
    channel = args.channel.upper()
    if channel not in ("AD", "DP", "MIX_DP"):
        raise UsageError(f"unknown channel {args.channel!r}; expected ad, dp or mix_dp")
    placement = noiselab.normalize_placement(args.placement)
    n_params = 3 * args.layers if args.qubits == 1 else args.qubits * args.layers
    if args.thetas is not None:
        thetas = args.thetas
    elif args.random_thetas:
        thetas = np.random.default_rng(args.seed).uniform(-np.pi, np.pi, n_params)
    else:
        thetas = np.zeros(n_params)
    circ = qnn.MembershipCircuit(args.qubits, args.layers, thetas)
    cfg = noiselab.SweepConfig(channel, tuple(args.gammas), args.x_samples, circ, placement)
    table = noiselab.run_sweep(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep_grid.csv").write_text(table.grid_csv())
    (out / "sweep_summary.csv").write_text(table.summary_csv())

    ref_key = "AD" if channel == "AD" else "DP"
    reference = dict(zip(noiselab.DEFAULT_GAMMAS, noiselab.REFERENCE_FIDELITY[ref_key]))
    print(f"channel {channel}  placement {placement}  L={args.layers}  qubits={args.qubits}")
    print("gamma     mean_fidelity  reference")
    for g, m in table.rows:
        ref = reference.get(round(g, 6))
        print(f"{g:<9.4f} {m:.6f}       {'' if ref is None else f'{ref:.4f}'}")
    if channel in ("DP", "MIX_DP"):
        print("note: the Pauli Kraus set {sqrt(1-g) I, sqrt(g/3) X, sqrt(g/3) Z, sqrt(g/3) Y} gives "
              "single-application pure-state fidelity 1 - 2g/3; the reference DP column equals "
              "1 - g/2, i.e. the mixing map (1-g) rho + g I/2 (channel mix_dp).")
    if channel == "AD":
        print("note: the reference AD column depends on circuit depth and noise placement, which "
              "are not documented; it is listed for reference only.")
    print(f"wrote {out / 'sweep_grid.csv'} and {out / 'sweep_summary.csv'}")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
            "noise-sweep": cmd_noise_sweep}


def _limit_threads(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return None
    return threadpool_limits(limits=max(1, n))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse usage errors
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    limiter = _limit_threads(args.threads)
    try:
        return COMMANDS[args.command](args)
    except NumericFailure as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return 3
    except (UsageError, HQFNNError, OSError) as exc:
        print(f"error: {exc}".replace("\n", " "), file=sys.stderr)
        return 2
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
