"""Command-line surface: learn / synth / corrupt / cluster / evaluate / extend /
experiment.

Exit codes: 0 success, 1 I/O or parse failure, 2 invalid configuration,
3 hard-mode non-convergence.  Every subcommand is deterministic given
``--seed``; numeric defaults are echoed into the emitted JSON so results are
self-describing.  A ``--config`` file of ``key=value`` lines supplies
defaults that explicit flags override.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .clustering import adjusted_rand_index, kernel_kmeans
from .constraints import (
    corrupt_triplets,
    read_triplets,
    synthesize_from_labels,
    write_triplets,
)
from .containers import (
    load_factored,
    read_kernel_binary,
    save_factored,
    write_json,
    write_kernel_binary,
    write_kernel_text,
)
from .datasets import DataFormatError, load_dataset
from .extension import build_extension
from .kernels import adaptive_bandwidths, gaussian_kernel, lift_kernel, low_rank_factorize
from .learner import LearnerConfig, learn

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3


def _parse_binary_map(text):
    if text is None:
        return None
    mapping = {}
    try:
        for part in text.split(","):
            key, val = part.split(":")
            mapping[int(key)] = int(val)
    except ValueError:
        raise ValueError(
            f"--binary-map expects 'label:superlabel,...', got {text!r}"
        ) from None
    return mapping


def _parse_int_list(text):
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _parse_float_list(text):
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _read_config_file(path):
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ValueError(f"{path}: line {lineno}: expected key=value, got {text!r}")
            key, val = (part.strip() for part in text.split("=", 1))
            values[key.replace("-", "_")] = val
    return values


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0, help="RNG seed")
    parser.add_argument("--config", default=None,
                        help="key=value config file; explicit flags override it")


def _add_data_args(parser):
    parser.add_argument("--data", required=True, help="dataset file")
    parser.add_argument("--format", choices=["delimited", "sparse"], default="delimited")


def _add_learn_args(parser):
    parser.add_argument("--mode", choices=["hard", "soft"], default="hard")
    parser.add_argument("--gamma2", type=float, default=2.0,
                        help="squared outlier margin (> 1)")
    parser.add_argument("--lambda-neq", type=float, default=1e5)
    parser.add_argument("--lambda-eq", type=float, default=1e5)
    parser.add_argument("--energy", type=float, default=0.9,
                        help="Frobenius energy kept by the low-rank factorization")
    parser.add_argument("--knn", type=int, default=7,
                        help="neighbor rank for adaptive bandwidths")
    parser.add_argument("--max-epochs", type=int, default=200)
    parser.add_argument("--tol", type=float, default=1e-6,
                        help="relative constraint-satisfaction tolerance")
    parser.add_argument("--alpha-tol", type=float, default=1e-4,
                        help="soft-mode multiplier stabilization tolerance")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="relkernel",
        description="Kernel learning from relative-distance comparisons",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn a kernel from data and constraints")
    _add_data_args(p)
    p.add_argument("--constraints", required=True, help="triplet constraint file")
    _add_learn_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--save-lifted", action="store_true",
                   help="also write the lifted n x n kernel container")
    _add_common(p)

    p = sub.add_parser("synth", help="synthesize triplet constraints from labels")
    _add_data_args(p)
    p.add_argument("--n-triplets", type=int, required=True)
    p.add_argument("--triplet-mode", choices=["multiclass", "binary", "mixed"],
                   default="multiclass")
    p.add_argument("--binary-map", default=None,
                   help="label:superlabel pairs, e.g. '0:0,1:0,2:1,3:1'")
    p.add_argument("--eq-mode", choices=["none", "same_class", "cross_class", "random"],
                   default="none")
    p.add_argument("--n-eq", type=int, default=0)
    p.add_argument("--out", required=True, help="constraint file to write")
    _add_common(p)

    p = sub.add_parser("corrupt", help="swap outliers in a fraction of constraints")
    p.add_argument("--constraints", required=True)
    p.add_argument("--noise", type=float, required=True, help="fraction in [0, 1]")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("cluster", help="kernel k-means on a kernel container")
    p.add_argument("--kernel", required=True,
                   help="binary kernel container or factored .npz")
    p.add_argument("--k", type=int, required=True, help="cluster count")
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--out", required=True, help="assignments CSV to write")
    _add_common(p)

    p = sub.add_parser("evaluate", help="Adjusted Rand index of assignments vs labels")
    p.add_argument("--assignments", required=True, help="index,cluster CSV")
    _add_data_args(p)
    p.add_argument("--binary-map", default=None,
                   help="optional label remap before scoring")
    p.add_argument("--out", required=True, help="evaluation JSON to write")
    _add_common(p)

    p = sub.add_parser("extend", help="learned-kernel Gram matrix over new points")
    p.add_argument("--factored", required=True,
                   help="factored .npz written by 'learn' (self-contained)")
    _add_data_args(p)
    p.add_argument("--out", required=True, help="Gram container to write")
    p.add_argument("--text", action="store_true", help="write delimited text instead")
    _add_common(p)

    p = sub.add_parser("experiment", help="constraint-count sweep with repeated trials")
    _add_data_args(p)
    _add_learn_args(p)
    p.add_argument("--modes", default=None,
                   help="comma list overriding --mode, e.g. 'hard,soft'")
    p.add_argument("--grid", default="10,20,40,60,80",
                   help="comma list of constraint counts")
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--noise", default="0",
                   help="comma list of corruption fractions")
    p.add_argument("--k", type=int, required=True, help="cluster count")
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--triplet-mode", choices=["multiclass", "binary", "mixed"],
                   default="multiclass")
    p.add_argument("--binary-map", default=None)
    p.add_argument("--eq-mode", choices=["none", "same_class", "cross_class", "random"],
                   default="none")
    p.add_argument("--n-eq", type=int, default=0)
    p.add_argument("--baseline", action="store_true",
                   help="also score kernel k-means on the initial kernel")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)

    return parser


def _apply_config_file(parser, argv):
    """Inject config-file values as typed parser defaults, so flags override them."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        return argv
    values = _read_config_file(argv[idx + 1])
    sub_name = argv[0]
    for group_action in parser._subparsers._group_actions:  # noqa: SLF001
        if sub_name not in group_action.choices:
            continue
        subparser = group_action.choices[sub_name]
        known = {}
        for action in subparser._actions:  # noqa: SLF001
            if action.dest not in values:
                continue
            raw = values[action.dest]
            if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
                known[action.dest] = raw.lower() in ("1", "true", "yes")
            elif action.type is not None:
                known[action.dest] = action.type(raw)
            else:
                known[action.dest] = raw
            if action.choices and known[action.dest] not in action.choices:
                raise ValueError(
                    f"config value {action.dest}={raw!r} not in {sorted(action.choices)}"
                )
            if action.required:
                action.required = False
        unknown = set(values) - set(known)
        if unknown:
            raise ValueError(f"config file sets unknown keys {sorted(unknown)}")
        subparser.set_defaults(**known)
    return argv


def _learner_config(args):
    return LearnerConfig(
        gamma2=args.gamma2,
        mode=args.mode,
        lambda_neq=args.lambda_neq,
        lambda_eq=args.lambda_eq,
        satisfy_tolerance=args.tol,
        max_epochs=args.max_epochs,
        alpha_stabilize_tol=args.alpha_tol,
        seed=args.seed,
        energy=args.energy,
    )


def _build_initial(ds, knn, energy):
    sigmas = adaptive_bandwidths(ds.features, knn)
    k0 = gaussian_kernel(ds.features, sigmas)
    return sigmas, k0, low_rank_factorize(k0, energy)


def cmd_learn(args):
    ds = load_dataset(args.data, args.format)
    triplets = read_triplets(args.constraints)
    sigmas, _, fk0 = _build_initial(ds, args.knn, args.energy)
    cfg = _learner_config(args)
    fk, report = learn(fk0, triplets, cfg)
    os.makedirs(args.out, exist_ok=True)
    save_factored(os.path.join(args.out, "factored.npz"), fk,
                  features=ds.features, sigmas=sigmas, n_neighbors=args.knn)
    if args.save_lifted:
        write_kernel_binary(lift_kernel(fk), os.path.join(args.out, "kernel.kmat"))
    write_json(report.to_dict(), os.path.join(args.out, "report.json"))
    if cfg.mode == "hard" and not report.converged:
        print(f"not converged after {report.epochs} epochs "
              f"(max violation {report.final_max_violation:.3e})", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_synth(args):
    ds = load_dataset(args.data, args.format)
    if ds.labels is None:
        raise ValueError(f"{args.data} has no labels; synthesis needs them")
    triplets = synthesize_from_labels(
        ds.labels,
        n_triplets=args.n_triplets,
        mode=args.triplet_mode,
        eq_mode=args.eq_mode,
        n_eq=args.n_eq,
        seed=args.seed,
        binary_map=_parse_binary_map(args.binary_map),
    )
    write_triplets(triplets, args.out)
    write_json(
        {
            "schema_version": 1,
            "kind": "provenance",
            "command": "synth",
            "seed": args.seed,
            "source": args.data,
            "output": args.out,
            "parameters": {
                "n_triplets": args.n_triplets,
                "triplet_mode": args.triplet_mode,
                "binary_map": args.binary_map,
                "eq_mode": args.eq_mode,
                "n_eq": args.n_eq,
            },
        },
        args.out + ".provenance.json",
    )
    return EXIT_OK


def cmd_corrupt(args):
    triplets = read_triplets(args.constraints)
    if not 0.0 <= args.noise <= 1.0:
        raise ValueError(f"--noise must lie in [0, 1], got {args.noise}")
    corrupted = corrupt_triplets(triplets, args.noise, args.seed)
    write_triplets(corrupted, args.out)
    write_json(
        {
            "schema_version": 1,
            "kind": "provenance",
            "command": "corrupt",
            "seed": args.seed,
            "source": args.constraints,
            "output": args.out,
            "parameters": {"noise": args.noise, "n_triplets": len(triplets)},
        },
        args.out + ".provenance.json",
    )
    return EXIT_OK


def _load_kernel_any(path):
    if path.endswith(".npz"):
        fk, _ = load_factored(path)
        return lift_kernel(fk)
    return read_kernel_binary(path)


def cmd_cluster(args):
    kernel = _load_kernel_any(args.kernel)
    result = kernel_kmeans(kernel, args.k, n_init=args.n_init,
                           max_iter=args.max_iter, seed=args.seed)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "cluster"])
        for idx, cluster in enumerate(result.assignments):
            writer.writerow([idx, int(cluster)])
    return EXIT_OK


def _read_assignments(path):
    with open(path, "r", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if rows and rows[0][:2] == ["index", "cluster"]:
        rows = rows[1:]
    try:
        pairs = [(int(r[0]), int(r[1])) for r in rows if r]
    except (ValueError, IndexError):
        raise ValueError(f"{path}: expected 'index,cluster' integer rows") from None
    pairs.sort()
    return np.array([c for _, c in pairs], dtype=np.int64)


def cmd_evaluate(args):
    assignments = _read_assignments(args.assignments)
    ds = load_dataset(args.data, args.format)
    if ds.labels is None:
        raise ValueError(f"{args.data} has no labels to evaluate against")
    labels = ds.labels
    mapping = _parse_binary_map(args.binary_map)
    if mapping is not None:
        labels = np.array([mapping[int(l)] for l in labels], dtype=np.int64)
    if len(assignments) != len(labels):
        raise ValueError(
            f"assignment count {len(assignments)} does not match label count {len(labels)}"
        )
    ar = adjusted_rand_index(assignments, labels)
    write_json(
        {
            "schema_version": 1,
            "kind": "evaluation",
            "adjusted_rand": float(ar),
            "n_items": int(len(labels)),
            "n_clusters": int(len(np.unique(assignments))),
            "assignments": args.assignments,
            "labels_source": args.data,
        },
        args.out,
    )
    print(f"adjusted_rand {ar:.6f}")
    return EXIT_OK


def cmd_extend(args):
    fk, extras = load_factored(args.factored)
    missing = {"features", "sigmas", "n_neighbors"} - set(extras)
    if missing:
        raise ValueError(
            f"{args.factored} lacks {sorted(missing)}; re-run 'learn' to produce a "
            "self-contained archive"
        )
    ext = build_extension(fk, extras["features"], extras["sigmas"], extras["n_neighbors"])
    ds = load_dataset(args.data, args.format)
    gram = ext.gram(ds.features)
    if args.text:
        write_kernel_text(gram, args.out)
    else:
        write_kernel_binary(gram, args.out)
    return EXIT_OK


def _trial_seed(root, *parts):
    return np.random.SeedSequence((root,) + tuple(parts)).generate_state(1)[0]


def cmd_experiment(args):
    ds = load_dataset(args.data, args.format)
    if ds.labels is None:
        raise ValueError(f"{args.data} has no labels; the sweep synthesizes constraints")
    grid = _parse_int_list(args.grid)
    noise_levels = _parse_float_list(args.noise)
    modes = [args.mode] if args.modes is None else [m.strip() for m in args.modes.split(",")]
    for mode in modes:
        if mode not in ("hard", "soft"):
            raise ValueError(f"unknown mode {mode!r} in --modes")
    if args.trials < 1:
        raise ValueError("--trials must be >= 1")
    binary_map = _parse_binary_map(args.binary_map)

    sigmas, k0, fk0 = _build_initial(ds, args.knn, args.energy)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for noise in noise_levels:
        for n_constraints in grid:
            for trial in range(args.trials):
                synth_seed = _trial_seed(args.seed, int(round(noise * 1000)),
                                         n_constraints, trial, 0)
                cluster_seed = _trial_seed(args.seed, int(round(noise * 1000)),
                                           n_constraints, trial, 1)
                triplets = synthesize_from_labels(
                    ds.labels, n_triplets=n_constraints, mode=args.triplet_mode,
                    eq_mode=args.eq_mode, n_eq=args.n_eq, seed=synth_seed,
                    binary_map=binary_map,
                )
                if noise > 0:
                    triplets = corrupt_triplets(triplets, noise, synth_seed + 1)
                for mode in modes:
                    cfg = _learner_config(args)
                    cfg.mode = mode
                    cfg.seed = int(synth_seed)
                    fk, _ = learn(fk0, triplets, cfg)
                    result = kernel_kmeans(lift_kernel(fk), args.k,
                                           n_init=args.n_init, seed=cluster_seed)
                    ar = adjusted_rand_index(result.assignments, ds.labels)
                    rows.append(("learned", mode, n_constraints, noise, trial, ar))
                if args.baseline:
                    result = kernel_kmeans(k0, args.k, n_init=args.n_init,
                                           seed=cluster_seed)
                    ar = adjusted_rand_index(result.assignments, ds.labels)
                    rows.append(("initial", "none", n_constraints, noise, trial, ar))

    trials_path = os.path.join(args.out, "trials.csv")
    with open(trials_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "mode", "n_constraints", "noise", "trial", "ar"])
        for row in rows:
            writer.writerow([row[0], row[1], row[2], f"{row[3]:.10g}", row[4],
                             f"{row[5]:.10g}"])

    aggregate = {}
    for method, mode, n_constraints, noise, _, ar in rows:
        aggregate.setdefault((method, mode, n_constraints, noise), []).append(ar)
    aggregate_path = os.path.join(args.out, "aggregate.csv")
    with open(aggregate_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "mode", "n_constraints", "noise", "mean_ar"])
        for key in sorted(aggregate, key=lambda k: (k[0], k[1], k[3], k[2])):
            mean_ar = float(np.mean(aggregate[key]))
            writer.writerow([key[0], key[1], key[2], f"{key[3]:.10g}", f"{mean_ar:.10g}"])

    write_json(
        {
            "schema_version": 1,
            "kind": "experiment",
            "seed": args.seed,
            "grid": grid,
            "trials": args.trials,
            "modes": modes,
            "noise": noise_levels,
            "trials_csv": trials_path,
            "aggregate_csv": aggregate_path,
            "parameters": {
                "data": args.data,
                "k": args.k,
                "n_init": args.n_init,
                "gamma2": args.gamma2,
                "lambda_neq": args.lambda_neq,
                "lambda_eq": args.lambda_eq,
                "energy": args.energy,
                "knn": args.knn,
                "max_epochs": args.max_epochs,
                "tol": args.tol,
                "alpha_tol": args.alpha_tol,
                "triplet_mode": args.triplet_mode,
                "binary_map": args.binary_map,
                "eq_mode": args.eq_mode,
                "n_eq": args.n_eq,
                "baseline": args.baseline,
            },
        },
        os.path.join(args.out, "experiment.json"),
    )
    return EXIT_OK


_COMMANDS = {
    "learn": cmd_learn,
    "synth": cmd_synth,
    "corrupt": cmd_corrupt,
    "cluster": cmd_cluster,
    "evaluate": cmd_evaluate,
    "extend": cmd_extend,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        if argv and argv[0] in _COMMANDS:
            argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
