#!/usr/bin/env python3
"""
Visiting-pattern miner
Command-line entry point: one subcommand per pipeline stage
"""

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .appropagation import read_clusters_csv, write_clusters_csv
from .config import GROUPINGS, PREFERENCE_MODES, Config
from .errors import (
    EXIT_INPUT_ERROR,
    EXIT_INVARIANT_FAILURE,
    EXIT_OK,
    ConvergenceError,
    InputError,
    PatternMiningError,
)
from .ingest import read_point_sequences, read_subject_deltas, write_point_sequences, write_subject_deltas
from .patterns import read_patterns_json, write_patterns_csv, write_patterns_json
from .pipeline import PatternMiner
from .preprocess import read_bis, write_bis
from .segtree import load_tree, save_tree
from .synth import read_labels, to_sensor_records, write_labels, write_sensor_csv

logger = logging.getLogger(__name__)

RUN_FILE = "run.json"
DELTAS_FILE = "deltas.csv"


def parse_window(text: str) -> tuple:
    try:
        le, ri = (int(part) for part in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"Window must look like LE:RI, got '{text}'")
    return le, ri


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Mine frequent visiting patterns from sensor detection logs"
    )
    parser.add_argument(
        "--config",
        "-c",
        type=str,
        help="Path to configuration YAML file (default: config/config.yaml)",
    )
    parser.add_argument(
        "--save-config",
        type=str,
        help="Save the resolved configuration to the given file and exit",
    )
    parser.add_argument("--jobs", type=int, help="Worker cap for parallel stages (overrides config file)")
    parser.add_argument("--seed", type=int, help="Random seed (overrides config file)")
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity",
    )
    parser.add_argument(
        "--error-json",
        action="store_true",
        help="Print errors as a JSON object on stdout",
    )
    parser.add_argument(
        "--strict-convergence",
        action="store_true",
        default=None,
        help="Exit with code 3 when affinity propagation does not converge",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", help="Sensor trace -> point sequence file")
    p.add_argument("input", help="Delimited trace with a header row")
    p.add_argument("--output", "-o", required=True, help="Point sequence file to write")
    p.add_argument("--delta-quantile", type=float, help="Gap quantile for the delta estimate")
    p.add_argument("--utc-offset", type=int, help="Seconds added before splitting days")
    p.add_argument("--per-subject-delta", action="store_true", default=None,
                   help="Also estimate delta per subject and write them beside the output")

    p = sub.add_parser("preprocess", help="Point sequence file -> BIS file")
    p.add_argument("input", help="Point sequence file")
    p.add_argument("--output", "-o", required=True, help="BIS file to write")
    p.add_argument("--delta", type=float, help="Sessionization threshold in seconds")
    p.add_argument("--lambda", dest="lambda_s", type=float, help="Unit interval width in seconds")
    p.add_argument("--per-subject-delta", action="store_true", default=None,
                   help="Sessionize each subject with its own estimated delta")
    p.add_argument("--deltas", help="subject,delta_s file (default: the one ingest wrote beside the input)")

    p = sub.add_parser("tree", help="BIS file -> segment tree directory")
    p.add_argument("input", help="BIS file")
    p.add_argument("--output", "-o", required=True, help="Directory for the tree")
    p.add_argument("--omega", type=float, help="Window in seconds")

    p = sub.add_parser("discover", help="Segment tree -> patterns per window")
    p.add_argument("input", help="Segment tree directory")
    p.add_argument("--output", "-o", required=True, help="Directory for patterns and clusters")
    p.add_argument("--window", action="append", type=parse_window, help="LE:RI in unit intervals (repeatable)")
    p.add_argument("--alpha", type=int, help="Minimum pattern support")
    p.add_argument("--mode", choices=PREFERENCE_MODES, help="Preference mode")
    p.add_argument("--grouping", choices=GROUPINGS, help="Cluster all subjects together or each separately")

    p = sub.add_parser("synth", help="Generate a planted dataset")
    p.add_argument("--output", "-o", required=True, help="BIS file to write")
    p.add_argument("--labels", required=True, help="Labels file to write")
    p.add_argument("--n", dest="synth_n", type=int, help="Number of sequences")
    p.add_argument("--false-neg-p", type=float, help="False negative probability per bin")
    p.add_argument("--emit-raw", type=str, help="Also write the detections as a sensor trace CSV")

    p = sub.add_parser("eval", help="Score clusters against planted labels")
    p.add_argument("--clusters", required=True, help="Clusters CSV written by discover")
    p.add_argument("--labels", required=True, help="Labels file")
    p.add_argument("--bis", help="BIS file (accuracy score and baselines)")
    p.add_argument("--patterns", help="Patterns JSON written by discover")
    p.add_argument("--baselines", action="store_true", help="Also score k-means and hierarchical clustering")
    p.add_argument("--beta", type=float, help="F-measure beta (> 1)")
    p.add_argument("--output", "-o", required=True, help="Report JSON to write")

    p = sub.add_parser("sweep", help="Cluster count and accuracy across the omega sweep")
    p.add_argument("input", help="BIS file")
    p.add_argument("--labels", help="Labels file for external metrics")
    p.add_argument("--levels", action="store_true",
                   help="Also sum the accuracy score over every node of each omega's tree")
    p.add_argument("--grouping", choices=GROUPINGS, help="Cluster all subjects together or each separately")
    p.add_argument("--output", "-o", required=True, help="CSV table to write")

    return parser


def load_config(args) -> Config:
    """Config precedence: command-line flags > YAML file > defaults"""
    config_path = args.config
    if not config_path:
        default_config = Path(__file__).parent.parent / "config" / "config.yaml"
        if default_config.exists():
            config_path = str(default_config)
            logger.info("Using configuration file: %s", config_path)

    try:
        if config_path:
            config = Config.from_yaml(config_path)
        else:
            config = Config()
    except FileNotFoundError as e:
        raise InputError(str(e)) from e
    except yaml.YAMLError as e:
        raise InputError(f"Error loading config file: {e}") from e

    overrides = {
        "jobs": args.jobs,
        "seed": args.seed,
        "strict_convergence": args.strict_convergence,
        "delta_quantile": getattr(args, "delta_quantile", None),
        "utc_offset_s": getattr(args, "utc_offset", None),
        "per_subject_delta": getattr(args, "per_subject_delta", None),
        "delta_s": getattr(args, "delta", None),
        "lambda_s": getattr(args, "lambda_s", None),
        "omega_s": getattr(args, "omega", None),
        "alpha": getattr(args, "alpha", None),
        "preference_mode": getattr(args, "mode", None),
        "grouping": getattr(args, "grouping", None),
        "windows": getattr(args, "window", None),
        "synth_n": getattr(args, "synth_n", None),
        "false_neg_p": getattr(args, "false_neg_p", None),
        "beta": getattr(args, "beta", None),
    }
    return config.with_overrides(**overrides)


def file_digest(path) -> str:
    path = Path(path)
    digest = hashlib.sha256()
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for item in files:
        digest.update(item.name.encode())
        digest.update(item.read_bytes())
    return digest.hexdigest()


def write_run_file(output, command: str, config: Config, inputs: list, extra: dict = None):
    """
    Record the resolved config and input digests next to an output

    Directories get `run.json` inside; files get `<name>.run.json` beside them.
    """
    output = Path(output)
    target = output / RUN_FILE if output.is_dir() else output.with_name(f"{output.name}.{RUN_FILE}")
    record = {
        "command": command,
        "version": __version__,
        "config": config.to_dict(),
        "inputs": {str(p): file_digest(p) for p in inputs if p},
    }
    if extra:
        record.update(extra)
    with open(target, "w") as f:
        json.dump(record, f, indent=2, sort_keys=True)


def deltas_path(points) -> Path:
    """Per-subject delta file kept beside a point sequence file"""
    points = Path(points)
    return points.with_name(f"{points.name}.{DELTAS_FILE}")


def _require(path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{what} not found: {path}")
    return path


def _check_convergence(config: Config, converged: bool):
    if not converged and config.strict_convergence:
        raise ConvergenceError("Affinity propagation did not converge")


def cmd_ingest(args, config: Config) -> int:
    miner = PatternMiner(config)
    summary = miner.ingest(_require(args.input, "Trace"))
    write_point_sequences(summary.sequences, args.output)
    print(f"Point sequences saved to: {args.output}")
    if summary.delta is not None:
        print(f"Estimated delta ({config.delta_quantile:.0%} of gaps): {summary.delta}s")
    if config.per_subject_delta:
        deltas = deltas_path(args.output)
        write_subject_deltas(summary.per_subject, deltas)
        print(f"Per-subject deltas ({len(summary.per_subject)} subjects) saved to: {deltas}")
    write_run_file(args.output, "ingest", config, [args.input], {
        "estimated_delta_s": summary.delta,
        "per_subject_delta_s": summary.per_subject,
        "skipped_rows": summary.skipped,
    })
    return EXIT_OK


def cmd_preprocess(args, config: Config) -> int:
    miner = PatternMiner(config)
    sequences = read_point_sequences(args.input)
    per_subject, inputs = None, [args.input]
    if config.per_subject_delta:
        deltas = _require(args.deltas or deltas_path(args.input), "Per-subject delta file")
        per_subject = read_subject_deltas(deltas)
        inputs.append(deltas)
    bis = miner.preprocess(sequences, per_subject)
    write_bis(bis, args.output)
    print(f"{len(bis)} BIS saved to: {args.output}")
    write_run_file(args.output, "preprocess", config, inputs)
    return EXIT_OK


def cmd_tree(args, config: Config) -> int:
    miner = PatternMiner(config)
    tree = miner.build_tree(read_bis(args.input))
    save_tree(tree, args.output)
    print(f"Segment tree ({tree.node_count()} nodes, w={tree.w_units}) saved to: {args.output}")
    write_run_file(args.output, "tree", config, [args.input])
    return EXIT_OK


def cmd_discover(args, config: Config) -> int:
    miner = PatternMiner(config)
    tree = load_tree(_require(args.input, "Segment tree"))
    output = Path(args.output)
    output.mkdir(parents=True, exist_ok=True)

    discoveries = miner.discover(tree)
    for discovery in discoveries:
        le, ri = discovery.window
        write_patterns_json(discovery.patterns, discovery.window, discovery.lam, output / f"patterns_{le}_{ri}.json")
        write_patterns_csv(discovery.patterns, output / f"patterns_{le}_{ri}.csv")
        write_clusters_csv(discovery.clusters(), output / f"clusters_{le}_{ri}.csv")
        print(f"Window [{le}, {ri}): {discovery.n_clusters()} clusters, {len(discovery.patterns)} patterns")
    print(f"Patterns saved to: {output}")

    write_run_file(output, "discover", config, [args.input], {
        "windows": [list(d.window) for d in discoveries],
        "converged": all(d.converged() for d in discoveries),
    })
    _check_convergence(config, all(d.converged() for d in discoveries))
    return EXIT_OK


def cmd_synth(args, config: Config) -> int:
    miner = PatternMiner(config)
    dataset = miner.synth()
    write_bis(dataset.sequences, args.output)
    write_labels(dataset.labels, args.labels)
    print(f"{len(dataset)} planted sequences saved to: {args.output}")
    if args.emit_raw:
        write_sensor_csv(to_sensor_records(dataset.sequences), args.emit_raw)
        print(f"Raw detections saved to: {args.emit_raw}")
    write_run_file(args.output, "synth", config, [], {"params": dataset.params})
    return EXIT_OK


def cmd_eval(args, config: Config) -> int:
    miner = PatternMiner(config)
    truth = read_labels(args.labels)
    clusters = read_clusters_csv(_require(args.clusters, "Clusters file"))

    predicted = np.full(truth.size, -1, dtype=np.int64)
    for cluster_id, members in enumerate(clusters.values()):
        if any(not 0 <= m < truth.size for m in members):
            raise InputError(f"Cluster {cluster_id} references sequences outside the {truth.size} labels")
        predicted[members] = cluster_id
    if (predicted < 0).any():
        raise InputError(f"{int((predicted < 0).sum())} sequences have no cluster")

    sequences = read_bis(args.bis) if args.bis else None
    patterns = read_patterns_json(args.patterns)[2] if args.patterns else None
    report = miner.evaluate(predicted, truth, sequences, patterns, baselines=args.baselines)
    with open(args.output, "w") as f:
        json.dump(report, f, indent=2)
    print(f"Purity {report['purity']:.3f}  Rand index {report['rand_index']:.3f}  "
          f"F{config.beta:g} {report['f_measure']:.3f}")
    print(f"Report saved to: {args.output}")
    inputs = [args.clusters, args.labels, args.bis, args.patterns]
    write_run_file(args.output, "eval", config, inputs)
    return EXIT_OK


def cmd_sweep(args, config: Config) -> int:
    miner = PatternMiner(config)
    sequences = read_bis(args.input)
    truth = read_labels(args.labels) if args.labels else None
    rows = miner.sweep(sequences, truth, levels=args.levels)
    pd.DataFrame(rows).to_csv(args.output, index=False)
    print(f"Sweep table saved to: {args.output}")
    write_run_file(args.output, "sweep", config, [args.input, args.labels])
    _check_convergence(config, all(row["converged"] for row in rows))
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "preprocess": cmd_preprocess,
    "tree": cmd_tree,
    "discover": cmd_discover,
    "synth": cmd_synth,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def report_error(error: Exception, exit_code: int, as_json: bool):
    if as_json:
        print(json.dumps({"error": type(error).__name__, "message": str(error), "exit_code": exit_code}))
    else:
        print(f"Error: {error}", file=sys.stderr)


def main(argv=None):
    """Main entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_config(args)

        if args.save_config:
            config.save_yaml(args.save_config)
            print("Configuration saved. Exiting.")
            return EXIT_OK

        if not args.command:
            parser.print_help()
            return EXIT_INPUT_ERROR

        return COMMANDS[args.command](args, config)
    except PatternMiningError as e:
        report_error(e, e.exit_code, args.error_json)
        return e.exit_code
    except ValueError as e:
        report_error(e, EXIT_INPUT_ERROR, args.error_json)
        return EXIT_INPUT_ERROR
    except Exception as e:
        logger.exception("Unexpected failure")
        report_error(e, EXIT_INVARIANT_FAILURE, args.error_json)
        return EXIT_INVARIANT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
