#!/usr/bin/env python3
"""
Utility to generate a custom configuration file
"""

import argparse
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.config import GROUPINGS, PREFERENCE_MODES, Config


def _ask(prompt: str, default, cast=str):
    text = input(f"{prompt} [{default}]: ").strip()
    return cast(text) if text else default


def interactive_config() -> Config:
    """Create configuration interactively"""
    print("=" * 60)
    print("Visiting-Pattern Miner - Configuration Generator")
    print("=" * 60)

    defaults = Config()
    print("\nCurrent defaults:")
    print(f"  Delta: {defaults.delta_s}s (lambda = delta / 2 = {defaults.lambda_s}s)")
    print(f"  Omega: {defaults.omega_s}s ({defaults.w_units} unit intervals)")
    print(f"  Preference mode: {defaults.preference_mode}")
    print(f"  Minimum support (alpha): {defaults.alpha}")
    print(f"  Grouping: {defaults.grouping}")

    print("\n" + "=" * 60)
    print("Press Enter to keep default values")
    print("=" * 60)

    delta = _ask("\nDelta in seconds", defaults.delta_s, float)
    omega = _ask("Omega in seconds (a multiple of delta / 2)", defaults.omega_s, float)
    mode = _ask(f"Preference mode {PREFERENCE_MODES}", defaults.preference_mode)
    alpha = _ask("Minimum support (alpha)", defaults.alpha, int)
    grouping = _ask(f"Grouping {GROUPINGS}", defaults.grouping)
    jobs = _ask("Worker threads", defaults.jobs, int)

    sweep = [delta / 2 * k for k in (2, 4, 6, 8)]
    return Config(
        delta_s=delta,
        omega_s=omega,
        omega_sweep=sweep,
        preference_mode=mode,
        alpha=alpha,
        grouping=grouping,
        jobs=jobs,
    )


def main():
    parser = argparse.ArgumentParser(
        description="Generate a configuration file for the visiting-pattern miner"
    )
    parser.add_argument(
        "--output",
        "-o",
        type=str,
        default="config/config.yaml",
        help="Output configuration file path (default: config/config.yaml)",
    )
    parser.add_argument(
        "--interactive",
        "-i",
        action="store_true",
        help="Create configuration interactively",
    )

    args = parser.parse_args()

    try:
        config = interactive_config() if args.interactive else Config()
    except ValueError as e:
        print(f"Invalid configuration: {e}")
        return 2

    config.save_yaml(args.output)
    print(f"\n✓ Configuration file created: {args.output}")
    print(f"\nTo use this configuration:")
    print(f"  python -m src.main --config {args.output} <command> ...")

    return 0


if __name__ == "__main__":
    sys.exit(main())
