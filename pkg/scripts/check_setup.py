#!/usr/bin/env python3
"""
Script to verify installation and run a small planted-data smoke check
"""

import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))


def check_imports():
    """Check if all required packages are installed"""
    print("Checking imports...")
    required_packages = {
        "numpy": "NumPy",
        "scipy": "SciPy",
        "pandas": "pandas",
        "sklearn": "scikit-learn",
        "tslearn": "tslearn",
        "yaml": "PyYAML",
    }

    failed = []
    for package, name in required_packages.items():
        try:
            module = __import__(package)
            print(f"✓ {name} {getattr(module, '__version__', '')}")
        except ImportError:
            print(f"✗ {name} - NOT INSTALLED")
            failed.append(package)

    return len(failed) == 0


def check_config():
    """Load the default configuration file"""
    print("\nChecking configuration...")
    try:
        from src.config import Config

        path = project_root / "config" / "config.yaml"
        config = Config.from_yaml_or_default(str(path))
        print(f"✓ delta={config.delta_s}s lambda={config.lambda_s}s L={config.n_units} w={config.w_units}")
        return True
    except Exception as e:
        print(f"✗ Error loading configuration: {e}")
        return False


def check_pipeline():
    """Cluster a small planted dataset end to end"""
    print("\nRunning planted-data smoke check...")
    try:
        from src.config import Config
        from src.pipeline import PatternMiner

        miner = PatternMiner(Config(synth_n=60))
        dataset = miner.synth()
        tree = miner.build_tree(dataset.sequences)
        discovery = miner.discover(tree)[0]
        report = miner.evaluate(discovery.labels(), dataset.labels)

        print(f"✓ {discovery.n_clusters()} clusters, {len(discovery.patterns)} frequent patterns")
        print(f"  Purity {report['purity']:.3f}  Rand index {report['rand_index']:.3f}  F {report['f_measure']:.3f}")
        return True
    except Exception as e:
        print(f"✗ Error running pipeline: {e}")
        return False


def main():
    print("=" * 80)
    print("Visiting-Pattern Miner - System Check")
    print("=" * 80)
    print()

    results = [
        ("Imports", check_imports()),
        ("Configuration", check_config()),
        ("Pipeline", check_pipeline()),
    ]

    # Summary
    print("\n" + "=" * 80)
    print("CHECK SUMMARY")
    print("=" * 80)
    for name, passed in results:
        status = "✓ PASSED" if passed else "✗ FAILED"
        print(f"{name:20s}: {status}")

    if all(passed for _, passed in results):
        print("\n✓ All checks passed! System is ready.")
        return 0
    print("\n✗ Some checks failed. Please check the output above.")
    return 1


if __name__ == "__main__":
    sys.exit(main())
