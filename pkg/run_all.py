#!/usr/bin/env python3
"""
Master orchestration script for the GeoGAN desk-scale checks

This script runs the complete verification suite and generates all outputs:
1. Checks the interpreter and package versions
2. Runs the unit tests
3. Runs the finite-difference gradient suite
4. Runs the desk-scale training reproduction (loss curves and graphs)
5. Prints summary report
"""
import importlib
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).parent

REQUIRED = {
    'numpy': 'numpy',
    'pandas': 'pandas',
    'matplotlib': 'matplotlib',
    'torch': 'torch',
    'PIL': 'Pillow',
    'pytest': 'pytest',
}


def in_virtualenv() -> bool:
    return getattr(sys, 'base_prefix', sys.prefix) != sys.prefix or hasattr(sys, 'real_prefix')


def check_environment():
    """Warn outside a virtual environment; the stages still run"""
    if in_virtualenv():
        print(f"✓ Virtual environment: {sys.prefix}")
    else:
        print("⚠️  No virtual environment detected; using the system interpreter")
        print("   (python3 -m venv venv && source venv/bin/activate)")


def check_dependencies():
    """Import every required package and report its version"""
    missing = []
    for module, dist in REQUIRED.items():
        try:
            version = getattr(importlib.import_module(module), '__version__', '?')
            print(f"  ✓ {dist:<12} {version}")
        except ImportError:
            print(f"  ✗ {dist:<12} not installed")
            missing.append(dist)

    if missing:
        print(f"\n✗ Install the missing packages: pip install {' '.join(missing)}")
        print("  (or pip install -r requirements.txt)")
        return False
    return True


def run_stage(title, command):
    """Run one stage as a subprocess; True on exit code 0"""
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)
    result = subprocess.run([sys.executable] + command, cwd=ROOT)
    return result.returncode == 0


def print_final_summary(stages):
    """Print stage outcomes and generated outputs"""
    print("\n" + "=" * 60)
    print("RUN COMPLETE")
    print("=" * 60)

    print("\nStages:")
    for title, ok in stages:
        print(f"  {'✓' if ok else '✗'} {title}")

    print("\nGenerated Outputs:")
    outputs = [
        ("results/reproduction/loss_curve.csv", "Per-step losses"),
        ("results/reproduction/summary.csv", "Early/late loss ratio"),
        ("results/reproduction/graphs/loss_components.png", "Loss component curves"),
        ("results/reproduction/graphs/loss_adversarial.png", "Adversarial curves"),
    ]
    for filepath, description in outputs:
        if (ROOT / filepath).exists():
            print(f"  ✓ {filepath:<52} - {description}")
        else:
            print(f"  ✗ {filepath:<52} - NOT FOUND")

    print("\nNext Steps:")
    print("  1. Step timing:   python benchmarks/timing_profiler.py")
    print("  2. Noise sweep:   python benchmarks/noise_sweep.py")
    print("  3. MNIST check:   python src/run_geogan.py mnist-sanity --data-dir data/mnist")
    print("\n" + "=" * 60)


def main():
    """Main orchestration"""
    print("\n" + "=" * 70)
    print("  GeoGAN satellite-to-map lab: verification suite")
    print("=" * 70)

    print("\n[Pre-flight Checks]")
    check_environment()
    if not check_dependencies():
        sys.exit(1)

    stages = []
    for title, command in [
        ("Unit tests", ["-m", "pytest", "-q", "tests"]),
        ("Gradient verification", ["src/run_geogan.py", "gradcheck"]),
        ("Desk-scale training reproduction", ["benchmarks/benchmark_runner.py"]),
    ]:
        ok = run_stage(title, command)
        stages.append((title, ok))
        if not ok:
            print(f"\n✗ {title} failed!")

    print_final_summary(stages)
    sys.exit(0 if all(ok for _, ok in stages) else 1)


if __name__ == "__main__":
    main()
