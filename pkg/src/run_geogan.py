#!/usr/bin/env python3
"""
GeoGAN command-line launcher

Usage:
    python src/run_geogan.py dataset --box 40.70,40.72,-74.02,-73.99 --provider synthetic
    python src/run_geogan.py train --manifest data/geogan/manifest.txt --arch direct
    python src/run_geogan.py gradcheck
"""
import sys
from pathlib import Path

# Make the geogan package importable without installation
sys.path.insert(0, str(Path(__file__).parent))

from geogan.cli import main

if __name__ == "__main__":
    sys.exit(main())
