#!/usr/bin/env python3
"""
Depauw zero-noise laboratory

This is the main entry point for the laboratory command line.
It exposes the field, flow, sde, analyze and verify subcommands.

Usage:
    python main.py verify
    python main.py --config config.json --out outputs sde
    depauw-lab field --t 0.6 --grid-n 64
"""

import sys

from src.depauw_lab.cli import main

if __name__ == "__main__":
    sys.exit(main())
