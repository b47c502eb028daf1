#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Isotropic Lab - Main Entry Point.

Runs the ``isolab`` command line: functional estimates, parameters, Laplace transform
evaluations, relation checks, dimension scans and result reports.
"""

import sys

from dotenv import load_dotenv

from src.isotropic_lab.cli import main

# Load ISOLAB_SEED / ISOLAB_THREADS from a .env file
load_dotenv()


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
