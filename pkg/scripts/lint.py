#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Lint and test gate for isotropic-lab.

Formats src/, tests/ and main.py with the manifest's tools and can finish with the fast
test suite (everything not marked ``slow``).
"""

import argparse
import subprocess
import sys
from pathlib import Path
from typing import List

PROJECT_ROOT = Path(__file__).parent.parent

DEFAULT_TARGETS = ["src/isotropic_lab", "tests", "main.py"]

# flake8 runs with the black line length; E203 and W503 conflict with black
FLAKE8_ARGS = ["--max-line-length", "100", "--extend-ignore", "E203,W503"]


def run_step(cmd: List[str], description: str) -> bool:
    """Run one tool and report whether it exited cleanly."""
    print(f"\n\033[1;34m>>> {description}...\033[0m")
    return subprocess.run(cmd, cwd=PROJECT_ROOT).returncode == 0


def build_steps(targets: List[str], check_only: bool, with_tests: bool) -> List[tuple]:
    """Commands to run, in order, as (argv, description) pairs."""
    steps = []
    if not check_only:
        steps.append(
            (
                ["autoflake", "--recursive", "--remove-all-unused-imports", "--in-place", *targets],
                "Removing unused imports",
            )
        )
    steps.append((["isort", *targets] + (["--check-only"] if check_only else []), "Sorting imports"))
    steps.append((["black", *targets] + (["--check"] if check_only else []), "Formatting with Black"))
    steps.append((["flake8", *FLAKE8_ARGS, *targets], "Checking with flake8"))
    if with_tests:
        steps.append((["pytest", "-q", "-m", "not slow"], "Running fast tests"))
    return steps


def main() -> int:
    parser = argparse.ArgumentParser(description="Lint isotropic-lab and optionally run fast tests")
    parser.add_argument("--check", action="store_true", help="Check only, don't modify files")
    parser.add_argument("--tests", action="store_true", help="Run pytest -m 'not slow' afterwards")
    parser.add_argument("paths", nargs="*", help=f"Targets (default: {' '.join(DEFAULT_TARGETS)})")
    args = parser.parse_args()

    targets = args.paths or DEFAULT_TARGETS
    steps = build_steps(targets, args.check, args.tests)
    results = [run_step(cmd, description) for cmd, description in steps]

    if all(results):
        print("\n\033[1;32m>>> All checks passed!\033[0m")
        return 0
    print(f"\n\033[1;31m>>> {results.count(False)} check(s) failed.\033[0m")
    return 1


if __name__ == "__main__":
    sys.exit(main())
