"""Command-line surface: argparse subcommands over the laboratory modules."""

from .cli import build_parser, main

__all__ = ["build_parser", "main"]
