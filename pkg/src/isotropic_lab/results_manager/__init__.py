"""ResultsManager module for result records, JSON-lines files and CSV tables."""

from .results_manager import (
    ResultRecord,
    ResultsManager,
    constants_table,
    load_jsonl,
    payload_of,
    write_csv,
)

__all__ = [
    "ResultRecord",
    "ResultsManager",
    "constants_table",
    "load_jsonl",
    "payload_of",
    "write_csv",
]
