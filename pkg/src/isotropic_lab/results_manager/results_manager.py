#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Result record persistence: JSON-lines records, CSV tables and report categorisation."""

import json
import logging
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Dict, Iterable, List, Mapping, Optional

import numpy as np
import pandas as pd

from src.isotropic_lab.config.settings import TOOL_VERSION
from src.isotropic_lab.errors import UsageError
from src.isotropic_lab.sampler.sampler import Subspace, save_frame

logger = logging.getLogger(__name__)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def payload_of(result: Any) -> Dict[str, Any]:
    """Payload dict of an EstimateCI, ParamEstimate, RelationReport or plain dict."""
    if isinstance(result, dict):
        return result
    if hasattr(result, "to_payload"):
        return result.to_payload()
    raise UsageError(f"Cannot record a result of type {type(result).__name__}")


@dataclass(frozen=True)
class ResultRecord:
    """One line of a result file.

    The payload is reproducible from (config digest, command); the timestamp is not.
    """

    timestamp: str
    tool_version: str
    config_digest: str
    command: str
    payload: Dict[str, Any]

    def to_json(self) -> str:
        return json.dumps(
            {
                "timestamp": self.timestamp,
                "tool_version": self.tool_version,
                "config_digest": self.config_digest,
                "command": self.command,
                "payload": self.payload,
            },
            sort_keys=True,
            default=_json_default,
        )

    def payload_json(self) -> str:
        """Canonical payload text, the part that must match across identical runs."""
        return json.dumps(self.payload, sort_keys=True, default=_json_default)


class ResultsManager:
    """Collects result records and categorises relation reports by verdict."""

    def __init__(self, config_digest: str = "", command: str = ""):
        """Initialize the ResultsManager.

        Args:
            config_digest: Digest of the RunConfig that produced the results
            command: Subcommand name stored with every record
        """
        self.config_digest = config_digest
        self.command = command
        self.records: List[ResultRecord] = []
        # Track categorization
        self.pass_reports: List[Dict[str, Any]] = []
        self.fail_reports: List[Dict[str, Any]] = []
        self.indeterminate_reports: List[Dict[str, Any]] = []
        self.error_entries: List[Dict[str, Any]] = []

    def add_result(self, result: Any) -> ResultRecord:
        """Wrap a result in a ResultRecord and keep it.

        Args:
            result: Anything with ``to_payload`` or a payload dict

        Returns:
            ResultRecord: The stored record
        """
        record = ResultRecord(
            timestamp=datetime.now(timezone.utc).isoformat(),
            tool_version=TOOL_VERSION,
            config_digest=self.config_digest,
            command=self.command,
            payload=payload_of(result),
        )
        self.records.append(record)
        return record

    def add_report(self, report: Any) -> ResultRecord:
        """Store a RelationReport and file it under its verdict."""
        record = self.add_result(report)
        verdict = record.payload.get("verdict")
        if verdict == "pass":
            self.pass_reports.append(record.payload)
        elif verdict == "fail":
            self.fail_reports.append(record.payload)
        elif verdict == "indeterminate":
            self.indeterminate_reports.append(record.payload)
        else:
            raise UsageError(f"Report has unknown verdict {verdict!r}")
        return record

    def add_error(self, error: Any) -> ResultRecord:
        """Store a grid error entry."""
        record = self.add_result(error)
        self.error_entries.append(record.payload)
        return record

    def get_pass_reports(self) -> List[Dict[str, Any]]:
        return self.pass_reports

    def get_fail_reports(self) -> List[Dict[str, Any]]:
        return self.fail_reports

    def get_indeterminate_reports(self) -> List[Dict[str, Any]]:
        return self.indeterminate_reports

    ####################################################################################
    # Files
    ####################################################################################

    def append_jsonl(self, path: str, records: Optional[Iterable[ResultRecord]] = None) -> str:
        """Append records (default: all stored records) to a JSON-lines file.

        Args:
            path: Output file, created with its directory if missing
            records: Records to write

        Returns:
            str: The path written
        """
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        records = list(self.records if records is None else records)
        with open(path, "a", encoding="utf-8") as f:
            for record in records:
                f.write(record.to_json() + "\n")
        logger.info("Appended %d record(s) to %s", len(records), path)
        return path

    def save_witness(self, path: str, subspace: Subspace) -> str:
        """Write a witness frame next to the record file."""
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        save_frame(path, subspace)
        return path


def write_csv(rows: List[Dict[str, Any]], path: str) -> str:
    """Write flat rows as a CSV table through pandas."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    pd.DataFrame(rows).to_csv(path, index=False)
    logger.info("Wrote %d row(s) to %s", len(rows), path)
    return path


def load_jsonl(path: str) -> pd.DataFrame:
    """Load a JSON-lines result file into a flat DataFrame (payload fields dotted).

    Raises:
        UsageError: If the file is missing or a line is not JSON
    """
    if not os.path.exists(path):
        raise UsageError(f"Result file not found: {path}")
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise UsageError(f"{path}:{number} is not valid JSON: {e}") from e
    return pd.json_normalize(rows)


def constants_table(
    frame: pd.DataFrame, orientations: Optional[Mapping[str, str]] = None
) -> pd.DataFrame:
    """Fitted constants per relation (rows) and dimension (columns) from relation reports.

    Each cell reduces the constants over measures and grid points at that n by the
    relation's orientation in ``orientations``: ``max`` for constants that bound from
    above, ``min`` for those that bound from below. Unlisted relations use ``max``.
    Indeterminate reports are left out.
    """
    required = {"payload.kind", "payload.relation", "payload.grid_point.n", "payload.fitted_constant"}
    if frame.empty or not required.issubset(frame.columns):
        return pd.DataFrame()
    reports = frame[frame["payload.kind"] == "relation-report"]
    if "payload.verdict" in reports.columns:
        reports = reports[reports["payload.verdict"] != "indeterminate"]
    reports = reports.dropna(subset=["payload.fitted_constant"])
    if reports.empty:
        return pd.DataFrame()
    cells = (
        reports.groupby(["payload.relation", "payload.grid_point.n"])["payload.fitted_constant"]
        .agg(["max", "min"])
        .reset_index()
    )
    orientation = cells["payload.relation"].map(dict(orientations or {})).fillna("max")
    cells["constant"] = np.where(orientation == "min", cells["min"], cells["max"])
    table = cells.pivot(index="payload.relation", columns="payload.grid_point.n", values="constant")
    table.index.name = "relation"
    table.columns = [int(n) for n in table.columns]
    return table
