#!/usr/bin/env python3
"""
Run manifests and the DuckDB run ledger.

Every CLI command describes itself with a RunManifest (resolved parameters,
seed, sample counts, wall time and the sha256 of each output file). The
manifest is written next to the outputs and recorded in a DuckDB file so past
runs can be listed and their outputs re-verified.
"""

import hashlib
import json
import logging
import os
import threading
import uuid
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import duckdb
from pydantic import BaseModel, Field

from src import __version__
from src.config import load_settings

logger = logging.getLogger(__name__)


def file_digest(path: Union[str, Path]) -> str:
    """sha256 hex digest of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class ArtifactDigest(BaseModel):
    path: str
    sha256: str
    bytes: int

    @classmethod
    def of(cls, path: Union[str, Path]) -> "ArtifactDigest":
        path = Path(path)
        return cls(path=str(path), sha256=file_digest(path), bytes=path.stat().st_size)

    def status(self) -> str:
        """ok, missing or mismatch"""
        path = Path(self.path)
        if not path.exists():
            return "missing"
        return "ok" if file_digest(path) == self.sha256 else "mismatch"


class RunManifest(BaseModel):
    """Everything needed to rerun a command and check its outputs"""
    command: str
    argv: List[str] = Field(default_factory=list)
    parameters: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    sample_count: Optional[int] = None
    wall_time_seconds: float = 0.0
    version: str = __version__
    created_at: datetime = Field(default_factory=datetime.now)
    outputs: List[ArtifactDigest] = Field(default_factory=list)

    def add_output(self, path: Union[str, Path]) -> None:
        self.outputs.append(ArtifactDigest.of(path))

    def verify(self) -> Dict[str, str]:
        """Map output path -> ok | missing | mismatch"""
        return {artifact.path: artifact.status() for artifact in self.outputs}

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.model_dump_json(indent=2) + "\n")
        logger.info(f"Wrote manifest for '{self.command}' to {path}")
        return path


class RunLedger:
    """Thread-safe DuckDB store of run manifests"""

    def __init__(self, db_path: Optional[str] = None):
        """Open (and create if needed) the ledger

        Args:
            db_path: Path to the DuckDB file; defaults to GNP_LLT_LEDGER_PATH
        """
        self.db_path = db_path or load_settings().ledger_path

        if os.path.dirname(self.db_path):
            os.makedirs(os.path.dirname(self.db_path), exist_ok=True)

        logger.info(f"Connecting to run ledger at {self.db_path}")
        self.connection = duckdb.connect(self.db_path)
        self.lock = threading.Lock()
        self.initialize_db()

    def initialize_db(self):
        """Create the ledger tables if they don't exist"""
        self.connection.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                id UUID PRIMARY KEY,
                command VARCHAR,
                argv JSON,
                parameters JSON,
                seed UBIGINT,
                sample_count BIGINT,
                wall_time_seconds DOUBLE,
                version VARCHAR,
                created_at TIMESTAMP
            )
        """)
        self.connection.execute("""
            CREATE TABLE IF NOT EXISTS artifacts (
                run_id UUID,
                path VARCHAR,
                sha256 VARCHAR,
                bytes BIGINT,
                FOREIGN KEY (run_id) REFERENCES runs(id)
            )
        """)

    def _execute(self, statements: List[tuple]) -> List[list]:
        """Run (query, params) pairs in one transaction; returns each result set"""
        with self.lock:
            self.connection.execute("BEGIN TRANSACTION")
            try:
                results = [self.connection.execute(query, params).fetchall()
                           for query, params in statements]
                self.connection.execute("COMMIT")
                return results
            except Exception as e:
                self.connection.execute("ROLLBACK")
                logger.error(f"Ledger transaction failed: {e}")
                raise

    def record_run(self, manifest: RunManifest) -> str:
        """Store a manifest and its artifacts

        Returns:
            Run ID
        """
        run_id = str(uuid.uuid4())
        statements = [(
            """
            INSERT INTO runs (id, command, argv, parameters, seed, sample_count,
                              wall_time_seconds, version, created_at)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
            """,
            [run_id, manifest.command, json.dumps(manifest.argv),
             json.dumps(manifest.parameters, default=str), manifest.seed,
             manifest.sample_count, manifest.wall_time_seconds, manifest.version,
             manifest.created_at],
        )]
        for artifact in manifest.outputs:
            statements.append((
                "INSERT INTO artifacts (run_id, path, sha256, bytes) VALUES (?, ?, ?, ?)",
                [run_id, artifact.path, artifact.sha256, artifact.bytes],
            ))
        self._execute(statements)
        logger.info(f"Recorded run {run_id} ({manifest.command}, {len(manifest.outputs)} outputs)")
        return run_id

    @staticmethod
    def _run_row(row) -> Dict[str, Any]:
        return {
            "id": str(row[0]),
            "command": row[1],
            "argv": json.loads(row[2]) if row[2] else [],
            "parameters": json.loads(row[3]) if row[3] else {},
            "seed": row[4],
            "sample_count": row[5],
            "wall_time_seconds": row[6],
            "version": row[7],
            "created_at": row[8].isoformat() if row[8] else None,
        }

    def list_runs(self, limit: int = 20) -> List[Dict[str, Any]]:
        """Most recent runs first"""
        (rows,) = self._execute([(
            """
            SELECT id, command, argv, parameters, seed, sample_count,
                   wall_time_seconds, version, created_at
            FROM runs
            ORDER BY created_at DESC
            LIMIT ?
            """,
            [limit],
        )])
        return [self._run_row(row) for row in rows]

    def get_run(self, run_id: str) -> Optional[Dict[str, Any]]:
        """One run by ID; None if unknown or not a UUID"""
        try:
            uuid.UUID(run_id)
        except ValueError:
            return None
        (rows,) = self._execute([(
            """
            SELECT id, command, argv, parameters, seed, sample_count,
                   wall_time_seconds, version, created_at
            FROM runs
            WHERE id = ?
            """,
            [run_id],
        )])
        return self._run_row(rows[0]) if rows else None

    def artifacts_for(self, run_id: str) -> List[ArtifactDigest]:
        (rows,) = self._execute([(
            "SELECT path, sha256, bytes FROM artifacts WHERE run_id = ? ORDER BY path",
            [run_id],
        )])
        return [ArtifactDigest(path=row[0], sha256=row[1], bytes=row[2]) for row in rows]

    def verify_run(self, run_id: str) -> Dict[str, str]:
        """Re-hash a run's outputs; map path -> ok | missing | mismatch

        Raises:
            KeyError: if the run is not in the ledger
        """
        if self.get_run(run_id) is None:
            raise KeyError(f"No run with ID {run_id}")
        statuses = {artifact.path: artifact.status() for artifact in self.artifacts_for(run_id)}
        failed = [path for path, status in statuses.items() if status != "ok"]
        if failed:
            logger.warning(f"Run {run_id}: {len(failed)} output(s) failed verification")
        return statuses

    def close(self):
        self.connection.close()
        logger.info("Run ledger connection closed")
