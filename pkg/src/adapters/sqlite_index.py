"""SQLite sweep index adapter.

Implements the core SweepIndexPort using a small SQLite database stored next
to the sweep results.
"""

from __future__ import annotations

import json
import os
import sqlite3
from datetime import datetime, timezone
from typing import Optional


class SweepIndex:
    """Thin SQLite wrapper that satisfies the SweepIndexPort contract."""

    def __init__(self, db_path: str) -> None:
        self._db_path = db_path

    def _connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self._db_path)
        conn.row_factory = sqlite3.Row
        return conn

    def init_db(self) -> None:
        """Create the index table if it does not exist."""

        with self._connect() as conn:
            # One row per (grid point, seed); written only after the run's
            # files are on disk so the index never points at missing output.
            # Fields:
            # - point_key: stable label of the grid point (PRIMARY KEY part)
            # - seed: run seed (PRIMARY KEY part)
            # - label: human-readable axis assignment, e.g. rto_min=1ms
            # - overrides: JSON object of dotted override keys applied to the base
            # - files: JSON list of produced file paths, relative to the sweep root
            # - finished_at: wall-clock time the row was written
            conn.execute(
                """
                CREATE TABLE IF NOT EXISTS runs (
                    point_key TEXT NOT NULL,
                    seed INTEGER NOT NULL,
                    label TEXT NOT NULL,
                    overrides TEXT NOT NULL,
                    files TEXT NOT NULL,
                    finished_at TIMESTAMP NOT NULL,
                    PRIMARY KEY (point_key, seed)
                )
                """
            )

    def lookup(self, point_key: str, seed: int) -> Optional[list[str]]:
        """Return the recorded files of a finished run, if any."""

        with self._connect() as conn:
            row = conn.execute(
                "SELECT files FROM runs WHERE point_key = ? AND seed = ?",
                (point_key, seed),
            ).fetchone()
        return list(json.loads(row["files"])) if row else None

    def is_complete(self, point_key: str, seed: int, root: str) -> bool:
        """True when the run is indexed and every file it produced still exists."""

        files = self.lookup(point_key, seed)
        if files is None:
            return False
        return all(os.path.exists(os.path.join(root, path)) for path in files)

    def record(self, point_key: str, seed: int, label: str, overrides_json: str, files: list[str]) -> None:
        """Upsert the index row of a finished run."""

        finished_at = datetime.now(timezone.utc)
        with self._connect() as conn:
            conn.execute(
                """
                INSERT INTO runs (point_key, seed, label, overrides, files, finished_at)
                VALUES (?, ?, ?, ?, ?, ?)
                ON CONFLICT(point_key, seed) DO UPDATE SET
                    label = excluded.label,
                    overrides = excluded.overrides,
                    files = excluded.files,
                    finished_at = excluded.finished_at
                """,
                (point_key, seed, label, overrides_json, json.dumps(files), finished_at.isoformat()),
            )

    def rows(self) -> list[dict]:
        """Return every index row ordered by grid point and seed."""

        with self._connect() as conn:
            rows = conn.execute(
                "SELECT point_key, seed, label, overrides, files FROM runs ORDER BY point_key, seed"
            ).fetchall()
        return [
            {
                "point_key": row["point_key"],
                "seed": int(row["seed"]),
                "label": row["label"],
                "overrides": json.loads(row["overrides"]),
                "files": json.loads(row["files"]),
            }
            for row in rows
        ]
