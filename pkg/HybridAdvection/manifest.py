"""
Manifest of dataset-generation runs.

This module provides a sqlite-backed manager that records the configuration
and seeds of every generation run and of each (field, radius, center)
configuration it processed, so any run can be replayed from its seed.
"""

import json
import sqlite3
from contextlib import contextmanager
from datetime import datetime
from typing import Any, Dict, List, Optional

import pytz

from HybridAdvection.models import ConfigurationRecord


class ManifestManager:
    """
    Centralized manager for the generation manifest.

    Attributes:
        db_file (str): Path to the SQLite database file
    """

    def __init__(self, db_file: str):
        """
        Initialize the manager and create the schema if needed.

        Args:
            db_file (str): Path to the SQLite database file
        """
        self.db_file = db_file
        self._ensure_initialized()

    @contextmanager
    def get_connection(self):
        """
        Context manager for database connections.

        Commits on success, rolls back on error, and always closes.

        Yields:
            sqlite3.Connection: Database connection object
        """
        conn = sqlite3.connect(self.db_file)
        try:
            yield conn
            conn.commit()
        except Exception:
            conn.rollback()
            raise
        finally:
            conn.close()

    def _ensure_initialized(self):
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    created_at TEXT,
                    config TEXT,
                    seed INTEGER,
                    n_tuples INTEGER DEFAULT 0,
                    finished_at TEXT
                )
            """)
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS configurations (
                    run_id INTEGER REFERENCES runs(id),
                    idx INTEGER,
                    field_index INTEGER,
                    field_seed INTEGER,
                    radius REAL,
                    center_x REAL,
                    center_y REAL,
                    n_tuples INTEGER,
                    PRIMARY KEY (run_id, idx)
                )
            """)

    def start_run(self, config: Dict[str, Any], seed: int) -> int:
        """
        Record the start of a generation run.

        Args:
            config (Dict[str, Any]): Generation settings
            seed (int): Base seed of the run

        Returns:
            int: The new run ID
        """
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute(
                "INSERT INTO runs (created_at, config, seed) VALUES (?, ?, ?)",
                (datetime.now(pytz.UTC).isoformat(), json.dumps(config, sort_keys=True), seed),
            )
            return int(cursor.lastrowid)

    def add_configurations(self, run_id: int, records: List[ConfigurationRecord]) -> int:
        """
        Store processed configurations of a run.

        Returns:
            int: Number of rows written
        """
        rows = []
        for record in records:
            record.run_id = run_id
            rows.append(record.to_tuple())
        with self.get_connection() as conn:
            conn.cursor().executemany(
                """INSERT OR REPLACE INTO configurations
                   (run_id, idx, field_index, field_seed, radius, center_x, center_y, n_tuples)
                   VALUES (?, ?, ?, ?, ?, ?, ?, ?)""",
                rows,
            )
        return len(rows)

    def finish_run(self, run_id: int, n_tuples: int) -> None:
        with self.get_connection() as conn:
            conn.cursor().execute(
                "UPDATE runs SET n_tuples = ?, finished_at = ? WHERE id = ?",
                (n_tuples, datetime.now(pytz.UTC).isoformat(), run_id),
            )

    def get_run(self, run_id: int) -> Optional[Dict[str, Any]]:
        """
        Retrieve a run by its ID.

        Returns:
            Optional[Dict[str, Any]]: The run's fields, or None if not found
        """
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute(
                "SELECT id, created_at, config, seed, n_tuples, finished_at FROM runs WHERE id = ?",
                (run_id,),
            )
            row = cursor.fetchone()
        if row is None:
            return None
        return {
            "id": row[0],
            "created_at": row[1],
            "config": json.loads(row[2]),
            "seed": row[3],
            "n_tuples": row[4],
            "finished_at": row[5],
        }

    def get_configurations(self, run_id: int) -> List[ConfigurationRecord]:
        """
        Retrieve the configurations of a run in processing order.

        Returns:
            List[ConfigurationRecord]: Records sorted by configuration index
        """
        with self.get_connection() as conn:
            cursor = conn.cursor()
            cursor.execute(
                """SELECT run_id, idx, field_index, field_seed, radius, center_x, center_y, n_tuples
                   FROM configurations WHERE run_id = ? ORDER BY idx""",
                (run_id,),
            )
            rows = cursor.fetchall()
        records = []
        for row in rows:
            try:
                records.append(ConfigurationRecord.from_db_row(row))
            except (ValueError, TypeError):
                # Skip rows that can't be converted
                continue
        return records
