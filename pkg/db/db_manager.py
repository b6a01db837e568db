"""SQLite store for cached reference solutions and CLI run history."""

import sqlite3
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

from utils.config import DB_PATH
from utils.hashing import hash_bytes


class ResultStore:
    """Manages the SQLite database of reference solutions and runs."""

    def __init__(self, db_path: Optional[Path] = None):
        """
        Initialize the result store.

        Args:
            db_path: Path to SQLite database file (defaults to config DB_PATH)
        """
        self.db_path = Path(db_path) if db_path is not None else DB_PATH
        self.connection: Optional[sqlite3.Connection] = None
        self._ensure_db_exists()

    def _ensure_db_exists(self):
        """Ensure database file and directory exist."""
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        self._create_tables()

    def _get_connection(self) -> sqlite3.Connection:
        """Get or create database connection."""
        if self.connection is None:
            # Sweep workers share one store; writes happen on the calling thread
            self.connection = sqlite3.connect(str(self.db_path), check_same_thread=False)
            self.connection.row_factory = sqlite3.Row
        return self.connection

    def _create_tables(self):
        """Create database tables if they don't exist."""
        conn = self._get_connection()
        cursor = conn.cursor()

        cursor.execute("""
            CREATE TABLE IF NOT EXISTS reference_solutions (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                config_hash TEXT NOT NULL UNIQUE,
                problem TEXT NOT NULL,
                payload BLOB NOT NULL,
                payload_hash TEXT NOT NULL,
                created_at REAL NOT NULL
            )
        """)

        cursor.execute("""
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                command TEXT NOT NULL,
                config_hash TEXT NOT NULL,
                status TEXT DEFAULT 'in_progress',
                output_dir TEXT,
                started_at REAL NOT NULL,
                finished_at REAL
            )
        """)

        cursor.execute("""
            CREATE INDEX IF NOT EXISTS idx_reference_problem ON reference_solutions(problem)
        """)

        conn.commit()

    def save_reference(self, config_hash: str, problem: str, payload: bytes) -> str:
        """
        Insert or replace a cached reference solution.

        Args:
            config_hash: Hash of the settings that produced the payload
            problem: Problem name
            payload: Serialised solution archive

        Returns:
            SHA256 hash of the payload
        """
        conn = self._get_connection()
        cursor = conn.cursor()
        now = datetime.now().timestamp()
        payload_hash = hash_bytes(payload)

        cursor.execute("""
            INSERT INTO reference_solutions
            (config_hash, problem, payload, payload_hash, created_at)
            VALUES (?, ?, ?, ?, ?)
            ON CONFLICT(config_hash) DO UPDATE SET
                problem = excluded.problem,
                payload = excluded.payload,
                payload_hash = excluded.payload_hash,
                created_at = excluded.created_at
        """, (config_hash, problem, sqlite3.Binary(payload), payload_hash, now))

        conn.commit()
        return payload_hash

    def load_reference(self, config_hash: str) -> Optional[bytes]:
        """
        Get a cached payload, verified against its stored hash.

        Args:
            config_hash: Hash of the settings that produced the payload

        Returns:
            Payload bytes, or None when missing or corrupted
        """
        conn = self._get_connection()
        cursor = conn.cursor()

        cursor.execute("""
            SELECT payload, payload_hash
            FROM reference_solutions
            WHERE config_hash = ?
        """, (config_hash,))

        row = cursor.fetchone()
        if row is None:
            return None
        payload = bytes(row['payload'])
        if hash_bytes(payload) != row['payload_hash']:
            return None
        return payload

    def get_reference_info(self, config_hash: str) -> Optional[Dict]:
        """Get metadata of a cached reference without its payload."""
        conn = self._get_connection()
        cursor = conn.cursor()

        cursor.execute("""
            SELECT config_hash, problem, payload_hash, created_at
            FROM reference_solutions
            WHERE config_hash = ?
        """, (config_hash,))

        row = cursor.fetchone()
        return dict(row) if row else None

    def delete_reference(self, config_hash: str):
        """Delete a cached reference solution."""
        conn = self._get_connection()
        cursor = conn.cursor()

        cursor.execute("DELETE FROM reference_solutions WHERE config_hash = ?", (config_hash,))
        conn.commit()

    def create_run(self, command: str, config_hash: str, output_dir: str) -> int:
        """
        Create a new run record.

        Args:
            command: CLI subcommand
            config_hash: Hash of the run configuration
            output_dir: Directory receiving the artifacts

        Returns:
            Run ID
        """
        conn = self._get_connection()
        cursor = conn.cursor()
        now = datetime.now().timestamp()

        cursor.execute("""
            INSERT INTO runs
            (command, config_hash, status, output_dir, started_at)
            VALUES (?, ?, 'in_progress', ?, ?)
        """, (command, config_hash, output_dir, now))

        conn.commit()
        return cursor.lastrowid

    def finish_run(self, run_id: int, status: str = 'completed'):
        """Mark a run as finished with the given status."""
        conn = self._get_connection()
        cursor = conn.cursor()
        now = datetime.now().timestamp()

        cursor.execute("""
            UPDATE runs
            SET finished_at = ?, status = ?
            WHERE id = ?
        """, (now, status, run_id))

        conn.commit()

    def get_run(self, run_id: int) -> Optional[Dict]:
        """Get a run record by ID."""
        conn = self._get_connection()
        cursor = conn.cursor()

        cursor.execute("""
            SELECT id, command, config_hash, status, output_dir, started_at, finished_at
            FROM runs
            WHERE id = ?
        """, (run_id,))

        row = cursor.fetchone()
        return dict(row) if row else None

    def get_runs(self, command: Optional[str] = None) -> List[Dict]:
        """Get all run records, optionally for one command, oldest first."""
        conn = self._get_connection()
        cursor = conn.cursor()

        if command is None:
            cursor.execute("SELECT * FROM runs ORDER BY id")
        else:
            cursor.execute("SELECT * FROM runs WHERE command = ? ORDER BY id", (command,))

        return [dict(row) for row in cursor.fetchall()]

    def close(self):
        """Close database connection."""
        if self.connection:
            self.connection.close()
            self.connection = None

    def __enter__(self):
        """Context manager entry."""
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """Context manager exit."""
        self.close()
