"""
Machine-readable output for dialpath.

Results go to stdout or to files as JSON or JSONL, with sorted keys so that
reruns with the same seed produce identical bytes.
"""

import json
import os
import sys
from typing import Iterable, Mapping, Optional, TextIO


class OutputWriter:
    """Writes JSON documents and JSONL records to a file or stdout."""

    def __init__(self, logger, stream: Optional[TextIO] = None):
        """
        Initialize the writer.

        Args:
            logger: Logger instance for output
            stream: Default destination (stdout when None)
        """
        self.logger = logger
        self.stream = stream

    @staticmethod
    def dumps(record: Mapping) -> str:
        return json.dumps(record, sort_keys=True, ensure_ascii=False)

    def _open(self, path: Optional[str]):
        if path is None:
            return None
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        return open(path, 'w', encoding='utf-8')

    def write_jsonl(self, records: Iterable[Mapping], path: Optional[str] = None) -> int:
        """
        Write one JSON object per line.

        Returns:
            Number of records written
        """
        handle = self._open(path)
        target = handle or self.stream or sys.stdout
        count = 0
        try:
            for record in records:
                target.write(self.dumps(record) + "\n")
                count += 1
        finally:
            if handle is not None:
                handle.close()
        if path:
            self.logger.log_success(f"Wrote {count} records to {path}")
        return count

    def write_json(self, document: Mapping, path: Optional[str] = None):
        handle = self._open(path)
        target = handle or self.stream or sys.stdout
        try:
            target.write(json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False) + "\n")
        finally:
            if handle is not None:
                handle.close()
        if path:
            self.logger.log_success(f"Wrote {path}")

    def write_text(self, text: str, path: Optional[str] = None):
        handle = self._open(path)
        target = handle or self.stream or sys.stdout
        try:
            target.write(text if text.endswith("\n") else text + "\n")
        finally:
            if handle is not None:
                handle.close()
