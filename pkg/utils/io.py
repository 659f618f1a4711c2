"""
Atomic file output helpers.

Outputs are written to a temporary file next to the destination and renamed
into place, so a failed command never leaves a partial file behind.
"""

import logging
import os
import tempfile
from typing import Union

logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]


def atomic_write_bytes(path: PathLike, payload: bytes) -> None:
    """Write bytes to path via temp file + os.replace"""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    temp_path = None
    try:
        with tempfile.NamedTemporaryFile(
            dir=directory,
            prefix=f".{os.path.basename(path)}.",
            suffix=".tmp",
            delete=False,
        ) as tmp:
            temp_path = tmp.name
            tmp.write(payload)
            tmp.flush()
            os.fsync(tmp.fileno())
        os.replace(temp_path, path)
        temp_path = None
    finally:
        # Always clean up temp file
        if temp_path and os.path.exists(temp_path):
            try:
                os.unlink(temp_path)
            except OSError as e:
                logger.warning(f"Failed to delete temp file {temp_path}: {e}")


def atomic_write_text(path: PathLike, text: str) -> None:
    """UTF-8 text variant; newlines are written verbatim"""
    atomic_write_bytes(path, text.encode("utf-8"))
