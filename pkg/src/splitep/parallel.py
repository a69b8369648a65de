"""Worker-count policy shared by the engines."""
from __future__ import annotations

import os


def worker_count() -> int:
    """Workers allowed by ``SEP_THREADS`` (default 1, so runs stay sequential)."""
    raw = os.environ.get("SEP_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"SEP_THREADS must be an integer, got {raw!r}") from None
    return max(n, 1)
