"""Process-wide instrumentation counters.

The solvers bump these so callers (and tests) can assert how much work
actually happened — e.g. that re-thresholding a cached smoothed image
performs zero solver iterations.
"""

from __future__ import annotations

import threading
from collections import Counter

_lock = threading.Lock()
_counts: Counter = Counter()


def bump(name: str, amount: int = 1) -> None:
    with _lock:
        _counts[name] += amount


def get(name: str) -> int:
    with _lock:
        return _counts.get(name, 0)


def snapshot() -> dict:
    with _lock:
        return dict(_counts)


def reset() -> None:
    with _lock:
        _counts.clear()
