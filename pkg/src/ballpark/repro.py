"""Seeds and fingerprints."""

from __future__ import annotations

import hashlib
import json
import math
import os
import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named consumer of a run's seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def subseed(seed: int, name: str) -> int:
    return int(substream(seed, name).integers(2**31 - 1))


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canonical(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return repr(v) if not math.isfinite(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def fingerprint(config) -> str:
    """Short stable hash of a JSON-able configuration."""
    text = json.dumps(_canonical(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def thread_count(threads: int | None = None) -> int:
    """Worker count: explicit value, else BALLPARK_THREADS (0 = all CPUs), else 1."""
    if threads is None:
        env = os.environ.get("BALLPARK_THREADS", "").strip()
        if not env:
            return 1
        threads = int(env)
    if threads <= 0:
        return os.cpu_count() or 1
    return int(threads)
