import zlib

import numpy as np


def bucket(token: str, buckets: int) -> int:
    """Process-independent token hash (``hash()`` is salted per run)."""
    return zlib.crc32(token.encode("utf-8")) % buckets


def bucket_ids(tokens, buckets: int) -> np.ndarray:
    return np.fromiter((bucket(t, buckets) for t in tokens), dtype=np.int64, count=len(tokens))
