"""Counter-based random streams.

Every sampling operation in the package takes an explicit stream so that
Monte Carlo runs are bit-reproducible across platforms and thread counts.
Streams are numpy Generators backed by Philox (counter-based); substreams
are derived by jumping, so disjoint indices never overlap.
"""

import numpy as np

__all__ = ["stream", "substream"]


def stream(seed):
    """Return the root Generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def substream(seed, index):
    """Return the ``index``-th independent substream of ``seed``.

    Philox jumps advance the counter by 2**128, so substreams with
    distinct indices are non-overlapping by construction.
    """
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)).jumped(int(index) + 1))
