"""
Keyed random streams.

Every stream is a numpy Philox generator keyed by (master seed, stream id),
so any stream can be regenerated bit-identically without touching the others.
Draws within a stream are consumed in step order.

Stream layout:
    0       common noise W
    1       initial positions
    2       bootstrap resampling
    3       random atomic configurations
    16 + i  idiosyncratic noise B^i of particle i
"""

import numpy as np

COMMON_STREAM = 0
INITIAL_STREAM = 1
BOOTSTRAP_STREAM = 2
CONFIGURATION_STREAM = 3
IDIOSYNCRATIC_OFFSET = 16


def stream(seed: int, stream_id: int) -> np.random.Generator:
    """Generator for stream_id under the master seed."""
    if seed < 0 or stream_id < 0:
        raise ValueError(f"Seed and stream id must be >= 0, got {seed}, {stream_id}")
    key = np.array([stream_id, seed], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def particle_stream(seed: int, particle: int) -> np.random.Generator:
    return stream(seed, IDIOSYNCRATIC_OFFSET + particle)
