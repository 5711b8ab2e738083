"""Reproducible Random Streams

Counter-based (Philox) generators keyed by (seed, stream, block). Paths
are cut into fixed-size blocks; each block draws from its own key, so a
path receives the same numbers whatever the number of worker threads and
whatever the total path count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from enum import IntEnum
from typing import Callable, List, Sequence, Tuple, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")


class Stream(IntEnum):
    """Independent uses of randomness within one run"""
    BROWNIAN = 0
    CHAIN = 1
    THETA = 2
    PILOT = 3
    PARTICLES = 4
    NESTED = 5


def generator(seed: int, stream: Stream, block: int = 0) -> np.random.Generator:
    """Philox generator for one (seed, stream, block) key

    Args:
        seed: Scenario seed
        stream: Which use of randomness
        block: Block index within the stream

    Returns:
        Independent numpy Generator
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(sequence))


def path_blocks(n_paths: int, block_size: int) -> List[Tuple[int, int, int]]:
    """Split [0, n_paths) into (block, start, stop) triples of fixed size"""
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    return [
        (index, start, min(start + block_size, n_paths))
        for index, start in enumerate(range(0, n_paths, block_size))
    ]


def map_blocks(
    func: Callable[[int, int, int], T],
    blocks: Sequence[Tuple[int, int, int]],
    workers: int = 1,
) -> List[T]:
    """Apply func(block, start, stop) to every block, results in block order

    Args:
        func: Block worker; must only read shared inputs
        blocks: Output of path_blocks
        workers: Thread count; 1 runs inline

    Returns:
        List of per-block results in block order
    """
    if workers <= 1 or len(blocks) <= 1:
        return [func(*block) for block in blocks]

    logger.debug(f"Running {len(blocks)} blocks on {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(func, *block) for block in blocks]
        return [future.result() for future in futures]
