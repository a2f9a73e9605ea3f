"""
Chunked parallel map over random substreams.

Chunk ``j`` of a phase always draws from ``RandomStream(seed, phase_base + j)``
and results come back in chunk order, so values do not depend on the number
of worker threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, TypeVar

import structlog

from ..sampling.distributions import RandomStream

logger = structlog.get_logger(__name__)

T = TypeVar("T")

PILOT_PHASE = 0
ESTIMATION_PHASE = 1 << 32
CRUDE_PHASE = 2 << 32


@dataclass(frozen=True)
class Chunk:
    index: int
    start: int
    size: int
    stream: RandomStream


def plan_chunks(total: int, seed: int, phase_base: int, chunk_size: int) -> List[Chunk]:
    if total < 0:
        raise ValueError("total must be non-negative")
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    chunks = []
    for index, start in enumerate(range(0, total, chunk_size)):
        chunks.append(Chunk(index, start, min(chunk_size, total - start), RandomStream(seed, phase_base + index)))
    return chunks


def map_chunks(
    fn: Callable[[Chunk], T],
    total: int,
    seed: int,
    phase_base: int,
    chunk_size: int = 1024,
    threads: int = 1,
) -> List[T]:
    """Apply ``fn`` to every chunk; output order is chunk order."""
    chunks = plan_chunks(total, seed, phase_base, chunk_size)
    if threads <= 1 or len(chunks) <= 1:
        return [fn(chunk) for chunk in chunks]

    logger.debug("Dispatching chunks", chunks=len(chunks), threads=threads)
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, chunks))
