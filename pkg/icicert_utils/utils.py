import logging
import math
from dataclasses import dataclass
from multiprocessing import Pool
from typing import Callable, Iterable, TypeVar

import numpy as np
from tqdm import tqdm

from config import debug_mode, show_progress

T = TypeVar('T')
R = TypeVar('R')

logger = logging.getLogger(f"{__name__}")


def before_running():
    """Execute before running the script routine."""
    # log-domain arithmetic overflows to inf and underflows to 0 on purpose
    np.seterr(over='ignore', under='ignore')


def setup_logging(log_file='log.txt'):
    """Load default settings for a logger shared between modules.
    :param log_file: Name of the log file
    """
    logging.basicConfig(
        filename=log_file,
        filemode='w',
        encoding='utf-8',
        level=logging.NOTSET,
        format='[%(asctime)s] [%(levelname)s] [%(name)s] %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )


def chunk_layout(n: int, chunk_size: int) -> list[tuple[int, int]]:
    """
    Splits n draws into consecutive chunks.
    :param n: Total number of draws
    :param chunk_size: Maximal chunk size
    :return: List of (chunk index, chunk size)
    """
    if n <= 0:
        return []
    full, rest = divmod(n, chunk_size)
    layout = [(i, chunk_size) for i in range(full)]
    if rest:
        layout.append((full, rest))
    return layout


def chunk_generator(seed: int, block: int, chunk: int, coordinate: int = 0) -> np.random.Generator:
    """
    Independent random stream of one chunk. The stream depends only on its key, never on the worker that draws it.
    :param seed: Run seed
    :param block: Estimation block (e.g. 0 for E exp(f inf-conv Phi), 1 for E exp(-f))
    :param chunk: Chunk index
    :param coordinate: Coordinate of a product vector
    :return: numpy Generator
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block, chunk, coordinate)))


def open_uniforms(rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniform variates in the open interval (0, 1)."""
    return (rng.integers(0, 2 ** 53, size=size).astype(float) + 0.5) / 2.0 ** 53


@dataclass(frozen=True)
class LogMoments:
    """
    Summary of exp(v) over a chunk, stored relative to a shift so that huge exponents do not overflow.

    Attributes:
        shift (float): Maximum of v in the chunk
        s1 (float): Sum of exp(v - shift)
        s2 (float): Sum of exp(2 (v - shift))
        count (int): Number of values
    """
    shift: float
    s1: float
    s2: float
    count: int

    @classmethod
    def from_log_values(cls, values: np.ndarray) -> 'LogMoments':
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return cls(-math.inf, 0.0, 0.0, 0)
        if np.any(np.isnan(v)):
            raise ValueError('NaN in Monte Carlo log-values')
        shift = float(np.max(v))
        if shift == math.inf:
            return cls(math.inf, 1.0, 1.0, int(v.size))
        if shift == -math.inf:
            return cls(-math.inf, 0.0, 0.0, int(v.size))
        w = np.exp(v - shift)
        return cls(shift, float(np.sum(w)), float(np.sum(w * w)), int(v.size))

    @classmethod
    def combine(cls, parts: Iterable['LogMoments']) -> 'LogMoments':
        """Fixed-order reduction of chunk summaries."""
        parts = list(parts)
        count = sum(p.count for p in parts)
        shift = max((p.shift for p in parts), default=-math.inf)
        if shift in (math.inf, -math.inf):
            return cls(shift, 1.0 if shift == math.inf else 0.0, 1.0 if shift == math.inf else 0.0, count)
        s1 = 0.0
        s2 = 0.0
        for p in parts:
            if p.shift == -math.inf:
                continue
            s1 += p.s1 * math.exp(p.shift - shift)
            s2 += p.s2 * math.exp(2.0 * (p.shift - shift))
        return cls(shift, s1, s2, count)

    @property
    def log_mean(self) -> float:
        if self.shift == math.inf:
            return math.inf
        if self.s1 == 0.0:
            return -math.inf
        return self.shift + math.log(self.s1 / self.count)

    @property
    def relative_standard_error(self) -> float:
        """Standard error of the mean divided by the mean."""
        if self.shift == math.inf:
            return math.inf
        if self.s1 == 0.0 or self.count < 2:
            return 0.0
        m1 = self.s1 / self.count
        m2 = self.s2 / self.count
        variance = max(m2 - m1 * m1, 0.0) * self.count / (self.count - 1)
        return math.sqrt(variance / self.count) / m1


def ordered_map(func: Callable[[T], R], items: Iterable[T], workers: int = 1, desc: str = 'Working') -> list[R]:
    """
    Maps func over items and returns results in input order. Uses a process pool when workers > 1 and debug_mode is
    False; the result never depends on the number of workers.
    :param func: Picklable function of one argument
    :param items: Work items
    :param workers: Pool size
    :param desc: tqdm description
    :return: Results in input order
    """
    items = list(items)
    if workers > 1 and len(items) > 1 and not debug_mode:
        with Pool(min(workers, len(items))) as pool:
            return list(tqdm(pool.imap(func, items), total=len(items), desc=desc, disable=not show_progress))
    if debug_mode:
        logger.debug(f'{desc}: {len(items)} items in-process')
    return [func(item) for item in tqdm(items, total=len(items), desc=desc, disable=not show_progress)]
