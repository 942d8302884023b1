"""
Counter-based random streams.

Every draw is a pure function of (seed, purpose, stream id, counter): a
splitmix64 finalizer hashes the tuple into 64 random bits. A path's draws
therefore do not depend on which worker simulated it or on how the paths
were chunked, and a run is reproducible bit for bit from its seed.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_TWO_POW_53 = float(2**53)

# purposes keep the substreams of one path apart
PURPOSE_INITIAL = 1
PURPOSE_NOISE = 2
PURPOSE_SUBSAMPLE = 3
PURPOSE_CHECK = 4


def mix64(z) -> np.ndarray:
    """splitmix64 finalizer, elementwise on uint64 arrays."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX_A
        z = (z ^ (z >> np.uint64(27))) * _MIX_B
    return z ^ (z >> np.uint64(31))


def stream_keys(seed: int, purpose: int, stream_ids) -> np.ndarray:
    base = mix64(np.uint64(seed) ^ mix64(np.uint64(purpose)))
    ids = np.asarray(stream_ids, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(base + ids)


def uniforms_from_keys(keys: np.ndarray, counter: int) -> np.ndarray:
    """One uniform in the open interval (0, 1) per key, for the given counter."""
    with np.errstate(over="ignore"):
        bits = mix64(keys ^ mix64(np.uint64(counter)))
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) / _TWO_POW_53


def uniforms(seed: int, purpose: int, stream_ids, counter: int) -> np.ndarray:
    return uniforms_from_keys(stream_keys(seed, purpose, stream_ids), counter)


class CounterStream:
    """
    A batch of independent streams, one per id, sharing a counter.

    All streams of the batch advance together, so draw number i of stream j
    is the same whatever other ids share the batch.
    """

    def __init__(self, seed: int, purpose: int, stream_ids, counter: int = 0):
        self.seed = int(seed)
        self.purpose = int(purpose)
        self.stream_ids = np.asarray(stream_ids, dtype=np.uint64)
        self.keys = stream_keys(self.seed, self.purpose, self.stream_ids)
        self.counter = int(counter)

    def __len__(self) -> int:
        return int(self.keys.shape[0])

    def uniform(self, n_components: int = 1) -> np.ndarray:
        """Array of shape (n_streams, n_components) of uniforms in (0, 1)."""
        columns = [uniforms_from_keys(self.keys, self.counter + j) for j in range(n_components)]
        self.counter += n_components
        return np.stack(columns, axis=-1)

    def normal(self, n_components: int = 1) -> np.ndarray:
        """Standard Gaussians by the inverse normal CDF of the uniforms."""
        return ndtri(self.uniform(n_components))

    def skip(self, n_draws: int) -> None:
        self.counter += n_draws


def uniform_points(seed: int, purpose: int, stream_ids, side: float = 1.0, dim: int = 2) -> np.ndarray:
    """Uniform points of the torus [0, side)^dim, one per stream id."""
    points = CounterStream(seed, purpose, stream_ids).uniform(dim) * side
    return np.where(points >= side, 0.0, points)


def sample_uniform(seed: int, n: int, side: float = 1.0, dim: int = 2, purpose: int = PURPOSE_CHECK) -> np.ndarray:
    return uniform_points(seed, purpose, np.arange(n), side=side, dim=dim)
