"""Chain container, RNG stream splitting, and CSV round-tripping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def chain_rng(seed: int, *stream_key: int) -> np.random.Generator:
    """Independent generator derived from a base seed and a stream key.

    Streams are split with SeedSequence spawn keys, so chains (and any other
    keyed stream) are reproducible and independent regardless of execution
    order.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(stream_key))
    return np.random.default_rng(ss)


@dataclass
class Chain:
    """Stored position samples with per-iteration metadata."""

    samples: np.ndarray
    wall_seconds: float
    event_counts: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_stored(self) -> int:
        return int(self.samples.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.samples.shape[1]) if self.samples.ndim == 2 else 1


def write_chain_csv(path, samples: np.ndarray) -> None:
    """Write samples with header x1..xd, 17 significant digits, LF endings."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    d = samples.shape[1]
    header = ",".join(f"x{i + 1}" for i in range(d))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in samples:
            fh.write(",".join(f"{val:.17g}" for val in row) + "\n")


def read_chain_csv(path) -> np.ndarray:
    """Read a chain CSV written by write_chain_csv."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("x1"):
            raise ValueError(f"{path}: not a chain CSV (header {header!r})")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return data
