"""Checkerboard microstructures on the half model.

A microstructure is a ``height x width`` grid of material bits (``1`` soft,
``0`` stiff). Elements are numbered row-major starting at the symmetry
line, so genome index ``g`` maps to grid cell ``(g // width, g % width)``
and row 0 holds the crack-tip ligament element. The same ``(row, col)``
indexes the image pixel fed to the CNN. Every other module goes through
this mapping.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Half-model grid sizes (width, height) the pipeline supports.
SUPPORTED_GRIDS = ((4, 2), (8, 4), (16, 8))

HEADER_BYTES = 2


class MicrostructureError(ValueError):
    """Invalid grid dimensions or malformed genome record."""


def check_grid(width: int, height: int) -> None:
    if (width, height) not in SUPPORTED_GRIDS:
        raise MicrostructureError(
            f"unsupported grid {width}x{height}; expected one of "
            + ", ".join(f"{w}x{h}" for w, h in SUPPORTED_GRIDS))


def genome_index(row: int, col: int, width: int) -> int:
    return row * width + col


def grid_position(index: int, width: int) -> tuple[int, int]:
    return divmod(index, width)


def packed_size(width: int, height: int) -> int:
    """Bytes in one packed genome record, header included."""
    return HEADER_BYTES + (width * height + 7) // 8


@dataclass(frozen=True, eq=False)
class Microstructure:
    """Immutable material assignment of a half-model grid.

    Attributes
    ----------
    width, height : int
        Element counts across the width (N) and up the half height (N/2).
    bits : ndarray of uint8, shape (width * height,)
        Row-major genome, 1 = soft, 0 = stiff. Stored read-only.
    """

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self):
        check_grid(self.width, self.height)
        bits = np.asarray(self.bits)
        if bits.shape != (self.width * self.height,):
            raise MicrostructureError(
                f"expected {self.width * self.height} bits, got shape {bits.shape}")
        if not np.isin(bits, (0, 1)).all():
            raise MicrostructureError("bits must be 0 or 1")
        bits = bits.astype(np.uint8, copy=True)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def __eq__(self, other):
        if not isinstance(other, Microstructure):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and bool(
            np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.width, self.height, self.bits.tobytes()))

    def __repr__(self):
        return (f"Microstructure({self.width}x{self.height}, "
                f"soft={self.volume_fraction_soft():.4f})")

    @property
    def n_genes(self) -> int:
        return self.width * self.height

    @classmethod
    def uniform(cls, width: int, height: int, value: int) -> "Microstructure":
        return cls(width, height, np.full(width * height, value, dtype=np.uint8))

    @classmethod
    def from_grid(cls, grid) -> "Microstructure":
        grid = np.asarray(grid)
        height, width = grid.shape
        return cls(width, height, grid.reshape(-1))

    def grid(self) -> np.ndarray:
        """Bits as a ``(height, width)`` array, row 0 on the symmetry line."""
        return self.bits.reshape(self.height, self.width)

    def to_image(self) -> np.ndarray:
        return self.grid().astype(np.float64)

    @classmethod
    def from_image(cls, image, threshold: float = 0.5) -> "Microstructure":
        return cls.from_grid((np.asarray(image) > threshold).astype(np.uint8))

    def volume_fraction_soft(self) -> float:
        return float(self.bits.mean())

    def pack(self) -> bytes:
        return bytes((self.width, self.height)) + np.packbits(self.bits).tobytes()

    @classmethod
    def unpack(cls, buffer: bytes) -> "Microstructure":
        if len(buffer) < HEADER_BYTES:
            raise MicrostructureError("truncated genome record: missing header")
        width, height = buffer[0], buffer[1]
        check_grid(width, height)
        expected = packed_size(width, height)
        if len(buffer) != expected:
            raise MicrostructureError(
                f"genome record for {width}x{height} needs {expected} bytes, "
                f"got {len(buffer)}")
        raw = np.frombuffer(buffer, dtype=np.uint8, offset=HEADER_BYTES)
        return cls(width, height, np.unpackbits(raw, count=width * height))


def random_uniform(width: int, height: int, seed) -> Microstructure:
    """Draw every bit independently as soft with probability 1/2.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts; a
    ``(root_seed, index)`` tuple gives independent reproducible streams.
    """
    if width != 2 * height:
        raise MicrostructureError(f"half model needs width = 2*height, got {width}x{height}")
    check_grid(width, height)
    rng = np.random.default_rng(seed)
    return Microstructure(width, height, rng.integers(0, 2, width * height, dtype=np.uint8))


def random_bits(count: int, width: int, height: int, seed: int, start: int = 0) -> np.ndarray:
    """Genomes ``start .. start+count-1`` of the sampling stream for ``seed``.

    Row ``i`` equals ``random_uniform(width, height, (seed, start + i)).bits``,
    so any slicing of the stream across workers reproduces the same samples.
    """
    out = np.empty((count, width * height), dtype=np.uint8)
    for i in range(count):
        rng = np.random.default_rng((seed, start + i))
        out[i] = rng.integers(0, 2, width * height, dtype=np.uint8)
    return out


def all_genomes(width: int, height: int) -> np.ndarray:
    """Every genome of a grid, ordered by its integer value (gene 0 is the MSB)."""
    n = width * height
    if n > 20:
        raise MicrostructureError(f"refusing to enumerate 2**{n} genomes")
    codes = np.arange(2 ** n, dtype=np.uint32)
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint32)
    return ((codes[:, None] >> shifts) & 1).astype(np.uint8)


def pack_many(bits: np.ndarray, width: int, height: int) -> np.ndarray:
    """Packed records for a ``(count, n_genes)`` array, one row per genome."""
    bits = np.asarray(bits, dtype=np.uint8)
    header = np.broadcast_to(np.array([width, height], np.uint8), (len(bits), 2))
    return np.concatenate([header, np.packbits(bits, axis=1)], axis=1)


def unpack_many(records: np.ndarray, width: int, height: int) -> np.ndarray:
    records = np.asarray(records, dtype=np.uint8)
    if records.ndim != 2 or records.shape[1] != packed_size(width, height):
        raise MicrostructureError("genome records have the wrong width")
    if len(records) and not (np.all(records[:, 0] == width) and np.all(records[:, 1] == height)):
        raise MicrostructureError("genome record header does not match grid")
    return np.unpackbits(records[:, HEADER_BYTES:], axis=1, count=width * height)
