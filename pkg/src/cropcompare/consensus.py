"""Cross-map consensus: vote counts, majority vote, agreement statistics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyInputError, GridMismatchError
from .grid import MASK_NODATA, BinaryMask, CategoricalRaster, require_coregistered

DEFAULT_BLOCK_ROWS = 256


@dataclass(frozen=True)
class MaskStack:
    """Co-registered masks; the order of ``names`` is the matrix row/column order."""

    masks: tuple[BinaryMask, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        masks = tuple(self.masks)
        names = tuple(self.names)
        if len(masks) < 2:
            raise ValueError("a mask stack needs at least two masks")
        if len(names) != len(masks):
            raise ValueError("one name per mask required")
        for m in masks[1:]:
            require_coregistered(masks[0].grid, m.grid)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return len(self.masks)

    @property
    def grid(self):
        return self.masks[0].grid

    def blocks(self, block_rows: int = DEFAULT_BLOCK_ROWS):
        """Yield (row slice, crop array (N, rows, cols), valid array (rows, cols))."""
        for start in range(0, self.grid.height, block_rows):
            rows = slice(start, min(start + block_rows, self.grid.height))
            crop = np.stack([m.values[rows] == 1 for m in self.masks])
            valid = np.logical_and.reduce([m.values[rows] != m.nodata for m in self.masks])
            yield rows, crop, valid


@dataclass(frozen=True)
class ConsensusRaster:
    raster: CategoricalRaster
    n_masks: int


@dataclass(frozen=True)
class AgreementSummary:
    pct_all_same: float
    pct_all_crop: float
    pct_split: float
    pct_none_crop: float
    valid_pixel_count: int


@dataclass(frozen=True, eq=False)
class AgreementMatrix:
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (len(self.names), len(self.names)):
            raise ValueError("matrix shape does not match names")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", values)

    def __eq__(self, other):
        if not isinstance(other, AgreementMatrix):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.values, other.values)

    __hash__ = None


def _count_dtype(n: int):
    return (np.uint8, 255) if n < 255 else (np.uint16, 65535)


def vote_count(stack: MaskStack, block_rows: int = DEFAULT_BLOCK_ROWS) -> ConsensusRaster:
    """Number of masks calling each pixel crop; nodata where any mask is nodata."""
    dtype, nodata = _count_dtype(stack.n)
    out = np.empty(stack.grid.shape, dtype=dtype)
    for rows, crop, valid in stack.blocks(block_rows):
        votes = crop.sum(axis=0, dtype=np.int64)
        out[rows] = np.where(valid, votes, nodata)
    return ConsensusRaster(CategoricalRaster(stack.grid, out, nodata), stack.n)


def majority_vote(stack: MaskStack, block_rows: int = DEFAULT_BLOCK_ROWS) -> BinaryMask:
    """Crop where strictly more than half the masks vote crop; even-N ties are non-crop."""
    out = np.empty(stack.grid.shape, dtype=np.uint8)
    for rows, crop, valid in stack.blocks(block_rows):
        votes = crop.sum(axis=0, dtype=np.int64)
        block = (2 * votes > stack.n).astype(np.uint8)
        block[~valid] = MASK_NODATA
        out[rows] = block
    return BinaryMask(stack.grid, out, MASK_NODATA)


def split_counts(n: int) -> tuple[int, ...]:
    """Vote counts that count as an evenly split prediction among ``n`` masks."""
    if n % 2:
        return ((n - 1) // 2, (n + 1) // 2)
    return (n // 2,)


def vote_histogram(stack: MaskStack, block_rows: int = DEFAULT_BLOCK_ROWS) -> np.ndarray:
    """Count of valid pixels per vote total 0..N."""
    hist = np.zeros(stack.n + 1, dtype=np.int64)
    for _, crop, valid in stack.blocks(block_rows):
        votes = crop.sum(axis=0, dtype=np.int64)[valid]
        hist += np.bincount(votes, minlength=stack.n + 1)
    return hist


def agreement_summary(stack: MaskStack, block_rows: int = DEFAULT_BLOCK_ROWS) -> AgreementSummary:
    hist = vote_histogram(stack, block_rows)
    total = int(hist.sum())
    if total == 0:
        raise EmptyInputError("no valid pixels shared by all masks")
    all_crop = int(hist[stack.n])
    none_crop = int(hist[0])
    split = int(sum(hist[k] for k in set(split_counts(stack.n))))
    pct = lambda count: 100.0 * count / total  # noqa: E731
    return AgreementSummary(
        pct_all_same=pct(all_crop + none_crop),
        pct_all_crop=pct(all_crop),
        pct_split=pct(split),
        pct_none_crop=pct(none_crop),
        valid_pixel_count=total,
    )


def pairwise_agreement(stack: MaskStack, block_rows: int = DEFAULT_BLOCK_ROWS) -> AgreementMatrix:
    """Fraction of shared valid pixels on which each pair of masks agrees."""
    n = stack.n
    both = np.zeros((n, n), dtype=np.int64)
    ones = np.zeros(n, dtype=np.int64)
    total = 0
    for _, crop, valid in stack.blocks(block_rows):
        b = crop[:, valid].astype(np.int64)
        both += b @ b.T
        ones += b.sum(axis=1)
        total += int(valid.sum())
    if total == 0:
        raise EmptyInputError("no valid pixels shared by all masks")
    disagree = ones[:, None] + ones[None, :] - 2 * both
    frac = (total - disagree) / total
    np.fill_diagonal(frac, 0.0)
    return AgreementMatrix(stack.names, frac)


def mean_and_rank(matrices: Sequence[AgreementMatrix]) -> tuple[AgreementMatrix, np.ndarray]:
    """Elementwise mean matrix and within-row ranks (1 = lowest agreement).

    Tied entries share the lower rank; the diagonal rank is 0.
    """
    if not matrices:
        raise EmptyInputError("no matrices to average")
    names = matrices[0].names
    for m in matrices[1:]:
        if m.names != names:
            raise GridMismatchError("agreement matrices differ in dimension or name order")
    mean = np.mean(np.stack([m.values for m in matrices]), axis=0)
    n = len(names)
    rank = np.zeros((n, n), dtype=np.int64)
    off = ~np.eye(n, dtype=bool)
    for i in range(n):
        row = mean[i]
        for j in range(n):
            if i != j:
                rank[i, j] = 1 + int(np.count_nonzero(off[i] & (row < row[j])))
    return AgreementMatrix(names, mean), rank


def write_matrix_csv(names: Sequence[str], values: np.ndarray, path, fmt=repr) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["", *names])
        for name, row in zip(names, values):
            writer.writerow([name, *(fmt(v.item()) for v in row)])


def read_matrix_csv(path) -> AgreementMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = tuple(rows[0][1:])
    if [r[0] for r in rows[1:]] != list(names):
        raise ValueError(f"{path}: row names do not match column names")
    return AgreementMatrix(names, np.array([[float(v) for v in r[1:]] for r in rows[1:]]))


def consensus_colors(n: int) -> np.ndarray:
    """RGB ramp for vote counts 0..n: red at 0, yellow at n/2, blue at n."""
    t = np.linspace(0.0, 1.0, n + 1)
    red, yellow, blue = np.array([215, 25, 28]), np.array([255, 255, 100]), np.array([43, 90, 200])
    lower = red + (yellow - red) * np.clip(t * 2, 0, 1)[:, None]
    upper = yellow + (blue - yellow) * np.clip(t * 2 - 1, 0, 1)[:, None]
    return np.where((t <= 0.5)[:, None], lower, upper).round().astype(np.uint8)


def render_consensus_png(consensus: ConsensusRaster, path) -> None:
    from PIL import Image

    values = consensus.raster.values
    valid = consensus.raster.valid
    lut = consensus_colors(consensus.n_masks)
    rgba = np.zeros(values.shape + (4,), dtype=np.uint8)
    rgba[valid, :3] = lut[values[valid].astype(np.int64)]
    rgba[valid, 3] = 255
    Image.fromarray(rgba).save(path, format="PNG", optimize=False)
