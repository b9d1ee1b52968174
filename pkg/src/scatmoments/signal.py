"""Time-series container, CSV ingestion, block segmentation and deseasonalization.

A :class:`TimeSeries` is a uniformly sampled real signal.  When it holds
several independent realizations they are stored concatenated, with
``n_blocks`` and ``block_len`` recording the layout; downstream estimators
treat blocks as independent draws and never average across block boundaries.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "TimeSeries",
    "SeasonalProfile",
    "load_csv",
    "write_csv",
    "segment",
    "deseasonalize",
]


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled real signal, optionally split into independent blocks.

    Parameters
    ----------
    samples : ndarray
        1-D float array of length ``n_blocks * block_len``.  All values finite.
    dt : float
        Sample spacing, in arbitrary time units.  Carried as metadata; all
        scale indices elsewhere are expressed in samples.
    n_blocks : int
        Number of concatenated independent realizations.
    block_len : int
        Samples per realization.
    dropped : int
        Trailing samples discarded by :func:`segment` (metadata only).
    """

    samples: np.ndarray
    dt: float = 1.0
    n_blocks: int = 1
    block_len: int = 0
    dropped: int = 0

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        if self.block_len == 0:
            object.__setattr__(self, "block_len", arr.size)
        if arr.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if arr.size < 2:
            raise ValueError("a time series needs at least 2 samples")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must all be finite")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_blocks < 1 or self.block_len < 1:
            raise ValueError("n_blocks and block_len must be positive")
        if self.n_blocks * self.block_len != arr.size:
            raise ValueError(
                f"n_blocks*block_len = {self.n_blocks * self.block_len} "
                f"does not match length {arr.size}"
            )

    def __len__(self) -> int:
        return self.samples.size

    @property
    def blocks(self) -> np.ndarray:
        """View of the samples as an ``(n_blocks, block_len)`` matrix."""
        return self.samples.reshape(self.n_blocks, self.block_len)


@dataclass(frozen=True)
class SeasonalProfile:
    """Phase-wise variance profile of intraday (or any periodic) increments."""

    period: int
    variance_by_phase: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.variance_by_phase, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "variance_by_phase", arr)
        if self.period < 1 or arr.size != self.period:
            raise ValueError("variance_by_phase must have exactly `period` entries")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ValueError("every phase variance must be positive and finite")


def load_csv(path, column=0) -> TimeSeries:
    """Load one numeric column of a headed CSV file as a single-block series.

    Parameters
    ----------
    path : str or Path
        CSV file with one header row, comma separated, ``.`` decimal point.
    column : str or int
        Column name (matched against the header) or zero-based index.

    Raises
    ------
    FileNotFoundError, ValueError
        Missing file, unknown column, non-numeric or non-finite cells
        (the error message names the offending data row), or fewer than
        2 usable rows.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if isinstance(column, str):
            names = [h.strip() for h in header]
            if column not in names:
                raise ValueError(f"{path}: no column named {column!r} (have {names})")
            idx = names.index(column)
        else:
            idx = int(column)
            if not 0 <= idx < len(header):
                raise ValueError(f"{path}: column index {idx} out of range")
        values = []
        for row_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and row[0].strip() == ""):
                continue
            if idx >= len(row):
                raise ValueError(f"{path}: row {row_no} has no column {idx}")
            cell = row[idx].strip()
            try:
                v = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: non-numeric value {cell!r} at row {row_no}"
                ) from None
            if not np.isfinite(v):
                raise ValueError(f"{path}: non-finite value {cell!r} at row {row_no}")
            values.append(v)
    if len(values) < 2:
        raise ValueError(f"{path}: fewer than 2 usable rows")
    return TimeSeries(np.asarray(values))


def write_csv(path, data, header=None) -> None:
    """Write a series or column-per-realization matrix as CSV.

    Values are formatted with 17 significant digits so a read-back
    reproduces the doubles exactly.
    """
    if isinstance(data, TimeSeries):
        matrix = data.blocks.T
        if header is None:
            header = [f"block{k}" for k in range(data.n_blocks)]
    else:
        matrix = np.atleast_2d(np.asarray(data, dtype=float))
        if matrix.shape[0] == 1:
            matrix = matrix.T
        if header is None:
            header = [f"col{k}" for k in range(matrix.shape[1])]
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in matrix:
            writer.writerow([f"{v:.17g}" for v in row])


def segment(ts: TimeSeries, block_len: int) -> TimeSeries:
    """Reinterpret a series as ``floor(len/block_len)`` independent blocks.

    A trailing remainder shorter than ``block_len`` is dropped; the number
    of discarded samples is recorded in ``dropped``.

    Raises
    ------
    ValueError
        If ``block_len`` exceeds the total length.
    """
    if block_len < 1:
        raise ValueError("block_len must be positive")
    total = len(ts)
    if block_len > total:
        raise ValueError(f"block_len {block_len} exceeds series length {total}")
    n_blocks = total // block_len
    kept = n_blocks * block_len
    return TimeSeries(
        ts.samples[:kept],
        dt=ts.dt,
        n_blocks=n_blocks,
        block_len=block_len,
        dropped=total - kept,
    )


def deseasonalize(ts: TimeSeries, period: int) -> tuple[TimeSeries, SeasonalProfile]:
    """Remove a periodic variance pattern from the increments of ``ts``.

    The increments ``r(t) = x(t+1) - x(t)`` are normalized by the square
    root of the phase-wise mean of squared increments, ``v(t mod period)``,
    estimated without smoothing.  The normalized increments are re-integrated
    into a level series starting at 0 (use ``np.diff`` on the result for the
    normalized returns themselves).

    Returns
    -------
    (TimeSeries, SeasonalProfile)
        The re-integrated series (one sample longer than the increment
        count) and the estimated profile.

    Raises
    ------
    ValueError
        If the series is shorter than two periods or some phase has zero
        empirical variance.
    """
    if period < 1:
        raise ValueError("period must be positive")
    if len(ts) < 2 * period:
        raise ValueError("need at least two whole periods of data")
    incr = np.diff(ts.samples)
    phases = np.arange(incr.size) % period
    sq_sum = np.bincount(phases, weights=incr**2, minlength=period)
    counts = np.bincount(phases, minlength=period)
    variance = sq_sum / counts
    if np.any(variance <= 0):
        bad = int(np.argmin(variance))
        raise ValueError(f"phase {bad} has zero empirical variance")
    profile = SeasonalProfile(period=period, variance_by_phase=variance)
    norm_incr = incr / np.sqrt(variance[phases])
    levels = np.concatenate([[0.0], np.cumsum(norm_incr)])
    out = TimeSeries(levels, dt=ts.dt)
    return out, profile
