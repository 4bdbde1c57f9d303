"""Windowed supervised examples from aligned (received, transmitted) pairs.

Splits are contiguous blocks in time order train|val|test with guard gaps
sized so that no input sample is shared between two splits: shuffling
overlapping windows would leak test data into training.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import InvalidConfigError, InvalidInputError

_MAGIC = b"PEQ1"
_MODES = {"sequence": 0, "center": 1}
_MODES_INV = {v: k for k, v in _MODES.items()}


@dataclass(frozen=True)
class WindowedDataset:
    """Sliding windows with co-located targets.

    ``inputs`` has shape (N, ws). In sequence mode ``targets`` is (N, ws)
    covering the same time span; in center mode it is (N,) holding the
    symbol at offset ws//2 from each window start. ``starts`` records the
    sample index where each window begins.
    """

    inputs: np.ndarray
    targets: np.ndarray
    ws: int
    stride: int
    target_mode: str
    starts: np.ndarray
    norm_mean: float | None = None
    norm_std: float | None = None

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def sample_indices(self) -> np.ndarray:
        """Set of sample indices touched by any window of this dataset."""
        offsets = np.arange(self.ws)
        return np.unique(self.starts[:, None] + offsets[None, :])


def build_windows(x, y, ws: int, stride: int, target_mode: str) -> WindowedDataset:
    """Slice an aligned pair into N = floor((len-ws)/stride)+1 windows."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if target_mode not in _MODES:
        raise InvalidInputError(f"target_mode must be sequence or center, got {target_mode!r}")
    if x.size != y.size:
        raise InvalidInputError(f"length mismatch: {x.size} vs {y.size}")
    if ws > x.size:
        raise InvalidInputError(f"window {ws} longer than sequence {x.size}")
    if stride < 1:
        raise InvalidInputError("stride must be >= 1")
    inputs = sliding_window_view(x, ws)[::stride].copy()
    starts = np.arange(inputs.shape[0], dtype=np.int64) * stride
    if target_mode == "sequence":
        targets = sliding_window_view(y, ws)[::stride].copy()
    else:
        targets = y[starts + ws // 2].copy()
    return WindowedDataset(inputs, targets, ws, stride, target_mode, starts)


def split_75_10_15(
    d: WindowedDataset, seed: int = 0
) -> tuple[WindowedDataset, WindowedDataset, WindowedDataset]:
    """Contiguous 75/10/15 block split with leakage guard gaps.

    Between consecutive blocks, ``ceil(ws/stride) - 1`` windows are dropped
    so no input sample index appears in two splits. The split is fully
    determined by the dataset geometry; ``seed`` is accepted for interface
    stability and does not influence the result.
    """
    del seed
    n = len(d)
    if n < 20:
        raise InvalidInputError(f"need at least 20 windows, got {n}")
    gap = max(0, -(-d.ws // d.stride) - 1)
    b1 = int(round(0.75 * n))
    b2 = int(round(0.85 * n))
    if b1 - gap < 1 or (b2 - gap) - b1 < 1 or n - b2 < 1:
        raise InvalidConfigError(
            f"{n} windows cannot fit guard gaps of {gap} windows between splits"
        )

    def view(lo: int, hi: int) -> WindowedDataset:
        return replace(
            d,
            inputs=d.inputs[lo:hi],
            targets=d.targets[lo:hi],
            starts=d.starts[lo:hi],
        )

    return view(0, b1 - gap), view(b1, b2 - gap), view(b2, n)


def normalize(
    train: WindowedDataset,
    val: WindowedDataset | None = None,
    test: WindowedDataset | None = None,
) -> tuple[WindowedDataset, ...]:
    """Standardize inputs with train statistics; targets get the same map.

    Applying one affine map to inputs and targets keeps them commensurate
    and makes the inverse map restore physical symbol levels.
    """
    mean = float(train.inputs.mean())
    std = float(train.inputs.std())
    if std < 1e-15:
        raise InvalidInputError("training inputs have zero variance")

    def apply(d: WindowedDataset) -> WindowedDataset:
        return replace(
            d,
            inputs=(d.inputs - mean) / std,
            targets=(d.targets - mean) / std,
            norm_mean=mean,
            norm_std=std,
        )

    out = [apply(train)]
    for d in (val, test):
        if d is not None:
            out.append(apply(d))
    return tuple(out)


def denormalize(d: WindowedDataset, values: np.ndarray) -> np.ndarray:
    """Invert the normalization map on model outputs."""
    if d.norm_mean is None or d.norm_std is None:
        raise InvalidInputError("dataset carries no normalization stats")
    return np.asarray(values) * d.norm_std + d.norm_mean


def dump(d: WindowedDataset, path) -> None:
    """Binary dump: magic PEQ1, N, ws, mode, then inputs and targets as
    little-endian 64-bit floats."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQB", len(d), d.ws, _MODES[d.target_mode]))
        fh.write(np.ascontiguousarray(d.inputs, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(d.targets, dtype="<f8").tobytes())


def load(path) -> WindowedDataset:
    """Read a dataset written by :func:`dump`."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != _MAGIC:
        raise InvalidInputError(f"{path} is not a PEQ1 dataset dump")
    n, ws, mode = struct.unpack_from("<QQB", raw, 4)
    off = 4 + struct.calcsize("<QQB")
    inputs = np.frombuffer(raw, dtype="<f8", count=n * ws, offset=off).reshape(n, ws)
    off += n * ws * 8
    tcount = n * ws if mode == 0 else n
    targets = np.frombuffer(raw, dtype="<f8", count=tcount, offset=off)
    if mode == 0:
        targets = targets.reshape(n, ws)
    starts = np.arange(n, dtype=np.int64)
    return WindowedDataset(
        inputs.copy(), targets.copy(), int(ws), 1, _MODES_INV[mode], starts
    )
