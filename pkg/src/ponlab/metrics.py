"""BER counting, complexity composites, and sensitivity-gain extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInputError, OutOfRangeError
from .txrx import levels_to_bits

MIN_HEADLINE_BITS = 100_000
MIN_HEADLINE_ERRORS = 100


@dataclass
class EqualizerReport:
    """One (model, received power) record of a sweep."""

    model: str
    config_hash: str
    rop_dbm: float
    ber: float
    bit_errors: int
    bits_counted: int
    symbol_errors: int
    rmps: float
    seed: int
    ber_c: float | None = None
    mean_ber: float | None = None  # Sato only: mean across adaptation runs
    history_ref: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def low_confidence(self) -> bool:
        return self.bits_counted < MIN_HEADLINE_BITS or self.bit_errors < MIN_HEADLINE_ERRORS


def _as_levels(seq) -> np.ndarray:
    return np.asarray(getattr(seq, "levels", seq), dtype=np.int64)


def ber_count(estimates, truth, skip_edges: int | tuple[int, int] = 0) -> tuple[float, int, int]:
    """Bit-level error rate under the gray map (2 bits per symbol).

    ``skip_edges`` drops that many symbols from each end (or, as a pair,
    separately from the head and the tail) before comparing.
    """
    est = _as_levels(estimates)
    tru = _as_levels(truth)
    if est.size != tru.size:
        raise InvalidInputError(f"length mismatch: {est.size} vs {tru.size}")
    head, tail = (skip_edges, skip_edges) if isinstance(skip_edges, int) else skip_edges
    stop = est.size - tail if tail else est.size
    est = est[head:stop]
    tru = tru[head:stop]
    if est.size == 0:
        raise InvalidInputError("no symbols left after edge skipping")
    errors = int(np.sum(levels_to_bits(est) != levels_to_bits(tru)))
    bits = 2 * est.size
    return errors / bits, errors, bits


def symbol_errors(estimates, truth, skip_edges: int | tuple[int, int] = 0) -> int:
    est = _as_levels(estimates)
    tru = _as_levels(truth)
    head, tail = (skip_edges, skip_edges) if isinstance(skip_edges, int) else skip_edges
    stop = est.size - tail if tail else est.size
    return int(np.sum(est[head:stop] != tru[head:stop]))


def ber_c(median_ber: float, rmps: float) -> float:
    """Composite performance-complexity metric 1/(mBER * RMpS); higher is
    better. Zero BER maps to the infinity sentinel."""
    if median_ber < 0 or rmps <= 0:
        raise InvalidInputError("median BER must be >= 0 and RMpS > 0")
    if median_ber == 0.0:
        return float("inf")
    return 1.0 / (median_ber * rmps)


def isotonic_decreasing(values: np.ndarray) -> np.ndarray:
    """Least-squares non-increasing fit by pool-adjacent-violators."""
    vals = np.asarray(values, dtype=np.float64)
    levels: list[float] = []
    members: list[list[int]] = []
    for i, v in enumerate(vals):
        levels.append(float(v))
        members.append([i])
        while len(levels) > 1 and levels[-2] < levels[-1]:
            hi = levels.pop()
            lo = levels.pop()
            tail = members.pop()
            head = members.pop()
            merged = head + tail
            levels.append((lo * len(head) + hi * len(tail)) / len(merged))
            members.append(merged)
    fitted = np.empty_like(vals)
    for lv, idx in zip(levels, members):
        fitted[idx] = lv
    return fitted


def _crossing_rop(curve: list[tuple[float, float]], target_ber: float, name: str) -> float:
    """Received power at which a smoothed BER curve crosses the target,
    interpolated linearly in log(BER)."""
    pts = sorted(curve)
    rops = np.array([p[0] for p in pts], dtype=np.float64)
    bers = isotonic_decreasing(np.maximum([p[1] for p in pts], 1e-12))
    if not (bers.max() >= target_ber >= bers.min()):
        raise OutOfRangeError(
            f"curve {name!r} never crosses BER {target_ber:g} within its sweep"
        )
    logs = np.log10(bers)
    lt = np.log10(target_ber)
    for i in range(rops.size - 1):
        hi, lo = logs[i], logs[i + 1]
        if hi >= lt >= lo:
            if hi == lo:
                return float(rops[i])
            frac = (hi - lt) / (hi - lo)
            return float(rops[i] + frac * (rops[i + 1] - rops[i]))
    # Exact hit at an endpoint.
    j = int(np.argmin(np.abs(logs - lt)))
    return float(rops[j])


def sensitivity_gain(
    curve_a: list[tuple[float, float]],
    curve_b: list[tuple[float, float]],
    target_ber: float,
    names: tuple[str, str] = ("a", "b"),
) -> float:
    """How many dB less received power curve_a needs than curve_b to reach
    the target BER. Positive means a is the more sensitive receiver."""
    rop_a = _crossing_rop(curve_a, target_ber, names[0])
    rop_b = _crossing_rop(curve_b, target_ber, names[1])
    return rop_b - rop_a
