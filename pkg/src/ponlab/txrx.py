"""PAM4 symbol streams, gray bit mapping, and transmit pulse shaping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidConfigError, InvalidInputError

PAM4_LEVELS = np.array([-3, -1, 1, 3], dtype=np.int64)

# Gray labeling: adjacent amplitude levels differ in exactly one bit.
_BITS_TO_LEVEL = {(0, 0): -3, (0, 1): -1, (1, 1): 1, (1, 0): 3}
_LEVEL_TO_BITS = {v: k for k, v in _BITS_TO_LEVEL.items()}
# Index tables for vectorized use: level (-3,-1,1,3) -> row of 2 bits.
_LEVEL_INDEX_BITS = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.uint8)


@dataclass(frozen=True)
class SymbolSequence:
    """PAM4 symbol stream with paired bit labels; ground truth for BER."""

    levels: np.ndarray  # int64 over {-3,-1,1,3}
    bits: np.ndarray  # uint8, shape (length, 2)
    seed: int
    length: int

    def __post_init__(self):
        if self.levels.shape != (self.length,) or self.bits.shape != (self.length, 2):
            raise InvalidInputError("levels/bits shapes inconsistent with length")


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled signal (real drive/photocurrent or complex envelope)."""

    samples: np.ndarray
    sample_rate: float
    sps: int

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate


def gray_map(bits2) -> int:
    """Map a 2-bit label to a PAM4 level: 00->-3, 01->-1, 11->+1, 10->+3."""
    key = tuple(int(b) for b in bits2)
    if key not in _BITS_TO_LEVEL:
        raise InvalidInputError(f"not a 2-bit label: {bits2!r}")
    return _BITS_TO_LEVEL[key]


def gray_demap(level: int) -> tuple[int, int]:
    """Inverse of :func:`gray_map`."""
    if level not in _LEVEL_TO_BITS:
        raise InvalidInputError(f"not a PAM4 level: {level!r}")
    return _LEVEL_TO_BITS[level]


def levels_to_bits(levels: np.ndarray) -> np.ndarray:
    """Vectorized gray demap: levels over {-3,-1,1,3} -> (n, 2) bit array."""
    idx = (np.asarray(levels, dtype=np.int64) + 3) // 2
    if np.any((idx < 0) | (idx > 3)) or np.any((np.asarray(levels) + 3) % 2 != 0):
        raise InvalidInputError("levels outside the PAM4 alphabet")
    return _LEVEL_INDEX_BITS[idx]


def generate_rns_pam4(seed: int, n_symbols: int) -> SymbolSequence:
    """Draw a random non-repeating PAM4 sequence, deterministic per seed.

    Uses a PCG64 generator (period 2^128), so no short periodic structure
    can appear at any practical sequence length.
    """
    if n_symbols < 1:
        raise InvalidInputError("n_symbols must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    bits = rng.integers(0, 2, size=(n_symbols, 2), dtype=np.uint8)
    idx = np.array([0, 1, 3, 2])[bits[:, 0] * 2 + bits[:, 1]]  # 00,01,11,10 order
    levels = PAM4_LEVELS[idx]
    return SymbolSequence(levels=levels, bits=bits, seed=seed, length=n_symbols)


def rrc_taps(sps: int, rolloff: float, span: int = 16) -> np.ndarray:
    """Root-raised-cosine filter taps covering ``span`` symbols.

    Normalized so the taps sum to ``sps``: an all-ones symbol stream maps to
    a unit-level waveform after the edge transient.
    """
    if not 0.0 < rolloff <= 1.0:
        raise InvalidConfigError(f"rolloff {rolloff} outside (0, 1]")
    n = span * sps + 1
    t = (np.arange(n) - (n - 1) / 2) / sps  # in symbol periods
    taps = np.empty(n)
    a = rolloff
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            taps[i] = 1.0 - a + 4.0 * a / np.pi
        elif abs(abs(ti) - 1.0 / (4.0 * a)) < 1e-9:
            taps[i] = (a / np.sqrt(2.0)) * (
                (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * a))
                + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * a))
            )
        else:
            num = np.sin(np.pi * ti * (1.0 - a)) + 4.0 * a * ti * np.cos(np.pi * ti * (1.0 + a))
            den = np.pi * ti * (1.0 - (4.0 * a * ti) ** 2)
            taps[i] = num / den
    return taps * (sps / taps.sum())


def shape_pulse(
    sym: SymbolSequence, sps: int, rolloff: float, span: int = 16, baud: float = 1.0
) -> Waveform:
    """Upsample symbols and apply root-raised-cosine shaping.

    Symbol i sits at sample ``i * sps``; the waveform has exactly
    ``length * sps`` samples (centered convolution, edge transients at both
    ends). ``baud`` sets the physical symbol rate; the default leaves the
    sample rate in units of the symbol rate.
    """
    if sps not in (2, 4):
        raise InvalidConfigError(f"sps must be 2 or 4, got {sps}")
    taps = rrc_taps(sps, rolloff, span)
    upsampled = np.zeros(sym.length * sps)
    upsampled[::sps] = sym.levels.astype(np.float64)
    samples = np.convolve(upsampled, taps, mode="same")
    return Waveform(samples=samples, sample_rate=baud * sps, sps=sps)
