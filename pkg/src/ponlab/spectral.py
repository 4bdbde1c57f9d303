"""Real-signal amplitude spectra.

Convention: unnormalized forward DFT, 1/T inverse (numpy's default). Under
this convention Parseval reads sum(|DFT|^2) == T * sum(x^2) when the full
two-sided spectrum is counted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError


@dataclass(frozen=True)
class Spectrum:
    """One-sided amplitude spectrum of a real signal.

    ``amplitudes[i] = |DFT(x)[i]|`` for bins 0..floor(T/2); bin 0 is DC.
    """

    amplitudes: np.ndarray
    source_length: int

    def __post_init__(self):
        if len(self.amplitudes) != self.source_length // 2 + 1:
            raise InvalidInputError(
                f"{len(self.amplitudes)} bins inconsistent with length {self.source_length}"
            )


def rfft_amplitude(x) -> Spectrum:
    """Amplitude spectrum of a real sequence of length T >= 2."""
    data = np.asarray(getattr(x, "data", x), dtype=np.float64).ravel()
    if data.size < 2:
        raise InvalidInputError(f"need at least 2 samples, got {data.size}")
    return Spectrum(np.abs(np.fft.rfft(data)), data.size)
