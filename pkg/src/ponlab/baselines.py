"""Reference equalizers: blind Sato-adapted FFE at 2 SpS, and DNN/CNN
center-symbol detectors at 1 SpS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import InvalidConfigError, InvalidInputError, NumericError
from .txrx import PAM4_LEVELS, SymbolSequence, Waveform, levels_to_bits

PAM4_GAMMA = 2.5  # E[a^2]/E[|a|] for equiprobable levels {-3,-1,1,3}


@dataclass(frozen=True)
class SatoConfig:
    taps: int = 51
    step_size: float = 1e-4
    gamma: float = PAM4_GAMMA
    sps: int = 2
    train_pass_count: int = 2

    def __post_init__(self):
        if self.taps % 2 == 0:
            raise InvalidConfigError("tap count must be odd")
        if self.step_size <= 0:
            raise InvalidConfigError("step size must be positive")
        if self.sps != 2:
            raise InvalidConfigError("Sato equalization runs at 2 SpS")


@dataclass(frozen=True)
class DnnConfig:
    ws: int = 64
    widths: tuple[int, ...] = (2048, 256)

    def __post_init__(self):
        if any(w <= 0 for w in self.widths):
            raise InvalidConfigError("layer widths must be positive")


@dataclass(frozen=True)
class CnnConfig:
    ws: int = 64
    channels: int = 16
    kernel: int = 5
    conv_layers: int = 2
    head: tuple[int, ...] = (48,)

    def __post_init__(self):
        if any(w <= 0 for w in self.head) or self.channels <= 0:
            raise InvalidConfigError("channel counts and head widths must be positive")
        if self.kernel % 2 == 0:
            raise InvalidConfigError("conv kernel must be odd")


@njit(cache=True)
def _sato_pass(rxp, w, mu, gamma, n_sym, start, adapt, record):
    """One pass over the data at symbol rate with T/2-spaced taps.

    ``rxp`` is the 2 SpS trace padded by half the filter span on each side,
    so symbol n reads rxp[2n : 2n + taps]. Returns 0, or 1 on divergence.
    """
    taps = w.size
    out = np.empty(n_sym) if record else np.empty(0)
    for m in range(n_sym):
        n = (start + m) % n_sym
        base = 2 * n
        z = 0.0
        for t in range(taps):
            z += w[t] * rxp[base + t]
        if record:
            out[n] = z
        if adapt:
            sign = 1.0 if z >= 0.0 else -1.0
            e = z - gamma * sign
            for t in range(taps):
                w[t] -= mu * e * rxp[base + t]
            if m % 1024 == 0:
                norm = 0.0
                for t in range(taps):
                    norm += w[t] * w[t]
                if not np.isfinite(norm) or norm > 1e12:
                    return out, 1
    return out, 0


def _normalize_for_sato(samples: np.ndarray) -> np.ndarray:
    """Remove the photocurrent DC offset and scale to PAM4 alphabet power."""
    x = samples - samples.mean()
    power = np.mean(x * x)
    if power < 1e-30:
        raise InvalidInputError("input waveform has no signal power")
    return x * np.sqrt(np.mean(PAM4_LEVELS.astype(np.float64) ** 2) / power)


def slice_pam4(z: np.ndarray) -> np.ndarray:
    """Minimum-distance decisions onto {-3,-1,1,3}."""
    out = np.full(z.shape, 3, dtype=np.int64)
    out[z < 2.0] = 1
    out[z < 0.0] = -1
    out[z < -2.0] = -3
    return out


def sato_equalize(
    rx: Waveform, cfg: SatoConfig, start_offset: int = 0
) -> tuple[SymbolSequence, np.ndarray]:
    """Blind fractionally spaced FFE adapted with the Sato rule.

    Runs ``train_pass_count`` adaptation passes starting at ``start_offset``
    symbols into the data (circular), then one recording pass in natural
    order with adaptation still on. Decisions are minimum-distance PAM4
    slices of the recorded symbol-rate output.

    Returns the decided sequence and the soft outputs.
    """
    if rx.sps != cfg.sps:
        raise InvalidInputError(f"expected {cfg.sps} SpS input, got {rx.sps}")
    samples = _normalize_for_sato(np.asarray(rx.samples, dtype=np.float64))
    n_sym = samples.size // 2
    if cfg.taps > samples.size // 4:
        raise InvalidInputError("filter span too long for the given trace")
    half = cfg.taps // 2
    rxp = np.concatenate([np.zeros(half), samples, np.zeros(half)])

    w = np.zeros(cfg.taps)
    w[half] = 1.0  # center-spike start
    for _ in range(cfg.train_pass_count):
        _, bad = _sato_pass(rxp, w, cfg.step_size, cfg.gamma, n_sym, start_offset % n_sym, True, False)
        if bad:
            raise NumericError(f"Sato adaptation diverged (step size {cfg.step_size})")
    z, bad = _sato_pass(rxp, w, cfg.step_size, cfg.gamma, n_sym, 0, True, True)
    if bad:
        raise NumericError(f"Sato adaptation diverged (step size {cfg.step_size})")
    levels = slice_pam4(z)
    seq = SymbolSequence(levels=levels, bits=levels_to_bits(levels), seed=-1, length=n_sym)
    return seq, z


def rmps_sato(cfg: SatoConfig) -> int:
    """One multiplication per tap per decided symbol."""
    return cfg.taps


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dnn:
    """Fully connected center-symbol detector: ws -> widths... -> 1, GeLU."""

    def __init__(self, cfg: DnnConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.Generator(np.random.PCG64(seed))
        dims = [cfg.ws, *cfg.widths, 1]
        self._params: dict[str, Tensor] = {}
        self.layers = []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            w = ad.parameter(_uniform(rng, (fan_in, fan_out), fan_in), f"fc{i}.w")
            b = ad.parameter(np.zeros(fan_out), f"fc{i}.b")
            self.layers.append((w, b))
            self._params[w.name] = w
            self._params[b.name] = b

    def parameters(self) -> dict[str, Tensor]:
        return self._params

    def forward_batch(self, xs: np.ndarray) -> Tensor:
        x = Tensor(np.atleast_2d(xs))
        if x.shape[1] != self.cfg.ws:
            raise InvalidConfigError(f"expected windows of {self.cfg.ws}, got {x.shape[1]}")
        for w, b in self.layers[:-1]:
            x = ad.gelu(x @ w + b)
        w, b = self.layers[-1]
        return (x @ w + b).reshape(x.shape[0])


class Cnn:
    """Conv front-end (1 -> channels -> 1, GeLU) with a linear head."""

    def __init__(self, cfg: CnnConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.Generator(np.random.PCG64(seed))
        self._params: dict[str, Tensor] = {}
        self.convs = []
        chans = [1] + [cfg.channels] * (cfg.conv_layers - 1) + [1]
        for i, (cin, cout) in enumerate(zip(chans[:-1], chans[1:])):
            w = ad.parameter(_uniform(rng, (cout, cin, cfg.kernel), cin * cfg.kernel), f"conv{i}.w")
            b = ad.parameter(np.zeros(cout), f"conv{i}.b")
            self.convs.append((w, b))
            self._params[w.name] = w
            self._params[b.name] = b
        dims = [cfg.ws, *cfg.head, 1]
        self.head = []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            w = ad.parameter(_uniform(rng, (fan_in, fan_out), fan_in), f"head{i}.w")
            b = ad.parameter(np.zeros(fan_out), f"head{i}.b")
            self.head.append((w, b))
            self._params[w.name] = w
            self._params[b.name] = b

    def parameters(self) -> dict[str, Tensor]:
        return self._params

    def forward_batch(self, xs: np.ndarray) -> Tensor:
        xs = np.atleast_2d(xs)
        x = Tensor(xs[:, None, :])  # (B, 1, ws)
        for w, b in self.convs:
            x = ad.gelu(ad.conv1d(x, w, b))
        x = x.reshape(xs.shape[0], self.cfg.ws)
        for w, b in self.head[:-1]:
            x = ad.gelu(x @ w + b)
        w, b = self.head[-1]
        return (x @ w + b).reshape(xs.shape[0])


def dnn_forward(window: np.ndarray, model: Dnn) -> Tensor:
    """Scalar estimate for one window."""
    return model.forward_batch(np.atleast_2d(window))[0]


def cnn_forward(window: np.ndarray, model: Cnn) -> Tensor:
    """Scalar estimate for one window."""
    return model.forward_batch(np.atleast_2d(window))[0]


def rmps_dnn(cfg: DnnConfig) -> int:
    """Fully connected cost: in*out summed over layers, per output symbol."""
    dims = [cfg.ws, *cfg.widths, 1]
    return int(sum(a * b for a, b in zip(dims[:-1], dims[1:])))


def rmps_cnn(cfg: CnnConfig) -> int:
    """Convolution cost C_in*k*C_out*(L-k+1) per layer plus the head."""
    chans = [1] + [cfg.channels] * (cfg.conv_layers - 1) + [1]
    valid = cfg.ws - cfg.kernel + 1
    conv = sum(cin * cfg.kernel * cout * valid for cin, cout in zip(chans[:-1], chans[1:]))
    dims = [cfg.ws, *cfg.head, 1]
    head = sum(a * b for a, b in zip(dims[:-1], dims[1:]))
    return int(conv + head)
