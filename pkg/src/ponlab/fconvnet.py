"""Fourier-convolution equalizer.

Pipeline per window: trend/residual decomposition -> embedding convolution
-> amplitude-spectrum peak selection on the residual -> per-peak 1D-to-2D
period partition -> stacked Inception convolutions on each 2D view ->
softmax-weighted recombination with a residual connection -> per-step
linear projection -> trend re-added.

Peak selection runs on the parameter-free residual path of the live input
window, so the branch weights carry no parameter gradients and the model
stays input-adaptive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import InvalidConfigError, InvalidInputError
from .spectral import Spectrum, rfft_amplitude


@dataclass(frozen=True)
class FConvNetConfig:
    ws: int = 64
    d_model: int = 16
    k: int = 3
    s_k1: int = 3
    inception_kernels: tuple[int, ...] = (1, 3, 5)
    n_k2: int = 3  # kernel size used by the multiplication count
    d_i: int = 16
    d_ii: int = 16
    ma_len: int = 25
    residual: bool = True

    def __post_init__(self):
        if not 1 <= self.k <= self.ws // 2:
            raise InvalidConfigError(f"k={self.k} outside 1..{self.ws // 2}")
        if self.s_k1 % 2 == 0:
            raise InvalidConfigError("embedding kernel size must be odd")
        if self.ma_len % 2 == 0 or self.ma_len >= self.ws:
            raise InvalidConfigError("moving-average length must be odd and < ws")


@dataclass(frozen=True)
class PeriodPartition:
    """One branch: selected frequency, its 2D view, and spectral amplitude."""

    f: int
    w: int
    padded_len: int
    view2d: Tensor  # (d_model, f, w)
    amplitude: float

    @property
    def rows(self) -> int:
        return self.f


def decompose(x: np.ndarray, ma_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a window into a moving-average trend and a residual.

    The trend is a centered length-``ma_len`` average with edge replication;
    the residual ``x - trend`` is the high-fluctuation path fed forward.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if ma_len >= x.size:
        raise InvalidConfigError(f"moving-average length {ma_len} >= window {x.size}")
    if ma_len % 2 == 0:
        raise InvalidConfigError("moving-average length must be odd")
    half = ma_len // 2
    padded = np.concatenate([np.full(half, x[0]), x, np.full(half, x[-1])])
    kernel = np.full(ma_len, 1.0 / ma_len)
    trend = np.convolve(padded, kernel, mode="valid")
    return trend, x - trend


def decompose_batch(xs: np.ndarray, ma_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise :func:`decompose` for a (B, ws) batch."""
    if ma_len >= xs.shape[1]:
        raise InvalidConfigError(f"moving-average length {ma_len} >= window {xs.shape[1]}")
    half = ma_len // 2
    padded = np.concatenate(
        [np.repeat(xs[:, :1], half, axis=1), xs, np.repeat(xs[:, -1:], half, axis=1)], axis=1
    )
    trend = sliding_window_view(padded, ma_len, axis=1).mean(axis=2)
    return trend, xs - trend


def batch_peaks(resid: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise :func:`select_peaks` on the residual batch.

    The stable descending sort reproduces the tie-break toward lower
    frequency; rows with degenerate spectra fall back to the scalar path.
    """
    ws = resid.shape[1]
    half = ws // 2
    amps = np.abs(np.fft.rfft(resid, axis=1))[:, 1 : half + 1]
    order = np.argsort(-amps, axis=1, kind="stable")
    f_sel = order[:, :k] + 1
    a_sel = np.take_along_axis(amps, order[:, :k], axis=1)
    for r in np.flatnonzero((a_sel <= 0.0).any(axis=1)):
        peaks = select_peaks(Spectrum(np.abs(np.fft.rfft(resid[r])), ws), k)
        f_sel[r] = [f for f, _ in peaks]
        a_sel[r] = [a for _, a in peaks]
    return f_sel, a_sel


def select_peaks(spec: Spectrum, k: int) -> list[tuple[int, float]]:
    """Top-k spectral amplitude bins, DC excluded, descending amplitude.

    Ties break toward the lower frequency index. If fewer than k bins are
    nonzero, the selection is padded with the lowest unused indices at zero
    amplitude so exactly k branches always exist.
    """
    half = spec.source_length // 2
    if k > half:
        raise InvalidInputError(f"k={k} exceeds available bins 1..{half}")
    amps = np.asarray(spec.amplitudes[1 : half + 1], dtype=np.float64)
    idx = np.arange(1, half + 1)
    order = np.lexsort((idx, -amps))
    picked = [(int(idx[i]), float(amps[i])) for i in order if amps[i] > 0.0][:k]
    if len(picked) < k:
        used = {f for f, _ in picked}
        for cand in idx:
            if len(picked) == k:
                break
            if int(cand) not in used:
                picked.append((int(cand), 0.0))
    return picked


def partition(x: Tensor, f: int, amplitude: float = 0.0) -> PeriodPartition:
    """Zero-pad each channel to f*ceil(ws/f) and reshape to (d, f, w)."""
    d, ws = x.shape
    if not 1 <= f <= ws // 2:
        raise InvalidInputError(f"frequency index {f} outside 1..{ws // 2}")
    w = -(-ws // f)
    padded_len = f * w
    view = x.pad_last(padded_len).reshape(d, f, w)
    return PeriodPartition(f=f, w=w, padded_len=padded_len, view2d=view, amplitude=amplitude)


def unpartition(view: Tensor, ws: int) -> Tensor:
    """Inverse of :func:`partition`: flatten rows and drop the padding."""
    d, f, w = view.shape
    return view.reshape(d, f * w)[:, :ws]


@dataclass
class InceptionBlockParams:
    kernels: list[Tensor]  # one (C_out, C_in, k) tensor per kernel size
    biases: list[Tensor]


@dataclass
class FConvNetParams:
    embed_w: Tensor
    embed_b: Tensor
    branches: list[list[InceptionBlockParams]]  # [branch][block]
    proj_w: Tensor
    proj_b: Tensor

    def as_dict(self) -> dict[str, Tensor]:
        out = {"embed.w": self.embed_w, "embed.b": self.embed_b}
        for bi, blocks in enumerate(self.branches):
            for li, block in enumerate(blocks):
                for kt, bt in zip(block.kernels, block.biases):
                    ksize = kt.shape[-1]
                    out[f"branch{bi}.block{li}.k{ksize}.w"] = kt
                    out[f"branch{bi}.block{li}.k{ksize}.b"] = bt
        out["proj.w"] = self.proj_w
        out["proj.b"] = self.proj_b
        return out


def init_params(cfg: FConvNetConfig, seed: int = 0) -> FConvNetParams:
    """Uniform fan-in initialization for weights, zeros for biases."""
    if cfg.d_model < 1:
        raise InvalidConfigError("d_model must be >= 1 to build a model")
    rng = np.random.Generator(np.random.PCG64(seed))

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    embed_w = ad.parameter(uniform((cfg.d_model, 1, cfg.s_k1), cfg.s_k1), "embed.w")
    embed_b = ad.parameter(np.zeros(cfg.d_model), "embed.b")
    branches = []
    for bi in range(cfg.k):
        blocks = []
        for li in range(2):
            kernels, biases = [], []
            for ksize in cfg.inception_kernels:
                name = f"branch{bi}.block{li}.k{ksize}"
                kernels.append(
                    ad.parameter(
                        uniform((cfg.d_ii, cfg.d_i, ksize), cfg.d_i * ksize), name + ".w"
                    )
                )
                biases.append(ad.parameter(np.zeros(cfg.d_ii), name + ".b"))
            blocks.append(InceptionBlockParams(kernels, biases))
        branches.append(blocks)
    proj_w = ad.parameter(uniform((1, cfg.d_model), cfg.d_model), "proj.w")
    proj_b = ad.parameter(np.zeros(1), "proj.b")
    return FConvNetParams(embed_w, embed_b, branches, proj_w, proj_b)


def _tail_mask(f: int, w: int, ws: int) -> np.ndarray:
    """(f, 1, w) mask that is zero on zero-padded tail positions."""
    t = np.arange(f * w).reshape(f, w)
    return (t < ws).astype(np.float64)[:, None, :]


def inception_forward(
    part: PeriodPartition, blocks: list[InceptionBlockParams], ws: int
) -> Tensor:
    """Two stacked Inception blocks on one 2D view.

    Each block runs the parallel same-padded convolutions along the w axis
    (rows as batch), averages the kernel paths, applies GeLU, then zeroes
    the padded tail so padding never leaks. Kernel paths wider than the row
    length are skipped; the average is over the applied paths.
    """
    x = part.view2d.transpose(1, 0, 2)  # (f, d, w)
    mask = _tail_mask(part.f, part.w, ws)
    for block in blocks:
        paths = [
            ad.conv1d(x, kern, bias)
            for kern, bias in zip(block.kernels, block.biases)
            if kern.shape[-1] <= part.w
        ]
        if not paths:
            raise InvalidConfigError("no inception kernel fits the partition rows")
        acc = paths[0]
        for p in paths[1:]:
            acc = acc + p
        x = ad.gelu(acc * (1.0 / len(paths))) * mask
    return x.transpose(1, 0, 2)  # back to (d, f, w)


def reconstruct(
    branches: list[Tensor], amps: list[float], block_input: Tensor | None = None
) -> Tensor:
    """Softmax-weighted sum of branch outputs plus the block input.

    Weights come from the spectral amplitudes of the selected peaks and sum
    to one.
    """
    if len(branches) == 0:
        raise InvalidInputError("reconstruct needs at least one branch")
    if len(branches) != len(amps):
        raise InvalidInputError("branch and amplitude counts differ")
    weights = reconstruction_weights(amps)
    out = branches[0] * weights[0]
    for b, a in zip(branches[1:], weights[1:]):
        out = out + b * a
    if block_input is not None:
        out = out + block_input
    return out


def reconstruction_weights(amps: list[float]) -> np.ndarray:
    """Stable softmax of the branch amplitudes."""
    a = np.asarray(amps, dtype=np.float64)
    e = np.exp(a - a.max())
    return e / e.sum()


class FConvNet:
    """Sequence-to-sequence equalizer over fixed-length windows."""

    def __init__(self, cfg: FConvNetConfig, seed: int = 0):
        self.cfg = cfg
        self.params = init_params(cfg, seed)
        self._params_dict = self.params.as_dict()

    def parameters(self) -> dict[str, Tensor]:
        return self._params_dict

    def forward_window(self, x: np.ndarray) -> Tensor:
        """Equalize one window; returns a (ws,) tensor."""
        cfg = self.cfg
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != cfg.ws:
            raise InvalidInputError(f"expected window of {cfg.ws}, got {x.size}")
        trend, resid = decompose(x, cfg.ma_len)
        peaks = select_peaks(rfft_amplitude(resid), cfg.k)

        embedded = ad.conv1d(
            Tensor(resid.reshape(1, cfg.ws)), self.params.embed_w, self.params.embed_b
        )
        branch_outs = []
        for (f, _amp), blocks in zip(peaks, self.params.branches):
            part = partition(embedded, f, _amp)
            mapped = inception_forward(part, blocks, cfg.ws)
            branch_outs.append(unpartition(mapped, cfg.ws))
        merged = reconstruct(
            branch_outs,
            [a for _, a in peaks],
            embedded if cfg.residual else None,
        )
        projected = (self.params.proj_w @ merged + self.params.proj_b).reshape(cfg.ws)
        return projected + Tensor(trend)

    def forward_batch(self, xs: np.ndarray) -> Tensor:
        """Equalize a batch of windows.

        Matches :meth:`forward_window` exactly but groups windows whose
        rank-i peak landed on the same frequency, so each branch runs a few
        batched convolutions instead of one graph per window.
        """
        cfg = self.cfg
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        b = xs.shape[0]
        if xs.shape[1] != cfg.ws:
            raise InvalidInputError(f"expected windows of {cfg.ws}, got {xs.shape[1]}")
        trend, resid = decompose_batch(xs, cfg.ma_len)
        f_sel, a_sel = batch_peaks(resid, cfg.k)
        shifted = np.exp(a_sel - a_sel.max(axis=1, keepdims=True))
        alpha = shifted / shifted.sum(axis=1, keepdims=True)

        embedded = ad.conv1d(
            Tensor(resid[:, None, :]), self.params.embed_w, self.params.embed_b
        )  # (B, d, ws)
        merged = embedded if cfg.residual else None
        for rank in range(cfg.k):
            groups = []
            perm = []
            for f in np.unique(f_sel[:, rank]):
                rows = np.flatnonzero(f_sel[:, rank] == f)
                sub = embedded[rows]  # (G, d, ws)
                w = -(-cfg.ws // int(f))
                view = (
                    sub.pad_last(int(f) * w)
                    .reshape(rows.size, cfg.d_model, int(f), w)
                    .transpose(0, 2, 1, 3)
                )  # (G, f, d, w)
                mask = _tail_mask(int(f), w, cfg.ws)
                for block in self.params.branches[rank]:
                    paths = [
                        ad.conv1d(view, kern, bias)
                        for kern, bias in zip(block.kernels, block.biases)
                        if kern.shape[-1] <= w
                    ]
                    acc = paths[0]
                    for p in paths[1:]:
                        acc = acc + p
                    view = ad.gelu(acc * (1.0 / len(paths))) * mask
                flat = view.transpose(0, 2, 1, 3).reshape(rows.size, cfg.d_model, int(f) * w)
                groups.append(flat[:, :, : cfg.ws])
                perm.append(rows)
            inverse = np.empty(b, dtype=np.int64)
            inverse[np.concatenate(perm)] = np.arange(b)
            ranked = ad.concat_rows(groups)[inverse]
            weighted = ranked * alpha[:, rank].reshape(b, 1, 1)
            merged = weighted if merged is None else merged + weighted
        proj_kernel = self.params.proj_w.reshape(1, cfg.d_model, 1)
        projected = ad.conv1d(merged, proj_kernel, self.params.proj_b).reshape(b, cfg.ws)
        return projected + Tensor(trend)


def ad_stack(tensors: list[Tensor]) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    data = np.stack([t.data for t in tensors])
    out = Tensor(data)
    if any(t.requires_grad for t in tensors):
        out.requires_grad = True
        out._parents = tuple(tensors)
        out._vjp = lambda g: tuple(g[i] for i in range(len(tensors)))
    return out


def rmps_fconvnet(cfg: FConvNetConfig) -> int:
    """Multiplication count per window under the published accounting rule.

    Evaluated exactly as stated, independent of how the implementation
    realizes each stage:
    ``n_k1 d_model (n_s - n_k1 + 1) + 2 n_s^2 + 2 (d_I n_k2 d_II)(n_s - n_k2 + 1)``.
    """
    n_s = cfg.ws
    embed = cfg.s_k1 * cfg.d_model * (n_s - cfg.s_k1 + 1)
    spectral = 2 * n_s * n_s
    blocks = 2 * (cfg.d_i * cfg.n_k2 * cfg.d_ii) * (n_s - cfg.n_k2 + 1)
    return int(embed + spectral + blocks)


def rmps_fconvnet_per_symbol(cfg: FConvNetConfig) -> float:
    """Window count divided by the ws symbols each window equalizes."""
    return rmps_fconvnet(cfg) / cfg.ws
