"""Physics stand-in for the upstream link: EAM modulation to an optical
field, SSMF chromatic dispersion, VOA attenuation to a target received
power, saturable SOA amplification with patterning, and square-law
photodetection with thermal noise and receiver bandwidth.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy.signal import bessel

from .exceptions import InvalidConfigError, InvalidInputError, NumericError
from .txrx import SymbolSequence, Waveform, shape_pulse

C_M_S = 299792458.0
PLANCK_J_S = 6.62607015e-34


def dbm_to_w(dbm: float) -> float:
    return 1e-3 * 10.0 ** (dbm / 10.0)


def w_to_dbm(watts: float) -> float:
    return 10.0 * np.log10(watts / 1e-3)


@dataclass(frozen=True)
class SoaParams:
    """Reservoir-model SOA: single ODE in the integrated gain h(t)."""

    enabled: bool = True
    small_signal_gain_db: float = 20.0
    saturation_energy_j: float = 5e-12
    carrier_lifetime_s: float = 200e-12
    ase_noise_figure_db: float = 7.0
    ase_enabled: bool = True

    def __post_init__(self):
        if self.small_signal_gain_db <= 0 or self.carrier_lifetime_s <= 0 or self.saturation_energy_j <= 0:
            raise InvalidConfigError("SOA gain, lifetime and saturation energy must be positive")


@dataclass(frozen=True)
class NoiseParams:
    """Receiver thermal noise, white before the electrical filter."""

    enabled: bool = True
    thermal_psd_a2_hz: float = 2.4e-17  # one-sided PSD; the sweep's SNR knob


@dataclass(frozen=True)
class LinkConfig:
    baud: float = 56e9
    wavelength_nm: float = 1540.0
    fiber_km: float = 2.2
    dispersion_ps_nm_km: float = 17.0
    launch_dbm: float = 3.9
    rop_dbm: float = -8.0
    extinction_ratio_db: float = 6.0
    rolloff: float = 0.1
    sim_sps: int = 4
    responsivity_a_w: float = 1.0
    optical_bandpass_nm: float = 3.0
    rx_bandwidth_hz: float = 33e9
    soa: SoaParams = field(default_factory=SoaParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    seed: int = 0

    def __post_init__(self):
        if self.fiber_km < 0 or self.baud <= 0:
            raise InvalidConfigError("fiber length must be >= 0 and baud > 0")
        if self.rop_dbm > self.launch_dbm:
            raise InvalidConfigError("received power cannot exceed launch power")

    @property
    def beta2_s2_m(self) -> float:
        """Group velocity dispersion: beta2 = -D lambda^2 / (2 pi c)."""
        d_si = self.dispersion_ps_nm_km * 1e-6  # s/m^2
        lam = self.wavelength_nm * 1e-9
        return -d_si * lam**2 / (2.0 * np.pi * C_M_S)


def modulate_field(w: Waveform, extinction_ratio_db: float, launch_dbm: float = 3.9) -> Waveform:
    """Map a real drive waveform onto a chirp-free optical field.

    The drive is affinely mapped to instantaneous power so that the
    min/max power ratio equals ``10**(-ER/10)`` over the realized swing and
    the mean power equals ``launch_dbm``. The field is sqrt(P(t)).
    """
    drive = np.asarray(w.samples, dtype=np.float64)
    if np.iscomplexobj(w.samples):
        raise InvalidInputError("drive waveform must be real")
    if extinction_ratio_db < 0:
        raise InvalidConfigError("extinction ratio must be >= 0 dB")
    rho = 0.0 if np.isinf(extinction_ratio_db) else 10.0 ** (-extinction_ratio_db / 10.0)
    launch_w = dbm_to_w(launch_dbm)
    span = drive.max() - drive.min()
    if span < 1e-12:
        power = np.full_like(drive, launch_w)
    else:
        shaped = rho + (1.0 - rho) * (drive - drive.min()) / span
        power = shaped * (launch_w / shaped.mean())
    if power.min() < -1e-15:
        raise InvalidConfigError("bias mapping produced negative optical power")
    return Waveform(np.sqrt(np.maximum(power, 0.0)).astype(np.complex128), w.sample_rate, w.sps)


def apply_cd(fld: Waveform, cfg: LinkConfig) -> Waveform:
    """All-pass chromatic dispersion H(w) = exp(+j beta2 w^2 L / 2)."""
    e = np.asarray(fld.samples, dtype=np.complex128)
    length_m = cfg.fiber_km * 1e3
    if length_m == 0.0:
        return Waveform(e.copy(), fld.sample_rate, fld.sps)
    omega = 2.0 * np.pi * np.fft.fftfreq(e.size, d=fld.dt)
    h = np.exp(0.5j * cfg.beta2_s2_m * length_m * omega**2)
    out = np.fft.ifft(np.fft.fft(e) * h)
    return Waveform(out, fld.sample_rate, fld.sps)


def attenuate_to_rop(fld: Waveform, rop_dbm: float) -> Waveform:
    """Scale the field so mean optical power hits the target exactly."""
    e = np.asarray(fld.samples, dtype=np.complex128)
    mean_w = float(np.mean(np.abs(e) ** 2))
    target_w = dbm_to_w(rop_dbm)
    if target_w > mean_w * (1.0 + 1e-9):
        raise InvalidConfigError(
            f"target {rop_dbm:.2f} dBm exceeds current {w_to_dbm(mean_w):.2f} dBm: VOA cannot amplify"
        )
    return Waveform(e * np.sqrt(target_w / mean_w), fld.sample_rate, fld.sps)


@njit(cache=True)
def _soa_gain_rk4(power, dt, h0, tau, esat, h_start):
    """Integrate dh/dt = (h0-h)/tau - (P/esat)(e^h - 1) with classic RK4.

    Midpoint powers are linear interpolations between samples. Returns the
    h trace and the index of the first divergent step (-1 if none).
    """
    n = power.size
    h = np.empty(n)
    hv = h_start
    h[0] = hv
    inv_tau = 1.0 / tau
    inv_e = 1.0 / esat
    for i in range(n - 1):
        p0 = power[i]
        p1 = power[i + 1]
        pm = 0.5 * (p0 + p1)
        k1 = (h0 - hv) * inv_tau - p0 * inv_e * (np.exp(hv) - 1.0)
        y = hv + 0.5 * dt * k1
        k2 = (h0 - y) * inv_tau - pm * inv_e * (np.exp(y) - 1.0)
        y = hv + 0.5 * dt * k2
        k3 = (h0 - y) * inv_tau - pm * inv_e * (np.exp(y) - 1.0)
        y = hv + dt * k3
        k4 = (h0 - y) * inv_tau - p1 * inv_e * (np.exp(y) - 1.0)
        hv = hv + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(hv) or hv > 50.0:
            return h, i + 1
        h[i + 1] = hv
    return h, -1


def soa_steady_state_gain(p_in_w: float, p: SoaParams) -> float:
    """Fixed point of the gain ODE for constant input power (linear gain)."""
    h0 = np.log(10.0 ** (p.small_signal_gain_db / 10.0))
    if p_in_w <= 0.0:
        return float(np.exp(h0))
    rate = p_in_w * p.carrier_lifetime_s / p.saturation_energy_j

    def f(h):
        return (h0 - h) - rate * (np.exp(h) - 1.0)

    lo, hi = -5.0, h0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return float(np.exp(0.5 * (lo + hi)))


def apply_soa(
    fld: Waveform,
    p: SoaParams,
    dt: float | None = None,
    rng: np.random.Generator | None = None,
    wavelength_nm: float = 1540.0,
) -> Waveform:
    """Amplify through the saturable SOA; optionally add ASE noise.

    The gain state starts at its fixed point for the mean input power, so
    only data-dependent patterning (no artificial turn-on transient)
    appears in the output.
    """
    e = np.asarray(fld.samples, dtype=np.complex128)
    dt = fld.dt if dt is None else dt
    power = np.abs(e) ** 2
    h0 = np.log(10.0 ** (p.small_signal_gain_db / 10.0))
    h_start = np.log(soa_steady_state_gain(float(power.mean()), p))
    h, bad = _soa_gain_rk4(power, dt, h0, p.carrier_lifetime_s, p.saturation_energy_j, h_start)
    if bad >= 0:
        raise NumericError(
            f"SOA gain integration diverged at sample {bad}; "
            f"dt={dt:.3e}s, tau={p.carrier_lifetime_s:.3e}s"
        )
    out = e * np.exp(0.5 * h)
    if p.ase_enabled:
        if rng is None:
            rng = np.random.default_rng(0)
        nsp = 10.0 ** (p.ase_noise_figure_db / 10.0) / 2.0
        photon_j = PLANCK_J_S * C_M_S / (wavelength_nm * 1e-9)
        psd = nsp * photon_j * np.maximum(np.exp(h) - 1.0, 0.0)  # W/Hz per sample
        sigma = np.sqrt(psd * fld.sample_rate / 2.0)
        out = out + sigma * (rng.standard_normal(e.size) + 1j * rng.standard_normal(e.size))
    return Waveform(out, fld.sample_rate, fld.sps)


def _bessel_response(freqs: np.ndarray, bandwidth_hz: float, order: int = 4) -> np.ndarray:
    """Analog Bessel low-pass response with its DC group delay removed."""
    b, a = bessel(order, 2.0 * np.pi * bandwidth_hz, btype="low", analog=True, norm="mag")
    s = 2j * np.pi * freqs
    h = np.polyval(b, s) / np.polyval(a, s)
    w_small = 2.0 * np.pi * bandwidth_hz * 1e-6
    h_small = np.polyval(b, 1j * w_small) / np.polyval(a, 1j * w_small)
    group_delay = -np.angle(h_small / np.polyval(b, 0) * np.polyval(a, 0)) / w_small
    return h * np.exp(2j * np.pi * freqs * group_delay)


def detect(fld: Waveform, cfg: LinkConfig, rng: np.random.Generator | None = None) -> Waveform:
    """Square-law receiver: optical bandpass, photodiode, noise, Bessel LPF.

    Chain: brick-wall optical filter -> photocurrent R*|E|^2 -> additive
    white Gaussian thermal noise -> 4th-order Bessel low-pass at the scope
    bandwidth (group delay at DC compensated so symbol timing is kept).
    """
    e = np.asarray(fld.samples, dtype=np.complex128)
    fs = fld.sample_rate
    freqs = np.fft.fftfreq(e.size, d=fld.dt)

    bp_hz = cfg.optical_bandpass_nm * 1e-9 * C_M_S / (cfg.wavelength_nm * 1e-9) ** 2
    if bp_hz / 2.0 < fs / 2.0:
        spec = np.fft.fft(e)
        spec[np.abs(freqs) > bp_hz / 2.0] = 0.0
        e = np.fft.ifft(spec)

    current = cfg.responsivity_a_w * np.abs(e) ** 2
    if cfg.noise.enabled:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        sigma = np.sqrt(cfg.noise.thermal_psd_a2_hz * fs / 2.0)
        current = current + sigma * rng.standard_normal(current.size)

    h = _bessel_response(freqs, cfg.rx_bandwidth_hz)
    out = np.fft.ifft(np.fft.fft(current) * h).real
    return Waveform(out, fs, fld.sps)


def _lowpass_decimate(x: np.ndarray, factor: int) -> np.ndarray:
    """Brick-wall anti-alias filter at the new Nyquist, then take every
    ``factor``-th sample."""
    spec = np.fft.rfft(x)
    keep = x.size // (2 * factor)
    spec[keep:] = 0.0
    return np.fft.irfft(spec, n=x.size)[::factor]


def run_link(sym: SymbolSequence, cfg: LinkConfig) -> tuple[Waveform, Waveform]:
    """Full chain from symbols to received traces at 2 SpS and 1 SpS.

    The returned traces are timing-aligned to the transmitted symbols:
    sample ``2*i`` of the 2 SpS trace and sample ``i`` of the 1 SpS trace
    correspond to symbol i.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    drive = shape_pulse(sym, cfg.sim_sps, cfg.rolloff, baud=cfg.baud)
    fld = modulate_field(drive, cfg.extinction_ratio_db, cfg.launch_dbm)
    fld = apply_cd(fld, cfg)
    fld = attenuate_to_rop(fld, cfg.rop_dbm)
    if cfg.soa.enabled:
        fld = apply_soa(fld, cfg.soa, rng=rng, wavelength_nm=cfg.wavelength_nm)
    elec = detect(fld, cfg, rng=rng)

    x2 = _lowpass_decimate(elec.samples, cfg.sim_sps // 2)
    rx2 = Waveform(x2, cfg.baud * 2, 2)
    rx1 = Waveform(_lowpass_decimate(x2, 2), cfg.baud, 1)
    return rx2, rx1


def with_rop(cfg: LinkConfig, rop_dbm: float, seed: int | None = None) -> LinkConfig:
    """Copy of the config at a different received power (and seed)."""
    return replace(cfg, rop_dbm=rop_dbm, seed=cfg.seed if seed is None else seed)
