"""Experiment orchestration: seeded sweeps across received power and model,
result persistence, and plot-ready CSV emission.

Every knob, including the paper-gap decisions (Sato gamma, SOA parameters,
optimizer, normalization), lives in one resolved configuration mapping that
is copied into the output directory; its hash heads every CSV so outputs
are traceable and byte-reproducible.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from . import dataset as ds
from .baselines import (
    Cnn,
    CnnConfig,
    Dnn,
    DnnConfig,
    SatoConfig,
    rmps_cnn,
    rmps_dnn,
    rmps_sato,
    sato_equalize,
    slice_pam4,
)
from .channel import LinkConfig, NoiseParams, SoaParams, run_link
from .exceptions import InvalidConfigError, InvalidInputError, OutOfRangeError, PonlabError
from .fconvnet import FConvNet, FConvNetConfig, rmps_fconvnet
from .metrics import EqualizerReport, ber_c, ber_count, sensitivity_gain, symbol_errors
from .training import TrainConfig, train
from .txrx import generate_rns_pam4

KNOWN_MODELS = ("fconvnet-64", "fconvnet-128", "sato-21", "sato-51", "dnn", "cnn")

DEFAULT_CONFIG: dict = {
    "master_seed": 20240607,
    "output_dir": "runs/sweep",
    "symbols_per_trial": 65536,
    "trials": 13,
    "trial_mode": "batched",  # batched | concatenated
    "rop_dbm": [-14.0, -13.0, -12.0, -11.0, -10.0, -9.0, -8.0, -7.0, -6.0, -5.0, -4.0],
    "models": list(KNOWN_MODELS),
    "target_ber": 5e-3,
    "workers": None,  # null -> $PONLAB_WORKERS or cpu count
    "link": {
        "baud_hz": 56e9,
        "wavelength_nm": 1540.0,
        "fiber_km": 2.2,
        "dispersion_ps_nm_km": 17.0,
        "launch_dbm": 3.9,
        "extinction_ratio_db": 9.0,
        "rrc_rolloff": 0.35,
        "sim_sps": 4,
        "responsivity_a_w": 1.0,
        "optical_bandpass_nm": 3.0,
        "rx_bandwidth_hz": 33e9,
        "soa": {
            "enabled": True,
            "small_signal_gain_db": 20.0,
            "saturation_energy_pj": 0.3,
            "carrier_lifetime_ps": 80.0,
            "ase_noise_figure_db": 7.0,
            "ase_enabled": True,
        },
        "noise": {"enabled": True, "thermal_psd_a2_hz": 1e-18},
    },
    "dsp": {
        "normalize": True,  # zero-mean/unit-variance from train stats
        "affine_prefit": True,  # least-squares map of photocurrent to levels
        "prefit_fraction": 0.7,
    },
    "train": {
        "optimizer": "adam",
        "l2_weight": 1e-6,
        "batch_size": 128,
        "max_epochs": 40,
        "patience": 6,
    },
    "models_cfg": {
        "fconvnet": {
            "d_model": 16,
            "k": 3,
            "s_k1": 3,
            "inception_kernels": [1, 3, 5],
            "n_k2": 3,
            "d_i": 16,
            "d_ii": 16,
            "ma_len": 25,
            "residual": True,
            "learning_rate": 1e-2,
            "stride": "ws",
            "target": "sequence",
            "max_train_windows": 2048,
            "max_val_windows": 512,
        },
        "dnn": {
            "ws": 64,
            "widths": [2048, 256],
            "learning_rate": 5e-4,
            "stride": 1,
            "target": "center",
            "max_train_windows": 16384,
            "max_val_windows": 2048,
        },
        "cnn": {
            "ws": 64,
            "channels": 16,
            "kernel": 5,
            "conv_layers": 2,
            "head": [48],
            "learning_rate": 2e-3,
            "stride": 1,
            "target": "center",
            "max_train_windows": 16384,
            "max_val_windows": 2048,
        },
        "sato": {
            "step_size": 2e-4,
            "gamma": 2.5,  # E[a^2]/E[|a|] for unit-spaced PAM4
            "train_pass_count": 3,
            "offsets": 10,
        },
    },
}


# -- configuration handling ----------------------------------------------------


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(overrides: dict | None = None) -> dict:
    """Merge user overrides over the defaults and validate the result."""
    cfg = _deep_merge(DEFAULT_CONFIG, overrides or {})
    rops = cfg["rop_dbm"]
    if len(rops) < 1 or any(b <= a for a, b in zip(rops, rops[1:])):
        raise InvalidConfigError("rop_dbm must be a non-empty strictly increasing list")
    if not cfg["models"]:
        raise InvalidConfigError("at least one model is required")
    for m in cfg["models"]:
        if m not in KNOWN_MODELS:
            raise InvalidConfigError(f"unknown model {m!r}; expected one of {KNOWN_MODELS}")
    if cfg["symbols_per_trial"] < 2**12:
        raise InvalidConfigError("symbols_per_trial must be at least 4096")
    if cfg["trials"] < 1:
        raise InvalidConfigError("trials must be >= 1")
    if cfg["trial_mode"] not in ("batched", "concatenated"):
        raise InvalidConfigError("trial_mode must be batched or concatenated")
    return cfg


def load_config(path) -> dict:
    with Path(path).open() as fh:
        overrides = yaml.safe_load(fh) or {}
    if not isinstance(overrides, dict):
        raise InvalidConfigError(f"{path} does not contain a mapping")
    return resolve_config(overrides)


def config_hash(cfg: dict) -> str:
    canonical = yaml.safe_dump(cfg, sort_keys=True).encode()
    return hashlib.sha256(canonical).hexdigest()[:16]


def derive_seed(master: int, *parts) -> int:
    """Stable per-point seed: adding models or powers never perturbs others."""
    text = f"{master}|" + "|".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") >> 1


def link_config(cfg: dict, rop_dbm: float, seed: int) -> LinkConfig:
    lk = cfg["link"]
    soa = lk["soa"]
    return LinkConfig(
        baud=lk["baud_hz"],
        wavelength_nm=lk["wavelength_nm"],
        fiber_km=lk["fiber_km"],
        dispersion_ps_nm_km=lk["dispersion_ps_nm_km"],
        launch_dbm=lk["launch_dbm"],
        rop_dbm=rop_dbm,
        extinction_ratio_db=lk["extinction_ratio_db"],
        rolloff=lk["rrc_rolloff"],
        sim_sps=lk["sim_sps"],
        responsivity_a_w=lk["responsivity_a_w"],
        optical_bandpass_nm=lk["optical_bandpass_nm"],
        rx_bandwidth_hz=lk["rx_bandwidth_hz"],
        soa=SoaParams(
            enabled=soa["enabled"],
            small_signal_gain_db=soa["small_signal_gain_db"],
            saturation_energy_j=soa["saturation_energy_pj"] * 1e-12,
            carrier_lifetime_s=soa["carrier_lifetime_ps"] * 1e-12,
            ase_noise_figure_db=soa["ase_noise_figure_db"],
            ase_enabled=soa["ase_enabled"],
        ),
        noise=NoiseParams(
            enabled=lk["noise"]["enabled"],
            thermal_psd_a2_hz=lk["noise"]["thermal_psd_a2_hz"],
        ),
        seed=seed,
    )


def model_plan(cfg: dict, model_id: str) -> dict:
    """Window geometry, training plan and complexity for one model id."""
    mc = cfg["models_cfg"]
    if model_id.startswith("fconvnet-"):
        ws = int(model_id.split("-")[1])
        fc = mc["fconvnet"]
        net_cfg = FConvNetConfig(
            ws=ws,
            d_model=fc["d_model"],
            k=fc["k"],
            s_k1=fc["s_k1"],
            inception_kernels=tuple(fc["inception_kernels"]),
            n_k2=fc["n_k2"],
            d_i=fc["d_i"],
            d_ii=fc["d_ii"],
            ma_len=fc["ma_len"],
            residual=fc["residual"],
        )
        stride = ws if fc["stride"] == "ws" else int(fc["stride"])
        return {
            "kind": "fconvnet",
            "ws": ws,
            "stride": stride,
            "target": fc["target"],
            "rmps": rmps_fconvnet(net_cfg),
            "net_cfg": net_cfg,
            "learning_rate": fc["learning_rate"],
            "max_train_windows": fc["max_train_windows"],
            "max_val_windows": fc["max_val_windows"],
        }
    if model_id.startswith("sato-"):
        taps = int(model_id.split("-")[1])
        st = mc["sato"]
        sato_cfg = SatoConfig(
            taps=taps,
            step_size=st["step_size"],
            gamma=st["gamma"],
            train_pass_count=st["train_pass_count"],
        )
        return {"kind": "sato", "rmps": rmps_sato(sato_cfg), "sato_cfg": sato_cfg, "offsets": st["offsets"]}
    if model_id == "dnn":
        dc = mc["dnn"]
        net_cfg = DnnConfig(ws=dc["ws"], widths=tuple(dc["widths"]))
        return {
            "kind": "dnn",
            "ws": dc["ws"],
            "stride": int(dc["stride"]),
            "target": dc["target"],
            "rmps": rmps_dnn(net_cfg),
            "net_cfg": net_cfg,
            "learning_rate": dc["learning_rate"],
            "max_train_windows": dc["max_train_windows"],
            "max_val_windows": dc["max_val_windows"],
        }
    if model_id == "cnn":
        cc = mc["cnn"]
        net_cfg = CnnConfig(
            ws=cc["ws"],
            channels=cc["channels"],
            kernel=cc["kernel"],
            conv_layers=cc["conv_layers"],
            head=tuple(cc["head"]),
        )
        return {
            "kind": "cnn",
            "ws": cc["ws"],
            "stride": int(cc["stride"]),
            "target": cc["target"],
            "rmps": rmps_cnn(net_cfg),
            "net_cfg": net_cfg,
            "learning_rate": cc["learning_rate"],
            "max_train_windows": cc["max_train_windows"],
            "max_val_windows": cc["max_val_windows"],
        }
    raise InvalidConfigError(f"unknown model {model_id!r}")


def build_model(plan: dict, seed: int):
    if plan["kind"] == "fconvnet":
        return FConvNet(plan["net_cfg"], seed=seed)
    if plan["kind"] == "dnn":
        return Dnn(plan["net_cfg"], seed=seed)
    if plan["kind"] == "cnn":
        return Cnn(plan["net_cfg"], seed=seed)
    raise InvalidConfigError(f"not a trainable model kind: {plan['kind']}")


# -- per-point execution ---------------------------------------------------------


def _affine_prefit(rx: np.ndarray, levels: np.ndarray, fraction: float, skip: int) -> np.ndarray:
    """Least-squares map of the photocurrent onto symbol levels, fitted on
    the leading fraction of the sequence (training territory only)."""
    n = levels.size
    hi = max(int(n * fraction), skip + 16)
    sl = slice(skip, hi)
    slope, intercept = np.polyfit(levels[sl].astype(np.float64), rx[sl], 1)
    return (rx - intercept) / slope


def _subsample(d: ds.WindowedDataset, limit: int) -> ds.WindowedDataset:
    if limit <= 0 or len(d) <= limit:
        return d
    step = -(-len(d) // limit)
    return replace(d, inputs=d.inputs[::step], targets=d.targets[::step], starts=d.starts[::step])


def _merge_windowed(parts: list[ds.WindowedDataset]) -> ds.WindowedDataset:
    first = parts[0]
    return replace(
        first,
        inputs=np.concatenate([p.inputs for p in parts]),
        targets=np.concatenate([p.targets for p in parts]),
        starts=np.concatenate([p.starts for p in parts]),
    )


def _predict(model, inputs: np.ndarray, chunk: int = 512) -> np.ndarray:
    return np.concatenate(
        [model.forward_batch(inputs[lo : lo + chunk]).data for lo in range(0, inputs.shape[0], chunk)]
    )


@dataclass
class PointResult:
    report: EqualizerReport
    checkpoint: dict | None = None  # name -> float64 array
    history_csv: str | None = None


def run_point(cfg: dict, model_id: str, rop_dbm: float) -> PointResult:
    """Simulate, adapt/train and evaluate one (model, received power) point."""
    plan = model_plan(cfg, model_id)
    master = cfg["master_seed"]
    chash = config_hash(cfg)
    point_seed = derive_seed(master, model_id, f"{rop_dbm:.6f}")
    trials = cfg["trials"]
    n_sym = cfg["symbols_per_trial"]

    if plan["kind"] == "sato":
        return _run_sato_point(cfg, model_id, rop_dbm, plan, point_seed, chash)

    ws = plan["ws"]
    skip = ws
    prefit_frac = cfg["dsp"]["prefit_fraction"]
    per_trial = []
    for trial in range(trials):
        sym = generate_rns_pam4(derive_seed(point_seed, "sym", trial), n_sym)
        lk = link_config(cfg, rop_dbm, derive_seed(point_seed, "link", trial))
        _, rx1 = run_link(sym, lk)
        rx = rx1.samples
        if cfg["dsp"]["affine_prefit"]:
            rx = _affine_prefit(rx, sym.levels, prefit_frac, skip)
        per_trial.append((rx, sym.levels.astype(np.float64)))

    if cfg["trial_mode"] == "concatenated":
        rx_all = np.concatenate([r for r, _ in per_trial])
        lv_all = np.concatenate([l for _, l in per_trial])
        windowed = ds.build_windows(rx_all, lv_all, ws, plan["stride"], plan["target"])
        tr, va, te = ds.split_75_10_15(windowed)
        tr_parts, va_parts, te_parts = [tr], [va], [te]
    else:
        tr_parts, va_parts, te_parts = [], [], []
        for rx, lv in per_trial:
            windowed = ds.build_windows(rx, lv, ws, plan["stride"], plan["target"])
            tr, va, te = ds.split_75_10_15(windowed)
            tr_parts.append(tr)
            va_parts.append(va)
            te_parts.append(te)

    train_set = _merge_windowed(tr_parts)
    val_set = _merge_windowed(va_parts)
    if cfg["dsp"]["normalize"]:
        train_set, val_set = ds.normalize(train_set, val_set)
        stats = (train_set.norm_mean, train_set.norm_std)
    else:
        stats = (0.0, 1.0)
    train_sub = _subsample(train_set, plan["max_train_windows"])
    val_sub = _subsample(val_set, plan["max_val_windows"])

    model = build_model(plan, derive_seed(point_seed, "init"))
    tc = TrainConfig(
        learning_rate=plan["learning_rate"],
        l2_weight=cfg["train"]["l2_weight"],
        batch_size=cfg["train"]["batch_size"],
        max_epochs=cfg["train"]["max_epochs"],
        patience=cfg["train"]["patience"],
        seed=derive_seed(point_seed, "train"),
        optimizer=cfg["train"]["optimizer"],
    )
    params, history = train(model, train_sub, val_sub, tc)

    mean, std = stats
    total_err, total_bits, total_serr = _evaluate_test_splits(
        model, te_parts, per_trial, cfg["trial_mode"], plan, mean, std, skip, n_sym
    )

    ber = total_err / total_bits
    history_lines = "epoch,train_mse,val_mse\n" + "".join(
        f"{r.epoch},{r.train_mse!r},{r.val_mse!r}\n" for r in history.records
    )
    report = EqualizerReport(
        model=model_id,
        config_hash=chash,
        rop_dbm=rop_dbm,
        ber=ber,
        bit_errors=total_err,
        bits_counted=total_bits,
        symbol_errors=total_serr,
        rmps=plan["rmps"],
        seed=point_seed,
        history_ref=f"history/{model_id}_{rop_dbm:+.1f}.csv",
        extras={
            "best_val_mse": history.best_val_mse,
            "best_epoch": history.best_epoch,
            "norm_mean": mean,
            "norm_std": std,
            "train_windows": len(train_sub),
        },
    )
    checkpoint = {name: p.data.copy() for name, p in params.items()}
    return PointResult(report=report, checkpoint=checkpoint, history_csv=history_lines)


def _evaluate_test_splits(model, te_parts, per_trial, trial_mode, plan, mean, std, skip, n_sym):
    """Bit errors over every raw test split, skipping sequence-edge symbols.

    Inputs are standardized with the training statistics on the way in and
    the predictions mapped back to physical levels on the way out.
    """
    total_err = 0
    total_bits = 0
    total_serr = 0
    for idx, te in enumerate(te_parts):
        if trial_mode == "batched":
            _, lv = per_trial[idx]
        else:
            lv = np.concatenate([l for _, l in per_trial])
        pred = _predict(model, (te.inputs - mean) / std) * std + mean
        if plan["target"] == "sequence":
            positions = (te.starts[:, None] + np.arange(plan["ws"])[None, :]).ravel()
            estimates = pred.ravel()
        else:
            positions = te.starts + plan["ws"] // 2
            estimates = pred
        keep = (positions >= skip) & (positions < lv.size - skip)
        est_levels = slice_pam4(estimates[keep])
        truth = lv[positions[keep]].astype(np.int64)
        _, err, bits = ber_count(est_levels, truth, 0)
        total_err += err
        total_bits += bits
        total_serr += symbol_errors(est_levels, truth, 0)
    return total_err, total_bits, total_serr


def _run_sato_point(cfg, model_id, rop_dbm, plan, point_seed, chash) -> PointResult:
    """Blind FFE: adapt from several random offsets per trial; pool the best
    run of each trial for the headline min-BER, pool everything for mean."""
    trials = cfg["trials"]
    n_sym = cfg["symbols_per_trial"]
    sato_cfg: SatoConfig = plan["sato_cfg"]
    offsets = plan["offsets"]
    skip = max(64, sato_cfg.taps)
    test_start = int(round(0.85 * n_sym))

    rng = np.random.Generator(np.random.PCG64(derive_seed(point_seed, "offsets")))
    best_err = 0
    best_bits = 0
    best_serr = 0
    all_bers = []
    for trial in range(trials):
        sym = generate_rns_pam4(derive_seed(point_seed, "sym", trial), n_sym)
        lk = link_config(cfg, rop_dbm, derive_seed(point_seed, "link", trial))
        rx2, _ = run_link(sym, lk)
        trial_best = None
        for _ in range(offsets):
            offset = int(rng.integers(0, n_sym))
            est, _ = sato_equalize(rx2, sato_cfg, offset)
            sl = slice(test_start, n_sym - skip)
            berr, err, bits = ber_count(est.levels[sl], sym.levels[sl], 0)
            serr = symbol_errors(est.levels[sl], sym.levels[sl], 0)
            all_bers.append(berr)
            if trial_best is None or berr < trial_best[0]:
                trial_best = (berr, err, bits, serr)
        best_err += trial_best[1]
        best_bits += trial_best[2]
        best_serr += trial_best[3]

    report = EqualizerReport(
        model=model_id,
        config_hash=chash,
        rop_dbm=rop_dbm,
        ber=best_err / best_bits,
        bit_errors=best_err,
        bits_counted=best_bits,
        symbol_errors=best_serr,
        rmps=plan["rmps"],
        seed=point_seed,
        mean_ber=float(np.mean(all_bers)),
        extras={"offsets": offsets, "taps": sato_cfg.taps},
    )
    return PointResult(report=report)


# -- sweep driver ----------------------------------------------------------------


@dataclass
class SweepOutcome:
    reports: list[EqualizerReport]
    failures: list[tuple[str, float, str]]
    complexity: list[dict]
    gains: list[dict]
    output_dir: str

    @property
    def exit_code(self) -> int:
        return 0 if not self.failures else 2


def _worker_count(cfg: dict) -> int:
    if cfg.get("workers"):
        return int(cfg["workers"])
    env = os.environ.get("PONLAB_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _point_job(args):
    cfg, model_id, rop = args
    try:
        return model_id, rop, run_point(cfg, model_id, rop), None
    except PonlabError as exc:  # recorded, sweep continues
        return model_id, rop, None, f"{type(exc).__name__}: {exc}"


def run_sweep(cfg: dict, output_dir: str | None = None) -> SweepOutcome:
    """Execute the full (model x received power) grid and write result files."""
    cfg = resolve_config(cfg)
    outdir = Path(output_dir or cfg["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "history").mkdir(exist_ok=True)
    (outdir / "checkpoints").mkdir(exist_ok=True)
    chash = config_hash(cfg)
    with (outdir / "config.yaml").open("w") as fh:
        fh.write(f"# config_hash: {chash}\n")
        yaml.safe_dump(cfg, fh, sort_keys=True)

    jobs = [(cfg, model, rop) for model in cfg["models"] for rop in cfg["rop_dbm"]]
    workers = _worker_count(cfg)
    results = []
    if workers <= 1:
        for job in jobs:
            results.append(_point_job(job))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_point_job, jobs))

    reports: list[EqualizerReport] = []
    failures: list[tuple[str, float, str]] = []
    for model_id, rop, point, error in results:
        if error is not None:
            failures.append((model_id, rop, error))
            continue
        reports.append(point.report)
        if point.history_csv:
            (outdir / point.report.history_ref).write_text(point.history_csv)
        if point.checkpoint is not None:
            stem = f"{model_id}_{rop:+.1f}"
            save_checkpoint(outdir / "checkpoints" / stem, cfg, model_id, point.checkpoint)

    complexity, gains = summarize(cfg, reports)
    emit_curves(reports, outdir, chash)
    _write_complexity(complexity, outdir, chash)
    _write_gains(gains, outdir, chash)
    _write_reports(reports, outdir, chash)
    if failures:
        with (outdir / "errors.log").open("w") as fh:
            for model_id, rop, error in failures:
                fh.write(f"{model_id}\t{rop:+.1f}\t{error}\n")
    return SweepOutcome(reports, failures, complexity, gains, str(outdir))


def summarize(cfg: dict, reports: list[EqualizerReport]) -> tuple[list[dict], list[dict]]:
    """Per-model complexity rows and pairwise sensitivity gains."""
    by_model: dict[str, list[EqualizerReport]] = {}
    for r in reports:
        by_model.setdefault(r.model, []).append(r)
    complexity = []
    curves = {}
    for model in sorted(by_model):
        rows = sorted(by_model[model], key=lambda r: r.rop_dbm)
        mber = float(np.median([r.ber for r in rows]))
        rmps = rows[0].rmps
        complexity.append(
            {"model": model, "rmps": rmps, "mber": mber, "ber_c": ber_c(mber, rmps)}
        )
        for r in rows:
            r.ber_c = ber_c(mber, rmps)
        curves[model] = [(r.rop_dbm, r.ber) for r in rows]
    gains = []
    target = cfg["target_ber"]
    models = sorted(curves)
    for a in models:
        for b in models:
            if a >= b:
                continue
            try:
                g = sensitivity_gain(curves[a], curves[b], target, names=(a, b))
                gains.append({"model_a": a, "model_b": b, "target_ber": target, "gain_db": g})
            except OutOfRangeError as exc:
                gains.append(
                    {"model_a": a, "model_b": b, "target_ber": target, "gain_db": None, "note": str(exc)}
                )
    return complexity, gains


# -- file emission -----------------------------------------------------------------


def _csv_header(fh, chash: str, columns: list[str]):
    fh.write(f"# config_hash: {chash}\n")
    fh.write(",".join(columns) + "\n")


def emit_curves(reports: list[EqualizerReport], outdir, chash: str) -> None:
    """Plot-ready BER-vs-power rows, one per (model, power)."""
    if not reports:
        raise InvalidInputError("no reports to emit")
    outdir = Path(outdir)
    rows = sorted(reports, key=lambda r: (r.model, r.rop_dbm))
    with (outdir / "ber_vs_rop.csv").open("w") as fh:
        _csv_header(fh, chash, ["model", "rop_dbm", "ber", "errors", "bits"])
        for r in rows:
            fh.write(f"{r.model},{r.rop_dbm!r},{r.ber!r},{r.bit_errors},{r.bits_counted}\n")


def _write_complexity(complexity: list[dict], outdir, chash: str) -> None:
    with (Path(outdir) / "complexity.csv").open("w") as fh:
        _csv_header(fh, chash, ["model", "rmps", "mber", "ber_c"])
        for row in complexity:
            fh.write(f"{row['model']},{row['rmps']!r},{row['mber']!r},{row['ber_c']!r}\n")


def _write_gains(gains: list[dict], outdir, chash: str) -> None:
    with (Path(outdir) / "gains.csv").open("w") as fh:
        _csv_header(fh, chash, ["model_a", "model_b", "target_ber", "gain_db", "note"])
        for g in gains:
            gain = "" if g["gain_db"] is None else repr(g["gain_db"])
            fh.write(
                f"{g['model_a']},{g['model_b']},{g['target_ber']!r},{gain},{g.get('note', '')}\n"
            )


def _write_reports(reports: list[EqualizerReport], outdir, chash: str) -> None:
    columns = [
        "model",
        "rop_dbm",
        "ber",
        "bit_errors",
        "bits_counted",
        "symbol_errors",
        "rmps",
        "ber_c",
        "mean_ber",
        "low_confidence",
        "seed",
        "config_hash",
        "history_ref",
    ]
    rows = sorted(reports, key=lambda r: (r.model, r.rop_dbm))
    with (Path(outdir) / "reports.csv").open("w") as fh:
        _csv_header(fh, chash, columns)
        for r in rows:
            mean_ber = "" if r.mean_ber is None else repr(r.mean_ber)
            ber_c_val = "" if r.ber_c is None else repr(r.ber_c)
            fh.write(
                f"{r.model},{r.rop_dbm!r},{r.ber!r},{r.bit_errors},{r.bits_counted},"
                f"{r.symbol_errors},{r.rmps!r},{ber_c_val},{mean_ber},"
                f"{int(r.low_confidence)},{r.seed},{r.config_hash},{r.history_ref}\n"
            )


# -- checkpoints --------------------------------------------------------------------


def save_checkpoint(stem, cfg: dict, model_id: str, arrays: dict[str, np.ndarray]) -> None:
    """Little-endian float64 blob plus a JSON sidecar of shapes and config."""
    stem = Path(stem)
    names = sorted(arrays)
    with stem.with_suffix(".bin").open("wb") as fh:
        for name in names:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())
    sidecar = {
        "model": model_id,
        "config_hash": config_hash(cfg),
        "order": names,
        "shapes": {n: list(arrays[n].shape) for n in names},
        "models_cfg": cfg["models_cfg"],
    }
    stem.with_suffix(".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True))


def load_checkpoint(stem) -> tuple[str, dict, dict[str, np.ndarray]]:
    stem = Path(stem)
    sidecar = json.loads(stem.with_suffix(".json").read_text())
    raw = stem.with_suffix(".bin").read_bytes()
    arrays = {}
    offset = 0
    for name in sidecar["order"]:
        shape = tuple(sidecar["shapes"][name])
        count = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += count * 8
    return sidecar["model"], sidecar, arrays


def restore_model(stem, cfg: dict | None = None):
    """Rebuild a trained model from a checkpoint pair."""
    model_id, sidecar, arrays = load_checkpoint(stem)
    full = resolve_config({"models_cfg": sidecar["models_cfg"]} if cfg is None else cfg)
    plan = model_plan(full, model_id)
    model = build_model(plan, seed=0)
    params = model.parameters()
    for name, arr in arrays.items():
        if name not in params:
            raise InvalidInputError(f"checkpoint parameter {name!r} unknown to {model_id}")
        if params[name].data.shape != arr.shape:
            raise InvalidInputError(f"shape mismatch for {name!r}")
        params[name].data = arr.copy()
    return model_id, model
