"""Seeded end-to-end experiment pipelines and their CSV outputs.

Every grid point draws its randomness from ``derive_seed(config.seed, ...)``
keyed by run/frame/transmitter, never by SNR, so sweeping the SNR reuses the
same pilots and noise shapes, and running points in parallel cannot change
any number.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import csi_frequency_ls, lms_estimate, rls_estimate
from .channel import apply_channel, apply_events, evolve_channel, trace_scene
from .config import ExperimentConfig
from .equalizer import (compute_ber, linear_equalize, mid_symbol_samples, mlse_equalize,
                        to_symbol_spaced, train_linear_equalizer)
from .errors import InvalidArgumentError
from .estimator import (ChannelEstimate, fit, fit_ls_oracle, fit_sequence, rmse, truth_matrix)
from .scenarios import Scenario
from .sensing import (build_states, detect_anomalies, detection_metrics, kmeans, pca_reduce,
                      silhouette_score)
from .signal import ComplexSignal, make_pilot, qpsk_demodulate

log = logging.getLogger(__name__)

_TAGS = {"pilot": 1, "noise": 2, "test": 3, "test_noise": 4}


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 64-bit stream seed for (seed, keys...)."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1)] + [int(k) for k in keys])
    return int(ss.generate_state(1, np.uint64)[0])


def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if x == 0:
            return "0"
        if math.isinf(x) or math.isnan(x):
            return str(x)
        if abs(x) < 1e-3:
            return f"{x:.6e}"
        return f"{x:.10g}"
    return str(x)


def write_csv(path: Path, header, rows, config: ExperimentConfig) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_number(v) for v in row])
    buf.write(f"# config_hash={config.config_hash()} seed={config.seed}\n")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


@dataclass
class RunResult:
    name: str
    rows: list = field(default_factory=list)
    files: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors


def _truth(scenario: Scenario):
    if scenario.tapsets is not None:
        return list(scenario.tapsets)
    return trace_scene(scenario.scene)


def _pilots(cfg: ExperimentConfig, num_tx: int, run: int, symbol_count=None, tag="pilot"):
    mod = cfg.modulation.build(symbol_count)
    out = []
    for m in range(num_tx):
        bits, symbols, signal = make_pilot(mod, derive_seed(cfg.seed, _TAGS[tag], run, m))
        out.append((bits, symbols, signal))
    return out


def _snr_label(snr: float) -> str:
    return "inf" if math.isinf(snr) else format_number(snr)


# --- static RMSE grid ----------------------------------------------------------

def _static_point(args):
    cfg, snr, run = args
    try:
        scenario = cfg.scenario.build()
        truth = _truth(scenario)
        pilots = [p[2] for p in _pilots(cfg, len(truth), run)]
        rx = apply_channel(pilots, truth, snr, derive_seed(cfg.seed, _TAGS["noise"], run))
        est = fit(cfg.estimator.build(len(truth), len(rx)), pilots, rx)
        return rmse(est, truth), None
    except Exception as exc:  # reported per point, the rest of the grid still runs
        return None, f"{cfg.scenario.name or cfg.scenario.preset} snr={snr} run={run}: {exc!r}"


def _map(fn, items, workers):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def run_static(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """RMSE versus SNR on a fixed scene, ``runs_per_point`` seeded runs per SNR."""
    name = cfg.scenario.build().name
    points = [(cfg, snr, run) for snr in cfg.snr_grid for run in range(cfg.runs_per_point)]
    results = _map(_static_point, points, cfg.workers)
    res = RunResult("static")
    per_run = []
    for snr in cfg.snr_grid:
        vals = []
        for (pcfg, psnr, run), (val, err) in zip(points, results):
            if psnr != snr:
                continue
            if err:
                res.errors.append(err)
                continue
            vals.append(val)
            per_run.append((name, _snr_label(snr), run, val))
        if vals:
            res.rows.append((name, _snr_label(snr), float(np.mean(vals)), float(np.std(vals)), len(vals)))
    if out_dir is not None:
        out = Path(out_dir)
        res.files.append(write_csv(out / "static_rmse.csv",
                                   ["scenario", "snr_db", "mean_rmse", "std_rmse", "runs"], res.rows, cfg))
        res.files.append(write_csv(out / "static_runs.csv",
                                   ["scenario", "snr_db", "run", "rmse"], per_run, cfg))
    return res


# --- mobile tracking ------------------------------------------------------------

def _frame_signals(cfg, truth_frames, snr, symbols_per_frame, noise_tag="noise"):
    frames = []
    for k, truth in enumerate(truth_frames):
        pilots = [p[2] for p in _pilots(cfg, len(truth), k, symbols_per_frame)]
        rx = apply_channel(pilots, truth, snr, derive_seed(cfg.seed, _TAGS[noise_tag], k))
        frames.append((pilots, rx))
    return frames


def run_mobile(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Warm-started per-frame tracking along the scenario trajectory."""
    scenario = cfg.scenario.build()
    if scenario.trajectory is None or scenario.scene is None:
        raise InvalidArgumentError("mobile run needs a scene with a trajectory")
    res = RunResult("mobile")
    truth_frames = [[ts] for ts in evolve_channel(scenario.scene, scenario.trajectory)]
    est_cfg = cfg.estimator
    sym = cfg.mobile.symbols_per_frame
    thr = cfg.mobile.occupancy_threshold
    truth_heat = np.vstack([np.abs(truth_matrix(t, est_cfg.num_taps, est_cfg.tap_resolution)[0])
                            for t in truth_frames])
    series = []
    heatmaps = {}
    for snr in cfg.snr_grid:
        try:
            frames = _frame_signals(cfg, truth_frames, snr, sym)
            config = est_cfg.build(1, len(frames[0][1]))
            ests = fit_sequence(config, frames, est_cfg.warm_epochs)
        except Exception as exc:
            res.errors.append(f"{scenario.name} snr={snr}: {exc!r}")
            continue
        errs = np.array([rmse(e, t) for e, t in zip(ests, truth_frames)])
        heat = np.vstack([np.abs(e.weights[0]) for e in ests])
        heatmaps[snr] = heat
        match = bool(np.array_equal(heat > thr, truth_heat > thr))
        for k, v in enumerate(errs):
            series.append((_snr_label(snr), k, float(scenario.trajectory.times[k]), float(v)))
        res.rows.append((_snr_label(snr), float(errs.mean()), float(errs.max()),
                         float(np.mean(errs <= 1e-4)), match))
        res.summary[snr] = {"rmse": errs, "heatmap": heat, "occupancy_match": match}
    res.summary["truth_heatmap"] = truth_heat
    if out_dir is not None:
        out = Path(out_dir)
        res.files.append(write_csv(out / "mobile_summary.csv",
                                   ["snr_db", "mean_rmse", "max_rmse", "frac_le_1e-4", "occupancy_match"],
                                   res.rows, cfg))
        res.files.append(write_csv(out / "mobile_rmse.csv", ["snr_db", "frame", "time_s", "rmse"],
                                   series, cfg))
        taps = [f"tap{i}" for i in range(truth_heat.shape[1])]
        res.files.append(write_csv(out / "mobile_heatmap_truth.csv", ["frame"] + taps,
                                   [[k, *row] for k, row in enumerate(truth_heat)], cfg))
        for snr, heat in heatmaps.items():
            res.files.append(write_csv(out / f"mobile_heatmap_snr{_snr_label(snr)}.csv", ["frame"] + taps,
                                       [[k, *row] for k, row in enumerate(heat)], cfg))
    return res


# --- BER -----------------------------------------------------------------------

BER_METHODS = ("tdl_nn", "lms", "rls", "perfect")


def _ber_point(args):
    cfg, snr, run = args
    try:
        return _ber_once(cfg, snr, run), None
    except Exception as exc:
        return None, f"ber snr={snr} run={run}: {exc!r}"


def _ber_once(cfg: ExperimentConfig, snr: float, run: int) -> dict:
    scenario = cfg.scenario.build()
    truth = _truth(scenario)
    if len(truth) != 1:
        raise InvalidArgumentError("BER scenario must have a single transmitter")
    sps = cfg.modulation.samples_per_symbol
    b = cfg.ber
    perfect = to_symbol_spaced(truth[0], sps)
    # training burst
    (_, train_syms, train_sig), = _pilots(cfg, 1, run, b.train_symbols)
    rx_train = apply_channel([train_sig], truth, snr, derive_seed(cfg.seed, _TAGS["noise"], run))
    est = fit(cfg.estimator.build(1, len(rx_train)), [train_sig], rx_train)
    tdl = to_symbol_spaced(est, sps)
    r_train = mid_symbol_samples(rx_train.samples, sps, b.train_symbols)
    # test burst, followed by a known all-zero tail for trellis termination
    tail = max(perfect.memory, est.config.max_delay // sps + 1)
    (test_bits, test_syms, _), = _pilots(cfg, 1, run, b.test_symbols, tag="test")
    padded = np.concatenate([test_syms, np.zeros(tail, dtype=np.complex128)])
    test_sig = ComplexSignal(np.repeat(padded, sps), cfg.modulation.build().sample_rate_hz)
    rx_test = apply_channel([test_sig], truth, snr, derive_seed(cfg.seed, _TAGS["test_noise"], run))
    r_test = mid_symbol_samples(rx_test.samples, sps)
    K = b.test_symbols
    out = {}
    for name, ch in (("tdl_nn", tdl), ("perfect", perfect)):
        decided = mlse_equalize(r_test[:K + ch.memory], ch, K)
        out[name] = compute_ber(qpsk_demodulate(decided), test_bits)
    for name, kwargs in (("lms", {"step_mu": b.lms_mu}), ("rls", {"forgetting_lambda": b.rls_lambda})):
        w = train_linear_equalizer(r_train, train_syms, b.equalizer_taps, b.decision_delay, name, **kwargs)
        decided = linear_equalize(r_test, w, b.decision_delay, K)
        out[name] = compute_ber(qpsk_demodulate(decided), test_bits)
    return out


def run_ber(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """BER of MLSE (TDL-NN estimate, true channel) and adaptive linear equalizers."""
    points = [(cfg, snr, run) for snr in cfg.snr_grid for run in range(cfg.runs_per_point)]
    results = _map(_ber_point, points, cfg.workers)
    res = RunResult("ber")
    for snr in cfg.snr_grid:
        got = []
        for (_, psnr, _), (val, err) in zip(points, results):
            if psnr != snr:
                continue
            if err:
                res.errors.append(err)
            else:
                got.append(val)
        for method in BER_METHODS:
            if got:
                res.rows.append((method, _snr_label(snr), float(np.mean([g[method] for g in got])), len(got)))
    if out_dir is not None:
        res.files.append(write_csv(Path(out_dir) / "ber.csv", ["method", "snr_db", "ber", "runs"],
                                   res.rows, cfg))
    return res


def ber_table(result: RunResult) -> dict:
    return {(m, snr): ber for m, snr, ber, _ in result.rows}


# --- sensing -------------------------------------------------------------------

def run_sense(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Drone-style event detection from TDL states and from conventional CSI."""
    scenario = cfg.scenario.build()
    if not scenario.events or scenario.trajectory is None or scenario.scene is None:
        raise InvalidArgumentError("sensing run needs a scene, a trajectory and events")
    s = cfg.sensing
    res = RunResult("sense")
    try:
        frames, truth_mask = apply_events(evolve_channel(scenario.scene, scenario.trajectory),
                                          scenario.events)
        signals = _frame_signals(cfg, [[f] for f in frames], s.snr_db, s.symbols_per_frame)
        config = cfg.estimator.build(1, len(signals[0][1]))
        tdl = fit_sequence(config, signals, cfg.estimator.warm_epochs)
        csi = [csi_frequency_ls(p[0], y, s.csi_eps) for p, y in signals]
    except Exception as exc:
        res.errors.append(f"{scenario.name}: {exc!r}")
        return res
    masks = {}
    pcs = {}
    for variant, ests in (("tdl", tdl), ("csi", csi)):
        reduced = pca_reduce(build_states(ests, truth_mask), s.dims)
        km = kmeans(reduced, 2, derive_seed(cfg.seed, 99), s.restarts)
        mask = detect_anomalies(km.assignments, reduced, km.centroids)
        precision, recall, fp = detection_metrics(mask, truth_mask)
        sil = silhouette_score(reduced, km.assignments)
        res.rows.append((variant, precision, recall, fp, sil, int(mask.sum()), int(truth_mask.sum())))
        res.summary[variant] = {"precision": precision, "recall": recall, "false_positives": fp,
                                "silhouette": sil, "mask": mask}
        masks[variant] = mask
        pcs[variant] = reduced.states
    res.summary["truth_mask"] = truth_mask
    if out_dir is not None:
        out = Path(out_dir)
        res.files.append(write_csv(out / "sense_summary.csv",
                                   ["variant", "precision", "recall", "false_positives", "silhouette",
                                    "flagged", "true_events"], res.rows, cfg))
        res.files.append(write_csv(out / "sense_mask.csv", ["frame", "truth", "tdl_flag", "csi_flag"],
                                   [(k, truth_mask[k], masks["tdl"][k], masks["csi"][k])
                                    for k in range(len(truth_mask))], cfg))
        pc_rows = [(v, k, *pcs[v][k][:2]) for v in ("tdl", "csi") for k in range(len(truth_mask))]
        res.files.append(write_csv(out / "sense_pca.csv", ["variant", "frame", "pc1", "pc2"][:2 + min(2, s.dims)],
                                   [r[:2 + min(2, s.dims)] for r in pc_rows], cfg))
    return res


# --- small utilities behind the CLI ----------------------------------------------

def run_trace(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    scenario = cfg.scenario.build()
    res = RunResult("trace")
    if scenario.trajectory is not None and scenario.scene is not None:
        frames = evolve_channel(scenario.scene, scenario.trajectory)
        if scenario.events:
            frames, _ = apply_events(frames, scenario.events)
        for k, ts in enumerate(frames):
            for t in ts.taps:
                res.rows.append((k, ts.transmitter_id, t.delay_samples, t.gain.real, t.gain.imag, abs(t.gain)))
    else:
        for ts in _truth(scenario):
            for t in ts.taps:
                res.rows.append((0, ts.transmitter_id, t.delay_samples, t.gain.real, t.gain.imag, abs(t.gain)))
    if out_dir is not None:
        res.files.append(write_csv(Path(out_dir) / "taps.csv",
                                   ["frame", "transmitter", "delay_samples", "gain_re", "gain_im", "gain_abs"],
                                   res.rows, cfg))
    return res


def run_simulate(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """One pilot burst per transmitter through the scenario at the first SNR."""
    truth = _truth(cfg.scenario.build())
    pilots = [p[2] for p in _pilots(cfg, len(truth), 0)]
    snr = cfg.snr_grid[0]
    rx = apply_channel(pilots, truth, snr, derive_seed(cfg.seed, _TAGS["noise"], 0))
    res = RunResult("simulate")
    cols = np.column_stack([np.arange(len(rx))]
                           + [c for x in pilots for c in (x.samples.real, x.samples.imag)]
                           + [rx.samples.real, rx.samples.imag])
    res.rows = [(int(r[0]), *r[1:]) for r in cols]
    if out_dir is not None:
        header = ["n"] + [f"tx{m}_{p}" for m in range(len(pilots)) for p in ("re", "im")] + ["rx_re", "rx_im"]
        res.files.append(write_csv(Path(out_dir) / "signals.csv", header, res.rows, cfg))
    return res


def run_baseline(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Tap-grid RMSE of TDL-NN against LS, LMS, RLS and frequency-domain CSI."""
    scenario = cfg.scenario.build()
    truth = _truth(scenario)
    if len(truth) != 1:
        raise InvalidArgumentError("baseline comparison supports a single transmitter")
    L = cfg.estimator.num_taps
    if cfg.estimator.tap_resolution != 1:
        raise InvalidArgumentError("baseline comparison needs tap_resolution = 1")
    res = RunResult("baseline")
    dense = truth_matrix(truth, L)[0]
    for snr in cfg.snr_grid:
        acc = {k: [] for k in ("tdl_nn", "ls_oracle", "lms", "rls", "csi")}
        for run in range(cfg.runs_per_point):
            try:
                (_, _, x), = _pilots(cfg, 1, run)
                y = apply_channel([x], truth, snr, derive_seed(cfg.seed, _TAGS["noise"], run))
                est = {
                    "tdl_nn": fit(cfg.estimator.build(1, len(y)), [x], y).weights[0],
                    "ls_oracle": fit_ls_oracle([x], y, L).weights[0],
                    "lms": lms_estimate(x, y, L)[0],
                    "rls": rls_estimate(x, y, L)[0],
                    "csi": csi_frequency_ls(x, y).impulse_response[:L + 1],
                }
            except Exception as exc:
                res.errors.append(f"baseline snr={snr} run={run}: {exc!r}")
                continue
            for k, w in est.items():
                acc[k].append(float(np.sqrt(np.mean(np.abs(w - dense) ** 2))))
        for k, vals in acc.items():
            if vals:
                res.rows.append((k, _snr_label(snr), float(np.mean(vals)), len(vals)))
    if out_dir is not None:
        res.files.append(write_csv(Path(out_dir) / "baseline_rmse.csv",
                                   ["method", "snr_db", "mean_rmse", "runs"], res.rows, cfg))
    return res


def write_manifest(out_dir, cfg: ExperimentConfig, results, started: float) -> Path:
    out = Path(out_dir)
    files = sorted({str(Path(f).relative_to(out)) for r in results for f in r.files})
    manifest = {
        "files": files,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "wall_clock_s": round(time.time() - started, 3),
        "version": __version__,
        "errors": [e for r in results for e in r.errors],
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path
