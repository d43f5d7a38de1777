"""Experiment orchestration: dataset/model management, figure pipelines, CSV output.

Every run is reproducible from (config, master seed): channels, splits,
noise, and training all draw from named counter-based streams derived
from the master seed, and each CSV row carries the config hash.

Evaluation protocol: the unconstrained optimum is scored with its SVD
combiner; every hybrid scheme (OMP, ZF, DNN) is scored with the hybrid
MMSE combiner built for its own precoder at the evaluated SNR, so the
comparison isolates precoder quality.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import neural
from .channel import (ArrayGeometry, ChannelRealization, generate_channel, make_rng,
                      stack_batch)
from .config import ExperimentConfig, config_hash, config_to_dict, training_hash
from .exceptions import ConfigError
from .metrics import (LinkBudget, beam_pattern, ber_16qam, complexity_count,
                      instrumented_dnn_count, spectral_efficiency)
from .linalg import MultiplicationCounter
from .precoders import (PrecoderDictionary, omp_hybrid_combiner, omp_hybrid_precoder,
                        optimal_combiner, optimal_precoder, subconnected_hybrid_precoder,
                        zf_hybrid_precoder)
from .tensorio import load_model, read_sidecar, save_model, write_channels

# Stream tags deriving independent generators from the master seed.
STREAM_DATASET = 1
STREAM_SPLIT = 2
STREAM_FIG6 = 3
STREAM_FIG7 = 4
STREAM_FIG9 = 5
STREAM_BEAM = 6
STREAM_FIG12 = 7
STREAM_EXPORT = 8

METRIC_HEADER = ("scheme", "n_t", "n_r", "n_rf", "n_s", "snr_db", "seed",
                 "value", "units", "config_hash")
TRACE_HEADER = ("scheme", "n_t", "n_r", "n_rf", "n_s", "iteration", "seed",
                "value", "units", "config_hash")
BEAM_HEADER = ("scheme", "n_t", "n_r", "n_rf", "n_s", "az_deg", "el_deg", "seed",
               "value", "units", "config_hash")


@dataclass
class ResultBundle:
    """Paths and provenance for one experiment run."""

    experiment: str
    config_hash: str
    code_version: str = __version__
    rng: str = "philox4x64"
    csv_paths: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "bundle.json"
        payload = {"experiment": self.experiment, "config_hash": self.config_hash,
                   "code_version": self.code_version, "rng": self.rng,
                   "csv": {k: str(v) for k, v in self.csv_paths.items()},
                   "timings_s": self.timings, "metadata": self.metadata}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _geometries(cfg: ExperimentConfig, n_t: int | None = None):
    carrier = cfg.carrier_ghz * 1e9
    tx = ArrayGeometry.for_antennas(n_t or cfg.n_t, carrier, cfg.spacing_factor)
    rx = ArrayGeometry.for_antennas(cfg.n_r, carrier, cfg.spacing_factor)
    return tx, rx


def _eval_channels(cfg: ExperimentConfig, stream: int, count: int,
                   n_t: int | None = None, *extra) -> list[ChannelRealization]:
    tx, rx = _geometries(cfg, n_t)
    return [generate_channel(tx, rx, cfg.n_cl, cfg.n_ray, cfg.seed,
                             stream, *extra, i)
            for i in range(count)]


def _dictionaries(cfg: ExperimentConfig, ch: ChannelRealization):
    if cfg.dictionary == "genie":
        return (PrecoderDictionary.from_rays(ch.tx_geometry, ch.clusters, "tx"),
                PrecoderDictionary.from_rays(ch.rx_geometry, ch.clusters, "rx"))
    return (PrecoderDictionary.from_grid(ch.tx_geometry, cfg.grid_az, cfg.grid_el),
            PrecoderDictionary.from_grid(ch.rx_geometry, cfg.grid_az, cfg.grid_el))


def _dnn_layer_widths(cfg: ExperimentConfig, n_t: int) -> list[int]:
    width = cfg.train.input_projection or 2 * cfg.n_r * n_t
    return [width, *cfg.train.encoder_units, *cfg.train.decoder_units,
            n_t * cfg.n_rf_t]


# --- model management -------------------------------------------------------


def model_dir(cfg: ExperimentConfig, n_t: int | None = None,
              n_rf: int | None = None) -> Path:
    return Path(cfg.out_dir) / "models" / training_hash_ext(cfg, n_t, n_rf)


def training_hash_ext(cfg: ExperimentConfig, n_t: int | None = None,
                      n_rf: int | None = None) -> str:
    if n_rf is not None and n_rf != cfg.n_rf_t:
        import dataclasses as _dc
        cfg = _dc.replace(cfg, n_rf_t=n_rf)
    return training_hash(cfg, n_t)


def get_or_train_model(cfg: ExperimentConfig, n_t: int | None = None,
                       n_rf: int | None = None, force: bool = False):
    """Load the cached checkpoint for this config view, or train and cache it.

    Returns (model, history dict).  The cache key covers every field the
    trained weights depend on, so a stale model is never reused against a
    changed channel recipe.
    """
    n_t = n_t or cfg.n_t
    n_rf = n_rf or cfg.n_rf_t
    mdir = model_dir(cfg, n_t, n_rf)
    ckpt = mdir / "model.bin"
    hist_path = mdir / "history.json"
    if ckpt.exists() and hist_path.exists() and not force:
        return load_model(ckpt), json.loads(hist_path.read_text())

    tx, rx = _geometries(cfg, n_t)
    channels = [generate_channel(tx, rx, cfg.n_cl, cfg.n_ray, cfg.seed,
                                 STREAM_DATASET, n_t, i)
                for i in range(cfg.train.n_samples)]
    samples = neural.make_training_samples(channels, cfg.n_s)
    train_s, val_s, test_s = neural.split_dataset(
        samples, make_rng(cfg.seed, STREAM_SPLIT, n_t))
    tcfg = neural.TrainingConfig(
        epochs=cfg.train.epochs, batch_size=cfg.train.batch_size,
        learning_rate=cfg.train.learning_rate, seed=cfg.seed,
        noise_sigma=cfg.train.noise_sigma, tau=cfg.train.tau, n_rf=n_rf,
        encoder_units=tuple(cfg.train.encoder_units),
        decoder_units=tuple(cfg.train.decoder_units),
        input_projection=cfg.train.input_projection)
    model, history = neural.train(train_s, tcfg, validation=val_s,
                                  extra_eval={"test": test_s})
    hist = history.to_dict()
    mdir.mkdir(parents=True, exist_ok=True)
    final = {"final_train_accuracy": hist["train_accuracy"][-1],
             "final_val_accuracy": hist["val_accuracy"][-1],
             "final_test_accuracy": hist["extra_accuracy"]["test"][-1],
             "final_train_loss": hist["train_loss"][-1]}
    save_model(ckpt, model, meta={"config_hash": config_hash(cfg),
                                  "seed": cfg.seed,
                                  "epochs_trained": cfg.train.epochs,
                                  "tau": cfg.train.tau, **final})
    hist_path.write_text(json.dumps(hist) + "\n")
    return model, hist


# --- scheme evaluation ------------------------------------------------------


def _se_for_schemes(cfg: ExperimentConfig, ch: ChannelRealization, model,
                    snr_db_list, schemes) -> dict:
    """Mean-ready SE values: {scheme: [SE at each SNR]} for one channel."""
    f_opt = optimal_precoder(ch, cfg.n_s)
    dict_tx, dict_rx = _dictionaries(cfg, ch)
    precoders = {}
    if "optimal" in schemes:
        precoders["optimal"] = f_opt
    if "omp" in schemes:
        precoders["omp"] = omp_hybrid_precoder(f_opt, dict_tx, cfg.n_rf_t)
    if "zf" in schemes:
        precoders["zf"] = zf_hybrid_precoder(ch, cfg.n_rf_t, cfg.n_s)
    if "subconnected" in schemes:
        precoders["subconnected"] = subconnected_hybrid_precoder(ch, cfg.n_rf_t, cfg.n_s)
    if "dnn" in schemes:
        precoders["dnn"] = neural.infer_precoder(model, ch, f_opt=f_opt)

    w_opt = optimal_combiner(ch, cfg.n_s) if "optimal" in schemes else None
    out = {s: [] for s in schemes}
    for snr_db in snr_db_list:
        budget = LinkBudget.from_snr_db(snr_db, cfg.n_s)
        snr_lin = budget.rho / budget.noise_var
        for scheme in schemes:
            if scheme == "optimal":
                w = w_opt
            else:
                w = omp_hybrid_combiner(ch, precoders[scheme], dict_rx,
                                        cfg.n_rf_r, snr_lin)
            out[scheme].append(spectral_efficiency(ch, precoders[scheme], w, budget))
    return out


def run_fig6(cfg: ExperimentConfig) -> ResultBundle:
    """Mean spectral efficiency vs SNR for optimal, OMP, and DNN precoding."""
    t0 = time.time()
    out_dir = Path(cfg.out_dir) / "fig6"
    chash = config_hash(cfg)
    model, _ = get_or_train_model(cfg)
    t_train = time.time() - t0

    schemes = ("optimal", "omp", "dnn")
    sums = {s: np.zeros(len(cfg.snr_grid_db)) for s in schemes}
    channels = _eval_channels(cfg, STREAM_FIG6, cfg.trials)
    for ch in channels:
        se = _se_for_schemes(cfg, ch, model, cfg.snr_grid_db, schemes)
        for s in schemes:
            sums[s] += np.asarray(se[s])
    rows = [(s, cfg.n_t, cfg.n_r, cfg.n_rf_t, cfg.n_s, snr, cfg.seed,
             float(sums[s][j] / cfg.trials), "bits/s/Hz", chash)
            for s in schemes for j, snr in enumerate(cfg.snr_grid_db)]
    csv = write_csv(out_dir / "spectral_efficiency.csv", METRIC_HEADER, rows)
    bundle = ResultBundle(experiment="fig6", config_hash=chash,
                          csv_paths={"spectral_efficiency": csv},
                          timings={"train_or_load": t_train,
                                   "evaluate": time.time() - t0 - t_train},
                          metadata={"dictionary": cfg.dictionary,
                                    "trials": cfg.trials})
    bundle.write(out_dir)
    return bundle


def run_fig7(cfg: ExperimentConfig) -> ResultBundle:
    """Mean spectral efficiency vs transmit antenna count for ZF, OMP, DNN."""
    t0 = time.time()
    out_dir = Path(cfg.out_dir) / "fig7"
    chash = config_hash(cfg)
    schemes = ("zf", "omp", "dnn")
    rows = []
    retrained = {}
    for n_t in cfg.n_t_grid:
        model, _ = get_or_train_model(cfg, n_t=n_t)
        retrained[str(n_t)] = training_hash_ext(cfg, n_t)
        sums = {s: 0.0 for s in schemes}
        channels = _eval_channels(cfg, STREAM_FIG7, cfg.trials, n_t)
        for ch in channels:
            se = _se_for_schemes(cfg, ch, model, [cfg.fixed_snr_db], schemes)
            for s in schemes:
                sums[s] += se[s][0]
        for s in schemes:
            rows.append((s, n_t, cfg.n_r, cfg.n_rf_t, cfg.n_s, cfg.fixed_snr_db,
                         cfg.seed, sums[s] / cfg.trials, "bits/s/Hz", chash))
    csv = write_csv(out_dir / "spectral_efficiency_vs_nt.csv", METRIC_HEADER, rows)
    bundle = ResultBundle(experiment="fig7", config_hash=chash,
                          csv_paths={"spectral_efficiency_vs_nt": csv},
                          timings={"total": time.time() - t0},
                          metadata={"dictionary": cfg.dictionary,
                                    "models": retrained,
                                    "snr_db": cfg.fixed_snr_db})
    bundle.write(out_dir)
    return bundle


def run_fig8(cfg: ExperimentConfig) -> ResultBundle:
    """Closed-form complexity counts for OMP and DNN over the antenna grid.

    Counts use full multiplexing (n_s = n_rf) and the CSI-free grid
    dictionary size, the regime of the reference complexity comparison.
    """
    t0 = time.time()
    out_dir = Path(cfg.out_dir) / "fig8"
    chash = config_hash(cfg)
    n_s = cfg.n_rf_t
    n_atoms = cfg.grid_az * cfg.grid_el
    rows = []
    for n_t in sorted(set(cfg.n_t_grid) | {128, 256}):
        omp = complexity_count("omp", n_t=n_t, n_r=cfg.n_r, n_rf=cfg.n_rf_t,
                               n_s=n_s, n_atoms=n_atoms)
        dnn = complexity_count("dnn", n_t=n_t, n_r=cfg.n_r, n_rf=cfg.n_rf_t,
                               n_s=n_s, layer_widths=_dnn_layer_widths(cfg, n_t))
        rows.append(("omp", n_t, cfg.n_r, cfg.n_rf_t, n_s, None, cfg.seed,
                     omp, "complex_multiplications", chash))
        rows.append(("dnn", n_t, cfg.n_r, cfg.n_rf_t, n_s, None, cfg.seed,
                     dnn, "complex_multiplications", chash))
    csv = write_csv(out_dir / "complexity.csv", METRIC_HEADER, rows)
    bundle = ResultBundle(experiment="fig8", config_hash=chash,
                          csv_paths={"complexity": csv},
                          timings={"total": time.time() - t0},
                          metadata={"n_atoms": n_atoms, "n_s": n_s,
                                    "counting": "complex multiplications; "
                                                "real network multiplies / 4"})
    bundle.write(out_dir)
    return bundle


def run_fig9(cfg: ExperimentConfig) -> ResultBundle:
    """Reconstruction-error traces: DNN training epochs and OMP stages."""
    t0 = time.time()
    out_dir = Path(cfg.out_dir) / "fig9"
    chash = config_hash(cfg)
    _, hist = get_or_train_model(cfg)
    rows = [("dnn", cfg.n_t, cfg.n_r, cfg.n_rf_t, cfg.n_s, i + 1, cfg.seed,
             float(v), "mse", chash)
            for i, v in enumerate(hist["epoch_mse"])]

    residual_sums = np.zeros(cfg.n_rf_t)
    channels = _eval_channels(cfg, STREAM_FIG9, cfg.trials)
    for ch in channels:
        f_opt = optimal_precoder(ch, cfg.n_s)
        dict_tx, _ = _dictionaries(cfg, ch)
        _, residuals = omp_hybrid_precoder(f_opt, dict_tx, cfg.n_rf_t,
                                           return_residuals=True)
        padded = residuals + [residuals[-1]] * (cfg.n_rf_t - len(residuals))
        residual_sums += np.square(padded)
    rows += [("omp", cfg.n_t, cfg.n_r, cfg.n_rf_t, cfg.n_s, k + 1, cfg.seed,
              float(residual_sums[k] / cfg.trials), "mse", chash)
             for k in range(cfg.n_rf_t)]
    csv = write_csv(out_dir / "mse_trace.csv", TRACE_HEADER, rows)
    bundle = ResultBundle(experiment="fig9", config_hash=chash,
                          csv_paths={"mse_trace": csv},
                          timings={"total": time.time() - t0},
                          metadata={"dnn_iteration_unit": "epoch",
                                    "omp_iteration_unit": "greedy stage"})
    bundle.write(out_dir)
    return bundle


def run_beampattern(cfg: ExperimentConfig) -> ResultBundle:
    """Transmit beam patterns for optimal and hybrid weights on one channel."""
    t0 = time.time()
    out_dir = Path(cfg.out_dir) / "beampattern"
    chash = config_hash(cfg)
    tx, rx = _geometries(cfg)
    center = (math.radians(cfg.beam.center_az_deg), math.radians(cfg.beam.center_el_deg))
    ch = generate_channel(tx, rx, cfg.n_cl, cfg.n_ray, cfg.seed, STREAM_BEAM,
                          angular_spread_deg=cfg.beam.spread_deg,
                          first_cluster_center=center)
    f_opt = optimal_precoder(ch, 1)
    dict_tx = PrecoderDictionary.from_rays(tx, ch.clusters, "tx")
    hybrid = omp_hybrid_precoder(f_opt, dict_tx, cfg.n_rf_t)

    az_deg = np.linspace(cfg.beam.az_min_deg, cfg.beam.az_max_deg, cfg.beam.grid_az)
    el_deg = np.linspace(cfg.beam.el_min_deg, cfg.beam.el_max_deg, cfg.beam.grid_el)
    az = np.radians(az_deg)
    el = np.radians(el_deg)
    csv_paths = {}
    peaks = {}
    for name, weights in (("optimal", f_opt[:, 0]), ("hybrid", hybrid.matrix[:, 0])):
        grid = beam_pattern(weights, tx, az, el)
        rows = [(name, cfg.n_t, cfg.n_r, cfg.n_rf_t, 1, float(az_deg[a]),
                 float(el_deg[e]), cfg.seed, float(grid.gains_db[e, a]), "dB", chash)
                for e in range(el.size) for a in range(az.size)]
        csv_paths[name] = write_csv(out_dir / f"beam_{name}.csv", BEAM_HEADER, rows)
        pe, pa = grid.peak_indices()
        peaks[name] = {"az_deg": float(az_deg[pa]), "el_deg": float(el_deg[pe])}
    bundle = ResultBundle(experiment="beampattern", config_hash=chash,
                          csv_paths=csv_paths,
                          timings={"total": time.time() - t0},
                          metadata={"peaks": peaks,
                                    "angular_spread_deg": cfg.beam.spread_deg,
                                    "spread_units_assumed": "degrees",
                                    "grid": [cfg.beam.grid_el, cfg.beam.grid_az]})
    bundle.write(out_dir)
    return bundle


def run_fig12(cfg: ExperimentConfig) -> ResultBundle:
    """16-QAM bit error rate vs SNR for ZF, OMP, and DNN precoding.

    All schemes share bit and noise draws per (channel, SNR) point so the
    comparison is paired.
    """
    t0 = time.time()
    out_dir = Path(cfg.out_dir) / "fig12"
    chash = config_hash(cfg)
    n_rf = cfg.ber_n_rf
    model, _ = get_or_train_model(cfg, n_rf=n_rf)
    t_train = time.time() - t0

    bits_per_channel = cfg.ber_bits_per_point // cfg.ber_channels
    bits_per_channel -= bits_per_channel % (4 * cfg.n_s)
    schemes = ("zf", "omp", "dnn")
    totals = {s: np.zeros(len(cfg.ber_snr_grid_db)) for s in schemes}
    channels = _eval_channels(cfg, STREAM_FIG12, cfg.ber_channels)
    for i, ch in enumerate(channels):
        f_opt = optimal_precoder(ch, cfg.n_s)
        dict_tx, dict_rx = _dictionaries(cfg, ch)
        precoders = {"zf": zf_hybrid_precoder(ch, n_rf, cfg.n_s),
                     "omp": omp_hybrid_precoder(f_opt, dict_tx, n_rf),
                     "dnn": neural.infer_precoder(model, ch, f_opt=f_opt)}
        for j, snr_db in enumerate(cfg.ber_snr_grid_db):
            snr_lin = 10.0 ** (snr_db / 10.0)
            for s in schemes:
                combiner = omp_hybrid_combiner(ch, precoders[s], dict_rx, n_rf, snr_lin)
                rng = make_rng(cfg.seed, STREAM_FIG12, 1000 + i, j)
                totals[s][j] += ber_16qam(ch, precoders[s], combiner, snr_db,
                                          bits_per_channel, rng)
    rows = [(s, cfg.n_t, cfg.n_r, n_rf, cfg.n_s, snr, cfg.seed,
             float(totals[s][j] / cfg.ber_channels), "ber", chash)
            for s in schemes for j, snr in enumerate(cfg.ber_snr_grid_db)]
    csv = write_csv(out_dir / "ber.csv", METRIC_HEADER, rows)
    bundle = ResultBundle(experiment="fig12", config_hash=chash,
                          csv_paths={"ber": csv},
                          timings={"train_or_load": t_train,
                                   "evaluate": time.time() - t0 - t_train},
                          metadata={"modulation": "16qam-gray",
                                    "snr_definition": "rho/sigma^2 in dB with "
                                                      "unit noise variance",
                                    "bits_per_point": bits_per_channel * cfg.ber_channels,
                                    "dictionary": cfg.dictionary})
    bundle.write(out_dir)
    return bundle


def run_fig13(cfg: ExperimentConfig) -> ResultBundle:
    """Per-epoch training and held-out test accuracy curves."""
    t0 = time.time()
    out_dir = Path(cfg.out_dir) / "fig13"
    chash = config_hash(cfg)
    _, hist = get_or_train_model(cfg)
    rows = [("dnn_train", cfg.n_t, cfg.n_r, cfg.n_rf_t, cfg.n_s, e + 1, cfg.seed,
             float(v), "fraction", chash)
            for e, v in enumerate(hist["train_accuracy"])]
    rows += [("dnn_test", cfg.n_t, cfg.n_r, cfg.n_rf_t, cfg.n_s, e + 1, cfg.seed,
              float(v), "fraction", chash)
             for e, v in enumerate(hist["extra_accuracy"]["test"])]
    csv = write_csv(out_dir / "accuracy.csv", TRACE_HEADER, rows)
    bundle = ResultBundle(experiment="fig13", config_hash=chash,
                          csv_paths={"accuracy": csv},
                          timings={"total": time.time() - t0},
                          metadata={"tau": cfg.train.tau,
                                    "final_train": hist["train_accuracy"][-1],
                                    "final_test": hist["extra_accuracy"]["test"][-1]})
    bundle.write(out_dir)
    return bundle


def run_gen_channels(cfg: ExperimentConfig, count: int | None = None) -> ResultBundle:
    """Export a channel batch to the binary tensor format."""
    t0 = time.time()
    out_dir = Path(cfg.out_dir) / "channels"
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    n = count or cfg.trials
    channels = _eval_channels(cfg, STREAM_EXPORT, n)
    path = write_channels(out_dir / "channels.bin", stack_batch(channels),
                          seed=cfg.seed, config_hash=chash,
                          extra_meta={"n_cl": cfg.n_cl, "n_ray": cfg.n_ray})
    bundle = ResultBundle(experiment="gen-channels", config_hash=chash,
                          csv_paths={"channels": path},
                          timings={"total": time.time() - t0},
                          metadata={"count": n})
    bundle.write(out_dir)
    return bundle


_RUNNERS = {"fig6": run_fig6, "fig7": run_fig7, "fig8": run_fig8, "fig9": run_fig9,
            "beampattern": run_beampattern, "fig12": run_fig12, "fig13": run_fig13}

#: Execution order for the full suite.
ALL_ORDER = ("fig6", "fig7", "fig8", "fig9", "beampattern", "fig12", "fig13")


def run_experiment(cfg: ExperimentConfig, experiment: str | None = None):
    """Run one experiment (or the whole ordered suite for ``all``)."""
    exp = experiment or cfg.experiment
    if exp == "all":
        bundles = [_RUNNERS[name](cfg) for name in ALL_ORDER]
        combined = ResultBundle(experiment="all", config_hash=config_hash(cfg),
                                csv_paths={b.experiment: p for b in bundles
                                           for p in b.csv_paths.values()},
                                timings={b.experiment: sum(b.timings.values())
                                         for b in bundles},
                                metadata={"order": list(ALL_ORDER)})
        combined.write(Path(cfg.out_dir))
        return combined
    if exp not in _RUNNERS:
        raise ConfigError(f"unknown experiment {exp!r}")
    return _RUNNERS[exp](cfg)
