import dataclasses
import json

import numpy as np
import pytest

from hybridbf.config import BeamBlock, ExperimentConfig, TrainBlock, config_hash
from hybridbf.experiments import (get_or_train_model, run_beampattern, run_experiment,
                                  run_fig6, run_fig7, run_fig8, run_fig9, run_fig12,
                                  run_fig13, run_gen_channels, write_csv)
from hybridbf.tensorio import read_channels


def small_config(out_dir, **overrides) -> ExperimentConfig:
    base = dict(
        n_t=16, n_r=4, n_rf_t=2, n_rf_r=2, n_s=1, n_cl=2, n_ray=2,
        snr_grid_db=(0.0, 10.0), n_t_grid=(8, 16), trials=3,
        ber_snr_grid_db=(10.0, 30.0), ber_n_rf=2, ber_bits_per_point=40_000,
        ber_channels=2, seed=99, out_dir=str(out_dir),
        train=TrainBlock(n_samples=40, epochs=2, batch_size=20),
        beam=BeamBlock(grid_az=37, grid_el=19))
    base.update(overrides)
    return ExperimentConfig(**base)


def read_rows(path):
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    return header, [dict(zip(header, line.split(","))) for line in lines[1:]]


class TestModelCache:
    def test_train_then_load_identical(self, tmp_path):
        cfg = small_config(tmp_path)
        model1, hist1 = get_or_train_model(cfg)
        model2, hist2 = get_or_train_model(cfg)
        for w1, w2 in zip(model1.weights, model2.weights):
            if w1 is not None:
                assert np.array_equal(w1, w2)
        assert hist1["train_loss"] == hist2["train_loss"]
        assert "test" in hist1["extra_accuracy"]

    def test_cache_keyed_by_training_fields(self, tmp_path):
        cfg = small_config(tmp_path)
        get_or_train_model(cfg)
        changed = dataclasses.replace(cfg, n_cl=1)
        model_dirs = list((tmp_path / "models").iterdir())
        get_or_train_model(changed)
        assert len(list((tmp_path / "models").iterdir())) == len(model_dirs) + 1


class TestFig6:
    def test_rows_and_ordering_columns(self, tmp_path):
        cfg = small_config(tmp_path)
        bundle = run_fig6(cfg)
        header, rows = read_rows(bundle.csv_paths["spectral_efficiency"])
        assert header == ["scheme", "n_t", "n_r", "n_rf", "n_s", "snr_db", "seed",
                          "value", "units", "config_hash"]
        assert len(rows) == 3 * 2  # three schemes, two SNR points
        schemes = {r["scheme"] for r in rows}
        assert schemes == {"optimal", "omp", "dnn"}
        for r in rows:
            assert r["config_hash"] == config_hash(cfg)
            assert r["units"] == "bits/s/Hz"
            assert float(r["value"]) > 0

    def test_byte_identical_rerun(self, tmp_path):
        cfg = small_config(tmp_path)
        first = run_fig6(cfg).csv_paths["spectral_efficiency"].read_bytes()
        second = run_fig6(cfg).csv_paths["spectral_efficiency"].read_bytes()
        assert first == second

    def test_optimal_dominates(self, tmp_path):
        cfg = small_config(tmp_path)
        _, rows = read_rows(run_fig6(cfg).csv_paths["spectral_efficiency"])
        by = {(r["scheme"], r["snr_db"]): float(r["value"]) for r in rows}
        for snr in ("0.0", "10.0"):
            assert by[("optimal", snr)] >= by[("omp", snr)] - 1e-9
            assert by[("optimal", snr)] >= by[("dnn", snr)] - 1e-9


class TestFig7:
    def test_grid_and_schemes(self, tmp_path):
        cfg = small_config(tmp_path)
        bundle = run_fig7(cfg)
        _, rows = read_rows(bundle.csv_paths["spectral_efficiency_vs_nt"])
        assert {r["scheme"] for r in rows} == {"zf", "omp", "dnn"}
        assert {r["n_t"] for r in rows} == {"8", "16"}
        assert len(rows) == 6


class TestFig8:
    def test_counts_and_ratio_band(self, tmp_path):
        cfg = small_config(tmp_path)
        bundle = run_fig8(cfg)
        _, rows = read_rows(bundle.csv_paths["complexity"])
        assert {r["scheme"] for r in rows} == {"omp", "dnn"}
        omp256 = next(float(r["value"]) for r in rows
                      if r["scheme"] == "omp" and r["n_t"] == "256")
        dnn256 = next(float(r["value"]) for r in rows
                      if r["scheme"] == "dnn" and r["n_t"] == "256")
        assert omp256 / dnn256 >= 4.0
        for scheme in ("omp", "dnn"):
            counts = [float(r["value"]) for r in rows if r["scheme"] == scheme]
            assert counts == sorted(counts)


class TestFig9:
    def test_traces(self, tmp_path):
        cfg = small_config(tmp_path)
        bundle = run_fig9(cfg)
        _, rows = read_rows(bundle.csv_paths["mse_trace"])
        dnn = [r for r in rows if r["scheme"] == "dnn"]
        omp = [r for r in rows if r["scheme"] == "omp"]
        assert len(dnn) == cfg.train.epochs
        assert len(omp) == cfg.n_rf_t
        omp_values = [float(r["value"]) for r in omp]
        assert all(b <= a + 1e-12 for a, b in zip(omp_values, omp_values[1:]))


class TestBeampattern:
    def test_grids_and_peak_metadata(self, tmp_path):
        cfg = small_config(tmp_path)
        bundle = run_beampattern(cfg)
        for name in ("optimal", "hybrid"):
            header, rows = read_rows(bundle.csv_paths[name])
            assert header == ["scheme", "n_t", "n_r", "n_rf", "n_s", "az_deg",
                              "el_deg", "seed", "value", "units", "config_hash"]
            assert len(rows) == 37 * 19
            peak = max(float(r["value"]) for r in rows)
            assert peak == 0.0
        assert "peaks" in bundle.metadata


class TestFig12:
    def test_ber_rows(self, tmp_path):
        cfg = small_config(tmp_path)
        bundle = run_fig12(cfg)
        _, rows = read_rows(bundle.csv_paths["ber"])
        assert {r["scheme"] for r in rows} == {"zf", "omp", "dnn"}
        for r in rows:
            assert 0.0 <= float(r["value"]) <= 1.0
        # high-SNR point is at least as good as the low-SNR point per scheme
        for scheme in ("zf", "omp", "dnn"):
            vals = {r["snr_db"]: float(r["value"]) for r in rows if r["scheme"] == scheme}
            assert vals["30.0"] <= vals["10.0"] + 1e-12


class TestFig13:
    def test_accuracy_curves(self, tmp_path):
        cfg = small_config(tmp_path)
        bundle = run_fig13(cfg)
        _, rows = read_rows(bundle.csv_paths["accuracy"])
        train_rows = [r for r in rows if r["scheme"] == "dnn_train"]
        test_rows = [r for r in rows if r["scheme"] == "dnn_test"]
        assert len(train_rows) == len(test_rows) == cfg.train.epochs
        for r in rows:
            assert 0.0 <= float(r["value"]) <= 1.0


class TestGenChannels:
    def test_export_round_trip(self, tmp_path):
        cfg = small_config(tmp_path)
        bundle = run_gen_channels(cfg, count=5)
        batch = read_channels(bundle.csv_paths["channels"])
        assert batch.shape == (5, 4, 16)
        for h in batch:
            assert np.linalg.norm(h) ** 2 == pytest.approx(64.0, abs=1e-9)


class TestRunAll:
    def test_all_order_and_bundle(self, tmp_path):
        cfg = small_config(tmp_path)
        bundle = run_experiment(cfg, "all")
        assert bundle.experiment == "all"
        payload = json.loads((tmp_path / "bundle.json").read_text())
        assert payload["metadata"]["order"] == ["fig6", "fig7", "fig8", "fig9",
                                                "beampattern", "fig12", "fig13"]
        assert set(payload["timings_s"]) == set(payload["metadata"]["order"])


class TestWriteCsv:
    def test_float_formatting_stable(self, tmp_path):
        path = tmp_path / "x.csv"
        write_csv(path, ("a", "b"), [(0.1 + 0.2, None)])
        assert path.read_text() == "a,b\n0.30000000000000004,\n"
