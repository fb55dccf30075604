import json

import numpy as np
import pytest

from pdr.cli import main
from pdr.config import ConfigError, from_dict, load_config
from pdr.harness import (
    BenchmarkCell,
    benchmark_cell,
    load_benchmark_grid,
    run_benchmark,
    run_experiment,
    run_sweep,
    select_byzantine_clients,
)

MINIMAL = {
    "task": {"p": 30, "n_clients": 6, "hetero_kappa": 0.3, "seed": 1},
    "rounds": 8,
    "master_seed": 3,
}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


class TestConfig:
    def test_minimal_config_fills_defaults(self):
        cfg = from_dict(dict(MINIMAL))
        assert cfg.projection.epsilon == 0.5
        assert cfg.projection.delta == 0.01
        assert cfg.projection.sparsity == 8
        # k defaults to the union-bound dimension at T = rounds
        from pdr.projection import min_projection_dim
        assert cfg.projection.target_dim(6) == min_projection_dim(
            6, 0.5, 0.01, rounds=8)

    def test_k_override_skips_round_budget(self):
        raw = dict(MINIMAL)
        raw["projection"] = {"k_override": 64}
        cfg = from_dict(raw)
        assert cfg.projection.target_dim(6) == 64
        assert cfg.projection.rounds is None

    def test_byzantine_ratio_bound(self, tmp_path):
        raw = dict(MINIMAL)
        raw["byzantine_ratio"] = 0.6
        raw["attack"] = {"kind": "lie"}
        with pytest.raises(ConfigError) as err:
            from_dict(raw)
        assert "byzantine_ratio" in str(err.value)

    def test_epsilon_zero_rejected(self):
        raw = dict(MINIMAL)
        raw["projection"] = {"epsilon": 0.0}
        with pytest.raises(ConfigError) as err:
            from_dict(raw)
        assert "epsilon" in str(err.value)

    def test_unknown_fields_named(self):
        raw = dict(MINIMAL)
        raw["optimizer"] = "adam"
        with pytest.raises(ConfigError) as err:
            from_dict(raw)
        assert "optimizer" in str(err.value)

    def test_parse_error_has_location(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"task": }')
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert "line" in str(err.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")

    def test_attack_required_when_ratio_positive(self):
        raw = dict(MINIMAL)
        raw["byzantine_ratio"] = 0.2
        with pytest.raises(ConfigError):
            from_dict(raw)

    def test_fixed_projection_accepted_in_projection_section(self):
        raw = dict(MINIMAL)
        raw["projection"] = {"fixed_projection": True, "k_override": 8}
        assert from_dict(raw).fixed_projection is True


class TestByzantineSelection:
    def test_data_weighted_prefix(self):
        raw = dict(MINIMAL)
        raw["task"] = dict(raw["task"], sample_counts=[5, 1, 1, 1, 1, 1])
        raw["byzantine_ratio"] = 0.3
        raw["attack"] = {"kind": "foe"}
        cfg = from_dict(raw)
        byz = select_byzantine_clients(cfg, repeat_seed=0)
        counts = np.array([5, 1, 1, 1, 1, 1])
        assert counts[byz].sum() <= 0.3 * counts.sum()

    def test_zero_ratio_empty(self):
        cfg = from_dict(dict(MINIMAL))
        assert select_byzantine_clients(cfg, repeat_seed=0) == []

    def test_deterministic_given_seed(self):
        raw = dict(MINIMAL)
        raw["byzantine_ratio"] = 0.4
        raw["attack"] = {"kind": "gaussian"}
        cfg = from_dict(raw)
        assert (select_byzantine_clients(cfg, 7)
                == select_byzantine_clients(cfg, 7))


class TestRunExperiment:
    def test_record_count(self, tmp_path):
        raw = dict(MINIMAL)
        raw["repeats"] = 3
        raw["rounds"] = 10
        cfg = from_dict(raw)
        result = run_experiment(cfg, out_dir=tmp_path)
        lines = result.records_path.read_text().splitlines()
        assert len(lines) == 30

    def test_records_roundtrip_schema(self, tmp_path):
        cfg = from_dict(dict(MINIMAL))
        result = run_experiment(cfg, out_dir=tmp_path)
        required = {"repeat", "t", "wall_time_project", "wall_time_aggregate",
                    "wall_time_reconstruct", "dist_sq_to_optimum",
                    "grad_norm_sq", "weights", "byzantine_weight_mass"}
        for line in result.records_path.read_text().splitlines():
            record = json.loads(line)
            assert required == set(record)
            assert 0.0 <= record["byzantine_weight_mass"] <= 1.0

    def test_byte_identical_modulo_timing(self, tmp_path):
        raw = dict(MINIMAL)
        raw["task"] = dict(raw["task"], noise_sigma=0.2)
        raw["byzantine_ratio"] = 0.2
        raw["attack"] = {"kind": "lie"}
        raw["aggregator"] = {"kind": "geometric_median"}
        cfg = from_dict(raw)

        def strip(path):
            out = []
            for line in path.read_text().splitlines():
                rec = json.loads(line)
                for field in ("wall_time_project", "wall_time_aggregate",
                              "wall_time_reconstruct"):
                    rec.pop(field)
                out.append(json.dumps(rec, sort_keys=True))
            return out

        a = run_experiment(cfg, out_dir=tmp_path / "a")
        b = run_experiment(cfg, out_dir=tmp_path / "b")
        assert strip(a.records_path) == strip(b.records_path)

    def test_honest_decaying_run_contracts_strongly(self, tmp_path):
        # exact-mean aggregation, sigma = 0: the decaying schedule contracts
        # dist_sq by (6 / ((T+2)(T+3)))^2 ~ 2e-8 at T = 200
        raw = dict(MINIMAL)
        raw["rounds"] = 200
        raw["task"] = dict(raw["task"], p=10, hetero_kappa=0.2)
        raw["aggregator"] = {"kind": "mean"}
        raw["projection"] = {"k_override": 32}
        cfg = from_dict(raw)
        result = run_experiment(cfg, out_dir=tmp_path)
        rec0 = json.loads(result.records_path.read_text().splitlines()[0])
        # recover the initial distance from the first record's contraction
        eta0 = 2.0 / 4.0
        initial = rec0["dist_sq_to_optimum"] / (1 - eta0) ** 2
        final = result.summary["aggregate"]["final_dist_sq_mean"]
        assert final <= 1e-6 * initial

    def test_aborts_recorded_and_remaining_repeats_run(self, tmp_path):
        raw = dict(MINIMAL)
        raw["task"] = dict(raw["task"], n_clients=8, hetero_kappa=0.5)
        raw["byzantine_ratio"] = 0.3
        raw["attack"] = {"kind": "sign_flip"}
        raw["aggregator"] = {"kind": "mean"}
        raw["schedule"] = "constant_nonconvex"
        raw["rounds"] = 100
        raw["repeats"] = 2
        cfg = from_dict(raw)
        result = run_experiment(cfg, out_dir=tmp_path)
        assert result.any_aborted
        assert len(result.summary["repeats"]) == 2
        assert result.summary["aggregate"]["aborted_repeats"] >= 1
        for rep in result.summary["repeats"]:
            if rep["aborted"]:
                assert rep["abort_round"] is not None


class TestBenchmark:
    def test_cell_report_fields(self):
        cell = BenchmarkCell(p=1500, n_clients=6, k=128, sparsity=8,
                             aggregator="krum")
        report = benchmark_cell(cell, repeats=5, seed=1)
        assert report["speedup"] is None or report["speedup"] > 0
        assert len(report["full_times"]) == 5
        assert report["matrix_build_s"] > 0
        assert isinstance(report["unstable"], bool)

    def test_grid_loading_and_slope_fit(self, tmp_path):
        grid = [
            {"p": 1000, "M": 6, "k": 64, "s": 8, "aggregator": "krum"},
            {"p": 4000, "M": 6, "k": 64, "s": 8, "aggregator": "krum"},
        ]
        path = write_json(tmp_path / "grid.json", grid)
        cells = load_benchmark_grid(path)
        assert len(cells) == 2
        report = run_benchmark(cells, repeats=5, seed=0, out_dir=tmp_path)
        assert (tmp_path / "benchmark.json").exists()
        variants = {f["variant"] for f in report["slope_fits"]}
        assert variants == {"full", "projected"}

    def test_bad_grid_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_benchmark_grid(write_json(tmp_path / "g.json", []))
        with pytest.raises(ConfigError):
            load_benchmark_grid(write_json(tmp_path / "g2.json",
                                           [{"p": 100}]))

    def test_repeats_floor(self):
        cell = BenchmarkCell(p=100, n_clients=5, k=16, sparsity=8,
                             aggregator="mean")
        with pytest.raises(ConfigError):
            benchmark_cell(cell, repeats=3)

    @pytest.mark.slow
    def test_full_dim_krum_scales_linearly_in_p(self, tmp_path):
        # pairwise-distance work is M^2 p: the log-log slope over three
        # decades of p should sit near 1
        grid = [{"p": p, "M": 20, "k": 64, "s": 8, "aggregator": "krum"}
                for p in (10_000, 100_000, 1_000_000)]
        cells = load_benchmark_grid(write_json(tmp_path / "g.json", grid))
        report = run_benchmark(cells, repeats=5, seed=3, out_dir=tmp_path)
        slope = [f["log_log_slope"] for f in report["slope_fits"]
                 if f["variant"] == "full"]
        assert len(slope) == 1
        assert 0.8 <= slope[0] <= 1.2


class TestSweep:
    def test_axis_rows(self, tmp_path):
        cfg = from_dict(dict(MINIMAL))
        path = run_sweep(cfg, "k", [16, 32, 64], out_dir=tmp_path)
        rows = path.read_text().splitlines()
        assert len(rows) == 4  # header + 3 values
        assert rows[1].startswith("k,16")

    def test_b_axis(self, tmp_path):
        raw = dict(MINIMAL)
        raw["attack"] = {"kind": "foe"}
        raw["byzantine_ratio"] = 0.1
        cfg = from_dict(raw)
        path = run_sweep(cfg, "b", [0.1, 0.3], out_dir=tmp_path)
        assert len(path.read_text().splitlines()) == 3

    def test_s_axis(self, tmp_path):
        raw = dict(MINIMAL)
        raw["projection"] = {"k_override": 32}
        cfg = from_dict(raw)
        path = run_sweep(cfg, "s", [8, 16, 32], out_dir=tmp_path)
        assert len(path.read_text().splitlines()) == 4

    def test_attack_and_aggregator_axes(self, tmp_path):
        raw = dict(MINIMAL)
        raw["byzantine_ratio"] = 0.2
        raw["attack"] = {"kind": "gaussian"}
        raw["aggregator"] = {"kind": "krum", "assumed_byzantine": 1}
        raw["projection"] = {"k_override": 24}
        cfg = from_dict(raw)
        path = run_sweep(cfg, "attack", ["gaussian", "sign_flip", "foe"],
                         out_dir=tmp_path / "atk")
        assert len(path.read_text().splitlines()) == 4
        path = run_sweep(cfg, "aggregator",
                         ["krum", "geometric_median"], out_dir=tmp_path / "agg")
        assert len(path.read_text().splitlines()) == 3

    def test_unknown_axis(self, tmp_path):
        cfg = from_dict(dict(MINIMAL))
        with pytest.raises(ConfigError):
            run_sweep(cfg, "learning_rate", [1], out_dir=tmp_path)


class TestCli:
    def test_run_roundtrip(self, tmp_path, capsys):
        cfg_path = write_json(tmp_path / "cfg.json", MINIMAL)
        code = main(["run", "--config", cfg_path, "--out", str(tmp_path / "o")])
        assert code == 0
        assert (tmp_path / "o" / "records.jsonl").exists()
        assert (tmp_path / "o" / "summary.json").exists()

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = dict(MINIMAL)
        bad["byzantine_ratio"] = 0.7
        bad["attack"] = {"kind": "lie"}
        cfg_path = write_json(tmp_path / "bad.json", bad)
        assert main(["run", "--config", cfg_path]) == 1

    def test_nonconvergence_exit_code(self, tmp_path, capsys):
        raw = dict(MINIMAL)
        raw["task"] = dict(raw["task"], n_clients=8, hetero_kappa=0.5)
        raw["byzantine_ratio"] = 0.3
        raw["attack"] = {"kind": "sign_flip"}
        raw["aggregator"] = {"kind": "mean"}
        raw["schedule"] = "constant_nonconvex"
        raw["rounds"] = 100
        cfg_path = write_json(tmp_path / "div.json", raw)
        assert main(["run", "--config", cfg_path,
                     "--out", str(tmp_path / "d")]) == 2

    def test_seed_precedence_env_then_flag(self, tmp_path, capsys, monkeypatch):
        cfg_path = write_json(tmp_path / "cfg.json", MINIMAL)

        def final_dist(out):
            summary = json.loads((tmp_path / out / "summary.json").read_text())
            return summary["aggregate"]["final_dist_sq_mean"], summary

        main(["run", "--config", cfg_path, "--out", str(tmp_path / "base")])
        monkeypatch.setenv("PDR_SEED", "777")
        main(["run", "--config", cfg_path, "--out", str(tmp_path / "env")])
        _, env_summary = final_dist("env")
        assert env_summary["config"]["master_seed"] == 777
        main(["run", "--config", cfg_path, "--seed", "888",
              "--out", str(tmp_path / "flag")])
        _, flag_summary = final_dist("flag")
        assert flag_summary["config"]["master_seed"] == 888

    def test_sweep_command(self, tmp_path, capsys):
        cfg_path = write_json(tmp_path / "cfg.json", MINIMAL)
        code = main(["sweep", "--config", cfg_path, "--axis", "k",
                     "--values", "16,32", "--out", str(tmp_path / "sw")])
        assert code == 0
        assert (tmp_path / "sw" / "sweep_k.csv").exists()

    def test_bench_command(self, tmp_path, capsys):
        grid = [{"p": 500, "M": 5, "k": 32, "s": 8, "aggregator": "mean"}]
        grid_path = write_json(tmp_path / "grid.json", grid)
        code = main(["bench", "--grid", grid_path, "--repeats", "5",
                     "--out", str(tmp_path / "b")])
        assert code == 0
        assert (tmp_path / "b" / "benchmark.json").exists()


def test_cli_io_error_exit_code(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    cfg_path = write_json(tmp_path / "cfg.json", MINIMAL)
    code = main(["run", "--config", str(cfg_path),
                 "--out", str(blocker / "sub")])
    assert code == 3
