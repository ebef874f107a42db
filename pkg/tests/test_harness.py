"""Experiment harness: config handling, Monte Carlo runs, file outputs, CLI."""

import csv
import json
import math

import numpy as np
import pytest
import yaml

from graphadapt import cli
from graphadapt.harness import (
    ConfigError,
    LearningCurve,
    build_graph,
    build_setup,
    compare_sampling,
    config_hash,
    fit_rate,
    load_config,
    resolve_sampling,
    run_experiment,
    to_db,
    write_curve_csv,
    write_metadata,
)


def tiny_config():
    return {
        "seed": 3,
        "trials": 6,
        "horizon": 80,
        "graph": {"kind": "random_geometric", "n": 8, "radius": 0.8},
        "bandlimit": {"size": 3},
        "noise": {"kind": "uniform", "sigma_sq": 0.01},
        "sampling": {"kind": "full"},
        "algorithm": {"kind": "lms", "mu": 0.1},
    }


def dump(tmp_path, cfg, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


# ------------------------------------------------------------------ basics


def test_to_db():
    assert to_db(0.1) == pytest.approx(-10.0, abs=1e-12)
    assert to_db(1.0) == pytest.approx(0.0, abs=1e-12)


def test_config_hash_order_insensitive():
    a = {"x": 1, "y": {"b": 2, "a": 3}}
    b = {"y": {"a": 3, "b": 2}, "x": 1}
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 16
    assert all(c in "0123456789abcdef" for c in config_hash(a))
    assert config_hash({"x": 2, "y": {"b": 2, "a": 3}}) != config_hash(a)


def test_load_config_round_trip(tmp_path):
    cfg = tiny_config()
    loaded = load_config(dump(tmp_path, cfg))
    assert loaded == cfg


def test_load_config_rejects_bad_version(tmp_path):
    cfg = tiny_config()
    cfg["version"] = 2
    with pytest.raises(ConfigError, match="version"):
        load_config(dump(tmp_path, cfg))


def test_load_config_rejects_non_mapping(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(str(path))


# ------------------------------------------------------------------- setup


class TestBuildGraph:
    def test_random_geometric_deterministic(self):
        cfg = tiny_config()
        g1 = build_graph(cfg)
        g2 = build_graph(cfg)
        np.testing.assert_array_equal(g1.weights, g2.weights)

    def test_edge_list_round_trip(self, tmp_path, path3):
        from graphadapt.graphs import save_edge_list

        path = tmp_path / "graph.txt"
        save_edge_list(path3, str(path))
        cfg = {"graph": {"kind": "edge_list", "path": str(path)}}
        g = build_graph(cfg)
        np.testing.assert_array_equal(g.weights, path3.weights)

    def test_missing_section(self):
        with pytest.raises(ConfigError, match="graph"):
            build_graph({})

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="graph.kind"):
            build_graph({"graph": {"kind": "hypercube"}})

    def test_missing_field_named_in_error(self):
        with pytest.raises(ConfigError, match="graph.radius"):
            build_graph({"graph": {"kind": "random_geometric", "n": 8}})


class TestBuildSetup:
    def test_complete_setup(self):
        setup = build_setup(tiny_config())
        assert setup.graph.n == 8
        assert setup.bandlimit.size == 3
        assert setup.x_true.shape == (8,)
        np.testing.assert_allclose(
            setup.x_true, setup.bandlimit.basis_slice @ setup.signal_coeffs)
        assert setup.trials == 6 and setup.horizon == 80

    def test_signal_deterministic_per_seed(self):
        a = build_setup(tiny_config())
        b = build_setup(tiny_config())
        np.testing.assert_array_equal(a.signal_coeffs, b.signal_coeffs)
        other = tiny_config()
        other["seed"] = 4
        c = build_setup(other)
        assert not np.array_equal(a.signal_coeffs, c.signal_coeffs)

    def test_signal_scale(self):
        cfg = tiny_config()
        cfg["signal"] = {"scale": 2.0}
        scaled = build_setup(cfg)
        base = build_setup(tiny_config())
        np.testing.assert_allclose(scaled.signal_coeffs, 2.0 * base.signal_coeffs)

    def test_bandlimit_indices(self):
        cfg = tiny_config()
        cfg["bandlimit"] = {"indices": [0, 2, 5]}
        setup = build_setup(cfg)
        assert setup.bandlimit.freq_set == (0, 2, 5)

    def test_bandlimit_size_out_of_range(self):
        cfg = tiny_config()
        cfg["bandlimit"] = {"size": 9}
        with pytest.raises(ConfigError, match="bandlimit.size"):
            build_setup(cfg)

    def test_noise_values(self):
        cfg = tiny_config()
        cfg["noise"] = {"kind": "values", "values": [0.01] * 8}
        setup = build_setup(cfg)
        np.testing.assert_allclose(setup.noise.variances, np.full(8, 0.01))

    def test_noise_values_wrong_length(self):
        cfg = tiny_config()
        cfg["noise"] = {"kind": "values", "values": [0.01] * 5}
        with pytest.raises(ConfigError, match="noise.values"):
            build_setup(cfg)

    def test_noise_loguniform_in_range(self):
        cfg = tiny_config()
        cfg["noise"] = {"kind": "loguniform", "low": 0.004, "high": 0.02}
        setup = build_setup(cfg)
        assert (setup.noise.variances >= 0.004).all()
        assert (setup.noise.variances <= 0.02).all()
        # distinct per vertex, deterministic per seed
        assert len(set(setup.noise.variances)) == 8
        again = build_setup(cfg)
        np.testing.assert_array_equal(setup.noise.variances, again.noise.variances)

    def test_noise_loguniform_bad_range(self):
        cfg = tiny_config()
        cfg["noise"] = {"kind": "loguniform", "low": 0.02, "high": 0.004}
        with pytest.raises(ConfigError, match="noise.low"):
            build_setup(cfg)

    def test_trials_validation(self):
        cfg = tiny_config()
        cfg["trials"] = 0
        with pytest.raises(ConfigError, match="trials"):
            build_setup(cfg)


class TestResolveSampling:
    def test_full(self):
        setup = build_setup(tiny_config())
        probs, trace = resolve_sampling(setup)
        np.testing.assert_array_equal(probs.probs, np.ones(8))
        assert trace is None

    def test_explicit(self):
        cfg = tiny_config()
        cfg["sampling"] = {"kind": "explicit", "p": [0.5] * 8}
        probs, _ = resolve_sampling(build_setup(cfg))
        np.testing.assert_allclose(probs.probs, np.full(8, 0.5))

    def test_explicit_wrong_length(self):
        cfg = tiny_config()
        cfg["sampling"] = {"kind": "explicit", "p": [0.5] * 7}
        with pytest.raises(ConfigError, match="sampling.p"):
            resolve_sampling(build_setup(cfg))

    def test_design_returns_trace(self):
        cfg = tiny_config()
        cfg["sampling"] = {
            "kind": "design", "problem": "min_rate_convex",
            "mu": 0.1, "rate_target": 0.98, "msd_target_db": -20,
        }
        setup = build_setup(cfg)
        probs, trace = resolve_sampling(setup)
        assert trace is not None and trace.converged
        from graphadapt import weighted_gram

        lam = float(np.linalg.eigvalsh(weighted_gram(setup.bandlimit, probs.probs))[0])
        assert lam >= 0.1 - 1e-9

    def test_unknown_design_problem(self):
        cfg = tiny_config()
        cfg["sampling"] = {"kind": "design", "problem": "magic"}
        with pytest.raises(ConfigError, match="sampling.problem"):
            resolve_sampling(build_setup(cfg))

    def test_strategy_max_det(self):
        cfg = tiny_config()
        cfg["sampling"] = {"kind": "strategy", "strategy": "max_det", "m": 4}
        probs, _ = resolve_sampling(build_setup(cfg))
        assert set(np.unique(probs.probs)) <= {0.0, 1.0}
        assert int(probs.probs.sum()) == 4

    def test_strategy_uniform_deterministic(self):
        cfg = tiny_config()
        cfg["sampling"] = {"kind": "strategy", "strategy": "uniform", "m": 3}
        a, _ = resolve_sampling(build_setup(cfg))
        b, _ = resolve_sampling(build_setup(cfg))
        np.testing.assert_array_equal(a.probs, b.probs)
        assert int(a.probs.sum()) == 3

    def test_strategy_leverage(self):
        cfg = tiny_config()
        cfg["sampling"] = {"kind": "strategy", "strategy": "leverage", "m": 4}
        probs, _ = resolve_sampling(build_setup(cfg))
        assert (probs.probs > 0).any()
        assert probs.probs.max() <= 1.0

    def test_unknown_kind(self):
        cfg = tiny_config()
        cfg["sampling"] = {"kind": "psychic"}
        with pytest.raises(ConfigError, match="sampling.kind"):
            resolve_sampling(build_setup(cfg))


# ------------------------------------------------------------- experiments


class TestRunExperiment:
    def test_lms_curve_and_metadata(self):
        curve = run_experiment(tiny_config())
        assert curve.msd_linear.shape == (80,)
        meta = curve.metadata
        for key in ("config_hash", "algorithm", "seed", "trials", "horizon",
                    "sampling_rate", "theory_rate", "theory_msd_db",
                    "steady_state_db", "step_bound"):
            assert key in meta
        assert meta["algorithm"] == "lms"
        assert meta["sampling_rate"] == pytest.approx(8.0)
        # every trial starts from the zero estimate
        setup = build_setup(tiny_config())
        energy = float(setup.signal_coeffs @ setup.signal_coeffs)
        assert curve.msd_linear[0] == pytest.approx(energy, rel=1e-12)

    def test_lms_deterministic(self):
        a = run_experiment(tiny_config())
        b = run_experiment(tiny_config())
        np.testing.assert_array_equal(a.msd_linear, b.msd_linear)

    def test_lms_approaches_theory(self):
        cfg = tiny_config()
        cfg["trials"] = 60
        cfg["horizon"] = 600
        curve = run_experiment(cfg)
        theory = curve.metadata["theory_msd_linear"]
        assert curve.steady_state_linear() == pytest.approx(theory, rel=0.5)

    def test_rls_metadata(self):
        cfg = tiny_config()
        cfg["algorithm"] = {"kind": "rls", "beta": 0.9}
        curve = run_experiment(cfg)
        assert math.isnan(curve.metadata["theory_rate"])
        assert curve.per_node is None
        assert curve.msd_linear.shape == (80,)

    def test_drls_per_node(self):
        cfg = tiny_config()
        cfg["trials"] = 3
        cfg["horizon"] = 40
        cfg["algorithm"] = {"kind": "drls", "beta": 0.95, "rho": 20.0,
                            "inner_iters": 2, "comm": "complete"}
        curve = run_experiment(cfg)
        assert curve.per_node.shape == (40, 8)
        np.testing.assert_allclose(curve.per_node.mean(axis=1), curve.msd_linear,
                                   atol=1e-12)
        assert curve.metadata["inner_iters"] == 2

    def test_unknown_algorithm(self):
        cfg = tiny_config()
        cfg["algorithm"] = {"kind": "kalman"}
        with pytest.raises(ConfigError, match="algorithm.kind"):
            run_experiment(cfg)

    def test_design_metadata_recorded(self):
        cfg = tiny_config()
        cfg["sampling"] = {
            "kind": "design", "problem": "min_rate_convex",
            "mu": 0.1, "rate_target": 0.98, "msd_target_db": -20,
        }
        curve = run_experiment(cfg)
        assert curve.metadata["design_converged"] is True
        assert curve.metadata["design_iterations"] >= 1


class TestLearningCurve:
    def test_steady_state_window(self):
        y = np.concatenate([np.full(30, 5.0), np.full(10, 1.0)])
        curve = LearningCurve(msd_linear=y)
        # final quarter of 40 samples is exactly the tail of ones
        assert curve.steady_state_linear() == pytest.approx(1.0)
        assert curve.steady_state_db() == pytest.approx(0.0, abs=1e-12)

    def test_msd_db_clips_zeros(self):
        curve = LearningCurve(msd_linear=np.array([1.0, 0.0]))
        assert np.isfinite(curve.msd_db).all()


class TestFitRate:
    def test_exact_geometric(self):
        t = np.arange(300)
        y = 4.0 * 0.93 ** t
        assert fit_rate(y) == pytest.approx(0.93, abs=1e-6)

    def test_constant_curve(self):
        assert fit_rate(np.full(50, 2.5)) == pytest.approx(1.0, abs=1e-12)

    def test_geometric_plus_floor(self):
        # transient window stops at the 3 dB boundary, so a noise floor
        # far below the initial error barely perturbs the fit
        t = np.arange(600)
        y = 100.0 * 0.95 ** t + 1e-6
        assert fit_rate(y) == pytest.approx(0.95, abs=5e-3)

    def test_accepts_learning_curve(self):
        y = 2.0 * 0.9 ** np.arange(200)
        assert fit_rate(LearningCurve(msd_linear=y)) == pytest.approx(0.9, abs=1e-6)

    def test_rejects_short_input(self):
        with pytest.raises(ValueError):
            fit_rate(np.array([1.0]))


def test_compare_sampling_structure():
    cfg = tiny_config()
    cfg["compare"] = {"rate_targets": [0.99, 0.98], "msd_target_db": -17,
                      "mu": 0.1, "random_seeds": 20}
    rows = compare_sampling(cfg)
    assert len(rows) == 8  # 4 strategies x 2 targets
    strategies = {r["strategy"] for r in rows}
    assert strategies == {"designed", "max_det", "leverage", "uniform"}
    for row in rows:
        if row["strategy"] == "designed":
            assert row["sampling_rate_std"] == 0.0
    by_target = {}
    for row in rows:
        by_target.setdefault(row["rate_target"], {})[row["strategy"]] = row
    for target, per in by_target.items():
        designed = per["designed"]["sampling_rate"]
        assert designed <= per["uniform"]["sampling_rate"] + 1e-9
        assert designed <= per["max_det"]["sampling_rate"] + 1e-9
        assert designed <= per["leverage"]["sampling_rate"] + 1e-9


def test_compare_sampling_needs_section():
    with pytest.raises(ConfigError, match="compare"):
        compare_sampling(tiny_config())


# ------------------------------------------------------------ file outputs


def test_curve_csv_schema(tmp_path):
    curve = run_experiment(tiny_config())
    path = tmp_path / "curve.csv"
    write_curve_csv(curve, str(path))
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 80
    assert set(rows[0]) == {"iteration", "msd_linear", "msd_db",
                            "theory_msd_db", "theory_rate"}
    assert float(rows[0]["msd_linear"]) == pytest.approx(curve.msd_linear[0], rel=1e-10)
    assert rows[-1]["iteration"] == "79"


def test_metadata_json_round_trip(tmp_path):
    cfg = tiny_config()
    curve = run_experiment(cfg)
    path = tmp_path / "meta.json"
    write_metadata(curve, cfg, str(path))
    payload = json.loads(path.read_text())
    assert payload["config"]["seed"] == 3
    assert payload["metadata"]["algorithm"] == "lms"
    assert payload["metadata"]["config_hash"] == config_hash(cfg)


def test_outputs_are_reproducible(tmp_path):
    cfg = tiny_config()
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    write_curve_csv(run_experiment(cfg), str(first))
    write_curve_csv(run_experiment(cfg), str(second))
    assert first.read_bytes() == second.read_bytes()


# -------------------------------------------------------------------- CLI


class TestCli:
    def test_gen_graph(self, tmp_path, capsys):
        code = cli.main(["gen-graph", "--config", dump(tmp_path, tiny_config()),
                         "--out", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out" / "graph.txt").exists()
        assert "nodes" in capsys.readouterr().out

    def test_run_lms_outputs(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli.main(["run-lms", "--config", dump(tmp_path, tiny_config()),
                         "--out", str(out)])
        assert code == 0
        assert (out / "curve.csv").exists()
        assert (out / "meta.json").exists()
        assert "steady-state deviation" in capsys.readouterr().out

    def test_seed_and_trials_overrides(self, tmp_path, capsys):
        out = tmp_path / "out"
        cli.main(["run-lms", "--config", dump(tmp_path, tiny_config()),
                  "--out", str(out), "--seed", "9", "--trials", "2"])
        capsys.readouterr()
        payload = json.loads((out / "meta.json").read_text())
        assert payload["metadata"]["seed"] == 9
        assert payload["metadata"]["trials"] == 2

    def test_kind_mismatch_exits_2(self, tmp_path, capsys):
        code = cli.main(["run-rls", "--config", dump(tmp_path, tiny_config()),
                         "--out", str(tmp_path / "out")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path, capsys):
        code = cli.main(["run-lms", "--config", str(tmp_path / "absent.yaml"),
                         "--out", str(tmp_path)])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_theory_command(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli.main(["theory", "--config", dump(tmp_path, tiny_config()),
                         "--out", str(out)])
        assert code == 0
        with open(out / "theory.csv") as fh:
            rows = {r["quantity"]: float(r["value"]) for r in csv.DictReader(fh)}
        assert set(rows) == {"msd_linear", "msd_db", "convergence_rate", "step_bound"}
        # full sampling and white noise: (mu/2) |F| sigma^2
        assert rows["msd_linear"] == pytest.approx(0.05 * 3 * 0.01, rel=1e-9)

    def test_design_command(self, tmp_path, capsys):
        cfg = tiny_config()
        cfg["sampling"] = {
            "kind": "design", "problem": "min_rate_convex",
            "mu": 0.1, "rate_target": 0.98, "msd_target_db": -20,
        }
        out = tmp_path / "out"
        code = cli.main(["design", "--config", dump(tmp_path, cfg), "--out", str(out)])
        assert code == 0
        assert (out / "design_p.csv").exists()
        assert (out / "design_trace.csv").exists()
        assert "sampling rate" in capsys.readouterr().out

    def test_design_command_needs_design_sampling(self, tmp_path, capsys):
        code = cli.main(["design", "--config", dump(tmp_path, tiny_config()),
                         "--out", str(tmp_path / "out")])
        assert code == 2
        assert "design" in capsys.readouterr().err

    def test_infeasible_design_exits_2(self, tmp_path, capsys):
        cfg = tiny_config()
        cfg["sampling"] = {
            "kind": "design", "problem": "rls", "beta": 0.95,
            "msd_target_db": -80,
        }
        code = cli.main(["design", "--config", dump(tmp_path, cfg),
                         "--out", str(tmp_path / "out")])
        assert code == 2
        assert "error:" in capsys.readouterr().err
