import csv
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdpbounds.cli import main
from mdpbounds.config import ConfigError, ExperimentConfig
from mdpbounds.experiment import LADDER_COLUMNS, StageError, duality_gap_experiment, ladder
from mdpbounds.probe import (constant_family, linear_family, loglog_slope, reference_means, standard_normal,
                             uniform_error_probe)
from mdpbounds.rng import stream

from oracles import brute_force_value


def test_default_config_roundtrip():
    cfg = ExperimentConfig()
    again = ExperimentConfig.from_yaml(cfg.to_yaml())
    assert again == cfg
    assert again.to_yaml() == cfg.to_yaml()


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["chain", "gaussian", "deterministic"]), st.integers(1, 5000), st.integers(1, 5000),
       st.one_of(st.just("max-slope"), st.floats(0.01, 50)), st.integers(0, 2**31))
def test_config_roundtrip_property(tb, N, M, lip, seed):
    text = ExperimentConfig.from_dict({"testbed": {"id": tb}, "primal": {"N": N}, "dual": {"M": M, "lipschitz": lip},
                                       "seeds": {"primal": seed}}).to_yaml()
    cfg = ExperimentConfig.from_yaml(text)
    assert ExperimentConfig.from_yaml(cfg.to_yaml()) == cfg


def test_validation_lists_every_offending_field():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"primal": {"N": 0, "K": 0}, "dual": {"M": -3, "lipschitz": "loose"},
                                    "testbed": {"id": "nope"}, "bounds": {"N_test": 0}})
    fields = {p.split(":")[0] for p in info.value.problems}
    assert fields == {"primal.N", "primal.K", "dual.M", "dual.lipschitz", "testbed.id", "bounds.N_test"}


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"primal": {"NN": 4}, "extra": {}})
    assert len(info.value.problems) == 2


def test_experiment_sandwich_on_chain():
    cfg = ExperimentConfig.from_dict({"primal": {"N": 512}, "dual": {"M": 512}, "bounds": {"N_test": 2048,
                                                                                          "lower_paths": 2048}})
    r = duality_gap_experiment(cfg)
    assert r.sandwich_ok()
    assert r.to_dict() == duality_gap_experiment(cfg).to_dict()


def test_stage_error_names_stage():
    cfg = ExperimentConfig.from_dict({"testbed": {"id": "chain"}, "primal": {"basis": "hermite"}})
    with pytest.raises(StageError) as info:
        duality_gap_experiment(cfg)
    assert info.value.stage == "setup"
    cfg = ExperimentConfig.from_dict({"testbed": {"id": "gaussian", "n_actions": 41},
                                      "primal": {"basis": "hermite", "K": 2, "N": 16},
                                      "dual": {"basis": "hermite", "M": 16, "grid_size": 3},
                                      "bounds": {"node_cap": 1000, "N_test": 4, "lower_paths": 4}})
    with pytest.raises(StageError) as info:
        duality_gap_experiment(cfg)
    assert info.value.stage == "upper"


def test_ladder_rows():
    cfg = ExperimentConfig.from_dict({"bounds": {"N_test": 256, "lower_paths": 256}})
    rows = ladder(cfg, [16, 32])
    assert [r["N"] for r in rows] == [16, 32]
    assert all(set(r) == set(LADDER_COLUMNS) for r in rows)


# --------------------------------------------------------------------------
# CLI


def _write(tmp_path, text):
    p = tmp_path / "cfg.yaml"
    p.write_text(text)
    return str(p)


def test_cli_oracle_two_state(tmp_path, capsys):
    cfg = _write(tmp_path, "testbed: {id: chain, n_states: 2, horizon: 3}\n")
    assert main(["oracle", "--config", cfg, "--out", str(tmp_path)]) == 0
    out = json.loads((tmp_path / "oracle.json").read_text())
    from mdpbounds.testbeds import chain_model

    ref, _ = brute_force_value(chain_model(3, 2), 0.0)
    assert out["value"] == pytest.approx(ref, abs=1e-12)
    assert out["schema_version"] == 1


def test_cli_bound_writes_report(tmp_path):
    cfg = _write(tmp_path, "primal: {N: 256}\ndual: {M: 256}\nbounds: {N_test: 1024, lower_paths: 1024}\n")
    assert main(["bound", "--config", cfg, "--out", str(tmp_path), "--seed-test", "11"]) == 0
    d = json.loads((tmp_path / "bound.json").read_text())
    assert d["seeds"]["test"] == 11
    assert d["lower"] - 4 * d["lower_se"] <= d["oracle"] <= d["upper"] + 4 * d["upper_se"]


def test_cli_primal_and_dual(tmp_path):
    cfg = _write(tmp_path, "testbed: {id: gaussian, n_actions: 3}\nprimal: {basis: hermite, K: 4, N: 128}\n"
                           "dual: {basis: hermite, K: 2, M: 64, grid_size: 5}\n")
    assert main(["primal", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert main(["dual", "--config", cfg, "--out", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "dual.json").read_text())
    assert d["audit"]["penalty_mean"] <= 1e-12
    assert len(json.loads((tmp_path / "primal.json").read_text())["diagnostics"]) == 3


def test_cli_ladder_csv(tmp_path):
    cfg = _write(tmp_path, "bounds: {N_test: 128, lower_paths: 128}\n")
    assert main(["ladder", "--config", cfg, "--out", str(tmp_path), "--start", "8", "--steps", "2"]) == 0
    with open(tmp_path / "ladder.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == LADDER_COLUMNS
    assert [int(r["N"]) for r in rows] == [8, 16]


def test_cli_uniform_error(tmp_path):
    assert main(["uniform-error", "--out", str(tmp_path), "--start", "32", "--steps", "3", "--reps", "2"]) == 0
    lines = (tmp_path / "uniform_error.csv").read_text().splitlines()
    assert lines[0] == "N,sup_error" and len(lines) == 4


def test_cli_bad_config_exits_nonzero(tmp_path, capsys):
    cfg = _write(tmp_path, "primal: {N: 0}\n")
    assert main(["bound", "--config", cfg, "--out", str(tmp_path)]) != 0
    assert "primal.N" in capsys.readouterr().err
    assert not (tmp_path / "bound.json").exists()


def test_cli_rejects_zero_threads(tmp_path, capsys):
    assert main(["oracle", "--threads", "0", "--out", str(tmp_path)]) != 0
    assert "--threads" in capsys.readouterr().err


# --------------------------------------------------------------------------
# uniform error probe


def test_constant_family_has_zero_error():
    rows = uniform_error_probe(constant_family(0.3), [0.0, 0.5, 1.0], [4, 64, 1024], seed=1, reps=3)
    assert all(r.sup_error == 0.0 for r in rows)


def test_single_parameter_is_plain_mean_error():
    rows = uniform_error_probe(linear_family, [1.0], [100, 1000], seed=2, true_means=[0.0])
    for r in rows:
        xi = standard_normal(stream(2, "probe", r.N, 0), r.N)
        assert r.sup_error == pytest.approx(abs(xi.mean()), rel=1e-12, abs=1e-15)


def test_reference_means_close_to_analytic():
    m = reference_means(lambda p, xi: np.cos(p[None, :] * xi[:, None]), np.array([0.5, 1.0]), n=10**6, seed=0)
    np.testing.assert_allclose(m, np.exp(-0.5 * np.array([0.25, 1.0])), atol=5e-3)


def test_probe_validation():
    with pytest.raises(ValueError):
        uniform_error_probe(linear_family, [], [10], 0)
    with pytest.raises(ValueError):
        uniform_error_probe(linear_family, [1.0], [0], 0)


def test_loglog_slope():
    assert loglog_slope([1, 10, 100], [1, 0.1, 0.01]) == pytest.approx(-1.0)


@pytest.mark.parametrize("name", ["chain.yaml", "gaussian.yaml"])
def test_shipped_configs_parse(name):
    cfg = ExperimentConfig.load(Path(__file__).parent.parent / "configs" / name)
    assert ExperimentConfig.from_yaml(cfg.to_yaml()) == cfg
