"""Config resolution, sweep expansion, and experiment output payloads."""

import json

import pytest

from gmtlsim.errors import ConfigError
from gmtlsim.experiment import (
    expand_runs,
    parse_config,
    run_experiment,
    write_outputs,
)
from gmtlsim.graphs import save_dataset
from gmtlsim.synthdata import synthetic_classification_dataset


def small_config(**kw):
    cfg = {
        "rounds": 2,
        "eta": 0.01,
        "model": {"hidden_dim": 8, "node_dim": 8, "pool_dim": 8, "dropout": 0.0},
        "partition": {"clients": 3, "alpha": 0.5, "seed": 0},
        "mtl": {"lambda1": 0.01},
    }
    cfg.update(kw)
    return cfg


@pytest.fixture(scope="module")
def tiny_dataset():
    return synthetic_classification_dataset(36, 3, 4, seed=12)


class TestParseConfig:
    def test_empty_config_gets_reference_defaults(self):
        spec = parse_config({}, {"dataset": "d.json"})
        assert spec.base.eta == 0.0015
        assert spec.base.model.dropout == 0.3
        assert spec.base.model.hidden_dim == 64
        assert spec.base.model.pool_dim == 64
        assert spec.base.tau == 1
        assert spec.base.local_epochs == 1
        assert spec.base.rounds == 150
        assert spec.base.mtl.lambda1 == 0.001
        assert spec.base.optimizer.name == "adam"
        assert spec.dataset_path == "d.json"

    def test_zero_tau_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"tau": 0})

    def test_unknown_key_lists_valid_ones(self):
        with pytest.raises(ConfigError) as err:
            parse_config({"roundz": 10})
        assert "roundz" in str(err.value)
        assert "rounds" in str(err.value)

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"model": {"hidden": 8}})

    def test_flags_override_file_values(self):
        spec = parse_config({"tau": 5, "algorithms": ["fedavg"]},
                            {"tau": 2, "algorithm": "isolated"})
        assert spec.base.tau == 2
        assert spec.algorithms == ["isolated"]

    def test_sweep_cross_product_count(self):
        spec = parse_config({"sweep": {"tau": [1, 5, 10], "seed": [1, 2, 3]}})
        assert len(expand_runs(spec)) == 9

    def test_sweep_cap_enforced(self):
        with pytest.raises(ConfigError) as err:
            parse_config({"sweep": {"seed": list(range(600))}})
        assert "cap" in str(err.value)

    def test_sweep_point_overrides_base(self):
        spec = parse_config(small_config(sweep={"tau": [1, 4],
                                                "topology": ["ring", "complete"],
                                                "n_neighbors": [2]}))
        plans = expand_runs(spec)
        assert len(plans) == 4
        assert plans[1].cfg.tau == 1 and plans[1].cfg.topology.kind == "complete"
        assert plans[2].cfg.tau == 4 and plans[2].cfg.topology.kind == "ring"
        assert all(p.cfg.topology.n_neighbors == 2 for p in plans)
        assert plans[0].label == "spreadgnn_tau-1_topology-ring_n_neighbors-2"


class TestRunExperiment:
    def test_single_run_payloads(self, tiny_dataset):
        manifest, samples = tiny_dataset
        spec = parse_config(small_config())
        result = run_experiment(spec, manifest, samples)
        assert len(result.runs) == 1
        run = result.runs[0]
        assert run.error is None
        header, first_row = run.csv_text.splitlines()[:2]
        assert header == "round,client,metric,loss,grad_norm_sq,consensus"
        assert first_row.startswith("1,0,")
        assert result.summary["runs"][0]["final_mean_metric"] is not None
        assert result.plot_tsv.startswith("round\tspreadgnn")

    def test_rerun_is_byte_identical(self, tiny_dataset):
        manifest, samples = tiny_dataset
        outs = []
        for _ in range(2):
            spec = parse_config(small_config(sweep={"seed": [1, 2]}))
            result = run_experiment(spec, manifest, samples)
            outs.append((result.runs[0].csv_text, result.runs[1].csv_text,
                         result.plot_tsv,
                         json.dumps(result.summary, sort_keys=True)))
        assert outs[0] == outs[1]

    def test_workers_do_not_change_results(self, tiny_dataset):
        manifest, samples = tiny_dataset
        texts = []
        for workers in (1, 3):
            spec = parse_config(small_config(sweep={"seed": [1, 2, 3]},
                                             workers=workers))
            result = run_experiment(spec, manifest, samples)
            texts.append([r.csv_text for r in result.runs])
        assert texts[0] == texts[1]

    def test_failed_run_is_reported_not_raised(self, tiny_dataset):
        manifest, samples = tiny_dataset
        spec = parse_config(small_config(eta=1e9))  # guaranteed divergence
        result = run_experiment(spec, manifest, samples)
        assert result.failed
        assert "DivergedError" in result.runs[0].error

    def test_bound_report_attached(self, tiny_dataset):
        manifest, samples = tiny_dataset
        spec = parse_config(small_config(bound_report=True))
        result = run_experiment(spec, manifest, samples)
        report = result.runs[0].summary["bound_report"]
        assert report["estimated_L"] > 0
        assert report["estimated_sigma_sq"] >= 0
        assert "bound" in report and "lr_condition_feasible" in report


class TestWriteOutputs:
    def test_files_written_and_reproducible(self, tiny_dataset, tmp_path):
        manifest, samples = tiny_dataset
        save_dataset(manifest, samples, tmp_path / "data.json")
        spec = parse_config(small_config())
        result = run_experiment(spec, manifest, samples)
        status, files = write_outputs(result, tmp_path / "out")
        assert status == 0
        names = sorted(f.split("/")[-1] for f in files)
        assert names == ["plot.tsv", "spreadgnn.metrics.csv", "summary.json"]
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["config"]["rounds"] == 2  # echo reproduces the run

    def test_partial_suffix_on_failure(self, tiny_dataset, tmp_path):
        manifest, samples = tiny_dataset
        spec = parse_config(small_config(eta=1e9))
        result = run_experiment(spec, manifest, samples)
        status, files = write_outputs(result, tmp_path / "out")
        assert status == 1
        assert any(f.endswith(".partial") for f in files)
