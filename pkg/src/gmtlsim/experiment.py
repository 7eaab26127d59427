"""Experiment driver: resolve a config into concrete runs, execute them,
and build the metrics CSV / summary JSON / plot TSV payloads.

The driver is file-agnostic: `run_experiment` returns in-memory payloads so
the HTTP service can ship them to a client, and `write_outputs` materializes
them on disk (the CLI does this).  Reruns of the same spec produce
byte-identical payloads; sweep points are independent simulations, so the
worker count never changes results.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .bounds import BoundInputs, compare_trace, convergence_bound, lr_condition
from .engine import ALGORITHMS, MetricsRecord, OptimizerConfig, SimConfig, Simulation, TopologySpec
from .errors import ConfigError, SimError
from .gnn import ModelConfig
from .graphs import DatasetManifest, GraphSample, load_dataset, load_dataset_payload
from .mtl import MtlConfig
from .partition import PartitionConfig

SWEEP_AXES = ("tau", "lambda1", "topology", "n_neighbors", "seed")

_TOP_KEYS = {
    "dataset", "out", "algorithm", "algorithms", "rounds", "local_epochs",
    "batch_size", "tau", "eta", "seed", "test_fraction", "optimizer", "model",
    "mtl", "topology", "partition", "standardize_regression", "init_jitter",
    "literal_avg", "bound_report", "sweep", "sweep_cap", "workers",
}
_OPT_KEYS = {"name", "beta1", "beta2", "eps"}
_MODEL_KEYS = {
    "variant", "layers", "hidden_dim", "node_dim", "pool_dim", "gat_heads",
    "leaky_slope", "dropout", "readout_final_relu",
}
_MTL_KEYS = {"lambda1", "lambda_chi", "omega_lr", "epsilon_psd", "literal_weights"}
_TOPOLOGY_KEYS = {"kind", "n_neighbors", "seed", "uniform_weights"}
_PARTITION_KEYS = {"alpha", "clients", "mask_mode", "custom_masks", "seed"}


@dataclass
class ExperimentSpec:
    dataset_path: str | None
    out_dir: str | None
    algorithms: list[str]
    base: SimConfig
    sweep: dict[str, list]
    sweep_cap: int = 512
    workers: int = 1
    bound_report: bool = False
    config_echo: dict = field(default_factory=dict)


@dataclass
class RunPlan:
    label: str
    algorithm: str
    point: dict
    cfg: SimConfig


@dataclass
class RunResult:
    label: str
    algorithm: str
    point: dict
    records: list[MetricsRecord] = field(default_factory=list)
    csv_text: str = ""
    summary: dict = field(default_factory=dict)
    error: str | None = None


@dataclass
class ExperimentResult:
    spec_echo: dict
    runs: list[RunResult]
    summary: dict
    plot_tsv: str

    @property
    def failed(self) -> bool:
        return any(r.error is not None for r in self.runs)


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(
            f"unknown {where} keys {unknown}; valid keys: {sorted(allowed)}"
        )


def parse_config(payload: dict, overrides: dict | None = None) -> ExperimentSpec:
    """Resolve a config dict plus flag overrides into a full ExperimentSpec.

    Flags win over file values.  Defaults follow the reference
    hyperparameters: eta 0.0015, dropout 0.3, hidden/node/pool dims 64,
    tau 1, one local epoch, 150 rounds, lambda1 0.001.
    """
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    merged = dict(payload)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("tau", "seed"):
            merged[key] = value
        elif key == "algorithm":
            merged["algorithms"] = [value]
        elif key in ("topology_kind", "n_neighbors", "topology_seed"):
            topo = dict(merged.get("topology", {}))
            topo[{"topology_kind": "kind", "n_neighbors": "n_neighbors",
                  "topology_seed": "seed"}[key]] = value
            merged["topology"] = topo
        elif key in ("dataset", "out", "workers"):
            merged[key] = value
        else:
            raise ConfigError(f"unknown override {key!r}")
    _check_keys(merged, _TOP_KEYS, "config")

    opt = dict(merged.get("optimizer", {}))
    _check_keys(opt, _OPT_KEYS, "optimizer")
    model = dict(merged.get("model", {}))
    _check_keys(model, _MODEL_KEYS, "model")
    mtl = dict(merged.get("mtl", {}))
    _check_keys(mtl, _MTL_KEYS, "mtl")
    topo = dict(merged.get("topology", {}))
    _check_keys(topo, _TOPOLOGY_KEYS, "topology")
    part = dict(merged.get("partition", {}))
    _check_keys(part, _PARTITION_KEYS, "partition")

    lambda_chi = {"theta": 0.0, "psi": 0.0, "phi_pool": 0.0, "phi_task": 0.0}
    lambda_chi.update(mtl.get("lambda_chi", {}))

    base = SimConfig(
        algorithm="spreadgnn",
        rounds=int(merged.get("rounds", 150)),
        local_epochs=int(merged.get("local_epochs", 1)),
        batch_size=int(merged.get("batch_size", 1)),
        tau=int(merged.get("tau", 1)),
        eta=float(merged.get("eta", 0.0015)),
        seed=int(merged.get("seed", 1)),
        test_fraction=float(merged.get("test_fraction", 0.2)),
        optimizer=OptimizerConfig(
            name=opt.get("name", "adam"),
            beta1=float(opt.get("beta1", 0.9)),
            beta2=float(opt.get("beta2", 0.999)),
            eps=float(opt.get("eps", 1e-8)),
        ),
        model=ModelConfig(
            variant=model.get("variant", "sage"),
            layers=int(model.get("layers", 2)),
            hidden_dim=int(model.get("hidden_dim", 64)),
            node_dim=int(model.get("node_dim", 64)),
            pool_dim=int(model.get("pool_dim", 64)),
            gat_heads=int(model.get("gat_heads", 2)),
            leaky_slope=float(model.get("leaky_slope", 0.2)),
            dropout=float(model.get("dropout", 0.3)),
            readout_final_relu=bool(model.get("readout_final_relu", False)),
        ),
        mtl=MtlConfig(
            lambda1=float(mtl.get("lambda1", 0.001)),
            lambda_chi=lambda_chi,
            omega_lr=float(mtl.get("omega_lr", 1.0)),
            epsilon_psd=float(mtl.get("epsilon_psd", 1e-6)),
            literal_weights=bool(mtl.get("literal_weights", False)),
        ),
        partition=PartitionConfig(
            alpha=float(part.get("alpha", 0.5)),
            clients=int(part.get("clients", 4)),
            mask_mode=part.get("mask_mode", "exclusive_exhaustive"),
            custom_masks=part.get("custom_masks"),
            seed=int(part.get("seed", 0)),
        ),
        topology=TopologySpec(
            kind=topo.get("kind", "complete"),
            n_neighbors=int(topo.get("n_neighbors", 2)),
            seed=int(topo.get("seed", 0)),
            uniform_weights=bool(topo.get("uniform_weights", False)),
        ),
        standardize_regression=bool(merged.get("standardize_regression", False)),
        init_jitter=float(merged.get("init_jitter", 0.0)),
        literal_avg=bool(merged.get("literal_avg", False)),
        bound_report=bool(merged.get("bound_report", False)),
    )
    base.validate()

    algorithms = merged.get("algorithms")
    if algorithms is None:
        algorithms = [merged.get("algorithm", "spreadgnn")]
    if isinstance(algorithms, str):
        algorithms = [algorithms]
    for algo in algorithms:
        if algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")

    sweep = dict(merged.get("sweep", {}))
    _check_keys(sweep, set(SWEEP_AXES), "sweep")
    sweep = {k: list(v) for k, v in sweep.items()}

    spec = ExperimentSpec(
        dataset_path=merged.get("dataset"),
        out_dir=merged.get("out"),
        algorithms=list(algorithms),
        base=base,
        sweep=sweep,
        sweep_cap=int(merged.get("sweep_cap", 512)),
        workers=int(merged.get("workers", 1)),
        bound_report=bool(merged.get("bound_report", False)),
    )
    total = len(spec.algorithms)
    for values in sweep.values():
        total *= max(len(values), 1)
    if total > spec.sweep_cap:
        raise ConfigError(f"sweep would schedule {total} runs, cap is {spec.sweep_cap}")
    spec.config_echo = _echo(spec)
    return spec


def _echo(spec: ExperimentSpec) -> dict:
    base = spec.base
    return {
        "dataset": spec.dataset_path,
        "algorithms": spec.algorithms,
        "rounds": base.rounds,
        "local_epochs": base.local_epochs,
        "batch_size": base.batch_size,
        "tau": base.tau,
        "eta": base.eta,
        "seed": base.seed,
        "test_fraction": base.test_fraction,
        "optimizer": vars(base.optimizer),
        "model": {k: getattr(base.model, k) for k in sorted(_MODEL_KEYS)},
        "mtl": {
            "lambda1": base.mtl.lambda1,
            "lambda_chi": dict(base.mtl.lambda_chi),
            "omega_lr": base.mtl.omega_lr,
            "epsilon_psd": base.mtl.epsilon_psd,
            "literal_weights": base.mtl.literal_weights,
        },
        "topology": vars(base.topology),
        "partition": {
            "alpha": base.partition.alpha,
            "clients": base.partition.clients,
            "mask_mode": base.partition.mask_mode,
            "custom_masks": base.partition.custom_masks,
            "seed": base.partition.seed,
        },
        "standardize_regression": base.standardize_regression,
        "init_jitter": base.init_jitter,
        "literal_avg": base.literal_avg,
        "bound_report": spec.bound_report,
        "sweep": spec.sweep,
        "sweep_cap": spec.sweep_cap,
        "workers": spec.workers,
    }


def expand_runs(spec: ExperimentSpec) -> list[RunPlan]:
    """Cross product of algorithms and sweep axes, in a fixed order."""
    axes = [(axis, spec.sweep[axis]) for axis in SWEEP_AXES if axis in spec.sweep]
    plans = []
    for algo in spec.algorithms:
        for combo in itertools.product(*(vals for _, vals in axes)) if axes else [()]:
            point = {axis: value for (axis, _), value in zip(axes, combo)}
            cfg = replace(spec.base, algorithm=algo)
            if "tau" in point:
                cfg = replace(cfg, tau=int(point["tau"]))
            if "lambda1" in point:
                cfg = replace(cfg, mtl=replace(cfg.mtl, lambda1=float(point["lambda1"])))
            if "topology" in point:
                cfg = replace(cfg, topology=replace(cfg.topology, kind=point["topology"]))
            if "n_neighbors" in point:
                cfg = replace(
                    cfg, topology=replace(cfg.topology, n_neighbors=int(point["n_neighbors"]))
                )
            if "seed" in point:
                cfg = replace(cfg, seed=int(point["seed"]))
            label_bits = [algo] + [f"{axis}-{point[axis]}" for axis, _ in axes]
            plans.append(
                RunPlan(label="_".join(str(b) for b in label_bits), algorithm=algo,
                        point=point, cfg=cfg)
            )
    return plans


def load_experiment_dataset(spec: ExperimentSpec, inline: dict | None = None):
    if inline is not None:
        return load_dataset_payload(inline)
    if not spec.dataset_path:
        raise ConfigError("no dataset given: set `dataset` in the config or pass one inline")
    return load_dataset(spec.dataset_path)


def records_to_csv(records: list[MetricsRecord]) -> str:
    lines = ["round,client,metric,loss,grad_norm_sq,consensus"]
    for rec in records:
        for c, (metric, loss) in enumerate(zip(rec.per_client_metric, rec.per_client_loss)):
            metric_txt = repr(metric) if metric is not None else "nan"
            lines.append(
                f"{rec.round},{c},{metric_txt},{loss!r},{rec.grad_norm_sq!r},{rec.consensus!r}"
            )
    return "\n".join(lines) + "\n"


def _execute_run(plan: RunPlan, manifest: DatasetManifest, samples: list[GraphSample],
                 want_bounds: bool) -> RunResult:
    result = RunResult(label=plan.label, algorithm=plan.algorithm, point=dict(plan.point))
    try:
        sim = Simulation(plan.cfg, manifest, samples)
        estimates = sim.bound_estimates() if want_bounds else None
        records = sim.run()
        result.records = records
        result.csv_text = records_to_csv(records)
        final = records[-1]
        summary = {
            "label": plan.label,
            "algorithm": plan.algorithm,
            "point": dict(plan.point),
            "rounds": plan.cfg.rounds,
            "zeta": sim.zeta,
            "final_mean_metric": final.mean_metric,
            "final_per_client_metric": final.per_client_metric,
            "final_mean_loss": sum(final.per_client_loss) / len(final.per_client_loss),
            "mean_grad_norm_sq": sum(r.grad_norm_sq for r in records) / len(records),
        }
        if want_bounds:
            zeta = sim.zeta
            if zeta is None:
                zeta = 1.0 if (plan.algorithm == "isolated" and len(sim.states) > 1) else 0.0
            inputs = BoundInputs(
                eta=plan.cfg.eta,
                L=estimates["L"],
                tau=plan.cfg.tau,
                zeta=zeta,
                sigma_sq=estimates["sigma_sq"],
                K=len(sim.states),
                T=plan.cfg.rounds,
                f_init=estimates["f_init"],
            )
            cond = lr_condition(inputs)
            trace = compare_trace(records, inputs)
            bound = convergence_bound(inputs)
            summary["bound_report"] = {
                "estimated_L": estimates["L"],
                "estimated_sigma_sq": estimates["sigma_sq"],
                "f_init": estimates["f_init"],
                "zeta": zeta,
                "lr_condition_lhs": cond.lhs,
                "lr_condition_feasible": cond.feasible,
                # None encodes an unbounded result (zeta == 1, no mixing)
                "bound": bound if math.isfinite(bound) else None,
                "mean_grad_norm_sq": trace.mean_grad_norm_sq,
                "exceeds_bound": trace.exceeds_bound,
                "note": "L and sigma_sq are heuristic estimates",
            }
        result.summary = summary
    except SimError as exc:
        result.error = f"{type(exc).__name__}: {exc}"
        result.csv_text = records_to_csv(result.records) if result.records else ""
        result.summary = {
            "label": plan.label,
            "algorithm": plan.algorithm,
            "point": dict(plan.point),
            "error": result.error,
        }
    return result


def run_experiment(spec: ExperimentSpec, manifest: DatasetManifest,
                   samples: list[GraphSample]) -> ExperimentResult:
    plans = expand_runs(spec)
    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            runs = list(
                pool.map(
                    lambda p: _execute_run(p, manifest, samples, spec.bound_report), plans
                )
            )
    else:
        runs = [_execute_run(p, manifest, samples, spec.bound_report) for p in plans]

    summary = {
        "config": spec.config_echo,
        "dataset": {
            "name": manifest.name,
            "task_type": manifest.task_type,
            "num_tasks": manifest.num_tasks,
            "num_samples": len(samples),
        },
        "runs": [r.summary for r in runs],
    }
    return ExperimentResult(
        spec_echo=spec.config_echo,
        runs=runs,
        summary=summary,
        plot_tsv=_plot_tsv(runs),
    )


def _plot_tsv(runs: list[RunResult]) -> str:
    """Round-by-round mean metric per run, for external plotting."""
    ok = [r for r in runs if r.records]
    if not ok:
        return "round\n"
    header = "round\t" + "\t".join(r.label for r in ok)
    n_rounds = max(len(r.records) for r in ok)
    lines = [header]
    for i in range(n_rounds):
        cells = [str(i + 1)]
        for r in ok:
            if i < len(r.records) and r.records[i].mean_metric is not None:
                cells.append(repr(r.records[i].mean_metric))
            else:
                cells.append("nan")
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def write_outputs(result: ExperimentResult, out_dir) -> tuple[int, list[str]]:
    """Materialize payloads; failed runs keep partial output with a
    `.partial` suffix.  Returns (exit_status, paths)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    status = 0
    for run in result.runs:
        name = f"{run.label}.metrics.csv"
        if run.error is not None:
            status = 1
            name += ".partial"
        path = out / name
        path.write_text(run.csv_text, encoding="utf-8")
        written.append(str(path))
    summary_path = out / ("summary.json" + (".partial" if status else ""))
    summary_path.write_text(
        json.dumps(result.summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    written.append(str(summary_path))
    plot_path = out / ("plot.tsv" + (".partial" if status else ""))
    plot_path.write_text(result.plot_tsv, encoding="utf-8")
    written.append(str(plot_path))
    return status, written
