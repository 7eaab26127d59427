"""The federated training engine.

One round = `local_epochs` epochs of minibatch training per client on the
client's own objective (masked loss + covariance-coupled head regularizer +
Frobenius penalties), followed every `tau` rounds by synchronization:

- spreadgnn: neighbor-only mixing of the shared parameter groups through the
  topology's mixing matrix, per-task-column averaging of the task heads among
  the clients that own each column, then a synchronous covariance exchange.
- fedgmtl: a virtual server averages everything over all clients and keeps a
  single global covariance, updated with the same recursion the exchange
  applies under a complete topology.
- fedavg: the virtual server without any covariance coupling (lambda1 = 0).
- isolated: no communication at all.

All randomness is drawn from counter-based streams keyed by
(seed, purpose, client, round, ...) so runs are bit-reproducible regardless
of scheduling; see rng.py for the exact construction.  Between
synchronization points clients are independent; synchronization itself is a
barrier with a fixed reduction order.  Adam moments stay local and are never
averaged.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .bounds import estimate_lipschitz, estimate_sigma_sq
from .errors import (
    ConfigError,
    DivergedError,
    EvaluationError,
    TrainingStepError,
    ValidationError,
)
from .gnn import (
    ModelConfig,
    classifier_forward,
    init_shared_params,
    init_task_column,
    param_groups,
    shared_param_spec,
)
from .graphs import ClientDataset, DatasetManifest, GraphSample, LabelStandardizer, train_test_split
from .metrics import mean_absolute_error, roc_auc
from .mtl import (
    MtlConfig,
    TaskCovariance,
    coupling_matrices,
    grad_task_head,
    initial_covariance,
    masked_loss,
    omega_closed_form,
    omega_decentralized_update,
)
from .partition import PartitionConfig, apply_mask, assign_task_masks, dirichlet_quantity_split
from .rng import Stream
from .topology import ConnectionMatrix, build_topology, mixing_matrix, spectral_gap

ALGORITHMS = ("spreadgnn", "fedgmtl", "fedavg", "isolated")
LOSS_DIVERGENCE_LIMIT = 1e6


@dataclass
class OptimizerConfig:
    name: str = "adam"  # adam | sgd
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self) -> None:
        if self.name not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.name!r}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ConfigError("optimizer moments/eps out of range")


@dataclass
class TopologySpec:
    kind: str = "complete"
    n_neighbors: int = 2
    seed: int = 0
    uniform_weights: bool = False


@dataclass
class SimConfig:
    algorithm: str = "spreadgnn"
    rounds: int = 150
    local_epochs: int = 1
    batch_size: int = 1
    tau: int = 1
    eta: float = 0.0015
    seed: int = 1
    test_fraction: float = 0.2
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    mtl: MtlConfig = field(default_factory=MtlConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    topology: TopologySpec = field(default_factory=TopologySpec)
    standardize_regression: bool = False
    init_jitter: float = 0.0  # per-client parameter perturbation, diagnostics only
    literal_avg: bool = False  # raw 1/N_j neighbor-averaging weights, not renormalized
    bound_report: bool = False

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if min(self.rounds, self.local_epochs, self.tau, self.batch_size) < 1:
            raise ConfigError("rounds, local_epochs, tau, batch_size must be >= 1")
        if self.eta < 0:
            raise ConfigError("eta must be non-negative")
        if self.eta == 0:
            warnings.warn("eta == 0: training disabled (averaging-only run)", RuntimeWarning)
        self.optimizer.validate()
        self.model.validate()
        self.mtl.validate()


@dataclass
class MetricsRecord:
    round: int
    per_client_metric: list[float | None]
    mean_metric: float | None
    per_client_loss: list[float]
    grad_norm_sq: float
    consensus: float


@dataclass
class ClientState:
    client_id: int
    dataset: ClientDataset
    shared: dict[str, np.ndarray]
    head: np.ndarray  # d_pool x |union|
    union: tuple[int, ...]  # sorted global task ids visible in the neighborhood
    omega: TaskCovariance | None
    neighborhood: list[int]  # members of M_k, ascending, includes self
    # Last covariances this client has SEEN per neighborhood member.  Between
    # exchanges only the client's own entry may move; neighbors' entries stay
    # at their last-communicated values.
    hood_omegas: dict[int, TaskCovariance] = field(default_factory=dict)
    couplings: list[tuple[np.ndarray, float]] = field(default_factory=list)
    moments: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    step_count: int = 0

    def parameter_items(self):
        yield from self.shared.items()
        yield "head/task", self.head


class Simulation:
    """One fully configured run over an in-memory dataset."""

    def __init__(self, cfg: SimConfig, manifest: DatasetManifest, samples: list[GraphSample]):
        cfg.validate()
        manifest.validate()
        self.cfg = cfg
        self.manifest = manifest
        self.num_tasks = manifest.num_tasks
        self.groups = param_groups(cfg.model, manifest.d_input)

        train, test = train_test_split(samples, cfg.test_fraction, cfg.partition.seed)
        self.standardizer = None
        if cfg.standardize_regression and manifest.task_type == "regression":
            self.standardizer = LabelStandardizer.fit(train, self.num_tasks)
            train = self.standardizer.transform(train)
        self.test_samples = test  # never masked: evaluation sees every task

        raw_clients = dirichlet_quantity_split(train, cfg.partition)
        masks = assign_task_masks(cfg.partition, self.num_tasks)
        self.clients_data = [apply_mask(c, m) for c, m in zip(raw_clients, masks)]

        self.conn = self._build_connectivity()
        self.mix = (
            mixing_matrix(self.conn, "uniform" if cfg.topology.uniform_weights else "metropolis")
            if self.conn is not None
            else None
        )
        self.zeta = spectral_gap(self.mix) if self.mix is not None else None

        self.uses_omega = cfg.algorithm != "fedavg"
        self.mtl_cfg = cfg.mtl if self.uses_omega else replace(cfg.mtl, lambda1=0.0)
        self.states = self._init_states()
        self.global_omega: TaskCovariance | None = None
        if cfg.algorithm == "fedgmtl" and self.uses_omega:
            self.global_omega = initial_covariance(self.states[0].union)
            for s in self.states:
                s.omega = self.global_omega
        self._sync_omega_snapshots()
        self.records: list[MetricsRecord] = []

    # -- construction ------------------------------------------------------

    def _build_connectivity(self) -> ConnectionMatrix | None:
        cfg = self.cfg
        k = cfg.partition.clients
        if cfg.algorithm == "isolated" or k == 1:
            return None
        if cfg.algorithm in ("fedgmtl", "fedavg"):
            return build_topology("complete", k)
        return build_topology(cfg.topology.kind, k, cfg.topology.n_neighbors, cfg.topology.seed)

    def _neighborhood(self, k: int) -> list[int]:
        if self.conn is None:
            return [k]
        return self.conn.neighborhood(k)

    def _init_states(self) -> list[ClientState]:
        cfg = self.cfg
        shared0 = init_shared_params(cfg.model, self.manifest.d_input, cfg.seed)
        states = []
        for data in self.clients_data:
            k = data.client_id
            hood = self._neighborhood(k)
            union = tuple(sorted(set().union(*(self.clients_data[j].task_set for j in hood))))
            if not union:
                raise ValidationError(f"client {k}: empty task union")
            shared = {name: arr.copy() for name, arr in shared0.items()}
            head = np.column_stack(
                [init_task_column(cfg.model, cfg.seed, t) for t in union]
            )
            if cfg.init_jitter > 0:
                jit = Stream(cfg.seed, "jitter", k)
                for name in shared:
                    noise = np.array(jit.normals(shared[name].size)).reshape(shared[name].shape)
                    shared[name] = shared[name] + cfg.init_jitter * noise
            omega = initial_covariance(union) if self.uses_omega else None
            states.append(
                ClientState(
                    client_id=k,
                    dataset=data,
                    shared=shared,
                    head=head,
                    union=union,
                    omega=omega,
                    neighborhood=hood,
                )
            )
        return states

    def _sync_omega_snapshots(self) -> None:
        """Make every client's view of its neighborhood current (init and
        exchange rounds only)."""
        if not self.uses_omega:
            for s in self.states:
                s.couplings = []
            return
        for s in self.states:
            s.hood_omegas = {j: self.states[j].omega for j in s.neighborhood}
            self._rebuild_couplings(s)

    def _rebuild_couplings(self, s: ClientState) -> None:
        hood = [
            (s.hood_omegas[j], self.states[j].dataset.n_samples) for j in s.neighborhood
        ]
        s.couplings = coupling_matrices(s.union, hood, self.mtl_cfg)

    # -- local training ----------------------------------------------------

    def _batch_objective(self, state: ClientState, batch, round_index, epoch, batch_index):
        """Build the batch's mean masked loss on a fresh tape; returns
        (tape, loss_var, param_vars)."""
        cfg = self.cfg
        tape = ad.Tape()
        params = {name: tape.param(name, value) for name, value in state.parameter_items()}
        union_ids = np.array(state.union, dtype=int)
        terms = []
        any_label = False
        for si, sample in batch:
            dstream = None
            if cfg.model.dropout > 0:
                dstream = Stream(
                    cfg.seed, "dropout", state.client_id, round_index, epoch, batch_index, si
                )
            pred = classifier_forward(tape, sample, params, cfg.model, dropout_stream=dstream)
            label = sample.label[union_ids]
            mask = sample.label_mask[union_ids]
            any_label = any_label or bool(mask.any())
            terms.append(masked_loss(pred, label, mask, self.manifest.task_type))
        if not any_label:
            raise TrainingStepError(
                f"client {state.client_id}: no unmasked task in the batch"
            )
        total = terms[0]
        for t in terms[1:]:
            total = ad.add(total, t)
        return tape, ad.scale(total, 1.0 / len(terms)), params

    def _apply_gradients(self, state: ClientState, grads: dict[str, np.ndarray]) -> None:
        cfg = self.cfg
        full = {}
        for name, value in state.parameter_items():
            g = grads[name]
            if name == "head/task":
                full[name] = grad_task_head(g, state.head, state.couplings, self.mtl_cfg)
            else:
                lam = self.mtl_cfg.lambda_chi.get(self.groups[name], 0.0)
                full[name] = g + lam * value if lam > 0 else g
        state.step_count += 1
        for name, value in state.parameter_items():
            g = full[name]
            if cfg.optimizer.name == "sgd":
                update = cfg.eta * g
            else:
                m, v = state.moments.get(name, (np.zeros_like(value), np.zeros_like(value)))
                b1, b2 = cfg.optimizer.beta1, cfg.optimizer.beta2
                m = b1 * m + (1 - b1) * g
                v = b2 * v + (1 - b2) * (g * g)
                state.moments[name] = (m, v)
                m_hat = m / (1 - b1 ** state.step_count)
                v_hat = v / (1 - b2 ** state.step_count)
                update = cfg.eta * m_hat / (np.sqrt(v_hat) + cfg.optimizer.eps)
            if name == "head/task":
                state.head = state.head - update
            else:
                state.shared[name] = state.shared[name] - update

    def local_round(self, state: ClientState, round_index: int) -> float:
        """Run local_epochs of minibatch training; returns the mean data loss."""
        cfg = self.cfg
        losses = []
        n = state.dataset.n_samples
        for epoch in range(cfg.local_epochs):
            order = Stream(
                cfg.seed, "batch_order", state.client_id, round_index, epoch
            ).permutation(n)
            for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
                idx = order[start : start + cfg.batch_size]
                batch = [(int(i), state.dataset.samples[i]) for i in idx]
                tape, loss, _ = self._batch_objective(
                    state, batch, round_index, epoch, batch_index
                )
                value = loss.item()
                if not np.isfinite(value) or value > LOSS_DIVERGENCE_LIMIT:
                    raise DivergedError(round_index, f"client {state.client_id} loss {value}")
                losses.append(value)
                if cfg.eta == 0:
                    continue
                grads = ad.backward(tape, loss)
                self._apply_gradients(state, grads)
        return float(np.mean(losses))

    # -- synchronization ---------------------------------------------------

    def periodic_average(self) -> None:
        """Mixing-weighted replacement of shared groups; task-head columns are
        averaged per global task among the clients owning that column, with
        weights renormalized over the owners.  Preserves the global mean of
        every shared group exactly (the mixing matrix is doubly stochastic)."""
        states = self.states
        k = len(states)
        if k == 1:
            return
        if self.cfg.algorithm in ("fedgmtl", "fedavg"):
            for name in states[0].shared:
                mean = sum(s.shared[name] for s in states) / k
                for s in states:
                    s.shared[name] = mean.copy()
            self._average_heads(np.full((k, k), 1.0 / k))
            return
        weights = self._averaging_weights()
        old = {name: np.stack([s.shared[name] for s in states]) for name in states[0].shared}
        for i, s in enumerate(states):
            for name, stack in old.items():
                s.shared[name] = np.tensordot(weights[i], stack, axes=1)
        self._average_heads(weights)

    def _averaging_weights(self) -> np.ndarray:
        k = len(self.states)
        if self.cfg.literal_avg:
            w = np.zeros((k, k))
            for i, s in enumerate(self.states):
                for j in s.neighborhood:
                    w[i, j] = 1.0 / self.states[j].dataset.n_samples
                w[i] /= len(s.neighborhood)
            return w
        return self.mix.weights

    def _average_heads(self, weights: np.ndarray) -> None:
        states = self.states
        old_heads = [s.head.copy() for s in states]
        col_of = [
            {t: c for c, t in enumerate(s.union)} for s in states
        ]
        owners: dict[int, list[int]] = {}
        for j, s in enumerate(states):
            for t in s.union:
                owners.setdefault(t, []).append(j)
        for i, s in enumerate(states):
            new = s.head.copy()
            for t, c in col_of[i].items():
                own = owners[t]
                w = np.array([weights[i, j] for j in own])
                total = w.sum()
                if total <= 0:
                    continue
                w = w / total
                new[:, c] = sum(
                    wj * old_heads[j][:, col_of[j][t]] for wj, j in zip(w, own)
                )
            s.head = new

    def omega_exchange(self) -> None:
        """Synchronous covariance exchange: every client updates from the
        same pre-exchange snapshot, so the result is independent of client
        iteration order."""
        if not self.uses_omega:
            return
        cfg = self.mtl_cfg
        if self.cfg.algorithm == "fedgmtl":
            pseudo = [
                (self.global_omega, self.states[j].dataset.n_samples)
                for j in range(1, len(self.states))
            ]
            self.global_omega = omega_decentralized_update(
                self.global_omega, pseudo, self.states[0].head, cfg, self.num_tasks
            )
            for s in self.states:
                s.omega = self.global_omega
        else:
            snapshot = [s.omega for s in self.states]
            updates = []
            for s in self.states:
                neighbors = [
                    (snapshot[j], self.states[j].dataset.n_samples)
                    for j in s.neighborhood
                    if j != s.client_id
                ]
                updates.append(
                    omega_decentralized_update(
                        snapshot[s.client_id], neighbors, s.head, cfg, self.num_tasks
                    )
                )
            for s, new in zip(self.states, updates):
                s.omega = new
        self._sync_omega_snapshots()

    def _local_omega_refresh(self) -> None:
        """Between exchanges each client recomputes its own covariance from
        its current head; neighbors only learn about it at the next
        exchange."""
        if not self.uses_omega:
            return
        if self.cfg.algorithm == "fedgmtl":
            return  # the single covariance lives at the server; it only moves at sync
        for s in self.states:
            s.omega = omega_closed_form(s.head, s.union)
        for s in self.states:
            s.hood_omegas[s.client_id] = s.omega
            self._rebuild_couplings(s)

    # -- diagnostics -------------------------------------------------------

    def consensus_distance(self) -> float:
        states = self.states
        total = 0.0
        for name in states[0].shared:
            stack = np.stack([s.shared[name] for s in states])
            mean = stack.mean(axis=0)
            total += float(np.sum((stack - mean) ** 2))
        return total

    def grad_norm_sq(self) -> float:
        """Squared gradient norm of the uniform-average objective at the
        averaged shared parameters (client heads stay their own)."""
        states = self.states
        k = len(states)
        mean_shared = {
            name: np.stack([s.shared[name] for s in states]).mean(axis=0)
            for name in states[0].shared
        }
        shared_acc = {name: np.zeros_like(v) for name, v in mean_shared.items()}
        head_sq = 0.0
        for s in states:
            tape = ad.Tape()
            params = {name: tape.param(name, value) for name, value in mean_shared.items()}
            params["head/task"] = tape.param("head/task", s.head)
            union_ids = np.array(s.union, dtype=int)
            terms = [
                masked_loss(
                    classifier_forward(tape, sample, params, self.cfg.model),
                    sample.label[union_ids],
                    sample.label_mask[union_ids],
                    self.manifest.task_type,
                )
                for sample in s.dataset.samples
            ]
            total = terms[0]
            for t in terms[1:]:
                total = ad.add(total, t)
            grads = ad.backward(tape, ad.scale(total, 1.0 / len(terms)))
            g_head = grad_task_head(grads["head/task"], s.head, s.couplings, self.mtl_cfg)
            head_sq += float(np.sum((g_head / k) ** 2))
            for name in shared_acc:
                lam = self.mtl_cfg.lambda_chi.get(self.groups[name], 0.0)
                g = grads[name] + (lam * mean_shared[name] if lam > 0 else 0.0)
                shared_acc[name] += g / k
        shared_sq = sum(float(np.sum(g**2)) for g in shared_acc.values())
        return shared_sq + head_sq

    # -- evaluation --------------------------------------------------------

    def evaluate(self) -> tuple[list[float | None], float | None]:
        """Per-client test metric over the client's union tasks.

        Classification averages per-task ROC-AUC over union tasks whose test
        labels contain both classes; tasks outside a client's union are
        reported as absent (skipped) rather than guessed.  Regression
        averages per-task MAE, destandardized when standardization is on.
        """
        per_client: list[float | None] = []
        test = self.test_samples
        any_evaluable = False
        for s in self.states:
            tape = ad.Tape()
            params = {name: tape.param(name, value) for name, value in s.parameter_items()}
            preds = np.vstack(
                [
                    classifier_forward(tape, sample, params, self.cfg.model).value[0]
                    for sample in test
                ]
            )
            union_ids = np.array(s.union, dtype=int)
            if self.manifest.task_type == "classification":
                scores = []
                for c, t in enumerate(s.union):
                    y = np.array([sample.label[t] for sample in test])
                    if len(np.unique(y)) < 2:
                        continue
                    scores.append(roc_auc(y, preds[:, c]))
                if scores:
                    any_evaluable = True
                    per_client.append(float(np.mean(scores)))
                else:
                    per_client.append(None)
            else:
                if self.standardizer is not None:
                    preds = self.standardizer.destandardize(preds, union_ids)
                errs = []
                for c, t in enumerate(s.union):
                    y = np.array([sample.label[t] for sample in test])
                    errs.append(mean_absolute_error(y, preds[:, c]))
                any_evaluable = True
                per_client.append(float(np.mean(errs)))
        if not any_evaluable:
            raise EvaluationError("no task with both classes present in the test split")
        usable = [m for m in per_client if m is not None]
        return per_client, float(np.mean(usable)) if usable else None

    # -- orchestration -----------------------------------------------------

    def run_round(self, round_index: int) -> MetricsRecord:
        cfg = self.cfg
        losses = [self.local_round(s, round_index) for s in self.states]
        if round_index % cfg.tau == 0 and len(self.states) > 1 and cfg.algorithm != "isolated":
            self.periodic_average()
            self.omega_exchange()
        else:
            self._local_omega_refresh()
        per_client, mean_metric = self.evaluate()
        record = MetricsRecord(
            round=round_index,
            per_client_metric=per_client,
            mean_metric=mean_metric,
            per_client_loss=losses,
            grad_norm_sq=self.grad_norm_sq(),
            consensus=self.consensus_distance(),
        )
        self.records.append(record)
        return record

    def run(self, on_round=None) -> list[MetricsRecord]:
        for t in range(1, self.cfg.rounds + 1):
            self.run_round(t)
            if on_round is not None:
                on_round(self, t)
        return self.records

    # -- bound-constant heuristics ------------------------------------------

    def bound_estimates(self, *, pairs: int = 4, max_samples: int = 32) -> dict[str, float]:
        """Heuristic Lipschitz and gradient-variance constants at the current
        parameters, for the convergence-bound report."""
        base = {name: v.copy() for name, v in self.states[0].shared.items()}
        base["head/task"] = self.states[0].head.copy()
        state = self.states[0]
        union_ids = np.array(state.union, dtype=int)
        samples = state.dataset.samples[:max_samples]

        def flat_grad(params_np):
            tape = ad.Tape()
            params = {name: tape.param(name, v) for name, v in params_np.items()}
            terms = [
                masked_loss(
                    classifier_forward(tape, sample, params, self.cfg.model),
                    sample.label[union_ids],
                    sample.label_mask[union_ids],
                    self.manifest.task_type,
                )
                for sample in samples
            ]
            total = terms[0]
            for t in terms[1:]:
                total = ad.add(total, t)
            grads = ad.backward(tape, ad.scale(total, 1.0 / len(terms)))
            return np.concatenate([grads[name].ravel() for name in sorted(params_np)])

        def flatten(params_np):
            return np.concatenate([params_np[name].ravel() for name in sorted(params_np)])

        rng = Stream(self.cfg.seed, "bound_probe")
        grad_pairs = [(flatten(base), flat_grad(base))]
        for _ in range(pairs):
            perturbed = {
                name: v + 0.05 * np.array(rng.normals(v.size)).reshape(v.shape)
                for name, v in base.items()
            }
            grad_pairs.append((flatten(perturbed), flat_grad(perturbed)))

        per_sample = []
        for sample in samples:
            tape = ad.Tape()
            params = {name: tape.param(name, v) for name, v in base.items()}
            loss = masked_loss(
                classifier_forward(tape, sample, params, self.cfg.model),
                sample.label[union_ids],
                sample.label_mask[union_ids],
                self.manifest.task_type,
            )
            grads = ad.backward(tape, loss)
            per_sample.append(np.concatenate([grads[name].ravel() for name in sorted(base)]))

        f_init = self.objective_value()
        return {
            "L": estimate_lipschitz(grad_pairs),
            "sigma_sq": estimate_sigma_sq(per_sample),
            "f_init": f_init,
        }

    def objective_value(self) -> float:
        """Uniform-average objective at the current parameters."""
        total = 0.0
        for s in self.states:
            tape = ad.Tape()
            params = {name: tape.param(name, v) for name, v in s.parameter_items()}
            union_ids = np.array(s.union, dtype=int)
            terms = [
                masked_loss(
                    classifier_forward(tape, sample, params, self.cfg.model),
                    sample.label[union_ids],
                    sample.label_mask[union_ids],
                    self.manifest.task_type,
                )
                for sample in s.dataset.samples
            ]
            acc = terms[0]
            for t in terms[1:]:
                acc = ad.add(acc, t)
            data_loss = acc.item() / len(terms)
            reg = 0.0
            if self.mtl_cfg.lambda1 > 0:
                for block, w in s.couplings:
                    prod = s.head @ block
                    reg += 0.5 * self.mtl_cfg.lambda1 * w * float(np.sum(prod * s.head))
            for name, value in s.parameter_items():
                lam = self.mtl_cfg.lambda_chi.get(self.groups[name], 0.0)
                if lam > 0:
                    reg += 0.5 * lam * float(np.sum(value * value))
            total += data_loss + reg
        return total / len(self.states)


def run(cfg: SimConfig, manifest: DatasetManifest, samples: list[GraphSample],
        on_round=None) -> list[MetricsRecord]:
    """Configure and execute one simulation; returns the per-round records."""
    return Simulation(cfg, manifest, samples).run(on_round=on_round)
