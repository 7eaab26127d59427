"""Graph samples, datasets, the graph JSON file format, and splitting.

File format (UTF-8, floats as decimal literals):

    {"manifest": {"name", "task_type", "num_tasks", "d_input", "d_edge",
                  "metric"},
     "samples": [{"nodes": [[f, ...], ...], "edges": [[s, d], ...],
                  "edge_feats": [[f, ...], ...], "label": [f, ...],
                  "mask": [bool, ...]}, ...]}

Undirected edges are stored once and expanded to both directions at model
time.  Loaded datasets are immutable by convention; nothing in this module
mutates a sample after construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError
from .rng import Stream

TASK_TYPES = ("classification", "regression")
METRICS = ("roc_auc", "mae")


@dataclass
class DatasetManifest:
    name: str
    task_type: str
    num_tasks: int
    d_input: int
    d_edge: int
    metric: str
    num_samples: int = 0

    def validate(self) -> None:
        if self.task_type not in TASK_TYPES:
            raise ValidationError(f"unknown task_type {self.task_type!r}")
        if self.metric not in METRICS:
            raise ValidationError(f"unknown metric {self.metric!r}")
        expected = "roc_auc" if self.task_type == "classification" else "mae"
        if self.metric != expected:
            raise ValidationError(
                f"metric {self.metric!r} inconsistent with task_type {self.task_type!r}"
            )
        if self.num_tasks < 1 or self.d_input < 1 or self.d_edge < 0:
            raise ValidationError("manifest dimensions out of range")


@dataclass
class GraphSample:
    """One graph: node features, undirected edges, labels with a mask."""

    node_features: np.ndarray  # |V| x d_input
    edges: list[tuple[int, int]]  # undirected, stored once
    edge_features: np.ndarray  # |E| x d_edge (d_edge may be 0)
    label: np.ndarray  # length num_tasks
    label_mask: np.ndarray  # bool, length num_tasks

    def __post_init__(self):
        self.node_features = np.asarray(self.node_features, dtype=np.float64)
        self.edge_features = np.asarray(self.edge_features, dtype=np.float64)
        self.label = np.asarray(self.label, dtype=np.float64).ravel()
        self.label_mask = np.asarray(self.label_mask, dtype=bool).ravel()

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    def validate(self, manifest: DatasetManifest | None = None, index: int | None = None) -> None:
        where = f"sample {index}" if index is not None else "sample"
        if self.node_features.ndim != 2 or self.n_nodes < 1:
            raise ValidationError(f"{where}: node features must be a non-empty 2-D array")
        if self.label.shape != self.label_mask.shape:
            raise ValidationError(f"{where}: label and mask lengths differ")
        seen = set()
        for s, d in self.edges:
            if not (0 <= s < self.n_nodes and 0 <= d < self.n_nodes):
                raise ValidationError(f"{where}: edge ({s},{d}) references a missing node")
            key = (min(s, d), max(s, d))
            if key in seen:
                raise ValidationError(f"{where}: duplicate undirected edge {key}")
            seen.add(key)
        if self.edge_features.size and self.edge_features.shape[0] != len(self.edges):
            raise ValidationError(f"{where}: edge feature rows do not match edge count")
        if not np.all(np.isfinite(self.node_features)):
            raise ValidationError(f"{where}: non-finite node features")
        if not np.all(np.isfinite(self.label[self.label_mask])):
            raise ValidationError(f"{where}: non-finite unmasked labels")
        if manifest is not None:
            if self.node_features.shape[1] != manifest.d_input:
                raise ValidationError(
                    f"{where}: d_input {self.node_features.shape[1]} != manifest {manifest.d_input}"
                )
            if self.label.shape[0] != manifest.num_tasks:
                raise ValidationError(
                    f"{where}: label length {self.label.shape[0]} != manifest {manifest.num_tasks}"
                )
            width = self.edge_features.shape[1] if self.edge_features.ndim == 2 else 0
            if manifest.d_edge and len(self.edges) and width != manifest.d_edge:
                raise ValidationError(
                    f"{where}: d_edge {width} != manifest {manifest.d_edge}"
                )


@dataclass
class ClientDataset:
    client_id: int
    samples: list[GraphSample]
    task_set: frozenset[int]
    degenerate: bool = False

    def __post_init__(self):
        if len(self.samples) < 1:
            raise ValidationError(f"client {self.client_id}: dataset is empty")
        self.task_set = frozenset(int(t) for t in self.task_set)

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    def validate(self) -> None:
        for i, s in enumerate(self.samples):
            unmasked = {int(t) for t in np.nonzero(s.label_mask)[0]}
            if not unmasked <= self.task_set:
                raise ValidationError(
                    f"client {self.client_id} sample {i}: mask outside task set"
                )


def load_dataset(path) -> tuple[DatasetManifest, list[GraphSample]]:
    """Load and validate a graph JSON file; sample order follows the file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(
                f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
    return load_dataset_payload(payload, source=str(path))


def load_dataset_payload(payload: dict, source: str = "dataset") -> tuple[DatasetManifest, list[GraphSample]]:
    """Validate an already-parsed graph JSON object."""
    path = source
    try:
        m = payload["manifest"]
        manifest = DatasetManifest(
            name=m["name"],
            task_type=m["task_type"],
            num_tasks=int(m["num_tasks"]),
            d_input=int(m["d_input"]),
            d_edge=int(m["d_edge"]),
            metric=m["metric"],
        )
        raw_samples = payload["samples"]
    except KeyError as exc:
        raise ValidationError(f"{path}: missing key {exc}") from exc
    manifest.validate()
    samples = []
    for i, raw in enumerate(raw_samples):
        try:
            edge_feats = raw.get("edge_feats", [])
            sample = GraphSample(
                node_features=np.asarray(raw["nodes"], dtype=np.float64),
                edges=[(int(s), int(d)) for s, d in raw["edges"]],
                edge_features=np.asarray(edge_feats, dtype=np.float64).reshape(
                    len(raw["edges"]), -1
                )
                if edge_feats
                else np.zeros((len(raw["edges"]), manifest.d_edge)),
                label=raw["label"],
                label_mask=raw["mask"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: sample {i}: {exc}") from exc
        sample.validate(manifest, index=i)
        samples.append(sample)
    manifest.num_samples = len(samples)
    return manifest, samples


def save_dataset(manifest: DatasetManifest, samples: list[GraphSample], path) -> None:
    payload = {
        "manifest": {
            "name": manifest.name,
            "task_type": manifest.task_type,
            "num_tasks": manifest.num_tasks,
            "d_input": manifest.d_input,
            "d_edge": manifest.d_edge,
            "metric": manifest.metric,
        },
        "samples": [
            {
                "nodes": s.node_features.tolist(),
                "edges": [[int(a), int(b)] for a, b in s.edges],
                "edge_feats": s.edge_features.tolist(),
                "label": s.label.tolist(),
                "mask": [bool(b) for b in s.label_mask],
            }
            for s in samples
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def train_test_split(
    samples: list[GraphSample], test_fraction: float, seed: int
) -> tuple[list[GraphSample], list[GraphSample]]:
    """Disjoint, exhaustive, seed-deterministic uniform permutation split."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(samples)
    if n < 2:
        raise ConfigError("need at least 2 samples to split")
    n_test = int(round(n * test_fraction))
    n_test = min(max(n_test, 1), n - 1)
    perm = Stream(seed, "train_test_split").permutation(n)
    test_idx = set(perm[:n_test])
    train = [samples[i] for i in range(n) if i not in test_idx]
    test = [samples[i] for i in range(n) if i in test_idx]
    return train, test


@dataclass
class LabelStandardizer:
    """Per-task affine normalization fit on training labels only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, samples: list[GraphSample], num_tasks: int) -> "LabelStandardizer":
        mean = np.zeros(num_tasks)
        std = np.ones(num_tasks)
        for t in range(num_tasks):
            vals = [s.label[t] for s in samples if s.label_mask[t]]
            if vals:
                mean[t] = float(np.mean(vals))
                sd = float(np.std(vals))
                std[t] = sd if sd > 1e-12 else 1.0
        return cls(mean=mean, std=std)

    def transform(self, samples: list[GraphSample]) -> list[GraphSample]:
        out = []
        for s in samples:
            label = (s.label - self.mean) / self.std
            out.append(
                GraphSample(
                    node_features=s.node_features,
                    edges=list(s.edges),
                    edge_features=s.edge_features,
                    label=np.where(s.label_mask, label, s.label),
                    label_mask=s.label_mask,
                )
            )
        return out

    def destandardize(self, preds: np.ndarray, task_ids) -> np.ndarray:
        ids = np.asarray(list(task_ids), dtype=int)
        return preds * self.std[ids] + self.mean[ids]
