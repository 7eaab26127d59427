"""Synthetic molecular-style graph datasets for tests and demos.

Labels are planted so that a short message-passing model can recover them:
each task thresholds a mix of the graph's mean node features and the mean of
neighbor-averaged features under a task-specific direction, with all task
directions sharing a common component (tasks are deliberately correlated so
covariance coupling has something to exploit).  Per-task thresholds sit at
the pool median, so classes stay roughly balanced.
"""

from __future__ import annotations

import numpy as np

from .graphs import DatasetManifest, GraphSample
from .rng import Stream


def _random_graph(stream: Stream, n_nodes: int, d_input: int, extra_edge_prob: float):
    feats = np.array(stream.normals(n_nodes * d_input)).reshape(n_nodes, d_input)
    edges = []
    for v in range(1, n_nodes):  # random spanning tree keeps graphs connected
        edges.append((stream.randint(v), v))
    for a in range(n_nodes):
        for b in range(a + 1, n_nodes):
            if (a, b) not in edges and (b, a) not in edges:
                if stream.uniform() < extra_edge_prob:
                    edges.append((a, b))
    return feats, edges


def _neighbor_mean(feats: np.ndarray, edges, n_nodes: int) -> np.ndarray:
    agg = np.zeros_like(feats)
    deg = np.zeros(n_nodes)
    for a, b in edges:
        agg[a] += feats[b]
        agg[b] += feats[a]
        deg[a] += 1
        deg[b] += 1
    nz = deg > 0
    agg[nz] /= deg[nz, None]
    return agg


def synthetic_classification_dataset(
    n_graphs: int,
    n_tasks: int,
    d_input: int,
    seed: int,
    *,
    min_nodes: int = 5,
    max_nodes: int = 10,
    extra_edge_prob: float = 0.15,
    task_correlation: float = 0.7,
    label_noise: float = 0.05,
    name: str = "synthetic",
) -> tuple[DatasetManifest, list[GraphSample]]:
    stream = Stream(seed, "synth", name)
    shared_self = np.array(stream.normals(d_input))
    shared_nbr = np.array(stream.normals(d_input))
    dir_self, dir_nbr = [], []
    for _ in range(n_tasks):
        own = np.array(stream.normals(d_input))
        dir_self.append(task_correlation * shared_self + (1 - task_correlation) * own)
        own = np.array(stream.normals(d_input))
        dir_nbr.append(task_correlation * shared_nbr + (1 - task_correlation) * own)

    graphs = []
    scores = np.zeros((n_graphs, n_tasks))
    for g in range(n_graphs):
        n_nodes = min_nodes + stream.randint(max_nodes - min_nodes + 1)
        feats, edges = _random_graph(stream, n_nodes, d_input, extra_edge_prob)
        nbr = _neighbor_mean(feats, edges, n_nodes)
        mean_self = feats.mean(axis=0)
        mean_nbr = nbr.mean(axis=0)
        for t in range(n_tasks):
            scores[g, t] = mean_self @ dir_self[t] + mean_nbr @ dir_nbr[t]
        graphs.append((feats, edges))

    thresholds = np.median(scores, axis=0)
    samples = []
    for g, (feats, edges) in enumerate(graphs):
        label = (scores[g] > thresholds).astype(np.float64)
        for t in range(n_tasks):
            if stream.uniform() < label_noise:
                label[t] = 1.0 - label[t]
        samples.append(
            GraphSample(
                node_features=feats,
                edges=edges,
                edge_features=np.zeros((len(edges), 0)),
                label=label,
                label_mask=np.ones(n_tasks, dtype=bool),
            )
        )
    manifest = DatasetManifest(
        name=name,
        task_type="classification",
        num_tasks=n_tasks,
        d_input=d_input,
        d_edge=0,
        metric="roc_auc",
        num_samples=n_graphs,
    )
    return manifest, samples


def synthetic_regression_dataset(
    n_graphs: int,
    n_tasks: int,
    d_input: int,
    seed: int,
    *,
    noise_sd: float = 0.1,
    name: str = "synthetic-reg",
) -> tuple[DatasetManifest, list[GraphSample]]:
    stream = Stream(seed, "synth_reg", name)
    directions = [np.array(stream.normals(d_input)) for _ in range(n_tasks)]
    samples = []
    for _ in range(n_graphs):
        n_nodes = 4 + stream.randint(6)
        feats, edges = _random_graph(stream, n_nodes, d_input, 0.2)
        mean_self = feats.mean(axis=0)
        label = np.array(
            [mean_self @ d + noise_sd * stream.normal() for d in directions]
        )
        samples.append(
            GraphSample(
                node_features=feats,
                edges=edges,
                edge_features=np.zeros((len(edges), 0)),
                label=label,
                label_mask=np.ones(n_tasks, dtype=bool),
            )
        )
    manifest = DatasetManifest(
        name=name,
        task_type="regression",
        num_tasks=n_tasks,
        d_input=d_input,
        d_edge=0,
        metric="mae",
        num_samples=n_graphs,
    )
    return manifest, samples
