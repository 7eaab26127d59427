import numpy as np
import pytest

from gmtlsim.graphs import DatasetManifest, GraphSample


def toy_graph(n_nodes, edges, d_input, n_tasks, rng, label=None, mask=None):
    feats = rng.standard_normal((n_nodes, d_input))
    label = np.zeros(n_tasks) if label is None else np.asarray(label, dtype=float)
    mask = np.ones(n_tasks, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    return GraphSample(
        node_features=feats,
        edges=list(edges),
        edge_features=np.zeros((len(edges), 0)),
        label=label,
        label_mask=mask,
    )


def path_graph_edges(n):
    return [(i, i + 1) for i in range(n - 1)]


@pytest.fixture
def np_rng():
    return np.random.default_rng(20240817)


def tiny_manifest(n_tasks=2, d_input=4, task_type="classification"):
    return DatasetManifest(
        name="toy",
        task_type=task_type,
        num_tasks=n_tasks,
        d_input=d_input,
        d_edge=0,
        metric="roc_auc" if task_type == "classification" else "mae",
    )
