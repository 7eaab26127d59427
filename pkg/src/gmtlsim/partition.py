"""Non-IID data assignment: Dirichlet quantity skew and task masking."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .graphs import ClientDataset, GraphSample
from .rng import Stream

MASK_MODES = ("exclusive_exhaustive", "custom")


@dataclass
class PartitionConfig:
    alpha: float = 0.5
    clients: int = 4
    mask_mode: str = "exclusive_exhaustive"
    custom_masks: list[list[int]] | None = None
    seed: int = 0

    def validate(self, num_tasks: int | None = None) -> None:
        if self.alpha <= 0:
            raise ConfigError("dirichlet alpha must be positive")
        if self.clients < 1:
            raise ConfigError("need at least one client")
        if self.mask_mode not in MASK_MODES:
            raise ConfigError(f"unknown mask mode {self.mask_mode!r}")
        if self.mask_mode == "custom" and not self.custom_masks:
            raise ConfigError("custom mask mode needs custom_masks")
        if (
            self.mask_mode == "exclusive_exhaustive"
            and num_tasks is not None
            and self.clients > num_tasks
        ):
            raise ConfigError(
                f"exclusive_exhaustive cannot split {num_tasks} tasks over {self.clients} clients"
            )


def dirichlet_quantity_split(samples: list[GraphSample], cfg: PartitionConfig) -> list[ClientDataset]:
    """Deal samples to clients with Dirichlet(alpha)-skewed counts.

    Counts use largest-remainder rounding of p_i * N, then zero-count
    clients steal one sample from the largest client.  Pre-masking: every
    client starts with the full task set.
    """
    n = len(samples)
    k = cfg.clients
    if n < k:
        raise ConfigError(f"cannot split {n} samples across {k} clients")
    stream = Stream(cfg.seed, "dirichlet_split")
    props = stream.dirichlet(cfg.alpha, k) if k > 1 else [1.0]
    counts = _largest_remainder_counts(props, n)
    order = stream.permutation(n)
    num_tasks = samples[0].label.shape[0] if samples else 0
    full = frozenset(range(num_tasks))
    out = []
    start = 0
    for cid, c in enumerate(counts):
        chunk = [samples[order[i]] for i in range(start, start + c)]
        start += c
        out.append(ClientDataset(client_id=cid, samples=chunk, task_set=full))
    return out


def _largest_remainder_counts(props: list[float], n: int) -> list[int]:
    raw = [p * n for p in props]
    counts = [int(np.floor(r)) for r in raw]
    remainders = sorted(
        range(len(props)), key=lambda i: (-(raw[i] - counts[i]), i)
    )
    short = n - sum(counts)
    for i in range(short):
        counts[remainders[i]] += 1
    # every client must end up with at least one sample
    for i in range(len(counts)):
        while counts[i] == 0:
            donor = int(np.argmax(counts))
            counts[donor] -= 1
            counts[i] += 1
    return counts


def assign_task_masks(cfg: PartitionConfig, num_tasks: int) -> list[frozenset[int]]:
    """Per-client observed-task sets.

    exclusive_exhaustive: a seeded random partition of all task ids into
    `clients` non-empty, pairwise disjoint sets covering everything.
    custom: pass-through (overlap allowed).
    """
    cfg.validate(num_tasks)
    if cfg.mask_mode == "custom":
        masks = []
        for i, ids in enumerate(cfg.custom_masks):
            ids = frozenset(int(t) for t in ids)
            if not ids:
                raise ConfigError(f"custom mask {i} is empty")
            if any(t < 0 or t >= num_tasks for t in ids):
                raise ConfigError(f"custom mask {i} references a task outside 0..{num_tasks - 1}")
            masks.append(ids)
        if len(masks) != cfg.clients:
            raise ConfigError(f"{len(masks)} custom masks for {cfg.clients} clients")
        return masks
    stream = Stream(cfg.seed, "task_masks")
    order = stream.permutation(num_tasks)
    sets: list[set[int]] = [set() for _ in range(cfg.clients)]
    for i in range(cfg.clients):  # one task each first, so no set is empty
        sets[i].add(order[i])
    for t in order[cfg.clients :]:
        sets[stream.randint(cfg.clients)].add(t)
    return [frozenset(s) for s in sets]


def apply_mask(dataset: ClientDataset, task_set: frozenset[int]) -> ClientDataset:
    """Restrict a client's labels to task_set; test sets are never masked."""
    keep = np.zeros(dataset.samples[0].label.shape[0], dtype=bool)
    keep[list(task_set)] = True
    masked = []
    any_label = False
    for s in dataset.samples:
        mask = s.label_mask & keep
        any_label = any_label or bool(mask.any())
        masked.append(
            GraphSample(
                node_features=s.node_features,
                edges=list(s.edges),
                edge_features=s.edge_features,
                label=s.label,
                label_mask=mask,
            )
        )
    if not any_label:
        warnings.warn(
            f"client {dataset.client_id} has no labeled task after masking", RuntimeWarning
        )
    return ClientDataset(
        client_id=dataset.client_id,
        samples=masked,
        task_set=frozenset(task_set),
        degenerate=not any_label,
    )
