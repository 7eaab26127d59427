"""Communication topologies, mixing matrices, and spectral gaps.

The connection matrix is binary, symmetric, with self-connections on the
diagonal.  Averaging needs stochastic weights, so the mixing matrix uses
Metropolis-Hastings weights by default: w_ij = 1 / max(|M_i|, |M_j|) for
connected i != j (neighborhood sizes include self) and the diagonal takes
the remainder.  That construction is symmetric and doubly stochastic for
any symmetric adjacency, which is exactly what the averaging-step analysis
assumes.  A plain uniform 1/|M_i| mode is kept for comparison; it is only
symmetric on regular graphs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError
from .linalg import require_symmetric, sym_eig
from .rng import Stream

KINDS = ("complete", "ring", "random")


@dataclass
class ConnectionMatrix:
    adjacency: np.ndarray  # K x K bool, symmetric, diagonal True
    kind: str
    connected: bool

    @property
    def size(self) -> int:
        return self.adjacency.shape[0]

    def neighborhood(self, k: int) -> list[int]:
        """Members of M_k (including k itself), ascending."""
        return [int(j) for j in np.nonzero(self.adjacency[k])[0]]

    def validate(self) -> None:
        a = self.adjacency
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError("adjacency must be square")
        if a.dtype != bool:
            raise ValidationError("adjacency must be boolean")
        if not np.array_equal(a, a.T):
            raise ValidationError("adjacency must be symmetric")
        if not np.all(np.diag(a)):
            raise ValidationError("adjacency diagonal must be all True")


@dataclass
class MixingMatrix:
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def validate(self, tol: float = 1e-12) -> None:
        w = self.weights
        require_symmetric(w, tol, "mixing matrix")
        rows = w.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > tol:
            raise ValidationError("mixing matrix rows must sum to 1")
        if np.min(w) < -tol:
            raise ValidationError("mixing weights must be non-negative")


def _is_connected(adjacency: np.ndarray) -> bool:
    k = adjacency.shape[0]
    seen = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in np.nonzero(adjacency[i])[0]:
            if int(j) not in seen:
                seen.add(int(j))
                frontier.append(int(j))
    return len(seen) == k


def build_topology(kind: str, size: int, n_neighbors: int = 0, seed: int = 0) -> ConnectionMatrix:
    """Build a complete, ring, or seeded random regular topology."""
    if kind not in KINDS:
        raise ConfigError(f"unknown topology kind {kind!r}; expected one of {KINDS}")
    if size < 2:
        raise ConfigError("topologies need at least 2 clients")
    if kind == "complete":
        adj = np.ones((size, size), dtype=bool)
    elif kind == "ring":
        if n_neighbors < 2 or n_neighbors % 2:
            raise ConfigError("ring topology needs an even n_neighbors >= 2")
        if n_neighbors >= size:
            raise ConfigError(f"ring degree {n_neighbors} too large for {size} clients")
        adj = np.eye(size, dtype=bool)
        for i in range(size):
            for step in range(1, n_neighbors // 2 + 1):
                adj[i, (i + step) % size] = True
                adj[i, (i - step) % size] = True
    else:
        adj = _random_regular(size, n_neighbors, seed)
    conn = ConnectionMatrix(adjacency=adj, kind=kind, connected=_is_connected(adj))
    conn.validate()
    return conn


def _random_regular(size: int, degree: int, seed: int) -> np.ndarray:
    if not 0 <= degree < size:
        raise ConfigError(f"random topology degree must be in [0, {size}), got {degree}")
    if degree == 0:
        return np.eye(size, dtype=bool)
    if (size * degree) % 2:
        raise ConfigError(f"no {degree}-regular graph exists on {size} nodes")
    # Pair half-edge stubs by seeded shuffle; retry until the pairing is a
    # simple graph.  Falls back to the last attempt's nearest-degree graph
    # with a warning if no exact pairing appears within 100 attempts.
    stream = Stream(seed, "random_topology")
    last = None
    for _ in range(100):
        stubs = [v for v in range(size) for _ in range(degree)]
        stream.shuffle(stubs)
        adj = np.eye(size, dtype=bool)
        ok = True
        for a, b in zip(stubs[0::2], stubs[1::2]):
            if a == b or adj[a, b]:
                ok = False
                break
            adj[a, b] = True
            adj[b, a] = True
        last = adj
        if ok:
            return adj
    warnings.warn(
        f"no exact {degree}-regular pairing found in 100 attempts; "
        "using nearest achievable degrees",
        RuntimeWarning,
    )
    return last


def mixing_matrix(conn: ConnectionMatrix, mode: str = "metropolis") -> MixingMatrix:
    conn.validate()
    adj = conn.adjacency
    k = conn.size
    sizes = adj.sum(axis=1).astype(np.float64)  # |M_i|, self included
    w = np.zeros((k, k))
    if mode == "metropolis":
        for i in range(k):
            for j in range(k):
                if i != j and adj[i, j]:
                    w[i, j] = 1.0 / max(sizes[i], sizes[j])
            w[i, i] = 1.0 - w[i].sum()
    elif mode == "uniform":
        for i in range(k):
            w[i, adj[i]] = 1.0 / sizes[i]
    else:
        raise ConfigError(f"unknown mixing mode {mode!r}")
    mix = MixingMatrix(weights=w)
    mix.validate()
    return mix


def spectral_gap(mix: MixingMatrix) -> float:
    """Largest non-principal eigenvalue magnitude of the mixing matrix."""
    mix.validate()
    w, _ = sym_eig(mix.weights)
    if abs(w[0] - 1.0) > 1e-8:
        raise ValidationError(f"principal eigenvalue is {w[0]}, expected 1")
    if mix.size == 1:
        return 0.0
    zeta = float(np.max(np.abs(w[1:])))
    zeta = min(max(zeta, 0.0), 1.0)
    if zeta > 1.0 - 1e-12:
        warnings.warn("mixing matrix is disconnected: spectral gap is zero (zeta = 1)",
                      RuntimeWarning)
    return zeta
