"""Graph classifier forward pass recorded on the gradient tape.

Two message-passing variants share the same skeleton:

- sage: h' = ReLU(U [h || mean_{j in N(i)} h_j]); isolated nodes aggregate
  the zero vector.
- gat: per-edge attention over N(i) plus a self loop,
  alpha_ij = softmax_j LeakyReLU(a_self . W h_i + a_neigh . W h_j),
  h'_i = ReLU(sum_j alpha_ij W h_j), heads concatenated.

The readout mean-pools ReLU(Phi_pool [x_v || h_v]) through the task head;
the loss consumes the pre-activation of the final affine map unless
`readout_final_relu` is set, in which case the extra ReLU is applied before
pooling.  Edge features are carried by the data model but not consumed here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError
from .graphs import GraphSample
from .rng import Stream

PARAM_GROUPS = ("theta", "psi", "phi_pool", "phi_task")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "sage"  # sage | gat
    layers: int = 2
    hidden_dim: int = 64
    node_dim: int = 64
    pool_dim: int = 64
    gat_heads: int = 2
    leaky_slope: float = 0.2
    dropout: float = 0.3
    readout_final_relu: bool = False

    def validate(self) -> None:
        if self.variant not in ("sage", "gat"):
            raise ConfigError(f"unknown gnn variant {self.variant!r}")
        if self.layers < 1:
            raise ConfigError("need at least one gnn layer")
        if self.variant == "gat":
            if self.gat_heads < 1:
                raise ConfigError("gat needs at least one attention head")
            for dim in self.layer_output_dims():
                if dim % self.gat_heads:
                    raise ConfigError(
                        f"layer width {dim} not divisible by {self.gat_heads} heads"
                    )

    def layer_output_dims(self) -> list[int]:
        return [self.hidden_dim] * (self.layers - 1) + [self.node_dim]


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def _glorot(stream: Stream, rows: int, cols: int) -> np.ndarray:
    sd = np.sqrt(2.0 / (rows + cols))
    vals = np.array(stream.normals(rows * cols))
    return (vals * sd).reshape(rows, cols)


def shared_param_spec(cfg: ModelConfig, d_input: int) -> list[tuple[str, str, tuple[int, int]]]:
    """(name, group, shape) for every shared parameter, in a fixed order."""
    spec = []
    d_in = d_input
    for i, d_out in enumerate(cfg.layer_output_dims()):
        if cfg.variant == "sage":
            spec.append((f"gnn/layer{i}/update", "psi", (2 * d_in, d_out)))
        else:
            dh = d_out // cfg.gat_heads
            for h in range(cfg.gat_heads):
                spec.append((f"gnn/layer{i}/head{h}/proj", "theta", (d_in, dh)))
                spec.append((f"gnn/layer{i}/head{h}/attn_self", "theta", (dh, 1)))
                spec.append((f"gnn/layer{i}/head{h}/attn_neigh", "theta", (dh, 1)))
        d_in = d_out
    spec.append(("readout/pool", "phi_pool", (cfg.node_dim + d_input, cfg.pool_dim)))
    return spec


def init_shared_params(cfg: ModelConfig, d_input: int, seed: int) -> dict[str, np.ndarray]:
    """Shared weights, identical for every client given the same seed."""
    params = {}
    for name, _group, shape in shared_param_spec(cfg, d_input):
        params[name] = _glorot(Stream(seed, "init", name), *shape)
    return params


def init_task_column(cfg: ModelConfig, seed: int, global_task: int) -> np.ndarray:
    """One task-head column, keyed by the global task id so that every
    client materializing this task starts from the same values."""
    return _glorot(Stream(seed, "init_head", global_task), cfg.pool_dim, 1)[:, 0]


def param_groups(cfg: ModelConfig, d_input: int) -> dict[str, str]:
    groups = {name: group for name, group, _ in shared_param_spec(cfg, d_input)}
    groups["head/task"] = "phi_task"
    return groups


# ---------------------------------------------------------------------------
# graph structure caches
# ---------------------------------------------------------------------------


@dataclass
class _Structure:
    mean_op: np.ndarray  # |V| x |V| neighbor-mean operator (no self)
    gat_src: np.ndarray  # directed edges plus self loops
    gat_dst: np.ndarray


def _structure(sample: GraphSample) -> _Structure:
    cached = getattr(sample, "_gnn_structure", None)
    if cached is not None:
        return cached
    n = sample.n_nodes
    src, dst = [], []
    for s, d in sample.edges:
        src.extend((s, d))
        dst.extend((d, s))
    mean_op = np.zeros((n, n))
    if src:
        np.add.at(mean_op, (np.array(dst), np.array(src)), 1.0)
    deg = mean_op.sum(axis=1)
    nz = deg > 0
    mean_op[nz] /= deg[nz, None]
    gat_src = np.array(src + list(range(n)), dtype=np.intp)
    gat_dst = np.array(dst + list(range(n)), dtype=np.intp)
    struct = _Structure(mean_op=mean_op, gat_src=gat_src, gat_dst=gat_dst)
    sample._gnn_structure = struct
    return struct


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


def sage_layer_forward(node_states, mean_op: np.ndarray, update_weight) -> "ad.Var":
    """One GraphSAGE layer; `mean_op` is the constant neighbor-mean matrix."""
    t = update_weight.tape
    h = node_states if isinstance(node_states, ad.Var) else t.const(node_states)
    if h.shape[0] != mean_op.shape[0]:
        raise ShapeError("node state rows do not match the aggregation operator")
    agg = ad.matmul(t.const(mean_op), h)
    return ad.relu(ad.matmul(ad.concat_cols(h, agg), update_weight))


def gat_layer_forward(node_states, gat_src, gat_dst, head_params, slope: float) -> "ad.Var":
    """One GAT layer; `head_params` is a list of (proj, attn_self, attn_neigh)."""
    t = head_params[0][0].tape
    h = node_states if isinstance(node_states, ad.Var) else t.const(node_states)
    n = h.shape[0]
    outs = []
    for proj, a_self, a_neigh in head_params:
        hw = ad.matmul(h, proj)
        s_dst = ad.gather_rows(ad.matmul(hw, a_self), gat_dst)
        s_src = ad.gather_rows(ad.matmul(hw, a_neigh), gat_src)
        scores = ad.leaky_relu(ad.add(s_dst, s_src), slope)
        alpha = ad.segment_softmax(scores, gat_dst, n)
        messages = ad.scale_rows(ad.gather_rows(hw, gat_src), alpha)
        outs.append(ad.segment_sum(messages, gat_dst, n))
    merged = outs[0]
    for other in outs[1:]:
        merged = ad.concat_cols(merged, other)
    return ad.relu(merged)


def readout(node_states_final, node_features: np.ndarray, pool, head, *, final_relu: bool = False) -> "ad.Var":
    """Mean over nodes of the pooled, task-scored node representations."""
    t = pool.tape
    h = node_states_final if isinstance(node_states_final, ad.Var) else t.const(node_states_final)
    if h.shape[0] != node_features.shape[0]:
        raise ShapeError("final states and input features disagree on node count")
    pooled = ad.relu(ad.matmul(ad.concat_cols(t.const(node_features), h), pool))
    scored = ad.matmul(pooled, head)
    if final_relu:
        scored = ad.relu(scored)
    return ad.mean_rows(scored)


def classifier_forward(
    tape,
    sample: GraphSample,
    params: dict[str, "ad.Var"],
    cfg: ModelConfig,
    *,
    dropout_stream: Stream | None = None,
) -> "ad.Var":
    """Full L-layer propagation plus readout; returns a 1 x S_m prediction.

    Dropout masks (inverted scaling) are drawn from `dropout_stream` when
    given and cfg.dropout > 0; evaluation passes no stream.
    """
    struct = _structure(sample)
    h = tape.const(sample.node_features)
    d_in = sample.node_features.shape[1]
    for i, d_out in enumerate(cfg.layer_output_dims()):
        if cfg.variant == "sage":
            h = sage_layer_forward(h, struct.mean_op, params[f"gnn/layer{i}/update"])
        else:
            heads = [
                (
                    params[f"gnn/layer{i}/head{j}/proj"],
                    params[f"gnn/layer{i}/head{j}/attn_self"],
                    params[f"gnn/layer{i}/head{j}/attn_neigh"],
                )
                for j in range(cfg.gat_heads)
            ]
            h = gat_layer_forward(h, struct.gat_src, struct.gat_dst, heads, cfg.leaky_slope)
        if dropout_stream is not None and cfg.dropout > 0.0:
            keep = 1.0 - cfg.dropout
            mask = np.array(
                [dropout_stream.uniform() >= cfg.dropout for _ in range(h.shape[0] * d_out)]
            ).reshape(h.shape[0], d_out)
            h = ad.mul(h, tape.const(mask / keep))
        d_in = d_out
    return readout(
        h,
        sample.node_features,
        params["readout/pool"],
        params["head/task"],
        final_relu=cfg.readout_final_relu,
    )
