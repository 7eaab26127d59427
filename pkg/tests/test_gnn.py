"""Message passing and readout against naive per-node oracles."""

import numpy as np
import pytest

from gmtlsim import autodiff as ad
from gmtlsim import gnn
from gmtlsim.gnn import ModelConfig, classifier_forward, init_shared_params, init_task_column
from gmtlsim.graphs import GraphSample
from gmtlsim.mtl import masked_loss

from conftest import path_graph_edges, toy_graph


def make_param_vars(tape, cfg, d_input, n_tasks, seed=11):
    params = {
        name: tape.param(name, value)
        for name, value in init_shared_params(cfg, d_input, seed).items()
    }
    head = np.column_stack([init_task_column(cfg, seed, t) for t in range(n_tasks)])
    params["head/task"] = tape.param("head/task", head)
    return params


def sage_cfg(**kw):
    defaults = dict(variant="sage", layers=2, hidden_dim=8, node_dim=8, pool_dim=8, dropout=0.0)
    defaults.update(kw)
    return ModelConfig(**defaults)


def gat_cfg(**kw):
    defaults = dict(variant="gat", layers=2, hidden_dim=8, node_dim=8, pool_dim=8,
                    gat_heads=2, dropout=0.0)
    defaults.update(kw)
    return ModelConfig(**defaults)


class TestSageLayer:
    def test_isolated_node_aggregates_zero(self, np_rng):
        t = ad.Tape()
        h = np_rng.standard_normal((1, 3))
        w = t.param("w", np_rng.standard_normal((6, 4)))
        out = gnn.sage_layer_forward(h, np.zeros((1, 1)), w)
        expected = np.maximum(np.concatenate([h, np.zeros((1, 3))], axis=1) @ w.value, 0.0)
        assert np.allclose(out.value, expected, atol=1e-14)

    def test_two_node_path_mean_aggregate_swaps_states(self, np_rng):
        # Update weight selecting only the aggregate slot: the new state is
        # ReLU of the neighbor's state, i.e. the other node's (positive) state.
        h = np.abs(np_rng.standard_normal((2, 3))) + 0.1
        sample = GraphSample(h, [(0, 1)], np.zeros((1, 0)), np.zeros(1), np.ones(1, dtype=bool))
        struct = gnn._structure(sample)
        t = ad.Tape()
        u = np.vstack([np.zeros((3, 3)), np.eye(3)])
        w = t.param("w", u)
        out = gnn.sage_layer_forward(h, struct.mean_op, w)
        assert np.allclose(out.value[0], h[1], atol=1e-14)
        assert np.allclose(out.value[1], h[0], atol=1e-14)

    def test_random_graph_matches_per_node_loop(self, np_rng):
        edges = [(0, 1), (1, 2), (2, 3), (3, 0), (1, 4), (4, 5)]
        sample = toy_graph(6, edges, 5, 1, np_rng)
        struct = gnn._structure(sample)
        t = ad.Tape()
        w = t.param("w", np_rng.standard_normal((10, 7)))
        out = gnn.sage_layer_forward(sample.node_features, struct.mean_op, w)
        neigh = {i: [] for i in range(6)}
        for a, b in edges:
            neigh[a].append(b)
            neigh[b].append(a)
        for i in range(6):
            agg = np.mean([sample.node_features[j] for j in neigh[i]], axis=0)
            ref = np.maximum(np.concatenate([sample.node_features[i], agg]) @ w.value, 0.0)
            assert np.max(np.abs(out.value[i] - ref)) < 1e-12


class TestGatLayer:
    def test_single_node_softmax_of_singleton(self, np_rng):
        sample = toy_graph(1, [], 4, 1, np_rng)
        struct = gnn._structure(sample)
        t = ad.Tape()
        heads = [(
            t.param("p", np_rng.standard_normal((4, 3))),
            t.param("a1", np_rng.standard_normal((3, 1))),
            t.param("a2", np_rng.standard_normal((3, 1))),
        )]
        out = gnn.gat_layer_forward(sample.node_features, struct.gat_src, struct.gat_dst,
                                    heads, 0.2)
        expected = np.maximum(sample.node_features @ heads[0][0].value, 0.0)
        assert np.allclose(out.value, expected, atol=1e-14)

    def test_identical_neighbor_states_give_uniform_attention(self):
        # A 3-node star with every node holding the same features: all
        # attention logits tie, so the center's output is the plain mean of
        # the projected states.
        h = np.tile([[1.0, -0.5]], (3, 1))
        sample = GraphSample(h, [(0, 1), (0, 2)], np.zeros((2, 0)),
                             np.zeros(1), np.ones(1, dtype=bool))
        struct = gnn._structure(sample)
        t = ad.Tape()
        rng = np.random.default_rng(3)
        proj = t.param("p", rng.standard_normal((2, 2)))
        heads = [(proj, t.param("a1", rng.standard_normal((2, 1))),
                  t.param("a2", rng.standard_normal((2, 1))))]
        out = gnn.gat_layer_forward(h, struct.gat_src, struct.gat_dst, heads, 0.2)
        expected = np.maximum(h @ proj.value, 0.0)  # mean of identical messages
        assert np.allclose(out.value, expected, atol=1e-12)

    def test_random_graph_matches_dense_softmax_oracle(self, np_rng):
        edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)]
        sample = toy_graph(5, edges, 4, 1, np_rng)
        struct = gnn._structure(sample)
        t = ad.Tape()
        slope = 0.2
        heads = []
        for j in range(2):
            heads.append((
                t.param(f"p{j}", np_rng.standard_normal((4, 3))),
                t.param(f"s{j}", np_rng.standard_normal((3, 1))),
                t.param(f"n{j}", np_rng.standard_normal((3, 1))),
            ))
        out = gnn.gat_layer_forward(sample.node_features, struct.gat_src, struct.gat_dst,
                                    heads, slope)
        neigh = {i: [i] for i in range(5)}
        for a, b in edges:
            neigh[a].append(b)
            neigh[b].append(a)

        def leaky(x):
            return x if x > 0 else slope * x

        ref_heads = []
        for proj, a_self, a_neigh in heads:
            hw = sample.node_features @ proj.value
            ref = np.zeros_like(hw)
            for i in range(5):
                logits = np.array(
                    [leaky(float(hw[i] @ a_self.value[:, 0] + hw[j] @ a_neigh.value[:, 0]))
                     for j in neigh[i]]
                )
                weights = np.exp(logits - logits.max())
                weights /= weights.sum()
                ref[i] = sum(w * hw[j] for w, j in zip(weights, neigh[i]))
            ref_heads.append(ref)
        expected = np.maximum(np.concatenate(ref_heads, axis=1), 0.0)
        assert np.max(np.abs(out.value - expected)) < 1e-10


class TestReadout:
    def test_single_node_mean_is_the_row(self, np_rng):
        t = ad.Tape()
        x = np_rng.standard_normal((1, 3))
        h = np_rng.standard_normal((1, 4))
        pool = t.param("pool", np_rng.standard_normal((7, 5)))
        head = t.param("head", np_rng.standard_normal((5, 2)))
        out = gnn.readout(h, x, pool, head)
        ref = np.maximum(np.concatenate([x, h], axis=1) @ pool.value, 0.0) @ head.value
        assert np.allclose(out.value, ref, atol=1e-14)

    def test_zero_weights_zero_prediction(self, np_rng):
        t = ad.Tape()
        out = gnn.readout(
            np_rng.standard_normal((3, 4)),
            np_rng.standard_normal((3, 2)),
            t.param("pool", np.zeros((6, 5))),
            t.param("head", np.zeros((5, 3))),
        )
        assert np.array_equal(out.value, np.zeros((1, 3)))

    def test_three_node_hand_loop(self, np_rng):
        t = ad.Tape()
        x = np_rng.standard_normal((3, 2))
        h = np_rng.standard_normal((3, 3))
        pool = t.param("pool", np_rng.standard_normal((5, 4)))
        head = t.param("head", np_rng.standard_normal((4, 2)))
        out = gnn.readout(h, x, pool, head)
        rows = []
        for v in range(3):
            pooled = np.maximum(np.concatenate([x[v], h[v]]) @ pool.value, 0.0)
            rows.append(pooled @ head.value)
        assert np.max(np.abs(out.value[0] - np.mean(rows, axis=0))) < 1e-12

    def test_final_relu_flag(self, np_rng):
        cfg_on = sage_cfg(readout_final_relu=True)
        sample = toy_graph(4, path_graph_edges(4), 3, 2, np_rng)
        t1, t2 = ad.Tape(), ad.Tape()
        p1 = make_param_vars(t1, sage_cfg(), 3, 2)
        p2 = make_param_vars(t2, cfg_on, 3, 2)
        raw = classifier_forward(t1, sample, p1, sage_cfg())
        clipped = classifier_forward(t2, sample, p2, cfg_on)
        assert np.all(clipped.value >= 0.0)
        assert not np.allclose(raw.value, clipped.value)


class TestClassifierForward:
    @pytest.mark.parametrize("cfg_fn", [sage_cfg, gat_cfg])
    def test_purity(self, np_rng, cfg_fn):
        cfg = cfg_fn()
        sample = toy_graph(5, path_graph_edges(5), 3, 2, np_rng)
        outs = []
        for _ in range(2):
            t = ad.Tape()
            params = make_param_vars(t, cfg, 3, 2)
            outs.append(classifier_forward(t, sample, params, cfg).value)
        assert np.array_equal(outs[0], outs[1])

    @pytest.mark.parametrize("cfg_fn", [sage_cfg, gat_cfg])
    def test_prediction_length_is_task_count(self, np_rng, cfg_fn):
        cfg = cfg_fn()
        sample = toy_graph(4, path_graph_edges(4), 3, 5, np_rng)
        t = ad.Tape()
        params = make_param_vars(t, cfg, 3, 5)
        assert classifier_forward(t, sample, params, cfg).shape == (1, 5)

    @pytest.mark.parametrize("cfg_fn", [sage_cfg, gat_cfg])
    def test_node_permutation_invariance(self, np_rng, cfg_fn):
        cfg = cfg_fn()
        edges = [(0, 1), (1, 2), (2, 3), (3, 4), (1, 4), (0, 3)]
        sample = toy_graph(5, edges, 3, 2, np_rng)
        perm = [3, 0, 4, 1, 2]
        inv = np.argsort(perm)
        permuted = GraphSample(
            node_features=sample.node_features[perm],
            edges=[(int(inv[a]), int(inv[b])) for a, b in edges],
            edge_features=sample.edge_features,
            label=sample.label,
            label_mask=sample.label_mask,
        )
        values = []
        for s in (sample, permuted):
            t = ad.Tape()
            params = make_param_vars(t, cfg, 3, 2)
            values.append(classifier_forward(t, s, params, cfg).value)
        assert np.max(np.abs(values[0] - values[1])) < 1e-10

    def test_locality_on_a_path(self, np_rng):
        # After L layers a node's state depends only on its L-hop ball, so
        # editing the far end of a path leaves near-end STATES untouched (the
        # readout itself sees every node's raw features, so the graph-level
        # prediction may move).
        cfg = sage_cfg()
        n = 6
        base = toy_graph(n, path_graph_edges(n), 3, 1, np_rng)
        edited_feats = base.node_features.copy()
        edited_feats[5] += 7.5
        edited = GraphSample(edited_feats, list(base.edges), base.edge_features,
                             base.label, base.label_mask)

        def final_states(sample):
            t = ad.Tape()
            params = make_param_vars(t, cfg, 3, 1)
            struct = gnn._structure(sample)
            h = t.const(sample.node_features)
            for i in range(cfg.layers):
                h = gnn.sage_layer_forward(h, struct.mean_op, params[f"gnn/layer{i}/update"])
            return h.value

        before = final_states(base)
        after = final_states(edited)
        for node in (0, 1, 2):  # distance from node 5 exceeds L = 2
            assert np.array_equal(before[node], after[node])
        assert not np.allclose(before[5], after[5])

    @pytest.mark.parametrize("cfg_fn", [sage_cfg, gat_cfg])
    def test_loss_gradient_matches_finite_differences(self, np_rng, cfg_fn):
        # Checked on the training objective (loss plus a small weight
        # penalty): the penalty floors every coordinate's gradient magnitude,
        # keeping the relative comparison meaningful on ReLU-dead paths.
        cfg = cfg_fn()
        for trial in range(3):
            sample = toy_graph(4 + trial, path_graph_edges(4 + trial), 3, 2, np_rng,
                               label=[1.0, 0.0])

            def build(params):
                t = ad.Tape()
                pvars = {name: t.param(name, v) for name, v in params.items()}
                pred = classifier_forward(t, sample, pvars, cfg)
                loss = masked_loss(pred, sample.label, sample.label_mask, "classification")
                for v in pvars.values():
                    loss = ad.add(loss, ad.scale(ad.frobenius_sq(v), 0.005))
                return loss

            t0 = ad.Tape()
            base = {name: v.value.copy() for name, v in make_param_vars(t0, cfg, 3, 2).items()}
            result = ad.finite_diff_gradcheck(build, base)
            assert result.max_rel_error < 1e-4, (cfg.variant, trial, result.max_rel_error)

    def test_dropout_is_deterministic_per_stream(self, np_rng):
        from gmtlsim.rng import Stream

        cfg = sage_cfg(dropout=0.4)
        sample = toy_graph(5, path_graph_edges(5), 3, 2, np_rng)
        outs = []
        for _ in range(2):
            t = ad.Tape()
            params = make_param_vars(t, cfg, 3, 2)
            outs.append(
                classifier_forward(t, sample, params, cfg,
                                   dropout_stream=Stream(5, "drop")).value
            )
        assert np.array_equal(outs[0], outs[1])
