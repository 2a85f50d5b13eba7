"""Spatial embeddings vs the scalar oracle, plus symmetry and ablation laws."""

import numpy as np
import pytest

from dynembed.autodiff import Parameter, Tape, Var
from dynembed.graph import DynamicGraph, Snapshot
from dynembed.spatial import (
    SpatialParams,
    embed_snapshot,
    embed_window,
    propagate_activeness,
)

from oracles import (
    neighbor_lists,
    rand_graph,
    rand_snapshot,
    ref_activeness,
    ref_embed,
    rel_err,
)


def _rand_params(rng, num_nodes, attr_dim, dim, layers, with_activeness=True):
    p = SpatialParams.init(int(rng.integers(2 ** 31)), num_nodes, attr_dim,
                           dim, layers, with_activeness=with_activeness)
    return p


def _raw(params):
    return {
        "w_in": params.input_proj.data,
        "w_x": [w.data for w in params.embed_w],
        "w_p": [w.data for w in params.activeness_w] if params.activeness_w else None,
        "p0": params.activeness.data if params.activeness is not None else None,
    }


# -- oracle agreement ---------------------------------------------------------

def test_activeness_matches_scalar_oracle_many_instances():
    rng = np.random.default_rng(101)
    for _ in range(50):
        V = int(rng.integers(2, 8))
        d = int(rng.integers(2, 6))
        L = int(rng.integers(1, 4))
        snap = rand_snapshot(rng, 1, V, int(rng.integers(1, 5)))
        params = _rand_params(rng, V, snap.attr_dim, d, L)
        got = propagate_activeness(Tape(), snap, params)
        raw = _raw(params)
        want = ref_activeness(neighbor_lists(snap), raw["p0"], raw["w_p"], L)
        for l in range(L + 1):
            assert rel_err(got[l].data, want[l]) < 1e-10


def test_embeddings_match_scalar_oracle_many_instances():
    rng = np.random.default_rng(102)
    for _ in range(50):
        V = int(rng.integers(2, 8))
        d = int(rng.integers(2, 6))
        L = int(rng.integers(1, 4))
        da = int(rng.integers(1, 5))
        snap = rand_snapshot(rng, 1, V, da)
        params = _rand_params(rng, V, da, d, L)
        le = embed_snapshot(Tape(), snap, params)
        raw = _raw(params)
        acts = ref_activeness(neighbor_lists(snap), raw["p0"], raw["w_p"], L)
        want = ref_embed(neighbor_lists(snap), snap.attributes, raw["w_in"],
                         raw["w_x"], L, acts=acts)
        for l in range(L + 1):
            assert rel_err(le.embeddings[l].data, want[l]) < 1e-10


def test_ungated_embeddings_match_scalar_oracle():
    rng = np.random.default_rng(103)
    for _ in range(10):
        V = int(rng.integers(2, 7))
        snap = rand_snapshot(rng, 1, V, 3)
        params = _rand_params(rng, V, 3, 4, 2, with_activeness=False)
        le = embed_snapshot(Tape(), snap, params, use_activeness=False)
        raw = _raw(params)
        want = ref_embed(neighbor_lists(snap), snap.attributes, raw["w_in"],
                         raw["w_x"], 2, acts=None)
        for l in range(3):
            assert rel_err(le.embeddings[l].data, want[l]) < 1e-10


# -- worked examples ----------------------------------------------------------

def test_path_graph_activeness_example():
    # 3-node path, d=2, L=2: fixed tiny weights recomputed by hand via oracle
    snap = Snapshot(1, 3, [(0, 1), (1, 2)], np.eye(3, 2))
    w_p = [np.full((2, 4), 0.25), np.full((2, 4), -0.5)]
    p0 = np.array([[0.2, 0.4], [0.6, 0.8], [1.0, 1.2]])
    params = SpatialParams(Parameter("w_in", np.eye(2)),
                           [Parameter("e0", np.zeros((2, 4))), Parameter("e1", np.zeros((2, 4)))],
                           [Parameter("a0", w_p[0]), Parameter("a1", w_p[1])],
                           Parameter("p", p0))
    got = propagate_activeness(Tape(), snap, params)
    want = ref_activeness([[1], [0, 2], [1]], p0, w_p, 2)
    for l in range(3):
        assert rel_err(got[l].data, want[l]) < 1e-12
    assert np.all((got[1].data > 0) & (got[1].data < 1))


def test_identical_rows_on_cycle_stay_identical():
    # vertex-transitive graph + equal P rows -> equal activeness everywhere
    cycle = [(i, (i + 1) % 5) for i in range(5)]
    snap = Snapshot(1, 5, cycle, np.ones((5, 3)))
    params = _rand_params(np.random.default_rng(7), 5, 3, 4, 2)
    params.activeness.data[:] = params.activeness.data[0]
    ps = propagate_activeness(Tape(), snap, params)
    le = embed_snapshot(Tape(), snap, params)
    for l in range(3):
        assert np.allclose(ps[l].data, ps[l].data[0], atol=1e-12)
        assert np.allclose(le.embeddings[l].data, le.embeddings[l].data[0], atol=1e-12)


def test_isolated_node_sees_zero_neighborhood():
    snap = Snapshot(1, 3, [(0, 1)], np.array([[1.0, 0.0], [0.0, 1.0], [0.7, 0.3]]))
    params = _rand_params(np.random.default_rng(8), 3, 2, 3, 1)
    le = embed_snapshot(Tape(), snap, params)
    x0 = le.embeddings[0].data
    w = params.embed_w[0].data
    want = np.tanh(np.concatenate([np.zeros(3), x0[2]]) @ w.T)
    assert np.allclose(le.embeddings[1].data[2], want, atol=1e-12)


def test_twin_nodes_get_identical_embeddings():
    # two mutually connected nodes, same attributes, same activeness rows
    snap = Snapshot(1, 2, [(0, 1)], np.array([[0.5, -0.2], [0.5, -0.2]]))
    params = _rand_params(np.random.default_rng(9), 2, 2, 3, 2)
    params.activeness.data[1] = params.activeness.data[0]
    le = embed_snapshot(Tape(), snap, params)
    for l in range(3):
        assert np.allclose(le.embeddings[l].data[0], le.embeddings[l].data[1], atol=1e-12)


def test_layer_value_ranges():
    rng = np.random.default_rng(10)
    snap = rand_snapshot(rng, 1, 6, 3)
    params = _rand_params(rng, 6, 3, 4, 3)
    le = embed_snapshot(Tape(), snap, params)
    for l in range(1, 4):
        assert np.all(np.abs(le.embeddings[l].data) < 1.0)
        assert np.all((le.activeness[l].data > 0.0) & (le.activeness[l].data < 1.0))


# -- embed_window -------------------------------------------------------------

def test_window_arithmetic():
    rng = np.random.default_rng(11)
    g = rand_graph(rng, 5, 6, 2)
    params = _rand_params(rng, 5, 2, 3, 1)
    assert embed_window(Tape(), g, params, 1, 3).timestamps == [1]
    assert embed_window(Tape(), g, params, 5, 3).timestamps == [2, 3, 4, 5]
    assert embed_window(Tape(), g, params, 4, 0).timestamps == [4]
    with pytest.raises(ValueError):
        embed_window(Tape(), g, params, 7, 3)
    with pytest.raises(ValueError):
        embed_window(Tape(), g, params, 0, 3)


def test_static_graph_gives_identical_embeddings_across_window():
    rng = np.random.default_rng(12)
    snap_edges = [(0, 1), (1, 2), (2, 3)]
    attrs = rng.normal(size=(4, 3))
    g = DynamicGraph([Snapshot(t, 4, snap_edges, attrs) for t in range(1, 5)])
    params = _rand_params(rng, 4, 3, 3, 2)
    hist = embed_window(Tape(), g, params, 4, 3)
    base = [v.data for v in hist.per_snapshot[0].embeddings]
    for le in hist.per_snapshot[1:]:
        for l in range(3):
            assert np.array_equal(le.embeddings[l].data, base[l])


# -- invariants ---------------------------------------------------------------

def test_aggregation_linear_in_single_activeness_row():
    # halving one neighbor's gate moves xbar linearly toward the rest
    snap = Snapshot(1, 3, [(0, 2), (1, 2)], np.eye(3))
    rng = np.random.default_rng(13)
    x = rng.normal(size=(3, 2))
    p_full = np.ones((3, 2))

    def xbar_with(p0_row):
        p = p_full.copy()
        p[0] = p0_row
        t = Tape()
        gated = t.mul(Var(p), Var(x))
        out = t.neighbor_mean(gated, snap.arc_src, snap.arc_dst, snap.inv_deg)
        return out.data[2]

    full = xbar_with(np.ones(2))
    half = xbar_with(np.full(2, 0.5))
    zero = xbar_with(np.zeros(2))
    assert np.allclose(half, (full + zero) / 2, atol=1e-12)
    assert np.allclose(zero, x[1] / 2, atol=1e-12)  # mean keeps the 1/|N| weight


def test_permutation_equivariance():
    rng = np.random.default_rng(14)
    V, da, d, L = 6, 3, 4, 2
    snap = rand_snapshot(rng, 1, V, da)
    params = _rand_params(rng, V, da, d, L)
    le = embed_snapshot(Tape(), snap, params)

    perm = rng.permutation(V)
    inv = np.argsort(perm)
    snap_p = Snapshot(1, V, [(perm[u], perm[v]) for u, v in snap.edges],
                      snap.attributes[inv])
    params_p = SpatialParams(params.input_proj, params.embed_w, params.activeness_w,
                             Parameter("activeness", params.activeness.data[inv]))
    le_p = embed_snapshot(Tape(), snap_p, params_p)
    for l in range(L + 1):
        assert np.allclose(le_p.embeddings[l].data[perm], le.embeddings[l].data,
                           atol=1e-12)


def test_disabled_gate_equals_override_to_ones_bitwise():
    rng = np.random.default_rng(15)
    snap = rand_snapshot(rng, 1, 6, 3)
    params = _rand_params(rng, 6, 3, 4, 2)
    plain = embed_snapshot(Tape(), snap, params, use_activeness=False)
    t = Tape()
    ones = [t.const(np.ones((6, 4))) for _ in range(2)]
    forced = embed_snapshot(t, snap, params, activeness_override=ones)
    for l in range(3):
        # bit-identical, not merely close: x * 1.0 is exact in ieee754
        assert np.array_equal(plain.embeddings[l].data, forced.embeddings[l].data)


def test_propagate_requires_activeness_params():
    rng = np.random.default_rng(16)
    snap = rand_snapshot(rng, 1, 4, 2)
    params = _rand_params(rng, 4, 2, 3, 1, with_activeness=False)
    with pytest.raises(ValueError, match="activeness"):
        propagate_activeness(Tape(), snap, params)


def test_init_tensor_values_stable_across_ablation():
    # the kept tensors must not shift when activeness tensors are skipped
    a = SpatialParams.init(5, 10, 4, 6, 2, with_activeness=True)
    b = SpatialParams.init(5, 10, 4, 6, 2, with_activeness=False)
    assert np.array_equal(a.input_proj.data, b.input_proj.data)
    for wa, wb in zip(a.embed_w, b.embed_w):
        assert np.array_equal(wa.data, wb.data)
