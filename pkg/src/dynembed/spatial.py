"""Per-snapshot node embeddings with activeness-gated neighborhood averaging.

Layer update, in row convention (one node per row):

    x^0      = attributes @ input_proj^T
    p^0      = activeness matrix (one trainable row per node)
    xbar^l_v = mean over u in N(v) of p^l_u * x^l_u     (zero row if N(v) empty)
    x^{l+1}  = tanh([xbar^l ; x^l] @ embed_w[l]^T)
    pbar^l_v = mean over u in N(v) of p^l_u
    p^{l+1}  = sigmoid([pbar^l ; p^l] @ activeness_w[l]^T)

The activeness vectors act as learned per-node gates in (0,1)^d that decide
how much of a node's embedding flows to its neighbors.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter, Tape, Var, glorot
from .seeding import child_rng


class SpatialParams:
    """Input projection, per-layer aggregation weights, and the activeness
    matrix. `activeness`/`activeness_w` are None when gating is disabled."""

    def __init__(self, input_proj, embed_w, activeness_w=None, activeness=None):
        self.input_proj = input_proj
        self.embed_w = list(embed_w)
        self.activeness_w = list(activeness_w) if activeness_w is not None else None
        self.activeness = activeness

    @property
    def layers(self) -> int:
        return len(self.embed_w)

    @property
    def dim(self) -> int:
        return self.input_proj.data.shape[0]

    @classmethod
    def init(cls, seed, num_nodes, attr_dim, dim, layers, with_activeness=True):
        # one child stream per tensor: ablations never shift the values of
        # the tensors they keep
        def w(name, rows, cols):
            return Parameter(name, glorot(child_rng(seed, "init", name), rows, cols))

        input_proj = w("input_proj", dim, attr_dim)
        embed_w = [w(f"embed_w_{l}", dim, 2 * dim) for l in range(layers)]
        activeness_w = activeness = None
        if with_activeness:
            activeness_w = [w(f"activeness_w_{l}", dim, 2 * dim) for l in range(layers)]
            # centered at 1 so layer-0 gating starts close to a plain mean
            # over neighbors and learns to down-weight from there; zero-mean
            # init would mute (and randomly sign-flip) all neighbor input
            activeness = Parameter(
                "activeness",
                child_rng(seed, "init", "activeness").normal(1.0, 0.1, size=(num_nodes, dim)))
        return cls(input_proj, embed_w, activeness_w, activeness)

    def parameters(self):
        out = [self.input_proj] + self.embed_w
        if self.activeness_w is not None:
            out += self.activeness_w
        if self.activeness is not None:
            out.append(self.activeness)
        return out


class LayerEmbeddings:
    """Embeddings x^0..x^L and (when gating is on) activeness p^0..p^L for
    one snapshot, each a (num_nodes, dim) tape value."""

    def __init__(self, t, embeddings, activeness=None):
        self.t = t
        self.embeddings = list(embeddings)
        self.activeness = list(activeness) if activeness is not None else None

    @property
    def layers(self) -> int:
        return len(self.embeddings) - 1


class EmbeddingHistory:
    """LayerEmbeddings over a contiguous timestamp window, oldest first."""

    def __init__(self, timestamps, per_snapshot):
        self.timestamps = list(timestamps)
        self.per_snapshot = list(per_snapshot)

    def layer_series(self, layer) -> list:
        return [le.embeddings[layer] for le in self.per_snapshot]

    @property
    def layers(self) -> int:
        return self.per_snapshot[0].layers


def propagate_activeness(tape: Tape, snap, params: SpatialParams, layers=None):
    """Activeness vectors p^0..p^L for one snapshot; p^0 is the trainable
    matrix itself and each later layer is a sigmoid-squashed update, so
    entries for l >= 1 lie strictly in (0,1)."""
    if params.activeness is None or params.activeness_w is None:
        raise ValueError("activeness propagation needs activeness parameters")
    L = params.layers if layers is None else layers
    ps = [params.activeness]
    for l in range(L):
        pbar = tape.neighbor_mean(ps[-1], snap.arc_src, snap.arc_dst, snap.inv_deg)
        h = tape.concat(pbar, ps[-1])
        ps.append(tape.sigmoid(tape.matmul(h, tape.transpose(params.activeness_w[l]))))
    return ps


def embed_snapshot(tape: Tape, snap, params: SpatialParams, layers=None,
                   use_activeness=True, activeness_override=None) -> LayerEmbeddings:
    """All layer embeddings for one snapshot.

    `use_activeness=False` aggregates plain embeddings (the no-gating
    ablation); `activeness_override` substitutes explicit per-layer gate
    values, which exists so tests can pin the gates to known constants.
    """
    L = params.layers if layers is None else layers
    if activeness_override is not None:
        ps = list(activeness_override)
    elif use_activeness:
        ps = propagate_activeness(tape, snap, params, L)
    else:
        ps = None

    x = tape.matmul(tape.const(snap.attributes), tape.transpose(params.input_proj))
    xs = [x]
    for l in range(L):
        gated = tape.mul(ps[l], xs[-1]) if ps is not None else xs[-1]
        xbar = tape.neighbor_mean(gated, snap.arc_src, snap.arc_dst, snap.inv_deg)
        h = tape.concat(xbar, xs[-1])
        xs.append(tape.tanh(tape.matmul(h, tape.transpose(params.embed_w[l]))))
    return LayerEmbeddings(snap.t, xs, ps)


def embed_window(tape: Tape, g, params: SpatialParams, t, lookback,
                 use_activeness=True) -> EmbeddingHistory:
    """Embed the snapshots max(1, t-lookback)..t, oldest first.

    The effective history length min(lookback, t-1) shrinks near the start
    of the sequence; t=1 yields a single-snapshot window.
    """
    if not 1 <= t <= g.num_timestamps:
        raise ValueError(f"timestamp {t} outside 1..{g.num_timestamps}")
    if lookback < 0:
        raise ValueError("lookback must be >= 0")
    start = max(1, t - lookback)
    stamps = list(range(start, t + 1))
    per = [embed_snapshot(tape, g.snapshot(ts), params, use_activeness=use_activeness)
           for ts in stamps]
    return EmbeddingHistory(stamps, per)
