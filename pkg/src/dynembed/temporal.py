"""Next-snapshot embedding prediction from a window of past embeddings.

Per layer, with the window's embeddings x_{t-K'}..x_t (K' >= 1 history
entries before the current snapshot):

    score_k  = sigmoid(x_{t-k}^T attn_w x_{t-1})      k = 1..K', per node
    alpha    = softmax over the K' scores
    summary  = tanh(sum_k alpha_k * x_{t-k})
    gate     = sigmoid([summary ; x_t] @ gate_w^T + gate_b)
    pred^l   = x_t + gate * (x_t - summary)

and the per-layer predictions merge into one vector by an affine mean:

    pred = (1/L) * sum_l (pred^l @ merge_w^T + merge_b)

The attention query is the most recent *historical* embedding x_{t-1};
the gate decides per dimension how far to extrapolate the current
embedding away from the window summary.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter, Tape, Var, glorot
from .seeding import child_rng


class TemporalParams:
    """Per-layer attention/gate parameters plus the shared layer-merge
    affine map. Attention and gate tensors are None in the no-temporal
    ablation; the merge map always exists."""

    def __init__(self, attn_w, gate_w, gate_b, merge_w, merge_b):
        self.attn_w = list(attn_w) if attn_w is not None else None
        self.gate_w = list(gate_w) if gate_w is not None else None
        self.gate_b = list(gate_b) if gate_b is not None else None
        self.merge_w = merge_w
        self.merge_b = merge_b

    @classmethod
    def init(cls, seed, dim, layers, with_temporal=True):
        def w(name, rows, cols):
            return Parameter(name, glorot(child_rng(seed, "init", name), rows, cols))

        attn_w = gate_w = gate_b = None
        if with_temporal:
            attn_w = [w(f"attn_w_{l}", dim, dim) for l in range(layers)]
            gate_w = [w(f"gate_w_{l}", dim, 2 * dim) for l in range(layers)]
            # negative bias keeps gates mostly closed at init, so an untrained
            # head stays near the current embedding instead of extrapolating noise
            gate_b = [Parameter(f"gate_b_{l}", np.full((1, dim), -2.0)) for l in range(layers)]
        merge_w = w("merge_w", dim, dim)
        merge_b = Parameter("merge_b", np.zeros((1, dim)))
        return cls(attn_w, gate_w, gate_b, merge_w, merge_b)

    def parameters(self):
        out = []
        if self.attn_w is not None:
            out += self.attn_w
        if self.gate_w is not None:
            out += self.gate_w
        if self.gate_b is not None:
            out += self.gate_b
        out += [self.merge_w, self.merge_b]
        return out


def summarize_history(tape: Tape, entries, query, attn_w):
    """Attention-pooled summary of per-node embedding history.

    `entries` lists the historical (num_nodes, dim) embeddings oldest
    first and `query` is the newest of them. Returns (summary, alpha)
    where alpha is (num_nodes, K') with columns in entry order.
    """
    entries = list(entries)
    if not entries:
        raise ValueError("empty history: need at least one past embedding")
    wq = tape.matmul(query, tape.transpose(attn_w))
    scores = [tape.sigmoid(tape.rowdot(e, wq)) for e in entries]
    alpha = tape.softmax_rows(scores[0] if len(scores) == 1 else tape.concat(*scores))
    acc = None
    for k, e in enumerate(entries):
        pick = np.zeros((len(entries), 1))
        pick[k, 0] = 1.0
        term = tape.mul(tape.matmul(alpha, tape.const(pick)), e)
        acc = term if acc is None else tape.add(acc, term)
    return tape.tanh(acc), alpha


def predict_layer(tape: Tape, current, summary, gate_w, gate_b):
    """Gated extrapolation of one layer's embedding to the next timestamp.

    Returns (prediction, gate); gate entries are strictly inside (0,1).
    """
    h = tape.concat(summary, current)
    gate = tape.sigmoid(tape.add(tape.matmul(h, tape.transpose(gate_w)), gate_b))
    pred = tape.add(current, tape.mul(gate, tape.sub(current, summary)))
    return pred, gate


def merge_layers(tape: Tape, per_layer, params: TemporalParams):
    """Affine mean of per-layer vectors: (1/L) sum_l (v_l @ merge_w^T + merge_b)."""
    per_layer = list(per_layer)
    wt = tape.transpose(params.merge_w)
    acc = None
    for v in per_layer:
        term = tape.add(tape.matmul(v, wt), params.merge_b)
        acc = term if acc is None else tape.add(acc, term)
    return tape.scale(acc, 1.0 / len(per_layer))


def predict_next(tape: Tape, history, params: TemporalParams):
    """Merged next-timestamp embedding prediction from an embedding window.

    The window must hold at least two snapshots (one history entry plus
    the current one); layers 1..L of the window feed the prediction.
    """
    if params.attn_w is None:
        raise ValueError("prediction with temporal modeling disabled: merge current embeddings instead")
    preds = []
    for l in range(1, history.layers + 1):
        series = history.layer_series(l)
        if len(series) < 2:
            raise ValueError("window too short: need one history entry before the current snapshot")
        summary, _ = summarize_history(tape, series[:-1], series[-2], params.attn_w[l - 1])
        pred, _ = predict_layer(tape, series[-1], summary,
                                params.gate_w[l - 1], params.gate_b[l - 1])
        preds.append(pred)
    return merge_layers(tape, preds, params)
