"""Negative-sampling training over snapshot transitions, plus fine-tuning.

One optimization step: embed a window of snapshots ending at tau, predict
embeddings for tau+1, score a batch of positive edges from tau+1 against
degree^{3/4} noise nodes, and take an Adam step on the mean loss

    -log sigmoid(xhat_u . xhat_v) - sum_r log sigmoid(-xhat_{z_r} . xhat_v)

Training iterates tau = 2..n-2, so the final transition (n-1 -> n) is never
touched except through a fine-tune split that the caller passes in
explicitly; this is what the evaluation protocol holds out.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .autodiff import Parameter, Tape, Var
from .graph import new_edges, noise_distribution
from .seeding import child_rng
from .spatial import SpatialParams, embed_window
from .temporal import TemporalParams, merge_layers, predict_next

MODEL_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    dim: int = 100
    layers: int = 3
    lookback: int = 3
    negatives: int = 1
    batch_size: int = 50
    learning_rate: float = 1e-4
    epochs: int = 10
    seed: int = 0
    no_activeness: bool = False
    no_temporal: bool = False
    edge_scope: str = "all"

    def validate(self):
        for name in ("dim", "layers", "lookback", "negatives", "batch_size", "epochs"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ValueError(f"config {name} must be a positive integer, got {v!r}")
        if not self.learning_rate > 0:
            raise ValueError(f"config learning_rate must be > 0, got {self.learning_rate!r}")
        if not isinstance(self.seed, int):
            raise ValueError(f"config seed must be an integer, got {self.seed!r}")
        if self.edge_scope not in ("all", "new"):
            raise ValueError(f"config edge_scope must be 'all' or 'new', got {self.edge_scope!r}")
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc).validate()


class Model:
    """Spatial + temporal parameters with their training config and the
    per-epoch loss curve. Wall times are kept in memory only; checkpoints
    must hash identically across equally seeded runs."""

    def __init__(self, spatial, temporal, config, num_nodes, epoch_losses=None):
        self.spatial = spatial
        self.temporal = temporal
        self.config = config
        self.num_nodes = int(num_nodes)
        self.epoch_losses = list(epoch_losses) if epoch_losses else []
        self.epoch_wall_ms = []

    @classmethod
    def init(cls, num_nodes, attr_dim, config: TrainConfig) -> "Model":
        config.validate()
        spatial = SpatialParams.init(config.seed, num_nodes, attr_dim, config.dim,
                                     config.layers, with_activeness=not config.no_activeness)
        temporal = TemporalParams.init(config.seed, config.dim, config.layers,
                                       with_temporal=not config.no_temporal)
        return cls(spatial, temporal, config, num_nodes)

    @property
    def attr_dim(self) -> int:
        return self.spatial.input_proj.data.shape[1]

    def parameters(self):
        return self.spatial.parameters() + self.temporal.parameters()

    def copy(self) -> "Model":
        clones = {p.name: Parameter(p.name, p.data.copy()) for p in self.parameters()}
        m = Model(_wire_spatial(clones, self.config), _wire_temporal(clones, self.config),
                  replace(self.config), self.num_nodes, self.epoch_losses)
        return m

    def save(self, path):
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "num_nodes": self.num_nodes,
            "attr_dim": self.attr_dim,
            "config": self.config.to_dict(),
            "epoch_losses": [float(x) for x in self.epoch_losses],
            "dims": {p.name: list(p.data.shape) for p in self.parameters()},
            "tensors": {p.name: p.data.tolist() for p in self.parameters()},
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "Model":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
        config = TrainConfig.from_dict(doc["config"])
        params = {}
        for name, data in doc["tensors"].items():
            arr = np.array(data, dtype=np.float64).reshape(doc["dims"][name])
            params[name] = Parameter(name, arr)
        return cls(_wire_spatial(params, config), _wire_temporal(params, config),
                   config, doc["num_nodes"], doc.get("epoch_losses"))


def _wire_spatial(params, cfg) -> SpatialParams:
    embed_w = [params[f"embed_w_{l}"] for l in range(cfg.layers)]
    if cfg.no_activeness:
        return SpatialParams(params["input_proj"], embed_w)
    return SpatialParams(params["input_proj"], embed_w,
                         [params[f"activeness_w_{l}"] for l in range(cfg.layers)],
                         params["activeness"])


def _wire_temporal(params, cfg) -> TemporalParams:
    if cfg.no_temporal:
        return TemporalParams(None, None, None, params["merge_w"], params["merge_b"])
    return TemporalParams([params[f"attn_w_{l}"] for l in range(cfg.layers)],
                          [params[f"gate_w_{l}"] for l in range(cfg.layers)],
                          [params[f"gate_b_{l}"] for l in range(cfg.layers)],
                          params["merge_w"], params["merge_b"])


class Adam:
    """Bias-corrected Adam over a fixed parameter list."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def ns_loss(tape: Tape, pred: Var, positives, negatives=None) -> Var:
    """Mean negative-sampling loss of a positive edge batch.

    `positives` is (B, 2) node pairs; `negatives` is (B, R) noise nodes, R
    per positive (R = 0 drops the noise term). Each pair contributes one
    term; the noise nodes contrast against the pair's second endpoint.
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    if positives.shape[0] == 0:
        raise ValueError("empty positive batch")
    u = tape.rows(pred, positives[:, 0])
    v = tape.rows(pred, positives[:, 1])
    loss_rows = tape.scale(tape.logsigmoid(tape.rowdot(u, v)), -1.0)
    if negatives is not None:
        negatives = np.asarray(negatives, dtype=np.int64).reshape(positives.shape[0], -1)
        for r in range(negatives.shape[1]):
            z = tape.rows(pred, negatives[:, r])
            term = tape.logsigmoid(tape.scale(tape.rowdot(z, v), -1.0))
            loss_rows = tape.sub(loss_rows, term)
    return tape.mean_rows(loss_rows)


def softmax_loss_oracle(pred, edges) -> float:
    """Exact-softmax objective over an edge set; diagnostic only.

    Every edge contributes both orientations (a, b): the term is the
    negative log of exp(x_a . x_b) normalized over all partners z of the
    conditioning node b within the same edge set. Enumerates the full
    denominator, so keep the graph small.
    """
    x = pred.data if isinstance(pred, Var) else np.asarray(pred, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    nbrs = {}
    for uu, vv in edges:
        nbrs.setdefault(int(uu), set()).add(int(vv))
        nbrs.setdefault(int(vv), set()).add(int(uu))
    total = 0.0
    for uu, vv in edges:
        for a, b in ((int(uu), int(vv)), (int(vv), int(uu))):
            partners = sorted(nbrs[b])
            dots = x[partners] @ x[b]
            mx = dots.max()
            lse = mx + np.log(np.exp(dots - mx).sum())
            total += -(float(x[a] @ x[b]) - lse)
    return float(total)


def _predict_for(tape: Tape, model: Model, g, window_end: int) -> Var:
    """Predicted embeddings for window_end + 1. The no-temporal ablation
    skips the window entirely and affinely merges the current snapshot's
    layer embeddings."""
    cfg = model.config
    if cfg.no_temporal:
        hist = embed_window(tape, g, model.spatial, window_end, 0,
                            use_activeness=not cfg.no_activeness)
        current = [hist.per_snapshot[-1].embeddings[l] for l in range(1, cfg.layers + 1)]
        return merge_layers(tape, current, model.temporal)
    hist = embed_window(tape, g, model.spatial, window_end, cfg.lookback,
                        use_activeness=not cfg.no_activeness)
    return predict_next(tape, hist, model.temporal)


def predict_embeddings(model: Model, g, target_t: int) -> np.ndarray:
    """Predicted embeddings for timestamp target_t, computed from the
    window ending at target_t - 1. Never reads snapshot target_t."""
    if not 2 <= target_t <= g.num_timestamps + 1:
        raise ValueError(f"target timestamp {target_t} outside 2..{g.num_timestamps + 1}")
    tape = Tape()
    return _predict_for(tape, model, g, target_t - 1).data.copy()


def train(g, config: TrainConfig) -> Model:
    """Train a fresh model on transitions 2..n-2 -> 3..n-1.

    Scope 'all' uses every edge of the target snapshot as positives;
    'new' restricts to first-appearance edges. Equal seeds give
    byte-identical checkpoints.
    """
    config.validate()
    n = g.num_timestamps
    if n < 3:
        raise ValueError(f"training needs at least 3 snapshots, got {n}")
    taus = []
    pos_by_tau = {}
    noise_by_tau = {}
    for tau in range(2, n - 1):
        pos = g.edges_at(tau + 1) if config.edge_scope == "all" else new_edges(g, tau + 1)
        if pos.shape[0] == 0:
            continue
        taus.append(tau)
        pos_by_tau[tau] = pos
        noise_by_tau[tau] = noise_distribution(g, tau)
    if not taus:
        raise ValueError("zero trainable edges: need >= 4 snapshots with edges appearing "
                         "on some transition before the held-out final one")

    model = Model.init(g.num_nodes, g.attr_dim, config)
    adam = Adam(model.parameters(), config.learning_rate)
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        loss_sum = 0.0
        count = 0
        for tau in taus:
            pos = pos_by_tau[tau]
            order = child_rng(config.seed, "batch", epoch, tau).permutation(pos.shape[0])
            for b_idx, lo in enumerate(range(0, pos.shape[0], config.batch_size)):
                batch = pos[order[lo:lo + config.batch_size]]
                negs = noise_by_tau[tau].sample(
                    child_rng(config.seed, "neg", epoch, tau, b_idx),
                    (batch.shape[0], config.negatives))
                tape = Tape()
                loss = ns_loss(tape, _predict_for(tape, model, g, tau), batch, negs)
                adam.zero_grad()
                tape.backward()
                adam.step()
                loss_sum += loss.data[0, 0] * batch.shape[0]
                count += batch.shape[0]
        model.epoch_losses.append(float(loss_sum / count))
        model.epoch_wall_ms.append((time.perf_counter() - started) * 1000.0)
    return model


def fine_tune(model: Model, g, revealed, steps: int, seed: int = 0):
    """Continue training on the final transition with an explicit positive
    edge set (the revealed split of new final-snapshot edges).

    Returns (tuned_model, warnings). The input model is never mutated;
    optimizer state starts fresh at a tenth of the training step size
    (revealed sets are tiny, full-size steps overfit them); an empty
    revealed set is a warning, not an error, and returns an unchanged copy.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    tuned = model.copy()
    revealed = np.asarray(revealed, dtype=np.int64).reshape(-1, 2)
    if revealed.shape[0] == 0:
        return tuned, ["fine_tune: empty revealed edge set; model unchanged"]
    if steps == 0:
        return tuned, []
    cfg = tuned.config
    tau = g.num_timestamps - 1
    if tau < 1:
        raise ValueError("fine-tuning needs at least 2 snapshots")
    noise = noise_distribution(g, tau)
    adam = Adam(tuned.parameters(), cfg.learning_rate * 0.1)
    done = 0
    sweep = 0
    while done < steps:
        order = child_rng(seed, "finetune", sweep).permutation(revealed.shape[0])
        for lo in range(0, revealed.shape[0], cfg.batch_size):
            if done >= steps:
                break
            batch = revealed[order[lo:lo + cfg.batch_size]]
            negs = noise.sample(child_rng(seed, "finetune_neg", done),
                                (batch.shape[0], cfg.negatives))
            tape = Tape()
            loss = ns_loss(tape, _predict_for(tape, tuned, g, tau), batch, negs)
            adam.zero_grad()
            tape.backward()
            adam.step()
            done += 1
        sweep += 1
    return tuned, []
