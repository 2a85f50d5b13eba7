"""Snapshot sequences of attributed graphs: disk format, edge queries, sampling.

A dynamic graph is an ordered list of snapshots over one fixed node set.
Node ids are dense 0-based integers; timestamps are 1-based. Snapshots are
immutable once constructed (backing arrays are marked read-only).

On-disk layout of a dataset directory:
    meta.json                {num_nodes, num_timestamps, attr_dim, directed, cumulative}
    t001.edges, t002.edges   one "u v" pair per line
    t001.attrs, ...          CSV, num_nodes rows x attr_dim floats; a missing
                             file reuses the previous timestamp's matrix
    t001.labels, ...         optional, "node,label" per line, every node once
"""

from __future__ import annotations

import json
import os

import numpy as np


class GraphFormatError(ValueError):
    """A dataset directory or edge/attribute payload violates the format."""


class Snapshot:
    """One timestamp: an edge set plus a node-attribute matrix.

    Aggregation treats every edge as symmetric (u is a neighbor of v and
    vice versa); the `directed` flag only changes degree accounting for
    the negative-sampling distribution and disables pair canonicalization.
    """

    def __init__(self, t: int, num_nodes: int, edges, attributes, directed: bool = False):
        self.t = int(t)
        self.num_nodes = int(num_nodes)
        self.directed = bool(directed)

        e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                       dtype=np.int64).reshape(-1, 2)
        if e.size:
            if e.min() < 0 or e.max() >= num_nodes:
                raise GraphFormatError(
                    f"snapshot t={t}: edge endpoint outside [0, {num_nodes})")
            if np.any(e[:, 0] == e[:, 1]):
                raise GraphFormatError(f"snapshot t={t}: self-loop edge")
            if not directed:
                e = np.sort(e, axis=1)
            e = np.unique(e, axis=0)
        self.edges = e

        a = np.array(attributes, dtype=np.float64, order="C")  # private copy
        if a.ndim != 2 or a.shape[0] != num_nodes:
            raise GraphFormatError(
                f"snapshot t={t}: attribute matrix shape {a.shape}, expected ({num_nodes}, d)")
        self.attributes = a

        # arc arrays drive neighborhood mean-aggregation: one u->v arc per
        # ordered neighbor pair, both directions regardless of `directed`
        if e.size:
            self.arc_src = np.concatenate([e[:, 0], e[:, 1]])
            self.arc_dst = np.concatenate([e[:, 1], e[:, 0]])
        else:
            self.arc_src = np.zeros(0, dtype=np.int64)
            self.arc_dst = np.zeros(0, dtype=np.int64)
        deg = np.bincount(self.arc_dst, minlength=num_nodes).astype(np.float64)
        self.inv_deg = np.where(deg > 0, 1.0 / np.maximum(deg, 1.0), 0.0)

        order = np.argsort(self.arc_dst, kind="stable")
        bounds = np.searchsorted(self.arc_dst[order], np.arange(num_nodes + 1))
        self._adj = [np.sort(self.arc_src[order[bounds[v]:bounds[v + 1]]])
                     for v in range(num_nodes)]

        for arr in (self.edges, self.attributes, self.arc_src, self.arc_dst, self.inv_deg):
            arr.flags.writeable = False

    def neighbors(self, v: int) -> np.ndarray:
        return self._adj[v]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def attr_dim(self) -> int:
        return self.attributes.shape[1]

    def __repr__(self):
        return f"Snapshot(t={self.t}, nodes={self.num_nodes}, edges={self.num_edges})"


class DynamicGraph:
    """Ordered snapshots sharing one node set, plus optional per-t labels."""

    def __init__(self, snapshots, labels=None, directed: bool = False):
        if not snapshots:
            raise GraphFormatError("a dynamic graph needs at least one snapshot")
        n0, d0 = snapshots[0].num_nodes, snapshots[0].attr_dim
        for i, s in enumerate(snapshots):
            if s.t != i + 1:
                raise GraphFormatError(f"snapshot timestamps must be 1..n, got t={s.t} at position {i}")
            if s.num_nodes != n0 or s.attr_dim != d0:
                raise GraphFormatError("all snapshots must share num_nodes and attr_dim")
        self._snapshots = list(snapshots)
        self.directed = bool(directed)
        self._labels = {}
        for t, arr in (labels or {}).items():
            la = np.array(arr, dtype=np.int64)
            if la.shape != (n0,):
                raise GraphFormatError(f"labels for t={t}: shape {la.shape}, expected ({n0},)")
            la.flags.writeable = False
            self._labels[int(t)] = la
        self._access_log = None

    # timestamp accessors; every read funnels through here so tests can
    # assert which snapshots a training run touched
    def _log(self, kind, t):
        if self._access_log is not None:
            self._access_log.append((kind, t))

    def start_access_log(self):
        self._access_log = []
        return self._access_log

    def stop_access_log(self):
        log, self._access_log = self._access_log, None
        return log

    def _check_t(self, t):
        if not 1 <= t <= self.num_timestamps:
            raise ValueError(f"timestamp {t} outside 1..{self.num_timestamps}")

    def snapshot(self, t: int) -> Snapshot:
        self._check_t(t)
        self._log("snapshot", t)
        return self._snapshots[t - 1]

    def edges_at(self, t: int) -> np.ndarray:
        self._check_t(t)
        self._log("edges", t)
        return self._snapshots[t - 1].edges

    def attrs_at(self, t: int) -> np.ndarray:
        self._check_t(t)
        self._log("attrs", t)
        return self._snapshots[t - 1].attributes

    def labels_at(self, t: int):
        self._check_t(t)
        self._log("labels", t)
        return self._labels.get(t)

    @property
    def num_nodes(self) -> int:
        return self._snapshots[0].num_nodes

    @property
    def attr_dim(self) -> int:
        return self._snapshots[0].attr_dim

    @property
    def num_timestamps(self) -> int:
        return len(self._snapshots)

    @property
    def label_timestamps(self):
        return sorted(self._labels)

    def __repr__(self):
        return (f"DynamicGraph(nodes={self.num_nodes}, timestamps={self.num_timestamps}, "
                f"attr_dim={self.attr_dim})")


def cumulative_edge_set(g: DynamicGraph, t: int) -> set:
    """Set of edge tuples across snapshots 1..t."""
    acc = set()
    for i in range(1, t + 1):
        acc.update(map(tuple, g.edges_at(i)))
    return acc


def new_edges(g: DynamicGraph, t: int) -> np.ndarray:
    """Edges present at t that never appeared at any earlier timestamp.

    Pairs come back canonically ordered (smaller id first for undirected
    graphs) and lexicographically sorted.
    """
    if not 2 <= t <= g.num_timestamps:
        raise ValueError(f"new_edges needs 2 <= t <= {g.num_timestamps}, got {t}")
    seen = cumulative_edge_set(g, t - 1)
    fresh = [e for e in map(tuple, g.edges_at(t)) if e not in seen]
    return np.array(sorted(fresh), dtype=np.int64).reshape(-1, 2)


class NoiseDistribution:
    """Node-sampling distribution with weights proportional to degree^{3/4}."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or np.any(w < 0):
            raise ValueError("weights must be a 1-D nonnegative vector")
        total = w.sum()
        if total <= 0:
            raise ValueError("noise distribution needs positive total weight")
        self.weights = w
        self._cum = np.cumsum(w)

    def probabilities(self) -> np.ndarray:
        return self.weights / self._cum[-1]

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        r = rng.random(size) * self._cum[-1]
        return np.searchsorted(self._cum, r, side="right")


def noise_distribution(g: DynamicGraph, t: int) -> NoiseDistribution:
    """Degree^{3/4} sampling weights over the cumulative graph up to t.

    Undirected graphs count total degree; directed graphs count out-degree
    (edges where the node is the source). Isolated nodes get weight zero.
    """
    g._check_t(t)
    union = cumulative_edge_set(g, t)
    if not union:
        raise ValueError(f"no edges up to t={t}; nothing to sample")
    deg = np.zeros(g.num_nodes, dtype=np.float64)
    for u, v in union:
        deg[u] += 1.0
        if not g.directed:
            deg[v] += 1.0
    return NoiseDistribution(deg ** 0.75)


# -- disk format ------------------------------------------------------------

_META_KEYS = ("num_nodes", "num_timestamps", "attr_dim", "directed", "cumulative")


def _edge_basename(t):
    return f"t{t:03d}.edges"


def _read_edges(path, num_nodes, directed):
    pairs = []
    seen = set()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected 'u v', got {line!r}")
            try:
                u, v = int(tokens[0]), int(tokens[1])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise GraphFormatError(
                    f"{path}:{lineno}: node id outside [0, {num_nodes}) in {line!r}")
            if u == v:
                raise GraphFormatError(f"{path}:{lineno}: self-loop {line!r}")
            key = (u, v) if directed else (min(u, v), max(u, v))
            if key in seen:
                raise GraphFormatError(f"{path}:{lineno}: duplicate edge {line!r}")
            seen.add(key)
            pairs.append(key)
    return pairs


def _read_attrs(path, num_nodes, attr_dim):
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != attr_dim:
                raise GraphFormatError(
                    f"{path}:{lineno}: {len(cells)} columns, expected attr_dim={attr_dim}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-numeric attribute value") from None
    if len(rows) != num_nodes:
        raise GraphFormatError(f"{path}: {len(rows)} rows, expected num_nodes={num_nodes}")
    a = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise GraphFormatError(f"{path}: non-finite attribute value")
    return a


def _read_labels(path, num_nodes):
    out = np.full(num_nodes, -1, dtype=np.int64)
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected 'node,label', got {line!r}")
            try:
                v, lab = int(cells[0]), int(cells[1])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer field in {line!r}") from None
            if not 0 <= v < num_nodes:
                raise GraphFormatError(f"{path}:{lineno}: node id outside [0, {num_nodes})")
            if out[v] != -1:
                raise GraphFormatError(f"{path}:{lineno}: node {v} labeled twice")
            out[v] = lab
    missing = int(np.sum(out == -1))
    if missing:
        raise GraphFormatError(f"{path}: {missing} nodes have no label line")
    return out


def load_dynamic_graph(path: str, cumulative=None) -> DynamicGraph:
    """Read a dataset directory. `cumulative=True` unions each snapshot's
    edges with all earlier ones; the default defers to meta.json."""
    meta_path = os.path.join(path, "meta.json")
    if not os.path.isfile(meta_path):
        raise GraphFormatError(f"{meta_path}: missing meta file")
    with open(meta_path) as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"{meta_path}: invalid JSON ({exc})") from None
    for key in _META_KEYS:
        if key not in meta:
            raise GraphFormatError(f"{meta_path}: missing key {key!r}")
    num_nodes = int(meta["num_nodes"])
    n = int(meta["num_timestamps"])
    attr_dim = int(meta["attr_dim"])
    directed = bool(meta["directed"])
    if num_nodes <= 0 or n <= 0 or attr_dim <= 0:
        raise GraphFormatError(f"{meta_path}: num_nodes/num_timestamps/attr_dim must be positive")
    if cumulative is None:
        cumulative = bool(meta["cumulative"])

    snapshots = []
    labels = {}
    attrs = None
    union = set()
    for t in range(1, n + 1):
        edge_path = os.path.join(path, _edge_basename(t))
        if not os.path.isfile(edge_path):
            raise GraphFormatError(f"{edge_path}: missing edge file")
        pairs = _read_edges(edge_path, num_nodes, directed)
        if cumulative:
            union.update(pairs)
            pairs = sorted(union)

        attr_path = os.path.join(path, f"t{t:03d}.attrs")
        if os.path.isfile(attr_path):
            attrs = _read_attrs(attr_path, num_nodes, attr_dim)
        elif attrs is None:
            raise GraphFormatError(f"{attr_path}: missing attribute file for the first timestamp")

        label_path = os.path.join(path, f"t{t:03d}.labels")
        if os.path.isfile(label_path):
            labels[t] = _read_labels(label_path, num_nodes)

        snapshots.append(Snapshot(t, num_nodes, pairs, attrs, directed=directed))
    return DynamicGraph(snapshots, labels=labels, directed=directed)


def save_dynamic_graph(g: DynamicGraph, path: str):
    """Write a dataset directory that loads back bit-exactly.

    Snapshots are materialized as stored, so the written meta always says
    cumulative=false even for graphs that were loaded with unioning.
    """
    os.makedirs(path, exist_ok=True)
    meta = {
        "attr_dim": g.attr_dim,
        "cumulative": False,
        "directed": g.directed,
        "num_nodes": g.num_nodes,
        "num_timestamps": g.num_timestamps,
    }
    with open(os.path.join(path, "meta.json"), "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    for t in range(1, g.num_timestamps + 1):
        snap = g._snapshots[t - 1]
        with open(os.path.join(path, _edge_basename(t)), "w") as fh:
            for u, v in snap.edges:
                fh.write(f"{u} {v}\n")
        with open(os.path.join(path, f"t{t:03d}.attrs"), "w") as fh:
            for row in snap.attributes:
                fh.write(",".join(repr(float(x)) for x in row))
                fh.write("\n")
        lab = g._labels.get(t)
        if lab is not None:
            with open(os.path.join(path, f"t{t:03d}.labels"), "w") as fh:
                for v in range(g.num_nodes):
                    fh.write(f"{v},{lab[v]}\n")
