"""Planted-community dynamic graph generator for benchmarks and tests.

Nodes live in communities laid out as contiguous index blocks (node v starts
in community v*C//V); the first ceil(hub_fraction * size) nodes of each block
are designated hubs and accumulate degree faster than the rest. Each snapshot extends the previous
edge set (snapshots are cumulative) by three mechanisms:

  intra pairs     random same-community pairs,
  triadic closure two neighbors of a hub become directly connected, so
                  multi-hop structure around hubs collapses over time,
  hub attachment  a random node wires to a hub of its community.

An optional fraction of non-hub nodes migrates to another community at a
per-node switch time: their label flips at t_mig, their new edges start
following the target community one snapshot before the flip, and across
the switch window they actively wire into the destination (a couple of
extra links per snapshot). Attributes lead the links: a mover's profile
starts cross-fading toward the target three snapshots before the switch
and completes one snapshot after it, so the drift is visible in a node's
recent history before the surrounding edge structure catches up. Switch
times spread evenly over the valid range, so every transition carries a
similar cohort of mid-migration nodes.

Attributes are a scaled community indicator pattern (dimension j belongs
to community j mod C) plus fresh Gaussian noise at every timestamp.
"""

from __future__ import annotations

import math

import numpy as np

from .graph import DynamicGraph, Snapshot
from .seeding import child_rng

INTRA_RATE = 0.15     # same-community pairs added per node per step
TRIADIC_RATE = 0.10   # hub-mediated closures per node per step
HUB_RATE = 0.05       # direct hub attachments per node per step
SPOKE_INTRA_RATE = 0.15  # extra random intra pairs in the first snapshot
INTEGRATION_PER_STEP = 2  # destination links per migrating node per switch-window step
INTEGRATION_BACK = 2  # how many snapshots before the switch integration starts
BLEND_STEPS = 4.0     # snapshots over which a mover's attributes cross-fade


def generate_synthetic(num_nodes, num_communities, num_snapshots, attr_dim,
                       hub_fraction=0.1, noise_sigma=1.0, migrate_fraction=0.0,
                       attr_scale=3.0, seed=0) -> DynamicGraph:
    """Build a seeded dynamic graph with planted communities and labels.

    Args:
        num_nodes: size of the shared node set.
        num_communities: number of planted groups (attr_dim >= this is
            recommended so every community gets a nonzero attribute pattern).
        num_snapshots: number of timestamps, 1-based on output.
        attr_dim: attribute dimension.
        hub_fraction: fraction of each community designated as hubs, in (0,1).
        noise_sigma: std of the per-timestamp Gaussian attribute noise.
        migrate_fraction: fraction of nodes that switch community once.
        attr_scale: magnitude of the community indicator pattern.
        seed: master seed; equal seeds give byte-identical datasets.
    """
    if min(num_nodes, num_communities, num_snapshots, attr_dim) <= 0:
        raise ValueError("num_nodes, num_communities, num_snapshots, attr_dim must be positive")
    if num_communities > num_nodes:
        raise ValueError("more communities than nodes")
    if not 0.0 < hub_fraction < 1.0:
        raise ValueError("hub_fraction must lie in (0, 1)")
    if not 0.0 <= migrate_fraction < 1.0:
        raise ValueError("migrate_fraction must lie in [0, 1)")
    if noise_sigma < 0 or attr_scale <= 0:
        raise ValueError("noise_sigma must be >= 0 and attr_scale > 0")

    V, C, n = num_nodes, num_communities, num_snapshots
    source = np.array([v * C // V for v in range(V)], dtype=np.int64)
    hubs_of = []
    is_hub = np.zeros(V, dtype=bool)
    for c in range(C):
        members = np.flatnonzero(source == c)
        k = max(1, math.ceil(hub_fraction * members.size))
        hubs_of.append(members[:k])
        is_hub[members[:k]] = True
    all_hubs = np.flatnonzero(is_hub)

    # migrations need timestamps {3..n}; spread switch times evenly so every
    # transition (training and held-out alike) sees a similar mover cohort
    target = source.copy()
    t_mig = np.full(V, n + 1, dtype=np.int64)   # n+1 = never
    rng = child_rng(seed, "gen", "migrate")
    n_mig = int(round(migrate_fraction * V))
    if n_mig > 0 and n >= 3 and C >= 2:
        candidates = np.flatnonzero(~is_hub)
        movers = rng.choice(candidates, size=min(n_mig, candidates.size), replace=False)
        times = np.array([3 + (i % (n - 2)) for i in range(movers.size)], dtype=np.int64)
        rng.shuffle(times)
        for v, tm in zip(movers, times):
            t_mig[v] = tm
            shift = int(rng.integers(1, C))
            target[v] = (source[v] + shift) % C

    def community_at(v, t):
        return int(target[v]) if t >= t_mig[v] else int(source[v])

    def wiring_community(v, t):
        # edges formed at t already lean toward the community of t+1
        return community_at(v, min(t + 1, n))

    edge_set = set()
    adj = [set() for _ in range(V)]

    def add_edge(u, v):
        if u == v:
            return False
        key = (min(u, v), max(u, v))
        if key in edge_set:
            return False
        edge_set.add(key)
        adj[u].add(v)
        adj[v].add(u)
        return True

    def groups_at(t):
        comms = np.array([wiring_community(v, t) for v in range(V)], dtype=np.int64)
        return comms, [np.flatnonzero(comms == c) for c in range(C)]

    rng1 = child_rng(seed, "gen", "edges", 1)
    comms, groups = groups_at(1)
    for v in range(V):
        if not is_hub[v]:
            h = hubs_of[comms[v]]
            add_edge(v, int(h[rng1.integers(h.size)]))
    _add_intra_pairs(rng1, groups, comms, int(round(SPOKE_INTRA_RATE * V)), add_edge)

    per_t_edges = [sorted(edge_set)]
    for t in range(2, n + 1):
        rng_t = child_rng(seed, "gen", "edges", t)
        comms, groups = groups_at(t)
        _add_intra_pairs(rng_t, groups, comms, int(round(INTRA_RATE * V)), add_edge)
        budget = int(round(TRIADIC_RATE * V))
        attempts = 0
        while budget > 0 and attempts < 20 * V:
            attempts += 1
            h = int(all_hubs[rng_t.integers(all_hubs.size)])
            nbrs = sorted(adj[h])
            if len(nbrs) < 2:
                continue
            pick = rng_t.choice(len(nbrs), size=2, replace=False)
            if add_edge(nbrs[pick[0]], nbrs[pick[1]]):
                budget -= 1
        budget = int(round(HUB_RATE * V))
        attempts = 0
        while budget > 0 and attempts < 20 * V:
            attempts += 1
            v = int(rng_t.integers(V))
            h = hubs_of[comms[v]]
            if add_edge(v, int(h[rng_t.integers(h.size)])):
                budget -= 1
        movers_now = np.flatnonzero((t_mig <= n) & (t >= t_mig - INTEGRATION_BACK)
                                    & (t <= t_mig + 1))
        for v in movers_now:
            dest = np.flatnonzero(comms == target[v])
            budget = INTEGRATION_PER_STEP
            attempts = 0
            while budget > 0 and attempts < 50:
                attempts += 1
                if add_edge(int(v), int(dest[rng_t.integers(dest.size)])):
                    budget -= 1
        per_t_edges.append(sorted(edge_set))

    patterns = np.zeros((C, attr_dim))
    for j in range(attr_dim):
        patterns[j % C, j] = attr_scale

    snapshots = []
    labels = {}
    for t in range(1, n + 1):
        w = np.clip((t - t_mig + 3) / BLEND_STEPS, 0.0, 1.0)   # target blend weight, leads the switch
        base = (1.0 - w)[:, None] * patterns[source] + w[:, None] * patterns[target]
        noise = child_rng(seed, "gen", "attrs", t).normal(0.0, noise_sigma, size=(V, attr_dim)) \
            if noise_sigma > 0 else 0.0
        snapshots.append(Snapshot(t, V, per_t_edges[t - 1], base + noise))
        labels[t] = np.array([community_at(v, t) for v in range(V)], dtype=np.int64)
    return DynamicGraph(snapshots, labels=labels)


def _add_intra_pairs(rng, groups, comms, count, add_edge):
    attempts = 0
    while count > 0 and attempts < 20 * len(comms):
        attempts += 1
        v = int(rng.integers(len(comms)))
        members = groups[comms[v]]
        if members.size < 2:
            continue
        w = int(members[rng.integers(members.size)])
        if add_edge(v, w):
            count -= 1
