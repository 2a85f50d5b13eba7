"""Minimal dense-matrix reverse-mode differentiation on a tape.

Everything is a 2-D float64 array. A forward pass records primitive
applications on a Tape; `backward` replays the records in exact reverse
order, accumulating vector-Jacobian products. Parameters are named leaves
whose gradient accumulators persist across tapes until explicitly zeroed.

Numerical conventions:
  * sigmoid / log-sigmoid use the sign-split stable forms, softmax
    subtracts the row max, so no primitive produces NaN/Inf for inputs
    with |value| <= 50;
  * every vjp returns a freshly allocated array, which makes in-place
    `+=` accumulation into shared consumers safe.
"""

from __future__ import annotations

import json
import math

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for a primitive."""


class TapeConsumedError(RuntimeError):
    """backward() was called twice on the same tape."""


def _as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D value, got shape {a.shape}")
    return a


class Var:
    """A node in the computation: a value plus a gradient slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        self.data = _as_matrix(data)
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Var(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Var):
    """Named trainable leaf with a persistent gradient accumulator."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting over size-1 axes."""
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    if out is g:
        out = g.copy()
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _logsigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = -np.log1p(np.exp(-x[pos]))
    out[~pos] = x[~pos] - np.log1p(np.exp(x[~pos]))
    return out


class Tape:
    """Ordered record of primitive applications for one forward pass."""

    def __init__(self):
        self._records = []  # (out Var, ((parent Var, vjp fn), ...))
        self._consumed = False

    # -- plumbing ---------------------------------------------------------

    def const(self, data) -> Var:
        return Var(data)

    def _record(self, out: Var, pulls) -> Var:
        live = tuple((p, vjp) for p, vjp in pulls if p.requires_grad)
        if live:
            out.requires_grad = True
            self._records.append((out, live))
        # ops on constants leave no record: nothing upstream wants a gradient
        return out

    def _check(self, cond, op, *shapes):
        if not cond:
            raise ShapeError(f"{op}: shapes {' and '.join(str(s) for s in shapes)} do not conform")

    # -- primitives -------------------------------------------------------

    def matmul(self, a: Var, b: Var) -> Var:
        self._check(a.shape[1] == b.shape[0], "matmul", a.shape, b.shape)
        out = Var(a.data @ b.data)
        return self._record(out, (
            (a, lambda g, bd=b.data: g @ bd.T),
            (b, lambda g, ad=a.data: ad.T @ g),
        ))

    def mul(self, a: Var, b: Var) -> Var:
        self._check(all(x == y or x == 1 or y == 1 for x, y in zip(a.shape, b.shape)),
                    "mul", a.shape, b.shape)
        out = Var(a.data * b.data)
        return self._record(out, (
            (a, lambda g, bd=b.data, s=a.shape: _unbroadcast(g * bd, s)),
            (b, lambda g, ad=a.data, s=b.shape: _unbroadcast(g * ad, s)),
        ))

    def add(self, a: Var, b: Var) -> Var:
        self._check(all(x == y or x == 1 or y == 1 for x, y in zip(a.shape, b.shape)),
                    "add", a.shape, b.shape)
        out = Var(a.data + b.data)
        return self._record(out, (
            (a, lambda g, s=a.shape: _unbroadcast(g, s)),
            (b, lambda g, s=b.shape: _unbroadcast(g, s)),
        ))

    def sub(self, a: Var, b: Var) -> Var:
        self._check(all(x == y or x == 1 or y == 1 for x, y in zip(a.shape, b.shape)),
                    "sub", a.shape, b.shape)
        out = Var(a.data - b.data)
        return self._record(out, (
            (a, lambda g, s=a.shape: _unbroadcast(g, s)),
            (b, lambda g, s=b.shape: _unbroadcast(-g, s)),
        ))

    def scale(self, a: Var, c: float) -> Var:
        out = Var(a.data * c)
        return self._record(out, ((a, lambda g, c=c: g * c),))

    def concat(self, *parts: Var) -> Var:
        n = parts[0].shape[0]
        self._check(all(p.shape[0] == n for p in parts), "concat", *(p.shape for p in parts))
        out = Var(np.concatenate([p.data for p in parts], axis=1))
        pulls = []
        off = 0
        for p in parts:
            w = p.shape[1]
            pulls.append((p, lambda g, o=off, w=w: g[:, o:o + w].copy()))
            off += w
        return self._record(out, pulls)

    def transpose(self, a: Var) -> Var:
        out = Var(a.data.T.copy())
        return self._record(out, ((a, lambda g: g.T.copy()),))

    def mean_rows(self, a: Var) -> Var:
        """Column-wise mean over the rows; zero vector for an empty input."""
        n, d = a.shape
        if n == 0:
            out = Var(np.zeros((1, d)))
            return self._record(out, ((a, lambda g, d=d: np.zeros((0, d))),))
        out = Var(a.data.mean(axis=0, keepdims=True))
        return self._record(out, ((a, lambda g, n=n: np.repeat(g / n, n, axis=0)),))

    def rows(self, a: Var, idx) -> Var:
        """Gather rows by index; the gradient scatter-adds back."""
        idx = np.asarray(idx, dtype=np.intp)
        out = Var(a.data[idx])

        def pull(g, idx=idx, shape=a.shape):
            z = np.zeros(shape)
            np.add.at(z, idx, g)
            return z

        return self._record(out, ((a, pull),))

    def neighbor_mean(self, a: Var, arc_src, arc_dst, inv_deg) -> Var:
        """Per-node mean over neighbor rows of `a`.

        Arcs (src, dst) enumerate every u -> v with u in N(v); inv_deg[v]
        is 1/|N(v)| (0 for isolated nodes, which yields the zero vector).
        """
        n, d = a.shape
        self._check(inv_deg.shape[0] == n, "neighbor_mean", a.shape, (inv_deg.shape[0],))
        fwd = np.zeros((n, d))
        np.add.at(fwd, arc_dst, a.data[arc_src])
        fwd *= inv_deg[:, None]
        out = Var(fwd)

        def pull(g, src=arc_src, dst=arc_dst, w=inv_deg, shape=a.shape):
            h = g * w[:, None]
            z = np.zeros(shape)
            np.add.at(z, src, h[dst])
            return z

        return self._record(out, ((a, pull),))

    def tanh(self, a: Var) -> Var:
        y = np.tanh(a.data)
        out = Var(y)
        return self._record(out, ((a, lambda g, y=y: g * (1.0 - y * y)),))

    def sigmoid(self, a: Var) -> Var:
        y = _sigmoid(a.data)
        out = Var(y)
        return self._record(out, ((a, lambda g, y=y: g * y * (1.0 - y)),))

    def logsigmoid(self, a: Var) -> Var:
        y = _sigmoid(a.data)
        out = Var(_logsigmoid(a.data))
        return self._record(out, ((a, lambda g, y=y: g * (1.0 - y)),))

    def softmax_rows(self, a: Var) -> Var:
        """Row-wise softmax with max-subtraction."""
        z = a.data - a.data.max(axis=1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=1, keepdims=True)
        out = Var(y)

        def pull(g, y=y):
            return y * (g - (g * y).sum(axis=1, keepdims=True))

        return self._record(out, ((a, pull),))

    def rowdot(self, a: Var, b: Var) -> Var:
        """Row-wise dot product -> column vector. For 1 x d inputs this is
        the plain vector dot with grads (b, a)."""
        self._check(a.shape == b.shape, "dot", a.shape, b.shape)
        out = Var((a.data * b.data).sum(axis=1, keepdims=True))
        return self._record(out, (
            (a, lambda g, bd=b.data: g * bd),
            (b, lambda g, ad=a.data: g * ad),
        ))

    def sum(self, a: Var) -> Var:
        out = Var([[a.data.sum()]])
        return self._record(out, ((a, lambda g, s=a.shape: np.full(s, g[0, 0])),))

    # -- reverse sweep ------------------------------------------------------

    def backward(self, seed_gradient=None):
        """Accumulate d(output)/d(parameter) into every reachable Parameter.

        The output is the last recorded value; `seed_gradient` defaults to
        ones of its shape. A tape can be swept only once.
        """
        if self._consumed:
            raise TapeConsumedError("tape already consumed by a previous backward()")
        if not self._records:
            raise TapeConsumedError("backward() on an empty tape")
        self._consumed = True
        out = self._records[-1][0]
        if seed_gradient is None:
            seed = np.ones(out.shape)
        else:
            seed = _as_matrix(seed_gradient)
            if seed.shape != out.shape:
                raise ShapeError(f"seed shape {seed.shape} != output shape {out.shape}")
        out.grad = seed.copy()
        for var, pulls in reversed(self._records):
            g = var.grad
            if g is None:
                continue
            for parent, vjp in pulls:
                contrib = vjp(g)
                if parent.grad is None:
                    parent.grad = contrib
                else:
                    parent.grad += contrib


def backward(tape: Tape, seed_gradient=None):
    tape.backward(seed_gradient)


def grad_check(build, params, epsilon=1e-5, max_entries=None, rng=None):
    """Max relative error between tape gradients and central differences.

    `build(tape)` must rebuild the same scalar expression from the current
    parameter values on every call. Error per entry is
    |analytic - fd| / max(1, |analytic|); the max over all checked entries
    is returned. `max_entries` caps the entries checked per parameter
    (random without replacement) to bound runtime on large models.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon {epsilon} outside [1e-7, 1e-3]")
    params = list(params)
    for p in params:
        p.zero_grad()
    tape = Tape()
    out = build(tape)
    if out.shape != (1, 1):
        raise ShapeError(f"grad_check needs a scalar output, got {out.shape}")
    tape.backward()
    analytic = {p.name: p.grad.copy() for p in params}

    def value():
        t = Tape()
        return build(t).data[0, 0]

    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        n = flat.shape[0]
        if max_entries is not None and n > max_entries:
            picker = rng if rng is not None else np.random.default_rng(0)
            entries = picker.choice(n, size=max_entries, replace=False)
        else:
            entries = range(n)
        ga = analytic[p.name].reshape(-1)
        for i in entries:
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = value()
            flat[i] = orig - epsilon
            f_minus = value()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * epsilon)
            err = abs(ga[i] - fd) / max(1.0, abs(ga[i]))
            if err > worst:
                worst = err
    return worst


# -- parameter checkpoint i/o -------------------------------------------------

CHECKPOINT_FORMAT_VERSION = 1


def params_to_dict(params) -> dict:
    """JSON-ready document for a list of Parameters (keys sorted on dump).

    Floats survive a dump/load cycle exactly: json emits repr(float),
    which round-trips 64-bit values.
    """
    tensors = {p.name: p.data.tolist() for p in params}
    dims = {p.name: list(p.data.shape) for p in params}
    return {"format_version": CHECKPOINT_FORMAT_VERSION, "dims": dims, "tensors": tensors}


def params_from_dict(doc: dict) -> dict:
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {doc.get('format_version')!r}")
    out = {}
    for name in sorted(doc["tensors"]):
        data = np.array(doc["tensors"][name], dtype=np.float64)
        data = data.reshape(doc["dims"][name])
        out[name] = Parameter(name, data)
    return out


def save_params(params, path):
    with open(path, "w") as fh:
        json.dump(params_to_dict(params), fh, sort_keys=True)


def load_params(path) -> dict:
    with open(path) as fh:
        return params_from_dict(json.load(fh))


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))
