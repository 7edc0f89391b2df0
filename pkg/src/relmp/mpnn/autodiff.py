"""A small reverse-mode differentiation tape over numpy arrays.

Only the operations the message-passing layers need are provided: dense
and sparse matrix products, sums, bias and scalar scaling, elementwise
nonlinearities, column concatenation, row gathering and a softmax
cross-entropy loss.
"""
from __future__ import annotations

import numpy as np


class Var:
    __slots__ = ("value", "grad", "needs_grad", "_back")

    def __init__(self, value, needs_grad=False):
        self.value = value
        self.grad = None
        self.needs_grad = needs_grad
        self._back = None

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=float, copy=True)
        else:
            self.grad += g


class Tape:
    """Records operations in order so that :meth:`backward` can replay them."""

    def __init__(self):
        self._nodes: list[Var] = []

    def _out(self, value, parents, back):
        v = Var(value, any(p.needs_grad for p in parents))
        if v.needs_grad:
            v._back = back
            self._nodes.append(v)
        return v

    @staticmethod
    def param(value) -> Var:
        return Var(np.asarray(value, dtype=float), needs_grad=True)

    @staticmethod
    def const(value) -> Var:
        return Var(np.asarray(value, dtype=float))

    def matmul(self, x: Var, w: Var) -> Var:
        def back(g):
            if x.needs_grad:
                x._accumulate(g @ w.value.T)
            if w.needs_grad:
                w._accumulate(x.value.T @ g)
        return self._out(x.value @ w.value, (x, w), back)

    def spmm(self, S, x: Var) -> Var:
        """Constant sparse (or dense) matrix times ``x``."""
        def back(g):
            x._accumulate(S.T @ g)
        out = S @ x.value
        return self._out(np.asarray(out), (x,), back)

    def add(self, *xs: Var) -> Var:
        def back(g):
            for x in xs:
                if x.needs_grad:
                    x._accumulate(g)
        return self._out(sum(x.value for x in xs), xs, back)

    def add_bias(self, x: Var, b: Var) -> Var:
        def back(g):
            if x.needs_grad:
                x._accumulate(g)
            if b.needs_grad:
                b._accumulate(g.sum(axis=0))
        return self._out(x.value + b.value, (x, b), back)

    def scaled_bias(self, counts: np.ndarray, b: Var) -> Var:
        """Rows ``counts[i] * b``, i.e. a bias summed once per incoming tuple."""
        def back(g):
            b._accumulate(counts @ g)
        return self._out(np.outer(counts, b.value), (b,), back)

    def scale(self, x: Var, s: Var) -> Var:
        """``x * s`` for a one-element ``s``."""
        def back(g):
            if x.needs_grad:
                x._accumulate(g * s.value)
            if s.needs_grad:
                s._accumulate(np.array([np.sum(g * x.value)]))
        return self._out(x.value * s.value, (x, s), back)

    def relu(self, x: Var) -> Var:
        mask = x.value > 0

        def back(g):
            x._accumulate(g * mask)
        return self._out(x.value * mask, (x,), back)

    def tanh(self, x: Var) -> Var:
        y = np.tanh(x.value)

        def back(g):
            x._accumulate(g * (1.0 - y * y))
        return self._out(y, (x,), back)

    def activation(self, x: Var, kind: str) -> Var:
        if kind == "relu":
            return self.relu(x)
        if kind == "tanh":
            return self.tanh(x)
        if kind == "identity":
            return x
        raise ValueError(f"unknown nonlinearity {kind!r}")

    def concat(self, xs: list[Var]) -> Var:
        sizes = np.cumsum([0] + [x.value.shape[1] for x in xs])

        def back(g):
            for x, a, b in zip(xs, sizes[:-1], sizes[1:]):
                if x.needs_grad:
                    x._accumulate(g[:, a:b])
        return self._out(np.concatenate([x.value for x in xs], axis=1), xs, back)

    def rows(self, x: Var, idx) -> Var:
        idx = np.asarray(idx)

        def back(g):
            full = np.zeros_like(x.value)
            np.add.at(full, idx, g)
            x._accumulate(full)
        return self._out(x.value[idx], (x,), back)

    def cross_entropy(self, logits: Var, labels) -> Var:
        """Mean softmax cross-entropy."""
        labels = np.asarray(labels)
        z = logits.value - logits.value.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        n = len(labels)
        loss = -logp[np.arange(n), labels].mean()

        def back(g):
            p = np.exp(logp)
            p[np.arange(n), labels] -= 1.0
            logits._accumulate(g * p / n)
        return self._out(np.array(loss), (logits,), back)

    def backward(self, out: Var, seed=None):
        """Accumulate gradients of ``sum(seed * out)`` (seed defaults to ones)."""
        out.grad = np.ones_like(out.value, dtype=float) if seed is None else np.array(seed, dtype=float)
        for v in reversed(self._nodes):
            if v.grad is not None and v._back is not None:
                v._back(v.grad)
