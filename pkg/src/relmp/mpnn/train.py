"""Minibatch training of root-readout classifiers with Adam."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ..core import RelationalStructure
from ..influence import ShiftOperator, indicator_shifts, normalize_rows
from ..validation import check_features, check_random_state
from .autodiff import Tape
from .engine import (ModelConfig, ModelParams, Operators, batch_operators, check_scheme_relations,
                     init_params, prepare, propagate, readout_logits, relation_signature)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class Sample:
    """One rooted example: a structure with its shifts and features."""

    structure: RelationalStructure
    shifts: tuple
    features: np.ndarray
    root: int
    label: int = -1


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 500
    batch_size: int = 64
    lr_patience: int = 10
    lr_factor: float = 0.5
    min_lr: float = 1e-5
    stop_patience: int = 50
    clip_weights: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class TrainResult:
    params: ModelParams
    history: list = field(default_factory=list)
    best_epoch: int = -1
    train_accuracy: float = float("nan")
    val_accuracy: float = float("nan")


class Adam:
    def __init__(self, params: dict, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.step_count = 0

    def step(self, params: dict, grads: dict):
        self.step_count += 1
        c1 = 1 - self.b1 ** self.step_count
        c2 = 1 - self.b2 ** self.step_count
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class _Prepared:
    """Samples with their sparse operators built once and shared where the
    underlying structure object is shared."""

    def __init__(self, samples: Sequence[Sample]):
        cache: dict = {}
        self.samples = list(samples)
        self.ops = []
        for s in self.samples:
            key = (id(s.structure), tuple(id(x) for x in s.shifts))
            if key not in cache:
                cache[key] = prepare(s.shifts, s.structure.n_entities)
            self.ops.append(cache[key])

    def batch(self, idx):
        ops: list[Operators] = [self.ops[i] for i in idx]
        offsets = np.cumsum([0] + [o.n for o in ops[:-1]])
        X = np.vstack([self.samples[i].features for i in idx])
        roots = np.array([self.samples[i].root for i in idx]) + offsets
        labels = np.array([self.samples[i].label for i in idx])
        return batch_operators(ops), X, roots, labels


def _logits_and_loss(ops, X, roots, labels, values: dict, config: ModelConfig, with_grad: bool):
    tape = Tape()
    make = Tape.param if with_grad else Tape.const
    P = {k: make(v) for k, v in values.items()}
    H = propagate(tape, ops, P, config, Tape.const(X))[-1]
    logits = readout_logits(tape, P, H, roots)
    loss = tape.cross_entropy(logits, labels) if labels is not None else None
    if with_grad:
        tape.backward(loss)
    return logits.value, loss, P


def predict_logits(params: ModelParams, config: ModelConfig, samples: Sequence[Sample],
                   batch_size: int = 256) -> np.ndarray:
    prep = _Prepared(samples)
    out = []
    for a in range(0, len(samples), batch_size):
        ops, X, roots, _ = prep.batch(range(a, min(a + batch_size, len(samples))))
        out.append(_logits_and_loss(ops, X, roots, None, params.values, config, False)[0])
    return np.vstack(out) if out else np.zeros((0, config.classes))


def _evaluate(prep: _Prepared, params: dict, config: ModelConfig, batch_size=256):
    n = len(prep.samples)
    correct, loss = 0, 0.0
    for a in range(0, n, batch_size):
        idx = range(a, min(a + batch_size, n))
        ops, X, roots, labels = prep.batch(idx)
        logits, l, _ = _logits_and_loss(ops, X, roots, labels, params, config, False)
        correct += int((logits.argmax(axis=1) == labels).sum())
        loss += float(l.value) * len(idx)
    return correct / max(n, 1), loss / max(n, 1)


def train(config: ModelConfig, samples: Sequence[Sample], train_config: TrainConfig | None = None,
          val_samples: Sequence[Sample] | None = None, params: ModelParams | None = None) -> TrainResult:
    """Minimise mean cross-entropy of the root readout.

    The learning rate is multiplied by ``lr_factor`` after ``lr_patience``
    epochs without a drop in validation loss (training loss when no
    validation set is given).  The returned parameters are those with the
    best validation accuracy.
    """
    tc = train_config or TrainConfig()
    if not config.classes:
        raise ValueError("training needs a model with classes > 0")
    if not samples:
        raise ValueError("no training samples")
    sig = relation_signature(samples[0].shifts)
    for s in samples:
        check_features(s.features, s.structure.n_entities, config.widths[0])
        if relation_signature(s.shifts) != sig:
            raise ValueError("all samples must share their relation signature")
        if not 0 <= s.label < config.classes:
            raise ValueError(f"label {s.label} outside [0, {config.classes})")
    rng = check_random_state(tc.seed)
    if params is None:
        params = init_params(config, sig, rng)
    values = params.copy().values
    prep = _Prepared(samples)
    check_scheme_relations(config, prep.ops[0], samples[0].structure)
    vprep = _Prepared(val_samples) if val_samples else None
    opt = Adam(values, tc.lr)

    result = TrainResult(ModelParams({k: v.copy() for k, v in values.items()}))
    best = (-1.0, np.inf)
    plateau_best, plateau_wait, stop_wait = np.inf, 0, 0
    for epoch in range(tc.epochs):
        order = rng.permutation(len(samples))
        total = 0.0
        for a in range(0, len(order), tc.batch_size):
            idx = order[a:a + tc.batch_size]
            ops, X, roots, labels = prep.batch(idx)
            _, loss, P = _logits_and_loss(ops, X, roots, labels, values, config, True)
            if not np.isfinite(loss.value):
                raise TrainingDiverged(f"loss became {loss.value} at epoch {epoch}, lr {opt.lr:g}")
            opt.step(values, {k: v.grad for k, v in P.items() if v.grad is not None})
            if tc.clip_weights:
                for v in values.values():
                    np.clip(v, -config.weight_clip, config.weight_clip, out=v)
            total += float(loss.value) * len(idx)
        train_loss = total / len(samples)
        if vprep is not None:
            val_acc, val_loss = _evaluate(vprep, values, config)
        else:
            val_acc, val_loss = _evaluate(prep, values, config)
        result.history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                               "val_accuracy": val_acc, "lr": opt.lr})
        if (val_acc, -val_loss) > (best[0], -best[1]):
            best = (val_acc, val_loss)
            result.params = ModelParams({k: v.copy() for k, v in values.items()})
            result.best_epoch = epoch
            stop_wait = 0
        else:
            stop_wait += 1
        if val_loss < plateau_best - 1e-8:
            plateau_best, plateau_wait = val_loss, 0
        else:
            plateau_wait += 1
            if plateau_wait > tc.lr_patience:
                opt.lr = max(opt.lr * tc.lr_factor, tc.min_lr)
                plateau_wait = 0
        if stop_wait >= tc.stop_patience or (val_acc == 1.0 and val_loss < 1e-3):
            break
    result.val_accuracy = best[0]
    result.train_accuracy = _evaluate(prep, result.params.values, config)[0]
    return result


def accuracy(params: ModelParams, config: ModelConfig, samples: Sequence[Sample]) -> float:
    if not samples:
        return float("nan")
    labels = np.array([s.label for s in samples])
    return float((predict_logits(params, config, samples).argmax(axis=1) == labels).mean())


def make_shifts(structure: RelationalStructure, kind: str = "indicator") -> tuple[ShiftOperator, ...]:
    shifts = indicator_shifts(structure)
    if kind == "row-normalized":
        shifts = [normalize_rows(s) for s in shifts]
    elif kind != "indicator":
        raise ValueError(f"unknown shift kind {kind!r}")
    return tuple(shifts)


class RelationalMPNNClassifier(BaseEstimator, ClassifierMixin):
    """Root-readout classifier over relational structures.

    ``X`` is a sequence of :class:`Sample` (labels inside samples are
    ignored in favour of ``y``).
    """

    def __init__(self, scheme="rgcn", layers=4, hidden=16, nonlinearity="relu", weight_clip=0.5,
                 lr=1e-3, epochs=500, batch_size=64, validation_fraction=0.1, seed=0):
        self.scheme = scheme
        self.layers = layers
        self.hidden = hidden
        self.nonlinearity = nonlinearity
        self.weight_clip = weight_clip
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.validation_fraction = validation_fraction
        self.seed = seed

    @staticmethod
    def _relabel(X, y):
        return [Sample(s.structure, s.shifts, s.features, s.root, int(c)) for s, c in zip(X, y)]

    def fit(self, X, y):
        X, y = list(X), np.asarray(y)
        if len(X) != len(y):
            raise ValueError("X and y differ in length")
        self.classes_, codes = np.unique(y, return_inverse=True)
        samples = self._relabel(X, codes)
        rng = check_random_state(self.seed)
        order = rng.permutation(len(samples))
        n_val = int(round(self.validation_fraction * len(samples)))
        val = [samples[i] for i in order[:n_val]]
        tr = [samples[i] for i in order[n_val:]]
        in_dim = samples[0].features.shape[1]
        self.config_ = ModelConfig.build(self.scheme, self.layers, in_dim, self.hidden,
                                         nonlinearity=self.nonlinearity, weight_clip=self.weight_clip,
                                         classes=max(len(self.classes_), 2))
        tc = TrainConfig(lr=self.lr, epochs=self.epochs, batch_size=self.batch_size, seed=self.seed)
        self.result_ = train(self.config_, tr, tc, val or None)
        self.params_ = self.result_.params
        return self

    def predict_proba(self, X):
        z = predict_logits(self.params_, self.config_, list(X))
        z = np.exp(z - z.max(axis=1, keepdims=True))
        p = z / z.sum(axis=1, keepdims=True)
        return p[:, :len(self.classes_)]

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]
