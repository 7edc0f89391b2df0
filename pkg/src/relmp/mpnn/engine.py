"""Relational message passing: configuration, parameters and the forward pass."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ..core import RelationalStructure
from ..influence import ShiftOperator, shift_slot_matrix
from ..validation import check_features, check_random_state
from .autodiff import Tape, Var

SCHEMES = ("sgc", "gcn", "gin", "rgcn", "rgin", "sin", "cin", "cinpp", "generic")
NONLINEARITIES = ("relu", "tanh", "identity")

# relations read by the cell-complex schemes, in branch order
_BRANCHES = {
    "sin": ("boundary", "upper", "rewired"),
    "cin": ("boundary", "upper", "rewired"),
    "cinpp": ("boundary", "upper", "lower", "rewired"),
}
# branches whose message also reads the witness in slot 2
_WITNESS_BRANCHES = {"cin": ("upper",), "cinpp": ("upper", "lower")}


class SchemeError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of a message-passing model.

    ``widths`` lists the feature sizes ``p_0..p_L``.  ``message_widths`` is
    only read by the generic scheme and defaults to ``widths[1:]``.
    ``classes > 0`` adds a linear readout on a root entity.
    """

    scheme: str = "rgcn"
    layers: int = 4
    widths: tuple[int, ...] = ()
    message_widths: tuple[int, ...] | None = None
    nonlinearity: str = "relu"
    message_nonlinearity: str = "identity"
    epsilon_learnable: bool = True
    weight_clip: float = 0.5
    classes: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise SchemeError(f"unknown scheme {self.scheme!r}")
        for nl in (self.nonlinearity, self.message_nonlinearity):
            if nl not in NONLINEARITIES:
                raise ValueError(f"unknown nonlinearity {nl!r}")
        if len(self.widths) != self.layers + 1:
            raise ValueError(f"need {self.layers + 1} widths, got {len(self.widths)}")
        if min(self.widths, default=1) <= 0:
            raise ValueError("widths must be positive")
        if self.scheme == "sgc" and len(set(self.widths)) > 1:
            raise ValueError("sgc has no weights, so every width must equal the input width")
        if self.message_widths is not None and len(self.message_widths) != self.layers:
            raise ValueError(f"need {self.layers} message widths")
        if not self.weight_clip > 0:
            raise ValueError("weight_clip must be > 0")

    @classmethod
    def build(cls, scheme: str, layers: int, in_dim: int, hidden: int = 16, **kw) -> "ModelConfig":
        out = in_dim if scheme == "sgc" else hidden
        return cls(scheme=scheme, layers=layers, widths=(in_dim,) + (out,) * layers, **kw)

    def message_width(self, layer: int) -> int:
        if self.message_widths is None:
            return self.widths[layer + 1]
        return self.message_widths[layer]


@dataclass
class ModelParams:
    values: dict = field(default_factory=dict)

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.values.items()})

    def clip(self, bound: float) -> "ModelParams":
        return ModelParams({k: np.clip(v, -bound, bound) for k, v in self.values.items()})

    def __getitem__(self, key):
        return self.values[key]

    def __len__(self):
        return sum(v.size for v in self.values.values())


@dataclass(frozen=True, eq=False)
class Operators:
    """Sparse matrices derived from the shift operators of one structure (or a
    batch of structures).

    ``slots[name][j]`` has entry ``(head, tuple[j])`` summed over tuples;
    slot 0 is the diagonal of per-head weight totals.
    """

    n: int
    relations: tuple[tuple[str, int], ...]
    slots: dict

    def slot(self, name: str, j: int):
        return self.slots[name][j]

    def head_totals(self, name: str) -> np.ndarray:
        return self.slots[name][0].diagonal()

    def neighbors(self, name: str):
        return self.slots[name][1]

    @property
    def tail_relations(self) -> tuple[str, ...]:
        return tuple(r for r, a in self.relations if a >= 2)

    def has(self, name: str) -> bool:
        return name in self.slots

    def arity(self, name: str) -> int:
        return dict(self.relations)[name]


def prepare(shifts: Sequence[ShiftOperator], n: int) -> Operators:
    slots = {}
    for s in shifts:
        slots[s.relation_name] = [shift_slot_matrix(s, j, n) for j in range(s.arity)]
    return Operators(n, tuple((s.relation_name, s.arity) for s in shifts), slots)


def batch_operators(items: Sequence[Operators]) -> Operators:
    """Block-diagonal union of several prepared structures with the same relations."""
    first = items[0]
    for o in items[1:]:
        if o.relations != first.relations:
            raise SchemeError("batched structures must share their relation signature")
    if all(o is first for o in items):
        eye = sp.identity(len(items), format="csr")
        slots = {r: [sp.kron(eye, m, format="csr") for m in ms] for r, ms in first.slots.items()}
    else:
        slots = {r: [sp.block_diag([o.slots[r][j] for o in items], format="csr")
                     for j in range(len(ms))] for r, ms in first.slots.items()}
    return Operators(sum(o.n for o in items), first.relations, slots)


def _uniform(rng, shape, bound):
    return rng.uniform(-bound, bound, size=shape)


def _mlp_shapes(prefix, a, b):
    return {f"{prefix}.0": (a, b), f"{prefix}.b0": (b,), f"{prefix}.1": (b, b), f"{prefix}.b1": (b,)}


def scheme_branches(scheme: str, relation_names: Sequence[str]) -> tuple[str, ...]:
    names = set(relation_names)
    found = tuple(r for r in _BRANCHES[scheme] if r in names)
    if not found:
        raise SchemeError(f"scheme {scheme!r} needs one of the relations {_BRANCHES[scheme]}, "
                          f"structure has {tuple(relation_names)}")
    return found


def param_shapes(config: ModelConfig, relations: Sequence[tuple[str, int]]) -> dict:
    shapes: dict = {}
    tails = [r for r, a in relations if a >= 2]
    for l in range(config.layers):
        a, b = config.widths[l], config.widths[l + 1]
        s = config.scheme
        if s == "generic":
            q = config.message_width(l)
            for r, arity in relations:
                for j in range(arity):
                    shapes[f"{l}.psi.{r}.{j}"] = (a, q)
            shapes[f"{l}.phi"] = (q * len(relations), b)
            shapes[f"{l}.phi.b"] = (b,)
        elif s == "gcn":
            shapes[f"{l}.W"] = (a, b)
            shapes[f"{l}.b"] = (b,)
        elif s == "gin":
            shapes[f"{l}.W"] = (a, a)
            shapes[f"{l}.eps"] = (1,)
            shapes.update(_mlp_shapes(f"{l}.mlp", a, b))
        elif s == "rgcn":
            shapes[f"{l}.root"] = (a, b)
            for r in tails:
                shapes[f"{l}.rel.{r}"] = (a, b)
            shapes[f"{l}.b"] = (b,)
        elif s == "rgin":
            shapes[f"{l}.root"] = (a, b)
            for r in tails:
                shapes[f"{l}.eps.{r}"] = (1,)
                shapes.update(_mlp_shapes(f"{l}.mlp.{r}", a, b))
        elif s in _BRANCHES:
            branches = scheme_branches(s, [r for r, _ in relations])
            for r in branches:
                shapes[f"{l}.eps.{r}"] = (1,)
                shapes.update(_mlp_shapes(f"{l}.mlp.{r}", a, b))
                if r in _WITNESS_BRANCHES.get(s, ()):
                    shapes[f"{l}.msg.{r}.tau"] = (a, a)
                    shapes[f"{l}.msg.{r}.delta"] = (a, a)
                    shapes[f"{l}.msg.{r}.b"] = (a,)
            shapes.update(_mlp_shapes(f"{l}.mlp.U", b * len(branches), b))
    if config.classes:
        shapes["out.W"] = (config.widths[-1], config.classes)
        shapes["out.b"] = (config.classes,)
    return shapes


def init_params(config: ModelConfig, relations: Sequence[tuple[str, int]], rng=None) -> ModelParams:
    """Weights uniform in ``[-C_w, C_w]``; biases and epsilons start at zero."""
    rng = check_random_state(rng)
    values = {}
    for name, shape in param_shapes(config, relations).items():
        last = name.rsplit(".", 1)[-1]
        if last.startswith("b") or ".eps" in name:
            values[name] = np.zeros(shape)
        else:
            values[name] = _uniform(rng, shape, config.weight_clip)
    return ModelParams(values)


def relation_signature(shifts: Sequence[ShiftOperator]) -> tuple[tuple[str, int], ...]:
    return tuple((s.relation_name, s.arity) for s in shifts)


class _Layers:
    """Builds one forward pass on a tape."""

    def __init__(self, tape: Tape, ops: Operators, P: dict, config: ModelConfig):
        self.t, self.ops, self.P, self.cfg = tape, ops, P, config
        self.act = config.nonlinearity

    def linear(self, x, w, b=None):
        y = self.t.matmul(x, self.P[w])
        return self.t.add_bias(y, self.P[b]) if b else y

    def mlp(self, x, prefix):
        h = self.t.activation(self.linear(x, f"{prefix}.0", f"{prefix}.b0"), self.act)
        return self.t.activation(self.linear(h, f"{prefix}.1", f"{prefix}.b1"), self.act)

    def self_plus(self, H, eps_name, summed):
        """``(1 + eps) H + summed``; eps is frozen at its value unless learnable."""
        eps = self.P[eps_name]
        if not self.cfg.epsilon_learnable:
            eps = Tape.const(eps.value)
        one_plus = self.t.add(Tape.const(np.ones(1)), eps)
        return self.t.add(self.t.scale(H, one_plus), summed)

    def root(self, H, l):
        """Self term of the relational schemes, routed through an identity
        relation when the structure has one."""
        y = self.linear(H, f"{l}.root")
        for r, arity in self.ops.relations:
            if arity == 1:
                return self.t.spmm(self.ops.slot(r, 0), y)
        return y

    def layer(self, H: Var, l: int) -> Var:
        t, ops, s = self.t, self.ops, self.cfg.scheme
        if s == "generic":
            msgs = []
            for r, arity in ops.relations:
                parts = [t.spmm(ops.slot(r, j), self.linear(H, f"{l}.psi.{r}.{j}")) for j in range(arity)]
                m = parts[0] if len(parts) == 1 else t.add(*parts)
                msgs.append(t.activation(m, self.cfg.message_nonlinearity))
            M = msgs[0] if len(msgs) == 1 else t.concat(msgs)
            return t.activation(self.linear(M, f"{l}.phi", f"{l}.phi.b"), self.act)
        tails = ops.tail_relations
        if s == "sgc":
            parts = [t.spmm(ops.neighbors(r), H) for r in tails]
            return t.add(*parts) if parts else t.spmm(sp.csr_matrix((ops.n, ops.n)), H)
        if s == "gcn":
            parts = [t.spmm(_gcn_matrix(ops.neighbors(r)), H) for r in tails]
            agg = t.add(*parts) if len(parts) > 1 else parts[0]
            return t.activation(self.linear(agg, f"{l}.W", f"{l}.b"), self.act)
        if s == "gin":
            HW = self.linear(H, f"{l}.W")
            summed = t.add(*[t.spmm(ops.neighbors(r), HW) for r in tails])
            return self.mlp(self.self_plus(H, f"{l}.eps", summed), f"{l}.mlp")
        if s == "rgcn":
            parts = [self.root(H, l)]
            parts += [t.spmm(ops.neighbors(r), self.linear(H, f"{l}.rel.{r}")) for r in tails]
            return t.activation(t.add_bias(t.add(*parts), self.P[f"{l}.b"]), self.act)
        if s == "rgin":
            parts = [self.root(H, l)]
            for r in tails:
                x = self.self_plus(H, f"{l}.eps.{r}", t.spmm(ops.neighbors(r), H))
                parts.append(self.mlp(x, f"{l}.mlp.{r}"))
            return t.add(*parts)
        branches = scheme_branches(s, [r for r, _ in ops.relations])
        outs = []
        for r in branches:
            if r in _WITNESS_BRANCHES.get(s, ()):
                summed = self.witness_messages(H, l, r)
            else:
                summed = t.spmm(ops.neighbors(r), H)
            outs.append(self.mlp(self.self_plus(H, f"{l}.eps.{r}", summed), f"{l}.mlp.{r}"))
        return self.mlp(outs[0] if len(outs) == 1 else t.concat(outs), f"{l}.mlp.U")

    def witness_messages(self, H, l, r):
        """Sum over tuples (σ, τ, δ) of an affine map of [h_τ; h_δ]; a missing
        witness contributes a zero feature."""
        t, ops = self.t, self.ops
        parts = [t.spmm(ops.slot(r, 1), self.linear(H, f"{l}.msg.{r}.tau"))]
        if ops.arity(r) >= 3:
            parts.append(t.spmm(ops.slot(r, 2), self.linear(H, f"{l}.msg.{r}.delta")))
        parts.append(t.scaled_bias(ops.head_totals(r), self.P[f"{l}.msg.{r}.b"]))
        return t.add(*parts)


def _gcn_matrix(S) -> sp.csr_matrix:
    A = (S != 0).astype(float)
    A = A + sp.identity(A.shape[0], format="csr")
    d = np.asarray(A.sum(axis=1)).ravel()
    inv = sp.diags(1.0 / np.sqrt(d))
    return sp.csr_matrix(inv @ A @ inv)


def check_scheme_relations(config: ModelConfig, ops: Operators, structure=None):
    if structure is not None:
        for r, _ in ops.relations:
            if not structure.has_relation(r):
                raise SchemeError(f"shift operator for unknown relation {r!r}")
    if config.scheme in ("gcn", "gin") and not ops.tail_relations:
        raise SchemeError(f"scheme {config.scheme!r} needs at least one relation of arity >= 2")


def propagate(tape: Tape, ops: Operators, P: dict, config: ModelConfig, H0: Var) -> list[Var]:
    builder = _Layers(tape, ops, P, config)
    states = [H0]
    for l in range(config.layers):
        states.append(builder.layer(states[-1], l))
    return states


def forward(structure: RelationalStructure | None, shifts: Sequence[ShiftOperator], params: ModelParams,
            config: ModelConfig, X, ops: Operators | None = None) -> list[np.ndarray]:
    """Feature matrices of every layer, input included."""
    n = structure.n_entities if structure is not None else ops.n
    X = check_features(X, n, config.widths[0])
    ops = ops or prepare(shifts, n)
    check_scheme_relations(config, ops, structure)
    tape = Tape()
    P = {k: Tape.const(v) for k, v in params.values.items()}
    states = propagate(tape, ops, P, config, Tape.const(X))
    out = [s.value for s in states]
    if not all(np.all(np.isfinite(h)) for h in out):
        raise FloatingPointError("forward pass produced non-finite features")
    return out


def readout_logits(tape: Tape, P: dict, H: Var, roots) -> Var:
    return tape.add_bias(tape.matmul(tape.rows(H, roots), P["out.W"]), P["out.b"])
