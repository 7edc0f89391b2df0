"""Jacobians of layer features with respect to input features, Lipschitz
constants of the layer maps, and an empirical check of the sensitivity bound."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Sequence

import numpy as np

from ..core import RelationalStructure
from ..influence import ShiftOperator, aggregate_influence
from ..validation import check_features, check_random_state
from .autodiff import Tape
from .engine import ModelConfig, ModelParams, check_scheme_relations, forward, prepare, propagate

FD_STEP = 1e-5
# Lipschitz constants of the supported elementwise nonlinearities
_NONLIN_LIPSCHITZ = {"relu": 1.0, "tanh": 1.0, "identity": 1.0}


class UnsupportedScheme(ValueError):
    """The scheme is outside the family with known Lipschitz constants."""


def _norm1(J: np.ndarray) -> float:
    """Induced 1-norm: largest absolute column sum."""
    return float(np.abs(J).sum(axis=0).max()) if J.size else 0.0


def jacobian_fd(structure, shifts, params, config, X, tau: int, h: float = FD_STEP, ops=None) -> list[np.ndarray]:
    """Central-difference Jacobians ``J[t][sigma] = d h_sigma^(t) / d h_tau^(0)``
    for every layer, shaped ``(n, p_t, p_0)``."""
    X = check_features(X, structure.n_entities, config.widths[0])
    ops = ops or prepare(shifts, structure.n_entities)
    n, p0 = X.shape
    out = [np.zeros((n, w, p0)) for w in config.widths]
    for c in range(p0):
        Xp, Xm = X.copy(), X.copy()
        Xp[tau, c] += h
        Xm[tau, c] -= h
        up = forward(structure, shifts, params, config, Xp, ops)
        dn = forward(structure, shifts, params, config, Xm, ops)
        for t in range(len(out)):
            d = (up[t] - dn[t]) / (2 * h)
            if not np.all(np.isfinite(d)):
                raise FloatingPointError("non-finite finite-difference estimate")
            out[t][:, :, c] = d
    return out


def empirical_jacobian(structure, shifts, params, config, X, t: int, sigma: int, tau: int,
                       h: float = FD_STEP) -> float:
    """``||d h_sigma^(t) / d h_tau^(0)||_1`` by central finite differences."""
    if not 0 <= t <= config.layers:
        raise ValueError(f"t must lie in [0, {config.layers}]")
    return _norm1(jacobian_fd(structure, shifts, params, config, X, tau, h)[t][sigma])


def exact_jacobian(structure, shifts, params, config, X, t: int, sigma: int, tau: int) -> np.ndarray:
    """``d h_sigma^(t) / d h_tau^(0)`` by reverse-mode differentiation (ReLU
    taken with derivative 0 at 0)."""
    X = check_features(X, structure.n_entities, config.widths[0])
    ops = prepare(shifts, structure.n_entities)
    check_scheme_relations(config, ops, structure)
    rows = []
    for k in range(config.widths[t]):
        tape = Tape()
        H0 = Tape.param(X)
        P = {name: Tape.const(v) for name, v in params.values.items()}
        states = propagate(tape, ops, P, config, H0)
        seed = np.zeros_like(states[t].value)
        seed[sigma, k] = 1.0
        if t == 0:
            H0.grad = seed
        else:
            tape.backward(states[t], seed)
        rows.append(H0.grad[tau].copy() if H0.grad is not None else np.zeros(X.shape[1]))
    return np.array(rows)


def _max_row_sum(W: np.ndarray) -> float:
    # W is applied as H @ W, so d(out)/d(in) is W.T and its 1-norm is W's max row sum
    return float(np.abs(W).sum(axis=1).max()) if W.size else 0.0


def lipschitz_constants(params: ModelParams | None, config: ModelConfig, tight: bool = False):
    """Per-layer ``(alpha, beta)`` bounds on the update and message Jacobians.

    By default these are worst-case values over all weights bounded by
    ``weight_clip``; ``tight=True`` uses the actual weights in ``params``.
    """
    Cw = config.weight_clip
    Cf = _NONLIN_LIPSCHITZ[config.nonlinearity]
    Cg = _NONLIN_LIPSCHITZ[config.message_nonlinearity]
    out = []
    for l in range(config.layers):
        b = config.widths[l + 1]
        if config.scheme == "sgc":
            out.append((1.0, 1.0))
        elif config.scheme == "generic":
            q = config.message_width(l)
            if not tight:
                out.append((Cw * Cf * Cg * b, Cw * q))
                continue
            phi = params[f"{l}.phi"]
            blocks = [phi[i:i + q] for i in range(0, len(phi), q)]
            psis = [v for k, v in params.values.items() if k.startswith(f"{l}.psi.")]
            out.append((Cf * Cg * max(_max_row_sum(B) for B in blocks), max(_max_row_sum(W) for W in psis)))
        elif config.scheme == "rgcn":
            if not tight:
                out.append((Cf, Cw * b))
                continue
            mats = [v for k, v in params.values.items() if k == f"{l}.root" or k.startswith(f"{l}.rel.")]
            out.append((Cf, max(_max_row_sum(W) for W in mats)))
        else:
            raise UnsupportedScheme(f"no Lipschitz constants for scheme {config.scheme!r}; pass them explicitly")
    return out


@dataclass
class SensitivityReport:
    probes: int = 0
    max_ratio: float = 0.0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"probes": self.probes, "max_ratio": self.max_ratio, "violations": self.violations}


def _check_root_routing(structure: RelationalStructure, config: ModelConfig):
    if config.scheme == "rgcn" and not any(r.arity == 1 for r in structure.relations):
        raise UnsupportedScheme("rgcn constants assume the self term flows through an identity relation")


def verify_sensitivity(structure: RelationalStructure, shifts: Sequence[ShiftOperator], params: ModelParams,
                       config: ModelConfig, trials: int = 1, rng=None, constants=None,
                       tight: bool = False, rtol: float = 1e-6, atol: float = 1e-9) -> SensitivityReport:
    """Compare finite-difference Jacobian norms against ``prod(alpha*beta) * (B^t)[sigma, tau]``
    for every layer ``t >= 1`` and every pair of entities."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = check_random_state(rng)
    if constants is None:
        _check_root_routing(structure, config)
        constants = lipschitz_constants(params, config, tight)
    if len(constants) != config.layers:
        raise ValueError(f"need {config.layers} (alpha, beta) pairs")
    n = structure.n_entities
    B = aggregate_influence(shifts, n).dense("augmented")
    powers = [np.eye(n)]
    for _ in range(config.layers):
        powers.append(powers[-1] @ B)
    scales = [prod(a * b for a, b in constants[:t]) for t in range(config.layers + 1)]
    ops = prepare(shifts, n)
    report = SensitivityReport()
    for trial in range(trials):
        X = rng.standard_normal((n, config.widths[0]))
        for tau in range(n):
            J = jacobian_fd(structure, shifts, params, config, X, tau, ops=ops)
            for t in range(1, config.layers + 1):
                for sigma in range(n):
                    emp = _norm1(J[t][sigma])
                    bound = scales[t] * powers[t][sigma, tau]
                    report.probes += 1
                    if bound > 0:
                        report.max_ratio = max(report.max_ratio, emp / bound)
                    elif emp > atol:
                        report.max_ratio = np.inf
                    if emp > bound * (1 + rtol) + atol:
                        report.violations.append({"trial": trial, "t": t, "sigma": sigma, "tau": tau,
                                                  "jacobian": emp, "bound": float(bound)})
    return report
