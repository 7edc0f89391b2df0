import numpy as np
import pytest
from conftest import rng
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import generic_forward_loops, rgcn_forward_loops

from relmp.bench import cycle_graph, random_structure
from relmp.core import Graph, RelationalStructure
from relmp.lift import lift_clique, lift_none
from relmp.mpnn import (SCHEMES, ModelConfig, ModelParams, SchemeError, Tape, batch_operators, forward,
                        init_params, make_shifts, param_shapes, prepare, relation_signature)
from relmp.mpnn.engine import propagate, readout_logits


def randomize(params, r, scale=0.5):
    """Random values everywhere, biases and epsilons included, so no ReLU
    sits exactly on its kink."""
    return ModelParams({k: r.uniform(-scale, scale, v.shape) for k, v in params.values.items()})


def generic_config(layers, p0, widths=None, q=None, act="relu", msg="identity", clip=0.5):
    widths = widths or (p0,) + (3,) * layers
    q = q or tuple(2 for _ in range(layers))
    return ModelConfig("generic", layers, tuple(widths), tuple(q), act, msg, weight_clip=clip)


def test_config_validation():
    with pytest.raises(SchemeError):
        ModelConfig("transformer", 1, (1, 1))
    with pytest.raises(ValueError):
        ModelConfig("rgcn", 2, (1, 1))
    with pytest.raises(ValueError):
        ModelConfig("sgc", 1, (1, 2))
    with pytest.raises(ValueError):
        ModelConfig("rgcn", 1, (1, 1), nonlinearity="gelu")
    cfg = ModelConfig.build("rgcn", 3, 5, 16, classes=5)
    assert cfg.widths == (5, 16, 16, 16) and cfg.classes == 5


def test_sgc_sums_neighbours():
    s = lift_none(Graph.from_edges(3, [(0, 1), (1, 2)])).structure
    shifts = make_shifts(s)
    cfg = ModelConfig("sgc", 1, (1, 1))
    out = forward(s, shifts, ModelParams(), cfg, [[1.0], [2.0], [3.0]])
    np.testing.assert_array_equal(out[1][:, 0], [2, 4, 2])


def test_generic_identity_model_is_constant():
    s = RelationalStructure.build(4, []).with_identity()
    shifts = make_shifts(s)
    p = 3
    cfg = ModelConfig("generic", 3, (p,) * 4, (p,) * 3, "identity")
    params = ModelParams({})
    for l in range(3):
        params.values[f"{l}.psi.identity.0"] = np.eye(p)
        params.values[f"{l}.phi"] = np.eye(p)
        params.values[f"{l}.phi.b"] = np.zeros(p)
    X = rng(1).standard_normal((4, p))
    for H in forward(s, shifts, params, cfg, X):
        np.testing.assert_array_equal(H, X)


def _generic_relations(s, shifts):
    return [(x.relation_name, x.arity, [tuple(t) for t in x.tuples], list(x.weights)) for x in shifts]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 9), st.sampled_from(["relu", "tanh", "identity"]),
       st.sampled_from(["relu", "tanh", "identity"]), st.sampled_from(["indicator", "row-normalized"]))
def test_generic_forward_matches_loop_oracle(seed, act, msg, kind):
    r = rng(seed)
    s = random_structure(r, max_entities=7)
    shifts = make_shifts(s, kind)
    cfg = generic_config(2, 2, act=act, msg=msg)
    params = randomize(init_params(cfg, relation_signature(shifts), r), r)
    X = r.standard_normal((s.n_entities, 2))
    got = forward(s, shifts, params, cfg, X)
    exp = generic_forward_loops(s.n_entities, _generic_relations(s, shifts), params.values, 2,
                                cfg.widths, cfg.message_widths, act, msg, X)
    for a, b in zip(got, exp):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)


def test_rgcn_on_path_structure_matches_loop_oracle(path_structure):
    r = rng(5)
    shifts = make_shifts(path_structure, "row-normalized")
    cfg = ModelConfig.build("rgcn", 2, 2, 3)
    params = randomize(init_params(cfg, relation_signature(shifts), r), r)
    X = r.standard_normal((5, 2))
    neighbours = {}
    for x in shifts:
        if x.arity < 2:
            continue
        nb = {i: [] for i in range(5)}
        for t, w in zip(x.tuples, x.weights):
            nb[int(t[0])].append((int(t[1]), float(w)))
        neighbours[x.relation_name] = nb
    ident = [x for x in shifts if x.arity == 1][0]
    idw = np.zeros(5)
    idw[ident.tuples[:, 0]] = ident.weights
    exp = rgcn_forward_loops(5, neighbours, params.values, 2, X, identity_weight=idw)
    for a, b in zip(forward(path_structure, shifts, params, cfg, X), exp):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_rgcn_without_identity_uses_plain_root():
    s = lift_none(cycle_graph(4)).structure
    shifts = make_shifts(s)
    cfg = ModelConfig.build("rgcn", 1, 1, 1, nonlinearity="identity")
    params = ModelParams({"0.root": np.array([[2.0]]), "0.rel.upper": np.array([[1.0]]), "0.b": np.zeros(1)})
    out = forward(s, shifts, params, cfg, np.arange(4.0)[:, None])[1][:, 0]
    np.testing.assert_array_equal(out, 2 * np.arange(4) + np.array([1 + 3, 0 + 2, 1 + 3, 2 + 0]))


def test_cell_schemes_need_their_relations():
    s = lift_none(cycle_graph(4)).structure
    shifts = make_shifts(s)
    # lift_none carries "upper", which is a simplicial branch
    assert param_shapes(ModelConfig.build("sin", 1, 1, 2), relation_signature(shifts))
    with pytest.raises(SchemeError):
        param_shapes(ModelConfig.build("sin", 1, 1, 2), [("identity", 1)])
    cfg = ModelConfig.build("gcn", 1, 1, 2)
    only_id = RelationalStructure.build(2, []).with_identity()
    with pytest.raises(SchemeError):
        forward(only_id, make_shifts(only_id), init_params(cfg, [("identity", 1)]), cfg, np.ones((2, 1)))


def test_missing_witness_contributes_zero():
    """A null witness behaves like an extra entity whose features are zero."""
    from relmp.core import NULL_ENTITY, Relation
    s = lift_clique(Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)]), 1, null_unions=True).structure
    n = s.n_entities
    up = s.relation("upper")
    assert any(t[2] == NULL_ENTITY for t in up.tuples)
    padded_up = Relation.build("upper", 3, [t[:2] + ((n,) if t[2] == NULL_ENTITY else t[2:]) for t in up.tuples])
    padded = RelationalStructure.build(n + 1, [padded_up if r.name == "upper" else r for r in s.relations])
    cfg = ModelConfig.build("cin", 1, 2, 3)
    shifts, pshifts = make_shifts(s), make_shifts(padded)
    params = randomize(init_params(cfg, relation_signature(shifts), rng(0)), rng(1))
    X = rng(2).standard_normal((n, 2))
    a = forward(s, shifts, params, cfg, X)[1]
    b = forward(padded, pshifts, params, cfg, np.vstack([X, np.zeros((1, 2))]))[1][:n]
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_init_ranges():
    cfg = ModelConfig.build("cinpp", 2, 3, 4, weight_clip=0.25, classes=3)
    lifted = lift_clique(cycle_graph(5), 2)
    sig = relation_signature(make_shifts(lifted.structure))
    p = init_params(cfg, sig, rng(0))
    for k, v in p.values.items():
        assert v.shape == param_shapes(cfg, sig)[k]
        assert np.all(np.abs(v) <= 0.25)
        if k.rsplit(".", 1)[-1].startswith("b") or ".eps" in k:
            assert not v.any()
    assert np.array_equal(init_params(cfg, sig, rng(0)).values["0.mlp.U.0"], p.values["0.mlp.U.0"])


def test_batched_forward_equals_separate():
    r = rng(9)
    structs = [lift_clique(cycle_graph(n), 2).structure for n in (3, 4, 5)]
    shifts = [make_shifts(s, "row-normalized") for s in structs]
    cfg = ModelConfig.build("cinpp", 2, 1, 3)
    params = randomize(init_params(cfg, relation_signature(shifts[0]), r), r)
    Xs = [r.standard_normal((s.n_entities, 1)) for s in structs]
    ops = batch_operators([prepare(sh, s.n_entities) for s, sh in zip(structs, shifts)])
    joint = forward(None, (), params, cfg, np.vstack(Xs), ops)[-1]
    sep = np.vstack([forward(s, sh, params, cfg, X)[-1] for s, sh, X in zip(structs, shifts, Xs)])
    np.testing.assert_allclose(joint, sep, rtol=1e-12, atol=1e-12)


def _fd_grad(fn, values, key, idx, h=1e-6):
    old = values[key][idx]
    values[key][idx] = old + h
    up = fn()
    values[key][idx] = old - h
    dn = fn()
    values[key][idx] = old
    return (up - dn) / (2 * h)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_gradients_match_finite_differences(scheme):
    r = rng(SCHEMES.index(scheme))
    if scheme in ("sin", "cin", "cinpp"):
        s = lift_clique(cycle_graph(5), 2).structure
    else:
        s = random_structure(r, max_entities=6)
    shifts = make_shifts(s, "row-normalized")
    width = 3
    if scheme == "sgc":
        cfg = ModelConfig("sgc", 2, (width,) * 3, classes=3)
    elif scheme == "generic":
        cfg = ModelConfig("generic", 2, (width, 4, 4), (2, 2), "tanh", "relu", classes=3)
    else:
        cfg = ModelConfig.build(scheme, 2, width, 4, classes=3)
    params = randomize(init_params(cfg, relation_signature(shifts), r), r)
    ops = batch_operators([prepare(shifts, s.n_entities)] * 3)
    X = r.standard_normal((3 * s.n_entities, width))
    roots = np.array([0, s.n_entities + 1, 2 * s.n_entities])
    labels = np.array([0, 1, 2])
    values = params.values

    def loss(grad=False):
        tape = Tape()
        P = {k: (Tape.param if grad else Tape.const)(v) for k, v in values.items()}
        H = propagate(tape, ops, P, cfg, Tape.const(X))[-1]
        out = tape.cross_entropy(readout_logits(tape, P, H, roots), labels)
        if grad:
            tape.backward(out)
            return {k: v.grad for k, v in P.items()}
        return float(out.value)

    grads = loss(True)
    coords = [(k, tuple(int(i) for i in np.unravel_index(r.integers(v.size), v.shape)))
              for k, v in values.items() for _ in range(2)]
    picks = [coords[i] for i in r.choice(len(coords), size=min(20, len(coords)), replace=False)]
    for key, idx in picks:
        fd = _fd_grad(loss, values, key, idx)
        an = 0.0 if grads[key] is None else grads[key][idx]
        assert abs(an - fd) <= 1e-5 * max(abs(an), abs(fd)) + 1e-8, (key, idx, an, fd)
