from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference, max_rel_err

from ecgovo.hrv_features import FeatureMatrix, Normalizer, synthetic_feature_matrix
from ecgovo.neural import (
    KINDS,
    ModelFormatError,
    Mlp,
    NetworkError,
    ScgParams,
    Topology,
    TrainingError,
    dumps_model,
    fit_network,
    forward,
    init_network,
    load_model,
    loss_and_gradient,
    model_from_dict,
    model_to_dict,
    predict,
    predict_classes,
    save_model,
    scg,
    split_70_30,
)


def one_hot(labels, k):
    T = np.zeros((len(labels), k))
    T[np.arange(len(labels)), labels] = 1
    return T


def random_problem(kind, hidden, seed, n=6, d=4, k=3):
    rng = np.random.default_rng(seed)
    topo = Topology(kind, d, hidden, k)
    net = init_network(topo, seed)
    # biases start at zero; randomize them so their gradient path is exercised
    net = replace(net, params=net.params + rng.normal(0, 0.3, topo.n_weights))
    X = rng.normal(size=(n, d))
    T = one_hot(rng.integers(0, k, n), k)
    return net, X, T


def two_class_blobs():
    m = synthetic_feature_matrix(500, seed=21)
    return m.subset((m.labels == 0) | (m.labels == 1))


def as_trained(net, classes=(0, 1)):
    d = net.topology.input_dim
    return replace(net, normalizer=Normalizer(np.zeros(d), np.ones(d)), classes=classes)


# ---------------------------------------------------------------- init


def test_init_determinism_and_bounds():
    topo = Topology("feedforward", 16, (7,), 2)
    a, b = init_network(topo, 3), init_network(topo, 3)
    assert a.params.tobytes() == b.params.tobytes()
    assert not np.array_equal(a.params, init_network(topo, 4).params)
    W, bias = a.layers()[0]
    assert np.all(np.abs(W) <= 0.25)
    assert not bias.any()
    assert not a.layers()[1][1].any()


def test_topology_validation():
    with pytest.raises(NetworkError):
        Topology("recurrent")
    with pytest.raises(NetworkError):
        Topology("fit", 15, (0,), 2)
    t = Topology("cascade", 15, (7, 4), 2)
    assert t.layer_shapes == [(7, 15), (4, 22), (2, 26)]
    assert t.n_weights == 7 * 15 + 7 + 4 * 22 + 4 + 2 * 26 + 2


def test_params_immutable():
    net = init_network(Topology(), 0)
    with pytest.raises(ValueError):
        net.params[0] = 1.0


# ---------------------------------------------------------------- forward


def test_forward_zero_weights():
    topo = Topology("pattern", 15, (7,), 2)
    net = Mlp(topo, np.zeros(topo.n_weights))
    assert forward(net, np.ones(15)).tolist() == [0.5, 0.5]
    fit = Topology("fit", 15, (7,), 2)
    assert not forward(Mlp(fit, np.zeros(fit.n_weights)), np.ones(15)).any()


def test_cascade_skip_pass_through():
    topo = Topology("cascade", 2, (3,), 2)
    W1 = np.zeros((3, 2))
    b1 = np.zeros(3)
    Wo = np.hstack([np.eye(2), np.zeros((2, 3))])
    bo = np.zeros(2)
    net = Mlp(topo, np.concatenate([W1.ravel(), b1, Wo.ravel(), bo]))
    x = np.array([0.3, -1.7])
    assert forward(net, x).tolist() == x.tolist()


def test_cascade_matches_hand_algebra():
    rng = np.random.default_rng(0)
    topo = Topology("cascade", 3, (2, 2), 1)
    W1, b1 = rng.normal(size=(2, 3)), rng.normal(size=2)
    W2, b2 = rng.normal(size=(2, 5)), rng.normal(size=2)
    W3, b3 = rng.normal(size=(1, 7)), rng.normal(size=1)
    flat = np.concatenate([W1.ravel(), b1, W2.ravel(), b2, W3.ravel(), b3])
    x = rng.normal(size=3)
    h1 = np.tanh(W1 @ x + b1)
    h2 = np.tanh(W2 @ np.concatenate([x, h1]) + b2)
    y = W3 @ np.concatenate([x, h1, h2]) + b3
    assert np.allclose(forward(Mlp(topo, flat), x), y, rtol=1e-14, atol=1e-14)


def test_forward_dimension_mismatch():
    with pytest.raises(NetworkError):
        forward(init_network(Topology(), 0), np.zeros(14))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 30))
def test_softmax_outputs(seed, scale):
    rng = np.random.default_rng(seed)
    topo = Topology("pattern", 4, (5,), 3)
    net = Mlp(topo, rng.normal(0, scale, topo.n_weights))
    y = forward(net, rng.normal(size=(8, 4)))
    assert np.all(np.abs(y.sum(axis=1) - 1) <= 1e-12)
    assert np.all((y >= 0) & (y <= 1))


# ---------------------------------------------------------------- loss / gradient


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("hidden", [(), (5,), (4, 3)])
def test_gradient_matches_finite_difference(kind, hidden):
    for seed in range(3):
        net, X, T = random_problem(kind, hidden, seed)
        _, g = loss_and_gradient(net, X, T)

        def f(w):
            return loss_and_gradient(replace(net, params=np.asarray(w)), X, T)[0]

        fd = central_difference(f, net.params.tolist(), h=1e-6)
        assert max_rel_err(g.tolist(), fd, floor=1e-8) < 1e-4


def test_perfect_predictions():
    T = one_hot(np.array([0, 1, 1, 0, 1]), 2)
    fit = Topology("fit", 2, (), 2)
    net = Mlp(fit, np.concatenate([np.eye(2).ravel(), np.zeros(2)]))
    assert loss_and_gradient(net, T, T)[0] == 0.0
    pat = Topology("pattern", 2, (), 2)
    net = Mlp(pat, np.concatenate([(40 * np.eye(2)).ravel(), np.zeros(2)]))
    assert loss_and_gradient(net, T, T)[0] <= 1e-6


@pytest.mark.parametrize("kind", KINDS)
def test_row_duplication(kind):
    net, X, T = random_problem(kind, (5,), 7)
    l1, g1 = loss_and_gradient(net, X, T)
    l2, g2 = loss_and_gradient(net, np.vstack([X, X]), np.vstack([T, T]))
    assert l2 == pytest.approx(l1, rel=1e-12)
    assert np.allclose(g1, g2, rtol=1e-12, atol=1e-15)


def test_loss_errors():
    net = init_network(Topology("fit", 3, (2,), 2), 0)
    with pytest.raises(NetworkError):
        loss_and_gradient(net, np.zeros((0, 3)), np.zeros((0, 2)))
    with pytest.raises(NetworkError):
        loss_and_gradient(net, np.zeros((2, 3)), np.zeros((2, 3)))


# ---------------------------------------------------------------- SCG


@pytest.mark.parametrize("kind", KINDS)
def test_blobs_train_accuracy(kind):
    m = two_class_blobs()
    assert len(m) == 200
    net, hist = fit_network(Topology(kind, 15, (7,), 2), m, seed=1, params=ScgParams(max_iter=200))
    assert hist.iterations <= 200
    acc = np.mean(predict_classes(net, m.rows) == m.labels)
    assert acc >= 0.98


@pytest.mark.parametrize("kind", KINDS)
def test_training_determinism(kind):
    m = two_class_blobs()
    a, _ = fit_network(Topology(kind), m, seed=9, params=ScgParams(max_iter=60))
    b, _ = fit_network(Topology(kind), m, seed=9, params=ScgParams(max_iter=60))
    assert a.params.tobytes() == b.params.tobytes()
    assert dumps_model(a) == dumps_model(b)


@pytest.mark.parametrize("kind", KINDS)
def test_history_non_increasing(kind):
    net, X, T = random_problem(kind, (6,), 3, n=40)

    def f(w):
        return loss_and_gradient(replace(net, params=w), X, T)

    _, hist = scg(f, np.array(net.params), ScgParams(max_iter=150, goal_loss=0))
    assert len(hist.loss) >= 2
    assert all(b <= a for a, b in zip(hist.loss, hist.loss[1:]))


def test_quadratic_convergence():
    rng = np.random.default_rng(4)
    topo = Topology("fit", 6, (), 2)
    net = init_network(topo, 0)
    X = rng.normal(size=(80, 6))
    T = rng.normal(size=(80, 2))

    def f(w):
        return loss_and_gradient(replace(net, params=w), X, T)

    w, hist = scg(f, np.array(net.params), ScgParams(max_iter=3 * topo.n_weights, goal_loss=0, min_grad=0))
    assert np.linalg.norm(f(w)[1]) < 1e-8


def test_validation_patience_restores_best():
    m = two_class_blobs()
    tr, va = split_70_30(m, seed=0)
    net, hist = fit_network(Topology("fit"), tr, seed=0, params=ScgParams(max_iter=300, patience=3, goal_loss=0),
                            val=va)
    assert hist.stop_reason == "patience"
    Tv = one_hot(va.labels, 2)
    got = loss_and_gradient(net, net.normalizer.apply(va.rows), Tv)[0]
    assert got == min(hist.val_loss)


def test_non_finite_loss_aborts():
    def f(w):
        return float("nan"), np.zeros_like(w)

    with pytest.raises(TrainingError, match="iteration 0"):
        scg(f, np.zeros(3), ScgParams())


def test_affine_rescaling_invariance():
    m = two_class_blobs()
    rng = np.random.default_rng(2)
    a = rng.uniform(0.5, 50, 15)
    b = rng.normal(0, 10, 15)
    scaled = FeatureMatrix(m.rows * a + b, m.labels)
    topo = Topology("pattern")
    n1, _ = fit_network(topo, m, seed=3, params=ScgParams(max_iter=80))
    n2, _ = fit_network(topo, scaled, seed=3, params=ScgParams(max_iter=80))
    probe = synthetic_feature_matrix(500, seed=21).rows
    assert np.array_equal(predict_classes(n1, probe), predict_classes(n2, probe * a + b))


# ---------------------------------------------------------------- split


def test_split_examples():
    one = FeatureMatrix(np.zeros((10, 15)), np.zeros(10, dtype=int))
    tr, te = split_70_30(one, seed=0)
    assert (len(tr), len(te)) == (7, 3)

    two = FeatureMatrix(np.arange(1500.0).reshape(100, 15), np.repeat([0, 1], 50))
    tr, te = split_70_30(two, seed=1)
    assert tr.class_counts()[:2].tolist() == [35, 35]
    assert te.class_counts()[:2].tolist() == [15, 15]
    tr2, _ = split_70_30(two, seed=1)
    assert tr2.rows.tobytes() == tr.rows.tobytes()
    tr3, _ = split_70_30(two, seed=2)
    assert not np.array_equal(tr3.rows, tr.rows)
    assert not set(map(tuple, tr.rows)) & set(map(tuple, te.rows))

    with pytest.raises(NetworkError):
        split_70_30(FeatureMatrix(np.zeros((3, 15)), [0, 0, 1]), seed=0)


# ---------------------------------------------------------------- predict


@pytest.mark.parametrize("bias,winner", [([0.9, 0.1], 1), ([0.4, 0.6], 2), ([0.5, 0.5], 1)])
def test_predict_winner(bias, winner):
    topo = Topology("fit", 15, (), 2)
    params = np.concatenate([np.zeros(30), bias])
    net = as_trained(Mlp(topo, params))
    w, scores = predict(net, np.zeros(15))
    assert w == winner
    assert scores.tolist() == bias


def test_predict_untrained():
    with pytest.raises(NetworkError):
        predict(init_network(Topology(), 0), np.zeros(15))


# ---------------------------------------------------------------- model files


def test_model_round_trip(tmp_path):
    net, _ = fit_network(Topology("cascade", 15, (7, 3), 2), two_class_blobs(), seed=5,
                         params=ScgParams(max_iter=30))
    p = tmp_path / "m.json"
    save_model(net, p)
    back = load_model(p)
    assert back.params.tobytes() == net.params.tobytes()
    assert back.normalizer.mean.tobytes() == net.normalizer.mean.tobytes()
    assert back.topology == net.topology
    q = tmp_path / "m2.json"
    save_model(back, q)
    assert q.read_bytes() == p.read_bytes()


def test_model_version_mismatch():
    net = as_trained(init_network(Topology(), 0))
    doc = model_to_dict(net)
    doc["feature_version"] = "hrv-td-v0"
    with pytest.raises(ModelFormatError, match="feature version"):
        model_from_dict(doc)
    doc = model_to_dict(net)
    doc["format"] = "other"
    with pytest.raises(ModelFormatError):
        model_from_dict(doc)
