"""Small multilayer perceptrons trained with scaled conjugate gradient.

Four topology kinds share one engine:

``feedforward`` / ``fit``
    tanh hidden layers, linear output, mean squared error against one-hot
    targets.  The two differ only by name (and therefore by derived seeds).
``pattern``
    tanh hidden layers, softmax output, mean cross-entropy.
``cascade``
    like ``feedforward`` but every layer also receives the network input and
    all earlier hidden outputs.

Flat parameter layout, layer by layer: the weight matrix in row-major order
(rows are the layer's units, columns its inputs; for ``cascade`` the inputs
are ``[x, h1, ..., h_{l-1}]`` concatenated in that order), then the bias
vector.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .hrv_features import (
    DEFAULT_CLASS_NAMES,
    FEATURE_VERSION,
    N_FEATURES,
    FeatureMatrix,
    Normalizer,
    fit_normalizer,
)

KINDS = ("cascade", "feedforward", "fit", "pattern")
MODEL_FORMAT = "ecgovo-mlp"
MODEL_FORMAT_VERSION = 1
LAYOUT_NOTE = (
    "per layer: W row-major (rows=units, cols=inputs; cascade inputs are [x, h1, ..., h_{l-1}]), then b"
)


class NetworkError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    kind: str = "feedforward"
    input_dim: int = N_FEATURES
    hidden: tuple = (7,)
    output_dim: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise NetworkError(f"unknown topology kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden):
            raise NetworkError("layer sizes must be at least 1")

    @property
    def layer_shapes(self):
        """(units, inputs) for each weight matrix, output layer last."""
        sizes = list(self.hidden) + [self.output_dim]
        shapes = []
        for i, units in enumerate(sizes):
            if self.kind == "cascade":
                fan_in = self.input_dim + sum(self.hidden[:i])
            else:
                fan_in = self.input_dim if i == 0 else sizes[i - 1]
            shapes.append((units, fan_in))
        return shapes

    @property
    def n_weights(self):
        return sum(u * f + u for u, f in self.layer_shapes)


@dataclass(frozen=True)
class ScgParams:
    max_iter: int = 500
    sigma: float = 5e-5
    lambda0: float = 5e-7
    goal_loss: float = 1e-5
    patience: int = 20
    min_grad: float = 1e-10

    def __post_init__(self):
        if self.max_iter < 1 or self.patience < 1:
            raise ValueError("max_iter and patience must be positive")
        if not (self.sigma > 0 and self.lambda0 > 0 and self.goal_loss >= 0 and self.min_grad >= 0):
            raise ValueError("SCG constants must be positive")


@dataclass(frozen=True)
class Mlp:
    topology: Topology
    params: np.ndarray
    normalizer: Normalizer | None = None
    classes: tuple | None = None  # label index served by each output unit
    class_names: tuple = DEFAULT_CLASS_NAMES
    seed: int = 0
    epochs: int = 0
    final_loss: float | None = None
    feature_version: str = FEATURE_VERSION

    def __post_init__(self):
        p = np.array(self.params, dtype=np.float64).ravel()
        if p.shape[0] != self.topology.n_weights:
            raise NetworkError(f"expected {self.topology.n_weights} parameters, got {p.shape[0]}")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)
        if self.classes is not None:
            object.__setattr__(self, "classes", tuple(int(c) for c in self.classes))
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def trained(self):
        return self.normalizer is not None and self.classes is not None

    def layers(self):
        return _unpack(self.topology, self.params)


@dataclass
class TrainingHistory:
    loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    stop_reason: str = ""
    iterations: int = 0


def _unpack(topology, flat):
    out = []
    pos = 0
    for units, fan_in in topology.layer_shapes:
        W = flat[pos:pos + units * fan_in].reshape(units, fan_in)
        pos += units * fan_in
        b = flat[pos:pos + units]
        pos += units
        out.append((W, b))
    return out


def init_network(topology: Topology, seed: int) -> Mlp:
    """Uniform weights in +-1/sqrt(fan_in) from a Philox stream keyed by *seed*; zero biases."""
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    parts = []
    for units, fan_in in topology.layer_shapes:
        bound = 1.0 / math.sqrt(fan_in)
        parts.append(rng.uniform(-bound, bound, size=units * fan_in))
        parts.append(np.zeros(units))
    return Mlp(topology, np.concatenate(parts), seed=int(seed))


# ---------------------------------------------------------------- forward / backward


def _forward(topology, flat, X):
    layers = _unpack(topology, flat)
    hidden = []
    inputs = []
    z = None
    for i, (W, b) in enumerate(layers):
        if topology.kind == "cascade":
            inp = np.hstack([X] + hidden) if hidden else X
        else:
            inp = X if i == 0 else hidden[-1]
        inputs.append(inp)
        z = inp @ W.T + b
        if i < len(layers) - 1:
            hidden.append(np.tanh(z))
    return z, hidden, inputs, layers


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _output(topology, z):
    return _softmax(z) if topology.kind == "pattern" else z


def forward(net: Mlp, x) -> np.ndarray:
    """Scores for already-normalized input (one row or a batch)."""
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != net.topology.input_dim:
        raise NetworkError(f"input has {X.shape[1]} features, network expects {net.topology.input_dim}")
    z, _, _, _ = _forward(net.topology, net.params, X)
    y = _output(net.topology, z)
    return y[0] if single else y


def _loss_grad(topology, flat, X, T):
    n = X.shape[0]
    z, hidden, inputs, layers = _forward(topology, flat, X)
    if topology.kind == "pattern":
        zs = z - z.max(axis=1, keepdims=True)
        logp = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
        loss = -np.sum(T * logp) / n
        dz = (np.exp(logp) - T) / n
    else:
        err = z - T
        loss = np.sum(err * err) / err.size
        dz = 2.0 * err / err.size

    grads = [None] * len(layers)
    n_hidden = len(hidden)
    dh = [np.zeros_like(h) for h in hidden]
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        if i < len(layers) - 1:
            dz = dh[i] * (1.0 - hidden[i] ** 2)
        grads[i] = (dz.T @ inputs[i], dz.sum(axis=0))
        if i == 0:
            break
        dinp = dz @ W
        if topology.kind == "cascade":
            col = topology.input_dim
            for j in range(min(i, n_hidden)):
                width = hidden[j].shape[1]
                dh[j] += dinp[:, col:col + width]
                col += width
        else:
            dh[i - 1] += dinp
    flat_grad = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])
    return float(loss), flat_grad


def loss_and_gradient(net: Mlp, X, T):
    """Mean loss and its exact gradient (flat, in parameter layout order).

    *X* is normalized input, *T* one-hot targets.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    T = np.atleast_2d(np.asarray(T, dtype=np.float64))
    if X.shape[0] == 0:
        raise NetworkError("empty batch")
    if X.shape[1] != net.topology.input_dim or T.shape != (X.shape[0], net.topology.output_dim):
        raise NetworkError("batch shape does not match the topology")
    return _loss_grad(net.topology, net.params, X, T)


# ---------------------------------------------------------------- training


def _resolve_classes(net, matrix):
    if net.classes is not None:
        return net.classes
    out = net.topology.output_dim
    if out == len(matrix.class_names):
        return tuple(range(out))
    present = tuple(int(c) for c in np.unique(matrix.labels))
    if len(present) != out:
        raise NetworkError(f"{out}-output network but training labels cover classes {present}")
    return present


def _targets(classes, labels):
    pos = {c: k for k, c in enumerate(classes)}
    T = np.zeros((labels.shape[0], len(classes)))
    for r, lab in enumerate(labels):
        if int(lab) not in pos:
            raise NetworkError(f"label {int(lab)} is not served by this network")
        T[r, pos[int(lab)]] = 1.0
    return T


def scg(fun, w0, params: ScgParams, val_fun=None):
    """Minimize ``fun(w) -> (loss, grad)`` with Moller's scaled conjugate gradient.

    Returns ``(w, history)``.  When *val_fun* is given, training stops after
    ``params.patience`` successive non-improving validation losses and the
    best-validation weights are returned.
    """
    n = w0.shape[0]
    w = w0.copy()
    E, g = fun(w)
    if not np.isfinite(E):
        raise TrainingError("non-finite loss at iteration 0")
    r = -g
    p = r.copy()
    lam = params.lambda0
    lam_bar = 0.0
    success = True
    n_success = 0
    delta = 0.0
    hist = TrainingHistory(loss=[E])

    best_w, best_val, fails = None, np.inf, 0
    if val_fun is not None:
        best_val = val_fun(w)
        best_w = w.copy()
        hist.val_loss.append(best_val)

    if E <= params.goal_loss:
        hist.stop_reason = "goal"
        return w, hist
    for it in range(1, params.max_iter + 1):
        hist.iterations = it
        p2 = float(p @ p)
        if p2 == 0.0 or float(r @ r) ** 0.5 < params.min_grad:
            hist.stop_reason = "gradient"
            break
        if success:
            sig = params.sigma / math.sqrt(p2)
            _, g_s = fun(w + sig * p)
            delta = float(p @ (g_s - g)) / sig
        delta += (lam - lam_bar) * p2
        if delta <= 0:
            lam_bar = 2.0 * (lam - delta / p2)
            delta = -delta + lam * p2
            lam = lam_bar
        mu = float(p @ r)
        if mu <= 0:
            # not a descent direction; restart from steepest descent
            p = r.copy()
            success = True
            hist.loss.append(E)
            continue
        alpha = mu / delta
        E_new, g_new = fun(w + alpha * p)
        if not np.isfinite(E_new):
            raise TrainingError(f"non-finite loss at iteration {it}")
        comparison = 2.0 * delta * (E - E_new) / (mu * mu)
        if comparison >= 0:
            w = w + alpha * p
            E = E_new
            r_old = r
            r = -g_new
            g = g_new
            lam_bar = 0.0
            success = True
            n_success += 1
            if n_success % n == 0:
                p = r.copy()
            else:
                beta = (float(r @ r) - float(r @ r_old)) / mu
                p = r + beta * p
            if comparison >= 0.75:
                lam = 0.25 * lam
        else:
            lam_bar = lam
            success = False
        if comparison < 0.25:
            lam = lam + delta * (1.0 - comparison) / p2
        hist.loss.append(E)

        if E <= params.goal_loss:
            hist.stop_reason = "goal"
            break
        if lam > 1e300:
            hist.stop_reason = "lambda"
            break
        if val_fun is not None and success:
            v = val_fun(w)
            hist.val_loss.append(v)
            if v < best_val:
                best_val, best_w, fails = v, w.copy(), 0
            else:
                fails += 1
                if fails >= params.patience:
                    hist.stop_reason = "patience"
                    break
    else:
        hist.stop_reason = "max_iter"
    if not hist.stop_reason:
        hist.stop_reason = "gradient"
    if val_fun is not None and best_w is not None:
        w = best_w
    return w, hist


def scg_train(net: Mlp, train: FeatureMatrix, val: FeatureMatrix | None = None,
              params: ScgParams = ScgParams()):
    """Train *net* on raw (unnormalized) features; returns ``(Mlp, TrainingHistory)``.

    A normalizer is fitted on *train* unless the network already carries one.
    """
    if len(train) == 0:
        raise NetworkError("empty training matrix")
    classes = _resolve_classes(net, train)
    nz = net.normalizer if net.normalizer is not None else fit_normalizer(train)
    X = nz.apply(train.rows)
    T = _targets(classes, train.labels)
    topo = net.topology

    def fun(w):
        return _loss_grad(topo, w, X, T)

    val_fun = None
    if val is not None and len(val):
        Xv = nz.apply(val.rows)
        Tv = _targets(classes, val.labels)

        def val_fun(w):
            return _loss_grad(topo, w, Xv, Tv)[0]

    w, hist = scg(fun, np.array(net.params), params, val_fun)
    final = fun(w)[0]
    trained = replace(
        net, params=w, normalizer=nz, classes=classes, class_names=train.class_names,
        epochs=net.epochs + hist.iterations, final_loss=float(final),
    )
    return trained, hist


def fit_network(topology: Topology, train: FeatureMatrix, seed: int, params: ScgParams = ScgParams(),
                val: FeatureMatrix | None = None, classes=None):
    net = init_network(topology, seed)
    if classes is not None:
        net = replace(net, classes=tuple(classes))
    return scg_train(net, train, val, params)


def split_70_30(matrix: FeatureMatrix, seed: int, train_fraction: float = 0.7):
    """Stratified split: ``round(0.7 * n_c)`` rows of each class go to training."""
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    train_idx, test_idx = [], []
    for c in np.unique(matrix.labels):
        idx = np.flatnonzero(matrix.labels == c)
        if idx.shape[0] < 2:
            raise NetworkError(f"class {matrix.class_names[c]!r} has fewer than 2 rows")
        idx = idx[rng.permutation(idx.shape[0])]
        k = int(math.floor(train_fraction * idx.shape[0] + 0.5))
        train_idx.extend(idx[:k].tolist())
        test_idx.extend(idx[k:].tolist())
    return matrix.subset(np.sort(train_idx)), matrix.subset(np.sort(test_idx))


# ---------------------------------------------------------------- inference


def predict_scores(net: Mlp, raw_rows) -> np.ndarray:
    if not net.trained:
        raise NetworkError("network has not been trained")
    X = net.normalizer.apply(np.atleast_2d(np.asarray(raw_rows, dtype=np.float64)))
    return forward(net, X)


def predict(net: Mlp, raw_features):
    """Return ``(winner, scores)`` for one feature vector.

    Two-output networks report the winner as 1 or 2 in the pair's order;
    wider networks report the class index.  Ties go to the earlier output.
    """
    scores = predict_scores(net, raw_features)[0]
    k = int(np.argmax(scores))
    if net.topology.output_dim == 2:
        return k + 1, scores
    return net.classes[k], scores


def predict_classes(net: Mlp, raw_rows) -> np.ndarray:
    scores = predict_scores(net, raw_rows)
    return np.asarray(net.classes)[np.argmax(scores, axis=1)]


# ---------------------------------------------------------------- model files


def model_to_dict(net: Mlp) -> dict:
    if not net.trained:
        raise NetworkError("only trained networks can be serialized")
    t = net.topology
    return {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "feature_version": net.feature_version,
        "topology": {"kind": t.kind, "input_dim": t.input_dim, "hidden": list(t.hidden),
                     "output_dim": t.output_dim},
        "classes": list(net.classes),
        "class_names": list(net.class_names),
        "seed": int(net.seed),
        "training": {"epochs": int(net.epochs), "final_loss": net.final_loss},
        "normalizer": {"mean": [float(v) for v in net.normalizer.mean],
                       "sd": [float(v) for v in net.normalizer.sd]},
        "layout": LAYOUT_NOTE,
        "weights": [float(v) for v in net.params],
    }


def model_from_dict(doc: dict, expected_feature_version: str = FEATURE_VERSION) -> Mlp:
    if doc.get("format") != MODEL_FORMAT or doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"not a {MODEL_FORMAT} v{MODEL_FORMAT_VERSION} document")
    if doc.get("feature_version") != expected_feature_version:
        raise ModelFormatError(
            f"feature version {doc.get('feature_version')!r} does not match {expected_feature_version!r}"
        )
    t = doc["topology"]
    topo = Topology(t["kind"], int(t["input_dim"]), tuple(t["hidden"]), int(t["output_dim"]))
    nz = Normalizer(np.asarray(doc["normalizer"]["mean"], dtype=np.float64),
                    np.asarray(doc["normalizer"]["sd"], dtype=np.float64))
    return Mlp(
        topo, np.asarray(doc["weights"], dtype=np.float64), nz, tuple(doc["classes"]),
        tuple(doc["class_names"]), int(doc["seed"]), int(doc["training"]["epochs"]),
        doc["training"]["final_loss"], doc["feature_version"],
    )


def dumps_model(net: Mlp) -> str:
    return json.dumps(model_to_dict(net), indent=1, sort_keys=True) + "\n"


def save_model(net: Mlp, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(net))


def load_model(path, expected_feature_version: str = FEATURE_VERSION) -> Mlp:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: {exc}") from None
    return model_from_dict(doc, expected_feature_version)
