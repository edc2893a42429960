"""Single-layer LSTM sequence classifier trained with BPTT and Adam.

Everything runs in float64 numpy. A forward pass reads the whole window and
classifies from the final hidden state only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import TaskCategory
from .errors import (
    MixedShapes,
    ModelFormatError,
    NonFiniteLoss,
    NonFiniteParameter,
    ShapeMismatch,
)

log = logging.getLogger(__name__)

GATES = ("i", "f", "o", "g")
PARAM_NAMES = (
    tuple(f"W_{g}" for g in GATES)
    + tuple(f"U_{g}" for g in GATES)
    + tuple(f"b_{g}" for g in GATES)
    + ("W_y", "b_y")
)
LSTM_HEADER = "LOCOMODE-LSTM v1"
PROB_FLOOR = 1e-12


@dataclass
class LstmModel:
    input_dim: int
    hidden_dim: int
    output_dim: int
    params: dict
    seed: int | None = None

    def copy(self) -> "LstmModel":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})

    def shapes(self) -> dict:
        d, h, o = self.input_dim, self.hidden_dim, self.output_dim
        shapes = {}
        for g in GATES:
            shapes[f"W_{g}"] = (h, d)
            shapes[f"U_{g}"] = (h, h)
            shapes[f"b_{g}"] = (h,)
        shapes["W_y"] = (o, h)
        shapes["b_y"] = (o,)
        return shapes


@dataclass
class TrainConfig:
    epochs: int = 70
    batch_size: int = 50
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0
    grad_clip_norm: float = 5.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def lstm_init(input_dim: int, hidden_dim: int = 100, output_dim: int = 5, seed: int = 0) -> LstmModel:
    """Uniform(+-1/sqrt(hidden)) weights, zero biases, forget bias 1."""
    if min(input_dim, hidden_dim, output_dim) < 1:
        raise ValueError("all dimensions must be >= 1")
    model = LstmModel(input_dim, hidden_dim, output_dim, params={}, seed=seed)
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(hidden_dim)
    for name, shape in model.shapes().items():
        if name.startswith("b_"):
            model.params[name] = np.full(shape, 1.0 if name == "b_f" else 0.0)
        else:
            model.params[name] = rng.uniform(-bound, bound, size=shape)
    return model


def zero_model(input_dim: int, hidden_dim: int = 100, output_dim: int = 5) -> LstmModel:
    model = LstmModel(input_dim, hidden_dim, output_dim, params={})
    model.params = {k: np.zeros(s) for k, s in model.shapes().items()}
    return model


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_input(model: LstmModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != model.input_dim or X.shape[1] < 1:
        raise ShapeMismatch(
            f"expected (batch, timesteps, {model.input_dim}) input, got {np.shape(X)}"
        )
    return X


def forward_batch(model: LstmModel, X):
    """Run the recurrence over ``X`` of shape ``(batch, T, input_dim)``.

    Returns ``(probs, cache)``; ``cache`` holds every activation the
    backward pass needs.
    """
    X = _check_input(model, X)
    p = model.params
    H = model.hidden_dim
    B, T, _ = X.shape
    W = np.concatenate([p[f"W_{g}"] for g in GATES])
    U = np.concatenate([p[f"U_{g}"] for g in GATES])
    b = np.concatenate([p[f"b_{g}"] for g in GATES])

    xz = np.ascontiguousarray(X.transpose(1, 0, 2)) @ W.T + b  # T x B x 4H
    UT = np.ascontiguousarray(U.T)
    gates = np.empty((T, B, 4 * H))
    cs = np.zeros((T + 1, B, H))
    tcs = np.zeros((T + 1, B, H))
    hs = np.zeros((T + 1, B, H))
    z = np.empty((B, 4 * H))
    ig = np.empty((B, H))
    for t in range(T):
        np.matmul(hs[t], UT, out=z)
        z += xz[t]
        # sigmoid(z) = (1 + tanh(z / 2)) / 2 on the i, f, o blocks
        z[:, :3 * H] *= 0.5
        act = gates[t]
        np.tanh(z, out=act)
        act[:, :3 * H] += 1.0
        act[:, :3 * H] *= 0.5
        i, f, o, g = act[:, :H], act[:, H:2 * H], act[:, 2 * H:3 * H], act[:, 3 * H:]
        np.multiply(f, cs[t], out=cs[t + 1])
        np.multiply(i, g, out=ig)
        cs[t + 1] += ig
        np.tanh(cs[t + 1], out=tcs[t + 1])
        np.multiply(o, tcs[t + 1], out=hs[t + 1])
    logits = hs[T] @ p["W_y"].T + p["b_y"]
    probs = _softmax(logits)
    cache = {"X": X, "gates": gates, "c": cs, "tanh_c": tcs, "h": hs, "W": W, "U": U}
    return probs, cache


def lstm_forward(model: LstmModel, window):
    """Class probabilities for one ``T x input_dim`` window, plus the cache."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise ShapeMismatch(f"expected a T x {model.input_dim} window, got {window.shape}")
    probs, cache = forward_batch(model, window[None])
    return probs[0], cache


def cross_entropy(probs, truth) -> float:
    return float(-np.log(max(float(probs[int(truth)]), PROB_FLOOR)))


def batch_loss(probs: np.ndarray, truths) -> float:
    truths = np.asarray(truths, dtype=np.int64)
    picked = probs[np.arange(len(truths)), truths]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


def lstm_backward(model: LstmModel, windows, truths, cache=None, probs=None):
    """Gradients of the mean batch cross-entropy w.r.t. every parameter.

    Returns ``(grads, loss)``. A cache from :func:`forward_batch` on the same
    windows may be supplied to skip the forward pass.
    """
    truths = np.asarray([int(t) for t in np.atleast_1d(truths)], dtype=np.int64)
    if cache is None or probs is None:
        probs, cache = forward_batch(model, windows)
    X, gates, cs, hs, U = cache["X"], cache["gates"], cache["c"], cache["h"], cache["U"]
    B, T, _ = X.shape
    if truths.shape[0] != B:
        raise ShapeMismatch(f"{B} windows but {truths.shape[0]} labels")
    if truths.min() < 0 or truths.max() >= model.output_dim:
        raise ShapeMismatch(f"label outside [0, {model.output_dim})")
    H = model.hidden_dim
    p = model.params
    loss = batch_loss(probs, truths)

    dlogits = probs.copy()
    dlogits[np.arange(B), truths] -= 1.0
    dlogits /= B
    grads = {"W_y": dlogits.T @ hs[T], "b_y": dlogits.sum(axis=0)}

    tcs = cache["tanh_c"]
    dz_all = np.empty((T, B, 4 * H))
    dh = dlogits @ p["W_y"]
    dc = np.zeros((B, H))
    tmp = np.empty((B, H))
    for t in range(T - 1, -1, -1):
        act = gates[t]
        i, f, o, g = act[:, :H], act[:, H:2 * H], act[:, 2 * H:3 * H], act[:, 3 * H:]
        tc = tcs[t + 1]
        dz = dz_all[t]
        # dc += dh * o * (1 - tanh(c)^2)
        np.multiply(tc, tc, out=tmp)
        np.subtract(1.0, tmp, out=tmp)
        tmp *= o
        tmp *= dh
        dc += tmp
        # output gate: dh * tanh(c) * o * (1 - o)
        dzo = dz[:, 2 * H:3 * H]
        np.subtract(1.0, o, out=dzo)
        dzo *= o
        dzo *= tc
        dzo *= dh
        # input gate: dc * g * i * (1 - i)
        dzi = dz[:, :H]
        np.subtract(1.0, i, out=dzi)
        dzi *= i
        dzi *= g
        dzi *= dc
        # forget gate: dc * c_prev * f * (1 - f)
        dzf = dz[:, H:2 * H]
        np.subtract(1.0, f, out=dzf)
        dzf *= f
        dzf *= cs[t]
        dzf *= dc
        # candidate: dc * i * (1 - g^2)
        dzg = dz[:, 3 * H:]
        np.multiply(g, g, out=dzg)
        np.subtract(1.0, dzg, out=dzg)
        dzg *= i
        dzg *= dc
        dc *= f
        dh = dz @ U

    flat_dz = dz_all.reshape(T * B, 4 * H)
    x_tb = X.transpose(1, 0, 2).reshape(T * B, -1)
    h_prev = hs[:T].reshape(T * B, H)
    dW = flat_dz.T @ x_tb
    dU = flat_dz.T @ h_prev
    db = flat_dz.sum(axis=0)
    for k, gname in enumerate(GATES):
        rows = slice(k * H, (k + 1) * H)
        grads[f"W_{gname}"] = dW[rows]
        grads[f"U_{gname}"] = dU[rows]
        grads[f"b_{gname}"] = db[rows]
    return grads, loss


def adam_step(state: AdamState, params: dict, grads: dict):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    for name, g in grads.items():
        if np.shape(params[name]) != np.shape(g):
            raise ShapeMismatch(f"{name}: parameter {np.shape(params[name])} vs gradient {np.shape(g)}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name], dtype=np.float64)
            state.v[name] = np.zeros_like(params[name], dtype=np.float64)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[name] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def lstm_train(model: LstmModel, windows, labels, config: TrainConfig | None = None):
    """Minibatch Adam over seeded shuffles.

    ``windows`` is an ``(n, T, input_dim)`` array or a sequence of equally
    shaped matrices. Returns ``(trained_model, loss_history)``; the input
    model is not modified.
    """
    config = config or TrainConfig()
    if isinstance(windows, np.ndarray):
        X = np.asarray(windows, dtype=np.float64)
    else:
        shapes = {np.shape(w) for w in windows}
        if len(shapes) > 1:
            raise MixedShapes(f"windows have differing shapes: {sorted(shapes)}")
        X = np.stack([np.asarray(w, dtype=np.float64) for w in windows]) if windows else np.empty((0,))
    y = np.asarray([int(v) for v in labels], dtype=np.int64)
    if X.ndim != 3 or X.shape[0] == 0:
        raise MixedShapes(f"need a non-empty (n, T, channels) set of windows, got shape {X.shape}")
    if X.shape[2] != model.input_dim:
        raise ShapeMismatch(f"model expects {model.input_dim} channels, windows have {X.shape[2]}")
    if y.shape[0] != X.shape[0]:
        raise ShapeMismatch(f"{X.shape[0]} windows but {y.shape[0]} labels")

    trained = model.copy()
    state = AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    rng = np.random.default_rng(config.shuffle_seed)
    n = X.shape[0]
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            grads, loss = lstm_backward(trained, X[idx], y[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}, batch {b}")
            clip_gradients(grads, config.grad_clip_norm)
            adam_step(state, trained.params, grads)
            for name, value in trained.params.items():
                if not np.isfinite(value).all():
                    raise NonFiniteParameter(f"{name} became non-finite at epoch {epoch}, batch {b}")
            total += loss * len(idx)
        history.append(total / n)
        log.debug("epoch %d/%d mean loss %.5f", epoch + 1, config.epochs, history[-1])
    return trained, history


def predict_proba(model: LstmModel, windows, chunk: int = 500) -> np.ndarray:
    X = _check_input(model, windows)
    parts = [forward_batch(model, X[s:s + chunk])[0] for s in range(0, X.shape[0], chunk)]
    return np.concatenate(parts)


def lstm_predict(model: LstmModel, window):
    """Predicted category for one window, or an index array for a batch."""
    X = np.asarray(window, dtype=np.float64)
    if X.ndim == 2:
        probs, _ = lstm_forward(model, X)
        return TaskCategory(int(np.argmax(probs)))
    return np.argmax(predict_proba(model, X), axis=1)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_lstm(model: LstmModel, path) -> None:
    seed = "none" if model.seed is None else str(model.seed)
    lines = [LSTM_HEADER, f"{model.input_dim} {model.hidden_dim} {model.output_dim} {seed}"]
    for name in PARAM_NAMES:
        value = model.params[name]
        shape = value.shape if value.ndim == 2 else (value.shape[0], 1)
        lines.append(f"{name} {shape[0]} {shape[1]}")
        lines.append(" ".join(repr(float(v)) for v in value.ravel()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_lstm(path) -> LstmModel:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != LSTM_HEADER:
        raise ModelFormatError(f"{path}: missing {LSTM_HEADER!r} header")
    try:
        dims = lines[1].split()
        d, h, o = (int(v) for v in dims[:3])
        seed = None if dims[3] == "none" else int(dims[3])
        model = LstmModel(d, h, o, params={}, seed=seed)
        expected = model.shapes()
        pos = 2
        for _ in PARAM_NAMES:
            name, rows, cols = lines[pos].split()
            values = np.array(lines[pos + 1].split(), dtype=np.float64)
            pos += 2
            shape = expected[name]
            if values.size != int(rows) * int(cols) or values.size != int(np.prod(shape)):
                raise ModelFormatError(f"{path}: tensor {name} has wrong size")
            model.params[name] = values.reshape(shape)
    except (IndexError, ValueError, KeyError) as exc:
        raise ModelFormatError(f"{path}: malformed LSTM model ({exc})") from None
    return model
