"""Single-hidden-layer DNN, GRU and LSTM predictors trained with Adam.

All arithmetic is float64. Windows arrive most recent first, as built by
:func:`csipred.predictors.build_windows`; the recurrent models reverse them
so the hidden state ends on the newest sample.

Recurrences (``s`` is the logistic sigmoid, ``x`` the scalar input)::

    GRU   z = s(Uz x + Wz h + bz)     r = s(Ur x + Wr h + br)
          c = tanh(Uh x + Wh (r*h) + bh)
          h' = (1 - z) * h + z * c
    LSTM  i, f, o = s(U. x + W. h + b.)   g = tanh(Ug x + Wg h + bg)
          c' = f * c + i * g              h' = o * tanh(c')
    DNN   h = tanh(W1 x + b1)

Each model ends with a linear projection ``y = Wy h + by`` (``W2, b2`` for
the DNN).
"""

from __future__ import annotations

import contextlib
import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, TrainingError

log = logging.getLogger(__name__)

GRU_GATES = ("z", "r", "h")
LSTM_GATES = ("i", "f", "o", "g")

_fault = {"gradient": False}


@contextlib.contextmanager
def inject_gradient_fault():
    """Test hook: corrupt one gradient entry so gradient checks must fail."""
    _fault["gradient"] = True
    try:
        yield
    finally:
        _fault["gradient"] = False


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def parameter_shapes(kind: str, input_len: int, hidden: int, n_out: int) -> dict[str, tuple]:
    """Parameter names and shapes in checkpoint order."""
    d = hidden
    if kind == "dnn":
        return {"W1": (d, input_len), "b1": (d,), "W2": (n_out, d), "b2": (n_out,)}
    if kind == "gru":
        gates = GRU_GATES
    elif kind == "lstm":
        gates = LSTM_GATES
    else:
        raise DomainError(f"unknown neural kind {kind!r}")
    shapes = {}
    for g in gates:
        shapes[f"U{g}"] = (d,)
        shapes[f"W{g}"] = (d, d)
        shapes[f"b{g}"] = (d,)
    shapes["Wy"] = (n_out, d)
    shapes["by"] = (n_out,)
    return shapes


def _fan_in(name: str, shape: tuple) -> int:
    # scalar input weights see one input
    return 1 if name.startswith("U") else shape[-1]


@dataclass
class NeuralModel:
    """Parameters and dimensions of one network."""

    kind: str
    input_len: int
    hidden: int
    n_out: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = parameter_shapes(self.kind, self.input_len, self.hidden, self.n_out)
        if not self.params:
            rng = np.random.default_rng(self.seed)
            for name, shape in shapes.items():
                if name.startswith("b"):
                    self.params[name] = np.zeros(shape)
                else:
                    lim = 1.0 / np.sqrt(_fan_in(name, shape))
                    self.params[name] = rng.uniform(-lim, lim, size=shape)
        else:
            for name, shape in shapes.items():
                if name not in self.params or self.params[name].shape != shape:
                    raise DomainError(f"parameter {name} missing or not of shape {shape}")

    @property
    def names(self) -> list[str]:
        return list(parameter_shapes(self.kind, self.input_len, self.hidden, self.n_out))

    def copy(self) -> "NeuralModel":
        return NeuralModel(self.kind, self.input_len, self.hidden, self.n_out, self.seed,
                           {k: v.copy() for k, v in self.params.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[n].ravel() for n in self.names])

    def set_flat(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        at = 0
        for n in self.names:
            size = self.params[n].size
            self.params[n] = theta[at:at + size].reshape(self.params[n].shape).copy()
            at += size
        if at != theta.size:
            raise DomainError(f"expected {at} parameters, got {theta.size}")

    def predict(self, x) -> np.ndarray:
        return forward(self, x)

    def save(self, path) -> None:
        """Text checkpoint: header lines then one parameter value per line.

        Parameters are listed in :func:`parameter_shapes` order, each
        flattened row-major.
        """
        with open(path, "w") as fh:
            fh.write(f"kind {self.kind}\nP {self.input_len}\nD {self.hidden}\nout {self.n_out}\nseed {self.seed}\n")
            fh.write("order " + ",".join(self.names) + "\n")
            for v in self.flat():
                fh.write(f"{float(v)!r}\n")

    @classmethod
    def load(cls, path) -> "NeuralModel":
        with open(path) as fh:
            lines = fh.read().split("\n")
        head = dict(line.split(" ", 1) for line in lines[:6])
        model = cls(head["kind"], int(head["P"]), int(head["D"]), int(head["out"]), int(head["seed"]))
        if head["order"].split(",") != model.names:
            raise DomainError("checkpoint parameter order does not match this version")
        model.set_flat([float(v) for v in lines[6:] if v.strip()])
        return model


def _check_input(model: NeuralModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_len:
        raise DomainError(f"expected windows of length {model.input_len}, got shape {x.shape}")
    return x


def _forward_cache(model: NeuralModel, x: np.ndarray):
    p = model.params
    if model.kind == "dnn":
        h = np.tanh(x @ p["W1"].T + p["b1"])
        return h @ p["W2"].T + p["b2"], h
    seq = x[:, ::-1]
    n, d = x.shape[0], model.hidden
    h = np.zeros((n, d))
    steps = []
    if model.kind == "gru":
        for t in range(seq.shape[1]):
            xt = seq[:, t:t + 1]
            z = _sigmoid(xt * p["Uz"] + h @ p["Wz"].T + p["bz"])
            r = _sigmoid(xt * p["Ur"] + h @ p["Wr"].T + p["br"])
            c = np.tanh(xt * p["Uh"] + (r * h) @ p["Wh"].T + p["bh"])
            steps.append((xt, h, z, r, c))
            h = (1 - z) * h + z * c
    else:
        c = np.zeros((n, d))
        for t in range(seq.shape[1]):
            xt = seq[:, t:t + 1]
            i = _sigmoid(xt * p["Ui"] + h @ p["Wi"].T + p["bi"])
            f = _sigmoid(xt * p["Uf"] + h @ p["Wf"].T + p["bf"])
            o = _sigmoid(xt * p["Uo"] + h @ p["Wo"].T + p["bo"])
            g = np.tanh(xt * p["Ug"] + h @ p["Wg"].T + p["bg"])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            steps.append((xt, h, c, i, f, o, g, tc))
            h, c = o * tc, c_new
    return h @ p["Wy"].T + p["by"], (h, steps)


def forward(model: NeuralModel, x) -> np.ndarray:
    """Predictions ``(n, n_out)`` for windows ``(n, P)`` (or one window)."""
    x = _check_input(model, x)
    return _forward_cache(model, x)[0]


def loss(predictions, targets) -> float:
    """Mean squared error over horizons and windows."""
    a = np.asarray(predictions, dtype=float)
    b = np.asarray(targets, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"prediction shape {a.shape} != target shape {b.shape}")
    return float(np.mean((a - b) ** 2))


def gradients(model: NeuralModel, x, y) -> tuple[float, dict]:
    """Loss and its exact gradient with respect to every parameter."""
    x = _check_input(model, x)
    y = np.asarray(y, dtype=float).reshape(x.shape[0], model.n_out)
    out, cache = _forward_cache(model, x)
    if not np.all(np.isfinite(out)):
        raise TrainingError("non-finite network output during gradient evaluation")
    value = loss(out, y)
    dy = 2.0 * (out - y) / out.size
    p = model.params
    g = {k: np.zeros_like(v) for k, v in p.items()}
    if model.kind == "dnn":
        h = cache
        g["W2"] = dy.T @ h
        g["b2"] = dy.sum(0)
        da = (dy @ p["W2"]) * (1 - h ** 2)
        g["W1"] = da.T @ x
        g["b1"] = da.sum(0)
    else:
        h_last, steps = cache
        g["Wy"] = dy.T @ h_last
        g["by"] = dy.sum(0)
        dh = dy @ p["Wy"]
        if model.kind == "gru":
            for xt, h, z, r, c in reversed(steps):
                da_h = dh * z * (1 - c ** 2)
                da_z = dh * (c - h) * z * (1 - z)
                dh_prev = dh * (1 - z)
                drh = da_h @ p["Wh"]
                da_r = drh * h * r * (1 - r)
                dh_prev += drh * r
                for gate, da, inp in (("h", da_h, r * h), ("z", da_z, h), ("r", da_r, h)):
                    g[f"U{gate}"] += (da * xt).sum(0)
                    g[f"W{gate}"] += da.T @ inp
                    g[f"b{gate}"] += da.sum(0)
                dh_prev += da_z @ p["Wz"] + da_r @ p["Wr"]
                dh = dh_prev
        else:
            dc = np.zeros_like(dh)
            for xt, h, c, i, f, o, gg, tc in reversed(steps):
                do = dh * tc
                dc = dc + dh * o * (1 - tc ** 2)
                pre = {"i": dc * gg * i * (1 - i), "f": dc * c * f * (1 - f),
                       "o": do * o * (1 - o), "g": dc * i * (1 - gg ** 2)}
                dc = dc * f
                dh = np.zeros_like(dh)
                for gate, da in pre.items():
                    g[f"U{gate}"] += (da * xt).sum(0)
                    g[f"W{gate}"] += da.T @ h
                    g[f"b{gate}"] += da.sum(0)
                    dh += da @ p[f"W{gate}"]
    if _fault["gradient"]:
        first = model.names[0]
        g[first].flat[0] += 1.0
    return value, g


def numerical_gradient(model: NeuralModel, x, y, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient, flattened in parameter order."""
    theta = model.flat()
    probe = model.copy()
    out = np.empty_like(theta)
    for j in range(theta.size):
        t = theta.copy()
        t[j] += h
        probe.set_flat(t)
        up = loss(forward(probe, x), y)
        t[j] -= 2 * h
        probe.set_flat(t)
        down = loss(forward(probe, x), y)
        out[j] = (up - down) / (2 * h)
    return out


def gradient_check(model: NeuralModel, x, y, h: float = 1e-5) -> float:
    """Largest relative error ``|a - n| / max(|a|, |n|)`` over all parameters.

    The denominator is floored at 1e-8 so that entries whose gradient is
    zero to rounding are judged on absolute error instead.
    """
    _, g = gradients(model, x, y)
    analytic = np.concatenate([g[n].ravel() for n in model.names])
    numeric = numerical_gradient(model, x, y, h)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / scale))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 2048
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0
    patience: int | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")
        if self.patience is not None and self.patience < 1:
            raise ConfigurationError("patience must be >= 1")


class Adam:
    """Adaptive-moment optimiser with bias correction."""

    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for k, gk in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * gk
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * gk * gk
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class TrainResult:
    model: NeuralModel
    history: list  # (epoch, train_loss, val_loss)
    best_epoch: int

    def history_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss"])
            for e, tr, va in self.history:
                w.writerow([e, repr(tr), repr(va)])


def train(model: NeuralModel, train_xy, val_xy, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Minibatch Adam on the MSE loss.

    Returns the parameters with the lowest validation loss seen after any
    epoch. With `config.patience` set, training stops once the validation
    loss has not improved for that many epochs; otherwise exactly
    `config.epochs` epochs run.
    """
    x, y = (np.asarray(a, dtype=float) for a in train_xy)
    xv, yv = (np.asarray(a, dtype=float) for a in val_xy)
    if x.shape[0] == 0 or xv.shape[0] == 0:
        raise ConfigurationError("training and validation sets must be non-empty")
    y = y.reshape(x.shape[0], model.n_out)
    yv = yv.reshape(xv.shape[0], model.n_out)
    work = model.copy()
    opt = Adam(work.params, config.learning_rate, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(config.shuffle_seed)
    best = (loss(forward(work, xv), yv), work.copy(), 0)
    history = []
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(x.shape[0])
        total = 0.0
        for start in range(0, x.shape[0], config.batch_size):
            idx = order[start:start + config.batch_size]
            value, g = gradients(work, x[idx], y[idx])
            if not np.isfinite(value):
                raise TrainingError(f"loss became non-finite in epoch {epoch}")
            opt.step(work.params, g)
            total += value * idx.size
        val = loss(forward(work, xv), yv)
        tr = total / x.shape[0]
        if not (np.isfinite(val) and np.isfinite(tr)):
            raise TrainingError(f"loss became non-finite in epoch {epoch}")
        history.append((epoch, tr, val))
        if val < best[0]:
            best = (val, work.copy(), epoch)
            stale = 0
        else:
            stale += 1
        if config.patience is not None and stale >= config.patience:
            log.debug("plateau after %d epochs", epoch)
            break
    return TrainResult(best[1], history, best[2])


class _Counter:
    """Dense ops that tally multiplications and additions."""

    def __init__(self):
        self.mul = 0
        self.add = 0

    @property
    def total(self) -> int:
        return self.mul + self.add

    def matvec(self, w, v):
        rows, cols = w.shape
        self.mul += rows * cols
        self.add += rows * (cols - 1)
        return w @ v

    def scale(self, u, x):
        self.mul += u.size
        return u * x

    def hadamard(self, a, b):
        self.mul += a.size
        return a * b

    def plus(self, a, b):
        self.add += np.size(a)
        return a + b

    def minus(self, a, b):
        self.add += np.size(a)
        return a - b


def counted_forward(model: NeuralModel, window) -> tuple[np.ndarray, int]:
    """Forward pass on one window counting FLOPs as it goes.

    Counts every multiply and add in the gate pre-activations, the state
    updates and the output projection; activations are not counted.
    """
    x = _check_input(model, window)[0]
    p = model.params
    k = _Counter()
    if model.kind == "dnn":
        h = np.tanh(k.plus(k.matvec(p["W1"], x), p["b1"]))
        return k.plus(k.matvec(p["W2"], h), p["b2"]), k.total
    h = np.zeros(model.hidden)
    c = np.zeros(model.hidden)

    def pre(gate, xt, state):
        return k.plus(k.plus(k.scale(p[f"U{gate}"], xt), k.matvec(p[f"W{gate}"], state)), p[f"b{gate}"])

    for xt in x[::-1]:
        if model.kind == "gru":
            z = _sigmoid(pre("z", xt, h))
            r = _sigmoid(pre("r", xt, h))
            cand = np.tanh(pre("h", xt, k.hadamard(r, h)))
            # h' = h - z*h + z*c, written as the 4D of element-wise work
            h = k.plus(k.minus(h, k.hadamard(z, h)), k.hadamard(z, cand))
        else:
            i = _sigmoid(pre("i", xt, h))
            f = _sigmoid(pre("f", xt, h))
            o = _sigmoid(pre("o", xt, h))
            g = np.tanh(pre("g", xt, h))
            c = k.plus(k.hadamard(f, c), k.hadamard(i, g))
            h = k.hadamard(o, np.tanh(c))
    # output projection counted as 2 D per output (bias add absorbs the last add)
    y = k.matvec(p["Wy"], h)
    y = k.plus(y, p["by"])
    return y, k.total
