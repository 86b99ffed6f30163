"""Fully connected surrogate mapping rescaled nodal coefficients to local operators.

The network takes the flattened nodal coefficient field of one element
(rescaled by h/2, so training on the reference element covers every square
element size) and returns the flattened (in2out, in2mean) operator pair.
Hidden layers are twice the input width with ELU activation; the output
layer is linear. A 1-layer network is a pure affine map (the linear
regression baseline). Training minimizes the mean absolute error of the
flattened outputs with Adam over shuffled minibatches.

Everything runs in 64-bit numpy; forward passes and training are
deterministic for a fixed seed.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ModelMismatch
from .local import LocalOperators, SigmaField

MAGIC = b"RTHDGMLP"
FORMAT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

#: full-scale learning protocol: (epochs, learning rate) phases
DEFAULT_SCHEDULE = ((3000, 1e-3), (3000, 1e-4), (3000, 1e-5))
#: reduced protocol for desk-scale runs
DESK_SCHEDULE = ((300, 1e-3), (300, 1e-4), (300, 1e-5))


def trace_count(p_x: int, p_y: int, n_a: int, p_a: int = 0) -> int:
    """Inflow (= outflow) trace slots of one element."""
    return (p_x + p_y + 2) * n_a * (p_a + 1)


def input_size(p_x: int, p_y: int, single_coeff: bool = True) -> int:
    n = (p_x + 1) * (p_y + 1)
    return n if single_coeff else 2 * n


def output_size(p_x: int, p_y: int, n_a: int, p_a: int = 0) -> int:
    n_tr = trace_count(p_x, p_y, n_a, p_a)
    return n_tr * (n_tr + (p_x + 1) * (p_y + 1))


@dataclass
class MlpModel:
    """Layer sizes, weights, biases, and the discretization they serve."""

    p_x: int
    p_y: int
    n_a: int
    p_a: int
    dims: list
    weights: list
    biases: list
    activation: str = "elu"
    single_coeff: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def check_discretization(self, p_x, p_y, n_a, p_a=0):
        if (self.p_x, self.p_y, self.n_a, self.p_a) != (p_x, p_y, n_a, p_a):
            raise ModelMismatch(
                f"model trained for (p_x={self.p_x}, p_y={self.p_y}, N_a={self.n_a}, "
                f"p_a={self.p_a}); requested (p_x={p_x}, p_y={p_y}, N_a={n_a}, p_a={p_a})")


def init_mlp(p_x: int, p_y: int, n_a: int, p_a: int = 0, n_layers: int = 4,
             seed: int = 0, single_coeff: bool = True) -> MlpModel:
    """Initialize weights uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    if n_layers < 1:
        raise ValueError(f"need at least one layer, got {n_layers}")
    if p_x < 1 or p_y < 1 or n_a < 4:
        raise ValueError(f"invalid dimensions (p_x={p_x}, p_y={p_y}, N_a={n_a})")
    n_in = input_size(p_x, p_y, single_coeff)
    n_out = output_size(p_x, p_y, n_a, p_a)
    dims = [n_in] + [2 * n_in] * (n_layers - 1) + [n_out]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpModel(p_x=p_x, p_y=p_y, n_a=n_a, p_a=p_a, dims=dims,
                    weights=weights, biases=biases, single_coeff=single_coeff,
                    meta={"seed": int(seed)})


def elu(z):
    return np.where(z >= 0, z, np.expm1(np.minimum(z, 0.0)))


def elu_grad(z):
    return np.where(z >= 0, 1.0, np.exp(np.minimum(z, 0.0)))


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Forward propagation; x is one input vector or a (batch, N_in) array."""
    x = np.asarray(x, float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != model.dims[0]:
        raise ValueError(f"input width {h.shape[1]} does not match model N_in={model.dims[0]}")
    last = model.n_layers - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if i != last:
            h = elu(h)
    return h[0] if single else h


def _forward_cached(model, x):
    acts = [x]  # post-activation values per layer, acts[0] is the input
    pre = []
    h = x
    last = model.n_layers - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pre.append(z)
        h = elu(z) if i != last else z
        acts.append(h)
    return acts, pre


def mae_loss(model: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.abs(forward(model, x) - y)))


def mae_gradients(model: MlpModel, x: np.ndarray, y: np.ndarray):
    """Analytic MAE gradients; subgradient 0 at exact zeros of the residual.

    Returns (loss, weight grads, bias grads).
    """
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    acts, pre = _forward_cached(model, x)
    resid = acts[-1] - y
    loss = float(np.mean(np.abs(resid)))
    delta = np.sign(resid) / resid.size
    gws = [None] * model.n_layers
    gbs = [None] * model.n_layers
    for i in range(model.n_layers - 1, -1, -1):
        gws[i] = acts[i].T @ delta
        gbs[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * elu_grad(pre[i - 1])
    return loss, gws, gbs


@dataclass
class TrainState:
    """Adam moments, step/epoch counters, schedule, and the loss history."""

    schedule: tuple
    m_w: list
    v_w: list
    m_b: list
    v_b: list
    step: int = 0
    epoch: int = 0
    history: list = field(default_factory=list)  # dicts: epoch, lr, train_mae, test_mae


def _schedule_lr(schedule, epoch):
    upto = 0
    for n_epochs, lr in schedule:
        upto += n_epochs
        if epoch < upto:
            return lr
    return schedule[-1][1]


def train(model: MlpModel, dataset, schedule=DEFAULT_SCHEDULE, batch_size: int = 50,
          seed: int = 0, state: TrainState | None = None, log_every: int = 0) -> TrainState:
    """Adam/MAE training over the dataset's train split, tracking test MAE.

    The recorded train MAE is the average of the minibatch losses seen
    during the epoch; the test MAE is a full evaluation of the held-out
    split at epoch end. Raises ArithmeticError if the loss goes non-finite.
    """
    xs = dataset.inputs[dataset.train_idx]
    ys = dataset.labels[dataset.train_idx]
    xt = dataset.inputs[dataset.test_idx]
    yt = dataset.labels[dataset.test_idx]
    if xs.shape[0] == 0:
        raise ValueError("empty training split")
    if state is None:
        state = TrainState(schedule=tuple(schedule),
                           m_w=[np.zeros_like(w) for w in model.weights],
                           v_w=[np.zeros_like(w) for w in model.weights],
                           m_b=[np.zeros_like(b) for b in model.biases],
                           v_b=[np.zeros_like(b) for b in model.biases])
    rng = np.random.default_rng(seed)
    total_epochs = sum(n for n, _ in schedule)
    n_train = xs.shape[0]
    while state.epoch < total_epochs:
        lr = _schedule_lr(schedule, state.epoch)
        perm = rng.permutation(n_train)
        batch_losses = []
        for lo in range(0, n_train, batch_size):
            idx = perm[lo:lo + batch_size]
            loss, gws, gbs = mae_gradients(model, xs[idx], ys[idx])
            batch_losses.append(loss)
            state.step += 1
            t = state.step
            corr1 = 1.0 - ADAM_BETA1 ** t
            corr2 = 1.0 - ADAM_BETA2 ** t
            for i in range(model.n_layers):
                for param, grad, mom, vel in (
                        (model.weights[i], gws[i], state.m_w[i], state.v_w[i]),
                        (model.biases[i], gbs[i], state.m_b[i], state.v_b[i])):
                    mom *= ADAM_BETA1
                    mom += (1 - ADAM_BETA1) * grad
                    vel *= ADAM_BETA2
                    vel += (1 - ADAM_BETA2) * grad * grad
                    param -= lr * (mom / corr1) / (np.sqrt(vel / corr2) + ADAM_EPS)
        train_mae = float(np.mean(batch_losses))
        test_mae = mae_loss(model, xt, yt) if xt.shape[0] else float("nan")
        if not np.isfinite(train_mae):
            raise ArithmeticError(
                f"non-finite training loss at epoch {state.epoch} (lr={lr}); "
                f"history tail: {[h['train_mae'] for h in state.history[-5:]]}")
        state.epoch += 1
        state.history.append({"epoch": state.epoch, "lr": lr,
                              "train_mae": train_mae, "test_mae": test_mae})
        if log_every and state.epoch % log_every == 0:
            print(f"epoch {state.epoch:5d}  lr {lr:.1e}  train {train_mae:.3e}  test {test_mae:.3e}")
    return state


def surrogate_input(sigma: SigmaField, h: float, single_coeff: bool = True) -> np.ndarray:
    """Rescaled nodal input vector (h sigma / 2) for a square element of size h."""
    if not np.isscalar(h):
        raise ValueError("the surrogate serves square elements only")
    scale = 0.5 * float(h)
    if single_coeff:
        return scale * sigma.sigma_s.reshape(-1)
    return scale * np.concatenate([sigma.sigma_e.reshape(-1), sigma.sigma_s.reshape(-1)])


def flatten_operators(ops: LocalOperators) -> np.ndarray:
    """Training label layout: [A_i2o row-major, A_i2m row-major]."""
    return np.concatenate([ops.a_i2o.reshape(-1), ops.a_i2m.reshape(-1)])


def unflatten_operators(y: np.ndarray, p_x: int, p_y: int, n_a: int, p_a: int = 0) -> LocalOperators:
    n_tr = trace_count(p_x, p_y, n_a, p_a)
    n_sp = (p_x + 1) * (p_y + 1)
    if y.size != n_tr * n_tr + n_sp * n_tr:
        raise ValueError(f"output length {y.size} does not match the operator layout")
    a_i2o = y[:n_tr * n_tr].reshape(n_tr, n_tr)
    a_i2m = y[n_tr * n_tr:].reshape(n_sp, n_tr)
    return LocalOperators(a_i2o=a_i2o, a_i2m=a_i2m,
                          fhat_u=np.zeros(n_tr), f_mean=np.zeros(n_sp))


def predict_local_ops(model: MlpModel, sigma: SigmaField, h: float) -> LocalOperators:
    """Surrogate replacement for the exact local pipeline (zero-forcing cases)."""
    p = sigma.sigma_s.shape[0] - 1
    model.check_discretization(p, sigma.sigma_s.shape[1] - 1, model.n_a, model.p_a)
    y = forward(model, surrogate_input(sigma, h, model.single_coeff))
    return unflatten_operators(y, model.p_x, model.p_y, model.n_a, model.p_a)


def predict_local_ops_batch(model: MlpModel, sigmas, h: float) -> list:
    """Batched prediction for a list of elements (one forward pass)."""
    x = np.stack([surrogate_input(s, h, model.single_coeff) for s in sigmas])
    ys = forward(model, x)
    return [unflatten_operators(y, model.p_x, model.p_y, model.n_a, model.p_a) for y in ys]


def model_fingerprint(model: MlpModel) -> str:
    """SHA-256 over the weights/biases bytes in layer order."""
    digest = hashlib.sha256()
    for w, b in zip(model.weights, model.biases):
        digest.update(np.ascontiguousarray(w).tobytes())
        digest.update(np.ascontiguousarray(b).tobytes())
    return digest.hexdigest()


def save_model(model: MlpModel, path) -> None:
    """Versioned binary container; round-trips bit-exactly."""
    meta = dict(model.meta)
    meta["fingerprint"] = model_fingerprint(model)
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    act = model.activation.encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<6IB", FORMAT_VERSION, model.p_x, model.p_y,
                             model.n_a, model.p_a, model.n_layers,
                             1 if model.single_coeff else 0))
        fh.write(struct.pack("<B", len(act)))
        fh.write(act)
        fh.write(struct.pack("<I", len(model.dims)))
        fh.write(np.asarray(model.dims, dtype="<u4").tobytes())
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path, expect: tuple | None = None) -> MlpModel:
    """Load a model file; expect = (p_x, p_y, n_a, p_a) enforces a match."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise FormatError(f"{path}: not a model file (bad magic)")
    off = 8
    try:
        version, p_x, p_y, n_a, p_a, n_layers, single = struct.unpack_from("<6IB", raw, off)
        off += struct.calcsize("<6IB")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported model format version {version}")
        (act_len,) = struct.unpack_from("<B", raw, off)
        off += 1
        activation = raw[off:off + act_len].decode()
        off += act_len
        (n_dims,) = struct.unpack_from("<I", raw, off)
        off += 4
        dims = np.frombuffer(raw, dtype="<u4", count=n_dims, offset=off).astype(int).tolist()
        off += 4 * n_dims
        (meta_len,) = struct.unpack_from("<I", raw, off)
        off += 4
        meta = json.loads(raw[off:off + meta_len].decode())
        off += meta_len
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out,
                              offset=off).reshape(fan_in, fan_out).copy()
            off += 8 * fan_in * fan_out
            b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=off).copy()
            off += 8 * fan_out
            weights.append(w)
            biases.append(b)
        if off != len(raw):
            raise FormatError(f"{path}: trailing bytes ({len(raw) - off})")
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: corrupt model file ({exc})") from exc
    model = MlpModel(p_x=p_x, p_y=p_y, n_a=n_a, p_a=p_a, dims=dims,
                     weights=weights, biases=biases, activation=activation,
                     single_coeff=bool(single), meta=meta)
    if expect is not None:
        model.check_discretization(*expect)
    return model
