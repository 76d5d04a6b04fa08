"""Delay-compensated inverse-model training.

Each training input pairs the current sensed state with the angle actually
reached a fixed lookahead later; the target is the valve command that was
applied now.  The model is a three-layer perceptron (tanh hidden layer)
trained on standardized matrices by minibatch adaptive-moment descent.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .datagen import Dataset

__all__ = [
    "TrainMatrices", "Standardizer", "InverseModel", "TrainConfig",
    "build_matrices", "train", "mlp_forward", "mlp_gradients",
]

DEFAULT_TAU = 9
DEFAULT_HIDDEN = 200


@dataclass
class TrainMatrices:
    x: np.ndarray  # (rows, 5n): q, v, p_a, p_b, q_future
    y: np.ndarray  # (rows, 2n): u_a, u_b
    tau: int
    trial_bounds: list[tuple[int, int]]  # [start, end) row ranges per kept trial


def build_matrices(dataset: Dataset, tau: int = DEFAULT_TAU) -> TrainMatrices:
    """Stack lookahead samples; no row may span a trial boundary."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    xs, ys, bounds = [], [], []
    row = 0
    for t in range(len(dataset.trials)):
        if dataset.valid and not dataset.valid[t]:
            continue
        k_t = dataset.trials[t].shape[0]
        if k_t < tau + 1:
            import warnings
            warnings.warn(f"trial {t} shorter than tau+1 ({k_t} rows), skipped")
            continue
        q = dataset.signal(t, "q")
        v = dataset.signal(t, "v")
        p_a = dataset.signal(t, "p_a")
        p_b = dataset.signal(t, "p_b")
        u_a = dataset.signal(t, "u_a")
        u_b = dataset.signal(t, "u_b")
        stop = k_t - tau
        x = np.hstack((q[:stop], v[:stop], p_a[:stop], p_b[:stop], q[tau:k_t]))
        y = np.hstack((u_a[:stop], u_b[:stop]))
        xs.append(x)
        ys.append(y)
        bounds.append((row, row + stop))
        row += stop
    if not xs:
        raise ValueError("dataset contains no usable trial")
    return TrainMatrices(x=np.vstack(xs), y=np.vstack(ys), tau=tau,
                         trial_bounds=bounds)


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, a: np.ndarray) -> "Standardizer":
        a = np.asarray(a, dtype=float)
        if a.shape[0] < 2:
            raise ValueError("need at least 2 rows to fit a standardizer")
        mean = a.mean(axis=0)
        std = a.std(axis=0)
        bad = np.flatnonzero(std <= 0)
        if bad.size:
            raise ValueError(f"constant column(s) {bad.tolist()} cannot be standardized")
        return cls(mean=mean, std=std)

    def apply(self, a):
        return (np.asarray(a, dtype=float) - self.mean) / self.std

    def invert(self, a):
        return np.asarray(a, dtype=float) * self.std + self.mean


def mlp_forward(x_std, w1, b1, w2, b2):
    """Hidden tanh activation and standardized output for a batch."""
    h = np.tanh(x_std @ w1 + b1)
    return h, h @ w2 + b2


def mlp_gradients(x_std, y_std, w1, b1, w2, b2):
    """MSE loss (mean over batch and outputs) and its weight gradients."""
    h, out = mlp_forward(x_std, w1, b1, w2, b2)
    err = out - y_std
    loss = float(np.mean(err ** 2))
    g_out = 2.0 * err / err.size
    g_w2 = h.T @ g_out
    g_b2 = g_out.sum(axis=0)
    g_h = (g_out @ w2.T) * (1.0 - h ** 2)
    g_w1 = x_std.T @ g_h
    g_b1 = g_h.sum(axis=0)
    return loss, (g_w1, g_b1, g_w2, g_b2)


@dataclass
class InverseModel:
    """Trained inverse-dynamics map from raw features to raw commands."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    x_stats: Standardizer
    y_stats: Standardizer
    tau: int

    @property
    def n_joints(self) -> int:
        return self.w2.shape[1] // 2

    def predict(self, x) -> np.ndarray:
        """Raw-unit prediction; accepts a single feature vector or a batch."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        if xb.shape[1] != self.w1.shape[0]:
            raise ValueError(
                f"expected {self.w1.shape[0]} input features, got {xb.shape[1]}")
        _, out = mlp_forward(self.x_stats.apply(xb), self.w1, self.b1,
                             self.w2, self.b2)
        y = self.y_stats.invert(out)
        return y[0] if single else y

    # ---------------------------------------------------------------- disk io

    MAGIC = b"PNEUINV1"
    VERSION = 1

    def save(self, path) -> None:
        dims = (self.w1.shape[0], self.w1.shape[1], self.w2.shape[1])
        with open(path, "wb") as fh:
            fh.write(self.MAGIC)
            fh.write(struct.pack("<IIII", self.VERSION, self.n_joints,
                                 self.tau, len(dims)))
            fh.write(struct.pack("<" + "I" * len(dims), *dims))
            for arr in (self.x_stats.mean, self.x_stats.std,
                        self.y_stats.mean, self.y_stats.std,
                        self.w1, self.b1, self.w2, self.b2):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "InverseModel":
        with open(path, "rb") as fh:
            magic = fh.read(8)
            if magic != cls.MAGIC:
                raise ValueError(f"not a model file (magic {magic!r})")
            version, n_joints, tau, n_dims = struct.unpack("<IIII", fh.read(16))
            if version != cls.VERSION:
                raise ValueError(f"unsupported model version {version}")
            dims = struct.unpack("<" + "I" * n_dims, fh.read(4 * n_dims))
            d_in, d_hidden, d_out = dims

            def arr(*shape):
                count = int(np.prod(shape))
                a = np.frombuffer(fh.read(8 * count), dtype="<f8").copy()
                return a.reshape(shape)

            x_stats = Standardizer(mean=arr(d_in), std=arr(d_in))
            y_stats = Standardizer(mean=arr(d_out), std=arr(d_out))
            model = cls(w1=arr(d_in, d_hidden), b1=arr(d_hidden),
                        w2=arr(d_hidden, d_out), b2=arr(d_out),
                        x_stats=x_stats, y_stats=y_stats, tau=tau)
            if model.n_joints != n_joints:
                raise ValueError("model header inconsistent with weight shapes")
            return model


@dataclass
class TrainConfig:
    hidden: int = DEFAULT_HIDDEN
    epochs: int = 200
    batch: int = 256
    lr: float = 1e-3
    weight_decay: float = 0.0
    val_split: float = 0.1
    seed: int = 0


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")


def _glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def train(matrices: TrainMatrices, hyper: TrainConfig | None = None):
    """Fit the inverse model; returns (model, report).

    Single-threaded minibatch Adam with a fixed shuffle order per seed, so
    identical seeds and data reproduce the final loss bit-for-bit.  The
    returned weights are the ones with the best validation loss.
    """
    hyper = hyper or TrainConfig()
    x_stats = Standardizer.fit(matrices.x)
    y_stats = Standardizer.fit(matrices.y)
    x = x_stats.apply(matrices.x)
    y = y_stats.apply(matrices.y)
    rng = np.random.default_rng(hyper.seed)
    n_rows, d_in = x.shape
    d_out = y.shape[1]
    perm = rng.permutation(n_rows)
    n_val = int(round(hyper.val_split * n_rows))
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    if tr_idx.size == 0:
        raise ValueError("no training rows left after validation split")
    x_tr, y_tr = x[tr_idx], y[tr_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    w1 = _glorot_uniform(rng, d_in, hyper.hidden)
    b1 = np.zeros(hyper.hidden)
    w2 = _glorot_uniform(rng, hyper.hidden, d_out)
    b2 = np.zeros(d_out)
    params = [w1, b1, w2, b2]
    m_t = [np.zeros_like(p) for p in params]
    v_t = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    report = TrainReport()
    best = [p.copy() for p in params]

    for epoch in range(hyper.epochs):
        order = rng.permutation(x_tr.shape[0])
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, x_tr.shape[0], hyper.batch):
            idx = order[start:start + hyper.batch]
            loss, grads = mlp_gradients(x_tr[idx], y_tr[idx], *params)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}")
            epoch_loss += loss
            n_batches += 1
            step += 1
            for p, g, m, v in zip(params, grads, m_t, v_t):
                if hyper.weight_decay:
                    g = g + hyper.weight_decay * p
                m *= beta1
                m += (1 - beta1) * g
                v *= beta2
                v += (1 - beta2) * g * g
                m_hat = m / (1 - beta1 ** step)
                v_hat = v / (1 - beta2 ** step)
                p -= hyper.lr * m_hat / (np.sqrt(v_hat) + eps)
        report.train_loss.append(epoch_loss / max(n_batches, 1))
        if x_val.shape[0]:
            _, out = mlp_forward(x_val, *params)
            val = float(np.mean((out - y_val) ** 2))
        else:
            val = report.train_loss[-1]
        report.val_loss.append(val)
        if val < report.best_val_loss:
            report.best_val_loss = val
            report.best_epoch = epoch
            best = [p.copy() for p in params]

    model = InverseModel(w1=best[0], b1=best[1], w2=best[2], b2=best[3],
                         x_stats=x_stats, y_stats=y_stats, tau=matrices.tau)
    return model, report
