"""Mixing-ratio estimation.

A trainable regressor maps (mixture, enrollment) to tau_hat in (0,1) via a
shared linear extractor over stats-pooled spectral features, concatenation,
and a 2-layer perceptron head with a sigmoid output. A closed-form
least-squares oracle inverts the mixing equation exactly and serves as the
independent reference in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DivergenceError, FileFormatError
from .signal import Waveform, read_tensor_stream, stft, write_tensor_stream
from .velnet import AdamW, TrainConfig, clip_gradients, lr_for_epoch, \
    stats_features

# Logit bound keeping sigmoid strictly inside (0,1) in float64.
_LOGIT_CLIP = 30.0

_MR_HEADER = "ADFLOW-MRNET v1"


@dataclass
class MrRegressor:
    """Shared extractor w(.) plus 2-layer sigmoid head h(.)."""

    extract_w: np.ndarray   # (embed_dim, feat_dim)
    extract_b: np.ndarray
    head_w1: np.ndarray     # (hidden_dim, 2*embed_dim)
    head_b1: np.ndarray
    head_w2: np.ndarray     # (hidden_dim,)
    head_b2: np.ndarray     # scalar, shape (1,)
    feat_n_fft: int = 256
    feat_hop: int = 64

    def parameters(self) -> list:
        return [self.extract_w, self.extract_b, self.head_w1, self.head_b1,
                self.head_w2, self.head_b2]

    @classmethod
    def create(cls, seed: int = 0, embed_dim: int = 64, hidden_dim: int = 256,
               feat_n_fft: int = 256, feat_hop: int = 64) -> "MrRegressor":
        rng = np.random.default_rng(seed)
        feat_dim = 3 * (feat_n_fft // 2 + 1) + 1

        def glorot(fan_out, fan_in):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=(fan_out, fan_in))

        # near-isometric extractor init keeps inner products between the two
        # embeddings informative; biased, scaled head init gives the tanh
        # units curvature so quadratic (similarity) terms are reachable
        return cls(extract_w=rng.normal(size=(embed_dim, feat_dim))
                   / np.sqrt(embed_dim),
                   extract_b=np.zeros(embed_dim),
                   head_w1=2.0 * glorot(hidden_dim, 2 * embed_dim),
                   head_b1=0.5 * rng.normal(size=hidden_dim),
                   head_w2=glorot(1, hidden_dim)[0],
                   head_b2=np.zeros(1),
                   feat_n_fft=feat_n_fft, feat_hop=feat_hop)


def _sigmoid(z):
    z = np.clip(z, -_LOGIT_CLIP, _LOGIT_CLIP)
    return 1.0 / (1.0 + np.exp(-z))


def mr_features(reg: MrRegressor, w: Waveform) -> np.ndarray:
    """Spectral profile features feeding the shared extractor.

    Unit-normalized linear-magnitude band profile (carries target/background
    similarity), standardized log-magnitude stats (spectral shape and noise
    floor), and the overall log level.
    """
    mag = np.abs(stft(w, reg.feat_n_fft, reg.feat_hop).frames).mean(axis=1)
    lin = mag / (np.linalg.norm(mag) + 1e-12)
    f = stats_features(w, reg.feat_n_fft, reg.feat_hop)
    logp = (f - f.mean()) / (f.std() + 1e-8) / np.sqrt(f.size)
    rms = np.sqrt(np.mean(w.samples ** 2))
    return np.concatenate([lin, logp, [np.log(rms + 1e-8)]])


def mr_embed(reg: MrRegressor, w: Waveform) -> np.ndarray:
    """Shared extractor applied to one waveform."""
    return reg.extract_w @ mr_features(reg, w) + reg.extract_b


def _predict_rows(reg: MrRegressor, fx: np.ndarray, fe: np.ndarray):
    """Batched prediction from precomputed feature rows; keeps activations."""
    zx = fx @ reg.extract_w.T + reg.extract_b
    ze = fe @ reg.extract_w.T + reg.extract_b
    z = np.hstack([zx, ze])
    h = np.tanh(z @ reg.head_w1.T + reg.head_b1)
    logit = h @ reg.head_w2 + reg.head_b2[0]
    return _sigmoid(logit), (z, h, logit)


def mr_predict(reg: MrRegressor, x: Waveform, e: Waveform) -> float:
    """tau_hat = sigmoid(h([w(x); w(e)])), strictly inside (0,1)."""
    pred, _ = _predict_rows(reg, mr_features(reg, x)[None, :],
                            mr_features(reg, e)[None, :])
    return float(pred[0])


def _loss_and_grad(reg: MrRegressor, fx, fe, taus):
    pred, (z, h, logit) = _predict_rows(reg, fx, fe)
    n = taus.size
    resid = pred - taus
    loss = float(np.mean(resid ** 2))
    dlogit = (2.0 / n) * resid * pred * (1.0 - pred)
    d_w2 = dlogit @ h
    d_b2 = np.array([dlogit.sum()])
    dh = np.outer(dlogit, reg.head_w2)
    dz1 = dh * (1.0 - h ** 2)
    d_w1 = dz1.T @ z
    d_b1 = dz1.sum(axis=0)
    dz = dz1 @ reg.head_w1
    embed_dim = reg.extract_b.size
    dzx, dze = dz[:, :embed_dim], dz[:, embed_dim:]
    d_ww = dzx.T @ fx + dze.T @ fe
    d_wb = dzx.sum(axis=0) + dze.sum(axis=0)
    return loss, [d_ww, d_wb, d_w1, d_b1, d_w2, d_b2]


def mr_train(reg: MrRegressor, dataset: list, config: TrainConfig):
    """MSE training against ground-truth tau; returns (reg, loss_trace)."""
    fx = np.stack([mr_features(reg, item.x) for item in dataset])
    fe = np.stack([mr_features(reg, item.e) for item in dataset])
    taus = np.array([item.tau for item in dataset])
    rng = np.random.default_rng(config.seed)
    params = reg.parameters()
    opt = AdamW(params, weight_decay=config.weight_decay)
    trace = []
    for epoch in range(config.epochs):
        lr = lr_for_epoch(config, epoch)
        order = rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = _loss_and_grad(reg, fx[idx], fe[idx], taus[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            grads, _ = clip_gradients(grads, config.grad_clip)
            opt.step(params, grads, lr)
            losses.append(loss)
        trace.append(float(np.mean(losses)))
    return reg, trace


def mr_oracle_lsq(x, s1, b) -> float:
    """Least-squares inversion of the mixing equation, clamped to [0,1]."""
    def arr(v):
        return v.samples if isinstance(v, Waveform) else np.asarray(v, float)

    x, s1, b = arr(x), arr(s1), arr(b)
    d = s1 - b
    denom = float(np.dot(d, d))
    if denom <= 0.0:
        raise DegenerateInputError("s1 and b coincide; tau is unidentifiable")
    tau = float(np.dot(x - b, d) / denom)
    return min(1.0, max(0.0, tau))


def save_mrnet(path, reg: MrRegressor) -> None:
    header = (f"{_MR_HEADER} embed_dim={reg.extract_b.size} "
              f"hidden_dim={reg.head_b1.size} "
              f"feat_n_fft={reg.feat_n_fft} feat_hop={reg.feat_hop}\n")
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        for p in reg.parameters():
            write_tensor_stream(f, p)


def load_mrnet(path) -> MrRegressor:
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").strip()
        if not header.startswith(_MR_HEADER):
            raise FileFormatError(f"{path}: not an MR-regressor checkpoint")
        kv = dict(tok.split("=") for tok in header.split()[2:])
        tensors = [read_tensor_stream(f) for _ in range(6)]
    return MrRegressor(extract_w=tensors[0], extract_b=tensors[1],
                       head_w1=tensors[2], head_b1=tensors[3],
                       head_w2=tensors[4], head_b2=tensors[5],
                       feat_n_fft=int(kv["feat_n_fft"]),
                       feat_hop=int(kv["feat_hop"]))
