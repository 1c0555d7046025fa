"""Frame-wise feedforward velocity field with analytic gradients.

The net maps (current frame +- one frame of context, pooled enrollment
embedding, sinusoidal tau embedding) to a velocity frame. Training regresses
it onto the closed-form target velocity with a mean-squared objective,
optimized by adaptive moments with decoupled weight decay under a cosine
annealing schedule with linear warmup.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flowpath
from .errors import DivergenceError, FileFormatError, ParameterError, ShapeError
from .signal import Waveform, read_tensor_stream, stft, write_tensor_stream

DEFAULT_FRAME_LEN = 64
DEFAULT_HIDDEN = (128, 128, 128)


# ---------------------------------------------------------------------------
# Embeddings and spectral features

def embed_tau(tau: float, dim: int = 16) -> np.ndarray:
    """Sinusoidal features [sin(2 pi f_k tau), cos(2 pi f_k tau)].

    Frequencies run geometrically from 1 to 64 with dim/2 values.
    """
    if dim % 2 != 0 or dim < 0:
        raise ParameterError("tau embedding dim must be a non-negative even int")
    if not 0.0 <= tau <= 1.0:
        raise ParameterError("tau must lie in [0, 1]")
    if dim == 0:
        return np.zeros(0)
    k = dim // 2
    freqs = np.geomspace(1.0, 64.0, k)
    ang = 2 * np.pi * freqs * tau
    return np.concatenate([np.sin(ang), np.cos(ang)])


def stats_features(w: Waveform, n_fft: int = 256, hop: int = 64) -> np.ndarray:
    """Stats-pooled log-magnitude spectrum: per-band mean and std over frames."""
    mag = np.abs(stft(w, n_fft, hop).frames)
    logm = np.log(np.maximum(mag, 1e-8))
    return np.concatenate([logm.mean(axis=1), logm.std(axis=1)])


def standardized_stats(w: Waveform, n_fft: int = 256,
                       hop: int = 64) -> np.ndarray:
    f = stats_features(w, n_fft, hop)
    return (f - f.mean()) / (f.std() + 1e-8)


# ---------------------------------------------------------------------------
# Network

@dataclass
class VelocityNet:
    """MLP parameters plus the fixed enrollment projection."""

    weights: list        # (out, in) matrices
    biases: list
    enroll_proj: np.ndarray  # (enroll_dim, feat_dim), fixed at init
    frame_len: int = DEFAULT_FRAME_LEN
    tau_embed_dim: int = 16
    enroll_embed_dim: int = 16
    feat_n_fft: int = 256
    feat_hop: int = 64

    @property
    def layer_dims(self) -> list:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    def parameters(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    @classmethod
    def create(cls, seed: int = 0, frame_len: int = DEFAULT_FRAME_LEN,
               hidden_dims=DEFAULT_HIDDEN, tau_embed_dim: int = 16,
               enroll_embed_dim: int = 16, feat_n_fft: int = 256,
               feat_hop: int = 64) -> "VelocityNet":
        rng = np.random.default_rng(seed)
        in_dim = 3 * frame_len + enroll_embed_dim + tau_embed_dim
        dims = [in_dim, *hidden_dims, frame_len]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        feat_dim = 2 * (feat_n_fft // 2 + 1)
        proj = rng.normal(size=(enroll_embed_dim, feat_dim)) / np.sqrt(feat_dim)
        return cls(weights=weights, biases=biases, enroll_proj=proj,
                   frame_len=frame_len, tau_embed_dim=tau_embed_dim,
                   enroll_embed_dim=enroll_embed_dim, feat_n_fft=feat_n_fft,
                   feat_hop=feat_hop)


def embed_enrollment(e: Waveform, net: VelocityNet) -> np.ndarray:
    """Standardized stats-pooled spectrum through the fixed projection."""
    if net.enroll_embed_dim == 0:
        return np.zeros(0)
    return net.enroll_proj @ standardized_stats(e, net.feat_n_fft, net.feat_hop)


def _forward(net: VelocityNet, rows: np.ndarray):
    """Forward pass over a (n, input_dim) batch; returns (out, activations)."""
    acts = [rows]
    h = rows
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        h = z if i == last else np.tanh(z)
        acts.append(h)
    return h, acts


def _backward(net: VelocityNet, acts: list, d_out: np.ndarray) -> list:
    """Gradients of a scalar loss wrt parameters, given dLoss/dOutput."""
    grads = [None] * (2 * len(net.weights))
    dz = d_out
    for i in range(len(net.weights) - 1, -1, -1):
        grads[2 * i] = dz.T @ acts[i]
        grads[2 * i + 1] = dz.sum(axis=0)
        if i > 0:
            dh = dz @ net.weights[i]
            dz = dh * (1.0 - acts[i] ** 2)  # acts[i] = tanh(z_{i-1})
    return grads


# ---------------------------------------------------------------------------
# Framing

def frame_signal(x: np.ndarray, frame_len: int):
    """Split into non-overlapping frames, zero-padding the tail."""
    x = np.asarray(x, dtype=np.float64)
    nf = max(1, int(np.ceil(x.size / frame_len)))
    padded = np.zeros(nf * frame_len)
    padded[:x.size] = x
    return padded.reshape(nf, frame_len)


def context_frames(frames: np.ndarray) -> np.ndarray:
    """[prev | current | next] per row, zero-padded at the edges."""
    zero = np.zeros((1, frames.shape[1]))
    prev = np.vstack([zero, frames[:-1]])
    nxt = np.vstack([frames[1:], zero])
    return np.hstack([prev, frames, nxt])


def _build_rows(net: VelocityNet, x: np.ndarray, e_embed: np.ndarray,
                tau: float) -> np.ndarray:
    ctx = context_frames(frame_signal(x, net.frame_len))
    nf = ctx.shape[0]
    cols = [ctx]
    if e_embed.size:
        cols.append(np.tile(e_embed, (nf, 1)))
    te = embed_tau(tau, net.tau_embed_dim)
    if te.size:
        cols.append(np.tile(te, (nf, 1)))
    rows = np.hstack(cols)
    if rows.shape[1] != net.input_dim:
        raise ShapeError(
            f"built input dim {rows.shape[1]} != net input dim {net.input_dim}")
    return rows


def vel_forward(net: VelocityNet, x_frame_context: np.ndarray,
                e_embed: np.ndarray, tau: float) -> np.ndarray:
    """Single-frame forward pass; x_frame_context is [prev|cur|next]."""
    x_frame_context = np.asarray(x_frame_context, dtype=np.float64)
    e_embed = np.asarray(e_embed, dtype=np.float64)
    row = np.concatenate([x_frame_context, e_embed,
                          embed_tau(tau, net.tau_embed_dim)])
    if row.size != net.input_dim:
        raise ShapeError(f"input dim {row.size} != expected {net.input_dim}")
    out, _ = _forward(net, row[None, :])
    return out[0]


def velocity_signal(net: VelocityNet, x: np.ndarray, e_embed: np.ndarray,
                    tau: float) -> np.ndarray:
    """Evaluate the field on a whole signal: frame, forward, re-assemble."""
    x = np.asarray(x, dtype=np.float64)
    rows = _build_rows(net, x, e_embed, tau)
    out, _ = _forward(net, rows)
    return out.reshape(-1)[:x.size]


# ---------------------------------------------------------------------------
# Loss and training

def otcfm_loss_and_grad(net: VelocityNet, batch: list):
    """Mean-squared velocity regression over a batch.

    batch items are (x_tau, e_embed, tau, u_target) with x_tau/u_target
    equal-length signals. Returns (loss, grads) with grads ordered like
    net.parameters().
    """
    rows_list, target_list, mask_list = [], [], []
    total = 0
    for x_tau, e_embed, tau, u_target in batch:
        x_tau = np.asarray(x_tau, dtype=np.float64)
        u_target = np.asarray(u_target, dtype=np.float64)
        if x_tau.shape != u_target.shape:
            raise ShapeError("x_tau and u_target must have equal length")
        rows_list.append(_build_rows(net, x_tau, np.asarray(e_embed), tau))
        tgt = frame_signal(u_target, net.frame_len)
        msk = frame_signal(np.ones(x_tau.size), net.frame_len)
        target_list.append(tgt)
        mask_list.append(msk)
        total += x_tau.size
    rows = np.vstack(rows_list)
    targets = np.vstack(target_list)
    mask = np.vstack(mask_list)
    out, acts = _forward(net, rows)
    diff = (out - targets) * mask
    loss = float(np.sum(diff ** 2) / total)
    grads = _backward(net, acts, 2.0 * diff / total)
    return loss, grads


@dataclass
class TrainConfig:
    lr_init: float = 1e-4
    lr_min: float = 1e-5
    warmup_epochs: int = 5
    t_max_epochs: int = 50
    weight_decay: float = 0.01
    grad_clip: float = 0.5
    batch_size: int = 16
    epochs: int = 60
    seed: int = 0

    def __post_init__(self):
        if self.lr_init <= 0 or self.lr_min <= 0:
            raise ParameterError("learning rates must be positive")
        if self.lr_min > self.lr_init:
            raise ParameterError("lr_min must not exceed lr_init")
        if self.warmup_epochs < 1 or self.t_max_epochs < 1:
            raise ParameterError("schedule lengths must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ParameterError("batch size and epochs must be positive")
        if self.grad_clip <= 0 or self.weight_decay < 0:
            raise ParameterError("bad grad_clip or weight_decay")


def lr_for_epoch(config: TrainConfig, epoch: int) -> float:
    """Linear warmup, then cosine annealing from lr_init to lr_min."""
    if epoch < config.warmup_epochs:
        return config.lr_init * (epoch + 1) / config.warmup_epochs
    progress = min(epoch - config.warmup_epochs, config.t_max_epochs)
    return config.lr_min + 0.5 * (config.lr_init - config.lr_min) * (
        1.0 + np.cos(np.pi * progress / config.t_max_epochs))


def clip_gradients(grads: list, max_norm: float):
    """Scale all gradients so the global L2 norm is at most max_norm."""
    total = np.sqrt(sum(float(np.sum(g ** 2)) for g in grads))
    if total > max_norm:
        scale = max_norm / total
        grads = [g * scale for g in grads]
    return grads, total


class AdamW:
    """Adaptive moments with decoupled weight decay.

    Decay is applied only to weight matrices (ndim >= 2), multiplicatively by
    (1 - lr * decay) before the moment update.
    """

    def __init__(self, params: list, weight_decay: float = 0.01,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list, grads: list, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.ndim >= 2 and self.weight_decay > 0:
                p *= 1.0 - lr * self.weight_decay
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g ** 2
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def train_velocity(net: VelocityNet, dataset: list, config: TrainConfig,
                   path_params: flowpath.PathParams | None = None):
    """Train the velocity field on MixtureItems; returns (net, loss_trace).

    Per step a fresh tau ~ U[0,1] is drawn per item and the path state is
    re-sampled; the regression target is the closed-form velocity.
    Fully deterministic under config.seed.
    """
    pp = path_params or flowpath.PathParams()
    rng = np.random.default_rng(config.seed)
    e_embeds = [embed_enrollment(item.e, net) for item in dataset]
    params = net.parameters()
    opt = AdamW(params, weight_decay=config.weight_decay)
    trace = []
    for epoch in range(config.epochs):
        lr = lr_for_epoch(config, epoch)
        order = rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = []
            for j in order[start:start + config.batch_size]:
                item = dataset[j]
                tau = float(rng.uniform())
                state = flowpath.sample_path_state(
                    item.b.samples, item.s1.samples, tau, pp,
                    seed=int(rng.integers(0, 2 ** 31)))
                u = flowpath.target_velocity(state, item.b.samples,
                                             item.s1.samples, pp)
                batch.append((state.x, e_embeds[j], tau, u))
            loss, grads = otcfm_loss_and_grad(net, batch)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            grads, _ = clip_gradients(grads, config.grad_clip)
            opt.step(params, grads, lr)
            losses.append(loss)
        trace.append(float(np.mean(losses)))
    return net, trace


# ---------------------------------------------------------------------------
# Checkpoints

_VEL_HEADER = "ADFLOW-VELNET v1"


def save_velnet(path, net: VelocityNet) -> None:
    dims = ",".join(str(d) for d in net.layer_dims)
    header = (f"{_VEL_HEADER} dims={dims} frame_len={net.frame_len} "
              f"tau_dim={net.tau_embed_dim} enroll_dim={net.enroll_embed_dim} "
              f"feat_n_fft={net.feat_n_fft} feat_hop={net.feat_hop}\n")
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        for w, b in zip(net.weights, net.biases):
            write_tensor_stream(f, w)
            write_tensor_stream(f, b)
        write_tensor_stream(f, net.enroll_proj)


def load_velnet(path) -> VelocityNet:
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").strip()
        if not header.startswith(_VEL_HEADER):
            raise FileFormatError(f"{path}: not a velocity-net checkpoint")
        kv = dict(tok.split("=") for tok in header.split()[2:])
        dims = [int(d) for d in kv["dims"].split(",")]
        weights, biases = [], []
        for _ in range(len(dims) - 1):
            weights.append(read_tensor_stream(f))
            biases.append(read_tensor_stream(f))
        proj = read_tensor_stream(f)
    return VelocityNet(weights=weights, biases=biases, enroll_proj=proj,
                       frame_len=int(kv["frame_len"]),
                       tau_embed_dim=int(kv["tau_dim"]),
                       enroll_embed_dim=int(kv["enroll_dim"]),
                       feat_n_fft=int(kv["feat_n_fft"]),
                       feat_hop=int(kv["feat_hop"]))
