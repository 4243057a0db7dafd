"""Stacked LSTM + projection embedder with explicit backpropagation through time.

Each of the three layers is an LSTM followed by a linear projection applied at
every timestep; the projection output is the next layer's input. The
embedding is the last layer's projection at each sequence's own final frame,
L2-normalized. Gate order inside the stacked ``4H`` blocks is
input, forget, cell, output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .loss import angular_proto_loss, angular_proto_loss_grad

N_LAYERS = 3
SCALE_INIT = 10.0
BIAS_INIT = -5.0
SCALE_MIN = 1e-4


@dataclass(frozen=True)
class EmbedderDims:
    n_mels: int = 40
    hidden: int = 768
    d_e: int = 256
    n_layers: int = N_LAYERS

    def layer_io(self, k: int):
        return (self.n_mels if k == 0 else self.d_e), self.hidden, self.d_e

    def shapes(self) -> dict:
        out = {}
        for k in range(self.n_layers):
            n_in, h, d = self.layer_io(k)
            out[f"lstm{k}.w_in"] = (4 * h, n_in)
            out[f"lstm{k}.w_rec"] = (4 * h, h)
            out[f"lstm{k}.bias"] = (4 * h,)
            out[f"proj{k}.weight"] = (d, h)
            out[f"proj{k}.bias"] = (d,)
        out["loss.scale"] = ()
        out["loss.bias"] = ()
        return out


class EmbedderParams:
    """Named float64 tensors of the embedder plus the loss scale and bias."""

    def __init__(self, dims: EmbedderDims, tensors: dict, dtype=np.float64):
        shapes = dims.shapes()
        if list(tensors) != list(shapes):
            raise ValueError(f"tensor names {list(tensors)} do not match {list(shapes)}")
        for name, shape in shapes.items():
            if tensors[name].shape != shape:
                raise ValueError(f"{name}: shape {tensors[name].shape}, expected {shape}")
        self.dims = dims
        self.tensors = {k: np.asarray(v, dtype=dtype) for k, v in tensors.items()}

    @classmethod
    def init(cls, dims: EmbedderDims, seed: int = 0) -> "EmbedderParams":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; forget-gate biases at 1."""
        rng = np.random.default_rng(seed)
        shapes = dims.shapes()
        tensors = {}
        for name, shape in shapes.items():
            if name == "loss.scale":
                tensors[name] = np.array(SCALE_INIT)
            elif name == "loss.bias":
                tensors[name] = np.array(BIAS_INIT)
            elif name.endswith("bias"):
                k = 1.0 / np.sqrt(shapes[name.replace("bias", "w_rec" if name.startswith("lstm") else "weight")][1])
                b = rng.uniform(-k, k, size=shape)
                if name.startswith("lstm"):
                    h = shape[0] // 4
                    b[h:2 * h] = 1.0
                tensors[name] = b
            else:
                k = 1.0 / np.sqrt(shape[1])
                tensors[name] = rng.uniform(-k, k, size=shape)
        return cls(dims, tensors)

    @property
    def dtype(self):
        return self.tensors["loss.scale"].dtype

    def copy(self, dtype=None) -> "EmbedderParams":
        dtype = self.dtype if dtype is None else dtype
        return EmbedderParams(self.dims, {k: v.astype(dtype, copy=True) for k, v in self.tensors.items()}, dtype)

    def __getitem__(self, name):
        return self.tensors[name]

    @property
    def size(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def equal(self, other: "EmbedderParams") -> bool:
        return self.dims == other.dims and all(
            np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors
        )


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _pad(seqs, width, dtype=np.float64):
    lengths = np.array([s.shape[0] for s in seqs])
    if lengths.min() < 1:
        raise ValueError("empty frame sequence")
    X = np.zeros((lengths.max(), len(seqs), width), dtype=dtype)
    for b, s in enumerate(seqs):
        if s.ndim != 2 or s.shape[1] != width:
            raise ValueError(f"frame matrix width {s.shape[-1]} does not match input width {width}")
        X[:s.shape[0], b] = s
    return X, lengths


def _lstm_forward(X, w_in, w_rec, bias):
    T, B, _ = X.shape
    H = w_rec.shape[1]
    dt = X.dtype
    z_in = X @ w_in.T + bias
    h = np.zeros((B, H), dtype=dt)
    c = np.zeros((B, H), dtype=dt)
    hs = np.empty((T, B, H), dtype=dt)
    cs = np.empty((T, B, H), dtype=dt)
    gates = np.empty((T, B, 4 * H), dtype=dt)
    for t in range(T):
        z = z_in[t] + h @ w_rec.T
        a = np.empty_like(z)
        a[:, :2 * H] = _sigmoid(z[:, :2 * H])
        a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        a[:, 3 * H:] = _sigmoid(z[:, 3 * H:])
        c = a[:, H:2 * H] * c + a[:, :H] * a[:, 2 * H:3 * H]
        h = a[:, 3 * H:] * np.tanh(c)
        gates[t], cs[t], hs[t] = a, c, h
    return hs, cs, gates


def _lstm_backward(dhs, X, hs, cs, gates, w_in, w_rec):
    T, B, H = hs.shape
    dz = np.empty((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        a = gates[t]
        i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        tc = np.tanh(cs[t])
        c_prev = cs[t - 1] if t > 0 else 0.0
        dh = dhs[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        d = dz[t]
        d[:, :H] = dc * g * i * (1.0 - i)
        d[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        d[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        d[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = d @ w_rec
    h_prev = np.concatenate([np.zeros((1, B, H)), hs[:-1]], axis=0)
    flat = dz.reshape(T * B, 4 * H)
    g_in = flat.T @ X.reshape(T * B, -1)
    g_rec = flat.T @ h_prev.reshape(T * B, H)
    g_bias = flat.sum(axis=0)
    dX = dz @ w_in
    return dX, g_in, g_rec, g_bias


def forward(params: EmbedderParams, seqs, keep_cache: bool = False):
    """Embed a batch of variable-length frame matrices.

    Sequences are zero-padded to a common length; padding only follows each
    sequence's final frame, so it never influences that sequence's output.
    Returns unit embeddings [B x d_e] (and the cache when ``keep_cache``).
    """
    dims = params.dims
    X, lengths = _pad(seqs, dims.n_mels, params.dtype)
    cache = {"lengths": lengths, "layers": []}
    inp = X
    for k in range(dims.n_layers):
        p = f"lstm{k}"
        hs, cs, gates = _lstm_forward(inp, params[p + ".w_in"], params[p + ".w_rec"], params[p + ".bias"])
        out = hs @ params[f"proj{k}.weight"].T + params[f"proj{k}.bias"]
        cache["layers"].append((inp, hs, cs, gates))
        inp = out
    raw = inp[lengths - 1, np.arange(len(seqs))]
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise FloatingPointError("zero embedding norm")
    emb = raw / norms
    if keep_cache:
        cache["unit"], cache["norms"], cache["T"] = emb, norms, inp.shape[0]
        return emb, cache
    return emb


def backward(params: EmbedderParams, cache, d_emb) -> dict:
    """Gradients of every network tensor given dLoss/d(unit embeddings)."""
    dims = params.dims
    lengths = cache["lengths"]
    u, norms = cache["unit"], cache["norms"]
    d_raw = (d_emb - u * np.sum(u * d_emb, axis=1, keepdims=True)) / norms
    B = len(lengths)
    d_out = np.zeros((cache["T"], B, dims.d_e))
    d_out[lengths - 1, np.arange(B)] = d_raw

    grads = {}
    for k in range(dims.n_layers - 1, -1, -1):
        inp, hs, cs, gates = cache["layers"][k]
        T = hs.shape[0]
        P = params[f"proj{k}.weight"]
        grads[f"proj{k}.weight"] = d_out.reshape(T * B, -1).T @ hs.reshape(T * B, -1)
        grads[f"proj{k}.bias"] = d_out.sum(axis=(0, 1))
        dhs = d_out @ P
        p = f"lstm{k}"
        d_inp, g_in, g_rec, g_bias = _lstm_backward(
            dhs, inp, hs, cs, gates, params[p + ".w_in"], params[p + ".w_rec"]
        )
        grads[p + ".w_in"], grads[p + ".w_rec"], grads[p + ".bias"] = g_in, g_rec, g_bias
        d_out = d_inp
    return grads


def embed(params: EmbedderParams, frames) -> np.ndarray:
    """Unit-norm embedding of a single frame matrix."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ValueError("frames must be a non-empty [T x n_mels] matrix")
    return forward(params, [frames])[0]


def embed_many(params: EmbedderParams, frame_list, batch_size: int = 64) -> np.ndarray:
    """Embed in length-sorted batches; rows come back in input order."""
    order = sorted(range(len(frame_list)), key=lambda i: frame_list[i].shape[0])
    out = np.empty((len(frame_list), params.dims.d_e))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        out[idx] = forward(params, [frame_list[i] for i in idx])
    return out


def _check_batch(batch):
    n = len(batch)
    m = len(batch[0])
    if any(len(row) != m for row in batch):
        raise ValueError("every class needs the same number of utterances")
    return n, m, [s for row in batch for s in row]


def loss_value(params: EmbedderParams, batch) -> float:
    """Angular prototypical loss of an N x M batch, computed in ``params.dtype``."""
    n, m, seqs = _check_batch(batch)
    E = forward(params, seqs).reshape(n, m, -1)
    return angular_proto_loss(E, params["loss.scale"], params["loss.bias"])[0]


def loss_and_grad(params: EmbedderParams, batch):
    """Angular prototypical loss of an N x M batch of frame matrices and its full gradient.

    ``batch[j][m]`` is utterance ``m`` of class ``j``.
    """
    n, m, seqs = _check_batch(batch)
    emb, cache = forward(params, seqs, keep_cache=True)
    E = emb.reshape(n, m, -1)
    w, b = float(params["loss.scale"]), float(params["loss.bias"])
    loss, _, dE, dw, db = angular_proto_loss_grad(E, w, b)
    grads = backward(params, cache, dE.reshape(n * m, -1))
    grads["loss.scale"] = np.array(dw)
    grads["loss.bias"] = np.array(db)
    return loss, {name: grads[name] for name in params.tensors}
