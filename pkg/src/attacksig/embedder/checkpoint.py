"""Binary embedder checkpoints.

Layout (little-endian)::

    b"AEMB"  u32 version  u32 n_dims  u32[n_dims] dims
    f64 window  f64 hop  f64 log_floor       # mel frontend
    f64[...] tensors in EmbedderDims.shapes() order

dims = (n_mels, hidden, d_e, n_layers, fft_size).
"""

from __future__ import annotations

import struct

import numpy as np

from ..binfmt import CheckpointError, take
from .mel import MelConfig
from .network import EmbedderDims, EmbedderParams

MAGIC = b"AEMB"
VERSION = 1


def save_checkpoint(params: EmbedderParams, path, mel: MelConfig = MelConfig()) -> None:
    d = params.dims
    if mel.n_mels != d.n_mels:
        raise ValueError("mel config n_mels does not match network input width")
    dims = (d.n_mels, d.hidden, d.d_e, d.n_layers, mel.fft_size)
    parts = [
        MAGIC,
        struct.pack("<II", VERSION, len(dims)),
        struct.pack(f"<{len(dims)}I", *dims),
        struct.pack("<3d", mel.window, mel.hop, mel.log_floor),
    ]
    parts += [np.ascontiguousarray(t, dtype="<f8").tobytes() for t in params.tensors.values()]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path, magic: bytes = MAGIC):
    """Return (EmbedderParams, MelConfig)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    head, pos = take(buf, 0, 4, "magic")
    if head != magic:
        raise CheckpointError(f"bad magic {head!r}, expected {magic!r}")
    raw, pos = take(buf, pos, 8, "version")
    version, n_dims = struct.unpack("<II", raw)
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version} (expected {VERSION})", VERSION, version)
    if n_dims != 5:
        raise CheckpointError(f"dimension table has {n_dims} entries, expected 5")
    raw, pos = take(buf, pos, 4 * n_dims, "dimension table")
    n_mels, hidden, d_e, n_layers, fft_size = struct.unpack(f"<{n_dims}I", raw)
    if min(n_mels, hidden, d_e, n_layers) < 1:
        raise CheckpointError("dimension table contains a zero dimension")
    raw, pos = take(buf, pos, 24, "mel frontend")
    window, hop, log_floor = struct.unpack("<3d", raw)
    dims = EmbedderDims(n_mels, hidden, d_e, n_layers)
    tensors = {}
    for name, shape in dims.shapes().items():
        count = int(np.prod(shape, dtype=np.int64))
        raw, pos = take(buf, pos, 8 * count, name)
        tensors[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    if pos != len(buf):
        raise CheckpointError(f"dimension mismatch: {len(buf) - pos} trailing bytes after weights")
    mel = MelConfig(n_mels=n_mels, window=window, hop=hop, fft_size=fft_size, log_floor=log_floor)
    return EmbedderParams(dims, tensors), mel
