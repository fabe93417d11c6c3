"""Binary checkpoint files for :class:`~stkd.nn.Network`.

Layout, all integers little-endian::

    b"STKD"                 magic
    u32                     format version (1)
    u32                     layer count
    per layer:
        u8                  kind tag (0 = affine, 1 = relu)
        u32                 tensor count (2 for affine, 0 for relu)
        per tensor:
            u32             ndim
            u64 * ndim      dims
            f64 * prod      row-major payload
"""
from __future__ import annotations

import struct

import numpy as np

from .nn import Affine, Network, ReLU, ShapeError

MAGIC = b"STKD"
VERSION = 1
_TAGS = {"affine": 0, "relu": 1}


class CheckpointError(ValueError):
    pass


def dumps(net: Network) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(net.layers))]
    for layer in net.layers:
        tensors = layer.params()
        out.append(struct.pack("<BI", _TAGS[layer.kind], len(tensors)))
        for t in tensors:
            out.append(struct.pack("<I", t.ndim))
            out.append(struct.pack(f"<{t.ndim}Q", *t.shape))
            out.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint at byte {self.pos}")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(buf: bytes) -> Network:
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version, n_layers = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    layers = []
    for i in range(n_layers):
        tag, n_tensors = r.unpack("<BI")
        tensors = []
        for _ in range(n_tensors):
            (ndim,) = r.unpack("<I")
            dims = r.unpack(f"<{ndim}Q")
            count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
            data = np.frombuffer(r.take(8 * count), dtype="<f8")
            tensors.append(data.astype(np.float64).reshape(dims))
        if tag == _TAGS["affine"]:
            if n_tensors != 2:
                raise CheckpointError(f"layer {i}: affine needs 2 tensors, got {n_tensors}")
            try:
                layers.append(Affine(*tensors))
            except ShapeError as exc:
                raise CheckpointError(f"layer {i}: {exc}") from None
        elif tag == _TAGS["relu"]:
            if n_tensors != 0:
                raise CheckpointError(f"layer {i}: relu carries no tensors")
            layers.append(ReLU())
        else:
            raise CheckpointError(f"layer {i}: unknown kind tag {tag}")
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after last layer")
    try:
        return Network(layers)
    except ShapeError as exc:
        raise CheckpointError(str(exc)) from None


def save(net: Network, path) -> None:
    with open(path, "wb") as f:
        f.write(dumps(net))


def load(path) -> Network:
    with open(path, "rb") as f:
        return loads(f.read())
