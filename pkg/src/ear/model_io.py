"""EARM container: a trained domain model in one versioned binary file.

Holds adaptor specs and parameters (f32), the target codebook, class
prototypes, and the Weibull calibration, little-endian throughout.
"""

from __future__ import annotations

import struct

import numpy as np

from .adaptor import AdaptorParams, AdaptorSpec
from .errors import BadMagicError, TruncatedFileError, VersionError
from .hdc import Hypervector, TargetCodebook
from .reconfigurator import DomainModel, WeibullParams

EARM_MAGIC = b"EARM"
EARM_VERSION = 1


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def pack(self, fmt: str, *vals):
        self.parts.append(struct.pack("<" + fmt, *vals))

    def raw(self, blob: bytes):
        self.parts.append(blob)

    def array(self, arr: np.ndarray, dtype):
        self.parts.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())

    def blob(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.off = 0
        self.path = path

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        size = struct.calcsize(fmt)
        if self.off + size > len(self.blob):
            raise TruncatedFileError(f"{self.path}: truncated at offset {self.off}")
        vals = struct.unpack_from(fmt, self.blob, self.off)
        self.off += size
        return vals if len(vals) > 1 else vals[0]

    def array(self, count: int, dtype) -> np.ndarray:
        dt = np.dtype(dtype)
        size = count * dt.itemsize
        if self.off + size > len(self.blob):
            raise TruncatedFileError(f"{self.path}: truncated array at {self.off}")
        out = np.frombuffer(self.blob, dtype=dt, count=count, offset=self.off)
        self.off += size
        return out


def _packed_row_bytes(dim: int) -> int:
    return (dim + 7) // 8


def save_model(path, model: DomainModel):
    w = _Writer()
    w.pack("4sH", EARM_MAGIC, EARM_VERSION)
    w.pack("Id", model.domain_id, model.tau_pi)

    w.pack("H", len(model.class_list))
    w.array(model.class_list, "<u4")

    cb = model.codebook
    w.pack("HHI", cb.num_classes, cb.num_adaptors, cb.dim)
    w.raw(np.packbits(cb.vectors, axis=1).tobytes())

    w.pack("H", len(model.specs))
    for spec, params in zip(model.specs, model.params):
        w.pack("HHII", spec.tap_id, spec.depth, spec.output_dim, params.input_dim)
        for width in spec.hidden_widths:
            w.pack("I", width)
        for mat, bias in zip(params.weights, params.biases):
            w.array(mat, "<f4")
            w.array(bias, "<f4")

    w.pack("B", 1 if model.prototypes else 0)
    if model.prototypes:
        rows = np.stack([model.prototypes[int(c)].to_array() for c in model.class_list])
        w.raw(np.packbits(rows, axis=1).tobytes())

    w.pack("B", 1 if model.weibull is not None else 0)
    if model.weibull is not None:
        w.pack("ddd", model.weibull.a, model.weibull.b, model.weibull.c)

    with open(path, "wb") as fh:
        fh.write(w.blob())


def load_model(path) -> DomainModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != EARM_MAGIC:
        raise BadMagicError(f"{path}: not an EARM file")
    r = _Reader(blob, path)
    _, version = r.unpack("4sH")
    if version != EARM_VERSION:
        raise VersionError(f"{path}: unsupported version {version}")
    domain_id, tau_pi = r.unpack("Id")

    ncls = r.unpack("H")
    class_list = r.array(ncls, "<u4").astype(np.int64)

    cb_classes, cb_adaptors, dim = r.unpack("HHI")
    row_bytes = _packed_row_bytes(dim)
    k = cb_classes * cb_adaptors
    packed = r.array(k * row_bytes, np.uint8).reshape(k, row_bytes)
    vectors = np.unpackbits(packed, axis=1, count=dim)
    codebook = TargetCodebook(vectors, cb_classes, cb_adaptors)

    n_specs = r.unpack("H")
    specs, params = [], []
    for _ in range(n_specs):
        tap_id, depth, out_dim, in_dim = r.unpack("HHII")
        widths = tuple(int(r.unpack("I")) for _ in range(depth))
        spec = AdaptorSpec(tap_id, widths, out_dim)
        weights, biases = [], []
        for fan_in, fan_out in spec.layer_sizes(in_dim):
            weights.append(r.array(fan_in * fan_out, "<f4").reshape(fan_in, fan_out).astype(np.float64))
            biases.append(r.array(fan_out, "<f4").astype(np.float64))
        specs.append(spec)
        params.append(AdaptorParams(spec, weights, biases))

    prototypes = {}
    if r.unpack("B"):
        packed = r.array(ncls * _packed_row_bytes(dim), np.uint8).reshape(ncls, -1)
        rows = np.unpackbits(packed, axis=1, count=dim)
        for c, row in zip(class_list, rows):
            prototypes[int(c)] = Hypervector(bits=np.packbits(row), dim=dim)

    weibull = None
    if r.unpack("B"):
        a, b, c = r.unpack("ddd")
        weibull = WeibullParams(a=a, b=b, c=c)

    return DomainModel(
        domain_id=int(domain_id), specs=specs, params=params, codebook=codebook,
        class_list=class_list, prototypes=prototypes, weibull=weibull, tau_pi=float(tau_pi),
    )
