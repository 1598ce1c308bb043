"""Bit-exact binary model files.

Layout (all integers little-endian)::

    "SKYM"            4-byte magic
    version           uint16
    kind              uint8   1 centroids, 2 scaler, 3 classifier, 4 regressor
    sections          uint32
    per section:
        name length   uint16, then the ASCII name
        dtype         uint8   1 float64, 2 int64
        ndim          uint8, then ndim uint64 dims
        elements      uint64  (product of dims)
        payload       elements * 8 bytes, little-endian
"""

from __future__ import annotations

import struct

import numpy as np

from .clustering import Centroids
from .errors import BadMagic, CorruptSection, IoFailure, UnsupportedVersion
from .features import StandardScaler
from .neuralnet import ACTIVATIONS, LayerSpec, NetworkModel

MAGIC = b"SKYM"
VERSION = 1
KIND_CENTROIDS, KIND_SCALER, KIND_CLASSIFIER, KIND_REGRESSOR = 1, 2, 3, 4
_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {"f": 1, "i": 2}


def _pack_sections(kind: int, sections: list[tuple[str, np.ndarray]]) -> bytes:
    out = [MAGIC, struct.pack("<HBI", VERSION, kind, len(sections))]
    for name, arr in sections:
        arr = np.asarray(arr)
        code = _CODES[arr.dtype.kind]
        raw = name.encode("ascii")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<BB", code, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(struct.pack("<Q", arr.size))
        out.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptSection("file ends in the middle of a section")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _unpack_sections(data: bytes):
    if data[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {data[:4]!r}")
    r = _Reader(data)
    r.take(4)
    try:
        version, kind, count = r.unpack("<HBI")
    except CorruptSection as exc:
        raise CorruptSection("truncated file header") from exc
    if version != VERSION:
        raise UnsupportedVersion(f"format version {version} (supported: {VERSION})")
    sections = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        try:
            name = r.take(name_len).decode("ascii")
        except UnicodeDecodeError as exc:
            raise CorruptSection("section name is not ASCII") from exc
        code, ndim = r.unpack("<BB")
        if code not in _DTYPES:
            raise CorruptSection(f"section {name!r}: unknown dtype code {code}")
        shape = r.unpack(f"<{ndim}Q")
        (elements,) = r.unpack("<Q")
        if elements != int(np.prod(shape, dtype=np.int64)):
            raise CorruptSection(f"section {name!r}: element count disagrees with shape")
        dt = _DTYPES[code]
        payload = r.take(elements * dt.itemsize)
        sections[name] = np.frombuffer(payload, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    if r.pos != len(data):
        raise CorruptSection("trailing bytes after the last section")
    return kind, sections


def _need(sections, name):
    try:
        return sections[name]
    except KeyError:
        raise CorruptSection(f"missing section {name!r}") from None


def encode_model(model, kind: int | None = None) -> bytes:
    if isinstance(model, Centroids):
        return _pack_sections(KIND_CENTROIDS, [("points", model.points), ("counts", model.counts)])
    if isinstance(model, StandardScaler):
        return _pack_sections(KIND_SCALER, [("means", model.means), ("stds", model.stds)])
    if isinstance(model, NetworkModel):
        if kind is None:
            kind = {"classifier": KIND_CLASSIFIER, "regressor": KIND_REGRESSOR}.get(model.task)
        if kind not in (KIND_CLASSIFIER, KIND_REGRESSOR):
            raise ValueError("network model has no task; pass kind explicitly")
        specs = model.specs
        sections = [
            ("input_dim", np.array([model.input_dim], dtype=np.int64)),
            ("units", np.array([s.units for s in specs], dtype=np.int64)),
            ("activation", np.array([ACTIVATIONS.index(s.activation) for s in specs], dtype=np.int64)),
            ("batch_norm", np.array([int(s.batch_norm) for s in specs], dtype=np.int64)),
            ("dropout", np.array([s.dropout_rate for s in specs], dtype=np.float64)),
            ("params", model.params),
            ("target", np.array([model.target_shift, model.target_scale], dtype=np.float64)),
            ("trained", np.array([int(model.trained)], dtype=np.int64)),
        ]
        for i, s in enumerate(specs):
            if s.batch_norm:
                sections.append((f"running_mean.{i}", model.running_mean[i]))
                sections.append((f"running_var.{i}", model.running_var[i]))
        return _pack_sections(kind, sections)
    raise TypeError(f"cannot persist {type(model).__name__}")


def decode_model(data: bytes):
    kind, s = _unpack_sections(data)
    if kind == KIND_CENTROIDS:
        return Centroids(_need(s, "points"), _need(s, "counts"))
    if kind == KIND_SCALER:
        return StandardScaler(_need(s, "means"), _need(s, "stds"))
    if kind in (KIND_CLASSIFIER, KIND_REGRESSOR):
        units, acts = _need(s, "units"), _need(s, "activation")
        norms, drops = _need(s, "batch_norm"), _need(s, "dropout")
        if not len(units) == len(acts) == len(norms) == len(drops):
            raise CorruptSection("layer description sections disagree in length")
        try:
            specs = [LayerSpec(int(u), ACTIVATIONS[int(a)], float(d), bool(b))
                     for u, a, b, d in zip(units, acts, norms, drops)]
        except (IndexError, ValueError) as exc:
            raise CorruptSection(f"invalid layer description: {exc}") from exc
        model = NetworkModel(specs, int(_need(s, "input_dim")[0]))
        params = _need(s, "params")
        if params.shape != model.params.shape:
            raise CorruptSection("parameter vector does not match the layer description")
        model.set_params(params)
        for i, spec in enumerate(specs):
            if spec.batch_norm:
                model.running_mean[i] = _need(s, f"running_mean.{i}").copy()
                model.running_var[i] = _need(s, f"running_var.{i}").copy()
        model.target_shift, model.target_scale = (float(v) for v in _need(s, "target"))
        model.trained = bool(_need(s, "trained")[0])
        model.task = "classifier" if kind == KIND_CLASSIFIER else "regressor"
        model.eval()
        return model
    raise CorruptSection(f"unknown model kind {kind}")


def store_model(model, path, kind: int | None = None) -> None:
    data = encode_model(model, kind)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_model(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return decode_model(data)
