"""Versioned binary checkpoint container.

Layout (little-endian)::

    magic  b"LFDC"
    u32    version
    u32    kind length, kind bytes ("teacher" | "student")
    u32    config length, config echo as JSON
    u32    parameter count
    per parameter: u8 dtype code, u8 ndim, ndim x u32 shape, raw bytes
    32     SHA-256 of everything above
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import ChecksumError, ConfigError

MAGIC = b"LFDC"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {v: k for k, v in _DTYPES.items()}


def _pack(kind, config, params):
    cfg = json.dumps(config, sort_keys=True).encode()
    out = [MAGIC, struct.pack("<I", VERSION),
           struct.pack("<I", len(kind)), kind.encode(),
           struct.pack("<I", len(cfg)), cfg,
           struct.pack("<I", len(params))]
    for p in params:
        dt = p.dtype.newbyteorder("<")
        if dt not in _CODES:
            raise ConfigError(f"cannot store dtype {p.dtype}")
        out.append(struct.pack("<BB", _CODES[dt], p.ndim))
        out.append(struct.pack(f"<{p.ndim}I", *p.shape))
        out.append(np.ascontiguousarray(p, dtype=dt).tobytes())
    body = b"".join(out)
    return body + hashlib.sha256(body).digest()


def _unpack(raw):
    body, digest = raw[:-32], raw[-32:]
    if len(raw) < 48 or hashlib.sha256(body).digest() != digest:
        raise ChecksumError("checkpoint checksum mismatch")
    if body[:4] != MAGIC:
        raise ChecksumError("not a checkpoint file")
    pos = 4
    (version,) = struct.unpack_from("<I", body, pos)
    if version != VERSION:
        raise ChecksumError(f"unsupported checkpoint version {version}")
    pos += 4

    def chunk():
        nonlocal pos
        (n,) = struct.unpack_from("<I", body, pos)
        pos += 4
        pos += n
        return body[pos - n:pos]

    kind = chunk().decode()
    config = json.loads(chunk())
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4
    params = []
    for _ in range(count):
        code, ndim = struct.unpack_from("<BB", body, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}I", body, pos)
        pos += 4 * ndim
        dt = _DTYPES[code]
        n = int(np.prod(shape)) * dt.itemsize
        params.append(np.frombuffer(body, dt, count=n // dt.itemsize, offset=pos)
                      .reshape(shape).copy())
        pos += n
    return kind, config, params


def save(path, kind, config, params):
    Path(path).write_bytes(_pack(kind, config, params))


def load(path):
    return _unpack(Path(path).read_bytes())


def _assign(model, params):
    dest = model.parameters()
    if len(dest) != len(params) or any(a.shape != b.shape for a, b in zip(dest, params)):
        raise ConfigError("checkpoint parameters do not match the model layout")
    for a, b in zip(dest, params):
        a[...] = b


def save_teacher(path, model):
    from .teacher import teacher_config_echo

    save(path, "teacher", teacher_config_echo(model.config), model.parameters())


def load_teacher(path):
    from .teacher import NerfMlp, TeacherConfig

    kind, config, params = load(path)
    if kind != "teacher":
        raise ConfigError(f"{path} holds a {kind} checkpoint")
    fields = TeacherConfig.__dataclass_fields__
    cfg = TeacherConfig(**{k: v for k, v in config.items() if k in fields})
    model = NerfMlp(cfg, dtype=params[0].dtype)
    _assign(model, params)
    return model


def save_student(path, model, encoder):
    from .student import encoder_to_dict

    config = {"network": asdict(model.config), "in_dim": model.in_dim,
              "encoder": encoder_to_dict(encoder),
              "block": "x + relu(W2 relu(W1 x + b1) + b2)",
              "head": "sigmoid"}
    save(path, "student", config, model.parameters())


def load_student(path):
    from .student import ResidualMlp, StudentConfig, encoder_from_dict

    kind, config, params = load(path)
    if kind != "student":
        raise ConfigError(f"{path} holds a {kind} checkpoint")
    model = ResidualMlp(StudentConfig(**config["network"]), config["in_dim"],
                        dtype=params[0].dtype)
    _assign(model, params)
    return model, encoder_from_dict(config["encoder"])
