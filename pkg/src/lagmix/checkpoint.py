"""Self-describing binary checkpoints for velocity states.

Layout (little-endian): magic "LGMX", version u32, model hash (16 bytes of the
sha256 of the canonical model description), time f64, n_u u64, n_z u64,
then the u coefficients and the OU tower state as f64 arrays.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .spectral import FourierField
from .velocity import VelocityModel, VelocityState, describe_model

MAGIC = b"LGMX"
VERSION = 1
_HEADER = struct.Struct("<4sI16sdQQ")


def model_hash(model: VelocityModel) -> bytes:
    payload = json.dumps(describe_model(model), sort_keys=True).encode()
    return hashlib.sha256(payload).digest()[:16]


def save_checkpoint(path, state: VelocityState, model: VelocityModel) -> None:
    u = np.ascontiguousarray(state.u.coeffs, dtype="<f8")
    z = np.ascontiguousarray(state.z, dtype="<f8") if state.z is not None else np.empty(0)
    header = _HEADER.pack(MAGIC, VERSION, model_hash(model), state.t, u.size, z.size)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(u.tobytes())
        fh.write(z.tobytes())


def load_checkpoint(path, model: VelocityModel) -> VelocityState:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        magic, version, mhash, t, n_u, n_z = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a LGMX checkpoint")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        if mhash != model_hash(model):
            raise ValueError(f"{path}: checkpoint belongs to a different model")
        u = np.frombuffer(fh.read(8 * n_u), dtype="<f8").copy()
        z = np.frombuffer(fh.read(8 * n_z), dtype="<f8").copy() if n_z else None
    from .spectral import get_basis

    shape = (model.d - 1,) + get_basis(model.d, model.cutoff).shape
    field = FourierField(model.d, model.cutoff, "velocity", u.reshape(shape))
    return VelocityState(field, t, z)
