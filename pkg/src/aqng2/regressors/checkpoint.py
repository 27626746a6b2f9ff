"""QCK1 checkpoints.

Layout (little-endian)::

    4s   magic b"QCK1"
    u32  version (1)
    u32  length of the JSON header
    ...  JSON: layer_spec, input_len, train_config, normalization
    u64  parameter count P
    P    f32 parameters
    u64  Adam step count
    P    f32 Adam first moment
    P    f32 Adam second moment
    u64  checksum (first 8 bytes of BLAKE2b) over everything after the version field
"""

import hashlib
import json
import struct

import numpy as np

from ..exceptions import BadMagic, ChecksumMismatch, VersionMismatch
from .adam import AdamState, TrainConfig
from .network import PccnnModel

MAGIC = b"QCK1"
VERSION = 1


def _checksum(payload):
    return hashlib.blake2b(payload, digest_size=8).digest()


def save_checkpoint(model, state=None, config=None, normalization=(0.0, 1.0)):
    n = model.n_parameters
    if state is None:
        state = AdamState.zeros(n)
    header = json.dumps(
        {
            "layer_spec": list(model.layer_spec),
            "input_len": model.input_len,
            "train_config": (config or TrainConfig()).to_dict(),
            "normalization": [float(normalization[0]), float(normalization[1])],
        },
        sort_keys=True,
    ).encode()
    payload = b"".join(
        [
            struct.pack("<I", len(header)),
            header,
            struct.pack("<Q", n),
            np.asarray(model.parameters, dtype="<f4").tobytes(),
            struct.pack("<Q", state.step_count),
            np.asarray(state.first_moment, dtype="<f4").tobytes(),
            np.asarray(state.second_moment, dtype="<f4").tobytes(),
        ]
    )
    return MAGIC + struct.pack("<I", VERSION) + payload + _checksum(payload)


def load_checkpoint(blob):
    """Inverse of :func:`save_checkpoint`: ``(model, state, config, normalization)``."""
    blob = bytes(blob)
    if blob[:4] != MAGIC:
        raise BadMagic(f"not a QCK1 checkpoint (magic {blob[:4]!r})")
    if len(blob) < 8:
        raise ChecksumMismatch("checkpoint truncated inside the header")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected {VERSION}")
    payload, stored = blob[8:-8], blob[-8:]
    if len(blob) < 16 or _checksum(payload) != stored:
        raise ChecksumMismatch("checkpoint payload does not match its checksum")

    (hlen,) = struct.unpack_from("<I", payload, 0)
    meta = json.loads(payload[4 : 4 + hlen])
    pos = 4 + hlen
    (n,) = struct.unpack_from("<Q", payload, pos)
    pos += 8

    def block():
        nonlocal pos
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=pos).astype(np.float32)
        pos += 4 * n
        return arr

    params = block()
    (steps,) = struct.unpack_from("<Q", payload, pos)
    pos += 8
    first, second = block(), block()
    model = PccnnModel(tuple(meta["layer_spec"]), meta["input_len"], params)
    state = AdamState(first.astype(np.float64), second.astype(np.float64), int(steps))
    config = TrainConfig(**meta["train_config"])
    return model, state, config, tuple(meta["normalization"])
