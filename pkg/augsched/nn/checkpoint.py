"""
Binary checkpoint codec.

Layout (little-endian):
    b"AUGS" | u32 version | 32-byte spec hash | u32 len + spec JSON
    | i64 init seed | f64 init scale
    | u32 has_adam [| u64 step | f64 beta1 | f64 beta2 | f64 eps]
    | u32 record count | records | 32-byte sha256 of everything before it
Record: u32 name length | name | u32 rank | u64 dims... | f64 payload
Adam moments are stored as records named ``adam.m/<param>`` and ``adam.v/<param>``.
"""
from __future__ import annotations

import hashlib
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import structlog

from augsched.nn.network import NetworkSpec, ParameterSet
from augsched.nn.optim import AdamState
from augsched.utils.errors import CheckpointError

logger = structlog.get_logger("augsched")

MAGIC = b"AUGS"
FORMAT_VERSION = 1


def _record(name: str, array: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    parts = [struct.pack("<I", len(encoded)), encoded, struct.pack("<I", array.ndim)]
    parts.extend(struct.pack("<Q", d) for d in array.shape)
    parts.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(params: ParameterSet, adam_state: Optional[AdamState], path: Union[str, Path]) -> Path:
    """
    Write parameters (and optionally Adam state) to ``path``

    Args:
        params (ParameterSet): parameters to save
        adam_state (Optional[AdamState]): optimizer state, or None
        path (Union[str, Path]): destination file

    Returns:
        Path: the written path
    """
    path = Path(path)
    spec_json = params.spec.model_dump_json().encode("utf-8")
    body = [
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        bytes.fromhex(params.spec_hash),
        struct.pack("<I", len(spec_json)),
        spec_json,
        struct.pack("<qd", params.seed, params.scale),
    ]
    records = [_record(name, value) for name, value in params.items()]
    if adam_state is not None:
        body.append(struct.pack("<IQddd", 1, adam_state.step, adam_state.beta1, adam_state.beta2, adam_state.eps))
        records.extend(_record(f"adam.m/{name}", value) for name, value in adam_state.m.items())
        records.extend(_record(f"adam.v/{name}", value) for name, value in adam_state.v.items())
    else:
        body.append(struct.pack("<I", 0))
    body.append(struct.pack("<I", len(records)))
    body.extend(records)
    payload = b"".join(body)

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload + hashlib.sha256(payload).digest())
    logger.info("Checkpoint written", path=str(path), spec_hash=params.spec_hash[:12])
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise CheckpointError("Checkpoint is truncated", error_code="checkpoint_truncated")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(
    path: Union[str, Path], expected_spec: Optional[NetworkSpec] = None
) -> Tuple[ParameterSet, Optional[AdamState]]:
    """
    Read a checkpoint written by save_checkpoint

    Args:
        path (Union[str, Path]): checkpoint file
        expected_spec (Optional[NetworkSpec]): if given, the stored spec hash must match it

    Returns:
        Tuple[ParameterSet, Optional[AdamState]]: parameters and optimizer state (if saved)

    Raises:
        CheckpointError: on bad magic, version or spec-hash mismatch, truncation or corruption
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}", error_code="checkpoint_unreadable")
    if len(data) < len(MAGIC) or data[:4] != MAGIC:
        raise CheckpointError(f"{path} is not an augsched checkpoint", error_code="checkpoint_magic")
    if len(data) < 40:
        raise CheckpointError("Checkpoint is truncated", error_code="checkpoint_truncated")
    if hashlib.sha256(data[:-32]).digest() != data[-32:]:
        raise CheckpointError("Checkpoint is truncated or corrupt", error_code="checkpoint_corrupt")

    reader = _Reader(data[:-32])
    reader.take(4)
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}", error_code="checkpoint_version")
    stored_hash = reader.take(32).hex()
    (spec_len,) = reader.unpack("<I")
    spec_json = reader.take(spec_len)
    seed, scale = reader.unpack("<qd")
    (has_adam,) = reader.unpack("<I")
    adam_header = reader.unpack("<Qddd") if has_adam else None
    (count,) = reader.unpack("<I")
    arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        (name_len,) = reader.unpack("<I")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<I")
        dims = reader.unpack(f"<{rank}Q") if rank else ()
        n = int(np.prod(dims)) if rank else 1
        arrays[name] = np.frombuffer(reader.take(8 * n), dtype="<f8").astype(np.float64).reshape(dims)
    if reader.offset != len(reader.data):
        raise CheckpointError("Checkpoint has trailing bytes", error_code="checkpoint_corrupt")

    try:
        spec = NetworkSpec.model_validate_json(spec_json)
    except Exception as e:
        raise CheckpointError(f"Stored network spec is invalid: {e}", error_code="checkpoint_corrupt")
    if spec.spec_hash != stored_hash:
        raise CheckpointError("Stored spec does not match stored spec hash", error_code="checkpoint_corrupt")
    if expected_spec is not None and expected_spec.spec_hash != stored_hash:
        raise CheckpointError(
            "Checkpoint was written for a different network spec", error_code="checkpoint_spec_mismatch"
        )

    names = list(spec.parameter_shapes())
    params = ParameterSet(spec, OrderedDict((name, arrays[name]) for name in names), seed=seed, scale=scale)
    adam_state = None
    if adam_header is not None:
        step, beta1, beta2, eps = adam_header
        adam_state = AdamState(
            m=OrderedDict((name, arrays[f"adam.m/{name}"]) for name in names),
            v=OrderedDict((name, arrays[f"adam.v/{name}"]) for name in names),
            step=int(step),
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )
    return params, adam_state
