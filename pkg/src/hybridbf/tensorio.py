"""Binary tensor files for channels, precoders, and model checkpoints.

All payloads are little-endian float64 with complex data stored as
interleaved re/im pairs.  Every file starts with a 4-byte magic tag and a
u32 format version.  Each writer drops a human-readable JSON sidecar at
``<path>.meta.json`` with provenance (seed, config hash, generator name).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .channel import RNG_NAME
from .exceptions import DimensionError
from .precoders import AnalogStructure, HybridPrecoder

CHANNEL_MAGIC = b"HBCH"
PRECODER_MAGIC = b"HBPC"
MODEL_MAGIC = b"HBNN"
FORMAT_VERSION = 1

_STRUCTURE_CODES = {AnalogStructure.FULLY_CONNECTED: 0, AnalogStructure.SUB_CONNECTED: 1}
_STRUCTURE_FROM_CODE = {v: k for k, v in _STRUCTURE_CODES.items()}


def _complex_to_bytes(a: np.ndarray) -> bytes:
    out = np.empty(a.shape + (2,), dtype="<f8")
    out[..., 0] = a.real
    out[..., 1] = a.imag
    return out.tobytes()


def _complex_from_bytes(buf: bytes, shape: tuple[int, ...]) -> np.ndarray:
    flat = np.frombuffer(buf, dtype="<f8").reshape(shape + (2,))
    return (flat[..., 0] + 1j * flat[..., 1]).astype(np.complex128)


def _write_sidecar(path: Path, meta: dict) -> None:
    sidecar = path.with_name(path.name + ".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_sidecar(path) -> dict:
    path = Path(path)
    return json.loads(path.with_name(path.name + ".meta.json").read_text())


def write_channels(path, batch: np.ndarray, seed: int, config_hash: str = "",
                   extra_meta: dict | None = None) -> Path:
    """Write a (batch, n_r, n_t) complex stack plus its metadata sidecar."""
    path = Path(path)
    batch = np.asarray(batch, dtype=np.complex128)
    if batch.ndim != 3:
        raise DimensionError(f"channel batch must be 3-D, got shape {batch.shape}")
    n_batch, n_r, n_t = batch.shape
    header = CHANNEL_MAGIC + struct.pack("<III Q", FORMAT_VERSION, n_r, n_t, n_batch)
    path.write_bytes(header + _complex_to_bytes(batch))
    meta = {"format": "channel-batch", "version": FORMAT_VERSION,
            "n_r": n_r, "n_t": n_t, "batch": n_batch,
            "seed": int(seed), "config_hash": config_hash, "rng": RNG_NAME}
    meta.update(extra_meta or {})
    _write_sidecar(path, meta)
    return path


def read_channels(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != CHANNEL_MAGIC:
        raise DimensionError(f"{path} is not a channel batch file")
    version, n_r, n_t, n_batch = struct.unpack_from("<III Q", raw, 4)
    if version != FORMAT_VERSION:
        raise DimensionError(f"unsupported channel file version {version}")
    return _complex_from_bytes(raw[4 + struct.calcsize("<III Q"):], (n_batch, n_r, n_t))


def write_precoder(path, precoder: HybridPrecoder, seed: int = 0,
                   config_hash: str = "") -> Path:
    """Write analog + digital tensors with the structure tag."""
    path = Path(path)
    f_a, f_d = precoder.f_a, precoder.f_d
    header = PRECODER_MAGIC + struct.pack(
        "<IBIII", FORMAT_VERSION, _STRUCTURE_CODES[precoder.structure],
        f_a.shape[0], f_a.shape[1], f_d.shape[1])
    path.write_bytes(header + _complex_to_bytes(f_a) + _complex_to_bytes(f_d))
    _write_sidecar(path, {"format": "hybrid-precoder", "version": FORMAT_VERSION,
                          "structure": precoder.structure.value,
                          "n_t": f_a.shape[0], "n_rf": f_a.shape[1],
                          "n_s": f_d.shape[1], "seed": int(seed),
                          "config_hash": config_hash, "rng": RNG_NAME})
    return path


def read_precoder(path) -> HybridPrecoder:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != PRECODER_MAGIC:
        raise DimensionError(f"{path} is not a precoder file")
    version, structure, n_t, n_rf, n_s = struct.unpack_from("<IBIII", raw, 4)
    if version != FORMAT_VERSION:
        raise DimensionError(f"unsupported precoder file version {version}")
    offset = 4 + struct.calcsize("<IBIII")
    fa_bytes = n_t * n_rf * 16
    f_a = _complex_from_bytes(raw[offset:offset + fa_bytes], (n_t, n_rf))
    f_d = _complex_from_bytes(raw[offset + fa_bytes:], (n_rf, n_s))
    return HybridPrecoder(f_a=f_a, f_d=f_d, structure=_STRUCTURE_FROM_CODE[structure])


_ACT_CODES = {"relu": 0, "sigmoid": 1, "linear": 2}
_ACT_FROM_CODE = {v: k for k, v in _ACT_CODES.items()}
_ROLE_CODES = {"input": 0, "encoder": 1, "noise": 2, "decoder": 3, "output": 4}
_ROLE_FROM_CODE = {v: k for k, v in _ROLE_CODES.items()}


def save_model(path, model, meta: dict | None = None) -> Path:
    """Checkpoint: versioned header, layer specs, then weight/bias tensors in layer order."""
    path = Path(path)
    dims = model.meta
    parts = [MODEL_MAGIC, struct.pack("<I", FORMAT_VERSION),
             struct.pack("<IIII", dims["n_t"], dims["n_r"], dims["n_rf"], dims["n_s"]),
             struct.pack("<I", len(model.layers)),
             struct.pack("<d", model.noise_sigma)]
    for spec in model.layers:
        parts.append(struct.pack("<IBB", spec.units, _ACT_CODES[spec.activation],
                                 _ROLE_CODES[spec.role]))
    for w, b in zip(model.weights, model.biases):
        if w is None:
            continue
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    path.write_bytes(b"".join(parts))
    sidecar_meta = {"format": "mlp-checkpoint", "version": FORMAT_VERSION,
                    "rng": RNG_NAME, **dims}
    sidecar_meta.update(meta or {})
    _write_sidecar(path, sidecar_meta)
    return path


def load_model(path):
    from .neural import LayerSpec, MlpModel, attach_adam_state

    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MODEL_MAGIC:
        raise DimensionError(f"{path} is not a model checkpoint")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise DimensionError(f"unsupported checkpoint version {version}")
    n_t, n_r, n_rf, n_s = struct.unpack_from("<IIII", raw, 8)
    (n_layers,) = struct.unpack_from("<I", raw, 24)
    (noise_sigma,) = struct.unpack_from("<d", raw, 28)
    offset = 36
    specs = []
    for _ in range(n_layers):
        units, act, role = struct.unpack_from("<IBB", raw, offset)
        offset += struct.calcsize("<IBB")
        specs.append(LayerSpec(units=units, activation=_ACT_FROM_CODE[act],
                               role=_ROLE_FROM_CODE[role]))
    weights, biases = [], []
    fan_in = specs[0].units
    for spec in specs[1:]:
        if spec.role == "noise":
            weights.append(None)
            biases.append(None)
            continue
        n_w = spec.units * fan_in
        w = np.frombuffer(raw, dtype="<f8", count=n_w, offset=offset).reshape(spec.units, fan_in).copy()
        offset += n_w * 8
        b = np.frombuffer(raw, dtype="<f8", count=spec.units, offset=offset).copy()
        offset += spec.units * 8
        weights.append(w)
        biases.append(b)
        fan_in = spec.units
    weights.insert(0, None)
    biases.insert(0, None)
    model = MlpModel(layers=tuple(specs), weights=weights, biases=biases,
                     noise_sigma=noise_sigma,
                     meta={"n_t": n_t, "n_r": n_r, "n_rf": n_rf, "n_s": n_s})
    attach_adam_state(model)
    return model
