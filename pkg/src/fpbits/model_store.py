"""Versioned binary containers for trained artifacts.

Three file kinds share one layout: a 4-byte magic, a version word, a
length-prefixed JSON header (sorted keys, so identical content is identical
bytes), then the named arrays' raw little-endian data in header order.
Writing the same artifact twice produces the same bytes.

* ``FPBM`` - pipeline model: config text, descriptor lattices, both
  subspace models, and the codebook.
* ``FPBS`` - one bit-string (packed bitmap plus its length header).
* ``FPFM`` - one finger's trained statistics, mask, and enrolled string.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .bit_training import FingerModel
from .codebook import BitString, Codebook
from .config import PipelineConfig, parse_config, serialize_config
from .errors import BadMagic, MalformedHeader, TruncatedRecord, UnsupportedVersion
from .local_structures import SpreadModel, StructureGeometry
from .subspace_fusion import PcaModel

MODEL_MAGIC = b"FPBM"
BITS_MAGIC = b"FPBS"
FINGER_MAGIC = b"FPFM"
CONTAINER_VERSION = 1

_DTYPES = {"f8": "<f8", "i8": "<i8", "u1": "|u1"}


@dataclass
class PipelineModel:
    """Everything needed to turn a (template, image) pair into a bit-string."""

    config: PipelineConfig
    geometry: StructureGeometry
    spread: SpreadModel
    pca_m: PcaModel
    pca_t: PcaModel
    codebook: Codebook


# ---------------------------------------------------------------------------
# generic container
# ---------------------------------------------------------------------------

def _pack(magic: bytes, meta: dict, arrays: List[Tuple[str, np.ndarray, str]]) -> bytes:
    header = {
        "meta": meta,
        "arrays": [
            {"name": name, "dtype": code, "shape": list(arr.shape)}
            for name, arr, code in arrays
        ],
    }
    hjson = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = bytearray()
    out += magic
    out += CONTAINER_VERSION.to_bytes(4, "little")
    out += len(hjson).to_bytes(4, "little")
    out += hjson
    for _, arr, code in arrays:
        out += np.ascontiguousarray(arr.astype(_DTYPES[code])).tobytes()
    return bytes(out)


def _unpack(magic: bytes, data: bytes) -> Tuple[dict, Dict[str, np.ndarray]]:
    if len(data) < 4 or data[:4] != magic:
        raise BadMagic(f"expected magic {magic!r}, got {data[:4]!r}")
    if len(data) < 12:
        raise TruncatedRecord("container header truncated")
    version = int.from_bytes(data[4:8], "little")
    if version != CONTAINER_VERSION:
        raise UnsupportedVersion(f"container version {version} not supported")
    hlen = int.from_bytes(data[8:12], "little")
    if len(data) < 12 + hlen:
        raise TruncatedRecord("container JSON header truncated")
    try:
        header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeader(f"container header is not valid JSON: {exc}") from None

    arrays: Dict[str, np.ndarray] = {}
    pos = 12 + hlen
    for spec in header.get("arrays", []):
        code = spec["dtype"]
        if code not in _DTYPES:
            raise MalformedHeader(f"unknown array dtype {code!r}")
        dtype = np.dtype(_DTYPES[code])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = count * dtype.itemsize
        if pos + nbytes > len(data):
            raise TruncatedRecord(f"array {spec['name']!r} truncated")
        arr = np.frombuffer(data[pos : pos + nbytes], dtype=dtype).reshape(spec["shape"])
        arrays[spec["name"]] = arr.copy()
        pos += nbytes
    return header["meta"], arrays


def write_file_atomic(path: str, data: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# pipeline model
# ---------------------------------------------------------------------------

def save_model(model: PipelineModel) -> bytes:
    cb = model.codebook
    meta = {
        "kind": "pipeline-model",
        "config": serialize_config(model.config),
        "tau_s": cb.tau_s,
        "top_t": cb.top_t,
        "n_boundary": cb.n_boundary,
        "has_global_mean": cb.global_mean is not None,
    }
    arrays: List[Tuple[str, np.ndarray, str]] = [
        ("lattice_m", model.geometry.lattice_m, "i8"),
        ("lattice_t", model.geometry.lattice_t, "i8"),
        ("pca_m_mean", model.pca_m.mean, "f8"),
        ("pca_m_basis", model.pca_m.basis, "f8"),
        ("pca_m_variance", model.pca_m.explained_variance, "f8"),
        ("pca_t_mean", model.pca_t.mean, "f8"),
        ("pca_t_basis", model.pca_t.basis, "f8"),
        ("pca_t_variance", model.pca_t.explained_variance, "f8"),
        ("centroids", cb.centroids, "f8"),
        ("radii", cb.radii, "f8"),
        ("cardinalities", cb.cardinalities, "i8"),
        ("weights", cb.weights, "f8"),
    ]
    if cb.global_mean is not None:
        arrays.append(("global_mean", cb.global_mean, "f8"))
    return _pack(MODEL_MAGIC, meta, arrays)


def load_model(data: bytes) -> PipelineModel:
    meta, arrays = _unpack(MODEL_MAGIC, data)
    if meta.get("kind") != "pipeline-model":
        raise MalformedHeader(f"not a pipeline model container: {meta.get('kind')!r}")
    config = parse_config(meta["config"])
    geometry = StructureGeometry(
        r_m=config.r_m,
        r_t=config.r_t,
        downscale_area=config.downscale_area,
        lattice_m=arrays["lattice_m"],
        lattice_t=arrays["lattice_t"],
    )
    spread = SpreadModel(
        sigma_t0=config.sigma_t0,
        sigma_t_slope=config.sigma_t_slope,
        sigma_r0=config.sigma_r0,
        sigma_r_slope=config.sigma_r_slope,
    )
    codebook = Codebook(
        centroids=arrays["centroids"],
        radii=arrays["radii"],
        cardinalities=arrays["cardinalities"],
        weights=arrays["weights"],
        tau_s=float(meta["tau_s"]),
        top_t=int(meta["top_t"]),
        n_boundary=int(meta["n_boundary"]),
        global_mean=arrays.get("global_mean"),
    )
    return PipelineModel(
        config=config,
        geometry=geometry,
        spread=spread,
        pca_m=PcaModel(
            arrays["pca_m_mean"], arrays["pca_m_basis"], arrays["pca_m_variance"]
        ),
        pca_t=PcaModel(
            arrays["pca_t_mean"], arrays["pca_t_basis"], arrays["pca_t_variance"]
        ),
        codebook=codebook,
    )


def load_model_file(path: str) -> PipelineModel:
    from .errors import ModelMissing

    if not os.path.exists(path):
        raise ModelMissing(f"model file {path!r} does not exist")
    with open(path, "rb") as fh:
        return load_model(fh.read())


# ---------------------------------------------------------------------------
# bit-strings
# ---------------------------------------------------------------------------

def save_bitstring(bs: BitString) -> bytes:
    out = bytearray()
    out += BITS_MAGIC
    out += CONTAINER_VERSION.to_bytes(4, "little")
    out += bs.template_length.to_bytes(4, "little")
    out += len(bs).to_bytes(4, "little")
    out += np.packbits(bs.bits).tobytes()
    return bytes(out)


def load_bitstring(data: bytes) -> BitString:
    if len(data) < 4 or data[:4] != BITS_MAGIC:
        raise BadMagic(f"expected magic {BITS_MAGIC!r}, got {data[:4]!r}")
    if len(data) < 16:
        raise TruncatedRecord("bit-string header truncated")
    version = int.from_bytes(data[4:8], "little")
    if version != CONTAINER_VERSION:
        raise UnsupportedVersion(f"bit-string version {version} not supported")
    template_length = int.from_bytes(data[8:12], "little")
    fold_length = int.from_bytes(data[12:16], "little")
    nbytes = (fold_length + 7) // 8
    raw = data[16 : 16 + nbytes]
    if len(raw) < nbytes:
        raise TruncatedRecord(
            f"bit-string payload holds {len(raw)} bytes, needs {nbytes}"
        )
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:fold_length].astype(bool)
    return BitString(bits, template_length=template_length)


# ---------------------------------------------------------------------------
# finger models
# ---------------------------------------------------------------------------

def save_finger(model: FingerModel, enrolled: BitString) -> bytes:
    meta = {
        "kind": "finger-model",
        "finger_id": model.finger_id,
        "n_mean": model.n_mean,
        "alpha": model.alpha,
        "beta": model.beta,
        "template_length": enrolled.template_length,
    }
    arrays = [
        ("power", model.power, "f8"),
        ("reliability", model.reliability, "f8"),
        ("mask", model.mask.astype(np.uint8), "u1"),
        ("enrolled", enrolled.bits.astype(np.uint8), "u1"),
    ]
    return _pack(FINGER_MAGIC, meta, arrays)


def load_finger(data: bytes) -> Tuple[FingerModel, BitString]:
    meta, arrays = _unpack(FINGER_MAGIC, data)
    if meta.get("kind") != "finger-model":
        raise MalformedHeader(f"not a finger model container: {meta.get('kind')!r}")
    model = FingerModel(
        finger_id=str(meta["finger_id"]),
        power=arrays["power"],
        reliability=arrays["reliability"],
        mask=arrays["mask"].astype(bool),
        n_mean=float(meta["n_mean"]),
        alpha=float(meta["alpha"]),
        beta=float(meta["beta"]),
    )
    enrolled = BitString(
        arrays["enrolled"].astype(bool),
        template_length=int(meta["template_length"]),
    )
    return model, enrolled
