"""VITW weight container: a single file holding spec metadata and f32 tensors.

Layout (all integers little-endian):

    bytes 0..3    magic b"VITW"
    bytes 4..7    u32 version (currently 1)
    bytes 8..15   u64 length of the JSON header in bytes
    ...           UTF-8 JSON header {"spec": {...}, "tensors": [...]}
    ...           zero padding so the blob region starts at a multiple of 64
    ...           raw little-endian f32 tensor data, in header order
    last 4 bytes  u32 CRC32 of the blob region

Tensor table entries carry name, dtype ("f32"), shape, offset relative to
the blob region start, and nbytes. The canonical tensor order and the full
byte-exact contract live in docs/weights-format.md; external exporters
write this format directly.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .errors import (BadMagic, BadVersion, ChecksumMismatch, ConfigError,
                     ShapeMismatch, TruncatedBlob, WeightFormatError)
from .specs import ModelSpec

MAGIC = b"VITW"
VERSION = 1
ALIGN = 64

_BLOCK_MEMBERS = ("ln1.g", "ln1.b", "attn.qkv.w", "attn.qkv.b",
                  "attn.proj.w", "attn.proj.b", "ln2.g", "ln2.b",
                  "mlp.fc1.w", "mlp.fc1.b", "mlp.fc2.w", "mlp.fc2.b")


def canonical_schema(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Canonical tensor names and shapes for a spec, in serialization order."""
    d, c = spec.dim, spec.num_classes
    shapes: dict[str, tuple[int, ...]] = {
        "patch_embed.w": (d, spec.patch_dim),
        "patch_embed.b": (d,),
        "pos_embed": (spec.patch_count + 1, d),
        "cls_token": (1, d),
    }
    block_shapes = {
        "ln1.g": (d,), "ln1.b": (d,),
        "attn.qkv.w": (3 * d, d), "attn.qkv.b": (3 * d,),
        "attn.proj.w": (d, d), "attn.proj.b": (d,),
        "ln2.g": (d,), "ln2.b": (d,),
        "mlp.fc1.w": (spec.mlp_dim, d), "mlp.fc1.b": (spec.mlp_dim,),
        "mlp.fc2.w": (d, spec.mlp_dim), "mlp.fc2.b": (d,),
    }
    for i in range(spec.depth):
        for member in _BLOCK_MEMBERS:
            shapes[f"blocks.{i}.{member}"] = block_shapes[member]
    shapes["ln_final.g"] = (d,)
    shapes["ln_final.b"] = (d,)
    shapes["head.w"] = (c, d)
    shapes["head.b"] = (c,)
    return shapes


@dataclass(frozen=True)
class ModelBundle:
    """Immutable spec + named f32 tensors, validated against the canonical schema."""

    spec: ModelSpec
    tensors: Mapping[str, np.ndarray]

    def __post_init__(self):
        schema = canonical_schema(self.spec)
        missing = sorted(set(schema) - set(self.tensors))
        extra = sorted(set(self.tensors) - set(schema))
        if missing:
            raise ShapeMismatch(f"missing tensors: {', '.join(missing[:5])}"
                                + (" ..." if len(missing) > 5 else ""))
        if extra:
            raise ShapeMismatch(f"unknown tensors: {', '.join(extra[:5])}"
                                + (" ..." if len(extra) > 5 else ""))
        fixed = {}
        for name, want in schema.items():
            arr = np.asarray(self.tensors[name])
            if arr.dtype != np.float32:
                raise ShapeMismatch(f"tensor '{name}' must be float32, got {arr.dtype}")
            if arr.shape != want:
                raise ShapeMismatch(f"shape mismatch for '{name}': got {arr.shape}, want {want}")
            fixed[name] = np.ascontiguousarray(arr)
        object.__setattr__(self, "tensors", fixed)

    def block(self, i: int) -> dict[str, np.ndarray]:
        """Short-name view of block i's tensors (keys like 'qkv.w', 'fc1.w')."""
        prefix = f"blocks.{i}."
        return {name[len(prefix):].removeprefix("attn.").removeprefix("mlp."): t
                for name, t in self.tensors.items() if name.startswith(prefix)}

    def names(self) -> Iterator[str]:
        return iter(canonical_schema(self.spec))


def write_bundle(bundle: ModelBundle, path) -> None:
    """Serialize a bundle canonically; identical bundles produce identical bytes."""
    order = list(bundle.names())
    table = []
    offset = 0
    for name in order:
        arr = bundle.tensors[name]
        nbytes = arr.size * 4
        table.append({"name": name, "dtype": "f32", "shape": list(arr.shape),
                      "offset": offset, "nbytes": nbytes})
        offset += nbytes
    header = json.dumps({"spec": bundle.spec.to_json_dict(), "tensors": table},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")

    blob = bytearray()
    for name in order:
        blob += bundle.tensors[name].astype("<f4", copy=False).tobytes()
    crc = zlib.crc32(bytes(blob)) & 0xFFFFFFFF

    pre = MAGIC + struct.pack("<I", VERSION) + struct.pack("<Q", len(header)) + header
    pad = (-len(pre)) % ALIGN
    try:
        with open(path, "wb") as fh:
            fh.write(pre)
            fh.write(b"\x00" * pad)
            fh.write(blob)
            fh.write(struct.pack("<I", crc))
    except OSError as exc:
        raise WeightFormatError(f"cannot write weight file '{path}': {exc}") from exc


def load_bundle(path) -> ModelBundle:
    """Read and fully validate a VITW file; any deviation is an error."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise WeightFormatError(f"cannot read weight file '{path}': {exc}") from exc

    if len(raw) < 16 or raw[:4] != MAGIC:
        raise BadMagic(f"'{path}' is not a VITW file (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise BadVersion(f"unsupported VITW version {version} (expected {VERSION})")
    (header_len,) = struct.unpack_from("<Q", raw, 8)
    header_end = 16 + header_len
    if header_end > len(raw):
        raise TruncatedBlob("file ends inside the JSON header")
    try:
        header = json.loads(raw[16:header_end].decode("utf-8"))
        spec = ModelSpec.from_json_dict(header["spec"])
        table = header["tensors"]
    except (ValueError, KeyError, ConfigError) as exc:
        raise WeightFormatError(f"malformed VITW header: {exc}") from exc

    blob_start = header_end + ((-header_end) % ALIGN)
    blob_end = len(raw) - 4
    if blob_end < blob_start:
        raise TruncatedBlob("file too short for blob region")
    blob = raw[blob_start:blob_end]
    (want_crc,) = struct.unpack_from("<I", raw, blob_end)
    if zlib.crc32(blob) & 0xFFFFFFFF != want_crc:
        raise ChecksumMismatch("blob CRC32 mismatch")

    schema = canonical_schema(spec)
    tensors: dict[str, np.ndarray] = {}
    for entry in table:
        name = entry.get("name", "<unnamed>")
        if entry.get("dtype") != "f32":
            raise WeightFormatError(f"tensor '{name}': unknown dtype {entry.get('dtype')!r}")
        if name not in schema:
            raise ShapeMismatch(f"tensor '{name}' not in canonical schema")
        shape = tuple(int(s) for s in entry["shape"])
        offset, nbytes = int(entry["offset"]), int(entry["nbytes"])
        if nbytes != int(np.prod(shape)) * 4:
            raise ShapeMismatch(f"tensor '{name}': nbytes {nbytes} inconsistent with shape {shape}")
        if offset < 0 or offset + nbytes > len(blob):
            raise TruncatedBlob(f"tensor '{name}' blob truncated "
                                f"(needs bytes {offset}..{offset + nbytes}, have {len(blob)})")
        arr = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=offset)
        tensors[name] = arr.reshape(shape).copy()

    return ModelBundle(spec, tensors)  # completeness + shapes validated here
