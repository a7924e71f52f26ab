"""Standalone VITW v1 writer/reader implementing docs/weights-format.md.

Deliberately independent of the engine package: the on-disk format is the
contract between the two sides, and this module is the exporter's half.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

MAGIC = b"VITW"
VERSION = 1
ALIGN = 64

BLOCK_MEMBERS = ("ln1.g", "ln1.b", "attn.qkv.w", "attn.qkv.b",
                 "attn.proj.w", "attn.proj.b", "ln2.g", "ln2.b",
                 "mlp.fc1.w", "mlp.fc1.b", "mlp.fc2.w", "mlp.fc2.b")


@dataclass(frozen=True)
class SpecValues:
    image_size: int
    patch_size: int
    dim: int
    depth: int
    heads: int
    num_classes: int
    mlp_ratio: int = 4
    mean: tuple[float, float, float] = (0.485, 0.456, 0.406)
    std: tuple[float, float, float] = (0.229, 0.224, 0.225)
    ln_eps: float = 1e-6

    @property
    def grid_side(self) -> int:
        return self.image_size // self.patch_size

    @property
    def patch_count(self) -> int:
        return self.grid_side ** 2

    @property
    def patch_dim(self) -> int:
        return 3 * self.patch_size ** 2

    def header_dict(self) -> dict:
        return {
            "image_size": self.image_size, "patch_size": self.patch_size,
            "dim": self.dim, "depth": self.depth, "heads": self.heads,
            "num_classes": self.num_classes, "mlp_ratio": self.mlp_ratio,
            "mean": list(self.mean), "std": list(self.std), "ln_eps": self.ln_eps,
        }


def canonical_order(depth: int) -> list[str]:
    names = ["patch_embed.w", "patch_embed.b", "pos_embed", "cls_token"]
    for i in range(depth):
        names.extend(f"blocks.{i}.{member}" for member in BLOCK_MEMBERS)
    names.extend(["ln_final.g", "ln_final.b", "head.w", "head.b"])
    return names


def expected_shapes(spec: SpecValues) -> dict[str, tuple[int, ...]]:
    d, m, c = spec.dim, spec.mlp_ratio * spec.dim, spec.num_classes
    per_block = {
        "ln1.g": (d,), "ln1.b": (d,),
        "attn.qkv.w": (3 * d, d), "attn.qkv.b": (3 * d,),
        "attn.proj.w": (d, d), "attn.proj.b": (d,),
        "ln2.g": (d,), "ln2.b": (d,),
        "mlp.fc1.w": (m, d), "mlp.fc1.b": (m,),
        "mlp.fc2.w": (d, m), "mlp.fc2.b": (d,),
    }
    shapes = {
        "patch_embed.w": (d, spec.patch_dim), "patch_embed.b": (d,),
        "pos_embed": (spec.patch_count + 1, d), "cls_token": (1, d),
        "ln_final.g": (d,), "ln_final.b": (d,), "head.w": (c, d), "head.b": (c,),
    }
    for i in range(spec.depth):
        for member, shape in per_block.items():
            shapes[f"blocks.{i}.{member}"] = shape
    return shapes


def write_vitw(path, spec: SpecValues, tensors: dict[str, np.ndarray]) -> None:
    """Serialize canonically; same inputs always give identical bytes."""
    order = canonical_order(spec.depth)
    shapes = expected_shapes(spec)
    missing = [n for n in order if n not in tensors]
    extra = sorted(set(tensors) - set(order))
    if missing or extra:
        raise ValueError(f"tensor set mismatch: missing={missing[:4]} extra={extra[:4]}")

    table, blob, offset = [], bytearray(), 0
    for name in order:
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        if arr.shape != shapes[name]:
            raise ValueError(f"'{name}': shape {arr.shape}, expected {shapes[name]}")
        raw = arr.tobytes()
        table.append({"name": name, "dtype": "f32", "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(raw)})
        blob += raw
        offset += len(raw)

    header = json.dumps({"spec": spec.header_dict(), "tensors": table},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    pre = MAGIC + struct.pack("<I", VERSION) + struct.pack("<Q", len(header)) + header
    pad = (-len(pre)) % ALIGN
    with open(path, "wb") as fh:
        fh.write(pre)
        fh.write(b"\x00" * pad)
        fh.write(blob)
        fh.write(struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF))


def read_vitw(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read back a VITW file (for the exporter's own round-trip checks)."""
    raw = open(path, "rb").read()
    if raw[:4] != MAGIC:
        raise ValueError("bad magic")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    blob_start = 16 + hlen + (-(16 + hlen)) % ALIGN
    blob = raw[blob_start:-4]
    (crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(blob) & 0xFFFFFFFF != crc:
        raise ValueError("CRC mismatch")
    tensors = {}
    for entry in header["tensors"]:
        arr = np.frombuffer(blob, dtype="<f4", count=entry["nbytes"] // 4,
                            offset=entry["offset"])
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return header["spec"], tensors
