"""Source-checkpoint naming schemes and their map onto canonical VITW names.

Supported layouts:

* torchvision VisionTransformer (`encoder.layers.encoder_layer_{i}.*`,
  fused `in_proj_weight`),
* timm ViT (`blocks.{i}.attn.qkv.weight`, fused),
* timm-like with split projections (`blocks.{i}.attn.{q,k,v}_proj.weight`),
  normalized by stacking into the canonical fused [3D, D] layout.

A mapping must consume every source tensor; leftovers abort the export
with the full orphan list so mismatched architectures fail loudly.
"""

from __future__ import annotations

import numpy as np


class MappingError(ValueError):
    pass


def conv_to_patch_rows(conv_w: np.ndarray) -> np.ndarray:
    """[D, 3, P, P] conv kernel -> [D, 3*P*P] rows in (row, col, channel) order."""
    d = conv_w.shape[0]
    return np.ascontiguousarray(conv_w.transpose(0, 2, 3, 1).reshape(d, -1))


def detect_scheme(keys: set[str]) -> str:
    if any(k.startswith("encoder.layers.encoder_layer_0.") for k in keys):
        return "torchvision"
    if "blocks.0.attn.qkv.weight" in keys:
        return "timm"
    if "blocks.0.attn.q_proj.weight" in keys:
        return "timm-split-qkv"
    raise MappingError(
        "unrecognized checkpoint layout; expected torchvision ViT, timm ViT "
        "(fused qkv) or timm-like split q/k/v projections")


def _stem_and_tail(scheme: str) -> dict[str, str]:
    """canonical name -> source name for everything outside the blocks."""
    if scheme == "torchvision":
        return {
            "patch_embed.w": "conv_proj.weight",
            "patch_embed.b": "conv_proj.bias",
            "pos_embed": "encoder.pos_embedding",
            "cls_token": "class_token",
            "ln_final.g": "encoder.ln.weight",
            "ln_final.b": "encoder.ln.bias",
            "head.w": "heads.head.weight",
            "head.b": "heads.head.bias",
        }
    return {
        "patch_embed.w": "patch_embed.proj.weight",
        "patch_embed.b": "patch_embed.proj.bias",
        "pos_embed": "pos_embed",
        "cls_token": "cls_token",
        "ln_final.g": "norm.weight",
        "ln_final.b": "norm.bias",
        "head.w": "head.weight",
        "head.b": "head.bias",
    }


def _block_map(scheme: str, i: int) -> dict[str, str | tuple[str, ...]]:
    """canonical member -> source name, or a tuple to concatenate (q, k, v)."""
    if scheme == "torchvision":
        p = f"encoder.layers.encoder_layer_{i}."
        return {
            "ln1.g": p + "ln_1.weight", "ln1.b": p + "ln_1.bias",
            "attn.qkv.w": p + "self_attention.in_proj_weight",
            "attn.qkv.b": p + "self_attention.in_proj_bias",
            "attn.proj.w": p + "self_attention.out_proj.weight",
            "attn.proj.b": p + "self_attention.out_proj.bias",
            "ln2.g": p + "ln_2.weight", "ln2.b": p + "ln_2.bias",
            "mlp.fc1.w": p + "mlp.0.weight", "mlp.fc1.b": p + "mlp.0.bias",
            "mlp.fc2.w": p + "mlp.3.weight", "mlp.fc2.b": p + "mlp.3.bias",
        }
    p = f"blocks.{i}."
    mapping: dict[str, str | tuple[str, ...]] = {
        "ln1.g": p + "norm1.weight", "ln1.b": p + "norm1.bias",
        "attn.proj.w": p + "attn.proj.weight", "attn.proj.b": p + "attn.proj.bias",
        "ln2.g": p + "norm2.weight", "ln2.b": p + "norm2.bias",
        "mlp.fc1.w": p + "mlp.fc1.weight", "mlp.fc1.b": p + "mlp.fc1.bias",
        "mlp.fc2.w": p + "mlp.fc2.weight", "mlp.fc2.b": p + "mlp.fc2.bias",
    }
    if scheme == "timm":
        mapping["attn.qkv.w"] = p + "attn.qkv.weight"
        mapping["attn.qkv.b"] = p + "attn.qkv.bias"
    else:  # split projections, canonicalized by stacking Q, K, V
        mapping["attn.qkv.w"] = tuple(p + f"attn.{n}_proj.weight" for n in "qkv")
        mapping["attn.qkv.b"] = tuple(p + f"attn.{n}_proj.bias" for n in "qkv")
    return mapping


def count_blocks(scheme: str, keys: set[str]) -> int:
    probe = ("encoder.layers.encoder_layer_{}.ln_1.weight" if scheme == "torchvision"
             else "blocks.{}.norm1.weight")
    depth = 0
    while probe.format(depth) in keys:
        depth += 1
    if depth == 0:
        raise MappingError("no transformer blocks found")
    return depth


def build_name_map(scheme: str, depth: int) -> dict[str, str | tuple[str, ...]]:
    """Total map: canonical VITW name -> source name(s)."""
    full = dict(_stem_and_tail(scheme))
    for i in range(depth):
        for member, src in _block_map(scheme, i).items():
            full[f"blocks.{i}.{member}"] = src
    return full


def apply_map(name_map: dict, source: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Gather canonical tensors, normalizing layouts; raises on any orphan."""
    used: set[str] = set()
    out: dict[str, np.ndarray] = {}
    missing: list[str] = []
    for canonical, src in name_map.items():
        names = src if isinstance(src, tuple) else (src,)
        if any(n not in source for n in names):
            missing.extend(n for n in names if n not in source)
            continue
        parts = [np.asarray(source[n], dtype=np.float32) for n in names]
        used.update(names)
        arr = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)
        if canonical == "patch_embed.w" and arr.ndim == 4:
            arr = conv_to_patch_rows(arr)
        elif canonical in ("pos_embed", "cls_token") and arr.ndim == 3:
            arr = arr[0] if canonical == "pos_embed" else arr.reshape(1, -1)
        out[canonical] = np.ascontiguousarray(arr)
    if missing:
        raise MappingError("source tensors missing for the detected layout: "
                           + ", ".join(sorted(missing)))
    orphans = sorted(set(source) - used)
    if orphans:
        raise MappingError("unmapped source tensors: " + ", ".join(orphans))
    return out
