"""Checkpoint loading, spec inference and the export entry point."""

from __future__ import annotations

import hashlib
import json
import math
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mapping import apply_map, build_name_map, count_blocks, detect_scheme
from .vitw import SpecValues, write_vitw

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# heads are not recoverable from tensor shapes; known configurations by (dim, depth)
KNOWN_HEADS = {
    (384, 12): 6,    # ViT-S/16
    (768, 12): 12,   # ViT-B/16
    (1024, 24): 16,  # ViT-L/16
    (16, 2): 2,      # engine tiny preset
}


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class ExportManifest:
    source: str
    source_sha256: str
    spec: SpecValues
    name_map: dict[str, str]
    tensor_crc32: dict[str, int]

    def to_json(self) -> str:
        return json.dumps({
            "source": self.source,
            "source_sha256": self.source_sha256,
            "spec": self.spec.header_dict(),
            "name_map": self.name_map,
            "tensor_crc32": self.tensor_crc32,
        }, sort_keys=True, indent=2) + "\n"


def load_state_dict(path) -> dict[str, np.ndarray]:
    """Torch checkpoint -> flat name->float32 ndarray dict."""
    import torch

    try:
        obj = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ExportError(f"cannot read checkpoint '{path}': {exc}") from exc
    for wrapper in ("model", "state_dict"):
        if isinstance(obj, dict) and wrapper in obj and isinstance(obj[wrapper], dict):
            obj = obj[wrapper]
    if not isinstance(obj, dict) or not obj:
        raise ExportError(f"'{path}' does not contain a state dict")
    out = {}
    for name, tensor in obj.items():
        if not hasattr(tensor, "numpy"):
            raise ExportError(f"entry '{name}' is not a tensor")
        out[name] = tensor.detach().to(dtype=torch.float32).numpy()
    return out


def infer_spec(tensors: dict[str, np.ndarray], heads: int | None = None,
               mean=IMAGENET_MEAN, std=IMAGENET_STD) -> SpecValues:
    """Derive the architecture from canonical tensor shapes."""
    dim, patch_dim = tensors["patch_embed.w"].shape
    patch_size = int(round(math.sqrt(patch_dim / 3)))
    if 3 * patch_size ** 2 != patch_dim:
        raise ExportError(f"patch embedding width {patch_dim} is not 3*P^2")
    n_plus_1 = tensors["pos_embed"].shape[0]
    grid = int(round(math.sqrt(n_plus_1 - 1)))
    if grid ** 2 != n_plus_1 - 1:
        raise ExportError(f"{n_plus_1 - 1} patches do not form a square grid")
    depth = 0
    while f"blocks.{depth}.ln1.g" in tensors:
        depth += 1
    mlp_dim = tensors["blocks.0.mlp.fc1.w"].shape[0]
    if mlp_dim % dim != 0:
        raise ExportError(f"MLP width {mlp_dim} is not an integer multiple of dim {dim}")
    if heads is None:
        heads = KNOWN_HEADS.get((dim, depth))
        if heads is None:
            raise ExportError(
                f"unknown head count for dim={dim}, depth={depth}; pass --heads")
    return SpecValues(
        image_size=grid * patch_size, patch_size=patch_size, dim=dim, depth=depth,
        heads=heads, num_classes=tensors["head.w"].shape[0],
        mlp_ratio=mlp_dim // dim, mean=tuple(mean), std=tuple(std))


def _fixture_source(spec_text: str):
    """'torchvision:<builder>[:seed]' -> in-memory random-init state dict."""
    import torch
    import torchvision.models as tvm

    parts = spec_text.split(":")
    builder_name = parts[1]
    seed = int(parts[2]) if len(parts) > 2 else 0
    builder = getattr(tvm, builder_name, None)
    if builder is None:
        raise ExportError(f"torchvision has no model '{builder_name}'")
    torch.manual_seed(seed)
    model = builder()
    # torchvision zero-initializes the classifier; give it real values so
    # exported fixtures produce non-degenerate logits
    head = model.heads.head
    torch.nn.init.normal_(head.weight, std=0.02)
    torch.nn.init.zeros_(head.bias)
    sd = {k: v.detach().to(dtype=torch.float32).numpy()
          for k, v in model.state_dict().items()}
    digest = hashlib.sha256(
        b"".join(sd[k].tobytes() for k in sorted(sd))).hexdigest()
    return sd, digest


def export_checkpoint(source: str, out_path, heads: int | None = None,
                      mean=IMAGENET_MEAN, std=IMAGENET_STD) -> ExportManifest:
    """Convert one checkpoint to VITW; returns (and writes) the manifest."""
    if str(source).startswith("torchvision:"):
        state, digest = _fixture_source(str(source))
        source_id = str(source)
    else:
        state = load_state_dict(source)
        digest = hashlib.sha256(Path(source).read_bytes()).hexdigest()
        source_id = Path(source).name

    scheme = detect_scheme(set(state))
    depth = count_blocks(scheme, set(state))
    name_map = build_name_map(scheme, depth)
    tensors = apply_map(name_map, state)
    spec = infer_spec(tensors, heads=heads, mean=mean, std=std)
    write_vitw(out_path, spec, tensors)

    flat_map = {canonical: " + ".join(src) if isinstance(src, tuple) else src
                for canonical, src in name_map.items()}
    crcs = {name: zlib.crc32(np.ascontiguousarray(arr, dtype="<f4").tobytes())
            for name, arr in tensors.items()}
    manifest = ExportManifest(source=source_id, source_sha256=digest, spec=spec,
                              name_map=flat_map, tensor_crc32=crcs)
    Path(str(out_path) + ".manifest.json").write_text(manifest.to_json())
    return manifest
