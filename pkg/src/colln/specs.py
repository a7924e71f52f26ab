"""Architecture hyperparameters and the named presets used by the CLI."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class ModelSpec:
    """Shape of an encoder: patch grid, width, depth, heads, head count."""

    image_size: int
    patch_size: int
    dim: int
    depth: int
    heads: int
    num_classes: int
    mlp_ratio: int = 4
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD
    ln_eps: float = 1e-6

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ConfigError(
                f"image size {self.image_size} not divisible by patch size {self.patch_size}")
        if self.dim % self.heads != 0:
            raise ConfigError(f"dim {self.dim} not divisible by {self.heads} heads")
        if min(self.depth, self.num_classes, self.mlp_ratio) < 1:
            raise ConfigError("depth, num_classes and mlp_ratio must be >= 1")

    @property
    def grid_side(self) -> int:
        return self.image_size // self.patch_size

    @property
    def patch_count(self) -> int:
        return self.grid_side ** 2

    @property
    def patch_dim(self) -> int:
        return 3 * self.patch_size ** 2

    @property
    def mlp_dim(self) -> int:
        return self.mlp_ratio * self.dim

    def to_json_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "patch_size": self.patch_size,
            "dim": self.dim,
            "depth": self.depth,
            "heads": self.heads,
            "num_classes": self.num_classes,
            "mlp_ratio": self.mlp_ratio,
            "mean": list(self.mean),
            "std": list(self.std),
            "ln_eps": self.ln_eps,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ModelSpec":
        try:
            return cls(
                image_size=int(d["image_size"]),
                patch_size=int(d["patch_size"]),
                dim=int(d["dim"]),
                depth=int(d["depth"]),
                heads=int(d["heads"]),
                num_classes=int(d["num_classes"]),
                mlp_ratio=int(d["mlp_ratio"]),
                mean=tuple(float(v) for v in d["mean"]),
                std=tuple(float(v) for v in d["std"]),
                ln_eps=float(d["ln_eps"]),
            )
        except KeyError as exc:
            raise ConfigError(f"model spec missing field {exc}") from exc


VIT_S16 = ModelSpec(image_size=224, patch_size=16, dim=384, depth=12, heads=6, num_classes=1000)
VIT_B16 = ModelSpec(image_size=224, patch_size=16, dim=768, depth=12, heads=12, num_classes=1000)
VIT_L16 = ModelSpec(image_size=224, patch_size=16, dim=1024, depth=24, heads=16, num_classes=1000)
# small enough for CI: 3x3 patch grid, two blocks
TINY = ModelSpec(image_size=48, patch_size=16, dim=16, depth=2, heads=2, num_classes=10,
                 mean=(0.5, 0.5, 0.5), std=(0.5, 0.5, 0.5))

PRESETS: dict[str, ModelSpec] = {
    "vit-s16": VIT_S16,
    "vit-b16": VIT_B16,
    "vit-l16": VIT_L16,
    "tiny": TINY,
}


def preset(name: str) -> ModelSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown model preset '{name}' (have: {', '.join(sorted(PRESETS))})")
