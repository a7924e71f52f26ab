import numpy as np
import pytest
import torch


def tiny_torchvision_model(seed=0):
    """Small random-init torchvision ViT matching the engine's tiny preset dims."""
    from torchvision.models.vision_transformer import VisionTransformer

    torch.manual_seed(seed)
    model = VisionTransformer(image_size=48, patch_size=16, num_layers=2,
                              num_heads=2, hidden_dim=16, mlp_dim=64,
                              num_classes=10)
    torch.nn.init.normal_(model.heads.head.weight, std=0.05)
    torch.nn.init.zeros_(model.heads.head.bias)
    model.eval()
    return model


@pytest.fixture
def tiny_checkpoint(tmp_path):
    model = tiny_torchvision_model()
    path = tmp_path / "tiny_tv.pth"
    torch.save(model.state_dict(), path)
    return path, model


def timm_style_state(rng, dim=16, depth=2, grid=3, patch=16, classes=10, mlp=64):
    """Hand-built timm-named random state dict (no timm dependency)."""
    def t(*shape):
        return torch.from_numpy(rng.normal(0, 0.05, shape).astype(np.float32))

    sd = {
        "patch_embed.proj.weight": t(dim, 3, patch, patch),
        "patch_embed.proj.bias": t(dim),
        "pos_embed": t(1, grid * grid + 1, dim),
        "cls_token": t(1, 1, dim),
        "norm.weight": t(dim), "norm.bias": t(dim),
        "head.weight": t(classes, dim), "head.bias": t(classes),
    }
    for i in range(depth):
        p = f"blocks.{i}."
        sd.update({
            p + "norm1.weight": t(dim), p + "norm1.bias": t(dim),
            p + "attn.qkv.weight": t(3 * dim, dim), p + "attn.qkv.bias": t(3 * dim),
            p + "attn.proj.weight": t(dim, dim), p + "attn.proj.bias": t(dim),
            p + "norm2.weight": t(dim), p + "norm2.bias": t(dim),
            p + "mlp.fc1.weight": t(mlp, dim), p + "mlp.fc1.bias": t(mlp),
            p + "mlp.fc2.weight": t(dim, mlp), p + "mlp.fc2.bias": t(dim),
        })
    return sd
