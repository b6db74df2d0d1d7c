"""ResNet-50 feature extractor: patches -> 2048-dim GAP embeddings."""

import sys

import numpy as np
import torch
import torchvision

FEATURE_DIM = 2048
INPUT_SIZE = 224

# Standard ImageNet preprocessing for the torchvision ResNet family.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def load_backbone(name="resnet50", seed=0, device="cpu"):
    """Build the truncated backbone (through global average pooling).

    Published weights are attempted first; when unavailable (offline
    environment) the network falls back to a seeded random initialization
    with a warning, which keeps every structural property (output
    dimension, determinism, formats) intact.
    """
    if name != "resnet50":
        raise ValueError(f"unsupported backbone {name!r}")
    try:
        weights = torchvision.models.ResNet50_Weights.IMAGENET1K_V2
        net = torchvision.models.resnet50(weights=weights)
    except Exception as exc:  # download failure, offline sandbox, ...
        print(
            f"warning: pretrained weights unavailable ({exc}); "
            "using seeded random initialization",
            file=sys.stderr,
        )
        torch.manual_seed(seed)
        net = torchvision.models.resnet50(weights=None)
    # Keep everything up to (and including) the GAP layer; drop the
    # classification head.
    trunk = torch.nn.Sequential(*list(net.children())[:-1])
    trunk.eval()
    trunk.to(device)
    for p in trunk.parameters():
        p.requires_grad_(False)
    return trunk


def preprocess(patches):
    """uint8 patches (m, s, s, 3) -> normalized tensor (m, 3, 224, 224)."""
    x = torch.from_numpy(np.ascontiguousarray(patches)).float() / 255.0
    x = x.permute(0, 3, 1, 2)
    if x.shape[-1] != INPUT_SIZE:
        x = torch.nn.functional.interpolate(
            x, size=(INPUT_SIZE, INPUT_SIZE), mode="bilinear",
            align_corners=False,
        )
    mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
    return (x - mean) / std


def embed_patches(trunk, patches, batch_size=16, device="cpu"):
    """Embed uint8 patches (m, s, s, 3) -> float32 embeddings (m, 2048)."""
    if patches.ndim != 4 or patches.shape[3] != 3:
        raise ValueError(f"patches must be (m, s, s, 3), got {patches.shape}")
    out = []
    with torch.no_grad():
        for start in range(0, patches.shape[0], batch_size):
            batch = preprocess(patches[start:start + batch_size]).to(device)
            feats = trunk(batch).reshape(batch.shape[0], -1)
            out.append(feats.cpu().numpy().astype(np.float32))
    if not out:
        return np.zeros((0, FEATURE_DIM), dtype=np.float32)
    return np.concatenate(out, axis=0)
