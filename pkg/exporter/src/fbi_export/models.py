"""Model catalogue: identifiers the export command understands."""

from __future__ import annotations

import torch
import torch.nn as nn

TINY_SEED = 7
VGG_SEED = 42

# torchvision ImageNet convention, 0..1 pixel scale
IMAGENET_MEANS = (0.485, 0.456, 0.406)
IMAGENET_STDS = (0.229, 0.224, 0.225)

TINY_NORM = ((0.5, 0.5, 0.5), (0.25, 0.25, 0.25))


def build_tiny():
    """Small deterministic 2-conv CNN; logits kept soft for probability prints."""
    torch.manual_seed(TINY_SEED)
    net = nn.Sequential(
        nn.Conv2d(3, 4, 3, padding=1),
        nn.ReLU(),
        nn.MaxPool2d(2, 2),
        nn.Conv2d(4, 4, 3, padding=1),
        nn.ReLU(),
        nn.MaxPool2d(2, 2),
        nn.Flatten(),
        nn.Linear(4 * 4 * 4, 8),
        nn.ReLU(),
        nn.Linear(8, 3),
    )
    with torch.no_grad():
        # keep the class scores within a couple of nats of each other
        net[-1].weight.mul_(0.2)
        net[-1].bias.zero_()
    net.eval()
    return net, (3, 16, 16), TINY_NORM, ["alpha", "beta", "gamma"]


def build_vgg16(weights="random"):
    import torchvision.models as tvm

    if weights == "pretrained":
        model = tvm.vgg16(weights=tvm.VGG16_Weights.IMAGENET1K_V1)
    elif weights == "random":
        torch.manual_seed(VGG_SEED)
        model = tvm.vgg16(weights=None)
    else:
        raise ValueError(f"unknown weights variant {weights!r}")
    model.eval()
    return model, (3, 224, 224), (IMAGENET_MEANS, IMAGENET_STDS), None


def resolve(model_id, weights="random"):
    """Return (module, input_shape, normalization, labels, manifest extras)."""
    if model_id == "tiny":
        net, shape, norm, labels = build_tiny()
        return net, shape, norm, labels, {"weights": "builtin", "seed": TINY_SEED}
    if model_id == "vgg16":
        net, shape, norm, labels = build_vgg16(weights)
        extras = {"weights": weights}
        if weights == "random":
            extras["seed"] = VGG_SEED
        return net, shape, norm, labels, extras
    raise ValueError(f"unknown model {model_id!r} (expected 'tiny' or 'vgg16')")
