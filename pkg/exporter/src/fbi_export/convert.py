"""Torch-module walking and conversion to the engine's layer grammar."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch.nn as nn

from .formats import write_architecture, write_fbiw


class UnsupportedLayer(ValueError):
    """The model contains something the sequential grammar cannot express."""


def _pair(v):
    return [int(v), int(v)] if isinstance(v, int) else [int(v[0]), int(v[1])]


def iter_primitives(model, prefix=""):
    """Flatten a model into (source_name, module) leaves.

    Containers (nn.Sequential, torchvision-style feature/classifier blocks)
    are recursed; anything else must be a primitive leaf the converter knows,
    or conversion aborts naming it.
    """
    if isinstance(model, nn.Sequential):
        for name, child in model.named_children():
            yield from iter_primitives(child, f"{prefix}{name}." if prefix else f"{name}.")
        return
    # torchvision VGG keeps flatten inline in forward(); its children are
    # the conv stack, the (identity) avgpool, and the classifier
    if model.__class__.__name__ == "VGG" and hasattr(model, "features"):
        yield from iter_primitives(model.features, "features.")
        yield ("avgpool", model.avgpool)
        yield ("flatten", nn.Flatten(1))
        yield from iter_primitives(model.classifier, "classifier.")
        return
    yield (prefix.rstrip("."), model)


def _preproc_layer(channels, means, stds):
    """Per-channel affine as a 1x1 conv: (raw/255 - mean)/std on u8 input.

    The engine's CLI feeds raw 8-bit sample values with no mean handling;
    zero-padding downstream then pads the normalized domain, matching the
    source framework exactly.
    """
    weight = np.zeros((channels, channels, 1, 1), dtype=np.float32)
    bias = np.zeros(channels, dtype=np.float32)
    for c in range(channels):
        weight[c, c, 0, 0] = 1.0 / (255.0 * stds[c])
        bias[c] = -means[c] / stds[c]
    spec = {"type": "conv2d", "name": "preproc", "activation": "none",
            "in_channels": channels, "out_channels": channels,
            "kernel": [1, 1], "stride": [1, 1], "padding": [0, 0]}
    return spec, weight, bias


def convert_model(model, input_shape, normalization=None):
    """Translate a torch model to (layer dicts, FBIW entries, layer map).

    input_shape is the engine-side [C, H, W] of the raw image tensor.
    normalization, when given, is (means, stds) on the 0..1 pixel scale and
    becomes an initial 1x1 conv layer.
    """
    layers: list[dict] = []
    entries: dict[str, np.ndarray] = {}
    layer_map: dict[str, list[str]] = {}
    counters = {"conv2d": 0, "maxpool": 0, "dense": 0}
    c, h, w = input_shape

    if normalization is not None:
        means, stds = normalization
        spec, weight, bias = _preproc_layer(c, means, stds)
        layers.append(spec)
        entries["preproc.weight"] = weight
        entries["preproc.bias"] = bias
        layer_map["<normalization>"] = ["preproc.weight", "preproc.bias"]

    def fresh(kind, stem):
        counters[kind] += 1
        return f"{stem}{counters[kind]}"

    flat = False
    for source_name, module in iter_primitives(model):
        if isinstance(module, nn.Conv2d):
            if module.groups != 1 or module.dilation != (1, 1):
                raise UnsupportedLayer(f"{source_name}: grouped/dilated conv")
            if module.padding_mode != "zeros" or isinstance(module.padding, str):
                raise UnsupportedLayer(f"{source_name}: non-zero padding mode")
            if flat:
                raise UnsupportedLayer(f"{source_name}: conv after flatten")
            name = fresh("conv2d", "conv")
            kh, kw = _pair(module.kernel_size)
            sh, sw = _pair(module.stride)
            ph, pw = _pair(module.padding)
            layers.append({"type": "conv2d", "name": name, "activation": "none",
                           "in_channels": int(module.in_channels),
                           "out_channels": int(module.out_channels),
                           "kernel": [kh, kw], "stride": [sh, sw], "padding": [ph, pw]})
            weight = module.weight.detach().cpu().numpy().astype(np.float32)
            bias = (module.bias.detach().cpu().numpy().astype(np.float32)
                    if module.bias is not None
                    else np.zeros(module.out_channels, dtype=np.float32))
            entries[f"{name}.weight"] = weight
            entries[f"{name}.bias"] = bias
            layer_map[source_name] = [f"{name}.weight", f"{name}.bias"]
            if (h + 2 * ph - kh) % sh or (w + 2 * pw - kw) % sw:
                raise UnsupportedLayer(f"{source_name}: non-integral output extent")
            c, h, w = module.out_channels, (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1
        elif isinstance(module, nn.MaxPool2d):
            if _pair(module.padding) != [0, 0] or module.dilation != 1 or module.ceil_mode:
                raise UnsupportedLayer(f"{source_name}: padded/dilated/ceil maxpool")
            name = fresh("maxpool", "pool")
            kh, kw = _pair(module.kernel_size)
            sh, sw = _pair(module.stride if module.stride is not None else module.kernel_size)
            layers.append({"type": "maxpool", "name": name,
                           "kernel": [kh, kw], "stride": [sh, sw]})
            layer_map[source_name] = []
            if (h - kh) % sh or (w - kw) % sw:
                raise UnsupportedLayer(f"{source_name}: non-integral pooled extent")
            h, w = (h - kh) // sh + 1, (w - kw) // sw + 1
        elif isinstance(module, nn.ReLU):
            if not layers or layers[-1]["type"] not in ("conv2d", "dense") \
                    or layers[-1]["activation"] != "none":
                raise UnsupportedLayer(f"{source_name}: ReLU without a weighted layer to fold into")
            layers[-1]["activation"] = "relu"
        elif isinstance(module, nn.Linear):
            if not flat:
                # torch flattens implicitly before classifiers; mirror it
                layers.append({"type": "flatten", "name": "flat"})
                layer_map.setdefault("<flatten>", [])
                flat = True
                c, h, w = c * h * w, 1, 1
            name = fresh("dense", "fc")
            layers.append({"type": "dense", "name": name, "activation": "none",
                           "in": int(module.in_features), "out": int(module.out_features)})
            weight = module.weight.detach().cpu().numpy().astype(np.float32)
            bias = (module.bias.detach().cpu().numpy().astype(np.float32)
                    if module.bias is not None
                    else np.zeros(module.out_features, dtype=np.float32))
            entries[f"{name}.weight"] = weight
            entries[f"{name}.bias"] = bias
            layer_map[source_name] = [f"{name}.weight", f"{name}.bias"]
            c = module.out_features
        elif isinstance(module, nn.Flatten):
            if not flat:
                layers.append({"type": "flatten", "name": "flat"})
                layer_map[source_name or "<flatten>"] = []
                flat = True
                c, h, w = c * h * w, 1, 1
        elif isinstance(module, nn.Dropout):
            continue  # identity at eval time
        elif isinstance(module, nn.AdaptiveAvgPool2d):
            out = _pair(module.output_size)
            if out != [h, w]:
                raise UnsupportedLayer(
                    f"{source_name}: adaptive average pool {out} is not the identity on {h}x{w}")
            layer_map[source_name] = []
        else:
            raise UnsupportedLayer(f"{source_name}: {module.__class__.__name__}")

    if not layers or layers[-1]["type"] != "dense":
        raise UnsupportedLayer("model must end in a linear layer")
    if layers[-1]["activation"] != "none":
        raise UnsupportedLayer("final linear layer must not carry its own activation")
    layers[-1]["activation"] = "softmax"
    return layers, entries, layer_map


def export_model(model, model_name, input_shape, out_dir,
                 normalization=None, labels=None, extra_manifest=None):
    """Write arch.yaml, weights.fbiw, and manifest.json for a torch model."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    layers, entries, layer_map = convert_model(model, input_shape, normalization)

    (out_dir / "arch.yaml").write_text(write_architecture(input_shape, layers))
    (out_dir / "weights.fbiw").write_bytes(write_fbiw(entries))

    means = [0.0] * input_shape[0] if normalization is None else list(normalization[0])
    stds = [1.0] * input_shape[0] if normalization is None else list(normalization[1])
    manifest = {
        "model": model_name,
        "input_size": list(input_shape),
        "channel_order": "rgb" if input_shape[0] == 3 else "gray",
        "means": [round(float(m), 3) for m in means],
        "stds": [round(float(s), 3) for s in stds],
        "pixel_scale": 255,
        "layer_map": layer_map,
    }
    if labels is not None:
        manifest["labels"] = list(labels)
    if extra_manifest:
        manifest.update(extra_manifest)
    mapped = {e for names in layer_map.values() for e in names}
    missing = set(entries) - mapped
    if missing:
        raise AssertionError(f"entries missing from the layer map: {sorted(missing)}")
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out_dir
