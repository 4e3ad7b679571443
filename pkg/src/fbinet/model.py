"""Architecture description, weight archive, and the recording forward pass.

An architecture is a YAML document with exactly two top-level fields::

    input_shape: [C, H, W]
    layers:
      - {type: conv2d, name: conv1, activation: relu,
         in_channels: 3, out_channels: 8,
         kernel: [3, 3], stride: [1, 1], padding: [1, 1]}
      - {type: maxpool, name: pool1, kernel: [2, 2], stride: [2, 2]}
      - {type: flatten, name: flat}
      - {type: dense, name: fc, activation: softmax, in: 512, out: 10}

Unknown keys are an error.  ``activation`` defaults to ``none`` and is only
meaningful on conv2d/dense layers; ``softmax`` is restricted to the final
layer, which must be dense.

Weights travel in the FBIW container (little-endian): magic ``FBIW``,
version u32=1, entry count u32, then per entry name_len u32, UTF-8 name,
rank u32, rank x u32 dims, dtype u8 (0 = f32), and the row-major f32
payload.  No padding between entries, no trailing bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import FormatError, ShapeError, ValidationError
from .tensor import ConvGeometry, Shape, affine, conv2d, maxpool2d, relu, softmax

KINDS = ("conv2d", "maxpool", "flatten", "dense")
ACTIVATIONS = ("none", "relu", "softmax")

FBIW_MAGIC = b"FBIW"
FBIW_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a sequential model; activation is an attribute, not a layer."""

    kind: str
    name: str
    activation: str = "none"
    # conv2d
    in_channels: int | None = None
    out_channels: int | None = None
    geometry: ConvGeometry | None = None
    # maxpool
    kernel: tuple[int, int] | None = None
    stride: tuple[int, int] | None = None
    # dense
    in_size: int | None = None
    out_size: int | None = None

    @property
    def has_weights(self) -> bool:
        return self.kind in ("conv2d", "dense")


@dataclass(frozen=True)
class Architecture:
    """Validated layer list plus the statically computed shape chain.

    ``rep_shapes[l]`` is the shape of the representation entering layer ``l``
    (``rep_shapes[0]`` is the input); ``rep_shapes[L]`` is the output shape.
    """

    input_shape: Shape
    layers: tuple[LayerSpec, ...]
    rep_shapes: tuple[Shape, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "rep_shapes", _shape_chain(self.input_shape, self.layers))


def _shape_chain(input_shape: Shape, layers: tuple[LayerSpec, ...]) -> tuple[Shape, ...]:
    if len(input_shape) != 3 or any(d < 1 for d in input_shape):
        raise ValidationError(f"input_shape must be [C,H,W] with positive extents, got {input_shape}")
    if not layers:
        raise ValidationError("architecture has an empty layer list")
    names = [l.name for l in layers]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise ValidationError(f"duplicate layer names: {dup}")

    shapes: list[Shape] = [tuple(input_shape)]
    cur = tuple(input_shape)
    for idx, layer in enumerate(layers):
        is_last = idx == len(layers) - 1
        if layer.activation == "softmax" and not is_last:
            raise ValidationError(f"layer '{layer.name}': softmax is only allowed on the final layer")
        if layer.kind == "conv2d":
            if len(cur) != 3:
                raise ShapeError(f"layer '{layer.name}': conv2d needs a [C,H,W] input, got {cur}")
            if cur[0] != layer.in_channels:
                raise ShapeError(
                    f"layer '{layer.name}': expects {layer.in_channels} input channels, chain gives {cur[0]}"
                )
            h, w = layer.geometry.out_hw((cur[1], cur[2]))
            cur = (layer.out_channels, h, w)
        elif layer.kind == "maxpool":
            if len(cur) != 3:
                raise ShapeError(f"layer '{layer.name}': maxpool needs a [C,H,W] input, got {cur}")
            geom = ConvGeometry(kernel=layer.kernel, stride=layer.stride)
            h, w = geom.out_hw((cur[1], cur[2]))
            cur = (cur[0], h, w)
        elif layer.kind == "flatten":
            if len(cur) != 3:
                raise ShapeError(f"layer '{layer.name}': flatten needs a [C,H,W] input, got {cur}")
            cur = (cur[0] * cur[1] * cur[2],)
        elif layer.kind == "dense":
            if len(cur) != 1:
                raise ShapeError(
                    f"layer '{layer.name}': dense needs a flat input; chain gives {cur} "
                    "(flatten the conv block first)"
                )
            if cur[0] != layer.in_size:
                raise ShapeError(
                    f"layer '{layer.name}': expects input size {layer.in_size}, chain gives {cur[0]}"
                )
            cur = (layer.out_size,)
        else:  # pragma: no cover - constructors reject unknown kinds
            raise ValidationError(f"layer '{layer.name}': unknown kind {layer.kind!r}")
        shapes.append(cur)

    last = layers[-1]
    if last.kind != "dense" or last.activation != "softmax":
        raise ValidationError("final layer must be dense with softmax activation")
    return tuple(shapes)


# -- architecture text -------------------------------------------------------

_COMMON_KEYS = {"type", "name", "activation"}
_KIND_KEYS = {
    "conv2d": {"in_channels", "out_channels", "kernel", "stride", "padding"},
    "maxpool": {"kernel", "stride"},
    "flatten": set(),
    "dense": {"in", "out"},
}
_KIND_ACTIVATIONS = {
    "conv2d": ("none", "relu"),
    "maxpool": ("none",),
    "flatten": ("none",),
    "dense": ("none", "relu", "softmax"),
}


def _int_pair(value, where: str) -> tuple[int, int]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    ):
        raise FormatError(f"{where}: expected a pair of integers, got {value!r}")
    return (value[0], value[1])


def _pos_int(value, where: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise FormatError(f"{where}: expected a positive integer, got {value!r}")
    return value


def _parse_layer(obj, index: int) -> LayerSpec:
    where = f"layers[{index}]"
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected a mapping, got {type(obj).__name__}")
    kind = obj.get("type")
    if kind not in KINDS:
        raise FormatError(f"{where}: type must be one of {KINDS}, got {kind!r}")
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        raise FormatError(f"{where}: missing or empty layer name")
    where = f"layers[{index}] ('{name}')"

    allowed = _COMMON_KEYS | _KIND_KEYS[kind]
    unknown = set(obj) - allowed
    if unknown:
        raise FormatError(f"{where}: unknown keys {sorted(unknown)}")

    activation = obj.get("activation", "none")
    if activation not in ACTIVATIONS:
        raise FormatError(f"{where}: activation must be one of {ACTIVATIONS}, got {activation!r}")
    if activation not in _KIND_ACTIVATIONS[kind]:
        raise FormatError(f"{where}: activation {activation!r} is not valid on a {kind} layer")

    if kind == "conv2d":
        missing = _KIND_KEYS[kind] - set(obj)
        if missing:
            raise FormatError(f"{where}: missing keys {sorted(missing)}")
        geom = ConvGeometry(
            kernel=_int_pair(obj["kernel"], f"{where}.kernel"),
            stride=_int_pair(obj["stride"], f"{where}.stride"),
            padding=_int_pair(obj["padding"], f"{where}.padding"),
        )
        return LayerSpec(
            kind=kind,
            name=name,
            activation=activation,
            in_channels=_pos_int(obj["in_channels"], f"{where}.in_channels"),
            out_channels=_pos_int(obj["out_channels"], f"{where}.out_channels"),
            geometry=geom,
        )
    if kind == "maxpool":
        missing = _KIND_KEYS[kind] - set(obj)
        if missing:
            raise FormatError(f"{where}: missing keys {sorted(missing)}")
        return LayerSpec(
            kind=kind,
            name=name,
            activation=activation,
            kernel=_int_pair(obj["kernel"], f"{where}.kernel"),
            stride=_int_pair(obj["stride"], f"{where}.stride"),
        )
    if kind == "dense":
        missing = _KIND_KEYS[kind] - set(obj)
        if missing:
            raise FormatError(f"{where}: missing keys {sorted(missing)}")
        return LayerSpec(
            kind=kind,
            name=name,
            activation=activation,
            in_size=_pos_int(obj["in"], f"{where}.in"),
            out_size=_pos_int(obj["out"], f"{where}.out"),
        )
    return LayerSpec(kind=kind, name=name, activation=activation)


def load_architecture(text: bytes | str) -> Architecture:
    """Parse and shape-validate an architecture document."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise FormatError(f"architecture parse error{loc}: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("architecture document must be a mapping")
    unknown = set(doc) - {"input_shape", "layers"}
    if unknown:
        raise FormatError(f"unknown top-level keys {sorted(unknown)}")
    if "input_shape" not in doc or "layers" not in doc:
        raise FormatError("architecture needs 'input_shape' and 'layers'")

    shape = doc["input_shape"]
    if (
        not isinstance(shape, (list, tuple))
        or len(shape) != 3
        or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in shape)
    ):
        raise FormatError(f"input_shape must be three positive integers, got {shape!r}")
    raw_layers = doc["layers"]
    if raw_layers is None:
        raw_layers = []
    if not isinstance(raw_layers, list):
        raise FormatError("'layers' must be a list")
    layers = tuple(_parse_layer(obj, i) for i, obj in enumerate(raw_layers))
    return Architecture(input_shape=tuple(shape), layers=layers)


# -- FBIW archive -------------------------------------------------------------

@dataclass
class WeightArchive:
    """Named f32 tensors; conv weights [C_out,C_in,kh,kw], dense [out,in], biases [out]."""

    entries: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.entries[name]

    def __len__(self) -> int:
        return len(self.entries)


def load_weights(data: bytes) -> WeightArchive:
    """Decode an FBIW archive with exact byte accounting."""
    view = memoryview(data)
    off = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal off
        if off + n > len(view):
            raise FormatError(f"truncated archive: need {n} bytes for {what} at offset {off}")
        chunk = view[off : off + n]
        off += n
        return chunk

    if bytes(take(4, "magic")) != FBIW_MAGIC:
        raise FormatError("bad magic: not an FBIW archive")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != FBIW_VERSION:
        raise FormatError(f"unsupported FBIW version {version}")
    (count,) = struct.unpack("<I", take(4, "entry count"))

    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        try:
            name = bytes(take(name_len, "name")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"entry name is not valid UTF-8 at offset {off - name_len}") from exc
        (rank,) = struct.unpack("<I", take(4, "rank"))
        if rank < 1 or rank > 4:
            raise FormatError(f"entry '{name}': rank must be 1..4, got {rank}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        if any(d < 1 for d in dims):
            raise FormatError(f"entry '{name}': zero extent in dims {dims}")
        (dtype,) = struct.unpack("<B", take(1, "dtype"))
        if dtype != 0:
            raise FormatError(f"entry '{name}': unsupported dtype code {dtype}")
        n = 1
        for d in dims:
            n *= d
        payload_off = off
        payload = take(4 * n, f"payload of '{name}'")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
        finite = np.isfinite(arr.reshape(-1))
        if not finite.all():
            bad = int(np.argmin(finite))
            raise FormatError(
                f"entry '{name}': non-finite value at byte offset {payload_off + 4 * bad}"
            )
        if name in entries:
            raise FormatError(f"duplicate entry name '{name}'")
        entries[name] = np.ascontiguousarray(arr)
    if off != len(view):
        raise FormatError(f"{len(view) - off} trailing bytes after the last entry")
    return WeightArchive(entries=entries)


def save_weights(entries: dict[str, np.ndarray]) -> bytes:
    """Encode tensors into FBIW bytes, preserving insertion order."""
    out = [FBIW_MAGIC, struct.pack("<II", FBIW_VERSION, len(entries))]
    for name, arr in entries.items():
        a = np.ascontiguousarray(np.asarray(arr, dtype=np.float32))
        if not np.all(np.isfinite(a)):
            raise ValueError(f"entry '{name}' contains non-finite values")
        encoded = name.encode("utf-8")
        out.append(struct.pack("<I", len(encoded)))
        out.append(encoded)
        out.append(struct.pack("<I", a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(struct.pack("<B", 0))
        out.append(a.astype("<f4").tobytes(order="C"))
    return b"".join(out)


def validate(arch: Architecture, weights: WeightArchive) -> None:
    """Check that every weighted layer finds matching-shape archive entries."""
    for layer in arch.layers:
        if not layer.has_weights:
            continue
        if layer.kind == "conv2d":
            expect_w: Shape = (layer.out_channels, layer.in_channels, *layer.geometry.kernel)
            expect_b: Shape = (layer.out_channels,)
        else:
            expect_w = (layer.out_size, layer.in_size)
            expect_b = (layer.out_size,)
        for suffix, expect in (("weight", expect_w), ("bias", expect_b)):
            key = f"{layer.name}.{suffix}"
            if key not in weights.entries:
                raise ValidationError(f"missing weight entry '{key}' for layer '{layer.name}'")
            got = weights.entries[key].shape
            if tuple(got) != expect:
                raise ValidationError(
                    f"layer '{layer.name}': entry '{key}' has shape {tuple(got)}, expected {expect}"
                )


# -- forward pass --------------------------------------------------------------

@dataclass
class LayerTrace:
    """Recorded intermediates of one layer: z pre-activation, a post-activation."""

    name: str
    kind: str
    z: np.ndarray
    a: np.ndarray
    pool_input: np.ndarray | None = None
    switches: np.ndarray | None = None


@dataclass
class ActivationTrace:
    """Everything the backward methods read: the input, every z/a, pool switches."""

    input: np.ndarray
    layers: list[LayerTrace]

    @property
    def output(self) -> np.ndarray:
        return self.layers[-1].a

    def rep(self, index: int) -> np.ndarray:
        """Forward value at representation ``index`` (0 = the raw input)."""
        return self.input if index == 0 else self.layers[index - 1].a


@dataclass
class Prediction:
    probabilities: np.ndarray
    top_class: int


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return relu(z)
    if activation == "softmax":
        return softmax(z)
    return z


def forward_trace(
    arch: Architecture,
    weights: WeightArchive,
    x: np.ndarray,
) -> tuple[ActivationTrace, Prediction]:
    """Run the network on ``x`` and record every intermediate."""
    validate(arch, weights)
    if tuple(x.shape) != tuple(arch.input_shape):
        raise ShapeError(f"input shape {tuple(x.shape)} != architecture input {arch.input_shape}")
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float32))

    records: list[LayerTrace] = []
    cur = x
    for layer in arch.layers:
        if layer.kind == "conv2d":
            z = conv2d(cur, weights[f"{layer.name}.weight"], weights[f"{layer.name}.bias"], layer.geometry)
            a = _activate(z, layer.activation)
            records.append(LayerTrace(layer.name, layer.kind, z, a))
        elif layer.kind == "dense":
            z = affine(weights[f"{layer.name}.weight"], weights[f"{layer.name}.bias"], cur)
            a = _activate(z, layer.activation)
            records.append(LayerTrace(layer.name, layer.kind, z, a))
        elif layer.kind == "maxpool":
            pooled, switches = maxpool2d(cur, layer.kernel, layer.stride)
            records.append(
                LayerTrace(layer.name, layer.kind, pooled, pooled, pool_input=cur, switches=switches)
            )
        else:  # flatten
            flat = cur.reshape(-1)
            records.append(LayerTrace(layer.name, layer.kind, flat, flat))
        a = records[-1].a
        cur = a

    probs = records[-1].a
    pred = Prediction(probabilities=probs, top_class=int(np.argmax(probs)))
    return ActivationTrace(input=x, layers=records), pred
