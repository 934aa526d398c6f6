"""Declarative architectures, seeded random initialization and tapped forward passes.

An :class:`ArchSpec` is a flat list of :class:`LayerSpec` entries. Residual
blocks are delimited by ``block-begin`` / ``block-end`` markers; everything in
between is the residual branch. The ``block-begin`` marker carries the block's
wiring (identity skip or not, skip projection, where the ReLU sits relative to
the add). A ``tap`` on any layer names that layer's output.

Presets cover the ablation family used to study residual connections:
``vgg19``, ``resnet50``, ``noresnet``, ``pseudo_vgg``, ``pseudo_resvgg``,
``wrn`` and ``resnet50_preact``.
"""

from __future__ import annotations

import dataclasses
import json
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, NumericFault, UsageError
from .tensor import Tensor

LAYER_KINDS = ("conv", "bn", "relu", "maxpool", "block-begin", "block-end")
RELU_PLACEMENTS = ("post-add", "pre-add")

FeatureTaps = "OrderedDict[str, Tensor]"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    channels_out: int = 0
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    residual: bool = False
    skip_projection: bool = False
    relu_placement: str = "post-add"
    tap: str | None = None
    # scaled by ArchSpec.widen_factor (inner bottleneck width, as in WRN-50-2)
    widen: bool = False

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if self.relu_placement not in RELU_PLACEMENTS:
            raise ConfigurationError(f"unknown relu placement {self.relu_placement!r}")
        if self.kind == "maxpool" and (self.kernel, self.stride) == (1, 1):
            # pooling is always 2x2/2; fill it in for terse hand-written specs
            object.__setattr__(self, "kernel", 2)
            object.__setattr__(self, "stride", 2)


@dataclass(frozen=True)
class ArchSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    style_taps: tuple[str, ...]
    content_tap: str
    width_scale: float = 0.25
    widen_factor: int = 1
    default_beta: float = 1e17

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "style_taps", tuple(self.style_taps))
        if not 0 < self.width_scale <= 1:
            raise ConfigurationError("width_scale must lie in (0, 1]")
        if self.widen_factor < 1:
            raise ConfigurationError("widen_factor must be >= 1")
        taps = self.taps()
        if len(set(taps)) != len(taps):
            raise ConfigurationError(f"{self.name}: duplicate tap names")
        missing = [t for t in (*self.style_taps, self.content_tap) if t not in taps]
        if missing:
            raise ConfigurationError(f"{self.name}: undeclared taps {missing}")
        order = [taps.index(t) for t in self.style_taps]
        if order != sorted(order):
            raise ConfigurationError(f"{self.name}: style taps must run shallow to deep")
        _plan(self)  # validates block structure and channel flow

    def taps(self) -> list[str]:
        return [l.tap for l in self.layers if l.tap]

    def channels(self, layer: LayerSpec) -> int:
        widen = self.widen_factor if layer.widen else 1
        return max(1, round(self.width_scale * widen * layer.channels_out))

    def replace(self, **changes) -> "ArchSpec":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        defaults = LayerSpec(kind="relu")
        layers = []
        for layer in self.layers:
            entry = {"kind": layer.kind}
            for f in dataclasses.fields(LayerSpec):
                value = getattr(layer, f.name)
                if f.name != "kind" and value != getattr(defaults, f.name):
                    entry[f.name] = value
            layers.append(entry)
        return {
            "name": self.name,
            "width_scale": self.width_scale,
            "widen_factor": self.widen_factor,
            "default_beta": self.default_beta,
            "style_taps": list(self.style_taps),
            "content_tap": self.content_tap,
            "layers": layers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        try:
            layers = tuple(LayerSpec(**entry) for entry in d["layers"])
            return cls(
                name=d["name"],
                layers=layers,
                style_taps=tuple(d["style_taps"]),
                content_tap=d["content_tap"],
                width_scale=float(d.get("width_scale", 0.25)),
                widen_factor=int(d.get("widen_factor", 1)),
                default_beta=float(d.get("default_beta", 1e17)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed architecture description: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ArchSpec":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# spec compilation


@dataclass
class _Step:
    index: int
    layer: LayerSpec
    cin: int
    cout: int


def _plan(spec: ArchSpec) -> list[_Step]:
    """Resolve channel counts for every layer and check block wiring."""
    steps = []
    c = 3
    open_block: tuple[LayerSpec, int] | None = None
    for i, layer in enumerate(spec.layers):
        cin = c
        if layer.kind == "conv":
            if layer.kernel not in (1, 3, 7):
                raise ConfigurationError(f"layer {i}: kernel must be 1, 3 or 7")
            c = spec.channels(layer)
        elif layer.kind == "maxpool":
            if (layer.kernel, layer.stride) != (2, 2):
                raise ConfigurationError(f"layer {i}: maxpool must be 2x2 with stride 2")
        elif layer.kind == "bn":
            if layer.channels_out and spec.channels(layer) != c:
                raise ConfigurationError(f"layer {i}: bn channels do not match input ({c})")
        elif layer.kind == "block-begin":
            if open_block is not None:
                raise ConfigurationError(f"layer {i}: nested blocks are not supported")
            open_block = (layer, c)
        elif layer.kind == "block-end":
            if open_block is None:
                raise ConfigurationError(f"layer {i}: block-end without block-begin")
            begin, block_cin = open_block
            if begin.residual:
                if not begin.skip_projection and (block_cin != c or begin.stride != 1):
                    raise ConfigurationError(
                        f"layer {i}: identity skip needs matching shapes; "
                        f"{block_cin}->{c} at stride {begin.stride} requires skip_projection")
                if begin.skip_projection and spec.channels(begin) != c:
                    raise ConfigurationError(f"layer {i}: projection width != branch width")
            open_block = None
        steps.append(_Step(i, layer, cin, c))
    if open_block is not None:
        raise ConfigurationError("unterminated block")
    return steps


def parameter_shapes(spec: ArchSpec) -> "OrderedDict[str, tuple[int, ...]]":
    shapes: OrderedDict[str, tuple[int, ...]] = OrderedDict()
    pending_begin: _Step | None = None
    for step in _plan(spec):
        layer, i = step.layer, step.index
        if layer.kind == "conv":
            k = layer.kernel
            shapes[f"L{i}.weight"] = (step.cout, step.cin, k, k)
            shapes[f"L{i}.bias"] = (step.cout,)
        elif layer.kind == "bn":
            for name in ("gamma", "beta", "running_mean", "running_var"):
                shapes[f"L{i}.{name}"] = (step.cin,)
        elif layer.kind == "block-begin":
            pending_begin = step
        elif layer.kind == "block-end":
            begin = pending_begin
            if begin.layer.residual and begin.layer.skip_projection:
                j, cin, cout = begin.index, begin.cin, step.cout
                shapes[f"L{j}.proj.weight"] = (cout, cin, 1, 1)
                shapes[f"L{j}.proj.bias"] = (cout,)
                for name in ("gamma", "beta", "running_mean", "running_var"):
                    shapes[f"L{j}.proj_bn.{name}"] = (cout,)
    return shapes


# ---------------------------------------------------------------------------
# presets


def _conv(c, k, stride=1, tap=None, widen=False):
    return LayerSpec("conv", channels_out=c, kernel=k, stride=stride, padding=k // 2,
                     tap=tap, widen=widen)


def _bn():
    return LayerSpec("bn")


def _relu(tap=None):
    return LayerSpec("relu", tap=tap)


def _pool(tap=None):
    return LayerSpec("maxpool", kernel=2, stride=2, tap=tap)


VGG_STYLE_TAPS = ("conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1")
RESNET_STYLE_TAPS = ("conv1_2", "conv2_3", "conv3_4", "conv4_6", "conv5_3")
RESNET_STAGES = ((3, 64, 256), (4, 128, 512), (6, 256, 1024), (3, 512, 2048))
BASIC_STAGES = ((3, 64), (4, 128), (6, 256), (3, 512))


def _vgg19(width_scale: float) -> ArchSpec:
    layers = []
    for b, (n, c) in enumerate(((2, 64), (2, 128), (4, 256), (4, 512), (4, 512)), start=1):
        if b > 1:
            layers.append(_pool())
        for i in range(1, n + 1):
            layers += [_conv(c, 3), _relu(tap=f"conv{b}_{i}")]
    return ArchSpec("vgg19", tuple(layers), VGG_STYLE_TAPS, "conv4_2",
                    width_scale=width_scale, default_beta=4e10)


def _resnet50(name: str, width_scale: float, residual=True, placement="post-add",
              widen_factor=1) -> ArchSpec:
    layers = [_conv(64, 7, stride=2), _bn(), _relu(), _pool(tap="conv1_2")]
    pre = placement == "pre-add"
    for s, (blocks, mid, out) in enumerate(RESNET_STAGES, start=2):
        for b in range(blocks):
            stride = 2 if (b == 0 and s > 2) else 1
            layers.append(LayerSpec("block-begin", channels_out=out, stride=stride,
                                    residual=residual, skip_projection=(b == 0),
                                    relu_placement=placement))
            if pre:
                layers.append(_relu())
            layers += [
                _conv(mid, 1, widen=True), _bn(), _relu(),
                _conv(mid, 3, stride=stride, widen=True), _bn(), _relu(),
                _conv(out, 1), _bn(),
                LayerSpec("block-end", channels_out=out, tap=f"conv{s}_{b + 1}",
                          relu_placement=placement),
            ]
    return ArchSpec(name, tuple(layers), RESNET_STYLE_TAPS, "conv4_6",
                    width_scale=width_scale, widen_factor=widen_factor)


def _pseudo_vgg(name: str, width_scale: float, residual: bool) -> ArchSpec:
    layers = [_conv(64, 3, stride=2), _bn(), _relu(), _pool(tap="conv1_2")]
    cin = 64
    for s, (blocks, c) in enumerate(BASIC_STAGES, start=2):
        if s > 2:
            layers.append(_pool())
        for b in range(blocks):
            layers += [
                LayerSpec("block-begin", channels_out=c, residual=residual,
                          skip_projection=(b == 0 and cin != c)),
                _conv(c, 3), _bn(), _relu(), _conv(c, 3), _bn(),
                LayerSpec("block-end", channels_out=c, tap=f"conv{s}_{b + 1}"),
            ]
            cin = c
    return ArchSpec(name, tuple(layers), RESNET_STYLE_TAPS, "conv4_6",
                    width_scale=width_scale)


PRESETS = ("vgg19", "resnet50", "noresnet", "pseudo_vgg", "pseudo_resvgg", "wrn",
           "resnet50_preact")


def preset(name: str, width_scale: float = 0.25, widen_factor: int = 2) -> ArchSpec:
    """Architecture description for one member of the ablation family.

    ``widen_factor`` only affects ``wrn``.
    """
    if name == "vgg19":
        return _vgg19(width_scale)
    if name == "resnet50":
        return _resnet50(name, width_scale)
    if name == "noresnet":
        return _resnet50(name, width_scale, residual=False)
    if name == "resnet50_preact":
        return _resnet50(name, width_scale, placement="pre-add")
    if name == "wrn":
        return _resnet50(name, width_scale, widen_factor=widen_factor)
    if name == "pseudo_vgg":
        return _pseudo_vgg(name, width_scale, residual=False)
    if name == "pseudo_resvgg":
        return _pseudo_vgg(name, width_scale, residual=True)
    raise UsageError(f"unknown architecture {name!r}; choose from {', '.join(PRESETS)}")


def stage_taps(spec: ArchSpec) -> list[str]:
    """Taps at the last layer of each stage, shallow to deep (the style taps)."""
    return list(spec.style_taps)


# ---------------------------------------------------------------------------
# networks


@dataclass
class Network:
    spec: ArchSpec
    parameters: "OrderedDict[str, np.ndarray]"
    seed: int | None = None
    provenance: str = "random"
    _tensors: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        expected = parameter_shapes(self.spec)
        for name, shape in expected.items():
            if name not in self.parameters:
                raise ConfigurationError(f"missing parameter {name}")
            if tuple(self.parameters[name].shape) != shape:
                raise ConfigurationError(
                    f"parameter {name} has shape {self.parameters[name].shape}, expected {shape}")
        extra = set(self.parameters) - set(expected)
        if extra:
            raise ConfigurationError(f"unexpected parameters {sorted(extra)}")

    def param(self, name: str) -> Tensor:
        # cached per dtype so repeated forwards do not re-wrap arrays
        dtype = T.get_dtype()
        key = (name, dtype)
        t = self._tensors.get(key)
        if t is None:
            t = Tensor(self.parameters[name], dtype=dtype)
            self._tensors[key] = t
        return t

    def fingerprint(self) -> bytes:
        import hashlib
        h = hashlib.sha256()
        for name, arr in self.parameters.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.digest()


def init_random(spec: ArchSpec, seed: int) -> Network:
    """Kaiming-normal (fan-out, ReLU gain) convs with zero bias; BN at its defaults."""
    rng = np.random.default_rng(seed)
    params: OrderedDict[str, np.ndarray] = OrderedDict()
    for name, shape in parameter_shapes(spec).items():
        kind = name.rsplit(".", 1)[1]
        if kind == "weight":
            fan_out = shape[0] * shape[2] * shape[3]
            arr = rng.standard_normal(shape) * np.sqrt(2.0 / fan_out)
        elif kind in ("gamma", "running_var"):
            arr = np.ones(shape)
        else:
            arr = np.zeros(shape)
        params[name] = arr.astype(np.float32)
    return Network(spec, params, seed=seed, provenance="random")


def check_input(spec: ArchSpec, height: int, width: int) -> list[tuple[int, int]]:
    """Spatial size after each layer; raises when the chain cannot be evaluated."""
    if height < 32 or width < 32:
        raise ConfigurationError(f"input {height}x{width} is below the 32x32 minimum")
    sizes = []
    h, w = height, width
    begin_stride = 1
    for i, layer in enumerate(spec.layers):
        if layer.kind == "conv":
            if h + 2 * layer.padding < layer.kernel or w + 2 * layer.padding < layer.kernel:
                raise ConfigurationError(f"layer {i}: input {h}x{w} too small for the downsampling chain")
            h = T.conv_output_size(h, layer.kernel, layer.stride, layer.padding)
            w = T.conv_output_size(w, layer.kernel, layer.stride, layer.padding)
        elif layer.kind == "maxpool":
            if h % 2 or w % 2 or h < 2 or w < 2:
                raise ConfigurationError(
                    f"layer {i}: maxpool needs even spatial dims, got {h}x{w}; "
                    "input size incompatible with the downsampling chain")
            h, w = h // 2, w // 2
        elif layer.kind == "block-begin":
            begin_stride = layer.stride
            block_in = (h, w)
        elif layer.kind == "block-end" and begin_stride > 1:
            ph = T.conv_output_size(block_in[0], 1, begin_stride, 0)
            pw = T.conv_output_size(block_in[1], 1, begin_stride, 0)
            if (ph, pw) != (h, w):
                raise ConfigurationError(f"layer {i}: skip path {ph}x{pw} != branch {h}x{w}")
        sizes.append((h, w))
    return sizes


def _bn_apply(net: Network, prefix: str, x: Tensor) -> Tensor:
    return T.batchnorm2d_eval(x, net.param(f"{prefix}.gamma"), net.param(f"{prefix}.beta"),
                              net.param(f"{prefix}.running_mean"),
                              net.param(f"{prefix}.running_var"))


def forward_taps(net: Network, x: Tensor, taps: Iterable[str] | None = None) -> "OrderedDict[str, Tensor]":
    """Run ``x`` through ``net`` and collect named activations.

    With ``taps=None`` every declared tap is returned; otherwise only the
    requested ones, and evaluation stops after the deepest of them.
    """
    spec = net.spec
    if x.data.ndim != 4 or x.shape[1] != 3:
        raise ConfigurationError(f"expected a 1x3xHxW image, got {x.shape}")
    check_input(spec, x.shape[2], x.shape[3])
    wanted = set(spec.taps() if taps is None else taps)
    unknown = wanted - set(spec.taps())
    if unknown:
        raise ConfigurationError(f"{spec.name}: unknown taps {sorted(unknown)}")
    out: OrderedDict[str, Tensor] = OrderedDict()
    h = x
    block_input: Tensor | None = None
    begin: LayerSpec | None = None
    begin_index = -1
    last_tap = "input"
    for i, layer in enumerate(spec.layers):
        if not wanted - out.keys():
            break
        try:
            if layer.kind == "conv":
                h = T.conv2d(h, net.param(f"L{i}.weight"), net.param(f"L{i}.bias"),
                             stride=layer.stride, padding=layer.padding)
            elif layer.kind == "bn":
                h = _bn_apply(net, f"L{i}", h)
            elif layer.kind == "relu":
                h = T.relu(h)
            elif layer.kind == "maxpool":
                h = T.maxpool2d(h, layer.kernel, layer.stride)
            elif layer.kind == "block-begin":
                begin, begin_index, block_input = layer, i, h
            elif layer.kind == "block-end":
                if begin.residual:
                    skip = block_input
                    if begin.skip_projection:
                        p = f"L{begin_index}"
                        skip = T.conv2d(skip, net.param(f"{p}.proj.weight"),
                                        net.param(f"{p}.proj.bias"), stride=begin.stride)
                        skip = _bn_apply(net, f"{p}.proj_bn", skip)
                    h = T.add(h, skip)
                if begin.relu_placement == "post-add":
                    h = T.relu(h)
                begin = block_input = None
        except NumericFault as exc:
            raise NumericFault("non-finite activation", op=exc.op,
                               tap=f"{last_tap} -> layer {i} ({layer.kind})") from exc
        if layer.tap:
            last_tap = layer.tap
            if layer.tap in wanted:
                out[layer.tap] = h
    return out
