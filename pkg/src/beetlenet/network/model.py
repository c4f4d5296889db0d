"""ResNet-50 + FPN backbone with a shared four-layer classification subnet.

The box-regression branch of the detector this is derived from is absent:
only the classification subnet exists, and its per-level spatial logits are
global-average-pooled and averaged across pyramid levels into one score
vector per image.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..data import NUM_CLASSES, normalize
from ..imaging import resize_bilinear
from .graph import Graph
from .store import ParameterStore

EXPANSION = 4
SUBNET_DEPTH = 4


@dataclass(frozen=True)
class NetworkConfig:
    num_classes: int = NUM_CLASSES
    backbone_scale: str = "full"
    fpn_channels: int = 256
    pyramid_levels: tuple = (3, 4, 5, 6, 7)
    subnet_depth: int = SUBNET_DEPTH
    input_side: int = 224

    def __post_init__(self):
        if self.subnet_depth != SUBNET_DEPTH:
            raise ValueError(f"subnet_depth must be {SUBNET_DEPTH}, got {self.subnet_depth}")
        if self.num_classes != NUM_CLASSES:
            raise ValueError(f"num_classes must be {NUM_CLASSES}, got {self.num_classes}")
        if self.backbone_scale not in ("full", "tiny"):
            raise ValueError(f"backbone_scale must be 'full' or 'tiny', got {self.backbone_scale!r}")
        levels = tuple(int(v) for v in self.pyramid_levels)
        if not levels or any(v not in (3, 4, 5, 6, 7) for v in levels) or len(set(levels)) != len(levels):
            raise ValueError(f"pyramid_levels must be distinct values from 3..7, got {self.pyramid_levels}")
        object.__setattr__(self, "pyramid_levels", tuple(sorted(levels)))
        if self.fpn_channels < 1:
            raise ValueError("fpn_channels must be positive")
        if self.input_side % 32:
            raise ValueError(f"input_side must be divisible by 32, got {self.input_side}")

    @classmethod
    def tiny(cls, **overrides):
        base = dict(backbone_scale="tiny", fpn_channels=32, input_side=64)
        base.update(overrides)
        return cls(**base)

    @property
    def stem_channels(self):
        return 64 if self.backbone_scale == "full" else 8

    @property
    def stage_widths(self):
        return (64, 128, 256, 512) if self.backbone_scale == "full" else (8, 16, 32, 64)

    @property
    def stage_blocks(self):
        return (3, 4, 6, 3) if self.backbone_scale == "full" else (1, 1, 1, 1)

    @property
    def stage_out_channels(self):
        return tuple(w * EXPANSION for w in self.stage_widths)

    def to_dict(self):
        return {"num_classes": self.num_classes, "backbone_scale": self.backbone_scale,
                "fpn_channels": self.fpn_channels, "pyramid_levels": list(self.pyramid_levels),
                "subnet_depth": self.subnet_depth, "input_side": self.input_side}


# ------------------------------------------------------------ parameters ----

@dataclass
class _Spec:
    name: str
    shape: tuple
    init: str          # "he", "lecun", "zeros", "ones"
    trainable: bool = True


def _conv_specs(name, cin, cout, k, bias, init):
    out = [_Spec(f"{name}.weight", (cout, cin, k, k), init)]
    if bias:
        out.append(_Spec(f"{name}.bias", (cout,), "zeros"))
    return out


def _bn_specs(name, c, gamma="ones"):
    return [_Spec(f"{name}.weight", (c,), gamma), _Spec(f"{name}.bias", (c,), "zeros"),
            _Spec(f"{name}.running_mean", (c,), "zeros", False),
            _Spec(f"{name}.running_var", (c,), "ones", False)]


def parameter_specs(config):
    """Every parameter of the network, in allocation order."""
    specs = []
    body = "backbone.body"
    specs += _conv_specs(f"{body}.conv1", 3, config.stem_channels, 7, False, "he")
    specs += _bn_specs(f"{body}.bn1", config.stem_channels)
    cin = config.stem_channels
    for s, (width, blocks) in enumerate(zip(config.stage_widths, config.stage_blocks), start=1):
        cout = width * EXPANSION
        for b in range(blocks):
            p = f"{body}.layer{s}.{b}"
            specs += _conv_specs(f"{p}.conv1", cin, width, 1, False, "he")
            specs += _bn_specs(f"{p}.bn1", width)
            specs += _conv_specs(f"{p}.conv2", width, width, 3, False, "he")
            specs += _bn_specs(f"{p}.bn2", width)
            specs += _conv_specs(f"{p}.conv3", width, cout, 1, False, "he")
            # zero-gamma residual branch: each block starts as its shortcut
            specs += _bn_specs(f"{p}.bn3", cout, gamma="zeros")
            if b == 0:
                specs += _conv_specs(f"{p}.downsample.0", cin, cout, 1, False, "he")
                specs += _bn_specs(f"{p}.downsample.1", cout)
            cin = cout
    fpn = "backbone.fpn"
    F = config.fpn_channels
    c3, c4, c5 = config.stage_out_channels[1:]
    for i, c in enumerate((c3, c4, c5)):
        specs += _conv_specs(f"{fpn}.inner_blocks.{i}", c, F, 1, True, "lecun")
    for i in range(3):
        specs += _conv_specs(f"{fpn}.layer_blocks.{i}", F, F, 3, True, "lecun")
    top = max(config.pyramid_levels)
    if top >= 6:
        specs += _conv_specs(f"{fpn}.extra_blocks.p6", c5, F, 3, True, "lecun")
    if top >= 7:
        specs += _conv_specs(f"{fpn}.extra_blocks.p7", F, F, 3, True, "lecun")
    for i in range(config.subnet_depth):
        specs += _conv_specs(f"subnet.conv.{i}", F, F, 3, True, "he")
    specs += _conv_specs("subnet.cls_logits", F, config.num_classes, 3, True, "lecun")
    return specs


def build_network(config, seed=0, dtype=np.float32):
    """Allocate and initialize all parameters.

    Conv weights are drawn uniformly in +-sqrt(6/fan_in) when followed by a
    ReLU and +-sqrt(3/fan_in) otherwise; biases start at zero, batch-norm
    statistics at (0, 1) and gammas at 1 except the last one of each
    residual branch, which starts at 0.
    """
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    for spec in parameter_specs(config):
        if spec.init in ("he", "lecun"):
            fan_in = int(np.prod(spec.shape[1:]))
            bound = math.sqrt((6.0 if spec.init == "he" else 3.0) / fan_in)
            arr = rng.uniform(-bound, bound, size=spec.shape)
        elif spec.init == "zeros":
            arr = np.zeros(spec.shape)
        else:
            arr = np.ones(spec.shape)
        store.add(spec.name, arr.astype(dtype), spec.trainable)
    return store


# --------------------------------------------------------------- forward ----

def _bottleneck(g, x, prefix, stride, has_downsample):
    out = g.relu(g.frozen_bn(g.conv(x, g.param(f"{prefix}.conv1.weight")), f"{prefix}.bn1"))
    out = g.relu(g.frozen_bn(g.conv(out, g.param(f"{prefix}.conv2.weight"), stride=stride, pad=1), f"{prefix}.bn2"))
    out = g.frozen_bn(g.conv(out, g.param(f"{prefix}.conv3.weight")), f"{prefix}.bn3")
    if has_downsample:
        short = g.frozen_bn(g.conv(x, g.param(f"{prefix}.downsample.0.weight"), stride=stride),
                            f"{prefix}.downsample.1")
    else:
        short = x
    return g.relu(g.add(out, short))


def backbone_nodes(g, x, config):
    side = g[x].shape[-1]
    if g[x].shape[-2] != side or side % 32:
        raise ValueError(f"input side must be square and divisible by 32, got {g[x].shape[-2:]}")
    body = "backbone.body"
    h = g.conv(x, g.param(f"{body}.conv1.weight"), stride=2, pad=3)
    h = g.maxpool(g.relu(g.frozen_bn(h, f"{body}.bn1")))
    feats = []
    for s, blocks in enumerate(config.stage_blocks, start=1):
        for b in range(blocks):
            stride = 2 if (b == 0 and s > 1) else 1
            h = _bottleneck(g, h, f"{body}.layer{s}.{b}", stride, b == 0)
        feats.append(h)
    return feats[1], feats[2], feats[3]


def _conv_p(g, x, name, stride=1, pad=0):
    return g.conv(x, g.param(f"{name}.weight"), g.param(f"{name}.bias"), stride=stride, pad=pad)


def fpn_nodes(g, c3, c4, c5, config):
    fpn = "backbone.fpn"
    expected = config.stage_out_channels[1:]
    got = tuple(g[c].shape[1] for c in (c3, c4, c5))
    if got != expected:
        raise ValueError(f"FPN expects C3/C4/C5 channels {expected}, got {got}")
    lat5 = _conv_p(g, c5, f"{fpn}.inner_blocks.2")
    lat4 = _conv_p(g, c4, f"{fpn}.inner_blocks.1")
    lat3 = _conv_p(g, c3, f"{fpn}.inner_blocks.0")
    td4 = g.add(lat4, g.upsample_nearest(lat5, g[lat4].shape[2:]))
    td3 = g.add(lat3, g.upsample_nearest(td4, g[lat3].shape[2:]))
    levels = {
        3: _conv_p(g, td3, f"{fpn}.layer_blocks.0", pad=1),
        4: _conv_p(g, td4, f"{fpn}.layer_blocks.1", pad=1),
        5: _conv_p(g, lat5, f"{fpn}.layer_blocks.2", pad=1),
    }
    top = max(config.pyramid_levels)
    if top >= 6:
        levels[6] = _conv_p(g, c5, f"{fpn}.extra_blocks.p6", stride=2, pad=1)
    if top >= 7:
        levels[7] = _conv_p(g, g.relu(levels[6]), f"{fpn}.extra_blocks.p7", stride=2, pad=1)
    return levels


def subnet_nodes(g, p):
    """Shared classification subnet on one level: four 3x3 conv + ReLU, then
    a 3x3 conv to the class channels."""
    h = p
    for i in range(SUBNET_DEPTH):
        h = g.relu(_conv_p(g, h, f"subnet.conv.{i}", pad=1))
    return _conv_p(g, h, "subnet.cls_logits", pad=1)


def logits_node(g, x, config):
    c3, c4, c5 = backbone_nodes(g, x, config)
    levels = fpn_nodes(g, c3, c4, c5, config)
    maps = [subnet_nodes(g, levels[k]) for k in config.pyramid_levels]
    return g.mean([g.global_avg_pool(m) for m in maps])


def forward(store, batch, config, record=False, dtype=None):
    """Run the whole network; returns ``(logits, graph, logits_node)``."""
    g = Graph(store, record=record, dtype=dtype)
    x = g.input(batch)
    node = logits_node(g, x, config)
    return g[node], g, node


def backbone_forward(store, batch, config):
    g = Graph(store, record=False)
    c3, c4, c5 = backbone_nodes(g, g.input(batch), config)
    return g[c3], g[c4], g[c5]


def fpn_forward(store, c3, c4, c5, config):
    g = Graph(store, record=False)
    levels = fpn_nodes(g, g.input(c3), g.input(c4), g.input(c5), config)
    return {k: g[v] for k, v in sorted(levels.items()) if k in config.pyramid_levels}


def classification_subnet_forward(store, levels):
    g = Graph(store, record=False)
    if isinstance(levels, dict):
        return {k: g[subnet_nodes(g, g.input(v))] for k, v in levels.items()}
    return [g[subnet_nodes(g, g.input(v))] for v in levels]


def aggregate_logits(per_level_maps):
    """Global average pool each N x 4 x H x W map, then average over levels."""
    maps = list(per_level_maps.values()) if isinstance(per_level_maps, dict) else list(per_level_maps)
    if not maps:
        raise ValueError("need at least one pyramid level")
    return sum(m.mean(axis=(2, 3)) for m in maps) / len(maps)


def prepare_batch(patches, stats, input_side):
    """Normalize patches and resize them to ``input_side``; N x 3 x S x S."""
    out = np.empty((len(patches), 3, input_side, input_side), dtype=np.float64)
    for i, p in enumerate(patches):
        x = normalize(p, stats)
        if x.shape[0] != input_side:
            x = resize_bilinear(x, input_side)
        out[i] = x.transpose(2, 0, 1)
    return out


def network_summary(store):
    return {"parameters": store.num_params(), "trainable": store.num_params(trainable_only=True),
            "tensors": len(store)}
