"""Plain split CNN: architecture plan, weight containers, split and compose.

The network is a fixed-topology, batch-norm-free CNN:

    stem conv3x3 -> [group 1: blocks_per_group x (conv3x3 + ReLU)]
    downsample conv (stride 2) -> [group 2 blocks]
    downsample conv (stride 2) -> [group 3 blocks]
    global average pool -> dense classifier

Every conv (stem, block, downsample) is followed by ReLU; the dense head
emits raw logits. A split level names the cut after the last block of a
group: the lower part ends with that group's final ReLU output, and the
downsample that feeds the next group is the first layer of the upper part,
so the activation maps crossing the cut keep the group's full resolution.

Weight arrays are treated as immutable by the whole package: training and
averaging return fresh arrays, so split parts may share storage with the
model they came from.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CompositionError, ConfigError, ShapeError

LEVELS = ("G1", "G2", "G3")
STAGES = ("input", "G1", "G2", "G3", "output")

CONV3X3 = "conv3x3"
DOWNSAMPLE = "downsample"
DENSE = "dense"


def _halved(h, w):
    # pad-1 stride-2 3x3 conv output size: ceil(h/2)
    return (h + 1) // 2, (w + 1) // 2


@dataclass(frozen=True)
class ArchSpec:
    """Shape-level description of the split CNN.

    Attributes
    ----------
    input_shape : (channels, height, width) of one sample.
    group_widths : channel width of each of the three conv groups.
    blocks_per_group : conv3x3+ReLU blocks per group, at least 1.
    num_classes : size of the logit vector.
    """

    input_shape: tuple
    group_widths: tuple = (16, 32, 64)
    blocks_per_group: int = 1
    num_classes: int = 10

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "group_widths", tuple(int(v) for v in self.group_widths))
        if len(self.input_shape) != 3 or any(v < 1 for v in self.input_shape):
            raise ConfigError(f"input_shape must be 3 positive ints, got {self.input_shape}")
        if len(self.group_widths) != 3 or any(v < 1 for v in self.group_widths):
            raise ConfigError(f"group_widths must be 3 positive ints, got {self.group_widths}")
        if self.blocks_per_group < 1:
            raise ConfigError(f"blocks_per_group must be >= 1, got {self.blocks_per_group}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")

    @property
    def num_layers(self):
        return 4 + 3 * self.blocks_per_group

    def layer_specs(self):
        """Ordered (kind, weight_shape) for every parameterized layer."""
        c_in = self.input_shape[0]
        w1, w2, w3 = self.group_widths
        b = self.blocks_per_group
        specs = [(CONV3X3, (w1, c_in, 3, 3))]
        specs += [(CONV3X3, (w1, w1, 3, 3))] * b
        specs += [(DOWNSAMPLE, (w2, w1, 3, 3))]
        specs += [(CONV3X3, (w2, w2, 3, 3))] * b
        specs += [(DOWNSAMPLE, (w3, w2, 3, 3))]
        specs += [(CONV3X3, (w3, w3, 3, 3))] * b
        specs += [(DENSE, (self.num_classes, w3))]
        return specs

    def stage_index(self, stage):
        """Layer index where `stage` begins; layers[:index] produce it."""
        b = self.blocks_per_group
        table = {
            "input": 0,
            "G1": 1 + b,
            "G2": 2 + 2 * b,
            "G3": 3 + 3 * b,
            "output": self.num_layers,
        }
        if stage not in table:
            raise ConfigError(f"unknown level {stage!r}, expected one of {STAGES}")
        return table[stage]

    @property
    def group_boundaries(self):
        return tuple(self.stage_index(lv) for lv in LEVELS)

    def activation_shape(self, stage):
        """Per-sample shape flowing through the named stage."""
        if stage == "input":
            return self.input_shape
        if stage == "output":
            return (self.num_classes,)
        if stage not in LEVELS:
            raise ConfigError(f"unknown level {stage!r}, expected one of {STAGES}")
        _, h, w = self.input_shape
        g = LEVELS.index(stage)
        for _ in range(g):
            h, w = _halved(h, w)
        return (self.group_widths[g], h, w)


@dataclass
class LayerParams:
    """One parameterized layer: a kind tag plus its weight and bias arrays."""

    kind: str
    weights: np.ndarray
    bias: np.ndarray


@dataclass
class ModelWeights:
    """A full model: the architecture, its ordered layers, and split points."""

    arch: ArchSpec
    layers: list
    group_boundaries: tuple = field(default=None)

    def __post_init__(self):
        if self.group_boundaries is None:
            self.group_boundaries = self.arch.group_boundaries


@dataclass
class SplitWeights:
    """A model cut at `level`: lower produces the maps, upper consumes them."""

    arch: ArchSpec
    level: str
    lower: list
    upper: list


def build_model(arch, seed=0, dtype=np.float64):
    """Initialize weights for `arch`: He fan-in normals, zero biases.

    The draw order follows the layer order, so a (arch, seed, dtype) triple
    pins every bit of the result.
    """
    rng = np.random.default_rng(seed)
    layers = []
    for kind, wshape in arch.layer_specs():
        fan_in = int(np.prod(wshape[1:]))
        std = math.sqrt(2.0 / fan_in)
        w = rng.normal(0.0, std, size=wshape).astype(dtype, copy=False)
        b = np.zeros(wshape[0], dtype=dtype)
        layers.append(LayerParams(kind, w, b))
    return ModelWeights(arch, layers)


def copy_layers(layers):
    """Deep-copy a layer list (fresh arrays, same values)."""
    return [LayerParams(l.kind, l.weights.copy(), l.bias.copy()) for l in layers]


def param_count(layers):
    return int(sum(l.weights.size + l.bias.size for l in layers))


def split_weights(model, level):
    """Cut `model` at `level`. The parts share the model's arrays."""
    if level not in LEVELS:
        raise ConfigError(f"unknown level {level!r}, expected one of {LEVELS}")
    cut = model.arch.stage_index(level)
    return SplitWeights(model.arch, level, list(model.layers[:cut]), list(model.layers[cut:]))


def _check_part(arch, specs, layers, name):
    for spec, layer in zip(specs, layers):
        kind, wshape = spec
        if layer.kind != kind or tuple(layer.weights.shape) != wshape:
            raise CompositionError(
                f"{name} part does not match the architecture: expected "
                f"{kind}{wshape}, got {layer.kind}{tuple(layer.weights.shape)}"
            )
        if layer.bias.shape != (wshape[0],):
            raise CompositionError(
                f"{name} part bias shape {layer.bias.shape} does not match {kind}{wshape}"
            )


def compose_weights(arch, level, lower, upper):
    """Assemble a full model from a lower part and an upper part.

    Both parts must have been produced at the same `level` of the same
    `arch`; layer kinds and shapes are verified against the architecture
    plan before the model is assembled. Arrays are shared, not copied.
    """
    if level not in LEVELS:
        raise ConfigError(f"unknown level {level!r}, expected one of {LEVELS}")
    cut = arch.stage_index(level)
    specs = arch.layer_specs()
    if len(lower) != cut or len(upper) != len(specs) - cut:
        raise CompositionError(
            f"level/arch mismatch at {level}: expected {cut}+{len(specs) - cut} layers, "
            f"got {len(lower)}+{len(upper)}"
        )
    _check_part(arch, specs[:cut], lower, "lower")
    _check_part(arch, specs[cut:], upper, "upper")
    return ModelWeights(arch, list(lower) + list(upper))
