"""Architecture plan, weight containers, split/compose, activation extraction."""

import numpy as np
import pytest

from flmeta import (ArchSpec, LayerParams, ModelWeights, build_model, compose_weights,
                    copy_layers, extract_activations, param_count, split_weights)
from flmeta.data import LabeledDataset
from flmeta.engine import forward
from flmeta.exceptions import CompositionError, ConfigError, ShapeError
from flmeta.model import CONV3X3, DENSE, DOWNSAMPLE, LEVELS


def test_default_arch_stage_shapes():
    arch = ArchSpec(input_shape=(3, 32, 32))
    assert arch.activation_shape("input") == (3, 32, 32)
    assert arch.activation_shape("G1") == (16, 32, 32)
    assert arch.activation_shape("G2") == (32, 16, 16)
    assert arch.activation_shape("G3") == (64, 8, 8)
    assert arch.activation_shape("output") == (10,)


def test_small_arch_stage_shapes():
    arch = ArchSpec(input_shape=(1, 8, 8), group_widths=(4, 8, 16))
    assert arch.activation_shape("G1") == (4, 8, 8)
    assert arch.activation_shape("G2") == (8, 4, 4)
    assert arch.activation_shape("G3") == (16, 2, 2)


def test_odd_sizes_round_up_when_halved():
    arch = ArchSpec(input_shape=(1, 7, 7), group_widths=(2, 2, 2))
    assert arch.activation_shape("G2") == (2, 4, 4)
    assert arch.activation_shape("G3") == (2, 2, 2)


def test_layer_count_and_boundaries():
    for b in (1, 2, 3):
        arch = ArchSpec(input_shape=(3, 32, 32), blocks_per_group=b)
        assert arch.num_layers == 4 + 3 * b
        assert arch.group_boundaries == (1 + b, 2 + 2 * b, 3 + 3 * b)
    assert ArchSpec(input_shape=(3, 32, 32)).group_boundaries == (2, 4, 6)


def test_layer_specs_sequence():
    arch = ArchSpec(input_shape=(3, 32, 32), group_widths=(4, 8, 16),
                    blocks_per_group=2, num_classes=5)
    specs = arch.layer_specs()
    kinds = [k for k, _ in specs]
    assert kinds == [CONV3X3, CONV3X3, CONV3X3, DOWNSAMPLE, CONV3X3, CONV3X3,
                     DOWNSAMPLE, CONV3X3, CONV3X3, DENSE]
    assert specs[0][1] == (4, 3, 3, 3)        # stem maps input channels to w1
    assert specs[3][1] == (8, 4, 3, 3)        # downsample starts the next group
    assert specs[-1][1] == (5, 16)


def test_arch_validation():
    with pytest.raises(ConfigError):
        ArchSpec(input_shape=(32, 32))
    with pytest.raises(ConfigError):
        ArchSpec(input_shape=(3, 32, 32), group_widths=(16, 32))
    with pytest.raises(ConfigError):
        ArchSpec(input_shape=(3, 32, 32), blocks_per_group=0)
    with pytest.raises(ConfigError):
        ArchSpec(input_shape=(3, 32, 32), num_classes=1)
    with pytest.raises(ConfigError):
        ArchSpec(input_shape=(3, 32, 32)).activation_shape("G4")


def test_build_model_shapes_and_init():
    arch = ArchSpec(input_shape=(3, 32, 32))
    m = build_model(arch, seed=0)
    assert [l.kind for l in m.layers] == [k for k, _ in arch.layer_specs()]
    for layer, (_, shape) in zip(m.layers, arch.layer_specs()):
        assert layer.weights.shape == shape
        assert np.all(layer.bias == 0.0)
        assert layer.weights.dtype == np.float64
    # He fan-in scaling: sample std tracks sqrt(2 / fan_in)
    stem = m.layers[0].weights
    assert abs(stem.std() - np.sqrt(2.0 / 27)) < 0.2 * np.sqrt(2.0 / 27)


def test_build_model_seed_determinism():
    arch = ArchSpec(input_shape=(1, 8, 8), group_widths=(2, 3, 4), num_classes=3)
    a = build_model(arch, seed=7)
    b = build_model(arch, seed=7)
    c = build_model(arch, seed=8)
    for la, lb in zip(a.layers, b.layers):
        np.testing.assert_array_equal(la.weights, lb.weights)
    assert any(not np.array_equal(la.weights, lc.weights)
               for la, lc in zip(a.layers, c.layers))


def test_build_model_float32():
    arch = ArchSpec(input_shape=(1, 8, 8), group_widths=(2, 3, 4), num_classes=3)
    m = build_model(arch, seed=0, dtype=np.float32)
    assert all(l.weights.dtype == np.float32 for l in m.layers)


def test_param_count():
    arch = ArchSpec(input_shape=(1, 8, 8), group_widths=(2, 3, 4), num_classes=3)
    m = build_model(arch, seed=0)
    # stem 18+2, block 36+2, down 54+3, block 81+3, down 108+4, block 144+4,
    # dense 12+3
    assert param_count(m.layers) == 474


def test_split_puts_downsample_in_upper_part():
    arch = ArchSpec(input_shape=(3, 32, 32))
    m = build_model(arch, seed=0)
    for level, boundary in zip(LEVELS, arch.group_boundaries):
        sp = split_weights(m, level)
        assert len(sp.lower) == boundary
        assert sp.lower[-1].kind == CONV3X3
        if level != "G3":
            assert sp.upper[0].kind == DOWNSAMPLE
        else:
            assert sp.upper[0].kind == DENSE


def test_upper_part_dominates_parameters_at_g1():
    m = build_model(ArchSpec(input_shape=(3, 32, 32)), seed=0)
    sp = split_weights(m, "G1")
    assert param_count(sp.upper) > param_count(sp.lower)


def test_split_compose_round_trip_bitwise():
    arch = ArchSpec(input_shape=(1, 8, 8), group_widths=(2, 3, 4), num_classes=3)
    m = build_model(arch, seed=5)
    for level in LEVELS:
        sp = split_weights(m, level)
        back = compose_weights(arch, level, sp.lower, sp.upper)
        assert len(back.layers) == len(m.layers)
        for a, b in zip(back.layers, m.layers):
            assert a.kind == b.kind
            np.testing.assert_array_equal(a.weights, b.weights)
            np.testing.assert_array_equal(a.bias, b.bias)


def test_compose_accepts_retrained_upper():
    # two lowers, one upper: composition is positional, not identity-based
    arch = ArchSpec(input_shape=(1, 8, 8), group_widths=(2, 3, 4), num_classes=3)
    a = build_model(arch, seed=1)
    b = build_model(arch, seed=2)
    sa = split_weights(a, "G2")
    sb = split_weights(b, "G2")
    mixed = compose_weights(arch, "G2", sa.lower, sb.upper)
    for got, want in zip(mixed.layers[:len(sa.lower)], sa.lower):
        np.testing.assert_array_equal(got.weights, want.weights)
    for got, want in zip(mixed.layers[len(sa.lower):], sb.upper):
        np.testing.assert_array_equal(got.weights, want.weights)


def test_compose_rejects_wrong_parts():
    arch = ArchSpec(input_shape=(1, 8, 8), group_widths=(2, 3, 4), num_classes=3)
    m = build_model(arch, seed=0)
    sp = split_weights(m, "G1")
    with pytest.raises(CompositionError):
        compose_weights(arch, "G1", sp.lower, sp.upper[1:])    # missing layer
    with pytest.raises(CompositionError):
        compose_weights(arch, "G1", sp.lower, sp.lower)        # wrong kinds
    with pytest.raises(CompositionError):
        compose_weights(arch, "G2", sp.lower, sp.upper)        # boundary mismatch
    first = sp.upper[0]
    bad = [LayerParams(first.kind, first.weights[:, :, :2, :2], first.bias)]
    bad += list(sp.upper[1:])
    with pytest.raises(CompositionError):
        compose_weights(arch, "G1", sp.lower, bad)             # wrong shapes


def test_copy_layers_detaches_storage():
    m = build_model(ArchSpec(input_shape=(1, 8, 8), group_widths=(2, 3, 4),
                             num_classes=3), seed=0)
    cp = copy_layers(m.layers)
    cp[0].weights[0, 0, 0, 0] = 99.0
    assert m.layers[0].weights[0, 0, 0, 0] != 99.0


def test_two_stage_forward_equals_composed_model():
    arch = ArchSpec(input_shape=(1, 8, 8), group_widths=(2, 3, 4), num_classes=3)
    a = build_model(arch, seed=1)
    b = build_model(arch, seed=2)
    rng = np.random.default_rng(9)
    x = rng.uniform(0, 1, (16, *arch.input_shape))
    for level in LEVELS:
        sa = split_weights(a, level)
        sb = split_weights(b, level)
        composed = compose_weights(arch, level, sa.lower, sb.upper)
        maps = forward(a, x, "input", level)
        two_stage = forward(composed, maps, level, "output")
        np.testing.assert_allclose(forward(composed, x), two_stage, atol=1e-9)


# ------------------------------------------------------- activation extraction

def _dataset(n, arch, seed=0, classes=3):
    rng = np.random.default_rng(seed)
    return LabeledDataset(rng.uniform(0, 1, (n, *arch.input_shape)),
                          rng.integers(0, classes, n), classes)


def test_extract_activations_matches_forward():
    arch = ArchSpec(input_shape=(1, 8, 8), group_widths=(2, 3, 4), num_classes=3)
    m = build_model(arch, seed=3)
    data = _dataset(10, arch)
    sp = split_weights(m, "G2")
    acts = extract_activations(sp.lower, "G2", data)
    assert acts.maps.shape == (10, *arch.activation_shape("G2"))
    assert acts.level == "G2"
    np.testing.assert_array_equal(acts.labels, data.labels)
    np.testing.assert_array_equal(acts.maps, forward(m, data.images, "input", "G2"))


def test_extract_activations_chunking_invariant():
    arch = ArchSpec(input_shape=(1, 8, 8), group_widths=(2, 3, 4), num_classes=3)
    m = build_model(arch, seed=4)
    data = _dataset(11, arch, seed=1)
    sp = split_weights(m, "G1")
    one = extract_activations(sp.lower, "G1", data, batch_size=512)
    tiny = extract_activations(sp.lower, "G1", data, batch_size=3)
    np.testing.assert_array_equal(one.maps, tiny.maps)


def test_extract_activations_zero_weights_give_zero_maps():
    arch = ArchSpec(input_shape=(1, 8, 8), group_widths=(2, 3, 4), num_classes=3)
    m = build_model(arch, seed=0)
    zeroed = [LayerParams(l.kind, np.zeros_like(l.weights), np.zeros_like(l.bias))
              for l in split_weights(m, "G1").lower]
    acts = extract_activations(zeroed, "G1", _dataset(4, arch))
    assert np.all(acts.maps == 0.0)
