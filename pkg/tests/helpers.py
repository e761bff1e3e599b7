"""Shared test utilities: hand-built layer stacks and conditioned instances."""

import numpy as np

from flmeta import LayerParams, build_model, relu_margin
from flmeta.engine import softmax_cross_entropy, forward_layers
from flmeta.model import CONV3X3, DOWNSAMPLE, DENSE


def he_layer(kind, out_ch, in_ch, rng, bias_scale=0.1):
    """One layer with He weights and nonzero random biases."""
    if kind == DENSE:
        w = rng.normal(0.0, np.sqrt(2.0 / in_ch), size=(out_ch, in_ch))
        b = rng.normal(0.0, bias_scale, size=out_ch)
    else:
        fan_in = in_ch * 9
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_ch, in_ch, 3, 3))
        b = rng.normal(0.0, bias_scale, size=out_ch)
    return LayerParams(kind, w, b)


def stack(kinds_and_widths, in_ch, rng):
    """Build a raw layer list from [(kind, out_ch), ...]."""
    layers = []
    c = in_ch
    for kind, out_ch in kinds_and_widths:
        layers.append(he_layer(kind, out_ch, c, rng))
        c = out_ch
    return layers


def jittered_model_layers(arch, model_seed, jitter_seed, sigma=0.05):
    """build_model output with small nonzero bias noise added.

    Fresh models have zero biases, which can park pre-activations exactly
    on the ReLU kink (dead receptive fields); finite differences need the
    parameters off the kink.
    """
    model = build_model(arch, seed=model_seed)
    rng = np.random.default_rng(jitter_seed)
    return [LayerParams(l.kind, l.weights, l.bias + rng.normal(0.0, sigma, l.bias.shape))
            for l in model.layers]


def conditioned_batch(layers, input_shape, n, seed, margin):
    """Draw a batch whose pre-activations all clear the kink by `margin`."""
    for attempt in range(64):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        x = rng.uniform(0.0, 1.0, size=(n, *input_shape))
        if relu_margin(layers, x) >= margin:
            return x
    raise AssertionError(f"no batch with relu margin >= {margin} in 64 tries")


def fd_gradients(layers, x, y, eps):
    """Central-difference gradients, computed with no backprop involved.

    Returns [(dW, db), ...] in layer order. Built only on forward_layers
    and the loss so it can stand as an oracle against backward_layers.
    """
    work = [LayerParams(l.kind, l.weights.copy(), l.bias.copy()) for l in layers]

    def loss():
        return softmax_cross_entropy(forward_layers(work, x), y)[0]

    out = []
    for layer in work:
        grads = []
        for arr in (layer.weights, layer.bias):
            g = np.zeros_like(arr)
            flat, gflat = arr.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                v = flat[i]
                flat[i] = v + eps
                lp = loss()
                flat[i] = v - eps
                lm = loss()
                flat[i] = v
                gflat[i] = (lp - lm) / (2.0 * eps)
            grads.append(g)
        out.append(tuple(grads))
    return out


__all__ = ["he_layer", "stack", "jittered_model_layers", "conditioned_batch",
           "fd_gradients", "CONV3X3", "DOWNSAMPLE", "DENSE"]
