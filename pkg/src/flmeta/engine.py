"""Forward, backward, loss, and SGD for the split CNN, on plain numpy.

Convolutions run as im2col matmuls; the patch gather and scatter are nine
strided slice copies, so no per-pixel Python loops anywhere. All functions
are pure: inputs are never written to, updates return new arrays, and a
fixed (weights, batch, shuffle_seed) triple reproduces results bitwise.

Layer semantics by kind:

    conv3x3     pad-1 stride-1 3x3 conv, then ReLU
    downsample  pad-1 stride-2 3x3 conv, then ReLU
    dense       global average pool over (h, w), then affine to logits

`grad_check` verifies the analytic gradients against central finite
differences and is the ground truth the test suite leans on.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ShapeError
from .model import CONV3X3, DENSE, DOWNSAMPLE


@dataclass(frozen=True)
class Hyperparams:
    """SGD knobs for one training phase.

    epochs may be 0, which makes training a bitwise no-op; weight_decay is
    plain L2 coupled into the step: w <- w - lr * (g + weight_decay * w).
    """

    learning_rate: float
    batch_size: int
    weight_decay: float = 0.0
    epochs: int = 1
    shuffle_seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate > 0 and np.isfinite(self.learning_rate)):
            raise ConfigError(f"learning_rate must be positive and finite, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.weight_decay < 0 or not np.isfinite(self.weight_decay):
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")


def _conv_out_hw(h, w, stride):
    return (h - 1) // stride + 1, (w - 1) // stride + 1


def _im2col(x, stride):
    """Gather 3x3 pad-1 patches into rows of shape (n*oh*ow, c*9)."""
    n, c, h, w = x.shape
    oh, ow = _conv_out_hw(h, w, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    patches = np.empty((n, c, 9, oh, ow), dtype=x.dtype)
    for kr in range(3):
        for kc in range(3):
            patches[:, :, kr * 3 + kc] = xp[:, :, kr:kr + stride * oh:stride,
                                            kc:kc + stride * ow:stride]
    # rows ordered (n, oh, ow); row layout (c, kr, kc) to match weight.reshape(oc, -1)
    cols = patches.transpose(0, 3, 4, 1, 2).reshape(n * oh * ow, c * 9)
    return cols, oh, ow


def _col2im(gcols, x_shape, stride):
    """Scatter-add patch-row gradients back onto the padded input grid."""
    n, c, h, w = x_shape
    oh, ow = _conv_out_hw(h, w, stride)
    g = gcols.reshape(n, oh, ow, c, 9).transpose(0, 3, 4, 1, 2)
    gxp = np.zeros((n, c, h + 2, w + 2), dtype=gcols.dtype)
    for kr in range(3):
        for kc in range(3):
            gxp[:, :, kr:kr + stride * oh:stride, kc:kc + stride * ow:stride] += g[:, :, kr * 3 + kc]
    return gxp[:, :, 1:1 + h, 1:1 + w]


def _conv_forward(x, layer, stride):
    oc = layer.weights.shape[0]
    cols, oh, ow = _im2col(x, stride)
    pre = cols @ layer.weights.reshape(oc, -1).T + layer.bias
    pre = pre.reshape(x.shape[0], oh * ow, oc).transpose(0, 2, 1).reshape(x.shape[0], oc, oh, ow)
    return pre, cols


def _conv_backward(gpre, cols, x_shape, layer, stride):
    oc = gpre.shape[1]
    gmat = gpre.transpose(0, 2, 3, 1).reshape(-1, oc)
    gw = (gmat.T @ cols).reshape(layer.weights.shape)
    gb = gmat.sum(axis=0)
    gcols = gmat @ layer.weights.reshape(oc, -1)
    return gw, gb, _col2im(gcols, x_shape, stride)


_STRIDE = {CONV3X3: 1, DOWNSAMPLE: 2}


def _check_stack_input(layers, x):
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"batch must be (n, c, h, w), got ndim={x.ndim}")
    if layers:
        first = layers[0]
        c_in = first.weights.shape[1]
        if x.shape[1] != c_in:
            raise ShapeError(
                f"batch has {x.shape[1]} channels but layer 0 ({first.kind}) expects {c_in}"
            )
    return x


def forward_layers(layers, x):
    """Run a layer stack, no caches. Returns maps (4-D) or logits (2-D)."""
    x = _check_stack_input(layers, x)
    for layer in layers:
        if layer.kind == DENSE:
            feats = x.mean(axis=(2, 3))
            x = feats @ layer.weights.T + layer.bias
        else:
            pre, _ = _conv_forward(x, layer, _STRIDE[layer.kind])
            x = np.maximum(pre, 0)
    return x


def _forward_cached(layers, x):
    x = _check_stack_input(layers, x)
    caches = []
    for layer in layers:
        if layer.kind == DENSE:
            feats = x.mean(axis=(2, 3))
            caches.append((x.shape, feats))
            x = feats @ layer.weights.T + layer.bias
        else:
            stride = _STRIDE[layer.kind]
            pre, cols = _conv_forward(x, layer, stride)
            caches.append((x.shape, cols, pre))
            x = np.maximum(pre, 0)
    return x, caches


def backward_layers(layers, caches, grad_out):
    """Backprop `grad_out` through the stack.

    Returns (grads, grad_in): grads[i] is (grad_weights, grad_bias) for
    layers[i], grad_in is the gradient w.r.t. the stack input.
    """
    grads = [None] * len(layers)
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        if layer.kind == DENSE:
            x_shape, feats = caches[i]
            gw = g.T @ feats
            gb = g.sum(axis=0)
            gfeats = g @ layer.weights
            n, c, h, w = x_shape
            g = np.broadcast_to((gfeats / (h * w))[:, :, None, None], x_shape)
        else:
            x_shape, cols, pre = caches[i]
            gpre = g * (pre > 0)
            gw, gb, g = _conv_backward(gpre, cols, x_shape, layer, _STRIDE[layer.kind])
        grads[i] = (gw, gb)
    return grads, g


def softmax_cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits.

    The max-shift keeps exp() in range for any finite logits. The gradient
    is (softmax - one_hot) / batch_size.
    """
    logits = np.asarray(logits)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (n, classes), got ndim={logits.ndim}")
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match {n} logits rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ShapeError(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    se = ez.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    loss = float(np.mean(np.log(se[:, 0]) - z[rows, labels]))
    grad = ez / se
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, grad


def sgd_step(layers, grads, hyper):
    """One plain SGD step, w <- w - lr*(g + wd*w), biases included."""
    lr = hyper.learning_rate
    wd = hyper.weight_decay
    out = []
    for layer, (gw, gb) in zip(layers, grads):
        w = layer.weights - lr * (gw + wd * layer.weights)
        b = layer.bias - lr * (gb + wd * layer.bias)
        out.append(type(layer)(layer.kind, w, b))
    return out


def run_sgd(layers, images, labels, hyper):
    """Mini-batch SGD over (images, labels) for hyper.epochs epochs.

    Each epoch reshuffles with the generator seeded once from
    hyper.shuffle_seed; the trailing partial batch is kept. Returns the
    updated layer list and the number of SGD steps taken.
    """
    n = len(images)
    if n == 0:
        raise ShapeError("cannot train on an empty dataset")
    rng = np.random.default_rng(hyper.shuffle_seed)
    layers = list(layers)
    steps = 0
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            logits, caches = _forward_cached(layers, images[idx])
            _, gl = softmax_cross_entropy(logits, labels[idx])
            grads, _ = backward_layers(layers, caches, gl)
            layers = sgd_step(layers, grads, hyper)
            steps += 1
    return layers, steps


def grad_check(layers, images, labels, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    Perturbs every scalar parameter of every layer by +-eps and compares
    (L+ - L-) / 2eps against the backprop gradient, with the relative error
    |a - n| / max(|a|, |n|, 1e-8). The stack must end in a dense layer so
    the loss is defined; an empty stack checks nothing and returns 0.0.

    The parameters should be in general position: a freshly built model has
    zero biases, and a receptive field of all-zero inputs then lands its
    pre-activation exactly on the ReLU kink, where the one-sided response to
    a bias perturbation breaks the central difference. Adding small nonzero
    noise to the biases avoids this without touching the layers under test;
    relu_margin() measures how far an instance sits from the nearest kink.
    """
    if not layers:
        return 0.0
    logits, caches = _forward_cached(layers, images)
    _, gl = softmax_cross_entropy(logits, labels)
    grads, _ = backward_layers(layers, caches, gl)

    work = [type(l)(l.kind, l.weights.copy(), l.bias.copy()) for l in layers]

    def loss_at():
        out = forward_layers(work, images)
        return softmax_cross_entropy(out, labels)[0]

    worst = 0.0
    for li, layer in enumerate(work):
        for arr, ana in ((layer.weights, grads[li][0]), (layer.bias, grads[li][1])):
            flat = arr.reshape(-1)
            aflat = ana.reshape(-1)
            for i in range(flat.size):
                v = flat[i]
                flat[i] = v + eps
                lp = loss_at()
                flat[i] = v - eps
                lm = loss_at()
                flat[i] = v
                num = (lp - lm) / (2 * eps)
                err = abs(aflat[i] - num) / max(abs(aflat[i]), abs(num), 1e-8)
                worst = max(worst, err)
    return worst


def relu_margin(layers, images):
    """Smallest |pre-activation| across every conv unit of the stack.

    A central difference with step eps is trustworthy only when no rectified
    unit sits within eps of zero, since a perturbation may then activate the
    unit on one side of the difference but not the other. Returns inf when
    the stack has no conv layers.
    """
    _, caches = _forward_cached(layers, images)
    margin = np.inf
    for cache in caches:
        if len(cache) == 3:
            pre = cache[2]
            if pre.size:
                margin = min(margin, float(np.abs(pre).min()))
    return margin


def forward(model, batch, from_level="input", to_level="output"):
    """Run `model` between two stages of the pipeline.

    Stages are "input", "G1", "G2", "G3", "output"; from_level must lie
    strictly below to_level. The batch's per-sample shape must match the
    architecture's declared shape at from_level.
    """
    arch = model.arch
    i0 = arch.stage_index(from_level)
    i1 = arch.stage_index(to_level)
    if i0 >= i1:
        raise ConfigError(f"from_level {from_level!r} must lie strictly below to_level {to_level!r}")
    batch = np.asarray(batch)
    want = arch.activation_shape(from_level)
    if batch.ndim != 4 or tuple(batch.shape[1:]) != tuple(want):
        raise ShapeError(
            f"batch per-sample shape {tuple(batch.shape[1:]) if batch.ndim == 4 else batch.shape} "
            f"does not match {want} expected at {from_level!r}"
        )
    return forward_layers(model.layers[i0:i1], batch)
