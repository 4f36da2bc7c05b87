"""Finite-difference verification battery for every differentiable piece.

Each check builds a small random instance, computes analytic gradients,
and compares them against central finite differences (64-bit, step 1e-4).
Returned values are guarded max relative errors; anything above 1e-4
indicates a broken backward pass.
"""

import numpy as np

from . import nn
from .model import CompressedSRNet
from .nn.gradcheck import DEFAULT_STEP, max_rel_error, numerical_grad, numerical_grad_sample

GRAD_TOLERANCE = 1e-4


def _loss_weights(rng, shape):
    return rng.normal(size=shape)


def check_conv(seed=0):
    rng = np.random.default_rng((seed, 10))
    x = rng.normal(size=(2, 3, 7, 7))
    w = rng.normal(size=(4, 3, 3, 3)) * 0.5
    b = rng.normal(size=4) * 0.1
    y, _ = nn.conv2d_forward(x, w, b, stride=1, pad=1)
    g = _loss_weights(rng, y.shape)
    dx, dw, db = nn.conv2d_backward(x, w, g, stride=1, pad=1)
    errs = [
        max_rel_error(dx, numerical_grad(
            lambda v: float(np.sum(nn.conv2d_forward(v, w, b, 1, 1)[0] * g)), x.copy())),
        max_rel_error(dw, numerical_grad(
            lambda v: float(np.sum(nn.conv2d_forward(x, v, b, 1, 1)[0] * g)), w.copy())),
        max_rel_error(db, numerical_grad(
            lambda v: float(np.sum(nn.conv2d_forward(x, w, v, 1, 1)[0] * g)), b.copy())),
    ]
    return max(errs)


def check_deconv(seed=0):
    rng = np.random.default_rng((seed, 11))
    x = rng.normal(size=(2, 3, 5, 5))
    w = rng.normal(size=(3, 2, 9, 9)) * 0.3
    b = rng.normal(size=2) * 0.1
    y = nn.deconv2d_forward(x, w, b)
    g = _loss_weights(rng, y.shape)
    dx, dw, db = nn.deconv2d_backward(x, w, g)
    errs = [
        max_rel_error(dx, numerical_grad(
            lambda v: float(np.sum(nn.deconv2d_forward(v, w, b) * g)), x.copy())),
        max_rel_error(dw, numerical_grad(
            lambda v: float(np.sum(nn.deconv2d_forward(x, v, b) * g)), w.copy())),
        max_rel_error(db, numerical_grad(
            lambda v: float(np.sum(nn.deconv2d_forward(x, w, v) * g)), b.copy())),
    ]
    return max(errs)


def _bn_check(seed, train):
    rng = np.random.default_rng((seed, 12 if train else 13))
    bn = nn.BatchNorm2d(3)
    bn.gamma.data[:] = rng.normal(1.0, 0.3, 3)
    bn.beta.data[:] = rng.normal(0.0, 0.3, 3)
    bn.running_mean[:] = rng.normal(0.0, 0.3, 3)
    bn.running_var[:] = rng.uniform(0.5, 1.5, 3)
    x = rng.normal(size=(3, 3, 4, 5))
    g = _loss_weights(rng, x.shape)

    def fresh():
        bn2 = nn.BatchNorm2d(3)
        bn2.gamma.data[:] = bn.gamma.data
        bn2.beta.data[:] = bn.beta.data
        bn2.running_mean[:] = bn.running_mean
        bn2.running_var[:] = bn.running_var
        return bn2

    def f_x(v):
        return float(np.sum(fresh().forward(v, train=train) * g))

    def f_gamma(v):
        b2 = fresh()
        b2.gamma.data[:] = v
        return float(np.sum(b2.forward(x, train=train) * g))

    def f_beta(v):
        b2 = fresh()
        b2.beta.data[:] = v
        return float(np.sum(b2.forward(x, train=train) * g))

    bn.forward(x, train=train)
    dx = bn.backward(g)
    errs = [
        max_rel_error(dx, numerical_grad(f_x, x.copy())),
        max_rel_error(bn.gamma.grad, numerical_grad(f_gamma, bn.gamma.data.copy())),
        max_rel_error(bn.beta.grad, numerical_grad(f_beta, bn.beta.data.copy())),
    ]
    return max(errs)


def check_batchnorm_train(seed=0):
    return _bn_check(seed, train=True)


def check_batchnorm_eval(seed=0):
    return _bn_check(seed, train=False)


def check_relu(seed=0):
    rng = np.random.default_rng((seed, 14))
    x = rng.normal(size=(2, 2, 5, 5))
    x[np.abs(x) < 0.05] = 0.1  # keep inputs away from the kink
    g = _loss_weights(rng, x.shape)
    dx = nn.relu_backward(x, g)
    err = max_rel_error(dx, numerical_grad(
        lambda v: float(np.sum(nn.relu_forward(v) * g)), x.copy()))
    return err


def _relu_kink_margin(module, x):
    """Distance of the closest pre-ReLU activation to zero after a
    train-mode forward. Finite differences are only valid when this
    clears the perturbation-induced shift, so instances are resampled
    until it does."""
    module.forward(x, train=True)
    stacks = []
    if hasattr(module, "branch"):
        stacks.append(module.branch)
    if hasattr(module, "stack"):
        stacks.append(module.stack)
    if hasattr(module, "deblock"):
        stacks = [module.deblock.branch, module.upsample.stack, module.enhance.branch]
    margin = np.inf
    for stack in stacks:
        for layer in stack.layers:
            if isinstance(layer, nn.ReLU) and layer._cache is not None:
                margin = min(margin, float(np.min(np.abs(layer._cache))))
    return margin


# FD probes shift pre-activations by about step * |dpreact/dtheta|; any
# activation closer to the ReLU kink than that makes the difference
# quotient meaningless, so instances are redrawn until all clear this.
KINK_MARGIN = 1e-3


def _noise_floor(loss_scale):
    """Guard denominator for near-zero gradients.

    Central differences at step 1e-4 of these multi-layer losses carry
    absolute errors around 1e-9 (cancellation plus truncation), so
    gradients below this floor are judged by absolute deviation instead
    of a meaningless ratio of noise terms."""
    return max(3e-4, abs(loss_scale) * 1e-7)


def check_residual_skip(seed=0):
    """Gradient through y = x + branch(x) for inputs and branch weights."""
    from .model import ResidualCNN

    for attempt in range(256):
        rng = np.random.default_rng((seed, 15, attempt))
        net = ResidualCNN(depth=2, channels=3)
        for p in net.parameters():
            p.data[...] = rng.normal(0.0, 0.3, p.shape)
        x = rng.normal(size=(2, 1, 6, 6))
        if _relu_kink_margin(net, x) > KINK_MARGIN:
            break
    g = _loss_weights(rng, x.shape)
    net.forward(x, train=True)
    for p in net.parameters():
        p.zero_grad()
    dx = net.backward(g)

    def f_x(v):
        return float(np.sum(net.forward(v, train=True) * g))

    floor = _noise_floor(f_x(x))
    errs = [max_rel_error(dx, numerical_grad(f_x, x.copy()), floor=floor)]
    for p in net.parameters():
        def f_p(v, p=p):
            old = p.data.copy()
            p.data[...] = v
            out = float(np.sum(net.forward(x, train=True) * g))
            p.data[...] = old
            return out

        errs.append(max_rel_error(p.grad, numerical_grad(f_p, p.data.copy()), floor=floor))
    return max(errs)


def check_composed(seed=0, samples_per_type=10):
    """End-to-end loss gradients of the full three-stage network.

    Spot-checks randomly selected entries of at least samples_per_type
    parameters for every layer type (conv/deconv weight and bias, batch
    norm gamma/beta) across all three sub-networks.
    """
    for attempt in range(256):
        rng = np.random.default_rng((seed, 16, attempt))
        net = CompressedSRNet(depths=(3, 2, 2), channels=3, dtype=np.float64)
        net.initialize(seed=seed)
        # Perturb away from the structured init so the check is generic.
        for p in net.parameters():
            p.data += rng.normal(0.0, 0.05, p.shape)
        z = rng.uniform(0.1, 0.9, size=(1, 1, 7, 7))
        x = rng.uniform(0.1, 0.9, size=(1, 1, 14, 14))
        if _relu_kink_margin(net, z) > KINK_MARGIN:
            break

    out = net.forward(z, train=True)
    loss, grad = nn.mse_loss(out, x)
    floor = _noise_floor(loss)
    for p in net.parameters():
        p.zero_grad()
    net.backward(grad)

    def loss_at(p, v):
        old = p.data.copy()
        p.data[...] = v
        val = nn.mse_loss(net.forward(z, train=True), x)[0]
        p.data[...] = old
        return val

    def kind_of(p):
        base = p.name.rsplit(".", 1)[-1]
        if "deconv" in p.name:
            return f"deconv.{base}"
        if ".bn" in p.name:
            return f"bn.{base}"
        return f"conv.{base}"

    by_kind = {}
    for p in net.parameters():
        by_kind.setdefault(kind_of(p), []).append(p)

    worst = 0.0
    for kind, params in by_kind.items():
        checked = 0
        for p in params:
            if checked >= samples_per_type:
                break
            size = p.data.size
            take = min(size, max(1, samples_per_type // len(params) + 1))
            idx = rng.choice(size, size=take, replace=False)
            num = numerical_grad_sample(lambda v, p=p: loss_at(p, v), p.data.copy(), idx)
            ana = p.grad.reshape(-1)[idx]
            worst = max(worst, max_rel_error(ana, num, floor=floor))
            checked += take
    return worst


def gradient_battery(seed=0):
    """Max relative FD error per layer type; all must be < 1e-4."""
    return {
        "conv2d": check_conv(seed),
        "deconv2d": check_deconv(seed),
        "batchnorm_train": check_batchnorm_train(seed),
        "batchnorm_eval": check_batchnorm_eval(seed),
        "relu": check_relu(seed),
        "residual_skip": check_residual_skip(seed),
        "composed_loss": check_composed(seed),
    }
