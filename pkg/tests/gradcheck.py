"""Central finite-difference gradient checks (independent of any backward code)."""

import numpy as np

H = 1e-5
# Entries whose true gradient is ~0 are compared on an absolute scale:
# the denominator never drops below FLOOR times the largest gradient entry
# seen across all probed tensors (e.g. conv biases feeding batch norm have
# an exactly zero gradient, so their differences are pure roundoff).
FLOOR = 1e-3


def rel_error(a, n, scale=1.0):
    return abs(a - n) / max(abs(a), abs(n), FLOOR * scale, 1e-12)


def check_module(module, x, train=True, probes=50, seed=0, dropout_seed=123):
    """Compare analytic and numeric gradients of sum(module(x) * R).

    Probes are spread over the input and every parameter tensor. Returns the
    maximum relative error seen.
    """
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)

    def run(inp):
        return module.forward(inp, train=train, rng=np.random.default_rng(dropout_seed))

    out = run(x)
    weights = rng.standard_normal(out.shape)
    module.zero_grad()
    dx = module.backward(weights)
    params = module.parameters()
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]

    def loss(inp):
        return float((run(inp) * weights).sum())

    targets = [("x", x, dx)] + [(f"p{i}", p.data, g) for i, (p, g) in enumerate(zip(params, grads))]
    scale = max(float(np.abs(g).max()) for _, _, g in targets)
    worst = 0.0
    for k in range(probes):
        name, arr, g = targets[k % len(targets)] if k < len(targets) else targets[rng.integers(len(targets))]
        idx = tuple(rng.integers(s) for s in arr.shape)
        old = arr[idx]
        arr[idx] = old + H
        fp = loss(x)
        arr[idx] = old - H
        fm = loss(x)
        arr[idx] = old
        num = (fp - fm) / (2 * H)
        worst = max(worst, rel_error(g[idx], num, scale))
    return worst


def check_function(fn, inputs, probes=50, seed=0):
    """``fn(*inputs) -> (scalar, grads)``; probes each input array."""
    rng = np.random.default_rng(seed)
    inputs = [np.array(a, dtype=np.float64) for a in inputs]
    _, grads = fn(*inputs)
    scale = max(float(np.abs(g).max()) for g in grads)
    worst = 0.0
    for k in range(probes):
        j = k % len(inputs)
        arr = inputs[j]
        idx = tuple(rng.integers(s) for s in arr.shape)
        old = arr[idx]
        arr[idx] = old + H
        fp = fn(*inputs)[0]
        arr[idx] = old - H
        fm = fn(*inputs)[0]
        arr[idx] = old
        worst = max(worst, rel_error(grads[j][idx], (fp - fm) / (2 * H), scale))
    return worst
