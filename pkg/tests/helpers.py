"""Shared test utilities: finite-difference checks and tiny model factories."""

import numpy as np

from hyperflux.training import TrainConfig, build_params


def fd_param_check(loss_fn, params, names=None, eps=1e-5, floor=1e-3):
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn()`` must return a scalar Tensor computed from `params`; the
    check perturbs every coordinate of the named parameters.
    """
    names = list(names or params.names())
    params.zero_grads()
    loss_fn().backward()
    analytic = {}
    for n in names:
        g = params[n].grad
        analytic[n] = g.copy() if g is not None else np.zeros_like(params[n].value)
    params.zero_grads()

    worst = 0.0
    for n in names:
        p = params[n]
        it = np.nditer(p.value, flags=["multi_index"])
        while not it.finished:
            i = it.multi_index
            orig = p.value[i]
            p.value[i] = orig + eps
            hi = loss_fn().item()
            p.value[i] = orig - eps
            lo = loss_fn().item()
            p.value[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            a = analytic[n][i]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
            it.iternext()
    return worst


def tiny_params(node_count=6, kr_max=3, kl_max=3, dim=4, heads=2, seed=0, span=5.0):
    cfg = TrainConfig(dim=dim, heads=heads, seed=seed, cache_depth=3, negatives=3)
    return build_params(node_count, kr_max, kl_max, cfg, span), cfg


def random_reps(rng, k, dim):
    return rng.uniform(-0.9, 0.9, size=(k, dim))
