"""Shared test utilities: the finite-difference gradient oracle.

The checker is deliberately independent of the engine's backward pass:
it only re-evaluates the loss with perturbed parameter entries.
"""

import numpy as np


def finite_difference_grads(loss_fn, params, h=1e-5):
    """Central finite differences of a scalar loss wrt each parameter entry.

    ``loss_fn`` must rebuild the loss from the parameters' current data.
    """
    grads = []
    for p in params:
        flat = p.data.reshape(-1)
        g = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn().item()
            flat[i] = orig - h
            fm = loss_fn().item()
            flat[i] = orig
            g[i] = (fp - fm) / (2.0 * h)
        grads.append(g.reshape(p.data.shape))
    return grads


def assert_grads_match(loss_fn, params, rtol=1e-4, atol=1e-7, h=1e-5):
    """Analytic gradients must match central differences per coordinate."""
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
    ]
    numeric = finite_difference_grads(loss_fn, params, h=h)
    for a, n in zip(analytic, numeric):
        err = np.abs(a - n)
        tol = atol + rtol * np.maximum(np.abs(a), np.abs(n))
        assert np.all(err <= tol), (
            f"gradient mismatch: max abs err {err.max():.3e}, "
            f"worst rel {(err / np.maximum(np.abs(n), 1e-12)).max():.3e}"
        )
