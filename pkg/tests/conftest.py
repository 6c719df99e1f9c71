"""Shared test helpers: finite-difference gradient oracle, dyadic values."""

import numpy as np

from gohome.nn.tensor import no_grad


def fd_check(fn, params, rel_tol=1e-4, step=1e-6, max_coords=None, rng=None):
    """Compare reverse-mode gradients of fn() against central differences.

    ``fn`` rebuilds the scalar loss graph from ``params`` on every call.
    ``max_coords`` caps the number of coordinates probed per parameter
    (sampled without replacement) so large models stay within time budget.
    """
    for p in params:
        p.grad = None
    loss = fn()
    loss.backward()
    analytic = [None if p.grad is None else p.grad.copy() for p in params]
    with no_grad():
        for p, grad in zip(params, analytic):
            if grad is None:
                grad = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            gflat = grad.reshape(-1)
            if max_coords is not None and flat.size > max_coords:
                coords = rng.choice(flat.size, size=max_coords, replace=False)
            else:
                coords = range(flat.size)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + step
                up = fn().item()
                flat[i] = orig - step
                down = fn().item()
                flat[i] = orig
                fd = (up - down) / (2.0 * step)
                a = gflat[i]
                if abs(a) < 1e-7 and abs(fd) < 1e-7:
                    continue
                rel = abs(a - fd) / max(abs(a), abs(fd))
                assert rel < rel_tol, f"grad mismatch at coord {i}: analytic {a} vs fd {fd}"


def dyadic(rng, shape, denom=16, span=64):
    """Random floats of the form k/denom, exactly representable in float64.

    Sums and products of such values (at the sizes used in tests) incur no
    rounding, so results are identical regardless of accumulation order.
    """
    return rng.integers(-span, span + 1, size=shape).astype(np.float64) / denom
