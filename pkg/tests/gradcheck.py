"""Central finite-difference oracle for the pathway model."""

import numpy as np

from focalfuse.model import init_model, loss_and_grads


def batch_loss(model, X, y, gamma, literal=False):
    losses, _ = loss_and_grads(model, X, y, gamma, literal=literal)
    return float(np.mean(losses))


def random_case(rng):
    n_hidden = int(rng.integers(1, 4))
    d_in = int(rng.integers(3, 11))
    dims = [d_in] + [int(rng.integers(4, 33)) for _ in range(n_hidden)]
    K = int(rng.integers(2, 8))
    model = init_model(dims, K, int(rng.integers(2**32)))
    for b in model.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)
    n = int(rng.integers(1, 6))
    X = rng.normal(size=(n, d_in))
    y = rng.integers(0, K, n)
    gamma = float(rng.choice([0.0, 2.0, rng.uniform(0, 3)]))
    return model, X, y, gamma


def check_model_gradient(model, X, y, gamma, rng, n_coords=40, h=1e-5, literal=False):
    """Largest relative error over ``n_coords`` random coordinates (or all if None)."""
    _, grads = loss_and_grads(model, X, y, gamma, literal=literal)
    params = model.params()
    coords = [(i, j) for i, p in enumerate(params) for j in range(p.size)]
    if n_coords is not None and len(coords) > n_coords:
        pick = rng.choice(len(coords), n_coords, replace=False)
        coords = [coords[k] for k in pick]
    scale = max(max(float(np.max(np.abs(g))) for g in grads), 1e-6)
    worst = 0.0
    for i, j in coords:
        flat = params[i].reshape(-1)
        old = flat[j]
        flat[j] = old + h
        up = batch_loss(model, X, y, gamma, literal)
        flat[j] = old - h
        down = batch_loss(model, X, y, gamma, literal)
        flat[j] = old
        fd = (up - down) / (2 * h)
        g = grads[i].reshape(-1)[j]
        worst = max(worst, abs(g - fd) / max(abs(fd), abs(g), scale * 1e-2))
    return worst
