"""Analytic and numerical gradients of the MAE training loss."""
import numpy as np

from dfr.errors import ParameterError
from dfr.nn.tensor import mae_loss


def loss(network, inputs, target):
    return float(mae_loss(network(inputs), target).data)


def backward(network, inputs, target):
    """Gradient of the MAE loss for every parameter of ``network``.

    Returns a list of arrays in ``network.parameters()`` order.
    """
    network.zero_grad()
    out = mae_loss(network(inputs), target)
    out.backward()
    return [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
        for p in network.parameters()
    ]


def numerical_grad(f, arrays, eps=1e-4):
    """Central-difference gradient of the scalar ``f()`` w.r.t. each array.

    ``f`` takes no arguments and must read the arrays it depends on; they are
    perturbed in place and restored afterwards.
    """
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    grads = []
    for a in arrays:
        g = np.zeros(a.shape, dtype=np.float64)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f()
            flat[i] = orig - eps
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def finite_diff_grad(network, inputs, target, eps=1e-4):
    """Central-difference estimate of :func:`backward`."""
    return numerical_grad(
        lambda: loss(network, inputs, target),
        [p.data for p in network.parameters()],
        eps,
    )
