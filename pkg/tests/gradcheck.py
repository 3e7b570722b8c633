"""Central-difference gradient checking shared by the test modules."""
from __future__ import annotations

import numpy as np


def rel_err(a: float, b: float, floor: float = 1e-6) -> float:
    """Relative error with the denominator floored.

    A parameter the loss ignores has an exact zero gradient while the
    difference quotient carries ~1e-10 of rounding noise.
    """
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradient(loss_fn, arrays: dict, rng, points: int = 20, h: float = 1e-6) -> float:
    """Worst relative error between analytic and numeric partials at random coordinates.

    ``loss_fn()`` returns ``(loss, grads)`` for the current contents of
    ``arrays``, which are perturbed in place and restored.
    """
    _, grads = loss_fn()
    names = sorted(k for k, v in arrays.items() if v.size)
    worst = 0.0
    for _ in range(points):
        k = names[rng.integers(len(names))]
        idx = np.unravel_index(rng.integers(arrays[k].size), arrays[k].shape)
        old = arrays[k][idx]
        arrays[k][idx] = old + h
        up = loss_fn()[0]
        arrays[k][idx] = old - h
        down = loss_fn()[0]
        arrays[k][idx] = old
        worst = max(worst, rel_err((up - down) / (2 * h), grads[k][idx]))
    return worst
