"""Central-difference validation of tape gradients. Run in float64."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import CodemixError
from .tensor import Tensor


def finite_diff_grad_check(loss_fn: Callable[[dict[str, Tensor]], Tensor],
                           params: dict[str, Tensor],
                           epsilon: float = 1e-5,
                           max_coords_per_tensor: int = 5,
                           rng: np.random.Generator | None = None,
                           denominator_floor: float = 1e-5) -> float:
    """Max over sampled coordinates of
    |analytic - central_difference| / max(|analytic|, |numeric|, floor).

    Samples up to `max_coords_per_tensor` coordinates of each parameter.
    `loss_fn` must be deterministic (checked with two forward passes) and
    scalar-valued; parameters should be float64.

    The denominator floor is the smallest gradient magnitude the comparison
    treats as resolvable: central differences carry ~|loss| * 1e-16 / epsilon
    of float64 noise, so coordinates with truly tiny gradients (for example
    attention key biases, which are inert through the softmax) would otherwise
    report pure measurement noise. A wrong analytic gradient on such a
    coordinate still surfaces, because |analytic| itself then dominates the
    denominator and the ratio approaches 1.
    """
    rng = rng or np.random.default_rng(0)
    l1 = loss_fn(params).item()
    l2 = loss_fn(params).item()
    if l1 != l2:
        raise CodemixError("loss_fn is not deterministic: two forward passes "
                           f"disagree ({l1} vs {l2})")

    for t in params.values():
        t.zero_grad()
    loss = loss_fn(params)
    loss.backward()
    analytic = {k: (t.grad.copy() if t.grad is not None else
                    np.zeros_like(t.data))
                for k, t in params.items()}

    worst = 0.0
    for name, t in params.items():
        flat = t.data.reshape(-1)
        n = flat.size
        if n <= max_coords_per_tensor:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=max_coords_per_tensor, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + epsilon
            fp = loss_fn(params).item()
            flat[c] = orig - epsilon
            fm = loss_fn(params).item()
            flat[c] = orig
            numeric = (fp - fm) / (2.0 * epsilon)
            a = analytic[name].reshape(-1)[c]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), denominator_floor)
            worst = max(worst, rel)
    return worst
