"""Central finite-difference checks for the reverse-mode engine."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


def numeric_grad(fn: Callable[[], Tensor], x: Tensor, eps: float = 1e-5,
                 entries: np.ndarray | None = None) -> np.ndarray:
    """d fn / d x by central differences, perturbing ``x.data`` in place.

    ``entries`` restricts the work to those flat indices; other entries stay 0.
    """
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in (range(flat.size) if entries is None else entries):
        orig = flat[i]
        flat[i] = orig + eps
        fp = fn().item()
        flat[i] = orig - eps
        fm = fn().item()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = np.linalg.norm(analytic - numeric)
    den = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    return 0.0 if den == 0.0 else float(num / den)


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-5,
                    max_entries: int | None = None,
                    rng: np.random.Generator | None = None) -> list[float]:
    """Relative error between reverse-mode and numeric gradient for each input.

    With ``max_entries`` only a random subset of each input's coordinates is
    perturbed and the error is measured on that subset.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    for t in inputs:
        t.grad = None
        t.requires_grad = True
    loss = fn()
    backward(loss)
    errs = []
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        if max_entries is None or t.data.size <= max_entries:
            errs.append(relative_error(analytic, numeric_grad(fn, t, eps)))
            continue
        entries = rng.choice(t.data.size, size=max_entries, replace=False)
        numeric = numeric_grad(fn, t, eps, entries).reshape(-1)[entries]
        errs.append(relative_error(analytic.reshape(-1)[entries], numeric))
    return errs
