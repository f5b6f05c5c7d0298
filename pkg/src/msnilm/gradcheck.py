"""Central finite-difference checks for analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from msnilm.tensor import Tensor


@dataclass
class GradCheckResult:
    name: str
    checked: int
    max_rel_err: float
    worst_analytic: float
    worst_numeric: float

    def passed(self, rtol: float) -> bool:
        return self.max_rel_err < rtol


def rel_err(analytic: float, numeric: float, floor: float = 1e-10) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    names: Optional[Sequence[str]] = None,
    eps: float = 1e-5,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> list:
    """Compare ``backward()`` gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` must rebuild the graph from the current contents of
    ``params`` each time it is called. With ``max_entries`` only that many
    randomly chosen entries per tensor are perturbed.
    """
    names = names or [f"param{i}" for i in range(len(params))]
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    results = []
    for name, p, ga in zip(names, params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        worst = (0.0, 0.0, 0.0)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn().item()
            flat[i] = orig - eps
            down = loss_fn().item()
            flat[i] = orig
            num = (up - down) / (2 * eps)
            a = float(ga.reshape(-1)[i])
            err = rel_err(a, num)
            if err >= worst[0]:
                worst = (err, a, num)
        results.append(GradCheckResult(name, len(idx), worst[0], worst[1], worst[2]))
    return results


def check_directional(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Relative error of the directional derivative along one random unit direction
    spanning every parameter at once."""
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.grad = None
    loss_fn().backward()
    dirs = [rng.standard_normal(p.shape) for p in params]
    norm = np.sqrt(sum((v * v).sum() for v in dirs))
    dirs = [v / norm for v in dirs]
    analytic = sum(float((p.grad * v).sum()) for p, v in zip(params, dirs) if p.grad is not None)
    base = [p.data.copy() for p in params]

    def shifted(s):
        for p, b, v in zip(params, base, dirs):
            p.data[...] = b + s * v
        return loss_fn().item()

    up, down = shifted(eps), shifted(-eps)
    for p, b in zip(params, base):
        p.data[...] = b
    return rel_err(analytic, (up - down) / (2 * eps))
