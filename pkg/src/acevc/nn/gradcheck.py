"""Finite-difference verification of analytic gradients.

Checks run on a float64 deep copy of the model so the comparison is not
limited by float32 rounding. Models passed in must be small: cost is two
forward passes per parameter element.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

__all__ = ["GradCheckReport", "grad_check", "numeric_gradient"]


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_error: dict  # param name -> worst relative error

    @property
    def passed(self) -> bool:
        return all(err <= self.tolerance for err in self.max_rel_error.values())

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values()) if self.max_rel_error else 0.0

    def __str__(self):
        lines = [f"grad check ({'pass' if self.passed else 'FAIL'}, "
                 f"tolerance {self.tolerance:g})"]
        for name, err in sorted(self.max_rel_error.items(),
                                key=lambda kv: -kv[1]):
            flag = "" if err <= self.tolerance else "  <-- FAIL"
            lines.append(f"  {name}: {err:.3e}{flag}")
        return "\n".join(lines)


def _rel_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-3)


def numeric_gradient(fn, array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar fn() w.r.t. `array`, in place."""
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        step = h * (1.0 + abs(orig))
        flat[i] = orig + step
        up = fn()
        flat[i] = orig - step
        down = fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def grad_check(model, loss_fn, tolerance: float = 1e-4,
               h: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients of loss_fn(model) against finite differences.

    loss_fn receives the model and must return a scalar Tensor; any inputs it
    closes over should be cast to model.dtype (the shadow copy is float64).
    """
    shadow = copy.deepcopy(model)
    shadow.cast_(np.float64)

    shadow.zero_grad()
    loss = loss_fn(shadow)
    loss.backward()
    analytic = {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for name, p in shadow.named_parameters().items()}

    report = {}
    for name, p in shadow.named_parameters().items():
        numeric = numeric_gradient(lambda: float(loss_fn(shadow).data), p.data, h=h)
        a = analytic[name]
        worst = 0.0
        for ai, ni in zip(np.asarray(a).reshape(-1), numeric.reshape(-1)):
            worst = max(worst, _rel_error(float(ai), float(ni)))
        report[name] = worst
    return GradCheckReport(tolerance=tolerance, max_rel_error=report)
