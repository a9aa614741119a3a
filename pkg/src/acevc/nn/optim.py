"""Adam with per-group learning rates and a shared step counter."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Parameter

__all__ = ["ParamGroup", "Adam", "NonFiniteLossError", "forward_backward"]


class NonFiniteLossError(RuntimeError):
    """A loss term evaluated to NaN or infinity; carries the term's name."""

    def __init__(self, term: str, value: float):
        super().__init__(f"non-finite loss term '{term}': {value}")
        self.term = term
        self.value = value


@dataclass
class ParamGroup:
    """Named parameters sharing one learning rate."""

    name: str
    params: list = field(default_factory=list)  # (param_name, Parameter) pairs
    learning_rate: float = 1e-4


def groups_from_model(model, learning_rates: dict) -> list:
    """Build ParamGroups from a Module whose Parameters carry group tags."""
    groups = []
    for group_name, members in model.param_groups().items():
        if group_name not in learning_rates:
            raise KeyError(f"no learning rate configured for group '{group_name}'")
        groups.append(ParamGroup(group_name, members, learning_rates[group_name]))
    return groups


class Adam(object):
    def __init__(self, groups, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.groups = list(groups)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {}
        self.v = {}
        seen = set()
        for group in self.groups:
            for name, p in group.params:
                if name in seen:
                    raise ValueError(f"duplicate parameter name '{name}'")
                seen.add(name)
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)

    def zero_grad(self):
        for group in self.groups:
            for _, p in group.params:
                p.grad = None

    def step(self, gradients: dict | None = None):
        """One Adam update. Gradients default to each Parameter's .grad."""
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for group in self.groups:
            lr = group.learning_rate
            for name, p in group.params:
                g = gradients[name] if gradients is not None else p.grad
                if g is None:
                    raise ValueError(f"missing gradient for '{name}'")
                g = np.asarray(g)
                if g.shape != p.data.shape:
                    raise ValueError(f"gradient shape {g.shape} does not match "
                                     f"parameter '{name}' {p.data.shape}")
                m = self.m[name]
                v = self.v[name]
                m += (1.0 - self.beta1) * (g - m)
                v += (1.0 - self.beta2) * (g * g - v)
                update = (m / c1) / (np.sqrt(v / c2) + self.eps)
                p.data = p.data - lr * update

    def state_dict(self) -> dict:
        state = {"step": np.int64(self.step_count)}
        for name in self.m:
            state[f"m/{name}"] = self.m[name]
            state[f"v/{name}"] = self.v[name]
        return state

    def load_state_dict(self, state: dict):
        self.step_count = int(np.asarray(state["step"]).reshape(()))
        for name in self.m:
            self.m[name] = np.asarray(state[f"m/{name}"]).astype(
                self.m[name].dtype, copy=True)
            self.v[name] = np.asarray(state[f"v/{name}"]).astype(
                self.v[name].dtype, copy=True)


def forward_backward(model, batch, loss_fn):
    """Run loss_fn(model, batch), check finiteness, backprop, return grads.

    loss_fn must return (total: Tensor, parts: dict[str, Tensor]). Raises
    NonFiniteLossError naming the first offending part.
    """
    model.zero_grad()
    total, parts = loss_fn(model, batch)
    for term, value in parts.items():
        v = float(value.data) if hasattr(value, "data") else float(value)
        if not np.isfinite(v):
            raise NonFiniteLossError(term, v)
    if not np.isfinite(float(total.data)):
        raise NonFiniteLossError("total", float(total.data))
    total.backward()
    grads = {name: p.grad for name, p in model.named_parameters().items()}
    return float(total.data), grads
