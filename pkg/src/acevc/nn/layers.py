"""Parameterized layers built on the Tensor autodiff core.

Layers operate on (time, channels) matrices; there is no batch axis.
Variable-length batching is done by looping over items and averaging
losses, which keeps masks out of the layer contracts.
"""

from __future__ import annotations

import numpy as np

from .tensor import Parameter, Tensor, custom_op, softmax

__all__ = [
    "Module",
    "ModuleList",
    "Linear",
    "Conv1d",
    "LayerNorm",
    "MultiHeadSelfAttention",
    "FeedForward",
    "trunc_normal",
]


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02,
                 dtype=np.float32) -> np.ndarray:
    """Normal(0, std) clipped to two standard deviations."""
    values = rng.normal(0.0, std, size=shape)
    return np.clip(values, -2.0 * std, 2.0 * std).astype(dtype)


class Module:
    """Minimal container: tracks Parameters and sub-Modules by attribute."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, (Module, ModuleList)):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> dict:
        out = {}
        for name, p in self._params.items():
            out[prefix + name] = p
        for name, mod in self._modules.items():
            out.update(mod.named_parameters(prefix + name + "."))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def param_groups(self) -> dict:
        """Group name -> list of (name, Parameter), insertion-ordered."""
        groups: dict = {}
        for name, p in self.named_parameters().items():
            groups.setdefault(p.group, []).append((name, p))
        return groups

    def state_dict(self) -> dict:
        return {name: p.data for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict):
        params = self.named_parameters()
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} "
                           f"unexpected={sorted(unexpected)}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{value.shape} vs {p.data.shape}")
            p.data = value.astype(p.data.dtype, copy=True)

    def cast_(self, dtype):
        """In-place dtype cast of every parameter (for float64 shadow passes)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    @property
    def dtype(self):
        for p in self.parameters():
            return p.data.dtype
        return np.float32


class ModuleList:
    def __init__(self, modules=()):
        self._items = list(modules)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, idx):
        return self._items[idx]

    def append(self, module):
        self._items.append(module)

    def named_parameters(self, prefix: str = "") -> dict:
        out = {}
        for i, mod in enumerate(self._items):
            out.update(mod.named_parameters(f"{prefix}{i}."))
        return out


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, group: str,
                 rng: np.random.Generator, bias: bool = True,
                 dtype=np.float32):
        super().__init__()
        self.weight = Parameter(trunc_normal(rng, (in_dim, out_dim), dtype=dtype),
                                group=group)
        self.bias = Parameter(np.zeros(out_dim, dtype=dtype), group=group) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y


class Conv1d(Module):
    """1-D convolution over (T, C) input, channels-last.

    `padding` counts zeros added at each end; output length is
    (T + 2*padding - kernel) // stride + 1.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 group: str, rng: np.random.Generator, stride: int = 1,
                 padding: int | None = None, dtype=np.float32):
        super().__init__()
        if padding is None:
            if kernel % 2 == 0:
                raise ValueError("same-padding needs an odd kernel")
            padding = (kernel - 1) // 2
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.weight = Parameter(
            trunc_normal(rng, (kernel, in_channels, out_channels), dtype=dtype),
            group=group)
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype), group=group)

    def __call__(self, x: Tensor) -> Tensor:
        w, b = self.weight, self.bias
        kernel, stride, pad = self.kernel, self.stride, self.padding
        a = x.data
        t_in = a.shape[0]
        t_out = (t_in + 2 * pad - kernel) // stride + 1
        if t_out < 1:
            raise ValueError(f"input of {t_in} steps too short for kernel {kernel}")
        padded = np.pad(a, ((pad, pad), (0, 0))) if pad else a
        s0, s1 = padded.strides
        windows = np.lib.stride_tricks.as_strided(
            padded, shape=(t_out, kernel, a.shape[1]), strides=(stride * s0, s0, s1))
        out = np.einsum("tkc,kco->to", windows, w.data, optimize=True) + b.data

        def vjp(g):
            gx_pad = np.zeros_like(padded)
            positions = np.arange(t_out) * stride
            for k in range(kernel):
                gx_pad[positions + k] += g @ w.data[k].T
            gx = gx_pad[pad:pad + t_in] if pad else gx_pad
            gw = np.einsum("tkc,to->kco", windows, g, optimize=True)
            gb = g.sum(axis=0)
            return gx, gw, gb

        return custom_op(out, (x, w, b), vjp)


class LayerNorm(Module):
    def __init__(self, dim: int, group: str, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.gain = Parameter(np.ones(dim, dtype=dtype), group=group)
        self.shift = Parameter(np.zeros(dim, dtype=dtype), group=group)

    def __call__(self, x: Tensor) -> Tensor:
        a = x.data
        mu = a.mean(axis=-1, keepdims=True)
        var = a.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (a - mu) * inv
        gain, shift = self.gain, self.shift
        out = xhat * gain.data + shift.data

        def vjp(g):
            gg = g * gain.data
            m1 = gg.mean(axis=-1, keepdims=True)
            m2 = (gg * xhat).mean(axis=-1, keepdims=True)
            gx = (gg - m1 - xhat * m2) * inv
            axes = tuple(range(g.ndim - 1))
            return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

        return custom_op(out, (x, gain, shift), vjp)


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, heads: int, group: str,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if dim % heads:
            raise ValueError("dim must divide evenly over heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = 1.0 / np.sqrt(self.head_dim)
        self.proj_q = Linear(dim, dim, group, rng, dtype=dtype)
        self.proj_k = Linear(dim, dim, group, rng, dtype=dtype)
        self.proj_v = Linear(dim, dim, group, rng, dtype=dtype)
        self.proj_out = Linear(dim, dim, group, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        t = x.shape[0]
        h, d = self.heads, self.head_dim

        def split(y):  # (T, dim) -> (heads, T, head_dim)
            return y.reshape(t, h, d).transpose(1, 0, 2)

        q = split(self.proj_q(x))
        k = split(self.proj_k(x))
        v = split(self.proj_v(x))
        scores = (q @ k.transpose(0, 2, 1)) * self.scale
        attn = softmax(scores, axis=-1)
        ctx = (attn @ v).transpose(1, 0, 2).reshape(t, h * d)
        return self.proj_out(ctx)


class FeedForward(Module):
    def __init__(self, dim: int, mult: int, group: str,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.expand = Linear(dim, dim * mult, group, rng, dtype=dtype)
        self.contract = Linear(dim * mult, dim, group, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.contract(self.expand(x).gelu())
