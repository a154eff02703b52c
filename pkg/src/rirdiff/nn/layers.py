"""Layers and the module/parameter registry used by every model."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


class Parameter(Tensor):
    def __init__(self, data):
        super().__init__(np.asarray(data, dtype=np.float32), requires_grad=True)


class Module:
    """Parameter container with named recursion, train/eval mode, state dicts."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out = [(prefix + n, p) for n, p in self._params.items()]
        for n, m in self._modules.items():
            out.extend(m.named_parameters(prefix + n + "."))
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def modules(self) -> list["Module"]:
        out: list[Module] = [self]
        for m in self._modules.values():
            out.extend(m.modules())
        return out

    def train(self, flag: bool = True) -> "Module":
        for m in self.modules():
            object.__setattr__(m, "training", flag)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + n: p.data for n, p in self._params.items()}
        out.update({prefix + n: b for n, b in self._buffers.items()})
        for n, m in self._modules.items():
            out.update(m.state_dict(prefix + n + "."))
        return out

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        own = self.state_dict(prefix)
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ShapeError(f"state dict mismatch: missing {missing}, unexpected {extra}")
        for n, p in self._params.items():
            arr = state[prefix + n]
            if arr.shape != p.data.shape:
                raise ShapeError(f"{prefix + n}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.astype(np.float32).copy()
        for n in list(self._buffers):
            arr = state[prefix + n]
            self._buffers[n] = arr.copy()
            object.__setattr__(self, n, self._buffers[n])
        for n, m in self._modules.items():
            m.load_state_dict(state, prefix + n + ".")


class ModuleList(Module):
    def __init__(self, items: list[Module]):
        super().__init__()
        self.items = list(items)
        for i, m in enumerate(items):
            self._modules[str(i)] = m

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]


def _uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 bias: bool = True, zero_init: bool = False):
        super().__init__()
        if zero_init:
            self.weight = Parameter(np.zeros((d_in, d_out), dtype=np.float32))
        else:
            self.weight = Parameter(_uniform(rng, (d_in, d_out), 1.0 / np.sqrt(d_in)))
        self.bias = Parameter(np.zeros(d_out, dtype=np.float32)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim > 2:
            # one large GEMM instead of a batch of small ones
            lead = x.shape[:-1]
            y = x.reshape(int(np.prod(lead)), x.shape[-1]) @ self.weight
            if self.bias is not None:
                y = y + self.bias
            return y.reshape(*lead, self.weight.shape[1])
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, pad: int = 0, bias: bool = True):
        super().__init__()
        self.stride, self.pad = stride, pad
        bound = 1.0 / np.sqrt(c_in * kernel)
        self.weight = Parameter(_uniform(rng, (c_out, c_in, kernel), bound))
        self.bias = Parameter(np.zeros(c_out, dtype=np.float32)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv1d(x, self.weight, self.bias, self.stride, self.pad)


class ConvTranspose1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, pad: int = 0, bias: bool = True):
        super().__init__()
        self.stride, self.pad = stride, pad
        bound = 1.0 / np.sqrt(c_in * kernel)
        self.weight = Parameter(_uniform(rng, (c_in, c_out, kernel), bound))
        self.bias = Parameter(np.zeros(c_out, dtype=np.float32)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv_transpose1d(x, self.weight, self.bias, self.stride, self.pad)


class PReLU(Module):
    def __init__(self, channels: int, init: float = 0.25, channel_axis: int = 1):
        super().__init__()
        self.channel_axis = channel_axis
        self.slope = Parameter(np.full(channels, init, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        return T.prelu(x, self.slope, self.channel_axis)


class LayerNorm(Module):
    """Normalize the trailing feature axis, then apply a learned affine."""

    def __init__(self, dim: int, eps: float = 1e-5, affine: bool = True):
        super().__init__()
        self.eps = eps
        self.weight = Parameter(np.ones(dim, dtype=np.float32)) if affine else None
        self.bias = Parameter(np.zeros(dim, dtype=np.float32)) if affine else None

    def __call__(self, x: Tensor) -> Tensor:
        y = T.layer_norm(x, self.eps)
        if self.weight is not None:
            y = y * self.weight + self.bias
        return y


class RMSNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6, gain: bool = True):
        super().__init__()
        self.eps = eps
        self.weight = Parameter(np.ones(dim, dtype=np.float32)) if gain else None

    def __call__(self, x: Tensor) -> Tensor:
        y = T.rms_norm(x, self.eps)
        if self.weight is not None:
            y = y * self.weight
        return y


class BatchNorm1d(Module):
    """Per-channel normalization over batch and time of (B, C, L) inputs."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.weight = Parameter(np.ones(channels, dtype=np.float32))
        self.bias = Parameter(np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_mean", np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_var", np.ones(channels, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 3:
            raise ShapeError(f"BatchNorm1d expects (B, C, L), got {x.shape}")
        if self.training:
            if x.shape[0] < 2:
                raise ShapeError("batch norm with batch size 1 has undefined statistics")
            mu = x.mean(axis=(0, 2), keepdims=True)
            centered = x - mu
            var = (centered * centered).mean(axis=(0, 2), keepdims=True)
            self.running_mean += self.momentum * (mu.data.reshape(-1) - self.running_mean)
            self.running_var += self.momentum * (var.data.reshape(-1) - self.running_var)
            inv = T.pow_scalar(var + Tensor(np.float32(self.eps)), -0.5)
            y = centered * inv
        else:
            mu = self.running_mean.reshape(1, -1, 1)
            inv = 1.0 / np.sqrt(self.running_var.reshape(1, -1, 1) + self.eps)
            y = (x - Tensor(mu)) * Tensor(inv.astype(np.float32))
        w = self.weight.reshape(1, -1, 1)
        b = self.bias.reshape(1, -1, 1)
        return y * w + b


class Dropout(Module):
    """Seeded, counter-based dropout: masks replay exactly given the seed."""

    def __init__(self, p: float, seed: int = 0):
        super().__init__()
        self.p = p
        self.seed = seed
        self.calls = 0

    def __call__(self, x: Tensor) -> Tensor:
        if not self.training or self.p == 0.0:
            return x
        rng = np.random.Generator(
            np.random.Philox(key=np.uint64(self.seed), counter=[np.uint64(self.calls), 0, 0, 0])
        )
        self.calls += 1
        return T.dropout(x, self.p, rng)


class Embedding(Module):
    def __init__(self, n: int, dim: int, rng: np.random.Generator, scale: float = 0.02):
        super().__init__()
        self.weight = Parameter((rng.standard_normal((n, dim)) * scale).astype(np.float32))

    def __call__(self, idx: np.ndarray) -> Tensor:
        return T.embedding(self.weight, idx)


class MultiHeadAttention(Module):
    """Scaled dot-product attention; cross-attention when kv differs from q.

    With ``qk_norm`` queries and keys are RMS-normalized per head before the
    dot product. ``self_attention`` fuses the q/k/v projections into one
    matrix for speed; such a layer only accepts kv_seq = q_seq.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator,
                 qk_norm: bool = False, kv_dim: int | None = None,
                 self_attention: bool = False):
        super().__init__()
        if dim % heads != 0:
            raise ShapeError(f"model dim {dim} not divisible by {heads} heads")
        self.dim, self.heads = dim, heads
        self.head_dim = dim // heads
        self.self_attention = self_attention
        kv_dim = dim if kv_dim is None else kv_dim
        if self_attention:
            self.qkv_proj = Linear(dim, 3 * dim, rng)
        else:
            self.q_proj = Linear(dim, dim, rng)
            self.kv_proj = Linear(kv_dim, 2 * dim, rng)
        self.out_proj = Linear(dim, dim, rng)
        self.q_norm = RMSNorm(self.head_dim) if qk_norm else None
        self.k_norm = RMSNorm(self.head_dim) if qk_norm else None

    def _split(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return x.reshape(b, t, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def __call__(self, q_seq: Tensor, kv_seq: Tensor | None = None,
                 mask: np.ndarray | None = None) -> Tensor:
        b, t, _ = q_seq.shape
        d = self.dim
        if self.self_attention:
            if kv_seq is not None:
                raise ShapeError("fused self-attention layer cannot take a kv sequence")
            qkv = self.qkv_proj(q_seq)
            q = self._split(qkv[:, :, 0:d])
            k = self._split(qkv[:, :, d : 2 * d])
            v = self._split(qkv[:, :, 2 * d : 3 * d])
        else:
            kv = q_seq if kv_seq is None else kv_seq
            q = self._split(self.q_proj(q_seq))
            kv_p = self.kv_proj(kv)
            k = self._split(kv_p[:, :, 0:d])
            v = self._split(kv_p[:, :, d : 2 * d])
        if self.q_norm is not None:
            q = self.q_norm(q)
            k = self.k_norm(k)
        scale = np.float32(1.0 / np.sqrt(self.head_dim))
        scores = (q @ k.transpose(0, 1, 3, 2)) * Tensor(scale)
        if mask is not None:
            scores = scores + Tensor(np.where(mask, np.float32(0.0), np.float32(-1e9)))
        attn = T.softmax(scores, axis=-1)
        out = (attn @ v).transpose(0, 2, 1, 3).reshape(b, t, self.dim)
        return self.out_proj(out)
