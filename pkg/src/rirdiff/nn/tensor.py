"""Dense-tensor engine with reverse-mode automatic differentiation.

Values are numpy arrays (float32 in training, float64 under gradient
checking; ops preserve the input dtype). Reductions accumulate in float64.
Broadcasting is limited to parameter-style trailing shapes against leading
batch dimensions; gradients are summed back over broadcast axes.
"""

from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_grad_owned")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, np.ndarray):
            self.data = data
        elif isinstance(data, np.generic):  # numpy scalar: keep its dtype
            self.data = np.asarray(data)
        else:
            self.data = np.asarray(data, dtype=np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad and _GRAD_ENABLED
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._grad_owned = False

    # -- bookkeeping ------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        # First contribution: hold a reference (possibly shared or a view)
        # without copying. A second contribution allocates a fresh owned
        # buffer, so shared arrays are never mutated in place.
        if self.grad is None:
            self.grad = g if g.dtype == self.data.dtype else g.astype(self.data.dtype)
            self._grad_owned = False
        elif self._grad_owned:
            self.grad += g
        else:
            self.grad = self.grad + g
            self._grad_owned = True

    def zero_grad(self) -> None:
        self.grad = None
        self._grad_owned = False

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Reverse-mode sweep from this (typically scalar) tensor."""
        if not self.requires_grad:
            raise ShapeError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __neg__(self):
        return mul(self, _as_tensor(np.asarray(-1.0, dtype=self.data.dtype)))

    def __pow__(self, p):
        return pow_scalar(self, float(p))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` back down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _result(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(data, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * data / b.data, b.shape))

    return _result(data, (a, b), backward)


def pow_scalar(a: Tensor, p: float) -> Tensor:
    data = a.data**p

    def backward(g):
        a._accumulate(g * p * a.data ** (p - 1))

    return _result(data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * data)

    return _result(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def backward(g):
        a._accumulate(g / a.data)

    return _result(data, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def backward(g):
        a._accumulate(g * 0.5 / data)

    return _result(data, (a,), backward)


def abs_(a: Tensor) -> Tensor:
    data = np.abs(a.data)

    def backward(g):
        a._accumulate(g * np.sign(a.data))

    return _result(data, (a,), backward)


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), computed stably; derivative is the logistic sigmoid."""
    x = a.data
    data = np.where(x > 20.0, x, np.log1p(np.exp(np.minimum(x, 20.0))))

    def backward(g):
        a._accumulate(g / (1.0 + np.exp(-x)))

    return _result(data, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """Exact Gaussian error linear unit: x * Phi(x)."""
    x = a.data
    phi = 0.5 * (1.0 + erf(x / np.sqrt(np.asarray(2.0, dtype=x.dtype))))
    data = x * phi

    def backward(g):
        pdf = np.exp(-0.5 * x * x) / np.sqrt(np.asarray(2.0 * np.pi, dtype=x.dtype))
        a._accumulate(g * (phi + x * pdf))

    return _result(data, (a,), backward)


def prelu(a: Tensor, slope: Tensor, channel_axis: int = 1) -> Tensor:
    """y = x for x > 0, slope[c] * x otherwise; one slope per channel."""
    x = a.data
    if slope.data.ndim != 1 or x.shape[channel_axis] != slope.data.shape[0]:
        raise ShapeError(
            f"prelu slope shape {slope.data.shape} does not match channels "
            f"{x.shape[channel_axis]} at axis {channel_axis}"
        )
    view = [1] * x.ndim
    view[channel_axis] = -1
    s = slope.data.reshape(view)
    pos = x > 0
    data = np.where(pos, x, s * x)

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.where(pos, g, s * g))
        if slope.requires_grad:
            axes = tuple(i for i in range(x.ndim) if i != channel_axis)
            slope._accumulate(np.where(pos, 0.0, g * x).sum(axis=axes, dtype=np.float64).astype(slope.data.dtype))

    return _result(data, (a, slope), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        a._accumulate(data * (g - inner))

    return _result(data, (a,), backward)


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _result(data, (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    data = a.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        a._accumulate(g.transpose(inverse))

    return _result(data, (a,), backward)


def getitem(a: Tensor, idx) -> Tensor:
    data = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        a._accumulate(full)

    return _result(data, (a,), backward)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _result(data, tuple(tensors), backward)


# ---------------------------------------------------------------------------
# reductions (float64 accumulation)
# ---------------------------------------------------------------------------

def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(a.data.dtype)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape))
        else:
            gk = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gk, a.shape))

    return _result(data, (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    data = a.data.mean(axis=axis, keepdims=keepdims, dtype=np.float64).astype(a.data.dtype)

    def backward(g):
        scale = np.asarray(1.0 / count, dtype=a.data.dtype)
        if axis is None:
            a._accumulate(np.broadcast_to(g * scale, a.shape))
        else:
            gk = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gk * scale, a.shape))

    return _result(data, (a,), backward)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.matmul(g, b.data.swapaxes(-1, -2)), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.matmul(a.data.swapaxes(-1, -2), g), b.shape))

    return _result(data, (a, b), backward)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def layer_norm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance (no affine)."""
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    data = xc * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * data).mean(axis=-1, keepdims=True)
        a._accumulate(inv * (g - gm - data * gym))

    return _result(data, (a,), backward)


def rms_norm(a: Tensor, eps: float = 1e-6) -> Tensor:
    """Scale the last axis to unit root-mean-square (no affine)."""
    x = a.data
    m = (x * x).mean(axis=-1, keepdims=True)
    r = np.sqrt(m + np.asarray(eps, dtype=x.dtype))
    data = x / r

    def backward(g):
        gym = (g * data).mean(axis=-1, keepdims=True)
        a._accumulate((g - data * gym) / r)

    return _result(data, (a,), backward)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _cols_1d(x: np.ndarray, kernel: int, stride: int, pad: int) -> np.ndarray:
    """(B, C, L) -> im2col matrix (B, Lout, C*kernel)."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    win = sliding_window_view(x, kernel, axis=2)[:, :, ::stride, :]  # (B, C, Lout, K)
    b, c, lout, k = win.shape
    return win.transpose(0, 2, 1, 3).reshape(b, lout, c * k)


def conv1d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation: x (B, Cin, L), w (Cout, Cin, K) -> (B, Cout, Lout)."""
    bs, cin, lin = x.shape
    cout, cin_w, k = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv1d channels mismatch: input {x.shape} vs weight {w.shape}")
    if pad > k - 1:
        raise ShapeError(f"conv1d pad {pad} exceeds kernel-1 ({k - 1})")
    cols = _cols_1d(x.data, k, stride, pad)  # (B, Lout, Cin*K)
    out = np.matmul(cols, w.data.reshape(cout, cin * k).T)
    if b is not None:
        out = out + b.data[None, None, :]
    data = out.transpose(0, 2, 1)
    lout = data.shape[2]

    def backward(g):
        gt = np.ascontiguousarray(g.transpose(0, 2, 1))  # (B, Lout, Cout)
        if w.requires_grad:
            gw = np.matmul(
                gt.reshape(-1, cout).T, cols.reshape(-1, cin * k)
            ).reshape(cout, cin, k)
            w._accumulate(gw)
        if b is not None and b.requires_grad:
            b._accumulate(gt.sum(axis=(0, 1), dtype=np.float64).astype(b.data.dtype))
        if x.requires_grad:
            # col2im: scatter g @ W back onto the strided input positions
            gcols = np.matmul(
                gt.reshape(-1, cout), w.data.reshape(cout, cin * k)
            ).reshape(bs, lout, cin, k)
            gx_pad = np.zeros((bs, cin, lin + 2 * pad), dtype=g.dtype)
            span = (lout - 1) * stride + 1
            for kk in range(k):
                gx_pad[:, :, kk : kk + span : stride] += gcols[:, :, :, kk].transpose(0, 2, 1)
            x._accumulate(gx_pad[:, :, pad : pad + lin] if pad else gx_pad)

    parents = (x, w) if b is None else (x, w, b)
    return _result(data, parents, backward)


def conv_transpose1d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, pad: int = 0) -> Tensor:
    """Transposed convolution: x (B, Cin, L), w (Cin, Cout, K) -> (B, Cout, (L-1)s+K-2p)."""
    bs, cin, lin = x.shape
    cin_w, cout, k = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv_transpose1d channels mismatch: {x.shape} vs weight {w.shape}")
    if pad > k - 1:
        raise ShapeError(f"conv_transpose1d pad {pad} exceeds kernel-1 ({k - 1})")
    stuffed = np.zeros((bs, cin, (lin - 1) * stride + 1), dtype=x.data.dtype)
    stuffed[:, :, ::stride] = x.data
    cols = _cols_1d(stuffed, k, 1, k - 1 - pad)  # (B, Lout, Cin*K)
    wflip = w.data[:, :, ::-1].transpose(0, 2, 1).reshape(cin * k, cout)
    out = np.matmul(cols, wflip)
    if b is not None:
        out = out + b.data[None, None, :]
    data = out.transpose(0, 2, 1)
    lout = data.shape[2]

    def backward(g):
        if x.requires_grad:
            gcols = _cols_1d(g, k, stride, pad)  # (B, Lin, Cout*K)
            wmat = w.data.transpose(1, 2, 0).reshape(cout * k, cin)
            gx = np.matmul(gcols, wmat).transpose(0, 2, 1)
            x._accumulate(gx[:, :, :lin])
        if w.requires_grad:
            gwin = _cols_1d(g, k, stride, pad)  # (B, Lin, Cout*K)
            gw = np.matmul(
                x.data.transpose(1, 0, 2).reshape(cin, -1),
                gwin.reshape(-1, cout * k),
            ).reshape(cin, cout, k)
            w._accumulate(gw)
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2), dtype=np.float64).astype(b.data.dtype))

    parents = (x, w) if b is None else (x, w, b)
    return _result(data, parents, backward)


# ---------------------------------------------------------------------------
# gather / pooling / framing
# ---------------------------------------------------------------------------

def embedding(w: Tensor, idx: np.ndarray) -> Tensor:
    """Row gather: w (V, D), idx int array (...,) -> (..., D)."""
    idx = np.asarray(idx)
    data = w.data[idx]

    def backward(g):
        gw = np.zeros_like(w.data)
        np.add.at(gw, idx.reshape(-1), g.reshape(-1, w.shape[1]))
        w._accumulate(gw)

    return _result(data, (w,), backward)


def adaptive_avg_pool1d(x: Tensor, out_len: int = 1) -> Tensor:
    """(B, C, L) -> (B, C, out_len) by averaging contiguous segments."""
    b, c, l = x.shape
    if out_len <= 0 or out_len > l:
        raise ShapeError(f"adaptive_avg_pool1d out_len {out_len} invalid for length {l}")
    bounds = [(int(np.floor(i * l / out_len)), int(np.ceil((i + 1) * l / out_len))) for i in range(out_len)]
    data = np.stack(
        [x.data[:, :, lo:hi].mean(axis=2, dtype=np.float64).astype(x.data.dtype) for lo, hi in bounds],
        axis=2,
    )

    def backward(g):
        gx = np.zeros_like(x.data)
        for i, (lo, hi) in enumerate(bounds):
            gx[:, :, lo:hi] += g[:, :, i : i + 1] / (hi - lo)
        x._accumulate(gx)

    return _result(data, (x,), backward)


def frame_signal(x: Tensor, frame: int, hop: int) -> Tensor:
    """(B, L) -> (B, n_frames, frame), no padding; used by spectral losses."""
    b, l = x.shape
    if l < frame:
        raise ShapeError(f"signal length {l} shorter than frame {frame}")
    n = (l - frame) // hop + 1
    idx = np.arange(frame)[None, :] + hop * np.arange(n)[:, None]
    data = x.data[:, idx]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (np.arange(b)[:, None, None], idx[None]), g)
        x._accumulate(gx)

    return _result(data, (x,), backward)


def rfft_mag(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Magnitude of the one-sided DFT along the last axis, sqrt(re^2+im^2+eps).

    Backward applies the exact adjoint of the one-sided DFT via a full
    inverse FFT of the zero-extended gradient spectrum.
    """
    x = a.data
    n = x.shape[-1]
    spec = np.fft.rfft(x, axis=-1)
    re = spec.real.astype(x.dtype)
    im = spec.imag.astype(x.dtype)
    data = np.sqrt(re * re + im * im + np.asarray(eps, dtype=x.dtype))

    def backward(g):
        c = ((g * re / data) + 1j * (g * im / data)).astype(np.complex128)
        full = np.zeros(x.shape[:-1] + (n,), dtype=np.complex128)
        full[..., : n // 2 + 1] = c
        adj = n * np.fft.ifft(full, axis=-1).real
        a._accumulate(adj.astype(x.dtype))

    return _result(data, (a,), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ShapeError(f"dropout probability {p} outside [0, 1)")
    if p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.data.dtype) / np.asarray(1.0 - p, dtype=x.data.dtype)
    data = x.data * mask

    def backward(g):
        x._accumulate(g * mask)

    return _result(data, (x,), backward)
