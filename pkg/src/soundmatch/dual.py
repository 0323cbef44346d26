"""Forward-mode automatic differentiation over a small, fixed parameter set.

A :class:`Dual` carries a value (scalar or numpy array, real or complex)
together with one partial-derivative channel per synthesizer parameter.
Every DSP kernel in this package is written against the functions below so
that the same code path runs on plain numpy data and on duals.
"""

from __future__ import annotations

import numpy as np

#: Partial-derivative channels per run. The synthesizers here always expose
#: exactly two parameters.
N_PARTIALS = 2

__all__ = [
    "Dual",
    "N_PARTIALS",
    "lift",
    "value_of",
    "partials_of",
    "is_dual",
    "sin",
    "cos",
    "tan",
    "exp",
    "log",
    "sqrt",
    "absolute",
    "frac",
    "maximum",
    "minimum",
    "clip_passthrough",
    "add",
    "sub",
    "mul",
    "div",
    "dsum",
    "dmean",
    "reshape",
    "concatenate",
    "rfft",
    "irfft",
    "fft",
    "ifft",
    "complex_abs",
]


def _aligned(partials: np.ndarray, value_shape: tuple, out_shape: tuple) -> np.ndarray:
    """View ``partials`` so its trailing axes broadcast against ``out_shape``."""
    missing = len(out_shape) - len(value_shape)
    if missing <= 0:
        return partials
    n = partials.shape[0]
    return partials.reshape((n,) + (1,) * missing + tuple(value_shape))


class Dual:
    """A value plus a fixed-length vector of partial derivatives.

    ``partials`` has shape ``(n,) + shape(value)``; each leading slice is the
    derivative of every element of ``value`` with respect to one parameter.
    """

    __slots__ = ("value", "partials")

    def __init__(self, value, partials):
        partials = np.asarray(partials)
        vshape = np.shape(value)
        if partials.shape[1:] != vshape:
            raise ValueError(
                f"partials shape {partials.shape} does not trail value shape {vshape}"
            )
        self.value = value
        self.partials = partials

    @property
    def n_partials(self) -> int:
        return self.partials.shape[0]

    @property
    def shape(self):
        return np.shape(self.value)

    def __len__(self):
        return len(self.value)

    def __getitem__(self, key):
        pkey = (slice(None),) + (key if isinstance(key, tuple) else (key,))
        return Dual(self.value[key], self.partials[pkey])

    def __repr__(self):
        return f"Dual(value={self.value!r}, partials={self.partials!r})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return Dual(-self.value, -self.partials)

    def __pow__(self, exponent):
        if not np.isscalar(exponent):
            raise TypeError("dual power only supports scalar exponents")
        v = self.value ** exponent
        dp = exponent * self.value ** (exponent - 1)
        out = np.shape(v)
        return Dual(v, _aligned(self.partials, self.shape, out) * dp)


def is_dual(x) -> bool:
    return isinstance(x, Dual)


def lift(value, index=None, n_partials: int = N_PARTIALS) -> Dual:
    """Wrap ``value`` as a dual; seed parameter ``index`` or none (constant)."""
    partials = np.zeros((n_partials,) + np.shape(value))
    if index is not None:
        if not 0 <= index < n_partials:
            raise IndexError(f"parameter index {index} out of range [0, {n_partials})")
        partials[index] = 1.0
    return Dual(value, partials)


def value_of(x):
    return x.value if isinstance(x, Dual) else x


def partials_of(x, n_partials: int = N_PARTIALS) -> np.ndarray:
    if isinstance(x, Dual):
        return x.partials
    return np.zeros((n_partials,) + np.shape(x))


def _binary(a, b):
    """Split two operands into (values, aligned partials pair, output shape)."""
    av, bv = value_of(a), value_of(b)
    out = np.broadcast_shapes(np.shape(av), np.shape(bv))
    ap = _aligned(a.partials, a.shape, out) if isinstance(a, Dual) else None
    bp = _aligned(b.partials, b.shape, out) if isinstance(b, Dual) else None
    return av, bv, ap, bp


def add(a, b):
    av, bv, ap, bp = _binary(a, b)
    if ap is None and bp is None:
        return av + bv
    v = av + bv
    if ap is None:
        return Dual(v, _full(bp, v))
    if bp is None:
        return Dual(v, _full(ap, v))
    return Dual(v, _full(ap + bp, v))


def _full(partials: np.ndarray, value) -> np.ndarray:
    """Materialize partials broadcast to ``(n,) + shape(value)``."""
    target = (partials.shape[0],) + np.shape(value)
    if partials.shape == target:
        return partials
    return np.broadcast_to(partials, target).copy()


def sub(a, b):
    av, bv, ap, bp = _binary(a, b)
    if ap is None and bp is None:
        return av - bv
    v = av - bv
    if ap is None:
        return Dual(v, _full(-bp, v))
    if bp is None:
        return Dual(v, _full(ap, v))
    return Dual(v, _full(ap - bp, v))


def mul(a, b):
    av, bv, ap, bp = _binary(a, b)
    if ap is None and bp is None:
        return av * bv
    v = av * bv
    if ap is None:
        return Dual(v, _full(bp * av, v))
    if bp is None:
        return Dual(v, _full(ap * bv, v))
    return Dual(v, _full(ap * bv + bp * av, v))


def div(a, b):
    av, bv, ap, bp = _binary(a, b)
    if np.any(bv == 0):
        raise ZeroDivisionError("dual division by zero")
    if ap is None and bp is None:
        return av / bv
    v = av / bv
    if bp is None:
        return Dual(v, _full(ap / bv, v))
    if ap is None:
        return Dual(v, _full(-bp * av / (bv * bv), v))
    return Dual(v, _full((ap * bv - bp * av) / (bv * bv), v))


def _unary(x, f, dfdx):
    if not isinstance(x, Dual):
        return f(x)
    v = f(x.value)
    return Dual(v, x.partials * dfdx(x.value))


def sin(x):
    return _unary(x, np.sin, np.cos)


def cos(x):
    return _unary(x, np.cos, lambda v: -np.sin(v))


def tan(x):
    return _unary(x, np.tan, lambda v: 1.0 / np.cos(v) ** 2)


def exp(x):
    return _unary(x, np.exp, np.exp)


def log(x):
    if np.any(value_of(x) <= 0):
        raise ValueError("log of non-positive value")
    return _unary(x, np.log, lambda v: 1.0 / v)


def sqrt(x):
    if np.any(value_of(x) <= 0):
        raise ValueError("sqrt of non-positive value")
    return _unary(x, np.sqrt, lambda v: 0.5 / np.sqrt(v))


def absolute(x):
    # Subgradient at 0 is fixed to 0 via np.sign.
    return _unary(x, np.abs, np.sign)


def frac(x):
    # Derivative defined as 1 everywhere; the jump set has measure zero and
    # recursive phase accumulators need the frequency gradient to pass through.
    if not isinstance(x, Dual):
        return x - np.floor(x)
    return Dual(x.value - np.floor(x.value), x.partials.copy())


def maximum(a, b):
    av, bv, ap, bp = _binary(a, b)
    if ap is None and bp is None:
        return np.maximum(av, bv)
    v = np.maximum(av, bv)
    n = (ap if ap is not None else bp).shape[0]
    zeros = np.zeros((n,) + np.shape(v))
    pa = ap if ap is not None else zeros
    pb = bp if bp is not None else zeros
    return Dual(v, np.where(av >= bv, _full(pa, v), _full(pb, v)))


def minimum(a, b):
    av, bv, ap, bp = _binary(a, b)
    if ap is None and bp is None:
        return np.minimum(av, bv)
    v = np.minimum(av, bv)
    n = (ap if ap is not None else bp).shape[0]
    zeros = np.zeros((n,) + np.shape(v))
    pa = ap if ap is not None else zeros
    pb = bp if bp is not None else zeros
    return Dual(v, np.where(av <= bv, _full(pa, v), _full(pb, v)))


def clip_passthrough(x, lo: float, hi: float):
    """Clip values to [lo, hi]; gradient is identity inside, zero outside."""
    if not isinstance(x, Dual):
        return np.clip(x, lo, hi)
    v = np.clip(x.value, lo, hi)
    inside = (x.value >= lo) & (x.value <= hi)
    return Dual(v, np.where(inside, x.partials, 0.0))


def dsum(x, axis=None):
    if not isinstance(x, Dual):
        return np.sum(x, axis=axis)
    paxis = _shift_axis(axis, np.ndim(x.value))
    return Dual(np.sum(x.value, axis=axis), np.sum(x.partials, axis=paxis))


def dmean(x, axis=None):
    if not isinstance(x, Dual):
        return np.mean(x, axis=axis)
    paxis = _shift_axis(axis, np.ndim(x.value))
    return Dual(np.mean(x.value, axis=axis), np.mean(x.partials, axis=paxis))


def _shift_axis(axis, ndim):
    """Map a value-array axis spec onto the partials array (extra lead axis)."""
    if axis is None:
        return tuple(range(1, ndim + 1))
    if isinstance(axis, tuple):
        return tuple(a % ndim + 1 for a in axis)
    return axis % ndim + 1


def reshape(x, shape):
    if not isinstance(x, Dual):
        return np.reshape(x, shape)
    n = x.partials.shape[0]
    v = np.reshape(x.value, shape)
    return Dual(v, np.reshape(x.partials, (n,) + v.shape))


def concatenate(items, axis=0):
    if not any(isinstance(it, Dual) for it in items):
        return np.concatenate(items, axis=axis)
    n = next(it.partials.shape[0] for it in items if isinstance(it, Dual))
    values = [value_of(it) for it in items]
    parts = [partials_of(it, n) for it in items]
    v = np.concatenate(values, axis=axis)
    paxis = axis % np.ndim(values[0]) + 1
    return Dual(v, np.concatenate(parts, axis=paxis))


def _linear(x, f):
    """Apply a linear transform to value and every partial channel."""
    if not isinstance(x, Dual):
        return f(x)
    return Dual(f(x.value), f(x.partials))


def rfft(x, n=None, axis=-1):
    if axis >= 0:
        raise ValueError("fft helpers require a negative axis")
    return _linear(x, lambda a: np.fft.rfft(a, n=n, axis=axis))


def irfft(x, n=None, axis=-1):
    if axis >= 0:
        raise ValueError("fft helpers require a negative axis")
    return _linear(x, lambda a: np.fft.irfft(a, n=n, axis=axis))


def fft(x, n=None, axis=-1):
    if axis >= 0:
        raise ValueError("fft helpers require a negative axis")
    return _linear(x, lambda a: np.fft.fft(a, n=n, axis=axis))


def ifft(x, n=None, axis=-1):
    if axis >= 0:
        raise ValueError("fft helpers require a negative axis")
    return _linear(x, lambda a: np.fft.ifft(a, n=n, axis=axis))


def complex_abs(z, delta: float = 0.0):
    """Magnitude of complex data, smoothed by ``delta`` inside the sqrt.

    With ``delta`` > 0 the result stays differentiable at zero bins.
    """
    if not isinstance(z, Dual):
        if delta == 0.0:
            return np.abs(z)
        return np.sqrt(z.real * z.real + z.imag * z.imag + delta)
    zv = z.value
    mag = np.sqrt(zv.real * zv.real + zv.imag * zv.imag + delta)
    # d|z| = (re*dre + im*dim) / |z|
    num = zv.real * z.partials.real + zv.imag * z.partials.imag
    return Dual(mag, num / mag)
