"""Log-gamma, digamma, and trigamma for positive real arguments.

All three use the same scheme: lift the argument above 10 with the standard
recurrences, then evaluate a Bernoulli asymptotic series at the lifted point.
With the series truncated after the B12 term the truncation error at x = 10
is below 1e-14 relative, comfortably inside the 1e-12 budget the Dirichlet
losses need. Inputs are validated, not clamped; numeric floors are the
caller's policy.

Functions accept scalars or arrays and return matching shapes. Scalars and
small arrays take a plain-Python path; the loss gradients call these in tight
per-sample loops where ndarray overhead dominates the actual arithmetic.
"""

from __future__ import annotations

import math

import numpy as np

_LIFT = 10.0
_HALF_LOG_2PI = 0.9189385332046727  # 0.5*ln(2*pi)
_SMALL = 16  # element count below which the scalar kernels win

# Bernoulli-number coefficient tails, lowest order first, consumed by a
# Horner loop in 1/x**2.
_LGAMMA_TAIL = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
)
_DIGAMMA_TAIL = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
)
_TRIGAMMA_TAIL = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
)


def _checked(x, name):
    arr = np.array(x, dtype=float)  # private copy, the lift loop mutates it
    if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr <= 0.0)):
        raise ValueError(f"{name} is defined for finite x > 0 only")
    return arr


def _horner(tail, z):
    acc = np.full_like(z, tail[-1])
    for c in tail[-2::-1]:
        acc = c + z * acc
    return acc


def _horner_scalar(tail, z):
    acc = tail[-1]
    for c in tail[-2::-1]:
        acc = c + z * acc
    return acc


def _lgamma_scalar(x):
    acc = 0.0
    while x < _LIFT:
        acc -= math.log(x)
        x += 1.0
    inv = 1.0 / x
    acc += (x - 0.5) * math.log(x) - x + _HALF_LOG_2PI
    return acc + inv * _horner_scalar(_LGAMMA_TAIL, inv * inv)


def _digamma_scalar(x):
    acc = 0.0
    while x < _LIFT:
        acc -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    return acc + math.log(x) - 0.5 * inv - inv2 * _horner_scalar(_DIGAMMA_TAIL, inv2)


def _trigamma_scalar(x):
    acc = 0.0
    while x < _LIFT:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    return acc + inv + 0.5 * inv2 + inv * inv2 * _horner_scalar(_TRIGAMMA_TAIL, inv2)


def _scalar_ok(x, name):
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError(f"{name} is defined for finite x > 0 only")
    return float(x)


def _dispatch(x, name, scalar_fn, vector_fn):
    if isinstance(x, (float, int)):
        return scalar_fn(_scalar_ok(x, name))
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return scalar_fn(_scalar_ok(float(arr), name))
    if arr.size <= _SMALL:
        out = [scalar_fn(_scalar_ok(v, name)) for v in arr.ravel().tolist()]
        return np.array(out, dtype=float).reshape(arr.shape)
    return vector_fn(_checked(arr, name))


def _lgamma_vector(arr):
    out = np.zeros_like(arr)
    low = arr < _LIFT
    while low.any():
        # ln Gamma(x) = ln Gamma(x+1) - ln x
        out[low] -= np.log(arr[low])
        arr[low] += 1.0
        low = arr < _LIFT
    inv = 1.0 / arr
    out += (arr - 0.5) * np.log(arr) - arr + _HALF_LOG_2PI
    out += inv * _horner(_LGAMMA_TAIL, inv * inv)
    return out


def _digamma_vector(arr):
    out = np.zeros_like(arr)
    low = arr < _LIFT
    while low.any():
        # psi(x) = psi(x+1) - 1/x
        out[low] -= 1.0 / arr[low]
        arr[low] += 1.0
        low = arr < _LIFT
    inv = 1.0 / arr
    inv2 = inv * inv
    out += np.log(arr) - 0.5 * inv - inv2 * _horner(_DIGAMMA_TAIL, inv2)
    return out


def _trigamma_vector(arr):
    out = np.zeros_like(arr)
    low = arr < _LIFT
    while low.any():
        # psi'(x) = psi'(x+1) + 1/x**2
        out[low] += 1.0 / (arr[low] * arr[low])
        arr[low] += 1.0
        low = arr < _LIFT
    inv = 1.0 / arr
    inv2 = inv * inv
    out += inv + 0.5 * inv2 + inv * inv2 * _horner(_TRIGAMMA_TAIL, inv2)
    return out


def ln_gamma(x):
    """Natural logarithm of the gamma function.

    Accurate to better than 1e-12 relative error over [1e-3, 1e6], except in
    the immediate neighborhood of the zeros at x = 1 and x = 2 where the
    error is absolute (~1e-15).
    """
    return _dispatch(x, "ln_gamma", _lgamma_scalar, _lgamma_vector)


def digamma(x):
    """Digamma psi(x), the logarithmic derivative of the gamma function."""
    return _dispatch(x, "digamma", _digamma_scalar, _digamma_vector)


def trigamma(x):
    """Trigamma psi'(x), the derivative of digamma."""
    return _dispatch(x, "trigamma", _trigamma_scalar, _trigamma_vector)
