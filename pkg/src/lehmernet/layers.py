"""Layers with hand-written forward/backward passes, and checkpoint I/O.

Every layer caches its forward intermediates on the instance and consumes
them in ``backward``, so one instance serves one network (the usual
from-scratch convention).  Parameters are numpy float64 arrays listed in
``param_names``; ``backward`` stores the matching gradients as ``d_<name>``.

Array layout conventions: dense inputs are (batch, features); image inputs
are NCHW, i.e. (batch, channels, height, width).
"""

from __future__ import annotations

import json
import math
import struct
import warnings

import numpy as np

from .transforms import (
    _LN_EPS,
    DomainError,
    softplus_weights,
    squash_derivative,
    squash_to_lehmer_range,
)
from .gradients import grad_softplus

# softplus(INIT_V) == 1.0: LAU weights start flat (near 1).
INIT_V = math.log(math.e - 1.0)
# Small uniform jitter applied to the pre-weights when an rng is supplied:
# identical units would otherwise only differentiate through the output
# head's random weights, which costs many epochs of plateau.
INIT_V_JITTER = 0.2
# Imaginary suddency starts slightly off the real axis: at b == 0 with a
# zero-initialized imaginary read-out, d_b is identically zero and the
# complex unit could never leave the real subspace.
INIT_B = 0.1


def _init_pre_weights(n_units, n_in, rng):
    v = np.full((n_units, n_in), INIT_V)
    if rng is not None:
        v += rng.uniform(-INIT_V_JITTER, INIT_V_JITTER, v.shape)
    return v


class Layer:
    """Base class: subclasses set TYPE, param_names and the two passes."""

    TYPE = "layer"
    param_names = ()
    state_names = ()

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def output_shape(self, shape):
        """Map a per-sample input shape tuple to the output shape.

        Raises ValueError on a wiring mismatch; Network calls this at
        construction so bad stacks fail before any data flows.
        """
        return shape

    def spec(self):
        """JSON-serializable constructor description for checkpoints."""
        return {"type": self.TYPE}


def _check_lau_input(x, n_in):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected (batch, features), got shape {x.shape}")
    if x.shape[1] != n_in:
        raise ValueError(f"expected {n_in} features, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise DomainError("activation unit input must be finite")
    if np.any(x <= 0.0):
        raise DomainError(
            "activation unit input must be strictly positive; "
            "standardize or squash upstream activations first"
        )
    return x


class LAULayerReal(Layer):
    """Bank of weighted Lehmer means with one trainable suddency per unit.

    Each of the ``n_units`` outputs is L(s_j; x, w_j) over the full input
    vector, with w_j = softplus(v_j) kept positive by construction.  Outputs
    therefore live in [min(x), max(x)] row-wise.
    """

    TYPE = "lau_real"
    param_names = ("v", "s")

    def __init__(self, n_in, n_units, rng=None):
        if n_in < 1 or n_units < 1:
            raise ValueError("n_in and n_units must be positive")
        self.n_in = int(n_in)
        self.n_units = int(n_units)
        self.v = _init_pre_weights(self.n_units, self.n_in, rng)
        self.s = np.ones(self.n_units)

    def spec(self):
        return {"type": self.TYPE, "n_in": self.n_in, "n_units": self.n_units}

    def output_shape(self, shape):
        if shape != (self.n_in,):
            raise ValueError(
                f"{self.TYPE}: expected input shape ({self.n_in},), got {shape}"
            )
        return (self.n_units,)

    def forward(self, x, train=False):
        x = _check_lau_input(x, self.n_in)
        w = softplus_weights(self.v)  # (J, n)
        t = np.log(x)  # (B, n)
        st = self.s[None, :, None] * t[:, None, :]  # (B, J, n)
        ma = st.max(axis=2, keepdims=True)
        u = np.exp(st - ma)
        st_d = (self.s - 1.0)[None, :, None] * t[:, None, :]
        md = st_d.max(axis=2, keepdims=True)
        vv = np.exp(st_d - md)
        n0 = np.einsum("jn,bjn->bj", w, u)
        d0 = np.einsum("jn,bjn->bj", w, vv)
        scale = np.exp(ma[:, :, 0] - md[:, :, 0])
        y = scale * n0 / d0
        self._cache = (x, t, w, u, vv, n0, d0, scale, y)
        return y

    def backward(self, dout):
        x, t, w, u, vv, n0, d0, scale, y = self._cache
        n1 = np.einsum("jn,bjn,bn->bj", w, u, t)
        d1 = np.einsum("jn,bjn,bn->bj", w, vv, t)

        dy_ds = y * (n1 / n0 - d1 / d0)
        self.d_s = np.einsum("bj,bj->j", dout, dy_ds)

        coeff = dout * scale / (d0 * d0)  # (B, J)
        dw = np.einsum(
            "bj,bjn->jn", coeff, u * d0[:, :, None] - vv * n0[:, :, None]
        )
        self.d_v = dw * grad_softplus(self.v)

        c1 = dout * self.s[None, :] / d0
        c2 = dout * (self.s - 1.0)[None, :] * y / d0
        term1 = np.einsum("bj,jn,bjn->bn", c1, w, vv)
        term2 = np.einsum("bj,jn,bjn->bn", c2, w, vv)
        return term1 - term2 / x


class LAULayerComplex(Layer):
    """Complex Lehmer units with per-unit affine read-out to the reals.

    Suddency is s_j = a_j + i*b_j; the unit output is
    alpha_j*Re(z_j) + beta_j*Im(z_j) + gamma_j where z_j is the complex
    transform with softplus weights.  The denominator is regularized exactly
    as in ``transforms.lehmer_complex``; batches that trip the |D| ~ 0 guard
    are counted in ``near_singular_count_`` and warned about once per pass.
    """

    TYPE = "lau_complex"
    param_names = ("v", "a", "b", "alpha", "beta", "gamma")

    def __init__(self, n_in, n_units, rng=None):
        if n_in < 1 or n_units < 1:
            raise ValueError("n_in and n_units must be positive")
        self.n_in = int(n_in)
        self.n_units = int(n_units)
        self.v = _init_pre_weights(self.n_units, self.n_in, rng)
        self.a = np.ones(self.n_units)
        self.b = np.full(self.n_units, INIT_B)
        self.alpha = np.ones(self.n_units)
        self.beta = np.zeros(self.n_units)
        self.gamma = np.zeros(self.n_units)
        self.near_singular_count_ = 0

    def spec(self):
        return {"type": self.TYPE, "n_in": self.n_in, "n_units": self.n_units}

    def output_shape(self, shape):
        if shape != (self.n_in,):
            raise ValueError(
                f"{self.TYPE}: expected input shape ({self.n_in},), got {shape}"
            )
        return (self.n_units,)

    def forward(self, x, train=False):
        x = _check_lau_input(x, self.n_in)
        w = softplus_weights(self.v)  # (J, n)
        t = np.log(x)  # (B, n)
        tb = t[:, None, :]  # (B, 1, n)
        bt = self.b[None, :, None] * tb
        phase = np.cos(bt) + 1j * np.sin(bt)  # shared by both sums
        za = self.a[None, :, None] * tb
        ma = za.max(axis=2, keepdims=True)
        en = np.exp(za - ma) * phase  # (B, J, n) complex
        zd = (self.a - 1.0)[None, :, None] * tb
        md = zd.max(axis=2, keepdims=True)
        ed = np.exp(zd - md) * phase
        n0 = np.einsum("jn,bjn->bj", w, en)
        d0 = np.einsum("jn,bjn->bj", w, ed)

        md2 = md[:, :, 0]
        log_q = 2.0 * (_LN_EPS - md2)
        with np.errstate(over="ignore"):
            q = np.exp(log_q)
        lower = np.abs(d0) ** 2 + q
        r = d0.conjugate() / lower  # regularized 1/D
        scale = np.exp(ma[:, :, 0] - md2)
        z = scale * n0 * r

        with np.errstate(divide="ignore"):
            singular = np.log(np.abs(d0)) + md2 < _LN_EPS
        self.near_singular_count_ = int(singular.sum())
        if self.near_singular_count_:
            warnings.warn(
                f"{self.near_singular_count_} near-singular complex "
                "denominator(s); outputs regularized",
                RuntimeWarning,
                stacklevel=2,
            )

        out = self.alpha[None, :] * z.real + self.beta[None, :] * z.imag
        out = out + self.gamma[None, :]
        self._cache = (x, t, w, en, ed, z, r, scale)
        return out

    def backward(self, dout):
        x, t, w, en, ed, z, r, scale = self._cache

        self.d_alpha = np.einsum("bj,bj->j", dout, z.real)
        self.d_beta = np.einsum("bj,bj->j", dout, z.imag)
        self.d_gamma = dout.sum(axis=0)

        # Chain through the read-out: for any parameter theta,
        # d(out)/d(theta) = Re(G * dz/dtheta) with G = dout * (alpha - i*beta).
        g = dout * (self.alpha - 1j * self.beta)[None, :]  # (B, J)

        tn = np.einsum("jn,bjn,bn->bj", w, en, t)
        td = np.einsum("jn,bjn,bn->bj", w, ed, t)
        dz_da = scale * tn * r - z * td * r
        gda = g * dz_da
        self.d_a = gda.real.sum(axis=0)
        # dz/db = i * dz/da (holomorphic in a + i*b).
        self.d_b = -gda.imag.sum(axis=0)

        gr = (g * r)[:, :, None]
        gzr = (g * z * r)[:, :, None]
        dw = (gr * scale[:, :, None] * en - gzr * ed).real.sum(axis=0)
        self.d_v = dw * grad_softplus(self.v)

        s_c = self.a + 1j * self.b  # (J,)
        inner = s_c[None, :, None] - (
            z[:, :, None] * (s_c - 1.0)[None, :, None] / x[:, None, :]
        )
        dx = (gr * w[None, :, :] * ed * inner).real.sum(axis=1)
        return dx


class DenseLayer(Layer):
    """Affine map x @ W.T + b with fan-in-scaled uniform init."""

    TYPE = "dense"
    param_names = ("weight", "bias")

    def __init__(self, n_in, n_out, rng=None):
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        if rng is None:
            self.weight = np.zeros((self.n_out, self.n_in))
        else:
            bound = 1.0 / math.sqrt(self.n_in)
            self.weight = rng.uniform(-bound, bound, (self.n_out, self.n_in))
        self.bias = np.zeros(self.n_out)

    def spec(self):
        return {"type": self.TYPE, "n_in": self.n_in, "n_out": self.n_out}

    def output_shape(self, shape):
        if shape != (self.n_in,):
            raise ValueError(
                f"dense: expected input shape ({self.n_in},), got {shape}"
            )
        return (self.n_out,)

    def forward(self, x, train=False):
        self._x = x
        return x @ self.weight.T + self.bias

    def backward(self, dout):
        self.d_weight = dout.T @ self._x
        self.d_bias = dout.sum(axis=0)
        return dout @ self.weight


class ReLULayer(Layer):
    TYPE = "relu"

    def forward(self, x, train=False):
        self._mask = x > 0.0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class SquashLayer(Layer):
    """Elementwise exp(tanh(x)): pushes arbitrary reals into (1/e, e)."""

    TYPE = "squash"

    def forward(self, x, train=False):
        self._x = x
        return squash_to_lehmer_range(x)

    def backward(self, dout):
        return dout * squash_derivative(self._x)


class FlattenLayer(Layer):
    TYPE = "flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class ChannelsFirstLayer(Layer):
    """Normalize image batches to NCHW.

    Accepts (B, H, W) grayscale, which gains a channel axis, or channels-last
    (B, H, W, C), which is transposed.  NCHW input passes through unchanged
    only in the 4-d case when it already matches, so callers should feed one
    of the two accepted layouts.
    """

    TYPE = "channels_first"

    def output_shape(self, shape):
        if len(shape) == 2:
            return (1,) + tuple(shape)
        if len(shape) == 3:
            h, w, c = shape
            return (c, h, w)
        raise ValueError(f"expected (H, W) or (H, W, C) samples, got {shape}")

    def forward(self, x, train=False):
        if x.ndim == 3:
            self._mode = "gray"
            return x[:, None, :, :]
        if x.ndim == 4:
            self._mode = "nhwc"
            return np.ascontiguousarray(x.transpose(0, 3, 1, 2))
        raise ValueError(f"expected 3-d or 4-d image batch, got shape {x.shape}")

    def backward(self, dout):
        if self._mode == "gray":
            return dout[:, 0, :, :]
        return dout.transpose(0, 2, 3, 1)


def _im2col(xp, k, stride, out_h, out_w):
    """(B, C, Hp, Wp) -> (B, C, k, k, out_h, out_w) window view copy."""
    b, c = xp.shape[:2]
    cols = np.empty((b, c, k, k, out_h, out_w), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[
                :, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride
            ]
    return cols


def _col2im(dcols, xp_shape, k, stride, out_h, out_w):
    dxp = np.zeros(xp_shape, dtype=dcols.dtype)
    for i in range(k):
        for j in range(k):
            dxp[
                :, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride
            ] += dcols[:, :, i, j]
    return dxp


class Conv2DLayer(Layer):
    """2-d convolution (cross-correlation) over NCHW batches via im2col."""

    TYPE = "conv2d"
    param_names = ("kernels", "bias")

    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1,
                 padding=0, rng=None):
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_size = int(kernel_size)
        self.stride = int(stride)
        self.padding = int(padding)
        fan_in = self.in_channels * self.kernel_size ** 2
        shape = (self.out_channels, self.in_channels,
                 self.kernel_size, self.kernel_size)
        if rng is None:
            self.kernels = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(fan_in)
            self.kernels = rng.uniform(-bound, bound, shape)
        self.bias = np.zeros(self.out_channels)

    def spec(self):
        return {
            "type": self.TYPE,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_size": self.kernel_size,
            "stride": self.stride,
            "padding": self.padding,
        }

    def _out_hw(self, h, w):
        k, st, p = self.kernel_size, self.stride, self.padding
        out_h = (h + 2 * p - k) // st
        out_w = (w + 2 * p - k) // st
        if out_h < 0 or out_w < 0:
            raise ValueError(
                f"conv2d: {h}x{w} input smaller than kernel {k} "
                f"with padding {p}"
            )
        return out_h + 1, out_w + 1

    def output_shape(self, shape):
        if len(shape) != 3 or shape[0] != self.in_channels:
            raise ValueError(
                f"conv2d: expected ({self.in_channels}, H, W) input, got {shape}"
            )
        out_h, out_w = self._out_hw(shape[1], shape[2])
        return (self.out_channels, out_h, out_w)

    def forward(self, x, train=False):
        b, c, h, w = x.shape
        if c != self.in_channels:
            raise ValueError(
                f"conv2d: expected {self.in_channels} channels, got {c}"
            )
        out_h, out_w = self._out_hw(h, w)
        p = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        k = self.kernel_size
        cols = _im2col(xp, k, self.stride, out_h, out_w)
        # (B*P, C*k*k) with P = out_h*out_w, then one big BLAS matmul.
        f = c * k * k
        mat = np.ascontiguousarray(
            cols.reshape(b, f, out_h * out_w).transpose(0, 2, 1)
        ).reshape(b * out_h * out_w, f)
        kmat = self.kernels.reshape(self.out_channels, f)
        out = mat @ kmat.T + self.bias
        self._cache = (mat, xp.shape, (b, out_h, out_w))
        return (
            out.reshape(b, out_h * out_w, self.out_channels)
            .transpose(0, 2, 1)
            .reshape(b, self.out_channels, out_h, out_w)
        )

    def backward(self, dout):
        mat, xp_shape, (b, out_h, out_w) = self._cache
        c, k = self.in_channels, self.kernel_size
        # (B*P, O) view of dout matching the forward's sample-major layout.
        drows = np.ascontiguousarray(
            dout.reshape(b, self.out_channels, out_h * out_w).transpose(0, 2, 1)
        ).reshape(-1, self.out_channels)
        self.d_bias = drows.sum(axis=0)
        self.d_kernels = (drows.T @ mat).reshape(self.kernels.shape)
        kmat = self.kernels.reshape(self.out_channels, c * k * k)
        dmat = drows @ kmat
        dcols = (
            dmat.reshape(b, out_h * out_w, c * k * k)
            .transpose(0, 2, 1)
            .reshape(b, c, k, k, out_h, out_w)
        )
        dxp = _col2im(dcols, xp_shape, k, self.stride, out_h, out_w)
        p = self.padding
        if p:
            return dxp[:, :, p:-p, p:-p]
        return dxp


class BatchNorm2DLayer(Layer):
    """Per-channel batch normalization for NCHW batches.

    Training uses biased batch statistics over (batch, height, width) and
    updates exponential running averages (momentum 0.9); inference uses the
    running statistics, making the layer a per-channel affine map.
    """

    TYPE = "batchnorm2d"
    param_names = ("scale", "shift")
    state_names = ("running_mean", "running_var")

    def __init__(self, n_channels, eps=1e-5, momentum=0.9, rng=None):
        self.n_channels = int(n_channels)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.scale = np.ones(self.n_channels)
        self.shift = np.zeros(self.n_channels)
        self.running_mean = np.zeros(self.n_channels)
        self.running_var = np.ones(self.n_channels)

    def spec(self):
        return {
            "type": self.TYPE,
            "n_channels": self.n_channels,
            "eps": self.eps,
            "momentum": self.momentum,
        }

    def output_shape(self, shape):
        if len(shape) != 3 or shape[0] != self.n_channels:
            raise ValueError(
                f"batchnorm2d: expected ({self.n_channels}, H, W), got {shape}"
            )
        return shape

    def _affine(self, xhat):
        return self.scale[None, :, None, None] * xhat + self.shift[None, :, None, None]

    def forward(self, x, train=False):
        if x.shape[1] != self.n_channels:
            raise ValueError(
                f"batchnorm2d: expected {self.n_channels} channels, "
                f"got {x.shape[1]}"
            )
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
            m = self.momentum
            self.running_mean = m * self.running_mean + (1.0 - m) * mean
            self.running_var = m * self.running_var + (1.0 - m) * var
            count = x.shape[0] * x.shape[2] * x.shape[3]
            self._cache = ("train", xhat, inv_std, count)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean[None, :, None, None]) \
                * inv_std[None, :, None, None]
            self._cache = ("eval", None, inv_std, None)
        return self._affine(xhat)

    def backward(self, dout):
        mode, xhat, inv_std, count = self._cache
        if mode == "eval":
            # Running stats are constants here: pure per-channel affine.
            self.d_scale = np.zeros_like(self.scale)
            self.d_shift = np.zeros_like(self.shift)
            return dout * (self.scale * inv_std)[None, :, None, None]
        self.d_shift = dout.sum(axis=(0, 2, 3))
        self.d_scale = (dout * xhat).sum(axis=(0, 2, 3))
        dxhat = dout * self.scale[None, :, None, None]
        sum_dxhat = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        sum_dxhat_x = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        return (inv_std[None, :, None, None] / count) * (
            count * dxhat - sum_dxhat - xhat * sum_dxhat_x
        )


class MaxPool2DLayer(Layer):
    """Non-overlapping max pooling; ties keep the first window position.

    Windows are scanned in row-major order inside each pool, and argmax keeps
    the first maximum, so gradients route to exactly one input per window.
    """

    TYPE = "maxpool2d"

    def __init__(self, window=2):
        self.window = int(window)
        if self.window < 1:
            raise ValueError("window must be positive")

    def spec(self):
        return {"type": self.TYPE, "window": self.window}

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ValueError(f"maxpool2d: expected (C, H, W), got {shape}")
        c, h, w = shape
        if h % self.window or w % self.window:
            raise ValueError(
                f"maxpool2d: {h}x{w} not divisible by window {self.window}"
            )
        return (c, h // self.window, w // self.window)

    def forward(self, x, train=False):
        b, c, h, w = x.shape
        k = self.window
        if h % k or w % k:
            raise ValueError(f"maxpool2d: {h}x{w} not divisible by window {k}")
        oh, ow = h // k, w // k
        windows = (
            x.reshape(b, c, oh, k, ow, k)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(b, c, oh, ow, k * k)
        )
        self._argmax = windows.argmax(axis=4)
        self._in_shape = x.shape
        return np.take_along_axis(
            windows, self._argmax[..., None], axis=4
        )[..., 0]

    def backward(self, dout):
        b, c, h, w = self._in_shape
        k = self.window
        oh, ow = h // k, w // k
        dwin = np.zeros((b, c, oh, ow, k * k), dtype=dout.dtype)
        np.put_along_axis(dwin, self._argmax[..., None], dout[..., None], axis=4)
        return (
            dwin.reshape(b, c, oh, ow, k, k)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(b, c, h, w)
        )


def softmax(logits):
    """Row-wise softmax with the usual max-shift for stability."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of integer labels plus the logits gradient.

    Uses the log-sum-exp form so large logits never overflow; returns
    ``(loss, dlogits)`` with dlogits = (softmax - onehot) / batch.
    """
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ValueError(f"expected (batch, classes) logits, got {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise ValueError("labels must be a vector matching the batch size")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integers")
    n, c = logits.shape
    if n == 0:
        raise ValueError("empty batch")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(lse - shifted[rows, labels]))
    dlogits = softmax(logits)
    dlogits[rows, labels] -= 1.0
    return loss, dlogits / n


class Network:
    """A plain sequential stack of layers."""

    def __init__(self, layers, input_shape=None):
        self.layers = list(layers)
        if input_shape is not None:
            shape = tuple(input_shape)
            for layer in self.layers:
                shape = layer.output_shape(shape)
            self.output_shape = shape

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def param_items(self):
        """Yield (unique_name, layer, attribute_name) for every parameter."""
        for i, layer in enumerate(self.layers):
            for name in layer.param_names:
                yield f"{i}.{name}", layer, name

    def state_items(self):
        for i, layer in enumerate(self.layers):
            for name in layer.state_names:
                yield f"{i}.{name}", layer, name


LAYER_TYPES = {
    cls.TYPE: cls
    for cls in (
        LAULayerReal,
        LAULayerComplex,
        DenseLayer,
        ReLULayer,
        SquashLayer,
        FlattenLayer,
        ChannelsFirstLayer,
        Conv2DLayer,
        BatchNorm2DLayer,
        MaxPool2DLayer,
    )
}

CHECKPOINT_MAGIC = b"LEHMCKPT"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or incompatible."""


def save_checkpoint(net, path):
    """Write a network to the versioned binary checkpoint format.

    Layout (all integers little-endian uint32, arrays float64 little-endian):
    8-byte magic, format version, JSON header length, JSON header (layer
    specs plus the ordered array names), then for each array its name, ndim,
    dims and raw data.  Parameters and running state round-trip bit-exactly.
    """
    arrays = []
    for key, layer, name in list(net.param_items()) + list(net.state_items()):
        arrays.append((key, np.ascontiguousarray(getattr(layer, name), dtype="<f8")))
    header = {
        "format": "lehmernet.checkpoint",
        "layers": [layer.spec() for layer in net.layers],
        "arrays": [key for key, _ in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for key, arr in arrays:
            name = key.encode("utf-8")
            fh.write(struct.pack("<I", len(name)))
            fh.write(name)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path):
    """Rebuild a Network from ``save_checkpoint`` output, verifying layout."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        version, header_len = struct.unpack(
            "<II", _read_exact(fh, 8, "header")
        )
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version} "
                f"(supported: {CHECKPOINT_VERSION})"
            )
        header = json.loads(_read_exact(fh, header_len, "header json"))
        layers = []
        for spec in header["layers"]:
            kwargs = dict(spec)
            type_name = kwargs.pop("type")
            if type_name not in LAYER_TYPES:
                raise CheckpointError(f"unknown layer type {type_name!r}")
            layers.append(LAYER_TYPES[type_name](**kwargs))
        net = Network(layers)
        table = {
            key: (layer, name)
            for key, layer, name in
            list(net.param_items()) + list(net.state_items())
        }
        expected = list(table)
        if header["arrays"] != expected:
            raise CheckpointError("checkpoint arrays do not match architecture")
        for key in expected:
            name_len, = struct.unpack("<I", _read_exact(fh, 4, "array name"))
            name = _read_exact(fh, name_len, "array name").decode("utf-8")
            if name != key:
                raise CheckpointError(
                    f"array order mismatch: expected {key!r}, found {name!r}"
                )
            ndim, = struct.unpack("<I", _read_exact(fh, 4, "array rank"))
            dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "dims"))
            count = int(np.prod(dims)) if ndim else 1
            data = np.frombuffer(
                _read_exact(fh, 8 * count, f"array {name}"), dtype="<f8"
            ).reshape(dims)
            layer, attr = table[key]
            current = getattr(layer, attr)
            if tuple(dims) != current.shape:
                raise CheckpointError(
                    f"array {name!r} has shape {tuple(dims)}, "
                    f"expected {current.shape}"
                )
            setattr(layer, attr, data.astype(float).copy())
        if fh.read(1):
            raise CheckpointError("trailing bytes after last array")
    return net
