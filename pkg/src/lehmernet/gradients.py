"""Closed-form derivatives of the Lehmer means, plus a finite-difference oracle.

Notation matches ``transforms.py``: t = ln(x), shifted numerator sums
N_k = sum(w * t**k * exp(s*t - M)) with M = max(s*t), and denominator sums
D_k likewise at s-1 with shift M'.  The value is L = exp(M - M') * N_0 / D_0.

Key identities implemented below (all verified against central differences):

* dL/ds   = L * (N_1/N_0 - D_1/D_0)
* d ln L / ds = m1(s) - m1(s-1) and d2 ln L / ds2 = var_s(t) - var_{s-1}(t),
  where m1/var are mean and variance of t under the tilted weights
  w_i * x_i**s; hence d2L/ds2 = L * (d2lnL + (dlnL)**2).
* dL/dw_k = exp(M - M') * (u_k * D_0 - v_k * N_0) / D_0**2 with
  u_k = exp(s*t_k - M), v_k = exp((s-1)*t_k - M'); weights enter both sums.
* dL/dx_k = (w_k * v_k / D_0) * (s - (s-1) * L / x_k).
* Complex case: the transform is holomorphic in s = a + b*i away from the
  regularized denominator zeros, so dz/db = i * dz/da exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .transforms import (
    _LN_EPS,
    DomainError,
    _finite_scalar,
    _positive_pair,
    _regularized_ratio,
    tilted_sums,
)


@dataclass(frozen=True)
class LogLehmer:
    """ln L together with its first two suddency derivatives."""

    value: float
    d1: float
    d2: float


@dataclass(frozen=True)
class ComplexGradients:
    """All first derivatives of the complex transform at one point.

    d_a and d_b are complex (the output is complex); d_w and d_x are complex
    vectors.  ``near_singular`` mirrors the forward flag: the denominator
    magnitude fell below the regularization scale, so derivatives of the
    regularized quotient are still finite but the unregularized ones need not
    be.
    """

    d_a: complex
    d_b: complex
    d_w: np.ndarray
    d_x: np.ndarray
    near_singular: bool

    @property
    def d_s(self):
        """Report-only combined direction d_a + i*d_b.

        The map s -> z is holomorphic, so this conjugate direction vanishes
        identically; it is exposed for diagnostics, never for training.
        """
        return self.d_a + 1j * self.d_b


def log_lehmer(x, w, s):
    """ln L and its first two derivatives in s, all in one stabilized pass."""
    x, w = _positive_pair(x, w)
    s = _finite_scalar("s", s)
    t = np.log(x)
    ma, (n0, n1, n2) = tilted_sums(w, t, s, order=2)
    md, (d0, d1, d2) = tilted_sums(w, t, s - 1.0, order=2)
    m1_num, m1_den = n1 / n0, d1 / d0
    var_num = n2 / n0 - m1_num * m1_num
    var_den = d2 / d0 - m1_den * m1_den
    return LogLehmer(
        value=(ma - md) + math.log(n0) - math.log(d0),
        d1=m1_num - m1_den,
        d2=var_num - var_den,
    )


def grad_s_real(x, w, s):
    """dL/ds of the real transform (non-negative: L is increasing in s)."""
    x, w = _positive_pair(x, w)
    s = _finite_scalar("s", s)
    t = np.log(x)
    ma, (n0, n1) = tilted_sums(w, t, s, order=1)
    md, (d0, d1) = tilted_sums(w, t, s - 1.0, order=1)
    value = math.exp(ma - md) * n0 / d0
    return value * (n1 / n0 - d1 / d0)


def grad2_s_real(x, w, s):
    """d2L/ds2 via the log-derivative route: L * (lnL'' + (lnL')**2)."""
    ll = log_lehmer(x, w, s)
    return math.exp(ll.value) * (ll.d2 + ll.d1 * ll.d1)


def grad_s_pairwise_unweighted(x, s):
    """dL/ds for unit weights as an explicit pairwise double sum.

    Independent route used to cross-check ``grad_s_real``:

        dL/ds = sum_{i<j} (x_i - x_j) * (x_i x_j)**(s-1) * ln(x_i/x_j)
                / (sum_k x_k**(s-1))**2

    evaluated with the same max-shift stabilization but deliberately naive
    pair loops.
    """
    x, _ = _positive_pair(x, None)
    s = _finite_scalar("s", s)
    t = np.log(x)
    md = float(((s - 1.0) * t).max())
    v = np.exp((s - 1.0) * t - md)
    den = float(v.sum()) ** 2
    total = 0.0
    n = x.size
    for i in range(n):
        for j in range(i + 1, n):
            total += (x[i] - x[j]) * v[i] * v[j] * (t[i] - t[j])
    return total / den


def grad_w_real(x, w, s):
    """Vector dL/dw; satisfies the Euler identity sum(w * dL/dw) = 0."""
    x, w = _positive_pair(x, w)
    s = _finite_scalar("s", s)
    t = np.log(x)
    ma, (n0,) = tilted_sums(w, t, s)
    md, (d0,) = tilted_sums(w, t, s - 1.0)
    u = np.exp(s * t - ma)
    v = np.exp((s - 1.0) * t - md)
    return math.exp(ma - md) * (u * d0 - v * n0) / (d0 * d0)


def grad_x_real(x, w, s):
    """Vector dL/dx; satisfies the Euler identity sum(x * dL/dx) = L."""
    x, w = _positive_pair(x, w)
    s = _finite_scalar("s", s)
    t = np.log(x)
    ma, (n0,) = tilted_sums(w, t, s)
    md, (d0,) = tilted_sums(w, t, s - 1.0)
    value = math.exp(ma - md) * n0 / d0
    v = np.exp((s - 1.0) * t - md)
    return (w * v / d0) * (s - (s - 1.0) * value / x)


def grad_complex(x, w, a, b):
    """All first derivatives of the complex transform at (x, w, a, b).

    Differentiates the regularized quotient exactly: with R the regularized
    reciprocal conj(D)/(|D|**2 + q) used by the forward value,

        dz/dtheta = exp(M - M') * dN/dtheta * R - z * dD/dtheta * R

    (q is treated as constant, which matches the forward computation).  The
    suddency pair obeys dz/db = i * dz/da by holomorphy.
    """
    x, w = _positive_pair(x, w)
    a = _finite_scalar("a", a)
    b = _finite_scalar("b", b)
    t = np.log(x)

    phase = 1j * (b * t)
    za = a * t
    ma = float(za.max())
    en = np.exp(za - ma + phase)
    zd = (a - 1.0) * t
    md = float(zd.max())
    ed = np.exp(zd - md + phase)
    n0 = complex((w * en).sum())
    d0 = complex((w * ed).sum())
    value, singular = _regularized_ratio(n0, ma, d0, md)

    log_q = 2.0 * (_LN_EPS - md)
    q = math.exp(log_q) if log_q < 700.0 else math.inf
    lower = abs(d0) ** 2 + q
    if math.isinf(lower):
        zeros = np.zeros_like(x, dtype=complex)
        return ComplexGradients(0j, 0j, zeros, zeros.copy(), True)
    r = d0.conjugate() / lower
    scale = math.exp(ma - md)

    tn = complex((w * t * en).sum())
    td = complex((w * t * ed).sum())
    d_a = scale * tn * r - value * td * r
    d_b = 1j * d_a

    d_w = scale * en * r - value * ed * r

    s_c = complex(a, b)
    d_x = (w * ed * r) * (s_c - value * (s_c - 1.0) / x)

    return ComplexGradients(complex(d_a), complex(d_b), d_w, d_x, singular)


def grad_relau(z, alpha, beta, gamma):
    """Derivatives of alpha*Re(z) + beta*Im(z) + gamma.

    Returns ``(d_alpha, d_beta, d_gamma, d_z)`` with d_z = alpha + i*beta
    packing the pair d(out)/d(Re z) = alpha, d(out)/d(Im z) = beta.
    """
    z = complex(z)
    _finite_scalar("alpha", alpha)
    _finite_scalar("beta", beta)
    _finite_scalar("gamma", gamma)
    return z.real, z.imag, 1.0, complex(alpha, beta)


def grad_softplus(v):
    """sigmoid(v), the derivative of ln(1 + e^v), stable on both tails."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DomainError("pre-weights must be finite")
    out = np.empty_like(v)
    pos = v >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def finite_diff_check(f, params, h=1e-5):
    """Central-difference gradient of a scalar function of a flat vector.

    ``f`` receives the full parameter vector; each coordinate is displaced by
    +/- h in turn.  This is the oracle that every closed-form derivative in
    this module is tested against (h = 1e-5 for first derivatives, 1e-3 for
    second derivatives via differences of analytic firsts).
    """
    p = np.array(params, dtype=float)
    if p.ndim != 1:
        raise ValueError("params must be a flat vector")
    g = np.empty_like(p)
    for i in range(p.size):
        orig = p[i]
        p[i] = orig + h
        fp = f(p)
        p[i] = orig - h
        fm = f(p)
        p[i] = orig
        g[i] = (fp - fm) / (2.0 * h)
    return g
