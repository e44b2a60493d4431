"""Weighted Lehmer means on positive data, real- and complex-valued.

Everything here is a pure function over numpy arrays; the trainable layers in
``layers.py`` re-use the same log-domain stabilization and the closed-form
derivatives live in ``gradients.py``.

The real transform is L(s; x, w) = sum(w * x**s) / sum(w * x**(s-1)).  Both
power sums are evaluated as shifted exponentials of s*ln(x) so that large |s|
never overflows: with M = max(s*t) and M' = max((s-1)*t),

    L = exp(M - M') * sum(w * exp(s*t - M)) / sum(w * exp((s-1)*t - M')).

The complex transform replaces s by a + b*i; the extra factor is a pure phase
exp(i*b*t), and the division is regularized (see ``lehmer_complex``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

E = math.e
E_INV = 1.0 / math.e

# Scale of the |D| ~ 0 guard in the complex transform's division.
SINGULAR_EPS = 1e-12
_LN_EPS = math.log(SINGULAR_EPS)

# Beyond this |v| the softplus branches are exact to double precision.
SOFTPLUS_CUTOFF = 30.0


class DomainError(ValueError):
    """Input left the transform's domain (strictly positive, finite reals)."""


def _positive_pair(x, w):
    """Validate and broadcast a (values, weights) pair to float arrays."""
    x = np.asarray(x, dtype=float)
    if w is None:
        w = np.ones_like(x)
    else:
        w = np.asarray(w, dtype=float)
    if x.ndim != 1 or w.ndim != 1:
        raise DomainError("values and weights must be one-dimensional")
    if x.size == 0:
        raise DomainError("empty input vector")
    if x.shape != w.shape:
        raise DomainError(
            f"length mismatch: {x.size} values vs {w.size} weights"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
        raise DomainError("values and weights must be finite")
    if np.any(x <= 0.0) or np.any(w <= 0.0):
        raise DomainError("values and weights must be strictly positive")
    return x, w


def _finite_scalar(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")
    return value


def tilted_sums(w, t, e, order=0):
    """Stabilized power sums S_k = sum(w * t**k * exp(e*t)) for k = 0..order.

    Returns ``(shift, [S_0, ..., S_order])`` where the true sums equal
    ``exp(shift) * S_k``.  Sharing one shift across orders keeps ratios like
    S_1/S_0 (log-derivatives) exactly stable.
    """
    z = e * t
    shift = float(z.max())
    u = w * np.exp(z - shift)
    sums = [float(u.sum())]
    acc = u
    for _ in range(order):
        acc = acc * t
        sums.append(float(acc.sum()))
    return shift, sums


def lehmer_real(x, w, s):
    """Weighted Lehmer mean of positive values; always in [min(x), max(x)].

    ``w=None`` means unit weights.  s is the suddency moment: s=0 recovers the
    weighted harmonic mean, s=1 the arithmetic mean, s=2 the contra-harmonic
    mean, and s -> -/+inf the min/max of x.
    """
    x, w = _positive_pair(x, w)
    s = _finite_scalar("s", s)
    t = np.log(x)
    ma, (n0,) = tilted_sums(w, t, s)
    md, (d0,) = tilted_sums(w, t, s - 1.0)
    return math.exp(ma - md) * n0 / d0


def _regularized_ratio(num, ma, den, md):
    """exp(ma - md) * num / den with the |den| ~ 0 guard.

    num, den are the shifted complex sums; the true numerator/denominator are
    exp(ma) * num and exp(md) * den.  The division is computed as
    num * conj(den) / (|den|**2 + q) with q = SINGULAR_EPS**2 * exp(-2*md),
    i.e. an absolute floor of SINGULAR_EPS on the unshifted |D|.  Returns
    ``(value, singular)`` where singular flags |D| < SINGULAR_EPS.
    """
    abs_den = abs(den)
    singular = abs_den == 0.0 or math.log(abs_den) + md < _LN_EPS
    log_q = 2.0 * (_LN_EPS - md)
    q = math.exp(log_q) if log_q < 700.0 else math.inf
    lower = abs_den * abs_den + q
    if math.isinf(lower):
        return 0j, True
    value = math.exp(ma - md) * num * den.conjugate() / lower
    return complex(value), singular


def _complex_sums(x, w, a, b):
    """Shifted numerator/denominator sums of the complex transform."""
    t = np.log(x)
    phase = 1j * (b * t)
    za = a * t
    ma = float(za.max())
    num = complex((w * np.exp(za - ma + phase)).sum())
    zd = (a - 1.0) * t
    md = float(zd.max())
    den = complex((w * np.exp(zd - md + phase)).sum())
    return num, ma, den, md


def lehmer_complex(x, w, a, b, return_singular=False):
    """Complex-valued weighted Lehmer mean for suddency s = a + b*i.

    The imaginary suddency b enters only through phases exp(i*b*ln x), so the
    numerator and denominator can destructively interfere; the division is
    regularized as N*conj(D) / (|D|**2 + eps**2) with eps = SINGULAR_EPS so
    the result is always finite.  With ``return_singular=True`` also returns
    the flag saying |D| fell below eps.  For b = 0 the imaginary part is
    exactly zero and the real part matches ``lehmer_real``.
    """
    x, w = _positive_pair(x, w)
    a = _finite_scalar("a", a)
    b = _finite_scalar("b", b)
    num, ma, den, md = _complex_sums(x, w, a, b)
    value, singular = _regularized_ratio(num, ma, den, md)
    if return_singular:
        return value, singular
    return value


def euler_form_equivalence_check(x, w, a, b):
    """|difference| between two evaluation routes of the complex transform.

    Route one exponentiates the complex number (a + b*i) * ln(x) directly;
    route two builds the same summands from magnitude times an explicit
    cosine/sine pair.  The two are algebraically identical, so the returned
    discrepancy should sit at rounding level.
    """
    x, w = _positive_pair(x, w)
    a = _finite_scalar("a", a)
    b = _finite_scalar("b", b)
    t = np.log(x)

    za = a * t
    ma = float(za.max())
    zd = (a - 1.0) * t
    md = float(zd.max())

    s_c = complex(a, b)
    num1 = complex((w * np.exp(s_c * t - ma)).sum())
    den1 = complex((w * np.exp((s_c - 1.0) * t - md)).sum())
    v1, _ = _regularized_ratio(num1, ma, den1, md)

    cosb, sinb = np.cos(b * t), np.sin(b * t)
    num2 = complex((w * np.exp(za - ma) * (cosb + 1j * sinb)).sum())
    den2 = complex((w * np.exp(zd - md) * (cosb + 1j * sinb)).sum())
    v2, _ = _regularized_ratio(num2, ma, den2, md)

    return abs(v1 - v2)


def relau(z, alpha, beta, gamma):
    """Real read-out alpha*Re(z) + beta*Im(z) + gamma of a complex activation."""
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DomainError("activation must be finite")
    alpha = _finite_scalar("alpha", alpha)
    beta = _finite_scalar("beta", beta)
    gamma = _finite_scalar("gamma", gamma)
    return alpha * z.real + beta * z.imag + gamma


def softplus_weights(v):
    """Map unconstrained pre-weights to strictly positive weights ln(1+e^v).

    Stable on the whole real line: for v > 30 returns v (the correction
    log1p(e^-v) is below double rounding), for v < -30 returns e^v.
    Preserves the input's shape; works elementwise on matrices.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise DomainError("empty pre-weight array")
    if not np.all(np.isfinite(v)):
        raise DomainError("pre-weights must be finite")
    out = np.empty_like(v)
    hi = v > SOFTPLUS_CUTOFF
    lo = v < -SOFTPLUS_CUTOFF
    mid = ~(hi | lo)
    out[hi] = v[hi]
    out[lo] = np.exp(v[lo])
    out[mid] = np.log1p(np.exp(v[mid]))
    return out


@dataclass(frozen=True)
class RangeStats:
    """Per-feature min/max captured on training data by ``standardize_fit``."""

    feature_min: np.ndarray
    feature_max: np.ndarray

    @property
    def n_features(self):
        return self.feature_min.shape[0]


def standardize_fit(X):
    """Record per-column min/max of a 2-d float matrix."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DomainError("expected a non-empty 2-d feature matrix")
    if not np.all(np.isfinite(X)):
        raise DomainError("features must be finite")
    return RangeStats(X.min(axis=0).copy(), X.max(axis=0).copy())


def standardize_apply(stats, X):
    """Affinely map features into [1/e, e] using training-set min/max.

    Columns that were constant during fitting map to 1.0 (the interval
    midpoint in log space); unseen data outside the training range is clipped
    to the interval so downstream transforms stay in-domain.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DomainError("expected a 2-d feature matrix")
    if X.shape[1] != stats.n_features:
        raise DomainError(
            f"feature count mismatch: got {X.shape[1]}, "
            f"stats were fit on {stats.n_features}"
        )
    if not np.all(np.isfinite(X)):
        raise DomainError("features must be finite")
    span = stats.feature_max - stats.feature_min
    safe = np.where(span == 0.0, 1.0, span)
    scaled = E_INV + (E - E_INV) * (X - stats.feature_min) / safe
    out = np.clip(scaled, E_INV, E)
    return np.where(span == 0.0, 1.0, out)


def squash_to_lehmer_range(z):
    """exp(tanh(z)): smooth, strictly increasing map of R into (1/e, e)."""
    scalar = np.isscalar(z)
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise DomainError("squash input must be finite")
    out = np.exp(np.tanh(z))
    return float(out) if scalar else out


def squash_derivative(z):
    """d/dz exp(tanh(z)) = exp(tanh(z)) * (1 - tanh(z)**2), for backprop."""
    scalar = np.isscalar(z)
    z = np.asarray(z, dtype=float)
    th = np.tanh(z)
    out = np.exp(th) * (1.0 - th * th)
    return float(out) if scalar else out
