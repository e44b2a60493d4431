"""Randomized verification of every closed-form derivative in the package.

Each check draws fresh cases from the standardized domain (values in
[1/e, e], weights in [0.1, 10], suddency in [-5, 5]), evaluates the analytic
derivative, and compares against a central finite difference (h = 1e-5 for
first derivatives; second derivatives use the second central difference of
the value with h = 1e-3).  Errors are reported as

    rel = |analytic - numeric| / max(|analytic|, |numeric|, 1e-3)

so tiny gradients are judged on an absolute scale of ~1e-8 at the 1e-5
tolerance instead of amplifying finite-difference noise.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .gradients import (
    finite_diff_check,
    grad2_s_real,
    grad_complex,
    grad_relau,
    grad_s_pairwise_unweighted,
    grad_s_real,
    grad_softplus,
    grad_w_real,
    grad_x_real,
)
from .layers import (
    DenseLayer,
    LAULayerComplex,
    LAULayerReal,
    Network,
    softmax_cross_entropy,
)
from .training import TrainConfig, build_conv_network, build_tabular_network
from .transforms import (
    E,
    E_INV,
    lehmer_complex,
    lehmer_real,
    relau,
    softplus_weights,
    squash_derivative,
    squash_to_lehmer_range,
)

REL_FLOOR = 1e-3

FIRST_ORDER_TOL = 1e-5
SECOND_ORDER_TOL = 1e-4
COMPOSITE_TOL = 1e-4
DUAL_ROUTE_TOL = 1e-10
ELEMENTWISE_TOL = 1e-6


@dataclass
class CheckReport:
    """Outcome of one randomized derivative check."""

    name: str
    cases: int
    comparisons: int
    worst_rel: float
    tolerance: float

    @property
    def passed(self):
        return self.worst_rel <= self.tolerance

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.name}: {self.cases} cases, "
            f"{self.comparisons} derivatives, worst rel err "
            f"{self.worst_rel:.3e} (tol {self.tolerance:.0e})"
        )


def rel_error(analytic, numeric):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    return float(
        (np.abs(analytic - numeric) / np.maximum(scale, REL_FLOOR)).max()
    )


def _draw_case(rng, n_min=2, n_max=8):
    n = int(rng.integers(n_min, n_max + 1))
    x = rng.uniform(E_INV, E, n)
    w = rng.uniform(0.1, 10.0, n)
    s = float(rng.uniform(-5.0, 5.0))
    return x, w, s


def _check_grad_s(rng, cases):
    worst, total = 0.0, 0
    for _ in range(cases):
        x, w, s = _draw_case(rng)
        analytic = grad_s_real(x, w, s)
        numeric = finite_diff_check(
            lambda p: lehmer_real(x, w, p[0]), [s], h=1e-5
        )[0]
        worst = max(worst, rel_error(analytic, numeric))
        total += 1
    return worst, total


def _check_grad2_s(rng, cases):
    worst, total = 0.0, 0
    h = 1e-3
    for _ in range(cases):
        x, w, s = _draw_case(rng)
        analytic = grad2_s_real(x, w, s)
        numeric = (
            lehmer_real(x, w, s + h)
            - 2.0 * lehmer_real(x, w, s)
            + lehmer_real(x, w, s - h)
        ) / (h * h)
        worst = max(worst, rel_error(analytic, numeric))
        total += 1
    return worst, total


def _check_grad_w(rng, cases):
    worst, total = 0.0, 0
    for _ in range(cases):
        x, w, s = _draw_case(rng)
        analytic = grad_w_real(x, w, s)
        numeric = finite_diff_check(lambda p: lehmer_real(x, p, s), w, h=1e-5)
        worst = max(worst, rel_error(analytic, numeric))
        total += analytic.size
    return worst, total


def _check_grad_x(rng, cases):
    worst, total = 0.0, 0
    for _ in range(cases):
        x, w, s = _draw_case(rng)
        analytic = grad_x_real(x, w, s)
        numeric = finite_diff_check(lambda p: lehmer_real(p, w, s), x, h=1e-5)
        worst = max(worst, rel_error(analytic, numeric))
        total += analytic.size
    return worst, total


def _check_pairwise_route(rng, cases):
    """Two independent analytic forms of dL/ds must agree almost exactly."""
    worst, total = 0.0, 0
    for _ in range(cases):
        x, _, s = _draw_case(rng)
        a = grad_s_real(x, None, s)
        b = grad_s_pairwise_unweighted(x, s)
        worst = max(worst, rel_error(a, b))
        total += 1
    return worst, total


def _complex_fd(f, value, h=1e-5):
    return (f(value + h) - f(value - h)) / (2.0 * h)


def _check_complex(rng, cases):
    worst, total = 0.0, 0
    done = 0
    while done < cases:
        x, w, s = _draw_case(rng)
        a, b = s, float(rng.uniform(-5.0, 5.0))
        _, singular = lehmer_complex(x, w, a, b, return_singular=True)
        if singular:
            continue  # measure-zero interference points: fd is meaningless
        done += 1
        g = grad_complex(x, w, a, b)
        fd_a = _complex_fd(lambda p: lehmer_complex(x, w, p, b), a)
        fd_b = _complex_fd(lambda p: lehmer_complex(x, w, a, p), b)
        worst = max(worst, rel_error(g.d_a, fd_a), rel_error(g.d_b, fd_b))
        total += 2
        for k in range(x.size):
            def f_w(p, k=k):
                wp = w.copy()
                wp[k] = p
                return lehmer_complex(x, wp, a, b)

            def f_x(p, k=k):
                xp = x.copy()
                xp[k] = p
                return lehmer_complex(xp, w, a, b)

            worst = max(worst, rel_error(g.d_w[k], _complex_fd(f_w, w[k])))
            worst = max(worst, rel_error(g.d_x[k], _complex_fd(f_x, x[k])))
            total += 2
    return worst, total


def _check_relau(rng, cases):
    worst, total = 0.0, 0
    for _ in range(cases):
        z = complex(rng.normal(), rng.normal())
        abg = rng.normal(size=3)
        d_alpha, d_beta, d_gamma, d_z = grad_relau(z, *abg)
        numeric = finite_diff_check(
            lambda p: relau(complex(p[3], p[4]), p[0], p[1], p[2]),
            [abg[0], abg[1], abg[2], z.real, z.imag],
        )
        analytic = np.array([d_alpha, d_beta, d_gamma, d_z.real, d_z.imag])
        worst = max(worst, rel_error(analytic, numeric))
        total += 5
    return worst, total


def _check_softplus(rng, cases):
    worst, total = 0.0, 0
    for _ in range(cases):
        v = np.concatenate(
            [rng.uniform(-8, 8, 6), rng.uniform(28, 35, 1), rng.uniform(-35, -28, 1)]
        )
        analytic = grad_softplus(v)
        numeric = finite_diff_check(
            lambda p: float(softplus_weights(p).sum()), v
        )
        worst = max(worst, rel_error(analytic, numeric))
        total += v.size
    return worst, total


def _check_squash(rng, cases):
    worst, total = 0.0, 0
    for _ in range(cases):
        z = rng.uniform(-4, 4, 8)
        analytic = squash_derivative(z)
        numeric = finite_diff_check(
            lambda p: float(squash_to_lehmer_range(p).sum()), z
        )
        worst = max(worst, rel_error(analytic, numeric))
        total += z.size
    return worst, total


def _collect_params(net):
    items = list(net.param_items())
    sizes = [getattr(layer, name).size for _, layer, name in items]
    return items, sizes


def _get_flat(items, sizes):
    return np.concatenate(
        [np.ravel(getattr(layer, name)) for _, layer, name in items]
    )


def _set_flat(items, sizes, vec):
    pos = 0
    for (_, layer, name), size in zip(items, sizes):
        shape = getattr(layer, name).shape
        setattr(layer, name, vec[pos : pos + size].reshape(shape).copy())
        pos += size


def _check_network(net, x, labels, h=1e-5):
    """Backprop through a full stack vs. finite differences of the loss.

    Compares every parameter gradient and the input gradient.  Returns
    (worst_rel, n_comparisons).
    """
    items, sizes = _collect_params(net)

    logits = net.forward(x, train=True)
    loss, dlogits = softmax_cross_entropy(logits, labels)
    dx = net.backward(dlogits)
    analytic = np.concatenate(
        [np.ravel(getattr(layer, "d_" + name)) for _, layer, name in items]
    )

    theta0 = _get_flat(items, sizes)

    def loss_at(theta):
        _set_flat(items, sizes, theta)
        out = net.forward(x, train=True)
        return softmax_cross_entropy(out, labels)[0]

    numeric = finite_diff_check(loss_at, theta0, h=h)
    _set_flat(items, sizes, theta0)
    worst = rel_error(analytic, numeric)
    total = analytic.size

    flat_x = x.reshape(-1).copy()

    def loss_at_x(xv):
        out = net.forward(xv.reshape(x.shape), train=True)
        return softmax_cross_entropy(out, labels)[0]

    numeric_x = finite_diff_check(loss_at_x, flat_x, h=h)
    worst = max(worst, rel_error(dx.reshape(-1), numeric_x))
    total += flat_x.size
    return worst, total


def _check_lau_layer(rng, cases, kind):
    worst, total = 0.0, 0
    cls = LAULayerReal if kind == "real" else LAULayerComplex
    for _ in range(cases):
        n_in = int(rng.integers(2, 6))
        n_units = int(rng.integers(1, 5))
        batch = int(rng.integers(1, 4))
        layer = cls(n_in, n_units)
        if kind == "real":
            layer.s = rng.uniform(-3, 3, n_units)
        else:
            layer.a = rng.uniform(-3, 3, n_units)
            layer.b = rng.uniform(-2, 2, n_units)
            layer.alpha = rng.normal(size=n_units)
            layer.beta = rng.normal(size=n_units)
            layer.gamma = rng.normal(size=n_units)
        layer.v = rng.uniform(-1.5, 1.5, (n_units, n_in))
        x = rng.uniform(E_INV, E, (batch, n_in))
        labels = rng.integers(0, n_units, batch).astype(np.int64)
        net = Network([layer])
        w_rel, n_cmp = _check_network(net, x, labels)
        worst = max(worst, w_rel)
        total += n_cmp
    return worst, total


def _check_dense(rng, cases):
    worst, total = 0.0, 0
    for _ in range(cases):
        n_in = int(rng.integers(2, 7))
        n_out = int(rng.integers(2, 5))
        batch = int(rng.integers(1, 5))
        layer = DenseLayer(n_in, n_out, rng)
        x = rng.normal(size=(batch, n_in))
        labels = rng.integers(0, n_out, batch).astype(np.int64)
        w_rel, n_cmp = _check_network(Network([layer]), x, labels)
        worst = max(worst, w_rel)
        total += n_cmp
    return worst, total


def _check_tabular_net(rng, cases, kind):
    worst, total = 0.0, 0
    config = TrainConfig(lau_kind=kind, lau_units=3)
    for _ in range(cases):
        n_features = int(rng.integers(3, 6))
        n_classes = int(rng.integers(2, 4))
        batch = int(rng.integers(2, 5))
        net = build_tabular_network(n_features, n_classes, config, rng)
        # Nudge parameters off their symmetric init so gradients are generic.
        for _, layer, name in net.param_items():
            param = getattr(layer, name)
            setattr(layer, name, param + rng.normal(0, 0.2, param.shape))
        x = rng.uniform(E_INV, E, (batch, n_features))
        labels = rng.integers(0, n_classes, batch).astype(np.int64)
        w_rel, n_cmp = _check_network(net, x, labels)
        worst = max(worst, w_rel)
        total += n_cmp
    return worst, total


def _check_conv_stack(rng, cases, kind):
    """Full image pipeline (conv, batchnorm, pool, squash, LAU) vs fd."""
    worst, total = 0.0, 0
    config = TrainConfig(lau_kind=kind, lau_units=3)
    for _ in range(cases):
        net = build_conv_network((8, 8), 2, config, rng)
        for _, layer, name in net.param_items():
            param = getattr(layer, name)
            setattr(layer, name, param + rng.normal(0, 0.1, param.shape))
        batch = 2
        x = rng.uniform(0.0, 1.0, (batch, 8, 8))
        labels = rng.integers(0, 2, batch).astype(np.int64)
        # Smaller step keeps finite differences away from relu/pool kinks.
        w_rel, n_cmp = _check_network(net, x, labels, h=1e-6)
        worst = max(worst, w_rel)
        total += n_cmp
    return worst, total


CHECKS = {
    "grad_s": (_check_grad_s, 200, FIRST_ORDER_TOL),
    "grad2_s": (_check_grad2_s, 200, SECOND_ORDER_TOL),
    "grad_w": (_check_grad_w, 150, FIRST_ORDER_TOL),
    "grad_x": (_check_grad_x, 150, FIRST_ORDER_TOL),
    "pairwise_route": (_check_pairwise_route, 150, DUAL_ROUTE_TOL),
    "complex_grads": (_check_complex, 100, FIRST_ORDER_TOL),
    "relau": (_check_relau, 100, ELEMENTWISE_TOL),
    "softplus": (_check_softplus, 80, ELEMENTWISE_TOL),
    "squash": (_check_squash, 80, ELEMENTWISE_TOL),
    "lau_layer_real": (lambda r, c: _check_lau_layer(r, c, "real"), 25,
                       FIRST_ORDER_TOL),
    "lau_layer_complex": (lambda r, c: _check_lau_layer(r, c, "complex"), 25,
                          FIRST_ORDER_TOL),
    "dense_layer": (_check_dense, 25, ELEMENTWISE_TOL),
    "tabular_network": (lambda r, c: _check_tabular_net(r, c, "real"), 10,
                        FIRST_ORDER_TOL),
    "tabular_network_complex": (
        lambda r, c: _check_tabular_net(r, c, "complex"), 10, FIRST_ORDER_TOL),
    "conv_stack": (lambda r, c: _check_conv_stack(r, c, "real"), 3,
                   COMPOSITE_TOL),
    "conv_stack_complex": (lambda r, c: _check_conv_stack(r, c, "complex"), 2,
                           COMPOSITE_TOL),
}


def run_gradient_checks(seed=0, scale=1.0, names=None):
    """Run the registered checks; returns a list of CheckReport.

    ``scale`` multiplies every check's case count (minimum one case), so the
    CLI can trade runtime for thoroughness.
    """
    reports = []
    for name, (fn, cases, tol) in CHECKS.items():
        if names is not None and name not in names:
            continue
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        n_cases = max(1, int(round(cases * scale)))
        worst, comparisons = fn(rng, n_cases)
        reports.append(CheckReport(name, n_cases, comparisons, worst, tol))
    return reports


def total_cases(reports):
    return sum(r.cases for r in reports)
