"""Noise-robust classification losses and their analytic output errors.

Every loss takes the pre-activation vector z of an example (the network
output before any softmax) plus the integer class label, and returns both the
scalar loss value and the output error delta_n = dL/dz_n.  The output error
is the quantity backpropagation distributes to the weights, so training code
never needs autodiff: ``evaluate_batch`` feeds the per-example deltas
straight into the backward pass.

Implemented families and their string keys:

==========  =====================================================  =========
key         definition (a = softmax(z), k = labelled class)        bounded
==========  =====================================================  =========
ce          -log a_k                                               no
mae         2 (1 - a_k)                                            2
gence       (1 - a_k^q) / q                                        1/q
symce       alpha * CE + beta * MAE                                no
actpas1     alpha * log((1-a_k)^0.5 a_k) / sum_i log((1-a_i)^0.5
            a_i) + beta * MAE                                      alpha+2beta
actpas2     alpha * log(a_k) / sum_i log(a_i) + beta * MAE         alpha+2beta
bitemp      tempered softmax (t2) + tempered log loss (t1)         1/(1-t1)
boundce     CE applied after a second softmax over a               1+ln(c)
==========  =====================================================  =========

An optional output bias ``epsilon`` shifts z_k -> z_k + epsilon before the
loss is computed (keys like ``"mae:eps=0.5"``).  The bias only exists inside
the loss: accuracy evaluation always uses the unshifted forward pass, since
no label is available at prediction time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .numerics import clamp_probability, softmax

KINDS = ("ce", "mae", "gence", "symce", "actpas1", "actpas2", "bitemp", "boundce")

# Hyperparameter defaults per class-count regime.  Where two published values
# exist, the first is for ten-class tasks and the second for hundred-class
# tasks; the switch happens at 100 classes.
_FEW_CLASS_DEFAULTS = {
    "gence": {"q": 0.7},
    "symce": {"alpha": 0.1, "beta": 2.0},
    "actpas1": {"alpha": 1.0, "beta": 20.0},
    "actpas2": {"alpha": 1.0, "beta": 20.0},
    "bitemp": {"t1": 0.8, "t2": 1.2},
}
_MANY_CLASS_DEFAULTS = {
    "gence": {"q": 0.7},
    "symce": {"alpha": 6.0, "beta": 0.2},
    "actpas1": {"alpha": 1.0, "beta": 0.2},
    "actpas2": {"alpha": 1.0, "beta": 0.2},
    "bitemp": {"t1": 0.8, "t2": 1.2},
}

_KEY_PARAMS = {
    "ce": (),
    "mae": (),
    "gence": ("q",),
    "symce": ("alpha", "beta"),
    "actpas1": ("alpha", "beta"),
    "actpas2": ("alpha", "beta"),
    "bitemp": ("t1", "t2"),
    "boundce": (),
}


@dataclass(frozen=True)
class LossSpec:
    """A loss family plus its hyperparameters and optional output bias.

    ``bound`` is the finite supremum of the loss over all (z, label) pairs
    where one exists; it is filled in automatically for every bounded kind
    except ``boundce``, whose bound 1 + ln(c) depends on the class count and
    is set by :meth:`for_classes`.
    """

    kind: str
    q: float = 0.7
    alpha: float | None = None
    beta: float | None = None
    t1: float = 0.8
    t2: float = 1.2
    epsilon: float = 0.0
    bound: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.epsilon < 0:
            raise ConfigError(f"output bias epsilon must be >= 0, got {self.epsilon}")
        if self.kind == "gence" and not 0.0 < self.q <= 1.0:
            raise ConfigError(f"gence exponent q must lie in (0, 1], got {self.q}")
        if self.kind in ("symce", "actpas1", "actpas2"):
            if self.alpha is None or self.beta is None:
                raise ConfigError(
                    f"{self.kind} needs alpha and beta; use LossSpec.for_classes() for the defaults"
                )
            if self.alpha <= 0 or self.beta <= 0:
                raise ConfigError(f"{self.kind} weights must be positive, got alpha={self.alpha}, beta={self.beta}")
        if self.kind == "bitemp" and not self.t1 < 1.0 < self.t2:
            raise ConfigError(f"bitemp temperatures must satisfy t1 < 1 < t2, got t1={self.t1}, t2={self.t2}")
        if self.bound is None:
            object.__setattr__(self, "bound", self._implied_bound())

    def _implied_bound(self) -> float | None:
        if self.kind == "mae":
            return 2.0
        if self.kind == "gence":
            return 1.0 / self.q
        if self.kind in ("actpas1", "actpas2"):
            return self.alpha + 2.0 * self.beta
        if self.kind == "bitemp":
            return 1.0 / (1.0 - self.t1)
        return None  # ce and symce are unbounded; boundce needs the class count

    @classmethod
    def for_classes(cls, kind: str, n_classes: int, epsilon: float = 0.0, **overrides) -> "LossSpec":
        """Spec with the published hyperparameter defaults for ``n_classes``."""
        if kind not in KINDS:
            raise ConfigError(f"unknown loss kind {kind!r}; expected one of {KINDS}")
        if n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {n_classes}")
        table = _MANY_CLASS_DEFAULTS if n_classes >= 100 else _FEW_CLASS_DEFAULTS
        params = dict(table.get(kind, {}))
        for name, value in overrides.items():
            if name not in ("q", "alpha", "beta", "t1", "t2", "bound"):
                raise ConfigError(f"unknown hyperparameter {name!r} for loss {kind!r}")
            params[name] = value
        if kind == "boundce" and "bound" not in params:
            params["bound"] = 1.0 + math.log(n_classes)
        return cls(kind=kind, epsilon=epsilon, **params)


@dataclass(frozen=True)
class LossEval:
    """Scalar loss value plus the output-error vector delta_n = dL/dz_n."""

    value: float
    delta: np.ndarray


def parse_loss_key(key: str, n_classes: int) -> LossSpec:
    """Build a LossSpec from a string key like ``"gence:q=0.7"`` or ``"mae:eps=0.5"``.

    Parameters omitted from the key take the published defaults for
    ``n_classes``.  Recognised parameter names: q, alpha, beta, t1, t2, eps.
    """
    kind, _, rest = key.strip().partition(":")
    kind = kind.lower()
    params: dict[str, float] = {}
    epsilon = 0.0
    if rest:
        for item in rest.split(","):
            name, eq, value = item.partition("=")
            name = name.strip().lower()
            if not eq:
                raise ConfigError(f"malformed loss key {key!r}: expected name=value, got {item!r}")
            try:
                parsed = float(value)
            except ValueError:
                raise ConfigError(f"malformed loss key {key!r}: {value!r} is not a number") from None
            if name == "eps":
                epsilon = parsed
            else:
                params[name] = parsed
    return LossSpec.for_classes(kind, n_classes, epsilon=epsilon, **params)


def format_loss_key(spec: LossSpec) -> str:
    """Canonical string key for a spec; inverse of :func:`parse_loss_key`."""
    parts = [f"{name}={format(getattr(spec, name), 'g')}" for name in _KEY_PARAMS[spec.kind]]
    if spec.epsilon != 0.0:
        parts.append(f"eps={format(spec.epsilon, 'g')}")
    return spec.kind if not parts else spec.kind + ":" + ",".join(parts)


# ---------------------------------------------------------------------------
# Batched kernels.  Z is (batch, classes) float64, ks is (batch,) int; each
# returns (values (batch,), deltas (batch, classes)).
# ---------------------------------------------------------------------------


def _rows(ks):
    return np.arange(ks.shape[0])


def _sub_onehot(a, ks):
    """a - onehot(k), the softmax-CE error factor shared by several kernels."""
    out = a.copy()
    out[_rows(ks), ks] -= 1.0
    return out


def _ce_kernel(Z, ks):
    # -log a_k evaluated as logsumexp(z) - z_k: exact even where a_k underflows.
    m = Z.max(axis=1)
    lse = m + np.log(np.exp(Z - m[:, None]).sum(axis=1))
    values = lse - Z[_rows(ks), ks]
    return values, _sub_onehot(softmax(Z, axis=1), ks)


def _mae_kernel(Z, ks):
    a = softmax(Z, axis=1)
    ak = a[_rows(ks), ks]
    return 2.0 * (1.0 - ak), 2.0 * ak[:, None] * _sub_onehot(a, ks)


def _gence_kernel(Z, ks, q):
    if q <= 0.0:
        raise ConfigError(f"gence exponent q must be positive, got {q}")
    a = softmax(Z, axis=1)
    akq = a[_rows(ks), ks] ** q
    return (1.0 - akq) / q, akq[:, None] * _sub_onehot(a, ks)


def _symce_kernel(Z, ks, alpha, beta):
    ce_v, ce_d = _ce_kernel(Z, ks)
    mae_v, mae_d = _mae_kernel(Z, ks)
    return alpha * ce_v + beta * mae_v, alpha * ce_d + beta * mae_d


def _actpas_kernel(Z, ks, alpha, beta, focal):
    """Active-passive losses: normalized active term plus beta * MAE.

    The active term is N/D with N = f(a_k), D = sum_i f(a_i) and
    f(a) = log((1-a)^0.5 a) (focal variant) or f(a) = log(a).  Its gradient
    follows from the quotient rule through the softmax Jacobian
    da_i/dz_n = a_i ([i=n] - a_n):

        dN/dz_n = g_k ([k=n] - a_n),   dD/dz_n = g_n - a_n sum_i g_i,

    with g_i = f'(a_i) a_i.  Probabilities are clamped before the logs; D is
    strictly negative so the quotient never degenerates.
    """
    r = _rows(ks)
    a = softmax(Z, axis=1)
    ac = clamp_probability(a)
    if focal:
        f = 0.5 * np.log1p(-ac) + np.log(ac)
        g = (1.0 / ac - 0.5 / (1.0 - ac)) * a
    else:
        f = np.log(ac)
        g = np.ones_like(a)
    N = f[r, ks]
    D = f.sum(axis=1)
    onehot_minus_a = -a.copy()
    onehot_minus_a[r, ks] += 1.0
    Np = g[r, ks][:, None] * onehot_minus_a
    Dp = g - a * g.sum(axis=1, keepdims=True)
    active_d = (Np * D[:, None] - N[:, None] * Dp) / (D**2)[:, None]
    mae_v, mae_d = _mae_kernel(Z, ks)
    return alpha * N / D + beta * mae_v, alpha * active_d + beta * mae_d


def _boundce_kernel(Z, ks):
    # CE of softmax(a) where a = softmax(z); a is in [0, 1] so no shift needed.
    r = _rows(ks)
    a = softmax(Z, axis=1)
    values = np.log(np.exp(a).sum(axis=1)) - a[r, ks]
    b = softmax(a, axis=1)
    g = b * a
    g[r, ks] -= a[r, ks]
    deltas = g - a * g.sum(axis=1, keepdims=True)
    return values, deltas


def tempered_exp(x, t: float):
    """exp_t(x) = [1 + (1-t) x]_+^(1/(1-t)); ordinary exp at t = 1.

    Evaluated as exp(log1p((1-t) x) / (1-t)): forming 1 + (1-t) x first would
    round at 1e-16 and the exponent 1/(1-t) amplifies that, losing all
    accuracy as t -> 1.
    """
    x = np.asarray(x, dtype=np.float64)
    if t == 1.0:
        return np.exp(x)
    v = (1.0 - t) * x
    out = np.zeros_like(v)
    pos = v > -1.0
    out[pos] = np.exp(np.log1p(v[pos]) / (1.0 - t))
    return out


def tempered_log(x, t: float):
    """log_t(x) = (x^(1-t) - 1) / (1-t); ordinary log at t = 1."""
    x = np.asarray(x, dtype=np.float64)
    if t == 1.0:
        return np.log(x)
    with np.errstate(divide="ignore"):
        return np.expm1((1.0 - t) * np.log(x)) / (1.0 - t)


_NORMALIZER_TOL = 1e-10
_NORMALIZER_BISECTIONS = 100


def tempered_normalizer(Z, t2: float) -> np.ndarray:
    """Per-row lambda such that sum_i exp_t2(z_i - lambda) = 1.

    The row sum is strictly decreasing in lambda and equals at least 1 at
    lambda = max(z).  An upper bracket is available in closed form: for
    t2 > 1 the sum is at most c * exp_t2(max(z) - lambda), which hits 1 at
    width (c^(t2-1) - 1)/(t2-1); for t2 < 1 every term's support ends at
    width 1/(1-t2).  Bisection then pins the root down, stopping early once
    the bracket has collapsed to rounding noise.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if t2 == 1.0:
        m = Z.max(axis=1)
        return m + np.log(np.exp(Z - m[:, None]).sum(axis=1))
    c = Z.shape[1]
    if t2 > 1.0:
        width = (c ** (t2 - 1.0) - 1.0) / (t2 - 1.0)
    else:
        width = 1.0 / (1.0 - t2)
    lo = Z.max(axis=1)
    hi = lo + width
    inv = 1.0 / (1.0 - t2)
    buf = np.empty_like(Z)

    def row_sums(lam):
        np.subtract(Z, lam[:, None], out=buf)
        np.multiply(buf, 1.0 - t2, out=buf)
        if t2 > 1.0:
            np.log1p(buf, out=buf)  # argument >= 0 everywhere inside the bracket
        else:
            np.maximum(buf, -1.0, out=buf)  # support edge: log1p(-1) -> -inf -> exp -> 0
            with np.errstate(divide="ignore"):
                np.log1p(buf, out=buf)
        np.multiply(buf, inv, out=buf)
        np.exp(buf, out=buf)
        return buf.sum(axis=1)

    for _ in range(_NORMALIZER_BISECTIONS):
        mid = 0.5 * (lo + hi)
        above = row_sums(mid) > 1.0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if float((hi - lo).max()) <= 1e-14 * (1.0 + float(np.abs(hi).max())):
            break
    lam = 0.5 * (lo + hi)
    resid = np.abs(row_sums(lam) - 1.0)
    if np.any(resid > _NORMALIZER_TOL):
        raise NumericError(
            f"tempered softmax normalizer did not converge: |sum(a) - 1| = {resid.max():.3e}"
        )
    return lam


def tempered_softmax(Z, t2: float) -> np.ndarray:
    """a_i = exp_t2(z_i - lambda(z)) with lambda chosen so the row sums to 1."""
    Z = np.asarray(Z, dtype=np.float64)
    squeeze = Z.ndim == 1
    Z2 = np.atleast_2d(Z)
    a = tempered_exp(Z2 - tempered_normalizer(Z2, t2)[:, None], t2)
    return a[0] if squeeze else a


def _bitemp_kernel(Z, ks, t1, t2):
    """Bi-tempered logistic loss for one-hot labels.

    value = -log_t1(a_k) - (1 - sum_i a_i^(2-t1)) / (2-t1) with a the
    tempered softmax.  The delta follows from d exp_t(x)/dx = exp_t(x)^t and
    the normalizer's implicit derivative dlambda/dz_n = a_n^t2 / sum_j a_j^t2:

        delta_n = w_n - (a_n^t2 / sum_j a_j^t2) * sum_i w_i,
        w_i = a_i^(1-t1+t2) - [i=k] a_k^(t2-t1).
    """
    r = _rows(ks)
    a = tempered_softmax(Z, t2)
    ak = a[r, ks]
    p = 2.0 - t1
    # the true log needs a clamp at a_k = 0; tempered logs with t1 < 1 are finite there
    ak_log = clamp_probability(ak) if t1 == 1.0 else ak
    values = -tempered_log(ak_log, t1) - (1.0 - (a**p).sum(axis=1)) / p
    w = a ** (1.0 - t1 + t2)
    w[r, ks] -= ak ** (t2 - t1)
    s2 = a**t2
    deltas = w - (s2 / s2.sum(axis=1, keepdims=True)) * w.sum(axis=1, keepdims=True)
    return values, deltas


# ---------------------------------------------------------------------------
# Public single-example API.
# ---------------------------------------------------------------------------


def _check_vector(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise ValueError(f"pre-activations must be a vector of length >= 2, got shape {z.shape}")
    if not np.isfinite(z).all():
        raise ValueError("pre-activations must be finite")
    return z


def _check_label(label: int, n_classes: int) -> int:
    label = int(label)
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")
    return label


def _single(kernel, z, label, *params) -> LossEval:
    z = _check_vector(z)
    label = _check_label(label, z.size)
    values, deltas = kernel(z[None, :], np.array([label]), *params)
    return LossEval(float(values[0]), deltas[0])


def ce_eval(z, label) -> LossEval:
    """Cross entropy -log(a_k); delta_n = a_n - [n=k]."""
    return _single(_ce_kernel, z, label)


def mae_eval(z, label) -> LossEval:
    """Mean absolute error 2(1 - a_k); delta_n = 2 a_k (a_n - [n=k])."""
    return _single(_mae_kernel, z, label)


def gence_eval(z, label, q: float = 0.7) -> LossEval:
    """Generalized cross entropy (1 - a_k^q)/q; reduces to 1 - a_k at q = 1."""
    return _single(_gence_kernel, z, label, q)


def symce_eval(z, label, alpha: float, beta: float) -> LossEval:
    """Symmetric cross entropy alpha * CE + beta * MAE."""
    return _single(_symce_kernel, z, label, alpha, beta)


def actpas1_eval(z, label, alpha: float, beta: float) -> LossEval:
    """Active-passive loss with the normalized focal-style active term."""
    return _single(_actpas_kernel, z, label, alpha, beta, True)


def actpas2_eval(z, label, alpha: float, beta: float) -> LossEval:
    """Active-passive loss with the normalized cross-entropy active term."""
    return _single(_actpas_kernel, z, label, alpha, beta, False)


def bitemp_eval(z, label, t1: float = 0.8, t2: float = 1.2) -> LossEval:
    """Bi-tempered logistic loss; recovers cross entropy in the t1 = t2 = 1 limit.

    Accepts any temperatures (the t -> 1 limits are exact), though specs
    constructed through :class:`LossSpec` insist on t1 < 1 < t2.
    """
    return _single(_bitemp_kernel, z, label, t1, t2)


def boundce_eval(z, label) -> LossEval:
    """Bounded cross entropy: CE applied after a second softmax; value < 1 + ln(c)."""
    return _single(_boundce_kernel, z, label)


def apply_output_bias(z, label, epsilon: float) -> np.ndarray:
    """Copy of z with the labelled entry shifted up by epsilon."""
    z = np.asarray(z, dtype=np.float64)
    label = _check_label(label, z.shape[-1])
    out = z.copy()
    out[..., label] += epsilon
    return out


_DISPATCH = {
    "ce": lambda Z, ks, s: _ce_kernel(Z, ks),
    "mae": lambda Z, ks, s: _mae_kernel(Z, ks),
    "gence": lambda Z, ks, s: _gence_kernel(Z, ks, s.q),
    "symce": lambda Z, ks, s: _symce_kernel(Z, ks, s.alpha, s.beta),
    "actpas1": lambda Z, ks, s: _actpas_kernel(Z, ks, s.alpha, s.beta, True),
    "actpas2": lambda Z, ks, s: _actpas_kernel(Z, ks, s.alpha, s.beta, False),
    "bitemp": lambda Z, ks, s: _bitemp_kernel(Z, ks, s.t1, s.t2),
    "boundce": lambda Z, ks, s: _boundce_kernel(Z, ks),
}


def evaluate(spec: LossSpec, z, label) -> LossEval:
    """Apply the spec's output bias, then the kind-specific loss, to one example."""
    z = _check_vector(z)
    label = _check_label(label, z.size)
    if spec.epsilon != 0.0:
        z = apply_output_bias(z, label, spec.epsilon)
    values, deltas = _DISPATCH[spec.kind](z[None, :], np.array([label]), spec)
    return LossEval(float(values[0]), deltas[0])


def evaluate_batch(spec: LossSpec, Z, labels) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`evaluate` over a (batch, classes) pre-activation matrix.

    Returns (values, deltas) with shapes (batch,) and (batch, classes).
    Inputs are assumed finite; training code watches the returned values for
    divergence instead of paying for a check per batch.
    """
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if Z.ndim != 2:
        raise ValueError(f"expected a (batch, classes) matrix, got shape {Z.shape}")
    if labels.shape != (Z.shape[0],):
        raise ValueError(f"labels shape {labels.shape} does not match batch size {Z.shape[0]}")
    if labels.size and (labels.min() < 0 or labels.max() >= Z.shape[1]):
        raise ValueError("labels out of range")
    if spec.epsilon != 0.0:
        Z = Z.copy()
        Z[_rows(labels), labels] += spec.epsilon
    return _DISPATCH[spec.kind](Z, labels, spec)
