"""Shared oracles for the test suite.

The finite-difference helpers only ever consume loss *values*, so they stay
independent of the analytic delta formulas they are used to check.
"""
import numpy as np

from robustloss.losses import evaluate_batch

# Central differences with step 1e-5 carry ~1e-9 of roundoff on O(1) loss
# values; ATOL absorbs that floor while RTOL pins the accuracy of the
# analytic formulas on every entry that is not vanishingly small.
FD_STEP = 1e-5
FD_RTOL = 1e-6
FD_ATOL = 1e-8


def central_difference_delta(value_fn, z, h=FD_STEP):
    """Central-difference gradient of a scalar loss value at a single z."""
    z = np.asarray(z, dtype=np.float64)
    grad = np.zeros_like(z)
    for i in range(z.size):
        zp = z.copy()
        zp[i] += h
        zm = z.copy()
        zm[i] -= h
        grad[i] = (value_fn(zp) - value_fn(zm)) / (2.0 * h)
    return grad


def fd_delta_batch(spec, Z, ks, h=FD_STEP):
    """Central-difference deltas for a whole batch in one vectorized call."""
    B, c = Z.shape
    P = np.repeat(Z[:, None, :], 2 * c, axis=1)
    eye = np.eye(c) * h
    P[:, :c, :] += eye
    P[:, c:, :] -= eye
    values, _ = evaluate_batch(spec, P.reshape(B * 2 * c, c), np.repeat(ks, 2 * c))
    V = values.reshape(B, 2, c)
    return (V[:, 0, :] - V[:, 1, :]) / (2.0 * h)


def assert_delta_matches_fd(spec, Z, ks, rtol=FD_RTOL, atol=FD_ATOL):
    _, analytic = evaluate_batch(spec, Z, ks)
    numeric = fd_delta_batch(spec, Z, ks)
    err = np.abs(analytic - numeric)
    tol = atol + rtol * np.abs(numeric)
    worst = float((err - tol).max())
    assert worst <= 0.0, (
        f"{spec.kind}: analytic delta disagrees with finite differences by "
        f"{err.max():.3e} (allowance exceeded by {worst:.3e})"
    )
