"""Calibration of the output bias epsilon for bounded losses.

For a freshly initialised network the pre-activations are modelled as
i.i.d. N(0, 1); the expected correct-class activation

    mean_act(c, eps) = E[ softmax(z + eps * e_k)_k ],   z ~ N(0, 1)^c

shrinks like 1/c, starving bounded losses of gradient on many-class tasks.
``solve_bias`` inverts this expectation: given a target mean activation it
returns the epsilon that restores it, using bisection on a Monte-Carlo
estimate evaluated on one shared set of draws (common random numbers), which
makes the estimated curve strictly increasing in epsilon and thus safe to
bisect despite sampling noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BracketError, ConfigError, PrecisionError
from .numerics import RngStream, softmax

_CHUNK = 200_000
_MAX_BISECTIONS = 200


@dataclass(frozen=True)
class BiasProblem:
    """Target specification for :func:`solve_bias`."""

    n_classes: int
    target_mean_activation: float
    n_samples: int = 1_000_000
    tolerance: float = 2e-3
    bracket: tuple[float, float] = (-10.0, 20.0)

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.n_classes}")
        if not 0.0 < self.target_mean_activation < 1.0:
            raise ConfigError(
                f"target mean activation must lie in (0, 1), got {self.target_mean_activation}"
            )
        if self.n_samples < 10_000:
            raise ConfigError(f"need at least 10^4 samples for a usable estimate, got {self.n_samples}")
        if self.tolerance <= 0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if not self.bracket[0] < self.bracket[1]:
            raise ConfigError(f"empty bracket {self.bracket}")


def estimate_mean_correct_activation(
    n_classes: int, epsilon: float, n_samples: int, rng: RngStream
) -> float:
    """Monte-Carlo estimate of E[softmax(z + eps * e_0)_0] with z ~ N(0,1)^c.

    The labelled position is fixed to 0: the z_i are exchangeable, so every
    position gives the same expectation.  At epsilon = 0 the exact value is
    1/c by symmetry.
    """
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    if n_samples < 1:
        raise ConfigError(f"need at least 1 sample, got {n_samples}")
    total = 0.0
    done = 0
    while done < n_samples:
        m = min(_CHUNK, n_samples - done)
        z = rng.generator.standard_normal((m, n_classes))
        z[:, 0] += epsilon
        total += softmax(z, axis=1)[:, 0].sum()
        done += m
    return total / n_samples


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _correct_class_margins(n_classes: int, n_samples: int, rng: RngStream) -> np.ndarray:
    """Per-sample margins w = z_0 - logsumexp(z_1..z_{c-1}).

    The biased correct-class activation collapses to a one-dimensional form,
    softmax(z + eps * e_0)_0 = sigmoid(w + eps), so a single stored margin per
    sample supports any number of bisection evaluations.
    """
    w = np.empty(n_samples)
    done = 0
    while done < n_samples:
        m = min(_CHUNK, n_samples - done)
        z = rng.generator.standard_normal((m, n_classes))
        rest = z[:, 1:]
        mx = rest.max(axis=1)
        w[done : done + m] = z[:, 0] - mx - np.log(np.exp(rest - mx[:, None]).sum(axis=1))
        done += m
    return w


def solve_bias(problem: BiasProblem, rng: RngStream) -> float:
    """Epsilon whose estimated mean correct-class activation hits the target.

    Bisection runs on the empirical expectation over one fixed set of draws,
    which is continuous and strictly increasing in epsilon, and stops once
    the estimate is within ``problem.tolerance`` of the target.
    """
    target = problem.target_mean_activation
    w = _correct_class_margins(problem.n_classes, problem.n_samples, rng)

    def estimate(eps: float) -> float:
        return float(_sigmoid(w + eps).mean())

    lo, hi = problem.bracket
    est_lo, est_hi = estimate(lo), estimate(hi)
    if not est_lo <= target <= est_hi:
        raise BracketError(
            f"target {target} outside the achievable range [{est_lo:.6g}, {est_hi:.6g}] "
            f"of bracket {problem.bracket}"
        )
    for _ in range(_MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        est = estimate(mid)
        if abs(est - target) <= problem.tolerance:
            stderr = float(_sigmoid(w + mid).std() / math.sqrt(problem.n_samples))
            if stderr > problem.tolerance:
                raise PrecisionError(
                    f"Monte-Carlo standard error {stderr:.3g} exceeds tolerance "
                    f"{problem.tolerance}; raise n_samples above {problem.n_samples}"
                )
            return float(mid)
        if est < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, abs(mid)):
            break
    raise PrecisionError(
        f"bisection exhausted without reaching tolerance {problem.tolerance}; "
        f"raise n_samples above {problem.n_samples}"
    )
