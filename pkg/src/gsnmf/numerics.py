"""Special functions and closed-form gamma/Dirichlet/multinomial expectations.

Everything here is a pure function of its arguments: no state, no sampling,
safe to call from any thread. ``digamma`` and ``log_gamma`` are implemented
natively (upward recurrence to x >= 8, then an asymptotic tail) so the test
suite can certify them against a slow high-precision oracle.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "log_gamma",
    "digamma",
    "gamma_expectations",
    "multinomial_expected_counts",
    "dirichlet_expected_log",
]

_RECURRENCE_CUTOFF = 8.0
_HALF_LOG_TWO_PI = 0.5 * np.log(2.0 * np.pi)

# B_{2n} / (2n (2n-1)) for the Stirling tail of log-gamma, n = 1..7.
_LOG_GAMMA_TAIL = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)

# B_{2n} / (2n) for the asymptotic tail of digamma, n = 1..7.
_DIGAMMA_TAIL = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


def _as_positive_array(x, name: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError(f"{name} requires finite inputs > 0")
    return arr, scalar


def _kahan_add(total, comp, term):
    # Compensated accumulation; the recurrence terms 1/x can dominate the
    # final value near the lower end of the domain, so plain summation would
    # eat most of the 1e-12 budget.
    y = term - comp
    t = total + y
    comp = (t - total) - y
    return t, comp


def log_gamma(x):
    """Natural log of the gamma function for x > 0.

    Accepts scalars or arrays; raises ValueError off the domain.
    """
    arr, scalar = _as_positive_array(x, "log_gamma")
    z = arr.astype(float).ravel().copy()
    shift = np.zeros_like(z)
    comp = np.zeros_like(z)
    small = z < _RECURRENCE_CUTOFF
    while small.any():
        term = np.where(small, np.log(z, where=small, out=np.zeros_like(z)), 0.0)
        shift, comp = _kahan_add(shift, comp, term)
        z = np.where(small, z + 1.0, z)
        small = z < _RECURRENCE_CUTOFF
    # Horner evaluation of the Stirling tail in powers of 1/z^2, times 1/z.
    r = 1.0 / (z * z)
    tail = np.zeros_like(z)
    for coeff in reversed(_LOG_GAMMA_TAIL[1:]):
        tail = (tail + coeff) * r
    tail = (tail + _LOG_GAMMA_TAIL[0]) / z
    out = (z - 0.5) * np.log(z) - z + _HALF_LOG_TWO_PI + tail - shift
    out = out.reshape(arr.shape)
    return float(out) if scalar else out


def digamma(x):
    """Logarithmic derivative of the gamma function for x > 0."""
    arr, scalar = _as_positive_array(x, "digamma")
    z = arr.astype(float).ravel().copy()
    shift = np.zeros_like(z)
    comp = np.zeros_like(z)
    small = z < _RECURRENCE_CUTOFF
    while small.any():
        term = np.where(small, np.reciprocal(z, where=small, out=np.zeros_like(z)), 0.0)
        shift, comp = _kahan_add(shift, comp, term)
        z = np.where(small, z + 1.0, z)
        small = z < _RECURRENCE_CUTOFF
    r = 1.0 / (z * z)
    tail = np.zeros_like(z)
    for coeff in reversed(_DIGAMMA_TAIL[1:]):
        tail = (tail + coeff) * r
    tail = (tail + _DIGAMMA_TAIL[0]) * r
    out = np.log(z) - 0.5 / z - tail - shift
    out = out.reshape(arr.shape)
    return float(out) if scalar else out


def gamma_expectations(a, b):
    """Mean, log-mean and entropy of Gamma(shape a, scale b).

    Returns (a*b, digamma(a) + log b, -(a-1)*digamma(a) + log b + a + lgamma(a)).
    The log-mean is always strictly below log(mean) (Jensen).
    """
    a_arr, scalar_a = _as_positive_array(a, "gamma shape")
    b_arr, scalar_b = _as_positive_array(b, "gamma scale")
    mean = a_arr * b_arr
    psi_a = digamma(a_arr)
    log_b = np.log(b_arr)
    log_mean = psi_a + log_b
    entropy = -(a_arr - 1.0) * psi_a + log_b + a_arr + log_gamma(a_arr)
    if scalar_a and scalar_b:
        return float(mean), float(log_mean), float(entropy)
    return mean, log_mean, entropy


def multinomial_expected_counts(total, probs, tol: float = 1e-12):
    """Expected per-cell counts total * probs of a multinomial draw.

    ``total`` may be any nonnegative real (counts are extended continuously).
    ``probs`` must be nonnegative and sum to 1 within ``tol``; the output is
    renormalized so it sums to ``total`` regardless of rounding in the input.
    """
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0.0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and >= 0")
    s = p.sum()
    if abs(s - 1.0) > tol:
        raise ValueError(f"probabilities sum to {s!r}, expected 1 within {tol}")
    total = float(total)
    if total < 0.0 or not np.isfinite(total):
        raise ValueError("total must be a finite nonnegative real")
    return total * (p / s)


def dirichlet_expected_log(u):
    """Expected log of a Dirichlet(u) variable: digamma(u_c) - digamma(sum u)."""
    u_arr, _ = _as_positive_array(u, "dirichlet parameter")
    if u_arr.ndim != 1:
        raise ValueError("expected a 1-D parameter vector")
    return digamma(u_arr) - digamma(float(u_arr.sum()))
