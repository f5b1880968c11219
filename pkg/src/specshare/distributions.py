"""Special functions and random variates for Beta, Gamma, Dirichlet and
stick-breaking constructions.

All samplers take an explicit ``numpy.random.Generator`` so that draws are
reproducible and callers own their generator state.
"""

import math

import numpy as np


def digamma(x):
    """Digamma function, valid for positive arguments.

    Uses upward recurrence to push the argument above 8 and then the
    asymptotic (Bernoulli) series. Accurate to ~1e-13 absolute for
    x >= 1e-6. Accepts scalars or arrays.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
        raise ValueError("digamma requires strictly positive finite arguments")
    y = arr.copy()
    shift = np.zeros_like(y)
    while True:
        small = y < 8.0
        if not np.any(small):
            break
        shift[small] -= 1.0 / y[small]
        y[small] += 1.0
    inv = 1.0 / y
    inv2 = inv * inv
    # Psi(y) ~ ln y - 1/(2y) - sum B_2n / (2n y^2n)
    series = inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (
        1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12))))))
    out = shift + np.log(y) - 0.5 * inv - series
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out)
    return out


def _gamma_unit_rate(shape, rng):
    """Marsaglia-Tsang draw from Gamma(shape, 1) for shape >= 1."""
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        z = rng.standard_normal()
        v = 1.0 + c * z
        if v <= 0.0:
            continue
        v = v * v * v
        u = rng.random()
        if u < 1.0 - 0.0331 * z ** 4:
            return d * v
        if math.log(u) < 0.5 * z * z + d * (1.0 - v + math.log(v)):
            return d * v


def sample_gamma(shape, rate, rng):
    """Draw one variate from Gamma(shape, rate) with mean shape/rate."""
    if shape <= 0.0 or rate <= 0.0:
        raise ValueError("gamma parameters must be strictly positive")
    if shape < 1.0:
        # boost: draw shape+1 and scale back by U^(1/shape)
        x = _gamma_unit_rate(shape + 1.0, rng)
        u = rng.random()
        while u == 0.0:
            u = rng.random()
        x *= u ** (1.0 / shape)
    else:
        x = _gamma_unit_rate(shape, rng)
    return x / rate


def sample_beta(first, second, rng):
    """Draw one variate from Beta(first, second), strictly inside (0, 1)."""
    if first <= 0.0 or second <= 0.0:
        raise ValueError("beta parameters must be strictly positive")
    x = sample_gamma(first, 1.0, rng)
    y = sample_gamma(second, 1.0, rng)
    v = x / (x + y)
    eps = 1e-15
    return min(max(v, eps), 1.0 - eps)


def sample_dirichlet(params, rng):
    """Draw a probability vector from Dirichlet(params)."""
    params = np.asarray(params, dtype=float)
    if params.ndim != 1 or params.size == 0 or np.any(params <= 0.0):
        raise ValueError("dirichlet parameters must be a vector of positive reals")
    draws = np.array([sample_gamma(p, 1.0, rng) for p in params])
    return draws / draws.sum()


def stick_breaking_weights(portions):
    """Turn break portions in (0,1) into a proper probability vector.

    The leftover mass prod(1 - V_j) is appended as the final weight, so the
    output has len(portions) + 1 entries and sums to exactly 1.
    """
    portions = np.asarray(portions, dtype=float)
    if portions.ndim != 1:
        raise ValueError("portions must be a 1-d sequence")
    if np.any(portions <= 0.0) or np.any(portions >= 1.0):
        raise ValueError("portions must lie strictly inside (0, 1)")
    weights = np.empty(portions.size + 1)
    remaining = 1.0
    for i, v in enumerate(portions):
        piece = remaining * v
        weights[i] = piece
        remaining -= piece  # keeps the running sum exact in floating point
    weights[-1] = remaining
    return weights


def validate_simplex(weights, tol=1e-12):
    """Check the probability-vector invariants, returning the array."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("simplex vector must be a non-empty 1-d array")
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise ValueError("simplex weights must lie in [0, 1]")
    if abs(w.sum() - 1.0) > tol:
        raise ValueError("simplex weights must sum to 1 within %g" % tol)
    return w


def log_density_beta(value, first, second):
    if first <= 0.0 or second <= 0.0:
        raise ValueError("beta parameters must be strictly positive")
    if not 0.0 < value < 1.0:
        raise ValueError("beta density requires value in (0, 1)")
    return (math.lgamma(first + second) - math.lgamma(first) - math.lgamma(second)
            + (first - 1.0) * math.log(value)
            + (second - 1.0) * math.log1p(-value))


def log_density_gamma(value, shape, rate):
    if shape <= 0.0 or rate <= 0.0:
        raise ValueError("gamma parameters must be strictly positive")
    if value <= 0.0:
        raise ValueError("gamma density requires a positive value")
    return (shape * math.log(rate) - math.lgamma(shape)
            + (shape - 1.0) * math.log(value) - rate * value)


def log_density_dirichlet(values, params):
    params = np.asarray(params, dtype=float)
    values = np.asarray(values, dtype=float)
    if params.shape != values.shape or params.ndim != 1:
        raise ValueError("values and parameters must be matching vectors")
    if np.any(params <= 0.0):
        raise ValueError("dirichlet parameters must be strictly positive")
    if np.any(values <= 0.0) or np.any(values > 1.0):
        raise ValueError("dirichlet density requires interior simplex points")
    if abs(values.sum() - 1.0) > 1e-9:
        raise ValueError("dirichlet density requires a simplex point")
    norm = math.lgamma(params.sum()) - sum(math.lgamma(p) for p in params)
    return norm + float(np.sum((params - 1.0) * np.log(values)))
