"""Input validation helpers shared by the public API."""

import numpy as np


class ContractError(ValueError):
    """Raised when an argument violates an operation's precondition."""


def as_complex_vector(x, n=None, name="x"):
    """Return ``x`` as a flat complex128 array, optionally checking its length."""
    arr = np.asarray(x, dtype=np.complex128)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if n is not None and arr.shape[0] != n:
        raise ContractError(f"{name} has length {arr.shape[0]}, expected {n}")
    return arr


def as_complex_image(x, shape, name="x"):
    """Return ``x`` as a complex128 array of the given grid shape.

    Flat vectors of the right size are reshaped; anything else must match
    ``shape`` exactly.
    """
    arr = np.asarray(x, dtype=np.complex128)
    shape = tuple(shape)
    if arr.shape == shape:
        return arr
    if arr.ndim == 1 and arr.size == int(np.prod(shape)):
        return arr.reshape(shape)
    raise ContractError(f"{name} has shape {arr.shape}, expected {shape}")


def check_finite(x, name="x"):
    if not np.all(np.isfinite(x)):
        raise ContractError(f"{name} contains non-finite entries")
    return x


def check_positive(value, name, strict=True):
    value = float(value)
    if strict and not value > 0:
        raise ContractError(f"{name} must be > 0, got {value}")
    if not strict and not value >= 0:
        raise ContractError(f"{name} must be >= 0, got {value}")
    return value


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
