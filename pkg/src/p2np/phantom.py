"""Synthetic ground-truth images."""

import numpy as np

from ._validation import ContractError, check_random_state

# intensity, semi-axis a, semi-axis b, x0, y0, rotation (deg); Toft's
# modified Shepp-Logan, the common contrast-enhanced variant
SHEPP_LOGAN_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)

PHANTOM_KINDS = ("shepp-logan", "blobs")
PHASE_KINDS = ("none", "smooth")


def pixel_coordinates(size):
    """``(x, y)`` grids in [-1, 1); pixel ``size // 2`` maps to 0, y points up."""
    c = 2.0 * (np.arange(size) - size // 2) / size
    y, x = np.meshgrid(-c, c, indexing="ij")
    return x, y


def ellipse_sum(x, y, ellipses=SHEPP_LOGAN_ELLIPSES):
    out = np.zeros(np.broadcast(x, y).shape)
    for amp, a, b, x0, y0, phi in ellipses:
        t = np.deg2rad(phi)
        dx, dy = x - x0, y - y0
        xr = dx * np.cos(t) + dy * np.sin(t)
        yr = -dx * np.sin(t) + dy * np.cos(t)
        out = out + amp * ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0)
    return out


def _blobs(size, seed):
    rng = check_random_state(seed)
    x, y = pixel_coordinates(size)
    img = np.zeros((size, size))
    for _ in range(8):
        r, ang = 0.6 * np.sqrt(rng.uniform()), rng.uniform(0, 2 * np.pi)
        cx, cy = r * np.cos(ang), r * np.sin(ang)
        w = rng.uniform(0.05, 0.2)
        img += rng.uniform(0.3, 1.0) * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * w ** 2))
    return img


def make_phantom(size, kind="shepp-logan", phase="none", seed=0):
    """Complex ``size x size`` test image with maximum magnitude 1.

    ``phase="smooth"`` multiplies by a slowly varying quadratic phase.
    ``seed`` only affects ``kind="blobs"``.
    """
    if size < 8:
        raise ContractError("phantom size must be >= 8")
    if kind == "shepp-logan":
        x, y = pixel_coordinates(size)
        mag = ellipse_sum(x, y)
    elif kind == "blobs":
        mag = _blobs(size, seed)
    else:
        raise ContractError(f"unknown phantom kind {kind!r}; choose from {PHANTOM_KINDS}")
    mag = mag / np.max(np.abs(mag))
    if phase == "none":
        return mag.astype(np.complex128)
    if phase == "smooth":
        x, y = pixel_coordinates(size)
        ph = (np.pi / 3) * (x ** 2 + 0.5 * y ** 2 + 0.5 * x)
        return mag * np.exp(1j * ph)
    raise ContractError(f"unknown phase option {phase!r}; choose from {PHASE_KINDS}")
