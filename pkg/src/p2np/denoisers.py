"""Analytic denoisers with certifiable Lipschitz constants.

A denoiser maps a complex image to a complex image of the same shape.
``declared_lipschitz`` is the constant ``1 + eps`` it guarantees (``None`` if
unknown), ``norm_equivariant`` states ``D(mu x + c 1) = mu D(x) + c 1`` and
``linear`` enables exact spectral Lipschitz estimation.
"""

from typing import NamedTuple

import numpy as np

from ._validation import ContractError, check_positive, check_random_state
from .operators import HermitianOperator, power_method


class Denoiser:
    declared_lipschitz = None
    norm_equivariant = False
    linear = False

    def denoise(self, x, sigma=None):
        raise NotImplementedError

    def __call__(self, x, sigma=None):
        return self.denoise(x, sigma)

    def adjoint_denoise(self, x, sigma=None):
        """Adjoint of a linear denoiser; the shipped ones are self-adjoint."""
        if not self.linear:
            raise ContractError("adjoint only exists for linear denoisers")
        return self.denoise(x, sigma)


class IdentityDenoiser(Denoiser):
    declared_lipschitz = 1.0
    norm_equivariant = True
    linear = True

    def denoise(self, x, sigma=None):
        return np.array(x, dtype=np.complex128, copy=True)

    def __repr__(self):
        return "IdentityDenoiser()"


class CallableDenoiser(Denoiser):
    """Wrap an external image-in/image-out callable ``fn(x, sigma)``."""

    def __init__(self, fn, declared_lipschitz=None, norm_equivariant=False, linear=False):
        self.fn = fn
        self.declared_lipschitz = declared_lipschitz
        self.norm_equivariant = norm_equivariant
        self.linear = linear

    def denoise(self, x, sigma=None):
        return np.asarray(self.fn(x, sigma), dtype=np.complex128)


def gaussian_kernel(width, shape, truncate=3.0):
    """Truncated Gaussian taps laid out for circular convolution on ``shape``.

    Taps within ``ceil(truncate * width)`` pixels of the origin (per axis,
    wrapped) are kept; the kernel is normalized to sum to one.
    """
    radius = int(np.ceil(truncate * width))
    out = np.zeros(shape, dtype=np.float64)
    offsets = [np.arange(-min(radius, n // 2), min(radius, (n - 1) // 2) + 1)
               for n in shape]
    ox, oy = np.meshgrid(*offsets, indexing="ij")
    taps = np.exp(-(ox ** 2 + oy ** 2) / (2.0 * width ** 2))
    out[ox % shape[0], oy % shape[1]] = taps
    return out / out.sum()


class ConvDenoiser(Denoiser):
    """Circular convolution with a normalized, nonnegative Gaussian kernel.

    Nonnegative taps summing to one give operator norm exactly one, and the
    map is linear with unit row sums, hence normalization-equivariant. The
    ``sigma`` passed to ``denoise`` is ignored; strength is the kernel width.
    """

    declared_lipschitz = 1.0
    norm_equivariant = True
    linear = True

    def __init__(self, width, shape):
        self.width = check_positive(width, "width")
        self.shape = tuple(shape)
        self.kernel = gaussian_kernel(self.width, self.shape)
        self.kernel_hat = np.fft.fft2(self.kernel)

    def denoise(self, x, sigma=None):
        x = np.asarray(x, dtype=np.complex128)
        img = x.reshape(self.shape)
        out = np.fft.ifft2(np.fft.fft2(img) * self.kernel_hat)
        return out.reshape(x.shape)

    def adjoint_denoise(self, x, sigma=None):
        x = np.asarray(x, dtype=np.complex128)
        out = np.fft.ifft2(np.fft.fft2(x.reshape(self.shape)) * self.kernel_hat.conj())
        return out.reshape(x.shape)

    def __repr__(self):
        return f"ConvDenoiser(width={self.width}, shape={self.shape})"


class WienerDenoiser(Denoiser):
    """Per-frequency Wiener gain ``s / (s + sigma^2)`` in the DFT domain.

    ``prior_spectrum`` has the image shape in unshifted FFT order; an entry of
    ``inf`` means that frequency passes unchanged. The filter is
    normalization-equivariant only when the DC gain is one.
    """

    linear = True

    def __init__(self, prior_spectrum, sigma):
        s = np.asarray(prior_spectrum, dtype=np.float64)
        if np.any(s < 0):
            raise ContractError("prior spectrum must be nonnegative")
        self.prior_spectrum = s
        self.sigma = check_positive(sigma, "sigma", strict=False)
        gain = self.gain(self.sigma)
        self.declared_lipschitz = float(np.max(gain))
        self.norm_equivariant = bool(gain.flat[0] == 1.0)

    def gain(self, sigma):
        s = self.prior_spectrum
        var = float(sigma) ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(np.isinf(s), 1.0, s / (s + var))
        # s = 0 and sigma = 0 is the identity limit
        return np.where(np.isnan(g), 1.0, g)

    def denoise(self, x, sigma=None):
        sigma = self.sigma if sigma is None else sigma
        x = np.asarray(x, dtype=np.complex128)
        img = x.reshape(self.prior_spectrum.shape)
        out = np.fft.ifft2(np.fft.fft2(img) * self.gain(sigma))
        return out.reshape(x.shape)

    def rescaled(self, mu):
        """Wiener filter for the signal ``x / mu``: prior ``s / mu^2``, noise ``sigma / mu``."""
        mu = check_positive(mu, "mu")
        return WienerDenoiser(self.prior_spectrum / mu ** 2, self.sigma / mu)

    def __repr__(self):
        return f"WienerDenoiser(sigma={self.sigma}, shape={self.prior_spectrum.shape})"


class SoftThresholdDenoiser(Denoiser):
    """Complex soft-thresholding, the prox of ``threshold * ||x||_1``."""

    declared_lipschitz = 1.0
    norm_equivariant = False
    linear = False

    def __init__(self, threshold):
        self.threshold = check_positive(threshold, "threshold", strict=False)

    def denoise(self, x, sigma=None):
        x = np.asarray(x, dtype=np.complex128)
        mag = np.abs(x)
        with np.errstate(invalid="ignore", divide="ignore"):
            shrink = np.where(mag > 0, np.maximum(0.0, 1.0 - self.threshold / mag), 0.0)
        return x * shrink

    def __repr__(self):
        return f"SoftThresholdDenoiser(threshold={self.threshold})"


def conv_denoiser(kernel_width_sigma, shape):
    return ConvDenoiser(kernel_width_sigma, shape)


def wiener_denoiser(prior_spectrum, sigma):
    return WienerDenoiser(prior_spectrum, sigma)


def soft_threshold_denoiser(threshold):
    return SoftThresholdDenoiser(threshold)


class LipschitzEstimate(NamedTuple):
    value: float
    is_lower_bound: bool


def estimate_lipschitz(d, shape, sigma=None, n_probes=64, seed=0):
    """Estimate the Lipschitz constant of denoiser ``d`` on images of ``shape``.

    Linear denoisers get their operator norm from power iteration on
    ``D^H D``. Otherwise the largest difference quotient over seeded random
    pairs at several separations is returned, which is only a lower bound.
    """
    if n_probes < 1:
        raise ContractError("n_probes must be >= 1")
    shape = tuple(shape)
    n = int(np.prod(shape))
    if d.linear:
        def normal(v):
            return d.adjoint_denoise(d.denoise(v.reshape(shape), sigma), sigma).reshape(-1)

        res = power_method(HermitianOperator(n, normal), tol=1e-14,
                           max_iter=20000, seed=seed)
        return LipschitzEstimate(float(np.sqrt(max(res.lambda_max, 0.0))), False)

    rng = check_random_state(seed)
    best = 0.0
    for scale in (1e-3, 1e-1, 1.0, 10.0):
        for _ in range(n_probes):
            x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            dx = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
            num = np.linalg.norm(d.denoise(x + dx, sigma) - d.denoise(x, sigma))
            best = max(best, num / np.linalg.norm(dx))
    return LipschitzEstimate(float(best), True)


def check_norm_equivariance(d, x, mu, delta, sigma=None):
    """Relative deviation from ``D(mu x + delta 1) = mu D(x) + delta 1``."""
    check_positive(mu, "mu")
    x = np.asarray(x, dtype=np.complex128)
    dx = d.denoise(x, sigma)
    lhs = d.denoise(mu * x + delta, sigma)
    rhs = mu * dx + delta
    denom = mu * np.linalg.norm(dx) + abs(delta) * np.sqrt(x.size) + np.finfo(float).eps
    return float(np.linalg.norm(lhs - rhs) / denom)


def scaled_denoise(d, mu, x, sigma=None):
    """``(1 / mu) D(mu x)``: the MMSE denoiser for noise level ``sigma / mu``."""
    mu = check_positive(mu, "mu")
    return d.denoise(mu * np.asarray(x, dtype=np.complex128), sigma) / mu
