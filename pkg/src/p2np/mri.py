"""Multi-coil MRI forward models, trajectories, coil maps and noise.

Conventions
-----------
Images live on an ``(nx, ny)`` grid. Pixel ``p`` along an axis of length
``n`` sits at integer position ``p - n // 2`` and k-space coordinates are in
cycles/pixel, so the uniform grid frequency ``j`` is ``(j - n // 2) / n``.
Both the forward and adjoint transforms carry a ``1/sqrt(N)`` factor, which
makes full Cartesian sampling unitary.

Non-Cartesian transforms are evaluated exactly (no gridding). The 2-D
exponential factorizes per axis, so the O(MN) sum is done as two small
matrix products per coil.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import (ContractError, as_complex_image, as_complex_vector,
                          check_positive, check_random_state)
from .operators import LinearOperator

GOLDEN_ANGLE_DEG = 111.246117975

TRAJECTORY_KINDS = ("cartesian-mask", "radial", "spiral", "custom")


def _wrap(k):
    # k and k - 1 give identical DFT samples on an integer pixel grid
    return (k + 0.5) % 1.0 - 0.5


def _positions(n):
    return np.arange(n) - n // 2


@dataclass(frozen=True)
class Trajectory:
    """k-space sample locations, shape ``(M, 2)`` in cycles/pixel."""

    samples: np.ndarray
    kind: str
    n_spokes: Optional[int] = None
    n_readout: Optional[int] = None
    n_interleaves: Optional[int] = None
    n_turns: Optional[float] = None
    lines: Optional[np.ndarray] = None
    grid_shape: Optional[tuple] = None
    clamped: bool = False

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[1] != 2 or samples.shape[0] == 0:
            raise ContractError("trajectory samples must be a nonempty (M, 2) array")
        if np.any(samples < -0.5) or np.any(samples >= 0.5):
            raise ContractError("trajectory coordinates must lie in [-0.5, 0.5)")
        if self.kind not in TRAJECTORY_KINDS:
            raise ContractError(f"unknown trajectory kind {self.kind!r}")
        if self.kind == "radial":
            if self.n_spokes is None or self.n_readout is None:
                raise ContractError("radial trajectory needs n_spokes and n_readout")
            if self.n_spokes * self.n_readout != samples.shape[0]:
                raise ContractError("n_spokes * n_readout must equal the sample count")
        if self.kind == "cartesian-mask" and (self.lines is None or self.grid_shape is None):
            raise ContractError("cartesian mask needs lines and grid_shape")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def kx(self):
        return self.samples[:, 0]

    @property
    def ky(self):
        return self.samples[:, 1]


def make_radial_trajectory(n_spokes, n_readout, golden_angle=True):
    """Radial spokes through the k-space centre.

    Readout points run from -0.5 to just under +0.5 along each diameter;
    spoke ``j`` is rotated by ``j`` golden angles, or by ``j * 180 / n_spokes``
    degrees when ``golden_angle`` is false.
    """
    if n_spokes < 1 or n_readout < 2:
        raise ContractError("need n_spokes >= 1 and n_readout >= 2")
    radii = -0.5 + np.arange(n_readout) / n_readout
    step = GOLDEN_ANGLE_DEG if golden_angle else 180.0 / n_spokes
    angles = np.deg2rad(np.arange(n_spokes) * step)
    kx = np.outer(np.cos(angles), radii).ravel()
    ky = np.outer(np.sin(angles), radii).ravel()
    samples = _wrap(np.stack([kx, ky], axis=1))
    return Trajectory(samples, "radial", n_spokes=int(n_spokes),
                      n_readout=int(n_readout))


def make_spiral_trajectory(n_interleaves, n_readout, grid_size=None):
    """Archimedean spiral interleaves, ``r = t / 2`` for ``t`` in [0, 1).

    With ``grid_size`` the number of turns is ``grid_size / (2 n_interleaves)``
    which puts adjacent arms one Nyquist step apart at the edge; otherwise a
    single turn is used.
    """
    if n_interleaves < 1 or n_readout < 2:
        raise ContractError("need n_interleaves >= 1 and n_readout >= 2")
    n_turns = 1.0 if grid_size is None else grid_size / (2.0 * n_interleaves)
    t = np.arange(n_readout) / n_readout
    r = 0.5 * t
    theta = 2 * np.pi * n_turns * t
    offsets = 2 * np.pi * np.arange(n_interleaves) / n_interleaves
    ang = theta[None, :] + offsets[:, None]
    kx = (r[None, :] * np.cos(ang)).ravel()
    ky = (r[None, :] * np.sin(ang)).ravel()
    samples = _wrap(np.stack([kx, ky], axis=1))
    return Trajectory(samples, "spiral", n_interleaves=int(n_interleaves),
                      n_readout=int(n_readout), n_turns=float(n_turns))


def make_cartesian_mask(n_x, n_y, accel, center_fraction=0.08, seed=0):
    """Phase-encode line mask: a fully sampled centre band plus random lines.

    Lines are indexed along ``ky``; each kept line is fully sampled in ``kx``.
    About ``n_y / accel`` lines are kept in total. When the centre band alone
    exceeds that budget the band is kept and ``clamped`` is set.
    """
    if accel < 1:
        raise ContractError("accel must be >= 1")
    if not 0 <= center_fraction <= 1:
        raise ContractError("center_fraction must be in [0, 1]")
    rng = check_random_state(seed)
    target = int(round(n_y / accel))
    n_center = int(math.ceil(center_fraction * n_y))
    clamped = False
    if n_center > target:
        warnings.warn("centre band exceeds the line budget; keeping the band")
        target = n_center
        clamped = True
    if target > n_y:
        target = n_y
        clamped = True
    start = n_y // 2 - n_center // 2
    center = np.arange(start, start + n_center)
    rest = np.setdiff1d(np.arange(n_y), center)
    extra = rng.choice(rest, size=target - n_center, replace=False) if target > n_center else []
    lines = np.sort(np.concatenate([center, np.asarray(extra, dtype=int)])).astype(int)
    kx = (_positions(n_x) / n_x)
    ky = (lines - n_y // 2) / n_y
    samples = np.stack([np.tile(kx, len(lines)), np.repeat(ky, n_x)], axis=1)
    lines.setflags(write=False)
    return Trajectory(samples, "cartesian-mask", lines=lines,
                      grid_shape=(int(n_x), int(n_y)), clamped=clamped)


@dataclass(frozen=True)
class CoilSet:
    """Coil sensitivity maps, shape ``(L, nx, ny)``."""

    maps: np.ndarray

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim != 3:
            raise ContractError("coil maps must have shape (L, nx, ny)")
        maps.setflags(write=False)
        object.__setattr__(self, "maps", maps)

    @property
    def L(self):
        return self.maps.shape[0]

    @property
    def shape(self):
        return self.maps.shape[1:]

    def normalization_residual(self):
        return float(np.max(np.abs(np.sum(np.abs(self.maps) ** 2, axis=0) - 1.0)))


def gaussian_bump_profiles(L, n_x, n_y):
    """Unnormalized coil profiles: Gaussian bumps on a ring around the FOV.

    Coil ``l`` is centred at angle ``2 pi l / L`` on the ellipse through the
    FOV edges, has width ``max(n_x, n_y) / 2`` pixels and constant phase
    equal to its angle.
    """
    if L < 1:
        raise ContractError("need at least one coil")
    px = _positions(n_x)[:, None].astype(float)
    py = _positions(n_y)[None, :].astype(float)
    width = 0.5 * max(n_x, n_y)
    out = np.empty((L, n_x, n_y), dtype=np.complex128)
    for l in range(L):
        phi = 2 * np.pi * l / L
        cx, cy = 0.5 * n_x * np.cos(phi), 0.5 * n_y * np.sin(phi)
        d2 = (px - cx) ** 2 + (py - cy) ** 2
        out[l] = np.exp(-d2 / (2 * width ** 2)) * np.exp(1j * phi)
    return out


def synth_sensitivity_maps(L, n_x, n_y):
    """Smooth synthetic coil maps normalized so ``sum_l |C_l|^2 = 1``."""
    raw = gaussian_bump_profiles(L, n_x, n_y)
    norm = np.sqrt(np.sum(np.abs(raw) ** 2, axis=0))
    return CoilSet(raw / norm)


class ForwardModel(LinearOperator):
    """Stacked multi-coil sampling operator ``A = [M F C_1; ...; M F C_L]``.

    Parameters
    ----------
    trajectory : Trajectory
    coils : CoilSet
        Maps must match ``shape``.
    shape : tuple of int, optional
        Image grid; defaults to the coil map grid.

    Notes
    -----
    Data are ordered coil-major: block ``l`` holds the ``M`` samples of coil
    ``l``. ``gram`` uses an exact Toeplitz embedding of ``F^H M^H M F`` on a
    doubled grid instead of a forward/adjoint round trip.
    """

    def __init__(self, trajectory, coils, shape=None):
        shape = tuple(coils.shape if shape is None else shape)
        if tuple(coils.shape) != shape:
            raise ContractError(f"coil maps have shape {coils.shape}, grid is {shape}")
        self.trajectory = trajectory
        self.coils = coils
        self.grid_shape = shape
        self.n_pixels = shape[0] * shape[1]
        self.samples_per_coil = trajectory.n_samples
        self.norm = 1.0 / math.sqrt(self.n_pixels)
        super().__init__(self.samples_per_coil * coils.L, self.n_pixels)
        nx, ny = shape
        if trajectory.kind == "cartesian-mask":
            if tuple(trajectory.grid_shape) != shape:
                raise ContractError("Cartesian mask grid does not match the image grid")
            self._cartesian = True
            mask = np.zeros(shape, dtype=bool)
            mask[:, trajectory.lines] = True
            self._mask = mask
        else:
            self._cartesian = False
            self._ex = np.exp(-2j * np.pi * np.outer(trajectory.kx, _positions(nx)))
            self._ey = np.exp(-2j * np.pi * np.outer(trajectory.ky, _positions(ny)))
            self._psf_hat = self._toeplitz_kernel()

    @property
    def n_coils(self):
        return self.coils.L

    def _toeplitz_kernel(self):
        nx, ny = self.grid_shape
        dx = np.arange(-(nx - 1), nx)
        dy = np.arange(-(ny - 1), ny)
        gx = np.exp(2j * np.pi * np.outer(self.trajectory.kx, dx))
        gy = np.exp(2j * np.pi * np.outer(self.trajectory.ky, dy))
        h = (gx.T @ gy) / self.n_pixels
        circ = np.zeros((2 * nx, 2 * ny), dtype=np.complex128)
        circ[np.ix_(dx % (2 * nx), dy % (2 * ny))] = h
        return np.fft.fft2(circ)

    def _fft(self, imgs):
        return np.fft.fftshift(
            np.fft.fft2(np.fft.ifftshift(imgs, axes=(-2, -1)), norm="ortho"),
            axes=(-2, -1))

    def _ifft(self, ks):
        return np.fft.fftshift(
            np.fft.ifft2(np.fft.ifftshift(ks, axes=(-2, -1)), norm="ortho"),
            axes=(-2, -1))

    def _matvec(self, x):
        imgs = self.coils.maps * x.reshape(self.grid_shape)[None]
        if self._cartesian:
            k = self._fft(imgs)[:, :, self.trajectory.lines]
            # sample order: line-major, kx fastest
            return np.swapaxes(k, 1, 2).reshape(-1)
        out = np.sum(np.matmul(self._ex, imgs) * self._ey[None], axis=2)
        return (out * self.norm).reshape(-1)

    def _rmatvec(self, y):
        L = self.n_coils
        blocks = y.reshape(L, self.samples_per_coil)
        if self._cartesian:
            nx, ny = self.grid_shape
            k = np.zeros((L, nx, ny), dtype=np.complex128)
            k[:, :, self.trajectory.lines] = np.swapaxes(
                blocks.reshape(L, len(self.trajectory.lines), nx), 1, 2)
            imgs = self._ifft(k)
        else:
            weighted = blocks[:, :, None] * self._ey.conj()[None]
            imgs = np.matmul(self._ex.conj().T, weighted) * self.norm
        return np.sum(self.coils.maps.conj() * imgs, axis=0).reshape(-1)

    def gram(self, x):
        x = as_complex_vector(x, self.n_pixels)
        nx, ny = self.grid_shape
        imgs = self.coils.maps * x.reshape(self.grid_shape)[None]
        if self._cartesian:
            back = self._ifft(self._fft(imgs) * self._mask[None])
        else:
            pad = np.zeros((self.n_coils, 2 * nx, 2 * ny), dtype=np.complex128)
            pad[:, :nx, :ny] = imgs
            conv = np.fft.ifft2(np.fft.fft2(pad) * self._psf_hat[None])
            back = conv[:, :nx, :ny]
        return np.sum(self.coils.maps.conj() * back, axis=0).reshape(-1)

    def forward(self, x):
        """Image (grid-shaped or flat) -> stacked k-space vector."""
        return self.apply(as_complex_image(x, self.grid_shape).reshape(-1))

    def backward(self, y):
        """Adjoint, returned as a grid-shaped image."""
        return self.adjoint(y).reshape(self.grid_shape)


def forward(model, x):
    return model.forward(x)


def adjoint(model, y):
    return model.backward(y)


def add_noise(y, variance, seed=0):
    """Add circular complex Gaussian noise of total variance ``variance``."""
    check_positive(variance, "variance", strict=False)
    y = np.asarray(y, dtype=np.complex128)
    if variance == 0:
        return y.copy()
    rng = check_random_state(seed)
    scale = math.sqrt(variance / 2.0)
    noise = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
    return y + scale * noise


def radial_density_weights(traj):
    """Ramp (``|k|``) density weights for a radial trajectory, summing to 1.

    Samples at the k-space centre get ``1 / (2 n_readout)``, half of one
    readout step.
    """
    if traj.kind != "radial":
        raise ContractError(f"density weights need a radial trajectory, got {traj.kind!r}")
    radius = np.hypot(traj.kx, traj.ky)
    w = radius.copy()
    w[radius < 1e-12] = 1.0 / (2 * traj.n_readout)
    return w / np.sum(w)


def ramp_density_weights(traj):
    """``|k|`` ramp for any non-Cartesian trajectory, summing to 1.

    A heuristic for spirals and user-supplied trajectories, whose sampling
    density also falls off roughly like ``1/|k|``. Samples at the centre get
    half the smallest nonzero radius.
    """
    if traj.kind == "radial":
        return radial_density_weights(traj)
    if traj.kind == "cartesian-mask":
        raise ContractError("Cartesian masks need no density compensation")
    radius = np.hypot(traj.kx, traj.ky)
    nonzero = radius[radius >= 1e-12]
    if nonzero.size == 0:
        raise ContractError("all samples sit at the k-space centre")
    w = radius.copy()
    w[radius < 1e-12] = 0.5 * nonzero.min()
    return w / np.sum(w)


def density_compensated_adjoint(model, y, weights):
    """``A^H (w * y)`` with per-sample weights shared across coils, times M."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (model.samples_per_coil,):
        raise ContractError(
            f"weights have length {weights.size}, expected {model.samples_per_coil}")
    y = as_complex_vector(y, model.range_dim, name="y")
    wy = (y.reshape(model.n_coils, -1) * weights[None]).reshape(-1)
    return model.backward(wy) * model.samples_per_coil


def acceleration_factor_radial(n_full, n_acquired):
    """Fully sampled spoke count over acquired spokes."""
    check_positive(n_full, "n_full")
    check_positive(n_acquired, "n_acquired")
    return n_full / n_acquired


def acceleration_factor_spiral(matrix_size, n_interleaves):
    """Nyquist interleave count ``pi * matrix_size`` over acquired interleaves."""
    check_positive(matrix_size, "matrix_size")
    check_positive(n_interleaves, "n_interleaves")
    return math.pi * matrix_size / n_interleaves
