"""File formats: k-space data, trajectory CSV and 16-bit PGM images."""

import csv

import numpy as np

from ._validation import ContractError
from .mri import TRAJECTORY_KINDS, Trajectory

KSPACE_MAGIC = "P2NPKSP1"
TRAJECTORY_HEADER = ("kx", "ky")
PGM_MAXVAL = 65535
IMAGE_MODES = ("magnitude", "error5")


def write_kspace(path, y, grid_shape, n_coils, kind):
    """Write multi-coil samples with a one-line text header.

    The header is ``P2NPKSP1 <nx> <ny> <coils> <samples_per_coil> <kind>``
    followed by a newline, then ``(re, im)`` pairs as little-endian float64,
    coil-major.
    """
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    if kind not in TRAJECTORY_KINDS:
        raise ContractError(f"unknown trajectory kind {kind!r}")
    if n_coils < 1 or y.size % n_coils:
        raise ContractError(f"{y.size} samples do not split over {n_coils} coils")
    nx, ny = (int(v) for v in grid_shape)
    header = f"{KSPACE_MAGIC} {nx} {ny} {n_coils} {y.size // n_coils} {kind}\n"
    data = np.empty(2 * y.size, dtype="<f8")
    data[0::2] = y.real
    data[1::2] = y.imag
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(data.tobytes())


def read_kspace(path):
    """Return ``(y, meta)`` where ``meta`` holds grid_shape, n_coils, samples_per_coil, kind."""
    with open(path, "rb") as fh:
        raw = fh.read()
    end = raw.find(b"\n")
    if end < 0:
        raise ContractError(f"{path}: missing k-space header")
    fields = raw[:end].decode("ascii", errors="replace").split()
    if len(fields) != 6 or fields[0] != KSPACE_MAGIC:
        raise ContractError(f"{path}: not a {KSPACE_MAGIC} file")
    try:
        nx, ny, coils, per_coil = (int(v) for v in fields[1:5])
    except ValueError:
        raise ContractError(f"{path}: malformed header {raw[:end]!r}") from None
    payload = raw[end + 1:]
    expected = 16 * coils * per_coil
    if len(payload) != expected:
        raise ContractError(f"{path}: expected {expected} data bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype="<f8")
    y = data[0::2] + 1j * data[1::2]
    meta = {"grid_shape": (nx, ny), "n_coils": coils,
            "samples_per_coil": per_coil, "kind": fields[5]}
    return y, meta


def write_trajectory_csv(path, traj):
    samples = traj.samples if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for kx, ky in samples:
            w.writerow([repr(float(kx)), repr(float(ky))])


def read_trajectory_csv(path, grid_shape=None):
    """Load a ``kx,ky`` CSV as a ``custom`` :class:`Trajectory`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(c.strip() for c in rows[0]) != TRAJECTORY_HEADER:
        raise ContractError(f"{path}: trajectory CSV must start with header 'kx,ky'")
    pts = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            pts.append((float(row[0]), float(row[1])))
        except (ValueError, IndexError):
            raise ContractError(f"{path}:{lineno}: expected two numbers, got {row!r}") from None
    if not pts:
        raise ContractError(f"{path}: no samples")
    return Trajectory(np.array(pts), kind="custom",
                      grid_shape=None if grid_shape is None else tuple(grid_shape))


def quantize_image(img, mode="magnitude", peak=1.0):
    """Map ``|img|`` (times 5 in ``error5`` mode) from ``[0, peak]`` to 16-bit integers."""
    if mode not in IMAGE_MODES:
        raise ContractError(f"unknown image mode {mode!r}; choose from {IMAGE_MODES}")
    if not peak > 0:
        raise ContractError("peak must be > 0")
    mag = np.abs(np.asarray(img))
    if mag.ndim != 2:
        raise ContractError("images must be 2-D")
    if mode == "error5":
        mag = 5.0 * mag
    scaled = np.clip(mag / peak, 0.0, 1.0) * PGM_MAXVAL
    return np.rint(scaled).astype(np.uint16)


def write_image_pgm(img, path, mode="magnitude", peak=1.0):
    """Binary 16-bit PGM (``P5``, maxval 65535, big-endian), rows = first axis."""
    q = quantize_image(img, mode, peak)
    rows, cols = q.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n{PGM_MAXVAL}\n".encode("ascii"))
        fh.write(q.astype(">u2").tobytes())


def read_image_pgm(path):
    """Read a binary 16-bit PGM written by :func:`write_image_pgm`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ContractError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise ContractError(f"{path}: not a binary PGM")
    cols, rows, maxval = (int(t) for t in tokens[1:])
    if maxval != PGM_MAXVAL:
        raise ContractError(f"{path}: expected maxval {PGM_MAXVAL}, found {maxval}")
    data = np.frombuffer(raw[pos:pos + 2 * rows * cols], dtype=">u2")
    if data.size != rows * cols:
        raise ContractError(f"{path}: truncated pixel data")
    return data.reshape(rows, cols).astype(np.uint16)
