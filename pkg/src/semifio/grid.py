"""
Uniform periodic grids, wavefunctions on them, and the WFGRID01 file format.

Each axis is the half-open box ``[x_min, x_max)`` sampled at ``n`` points
``x_k = x_min + k (x_max - x_min) / n``; samples are stored row-major with the
first axis slowest.
"""

from dataclasses import dataclass
import json
import struct

import numpy as np

from .errors import GridMismatchError, InvalidInputError

__all__ = [
    "Grid", "WavefunctionGrid", "coherent_state", "l2_norm", "l2_distance",
    "write_wfgrid", "read_wfgrid", "MAGIC",
]

MAGIC = b"WFGRID01"
# magic, endianness tag, 3 pad bytes, uint32 d
_HEAD = struct.Struct("<8sc3xI")
_AXIS = struct.Struct("<ddQ")
_EPS = struct.Struct("<d")


@dataclass(frozen=True)
class Grid:
    """Per-axis ``(x_min, x_max, n)`` of a periodic box."""

    axes: tuple

    def __post_init__(self):
        axes = tuple((float(a), float(b), int(n)) for a, b, n in self.axes)
        for a, b, n in axes:
            if not b > a or n < 2:
                raise InvalidInputError(f"bad axis ({a}, {b}, {n})")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def uniform(cls, x_min, x_max, n, d=1):
        return cls(((x_min, x_max, n),) * d)

    @property
    def d(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(n for _, _, n in self.axes)

    @property
    def spacing(self):
        return np.array([(b - a) / n for a, b, n in self.axes])

    @property
    def cell(self):
        return float(np.prod(self.spacing))

    def coords(self):
        """1-D coordinate arrays, one per axis."""
        return [a + (b - a) / n * np.arange(n) for a, b, n in self.axes]

    def points(self):
        """All grid points flattened to shape ``(M, d)``."""
        mesh = np.meshgrid(*self.coords(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def wavenumbers(self):
        """Angular wavenumbers per axis in FFT order."""
        return [2 * np.pi * np.fft.fftfreq(n, d=(b - a) / n) for a, b, n in self.axes]

    def is_pow2(self):
        return all(n & (n - 1) == 0 for n in self.shape)


@dataclass
class WavefunctionGrid:
    """Complex samples of a wavefunction on a :class:`Grid`, with its ``eps``."""

    grid: Grid
    samples: np.ndarray
    eps: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex).reshape(self.grid.shape)
        if not 0 < self.eps <= 1:
            raise InvalidInputError(f"eps must lie in (0, 1], got {self.eps}")

    @property
    def d(self):
        return self.grid.d

    def norm(self):
        return l2_norm(self)

    def copy(self, samples=None):
        return WavefunctionGrid(self.grid, self.samples.copy() if samples is None else samples,
                                self.eps)

    def fourier_coefficients(self):
        return np.fft.fftn(self.samples)

    def interpolate(self, pts, derivative=None):
        """
        Trigonometric interpolation at arbitrary points ``pts`` of shape ``(M, d)``.

        Exact for band-limited periodic data. ``derivative=j`` returns the
        partial derivative along axis ``j`` instead.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        c = self.fourier_coefficients() / np.prod(self.grid.shape)
        ks = self.grid.wavenumbers()
        if derivative is not None:
            c = c * np.expand_dims(1j * ks[derivative],
                                   tuple(a for a in range(self.d) if a != derivative))
        letters = "abcdefgh"[:self.d]
        mats = [np.exp(1j * np.outer(pts[:, ax] - self.grid.axes[ax][0], ks[ax]))
                for ax in range(self.d)]
        spec = letters + "," + ",".join("m" + l for l in letters) + "->m"
        return np.einsum(spec, c, *mats, optimize=True)

    def gradient(self, axis=0):
        """Spectral derivative along ``axis`` on the grid."""
        ks = self.grid.wavenumbers()[axis]
        shape = [1] * self.d
        shape[axis] = -1
        return np.fft.ifftn(1j * ks.reshape(shape) * self.fourier_coefficients())


def coherent_state(grid, q0, p0, eps, width=1.0, phase=0.0):
    """
    ``(pi eps w^2)^{-d/4} exp(-|x-q0|^2 / (2 eps w^2) + i p0.(x-q0)/eps)`` on ``grid``.
    """
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    x = grid.points()
    r = x - q0
    w2 = float(width) ** 2
    psi = (np.pi * eps * w2) ** (-grid.d / 4) * np.exp(
        -np.sum(r * r, axis=1) / (2 * eps * w2) + 1j * (r @ p0) / eps + 1j * phase)
    return WavefunctionGrid(grid, psi.reshape(grid.shape), eps)


def l2_norm(psi):
    return float(np.sqrt(np.sum(np.abs(psi.samples) ** 2) * psi.grid.cell))


def l2_distance(psi1, psi2):
    """Discrete L2 norm of ``psi1 - psi2``; both must live on the same grid."""
    if psi1.grid != psi2.grid:
        raise GridMismatchError(f"grids differ: {psi1.grid.axes} vs {psi2.grid.axes}")
    diff = psi1.samples - psi2.samples
    return float(np.sqrt(np.sum(np.abs(diff) ** 2) * psi1.grid.cell))


# -- WFGRID01 -----------------------------------------------------------------

def _metadata(psi):
    return {
        "format": MAGIC.decode(),
        "d": psi.d,
        "axes": [{"x_min": a, "x_max": b, "n": n} for a, b, n in psi.grid.axes],
        "eps": psi.eps,
        "endianness": "little",
        "dtype": "float64 interleaved (re, im), row-major",
    }


def write_wfgrid(path, psi, sidecar=True):
    """
    Write ``psi`` as a WFGRID01 binary.

    Layout (little endian): 8-byte magic ``WFGRID01``, 1-byte endianness tag
    ``L``, 3 pad bytes, uint32 ``d``; per axis float64 ``x_min``, float64
    ``x_max``, uint64 ``n``; float64 ``eps``; then interleaved float64
    ``(re, im)`` pairs in row-major order. A JSON sidecar ``<path>.json`` with
    the same metadata is written next to it unless ``sidecar`` is false.
    """
    buf = bytearray(_HEAD.pack(MAGIC, b"L", psi.d))
    for a, b, n in psi.grid.axes:
        buf += _AXIS.pack(a, b, n)
    buf += _EPS.pack(psi.eps)
    data = np.ascontiguousarray(psi.samples, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(bytes(buf))
        fh.write(data.tobytes(order="C"))
    if sidecar:
        with open(str(path) + ".json", "w") as fh:
            json.dump(_metadata(psi), fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_wfgrid(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEAD.size or raw[:8] != MAGIC:
        raise InvalidInputError(f"{path}: not a WFGRID01 file")
    _, tag, d = _HEAD.unpack_from(raw, 0)
    if tag != b"L":
        raise InvalidInputError(f"{path}: unsupported endianness tag {tag!r}")
    off = _HEAD.size
    axes = []
    for _ in range(d):
        axes.append(_AXIS.unpack_from(raw, off))
        off += _AXIS.size
    (eps,) = _EPS.unpack_from(raw, off)
    off += _EPS.size
    grid = Grid(tuple(axes))
    count = int(np.prod(grid.shape))
    if len(raw) - off != 16 * count:
        raise InvalidInputError(f"{path}: payload has {len(raw) - off} bytes, expected {16 * count}")
    samples = np.frombuffer(raw, dtype="<c16", count=count, offset=off).reshape(grid.shape)
    return WavefunctionGrid(grid, samples.astype(complex), eps)
