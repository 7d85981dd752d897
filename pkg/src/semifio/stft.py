"""
Short-time Fourier transform with plain and generalized Gaussian windows.

    V_g[f](y, eta) = (2 pi)^{-d/2} int exp(-i eta.x) f(x) conj(g(x - y)) dx

The ``x`` integral is a rectangle sum on the grid of ``f``. With ``y`` on the
grid points and ``eta`` on the FFT wavenumbers, the discrete transform with a
periodically wrapped window is an isometry up to the window norm, so Parseval
holds to rounding.
"""

import csv
from dataclasses import dataclass
import warnings

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "PlainWindow", "GeneralizedWindow", "STFTResult", "stft", "stft_generalized",
    "p_delta", "p0_norm_squared", "gaussian_window", "write_stft_csv",
]

CSV_SCHEMA = "# semifio-stft v1"


@dataclass(frozen=True)
class PlainWindow:
    """Window ``g(x)``; ``func`` maps points ``(M, d)`` to ``(M,)`` complex values."""

    func: callable
    width: float = None

    def __call__(self, r):
        return np.asarray(self.func(r), dtype=complex)


def gaussian_window(theta=1.0, d=1):
    """``G(x) = exp(-x.Theta x / 2)`` for a matrix ``Theta`` with positive real part."""
    theta = np.atleast_2d(np.asarray(theta, dtype=complex))
    if theta.shape == (1, 1) and d > 1:
        theta = theta[0, 0] * np.eye(d)
    if np.any(np.linalg.eigvalsh(theta.real) <= 0):
        raise InvalidInputError("admissible spreading violated: Re(Theta) not positive definite")
    # e^{-x^2 Re/2} drops below 1e-16 at about 8.6 / sqrt(smallest eigenvalue)
    width = 8.6 / np.sqrt(np.min(np.linalg.eigvalsh(theta.real)))

    def G(r):
        return np.exp(-0.5 * np.einsum("mi,ij,mj->m", r, theta, r))

    return PlainWindow(G, width)


@dataclass(frozen=True)
class GeneralizedWindow:
    """
    ``g(x, y, eta) = G(x) gtilde(x, y, eta)`` with a Gaussian ``G``.

    ``gtilde(r, y, eta)`` takes offsets ``r`` of shape ``(M, d)``, one centre
    ``y`` of shape ``(d,)`` and momenta ``eta`` of shape ``(K, d)`` and returns
    ``(M, K)``.
    """

    theta: np.ndarray
    gtilde: callable

    def gaussian(self, d):
        return gaussian_window(self.theta, d)


@dataclass
class STFTResult:
    """Values on the ``(y, eta)`` lattice; ``values[i, k]`` at ``y[i]``, ``eta[k]``."""

    y: np.ndarray
    eta: np.ndarray
    values: np.ndarray
    dy: float
    deta: float

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.dy * self.deta))


def _eta_lattice(grid):
    ks = grid.wavenumbers()
    mesh = np.meshgrid(*ks, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _coverage(window, grid):
    if window.width is None:
        return
    if np.any(window.width > np.array([b - a for a, b, _ in grid.axes])):
        warnings.warn("window is wider than the signal grid",
                      stacklevel=3)


def _offsets(grid, x, y, periodic):
    r = x - y
    if periodic:
        # wrap into the box so windows centred near an edge reappear at the other side
        L = np.array([b - a for a, b, _ in grid.axes])
        r = r - L * np.round(r / L)
    return r


def stft(f, window, y_points=None, periodic=False):
    """
    Short-time Fourier transform of ``f`` with a plain window.

    Parameters
    ----------
    f : WavefunctionGrid
    window : PlainWindow
    y_points : ndarray, optional
        Window centres ``(Ny, d)``; defaults to every grid point.
    periodic : bool
        Wrap ``x - y`` into the box. The discrete transform is then exactly
        norm preserving for any ``f``; without wrapping it matches the
        transform on the whole line for ``f`` that vanishes near the edges.

    Returns
    -------
    STFTResult
        ``eta`` is the FFT wavenumber lattice of ``f``'s grid.
    """
    grid = f.grid
    _coverage(window, grid)
    x = grid.points()
    y = x if y_points is None else np.atleast_2d(y_points)
    eta = _eta_lattice(grid)
    d = grid.d
    x0 = np.array([a for a, _, _ in grid.axes])
    # exp(-i eta.x) = exp(-i eta.x0) * DFT kernel
    shift = np.exp(-1j * eta @ x0)
    pref = (2 * np.pi) ** (-d / 2) * grid.cell
    fs = f.samples.reshape(-1)
    out = np.empty((y.shape[0], eta.shape[0]), dtype=complex)
    for i, yi in enumerate(y):
        h = fs * np.conj(window(_offsets(grid, x, yi, periodic)))
        out[i] = pref * shift * np.fft.fftn(h.reshape(grid.shape)).reshape(-1)
    deta = float(np.prod([2 * np.pi / (b - a) for a, b, _ in grid.axes]))
    return STFTResult(y, eta, out, grid.cell, deta)


def stft_generalized(f, window, y_points=None, periodic=False):
    """
    Transform with an ``(x, y, eta)``-dependent window ``G(x - y) gtilde(x - y, y, eta)``.

    Computed by direct summation, ``O(Ny * Nx * Neta)``.
    """
    grid = f.grid
    d = grid.d
    G = window.gaussian(d)
    _coverage(G, grid)
    x = grid.points()
    y = x if y_points is None else np.atleast_2d(y_points)
    eta = _eta_lattice(grid)
    pref = (2 * np.pi) ** (-d / 2) * grid.cell
    kernel = np.exp(-1j * x @ eta.T)
    fs = f.samples.reshape(-1)
    out = np.empty((y.shape[0], eta.shape[0]), dtype=complex)
    for i, yi in enumerate(y):
        r = _offsets(grid, x, yi, periodic)
        gt = np.asarray(window.gtilde(r, yi, eta), dtype=complex)
        w = np.conj(G(r))[:, None] * np.conj(gt)
        out[i] = pref * np.sum(kernel * (fs[:, None] * w), axis=0)
    deta = float(np.prod([2 * np.pi / (b - a) for a, b, _ in grid.axes]))
    return STFTResult(y, eta, out, grid.cell, deta)


def p_delta(xi, delta):
    """``prod_j (1 - i xi_j)^{-(1 + delta_j)}`` with ``delta_j`` in ``{0, 1}``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    delta = np.atleast_1d(np.asarray(delta, dtype=int))
    if xi.shape[-1] != delta.shape[-1]:
        raise InvalidInputError("xi and delta lengths differ")
    if np.any((delta != 0) & (delta != 1)):
        raise InvalidInputError("delta entries must be 0 or 1")
    return np.prod((1 - 1j * xi) ** (-(1.0 + delta)), axis=-1)


def p0_norm_squared(d=1, L=1e4, h=0.02):
    """
    ``||p_0||^2`` over ``R^d`` by the trapezoid rule on ``[-L, L]`` plus the
    exact tail ``2 (pi/2 - arctan L)``; the integral factorises over axes.
    """
    xi = np.linspace(-L, L, int(round(2 * L / h)) + 1)
    vals = np.abs(p_delta(xi[:, None], [0])) ** 2
    one_d = np.trapezoid(vals, xi) + 2 * (0.5 * np.pi - np.arctan(L))
    return float(one_d ** d)


def write_stft_csv(path, result):
    """Columns ``y0.., eta0.., re, im`` after a versioned header comment."""
    d = result.y.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write(CSV_SCHEMA + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*[f"y{j}" for j in range(d)], *[f"eta{j}" for j in range(d)], "re", "im"])
        for i, yi in enumerate(result.y):
            for k, ek in enumerate(result.eta):
                v = result.values[i, k]
                w.writerow([*map(repr, map(float, yi)), *map(repr, map(float, ek)),
                            repr(float(v.real)), repr(float(v.imag))])
