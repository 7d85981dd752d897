"""Strang split-step Fourier propagator used as ground truth."""

import logging

import numpy as np

from .errors import BoxTooSmallError, InvalidInputError
from .grid import WavefunctionGrid, l2_distance

logger = logging.getLogger(__name__)

__all__ = ["split_step_propagate", "boundary_mass", "l2_distance"]


def boundary_mass(psi, fraction=1 / 32):
    """Probability mass in the outer ``fraction`` of the box along every axis."""
    mask = np.zeros(psi.grid.shape, dtype=bool)
    for ax, n in enumerate(psi.grid.shape):
        m = max(1, int(round(n * fraction)))
        sl = [slice(None)] * psi.d
        sl[ax] = np.r_[0:m, n - m:n]
        mask[tuple(sl)] = True
    return float(np.sum(np.abs(psi.samples[mask]) ** 2) * psi.grid.cell)


def split_step_propagate(pot, psi0, t_final, dt=None, boundary_tol=1e-8, n_checks=10):
    """
    Propagate ``i eps dpsi/dt = -eps^2/2 Lap psi + V psi`` to ``t_final``.

    Each step applies ``exp(-i dt V / 2eps)``, the kinetic factor
    ``exp(-i dt eps |k|^2 / 2)`` in Fourier space and ``exp(-i dt V / 2eps)``
    again. The step is shortened so that an integer number of steps lands on
    ``t_final``; negative ``t_final`` runs backwards.

    Parameters
    ----------
    pot : Potential
    psi0 : WavefunctionGrid
    t_final : float
    dt : float, optional
        Default ``eps / 50``.
    boundary_tol : float
        Mass allowed in the outer 1/32 of the box before giving up.

    Raises
    ------
    BoxTooSmallError
        When the boundary mass exceeds ``boundary_tol`` at a checkpoint.
    """
    eps = psi0.eps
    if dt is None:
        dt = eps / 50
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    if not psi0.grid.is_pow2():
        raise InvalidInputError("reference grid needs a power of two points per axis")
    if t_final == 0:
        return psi0.copy()
    n = int(np.ceil(abs(t_final) / dt - 1e-9))
    h = t_final / n

    x = psi0.grid.points()
    V = pot.value(x).reshape(psi0.grid.shape)
    half = np.exp(-0.5j * h * V / eps)
    ks = np.meshgrid(*psi0.grid.wavenumbers(), indexing="ij")
    k2 = sum(k * k for k in ks)
    kin = np.exp(-0.5j * h * eps * k2)

    every = max(1, n // n_checks)
    psi = psi0.samples.copy()
    for step in range(1, n + 1):
        psi = half * np.fft.ifftn(kin * np.fft.fftn(half * psi))
        if step % every == 0 or step == n:
            bm = boundary_mass(WavefunctionGrid(psi0.grid, psi, eps))
            if bm > boundary_tol:
                raise BoxTooSmallError(
                    f"boundary mass {bm:.2e} > {boundary_tol:g} at t={step * h:g}")
    return WavefunctionGrid(psi0.grid, psi, eps)
