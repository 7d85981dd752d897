"""
Small dense linear algebra for symplectic Jacobians.

Block convention
----------------
A Jacobian is stored as four ``d x d`` blocks

    F = [[A, B],
         [C, D]]      A = dX/dq,  B = dX/dp,  C = dXi/dq,  D = dXi/dp

i.e. the ordinary Jacobian of ``(q, p) -> (X, Xi)`` with ``A[k, j] = dX_k/dq_j``.
With this layout ``Y(F; Theta) = D^T - i B^T Theta`` equals
``dXi/deta - i dX/deta Theta`` written with the gradient-row convention
``(X_eta)_{jk} = d X_k / d eta_j``.

All functions accept batched blocks of shape ``(..., d, d)`` and broadcast
over the leading axes, so a whole trajectory lattice is handled in one call.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (InvalidInputError, InvalidSpreadingError,
                     NumericalDegeneracyError, StepTooLargeError)

__all__ = [
    "SymplecticBlocks", "ConstantSpreading", "FieldSpreading", "BranchTracker",
    "J", "symplectic_defect", "cal_Y", "cal_A", "cal_V", "branch_sqrt_det",
    "sqrtm_spd", "random_symplectic", "random_theta", "as_spreading",
    "lemma_identity_residual",
]

# eigenvalues of Re(Theta) below this are rejected
EIG_FLOOR = 1e-12
# cal_A refuses to invert Y beyond this condition number
COND_MAX = 1e12


def _T(M):
    return np.swapaxes(M, -1, -2)


def J(d):
    """Standard symplectic form ``[[0, I], [-I, 0]]`` of size ``2d``."""
    I = np.eye(d)
    Z = np.zeros((d, d))
    return np.block([[Z, I], [-I, Z]])


@dataclass(frozen=True)
class SymplecticBlocks:
    """Jacobian of a phase-space map split into ``d x d`` blocks."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        shapes = {np.shape(M) for M in (self.A, self.B, self.C, self.D)}
        if len(shapes) != 1:
            raise InvalidInputError(f"block shapes differ: {shapes}")
        shape = shapes.pop()
        if len(shape) < 2 or shape[-1] != shape[-2]:
            raise InvalidInputError(f"blocks must be square, got {shape}")

    @property
    def d(self):
        return np.shape(self.A)[-1]

    @classmethod
    def identity(cls, d, batch=()):
        I = np.broadcast_to(np.eye(d), tuple(batch) + (d, d)).copy()
        Z = np.zeros(tuple(batch) + (d, d))
        return cls(I, Z.copy(), Z.copy(), I.copy())

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=float)
        d = M.shape[-1] // 2
        return cls(M[..., :d, :d], M[..., :d, d:], M[..., d:, :d], M[..., d:, d:])

    def matrix(self):
        top = np.concatenate([self.A, self.B], axis=-1)
        bottom = np.concatenate([self.C, self.D], axis=-1)
        return np.concatenate([top, bottom], axis=-2)

    def __matmul__(self, other):
        return SymplecticBlocks.from_matrix(self.matrix() @ other.matrix())

    def __getitem__(self, idx):
        return SymplecticBlocks(self.A[idx], self.B[idx], self.C[idx], self.D[idx])


def symplectic_defect(F):
    """
    Max-norm of ``F^T J F - J``.

    Returns a float for a single Jacobian and an array over the batch axes
    otherwise.
    """
    M = F.matrix()
    if not np.all(np.isfinite(M)):
        raise InvalidInputError("Jacobian has non-finite entries")
    Jd = J(F.d)
    R = _T(M) @ Jd @ M - Jd
    out = np.max(np.abs(R), axis=(-1, -2))
    return float(out) if out.ndim == 0 else out


# -- spreading matrices -------------------------------------------------------

def sqrtm_spd(R):
    """Return ``(R^{1/2}, R^{-1/2})`` of a real symmetric positive definite matrix."""
    R = np.asarray(R, dtype=float)
    w, U = np.linalg.eigh(R)
    if np.any(w < EIG_FLOOR):
        raise InvalidSpreadingError()
    s = np.sqrt(w)
    half = (U * s[..., None, :]) @ _T(U)
    inv_half = (U / s[..., None, :]) @ _T(U)
    return half, inv_half


def _check_theta(theta, tol=1e-12):
    theta = np.asarray(theta, dtype=complex)
    if theta.ndim < 2 or theta.shape[-1] != theta.shape[-2]:
        raise InvalidInputError(f"spreading matrix must be square, got {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise InvalidInputError("spreading matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(theta))))
    if np.max(np.abs(theta - _T(theta))) > tol * scale:
        raise InvalidSpreadingError("admissible spreading violated: not complex symmetric")
    w = np.linalg.eigvalsh(0.5 * (theta.real + _T(theta.real)))
    if np.any(w < EIG_FLOOR):
        raise InvalidSpreadingError("admissible spreading violated: Re(Theta) not positive definite")
    return theta


class ConstantSpreading:
    """Frozen-Gaussian spreading: the same ``Theta`` at every phase-space point."""

    def __init__(self, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=complex))
        self.theta = _check_theta(theta)
        self.d = self.theta.shape[-1]

    def at(self, y, eta):
        """``Theta`` at the nodes ``(y, eta)`` of shape ``(N, d)`` -> ``(N, d, d)``."""
        y = np.atleast_2d(y)
        return np.broadcast_to(self.theta, (y.shape[0], self.d, self.d)).copy()

    @property
    def is_constant(self):
        return True

    def __repr__(self):
        return f"ConstantSpreading({self.theta.tolist()})"


class FieldSpreading:
    """
    Thawed spreading ``Theta(y, eta)`` with a uniform real floor ``Theta0``.

    Parameters
    ----------
    func : callable
        ``func(y, eta)`` with ``y, eta`` of shape ``(N, d)`` returning ``(N, d, d)``
        complex symmetric matrices.
    floor : array_like
        Real symmetric positive definite ``Theta0`` with
        ``v.Re(Theta(y, eta))v >= v.Theta0 v`` for all ``v``.
    """

    def __init__(self, func, floor):
        self.func = func
        floor = np.atleast_2d(np.asarray(floor, dtype=float))
        sqrtm_spd(floor)
        self.floor = floor
        self.d = floor.shape[0]

    def at(self, y, eta):
        y = np.atleast_2d(y)
        eta = np.atleast_2d(eta)
        theta = np.asarray(self.func(y, eta), dtype=complex)
        theta = np.broadcast_to(theta, (y.shape[0], self.d, self.d)).copy()
        return _check_theta(theta)

    def check_floor(self, y, eta, n_probe=20, rng=None):
        """
        Verify the floor on sampled nodes: the smallest eigenvalue of
        ``Re(Theta) - Theta0`` must be non-negative. Returns that eigenvalue.
        """
        theta = self.at(y, eta)
        diff = 0.5 * (theta.real + _T(theta.real)) - self.floor
        lam = float(np.min(np.linalg.eigvalsh(diff)))
        rng = np.random.default_rng(rng)
        v = rng.standard_normal((n_probe, self.d))
        q = np.einsum("pi,nij,pj->np", v, diff, v)
        if lam < -1e-12 or np.any(q < -1e-12):
            raise InvalidSpreadingError("admissible spreading violated: Re(Theta) below floor")
        return lam

    @property
    def is_constant(self):
        return False


def as_spreading(theta):
    """Wrap a bare matrix as :class:`ConstantSpreading`; pass spreadings through."""
    if isinstance(theta, (ConstantSpreading, FieldSpreading)):
        return theta
    return ConstantSpreading(theta)


# -- the matrix-valued functions Y, A, V -------------------------------------

def cal_Y(F, theta):
    """``Y(F; Theta) = D^T - i B^T Theta``."""
    theta = np.asarray(theta, dtype=complex)
    return _T(F.D) - 1j * (_T(F.B) @ theta)


def cal_A(F, theta):
    """
    ``A(F; Theta) = [C^T - i A^T Theta] Y(F; Theta)^{-1}``.

    Note the sign: ``(grad_y - A grad_eta) Phi = -eta`` holds for the phase of
    the FIO; see :func:`semifio.fio.ipp2_residual`.
    """
    theta = np.asarray(theta, dtype=complex)
    Y = cal_Y(F, theta)
    cond = np.linalg.cond(Y)
    if np.any(~np.isfinite(cond)) or np.any(cond > COND_MAX):
        raise NumericalDegeneracyError(
            f"Y(F; Theta) condition number {np.max(cond):.3g} exceeds {COND_MAX:g}")
    top = _T(F.C) - 1j * (_T(F.A) @ theta)
    # X Y^{-1} = (Y^{-T} X^T)^T
    return _T(np.linalg.solve(_T(Y), _T(top)))


def cal_V(F, theta):
    """
    The ``2d x d`` matrix

        V = [[R^{-1/2} Im(Theta), R^{-1/2}], [R^{1/2}, 0]] F [0; I],   R = Re(Theta)

    satisfying ``Y R^{-1} Y^* = V^* V`` whenever ``F`` is symplectic.
    """
    theta = np.asarray(theta, dtype=complex)
    R = 0.5 * (theta.real + _T(theta.real))
    half, inv_half = sqrtm_spd(R)
    top = inv_half @ (theta.imag @ F.B + F.D)
    bottom = half @ F.B
    return np.concatenate([top, bottom], axis=-2).astype(complex)


def lemma_identity_residual(F, theta):
    """Max-norm of ``Y Re(Theta)^{-1} Y^* - V^* V``."""
    theta = np.asarray(theta, dtype=complex)
    Y = cal_Y(F, theta)
    R = 0.5 * (theta.real + _T(theta.real))
    lhs = Y @ np.linalg.solve(R, np.conj(_T(Y)))
    V = cal_V(F, theta)
    rhs = np.conj(_T(V)) @ V
    return np.max(np.abs(lhs - rhs), axis=(-1, -2))


# -- branch-continuous square root -------------------------------------------

@dataclass(frozen=True)
class BranchTracker:
    """Continuously unwrapped ``arg det Y``; arrays allowed for batches."""

    unwrapped_arg: np.ndarray
    last_det: np.ndarray

    @classmethod
    def start(cls, Y):
        """Seed with the principal argument of ``det Y``."""
        det = np.linalg.det(Y)
        return cls(np.angle(det), det)


def branch_sqrt_det(tracker, Y):
    """
    Square root of ``det Y`` on the branch continuous from the tracker's past.

    Parameters
    ----------
    tracker : BranchTracker or None
        ``None`` starts a new branch at the principal value.
    Y : ndarray, shape (..., d, d)

    Returns
    -------
    value : complex or ndarray
    tracker : BranchTracker
        Updated state to pass to the next call.

    Raises
    ------
    StepTooLargeError
        If the argument moved by ``pi/2`` or more since the previous call.
    """
    det = np.linalg.det(Y)
    if tracker is None:
        tracker = BranchTracker.start(Y)
        arg = tracker.unwrapped_arg
    else:
        step = np.angle(det / tracker.last_det)
        if np.any(np.abs(step) >= 0.5 * np.pi) or np.any(~np.isfinite(step)):
            raise StepTooLargeError(
                f"arg det Y jumped by {np.max(np.abs(step)):.3f} rad (limit pi/2)")
        arg = tracker.unwrapped_arg + step
        tracker = BranchTracker(arg, det)
    value = np.sqrt(np.abs(det)) * np.exp(0.5j * arg)
    return value, tracker


# -- test matrices -------------------------------------------------------------

def random_symplectic(d, rng=None, n_factors=6, scale=1.0):
    """
    Random symplectic matrix as a product of shears and rotations.

    Shears ``[[I, S], [0, I]]`` and ``[[I, 0], [S, I]]`` with symmetric ``S`` and
    the rotations ``[[cos, sin], [-sin, cos]]`` are symplectic exactly, so the
    product is symplectic up to rounding.
    """
    rng = np.random.default_rng(rng)
    I = np.eye(d)
    Z = np.zeros((d, d))
    M = np.eye(2 * d)
    for _ in range(n_factors):
        kind = rng.integers(3)
        if kind == 2:
            t = rng.uniform(0, 2 * np.pi)
            G = np.block([[np.cos(t) * I, np.sin(t) * I], [-np.sin(t) * I, np.cos(t) * I]])
        else:
            S = scale * rng.standard_normal((d, d))
            S = 0.5 * (S + S.T)
            G = np.block([[I, S], [Z, I]]) if kind == 0 else np.block([[I, Z], [S, I]])
        M = G @ M
    return SymplecticBlocks.from_matrix(M)


def random_theta(d, rng=None):
    """Random complex symmetric matrix with positive definite real part."""
    rng = np.random.default_rng(rng)
    G = rng.standard_normal((d, d))
    R = G @ G.T + 0.5 * np.eye(d)
    H = rng.standard_normal((d, d))
    return R + 1j * 0.5 * (H + H.T)
