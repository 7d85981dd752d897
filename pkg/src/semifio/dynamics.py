"""
Classical flow, monodromy, action and leading-order prefactor.

Every node of a phase-space lattice is integrated simultaneously with a
fixed-step classical RK4 scheme acting on the full state

    (X, Xi, S, A, B, C, D, u)

where ``(A, B, C, D)`` are the blocks of the Jacobian of the flow (see
:mod:`semifio.symplectic` for the convention) and ``u`` solves the prefactor
transport equation ``du/dt = 1/2 tr[Y^{-1} dY/dt] u``. Independently,
``sqrt(det Y)`` is tracked on the time-continuous branch after every step;
the two must agree.
"""

import csv
from dataclasses import dataclass, field
import logging
import warnings

import numpy as np

from .errors import (IntegrationAccuracyError, InvalidInputError,
                     StepTooLargeError)
from .lattice import QuadratureSpec
from .symplectic import (BranchTracker, SymplecticBlocks, as_spreading,
                         branch_sqrt_det, cal_Y, symplectic_defect)

logger = logging.getLogger(__name__)

__all__ = [
    "Potential", "make_potential", "POTENTIALS", "PhasePoint", "StepControl",
    "TrajectoryState", "BundleSnapshot", "TrajectoryGridBundle",
    "integrate_trajectory", "integrate_bundle", "integrate_nodes",
    "action_gradient_check", "write_trajectory_csv", "LatticeFlow", "QuadraticFlow",
]


# -- potentials -------------------------------------------------------------

@dataclass
class Potential:
    """
    Smooth potential with vectorised evaluators.

    ``value(x)``, ``gradient(x)`` and ``hessian(x)`` take ``x`` of shape
    ``(N, d)`` and return shapes ``(N,)``, ``(N, d)`` and ``(N, d, d)``.
    ``certificate`` maps a derivative order ``k >= 2`` to a claimed bound on
    ``sup |d^k V|``; it is spot-checked, never proved.
    """

    name: str
    d: int
    value: callable
    gradient: callable
    hessian: callable
    params: dict = field(default_factory=dict)
    certificate: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.value(np.atleast_2d(x))

    def energy(self, X, Xi):
        return 0.5 * np.sum(Xi * Xi, axis=-1) + self.value(X)

    def self_test(self, n=100, rng=None, scale=3.0, rtol=1e-6):
        """
        Compare the gradient with central differences of the value at random
        points and check the Hessian symmetry and the certificate bound on
        second derivatives. Returns the worst relative gradient error.
        """
        rng = np.random.default_rng(rng)
        x = scale * rng.standard_normal((n, self.d))
        g = self.gradient(x)
        h = 1e-5
        fd = np.empty_like(g)
        for j in range(self.d):
            e = np.zeros(self.d)
            e[j] = h
            fd[:, j] = (self.value(x + e) - self.value(x - e)) / (2 * h)
        err = np.max(np.abs(fd - g) / (1e-3 + np.abs(g)))
        if err > rtol * 1e3:
            raise InvalidInputError(f"{self.name}: gradient disagrees with value ({err:.2e})")
        H = self.hessian(x)
        if np.max(np.abs(H - np.swapaxes(H, -1, -2))) > 1e-12:
            raise InvalidInputError(f"{self.name}: Hessian not symmetric")
        bound = self.certificate.get(2)
        if bound is not None and np.max(np.abs(H)) > bound * (1 + 1e-12):
            warnings.warn(f"{self.name}: sampled |Hess V| exceeds certificate {bound}")
        return float(err)


def _free(d=1):
    return Potential(
        "free", d,
        value=lambda x: np.zeros(x.shape[0]),
        gradient=lambda x: np.zeros_like(x, dtype=float),
        hessian=lambda x: np.zeros((x.shape[0], d, d)),
        certificate={2: 0.0})


def _harmonic(d=1, omega=1.0):
    w2 = float(omega) ** 2
    return Potential(
        "harmonic", d,
        value=lambda x: 0.5 * w2 * np.sum(x * x, axis=-1),
        gradient=lambda x: w2 * x,
        hessian=lambda x: np.broadcast_to(w2 * np.eye(d), (x.shape[0], d, d)).copy(),
        params={"omega": float(omega)},
        certificate={2: w2})


def _cosine(d=1, amplitude=1.0, wavenumber=1.0):
    a, k = float(amplitude), float(wavenumber)

    def hessian(x):
        H = np.zeros((x.shape[0], d, d))
        idx = np.arange(d)
        H[:, idx, idx] = -a * k * k * np.cos(k * x)
        return H

    return Potential(
        "cosine", d,
        value=lambda x: a * np.sum(np.cos(k * x), axis=-1),
        gradient=lambda x: -a * k * np.sin(k * x),
        hessian=hessian,
        params={"amplitude": a, "wavenumber": k},
        certificate={m: abs(a) * abs(k) ** m for m in range(2, 7)})


def _gaussian_barrier(d=1, height=1.0, width=1.0):
    h, w2 = float(height), float(width) ** 2

    def value(x):
        return h * np.exp(-0.5 * np.sum(x * x, axis=-1) / w2)

    def gradient(x):
        return -(x / w2) * value(x)[:, None]

    def hessian(x):
        v = value(x)[:, None, None]
        outer = x[:, :, None] * x[:, None, :] / (w2 * w2)
        return v * (outer - np.eye(d) / w2)

    return Potential(
        "gaussian-barrier", d, value, gradient, hessian,
        params={"height": h, "width": float(width)},
        certificate={2: abs(h) * 2.0 / w2})


POTENTIALS = {
    "free": _free,
    "harmonic": _harmonic,
    "cosine": _cosine,
    "gaussian-barrier": _gaussian_barrier,
}


def make_potential(name, d=1, **params):
    """Build a registered potential: ``free``, ``harmonic``, ``cosine``, ``gaussian-barrier``."""
    try:
        factory = POTENTIALS[name]
    except KeyError:
        raise InvalidInputError(f"unknown potential {name!r}; known: {sorted(POTENTIALS)}") from None
    return factory(d=d, **params)


# -- trajectory data ----------------------------------------------------------

@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if q.shape != p.shape or q.ndim != 1:
            raise InvalidInputError("q and p must be d-vectors of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise InvalidInputError("phase point has non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class StepControl:
    """
    Fixed-step RK4 settings.

    A step whose determinant argument moves by ``pi/2`` or more is retried
    with the step halved, at most ``max_halvings`` times.
    """

    dt: float = 1e-3
    max_halvings: int = 20
    energy_tol: float = 1e-8
    symplectic_tol: float = 1e-6
    monodromy_max: float = 1e12


@dataclass(frozen=True)
class TrajectoryState:
    t: float
    X: np.ndarray
    Xi: np.ndarray
    S: float
    F: SymplecticBlocks
    u0: complex
    tracker: BranchTracker
    u0_ode: complex
    defect: float


@dataclass(frozen=True)
class BundleSnapshot:
    """
    All lattice trajectories at one time.

    Node arrays have a leading axis of length ``N``; ``y`` and ``eta`` are the
    initial points, ``theta`` the spreading matrix attached to each node and
    ``quad`` the lattice they came from.
    """

    t: float
    y: np.ndarray
    eta: np.ndarray
    X: np.ndarray
    Xi: np.ndarray
    S: np.ndarray
    F: SymplecticBlocks
    u0: np.ndarray
    u0_ode: np.ndarray
    theta: np.ndarray
    quad: QuadratureSpec = None

    @property
    def n_nodes(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def Y(self):
        return cal_Y(self.F, self.theta)

    def defect(self):
        return symplectic_defect(self.F)

    def node(self, i):
        return TrajectoryState(
            t=self.t, X=self.X[i], Xi=self.Xi[i], S=float(self.S[i]), F=self.F[i],
            u0=complex(self.u0[i]), tracker=None, u0_ode=complex(self.u0_ode[i]),
            defect=float(symplectic_defect(self.F[i])))


@dataclass(frozen=True)
class TrajectoryGridBundle:
    quad: QuadratureSpec
    times: tuple
    snapshots: tuple

    def at(self, t):
        for s in self.snapshots:
            if abs(s.t - t) <= 1e-12 * max(1.0, abs(t)):
                return s
        raise KeyError(f"time {t} not in bundle (have {self.times})")

    def __getitem__(self, k):
        return self.snapshots[k]

    def __len__(self):
        return len(self.snapshots)


# -- the integrator -----------------------------------------------------------

def _rhs(pot, theta, X, Xi, S, A, B, C, D, u):
    H = pot.hessian(X)
    dX = Xi
    dXi = -pot.gradient(X)
    dS = 0.5 * np.sum(Xi * Xi, axis=-1) - pot.value(X)
    dA, dB = C, D
    dC = -H @ A
    dD = -H @ B
    Bt = np.swapaxes(B, -1, -2)
    Dt = np.swapaxes(D, -1, -2)
    Y = Dt - 1j * (Bt @ theta)
    dY = -(Bt @ H) - 1j * (Dt @ theta)
    if Y.shape[-1] == 1:
        tr = dY[:, 0, 0] / Y[:, 0, 0]
    else:
        tr = np.trace(np.linalg.solve(Y, dY), axis1=-2, axis2=-1)
    du = 0.5 * tr * u
    return dX, dXi, dS, dA, dB, dC, dD, du


def _rk4(pot, theta, state, h):
    def add(s, k, c):
        return tuple(a + c * b for a, b in zip(s, k))

    k1 = _rhs(pot, theta, *state)
    k2 = _rhs(pot, theta, *add(state, k1, 0.5 * h))
    k3 = _rhs(pot, theta, *add(state, k2, 0.5 * h))
    k4 = _rhs(pot, theta, *add(state, k3, h))
    return tuple(s + (h / 6.0) * (a + 2 * b + 2 * c + e)
                 for s, a, b, c, e in zip(state, k1, k2, k3, k4))


def _step_tracked(pot, theta, state, tracker, h, halvings_left):
    """One step of size ``h``, halving recursively if the branch guard trips."""
    new = _rk4(pot, theta, state, h)
    F = SymplecticBlocks(*new[3:7])
    try:
        _, tr = branch_sqrt_det(tracker, cal_Y(F, theta))
    except StepTooLargeError:
        if halvings_left <= 0:
            raise
        logger.debug("branch guard tripped at h=%g, halving", h)
        mid, tr_mid = _step_tracked(pot, theta, state, tracker, 0.5 * h, halvings_left - 1)
        return _step_tracked(pot, theta, mid, tr_mid, 0.5 * h, halvings_left - 1)
    return new, tr


def integrate_nodes(pot, y, eta, theta, times, step=None):
    """
    Integrate the flow from the nodes ``(y, eta)`` (shape ``(N, d)``).

    Parameters
    ----------
    pot : Potential
    y, eta : ndarray, shape (N, d)
    theta : ndarray, shape (N, d, d) or (d, d)
        Spreading matrix used in the prefactor; constant in time.
    times : sequence of float
        Non-decreasing output times starting at 0.
    step : StepControl

    Returns
    -------
    list of dict
        One dict of node arrays per output time.
    """
    step = step or StepControl()
    y = np.atleast_2d(np.asarray(y, dtype=float))
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    N, d = y.shape
    if eta.shape != (N, d):
        raise InvalidInputError("y and eta node arrays differ in shape")
    if d != pot.d:
        raise InvalidInputError(f"potential is {pot.d}-dimensional, nodes are {d}-dimensional")
    theta = np.broadcast_to(np.asarray(theta, dtype=complex), (N, d, d)).copy()
    times = [float(t) for t in times]
    if not times or times[0] != 0.0 or np.any(np.diff(times) < 0):
        raise InvalidInputError("times must be non-decreasing and start at 0")
    if not step.dt > 0:
        raise InvalidInputError("time step must be positive")

    F0 = SymplecticBlocks.identity(d, (N,))
    state = (y.copy(), eta.copy(), np.zeros(N), F0.A, F0.B, F0.C, F0.D,
             np.ones(N, dtype=complex))
    tracker = BranchTracker.start(cal_Y(F0, theta))
    e0 = pot.energy(y, eta)

    out = []
    t = 0.0
    for t_out in times:
        span = t_out - t
        n = int(np.ceil(span / step.dt - 1e-9)) if span > 0 else 0
        for _ in range(n):
            state, tracker = _step_tracked(pot, theta, state, tracker, span / n,
                                           step.max_halvings)
        t = t_out
        X, Xi, S, A, B, C, D, u = state
        F = SymplecticBlocks(A, B, C, D)
        mono = float(np.max(np.abs(F.matrix())))
        if mono > step.monodromy_max or not np.isfinite(mono):
            raise IntegrationAccuracyError(f"monodromy overflow at t={t:g}: |F| = {mono:.3g}")
        drift = np.abs(pot.energy(X, Xi) - e0) / (1.0 + np.abs(e0))
        if np.max(drift) > step.energy_tol:
            raise IntegrationAccuracyError(
                f"energy drift {np.max(drift):.2e} > {step.energy_tol:g} at t={t:g}")
        defect = symplectic_defect(F)
        if np.max(defect / np.maximum(1.0, mono ** 2)) > step.symplectic_tol:
            raise IntegrationAccuracyError(
                f"symplectic defect {np.max(defect):.2e} at t={t:g}")
        u_branch = np.sqrt(np.abs(tracker.last_det)) * np.exp(0.5j * tracker.unwrapped_arg)
        out.append(dict(t=t, X=X.copy(), Xi=Xi.copy(), S=S.copy(), F=F, u0=u_branch,
                        u0_ode=u.copy(), theta=theta, tracker=tracker, defect=defect))
    return out


def integrate_trajectory(pot, z0, theta, times, step=None):
    """
    Flow, monodromy, action and prefactor along one trajectory.

    ``theta`` may be a matrix, a :class:`~semifio.symplectic.ConstantSpreading`
    or a :class:`~semifio.symplectic.FieldSpreading` (evaluated once at ``z0``).
    Returns one :class:`TrajectoryState` per requested time.
    """
    if not isinstance(z0, PhasePoint):
        z0 = PhasePoint(*z0)
    spreading = as_spreading(theta)
    th = spreading.at(z0.q[None], z0.p[None])
    snaps = integrate_nodes(pot, z0.q[None], z0.p[None], th, times, step)
    states = []
    for s in snaps:
        states.append(TrajectoryState(
            t=s["t"], X=s["X"][0], Xi=s["Xi"][0], S=float(s["S"][0]), F=s["F"][0],
            u0=complex(s["u0"][0]),
            tracker=BranchTracker(s["tracker"].unwrapped_arg[0], s["tracker"].last_det[0]),
            u0_ode=complex(s["u0_ode"][0]), defect=float(s["defect"][0])))
    return states


def integrate_bundle(pot, quad, theta, times, step=None):
    """
    Integrate every node of the lattice described by ``quad``.

    Nodes are independent; they are advanced together as one vectorised
    system. Errors are re-raised with the box attached.
    """
    if not isinstance(quad, QuadratureSpec):
        raise InvalidInputError("quad must be a QuadratureSpec")
    spreading = as_spreading(theta)
    y, eta = quad.nodes()
    th = spreading.at(y, eta)
    try:
        snaps = integrate_nodes(pot, y, eta, th, times, step)
    except (IntegrationAccuracyError, StepTooLargeError) as exc:
        raise type(exc)(f"{exc} (lattice y_box={quad.y_box}, eta_box={quad.eta_box})") from exc
    shots = tuple(
        BundleSnapshot(t=s["t"], y=y, eta=eta, X=s["X"], Xi=s["Xi"], S=s["S"], F=s["F"],
                       u0=s["u0"], u0_ode=s["u0_ode"], theta=th, quad=quad)
        for s in snaps)
    return TrajectoryGridBundle(quad=quad, times=tuple(float(t) for t in times), snapshots=shots)


def action_gradient_check(pot, z0, t, delta=1e-4, theta=None, step=None):
    """
    Max discrepancy between central differences of the action and the
    closed forms ``dS/dq = -p + A^T Xi`` and ``dS/dp = B^T Xi``.
    """
    if not isinstance(z0, PhasePoint):
        z0 = PhasePoint(*z0)
    d = z0.q.size
    theta = np.eye(d) if theta is None else theta
    shifts = [np.zeros(2 * d)]
    for j in range(2 * d):
        for sgn in (1, -1):
            e = np.zeros(2 * d)
            e[j] = sgn * delta
            shifts.append(e)
    shifts = np.array(shifts)
    y = z0.q + shifts[:, :d]
    eta = z0.p + shifts[:, d:]
    snap = integrate_nodes(pot, y, eta, np.asarray(theta, complex), [0.0, t], step)[-1]
    S = snap["S"]
    fd = np.array([(S[1 + 2 * j] - S[2 + 2 * j]) / (2 * delta) for j in range(2 * d)])
    A, B = snap["F"].A[0], snap["F"].B[0]
    Xi = snap["Xi"][0]
    exact = np.concatenate([-z0.p + A.T @ Xi, B.T @ Xi])
    return float(np.max(np.abs(fd - exact)))


CSV_SCHEMA = "# semifio-trajectory v1"


def write_trajectory_csv(path, states):
    """Dump states to CSV: ``t, X..., Xi..., S, re_u0, im_u0, defect``."""
    d = np.size(states[0].X)
    with open(path, "w", newline="") as fh:
        fh.write(CSV_SCHEMA + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *[f"X{j}" for j in range(d)], *[f"Xi{j}" for j in range(d)],
                    "S", "re_u0", "im_u0", "defect"])
        for s in states:
            w.writerow([repr(float(s.t)), *map(repr, map(float, np.ravel(s.X))),
                        *map(repr, map(float, np.ravel(s.Xi))), repr(float(s.S)),
                        repr(float(np.real(s.u0))), repr(float(np.imag(s.u0))),
                        repr(float(s.defect))])


# -- flow sources ----------------------------------------------------------------

class LatticeFlow:
    """
    Numerically integrated flow of ``pot``; ``snapshot(quad, t)`` integrates
    the lattice on first request and caches the result.
    """

    def __init__(self, pot, theta=None, step=None):
        self.pot = pot
        self.theta = as_spreading(np.eye(pot.d) if theta is None else theta)
        self.step = step or StepControl()
        self._cache = {}

    def bundle(self, quad, times):
        return integrate_bundle(self.pot, quad, self.theta, times, self.step)

    def snapshot(self, quad, t):
        key = (quad, float(t))
        if key not in self._cache:
            self._cache[key] = self.bundle(quad, [0.0, float(t)])[-1]
        return self._cache[key]


class QuadraticFlow:
    """
    Closed-form flow for ``V = omega^2 |x|^2 / 2`` (``omega = 0`` is free motion).

    Positions, momenta, action and Jacobian are exact; the prefactor follows
    ``det Y`` along a fine time sampling so its branch is the continuous one.
    """

    def __init__(self, d=1, omega=1.0, theta=None):
        self.d = d
        self.omega = float(omega)
        self.theta = as_spreading(np.eye(d) if theta is None else theta)

    def _cs(self, t):
        w = self.omega
        c = np.cos(w * t)
        # sin(wt)/w, continuous at w = 0
        s_over_w = t * np.sinc(w * t / np.pi)
        return c, s_over_w, w * w * s_over_w

    def snapshot(self, quad, t):
        t = float(t)
        y, eta = quad.nodes()
        N, d = y.shape
        th = self.theta.at(y, eta)
        c, sw, ws = self._cs(t)
        X = c * y + sw * eta
        Xi = -ws * y + c * eta
        # int_0^t (|Xi|^2 - w^2 |X|^2)/2
        w = self.omega
        qq = np.sum(y * y, axis=1)
        pp = np.sum(eta * eta, axis=1)
        qp = np.sum(y * eta, axis=1)
        # sin(2wt)/(4w)
        quarter_sin2 = 0.5 * t * np.sinc(2 * w * t / np.pi)
        S = (pp - w * w * qq) * quarter_sin2 - w * w * qp * sw * sw
        I = np.broadcast_to(np.eye(d), (N, d, d))
        F = SymplecticBlocks(c * I, sw * I, -ws * I, c * I)
        tracker = None
        n = max(1, int(np.ceil(abs(t) / 0.01)))
        for k in range(n + 1):
            ck, swk, wsk = self._cs(t * k / n)
            Fk = SymplecticBlocks(ck * I, swk * I, -wsk * I, ck * I)
            u0, tracker = branch_sqrt_det(tracker, cal_Y(Fk, th))
        return BundleSnapshot(t=t, y=y, eta=eta, X=X, Xi=Xi, S=S, F=F, u0=u0,
                              u0_ode=u0.copy(), theta=th, quad=quad)
