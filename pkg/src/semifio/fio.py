"""
Phase-space quadrature of the semiclassical Fourier integral operator

    [I(kappa; u; Theta) phi](x) = (2 pi eps)^{-d} sum_n exp(i Phi_n(x) / eps)
                                   u(x, y_n, eta_n) phi(y_n) sigma(eta_n / lam) dy deta

with the complex quadratic phase

    Phi_n(x) = S_n + Xi_n.(x - X_n) + (i/2) (x - X_n).Theta_n (x - X_n),

where ``(X_n, Xi_n, S_n)`` is the flowed lattice node ``n``. Plus numerical
checks of the identities the operator satisfies.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
import logging
import warnings

import numpy as np

from .errors import GridMismatchError, InvalidInputError
from .grid import Grid, WavefunctionGrid, coherent_state, l2_distance, l2_norm
from .lattice import QuadratureSpec, mollifier
from .dynamics import BundleSnapshot
from .symplectic import FieldSpreading, as_spreading, cal_A, cal_Y

logger = logging.getLogger(__name__)

__all__ = [
    "SymbolOne", "HKSymbol", "NodeSymbol", "PolynomialTest", "CallableSymbol",
    "phase", "apply_fio", "rescale_snapshot", "rescaling_check", "ipp_residual",
    "ipp2_residual", "mollifier_independence", "MollifierReport",
    "empirical_operator_norm", "NormReport", "thawed_splitting_check",
    "auto_quadrature",
]

# rows of the x grid evaluated together; fixed so results never depend on --threads
CHUNK = 64
# nodes whose weight is below this fraction of the largest are skipped
PRUNE = 1e-18


# -- symbols --------------------------------------------------------------------

class SymbolOne:
    """``u = 1``."""

    x_dependent = False

    def nodes(self, snap):
        return np.ones(snap.n_nodes, dtype=complex)


class HKSymbol:
    """Leading-order prefactor ``sqrt(det Y)`` carried by the trajectories."""

    x_dependent = False

    def __init__(self, source="branch"):
        if source not in ("branch", "ode"):
            raise InvalidInputError("source must be 'branch' or 'ode'")
        self.source = source

    def nodes(self, snap):
        return snap.u0 if self.source == "branch" else snap.u0_ode


class NodeSymbol:
    """An x-independent symbol given by its values at the lattice nodes."""

    x_dependent = False

    def __init__(self, values):
        self.values = np.asarray(values, dtype=complex)

    def nodes(self, snap):
        if self.values.shape != (snap.n_nodes,):
            raise InvalidInputError("NodeSymbol length does not match the lattice")
        return self.values


class CallableSymbol:
    """
    General symbol ``func(x, snap, idx) -> (M, N)`` evaluated on a chunk of
    output points ``x`` of shape ``(M, d)``. ``snap`` is restricted to the
    active nodes, whose positions in the full lattice are ``idx``.
    """

    x_dependent = True

    def __init__(self, func):
        self.func = func

    def evaluate(self, x, snap, idx):
        return np.asarray(self.func(x, snap, idx), dtype=complex)


class PolynomialTest(CallableSymbol):
    """``u = V(y, eta).(x - X(y, eta)) w(y, eta)``; ``V`` returns ``(N, d)``, ``w`` ``(N,)``."""

    def __init__(self, V, w):
        self.V, self.w = V, w

        def func(x, snap, idx):
            vv = np.asarray(V(snap.y, snap.eta), dtype=complex).reshape(snap.n_nodes, -1)
            ww = np.asarray(w(snap.y, snap.eta), dtype=complex).reshape(snap.n_nodes)
            r = x[:, None, :] - snap.X[None, :, :]
            return np.einsum("mnd,nd->mn", r, vv) * ww[None, :]

        super().__init__(func)


# -- the phase and the operator ------------------------------------------------

def phase(x, state, theta):
    """``S + Xi.(x - X) + (i/2)(x - X).Theta(x - X)`` for one trajectory state."""
    r = np.atleast_1d(np.asarray(x, dtype=float)) - np.atleast_1d(state.X)
    theta = np.atleast_2d(np.asarray(theta, dtype=complex))
    return complex(state.S + np.dot(state.Xi, r) + 0.5j * r @ theta @ r)


def _subset(snap, idx):
    return replace(snap, y=snap.y[idx], eta=snap.eta[idx], X=snap.X[idx], Xi=snap.Xi[idx],
                   S=snap.S[idx], F=snap.F[idx], u0=snap.u0[idx], u0_ode=snap.u0_ode[idx],
                   theta=snap.theta[idx])


def _node_values(phi, snap, interpolation="spectral", derivative=None):
    """Interpolate ``phi`` (or one partial derivative) at the distinct lattice ``y``."""
    quad = snap.quad
    y_axes, e_axes = quad.axes()
    n_eta = int(np.prod([len(a) for a in e_axes]))
    ys = snap.y[::n_eta]
    if interpolation == "spectral":
        vals = phi.interpolate(ys, derivative=derivative)
    elif interpolation == "cubic":
        from scipy.interpolate import RegularGridInterpolator
        data = phi.samples if derivative is None else phi.gradient(derivative)
        coords = phi.grid.coords()
        interp = RegularGridInterpolator(coords, data, method="cubic",
                                         bounds_error=False, fill_value=0.0)
        vals = interp(ys)
    else:
        raise InvalidInputError(f"unknown interpolation {interpolation!r}")
    return np.repeat(vals, n_eta)


def _check_quad(snap, quad):
    if snap.quad is None:
        raise InvalidInputError("snapshot carries no lattice description")
    if quad is None:
        return snap.quad
    same = (quad.y_box == snap.quad.y_box and quad.eta_box == snap.quad.eta_box
            and np.allclose(quad.dy, snap.quad.dy, rtol=1e-12)
            and np.allclose(quad.deta, snap.quad.deta, rtol=1e-12))
    if not same:
        raise GridMismatchError("bundle lattice does not match the quadrature box/spacings")
    return quad


def _coverage_warnings(phi, quad, snap, coef, out_grid):
    pts = phi.grid.points()
    inside = np.ones(pts.shape[0], dtype=bool)
    for j, (lo, hi) in enumerate(quad.y_box):
        inside &= (pts[:, j] >= lo) & (pts[:, j] <= hi)
    total = np.sum(np.abs(phi.samples.ravel()) ** 2)
    if total > 0:
        outside = np.sum(np.abs(phi.samples.ravel()[~inside]) ** 2) / total
        if outside > 1e-10:
            warnings.warn(f"quadrature box misses {outside:.1e} of the input mass", stacklevel=3)
    if coef.size:
        big = np.abs(coef) > 1e-8 * np.max(np.abs(coef))
        for j, (a, b, _) in enumerate(out_grid.axes):
            Xj = snap.X[big, j]
            if Xj.size and (Xj.min() < a or Xj.max() >= b):
                warnings.warn("flowed lattice leaves the output grid", stacklevel=3)
                break


def apply_fio(snap, symbol, phi, theta=None, out_grid=None, quad=None, eps=None,
              threads=1, interpolation="spectral", phi_nodes=None, warn=True):
    """
    Evaluate ``I(kappa; u; Theta) phi`` on a grid by lattice quadrature.

    Parameters
    ----------
    snap : BundleSnapshot
        Flowed lattice at the evaluation time.
    symbol : SymbolOne, HKSymbol, NodeSymbol or CallableSymbol
    phi : WavefunctionGrid
        Input; its ``eps`` is used unless ``eps`` is given.
    theta : matrix or spreading, optional
        Overrides the spreading carried by ``snap`` in the phase.
    out_grid : Grid, optional
        Defaults to ``phi.grid``.
    quad : QuadratureSpec, optional
        Must match the snapshot's lattice; supplies the mollifier.
    threads : int
        Output rows are split into fixed chunks of 64 evaluated by a thread
        pool; the result is bit-identical for any thread count.
    phi_nodes : ndarray, optional
        Precomputed input values at the nodes (skips interpolation).

    Returns
    -------
    WavefunctionGrid
    """
    quad = _check_quad(snap, quad)
    eps = phi.eps if eps is None else float(eps)
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    out_grid = phi.grid if out_grid is None else out_grid
    d = snap.d
    if phi.d != d or out_grid.d != d:
        raise GridMismatchError("dimension of wavefunction and lattice differ")
    if theta is not None:
        th = as_spreading(theta).at(snap.y, snap.eta)
    else:
        th = snap.theta

    if phi_nodes is None:
        phi_nodes = _node_values(phi, snap, interpolation)
    weight = quad.weight() / (2 * np.pi * eps) ** d
    coef = phi_nodes * mollifier(quad.mollifier, snap.eta, quad.lam) * weight
    if not symbol.x_dependent:
        coef = coef * symbol.nodes(snap)
    if warn:
        _coverage_warnings(phi, quad, snap, coef, out_grid)

    amax = np.max(np.abs(coef)) if coef.size else 0.0
    active = np.nonzero(np.abs(coef) > PRUNE * amax)[0] if amax > 0 else np.array([], int)
    x = out_grid.points()
    out = np.zeros(x.shape[0], dtype=complex)
    if active.size == 0:
        return WavefunctionGrid(out_grid, out.reshape(out_grid.shape), phi.eps)

    sub = _subset(replace(snap, theta=th), active)
    c = coef[active]
    X, Xi, S, T = sub.X, sub.Xi, sub.S, sub.theta

    def block(start):
        xs = x[start:start + CHUNK]
        r = xs[:, None, :] - X[None, :, :]
        if d == 1:
            ph = S + Xi[:, 0] * r[..., 0] + 0.5j * T[:, 0, 0] * r[..., 0] ** 2
        else:
            ph = S + np.einsum("nd,mnd->mn", Xi, r) + 0.5j * np.einsum("mnd,nde,mne->mn", r, T, r)
        vals = np.exp((1j / eps) * ph) * c
        if symbol.x_dependent:
            vals = vals * symbol.evaluate(xs, sub, active)
        return np.sum(vals, axis=1)

    starts = range(0, x.shape[0], CHUNK)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(block, starts))
    else:
        parts = [block(s) for s in starts]
    out = np.concatenate(parts)
    return WavefunctionGrid(out_grid, out.reshape(out_grid.shape), phi.eps)


def auto_quadrature(q0, p0, eps, half_width=10.0, spacing=0.25, **kw):
    """
    Lattice centred on ``(q0, p0)``: half-width ``half_width*sqrt(eps)`` and
    spacing ``spacing*sqrt(eps)`` in both ``y`` and ``eta``.
    """
    s = np.sqrt(eps)
    h = spacing * s
    return QuadratureSpec.centered(q0, p0, half_width * s, half_width * s, h, h, **kw)


# -- rescaling -------------------------------------------------------------------

def rescale_snapshot(snap, eps):
    """
    Snapshot of ``kappa^(eps)(y, eta) = kappa(sqrt(eps) y, sqrt(eps) eta) / sqrt(eps)``
    on the lattice scaled by ``1/sqrt(eps)``; the Jacobian and prefactor are unchanged.
    """
    s = np.sqrt(eps)
    q = snap.quad
    quad = QuadratureSpec(
        [(lo / s, hi / s) for lo, hi in q.y_box], [(lo / s, hi / s) for lo, hi in q.eta_box],
        [h / s for h in q.dy], [h / s for h in q.deta], q.mollifier, q.lam / s)
    return replace(snap, y=snap.y / s, eta=snap.eta / s, X=snap.X / s, Xi=snap.Xi / s,
                   S=snap.S / eps, quad=quad)


def rescaling_check(snap, symbol, phi, eps=None, threads=1):
    """
    L2 discrepancy between the direct evaluation at ``eps`` and
    ``T* I^1(kappa^(eps); u^(eps)) T phi`` with ``T phi(y) = eps^{d/4} phi(sqrt(eps) y)``.
    """
    eps = phi.eps if eps is None else eps
    d = phi.d
    s = np.sqrt(eps)
    direct = apply_fio(snap, symbol, phi, eps=eps, threads=threads, warn=False)

    grid1 = Grid(tuple((a / s, b / s, n) for a, b, n in phi.grid.axes))
    phi1 = WavefunctionGrid(grid1, eps ** (d / 4) * phi.samples, 1.0)
    snap1 = rescale_snapshot(snap, eps)
    if symbol.x_dependent:
        sym1 = CallableSymbol(lambda x, sn, idx: symbol.evaluate(
            s * x, replace(sn, y=s * sn.y, eta=s * sn.eta, X=s * sn.X, Xi=s * sn.Xi,
                           S=eps * sn.S), idx))
    else:
        sym1 = NodeSymbol(symbol.nodes(snap))
    out1 = apply_fio(snap1, sym1, phi1, eps=1.0, threads=threads, warn=False)
    back = WavefunctionGrid(phi.grid, eps ** (-d / 4) * out1.samples, phi.eps)
    return l2_distance(direct, back)


# -- integration by parts --------------------------------------------------------

_STENCIL = ((-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12))


def _fd(flow, quad, t, field, h, which):
    """
    Divergence of ``field(snap) -> (N, d)`` along ``y`` or ``eta`` by
    fourth-order central differences over trajectories launched from
    lattices shifted by multiples of ``h``.
    """
    base = flow.snapshot(quad, t)
    div = np.zeros(base.n_nodes, dtype=complex)
    for j in range(base.d):
        for k, wk in _STENCIL:
            shift = np.zeros(base.d)
            shift[j] = k * h
            q = quad.shifted(dy_shift=shift) if which == "y" else quad.shifted(deta_shift=shift)
            div += wk / h * field(flow.snapshot(q, t))[:, j]
    return div


def _relative(lhs, rhs, scale):
    diff = l2_distance(lhs, rhs)
    denom = max(l2_norm(lhs), l2_norm(rhs), scale)
    return diff / denom if denom > 0 else 0.0


def ipp_residual(flow, t, V, w, phi, quad, h=1e-3, threads=1, details=False):
    """
    Relative L2 gap in ``I(V.(x - X) w) phi = i eps I(div_eta[w Y^{-T} V]) phi``.

    ``V(y, eta) -> (N, d)`` and ``w(y, eta) -> (N,)`` are closed-form callables.
    The eta-divergence uses trajectories launched from lattices shifted by
    ``+-h, +-2h``. The residual is normalised by the largest of the two sides
    and ``sqrt(eps) ||I(|V| w) phi||``, the natural size of the left side.
    """
    eps = phi.eps
    snap = flow.snapshot(quad, t)

    def g(sn):
        Y = cal_Y(sn.F, sn.theta)
        vv = np.asarray(V(sn.y, sn.eta), dtype=complex).reshape(sn.n_nodes, -1)
        ww = np.asarray(w(sn.y, sn.eta), dtype=complex).reshape(sn.n_nodes)
        return ww[:, None] * np.linalg.solve(np.swapaxes(Y, -1, -2), vv[..., None])[..., 0]

    lhs = apply_fio(snap, PolynomialTest(V, w), phi, quad=quad, threads=threads)
    div = _fd(flow, quad, t, g, h, "eta")
    rhs = apply_fio(snap, NodeSymbol(1j * eps * div), phi, quad=quad, threads=threads)
    vw = np.linalg.norm(np.asarray(V(snap.y, snap.eta)).reshape(snap.n_nodes, -1), axis=1) \
        * np.abs(np.asarray(w(snap.y, snap.eta)).reshape(snap.n_nodes))
    scale = np.sqrt(eps) * l2_norm(apply_fio(snap, NodeSymbol(vw), phi, quad=quad,
                                             threads=threads, warn=False))
    res = _relative(lhs, rhs, scale)
    return (res, lhs, rhs) if details else res


def ipp2_residual(flow, t, V, w, phi, quad, h=1e-3, threads=1, details=False):
    """
    Relative L2 gap in the momentum-weight identity

        I(V.eta w) phi = -i eps [ I(div_y(w V) - div_eta(w A^T V)) phi
                                  + sum_k I(w V_k) d_k phi ]

    with ``A = cal_A(F, Theta)``. The last sum comes from the ``y``-derivative
    landing on ``phi`` when integrating by parts in ``y``; the sign of the
    ``A`` term follows from ``(grad_y - A grad_eta) Phi = -eta``.
    """
    eps = phi.eps
    d = phi.d
    snap = flow.snapshot(quad, t)

    def vvec(sn):
        return np.asarray(V(sn.y, sn.eta), dtype=complex).reshape(sn.n_nodes, -1)

    def wvec(sn):
        return np.asarray(w(sn.y, sn.eta), dtype=complex).reshape(sn.n_nodes)

    def gy(sn):
        return wvec(sn)[:, None] * vvec(sn)

    def geta(sn):
        A = cal_A(sn.F, sn.theta)
        return wvec(sn)[:, None] * np.einsum("nkj,nk->nj", A, vvec(sn))

    lhs_sym = NodeSymbol(np.einsum("nd,nd->n", vvec(snap), snap.eta) * wvec(snap))
    lhs = apply_fio(snap, lhs_sym, phi, quad=quad, threads=threads)
    div = _fd(flow, quad, t, gy, h, "y") - _fd(flow, quad, t, geta, h, "eta")
    rhs = apply_fio(snap, NodeSymbol(div), phi, quad=quad, threads=threads).samples
    wv = gy(snap)
    for k in range(d):
        dphi = _node_values(phi, snap, derivative=k)
        rhs = rhs + apply_fio(snap, NodeSymbol(wv[:, k]), phi, quad=quad, threads=threads,
                              phi_nodes=dphi, warn=False).samples
    rhs = WavefunctionGrid(phi.grid, -1j * eps * rhs, phi.eps)
    scale = np.sqrt(eps) * l2_norm(apply_fio(
        snap, NodeSymbol(np.linalg.norm(wv, axis=1)), phi, quad=quad, threads=threads,
        warn=False))
    res = _relative(lhs, rhs, scale)
    return (res, lhs, rhs) if details else res


# -- mollifiers ------------------------------------------------------------------

@dataclass(frozen=True)
class MollifierReport:
    lams: tuple
    diffs: tuple
    no_mollifier_diff: tuple

    @property
    def value(self):
        return self.diffs[-1]

    def table(self):
        rows = ["lambda,gaussian_vs_bump,gaussian_vs_none"]
        rows += [f"{l:g},{a:.6e},{b:.6e}"
                 for l, a, b in zip(self.lams, self.diffs, self.no_mollifier_diff)]
        return "\n".join(rows)


def mollifier_independence(snap, symbol, phi, lams=(2, 4, 8, 16),
                           families=("gaussian", "bump"), threads=1):
    """
    L2 gap between the outputs with two mollifier families for each ``lam``,
    plus the gap between the first family and the unmollified sum.
    """
    base = snap.quad
    plain = apply_fio(snap, symbol, phi, quad=base.with_mollifier("none", np.inf),
                      threads=threads, warn=False)
    diffs, nomol = [], []
    for lam in lams:
        a = apply_fio(snap, symbol, phi, quad=base.with_mollifier(families[0], lam),
                      threads=threads, warn=False)
        b = apply_fio(snap, symbol, phi, quad=base.with_mollifier(families[1], lam),
                      threads=threads, warn=False)
        diffs.append(l2_distance(a, b))
        nomol.append(l2_distance(a, plain))
    return MollifierReport(tuple(float(l) for l in lams), tuple(diffs), tuple(nomol))


# -- operator norm ----------------------------------------------------------------

@dataclass(frozen=True)
class NormReport:
    ratios: tuple
    centers: tuple

    @property
    def max(self):
        return max(self.ratios)

    @property
    def min(self):
        return min(self.ratios)


def empirical_operator_norm(flow, t, symbol, eps, grid, trials=10, rng=None,
                            q_range=(-1.0, 1.0), p_range=(-1.0, 1.0), quad_fn=None,
                            threads=1):
    """
    ``||I phi|| / ||phi||`` for random normalised coherent states.

    Centres are drawn uniformly from ``q_range x p_range`` (per axis); each
    trial gets its own lattice from ``quad_fn(q0, p0, eps)`` (default
    :func:`auto_quadrature`). The maximum is a lower bound for the operator norm.
    """
    rng = np.random.default_rng(rng)
    quad_fn = quad_fn or auto_quadrature
    d = grid.d
    ratios, centers = [], []
    for _ in range(trials):
        q0 = rng.uniform(*q_range, size=d)
        p0 = rng.uniform(*p_range, size=d)
        phi = coherent_state(grid, q0, p0, eps)
        quad = quad_fn(q0, p0, eps)
        out = apply_fio(flow.snapshot(quad, t), symbol, phi, threads=threads)
        ratios.append(l2_norm(out) / l2_norm(phi))
        centers.append((tuple(q0), tuple(p0)))
    return NormReport(tuple(ratios), tuple(centers))


# -- thawed spreading via symbol absorption ---------------------------------------

def thawed_splitting_check(snap, symbol, phi, spreading, threads=1):
    """
    Compare the direct thawed evaluation with the same operator written on
    the constant spreading ``Theta0/2``, the excess absorbed into the symbol:

        v = u exp(-(x - X).(Theta(y, eta) - Theta0/2)(x - X) / 2 eps).

    Returns the L2 gap, which should sit at rounding level.
    """
    if not isinstance(spreading, FieldSpreading):
        raise InvalidInputError("splitting check needs a FieldSpreading")
    if symbol.x_dependent:
        raise InvalidInputError("splitting check expects an x-independent symbol")
    eps = phi.eps
    th = spreading.at(snap.y, snap.eta)
    full = replace(snap, theta=th)
    direct = apply_fio(full, symbol, phi, threads=threads)

    half = 0.5 * spreading.floor.astype(complex)
    base = replace(snap, theta=np.broadcast_to(half, th.shape).copy())
    u = symbol.nodes(snap)

    def v(x, sub, idx):
        r = x[:, None, :] - sub.X[None, :, :]
        quad_form = np.einsum("mnd,nde,mne->mn", r, th[idx] - half, r)
        return u[idx][None, :] * np.exp(-quad_form / (2 * eps))

    split = apply_fio(base, CallableSymbol(v), phi, threads=threads, warn=False)
    return l2_distance(direct, split)

