"""Phase-space quadrature lattices and mollifiers."""

from dataclasses import dataclass, field, replace
import itertools

import numpy as np

from .errors import InvalidInputError

__all__ = ["QuadratureSpec", "mollifier", "MOLLIFIERS"]


def _psi(x):
    # exp(-1/x) for x > 0, smoothly 0 otherwise
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def _bump(s):
    # C-infinity plateau: 1 on |s| <= 1/2, 0 on |s| >= 1
    a = np.abs(s)
    num = _psi(1.0 - a)
    return num / (num + _psi(a - 0.5))


def _gaussian(s):
    # 1 on |s| <= 1/2, Gaussian tail exp(-s^2) beyond, C-infinity at the seam
    a = np.abs(s)
    return np.exp(-_psi(2.0 * (a - 0.5)) * a * a)


def _plain_gaussian(s):
    return np.exp(-0.5 * np.asarray(s, dtype=float) ** 2)


MOLLIFIERS = {
    "gaussian": _gaussian,
    "bump": _bump,
    "plain-gaussian": _plain_gaussian,
}


def mollifier(name, eta, lam):
    """
    ``prod_j sigma(eta_j / lam)`` for the named family.

    ``gaussian`` and ``bump`` are flat near the origin (``sigma = 1`` on
    ``|s| <= 1/2``), so once ``lam`` exceeds the momentum support of the
    integrand they leave it untouched. ``plain-gaussian`` is ``exp(-s^2/2)``,
    which only converges like ``lam^-2``.
    """
    if name is None or name == "none":
        return np.ones(np.shape(eta)[0])
    if name not in MOLLIFIERS:
        raise InvalidInputError(f"unknown mollifier {name!r}")
    if not lam > 0:
        raise InvalidInputError("mollifier scale lambda must be positive")
    return np.prod(MOLLIFIERS[name](np.asarray(eta) / lam), axis=-1)


def _axis(lo, hi, h):
    if not h > 0:
        raise InvalidInputError("lattice spacing must be positive")
    if not hi >= lo:
        raise InvalidInputError(f"empty box [{lo}, {hi}]")
    m = int(round((hi - lo) / h))
    if abs(m * h - (hi - lo)) > 1e-9 * max(1.0, hi - lo):
        raise InvalidInputError(
            f"box [{lo}, {hi}] is not an integer number of spacings {h}")
    return lo + h * np.arange(m + 1)


@dataclass(frozen=True)
class QuadratureSpec:
    """
    Rectangular phase-space lattice for the ``(y, eta)`` integral.

    Parameters
    ----------
    y_box, eta_box : sequence of (lo, hi) pairs, one per dimension
    dy, deta : float or sequence of floats
        Lattice spacings; each box side must be an integer multiple.
    mollifier : {"none", "gaussian", "bump", "plain-gaussian"}
    lam : float
        Mollifier scale, used as ``sigma(eta / lam)``.
    """

    y_box: tuple
    eta_box: tuple
    dy: tuple
    deta: tuple
    mollifier: str = "none"
    lam: float = field(default=np.inf)

    def __post_init__(self):
        y_box = tuple(tuple(map(float, b)) for b in np.atleast_2d(self.y_box))
        eta_box = tuple(tuple(map(float, b)) for b in np.atleast_2d(self.eta_box))
        d = len(y_box)
        if len(eta_box) != d:
            raise InvalidInputError("y_box and eta_box dimensions differ")
        dy = tuple(np.broadcast_to(np.asarray(self.dy, dtype=float), (d,)).tolist())
        deta = tuple(np.broadcast_to(np.asarray(self.deta, dtype=float), (d,)).tolist())
        object.__setattr__(self, "y_box", y_box)
        object.__setattr__(self, "eta_box", eta_box)
        object.__setattr__(self, "dy", dy)
        object.__setattr__(self, "deta", deta)
        if self.mollifier not in ("none", *MOLLIFIERS):
            raise InvalidInputError(f"unknown mollifier {self.mollifier!r}")
        if self.mollifier != "none" and not self.lam > 0:
            raise InvalidInputError("mollifier scale lambda must be positive")
        # validates divisibility
        self.axes()

    @property
    def d(self):
        return len(self.y_box)

    @classmethod
    def centered(cls, q0, p0, half_y, half_eta, dy, deta=None, **kw):
        """Box ``q0 +- half_y`` by ``p0 +- half_eta``, widened to fit the spacings."""
        deta = dy if deta is None else deta
        q0, p0 = np.atleast_1d(q0).astype(float), np.atleast_1d(p0).astype(float)
        my = np.ceil(np.atleast_1d(half_y) / dy)
        me = np.ceil(np.atleast_1d(half_eta) / deta)
        y_box = [(q - m * dy, q + m * dy) for q, m in zip(q0, np.broadcast_to(my, q0.shape))]
        e_box = [(p - m * deta, p + m * deta) for p, m in zip(p0, np.broadcast_to(me, p0.shape))]
        return cls(y_box, e_box, dy, deta, **kw)

    def axes(self):
        """Per-dimension node coordinates ``(y_axes, eta_axes)``."""
        y_axes = [_axis(lo, hi, h) for (lo, hi), h in zip(self.y_box, self.dy)]
        e_axes = [_axis(lo, hi, h) for (lo, hi), h in zip(self.eta_box, self.deta)]
        return y_axes, e_axes

    def shape(self):
        y_axes, e_axes = self.axes()
        return tuple(len(a) for a in y_axes) + tuple(len(a) for a in e_axes)

    def nodes(self):
        """Flattened node arrays ``(y, eta)`` of shape ``(N, d)``; ``y`` varies slowest."""
        y_axes, e_axes = self.axes()
        pts = np.array(list(itertools.product(*y_axes, *e_axes)), dtype=float)
        pts = pts.reshape(-1, 2 * self.d)
        return pts[:, :self.d].copy(), pts[:, self.d:].copy()

    def weight(self):
        """Volume element ``prod(dy) * prod(deta)``."""
        return float(np.prod(self.dy) * np.prod(self.deta))

    def refined(self, factor=2):
        """Same box with spacings divided by ``factor``."""
        return replace(self, dy=tuple(h / factor for h in self.dy),
                       deta=tuple(h / factor for h in self.deta))

    def with_mollifier(self, name, lam):
        return replace(self, mollifier=name, lam=float(lam))

    def shifted(self, dy_shift=0.0, deta_shift=0.0):
        """Translate the lattice; used for finite differences across trajectories."""
        dys = np.broadcast_to(np.asarray(dy_shift, float), (self.d,))
        des = np.broadcast_to(np.asarray(deta_shift, float), (self.d,))
        y_box = tuple((lo + s, hi + s) for (lo, hi), s in zip(self.y_box, dys))
        e_box = tuple((lo + s, hi + s) for (lo, hi), s in zip(self.eta_box, des))
        return replace(self, y_box=y_box, eta_box=e_box)
