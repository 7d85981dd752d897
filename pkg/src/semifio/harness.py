"""
Experiment driver: configuration, automatic grids, epsilon sweeps, rate
fitting, Ehrenfest-time runs, the validation suite and their reports.

Configuration is flat ``key = value`` text with dotted sections::

    potential.name = cosine
    potential.amplitude = 1.0
    state.q0 = 0.5
    state.p0 = 0.3
    run.eps = 0.2, 0.1, 0.05, 0.025
    run.T = 1.0
    theta.value = 1.0

Lines starting with ``#`` are comments. See :data:`DEFAULTS` for every key.
Outputs are deterministic for a fixed configuration and seed: CSV and JSON
files contain no wall times (those go to ``timings.json``).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import json
import logging
import os
import time

import numpy as np

from . import __version__
from .dynamics import (LatticeFlow, QuadraticFlow, StepControl, integrate_nodes,
                       integrate_trajectory, make_potential, write_trajectory_csv)
from .errors import ConfigurationError, InvalidInputError, InvalidSpreadingError, SemifioError
from .fio import (HKSymbol, SymbolOne, apply_fio, ipp2_residual, ipp_residual,
                  mollifier_independence, rescaling_check, thawed_splitting_check)
from .grid import Grid, coherent_state, l2_distance, l2_norm, write_wfgrid
from .lattice import QuadratureSpec
from .reference import split_step_propagate
from .stft import gaussian_window, stft
from .symplectic import (ConstantSpreading, FieldSpreading, cal_Y,
                         lemma_identity_residual, symplectic_defect)

logger = logging.getLogger(__name__)

__all__ = [
    "DEFAULTS", "parse_config", "load_config", "ExperimentConfig", "fit_loglog",
    "auto_grid", "auto_lattice", "cmd_propagate", "cmd_converge", "cmd_ehrenfest",
    "cmd_validate", "cmd_stft_check",
]

DEFAULTS = {
    "potential.name": "cosine",
    "state.q0": "0.5",
    "state.p0": "0.3",
    "state.width": "1.0",
    "run.eps": "0.1",
    "run.T": "1.0",
    "run.seed": "0",
    "theta.value": "1.0",
    "grid.x_min": "auto",
    "grid.x_max": "auto",
    "grid.n": "auto",
    "quadrature.spacing": "0.25",
    "quadrature.pad": "5.0",
    "quadrature.mass_tol": "1e-8",
    "quadrature.mollifier": "none",
    "quadrature.lambda": "inf",
    "integrator.dt": "1e-3",
    "reference.dt_factor": "50",
    "ehrenfest.C_T": "0.25",
    "ehrenfest.rho_report": "0.0",
    "ehrenfest.C_prime": "1.0",
    "ehrenfest.min_exponent": "0.7",
    "converge.slope_band": "0.7, 1.3",
    "converge.floor": "1e-5",
    "validate.eps": "0.05",
}

CONVERGE_SCHEMA = "# semifio-converge v1"
EHRENFEST_SCHEMA = "# semifio-ehrenfest v1"


# -- configuration -------------------------------------------------------------

def parse_config(text):
    """Parse ``key = value`` lines into a dict of strings; later keys win."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"line {lineno}: empty key")
        out[key] = value
    return out


def load_config(path=None, overrides=None):
    raw = dict(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                raw.update(parse_config(fh.read()))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    raw.update(overrides or {})
    return ExperimentConfig.from_raw(raw)


def _floats(raw, key):
    try:
        return [float(s) for s in raw[key].split(",") if s.strip()]
    except ValueError:
        raise ConfigurationError(f"{key}: expected numbers, got {raw[key]!r}") from None


def _float(raw, key):
    vals = _floats(raw, key)
    if len(vals) != 1:
        raise ConfigurationError(f"{key}: expected one number, got {raw[key]!r}")
    return vals[0]


def _theta(raw, d):
    # "a" -> a*I; "a, b; c, d" -> matrix rows; complex entries like 1+0.5j allowed
    text = raw["theta.value"]
    try:
        rows = [[complex(v.replace(" ", "")) for v in row.split(",")]
                for row in text.split(";")]
    except ValueError:
        raise ConfigurationError(f"theta.value: cannot parse {text!r}") from None
    M = np.array(rows, dtype=complex)
    if M.shape == (1, 1):
        M = M[0, 0] * np.eye(d)
    if M.shape != (d, d):
        raise ConfigurationError(f"theta.value: expected a {d}x{d} matrix")
    try:
        ConstantSpreading(M)
    except InvalidSpreadingError as exc:
        raise ConfigurationError(f"theta.value: {exc}") from None
    return M


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration; ``raw`` keeps the key/value form for reports."""

    raw: dict
    potential: str
    potential_params: dict
    q0: np.ndarray
    p0: np.ndarray
    width: float
    eps: tuple
    T: float
    seed: int
    theta: np.ndarray
    spacing: float
    dt: float

    @property
    def d(self):
        return self.q0.size

    @classmethod
    def from_raw(cls, raw):
        known_sections = {k.split(".")[0] for k in DEFAULTS}
        for key in raw:
            if key.split(".")[0] not in known_sections:
                raise ConfigurationError(f"unknown configuration key {key!r}")
        params = {k.split(".", 1)[1]: _float(raw, k) for k in raw
                  if k.startswith("potential.") and k != "potential.name"}
        q0 = np.array(_floats(raw, "state.q0"))
        p0 = np.array(_floats(raw, "state.p0"))
        if q0.size != p0.size or q0.size == 0:
            raise ConfigurationError("state.q0 and state.p0 must have equal length")
        eps = tuple(_floats(raw, "run.eps"))
        if not eps or any(not 0 < e <= 1 for e in eps):
            raise ConfigurationError("run.eps: values must lie in (0, 1]")
        try:
            seed = int(raw["run.seed"])
        except ValueError:
            raise ConfigurationError("run.seed: expected an integer") from None
        if not 0 <= seed < 2 ** 64:
            raise ConfigurationError("run.seed must be an unsigned 64-bit integer")
        T = _float(raw, "run.T")
        if T < 0:
            raise ConfigurationError("run.T must be non-negative")
        cfg = cls(raw=dict(raw), potential=raw["potential.name"], potential_params=params,
                  q0=q0, p0=p0, width=_float(raw, "state.width"), eps=eps, T=T, seed=seed,
                  theta=_theta(raw, q0.size), spacing=_float(raw, "quadrature.spacing"),
                  dt=_float(raw, "integrator.dt"))
        try:
            cfg.make_potential()
        except (InvalidInputError, TypeError) as exc:
            raise ConfigurationError(f"potential: {exc}") from None
        if cfg.spacing <= 0 or cfg.dt <= 0 or cfg.width <= 0:
            raise ConfigurationError("spacings, widths and time steps must be positive")
        return cfg

    def make_potential(self):
        return make_potential(self.potential, self.d, **self.potential_params)

    def get(self, key):
        return self.raw[key]

    def number(self, key):
        return _float(self.raw, key)

    def numbers(self, key):
        return _floats(self.raw, key)

    def with_values(self, **updates):
        raw = dict(self.raw)
        raw.update({k.replace("__", "."): str(v) for k, v in updates.items()})
        return ExperimentConfig.from_raw(raw)

    def as_dict(self):
        return dict(sorted(self.raw.items()))


# -- automatic grids -----------------------------------------------------------

def _support(values, coords, tol):
    # smallest interval holding all but tol of the mass on each side
    p = values / np.sum(values)
    c = np.cumsum(p)
    lo = coords[np.searchsorted(c, tol)]
    hi = coords[min(np.searchsorted(c, 1 - tol), len(coords) - 1)]
    return lo, hi


def auto_lattice(phi, spacing=0.25, pad=5.0, mass_tol=1e-8, mollifier="none", lam=np.inf):
    """
    Phase-space box from the position and momentum distributions of ``phi``:
    the interval holding all but ``mass_tol`` of each marginal, padded by
    ``pad*sqrt(eps)``, on a lattice of spacing ``spacing*sqrt(eps)``.
    """
    eps = phi.eps
    s = np.sqrt(eps)
    dens = np.abs(phi.samples) ** 2
    spec = np.abs(np.fft.fftn(phi.samples)) ** 2
    centers_y, centers_e, half_y, half_e = [], [], [], []
    for ax in range(phi.d):
        others = tuple(a for a in range(phi.d) if a != ax)
        xs = phi.grid.coords()[ax]
        lo, hi = _support(np.sum(dens, axis=others) if others else dens, xs, mass_tol)
        k = phi.grid.wavenumbers()[ax]
        order = np.argsort(k)
        marg = (np.sum(spec, axis=others) if others else spec)[order]
        plo, phi_ = _support(marg, eps * k[order], mass_tol)
        centers_y.append(0.5 * (lo + hi))
        half_y.append(0.5 * (hi - lo) + pad * s)
        centers_e.append(0.5 * (plo + phi_))
        half_e.append(0.5 * (phi_ - plo) + pad * s)
    h = spacing * s
    return QuadratureSpec.centered(centers_y, centers_e, max(half_y), max(half_e), h, h,
                                   mollifier=mollifier, lam=lam)


def _boundary_nodes(quad):
    y, eta = quad.nodes()
    on = np.zeros(y.shape[0], dtype=bool)
    for j, ((ylo, yhi), (elo, ehi)) in enumerate(zip(quad.y_box, quad.eta_box)):
        on |= np.isclose(y[:, j], ylo) | np.isclose(y[:, j], yhi)
        on |= np.isclose(eta[:, j], elo) | np.isclose(eta[:, j], ehi)
    return y[on], eta[on]


def auto_grid(pot, quad, eps, T, n_min=256, dt=1e-3):
    """
    Spatial grid holding the flowed lattice at all times in ``[0, T]``.

    The image of the lattice box is bounded by the image of its boundary, so
    only boundary nodes are integrated. The box is padded by ``1.5 + 6 sqrt(eps)``
    and the number of points (a power of two) resolves momenta up to the
    largest ``|Xi|`` seen plus ``6 sqrt(eps)`` with a 20% margin.
    """
    y, eta = _boundary_nodes(quad)
    times = np.linspace(0.0, T, 41) if T > 0 else [0.0]
    snaps = integrate_nodes(pot, y, eta, np.eye(pot.d), times, StepControl(dt=dt))
    X = np.concatenate([s["X"] for s in snaps])
    Xi = np.concatenate([s["Xi"] for s in snaps])
    pad = 1.5 + 6 * np.sqrt(eps)
    axes = []
    for j in range(pot.d):
        lo, hi = X[:, j].min() - pad, X[:, j].max() + pad
        kmax = (np.max(np.abs(Xi[:, j])) + 6 * np.sqrt(eps)) / eps
        dx = np.pi / (1.2 * kmax)
        n = max(n_min, 1 << int(np.ceil(np.log2((hi - lo) / dx))))
        axes.append((float(lo), float(hi), n))
    return Grid(tuple(axes))


def _resolve(cfg, eps):
    """Potential, initial state, lattice and grid for one epsilon."""
    pot = cfg.make_potential()
    quad_kw = dict(mollifier=cfg.get("quadrature.mollifier"),
                   lam=cfg.number("quadrature.lambda"))
    if quad_kw["mollifier"] == "none":
        quad_kw["lam"] = np.inf
    # coarse throwaway grid only to read off the phase-space content of phi
    probe = Grid(tuple((q - 12 * np.sqrt(eps) * cfg.width, q + 12 * np.sqrt(eps) * cfg.width,
                        512) for q in cfg.q0))
    quad = auto_lattice(coherent_state(probe, cfg.q0, cfg.p0, eps, cfg.width),
                        spacing=cfg.spacing, pad=cfg.number("quadrature.pad"),
                        mass_tol=cfg.number("quadrature.mass_tol"), **quad_kw)
    if "auto" in (cfg.get("grid.x_min"), cfg.get("grid.x_max"), cfg.get("grid.n")):
        grid = auto_grid(pot, quad, eps, cfg.T, dt=cfg.dt)
    else:
        lo, hi = cfg.numbers("grid.x_min"), cfg.numbers("grid.x_max")
        n = [int(v) for v in cfg.numbers("grid.n")]
        if len(lo) == 1:
            lo, hi, n = lo * cfg.d, hi * cfg.d, n * cfg.d
        grid = Grid(tuple(zip(lo, hi, n)))
    phi = coherent_state(grid, cfg.q0, cfg.p0, eps, cfg.width)
    return pot, phi, quad, grid


def _grid_dict(grid):
    return [{"x_min": a, "x_max": b, "n": n} for a, b, n in grid.axes]


def _quad_dict(quad):
    return {"y_box": [list(b) for b in quad.y_box], "eta_box": [list(b) for b in quad.eta_box],
            "dy": list(quad.dy), "deta": list(quad.deta), "mollifier": quad.mollifier,
            "lambda": None if not np.isfinite(quad.lam) else quad.lam,
            "nodes": int(np.prod(quad.shape()))}


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


# -- fitting ---------------------------------------------------------------------

def fit_loglog(pairs):
    """
    Least-squares line through ``(ln eps, ln error)``.

    Returns ``(slope, intercept, residual)`` with ``residual`` the RMS misfit
    in log space.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise InvalidInputError("need at least two (eps, error) pairs")
    e, err = np.array(pairs, dtype=float).T
    if np.any(e <= 0) or np.any(err <= 0):
        raise InvalidInputError("eps and errors must be positive for a log-log fit")
    A = np.stack([np.log(e), np.ones_like(e)], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(err), rcond=None)
    resid = np.log(err) - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid ** 2)))


# -- commands ---------------------------------------------------------------------

def _flow(cfg, pot):
    return LatticeFlow(pot, cfg.theta, StepControl(dt=cfg.dt))


def propagate_one(cfg, eps, T, out_dir=None, threads=1):
    """
    FIO and reference propagation of the configured coherent state to ``T``.
    Returns a dict of results; files are written when ``out_dir`` is given.
    """
    pot, phi, quad, grid = _resolve(cfg, eps)
    t0 = time.perf_counter()
    snap = _flow(cfg, pot).snapshot(quad, T)
    fio = apply_fio(snap, HKSymbol(), phi, threads=threads)
    t1 = time.perf_counter()
    ref = split_step_propagate(pot, phi, T, dt=eps / cfg.number("reference.dt_factor"))
    t2 = time.perf_counter()
    err = l2_distance(fio, ref)
    result = {
        "eps": eps, "T": T, "l2_error": err, "fio_norm": l2_norm(fio),
        "reference_norm": l2_norm(ref), "lattice": _quad_dict(quad), "grid": _grid_dict(grid),
        "monodromy_max": float(np.max(np.abs(snap.F.matrix()))),
        "prefactor_mismatch": float(np.max(np.abs(snap.u0 - snap.u0_ode))),
        "symplectic_defect": float(np.max(symplectic_defect(snap.F))),
        "timings": {"fio_s": t1 - t0, "reference_s": t2 - t1},
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_wfgrid(os.path.join(out_dir, "fio.wfgrid"), fio)
        write_wfgrid(os.path.join(out_dir, "reference.wfgrid"), ref)
        times = np.linspace(0.0, T, 21) if T > 0 else [0.0]
        states = integrate_trajectory(pot, (cfg.q0, cfg.p0), cfg.theta, times,
                                      StepControl(dt=cfg.dt))
        write_trajectory_csv(os.path.join(out_dir, "trajectory.csv"), states)
    return result


def _strip_timings(res):
    return {k: v for k, v in res.items() if k != "timings"}


def cmd_propagate(cfg, out_dir, threads=1):
    """Single-epsilon propagation; writes wavefunctions, trajectory and ``report.json``."""
    if len(cfg.eps) != 1:
        raise ConfigurationError("propagate needs exactly one value in run.eps")
    os.makedirs(out_dir, exist_ok=True)
    res = propagate_one(cfg, cfg.eps[0], cfg.T, out_dir, threads)
    report = {"command": "propagate", "version": __version__, "config": cfg.as_dict(),
              "result": _strip_timings(res)}
    _dump_json(os.path.join(out_dir, "report.json"), report)
    _dump_json(os.path.join(out_dir, "timings.json"), res["timings"])
    return report


def _sweep(cfg, out_dir, threads, times, tag):
    eps = list(cfg.eps)
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigurationError("run.eps must be strictly decreasing for a sweep")

    def job(k):
        sub = os.path.join(out_dir, f"{tag}_{k:02d}")
        try:
            return propagate_one(cfg, eps[k], times[k], sub, threads=1)
        except SemifioError as exc:
            raise type(exc)(f"run.eps[{k}] = {eps[k]}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, range(len(eps))))
    return [job(k) for k in range(len(eps))]


def cmd_converge(cfg, out_dir, threads=1):
    """
    Error against the reference solver for every epsilon and the log-log slope.

    The report flags a quadrature floor when the errors do not decrease
    monotonically or all lie below ``converge.floor``, the level where
    quadrature and reference-solver errors dominate; the fit is still
    emitted but marked unreliable.
    """
    if len(cfg.eps) < 4:
        raise ConfigurationError("converge needs at least four values in run.eps")
    os.makedirs(out_dir, exist_ok=True)
    rows = _sweep(cfg, out_dir, threads, [cfg.T] * len(cfg.eps), "eps")
    slope, intercept, resid = fit_loglog([(r["eps"], r["l2_error"]) for r in rows])
    errs = [r["l2_error"] for r in rows]
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    floor = not monotone or max(errs) < cfg.number("converge.floor")
    lo, hi = cfg.numbers("converge.slope_band")
    with open(os.path.join(out_dir, "converge.csv"), "w") as fh:
        fh.write(CONVERGE_SCHEMA + "\n")
        fh.write("eps,l2_error,fio_norm,lattice_nodes,grid_points\n")
        for r in rows:
            fh.write(f"{r['eps']!r},{r['l2_error']!r},{r['fio_norm']!r},"
                     f"{r['lattice']['nodes']},{int(np.prod([a['n'] for a in r['grid']]))}\n")
    report = {
        "command": "converge", "version": __version__, "config": cfg.as_dict(),
        "rows": [_strip_timings(r) for r in rows],
        "fit": {"slope": slope, "intercept": intercept, "residual": resid,
                "reliable": not floor},
        "monotone": monotone,
        "quadrature_floor": floor,
        "slope_band": [lo, hi],
        "slope_in_band": bool(lo <= slope <= hi),
    }
    _dump_json(os.path.join(out_dir, "report.json"), report)
    _dump_json(os.path.join(out_dir, "timings.json"),
               [{"eps": r["eps"], **r["timings"]} for r in rows])
    return report


def cmd_ehrenfest(cfg, out_dir, threads=1):
    """
    Errors at ``T(eps) = C_T ln(1/eps)``, their effective exponent and the
    largest monodromy entry. The bound ``error <= C' eps^(1 - rho)`` is a soft check.
    """
    if len(cfg.eps) < 2:
        raise ConfigurationError("ehrenfest needs at least two values in run.eps")
    os.makedirs(out_dir, exist_ok=True)
    C_T = cfg.number("ehrenfest.C_T")
    times = [float(C_T * np.log(1.0 / e)) for e in cfg.eps]
    rows = _sweep(cfg, out_dir, threads, times, "eps")
    slope, intercept, resid = fit_loglog([(r["eps"], r["l2_error"]) for r in rows])
    rho = cfg.number("ehrenfest.rho_report")
    Cp = cfg.number("ehrenfest.C_prime")
    bound_ok = all(r["l2_error"] <= Cp * r["eps"] ** (1 - rho) for r in rows)
    min_exp = cfg.number("ehrenfest.min_exponent")
    with open(os.path.join(out_dir, "ehrenfest.csv"), "w") as fh:
        fh.write(EHRENFEST_SCHEMA + "\n")
        fh.write("eps,T,l2_error,monodromy_max\n")
        for r in rows:
            fh.write(f"{r['eps']!r},{r['T']!r},{r['l2_error']!r},{r['monodromy_max']!r}\n")
    report = {
        "command": "ehrenfest", "version": __version__, "config": cfg.as_dict(),
        "rows": [_strip_timings(r) for r in rows],
        "effective_exponent": slope, "intercept": intercept, "fit_residual": resid,
        "monodromy_max": max(r["monodromy_max"] for r in rows),
        "soft_checks": {"bound": bound_ok, "exponent": bool(slope >= min_exp)},
        "soft_pass": bool(bound_ok and slope >= min_exp),
    }
    _dump_json(os.path.join(out_dir, "report.json"), report)
    _dump_json(os.path.join(out_dir, "timings.json"),
               [{"eps": r["eps"], **r["timings"]} for r in rows])
    return report


# -- validation suite --------------------------------------------------------------

def _check(name, value, tol, kind="max"):
    ok = value <= tol if kind == "max" else value >= tol
    return {"name": name, "value": float(value), "tolerance": float(tol), "pass": bool(ok)}


def validation_checks(cfg, rng):
    """Run the property suite; returns a list of check records."""
    eps = cfg.number("validate.eps")
    d = cfg.d
    s = np.sqrt(eps)
    grid = Grid.uniform(-8.0, 8.0, 512, d) if d == 1 else Grid.uniform(-6.0, 6.0, 64, d)
    q0, p0 = cfg.q0, cfg.p0
    phi = coherent_state(grid, q0, p0, eps)
    h = cfg.spacing * s
    quad = QuadratureSpec.centered(q0, p0, 10 * s, 10 * s, h, h)
    checks = []

    free = make_potential("free", d)
    ident = LatticeFlow(free, cfg.theta).snapshot(quad, 0.0)
    checks.append(_check("identity_reconstruction",
                         l2_distance(apply_fio(ident, SymbolOne(), phi), phi), 1e-3))

    floor = 0.5 * np.real(cfg.theta)
    field = FieldSpreading(
        lambda y, e: floor + (0.5 * np.exp(-np.sum(y * y, axis=1))[:, None, None]
                              + 0.2j * np.sin(y[:, :1])[:, :, None]) * np.eye(d), floor)
    thawed = LatticeFlow(free, field).snapshot(quad, 0.0)
    checks.append(_check("identity_reconstruction_thawed",
                         l2_distance(apply_fio(thawed, SymbolOne(), phi), phi), 1e-3))
    checks.append(_check("thawed_splitting",
                         thawed_splitting_check(thawed, SymbolOne(), phi, field), 1e-10))

    phi1 = coherent_state(grid, q0, p0, 0.1)
    quad1 = QuadratureSpec.centered(q0, p0, 10 * np.sqrt(0.1), 10 * np.sqrt(0.1),
                                    0.25 * np.sqrt(0.1), 0.25 * np.sqrt(0.1))
    free_flow = QuadraticFlow(d, 0.0, cfg.theta)
    harm_flow = QuadraticFlow(d, 1.0, cfg.theta)
    checks.append(_check("rescaling_free",
                         rescaling_check(free_flow.snapshot(quad1, 0.5), HKSymbol(), phi1), 1e-3))
    checks.append(_check("rescaling_harmonic",
                         rescaling_check(harm_flow.snapshot(quad1, 1.0), HKSymbol(), phi1), 1e-3))

    ones_v = lambda y, e: np.ones_like(y)
    ones_w = lambda y, e: np.ones(y.shape[0])
    checks.append(_check("ipp_harmonic",
                         ipp_residual(harm_flow, 0.8, ones_v, ones_w, phi1, quad1), 1e-4))
    checks.append(_check("ipp2_harmonic",
                         ipp2_residual(harm_flow, 0.5, ones_v, ones_w, phi1, quad1), 1e-3))

    moll = mollifier_independence(free_flow.snapshot(quad1, 1.0), HKSymbol(), phi1)
    checks.append(_check("mollifier_independence", moll.value, 1e-6))

    cos = make_potential("cosine", d)
    snap = LatticeFlow(cos, cfg.theta, StepControl(dt=cfg.dt)).snapshot(quad, 1.0)
    scale = np.maximum(1.0, np.max(np.abs(snap.F.matrix()), axis=(-1, -2)))
    checks.append(_check("symplectic_defect",
                         np.max(symplectic_defect(snap.F) / scale ** 2), 1e-6))
    checks.append(_check("prefactor_consistency",
                         np.max(np.abs(snap.u0 - snap.u0_ode)), 1e-6))
    Y = cal_Y(snap.F, snap.theta)
    checks.append(_check("lemma_identity",
                         np.max(lemma_identity_residual(snap.F, snap.theta) / scale ** 2), 1e-12))
    checks.append(_check("det_Y_lower_bound", np.min(np.abs(np.linalg.det(Y))), 1e-10, "min"))

    checks.append(_check("stft_parseval", _stft_parseval(rng), 1e-8))
    return checks


def _random_bandlimited(grid, rng, modes=10, envelope=4.0):
    x = grid.points()[:, 0]
    k = np.arange(-modes, modes + 1)
    c = rng.standard_normal(k.size) + 1j * rng.standard_normal(k.size)
    L = grid.axes[0][1] - grid.axes[0][0]
    f = np.exp(2j * np.pi * np.outer(x, k) / L) @ c
    return f * np.exp(-x ** 2 / envelope)


def _stft_parseval(rng, trials=10):
    from .grid import WavefunctionGrid
    grid = Grid.uniform(-8.0, 8.0, 512)
    worst = 0.0
    for _ in range(trials):
        f = WavefunctionGrid(grid, _random_bandlimited(grid, rng), 1.0)
        a = rng.uniform(0.5, 2.0)
        res = stft(f, gaussian_window(a))
        g2 = np.sqrt(np.pi / a)
        worst = max(worst, abs(res.norm() ** 2 / (f.norm() ** 2 * g2) - 1))
    return worst


def cmd_validate(cfg, out_dir, threads=1):
    """Property suite with measured values and tolerances; ``report['pass']`` is the verdict."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    checks = validation_checks(cfg, rng)
    failed = [c["name"] for c in checks if not c["pass"]]
    report = {"command": "validate", "version": __version__, "config": cfg.as_dict(),
              "checks": checks, "failed": failed, "pass": not failed}
    _dump_json(os.path.join(out_dir, "report.json"), report)
    return report


def cmd_stft_check(cfg, out_dir, threads=1):
    """Closed-form Gaussian case and Parseval on seeded random signals; writes a CSV."""
    from .grid import WavefunctionGrid
    from .stft import write_stft_csv
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    grid = Grid.uniform(-8.0, 8.0, 512)
    x = grid.points()[:, 0]
    f = WavefunctionGrid(grid, np.exp(-x ** 2 / 2), 1.0)
    res = stft(f, gaussian_window(1.0))
    y, eta = res.y[:, 0][:, None], res.eta[:, 0][None, :]
    exact = 2 ** -0.5 * np.exp(-y ** 2 / 4 - eta ** 2 / 4 - 0.5j * eta * y)
    checks = [_check("stft_closed_form", np.max(np.abs(res.values - exact)), 1e-8),
              _check("stft_parseval", _stft_parseval(rng), 1e-8)]
    small = Grid.uniform(-8.0, 8.0, 64)
    xs = small.points()[:, 0]
    write_stft_csv(os.path.join(out_dir, "stft_gaussian.csv"),
                   stft(WavefunctionGrid(small, np.exp(-xs ** 2 / 2), 1.0), gaussian_window(1.0)))
    failed = [c["name"] for c in checks if not c["pass"]]
    report = {"command": "stft-check", "version": __version__, "config": cfg.as_dict(),
              "checks": checks, "failed": failed, "pass": not failed}
    _dump_json(os.path.join(out_dir, "report.json"), report)
    return report
