"""
Acceptance criteria, one test each, at the stated tolerances.

Every test records a line ``criterion NN <name>: PASS|FAIL|SOFT-FAIL (...)``;
the lines are printed inline and collected again in the terminal summary.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import json
import math

import numpy as np
import pytest

from semifio.dynamics import LatticeFlow, QuadraticFlow, make_potential
from semifio.fio import (HKSymbol, SymbolOne, apply_fio, auto_quadrature,
                         empirical_operator_norm, ipp2_residual, ipp_residual,
                         mollifier_independence, rescaling_check)
from semifio.grid import Grid, WavefunctionGrid, coherent_state, l2_distance
from semifio.harness import (_stft_parseval, auto_lattice, cmd_converge, cmd_ehrenfest,
                             load_config, propagate_one)
from semifio.lattice import QuadratureSpec
from semifio.stft import gaussian_window, stft
from semifio.symplectic import FieldSpreading, cal_Y, lemma_identity_residual, symplectic_defect

RESULTS = {}

GRID = Grid.uniform(-8.0, 8.0, 512)
CONVERGE_EPS = "0.2, 0.1, 0.05, 0.025"


def record(n, name, ok, detail, soft=False):
    verdict = "PASS" if ok else ("SOFT-FAIL" if soft else "FAIL")
    line = f"criterion {n:02d} {name}: {verdict} ({detail})"
    RESULTS[n] = line
    print(line)
    return ok


@pytest.fixture(scope="module")
def converge_runs(tmp_path_factory):
    cfg = load_config(None, {"potential.name": "cosine", "run.eps": CONVERGE_EPS,
                             "run.T": "1.0"})
    base = tmp_path_factory.mktemp("converge")
    one = cmd_converge(cfg, str(base / "threads1"), threads=1)
    return cfg, base, one


def _ones_v(y, e):
    return np.ones_like(y)


def _ones_w(y, e):
    return np.ones(y.shape[0])


def test_01_identity_reconstruction():
    eps = 0.05
    phi = coherent_state(GRID, 0.5, 0.3, eps)
    quad = auto_lattice(phi)
    field = FieldSpreading(
        lambda y, e: (0.5 + 0.5 * np.exp(-y[:, 0] ** 2) + 0.2j * np.sin(y[:, 0]))[:, None, None],
        np.array([[0.5]]))
    errs = {}
    for label, th in (("I", np.eye(1)), ("2I", 2 * np.eye(1)), ("thawed", field)):
        snap = LatticeFlow(make_potential("free"), th).snapshot(quad, 0.0)
        errs[label] = l2_distance(apply_fio(snap, SymbolOne(), phi), phi)
    detail = ", ".join(f"{k} {v:.2e}" for k, v in errs.items())
    assert record(1, "identity reconstruction", max(errs.values()) <= 1e-3, detail + " <= 1e-3")


@pytest.fixture(scope="module")
def harmonic_runs():
    cfg = load_config(None, {"potential.name": "harmonic", "run.T": repr(math.pi / 2)})
    return {eps: propagate_one(cfg, eps, math.pi / 2) for eps in (0.1, 0.02)}


def test_02_harmonic_exactness(harmonic_runs):
    errs = {eps: r["l2_error"] for eps, r in harmonic_runs.items()}
    detail = ", ".join(f"eps={e} {v:.2e}" for e, v in errs.items())
    assert record(2, "exactness on quadratic Hamiltonians", max(errs.values()) <= 2e-3,
                  detail + " <= 2e-3")


def test_03_order_eps_convergence(converge_runs):
    _, _, rep = converge_runs
    errs = [r["l2_error"] for r in rep["rows"]]
    slope = rep["fit"]["slope"]
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    ok = 0.7 <= slope <= 1.3 and monotone
    detail = f"slope {slope:.3f} in [0.7, 1.3], errors " + ", ".join(f"{e:.2e}" for e in errs)
    assert record(3, "O(eps) convergence", ok, detail)


def test_04_near_unitarity():
    eps = 0.05
    rep = empirical_operator_norm(LatticeFlow(make_potential("cosine")), 1.0, HKSymbol(), eps,
                                  GRID, trials=10, rng=2024)
    ok = 1 - 5 * eps <= rep.min and rep.max <= 1 + 5 * eps
    assert record(4, "near-unitarity", ok,
                  f"norms in [{rep.min:.6f}, {rep.max:.6f}] within [0.75, 1.25]")


def test_05_ipp_identities():
    # at the default spacing 0.25 sqrt(eps) both residuals already sit at the
    # rounding floor, so the refinement ratio is measured from 0.35 sqrt(eps)
    eps = 0.1
    phi = coherent_state(GRID, 0.0, 0.3, eps)
    fixtures = {"harmonic": (QuadraticFlow(1, 1.0), 0.8, 0.5),
                "free": (QuadraticFlow(1, 0.0), 1.0, 1.0)}
    parts, ok = [], True
    for name, (flow, t1, t2) in fixtures.items():
        default = auto_quadrature(0.0, 0.3, eps)
        coarse = auto_quadrature(0.0, 0.3, eps, spacing=0.35)
        fine = coarse.refined()
        for label, fn, t in (("ipp", ipp_residual, t1), ("ipp2", ipp2_residual, t2)):
            r0 = fn(flow, t, _ones_v, _ones_w, phi, default)
            rc = fn(flow, t, _ones_v, _ones_w, phi, coarse)
            rf = fn(flow, t, _ones_v, _ones_w, phi, fine)
            ok &= r0 <= 1e-3 and rf * 4 <= rc
            parts.append(f"{name} {label} {r0:.1e} (refine {rc:.1e}->{rf:.1e})")
    assert record(5, "IPP identities", ok, "; ".join(parts))


def test_06_rescaling():
    vals = {}
    for name, omega, t in (("free", 0.0, 0.5), ("harmonic", 1.0, 1.0)):
        for eps in (0.1, 0.2):
            phi = coherent_state(GRID, 0.5, 0.3, eps)
            snap = QuadraticFlow(1, omega).snapshot(auto_lattice(phi), t)
            vals[f"{name} eps={eps}"] = rescaling_check(snap, HKSymbol(), phi)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in vals.items())
    assert record(6, "rescaling identity", max(vals.values()) <= 1e-3, detail + " <= 1e-3")


def test_07_prefactor_consistency(converge_runs, harmonic_runs):
    _, _, rep = converge_runs
    worst = max([r["prefactor_mismatch"] for r in rep["rows"]]
                + [r["prefactor_mismatch"] for r in harmonic_runs.values()])
    # harmonic lattice through a full period, where sqrt(det Y) returns as -1
    quad = QuadratureSpec.centered(0.5, 0.3, 1.0, 1.0, 0.1)
    times = np.linspace(0.0, 2 * math.pi, 65)
    bundle = LatticeFlow(make_potential("harmonic")).bundle(quad, times)
    period = max(float(np.max(np.abs(bundle.at(t).u0 - bundle.at(t).u0_ode))) for t in times)
    flipped = float(np.max(np.abs(bundle.at(times[-1]).u0 + 1.0)))
    ok = worst <= 1e-6 and period <= 1e-6 and flipped <= 1e-6
    assert record(7, "prefactor consistency", ok,
                  f"criteria 2-3 runs {worst:.1e}, harmonic to 2pi {period:.1e}, "
                  f"|u0(2pi) + 1| {flipped:.1e}")


def test_08_structural_linear_algebra():
    quad = QuadratureSpec.centered(0.5, 0.3, 1.0, 1.0, 0.1)
    times = np.arange(0.0, 20.5, 1.0)
    lemma, det_min, defect = 0.0, np.inf, 0.0
    for name in ("cosine", "harmonic", "free"):
        bundle = LatticeFlow(make_potential(name), np.array([[1.0 + 0.3j]])).bundle(quad, times)
        for t in times:
            snap = bundle.at(t)
            # residuals relative to the size of the monodromy
            scale = np.maximum(1.0, np.max(np.abs(snap.F.matrix()), axis=(-1, -2))) ** 2
            lemma = max(lemma, float(np.max(lemma_identity_residual(snap.F, snap.theta) / scale)))
            defect = max(defect, float(np.max(symplectic_defect(snap.F) / scale)))
            det_min = min(det_min, float(np.min(np.abs(np.linalg.det(cal_Y(snap.F, snap.theta))))))
    ok = lemma <= 1e-12 and det_min > 1e-10 and defect <= 1e-6
    assert record(8, "structural linear algebra", ok,
                  f"lemma {lemma:.1e} <= 1e-12, min |det Y| {det_min:.2e}, "
                  f"defect {defect:.1e} <= 1e-6 for T <= 20")


def test_09_stft_parseval():
    worst = _stft_parseval(np.random.default_rng(99), trials=10)
    x = GRID.coords()[0]
    res = stft(WavefunctionGrid(GRID, np.exp(-x ** 2 / 2), 1.0), gaussian_window(1.0))
    y, eta = res.y[:, 0][:, None], res.eta[:, 0][None, :]
    exact = 2 ** -0.5 * np.exp(-y ** 2 / 4 - eta ** 2 / 4 - 0.5j * eta * y)
    closed = float(np.max(np.abs(res.values - exact)))
    assert record(9, "STFT Parseval", worst <= 1e-8 and closed <= 1e-8,
                  f"Parseval {worst:.1e}, closed form {closed:.1e} <= 1e-8")


def test_10_mollifier_independence():
    eps = 0.1
    phi = coherent_state(GRID, 0.0, 0.5, eps)
    snap = QuadraticFlow(1, 0.0).snapshot(auto_lattice(phi), 1.0)
    rep = mollifier_independence(snap, HKSymbol(), phi, lams=(2, 4, 8, 16))
    d = rep.diffs
    # flat-top mollifiers reach rounding level exactly once lambda covers the
    # momentum support, so later entries may tie at zero
    monotone = all(b <= a for a, b in zip(d, d[1:])) and d[-1] < d[0]
    ok = d[-1] <= 1e-6 and monotone
    assert record(10, "mollifier independence", ok,
                  "lambda 2,4,8,16: " + ", ".join(f"{v:.1e}" for v in d))


def test_11_ehrenfest_soft(tmp_path):
    cfg = load_config(None, {"potential.name": "cosine", "run.eps": "0.1, 0.05, 0.025",
                             "ehrenfest.C_T": "0.25"})
    rep = cmd_ehrenfest(cfg, str(tmp_path), threads=1)
    expo = rep["effective_exponent"]
    errs = ", ".join(f"{r['l2_error']:.2e}" for r in rep["rows"])
    ok = record(11, "Ehrenfest soft check", expo >= 0.7,
                f"exponent {expo:.3f} vs 0.7, errors {errs}", soft=True)
    if not ok:
        pytest.xfail(f"soft criterion: effective exponent {expo:.3f} < 0.7")


def test_12_determinism(converge_runs):
    cfg, base, _ = converge_runs
    cmd_converge(cfg, str(base / "threads4"), threads=4)
    same = {name: (base / "threads1" / name).read_bytes() == (base / "threads4" / name).read_bytes()
            for name in ("converge.csv", "report.json")}
    assert record(12, "determinism", all(same.values()),
                  ", ".join(f"{k} {'identical' if v else 'differs'}" for k, v in same.items())
                  + " for --threads 1 vs 4")
