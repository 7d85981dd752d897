import json
import math

import numpy as np
import pytest

from semifio.cli import main
from semifio.errors import ConfigurationError, InvalidInputError
from semifio.grid import coherent_state, Grid, read_wfgrid
from semifio.harness import (auto_lattice, fit_loglog, load_config, parse_config,
                             propagate_one)


# -- configuration -------------------------------------------------------------

def test_parse_config():
    raw = parse_config("""
        # comment
        run.eps = 0.1, 0.05   # trailing comment
        potential.name = harmonic
        potential.name = cosine
    """)
    assert raw == {"run.eps": "0.1, 0.05", "potential.name": "cosine"}


def test_parse_config_rejects_garbage():
    with pytest.raises(ConfigurationError):
        parse_config("run.eps 0.1")


def test_load_config_from_file(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("potential.name = harmonic\npotential.omega = 2.0\nstate.q0 = 1, 0\n"
                    "state.p0 = 0, 1\ntheta.value = 2, 0.5j; 0.5j, 1\n")
    cfg = load_config(path, {"run.T": "0.5"})
    assert cfg.d == 2 and cfg.T == 0.5
    assert cfg.potential_params == {"omega": 2.0}
    np.testing.assert_allclose(cfg.theta, [[2, 0.5j], [0.5j, 1]])


@pytest.mark.parametrize("key,value", [
    ("run.eps", "1.5"), ("run.eps", "0"), ("run.seed", "-1"), ("run.seed", "x"),
    ("run.T", "-1"), ("state.q0", "0, 1"), ("potential.name", "quartic"),
    ("bogus.key", "1"), ("quadrature.spacing", "0"), ("theta.value", "1; 2"),
])
def test_load_config_rejects(key, value):
    with pytest.raises(ConfigurationError):
        load_config(None, {key: value})


def test_non_admissible_theta_message():
    with pytest.raises(ConfigurationError, match="admissible spreading violated"):
        load_config(None, {"theta.value": "-1"})


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "nope.cfg")


# -- fitting ---------------------------------------------------------------------------

EPS = [0.2, 0.1, 0.05, 0.025]


def test_fit_exact_linear_law():
    slope, intercept, resid = fit_loglog([(e, 3 * e) for e in EPS])
    assert slope == pytest.approx(1.0, abs=1e-12)
    assert intercept == pytest.approx(math.log(3), abs=1e-12)
    assert resid <= 1e-12


def test_fit_quadratic_law():
    assert fit_loglog([(e, e * e) for e in EPS])[0] == pytest.approx(2.0, abs=1e-12)


def test_fit_noisy_synthetic():
    rng = np.random.default_rng(20240521)
    eps = np.geomspace(0.2, 0.0125, 5)
    err = 0.7 * eps * (1 + 0.05 * rng.standard_normal(eps.size))
    assert abs(fit_loglog(zip(eps, err))[0] - 1.0) <= 0.1


def test_fit_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        fit_loglog([(0.1, 0.0), (0.05, 1.0)])
    with pytest.raises(InvalidInputError):
        fit_loglog([(0.1, 1.0)])


# -- automatic lattice -----------------------------------------------------------------------

def test_auto_lattice_covers_state():
    eps = 0.05
    phi = coherent_state(Grid.uniform(-4, 4, 512), 0.5, -0.3, eps)
    quad = auto_lattice(phi)
    (ylo, yhi), = quad.y_box
    (elo, ehi), = quad.eta_box
    s = math.sqrt(eps)
    assert ylo < 0.5 - 6 * s and yhi > 0.5 + 6 * s
    assert elo < -0.3 - 6 * s and ehi > -0.3 + 6 * s
    assert quad.dy[0] == pytest.approx(0.25 * s)


def test_propagate_one_harmonic():
    cfg = load_config(None, {"potential.name": "harmonic", "run.eps": "0.05",
                             "run.T": repr(math.pi / 2)})
    assert propagate_one(cfg, 0.05, math.pi / 2)["l2_error"] <= 2e-3


# -- command line ----------------------------------------------------------------------------

def _run(tmp_path, *args):
    out = tmp_path / "out"
    return main([*args, "--out", str(out)]), out


def test_cli_propagate_free(tmp_path):
    code, out = _run(tmp_path, "propagate", "--set", "potential.name=free",
                     "--set", "run.eps=0.1", "--set", "run.T=1")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["result"]["l2_error"] <= 2e-3
    assert rep["config"]["potential.name"] == "free"
    assert read_wfgrid(out / "fio.wfgrid").eps == 0.1
    assert (out / "trajectory.csv").exists() and (out / "timings.json").exists()


def test_cli_propagate_zero_time(tmp_path):
    code, out = _run(tmp_path, "propagate", "--set", "run.T=0")
    assert code == 0
    assert json.loads((out / "report.json").read_text())["result"]["l2_error"] <= 1e-3


def test_cli_propagate_is_deterministic(tmp_path):
    args = ["propagate", "--set", "potential.name=harmonic", "--set", "run.eps=0.1"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    for name in ("report.json", "fio.wfgrid", "reference.wfgrid", "trajectory.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_validate_default_passes(tmp_path):
    code, out = _run(tmp_path, "validate")
    rep = json.loads((out / "report.json").read_text())
    assert code == 0 and rep["pass"] and rep["failed"] == []
    assert {c["name"] for c in rep["checks"]} >= {
        "identity_reconstruction", "rescaling_free", "ipp_harmonic", "ipp2_harmonic",
        "mollifier_independence", "symplectic_defect", "prefactor_consistency",
        "lemma_identity", "stft_parseval"}


def test_cli_validate_coarse_quadrature_fails(tmp_path, capsys):
    code, out = _run(tmp_path, "validate", "--set", "quadrature.spacing=1.5")
    assert code == 1
    rep = json.loads((out / "report.json").read_text())
    assert "identity_reconstruction" in rep["failed"]
    assert "identity_reconstruction" in capsys.readouterr().err


def test_cli_bad_theta_exit_2(tmp_path, capsys):
    code, _ = _run(tmp_path, "validate", "--set", "theta.value=-1")
    assert code == 2
    assert "admissible spreading violated" in capsys.readouterr().err


def test_cli_converge_single_eps_exit_2(tmp_path):
    assert _run(tmp_path, "converge", "--set", "run.eps=0.1")[0] == 2


def test_cli_converge_requires_decreasing_eps(tmp_path):
    assert _run(tmp_path, "converge", "--set", "run.eps=0.05,0.1,0.2,0.4")[0] == 2


def test_cli_bad_override_and_threads(tmp_path):
    assert _run(tmp_path, "validate", "--set", "novalue")[0] == 2
    assert _run(tmp_path, "validate", "--threads", "0")[0] == 2


def test_cli_converge_harmonic_flags_floor(tmp_path):
    code, out = _run(tmp_path, "converge", "--set", "potential.name=harmonic",
                     "--set", "run.eps=0.2,0.1,0.05,0.025", "--set", f"run.T={math.pi / 2!r}")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["quadrature_floor"] and not rep["fit"]["reliable"]
    assert all(r["l2_error"] <= 2e-3 for r in rep["rows"])
    lines = (out / "converge.csv").read_text().splitlines()
    assert lines[0] == "# semifio-converge v1" and len(lines) == 6


def test_cli_ehrenfest_free(tmp_path):
    code, out = _run(tmp_path, "ehrenfest", "--set", "potential.name=free",
                     "--set", "run.eps=0.1,0.05,0.025")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["rows"][0]["T"] == pytest.approx(0.25 * math.log(10))
    # free flow is quadratic: errors stay at the quadrature and reference floor
    assert max(r["l2_error"] for r in rep["rows"]) <= 2e-3
    assert "np.float64" not in (out / "ehrenfest.csv").read_text()


def test_cli_stft_check(tmp_path):
    code, out = _run(tmp_path, "stft-check", "--seed", "17")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["run.seed"] == "17"
    assert (out / "stft_gaussian.csv").read_text().startswith("# semifio-stft v1")


def test_cli_seed_range():
    with pytest.raises(SystemExit):
        main(["validate", "--seed", str(2 ** 64)])
