import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracreg import cli
from fracreg.cli import ExperimentConfig, emit, main, normalize, parse_config
from fracreg.errors import ConfigError, ParseError
from fracreg.formula import parse_formula
from fracreg.grid1d import make_grid, sample_closed_form


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# --- formula grammar ------------------------------------------------------------------

def test_constant_formula():
    f = parse_formula("1")
    np.testing.assert_array_equal(f(np.linspace(-1, 1, 5)), np.ones(5))
    assert f.is_constant()


def test_bump_formula():
    f = parse_formula("bump(0,0.5)", (-1.0, 1.0))
    x = np.linspace(-0.99, 0.99, 397)
    v = f(x)
    assert np.all(v[np.abs(x) >= 0.5] == 0)
    assert f(np.array([0.0]))[0] > 0


def test_formula_matches_sampler():
    g = make_grid(-1, 1, 255)
    f = parse_formula("(1-x^2)^0.5")
    np.testing.assert_array_equal(sample_closed_form(g, f).values,
                                  sample_closed_form(g, lambda x: (1 - x ** 2) ** 0.5).values)


@pytest.mark.parametrize("text,x,expected", [
    ("2*x+1", 0.5, 2.0),
    ("-x^2", 3.0, -9.0),
    ("2^3^2", 0.0, 512.0),
    ("exp(0)+cos(pi)+sin(0)", 0.2, 0.0),
    ("1/4/2", 0.0, 0.125),
    ("1e-3*x", 2.0, 2e-3),
    ("+x - -x", 1.5, 3.0),
])
def test_grammar(text, x, expected):
    assert parse_formula(text)(np.array([x]))[0] == pytest.approx(expected, rel=1e-15)


def test_distance_variable():
    f = parse_formula("d^0.5", (-1.0, 1.0))
    assert f(np.array([0.75]))[0] == pytest.approx(0.5)
    with pytest.raises(ConfigError):
        parse_formula("d")(np.array([0.0]))


@pytest.mark.parametrize("text,pos", [("1 + * 2", 4), ("cos(x", 5), ("x $ 2", 2), ("foo(x)", 0),
                                      ("1 2", 2)])
def test_parse_error_position(text, pos):
    with pytest.raises(ParseError) as info:
        parse_formula(text)
    assert info.value.position == pos


def test_empty_formula():
    with pytest.raises(ParseError):
        parse_formula("   ")


# --- configuration --------------------------------------------------------------------

finite = st.floats(-1e6, 1e6, allow_nan=False)
lambdas = st.one_of(st.none(), finite.map(complex), st.builds(complex, finite, finite.filter(bool)))


@st.composite
def configs(draw):
    command = draw(st.sampled_from(["dirichlet", "resolvent", "heat", "traces", "paper-suite"]))
    kw = dict(command=command, a=draw(st.floats(0.01, 0.99)), n=draw(st.integers(4, 4096)),
              M=draw(st.integers(1, 6)), seed=draw(st.one_of(st.none(), st.integers(0, 2 ** 32))),
              scheme=draw(st.sampled_from(["ImplicitEuler", "CrankNicolson"])),
              mu=draw(st.one_of(st.none(), st.floats(-0.99, 5))),
              rhs=draw(st.sampled_from(["1", "x^2+1", "bump(0,0.5)", "exp(-d)"])),
              out=draw(st.sampled_from(["out", "runs/a b"])))
    lo = draw(st.floats(-100, 100))
    kw["domain"] = (lo, lo + draw(st.floats(1e-3, 100)))
    if command == "resolvent":
        kw["lam"] = draw(lambdas.filter(lambda z: z is not None))
    if command == "heat":
        dt = draw(st.floats(1e-4, 1.0))
        kw.update(dt=dt, t_end=dt * draw(st.floats(1.0, 100.0)))
    return ExperimentConfig(**kw)


@settings(max_examples=100, deadline=None)
@given(configs())
def test_config_round_trip(cfg):
    assert parse_config(emit(cfg)) == cfg
    assert normalize(emit(cfg)) == emit(cfg)


def test_normalize_fills_defaults_and_ignores_layout():
    text = "# comment\ncommand=resolvent\n  lambda = -1   \na=0.3\n"
    again = normalize(text)
    assert normalize(again) == again
    cfg = parse_config(again)
    assert cfg.lam == -1 and cfg.a == 0.3 and cfg.n == 512 and cfg.potential is None


@pytest.mark.parametrize("text", [
    "command = dirichlet\na = 1.5\n",
    "command = dirichlet\nbogus = 1\n",
    "command = dirichlet\na = 0.3\na = 0.4\n",
    "command = resolvent\n",
    "command = dirichlet\nlambda = 2\n",
    "command = heat\ndt = 0.1\n",
    "command = dirichlet\nrhs = cos(\n",
    "command = dirichlet\nscheme = Euler\n",
    "command = nope\n",
    "command = dirichlet\nn = ten\n",
    "command = dirichlet\ndomain = 1,0\n",
    "command = probe\n",
    "command = dirichlet\nM = 9\n",
    "command dirichlet\n",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_order_range_message(capsys):
    assert main(["dirichlet", "--a", "1.5"]) == 2
    assert "0 < a < 1" in capsys.readouterr().err


def test_print_config(capsys):
    assert main(["resolvent", "--lambda", "-1", "--a", "0.3", "--print-config"]) == 0
    out = capsys.readouterr().out
    assert parse_config(out).lam == -1


def test_config_file_and_flag_override(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("command = dirichlet\na = 0.25\nn = 64\n")
    args = cli.build_parser().parse_args(["dirichlet", "--config", str(path), "--n", "32"])
    cfg = cli.config_from_args(args)
    assert cfg.a == 0.25 and cfg.n == 32


def test_missing_config_file(tmp_path):
    assert main(["dirichlet", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_workers_env(monkeypatch):
    monkeypatch.setenv(cli.WORKERS_ENV, "3")
    assert cli.max_workers() == 3
    monkeypatch.setenv(cli.WORKERS_ENV, "0")
    assert cli.max_workers() == 1
    monkeypatch.setenv(cli.WORKERS_ENV, "many")
    with pytest.raises(ConfigError):
        cli.max_workers()


# --- runs -----------------------------------------------------------------------------

def test_dirichlet_run(tmp_path):
    out = tmp_path / "d"
    assert main(["dirichlet", "--a", "0.5", "--n", "512", "--rhs", "1", "--out", str(out)]) == 0
    rows = read_csv(out / "solution.csv")
    assert rows[0] == ["x", "u", "u_over_d_mu", "d"]
    x = np.array([float(r[0]) for r in rows[1:]])
    u = np.array([float(r[1]) for r in rows[1:]])
    assert np.abs(u - np.sqrt(1 - x ** 2)).max() <= 2e-2
    report = read_csv(out / "report.csv")
    assert report[0] == ["endpoint", "quantity", "value", "stderr", "verdict"]
    gam = [float(r[2]) for r in report[1:] if r[1] == "gamma0_mu"]
    assert gam == pytest.approx([1.2533] * 2, rel=1e-3)
    manifest = (out / "manifest.txt").read_text()
    for key in ("a = 0.5", "n = 512", "residual_norm", "numpy", "scipy", "version", "h = "):
        assert key in manifest


def test_manifest_recomputes_report(tmp_path):
    out = tmp_path / "m"
    assert main(["traces", "--a", "0.3", "--n", "256", "--lambda", "-1", "--M", "2", "--out", str(out)]) == 0
    lines = (out / "manifest.txt").read_text().splitlines()
    cfg = parse_config("\n".join(l for l in lines if not l.startswith("#") and l.split("=")[0].strip() in cli.KEYS))
    rerun = tmp_path / "m2"
    cfg = ExperimentConfig(**{**cfg.__dict__, "out": str(rerun)})
    assert cli.run(cfg) == 0
    assert (out / "report.csv").read_bytes() == (rerun / "report.csv").read_bytes()


def test_verdict_failure_exit(tmp_path):
    out = tmp_path / "p"
    code = main(["probe", "--a", "0.3", "--n", "512", "--potential", "bump(0,0.5)", "--out", str(out)])
    assert code == 1
    verdicts = {r[1]: r[4] for r in read_csv(out / "report.csv")[1:] if r[4] in ("pass", "fail")}
    assert verdicts["limited-regularity-exhibited"] == "fail"


def test_probe_pass(tmp_path):
    # at n = 512 the control's discretization c_2a is still resolvable above 3 stderr
    out = tmp_path / "p"
    assert main(["probe", "--a", "0.3", "--n", "1024", "--lambda", "-1", "--out", str(out)]) == 0


def test_solver_error_exit(tmp_path):
    from fracreg.fraclap import assemble
    lam = np.linalg.eigvalsh(assemble(0.3, make_grid(-1, 1, 64)).entries)[0]
    code = main(["resolvent", "--a", "0.3", "--n", "64", "--lambda", repr(float(lam)),
                 "--out", str(tmp_path / "s")])
    assert code == 3


def test_heat_and_decompose_runs(tmp_path):
    assert main(["heat", "--a", "0.5", "--n", "128", "--dt", "0.1", "--t-end", "2",
                 "--out", str(tmp_path / "h")]) == 0
    quantities = [r[1] for r in read_csv(tmp_path / "h" / "report.csv")[1:]]
    assert any(q.startswith("gamma0_mu(t=") for q in quantities)
    assert main(["decompose", "--a", "0.25", "--n", "512", "--M", "1", "--out", str(tmp_path / "c")]) == 0
    dec = read_csv(tmp_path / "c" / "decomposition.csv")
    assert dec[0] == ["x", "u", "singular_part", "remainder"]


def test_complex_resolvent_run(tmp_path):
    out = tmp_path / "z"
    assert main(["resolvent", "--a", "0.3", "--n", "128", "--lambda", "1+2j", "--out", str(out)]) == 0
    assert "real part" in (out / "manifest.txt").read_text()


def test_determinism(tmp_path):
    argv = ["schrodinger", "--a", "0.75", "--n", "256", "--potential", "1+x^2", "--seed", "5"]
    assert main(argv + ["--out", str(tmp_path / "one")]) == 0
    assert main(argv + ["--out", str(tmp_path / "two")]) == 0
    for name in ("solution.csv", "report.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
