"""Command-line front end: schemas, exit codes, configuration and replay."""

import csv
import io
import json
import math
from fractions import Fraction

import pytest

from sntrap import __version__
from sntrap.cli import grid, int_range, main
from sntrap.params import get_material, spectral_prefactor
from sntrap.polynomials import p_polynomial


def run(argv):
    buf = io.StringIO()
    code = main(argv, buf)
    return code, buf.getvalue()


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def header(text):
    return text.splitlines()[0].split(",")


# --- golden schemas ------------------------------------------------------------

@pytest.mark.parametrize("argv, columns", [
    (["kernels", "--zeta-grid", "0:2:5"], ["zeta", "i", "i_prime", "combo"]),
    (["polys", "--n", "0:2"], ["n", "power", "coefficient"]),
    (["spectrum", "--levels", "0:2"], ["n1", "n2", "alpha", "m_kg", "omega0", "prefactor", "f_tilde",
                                       "gravitational_part", "transition_energy", "quad_error"]),
    (["dynamics", "--alpha", "10", "--t-end", "0.05", "--samples", "5"], ["t", "x_mean", "u1", "u2", "u3"]),
    (["dynamics", "sweep", "--alpha", "1:10:3:log"], ["alpha", "omega_sn_sq"]),
    (["axial", "--n", "0", "--alpha", "2", "--max-samples", "20000", "--target-rel-err", "0.5",
      "--strata", "4"], ["alpha", "n", "value", "std_error", "ref_1d", "ref_1d_shifted"]),
    (["figures", "fig3", "--family", "sphere", "--points", "2"], ["alpha", "f01", "f12", "f23", "f34"]),
])
def test_column_schema(argv, columns):
    code, out = run(argv)
    assert code == 0
    assert header(out) == columns + ["error"]


def test_polys_prints_exact_fractions():
    code, out = run(["polys", "--n", "1"])
    assert code == 0
    coeffs = [r["coefficient"] for r in rows(out)]
    assert coeffs == [str(Fraction(c)) for c in p_polynomial(1).coeffs]
    assert coeffs[0] == "3/4"


def test_kernels_start_at_unit_self_term():
    code, out = run(["kernels", "--zeta-grid", "0:1:3", "--family", "gaussian"])
    assert code == 0
    r = rows(out)
    assert [float(x["zeta"]) for x in r] == [0.0, 0.5, 1.0]
    assert all(float(x["i"]) > 0 for x in r)


def test_narrow_spectrum_example():
    code, out = run(["spectrum", "--material", "silicon", "--regime", "narrow", "--omega0", "62.83",
                     "--levels", "0:1"])
    assert code == 0
    (r,) = rows(out)
    pref = spectral_prefactor(get_material("silicon"), 62.83)
    assert float(r["prefactor"]) == pytest.approx(pref, rel=1e-12)
    assert pref * 62.83**2 == pytest.approx(0.0023, rel=0.05)
    # the narrow sphere coefficient is -4: a gap of four prefactors above the bare quantum
    assert float(r["gravitational_part"]) == pytest.approx(4 * pref, rel=1e-3)
    assert float(r["transition_energy"]) == pytest.approx(1 + float(r["gravitational_part"]), rel=1e-12)


def test_csv_numbers_round_trip():
    _, out = run(["kernels", "--zeta-grid", "0.3,1.7"])
    for r in rows(out):
        v = float(r["i"])
        assert repr(v) == r["i"]


# --- exit codes ----------------------------------------------------------------

def test_no_arguments_prints_usage(capsys):
    assert main([], io.StringIO()) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    assert main(["spectrum", "--bogus"], io.StringIO()) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_grid_is_usage_error():
    assert main(["kernels", "--zeta-grid", "1:2"], io.StringIO()) == 2


def test_domain_error_exit_two(capsys):
    assert main(["polys", "--n", "15"], io.StringIO()) == 2
    assert "error" in capsys.readouterr().err


def test_version(capsys):
    assert main(["--version"], io.StringIO()) == 0
    assert __version__ in capsys.readouterr().out


def test_convergence_failure_exit_one():
    code, out = run(["axial", "--n", "0", "--alpha", "2", "--max-samples", "2000",
                     "--target-rel-err", "1e-9", "--strata", "4"])
    assert code == 1
    (r,) = rows(out)
    assert r["error"]


# --- grammars -----------------------------------------------------------------

def test_grid_grammar():
    assert grid("0:1:3") == [0.0, 0.5, 1.0]
    assert grid("1:100:3:log") == pytest.approx([1.0, 10.0, 100.0])
    assert grid("1:100:3|log") == pytest.approx([1.0, 10.0, 100.0])
    assert grid("2.5") == [2.5]
    assert int_range("0:3") == [0, 1, 2, 3]
    assert int_range("1,4") == [1, 4]


# --- configuration ------------------------------------------------------------

def test_config_file_sets_values(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[spectrum]\nomega0 = 100\nlevels = 0:1\n")
    code, out = run(["spectrum", "--config", str(cfg)])
    assert code == 0
    (r,) = rows(out)
    assert float(r["omega0"]) == 100.0


def test_flag_overrides_config(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[spectrum]\nomega0 = 100\nlevels = 0:1\n")
    code, out = run(["spectrum", "--config", str(cfg), "--omega0", "50"])
    assert code == 0
    assert float(rows(out)[0]["omega0"]) == 50.0


def test_empty_config_gives_defaults(tmp_path):
    cfg = tmp_path / "empty.ini"
    cfg.write_text("")
    _, plain = run(["spectrum", "--levels", "0:1"])
    code, with_cfg = run(["spectrum", "--levels", "0:1", "--config", str(cfg)])
    assert code == 0
    assert plain == with_cfg
    assert float(rows(plain)[0]["omega0"]) == pytest.approx(2 * math.pi * 10)


def test_missing_config(tmp_path, capsys):
    assert main(["spectrum", "--config", str(tmp_path / "nope.ini")], io.StringIO()) == 2
    assert "not found" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[spectrum]\nfrobnicate = 3\n")
    assert main(["spectrum", "--config", str(cfg)], io.StringIO()) == 2
    assert "frobnicate" in capsys.readouterr().err


def test_config_type_mismatch_names_line(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("# comment\n[spectrum]\nlevels = 0:1\nomega0 = fast\n")
    assert main(["spectrum", "--config", str(cfg)], io.StringIO()) == 2
    err = capsys.readouterr().err
    assert "line 4" in err and "omega0" in err


def test_unknown_config_section(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[nonsense]\na = 1\n")
    assert main(["spectrum", "--config", str(cfg)], io.StringIO()) == 2
    assert "nonsense" in capsys.readouterr().err


# --- manifests ----------------------------------------------------------------

def test_out_writes_csv_and_manifest(tmp_path):
    out = tmp_path / "s.csv"
    code, stdout = run(["spectrum", "--levels", "0:2", "--out", str(out)])
    assert code == 0 and stdout == ""
    meta = json.loads((tmp_path / "s.csv.meta").read_text())
    assert meta["subcommand"] == "spectrum"
    assert meta["version"] == __version__
    assert meta["parameters"]["levels"] == "0:2"
    assert meta["constants_digest"]
    assert "G" in meta["constants"]
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".tmp-")]


@pytest.mark.parametrize("argv", [
    ["spectrum", "--levels", "0:3", "--family", "gaussian", "--alpha", "3.5"],
    ["kernels", "--zeta-grid", "0:3:7", "--m-u", "1e12"],
    ["dynamics", "--alpha", "20", "--t-end", "0.05", "--samples", "7"],
    ["axial", "--n", "0", "--alpha", "2", "--max-samples", "20000", "--target-rel-err", "0.5",
     "--strata", "4"],
    ["figures", "fig4", "--points", "3"],
])
def test_replay_is_byte_identical(tmp_path, argv):
    out = tmp_path / "run.csv"
    assert main(argv + ["--out", str(out)], io.StringIO()) in (0, 1)
    original = out.read_bytes()
    again = tmp_path / "again.csv"
    code = main(["replay", str(out) + ".meta", "--out", str(again), "--check"], io.StringIO())
    assert code == 0
    assert again.read_bytes() == original


def test_replay_check_detects_tampering(tmp_path, capsys):
    out = tmp_path / "run.csv"
    main(["polys", "--n", "0:1", "--out", str(out)], io.StringIO())
    meta = tmp_path / "run.csv.meta"
    man = json.loads(meta.read_text())
    man["csv_sha256"] = "0" * 64
    meta.write_text(json.dumps(man))
    assert main(["replay", str(meta), "--check", "--out", str(tmp_path / "x.csv")], io.StringIO()) == 1
    assert "differs" in capsys.readouterr().err


def test_figures_all_needs_out_dir():
    assert main(["figures", "all"], io.StringIO()) == 2


def test_oracle_energy_report():
    code, out = run(["oracle", "--mode", "it", "--alpha", "10", "--grid-points", "512",
                     "--steps", "20000", "--dt", str(0.002 / (2 * math.pi * 10))])
    assert code == 0
    (r,) = rows(out)
    # eigenvalue = <H0> + <V_g>, with <H0> close to the free ground state
    h0 = float(r["energy"]) - float(r["gravitational"])
    assert h0 == pytest.approx(0.5, abs=1e-3)
    assert float(r["gravitational"]) == pytest.approx(float(r["bracket"]), rel=1e-6)
    assert float(r["gravitational_variable"]) == pytest.approx(float(r["bracket_variable"]), rel=0.05)


def test_oracle_free_energy():
    code, out = run(["oracle", "--mode", "it", "--alpha", "10", "--grid-points", "512", "--lambda-g", "0",
                     "--steps", "20000", "--dt", str(0.002 / (2 * math.pi * 10))])
    assert code == 0
    assert float(rows(out)[0]["energy"]) == pytest.approx(0.5, abs=1e-9)
