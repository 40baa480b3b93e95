import json
import math

import pytest

from etbell import io as eio
from etbell.analysis import ChshReport, chsh_from_counts
from etbell.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, EXIT_PARSE, _parse_value, load_config, main
from etbell.errors import ConfigError, ParseError
from etbell.lhv import PostselectionRule, StrategyMixture, check_joint_probabilities
from etbell.quantum import canonical_settings
from etbell.tomography import ReconstructionResult, table2_settings


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def test_parse_value():
    assert _parse_value("pi/4") == pytest.approx(math.pi / 4)
    assert _parse_value("-pi/2") == pytest.approx(-math.pi / 2)
    assert _parse_value("3*pi/4") == pytest.approx(3 * math.pi / 4)
    assert _parse_value("0.5pi") == pytest.approx(math.pi / 2)
    assert _parse_value("42") == 42
    assert _parse_value("hug") == "hug"


def test_load_config(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nvisibility = 0.9\nphi_b2 = -pi/2  # trailing\nseed = 5\n")
    assert load_config(p) == {"visibility": 0.9, "phi_b2": pytest.approx(-math.pi / 2), "seed": 5}
    p.write_text("visibility 0.9\n")
    with pytest.raises(ParseError):
        load_config(p)
    p.write_text("colour = red\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_simulate(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--visibility", "0.9", "--efficiency", "1",
               "--pairs", "1000000", "--seed", "1") == EXIT_OK
    rep = ChshReport.from_json((tmp_path / "chsh.json").read_text())
    assert rep.s == pytest.approx(2.546, abs=0.03)
    table = eio.count_table_from_csv((tmp_path / "counts.csv").read_text())
    assert chsh_from_counts(table) == rep


def test_simulate_no_violation(tmp_path):
    assert run(tmp_path, "simulate", "--visibility", "0.5", "--efficiency", "1",
               "--pairs", "100000", "--seed", "2") == EXIT_OK
    assert json.loads((tmp_path / "chsh.json").read_text())["sigma_violation"] < 0


def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(d, "simulate", "--pairs", "20000", "--seed", "3", "--scheme", "hug") == EXIT_OK
    for f in ("counts.csv", "chsh.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("visibility = 0.5\nseed = 4\npairs_per_setting = 50000\nefficiency = 1\n")
    assert main(["simulate", "--config", str(cfg), "--visibility", "1.0", "--out", str(tmp_path)]) == EXIT_OK
    assert ChshReport.from_json((tmp_path / "chsh.json").read_text()).s > 2.7


@pytest.mark.parametrize("argv", [
    ["simulate"],                                         # no seed
    ["simulate", "--seed", "1", "--visibility", "2"],
    ["simulate", "--seed", "1", "--window", "1e-8"],
    ["simulate", "--seed", "-1"],
    ["simulate", "--bogus"],
    ["lhv"],
    ["tomo"],
    ["fringes", "--seed", "1", "--grid", "0,pi"],
])
def test_config_errors(tmp_path, argv, capsys):
    assert main([*argv, "--out", str(tmp_path)]) == EXIT_CONFIG
    assert capsys.readouterr().err


def test_fringes(tmp_path):
    assert run(tmp_path, "fringes", "--visibility", "0.9", "--efficiency", "1", "--pairs-per-point", "13000",
               "--seed", "5", "--scan-phi-b", "0,-pi/2") == EXIT_OK
    d = json.loads((tmp_path / "fringe_fits.json").read_text())
    assert d["mean_visibility"] == pytest.approx(0.90, abs=0.02)
    scans = eio.fringe_scan_from_csv((tmp_path / "fringes.csv").read_text())
    assert len(scans) == 2
    rep = ChshReport.from_json((tmp_path / "chsh_fit.json").read_text())
    assert rep.method == "from_fit" and rep.s == pytest.approx(2.546, abs=0.05)
    fits = eio.fits_from_json((tmp_path / "fringe_fits.json").read_text())
    # the phi_b = -pi/2 curves lead the phi_b = 0 ones by pi/2
    shift = fits[-math.pi / 2]["11"].phase - fits[0.0]["11"].phase
    assert math.remainder(shift + math.pi / 2, 2 * math.pi) == pytest.approx(0, abs=0.05)


def test_fringes_flat(tmp_path):
    assert run(tmp_path, "fringes", "--visibility", "0", "--efficiency", "1", "--pairs-per-point", "100000",
               "--seed", "6") == EXIT_OK
    fits = eio.fits_from_json((tmp_path / "fringe_fits.json").read_text())
    assert all(f.visibility < 0.02 for per in fits.values() for f in per.values())


def test_tomo_table2(tmp_path):
    assert run(tmp_path, "tomo", "--table2") == EXIT_OK
    r = ReconstructionResult.from_dict(json.loads((tmp_path / "tomography.json").read_text()))
    assert 0 <= r.fidelity_with_phi_plus <= 1


def test_tomo_file_and_parse_error(tmp_path):
    csv = tmp_path / "counts.csv"
    csv.write_text(eio.tomography_to_csv(table2_settings()))
    assert run(tmp_path, "tomo", str(csv), "--subtract-accidentals", "1.0") == EXIT_OK
    lines = csv.read_text().splitlines()
    csv.write_text("\n".join(lines[:8]) + "\n")
    assert run(tmp_path, "tomo", str(csv)) == EXIT_PARSE


def test_tomo_phi_plus(tmp_path):
    from etbell.quantum import bell_phi_plus
    from etbell.tomography import simulate_tomography_counts, with_counts
    csv = tmp_path / "sim.csv"
    csv.write_text(eio.tomography_to_csv(with_counts(table2_settings(),
                                                     simulate_tomography_counts(bell_phi_plus(), 1e6, seed=1))))
    assert run(tmp_path, "tomo", str(csv)) == EXIT_OK
    assert json.loads((tmp_path / "tomography.json").read_text())["fidelity"] >= 0.999


def test_lhv(tmp_path):
    assert run(tmp_path / "n", "lhv", "--rule", "none") == EXIT_OK
    assert json.loads((tmp_path / "n" / "lhv.json").read_text())["s_star"] == pytest.approx(2.0)
    assert run(tmp_path / "f", "lhv", "--rule", "franson", "--target-quantum", "1.0") == EXIT_OK
    d = json.loads((tmp_path / "f" / "lhv.json").read_text())
    w = StrategyMixture.from_json_list(d["reproduction"]["witness"])
    assert check_joint_probabilities(w, PostselectionRule("franson"), canonical_settings(), 1.0) <= 1e-7
    assert run(tmp_path / "h", "lhv", "--rule", "hug", "--target-quantum", "1.0") == EXIT_INFEASIBLE
    d = json.loads((tmp_path / "h" / "lhv.json").read_text())
    assert d["reproduction"]["feasible"] is False


def test_analyze(tmp_path, capsys):
    run(tmp_path, "simulate", "--pairs", "20000", "--seed", "7")
    capsys.readouterr()
    assert main(["analyze", str(tmp_path / "counts.csv")]) == EXIT_OK
    assert ChshReport.from_json(capsys.readouterr().out) == ChshReport.from_json((tmp_path / "chsh.json").read_text())


def test_exit_codes_distinct():
    from etbell import cli
    assert len({cli.EXIT_OK, cli.EXIT_CONFIG, cli.EXIT_PARSE, cli.EXIT_NUMERIC, cli.EXIT_INFEASIBLE}) == 5


def test_numeric_error(tmp_path, capsys):
    from etbell.cli import EXIT_NUMERIC
    csv = tmp_path / "zero.csv"
    rows = [f"{lab},{a:.9g},{b:.9g},0,0,0,0,1" for lab, (a, b) in canonical_settings().pairs().items()]
    csv.write_text(",".join(eio.COUNT_HEADER) + "\n" + "\n".join(rows) + "\n")
    assert main(["analyze", str(csv)]) == EXIT_NUMERIC
    assert "numeric error" in capsys.readouterr().err
