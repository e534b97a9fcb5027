import csv
import json
import math

import pytest

from parabolica.cli import EXIT_USAGE, main, parse_config


def _csv_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def test_kepler_table(tmp_path):
    out = tmp_path / "k"
    rc = main(["kepler", "--u0", "1", "--table", "S", "--a", "0", "--b-grid", "0.1:5:50",
               "--s", "1", "--out", str(out)])
    assert rc == 0
    text = (out / "kepler_S.csv").read_text()
    assert text.startswith("# manifest_sha256 ")
    rows = _csv_rows(out / "kepler_S.csv")
    assert sum(r["tag"] == "grid" for r in rows) == 50
    alpha_row = [r for r in rows if r["tag"] == "alpha"][0]
    assert abs(float(alpha_row["G"])) < 1e-8
    assert float(alpha_row["b"]) == pytest.approx((4.5) ** (1 / 3))


def test_outputs_are_reproducible(tmp_path):
    args = ["kepler", "--u0", "2", "--b-grid", "0.5:2:5"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "kepler_S.csv").read_bytes() == (tmp_path / "b" / "kepler_S.csv").read_bytes()
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert m["subcommand"] == "kepler" and len(m["manifest_sha256"]) == 64


def test_config_file_and_flag_precedence(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[common]\nseed = 5\nmasses = 1,2\n[kepler]\nu0 = 2.5\n")
    cfg = parse_config(["kepler", "--config", str(ini), "--seed", "9"])
    assert cfg.seed == 9 and cfg.provenance["seed"] == "flag"
    assert cfg.u0 == 2.5 and cfg.provenance["u0"] == "file:kepler"
    assert cfg.masses == [1.0, 2.0]


@pytest.mark.parametrize("body, key", [
    ("[common]\nbogus = 1\n", "bogus"),
    ("[common]\ntol = abc\n", "tol"),
    ("[kepler]\nx_i = random\n", "x_i"),
])
def test_bad_config_is_a_usage_error(tmp_path, capsys, body, key):
    ini = tmp_path / "bad.ini"
    ini.write_text(body)
    assert main(["kepler", "--config", str(ini), "--out", str(tmp_path)]) == EXIT_USAGE
    assert key in capsys.readouterr().err


def test_bad_flags(tmp_path, capsys):
    assert main(["central", "--masses", "1,-1", "--out", str(tmp_path)]) == EXIT_USAGE
    assert "masses" in capsys.readouterr().err
    assert main(["nosuch"]) == EXIT_USAGE
    assert main(["kepler", "--table", "Q", "--out", str(tmp_path)]) == EXIT_USAGE


def test_central_and_minimize(tmp_path):
    assert main(["central", "--restarts", "8", "--out", str(tmp_path / "c")]) == 0
    cc = json.loads((tmp_path / "c" / "central.json").read_text())
    assert cc["u0"] == pytest.approx(3.0, rel=1e-9)
    rc = main(["minimize", "--nodes", "300", "--restarts", "8", "--out", str(tmp_path / "m")])
    assert rc == 0
    rep = json.loads((tmp_path / "m" / "report.json").read_text())
    assert rep["converged"] and rep["radial_lower_bound"]["ok"]
    assert (tmp_path / "m" / "path.csv").read_text().startswith("# manifest_sha256")


def test_testpath_and_excess(tmp_path):
    assert main(["testpath", "--instances", "3", "--restarts", "8", "--out", str(tmp_path / "t")]) == 0
    assert main(["excess", "--s-list", "10", "--samples", "2", "--nodes", "400", "--restarts", "8",
                 "--out", str(tmp_path / "e")]) == 0


def test_verify_exit_zero(tmp_path):
    rc = main(["verify", "--eps", "1e-3", "--s", "1000", "--samples", "100", "--restarts", "8",
               "--out", str(tmp_path)])
    assert rc == 0


def test_parabolic_two_bodies(tmp_path):
    rc = main(["parabolic", "--masses", "1,1", "--seed", "7", "--restarts", "4",
               "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    alpha = rep["central"]["alpha"]
    assert abs(rep["summary"]["final"]["r_over_t23"] - alpha) < 0.05 * alpha
    assert len(list((tmp_path / "paths").glob("*.csv"))) == 9
    rows = _csv_rows(tmp_path / "diagnostics.csv")
    assert math.isfinite(float(rows[-1]["energy"]))
