import io
import json

import pytest

from skorokhod import cli

UNIFORM = '{"pieces": [{"kind": "uniform", "lo": -1, "hi": 1, "p": 1}]}'
U02 = '{"pieces": [{"kind": "uniform", "lo": 0, "hi": 2, "p": 1}]}'


def call(*argv):
    buf = io.StringIO()
    rc = cli.run(list(argv), buf)
    return rc, buf.getvalue()


@pytest.fixture
def files(tmp_path):
    (tmp_path / "u.json").write_text(UNIFORM)
    (tmp_path / "u02.json").write_text(U02)
    (tmp_path / "bad.json").write_text('{"atoms": [{"x": 1, "p": 1}]}')
    (tmp_path / "q.csv").write_text("strike,price\n0.5,0.5\n1,0.1\n1.5,0\n")
    return tmp_path


def test_bounds_json(files):
    rc, out = call("bounds", "--measure", str(files / "u.json"), "--payoff", "power:1")
    assert rc == 0
    doc = json.loads(out)
    assert doc["ay"]["value"] == pytest.approx(0.5, abs=1e-9)
    assert doc["perkins"]["value"] == pytest.approx(1 / 3, abs=1e-9)
    assert doc["manifest"]["inputs"]
    assert doc["manifest"]["subcommand"] == "bounds"


def test_boundary_csv(files):
    rc, out = call("boundary", "--named", "uniform", "--grid", "0.25,0.5", "--csv")
    assert rc == 0
    lines = out.splitlines()
    assert lines[0].startswith("# manifest:")
    assert lines[1] == "s,beta,alpha_plus,alpha_minus,b,error_estimate"
    s, beta, ap, am = map(float, lines[2].split(",")[:4])
    assert s == 0.25 and beta == pytest.approx(-0.5, abs=1e-12)
    assert ap == pytest.approx(0.25 - 1.0) and am == pytest.approx(-0.25 + 1.0)


def test_varswap(files):
    rc, out = call("varswap", "--spot", "1", "--measure", str(files / "u02.json"))
    doc = json.loads(out)
    assert rc == 0 and doc["upper"] == "inf"
    assert doc["lower"] == pytest.approx(0.1845019657, abs=1e-9)


def test_simulate_is_reproducible(files):
    argv = ("simulate", "--named", "three-atom", "--embedding", "perkins", "--paths", "300", "--dt", "1e-3",
            "--seed", "4", "--payoff", "power:1")
    a, b = call(*argv), call(*argv)
    assert a[0] == 0 and a == b
    doc = json.loads(a[1])
    assert doc["summary"]["num_paths"] == 300
    assert "backend" not in doc["summary"]


def test_global_flags_either_side(files):
    a = call("--csv", "ingest", "--quotes", str(files / "q.csv"), "--spot", "1")
    b = call("ingest", "--quotes", str(files / "q.csv"), "--spot", "1", "--csv")
    assert a[0] == 0 and a[1] == b[1]


def test_ingest(files):
    rc, out = call("ingest", "--quotes", str(files / "q.csv"), "--spot", "1")
    doc = json.loads(out)
    assert rc == 0 and doc["mean_error"] < 1e-12 and doc["max_quote_residual"] < 1e-12


def test_diffusion(files, tmp_path):
    (tmp_path / "b.json").write_text('{"atoms": [{"x": 0.5, "p": 0.25}, {"x": 1.5, "p": 0.75}]}')
    rc, out = call("diffusion", "--model", "bessel3", "--x0", "1", "--measure", str(tmp_path / "b.json"),
                   "--payoff", "power:1")
    doc = json.loads(out)
    assert rc == 0
    assert doc["bounds"]["ay"]["value"] == pytest.approx(0.1732867951, abs=1e-8)


def test_converge_distances_only():
    rc, out = call("converge", "--fixture", "escaping-mass", "--n", "2,10")
    doc = json.loads(out)
    assert rc == 0
    assert [r["distance"]["potential_at_zero_exact"] for r in doc["results"]] == ["5/4", "109/100"]


def test_output_file(files):
    target = files / "out.json"
    rc, out = call("bounds", "--named", "uniform", "--running", "constant:1", "--output", str(target))
    assert rc == 0 and out == ""
    assert json.loads(target.read_text())["ay"]["value"] == pytest.approx(1 / 3, abs=1e-9)


@pytest.mark.parametrize("argv, code", [
    (("bounds", "--measure", "missing.json", "--payoff", "power:1"), 2),
    (("bounds", "--named", "uniform", "--payoff", "cubic:1"), 2),
    (("bounds", "--named", "uniform"), 2),
    (("frobnicate",), 2),
    (("converge", "--fixture", "nope", "--n", "2"), 2),
    (("bounds", "--named", "uniform", "--payoff", "reldd", "--embedding", "ay"), 0),
    (("simulate", "--named", "pareto", "--paths", "200", "--dt", "1e-3", "--level-cap", "0.5"), 3),
])
def test_exit_codes(argv, code, capsys):
    rc, _ = call(*argv)
    assert rc == code


def test_invalid_measure_file(files):
    rc, _ = call("bounds", "--measure", str(files / "bad.json"), "--payoff", "power:1")
    assert rc == 2
