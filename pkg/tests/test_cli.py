import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

import topokde.harness as H
from topokde import densities as D
from topokde.cli import main, read_columns
from topokde.exceptions import EmptyInput, ParseError


def run(argv, capsys):
    try:
        code = main([str(a) for a in argv])
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def parse_estimate(text):
    meta, rows, header = {}, [], None
    for line in text.splitlines():
        if line.startswith("# ") and "=" in line:
            k, v = line[2:].split("=", 1)
            meta[k] = v
        elif line.startswith("#"):
            continue
        elif header is None:
            header = line.split(",")
        else:
            rows.append([float(v) for v in line.split(",")])
    return meta, header, np.array(rows)


@pytest.fixture
def values(tmp_path):
    rng = np.random.default_rng(1)
    p = tmp_path / "x.txt"
    np.savetxt(p, np.r_[rng.normal(0, 1, 100), rng.normal(5, 1, 100)])
    return p


def test_estimate_default(values, capsys):
    code, out, _ = run(["estimate", values], capsys)
    assert code == 0
    meta, header, rows = parse_estimate(out)
    assert rows.shape[0] == 100 == int(meta["n_h"])
    assert float(meta["h_hat"]) > 0 and meta["selector"] == "tde"
    assert header[:2] == ["x", "f"] and header[2:4] == ["lower_0.1", "upper_0.1"]
    assert len(meta["u_profile"].split()) == 100
    assert int(meta["m_hat"]) == 2


def test_estimate_cv_same_schema(values, capsys, tmp_path):
    out_file = tmp_path / "est.csv"
    code, _, _ = run(["estimate", values, "--kernel", "epanechnikov", "--selector", "cv",
                      "--out", out_file], capsys)
    assert code == 0
    meta, header, rows = parse_estimate(out_file.read_text())
    _, header_tde, _ = parse_estimate(main_out(values, capsys))
    assert header == header_tde
    assert meta["selector"] == "cv" and meta["kernel"] == "epanechnikov"
    assert set(meta) >= {"h_hat", "m_hat", "u_profile", "n_h", "kernel", "levels"}


def main_out(values, capsys):
    return run(["estimate", values], capsys)[1]


def test_estimate_tde_stable(values, capsys):
    code, out, _ = run(["estimate", values, "--selector", "tde-stable"], capsys)
    meta, _, rows = parse_estimate(out)
    assert code == 0 and meta["selector"] == "tde-stable" and rows.shape[0] == 100


def test_estimate_ndjson(values, capsys):
    code, out, _ = run(["estimate", values, "--format", "ndjson"], capsys)
    lines = [json.loads(s) for s in out.splitlines()]
    assert code == 0 and lines[0]["record"] == "meta" and len(lines) == 101
    assert lines[0]["h_hat"] > 0 and "lower_0.01" in lines[1]


def test_estimate_point_mass(tmp_path, capsys):
    p = tmp_path / "same.txt"
    p.write_text("3.5\n" * 10)
    code, out, err = run(["estimate", p], capsys)
    meta, _, rows = parse_estimate(out)
    assert code == 0
    assert float(meta["h_hat"]) == 0.0 and meta["m_hat"] == "1"
    np.testing.assert_array_equal(rows, [[3.5, 1.0]])
    assert "warning" in err


def test_estimate_parse_error(tmp_path, capsys):
    p = tmp_path / "bad.txt"
    p.write_text("1.0\n# comment\n2,5\n")
    # a comma splits fields; one column is expected, so extra fields are ignored
    assert run(["estimate", p], capsys)[0] == 0
    p.write_text("1.0\n2.0\nabc\n")
    code, _, err = run(["estimate", p], capsys)
    assert code == 2 and "line 3" in err
    p.write_text("1.0\ninf\n")
    code, _, err = run(["estimate", p], capsys)
    assert code == 2 and "line 2" in err


def test_estimate_empty_input(tmp_path, capsys):
    p = tmp_path / "empty.txt"
    p.write_text("# nothing\n\n")
    assert run(["estimate", p], capsys)[0] == 2
    assert run(["estimate", tmp_path / "missing.txt"], capsys)[0] == 2


def test_read_columns(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("x,f\n1e-3, 2.5E+01\n-4 0.5\n")
    np.testing.assert_array_equal(read_columns(p, 2), [[1e-3, 25.0], [-4.0, 0.5]])
    p.write_text("1\n")
    with pytest.raises(ParseError, match="line 1"):
        read_columns(p, 2)
    p.write_text("")
    with pytest.raises(EmptyInput):
        read_columns(p, 1)


def test_usage_errors(capsys, values):
    assert run(["estimate", values, "--bogus"], capsys)[0] == 1
    assert run([], capsys)[0] == 1
    assert run(["estimate", values, "--kernel", "box"], capsys)[0] == 1
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--help"])
    assert exc.value.code == 0
    assert "default: 250" in capsys.readouterr().out


def write_curve(path, x, f):
    path.write_text("x,f\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(x, f)))


def test_decompose_unimodal(tmp_path, capsys):
    p = tmp_path / "c.csv"
    write_curve(p, [0, 1, 2, 3, 4], [0, 1, 2, 1, 0])
    code, out, _ = run(["decompose", p, "--out", tmp_path / "d.csv"], capsys)
    assert code == 0 and out.strip() == "ucat=1"
    table = np.loadtxt(tmp_path / "d.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(table[:, 2], table[:, 1])
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "x,f,u1"


def test_decompose_grid_family(tmp_path, capsys):
    t = D.pdf_on_grid("fkm:1:5")
    p = tmp_path / "f.csv"
    write_curve(p, t.x, t.f)
    code, out, err = run(["decompose", p, "--verify"], capsys)
    assert code == 0 and "ucat=3" in out and "verify: ok" in err
    body = [s for s in out.splitlines() if not s.startswith(("ucat", "#"))]
    assert body[0] == "x,f,u1,u2,u3"
    table = np.array([[float(v) for v in s.split(",")] for s in body[1:]])
    np.testing.assert_allclose(table[:, 2:].sum(axis=1), table[:, 1], rtol=0,
                               atol=1e-9 * table[:, 1].max())


def test_decompose_negative(tmp_path, capsys):
    p = tmp_path / "n.csv"
    write_curve(p, [0, 1, 2], [1, -1, 1])
    assert run(["decompose", p], capsys)[0] == 2


def test_estimate_then_decompose_round_trip(values, tmp_path, capsys):
    est = tmp_path / "est.csv"
    dec = tmp_path / "dec.csv"
    assert run(["estimate", values, "--out", est], capsys)[0] == 0
    assert run(["decompose", est, "--out", dec, "--verify"], capsys)[0] == 0
    table = np.loadtxt(dec, delimiter=",", skiprows=1)
    np.testing.assert_allclose(table[:, 2:].sum(axis=1), table[:, 1], rtol=1e-12, atol=1e-15)


def bench(tmp_path, name, capsys, *extra):
    out = tmp_path / name
    code, _, _ = run(["bench", "--families", "f4", "--n", "25", "--N", "2", "--seed", "7",
                      "--out", out, *extra], capsys)
    return code, out


def test_bench_is_reproducible(tmp_path, capsys):
    c1, a = bench(tmp_path, "a", capsys)
    c2, b = bench(tmp_path, "b", capsys)
    assert c1 == c2 == 0
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["records"] == 8 and manifest["failures"] == 0
    assert "records.ndjson" in manifest["files"]


def test_bench_threads_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("TDE_THREADS", "4")
    _, a = bench(tmp_path, "a", capsys)
    monkeypatch.setenv("TDE_THREADS", "1")
    _, b = bench(tmp_path, "b", capsys)
    assert (a / "records.ndjson").read_bytes() == (b / "records.ndjson").read_bytes()


def test_bench_c45_export_and_svg(tmp_path, capsys):
    code, out = bench(tmp_path, "s", capsys, "--measure", "c45", "--format", "svg",
                      "--kernel", "gaussian")
    assert code == 0
    csv_lines = (out / "hist" / "c45__f4__gaussian.csv").read_text().splitlines()
    assert csv_lines[0] == "bin_lo,bin_hi,tde:25,cv:25"
    assert len(csv_lines) == 51
    assert float(csv_lines[1].split(",")[0]) == -4.0
    assert float(csv_lines[-1].split(",")[1]) == 0.25
    root = ET.parse(out / "hist" / "c45__f4__gaussian.svg").getroot()
    assert root.tag.endswith("svg")
    assert not (out / "hist" / "ucat__f4__gaussian.csv").exists()


def test_bench_grid_family_summary(tmp_path, capsys):
    out = tmp_path / "g"
    code, _, _ = run(["bench", "--families", "fkm:3:6", "--n", "50", "--N", "2",
                      "--kernel", "gaussian", "--out", out], capsys)
    assert code == 0
    header = (out / "summary.csv").read_text().splitlines()[0].split(",")
    assert "ucat_correct" in header
    assert (out / "hist" / "ucat__fkm3__gaussian__n50.csv").exists()


def test_bench_partial_failure_exit_code(tmp_path, capsys, monkeypatch):
    real = H._run_selector

    def boom(selector, *args):
        if selector == "cv":
            raise RuntimeError("synthetic")
        return real(selector, *args)

    monkeypatch.setattr(H, "_run_selector", boom)
    code, out = bench(tmp_path, "f", capsys, "--kernel", "gaussian")
    assert code == 3
    assert json.loads((out / "manifest.json").read_text())["failures"] == 2


def test_bench_config_errors(tmp_path, capsys):
    base = ["bench", "--out", tmp_path / "x"]
    assert run(base + ["--N", "0"], capsys)[0] == 1
    assert run(base + ["--families", "f9"], capsys)[0] == 1
    assert run(base + ["--n", "25,abc"], capsys)[0] == 1
    assert run(base + ["--families", "f4", "--N", "1", "--n", "25", "--measure", "c9"],
               capsys)[0] == 1


def test_report(tmp_path, capsys):
    _, out = bench(tmp_path, "r", capsys)
    code, text, _ = run(["report", out / "records.ndjson"], capsys)
    assert code == 0
    assert text == (out / "summary.csv").read_text()
    code, _, _ = run(["report", out / "records.ndjson", "--out", tmp_path / "rep",
                      "--format", "svg", "--measure", "ucat,h_diff"], capsys)
    assert code == 0
    assert (tmp_path / "rep" / "hist" / "ucat__f4__epanechnikov.svg").exists()
    bad = tmp_path / "bad.ndjson"
    bad.write_text("{not json}\n")
    assert run(["report", bad], capsys)[0] == 2


def test_module_entry_point(values):
    proc = subprocess.run([sys.executable, "-m", "topokde", "estimate", str(values), "--nh", "10"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "# n_h=10" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "topokde", "frobnicate"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 1
