import json
import subprocess
import sys

import numpy as np
import pytest

from gse_lab.cli import EXIT_FAIL, EXIT_INVALID, EXIT_OK, main
from gse_lab.core import gse_signature


@pytest.fixture
def files(tmp_path):
    def write(name, obj):
        path = tmp_path / name
        path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
        return str(path)

    return write


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def test_compute(capsys, files):
    p = files("p.json", {"probs": [0.5, 0.3, 0.2]})
    code, out = run(capsys, "compute", "--probs", p, "--orders", "0.5,2")
    assert code == EXIT_OK
    assert out["orders"] == [0.5, 2.0]
    assert out["values"] == pytest.approx([1.0809736435470224, 0.85358367914189747], abs=1e-15)


@pytest.mark.parametrize(
    "probs, orders",
    [([0.5, 0.6], "1"), ([0.5, 0.5], "0"), ([0.5, 0.5], "1,1"), ([1.0], "1")],
)
def test_compute_validation(capsys, files, probs, orders):
    code, _ = run(capsys, "compute", "--probs", files("p.json", {"probs": probs}), "--orders", orders)
    assert code == EXIT_INVALID


def test_missing_file_is_validation_error(capsys, tmp_path):
    assert run(capsys, "compute", "--probs", tmp_path / "nope.json", "--orders", "1")[0] == EXIT_INVALID


def test_signature_from_counts(capsys, files):
    c = files("c.csv", "label,count\na,50\nb,30\nc,20\n")
    code, out = run(capsys, "signature", "--counts", c, "--orders", "2")
    assert code == EXIT_OK
    assert out["values"][0] == pytest.approx(0.85358367914189747, abs=1e-15)


def test_jacobian(capsys, files):
    p = files("p.json", {"probs": [0.5, 0.3, 0.2]})
    code, out = run(capsys, "jacobian", "--probs", p, "--orders", "0.5,2")
    assert code == EXIT_OK
    assert out["principal_minors"]["all_positive"] is True
    code, out = run(capsys, "jacobian", "--probs", p, "--orders", "0.5,2", "--orientation", "category")
    assert out["principal_minors"]["all_positive"] is False


def test_verify_exit_codes(capsys):
    code, out = run(capsys, "verify", "--K", 3, "--samples", 50)
    assert code == EXIT_OK and out["all_positive"]
    code, out = run(capsys, "verify", "--K", 4, "--samples", 300, "--no-all-minors")
    assert code == EXIT_FAIL
    assert out["principal"]["negative"] > 0
    assert out["all_minors"] is None
    assert run(capsys, "verify", "--K", 3, "--orders", "1", "--samples", 5)[0] == EXIT_INVALID
    assert run(capsys, "verify", "--K", 3, "--samples", 0)[0] == EXIT_INVALID


def test_verify_seed_flag_and_env(capsys, monkeypatch):
    _, a = run(capsys, "verify", "--K", 3, "--samples", 10, "--seed", 7)
    _, b = run(capsys, "--seed", 7, "verify", "--K", 3, "--samples", 10)
    monkeypatch.setenv("GSE_LAB_SEED", "7")
    _, c = run(capsys, "verify", "--K", 3, "--samples", 10)
    monkeypatch.delenv("GSE_LAB_SEED")
    _, d = run(capsys, "verify", "--K", 3, "--samples", 10)
    assert a == b == c
    assert a["principal"]["seed"] == 7 and d["principal"]["seed"] == 42
    monkeypatch.setenv("GSE_LAB_SEED", "x")
    assert run(capsys, "verify", "--K", 3, "--samples", 10)[0] == EXIT_INVALID


def test_recover_round_trip(capsys, files):
    sig = gse_signature([0.4, 0.3, 0.2, 0.1], [0.5, 1.0, 3.0])
    s = files("s.json", sig.to_json())
    code, out = run(capsys, "recover", "--K", 4, "--signature", s)
    assert code == EXIT_OK and out["converged"]
    np.testing.assert_allclose(out["distribution"], [0.4, 0.3, 0.2, 0.1], atol=1e-9)
    assert out["method"] == "gauss-newton"


def test_recover_binary(capsys):
    code, out = run(capsys, "recover", "--K", 2, "--orders", "1", "--values", "0.32508297339144824")
    assert code == EXIT_OK and out["method"] == "binary-bisection"
    assert out["distribution"][0] == pytest.approx(0.9, abs=1e-12)


def test_recover_multiplicity(capsys):
    sig = gse_signature([0.35, 0.35, 0.15, 0.15], [2.0])
    code, out = run(capsys, "recover", "--multiplicity", "2,2", "--orders", "2", "--values", sig.values[0])
    assert code == EXIT_OK
    assert out["values"] == pytest.approx([0.35, 0.15], abs=1e-9)


def test_recover_underdetermined_points_to_witness(capsys):
    code = main(["recover", "--K", "4", "--orders", "1,2"])
    err = capsys.readouterr().err
    assert code == EXIT_INVALID and "witness" in err


def test_recover_no_convergence(capsys):
    code, out = run(capsys, "recover", "--K", 3, "--orders", "0.5,2", "--values", "0.3,1.0", "--max-restarts", 2)
    assert code == EXIT_FAIL
    assert out["converged"] is False and "error" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["recover", "--K", "3", "--orders", "1,2"],
        ["recover", "--K", "3", "--values", "0.5,0.4"],
        ["recover", "--orders", "1", "--values", "0.5"],
        ["recover", "--K", "3", "--orders", "1,2", "--values", "0.5"],
        ["recover", "--K", "3", "--orders", "1,2", "--values", "2,2"],
        ["recover", "--K", "3", "--orders", "1,2", "--values", "0.5,0.4", "--tol", "-1"],
    ],
)
def test_recover_validation(capsys, argv):
    assert main(argv) == EXIT_INVALID


def test_witness(capsys, tmp_path):
    out_file = tmp_path / "w.json"
    code = main(["witness", "--K", "4", "--orders", "0.5,2", "--out", str(out_file)])
    assert code == EXIT_OK
    assert capsys.readouterr().out == ""
    w = json.loads(out_file.read_text())
    assert w["signature_gap"] <= 1e-10 and w["separation"] >= 0.02
    assert main(["witness", "--K", "3", "--orders", "1,2"]) == EXIT_INVALID


def test_witness_failure_exit(capsys, files):
    s = files("s.json", {"probs": [0.34, 0.3333, 0.3267]})
    code, out = run(capsys, "witness", "--K", 3, "--orders", "1", "--min-sep", 0.2, "--start", s)
    assert code == EXIT_FAIL and "error" in out


def test_gof_and_twosample(capsys, files):
    c = files("c.csv", "a,400\nb,50\nc,30\nd,20\n")
    q = files("q.json", {"probs": [0.25] * 4})
    code, out = run(capsys, "gof", "--counts", c, "--null", q, "--B", 199)
    assert code == EXIT_OK and out["p_value"] == pytest.approx(0.005)
    b = files("b.json", {"counts": [100, 120, 90, 110]})
    code, out = run(capsys, "twosample", "--a", c, "--b", b, "--B", 99, "--orders", "1,2")
    assert code == EXIT_OK and out["orders"] == [1.0, 2.0]
    assert run(capsys, "gof", "--counts", c, "--null", q, "--B", 5)[0] == EXIT_INVALID
    bad = files("bad.csv", "a,5\n")
    assert run(capsys, "gof", "--counts", bad, "--null", q)[0] == EXIT_INVALID


def test_output_is_byte_identical(capsys, files):
    c = files("c.csv", "30\n25\n25\n20\n")
    q = files("q.json", {"probs": [0.3, 0.3, 0.2, 0.2]})
    main(["gof", "--counts", c, "--null", q, "--B", "99", "--seed", "3"])
    first = capsys.readouterr().out
    main(["gof", "--counts", c, "--null", q, "--B", "99", "--seed", "3"])
    assert capsys.readouterr().out == first


def test_module_entry_point(files):
    p = files("p.json", {"probs": [0.5, 0.3, 0.2]})
    res = subprocess.run(
        [sys.executable, "-m", "gse_lab", "compute", "--probs", p, "--orders", "1"],
        capture_output=True, text=True, check=False,
    )
    assert res.returncode == 0
    assert json.loads(res.stdout)["values"][0] == pytest.approx(1.0296530140645735, abs=1e-15)
    res = subprocess.run([sys.executable, "-m", "gse_lab", "bogus"], capture_output=True, text=True, check=False)
    assert res.returncode == 2


def test_verify_fixed_orders_example(capsys):
    code, out = run(capsys, "verify", "--K", 4, "--orders", "0.5,1.5,3", "--samples", 1000, "--seed", 7)
    assert code == EXIT_OK
    assert out["principal"]["negative"] == 0 and out["principal"]["indeterminate"] == 0
    # the wider all-minors family is reported alongside and is not all positive
    assert out["all_minors"]["negative"] > 0


def test_recover_refusal_example(capsys):
    assert main(["recover", "--K", "5", "--orders", "1,2"]) == EXIT_INVALID
    assert "witness" in capsys.readouterr().err


def test_witness_example(capsys):
    code, out = run(capsys, "witness", "--K", 3, "--orders", 2, "--min-sep", 0.05)
    assert code == EXIT_OK and out["separation"] >= 0.05


def test_compute_bad_sum_names_field(capsys, files):
    code = main(["compute", "--probs", files("bad.json", {"probs": [0.5, 0.4]}), "--orders", "1"])
    assert code == EXIT_INVALID
    assert "probs" in capsys.readouterr().err
