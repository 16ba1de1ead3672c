import json
import subprocess
import sys

import numpy as np
import pytest

from rounduq import interchange
from rounduq.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_critical_sizes(capsys):
    code, out, _ = run(capsys, "critical-sizes", "--zeta", "0.99", "--fmt", "fp16")
    assert code == 0
    assert out.splitlines()[0] == "# rounduq critical-sizes"
    assert out.splitlines()[-1] == "0.99,fp16,3,8"


def test_outputs_are_byte_identical(capsys):
    args = ("dot", "--n", "64", "--trials", "20", "--fmt", "fp16", "--model", "--seed", "3")
    a = run(capsys, *args)[1]
    b = run(capsys, *args)[1]
    assert a == b
    c = run(capsys, *args[:-1], "4")[1]
    assert a != c


def test_validation_exit_codes(capsys):
    assert run(capsys, "critical-sizes", "--zeta", "1.5")[0] == 2
    # argument errors are reported by the parser with the same code
    for argv in (["bounds-table", "--fmt", "fp7"], ["no-such-command"], ["dot", "--trials", "0"]):
        with pytest.raises(SystemExit) as e:
            main(argv)
        assert e.value.code == 2


def test_numerical_exit_code(capsys, tmp_path):
    sysf = tmp_path / "t.csv"
    sysf.write_text("0,1,1\n1,1,0\n")
    b = tmp_path / "b.csv"
    b.write_text("1,1\n")
    code, _, err = run(capsys, "thomas", "--system", str(sysf), "--b", str(b))
    assert code == 3 and "ZeroPivot" in err


def test_out_and_env_directory(capsys, tmp_path, monkeypatch):
    dest = tmp_path / "x.csv"
    assert run(capsys, "critical-sizes", "--zeta", "0.9", "--out", str(dest))[0] == 0
    assert dest.read_text().startswith("# rounduq critical-sizes")
    monkeypatch.setenv("ROUNDUQ_OUT_DIR", str(tmp_path / "env"))
    code, out, _ = run(capsys, "critical-sizes", "--zeta", "0.9")
    assert code == 0 and out == ""
    assert (tmp_path / "env" / "critical-sizes.csv").read_text() == dest.read_text()


def test_json_report(capsys):
    code, out, _ = run(capsys, "dot", "--n", "2048", "--trials", "50", "--fmt", "fp16", "--format", "json")
    doc = json.loads(out)
    assert code == 0
    assert doc["header"]["schema"] == "rounduq.dot.v1"
    assert doc["bounds"]["DBEA"]["valid"] is False
    assert doc["coverage"]["DBEA"] is None


def test_file_inputs(capsys, tmp_path):
    A = tmp_path / "A.bin"
    interchange.write_matrix_bin(A, np.array([[1.0, 2.0], [3.0, 4.5]]))
    x = tmp_path / "x.csv"
    interchange.write_matrix_csv(x, np.array([[1.0], [0.25]]))
    res = tmp_path / "y.bin"
    code, out, _ = run(capsys, "matvec", "--A", str(A), "--x", str(x), "--result", str(res))
    assert code == 0
    assert np.array_equal(interchange.read_vector(res), [1.5, 4.125])
    assert json.loads(out)["measured_bwd"] == 0.0


def test_bvp_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("M = 16\nn_samples = 3\nfmt = fp32\nseed = 4\n")
    code, out, _ = run(capsys, "bvp", "--config", str(cfg))
    assert code == 0
    rows = [r for r in out.splitlines() if not r.startswith("#")]
    assert len(rows) == 1 + 3
    code, out2, _ = run(capsys, "bvp", "--config", str(cfg), "--n-samples", "2")
    assert len([r for r in out2.splitlines() if not r.startswith("#")]) == 1 + 2
    cfg.write_text("M = 16\nbogus = 1\n")
    assert run(capsys, "bvp", "--config", str(cfg))[0] == 2


def test_edf_model_check(capsys, tmp_path):
    code, out, _ = run(capsys, "edf-model-check", "--op", "mul", "--samples", "5000",
                       "--edf-out", str(tmp_path / "e"))
    assert code == 0
    assert all(line.endswith(",true") for line in out.splitlines()[4:])
    assert list(tmp_path.iterdir())


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "rounduq", "critical-sizes", "--zeta", "0.5"],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0
    assert r.stdout.splitlines()[-2:] == ["0.5,fp16,1,2", "0.5,fp32,1,2"]
