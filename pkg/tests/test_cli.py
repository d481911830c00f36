"""
Tests for the cayley-forge command line
"""
import json

import numpy as np
import pytest

from cli.app import dispatch, parse_frame
from cli.report import emit_report
from cayley.errors import BadRange
from store.artifacts import read_artifact


def run(capsys, *argv):
    code = dispatch(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_index(capsys, tmp_path):
    code, out, _ = run(capsys, "--out", str(tmp_path), "index", "--sigma", "0", "--euler", "2",
                       "--self-int", "0", "--dim-s", "0")
    assert code == 0
    assert out.strip() == "1"
    assert json.loads((tmp_path / "index.json").read_text())["index"] == 1


def test_index_parity_error(capsys, tmp_path):
    code, _, err = run(capsys, "--out", str(tmp_path), "index", "--sigma", "1", "--euler", "0",
                       "--self-int", "0", "--dim-s", "0")
    assert code == 2
    assert json.loads(err.strip().splitlines()[-1])["error"] == "ParityError"


def test_check_plane(capsys, tmp_path):
    code, out, _ = run(capsys, "check-plane", "--frame", "e1,e2,e3,e4", "--out", str(tmp_path))
    assert code == 0
    result = json.loads(out)
    assert result["phi"] == pytest.approx(1.0)
    assert result["tau_norm"] == pytest.approx(0.0, abs=1e-12)
    assert result["cayley"] is True
    saved = json.loads((tmp_path / "check_plane.json").read_text())
    assert saved["seed"] == 0


def test_unknown_command(capsys, tmp_path):
    code, out, err = run(capsys, "--out", str(tmp_path), "launch")
    assert code == 2
    assert out == ""
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["success"] is False
    assert payload["error"] == "UnknownCommand"


def test_invalid_config(capsys, tmp_path):
    bad = tmp_path / "bad.conf"
    bad.write_text("t = 0.6\n", encoding="utf-8")
    code, _, err = run(capsys, "--config", str(bad), "--out", str(tmp_path), "index", "--sigma", "0",
                       "--euler", "0", "--self-int", "0", "--dim-s", "0")
    assert code == 2
    assert "ConfigInvalid" in err


def test_angle_test_default_planes(capsys, tmp_path):
    """e1234 and e5678 are at π/2 in every direction"""
    code, out, _ = run(capsys, "angle-test", "--out", str(tmp_path))
    assert code == 0
    result = json.loads(out)
    assert result["sum"] == pytest.approx(2 * np.pi)
    assert result["passes"] is False


def test_angle_test_degenerate(capsys, tmp_path):
    code, _, err = run(capsys, "angle-test", "--plane2", "e1,e2,e3,e4", "--out", str(tmp_path))
    assert code == 3
    assert "Degenerate" in err


def test_index_change(capsys, tmp_path):
    code, out, _ = run(capsys, "index-change", "--delta1", "-0.5", "--delta2", "1.5", "--out", str(tmp_path))
    assert code == 0
    assert out.strip() == "16"


def test_index_change_critical_endpoint(capsys, tmp_path):
    code, _, _ = run(capsys, "index-change", "--delta1", "0", "--delta2", "1.5", "--out", str(tmp_path))
    assert code == 2


def test_rates_report_mismatch_by_default(capsys, tmp_path):
    """The computed table is written, then the comparison fails"""
    code, _, err = run(capsys, "critical-rates", "--range", "-4", "2", "--out", str(tmp_path))
    assert code == 3
    assert "RateTableMismatch" in err
    lines = (tmp_path / "rates.csv").read_text().splitlines()
    assert lines[0] == "# seed=0"
    assert lines[1] == "lambda,d"
    assert len(lines) == 5


def test_rates_without_verification(capsys, tmp_path):
    """--no-verify only writes the computed table"""
    code, out, _ = run(capsys, "critical-rates", "--no-verify", "--out", str(tmp_path))
    assert code == 0
    assert json.loads(out)["rates"] == [[-3.0, 4], [0.0, 4], [1.0, 12]]
    assert (tmp_path / "rates.csv").exists()


def test_glue_writes_artifacts(capsys, tmp_path, small_config):
    code, out, _ = run(capsys, "--config", str(small_config), "--out", str(tmp_path), "glue", "--dump-seams")
    assert code == 0
    result = json.loads(out)
    assert result["min_margin"] >= 0.99
    header, blocks = read_artifact(tmp_path / "glued.bin")
    assert header["part_labels"] == ["upper", "middle", "lower", "leftover"]
    assert blocks["labels"].shape == (result["nodes"],)
    seams = (tmp_path / "seams.csv").read_text().splitlines()
    assert seams[1] == "seam,s,position_jump,derivative_jump"
    assert (tmp_path / "resolved_config.yaml").exists()


def test_outputs_are_deterministic(capsys, tmp_path, small_config):
    """Two runs with the same seed produce identical bytes"""
    outputs = []
    for name in ("a", "b"):
        out_dir = tmp_path / name
        code, _, _ = run(capsys, "--config", str(small_config), "--out", str(out_dir), "--seed", "3", "glue")
        assert code == 0
        outputs.append([(out_dir / f).read_bytes() for f in ("glue.json", "glued.bin", "resolved_config.yaml")])
    assert outputs[0] == outputs[1]


def test_error_scan_svg(capsys, tmp_path, small_config):
    code, out, _ = run(capsys, "--config", str(small_config), "--out", str(tmp_path), "--svg",
                       "error-scan", "--t-list", "0.08,0.04,0.02")
    assert code == 0
    result = json.loads(out)
    assert [row["t"] for row in result["rows"]] == [0.08, 0.04, 0.02]
    assert result["predicted"] == pytest.approx(0.2)
    assert "fitted slope" in (tmp_path / "error_scan.svg").read_text()


def test_empty_csv_report(tmp_path):
    path = emit_report("empty", "csv", tmp_path, seed=0, rows=[], columns=["a", "b"])
    assert path.read_text() == "# seed=0\na,b\n"


def test_report_name_without_directories(tmp_path):
    with pytest.raises(BadRange):
        emit_report("../escape", "json", tmp_path, payload={})


def test_parse_frame():
    frame = parse_frame("e1,-e2,e3,e8")
    assert frame[1, 1] == -1.0
    assert frame[3, 7] == 1.0
    with pytest.raises(BadRange):
        parse_frame("e1,e2,e9,e4")


def test_iterate_converges(capsys, tmp_path, small_config):
    code, out, _ = run(capsys, "--config", str(small_config), "--out", str(tmp_path), "iterate")
    assert code == 0
    result = json.loads(out)
    assert result["converged"] is True
    assert max(result["ratios"]) <= 0.5
    assert (tmp_path / "iterate.csv").exists()
    assert (tmp_path / "normal_field.bin").exists()


def test_iterate_without_convergence_exits_3(capsys, tmp_path, small_config):
    """max_iter exhausted before tol is a numerical failure"""
    with small_config.open("a", encoding="utf-8") as fh:
        fh.write("max_iter = 2\n")
    code, _, err = run(capsys, "--config", str(small_config), "--out", str(tmp_path), "iterate")
    assert code == 3
    assert "NoContraction" in err
    assert not (tmp_path / "normal_field.bin").exists()
