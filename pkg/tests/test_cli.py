import json

import pytest
import repackage

repackage.up()
from src.cli.cli import run
from src.cli.suite import run_suite


def invoke(capsys, *argv) -> tuple[int, dict]:
    code = run(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip().startswith("{") else {}


@pytest.fixture(scope="module", name="quick_suite")
def fixture_quick_suite():
    yield run_suite(0, quick=True, only=["AC-01", "AC-02", "AC-05"])


def test_dist_qnorm(capsys):
    code, report = invoke(capsys, "dist", "--p", "0,0,0", "--q", "3,0,16")
    assert code == 0 and report["result"]["qn"] == pytest.approx(5.0)


def test_report_meta(capsys):
    _, report = invoke(capsys, "--seed", "7", "dist", "--p", "0,0,0", "--q", "1,0,0")
    assert report["meta"]["seed"] == 7 and report["meta"]["group"] == "heisenberg1"


def test_dist_wrong_dimension(capsys):
    code, report = invoke(capsys, "dist", "--p", "0,0", "--q", "1,0,0")
    assert code == 1 and report["error"]["code"] == "input_error"


def test_unknown_group(capsys):
    code, report = invoke(capsys, "--group", "nosuch", "group-check")
    assert code == 1 and "neither a built-in group" in report["error"]["message"]


def test_missing_option_is_usage_error(capsys):
    assert run(["dist", "--p", "0,0,0"]) == 2


def test_group_check_engel(capsys):
    code, report = invoke(capsys, "--group", "engel", "group-check")
    assert code == 0 and report["result"]["homogeneous_dimension"] == 7


def test_pansu_dilation(capsys):
    code, report = invoke(capsys, "pansu", "--map", "dilation:2", "--point", "0.2,-0.1,0.3")
    assert code == 0 and report["result"]["differential"]["matrix"][2][2] == pytest.approx(4.0, rel=1e-4)


def test_levelset_gradient(capsys):
    _, report = invoke(capsys, "levelset", "--field", "coordinate:1", "--level", "0", "--point", "0,0.5,0.2")
    assert report["result"]["surface_density"] == pytest.approx(1.0, abs=1e-6)


def test_levelset_tangent_at_pole(capsys):
    _, report = invoke(capsys, "levelset", "--field", "quasi_sphere", "--point", "0,0,1", "--report", "tangent")
    assert report["result"]["verdict"] == "not_applicable"


def test_levelset_off_level(capsys):
    code, report = invoke(capsys, "levelset", "--field", "quasi_sphere", "--point", "0,0,2", "--report", "characteristic")
    assert code == 1 and "off the level set" in report["error"]["message"]


def test_out_writes_report_and_tables(capsys, tmp_path):
    out = tmp_path / "dim.json"
    code = run(["--out", str(out), "dim", "--n", "2000"])
    assert code == 0 and out.exists() and (tmp_path / "dim_counts.csv").exists()


def test_suite_quick_subset(quick_suite):
    assert quick_suite["summary"]["all_passed"] is True


def test_suite_unknown_item():
    result = run_suite(0, quick=True, only=["AC-99"])
    assert result["summary"]["errors"] == ["AC-99"]


def test_set_file_with_text_cell(capsys, tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0.1,0.2,0.3\n0.1,abc,0\n", encoding="utf-8")
    code, report = invoke(capsys, "dim", "--set", str(path))
    assert code == 1 and report["error"]["code"] == "input_error"


def test_suite_reports_repeat_byte_for_byte(capsys):
    argv = ["--seed", "3", "--threads", "2", "suite", "--quick", "--only", "AC-04,AC-05"]
    run(argv)
    first = capsys.readouterr().out
    run(argv)
    assert capsys.readouterr().out == first and first.startswith("{")


def test_suite_determinism_item_reruns_threaded_items():
    item = run_suite(0, quick=True, only=["AC-15"])["items"]["AC-15"]
    assert item["items"] == ["AC-01", "AC-04", "AC-08", "AC-11"] and item["threads"] >= 2
