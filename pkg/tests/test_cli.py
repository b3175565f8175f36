import json

import pytest
import yaml

from nashchannel.cli import EXIT_BUDGET, EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_OK, build_parser, main
from nashchannel.config import fixture_path


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def jsonl(out):
    return [json.loads(line) for line in out.splitlines()]


def test_check_text(capsys):
    code, out, _ = run(capsys, "check")
    assert code == EXIT_OK
    assert "monotonic: PASS" in out and "no-veto:   PASS" in out
    assert "t_hat=t1, t_bar=t2, a_hat=a1, a_bar=a2, n_hat={Apple, Lily}, l=2" in out


def test_check_failure_exit_code(capsys, tmp_path):
    data = yaml.safe_load(fixture_path().read_text())
    data["payoffs"]["Apple"]["ddd"] = 5
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(yaml.safe_dump(data))
    code, out, _ = run(capsys, "check", "--config", str(cfg), "--format", "jsonl")
    assert code == EXIT_CHECK_FAILED
    lam = [r for r in jsonl(out) if r["record"] == "lambda"][0]
    assert lam["ok"] is False and lam["candidates"][0]["lambda4"] is False


def test_run_jsonl(capsys):
    code, out, _ = run(capsys, "run", "--grid", "19x10", "--format", "jsonl")
    assert code == EXIT_OK
    records = jsonl(out)
    stages = [r["name"] for r in records if r["record"] == "stage"]
    assert stages == ["axioms", "lambda", "lemma1", "run", "verdict"]
    (r,) = [r["run"] for r in records if r["record"] == "run"]
    assert r["label"] == "CCC" and r["outcome"] == "a1" and r["rule"] == 1
    assert r["messages"] == [["a1", "t1", 0]] * 3
    assert records[-1] == {"record": "verdict", "passed": True, "failed_stage": None, "true_state": "t2"}


def test_run_fails_in_other_state(capsys):
    code, out, _ = run(capsys, "run", "--true-state", "t1", "--grid", "5x5")
    assert code == EXIT_CHECK_FAILED
    assert "stopped at stage lambda" in out


def test_run_frequency_table(capsys, tmp_path):
    data = yaml.safe_load(fixture_path().read_text())
    data["run"]["plans"] = {"Apple": {"theta": "pi/2", "phi": "pi/4", "fallback": ["a4", "t1", 0]}}
    cfg = tmp_path / "dev.yaml"
    cfg.write_text(yaml.safe_dump(data))
    code, out, _ = run(capsys, "run", "--config", str(cfg), "--grid", "5x5", "--seed-count", "500",
                       "--format", "jsonl")
    rows = [r for r in jsonl(out) if r["record"] == "frequency"]
    assert sum(r["count"] for r in rows) == 500
    assert {r["label"] for r in rows} <= {"CCC", "DCC", "CDD", "DDD"}
    assert abs(sum(r["probability"] for r in rows) - 1) < 1e-9


def test_equilibria(capsys):
    code, out, _ = run(capsys, "equilibria", "--true-state", "t1", "--z-cap", "1")
    assert code == EXIT_OK
    assert "{a1}" in out


def test_budget_exit_code(capsys):
    code, _, err = run(capsys, "equilibria", "--budget", "10")
    assert code == EXIT_BUDGET
    assert "budget" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--grid", "1x1"],
        ["run", "--true-state", "t7"],
        ["bench", "--n-range", "9"],
        ["check", "--config", "/nonexistent.yaml"],
        ["frobnicate"],
    ],
)
def test_input_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_INPUT
    assert err


def test_config_error_mentions_line(capsys, tmp_path):
    original = fixture_path().read_text()
    text = original.replace("      Lily: [a3, a1, a2, a4]\n", "")
    assert text != original
    cfg = tmp_path / "gap.yaml"
    cfg.write_text(text)
    code, _, err = run(capsys, "check", "--config", str(cfg))
    assert code == EXIT_INPUT
    assert "line" in err and "Lily" in err


def test_bench_rows(capsys):
    code, out, _ = run(capsys, "bench", "--n-range", "4:6", "--repetitions", "2", "--format", "jsonl")
    assert code == EXIT_OK
    rows = jsonl(out)
    assert [r["n"] for r in rows] == [4, 5, 6]
    assert rows[0]["ratio"] is None and rows[1]["ratio"] > 0


def test_parser_help_lists_subcommands():
    text = build_parser().format_help()
    for name in ("check", "run", "equilibria", "bench"):
        assert name in text


def test_run_frequencies_for_half_flip(capsys, tmp_path):
    data = yaml.safe_load(fixture_path().read_text())
    data["run"]["plans"] = {"Apple": {"theta": "pi/2", "phi": "pi/2", "fallback": ["a4", "t1", 0]}}
    cfg = tmp_path / "half.yaml"
    cfg.write_text(yaml.safe_dump(data))
    runs = 100_000
    code, out, _ = run(capsys, "run", "--config", str(cfg), "--grid", "5x5", "--seed-count", str(runs),
                       "--format", "jsonl")
    assert code == EXIT_OK
    rows = {r["label"]: r for r in jsonl(out) if r["record"] == "frequency"}
    # the flip leaves Apple's and Lily's bits correlated: half CCC, half with both flipped
    assert set(rows) == {"CCC", "CDD"}
    sigma = (0.25 / runs) ** 0.5
    for r in rows.values():
        assert r["probability"] == pytest.approx(0.5, abs=1e-12)
        assert abs(r["count"] / runs - 0.5) < 3 * sigma
