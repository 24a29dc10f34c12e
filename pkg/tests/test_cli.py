import json

import pytest

from stripwalk.cli import EX_FAIL, EX_NOINPUT, EX_OK, EX_USAGE, run

ZERO_Q_ROW = """
kind = "strip"
m = 2
epsilon = 0.05
[[atom]]
prob = 1.0
P = [[0.25, 0.25], [0.2, 0.2]]
Q = [[0.0, 0.0], [0.2, 0.2]]
R = [[0.5, 0.0], [0.0, 0.2]]
"""


def _run(capsys, argv):
    code = run(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_unknown_subcommand(capsys):
    code, _, err = _run(capsys, ["frobnicate", "--spec", "x"])
    assert code == EX_USAGE and "unknown subcommand" in err


def test_bad_flag_is_usage_error(capsys):
    assert _run(capsys, ["classify", "--spec", "builtin:scalar_symmetric", "--nope"])[0] == EX_USAGE
    assert _run(capsys, [])[0] == EX_USAGE


def test_unreadable_spec(capsys, tmp_path):
    assert _run(capsys, ["validate", "--spec", str(tmp_path / "none.toml")])[0] == EX_NOINPUT
    bad = tmp_path / "bad.toml"
    bad.write_text("not [ toml")
    assert _run(capsys, ["validate", "--spec", str(bad)])[0] == EX_NOINPUT


def test_validate_names_failing_clause(capsys, tmp_path):
    f = tmp_path / "zq.toml"
    f.write_text(ZERO_Q_ROW)
    code, out, err = _run(capsys, ["validate", "--spec", str(f)])
    assert code == EX_FAIL
    assert "(I-R)^-1 Q" in err and "false" in out


def test_validate_shipped(capsys):
    code, out, _ = _run(capsys, ["validate", "--spec", "builtin:strip2_mirror"])
    assert code == EX_OK and "# spec_digest: " in out and "# seed: 0" in out


def test_classify_scalar(capsys):
    code, out, _ = _run(capsys, ["classify", "--spec", "builtin:scalar_symmetric",
                                 "--n", "200000", "--format", "json"])
    assert code == EX_OK
    doc = json.loads(out)
    row = doc["tables"]["lyapunov"][0]
    assert row["regime"] == "recurrent_candidate"
    assert abs(row["lambda_hat"]) <= 3 * row["std_error"]
    assert doc["header"]["version"] and doc["header"]["seed"] == 0


def test_sinai_small_t_is_flagged(capsys):
    code, out, err = _run(capsys, ["sinai", "--spec", "builtin:scalar_symmetric", "--t", "1000",
                                   "--envs", "4", "--walks", "3"])
    assert code == EX_OK
    assert "too small" in err
    summary = out.split("## summary\n")[1].split("\n")[1].split("\t")
    assert summary[5] == "true"


def test_timestamps_only_on_request(capsys):
    argv = ["hitting", "--spec", "builtin:strip2_mirror", "--a", "-3", "--b", "3"]
    assert "timestamp" not in _run(capsys, argv)[1]
    assert "# timestamp: " in _run(capsys, argv + ["--with-timestamps"])[1]


@pytest.mark.parametrize("argv", [
    ["sinai", "--spec", "builtin:scalar_symmetric", "--t", "1000", "--t", "5000",
     "--envs", "6", "--walks", "4", "--seed", "1"],
    ["clt", "--spec", "builtin:oned_zero_drift", "--t", "200", "--walks", "300",
     "--envs", "2"],
])
def test_output_independent_of_workers(capsys, argv):
    outs = set()
    for k in (1, 4, 8):
        code, out, _ = _run(capsys, argv + ["--workers", str(k)])
        assert code == EX_OK
        outs.add(out)
    assert len(outs) == 1


def test_out_file(capsys, tmp_path):
    f = tmp_path / "o.tsv"
    code, out, _ = _run(capsys, ["potential", "--spec", "builtin:strip2_mirror", "--a", "-5",
                                 "--b", "5", "--out", str(f)])
    assert code == EX_OK and out == ""
    body = f.read_text()
    assert body.count("\n") > 11 and "phi_minus" in body


def test_selftest_passes(capsys):
    code, out, _ = _run(capsys, ["selftest"])
    assert code == EX_OK and "false" not in out


def test_clt_needs_oned(capsys):
    assert _run(capsys, ["clt", "--spec", "builtin:strip2_mirror", "--t", "10"])[0] == EX_FAIL


def test_valley_rows(capsys):
    code, out, _ = _run(capsys, ["valley", "--spec", "builtin:scalar_symmetric", "--t", "1e5"])
    assert code == EX_OK and "## valley" in out


def test_bad_t_is_usage(capsys):
    assert _run(capsys, ["valley", "--spec", "builtin:scalar_symmetric", "--t", "0.5"])[0] == EX_USAGE
