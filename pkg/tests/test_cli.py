import io

import pytest

from graphscan import cli
from graphscan.graph_model import ChangeScenario, make_rng, read_snapshots, sample_sequence, write_snapshots

SMALL = """\
# ten nodes, community of four
num_nodes = 10
community_size = 4
p0 = 0.2
p1 = 0.7   # inside the community after the change
change_point = 3
horizon = 30
"""


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL)
    return path


def test_parse_config_text():
    vals = cli.parse_config_text(SMALL, "run.cfg")
    assert vals["num_nodes"] == (10, "run.cfg:2")
    assert vals["p1"] == (0.7, "run.cfg:5")
    assert vals["change_point"][0] == 3


@pytest.mark.parametrize(
    "text, where",
    [
        ("num_nodes = 10\nfoo = 1\n", "cfg:2"),
        ("num_nodes = ten\n", "cfg:1"),
        ("\n\nnum_nodes 10\n", "cfg:3"),
        ("p0 = 0.2\np0 = 0.3\n", "cfg:2"),
        ("detector = cusum,fast\n", "cfg:1"),
    ],
)
def test_config_errors_cite_line(text, where):
    with pytest.raises(cli.ConfigError) as err:
        cli.parse_config_text(text, "cfg")
    assert err.value.where == where


def test_cross_field_error_cites_line(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("num_nodes = 6\n# comment\ncommunity_size = 7\n")
    assert cli.main(["simulate", "--config", str(path)]) == cli.EXIT_ERROR
    assert f"{path}:3:" in capsys.readouterr().err


def test_flags_override_file(cfg_path, tmp_path):
    out = tmp_path / "s.txt"
    assert cli.main(["simulate", "--config", str(cfg_path), "--horizon", "4", "--out", str(out)]) == 0
    snaps = read_snapshots(io.StringIO(out.read_text()))
    assert len(snaps) == 4 and snaps[0].num_nodes == 10


def test_simulate_matches_library(cfg_path, tmp_path):
    out = tmp_path / "s.txt"
    cli.main(["simulate", "--config", str(cfg_path), "--seed", "9", "--out", str(out)])
    sc = ChangeScenario(10, 4, (0, 1, 2, 3), 0.2, 0.7, change_point=3)
    buf = io.StringIO()
    write_snapshots(sample_sequence(sc, 30, make_rng(9)), buf)
    assert out.read_text() == buf.getvalue()


def test_simulate_change_blocks(tmp_path):
    out = tmp_path / "s.txt"
    cli.main(["simulate", "--num-nodes", "6", "--community-size", "3", "--p0", "0.001", "--p1", "0.999",
              "--change-point", "3", "--horizon", "5", "--seed", "1", "--out", str(out)])
    snaps = read_snapshots(io.StringIO(out.read_text()))
    inside = [sum(g.has_edge(i, j) for i, j in [(0, 1), (0, 2), (1, 2)]) for g in snaps]
    assert inside == [0, 0, 3, 3, 3]
    headers = [line for line in out.read_text().splitlines() if line.endswith(" 6")]
    assert headers == [f"{t} 6" for t in range(1, 6)]


def test_detect_cusum_oracle_alarm(cfg_path, tmp_path):
    sim = tmp_path / "s.txt"
    log = tmp_path / "log.txt"
    cli.main(["simulate", "--config", str(cfg_path), "--seed", "2", "--change-point", "1", "--out", str(sim)])
    code = cli.main(["detect", "--config", str(cfg_path), "--detector", "cusum", "--threshold", "5",
                     "--input", str(sim), "--out", str(log)])
    assert code == cli.EXIT_ALARM
    lines = log.read_text().splitlines()
    last = lines[-1].split()
    assert last[0] == "alarm" and last[3] == "0,1,2,3"
    assert int(last[1]) == len(lines) - 1
    steps = [line.split() for line in lines[:-1]]
    assert [int(s[0]) for s in steps] == list(range(1, len(steps) + 1))
    assert all(s[2] == "0" for s in steps[:-1]) and steps[-1][2] == "1"


def test_detect_glr_log_format(cfg_path, tmp_path):
    sim = tmp_path / "s.txt"
    log = tmp_path / "log.txt"
    cli.main(["simulate", "--config", str(cfg_path), "--change-point", "inf", "--horizon", "6", "--out", str(sim)])
    code = cli.main(["detect", "--config", str(cfg_path), "--threshold", "1000", "--min-lookback", "3",
                     "--max-lookback", "5", "--input", str(sim), "--out", str(log)])
    assert code == cli.EXIT_OK
    lines = log.read_text().splitlines()
    assert lines[0] == "1 -inf 0  " and lines[1] == "2 -inf 0  "
    t, stat, alarm, k, v = lines[2].split(" ")
    assert (t, alarm, k) == ("3", "0", "1") and len(v.split(",")) == 4
    assert lines[-1] == "end 6"


def test_detect_rejects_malformed_input(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("1 5\n0 1\n\n2 5\n3 1\n\n")
    code = cli.main(["detect", "--threshold", "5", "--community-size", "3", "--max-lookback", "4", "--input", str(bad)])
    assert code == cli.EXIT_ERROR
    assert "line 5" in capsys.readouterr().err


def test_threshold_sources_are_exclusive(cfg_path, capsys):
    code = cli.main(["calibrate", "--config", str(cfg_path), "--alpha", "0.05", "--target-arl", "100"])
    assert code == cli.EXIT_ERROR
    assert "only one" in capsys.readouterr().err
    assert cli.main(["calibrate", "--config", str(cfg_path)]) == cli.EXIT_ERROR


def test_calibrate_analytic_csv(tmp_path):
    out = tmp_path / "c.csv"
    cli.main(["calibrate", "--num-nodes", "10", "--community-size", "3", "--alpha", "0.05", "--max-lookback", "20",
              "--out", str(out)])
    header, row = out.read_text().splitlines()
    assert header.startswith("detector,alpha,target_arl,m_alpha,b_analytic")
    assert row.split(",")[:5] == ["glr", "0.05", "", "20", "11.472103"]


def test_localize_returns_planted_set(cfg_path, tmp_path):
    sim = tmp_path / "s.txt"
    out = tmp_path / "v.txt"
    cli.main(["simulate", "--config", str(cfg_path), "--seed", "4", "--out", str(sim)])
    assert cli.main(["localize", "--config", str(cfg_path), "--input", str(sim), "--k", "3", "--out", str(out)]) == 0
    nodes, stat = out.read_text().split()
    assert nodes == "0,1,2,3" and float(stat) > 0


def test_unknown_flag_is_an_error():
    with pytest.raises(SystemExit) as err:
        cli.main(["detect", "--no-such-flag", "1"])
    assert err.value.code == cli.EXIT_ERROR


def test_help_lists_every_setting(capsys):
    with pytest.raises(SystemExit):
        cli.main(["evaluate", "--help"])
    text = capsys.readouterr().out
    for key in cli.SETTINGS:
        assert "--" + key.replace("_", "-") in text


def test_every_command_is_byte_reproducible(cfg_path, tmp_path):
    runs = {
        "simulate": ["--seed", "3"],
        "detect": ["--threshold", "6", "--max-lookback", "8"],
        "calibrate": ["--target-arl", "100", "--max-lookback", "6", "--replications", "50"],
        "evaluate": ["--detector", "cusum,glr", "--max-lookback", "6", "--thresholds", "3,4",
                     "--replications", "20", "--replications-edd", "20"],
        "localize": ["--k", "3", "--t", "12"],
    }
    sim = tmp_path / "input.txt"
    cli.main(["simulate", "--config", str(cfg_path), "--seed", "3", "--out", str(sim)])
    for cmd, extra in runs.items():
        outputs = []
        for rep in range(2):
            out = tmp_path / f"{cmd}{rep}.out"
            argv = [cmd, "--config", str(cfg_path), *extra, "--out", str(out)]
            if cmd in ("detect", "localize"):
                argv += ["--input", str(sim)]
            assert cli.main(argv) in (cli.EXIT_OK, cli.EXIT_ALARM)
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1] and outputs[0]
