from __future__ import annotations

from joinfree.cli import main
from joinfree.query import dumps_query
from joinfree.streams import write_events
from joinfree.workloads import fig1_query, fig6_events


def _files(tmp_path, events=None):
    qf = tmp_path / "q.yaml"
    qf.write_text(dumps_query(fig1_query()))
    tf = tmp_path / "t.csv"
    with tf.open("w") as fh:
        write_events(fh, events if events is not None else fig6_events())
    return str(qf), str(tf)


def test_plan(tmp_path, capsys):
    qf, _ = _files(tmp_path)
    assert main(["plan", qf]) == 0
    out = capsys.readouterr().out
    assert "free_connex=true" in out and "q_hierarchical=false" in out and "* tree" in out


def test_plan_inline_atoms(capsys):
    assert main(["plan", "R1(x1,x2) R2(x2,x3)", "--output", "x1,x3"]) == 0
    assert "masked=x2" in capsys.readouterr().out


def test_run_verify(tmp_path, capsys):
    qf, tf = _files(tmp_path)
    assert main(["run", qf, tf, "--verify"]) == 0
    cap = capsys.readouterr()
    assert "+,1,2,4,4" in cap.out and "+,2,2,4,4" in cap.out
    assert "verified=true" in cap.err


def test_run_full_mode_to_file(tmp_path, capsys):
    qf, tf = _files(tmp_path)
    out = tmp_path / "o.txt"
    assert main(["run", qf, tf, "--mode", "full:18", "--out", str(out)]) == 0
    assert out.read_text().startswith("# full 18 2\n")


def test_enclosureness(tmp_path, capsys):
    qf, tf = _files(tmp_path)
    assert main(["enclosureness", qf, tf]) == 0
    out = capsys.readouterr().out
    assert "insertion_only=true" in out and "tree_lambda=1" in out


def test_gen_then_run(tmp_path, capsys):
    q, t = str(tmp_path / "g.yaml"), str(tmp_path / "g.csv")
    assert main(["gen", "3hop", "--edges", "80", "--window", "20", "--selectivity", "0.5", "--query-out", q, "--trace-out", t]) == 0
    assert main(["run", q, t, "--verify"]) == 0
    assert main(["gen", "random-star", "--n", "30", "--query-out", q, "--trace-out", t]) == 0
    assert main(["run", q, t, "--mode", "agg", "--verify"]) == 0


def test_usage_and_io_errors(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.yaml"), "x.csv"]) == 1
    assert main(["gen", "nonsense"]) == 1
    qf, _ = _files(tmp_path)
    bad = tmp_path / "bad.csv"
    bad.write_text("+,R1,1\n")
    assert main(["run", qf, str(bad)]) == 1
    try:
        main(["frobnicate"])
    except SystemExit as exc:
        assert exc.code == 1


def test_verify_failure_exit_code(tmp_path, capsys, monkeypatch):
    import joinfree.cli as cli
    from joinfree.runner import RunReport

    def broken(*a, **k):
        rep = RunReport()
        rep.verify_failures.append("event 1: delta mismatch")
        rep.verified = False
        return rep

    monkeypatch.setattr(cli, "run", broken)
    qf, tf = _files(tmp_path)
    assert main(["run", qf, tf, "--verify"]) == 2
