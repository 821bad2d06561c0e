"""Command-line interface: flag handling, exit codes, report files."""

import json

import pytest

from probewise.cli import main


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixtures")
    assert main(["gen-fixtures", "--out", str(out)]) == 0
    return out


def _fig_args(fixture_dir, name):
    return ["--netlist", str(fixture_dir / f"{name}.netlist.json"),
            "--labels", str(fixture_dir / f"{name}.labels.json"),
            "--stimuli", str(fixture_dir / f"{name}.stim.jsonl")]


def test_fig5_transition_run_exits_1(fixture_dir, capsys):
    code = main(["verify", *_fig_args(fixture_dir, "fig5"),
                 "--glitches=false", "--transitions=true"])
    captured = capsys.readouterr()
    assert code == 1
    assert "leaking cycles:   1" in captured.out


def test_dom_and_value_model_exits_0(fixture_dir):
    code = main(["verify", *_fig_args(fixture_dir, "dom_and_d1"),
                 "--model", "0,0"])
    assert code == 0


def test_unknown_flag_exits_2(fixture_dir, capsys):
    assert main(["verify", *_fig_args(fixture_dir, "fig5"),
                 "--frobnicate"]) == 2
    capsys.readouterr()


def test_missing_file_exits_2(tmp_path, capsys):
    assert main(["verify", "--netlist", str(tmp_path / "nope.json"),
                 "--labels", str(tmp_path / "nope.json"),
                 "--stimuli", str(tmp_path / "nope.jsonl")]) == 2
    capsys.readouterr()


def test_combinatorial_loop_exits_3(tmp_path, capsys):
    doc = {"wires": [{"name": "a", "width": 1}, {"name": "o", "width": 1}],
           "inputs": ["a"], "outputs": ["o"],
           "gates": [{"kind": "bit_or", "output": "o", "inputs": ["a", "o"]}],
           "registers": []}
    (tmp_path / "loop.json").write_text(json.dumps(doc))
    (tmp_path / "labels.json").write_text(json.dumps({"symbols": []}))
    (tmp_path / "stim.jsonl").write_text(
        json.dumps({"cycle": 0, "inputs": {"a": {"const": "0b0"}}}) + "\n")
    code = main(["verify", "--netlist", str(tmp_path / "loop.json"),
                 "--labels", str(tmp_path / "labels.json"),
                 "--stimuli", str(tmp_path / "stim.jsonl")])
    assert code == 3
    capsys.readouterr()


def test_report_file_is_deterministic(fixture_dir, tmp_path, capsys):
    args = ["verify", *_fig_args(fixture_dir, "fig6"),
            "--model", "1,0", "--granularity", "sw"]
    main([*args, "--report", str(tmp_path / "a.jsonl")])
    main([*args, "--report", str(tmp_path / "b.jsonl")])
    capsys.readouterr()
    a = (tmp_path / "a.jsonl").read_bytes()
    assert a == (tmp_path / "b.jsonl").read_bytes()
    lines = [json.loads(line) for line in a.decode().splitlines()]
    assert any(e.get("verdict") == "leaks" and e.get("wire") == "w"
               for e in lines)
    assert "leaking_cycles" in lines[-1]


def test_rr1sw_preset(fixture_dir, capsys):
    code = main(["verify", *_fig_args(fixture_dir, "fig7"),
                 "--model", "rr1sw"])
    captured = capsys.readouterr()
    assert code == 1
    assert "cycle 2 wire i1" in captured.out


def test_ni_sni_subcommands(capsys):
    assert main(["ni", "--gadget", "dom_and", "--order", "1",
                 "--glitches=true"]) == 0
    assert main(["sni", "--gadget", "dom_and", "--order", "2",
                 "--verif-order", "2", "--glitches=true"]) == 1
    out = capsys.readouterr().out
    assert "witness" in out


def test_higher_order_mode(fixture_dir, capsys):
    code = main(["verify", *_fig_args(fixture_dir, "dom_and_d1"),
                 "--model", "0,0", "--order", "2", "--ho-mode", "spatial"])
    captured = capsys.readouterr()
    assert code == 1
    assert "d-uplets" in captured.out


def test_stimuli_with_expressions_round_trip(fixture_dir):
    text = (fixture_dir / "fig5.stim.jsonl").read_text()
    assert '"expr"' in text   # fig5 drives i1 with XOR(k, m)
