"""Netlist parsing, validation, scheduling and the structural index."""

import json
import random

import pytest

from probewise import gadgets
from probewise.netlist import (CombinatorialLoop, DanglingReference,
                               MalformedDocument, MultipleDrivers,
                               UnknownGateKind, WidthMismatch, parse_netlist,
                               serialize_netlist, structural_index,
                               validate_and_schedule)

import oracles


def doc_and(out_width=1):
    return {
        "wires": [{"name": "a", "width": 1}, {"name": "b", "width": 1},
                  {"name": "o", "width": out_width}],
        "inputs": ["a", "b"],
        "outputs": ["o"],
        "gates": [{"kind": "bit_and", "output": "o", "inputs": ["a", "b"]}],
        "registers": [],
    }


def parse(doc):
    return parse_netlist(json.dumps(doc))


def test_minimal_and_gate():
    c = parse(doc_and())
    assert len(c.wires) == 3 and len(c.gates) == 1 and not c.registers


def test_width_mismatch():
    with pytest.raises(WidthMismatch):
        parse(doc_and(out_width=2))


def test_unknown_gate_kind():
    doc = doc_and()
    doc["gates"][0]["kind"] = "nand3"
    with pytest.raises(UnknownGateKind):
        parse(doc)


def test_dangling_reference():
    doc = doc_and()
    doc["gates"][0]["inputs"] = ["a", "missing"]
    with pytest.raises(DanglingReference):
        parse(doc)


def test_multiple_drivers():
    doc = doc_and()
    doc["wires"].append({"name": "x", "width": 1})
    doc["gates"].append({"kind": "bit_not", "output": "o", "inputs": ["x"]})
    doc["inputs"].append("x")
    with pytest.raises(MultipleDrivers):
        parse(doc)


def test_malformed_json():
    with pytest.raises(MalformedDocument):
        parse_netlist("{not json")


def test_missing_key():
    with pytest.raises(MalformedDocument):
        parse_netlist(json.dumps({"wires": []}))


def test_fig6_split_round_trip():
    fx = gadgets.gen_counterexamples()["fig6"]
    text = serialize_netlist(fx.circuit)
    again = parse_netlist(text)
    assert serialize_netlist(again) == text
    (group,) = again.splits
    assert group.parent_name == "w" and group.parent_width == 2
    members = {again.name(u): i for u, i in group.members}
    assert members == {"b0": 0, "b1": 1}


def test_split_validation():
    fx = gadgets.gen_counterexamples()["fig6"]
    doc = dict(fx.doc)
    doc["splits"] = [{"parent": "w", "width": 2,
                      "bits": [{"wire": "b0", "index": 0},
                               {"wire": "b1", "index": 0}]}]
    with pytest.raises(MalformedDocument):
        parse(doc)


# ---------------------------------------------------------------------------
# Scheduling
# ---------------------------------------------------------------------------

def test_schedule_linear_chain():
    doc = {
        "wires": [{"name": "a", "width": 1}, {"name": "x", "width": 1},
                  {"name": "y", "width": 1}],
        "inputs": ["a"], "outputs": ["y"],
        "gates": [{"kind": "bit_not", "output": "y", "inputs": ["x"]},
                  {"kind": "bit_not", "output": "x", "inputs": ["a"]}],
        "registers": [],
    }
    c = parse(doc)
    sched = validate_and_schedule(c)
    gates = {g.uid: g for g in c.gates}
    assert [c.name(gates[u].output) for u in sched.order] == ["x", "y"]


def test_schedule_self_loop():
    doc = {
        "wires": [{"name": "a", "width": 1}, {"name": "o", "width": 1}],
        "inputs": ["a"], "outputs": ["o"],
        "gates": [{"kind": "bit_and", "output": "o", "inputs": ["a", "o"]}],
        "registers": [],
    }
    with pytest.raises(CombinatorialLoop) as err:
        validate_and_schedule(parse(doc))
    assert "o" in err.value.cycle


def test_register_breaks_cycle():
    # Combinatorial loop through a register is legal: q feeds back into g0.
    doc = {
        "wires": [{"name": "a", "width": 1}, {"name": "x", "width": 1},
                  {"name": "q", "width": 1}, {"name": "y", "width": 1}],
        "inputs": ["a"], "outputs": ["y"],
        "gates": [{"kind": "bit_xor", "output": "x", "inputs": ["a", "q"]},
                  {"kind": "bit_not", "output": "y", "inputs": ["q"]}],
        "registers": [{"input": "x", "output": "q", "init": "0b0"}],
    }
    c = parse(doc)
    sched = validate_and_schedule(c)
    assert len(sched.order) == 2


def test_schedule_respects_dependencies_on_random_circuits():
    for seed in range(25):
        fx = gadgets.gen_random_circuit(seed, n_gates=25)
        sched = validate_and_schedule(fx.circuit)
        assert sorted(sched.order) == sorted(g.uid for g in fx.circuit.gates)
        ready = set(fx.circuit.inputs) | \
            {r.output for r in fx.circuit.registers}
        gates = {g.uid: g for g in fx.circuit.gates}
        for uid in sched.order:
            g = gates[uid]
            assert all(w in ready for w in g.inputs)
            assert g.output not in ready   # each wire computed exactly once
            ready.add(g.output)


def test_loop_detection_matches_dfs_oracle():
    rng = random.Random(5)
    agree = 0
    total = 0
    for _ in range(200):
        n_wires = rng.randrange(4, 10)
        n_inputs = rng.randrange(1, 3)
        wires = [{"name": f"w{i}", "width": 1} for i in range(n_wires)]
        inputs = [f"w{i}" for i in range(n_inputs)]
        gates = []
        for i in range(n_inputs, n_wires):
            gates.append({"kind": rng.choice(("bit_and", "bit_or", "bit_xor")),
                          "output": f"w{i}",
                          "inputs": [f"w{rng.randrange(n_wires)}",
                                     f"w{rng.randrange(n_wires)}"]})
        doc = {"wires": wires, "inputs": inputs,
               "outputs": [wires[-1]["name"]], "gates": gates, "registers": []}
        total += 1
        try:
            validate_and_schedule(parse(doc))
            looped = False
        except CombinatorialLoop:
            looped = True
        if looped == oracles.has_combinational_cycle(doc):
            agree += 1
    assert agree == total


def test_round_trip_on_random_circuits():
    for seed in range(30):
        fx = gadgets.gen_random_circuit(seed)
        text = serialize_netlist(fx.circuit)
        assert serialize_netlist(parse_netlist(text)) == text


# ---------------------------------------------------------------------------
# Structural index
# ---------------------------------------------------------------------------

def test_index_register_inputs():
    fx = gadgets.gen_counterexamples()["fig7"]
    idx = structural_index(fx.circuit)
    assert idx.register_input_wires == \
        {fx.circuit.by_name["c_in"].uid}
    assert idx.primary_output_wires == {fx.circuit.by_name["o0"].uid}


def test_index_mux_roles():
    doc = {
        "wires": [{"name": "s", "width": 1}, {"name": "a", "width": 2},
                  {"name": "b", "width": 2}, {"name": "o", "width": 2}],
        "inputs": ["s", "a", "b"], "outputs": ["o"],
        "gates": [{"kind": "mux", "output": "o", "inputs": ["s", "a", "b"]}],
        "registers": [],
    }
    c = parse(doc)
    idx = structural_index(c)
    (roles,) = idx.mux_roles.values()
    assert roles == (c.by_name["s"].uid, c.by_name["a"].uid, c.by_name["b"].uid)


def test_index_split_members():
    fx = gadgets.gen_counterexamples()["fig6"]
    idx = structural_index(fx.circuit)
    assert idx.split_member_wires == \
        {fx.circuit.by_name["b0"].uid, fx.circuit.by_name["b1"].uid}


def test_index_partial_use():
    doc = {
        "wires": [{"name": "a", "width": 4}, {"name": "t", "width": 2},
                  {"name": "z", "width": 4}],
        "inputs": ["a"], "outputs": ["t", "z"],
        "gates": [{"kind": "trunc", "output": "t", "inputs": ["a"],
                   "params": {"lo": 1}},
                  {"kind": "zext", "output": "z", "inputs": ["a"]}],
        "registers": [],
    }
    c = parse(doc)
    idx = structural_index(c)
    assert idx.partially_used_wires == {c.by_name["a"].uid}
