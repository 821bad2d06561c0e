"""Verification manager: drives interleaved simulate-then-verify runs.

Per cycle it selects the wires worth verifying for the configured leakage
model, builds the model's expression set for each (value / transition /
glitch / both, at bit or support-wise granularity), skips trivial sets,
deduplicates through a verdict cache and dispatches the rest to the checker.
Split wires are recombined into their parent signal for support-wise runs.

Wire selection mirrors the model:

* value / transition / full transition+glitch: every wire, every cycle;
* glitches only: register inputs, primary outputs, split parents, inputs of
  gates with a stable output bit, the non-selected data inputs of muxes with
  a stable constant selector, partially-consumed wires and memory-write
  feeds — anything whose LeakSet would otherwise shrink or vanish on its way
  to an always-verified wire;
* transition+glitch with the over-approximated expression set (both cycles'
  flattened LeakSets): the glitch rule widened to stability at t or t-1.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Sequence

from . import expr as ex
from . import sim as sm
from . import verify as vf
from .expr import Expr, SymbolTable, bits, render
from .netlist import Circuit, StructuralIndex, structural_index, \
    validate_and_schedule
from .sim import SimOptions, SimState, Stimuli, Valuation
from .verify import ExprSet, Verdict, make_expr_set

BIT = "bit"
SUPPORT_WISE = "sw"


class TooMany(Exception):
    def __init__(self, count: int, limit: int):
        super().__init__(f"{count} tuples exceed the cap of {limit}")
        self.count, self.limit = count, limit


@dataclass(frozen=True)
class LeakageModel:
    glitches: bool = False
    transitions: bool = False
    use_stability: bool = True
    granularity: str = SUPPORT_WISE
    order: int = 1
    overapprox: bool = False

    def __post_init__(self):
        if self.granularity not in (BIT, SUPPORT_WISE):
            raise ValueError(f"granularity must be bit or sw, got "
                             f"{self.granularity!r}")
        if self.granularity == SUPPORT_WISE and not self.use_stability:
            raise ValueError("support-wise verification requires stability")
        if self.overapprox and not (self.glitches and self.transitions):
            raise ValueError("over-approximation only applies to the "
                             "transition+glitch model")
        if self.order < 1:
            raise ValueError("order must be >= 1")

    @property
    def facet(self) -> str:
        if self.glitches and self.transitions:
            return "transition+glitch"
        if self.glitches:
            return "glitch"
        if self.transitions:
            return "transition"
        return "value"

    @staticmethod
    def rr1sw() -> "LeakageModel":
        return LeakageModel(glitches=True, transitions=True, use_stability=True,
                            granularity=SUPPORT_WISE, order=1, overapprox=True)


@dataclass(frozen=True)
class ReportEntry:
    cycle: int
    wire: str
    src: tuple[str, int] | None
    facet: str
    verdict: Verdict
    exprs: tuple[str, ...]

    def to_json(self) -> dict:
        doc: dict = {"cycle": self.cycle, "wire": self.wire}
        if self.src is not None:
            doc["src"] = {"file": self.src[0], "line": self.src[1]}
        doc["facet"] = self.facet
        doc["verdict"] = self.verdict.status
        doc["exprs"] = list(self.exprs)
        if self.verdict.witness is not None:
            doc["witness"] = self.verdict.witness.to_json()
        if self.verdict.reason:
            doc["reason"] = self.verdict.reason
        return doc


@dataclass
class Summary:
    cycles: int = 0
    leaking_cycles: int = 0
    expr_to_verify: int = 0
    verified_expr: int = 0
    cache_hits: int = 0
    trivial_skipped: int = 0

    def to_json(self) -> dict:
        return {"cycles": self.cycles, "leaking_cycles": self.leaking_cycles,
                "expr_to_verify": self.expr_to_verify,
                "verified_expr": self.verified_expr,
                "cache_hits": self.cache_hits,
                "trivial_skipped": self.trivial_skipped}


@dataclass
class LeakReport:
    entries: list[ReportEntry] = field(default_factory=list)
    warnings: list[tuple[int, str, str]] = field(default_factory=list)
    summary: Summary = field(default_factory=Summary)

    def leaking_cycles(self) -> list[int]:
        return sorted({e.cycle for e in self.entries if not e.verdict.is_secure})

    def entries_for(self, cycle: int) -> list[ReportEntry]:
        return [e for e in self.entries if e.cycle == cycle]

    def flagged(self) -> list[ReportEntry]:
        return [e for e in self.entries if not e.verdict.is_secure]

    def to_jsonl(self) -> str:
        lines = [json.dumps(e.to_json(), sort_keys=True) for e in self.entries]
        lines += [json.dumps({"cycle": c, "wire": w, "warning": msg},
                             sort_keys=True) for c, w, msg in self.warnings]
        lines.append(json.dumps(self.summary.to_json(), sort_keys=True))
        return "\n".join(lines) + "\n"


class Cache:
    """Canonical expression-set key -> verdict; transparent by construction."""

    def __init__(self) -> None:
        self._table: dict[str, Verdict] = {}
        self.hits = 0

    def get(self, key: str) -> Verdict | None:
        v = self._table.get(key)
        if v is not None:
            self.hits += 1
        return v

    def peek(self, key: str) -> Verdict | None:
        return self._table.get(key)

    def put(self, key: str, verdict: Verdict) -> None:
        self._table[key] = verdict

    def __len__(self) -> int:
        return len(self._table)


def cache_key(eset: ExprSet) -> str:
    return eset.key


# ---------------------------------------------------------------------------
# Expression sets per model (Table "expressions to verify")
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerifyUnit:
    """One verification request: a wire (or recombined parent, or single bit)."""
    wire: str
    rank: int | None          # bit index at bit granularity, None for sw
    eset: ExprSet

    @property
    def label(self) -> str:
        return self.wire if self.rank is None else f"{self.wire}[{self.rank}]"


def _flatten(lset) -> list[Expr]:
    return [m for s in lset for m in s]


def _previous_valuation(state: SimState, uid: int) -> Valuation:
    # At cycle 0 the wire's own cycle-0 valuation doubles as "previous":
    # transitions are only meaningful from cycle 1 onward.
    if state.previous:
        return state.previous[uid]
    return state.current[uid]


def expr_sets_for(val: Valuation, prev: Valuation, model: LeakageModel) -> \
        list[tuple[int | None, ExprSet]]:
    """Expression sets for one wire at the current cycle, per granularity."""
    out: list[tuple[int | None, ExprSet]] = []
    if model.granularity == SUPPORT_WISE:
        out.append((None, _one_set(val, prev, model, None)))
    else:
        for i in range(val.symb.width):
            out.append((i, _one_set(val, prev, model, i)))
    return out


def _one_set(val: Valuation, prev: Valuation, model: LeakageModel,
             rank: int | None) -> ExprSet:
    if rank is None:
        cur_symb, prev_symb = [val.symb], [prev.symb]
        cur_lset = _flatten(val.lset)
        prev_lset = _flatten(prev.lset)
    else:
        cur_symb, prev_symb = [bits(val.symb)[rank]], [bits(prev.symb)[rank]]
        cur_lset = list(val.lset[rank])
        prev_lset = list(prev.lset[rank])
    g, t = model.glitches, model.transitions
    if not g and not t:
        members = cur_symb
    elif not g and t:
        members = cur_symb + prev_symb
    elif g and not t:
        members = cur_lset
    elif model.overapprox:
        members = prev_lset + cur_lset
    else:
        members = prev_symb + cur_lset
    return make_expr_set(members)


def recombine_split_wires(circuit: Circuit, vals: Mapping[int, Valuation],
                          parent_name: str) -> Valuation:
    """Valuation of a split parent rebuilt from its 1-bit member wires."""
    group = next(s for s in circuit.splits if s.parent_name == parent_name)
    by_index = {idx: vals[uid] for uid, idx in group.members}
    width = group.parent_width
    conc = 0
    stab = 0
    lset = []
    parts_hi_to_lo = []
    for i in range(width):
        v = by_index[i]
        conc |= (v.conc & 1) << i
        stab |= (v.stab & 1) << i
        lset.append(v.lset[0])
    for i in reversed(range(width)):
        parts_hi_to_lo.append(by_index[i].symb)
    symb = ex.concat(parts_hi_to_lo)
    return Valuation(conc, symb, tuple(lset), stab)


# ---------------------------------------------------------------------------
# Wire selection per model (Table "wires to verify")
# ---------------------------------------------------------------------------

def _stable_gate_inputs(circuit: Circuit, vals: Mapping[int, Valuation],
                        index: StructuralIndex) -> set[int]:
    picked: set[int] = set()
    for g in circuit.gates:
        out_val = vals[g.output]
        if out_val.stab != 0:
            picked.update(g.inputs)
    return picked


def _mux_exposed_inputs(circuit: Circuit, vals: Mapping[int, Valuation],
                        index: StructuralIndex) -> set[int]:
    picked: set[int] = set()
    for gid, (sel, in0, in1) in index.mux_roles.items():
        sel_val = vals[sel]
        if not sel_val.stable(0):
            continue
        if sel_val.symb.is_cst:
            picked.add(in0 if sel_val.symb.value else in1)   # non-selected
        else:
            picked.update((in0, in1))
    return picked


def wires_to_verify(circuit: Circuit, index: StructuralIndex,
                    model: LeakageModel, state: SimState) -> list[object]:
    """Verification units at the current cycle: wire uids, plus split-parent
    names at support-wise granularity."""
    parents = [s.parent_name for s in circuit.splits] \
        if model.granularity == SUPPORT_WISE else []
    g, t = model.glitches, model.transitions
    if (not g) or (t and not model.overapprox):
        units: list[object] = [w.uid for w in circuit.wires]
        return units + parents

    base: set[int] = set()
    base |= index.register_input_wires
    base |= index.primary_output_wires
    base |= index.split_member_wires
    base |= index.partially_used_wires
    base |= index.mem_write_input_wires
    base |= _stable_gate_inputs(circuit, state.current, index)
    base |= _mux_exposed_inputs(circuit, state.current, index)
    if model.overapprox and state.previous:
        base |= _stable_gate_inputs(circuit, state.previous, index)
        base |= _mux_exposed_inputs(circuit, state.previous, index)
    return sorted(base) + parents


# ---------------------------------------------------------------------------
# The interleaved run
# ---------------------------------------------------------------------------

@dataclass
class RunOptions:
    enum_limit: int = vf.DEFAULT_ENUM_LIMIT
    stop_on_first_leak: bool = False
    use_cache: bool = True
    verify_all_wires: bool = False          # bypass wire selection
    past_stability_rule: bool = True        # Table-8 "stable at t-1" extension
    check_consistency: bool = False
    sim_options: SimOptions = field(default_factory=SimOptions)
    memory_hook: sm.MemoryHook | None = None
    jobs: int = 1


def run(circuit: Circuit, stimuli: Stimuli, labels: SymbolTable,
        model: LeakageModel, options: RunOptions | None = None) -> LeakReport:
    """Simulate every frame and verify the selected wires each cycle."""
    options = options or RunOptions()
    schedule = validate_and_schedule(circuit)
    index = structural_index(circuit)
    report = LeakReport()
    cache = Cache()
    baseline_cache: set[str] = set()
    state = sm.initial_state(circuit)
    stopped = False

    for t, frame in enumerate(stimuli.frames):
        state = sm.step_cycle(circuit, schedule, state, frame, stimuli.witness,
                              options.sim_options, options.memory_hook)
        if options.check_consistency:
            sm.consistency_check(state, stimuli.witness)
        report.summary.cycles = t + 1

        units = _cycle_units(circuit, index, model, state, options)
        requests: list[tuple[str, tuple[str, int] | None, ExprSet]] = []
        for label, src, eset in units:
            if not eset:
                report.summary.trivial_skipped += 1
                continue
            requests.append((label, src, eset))

        if model.overapprox:
            report.summary.expr_to_verify += _baseline_count(
                circuit, index, model, state, baseline_cache)
        verdicts = _dispatch(requests, cache, labels, state, options, report)
        cycle_flagged = False
        for (label, src, eset), verdict in zip(requests, verdicts):
            report.entries.append(ReportEntry(
                t, label, src, model.facet, verdict,
                tuple(render(e) for e in eset.exprs)))
            if not verdict.is_secure:
                cycle_flagged = True
                if options.stop_on_first_leak:
                    stopped = True
                    break
        if cycle_flagged:
            report.summary.leaking_cycles += 1
        if stopped:
            break

    if not model.overapprox:
        # without the over-approximation both counters mean the same thing
        report.summary.expr_to_verify = report.summary.verified_expr
    report.summary.cache_hits = cache.hits
    report.warnings = list(dict.fromkeys(state.warnings))
    report.entries.sort(key=lambda e: (e.cycle, e.wire))
    return report


def _dispatch(requests, cache: Cache, labels: SymbolTable, state: SimState,
              options: RunOptions, report: LeakReport) -> list[Verdict]:
    """Resolve every request's verdict; fresh keys are checked once, in
    parallel when requested, with counters matching the sequential order."""
    keys = [cache_key(eset) for _, _, eset in requests]
    pre_cached: dict[str, Verdict] = {}
    fresh: list[tuple[str, ExprSet]] = []
    fresh_keys: set[str] = set()
    for key, (_, _, eset) in zip(keys, requests):
        if options.use_cache:
            if key in pre_cached:
                continue
            got = cache.peek(key)
            if got is not None:
                pre_cached[key] = got
                continue
            if key in fresh_keys:
                continue
            fresh_keys.add(key)
        fresh.append((key, eset))

    def solve(eset: ExprSet) -> Verdict:
        return vf.check(eset, labels, options.enum_limit, state.mem_conc)

    if options.jobs > 1 and len(fresh) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=options.jobs) as pool:
            solved = list(pool.map(solve, [eset for _, eset in fresh]))
    else:
        solved = [solve(eset) for _, eset in fresh]
    report.summary.verified_expr += len(fresh)
    local: dict[str, Verdict] = {}
    if not options.use_cache:
        return list(solved)
    for (key, _), verdict in zip(fresh, solved):
        local[key] = verdict
        cache.put(key, verdict)
    out: list[Verdict] = []
    first_use: set[str] = set()
    for key in keys:
        if key in pre_cached:
            cache.hits += 1
            out.append(pre_cached[key])
        else:
            if key in first_use:
                cache.hits += 1
            first_use.add(key)
            out.append(local[key])
    return out


def _cycle_units(circuit: Circuit, index: StructuralIndex, model: LeakageModel,
                 state: SimState, options: RunOptions) -> \
        list[tuple[str, tuple[str, int] | None, ExprSet]]:
    if options.verify_all_wires:
        selected: list[object] = [w.uid for w in circuit.wires]
        if model.granularity == SUPPORT_WISE:
            selected += [s.parent_name for s in circuit.splits]
    elif model.overapprox and not options.past_stability_rule:
        # negative-control mode: over-approximated sets, selection rules
        # evaluated at cycle t only
        selected = _select_without_past(circuit, index, model, state)
    else:
        selected = wires_to_verify(circuit, index, model, state)

    out: list[tuple[str, tuple[str, int] | None, ExprSet]] = []
    for unit in selected:
        if isinstance(unit, str):
            val = recombine_split_wires(circuit, state.current, unit)
            prev = recombine_split_wires(circuit, state.previous, unit) \
                if state.previous else val
            src = None
            wire_label = unit
        else:
            val = state.current[unit]
            prev = _previous_valuation(state, unit)
            wire = circuit.wire(unit)
            src = (wire.src.file, wire.src.line) if wire.src else None
            wire_label = wire.name
        for rank, eset in expr_sets_for(val, prev, model):
            label = wire_label if rank is None else f"{wire_label}[{rank}]"
            out.append((label, src, eset))
    return out


def _select_without_past(circuit: Circuit, index: StructuralIndex,
                         model: LeakageModel, state: SimState) -> list[object]:
    narrowed = LeakageModel(glitches=True, transitions=False,
                            use_stability=model.use_stability,
                            granularity=model.granularity)
    return wires_to_verify(circuit, index, narrowed, state)


def _baseline_count(circuit: Circuit, index: StructuralIndex,
                    model: LeakageModel, state: SimState,
                    baseline_cache: set[str]) -> int:
    """Sets the standard (non-over-approximated) run would have dispatched."""
    std = replace(model, overapprox=False)
    count = 0
    for unit in wires_to_verify(circuit, index, std, state):
        if isinstance(unit, str):
            val = recombine_split_wires(circuit, state.current, unit)
            prev = recombine_split_wires(circuit, state.previous, unit) \
                if state.previous else val
        else:
            val = state.current[unit]
            prev = _previous_valuation(state, unit)
        for _, eset in expr_sets_for(val, prev, std):
            if not eset:
                continue
            key = cache_key(eset)
            if key not in baseline_cache:
                baseline_cache.add(key)
                count += 1
    return count


# ---------------------------------------------------------------------------
# Higher-order d-uplets
# ---------------------------------------------------------------------------

SPATIAL = "spatial"
TEMPORAL = "temporal"
MIXED = "mixed"


def enumerate_duplets(positions: Sequence[object], d: int, mode: str = SPATIAL,
                      cap: int = 10 ** 6) -> Iterator[tuple]:
    """All C(p, d) combinations of probe positions; ``mode`` only names what
    the positions are (wires, cycles, or wire-cycle pairs)."""
    if mode not in (SPATIAL, TEMPORAL, MIXED):
        raise ValueError(f"unknown mode {mode!r}")
    if d < 1:
        raise ValueError("d must be >= 1")
    p = len(positions)
    count = 1
    for i in range(d):
        count = count * (p - i) // (i + 1)
    if count > cap:
        raise TooMany(count, cap)
    return itertools.combinations(positions, d)


@dataclass
class HigherOrderResult:
    verdict: Verdict
    tuples_checked: int
    tuple_count: int
    leaking_tuple: tuple | None = None


def verify_higher_order(circuit: Circuit, stimuli: Stimuli, labels: SymbolTable,
                        model: LeakageModel, mode: str = SPATIAL,
                        enum_limit: int = vf.DEFAULT_ENUM_LIMIT,
                        cap: int = 10 ** 6) -> HigherOrderResult:
    """Check every d-uplet of probe positions under the given model.

    spatial: wire d-uplets, each combination checked at every cycle;
    temporal: cycle d-uplets, checked per wire; mixed: (wire, cycle) pairs.
    """
    schedule = validate_and_schedule(circuit)
    state = sm.initial_state(circuit)
    per_cycle: list[dict[str, ExprSet]] = []
    for frame in stimuli.frames:
        state = sm.step_cycle(circuit, schedule, state, frame, stimuli.witness)
        sets: dict[str, ExprSet] = {}
        for uid in sorted(state.current):
            val = state.current[uid]
            prev = _previous_valuation(state, uid)
            for rank, eset in expr_sets_for(val, prev, model):
                name = circuit.name(uid)
                sets[name if rank is None else f"{name}[{rank}]"] = eset
        per_cycle.append(sets)

    wires = sorted(per_cycle[0]) if per_cycle else []
    cycles = list(range(len(per_cycle)))
    d = model.order
    cache: dict[str, Verdict] = {}

    def run_combo(esets: Iterable[ExprSet]) -> Verdict:
        union = ExprSet(())
        for s in esets:
            union = union.union(s)
        if not union:
            return Verdict.secure()
        key = union.key
        if key not in cache:
            cache[key] = vf.check(union, labels, enum_limit)
        return cache[key]

    checked = 0
    if mode == SPATIAL:
        positions: Sequence = wires
        combos = enumerate_duplets(positions, d, mode, cap)
        total = _ncr(len(positions), d)
        for combo in combos:
            checked += 1
            for t in cycles:
                v = run_combo(per_cycle[t][w] for w in combo)
                if not v.is_secure:
                    return HigherOrderResult(v, checked, total, combo)
    elif mode == TEMPORAL:
        positions = cycles
        combos = enumerate_duplets(positions, d, mode, cap)
        total = _ncr(len(positions), d)
        for combo in combos:
            checked += 1
            for w in wires:
                v = run_combo(per_cycle[t][w] for t in combo)
                if not v.is_secure:
                    return HigherOrderResult(v, checked, total, combo)
    else:
        positions = [(w, t) for t in cycles for w in sorted(per_cycle[t])]
        combos = enumerate_duplets(positions, d, mode, cap)
        total = _ncr(len(positions), d)
        for combo in combos:
            checked += 1
            v = run_combo(per_cycle[t][w] for w, t in combo)
            if not v.is_secure:
                return HigherOrderResult(v, checked, total, combo)
    return HigherOrderResult(Verdict.secure(), checked, total)


def _ncr(n: int, k: int) -> int:
    out = 1
    for i in range(k):
        out = out * (n - i) // (i + 1)
    return out
