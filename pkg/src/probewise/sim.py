"""Mixed-domain simulation: concrete, symbolic, LeakSet and stability.

Each cycle computes, for every wire, a :class:`Valuation` holding the four
domains. Registers emit the previous cycle's input valuation (their reset
vector at cycle 0); combinatorial gates evaluate in schedule order. Stability
marks bits that provably cannot toggle within the cycle; LeakSets collect,
per bit, the expressions whose values a glitch on that bit may expose.
LeakSets whose members are all constants are stored as empty sets.

Primary inputs are driven by a :class:`StimulusFrame` per cycle and are
always unstable. A symbolic input carries a singleton LeakSet per bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from . import expr as ex
from .expr import Expr, bit, bits, cst, mask
from .netlist import Circuit, Gate, Schedule, SHIFT_KINDS


class SimError(Exception):
    pass


class ConsistencyViolation(SimError):
    def __init__(self, wire: str, expected: int, actual: int):
        super().__init__(
            f"wire {wire!r}: symbolic constant {actual:#x} disagrees with "
            f"concrete value {expected:#x}")
        self.wire = wire


class SymbolicIndexUnhandled(SimError):
    def __init__(self, wire: str):
        super().__init__(f"memory access at {wire!r} has a symbolic index and "
                         f"no hook claimed it")
        self.wire = wire


LeakSet = tuple[frozenset[Expr], ...]


def norm_set(members) -> frozenset[Expr]:
    """A LeakSet entry; all-constant populations collapse to the empty set."""
    s = frozenset(members)
    if s and all(m.is_cst for m in s):
        return frozenset()
    return s


_EMPTY = frozenset()


@dataclass(frozen=True)
class Valuation:
    conc: int
    symb: Expr
    lset: LeakSet
    stab: int          # bit i set <=> rank i stable

    def stable(self, i: int) -> bool:
        return bool((self.stab >> i) & 1)


def _const_valuation(value: int, width: int, stable: bool) -> Valuation:
    return Valuation(value & mask(width), cst(value, width),
                     tuple(_EMPTY for _ in range(width)),
                     mask(width) if stable else 0)


@dataclass(frozen=True)
class StimulusFrame:
    """Input drive for one cycle: wire name -> ('const', int) | ('expr', Expr)."""
    inputs: Mapping[str, tuple[str, object]]


@dataclass
class Stimuli:
    witness: dict[str, int]
    frames: list[StimulusFrame]


MemoryHook = Callable[[str, Expr, "SimState"], Expr | None]


@dataclass(frozen=True)
class MaskedTableHook:
    """Rewrites reads of a remasked lookup table.

    For a table initialised as masked[i ^ index_mask] = base[i] ^ value_mask,
    a read whose index expression is ``something ^ index_mask`` resolves to
    ``ARRAY(base, something) ^ value_mask``.
    """
    masked_memory: str
    base_memory: str
    index_mask: str
    value_mask: str

    def __call__(self, mem_id: str, index: Expr, state: "SimState") -> Expr | None:
        if mem_id != self.masked_memory:
            return None
        m = ex.sym(self.index_mask, index.width)
        rest: Expr | None = None
        if index is m:
            rest = cst(0, index.width)
        elif index.kind == "op" and index.op == "XOR" and m in index.children:
            others = [c for c in index.children if c is not m]
            missing = len(index.children) - len(others) - 1
            rest = ex.build("XOR", others + [m] * missing) if others or missing \
                else cst(0, index.width)
        if rest is None:
            return None
        width = state.mem_width[self.base_memory]
        table = ex.array_lookup(self.base_memory, rest, width)
        return ex.build("XOR", [table, ex.sym(self.value_mask, width)])


@dataclass(frozen=True)
class SimOptions:
    use_stability: bool = True
    reset_unstable: bool = False   # registers unstable at cycle 0
    keep_going: bool = False       # downgrade consistency violations to warnings


@dataclass
class SimState:
    circuit: Circuit
    cycle: int
    current: dict[int, Valuation]
    previous: dict[int, Valuation]
    reg_out: dict[int, Valuation]
    mem_conc: dict[str, list[int]]
    mem_symb: dict[str, list[Expr]]
    mem_width: dict[str, int]
    warnings: list[tuple[int, str, str]] = field(default_factory=list)


def initial_state(circuit: Circuit) -> SimState:
    mem_conc = {m.mid: list(m.init) for m in circuit.memories}
    mem_symb = {m.mid: [cst(v, m.width) for v in m.init] for m in circuit.memories}
    mem_width = {m.mid: m.width for m in circuit.memories}
    return SimState(circuit, 0, {}, {}, {}, mem_conc, mem_symb, mem_width)


def step_cycle(circuit: Circuit, schedule: Schedule, state: SimState,
               frame: StimulusFrame, witness: Mapping[str, int],
               opts: SimOptions = SimOptions(),
               hook: MemoryHook | None = None) -> SimState:
    """Advance the simulation by one cycle, computing all four domains."""
    t = state.cycle
    vals: dict[int, Valuation] = {}
    warnings = list(state.warnings)

    for uid in sorted(circuit.inputs):
        wire = circuit.wire(uid)
        drive = frame.inputs.get(wire.name)
        if drive is None:
            raise SimError(f"cycle {t}: no stimulus for input {wire.name!r}")
        kind, payload = drive
        if kind == "const":
            v, w = payload
            if w != wire.width:
                raise SimError(f"stimulus for {wire.name!r} has width {w}, "
                               f"wire is {wire.width}")
            vals[uid] = Valuation(v & mask(w), cst(v, w),
                                  tuple(_EMPTY for _ in range(w)), 0)
        else:
            e: Expr = payload
            if e.width != wire.width:
                raise SimError(f"stimulus for {wire.name!r} has width {e.width}, "
                               f"wire is {wire.width}")
            conc = ex.eval_concrete(e, witness, state.mem_conc)
            lset = tuple(norm_set((b,)) for b in bits(e))
            vals[uid] = Valuation(conc, e, lset, 0)

    new_reg_out: dict[int, Valuation] = {}
    for r in circuit.registers:
        val = register_step(circuit, r, state, opts)
        vals[r.output] = val
        new_reg_out[r.uid] = val

    mem_conc = state.mem_conc
    mem_symb = state.mem_symb
    pending_writes: list[tuple[str, int, int, Expr]] = []
    gates = {g.uid: g for g in circuit.gates}
    for uid in schedule.order:
        g = gates[uid]
        ins = [vals[w] for w in g.inputs]
        out_wire = circuit.wire(g.output)
        val = _eval_gate(circuit, state, g, ins, opts, hook,
                         pending_writes, warnings, t)
        if val.symb.is_cst and val.symb.value != val.conc:
            if opts.keep_going:
                warnings.append((t, out_wire.name, "consistency violation"))
            else:
                raise ConsistencyViolation(out_wire.name, val.conc, val.symb.value)
        vals[g.output] = val

    if pending_writes:
        mem_conc = {k: list(v) for k, v in state.mem_conc.items()}
        mem_symb = {k: list(v) for k, v in state.mem_symb.items()}
        for mid, idx, conc_v, symb_v in pending_writes:
            mem_conc[mid][idx] = conc_v
            mem_symb[mid][idx] = symb_v

    return SimState(circuit, t + 1, vals, state.current, new_reg_out,
                    mem_conc, mem_symb, state.mem_width, warnings)


# ---------------------------------------------------------------------------
# Per-gate evaluation
# ---------------------------------------------------------------------------

_WIDTH_MIXING = frozenset({"add", "sub", "neg", "mul", "ucmp", "scmp", "equal",
                           "not_equal", "is_zero", "is_neg"})
_RANK_REMAP = frozenset({"trunc", "zext", "sext", "blit", "repeat"})


def register_step(circuit: Circuit, register, state: SimState,
                  opts: SimOptions = SimOptions()) -> Valuation:
    """Register output at the cycle being computed.

    Cycle 0 emits the reset vector (stable unless configured otherwise).
    Afterwards the output carries the previous cycle's input valuation; a
    bit is stable iff its canonical expression equals the previous output's,
    and its LeakSet holds both cycles' expressions.
    """
    out_w = circuit.wire(register.output).width
    if state.cycle == 0:
        stable = opts.use_stability and not opts.reset_unstable
        return _const_valuation(register.init, out_w, stable)
    cur = state.current[register.input]
    prev = state.reg_out[register.uid]
    stab = 0
    lset = []
    cur_bits, prev_bits = bits(cur.symb), bits(prev.symb)
    for i in range(out_w):
        if opts.use_stability and cur_bits[i] is prev_bits[i]:
            stab |= 1 << i
        lset.append(norm_set((cur_bits[i], prev_bits[i])))
    return Valuation(cur.conc, cur.symb, tuple(lset), stab)


def stab_eval(circuit: Circuit, gate: Gate, inputs: Sequence[Valuation],
              opts: SimOptions = SimOptions()) -> int:
    """Stability vector of a combinatorial gate's output (memory excluded)."""
    return eval_combinational(circuit, gate, list(inputs), opts).stab


def lset_eval(circuit: Circuit, gate: Gate, inputs: Sequence[Valuation],
              opts: SimOptions = SimOptions()) -> LeakSet:
    """LeakSet vector of a combinatorial gate's output (memory excluded)."""
    return eval_combinational(circuit, gate, list(inputs), opts).lset


def _eval_gate(circuit: Circuit, state: SimState, g: Gate, ins: list[Valuation],
               opts: SimOptions, hook: MemoryHook | None,
               pending_writes: list, warnings: list, t: int) -> Valuation:
    if g.kind == "mem_read":
        return _eval_mem_read(circuit, state, g, ins, opts, hook, warnings, t)
    if g.kind == "mem_write":
        return _eval_mem_write(circuit, state, g, ins, pending_writes,
                               warnings, t)
    if g.kind == "mux" and not ins[0].symb.is_cst:
        warnings.append((t, circuit.name(g.inputs[0]),
                         "mux selector is symbolic"))
    return eval_combinational(circuit, g, ins, opts)


def eval_combinational(circuit: Circuit, g: Gate, ins: list[Valuation],
                       opts: SimOptions = SimOptions()) -> Valuation:
    """All four domains for one non-memory gate from its input valuations."""
    kind = g.kind
    w_out = circuit.wire(g.output).width
    if kind == "mux":
        return _eval_mux(circuit, g, ins, opts)

    conc = _conc_gate(circuit, g, [v.conc for v in ins], w_out)
    symb = _symb_gate(circuit, g, [v.symb for v in ins], w_out)

    if kind in ("bit_and", "bit_or", "bit_xor", "bit_not"):
        stab, lset = _bitwise_domains(kind, ins, symb, w_out)
    elif kind in _RANK_REMAP or (kind in SHIFT_KINDS
                                 and circuit.gate_param(g, "amount") is not None):
        stab, lset = _remap_domains(circuit, g, ins, symb, w_out)
    else:
        # Width-mixing: every output bit depends on every input bit.
        all_stable = all(v.stab == mask(v.symb.width) for v in ins)
        stab = mask(w_out) if (all_stable and opts.use_stability) else 0
        union = norm_set(m for v in ins for s in v.lset for m in s)
        lset = _finish_lset(stab, symb, w_out, lambda i: union)
    return Valuation(conc, symb, lset, stab)


def _finish_lset(stab: int, symb: Expr, width: int,
                 unstable_set: Callable[[int], frozenset]) -> LeakSet:
    symb_bits = bits(symb)
    out = []
    for i in range(width):
        if (stab >> i) & 1:
            out.append(norm_set((symb_bits[i],)))
        else:
            out.append(norm_set(unstable_set(i)))
    return tuple(out)


def _bitwise_domains(kind: str, ins: list[Valuation], symb: Expr,
                     width: int) -> tuple[int, LeakSet]:
    if kind == "bit_not":
        (a,) = ins
        stab = a.stab
        return stab, _finish_lset(stab, symb, width, lambda i: a.lset[i])
    a, b = ins
    a_bits, b_bits = bits(a.symb), bits(b.symb)
    stab = 0
    for i in range(width):
        sa, sb = a.stable(i), b.stable(i)
        ok = sa and sb
        if not ok and kind == "bit_and":
            zero = cst(0, 1)
            ok = (sa and a_bits[i] is zero) or (sb and b_bits[i] is zero)
        elif not ok and kind == "bit_or":
            one = cst(1, 1)
            ok = (sa and a_bits[i] is one) or (sb and b_bits[i] is one)
        if ok:
            stab |= 1 << i
    return stab, _finish_lset(stab, symb, width,
                              lambda i: a.lset[i] | b.lset[i])


def _rank_sources(circuit: Circuit, g: Gate, widths: list[int],
                  w_out: int) -> list[tuple]:
    """Per output rank: ('in', input pos, input rank) or ('cst', bit value)."""
    kind = g.kind
    out: list[tuple] = []
    if kind == "trunc":
        lo = int(circuit.gate_param(g, "lo", 0))
        out = [("in", 0, lo + i) for i in range(w_out)]
    elif kind == "zext":
        w = widths[0]
        out = [("in", 0, i) if i < w else ("cst", 0) for i in range(w_out)]
    elif kind == "sext":
        w = widths[0]
        out = [("in", 0, min(i, w - 1)) for i in range(w_out)]
    elif kind == "blit":
        lo = int(circuit.gate_param(g, "lo", 0))
        ws = widths[1]
        for i in range(w_out):
            if lo <= i < lo + ws:
                out.append(("in", 1, i - lo))
            else:
                out.append(("in", 0, i))
    elif kind == "repeat":
        w = widths[0]
        out = [("in", 0, i % w) for i in range(w_out)]
    elif kind in SHIFT_KINDS:
        k = int(circuit.gate_param(g, "amount"))
        w = widths[0]
        for i in range(w_out):
            if kind == "shl":
                out.append(("in", 0, i - k) if i >= k else ("cst", 0))
            elif kind == "shr":
                out.append(("in", 0, i + k) if i + k < w else ("cst", 0))
            else:  # sshr
                out.append(("in", 0, min(i + k, w - 1)))
    else:
        raise AssertionError(kind)
    return out


def _remap_domains(circuit: Circuit, g: Gate, ins: list[Valuation], symb: Expr,
                   w_out: int) -> tuple[int, LeakSet]:
    sources = _rank_sources(circuit, g, [v.symb.width for v in ins], w_out)
    stab = 0
    for i, src in enumerate(sources):
        if src[0] == "cst" or ins[src[1]].stable(src[2]):
            stab |= 1 << i

    def unstable(i):
        src = sources[i]
        return ins[src[1]].lset[src[2]] if src[0] == "in" else _EMPTY

    return stab, _finish_lset(stab, symb, w_out, unstable)


def _eval_mux(circuit: Circuit, g: Gate, ins: list[Valuation],
              opts: SimOptions) -> Valuation:
    sel, in0, in1 = ins
    w = in0.symb.width
    conc = in1.conc if sel.conc else in0.conc
    rep = ex.concat([sel.symb] * w) if w > 1 else sel.symb
    not_rep = ex.build("NOT", [rep])
    symb = ex.build("OR", [ex.build("AND", [rep, in1.symb]),
                           ex.build("AND", [not_rep, in0.symb])])

    sel_stable = sel.stable(0)
    sel_const = sel.symb.is_cst
    stab = 0
    if sel_stable and opts.use_stability:
        if sel_const:
            chosen = in1 if sel.symb.value else in0
            stab = chosen.stab
        else:
            stab = in0.stab & in1.stab

    def unstable(i):
        if sel_stable and sel_const:
            chosen = in1 if sel.symb.value else in0
            data = chosen.lset[i]
        else:
            data = in0.lset[i] | in1.lset[i]
        return sel.lset[0] | data

    lset = _finish_lset(stab, symb, w, unstable)
    return Valuation(conc, symb, lset, stab)


def _eval_mem_read(circuit: Circuit, state: SimState, g: Gate,
                   ins: list[Valuation], opts: SimOptions,
                   hook: MemoryHook | None, warnings: list, t: int) -> Valuation:
    mid = circuit.gate_param(g, "memory")
    index = ins[0]
    depth = len(state.mem_conc[mid])
    w_out = circuit.wire(g.output).width
    conc = state.mem_conc[mid][index.conc % depth]

    symb: Expr | None = None
    if hook is not None:
        symb = hook(mid, index.symb, state)
    if symb is None:
        if index.symb.is_cst:
            symb = state.mem_symb[mid][index.symb.value % depth]
        else:
            raise SymbolicIndexUnhandled(circuit.name(g.output))
    elif not index.symb.is_cst:
        warnings.append((t, circuit.name(g.inputs[0]), "memory index is symbolic"))

    index_stable = index.stab == mask(index.symb.width)
    stab = mask(w_out) if (index_stable and opts.use_stability) else 0
    index_union = frozenset(m for s in index.lset for m in s)
    symb_bits = bits(symb)
    lset = _finish_lset(stab, symb, w_out,
                        lambda i: index_union | {symb_bits[i]})
    return Valuation(conc, symb, lset, stab)


def _eval_mem_write(circuit: Circuit, state: SimState, g: Gate,
                    ins: list[Valuation], pending_writes: list,
                    warnings: list, t: int) -> Valuation:
    mid = circuit.gate_param(g, "memory")
    index, value = ins
    depth = len(state.mem_conc[mid])
    if not index.symb.is_cst:
        warnings.append((t, circuit.name(g.inputs[0]), "memory index is symbolic"))
    pending_writes.append((mid, index.conc % depth, value.conc, value.symb))
    return value


# ---------------------------------------------------------------------------
# Concrete / symbolic functionalities
# ---------------------------------------------------------------------------

def conc_eval(circuit: Circuit, gate: Gate, input_values: Sequence[int]) -> int:
    """Concrete functionality of one gate (registers and memory excluded)."""
    return _conc_gate(circuit, gate, list(input_values),
                      circuit.wire(gate.output).width)


def _conc_gate(circuit: Circuit, g: Gate, vs: list[int], w: int) -> int:
    kind = g.kind
    if kind == "bit_not":
        return ~vs[0] & mask(w)
    if kind == "bit_and":
        return vs[0] & vs[1]
    if kind == "bit_or":
        return vs[0] | vs[1]
    if kind == "bit_xor":
        return vs[0] ^ vs[1]
    if kind in ("add", "sub", "mul"):
        a, b = vs
        return (a + b if kind == "add" else a - b if kind == "sub" else a * b) & mask(w)
    if kind == "neg":
        return -vs[0] & mask(w)
    if kind == "ucmp":
        return int(vs[0] < vs[1])
    if kind == "scmp":
        win = circuit.wire(g.inputs[0]).width
        flip = 1 << (win - 1)
        return int((vs[0] ^ flip) < (vs[1] ^ flip))
    if kind == "equal":
        return int(vs[0] == vs[1])
    if kind == "not_equal":
        return int(vs[0] != vs[1])
    if kind == "is_zero":
        return int(vs[0] == 0)
    if kind == "is_neg":
        win = circuit.wire(g.inputs[0]).width
        return (vs[0] >> (win - 1)) & 1
    if kind in SHIFT_KINDS:
        amount = circuit.gate_param(g, "amount")
        s = int(amount) if amount is not None else vs[1]
        op = {"shl": "LSL", "shr": "LSR", "sshr": "ASR"}[kind]
        return ex.shift_value(op, vs[0], s, w)
    if kind == "trunc":
        lo = int(circuit.gate_param(g, "lo", 0))
        return (vs[0] >> lo) & mask(w)
    if kind == "zext":
        return vs[0]
    if kind == "sext":
        win = circuit.wire(g.inputs[0]).width
        v = vs[0]
        if (v >> (win - 1)) & 1:
            v |= mask(w) & ~mask(win)
        return v
    if kind == "blit":
        lo = int(circuit.gate_param(g, "lo", 0))
        ws = circuit.wire(g.inputs[1]).width
        return (vs[0] & ~(mask(ws) << lo) | (vs[1] << lo)) & mask(w)
    if kind == "repeat":
        win = circuit.wire(g.inputs[0]).width
        count = int(circuit.gate_param(g, "count"))
        out = 0
        for _ in range(count):
            out = (out << win) | vs[0]
        return out
    if kind == "mux":
        return vs[2] if vs[0] else vs[1]
    raise AssertionError(kind)


def symb_eval(circuit: Circuit, gate: Gate, input_exprs: Sequence[Expr]) -> Expr:
    """Symbolic functionality of one gate, canonically simplified."""
    return _symb_gate(circuit, gate, list(input_exprs),
                      circuit.wire(gate.output).width)


def _or_reduce(e: Expr) -> Expr:
    return ex.build("OR", list(bits(e))) if e.width > 1 else e


def _symb_gate(circuit: Circuit, g: Gate, es: list[Expr], w: int) -> Expr:
    kind = g.kind
    if kind == "bit_not":
        return ex.build("NOT", es)
    if kind == "bit_and":
        return ex.build("AND", es)
    if kind == "bit_or":
        return ex.build("OR", es)
    if kind == "bit_xor":
        return ex.build("XOR", es)
    if kind in ("add", "sub", "mul"):
        return ex.build({"add": "ADD", "sub": "SUB", "mul": "MUL"}[kind], es)
    if kind == "neg":
        return ex.build("SUB", [cst(0, w), es[0]])
    if kind == "ucmp":
        return _ucmp(es[0], es[1])
    if kind == "scmp":
        win = es[0].width
        flip = cst(1 << (win - 1), win)
        return _ucmp(ex.build("XOR", [es[0], flip]), ex.build("XOR", [es[1], flip]))
    if kind == "equal":
        return ex.build("NOT", [_or_reduce(ex.build("XOR", es))])
    if kind == "not_equal":
        return _or_reduce(ex.build("XOR", es))
    if kind == "is_zero":
        return ex.build("NOT", [_or_reduce(es[0])])
    if kind == "is_neg":
        return bit(es[0], es[0].width - 1)
    if kind in SHIFT_KINDS:
        op = {"shl": "LSL", "shr": "LSR", "sshr": "ASR"}[kind]
        amount = circuit.gate_param(g, "amount")
        amt = cst(int(amount), max(int(amount).bit_length(), 1)) \
            if amount is not None else es[1]
        return ex.build(op, [es[0], amt])
    if kind == "trunc":
        lo = int(circuit.gate_param(g, "lo", 0))
        return ex.extract(es[0], lo, lo + w - 1)
    if kind == "zext":
        return ex.zext(es[0], w)
    if kind == "sext":
        return ex.sext(es[0], w)
    if kind == "blit":
        lo = int(circuit.gate_param(g, "lo", 0))
        dst, src = es
        pieces = []
        if lo + src.width < dst.width:
            pieces.append(ex.extract(dst, lo + src.width, dst.width - 1))
        pieces.append(src)
        if lo > 0:
            pieces.append(ex.extract(dst, 0, lo - 1))
        return ex.concat(pieces)
    if kind == "repeat":
        count = int(circuit.gate_param(g, "count"))
        return ex.concat([es[0]] * count)
    raise AssertionError(kind)


def _ucmp(a: Expr, b: Expr) -> Expr:
    w = a.width
    diff = ex.build("SUB", [ex.zext(a, w + 1), ex.zext(b, w + 1)])
    return bit(diff, w)


# ---------------------------------------------------------------------------
# Consistency and stimuli
# ---------------------------------------------------------------------------

def consistency_check(state: SimState, witness: Mapping[str, int]) -> None:
    """Assert conc == eval_concrete(symb, witness) on every simulated wire."""
    memo: dict = {}
    for uid in sorted(state.current):
        val = state.current[uid]
        got = ex.eval_concrete(val.symb, witness, state.mem_conc, memo)
        if got != val.conc:
            raise ConsistencyViolation(state.circuit.name(uid), val.conc, got)


def parse_stimuli(text: str, widths: Mapping[str, int]) -> Stimuli:
    """Parse JSONL stimuli: a witness header then one frame per cycle."""
    witness: dict[str, int] = {}
    frames: list[tuple[int, StimulusFrame]] = []
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SimError(f"stimuli line {line_no}: {exc}") from None
        if "witness" in doc:
            for name, lit in doc["witness"].items():
                witness[name] = ex.parse_bits(lit)
            continue
        inputs: dict[str, tuple[str, object]] = {}
        for name, drive in doc["inputs"].items():
            if "const" in drive:
                lit = drive["const"]
                inputs[name] = ("const", (ex.parse_bits(lit), len(lit) - 2))
            elif "symbol" in drive:
                sym_name = drive["symbol"]
                if sym_name not in widths:
                    raise SimError(f"stimuli line {line_no}: undeclared symbol "
                                   f"{sym_name!r}")
                inputs[name] = ("expr", ex.sym(sym_name, widths[sym_name]))
            elif "expr" in drive:
                inputs[name] = ("expr", ex.parse_expr(drive["expr"], widths))
            else:
                raise SimError(f"stimuli line {line_no}: bad drive for {name!r}")
        frames.append((int(doc["cycle"]), StimulusFrame(inputs)))
    frames.sort(key=lambda p: p[0])
    if [c for c, _ in frames] != list(range(len(frames))):
        raise SimError("stimuli cycles must be 0..n-1 without gaps")
    return Stimuli(witness, [f for _, f in frames])


def dump_stimuli(stimuli: Stimuli, widths: Mapping[str, int]) -> str:
    lines = [json.dumps({"witness": {
        name: ex.format_bits(v, widths[name])
        for name, v in sorted(stimuli.witness.items())}}, sort_keys=True)]
    for cycle, frame in enumerate(stimuli.frames):
        doc: dict = {"cycle": cycle, "inputs": {}}
        for name in sorted(frame.inputs):
            kind, payload = frame.inputs[name]
            if kind == "const":
                value, width = payload
                doc["inputs"][name] = {"const": ex.format_bits(value, width)}
            else:
                e: Expr = payload
                if e.kind == "sym":
                    doc["inputs"][name] = {"symbol": e.name}
                else:
                    doc["inputs"][name] = {"expr": ex.render(e)}
        lines.append(json.dumps(doc, sort_keys=True))
    return "\n".join(lines) + "\n"
