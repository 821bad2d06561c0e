"""Independent oracles used by the test suite.

Everything here re-derives expected behaviour from first principles, without
going through the code paths under test: a direct big-integer evaluator for
operator trees, a plain DFS cycle finder, and a brute-force concrete
simulator used to cross-check stability and LeakSet claims by toggling the
symbolic input bits of a cycle.
"""

from __future__ import annotations

import itertools
import random

from probewise import expr as ex


def mask(w: int) -> int:
    return (1 << w) - 1


# ---------------------------------------------------------------------------
# Operator-tree evaluator (oracle for expr.build + eval_concrete)
# ---------------------------------------------------------------------------
# Trees are ('cst', value, width) | ('sym', name, width) | (op, [children],
# params). Evaluation follows two's-complement bit-vector semantics directly.

def tree_width(tree) -> int:
    tag = tree[0]
    if tag in ("cst", "sym"):
        return tree[2]
    op, children, params = tree
    if op in ("XOR", "AND", "OR", "ADD", "SUB", "MUL", "POW", "LSL", "LSR",
              "ASR"):
        return tree_width(children[0])
    if op == "NOT":
        return tree_width(children[0])
    if op == "CONCAT":
        return sum(tree_width(c) for c in children)
    if op == "EXTRACT":
        lo, hi = params
        return hi - lo + 1
    if op in ("ZEXT", "SEXT"):
        return params[0]
    raise AssertionError(op)


def tree_eval(tree, assignment) -> int:
    tag = tree[0]
    if tag == "cst":
        return tree[1] & mask(tree[2])
    if tag == "sym":
        return assignment[tree[1]] & mask(tree[2])
    op, children, params = tree
    vals = [tree_eval(c, assignment) for c in children]
    w = tree_width(tree)
    if op == "XOR":
        out = 0
        for v in vals:
            out ^= v
        return out
    if op == "AND":
        out = mask(w)
        for v in vals:
            out &= v
        return out
    if op == "OR":
        out = 0
        for v in vals:
            out |= v
        return out
    if op == "NOT":
        return ~vals[0] & mask(w)
    if op == "ADD":
        return (vals[0] + vals[1]) & mask(w)
    if op == "SUB":
        return (vals[0] - vals[1]) & mask(w)
    if op == "MUL":
        return (vals[0] * vals[1]) & mask(w)
    if op == "POW":
        return pow(vals[0], vals[1], 1 << w)
    if op == "LSL":
        return (vals[0] << vals[1]) & mask(w) if vals[1] < w else 0
    if op == "LSR":
        return vals[0] >> vals[1] if vals[1] < w else 0
    if op == "ASR":
        sign = (vals[0] >> (w - 1)) & 1
        s = vals[1]
        if s >= w:
            return mask(w) if sign else 0
        out = vals[0] >> s
        if sign:
            out |= mask(w) & ~mask(w - s)
        return out
    if op == "CONCAT":
        out = 0
        for child, v in zip(children, vals):
            out = (out << tree_width(child)) | v
        return out
    if op == "EXTRACT":
        lo, hi = params
        return (vals[0] >> lo) & mask(hi - lo + 1)
    if op == "ZEXT":
        return vals[0]
    if op == "SEXT":
        cw = tree_width(children[0])
        v = vals[0]
        if (v >> (cw - 1)) & 1:
            v |= mask(w) & ~mask(cw)
        return v
    raise AssertionError(op)


def tree_to_expr(tree) -> ex.Expr:
    tag = tree[0]
    if tag == "cst":
        return ex.cst(tree[1], tree[2])
    if tag == "sym":
        return ex.sym(tree[1], tree[2])
    op, children, params = tree
    return ex.build(op, [tree_to_expr(c) for c in children], params)


def random_tree(rng: random.Random, symbols: dict[str, int], depth: int,
                width: int):
    """Random operator tree of the requested width over the given symbols."""
    if depth == 0:
        pool = [n for n, w in symbols.items() if w == width]
        if pool and rng.random() < 0.75:
            return ("sym", rng.choice(pool), width)
        return ("cst", rng.getrandbits(width), width)
    roll = rng.random()
    if roll < 0.45:
        op = rng.choice(("XOR", "XOR", "AND", "OR"))
        n = rng.choice((2, 2, 3))
        return (op, [random_tree(rng, symbols, depth - 1, width)
                     for _ in range(n)], ())
    if roll < 0.55:
        return ("NOT", [random_tree(rng, symbols, depth - 1, width)], ())
    if roll < 0.7:
        op = rng.choice(("ADD", "SUB", "MUL"))
        return (op, [random_tree(rng, symbols, depth - 1, width),
                     random_tree(rng, symbols, depth - 1, width)], ())
    if roll < 0.78 and width >= 2:
        lo = rng.randrange(0, width)
        hi = rng.randrange(lo, width)
        inner_w = width + rng.randrange(0, 3)
        t = random_tree(rng, symbols, depth - 1, inner_w)
        if hi - lo + 1 != width:
            hi = lo + width - 1
            if hi >= inner_w:
                return random_tree(rng, symbols, 0, width)
        return ("EXTRACT", [t], (lo, hi))
    if roll < 0.86:
        w1 = rng.randrange(1, width) if width > 1 else 1
        if width - w1 >= 1:
            return ("CONCAT", [random_tree(rng, symbols, depth - 1, w1),
                               random_tree(rng, symbols, depth - 1, width - w1)],
                    ())
        return random_tree(rng, symbols, depth - 1, width)
    if roll < 0.93:
        inner = rng.randrange(1, width + 1)
        op = rng.choice(("ZEXT", "SEXT"))
        return (op, [random_tree(rng, symbols, depth - 1, inner)], (width,))
    op = rng.choice(("LSL", "LSR", "ASR"))
    amt_w = rng.choice((1, 2))
    return (op, [random_tree(rng, symbols, depth - 1, width),
                 random_tree(rng, symbols, depth - 1, amt_w)
                 if rng.random() < 0.5 else ("cst", rng.randrange(0, width + 1),
                                             amt_w)], ())


# ---------------------------------------------------------------------------
# Independent cycle detector
# ---------------------------------------------------------------------------

def has_combinational_cycle(doc: dict) -> bool:
    """DFS over gate-to-gate edges of a netlist document."""
    producer = {g["output"]: i for i, g in enumerate(doc["gates"])}
    adj = {i: [] for i in range(len(doc["gates"]))}
    for i, g in enumerate(doc["gates"]):
        for w in g["inputs"]:
            if w in producer:
                adj[producer[w]].append(i)
    color = {i: 0 for i in adj}

    def dfs(u) -> bool:
        color[u] = 1
        for v in adj[u]:
            if color[v] == 1 or (color[v] == 0 and dfs(v)):
                return True
        color[u] = 2
        return False

    return any(color[i] == 0 and dfs(i) for i in adj)


# ---------------------------------------------------------------------------
# Brute-force concrete simulator (glitch / stability oracle)
# ---------------------------------------------------------------------------

class ConcreteSim:
    """Plain concrete simulator over the netlist document, used as the
    ground truth for toggle experiments. Registers and memories keep their
    own state; no symbolic machinery involved."""

    def __init__(self, doc: dict):
        self.doc = doc
        self.width = {w["name"]: w["width"] for w in doc["wires"]}
        self.reg_state = {r["output"]: int(r["init"], 2)
                          for r in doc["registers"]}
        self.gates = doc["gates"]

    def eval_cycle(self, input_values: dict[str, int]) -> dict[str, int]:
        """Wire values for one cycle, registers held at their stored state."""
        values = dict(input_values)
        values.update(self.reg_state)
        remaining = list(self.gates)
        while remaining:
            again = []
            for g in remaining:
                if all(w in values for w in g["inputs"]):
                    values[g["output"]] = self._gate(g, values)
                else:
                    again.append(g)
            if len(again) == len(remaining):
                raise AssertionError("netlist not acyclic")
            remaining = again
        return values

    def commit(self, values: dict[str, int]) -> None:
        for r in self.doc["registers"]:
            self.reg_state[r["output"]] = values[r["input"]]

    def _gate(self, g: dict, values: dict[str, int]) -> int:
        kind = g["kind"]
        ins = [values[w] for w in g["inputs"]]
        w_out = self.width[g["output"]]
        params = g.get("params") or {}
        if kind == "bit_not":
            return ~ins[0] & mask(w_out)
        if kind == "bit_and":
            return ins[0] & ins[1]
        if kind == "bit_or":
            return ins[0] | ins[1]
        if kind == "bit_xor":
            return ins[0] ^ ins[1]
        if kind == "add":
            return (ins[0] + ins[1]) & mask(w_out)
        if kind == "sub":
            return (ins[0] - ins[1]) & mask(w_out)
        if kind == "mul":
            return (ins[0] * ins[1]) & mask(w_out)
        if kind == "neg":
            return -ins[0] & mask(w_out)
        if kind == "ucmp":
            return int(ins[0] < ins[1])
        if kind == "scmp":
            w = self.width[g["inputs"][0]]
            flip = 1 << (w - 1)
            return int((ins[0] ^ flip) < (ins[1] ^ flip))
        if kind == "equal":
            return int(ins[0] == ins[1])
        if kind == "not_equal":
            return int(ins[0] != ins[1])
        if kind == "is_zero":
            return int(ins[0] == 0)
        if kind == "is_neg":
            w = self.width[g["inputs"][0]]
            return (ins[0] >> (w - 1)) & 1
        if kind in ("shl", "shr", "sshr"):
            s = int(params["amount"]) if "amount" in params else ins[1]
            w = w_out
            if kind == "shl":
                return (ins[0] << s) & mask(w) if s < w else 0
            if kind == "shr":
                return ins[0] >> s if s < w else 0
            sign = (ins[0] >> (w - 1)) & 1
            if s >= w:
                return mask(w) if sign else 0
            out = ins[0] >> s
            if sign:
                out |= mask(w) & ~mask(w - s)
            return out
        if kind == "trunc":
            lo = int(params.get("lo", 0))
            return (ins[0] >> lo) & mask(w_out)
        if kind == "zext":
            return ins[0]
        if kind == "sext":
            w = self.width[g["inputs"][0]]
            v = ins[0]
            if (v >> (w - 1)) & 1:
                v |= mask(w_out) & ~mask(w)
            return v
        if kind == "blit":
            lo = int(params.get("lo", 0))
            ws = self.width[g["inputs"][1]]
            return (ins[0] & ~(mask(ws) << lo) | (ins[1] << lo)) & mask(w_out)
        if kind == "repeat":
            w = self.width[g["inputs"][0]]
            out = 0
            for _ in range(int(params["count"])):
                out = (out << w) | ins[0]
            return out
        if kind == "mux":
            return ins[2] if ins[0] else ins[1]
        raise AssertionError(kind)


def random_expr_set(rng: random.Random, max_bits: int = 16):
    """A random expression set plus labels, biased toward masked patterns.

    Total symbol width stays within ``max_bits`` so enumeration is always
    available as the ground truth.
    """
    labels = ex.SymbolTable()
    widths = {}
    symbols: dict[str, int] = {}

    def declare(name, width, kind, secret=None, index=None):
        labels.declare(name, width, kind, secret, index)
        widths[name] = width
        symbols[name] = width

    w = rng.choice((1, 1, 2))
    declare("k", w, ex.SECRET)
    if rng.random() < 0.4:
        declare("k2", 1, ex.SECRET)
    if rng.random() < 0.35:
        # a shared secret: shares obey the Boolean resharing relation
        n_shares = rng.choice((2, 3))
        labels.declare("ks", w, ex.SECRET)
        widths["ks"] = w
        for i in range(n_shares):
            declare(f"ks{i}", w, ex.SHARE, secret="ks", index=i)
    n_masks = rng.randrange(1, 5)
    for i in range(n_masks):
        declare(f"m{i}", w if rng.random() < 0.7 else 1, ex.MASK)
    if rng.random() < 0.3:
        declare("p", 1, ex.PUBLIC)

    exprs = []
    for _ in range(rng.randrange(1, 4)):
        width = rng.choice((w, 1))
        depth = rng.randrange(1, 4)
        tree = random_tree(rng, symbols, depth, width)
        e = tree_to_expr(tree)
        if rng.random() < 0.6:
            pool = [n for n in symbols if n.startswith("m")
                    and symbols[n] == e.width]
            if pool:
                e = ex.build("XOR", [e, ex.sym(rng.choice(pool),
                                               e.width)])
        exprs.append(e)
    return exprs, labels


def toggle_assignments(base: dict[str, int], toggled: dict[str, int],
                       cap: int = 1 << 12):
    """All assignments of the toggled symbols, others fixed at base."""
    names = sorted(toggled)
    widths = [toggled[n] for n in names]
    total = sum(widths)
    assert (1 << total) <= cap, f"too many toggle bits ({total})"
    for combo in itertools.product(*[range(1 << w) for w in widths]):
        a = dict(base)
        a.update(dict(zip(names, combo)))
        yield a


def independence_bruteforce(exprs, labels) -> bool:
    """Dict-counting twin of the enumeration verdict.

    Base variables are masks, publics, declared secrets and all shares but
    the top-index one (which equals its secret XOR the rest). The set is
    independent iff, for every public assignment, the joint histogram of the
    expression tuple is the same for every secret assignment.
    """
    symbols = sorted({n for e in exprs for n in ex.symbols_of(e)})
    base: dict[str, int] = {}
    derived: dict[str, tuple[str, list[str]]] = {}
    secrets: set[str] = set()
    publics: set[str] = set()
    for name in symbols:
        kind = labels.kind(name)
        if kind == "share":
            parent, _ = labels.share_parent(name)
            siblings = labels.shares_of(parent)
            if name == siblings[-1]:
                base[parent] = labels.width(parent)
                secrets.add(parent)
                for o in siblings[:-1]:
                    base[o] = labels.width(o)
                derived[name] = (parent, siblings[:-1])
            else:
                base[name] = labels.width(name)
        else:
            base[name] = labels.width(name)
            if kind == "secret":
                secrets.add(name)
            elif kind == "public":
                publics.add(name)
    if not secrets:
        return True
    names = sorted(base)
    hists: dict[tuple, dict[tuple, dict]] = {}
    for combo in itertools.product(*[range(1 << base[n]) for n in names]):
        a = dict(zip(names, combo))
        for share, (parent, others) in derived.items():
            v = a[parent]
            for o in others:
                v ^= a[o]
            a[share] = v
        pk = tuple(a[n] for n in sorted(publics))
        sk = tuple(a[n] for n in sorted(secrets))
        value = tuple(ex.eval_concrete(e, a) for e in exprs)
        hist = hists.setdefault(pk, {}).setdefault(sk, {})
        hist[value] = hist.get(value, 0) + 1
    for by_secret in hists.values():
        per_secret = list(by_secret.values())
        if any(h != per_secret[0] for h in per_secret[1:]):
            return False
    return True


def simulatable_bruteforce(exprs, labels, secrets: dict[str, list[str]],
                           budget: int) -> bool:
    """Dict-counting reimplementation of NI probe-tuple simulatability.

    Tries every selection of at most ``budget`` shares per secret; the tuple
    is simulatable when, for the fixed selected shares, its joint
    distribution does not depend on the other shares.
    """
    symbols = sorted({n for e in exprs for n in ex.symbols_of(e)})
    widths = {n: labels.width(n) for n in symbols}
    present = {s: [n for n in shares if n in symbols]
               for s, shares in secrets.items()}
    if all(len(p) <= budget for p in present.values()):
        return True
    selections = []
    for s in sorted(present):
        k = min(budget, len(present[s]))
        selections.append(list(itertools.combinations(present[s], k)))
    assignments = []
    for combo in itertools.product(*[range(1 << widths[n]) for n in symbols]):
        assignments.append(dict(zip(symbols, combo)))
    values = []
    for a in assignments:
        values.append(tuple(ex.eval_concrete(e, a) for e in exprs))
    for selection in itertools.product(*selections):
        sel = sorted(n for c in selection for n in c)
        non_sel = sorted(n for p in present.values() for n in p
                         if n not in sel)
        dists: dict[tuple, dict[tuple, dict]] = {}
        for a, v in zip(assignments, values):
            sk = tuple(a[n] for n in sel)
            nk = tuple(a[n] for n in non_sel)
            hist = dists.setdefault(sk, {}).setdefault(nk, {})
            hist[v] = hist.get(v, 0) + 1
        ok = True
        for by_nonsel in dists.values():
            hists = list(by_nonsel.values())
            if any(h != hists[0] for h in hists[1:]):
                ok = False
                break
        if ok:
            return True
    return False


def glitch_coverage_violations(fixture, sim_module, netlist_module,
                               expr_module) -> tuple[int, int]:
    """Brute-force toggle oracle for LeakSet coverage and stability.

    Within a cycle, registers and memories hold their settled values while
    the symbolic input bits of that cycle range over every assignment. A
    wire bit's transient value must be a function of its LeakSet members'
    values, and a stable bit must not move at all. Returns (bit checks,
    violations).
    """
    ex = expr_module
    sched = netlist_module.validate_and_schedule(fixture.circuit)
    state = sim_module.initial_state(fixture.circuit)
    oracle = ConcreteSim(fixture.doc)
    checked = violations = 0
    for frame in fixture.stimuli.frames:
        state = sim_module.step_cycle(fixture.circuit, sched, state, frame,
                                      fixture.stimuli.witness)
        toggled: dict[str, int] = {}
        base_inputs: dict[str, int] = {}
        for name, (kind, payload) in frame.inputs.items():
            if kind == "const":
                base_inputs[name] = payload[0]
            else:
                base_inputs[name] = ex.eval_concrete(payload,
                                                     fixture.stimuli.witness)
                for sname in ex.symbols_of(payload):
                    toggled[sname] = fixture.labels.width(sname)
        members: list = []
        seen = set()
        for w in fixture.circuit.wires:
            for bucket in state.current[w.uid].lset:
                for m in bucket:
                    if m.uid not in seen:
                        seen.add(m.uid)
                        members.append(m)
        rows = []
        for assignment in toggle_assignments(fixture.stimuli.witness, toggled):
            inputs = {}
            for name, (kind, payload) in frame.inputs.items():
                inputs[name] = payload[0] if kind == "const" \
                    else ex.eval_concrete(payload, assignment)
            values = oracle.eval_cycle(inputs)
            memo: dict = {}
            member_vals = {m.uid: ex.eval_concrete(m, assignment,
                                                   state.mem_conc, memo)
                           for m in members}
            rows.append((values, member_vals))
        base_vals = oracle.eval_cycle(base_inputs)
        for w in fixture.circuit.wires:
            assert base_vals[w.name] == state.current[w.uid].conc
            val = state.current[w.uid]
            for i in range(w.width):
                bucket = sorted(val.lset[i], key=lambda m: m.uid)
                groups: dict = {}
                stable_outs = set()
                for values, member_vals in rows:
                    out_bit = (values[w.name] >> i) & 1
                    checked += 1
                    key = tuple(member_vals[m.uid] for m in bucket)
                    groups.setdefault(key, set()).add(out_bit)
                    if val.stable(i):
                        stable_outs.add(out_bit)
                if any(len(outs) > 1 for outs in groups.values()):
                    violations += 1
                if len(stable_outs) > 1:
                    violations += 1
        oracle.commit(base_vals)
    return checked, violations
