"""Statistical-independence checking of expression sets against labeled secrets.

Two engines back the verdicts:

* :func:`check_substitution` — the classic bijective-mask rule. A mask whose
  single use sits under an XOR node (reachable from a member root through
  XOR/CONCAT/extraction context only) makes that XOR subterm uniform, so it
  is replaced by a fresh mask. If the fixpoint contains no secret or share
  symbols the set is independent of every secret. Sound, never complete.

* :func:`check_enumeration` — exact and witness-producing. All base symbols
  are enumerated; shares are tied to their parent secret by Boolean
  resharing (the top-index share equals the secret XOR the others). The set
  is secure iff, for every public assignment, the joint distribution of the
  member tuple over masks and free shares is the same for every secret
  assignment.

:func:`check` runs substitution first and falls back to enumeration within
a configurable bit budget; past the budget the verdict is Inconclusive and
must be treated as a potential false positive.

NI/SNI predicates for gadget circuits reuse the enumeration machinery with
probe tuples drawn from symbolic values (or flattened LeakSets when glitches
are modelled) and exhaustive search over share-index selections.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import expr as ex
from . import sim as sm
from .expr import Expr, SymbolTable, mask, render, symbols_of
from .netlist import Circuit
from .sim import SimOptions, Stimuli

DEFAULT_ENUM_LIMIT = 20


class TooLarge(Exception):
    def __init__(self, bits: int, limit: int):
        super().__init__(f"enumeration needs {bits} symbolic bits, limit is {limit}")
        self.bits, self.limit = bits, limit


@dataclass(frozen=True)
class ExprSet:
    """Canonical order-independent set of expressions, constants removed."""
    exprs: tuple[Expr, ...]

    @property
    def key(self) -> str:
        return "|".join(render(e) for e in self.exprs)

    def __bool__(self) -> bool:
        return bool(self.exprs)

    def union(self, other: "ExprSet") -> "ExprSet":
        return make_expr_set(self.exprs + other.exprs)


def make_expr_set(exprs: Iterable[Expr]) -> ExprSet:
    keep = {e for e in exprs if not e.is_cst}
    return ExprSet(tuple(sorted(keep, key=render)))


@dataclass(frozen=True)
class LeakWitness:
    vary_a: dict[str, int]      # two distinguishing assignments (secrets, or
    vary_b: dict[str, int]      # non-simulatable shares for NI/SNI)
    fixed: dict[str, int]       # public / selected-share context
    evidence: str

    def to_json(self) -> dict:
        return {
            "assignment_a": {k: v for k, v in sorted(self.vary_a.items())},
            "assignment_b": {k: v for k, v in sorted(self.vary_b.items())},
            "fixed": {k: v for k, v in sorted(self.fixed.items())},
            "evidence": self.evidence,
        }


SECURE = "secure"
LEAKS = "leaks"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Verdict:
    status: str
    witness: LeakWitness | None = None
    reason: str | None = None
    detail: tuple = ()

    @property
    def is_secure(self) -> bool:
        return self.status == SECURE

    @staticmethod
    def secure() -> "Verdict":
        return Verdict(SECURE)

    @staticmethod
    def leaks(witness: LeakWitness, detail: tuple = ()) -> "Verdict":
        return Verdict(LEAKS, witness=witness, detail=detail)

    @staticmethod
    def inconclusive(reason: str) -> "Verdict":
        return Verdict(INCONCLUSIVE, reason=reason)


# ---------------------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------------------

_CONTEXT_OPS = frozenset({"XOR", "CONCAT", "EXTRACT"})
_RANGE_CAP = 6   # per-mask occurrence lists saturate past this


def _occurrence_ranges(e: Expr, masks: frozenset[str],
                       memo: dict) -> dict[str, list[tuple[int, int]]]:
    """Bit ranges at which each mask occurs in the tree expansion of ``e``.

    An occurrence under a direct EXTRACT uses the extracted range; anything
    else uses the full symbol width. Lists saturate at ``_RANGE_CAP``.
    """
    got = memo.get(e)
    if got is not None:
        return got
    out: dict[str, list[tuple[int, int]]] = {}
    if e.kind == "sym":
        if e.name in masks:
            out[e.name] = [(0, e.width - 1)]
    elif e.kind == "op":
        if e.op == "EXTRACT" and e.children[0].kind == "sym" \
                and e.children[0].name in masks:
            out[e.children[0].name] = [e.params]
        else:
            for c in e.children:
                for name, ranges in _occurrence_ranges(c, masks, memo).items():
                    bucket = out.setdefault(name, [])
                    if len(bucket) <= _RANGE_CAP:
                        bucket.extend(ranges[:_RANGE_CAP + 1 - len(bucket)])
    memo[e] = out
    return out


def _overlaps(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def _is_atom_of(node: Expr, name: str) -> tuple[int, int] | None:
    if node.kind == "sym" and node.name == name:
        return (0, node.width - 1)
    if node.kind == "op" and node.op == "EXTRACT" \
            and node.children[0].kind == "sym" and node.children[0].name == name:
        return node.params
    return None


def _substitute(e: Expr, name: str, rng: tuple[int, int],
                fresh: Expr) -> Expr | None:
    """Replace the XOR node holding the (name, rng) atom by ``fresh``."""
    if e.kind != "op":
        return None
    if e.op == "XOR":
        for c in e.children:
            if _is_atom_of(c, name) == rng:
                return fresh   # the whole XOR chain is uniform in the atom
    if e.op not in _CONTEXT_OPS:
        return None
    for pos, c in enumerate(e.children):
        sub = _substitute(c, name, rng, fresh)
        if sub is not None:
            kids = list(e.children)
            kids[pos] = sub
            return ex.build(e.op, kids, e.params)
    return None


def check_substitution(eset: ExprSet, labels: SymbolTable) -> Verdict:
    """Prove independence by iterated bijective-mask replacement."""
    for e in eset.exprs:
        for name in symbols_of(e):
            if name not in labels:
                raise KeyError(f"symbol {name!r} is not labeled")
    masks = frozenset(n for e in eset.exprs for n in symbols_of(e)
                      if n in labels and labels.kind(n) == ex.MASK)
    members = list(eset.exprs)
    fresh_n = 0
    progress = True
    while progress:
        progress = False
        memo: dict = {}
        occ: dict[str, list[tuple[int, int]]] = {}
        for m in members:
            for name, ranges in _occurrence_ranges(m, masks, memo).items():
                occ.setdefault(name, []).extend(ranges)
        for name in sorted(occ):
            ranges = occ[name]
            if len(ranges) > _RANGE_CAP:
                continue
            for rng in ranges:
                if sum(_overlaps(rng, o) for o in ranges) != 1:
                    continue
                width = rng[1] - rng[0] + 1
                fresh = ex.sym(f"$sub{fresh_n}", width)
                for idx, m in enumerate(members):
                    sub = _substitute(m, name, rng, fresh)
                    if sub is not None:
                        members[idx] = sub
                        masks = masks | {fresh.name}
                        fresh_n += 1
                        progress = True
                        break
                if progress:
                    break
            if progress:
                break
    leftover = {n for m in members for n in symbols_of(m)}
    sensitive = sorted(n for n in leftover if n in labels and labels.is_sensitive(n))
    if not sensitive:
        return Verdict.secure()
    return Verdict.inconclusive(
        "substitution left sensitive symbols: " + ", ".join(sensitive))


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------

@dataclass
class _Space:
    """Cartesian assignment space over base variables, with derived shares."""
    order: list[str]                     # base variable names, offset order
    offsets: dict[str, int]
    widths: dict[str, int]
    total_bits: int
    cols: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return 1 << self.total_bits

    def materialise(self, derived: Mapping[str, tuple[str, list[str]]]) -> None:
        idx = np.arange(self.size, dtype=np.int64)
        for name in self.order:
            self.cols[name] = (idx >> self.offsets[name]) & mask(self.widths[name])
        for share, (secret, others) in derived.items():
            col = self.cols[secret].copy()
            for o in others:
                col = col ^ self.cols[o]
            self.cols[share] = col

    def decode(self, row: int, names: Sequence[str]) -> dict[str, int]:
        return {n: int(self.cols[n][row]) for n in names}


def _space_for(symbols: Iterable[str], labels: SymbolTable, limit: int,
               shares_free: bool) -> tuple[_Space, dict, list[str], list[str]]:
    """Enumeration space, derived-share map, secret vars, public vars."""
    base: list[tuple[str, int]] = []
    derived: dict[str, tuple[str, list[str]]] = {}
    secrets: list[str] = []
    publics: list[str] = []
    seen: set[str] = set()

    def add(name: str, width: int):
        if name not in seen:
            seen.add(name)
            base.append((name, width))

    for name in sorted(symbols):
        if name not in labels:
            raise KeyError(f"symbol {name!r} is not labeled")
        kind = labels.kind(name)
        width = labels.width(name)
        if kind == ex.MASK:
            add(name, width)
        elif kind == ex.PUBLIC:
            add(name, width)
            publics.append(name)
        elif kind == ex.SECRET:
            add(name, width)
            secrets.append(name)
        elif kind == ex.SHARE and shares_free:
            add(name, width)
        else:  # share, tied to its parent secret
            parent, index = labels.share_parent(name)
            siblings = labels.shares_of(parent)
            top = siblings[-1]
            if name != top:
                add(name, width)
                continue
            if parent not in labels:
                raise KeyError(f"share {name!r} references undeclared secret "
                               f"{parent!r}")
            if parent not in seen:
                add(parent, labels.width(parent))
                secrets.append(parent)
            others = [s for s in siblings if s != top]
            for o in others:
                add(o, labels.width(o))
            derived[name] = (parent, others)

    offsets: dict[str, int] = {}
    off = 0
    for name, width in base:
        offsets[name] = off
        off += width
    if off > limit:
        raise TooLarge(off, limit)
    space = _Space([n for n, _ in base], offsets, {n: w for n, w in base}, off)
    space.materialise(derived)
    return space, derived, sorted(set(secrets)), sorted(set(publics))


_INT64_WIDTH = 31   # int64 holds products and sums of values this wide


def _eval_column(e: Expr, cols: Mapping[str, np.ndarray], n: int,
                 mems: Mapping[str, Sequence[int]] | None,
                 memo: dict) -> np.ndarray:
    got = memo.get(e)
    if got is not None:
        return got
    if e.kind == "cst":
        wide = e.width > _INT64_WIDTH
        out = np.full(n, e.value, dtype=object if wide else np.int64)
    elif e.kind == "sym":
        out = cols[e.name]
    else:
        kids = [_eval_column(c, cols, n, mems, memo) for c in e.children]
        # spill to Python-int arithmetic as soon as int64 could overflow
        if e.width > _INT64_WIDTH or any(c.width > _INT64_WIDTH
                                         for c in e.children):
            kids = [k if k.dtype == object else k.astype(object)
                    for k in kids]
        op, w = e.op, e.width
        if op == "XOR":
            out = kids[0]
            for k in kids[1:]:
                out = out ^ k
        elif op == "AND":
            out = kids[0]
            for k in kids[1:]:
                out = out & k
        elif op == "OR":
            out = kids[0]
            for k in kids[1:]:
                out = out | k
        elif op == "ADD":
            out = (kids[0] + kids[1]) & mask(w)
        elif op == "SUB":
            out = (kids[0] - kids[1]) & mask(w)
        elif op == "MUL":
            out = (kids[0] * kids[1]) & mask(w)
        elif op == "POW":
            m = 1 << w
            out = np.frompyfunc(lambda a, b: pow(int(a), int(b), m), 2, 1)(*kids)
        elif op in ("LSL", "LSR", "ASR"):
            out = np.frompyfunc(
                lambda a, s: ex.shift_value(op, int(a), int(s), w), 2, 1)(*kids)
        elif op == "CONCAT":
            out = kids[0]
            for child, k in zip(e.children[1:], kids[1:]):
                out = (out << child.width) | k
        elif op == "EXTRACT":
            lo, hi = e.params
            out = (kids[0] >> lo) & mask(hi - lo + 1)
        elif op == "ARRAY":
            mem_id = e.params[0]
            if mems is None or mem_id not in mems:
                raise ex.UnboundSymbol(f"memory {mem_id}")
            table = list(mems[mem_id])
            depth = len(table)
            out = np.frompyfunc(lambda i: table[int(i) % depth] & mask(w), 1, 1)(kids[0])
        else:
            raise AssertionError(op)
    memo[e] = out
    return out


def _dense(arr: np.ndarray) -> tuple[np.ndarray, int, np.ndarray]:
    values, first, inverse = np.unique(arr, return_index=True, return_inverse=True)
    return inverse.astype(np.int64), len(values), first


_COMPOSE_CAP = 1 << 62


def _compose(parts: Sequence[tuple[np.ndarray, int]],
             n: int) -> tuple[np.ndarray, int, np.ndarray]:
    """Dense ids for the tuple of columns; each part is (column, value bound).

    Keys are packed into int64 and only re-densified when the running bound
    would overflow, which keeps np.unique calls rare.
    """
    key = np.zeros(n, dtype=np.int64)
    bound = 1
    for col, b in parts:
        if col.dtype == object or b is None:
            col, b, _ = _dense(col)
        if bound * b >= _COMPOSE_CAP:
            key, bound, _ = _dense(key)
            if bound * b >= _COMPOSE_CAP:   # degenerate: huge single column
                col, b, _ = _dense(col)
        key = key * b + col.astype(np.int64, copy=False)
        bound *= b
    return _dense(key)


def _key_of(names: Sequence[str], cols, widths: Mapping[str, int],
            n: int) -> tuple[np.ndarray, int, np.ndarray]:
    parts = [(cols[name], 1 << widths[name]) for name in names]
    return _compose(parts, n)


@dataclass
class _Violation:
    row_fixed: int
    vary_a_row: int
    vary_b_row: int
    count_a: int
    count_b: int
    tuple_row: int


def _invariance_violation(tuple_ids, n_tuple, fixed_ids, n_fixed,
                          vary_ids, n_vary) -> _Violation | None:
    """First (fixed, tuple) whose count is not uniform across vary values."""
    if n_vary <= 1:
        return None
    ft = fixed_ids * n_tuple + tuple_ids
    ft_ids, n_ft, ft_first = _dense(ft)
    comb = ft_ids * n_vary + vary_ids
    u, first_idx, counts = np.unique(comb, return_index=True, return_counts=True)
    group = u // n_vary
    starts = np.flatnonzero(np.r_[True, group[1:] != group[:-1]])
    lens = np.diff(np.r_[starts, len(u)])
    cmin = np.minimum.reduceat(counts, starts)
    cmax = np.maximum.reduceat(counts, starts)
    bad = np.flatnonzero((lens != n_vary) | (cmin != cmax))
    if bad.size == 0:
        return None
    s = starts[bad[0]]
    e = s + lens[bad[0]]
    seg_vary = u[s:e] % n_vary
    seg_counts = counts[s:e]
    seg_rows = first_idx[s:e]
    _, n_vary_total, vary_first = _dense(vary_ids)
    if len(seg_vary) < n_vary:
        present = set(int(v) for v in seg_vary)
        missing = next(v for v in range(n_vary) if v not in present)
        return _Violation(int(seg_rows[0]), int(seg_rows[0]),
                          int(vary_first[missing]), int(seg_counts[0]), 0,
                          int(seg_rows[0]))
    uneq = np.flatnonzero(seg_counts != seg_counts[0])
    j = int(uneq[0])
    return _Violation(int(seg_rows[0]), int(seg_rows[0]), int(seg_rows[j]),
                      int(seg_counts[0]), int(seg_counts[j]), int(seg_rows[0]))


def _tuple_ids(exprs: Sequence[Expr], space: _Space,
               mems=None) -> tuple[np.ndarray, int, dict]:
    memo: dict = {}
    n = space.size
    parts = []
    for e in exprs:
        col = _eval_column(e, space.cols, n, mems, memo)
        parts.append((col, (1 << e.width) if e.width <= _INT64_WIDTH else None))
    ids, count, _ = _compose(parts, n)
    return ids, count, memo


def _format_tuple(exprs: Sequence[Expr], memo: dict, row: int) -> str:
    parts = [f"{render(e)}={ex.format_bits(int(memo[e][row]), e.width)}"
             for e in exprs]
    return "(" + ", ".join(parts) + ")"


def check_enumeration(eset: ExprSet, labels: SymbolTable,
                      limit: int = DEFAULT_ENUM_LIMIT,
                      memories: Mapping[str, Sequence[int]] | None = None) -> Verdict:
    """Exact independence check by exhausting all symbol assignments."""
    symbols = set()
    for e in eset.exprs:
        symbols |= symbols_of(e)
    space, _, secrets, publics = _space_for(symbols, labels, limit,
                                            shares_free=False)
    if not secrets:
        return Verdict.secure()
    tuple_ids, n_tuple, memo = _tuple_ids(eset.exprs, space, memories)
    fixed_ids, n_fixed, _ = _key_of(publics, space.cols, space.widths,
                                    space.size)
    vary_ids, n_vary, _ = _key_of(secrets, space.cols, space.widths,
                                  space.size)
    v = _invariance_violation(tuple_ids, n_tuple, fixed_ids, n_fixed,
                              vary_ids, n_vary)
    if v is None:
        return Verdict.secure()
    witness = LeakWitness(
        vary_a=space.decode(v.vary_a_row, secrets),
        vary_b=space.decode(v.vary_b_row, secrets),
        fixed=space.decode(v.row_fixed, publics),
        evidence=(f"joint value {_format_tuple(eset.exprs, memo, v.tuple_row)} "
                  f"occurs {v.count_a} vs {v.count_b} times"),
    )
    return Verdict.leaks(witness)


def check(eset: ExprSet, labels: SymbolTable,
          limit: int = DEFAULT_ENUM_LIMIT,
          memories: Mapping[str, Sequence[int]] | None = None) -> Verdict:
    """Substitution first; exact enumeration as the fallback within budget."""
    if not eset:
        return Verdict.secure()
    verdict = check_substitution(eset, labels)
    if verdict.is_secure:
        return verdict
    try:
        return check_enumeration(eset, labels, limit, memories)
    except TooLarge as exc:
        return Verdict.inconclusive(
            f"{verdict.reason}; enumeration over limit ({exc.bits} > {exc.limit} "
            f"bits): potential false positive")


# ---------------------------------------------------------------------------
# NI / SNI
# ---------------------------------------------------------------------------

@dataclass
class GadgetSpec:
    circuit: Circuit
    labels: SymbolTable
    stimuli: Stimuli
    secrets: dict[str, list[str]]       # secret name -> ordered share symbols
    output_wires: tuple[str, ...]
    randomness: tuple[str, ...]
    order: int

    def __post_init__(self):
        for secret, shares in self.secrets.items():
            if len(shares) != self.order + 1:
                raise ValueError(f"secret {secret!r} declares {len(shares)} "
                                 f"shares for order {self.order}")


@dataclass(frozen=True)
class Probe:
    cycle: int
    wire: str
    is_output: bool
    obs: tuple[Expr, ...]

    def describe(self) -> str:
        where = "out" if self.is_output else "int"
        return f"{self.wire}@{self.cycle}[{where}]"


def collect_probes(gadget: GadgetSpec, glitches: bool) -> list[Probe]:
    """One probe candidate per (wire, cycle); glitch probes expose the
    flattened LeakSet, plain probes the symbolic value. Constant-only and
    duplicate observations are dropped."""
    from .netlist import validate_and_schedule
    schedule = validate_and_schedule(gadget.circuit)
    state = sm.initial_state(gadget.circuit)
    last = len(gadget.stimuli.frames) - 1
    probes: list[Probe] = []
    taken: set[tuple[bool, tuple[Expr, ...]]] = set()
    for t, frame in enumerate(gadget.stimuli.frames):
        state = sm.step_cycle(gadget.circuit, schedule, state, frame,
                              gadget.stimuli.witness, SimOptions())
        for uid in sorted(state.current):
            val = state.current[uid]
            if glitches:
                obs = tuple(sorted({m for s in val.lset for m in s if not m.is_cst},
                                   key=render))
            else:
                obs = () if val.symb.is_cst else (val.symb,)
            if not obs:
                continue
            name = gadget.circuit.name(uid)
            is_output = name in gadget.output_wires and t == last
            key = (is_output, obs)
            if key in taken:
                continue
            taken.add(key)
            probes.append(Probe(t, name, is_output, obs))
    return probes


def _simulatable(exprs: tuple[Expr, ...], gadget: GadgetSpec, budget: int,
                 limit: int) -> tuple[bool, LeakWitness | None]:
    """Can a simulator with ``budget`` shares of each input reproduce the
    joint distribution of ``exprs``?"""
    symbols = set()
    for e in exprs:
        symbols |= symbols_of(e)
    space, _, _, _ = _space_for(symbols, gadget.labels, limit, shares_free=True)
    present = {secret: [s for s in shares if s in symbols]
               for secret, shares in gadget.secrets.items()}
    if all(len(p) <= budget for p in present.values()):
        return True, None
    tuple_ids, n_tuple, memo = _tuple_ids(exprs, space)
    choices = []
    for secret in sorted(present):
        shares = present[secret]
        k = min(budget, len(shares))
        choices.append(list(itertools.combinations(shares, k)))
    first_witness: LeakWitness | None = None
    for selection in itertools.product(*choices):
        sel = sorted(n for combo in selection for n in combo)
        non_sel = sorted(n for ps in present.values() for n in ps
                         if n not in sel)
        fixed_ids, n_fixed, _ = _key_of(sel, space.cols, space.widths,
                                        space.size)
        vary_ids, n_vary, _ = _key_of(non_sel, space.cols, space.widths,
                                      space.size)
        v = _invariance_violation(tuple_ids, n_tuple, fixed_ids, n_fixed,
                                  vary_ids, n_vary)
        if v is None:
            return True, None
        if first_witness is None:
            first_witness = LeakWitness(
                vary_a=space.decode(v.vary_a_row, non_sel),
                vary_b=space.decode(v.vary_b_row, non_sel),
                fixed=space.decode(v.row_fixed, sel),
                evidence=(f"joint value {_format_tuple(exprs, memo, v.tuple_row)} "
                          f"occurs {v.count_a} vs {v.count_b} times"),
            )
    return False, first_witness


def _check_simulatability(gadget: GadgetSpec, d: int, glitches: bool,
                          strong: bool, limit: int) -> Verdict:
    probes = collect_probes(gadget, glitches)
    cache: dict[tuple, tuple[bool, LeakWitness | None]] = {}
    for q in range(1, d + 1):
        for combo in itertools.combinations(probes, q):
            budget = sum(1 for p in combo if not p.is_output) if strong else q
            union = tuple(sorted({e for p in combo for e in p.obs}, key=render))
            key = (union, budget)
            if key not in cache:
                cache[key] = _simulatable(union, gadget, budget, limit)
            ok, witness = cache[key]
            if not ok:
                detail = tuple(p.describe() for p in combo)
                assert witness is not None
                return Verdict.leaks(witness, detail=detail)
    return Verdict.secure()


def check_ni(gadget: GadgetSpec, d: int, glitches: bool,
             limit: int = DEFAULT_ENUM_LIMIT) -> Verdict:
    """d-NI: every tuple of q <= d probes is simulatable with q shares."""
    return _check_simulatability(gadget, d, glitches, strong=False, limit=limit)


def check_sni(gadget: GadgetSpec, d: int, glitches: bool,
              limit: int = DEFAULT_ENUM_LIMIT) -> Verdict:
    """d-SNI: output probes are free, the share budget is the number of
    internal probes in the tuple."""
    return _check_simulatability(gadget, d, glitches, strong=True, limit=limit)
