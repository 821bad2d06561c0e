"""Command-line entry point.

Subcommands:
  verify        simulate a netlist against stimuli and check a leakage model
  ni / sni      (strong) non-interference checks on generated gadgets
  gen-fixtures  write the bundled benchmark fixtures to a directory

Exit codes: 0 no leak found; 1 leaks or inconclusive verdicts; 2 usage or
I/O errors; 3 simulation errors (combinatorial loop, consistency violation).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import expr as ex
from . import gadgets
from . import manager as mg
from . import sim as sm
from . import verify as vf
from .netlist import CombinatorialLoop, NetlistError, parse_netlist, \
    serialize_netlist

EXIT_OK = 0
EXIT_LEAKS = 1
EXIT_USAGE = 2
EXIT_SIM = 3


def _bool(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {value!r}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probewise",
        description="Masked-circuit leakage verifier over glitch/transition "
                    "probing models")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="simulate + verify a netlist")
    v.add_argument("--netlist", required=True)
    v.add_argument("--labels", required=True)
    v.add_argument("--stimuli", required=True)
    v.add_argument("--model", default=None,
                   help="preset: 0,0 | 0,1 | 1,0 | 1,1 | rr1sw")
    v.add_argument("--glitches", type=_bool, default=None)
    v.add_argument("--transitions", type=_bool, default=None)
    v.add_argument("--stability", type=_bool, default=None)
    v.add_argument("--granularity", choices=(mg.BIT, mg.SUPPORT_WISE),
                   default=None)
    v.add_argument("--order", type=int, default=1)
    v.add_argument("--overapprox", action="store_true", default=None)
    v.add_argument("--ho-mode", choices=(mg.SPATIAL, mg.TEMPORAL, mg.MIXED),
                   default=mg.SPATIAL, help="position kind for order >= 2")
    v.add_argument("--enum-limit", type=int, default=vf.DEFAULT_ENUM_LIMIT)
    v.add_argument("--stop-on-first-leak", action="store_true")
    v.add_argument("--no-cache", action="store_true")
    v.add_argument("--keep-going", action="store_true",
                   help="downgrade consistency violations to warnings")
    v.add_argument("--reset-unstable", action="store_true",
                   help="treat registers as unstable at cycle 0")
    v.add_argument("--check-consistency", action="store_true")
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--report", default=None, help="write the JSONL report here")

    for name in ("ni", "sni"):
        p = sub.add_parser(name, help=f"{name.upper()} check on a gadget")
        p.add_argument("--gadget", choices=("dom_and", "isw_and"), required=True)
        p.add_argument("--order", type=int, required=True,
                       help="masking order of the generated gadget")
        p.add_argument("--verif-order", type=int, default=None,
                       help="number of probes d (default: masking order)")
        p.add_argument("--glitches", type=_bool, default=False)
        p.add_argument("--cycles", type=int, default=2)
        p.add_argument("--enum-limit", type=int, default=vf.DEFAULT_ENUM_LIMIT)

    g = sub.add_parser("gen-fixtures", help="write benchmark fixtures")
    g.add_argument("--out", required=True)
    g.add_argument("--orders", default="1,2",
                   help="comma-separated gadget orders (default 1,2)")
    return parser


def _leakage_model(args) -> mg.LeakageModel:
    glitches = transitions = False
    stability = True
    granularity = mg.SUPPORT_WISE
    overapprox = False
    if args.model is not None:
        preset = args.model.strip().lower()
        if preset == "rr1sw":
            glitches = transitions = True
            overapprox = True
        else:
            try:
                g, t = preset.split(",")
                glitches, transitions = bool(int(g)), bool(int(t))
            except ValueError:
                raise SystemExit(EXIT_USAGE) from None
    if args.glitches is not None:
        glitches = args.glitches
    if args.transitions is not None:
        transitions = args.transitions
    if args.stability is not None:
        stability = args.stability
    if args.granularity is not None:
        granularity = args.granularity
    if args.overapprox is not None:
        overapprox = args.overapprox
    return mg.LeakageModel(glitches=glitches, transitions=transitions,
                           use_stability=stability, granularity=granularity,
                           order=args.order, overapprox=overapprox)


def _cmd_verify(args) -> int:
    try:
        netlist_text = Path(args.netlist).read_text()
        labels_text = Path(args.labels).read_text()
        stimuli_text = Path(args.stimuli).read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        circuit = parse_netlist(netlist_text)
        labels = ex.SymbolTable.from_json(json.loads(labels_text))
        stimuli = sm.parse_stimuli(stimuli_text, labels.widths())
        model = _leakage_model(args)
    except CombinatorialLoop as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIM
    except (NetlistError, ValueError, sm.SimError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if model.order > 1:
            return _higher_order(args, circuit, stimuli, labels, model)
        options = mg.RunOptions(
            enum_limit=args.enum_limit,
            stop_on_first_leak=args.stop_on_first_leak,
            use_cache=not args.no_cache,
            check_consistency=args.check_consistency,
            sim_options=sm.SimOptions(use_stability=model.use_stability,
                                      reset_unstable=args.reset_unstable,
                                      keep_going=args.keep_going),
            jobs=args.jobs,
        )
        report = mg.run(circuit, stimuli, labels, model, options)
    except CombinatorialLoop as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIM
    except (sm.SimError, ex.UnboundSymbol) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIM

    if args.report:
        Path(args.report).write_text(report.to_jsonl())
    summary = report.summary
    flagged = report.flagged()
    print(f"cycles:           {summary.cycles}")
    print(f"leaking cycles:   {summary.leaking_cycles}")
    print(f"expr to verify:   {summary.expr_to_verify}")
    print(f"verified expr:    {summary.verified_expr}")
    print(f"cache hits:       {summary.cache_hits}")
    print(f"trivial skipped:  {summary.trivial_skipped}")
    for entry in flagged[:20]:
        where = f" ({entry.src[0]}:{entry.src[1]})" if entry.src else ""
        print(f"  {entry.verdict.status}: cycle {entry.cycle} wire "
              f"{entry.wire}{where} [{entry.facet}]")
    if len(flagged) > 20:
        print(f"  ... {len(flagged) - 20} more")
    return EXIT_LEAKS if flagged else EXIT_OK


def _higher_order(args, circuit, stimuli, labels, model) -> int:
    result = mg.verify_higher_order(circuit, stimuli, labels, model,
                                    mode=args.ho_mode,
                                    enum_limit=args.enum_limit)
    print(f"d-uplets: {result.tuple_count} total, {result.tuples_checked} checked")
    print(f"verdict:  {result.verdict.status}")
    if result.leaking_tuple is not None:
        print(f"leaking:  {result.leaking_tuple}")
    if args.report:
        doc = {"order": model.order, "mode": args.ho_mode,
               "tuples": result.tuple_count,
               "checked": result.tuples_checked,
               "verdict": result.verdict.status}
        if result.leaking_tuple is not None:
            doc["leaking_tuple"] = list(result.leaking_tuple)
            if result.verdict.witness:
                doc["witness"] = result.verdict.witness.to_json()
        Path(args.report).write_text(json.dumps(doc, sort_keys=True) + "\n")
    return EXIT_OK if result.verdict.is_secure else EXIT_LEAKS


def _cmd_ni(args, strong: bool) -> int:
    gen = gadgets.gen_dom_and if args.gadget == "dom_and" else gadgets.gen_isw_and
    try:
        _, _, _, spec = gen(args.order, cycles=args.cycles)
        d = args.verif_order if args.verif_order is not None else args.order
        checker = vf.check_sni if strong else vf.check_ni
        verdict = checker(spec, d, args.glitches, args.enum_limit)
    except vf.TooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    prop = "SNI" if strong else "NI"
    glitch_txt = "with" if args.glitches else "without"
    print(f"{args.gadget} order {args.order}, {prop} at d={d} {glitch_txt} "
          f"glitches: {verdict.status}")
    if verdict.detail:
        print(f"  probes: {', '.join(verdict.detail)}")
    if verdict.witness is not None:
        print(f"  witness: {json.dumps(verdict.witness.to_json(), sort_keys=True)}")
    return EXIT_OK if verdict.is_secure else EXIT_LEAKS


def _cmd_gen_fixtures(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        orders = [int(x) for x in args.orders.split(",") if x]
    except ValueError:
        print("error: --orders must be comma-separated integers", file=sys.stderr)
        return EXIT_USAGE

    def emit(name: str, circuit, labels, stimuli):
        (out / f"{name}.netlist.json").write_text(serialize_netlist(circuit))
        (out / f"{name}.labels.json").write_text(
            json.dumps(labels.to_json(), indent=1))
        widths = labels.widths()
        (out / f"{name}.stim.jsonl").write_text(sm.dump_stimuli(stimuli, widths))

    for fixture in gadgets.gen_counterexamples().values():
        emit(fixture.name, fixture.circuit, fixture.labels, fixture.stimuli)
    for d in orders:
        circuit, labels, stimuli, _ = gadgets.gen_dom_and(d)
        emit(f"dom_and_d{d}", circuit, labels, stimuli)
        circuit, labels, stimuli, _ = gadgets.gen_isw_and(d)
        emit(f"isw_and_d{d}", circuit, labels, stimuli)
    print(f"fixtures written to {out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    if args.command == "verify":
        code = _cmd_verify(args)
    elif args.command == "ni":
        code = _cmd_ni(args, strong=False)
    elif args.command == "sni":
        code = _cmd_ni(args, strong=True)
    else:
        code = _cmd_gen_fixtures(args)
    return code


if __name__ == "__main__":
    sys.exit(main())
