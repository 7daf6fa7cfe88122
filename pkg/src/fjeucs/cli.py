"""Command-line front end.

Exit codes: 0 compliant / all checks pass, 1 violation or failed check,
2 usage, input or parse errors, 3 internal invariant failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .checker import TableFormatError, audit, load_table
from .contexts import ContextPolicy, make_context_policy, parse_context, parse_region
from .harness import GenBounds, fuzz_campaign, summary_json, summary_junit
from .infer import (AnalysisError, analyze, dump_table, format_report, is_fixpoint, report,
                    validate_semi_table, verdict)
from .interp import DEFAULT_FUEL, OutOfFuel, SObj, Stuck, heap_summary, run_entry, trace_class
from .parser import IllFormedProgram, ParseError, load_policy, load_program
from .policy import FirstChooser, Policy, PolicyError, RandomChooser
from .syntax import parse_entry

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InternalError(Exception):
    pass


def bundled_corpus() -> Path:
    return Path(str(resources.files("fjeucs") / "corpus"))


def resolve_policy(arg: str) -> Policy:
    """Load a policy file; a bare name such as ``taint`` picks the bundled policy."""
    path = Path(arg)
    if not path.exists() and path.suffix == "" and len(path.parts) == 1:
        bundled = bundled_corpus() / f"{arg}.policy"
        if bundled.exists():
            path = bundled
    if not path.exists():
        raise UsageError(f"policy file not found: {arg}")
    return load_policy(path)


def context_policy(args) -> ContextPolicy:
    try:
        return make_context_policy(args.context_policy, args.k)
    except ValueError as err:
        raise UsageError(str(err)) from None


def _entry(text: Optional[str]) -> tuple[str, str]:
    if not text:
        raise UsageError("--entry C.m is required")
    try:
        return parse_entry(text)
    except ValueError as err:
        raise UsageError(str(err)) from None


def _program(path: str):
    if not Path(path).exists():
        raise UsageError(f"program file not found: {path}")
    return load_program(path)


def _check_entry(p, entry):
    if entry not in p.mtable:
        raise UsageError(f"no method {entry[0]}.{entry[1]} in the program")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_check(args) -> int:
    p = _program(args.program)
    pol = resolve_policy(args.policy)
    entry = _entry(args.entry)
    _check_entry(p, entry)
    an = analyze(p, pol, context_policy(args), [entry])
    v = verdict(an)
    if args.dump_table:
        Path(args.dump_table).write_text(dump_table(an.table))
    if args.json:
        print(json.dumps(report(an, v, program=args.program), indent=2))
    else:
        print(format_report(an, v))
    return EXIT_OK if v.compliant else EXIT_VIOLATION


def cmd_run(args) -> int:
    p = _program(args.program)
    pol = resolve_policy(args.policy)
    entry = _entry(args.entry)
    _check_entry(p, entry)
    chooser = RandomChooser(args.seed) if args.seed is not None else FirstChooser()
    out: dict = {"entry": f"{entry[0]}.{entry[1]}"}
    try:
        res = run_entry(p, pol, entry[0], entry[1], chooser, args.fuel)
    except Stuck as s:
        out.update(status="stuck", kind=s.kind, detail=s.detail,
                   position=p.positions.get(s.label) if s.label is not None else None)
        code = EXIT_VIOLATION
    except OutOfFuel as s:
        out.update(status="out-of-fuel", detail=str(s))
        code = EXIT_VIOLATION
    else:
        c = trace_class(res.trace, pol)
        allowed = c in pol.allowed
        cell = res.heap.get(res.value) if res.value is not None else None
        out.update(status="terminated", steps=res.steps, trace=list(res.trace),
                   trace_class=pol.element_name(c), allowed=allowed,
                   value=None if cell is None else (cell.text if isinstance(cell, SObj)
                                                    else f"{cell.cls} object"),
                   heap=heap_summary(res.heap))
        code = EXIT_OK if allowed else EXIT_VIOLATION
    if args.json:
        print(json.dumps(out, indent=2))
    else:
        for k, v in out.items():
            if k == "heap":
                print("heap:")
                for line in v:
                    print(f"  {line}")
            else:
                print(f"{k}: {' '.join(v) if isinstance(v, list) else v}")
    return code


def cmd_audit_table(args) -> int:
    p = _program(args.program)
    path = Path(args.table)
    if not path.exists():
        raise UsageError(f"table file not found: {args.table}")
    text = path.read_text()
    diags = [str(d) for d in audit(load_table(text), p)]
    if args.policy and args.entry:
        pol = resolve_policy(args.policy)
        ctxpol = context_policy(args)
        entry = _entry(args.entry)
        tab = load_table(text, lambda s: parse_region(s, ctxpol), pol.element, parse_context)
        diags += validate_semi_table(tab, p, pol, ctxpol, [entry])
    if args.json:
        print(json.dumps({"diagnostics": diags, "ok": not diags}, indent=2))
    else:
        for d in diags:
            print(d)
        print("table OK" if not diags else f"{len(diags)} problem(s)")
    return EXIT_OK if not diags else EXIT_VIOLATION


def cmd_fuzz(args) -> int:
    pol = resolve_policy(args.policy)
    try:
        ks = [int(x) for x in args.ks.split(",")]
    except ValueError:
        raise UsageError(f"bad --ks {args.ks!r}") from None
    seeds = range(args.seed or 0, (args.seed or 0) + args.count)
    start = time.perf_counter()
    cases = fuzz_campaign(seeds, ks, pol, GenBounds(), args.budget, args.fuel, True, args.jobs)
    elapsed = time.perf_counter() - start
    failures = [c for c in cases if not c.ok]
    if args.junit:
        Path(args.junit).write_text(summary_junit(cases))
    if args.json:
        print(summary_json(cases))
    else:
        runs = sum(c.runs for c in cases)
        term = sum(c.terminated for c in cases)
        print(f"{len(cases)} cases, {runs} runs, {term} terminated, "
              f"{sum(c.stuck for c in cases)} stuck, {sum(c.out_of_fuel for c in cases)} out of fuel, "
              f"{len(failures)} failures in {elapsed:.1f}s")
        for c in failures:
            print(f"  seed {c.seed} k={c.k}: {c.error or c.detail}")
    return EXIT_OK if not failures else EXIT_VIOLATION


def cmd_dump_monoid(args) -> int:
    pol = resolve_policy(args.policy)
    m = pol.monoid
    if args.json:
        print(json.dumps({
            "elements": list(m.names), "neutral": m.names[m.neutral],
            "table": [[m.names[m.mul(a, b)] for b in m.elements] for a in m.elements],
            "hom": {x: m.names[u] for x, u in sorted(pol.hom.items())},
            "allowed": sorted(m.names[u] for u in pol.allowed)}, indent=2))
        return EXIT_OK
    print(f"# {m.size} elements, neutral {m.names[m.neutral]}")
    print("# hom: " + ", ".join(f"{x} -> {m.names[u]}" for x, u in sorted(pol.hom.items())))
    print("# allowed: " + " ".join(sorted(m.names[u] for u in pol.allowed)))
    print(m.tsv())
    return EXIT_OK


# --------------------------------------------------------------------------
# corpus runner
# --------------------------------------------------------------------------


class ManifestError(ValueError):
    pass


@dataclass
class CorpusCase:
    program: str
    policy: str
    entry: str
    expected: str
    k: int = 1
    context_policy: str = "kcfa"


@dataclass
class CorpusRow:
    case: str
    entry: str
    options: str
    expected: str
    actual: str
    seconds: float
    fixpoint: bool

    @property
    def match(self) -> bool:
        return self.expected == self.actual


def read_manifest(directory: Path) -> list[CorpusCase]:
    """Lines ``case.fj policy.policy C.m OK|BAD [k=N] [ctx=NAME]``; ``#`` starts a comment."""
    path = directory / "MANIFEST"
    if not path.exists():
        return []
    cases = []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        if len(parts) < 4:
            raise ManifestError(f"MANIFEST line {lineno}: expected 'case policy entry OK|BAD'")
        prog, pol, entry, expected, *opts = parts
        if expected not in ("OK", "BAD"):
            raise ManifestError(f"MANIFEST line {lineno}: expected verdict must be OK or BAD, got {expected!r}")
        case = CorpusCase(prog, pol, entry, expected)
        for opt in opts:
            key, eq, val = opt.partition("=")
            if key == "k" and eq and val.isdigit():
                case.k = int(val)
            elif key == "ctx" and eq and val in ("kcfa", "constant"):
                case.context_policy = val
            else:
                raise ManifestError(f"MANIFEST line {lineno}: unknown option {opt!r}")
        try:
            parse_entry(entry)
        except ValueError as err:
            raise ManifestError(f"MANIFEST line {lineno}: {err}") from None
        for name in (prog, pol):
            if not (directory / name).exists():
                raise ManifestError(f"MANIFEST line {lineno}: no file {name}")
        cases.append(case)
    return cases


def run_case(directory: Path, case: CorpusCase) -> CorpusRow:
    p = load_program(directory / case.program)
    pol = load_policy(directory / case.policy)
    ctxpol = make_context_policy(case.context_policy, case.k)
    start = time.perf_counter()
    an = analyze(p, pol, ctxpol, [parse_entry(case.entry)])
    v = verdict(an)
    elapsed = time.perf_counter() - start
    opts = "ctx=constant" if case.context_policy == "constant" else f"k={case.k}"
    return CorpusRow(case.program, case.entry, opts, case.expected, v.label, elapsed, is_fixpoint(an))


def _run_case_star(a):
    return run_case(*a)


def run_corpus(directory, jobs: int = 1) -> list[CorpusRow]:
    """Analyze every manifest case of ``directory`` and compare verdicts."""
    directory = Path(directory)
    if not directory.is_dir():
        raise UsageError(f"not a directory: {directory}")
    cases = read_manifest(directory)
    work = [(directory, c) for c in cases]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_run_case_star, work))
    return [run_case(*w) for w in work]


def format_corpus(rows: Sequence[CorpusRow]) -> str:
    head = f"{'case':<22} {'entry':<26} {'options':<13} {'expected':<8} {'actual':<6} {'time':>8}  result"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.case:<22} {r.entry:<26} {r.options:<13} {r.expected:<8} {r.actual:<6} "
                     f"{r.seconds * 1000:>6.1f}ms  {'match' if r.match else 'MISMATCH'}")
    lines.append(f"{sum(r.match for r in rows)}/{len(rows)} cases match")
    return "\n".join(lines)


def cmd_corpus(args) -> int:
    rows = run_corpus(args.directory or bundled_corpus(), args.jobs)
    if args.json:
        print(json.dumps([{**asdict(r), "match": r.match} for r in rows], indent=2))
    else:
        print(format_corpus(rows))
    if not all(r.fixpoint for r in rows):
        raise InternalError("analysis result is not a fixpoint")
    return EXIT_OK if all(r.match for r in rows) else EXIT_VIOLATION


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fjeucs", description="Region-and-effect analysis of FJEUCS programs "
                                 "against trace policies.")
    sub = ap.add_subparsers(dest="command", required=True)

    def analysis_flags(sp, need_policy=True):
        sp.add_argument("--policy", required=need_policy, help="policy file, or the name of a bundled policy")
        sp.add_argument("--entry", help="entry method, as Class.method")
        sp.add_argument("--k", type=int, default=1, help="call-string length for k-CFA (default 1)")
        sp.add_argument("--context-policy", default="kcfa", choices=["kcfa", "constant"])
        sp.add_argument("--json", action="store_true", help="machine-readable output")

    sp = sub.add_parser("check", help="infer effects and decide compliance")
    sp.add_argument("program")
    analysis_flags(sp)
    sp.add_argument("--dump-table", metavar="FILE", help="write the final class table here")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("run", help="execute the entry method with the reference interpreter")
    sp.add_argument("program")
    analysis_flags(sp)
    sp.add_argument("--fuel", type=int, default=DEFAULT_FUEL)
    sp.add_argument("--seed", type=int, help="resolve builtin choices randomly with this seed")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("audit-table", help="audit a dumped or hand-written class table")
    sp.add_argument("table")
    sp.add_argument("--program", required=True)
    analysis_flags(sp, need_policy=False)
    sp.set_defaults(func=cmd_audit_table)

    sp = sub.add_parser("fuzz", help="soundness checks on generated programs")
    sp.add_argument("--policy", default="taint")
    sp.add_argument("--count", type=int, default=100, help="number of generated programs")
    sp.add_argument("--seed", type=int, default=0, help="first generator seed")
    sp.add_argument("--ks", default="0,1,2", help="comma-separated k values")
    sp.add_argument("--budget", type=int, default=16, help="runs per program")
    sp.add_argument("--fuel", type=int, default=20_000)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--junit", metavar="FILE", help="write a JUnit XML summary")
    sp.set_defaults(func=cmd_fuzz)

    sp = sub.add_parser("dump-monoid", help="print a policy's monoid")
    sp.add_argument("--policy", required=True)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_dump_monoid)

    sp = sub.add_parser("corpus", help="run a directory of cases against its MANIFEST")
    sp.add_argument("directory", nargs="?", help="defaults to the bundled corpus")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_corpus)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ManifestError, ParseError, IllFormedProgram, PolicyError,
            TableFormatError, AnalysisError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except InternalError as err:
        print(f"internal error: {err}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as err:  # anything else is a bug in the analyzer
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
