"""Inferred class tables can be dumped, edited and audited.

The dump lists relevant (class, region) pairs, field typings and method
summaries.  A hand-edited table is checked for well-formedness and, given
the policy and entry point, against what the analysis would infer: a
summary may over-approximate the inferred one but never claim less.
"""

import tempfile
from pathlib import Path

from fjeucs import KCFA, analyze, dump_table, load_policy, load_program
from fjeucs.cli import bundled_corpus, main

corpus = bundled_corpus()
taint = load_policy(corpus / "taint.policy")
prog_path = corpus / "example1_mutated.fj"
an = analyze(load_program(prog_path), taint, KCFA(1), [("C", "main")])
text = dump_table(an.table)
print(text)

with tempfile.TemporaryDirectory() as d:
    table = Path(d) / "table.txt"
    table.write_text(text)
    args = ["audit-table", str(table), "--program", str(prog_path),
            "--policy", "taint", "--entry", "C.main"]
    print("audit of the dump as is:")
    main(args)

    # claim that main never emits a tainted event
    edited = "\n".join(ln.replace("! {T}", "! {U}") if ln.startswith("method main") else ln
                       for ln in text.splitlines())
    table.write_text(edited + "\n")
    print("\naudit after understating main's effect:")
    main(args)
