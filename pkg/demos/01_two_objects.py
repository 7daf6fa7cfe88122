"""Two objects of the same class, one holding user input.

Allocation sites give the two D objects different regions, so the analysis
keeps their field contents apart and accepts the program.  Collapsing all
objects into one region merges the field and the program is rejected.
Passing the wrong object to putString is caught under any context policy.
"""

from fjeucs import KCFA, ConstantContexts, analyze, load_policy, load_program, verdict
from fjeucs.cli import bundled_corpus

corpus = bundled_corpus()
taint = load_policy(corpus / "taint.policy")
program = load_program(corpus / "example1.fj")
mutated = load_program(corpus / "example1_mutated.fj")

print((corpus / "example1.fj").read_text())

for name, p, ctx in [("original, k=0", program, KCFA(0)),
                     ("original, k=1", program, KCFA(1)),
                     ("original, one region", program, ConstantContexts()),
                     ("putString(f1.s), k=1", mutated, KCFA(1))]:
    an = analyze(p, taint, ctx, [("C", "main")])
    v = verdict(an)
    effect = ", ".join(taint.element_name(u) for u in sorted(v.effect))
    print(f"{name:<24} {v.label:<4} effect {{{effect}}}  ({an.rounds} rounds)")

# The field table shows why: one entry per (field, class, region).
an = analyze(program, taint, KCFA(0), [("C", "main")])
print("\nfield typings at k=0:")
for (f, c, r), t in sorted(an.table.F.items(), key=str):
    print(f"  {c}.{f} in {an.table.region_name(r)}: {an.table.render(t)}")
