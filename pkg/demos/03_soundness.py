"""Checking the analysis against the interpreter.

For a closed program, every terminating run emits a trace whose monoid
element must belong to the inferred effect.  The harness enumerates the
nondeterministic choices of builtins (which user input is read, for
example), runs the reference interpreter and compares.  It also checks
the heap typing recorded during each run against the inferred field table.
"""

from fjeucs import KCFA, generate_program, load_policy, load_program, pretty_print, soundness_check
from fjeucs.cli import bundled_corpus
from fjeucs.harness import fuzz_campaign

corpus = bundled_corpus()
taint = load_policy(corpus / "taint.policy")

rep = soundness_check(load_program(corpus / "example2.fj"), ("Servlet", "doGet"), taint, KCFA(1))
print(f"example2: effect {rep.effect}, runs saw {rep.classes_seen}, "
      f"{rep.terminated}/{rep.runs} terminated, ok={rep.ok}")

print("\na generated program:\n")
print(pretty_print(generate_program(3)))

cases = fuzz_campaign(range(50), [0, 1, 2], taint, budget=8)
bad = [c for c in cases if not c.ok]
print(f"{len(cases)} generated cases, {sum(c.runs for c in cases)} runs, "
      f"{sum(c.terminated for c in cases)} terminated, {len(bad)} containment failures")
