"""Policies are finite monoids.

A policy written as an automaton is compiled to its transition monoid:
each element is the state map of some word, and an element is allowed
when its map sends the initial state to an accepting one.  The analysis
only ever multiplies elements, so the effect of a whole program is a set
of monoid elements.
"""

from fjeucs import KCFA, analyze, load_policy, load_program, run_entry, verdict
from fjeucs.cli import bundled_corpus
from fjeucs.interp import trace_class

corpus = bundled_corpus()
for name in ("taint", "sanitize", "auth"):
    pol = load_policy(corpus / f"{name}.policy")
    m = pol.monoid
    print(f"{name}: {m.size} elements, {len(pol.allowed)} allowed, alphabet {' '.join(pol.alphabet)}")

san = load_policy(corpus / "sanitize.policy")
print("\nletters of the sanitize policy and their elements:")
for x in san.alphabet:
    print(f"  {x:<8} -> {san.element_name(san.hom[x])}")

w = ["Input", "C1"]
print(f"\nword {w}: element {san.element_name(san.word_class(w))}, "
      f"automaton accepts: {san.automaton.accepts(w)}")

for case in ("sanitize_ok.fj", "sanitize_bad.fj"):
    p = load_program(corpus / case)
    v = verdict(analyze(p, san, KCFA(1), [("Page", "render")]))
    run = run_entry(p, san, "Page", "render")
    print(f"\n{case}: {v.label}")
    print(f"  one run emits {list(run.trace)}, class {san.element_name(trace_class(run.trace, san))}")
