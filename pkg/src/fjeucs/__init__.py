"""Static trace-policy checking for FJEUCS programs.

Programs and policies are parsed with :mod:`fjeucs.parser`, analysed by
:func:`fjeucs.infer.analyze` and cross-checked against the reference
interpreter in :mod:`fjeucs.interp` and the soundness harness.
"""

from .contexts import ConstantContexts, KCFA, make_context_policy
from .harness import generate_program, heap_typing_check, soundness_check
from .infer import Analysis, AnalysisError, Options, analyze, dump_table, report, verdict
from .interp import Stuck, eval_expr, run_entry
from .parser import (IllFormedProgram, ParseError, load_policy, load_program, parse_policy,
                     parse_program, pretty_print)
from .policy import Policy, PolicyError

__version__ = "0.1.0"

__all__ = [
    "Analysis", "AnalysisError", "ConstantContexts", "IllFormedProgram", "KCFA", "Options",
    "ParseError", "Policy", "PolicyError", "Stuck", "analyze", "dump_table", "eval_expr",
    "generate_program", "heap_typing_check", "load_policy", "load_program",
    "make_context_policy", "parse_policy", "parse_program", "pretty_print", "report",
    "run_entry", "soundness_check", "verdict",
]
