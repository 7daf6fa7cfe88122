"""Standalone audits of class tables: field invariance, override
contravariance and relevance closure.

Tables are set-valued (:class:`~fjeucs.infer.DeclTable`); regions and
contexts are opaque hashables, so the audits apply equally to inferred
tables and to tables read back from their text dump.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Optional

from .infer import DeclTable
from .lattice import MethodSig, RefinedType, parse_type, render_type, sig_leq
from .syntax import OBJECT, Program


@dataclass(frozen=True)
class Diagnostic:
    where: str
    expected: str
    found: str

    def __str__(self):
        return f"{self.where}: expected {self.expected}, found {self.found}"


def _show(t) -> str:
    if isinstance(t, RefinedType):
        return render_type(t)
    if isinstance(t, MethodSig):
        return (f"({', '.join(_show(a) for a in t.args)}) -> {_show(t.result)} "
                f"! {{{','.join(sorted(map(str, t.effect)))}}}")
    return str(t)


def _region_sort(x):
    return (type(x).__name__, str(x))


def check_field_typing(F: dict, p: Program, relevant: Optional[set] = None) -> list[Diagnostic]:
    """``F(f, D_r) = F(f, C_r)`` for every subclass ``D`` of ``C`` having ``f``.

    Missing entries stand for the bottom type of the field's standard class.
    """
    diags = []
    std = p.std

    def get(f, c, r):
        t = F.get((f, c, r))
        if t is None:
            cls = std.F0.get((c, f), OBJECT) if std else OBJECT
            return RefinedType(cls)
        return t

    pairs = set()
    for (f, c, r) in F:
        for a in p.ancestors(c):
            if f in p.fields.get(a, ()):
                for d in p.subclasses(a):
                    if f in p.fields.get(d, ()):
                        pairs.add((f, d, a, r))
    for f, d, c, r in sorted(pairs, key=lambda x: (x[0], x[1], x[2], _region_sort(x[3]))):
        if d == c:
            continue
        if relevant is not None and (d, r) not in relevant:
            continue
        if (f, d, r) not in F and relevant is None:
            continue
        td, tc = get(f, d, r), get(f, c, r)
        if td != tc:
            diags.append(Diagnostic(f"F({f}, {d}@{r})", f"F({f}, {c}@{r}) = {_show(tc)}", _show(td)))
    return diags


def check_override_condition(M: dict, p: Program, relevant: Optional[set] = None) -> list[Diagnostic]:
    """Every signature of ``C`` at ``(m, z, r)`` is matched by a better one of each relevant subclass."""
    diags = []
    for (m, z, c, r), sigs in sorted(M.items(), key=lambda kv: repr(kv[0])):
        for d in p.subclasses(c):
            if d == c:
                continue
            key = (m, z, d, r)
            if key not in M and (relevant is None or (d, r) not in relevant):
                continue
            subs = M.get(key, [])
            for s in sigs:
                if not any(sig_leq(s2, s, p) for s2 in subs):
                    diags.append(Diagnostic(f"M({m}, {z}, {d}@{r})",
                                            f"a signature below {_show(s)} (from {c})",
                                            "; ".join(_show(x) for x in subs) or "no entry"))
    return diags


def check_relevance_closure(relevant: set, F: dict, M: dict, p: Program) -> list[Diagnostic]:
    """Relevant atoms are closed under superclasses and cover every table position."""
    diags = []
    for c, r in sorted(relevant, key=lambda x: (x[0], _region_sort(x[1]))):
        for a in p.ancestors(c)[1:]:
            if (a, r) not in relevant:
                diags.append(Diagnostic(f"relevant {c}@{r}", f"{a}@{r} relevant", "missing"))

    def need(t: RefinedType, where: str):
        for r in t.regions:
            if (t.cls, r) not in relevant:
                diags.append(Diagnostic(where, f"{t.cls}@{r} relevant", "missing"))

    for (f, c, r), t in F.items():
        if (c, r) not in relevant:
            diags.append(Diagnostic(f"F({f}, {c}@{r})", f"{c}@{r} relevant", "missing"))
        need(t, f"F({f}, {c}@{r})")
    for (m, z, c, r), sigs in M.items():
        where = f"M({m}, {z}, {c}@{r})"
        if (c, r) not in relevant:
            diags.append(Diagnostic(where, f"{c}@{r} relevant", "missing"))
        for s in sigs:
            for a in s.args:
                need(a, where)
            need(s.result, where)
    return diags


def audit(tab: DeclTable, p: Program) -> list[Diagnostic]:
    out = check_field_typing(tab.F, p, tab.relevant)
    out += check_override_condition(tab.M, p, tab.relevant)
    if tab.relevant is not None:
        out += check_relevance_closure(tab.relevant, tab.F, tab.M, p)
    return out


class TableFormatError(ValueError):
    pass


def load_table(text: str, region_of: Callable[[str], Hashable] = str,
               tag_of: Callable[[str], Hashable] = str,
               context_of: Callable[[str], Hashable] = str) -> DeclTable:
    """Read the text produced by :func:`fjeucs.infer.dump_table`."""
    F: dict = {}
    M: dict = {}
    relevant: set = set()
    saw_relevant = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "relevant" and len(parts) == 3:
                relevant.add((parts[1], region_of(parts[2])))
                saw_relevant = True
            elif parts[0] == "field" and len(parts) == 6 and parts[4] == "=":
                F[(parts[1], parts[2], region_of(parts[3]))] = parse_type(parts[5], region_of, tag_of)
            elif parts[0] == "method" and parts[5] == "(":
                close = parts.index(")")
                args = tuple(parse_type(a, region_of, tag_of) for a in parts[6:close])
                rest = parts[close + 1:]
                if len(rest) != 4 or rest[0] != "=" or rest[2] != "!":
                    raise TableFormatError(f"line {lineno}: malformed method entry")
                eff = rest[3]
                if not (eff.startswith("{") and eff.endswith("}")):
                    raise TableFormatError(f"line {lineno}: malformed effect {eff}")
                effect = frozenset(tag_of(x) for x in eff[1:-1].split(",") if x)
                key = (parts[1], context_of(parts[2]), parts[3], region_of(parts[4]))
                M.setdefault(key, []).append(MethodSig(args, parse_type(rest[1], region_of, tag_of), effect))
            else:
                raise TableFormatError(f"line {lineno}: cannot parse {line!r}")
        except (ValueError, IndexError) as err:
            if isinstance(err, TableFormatError):
                raise
            raise TableFormatError(f"line {lineno}: {err}") from None
    return DeclTable(F, M, relevant if saw_relevant else None)
