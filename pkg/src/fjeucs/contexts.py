"""Context abstractions: the context transfer function and allocation regions.

Contexts are call strings (tuples of call-site labels, most recent first).
Regions are interned to small ints per policy instance; ``region_name``
gives their stable display form.
"""

from __future__ import annotations

from itertools import product
from typing import Iterable, Optional

from .syntax import Invoke, Program

Context = tuple[int, ...]
EMPTY_CONTEXT: Context = ()


def context_name(z: Context) -> str:
    return "ε" if not z else ".".join(map(str, z))


def parse_context(text: str) -> Context:
    return () if text in ("ε", "eps", "") else tuple(int(x) for x in text.split("."))


class ContextPolicy:
    """Interface: ``phi`` picks callee contexts, ``psi`` names allocation regions."""

    name = "abstract"

    def phi(self, z: Context, cls: str, region, method: str, pos: int) -> Context:
        raise NotImplementedError

    def psi(self, z: Context, pos: int) -> int:
        raise NotImplementedError

    def sites_of(self, region) -> Optional[frozenset[int]]:
        """Allocation sites whose objects may live in ``region`` (None: any site)."""
        raise NotImplementedError

    def region_name(self, region) -> str:
        raise NotImplementedError

    def contexts(self, p: Program, extra_calls: Iterable[int] = ()) -> list[Context]:
        raise NotImplementedError

    def regions(self, p: Program, extra_sites: Iterable[int] = (),
                extra_calls: Iterable[int] = ()) -> list[int]:
        sites = sorted(set(p.alloc_sites) | set(extra_sites))
        out = []
        for z in self.contexts(p, extra_calls):
            for i in sites:
                r = self.psi(z, i)
                if r not in out:
                    out.append(r)
        return out


class KCFA(ContextPolicy):
    """Call strings truncated to ``k``; one region per (context, allocation site)."""

    name = "kcfa"

    def __init__(self, k: int = 1):
        if k < 0:
            raise ValueError("k must be non-negative")
        self.k = k
        self._ids: dict[tuple[Context, int], int] = {}
        self._keys: list[tuple[Context, int]] = []

    def phi(self, z, cls, region, method, pos):
        return ((pos,) + z)[: self.k]

    def psi(self, z, pos):
        key = (z, pos)
        r = self._ids.get(key)
        if r is None:
            r = self._ids[key] = len(self._keys)
            self._keys.append(key)
        return r

    def region_key(self, region: int) -> tuple[Context, int]:
        return self._keys[region]

    def sites_of(self, region):
        return frozenset([self._keys[region][1]])

    def region_name(self, region):
        z, i = self._keys[region]
        return f"r{i}" if not z else f"r{i}[{context_name(z)}]"

    def contexts(self, p, extra_calls=()):
        calls = sorted({lab for lab, e in p.labels.items() if isinstance(e, Invoke)} | set(extra_calls))
        out: list[Context] = []
        for n in range(self.k + 1):
            out.extend(product(calls, repeat=n))
        return out

    def __repr__(self):
        return f"KCFA(k={self.k})"


class ConstantContexts(ContextPolicy):
    """A single context and a single region: every allocation shares it."""

    name = "constant"
    REGION = 0

    def phi(self, z, cls, region, method, pos):
        return EMPTY_CONTEXT

    def psi(self, z, pos):
        return self.REGION

    def sites_of(self, region):
        return None

    def region_name(self, region):
        return "r*"

    def contexts(self, p, extra_calls=()):
        return [EMPTY_CONTEXT]

    def __repr__(self):
        return "ConstantContexts()"


def psi(z: Context, i: int, ctxpol: ContextPolicy) -> int:
    return ctxpol.psi(z, i)


def phi(z: Context, cls: str, region, method: str, i: int, ctxpol: ContextPolicy) -> Context:
    return ctxpol.phi(z, cls, region, method, i)


def make_context_policy(name: str, k: int = 1) -> ContextPolicy:
    if name == "kcfa":
        return KCFA(k)
    if name == "constant":
        return ConstantContexts()
    raise ValueError(f"unknown context policy {name!r}")


def parse_region(text: str, ctxpol: ContextPolicy):
    """Inverse of ``ctxpol.region_name`` (interning the region if needed)."""
    import re
    if isinstance(ctxpol, ConstantContexts):
        if text != "r*":
            raise ValueError(f"bad region {text!r} for the constant context policy")
        return ConstantContexts.REGION
    m = re.fullmatch(r"r(\d+)(?:\[([^\]]*)\])?", text)
    if not m:
        raise ValueError(f"bad region {text!r}")
    return ctxpol.psi(parse_context(m.group(2) or ""), int(m.group(1)))
