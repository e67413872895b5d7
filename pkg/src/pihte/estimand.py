"""Estimand language: parsing, flattening, and the sum-product hierarchy.

Flattening hoists every summation nested under a product to the front of its
level, renaming bound variables with trailing primes whenever hoisting would
capture a name that is already in use. Each ratio denominator becomes a child
level whose inverted output function feeds back into its numerator's level.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field

from .errors import (
    DenseLimitExceeded,
    DivisionByZero,
    DuplicateBoundVar,
    EstimandSyntaxError,
)
from .model import name_key

# -- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class ProbTerm:
    left: tuple
    right: tuple = ()

    def __post_init__(self):
        if set(self.left) & set(self.right):
            raise EstimandSyntaxError(
                f"variables on both sides of '|': {sorted(set(self.left) & set(self.right))}", 0
            )

    @property
    def scope(self):
        return tuple(sorted(set(self.left) | set(self.right), key=name_key))

    def key(self) -> str:
        """Canonical text form, used to bind factors to terms."""
        body = ",".join(sorted(self.left, key=name_key))
        if self.right:
            body += "|" + ",".join(sorted(self.right, key=name_key))
        return f"P({body})"


@dataclass(frozen=True)
class Product:
    children: tuple


@dataclass(frozen=True)
class Sum:
    bound: tuple
    child: object


@dataclass(frozen=True)
class Ratio:
    numerator: object
    denominator: object


def free_vars(expr) -> frozenset:
    if isinstance(expr, ProbTerm):
        return frozenset(expr.left) | frozenset(expr.right)
    if isinstance(expr, Product):
        out = frozenset()
        for c in expr.children:
            out |= free_vars(c)
        return out
    if isinstance(expr, Sum):
        return free_vars(expr.child) - frozenset(expr.bound)
    if isinstance(expr, Ratio):
        return free_vars(expr.numerator) | free_vars(expr.denominator)
    raise TypeError(type(expr))


def prob_terms(expr):
    """All ProbTerm nodes, in left-to-right source order."""
    if isinstance(expr, ProbTerm):
        yield expr
    elif isinstance(expr, Product):
        for c in expr.children:
            yield from prob_terms(c)
    elif isinstance(expr, Sum):
        yield from prob_terms(expr.child)
    elif isinstance(expr, Ratio):
        yield from prob_terms(expr.numerator)
        yield from prob_terms(expr.denominator)


# -- parser ----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[()\[\]|,/]))"
)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None or m.end() == pos:
                stripped = text[pos:].lstrip()
                if not stripped:
                    break
                at = len(text) - len(stripped)
                if stripped[0] == "'":
                    raise EstimandSyntaxError("apostrophes are reserved for the renamer", at)
                raise EstimandSyntaxError(f"unexpected character {stripped[0]!r}", at)
            kind = "ident" if m.group("ident") else "punct"
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        stripped = text[pos:].lstrip()
        if stripped and stripped[0] == "'":
            raise EstimandSyntaxError("apostrophes are reserved for the renamer", pos)

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None, len(self.text))

    def next(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, value):
        kind, val, at = self.next()
        if val != value:
            raise EstimandSyntaxError(f"expected {value!r}, found {val!r}", at)

    def parse(self):
        expr = self.expr()
        kind, val, at = self.peek()
        if kind is not None:
            raise EstimandSyntaxError(f"trailing input {val!r}", at)
        return expr

    def expr(self):
        num = self.product()
        kind, val, _ = self.peek()
        if val == "/":
            self.next()
            kind, val, _ = self.peek()
            if val == "(":
                self.next()
                den = self.expr()
                self.expect(")")
            else:
                # a bare sum/prob factor is also accepted as a denominator
                den = self.factor()
            return Ratio(num, den)
        return num

    def product(self):
        factors = [self.factor()]
        while True:
            kind, val, _ = self.peek()
            if kind == "ident" and val in ("P", "sum") or val == "(":
                factors.append(self.factor())
            else:
                break
        return factors[0] if len(factors) == 1 else Product(tuple(factors))

    def factor(self):
        kind, val, at = self.peek()
        if val == "(":
            self.next()
            inner = self.expr()
            self.expect(")")
            return inner
        if kind == "ident" and val == "P":
            return self.prob()
        if kind == "ident" and val == "sum":
            return self.sum()
        raise EstimandSyntaxError(f"expected a factor, found {val!r}", at)

    def prob(self):
        self.next()  # 'P'
        self.expect("(")
        left = self.varlist()
        kind, val, _ = self.peek()
        right = ()
        if val == "|":
            self.next()
            right = self.varlist()
        self.expect(")")
        return ProbTerm(left, right)

    def sum(self):
        self.next()  # 'sum'
        self.expect("[")
        bound = self.varlist()
        if len(set(bound)) != len(bound):
            raise DuplicateBoundVar(f"duplicate bound variable in sum{list(bound)}")
        self.expect("]")
        self.expect("(")
        child = self.expr()
        self.expect(")")
        return Sum(bound, child)

    def varlist(self):
        names = []
        while True:
            kind, val, at = self.next()
            if kind != "ident" or val in ("P", "sum"):
                raise EstimandSyntaxError(f"expected a variable name, found {val!r}", at)
            names.append(val)
            kind, val, _ = self.peek()
            if val == ",":
                self.next()
            else:
                return tuple(names)


def parse(text: str):
    """Parse estimand text into an AST."""
    return _Parser(text).parse()


# -- flattening ------------------------------------------------------------


@dataclass
class FlatLevel:
    level_id: int
    factors: list = field(default_factory=list)        # ProbTerm, post-renaming
    child_outputs: list = field(default_factory=list)  # (child_level_id, scope tuple)
    sum_vars: tuple = ()
    free_vars: tuple = ()
    children: list = field(default_factory=list)
    rename_map: tuple = ()  # ((original, fresh), ...) in renaming order

    @property
    def factor_scopes(self):
        scopes = [t.scope for t in self.factors]
        scopes.extend(scope for _, scope in self.child_outputs)
        return scopes


@dataclass
class Hierarchy:
    levels: list
    root: int = 0

    def level(self, level_id: int) -> FlatLevel:
        return self.levels[level_id]

    @property
    def depth(self) -> int:
        def below(lid):
            lv = self.levels[lid]
            return 1 + max((below(c) for c in lv.children), default=0)

        return below(self.root)


def _fresh(name: str, used: set) -> str:
    candidate = name + "'"
    while candidate in used:
        candidate += "'"
    return candidate


def flatten(expr) -> Hierarchy:
    """Flatten an AST into its sum-product hierarchy.

    Bound variables are renamed (trailing primes) exactly when their name is
    already in use, either free anywhere in the estimand or bound by an
    already-processed summation. Ratio denominators spawn child levels;
    numerators flatten into the enclosing level.
    """
    used = set(free_vars(expr))
    levels = []
    renames = {}  # level_id -> list of pairs

    def new_level() -> FlatLevel:
        lv = FlatLevel(level_id=len(levels))
        levels.append(lv)
        renames[lv.level_id] = []
        return lv

    def walk(node, level, subst):
        if isinstance(node, ProbTerm):
            level.factors.append(
                ProbTerm(
                    tuple(subst.get(n, n) for n in node.left),
                    tuple(subst.get(n, n) for n in node.right),
                )
            )
        elif isinstance(node, Product):
            for c in node.children:
                walk(c, level, subst)
        elif isinstance(node, Sum):
            inner = dict(subst)
            child_free = free_vars(node.child)
            hoisted = list(level.sum_vars)
            for b in node.bound:
                if b not in child_free:
                    warnings.warn(f"sum over {b!r} never used; dropped", stacklevel=2)
                    continue
                if b in used:
                    fresh = _fresh(b, used)
                    inner[b] = fresh
                    renames[level.level_id].append((b, fresh))
                else:
                    fresh = b
                used.add(fresh)
                hoisted.append(fresh)
            level.sum_vars = tuple(hoisted)
            walk(node.child, level, inner)
        elif isinstance(node, Ratio):
            walk(node.numerator, level, subst)
            child = new_level()
            level.children.append(child.level_id)
            walk(node.denominator, child, subst)
            finish(child)
            level.child_outputs.append((child.level_id, child.free_vars))
        else:
            raise TypeError(type(node))

    def finish(level):
        seen = set()
        for scope in level.factor_scopes:
            seen.update(scope)
        level.free_vars = tuple(
            sorted(seen - set(level.sum_vars), key=name_key)
        )
        level.rename_map = tuple(renames[level.level_id])

    root = new_level()
    walk(expr, root, {})
    finish(root)
    return Hierarchy(levels=levels, root=root.level_id)


# -- dense literal evaluation (flattening soundness oracle) ----------------


def dense_expr_eval(expr, bindings, assignment, domains, dense_limit=10**6):
    """Literal recursive AST evaluation at one assignment of its free variables.

    `bindings` maps ProbTerm.key() to a SparseFactor; sums enumerate their
    bound variables densely; ratios divide, with 0/0 evaluating to 0.
    """
    if isinstance(expr, ProbTerm):
        try:
            factor = bindings[expr.key()]
        except KeyError:
            raise KeyError(f"no factor bound for {expr.key()}") from None
        return factor.dense_eval(assignment)
    if isinstance(expr, Product):
        out = 1.0
        for c in expr.children:
            out *= dense_expr_eval(c, bindings, assignment, domains, dense_limit)
            if out == 0.0:
                return 0.0
        return out
    if isinstance(expr, Sum):
        cells = 1
        for b in expr.bound:
            cells *= domains[b]
        if cells > dense_limit:
            raise DenseLimitExceeded(f"{cells} cells exceeds limit {dense_limit}")
        total = []
        local = dict(assignment)

        def rec(i):
            if i == len(expr.bound):
                total.append(
                    dense_expr_eval(expr.child, bindings, local, domains, dense_limit)
                )
                return
            b = expr.bound[i]
            for val in range(domains[b]):
                local[b] = val
                rec(i + 1)
            del local[b]

        rec(0)
        return math.fsum(total)
    if isinstance(expr, Ratio):
        num = dense_expr_eval(expr.numerator, bindings, assignment, domains, dense_limit)
        den = dense_expr_eval(expr.denominator, bindings, assignment, domains, dense_limit)
        if den == 0.0:
            if num == 0.0:
                return 0.0
            raise DivisionByZero(f"{num} / 0 at {dict(assignment)}")
        return num / den
    raise TypeError(type(expr))
