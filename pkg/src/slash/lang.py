"""Surface language for probabilistic answer set programs with NPP declarations.

The dialect is deliberately small:

* facts, normal rules and constraints in ASP-Core-2 style
  (``head :- body.``, ``:- body.``),
* NPP declarations ``npp(name(Terms),[v1,...,vn]) [:- body].`` where the
  outcome list may use integer range sugar ``[0..9]``,
* NPP atoms in bodies written ``name(args..., Outcome)`` -- the last
  argument is always the outcome slot,
* optional per-argument ``+``/``-`` markers on NPP atoms selecting which
  probabilistic query the predicate answers,
* comparisons ``t1 OP t2`` with ``= != < <= > >=`` and integer arithmetic
  ``+ - * /``,
* ``%`` comments to end of line.

One lexical quirk is worth spelling out: inside an atom's argument list a
leading ``-`` directly followed by an integer literal is parsed as a negative
integer, not as a query marker.  Markers on integer outcomes therefore cannot
be written for negative literals; named constants take markers as usual
(``name(+O,-goat)``).

Identifiers starting lowercase are constants/predicates, uppercase-initial
names are variables.  ``npp`` and ``not`` are reserved words.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterator, Optional, Union

__all__ = [
    "Const",
    "Var",
    "IntTerm",
    "Arith",
    "Atom",
    "Comparison",
    "Literal",
    "Fact",
    "NormalRule",
    "ConstraintRule",
    "NppDecl",
    "Program",
    "ParseError",
    "ValidationError",
    "parse_program",
    "parse_query",
    "print_program",
    "print_statement",
    "print_literal",
    "print_term",
    "npp_signatures",
]

RELOPS = ("=", "!=", "<", "<=", ">", ">=")
ARITH_OPS = ("+", "-", "*", "/")
RESERVED = ("npp", "not")


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    """Lowercase-initial symbolic constant."""
    name: str


@dataclass(frozen=True)
class Var:
    """Uppercase-initial variable."""
    name: str


@dataclass(frozen=True)
class IntTerm:
    value: int


@dataclass(frozen=True)
class Arith:
    """Binary integer arithmetic, evaluated at grounding time."""
    op: str
    left: "Term"
    right: "Term"


Term = Union[Const, Var, IntTerm, Arith]


@dataclass(frozen=True)
class Atom:
    """Predicate application.  ``ann`` holds one of '+', '-', None per arg."""
    pred: str
    args: tuple = ()
    ann: tuple = ()

    def __post_init__(self):
        if not self.ann:
            object.__setattr__(self, "ann", (None,) * len(self.args))

    @property
    def annotated(self) -> bool:
        return any(a is not None for a in self.ann)


@dataclass(frozen=True)
class Comparison:
    op: str
    left: Term
    right: Term


@dataclass(frozen=True)
class Literal:
    atom: Atom
    negated: bool = False


BodyElem = Union[Literal, Comparison]


@dataclass(frozen=True)
class Fact:
    atom: Atom


@dataclass(frozen=True)
class NormalRule:
    head: Atom
    body: tuple


@dataclass(frozen=True)
class ConstraintRule:
    body: tuple


@dataclass(frozen=True)
class NppDecl:
    """Declaration ``npp(name(instance_args),[outcomes]) :- body.``"""
    name: str
    instance_args: tuple
    outcomes: tuple          # Const / IntTerm, no duplicates
    body: tuple = ()


Statement = Union[Fact, NormalRule, ConstraintRule, NppDecl]


@dataclass(frozen=True)
class Program:
    statements: tuple
    spans: tuple = ()        # (start, end) character offsets per statement

    def __post_init__(self):
        if not self.spans:
            object.__setattr__(self, "spans", ((0, 0),) * len(self.statements))


class ParseError(Exception):
    """Syntax error with position and the tokens that would have been legal."""

    def __init__(self, message: str, line: int, col: int, expected: tuple = ()):
        self.message = message
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        detail = f"{message} at {line}:{col}"
        if expected:
            detail += " (expected " + " or ".join(expected) + ")"
        super().__init__(detail)


class ValidationError(ParseError):
    """Structural error found after parsing (arity clash, bad annotation, ...)."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(message, line, col)


# --------------------------------------------------------------------------
# Lexer
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str                # IDENT VARIABLE INT PUNCT EOF
    text: str
    pos: int                 # character offset
    line: int
    col: int


_PUNCT = (":-", "..", "!=", "<=", ">=", "(", ")", "[", "]", ",", ".", "+",
          "-", "*", "/", "=", "<", ">", "{", "}", ";")


def _tokenize(text: str) -> Iterator[_Token]:
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "%":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in " \t\r\n":
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1
            continue
        start, sline, scol = i, line, col
        if ch.isdigit():
            while i < n and text[i].isdigit():
                i += 1
            col += i - start
            yield _Token("INT", text[start:i], start, sline, scol)
            continue
        if ch.isalpha() or ch == "_":
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            col += i - start
            kind = "VARIABLE" if text[start].isupper() else "IDENT"
            yield _Token(kind, text[start:i], start, sline, scol)
            continue
        two = text[i:i + 2]
        if two in (":-", "..", "!=", "<=", ">="):
            i += 2
            col += 2
            yield _Token("PUNCT", two, start, sline, scol)
            continue
        if ch in "()[]{},.;+-*/=<>":
            i += 1
            col += 1
            yield _Token("PUNCT", ch, start, sline, scol)
            continue
        raise ParseError(f"unexpected character {ch!r}", sline, scol)
    yield _Token("EOF", "", n, line, col)


# --------------------------------------------------------------------------
# Parser (recursive descent)
# --------------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = list(_tokenize(text))
        self.pos = 0

    # -- token plumbing ----------------------------------------------------

    def peek(self, off: int = 0) -> _Token:
        return self.tokens[min(self.pos + off, len(self.tokens) - 1)]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.text != text:
            self.fail(f"unexpected {self.describe(tok)}", (repr(text),))
        return self.next()

    @staticmethod
    def describe(tok: _Token) -> str:
        return "end of input" if tok.kind == "EOF" else repr(tok.text)

    def fail(self, message: str, expected: tuple = ()):
        tok = self.peek()
        raise ParseError(message, tok.line, tok.col, expected)

    # -- grammar -----------------------------------------------------------

    def program(self) -> Program:
        statements, spans = [], []
        while self.peek().kind != "EOF":
            start = self.peek().pos
            statements.append(self.statement())
            spans.append((start, self.tokens[self.pos - 1].pos + 1))
        return Program(tuple(statements), tuple(spans))

    def statement(self) -> Statement:
        tok = self.peek()
        if tok.text == ":-":
            self.next()
            body = self.body()
            self.expect(".")
            return ConstraintRule(body)
        if tok.kind == "IDENT" and tok.text == "npp":
            return self.npp_decl()
        if tok.kind != "IDENT":
            self.fail(f"unexpected {self.describe(tok)}",
                      ("predicate", "':-'", "'npp'"))
        head = self.atom()
        if head.annotated:
            self.fail("head atoms take no +/- markers")
        if self.peek().text == ":-":
            self.next()
            body = self.body()
            self.expect(".")
            return NormalRule(head, body)
        self.expect(".")
        return Fact(head)

    def npp_decl(self) -> NppDecl:
        self.expect("npp")
        self.expect("(")
        name_tok = self.peek()
        if name_tok.kind != "IDENT" or name_tok.text in RESERVED:
            self.fail("expected NPP name", ("identifier",))
        name = self.next().text
        self.expect("(")
        instance_args = [self.arith_expr()]
        while self.peek().text == ",":
            self.next()
            instance_args.append(self.arith_expr())
        self.expect(")")
        self.expect(",")
        self.expect("[")
        outcomes = self.outcome_list()
        self.expect("]")
        self.expect(")")
        body: tuple = ()
        if self.peek().text == ":-":
            self.next()
            body = self.body()
        self.expect(".")
        return NppDecl(name, tuple(instance_args), outcomes, body)

    def outcome_list(self) -> tuple:
        first = self.outcome()
        if self.peek().text == "..":
            if not isinstance(first, IntTerm):
                self.fail("range sugar needs integer bounds")
            self.next()
            last = self.outcome()
            if not isinstance(last, IntTerm) or last.value < first.value:
                self.fail("bad integer range")
            return tuple(IntTerm(v) for v in range(first.value, last.value + 1))
        outcomes = [first]
        while self.peek().text == ",":
            self.next()
            outcomes.append(self.outcome())
        seen = set()
        for o in outcomes:
            if o in seen:
                self.fail(f"duplicate outcome {print_term(o)}")
            seen.add(o)
        return tuple(outcomes)

    def outcome(self) -> Term:
        tok = self.peek()
        if tok.kind == "INT":
            return IntTerm(int(self.next().text))
        if tok.text == "-" and self.peek(1).kind == "INT":
            self.next()
            return IntTerm(-int(self.next().text))
        if tok.kind == "IDENT" and tok.text not in RESERVED:
            return Const(self.next().text)
        self.fail("expected outcome constant", ("integer", "identifier"))

    def body(self) -> tuple:
        if self.peek().text == ".":
            self.fail("empty rule body", ("literal",))
        elems = [self.body_elem()]
        while self.peek().text == ",":
            self.next()
            elems.append(self.body_elem())
        return tuple(elems)

    def body_elem(self) -> BodyElem:
        tok = self.peek()
        if tok.kind == "IDENT" and tok.text == "not":
            self.next()
            return Literal(self.atom(), negated=True)
        if tok.kind == "IDENT" and tok.text != "npp":
            nxt = self.peek(1).text
            if nxt == "(":
                return Literal(self.atom())
            if nxt in RELOPS or nxt in ARITH_OPS:
                return self.comparison()
            return Literal(self.atom())
        if tok.kind in ("VARIABLE", "INT") or tok.text == "-":
            return self.comparison()
        self.fail(f"unexpected {self.describe(tok)}",
                  ("literal", "comparison"))

    def comparison(self) -> Comparison:
        left = self.arith_expr()
        op_tok = self.peek()
        if op_tok.text not in RELOPS:
            self.fail(f"unexpected {self.describe(op_tok)}", RELOPS)
        op = self.next().text
        right = self.arith_expr()
        return Comparison(op, left, right)

    def atom(self) -> Atom:
        tok = self.peek()
        if tok.kind != "IDENT" or tok.text in RESERVED:
            self.fail("expected predicate name", ("identifier",))
        pred = self.next().text
        if self.peek().text != "(":
            return Atom(pred)
        self.next()
        args, ann = [], []
        while True:
            marker: Optional[str] = None
            if self.peek().text in ("+", "-"):
                # '-INT' is a negative literal, any other '-'/'+' a marker
                if not (self.peek().text == "-" and self.peek(1).kind == "INT"):
                    marker = self.next().text
            args.append(self.arith_expr())
            ann.append(marker)
            if self.peek().text == ",":
                self.next()
                continue
            self.expect(")")
            break
        return Atom(pred, tuple(args), tuple(ann))

    # arithmetic expressions: '+'/'-' over '*'/'/' over factors, left assoc
    def arith_expr(self) -> Term:
        left = self.mul_expr()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            left = Arith(op, left, self.mul_expr())
        return left

    def mul_expr(self) -> Term:
        left = self.factor()
        while self.peek().text in ("*", "/"):
            op = self.next().text
            left = Arith(op, left, self.factor())
        return left

    def factor(self) -> Term:
        tok = self.peek()
        if tok.kind == "INT":
            return IntTerm(int(self.next().text))
        if tok.text == "-" and self.peek(1).kind == "INT":
            self.next()
            return IntTerm(-int(self.next().text))
        if tok.kind == "VARIABLE":
            return Var(self.next().text)
        if tok.kind == "IDENT" and tok.text not in RESERVED:
            return Const(self.next().text)
        self.fail(f"unexpected {self.describe(tok)}",
                  ("integer", "variable", "identifier"))


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------

def _atoms_of(stmt: Statement) -> Iterator[tuple]:
    """Yield (atom, in_head) pairs of a statement."""
    if isinstance(stmt, Fact):
        yield stmt.atom, True
    elif isinstance(stmt, NormalRule):
        yield stmt.head, True
        for elem in stmt.body:
            if isinstance(elem, Literal):
                yield elem.atom, False
    elif isinstance(stmt, ConstraintRule):
        for elem in stmt.body:
            if isinstance(elem, Literal):
                yield elem.atom, False
    elif isinstance(stmt, NppDecl):
        for elem in stmt.body:
            if isinstance(elem, Literal):
                yield elem.atom, False


def _term_vars(term: Term) -> Iterator[str]:
    if isinstance(term, Var):
        yield term.name
    elif isinstance(term, Arith):
        yield from _term_vars(term.left)
        yield from _term_vars(term.right)


def npp_signatures(program: Program) -> dict:
    """Map NPP name -> (instance arity, outcomes) taken from its declarations."""
    sigs: dict = {}
    for stmt in program.statements:
        if not isinstance(stmt, NppDecl):
            continue
        sig = (len(stmt.instance_args), stmt.outcomes)
        if stmt.name in sigs and sigs[stmt.name] != sig:
            raise ValidationError(
                f"NPP {stmt.name} redeclared with a different signature")
        sigs[stmt.name] = sig
    return sigs


def _validate(program: Program) -> None:
    sigs = npp_signatures(program)

    arities: dict = {name: n + 1 for name, (n, _) in sigs.items()}
    for stmt in program.statements:
        for atom, in_head in _atoms_of(stmt):
            if atom.pred in RESERVED:
                raise ValidationError(f"{atom.pred!r} is a reserved word")
            known = arities.get(atom.pred)
            if known is None:
                arities[atom.pred] = len(atom.args)
            elif known != len(atom.args):
                raise ValidationError(
                    f"arity clash for {atom.pred}: {len(atom.args)} vs {known}")
            if in_head and atom.pred in sigs:
                raise ValidationError(
                    f"NPP predicate {atom.pred} may not appear in a rule head")

    # +/- markers: legal only on NPP atoms, all-or-nothing, data args uniform,
    # and one pattern per predicate across the whole program.
    patterns: dict = {}
    for stmt in program.statements:
        for atom, _ in _atoms_of(stmt):
            if not atom.annotated:
                continue
            if atom.pred not in sigs:
                raise ValidationError(
                    f"+/- markers on non-NPP predicate {atom.pred}")
            if any(a is None for a in atom.ann):
                raise ValidationError(
                    f"partially annotated NPP atom {atom.pred}")
            data_markers = set(atom.ann[:-1])
            if len(data_markers) != 1:
                raise ValidationError(
                    f"mixed +/- markers on data arguments of {atom.pred}")
            pattern = (data_markers.pop(), atom.ann[-1])
            if patterns.setdefault(atom.pred, pattern) != pattern:
                raise ValidationError(
                    f"inconsistent +/- patterns for {atom.pred}")

    for stmt, span in zip(program.statements, program.spans):
        if isinstance(stmt, Fact):
            for arg in stmt.atom.args:
                if next(_term_vars(arg), None) is not None:
                    raise ValidationError(
                        f"variable in fact {print_statement(stmt).strip()}")


# --------------------------------------------------------------------------
# Public entry points
# --------------------------------------------------------------------------

def parse_program(text: str) -> Program:
    """Parse and validate a full program.  Raises ParseError on bad input."""
    program = _Parser(text).program()
    _validate(program)
    return program


def parse_query(text: str) -> ConstraintRule:
    """Parse a single query constraint ``:- body.``"""
    parser = _Parser(text)
    stmt = parser.statement()
    if parser.peek().kind != "EOF":
        parser.fail("trailing input after query")
    if not isinstance(stmt, ConstraintRule):
        raise ParseError("query must be a constraint ':- body.'", 1, 1)
    return stmt


# --------------------------------------------------------------------------
# Canonical printing
# --------------------------------------------------------------------------

def print_term(term: Term) -> str:
    if isinstance(term, Const):
        return term.name
    if isinstance(term, Var):
        return term.name
    if isinstance(term, IntTerm):
        return str(term.value)
    if isinstance(term, Arith):
        return f"{print_term(term.left)} {term.op} {print_term(term.right)}"
    raise TypeError(f"not a term: {term!r}")


def _print_atom(atom: Atom) -> str:
    if not atom.args:
        return atom.pred
    parts = []
    for marker, arg in zip(atom.ann, atom.args):
        parts.append((marker or "") + print_term(arg))
    return f"{atom.pred}({','.join(parts)})"


def print_literal(elem: BodyElem) -> str:
    if isinstance(elem, Comparison):
        return f"{print_term(elem.left)} {elem.op} {print_term(elem.right)}"
    return ("not " if elem.negated else "") + _print_atom(elem.atom)


def _print_body(body: tuple) -> str:
    return ", ".join(print_literal(e) for e in body)


def print_statement(stmt: Statement) -> str:
    if isinstance(stmt, Fact):
        return f"{_print_atom(stmt.atom)}.\n"
    if isinstance(stmt, NormalRule):
        return f"{_print_atom(stmt.head)} :- {_print_body(stmt.body)}.\n"
    if isinstance(stmt, ConstraintRule):
        return f":- {_print_body(stmt.body)}.\n"
    if isinstance(stmt, NppDecl):
        inst = ",".join(print_term(t) for t in stmt.instance_args)
        outs = ",".join(print_term(o) for o in stmt.outcomes)
        text = f"npp({stmt.name}({inst}),[{outs}])"
        if stmt.body:
            text += f" :- {_print_body(stmt.body)}"
        return text + ".\n"
    raise TypeError(f"not a statement: {stmt!r}")


def print_program(program: Program) -> str:
    """Canonical text; ``parse_program(print_program(p))`` equals ``p``."""
    return "".join(print_statement(s) for s in program.statements)
