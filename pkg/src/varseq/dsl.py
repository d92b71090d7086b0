"""Problem-file language (``.vp``).

A file is a sequence of ``[section]`` blocks.  Inside a block a line is
either a directive ``key: value, value`` or an assignment ``target = expr``;
``[lagrangian]`` holds a single expression.  Indented lines continue the
previous line and ``#`` (not followed by a digit) starts a comment.  The
grammar is written out in ``docs/grammar.md``.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction

from . import bundle as B
from . import expr as E
from . import fields as V
from . import variational as VA
from .errors import ParseError

# -- AST -----------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: Fraction
    text: str
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Bound:
    """Placeholder ``{mu}`` for a summation index."""

    var: str


@dataclass(frozen=True)
class Name:
    """Coordinate, ``pi`` or a jet ``parts_alpha``.  ``parts`` mixes text and
    Bound placeholders; ``alpha`` is a multi-index or ``None`` when the
    suffix ``items`` contains placeholders."""

    parts: tuple
    alpha: tuple = None
    items: tuple = ()
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class ArgRef:
    index: int
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple
    derivs: tuple = ()
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Deriv:
    body: object
    coord: object  # coordinate name or Bound
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Sum:
    var: str
    body: object
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Neg:
    body: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Directive:
    key: str
    values: tuple


@dataclass(frozen=True)
class Assign:
    target: str
    exprs: tuple


@dataclass(frozen=True)
class Section:
    kind: str
    name: str
    entries: tuple


SECTIONS = ("bundle", "symbols", "lagrangian", "lift", "fields_of_variation", "background")

# -- lexer ---------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<num>\d+\.\d*|\.\d+|\d+)|(?P<ident>[A-Za-z][A-Za-z0-9]*)|(?P<op>\*\*|[-+*/^(),\[\]{}_#'.=:~])|(?P<ws>[ \t]+)"
)


@dataclass
class Tok:
    kind: str
    text: str
    line: int
    col: int
    end: int


def tokenize(text, line=1, col0=1):
    toks = []
    i = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if not m:
            raise ParseError(f"unexpected character {text[i]!r}", line, col0 + i)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(Tok(kind if kind != "op" else m.group(), m.group(), line, col0 + i, col0 + m.end()))
        i = m.end()
    toks.append(Tok("end", "", line, col0 + len(text), col0 + len(text)))
    return toks


# -- expression parser ----------------------------------------------------

ELEMENTARY = E.ELEMENTARY
RESERVED = set(ELEMENTARY) | {"d", "sum", "pi"}


class Scope:
    """Names known while parsing expressions."""

    def __init__(self, coords, fields, params=(), symbols=None):
        self.coords = tuple(coords)
        self.fields = tuple(fields)
        self.params = set(params)
        self.symbols = dict(symbols or {})

    def known(self):
        return sorted(set(self.coords) | set(self.fields) | self.params | set(self.symbols) | {"pi"})


class ExprParser:
    def __init__(self, toks, scope, allow_args=False):
        self.toks = toks
        self.i = 0
        self.scope = scope
        self.bound = []
        self.allow_args = allow_args

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, msg, expected=(), tok=None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col, expected)

    def take(self, kind):
        if self.tok.kind != kind:
            what = self.tok.text or "end of line"
            self.error(f"unexpected {what!r}", (repr(kind),))
        t = self.tok
        self.i += 1
        return t

    def adjacent(self, kind):
        prev = self.toks[self.i - 1]
        return self.tok.kind == kind and self.tok.col == prev.end

    def parse_all(self):
        e = self.expr()
        if self.tok.kind != "end":
            self.error(f"unexpected {self.tok.text!r}", ("operator", "end of line"))
        return e

    def expr(self):
        left = self.term()
        while self.tok.kind in ("+", "-"):
            op = self.take(self.tok.kind).text
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.tok.kind in ("*", "/"):
            op = self.take(self.tok.kind).text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self):
        if self.tok.kind == "-":
            self.take("-")
            return Neg(self.unary())
        if self.tok.kind == "+":
            self.take("+")
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind in ("^", "**"):
            self.take(self.tok.kind)
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        t = self.tok
        pos = (t.line, t.col)
        if t.kind == "num":
            self.i += 1
            return Num(Fraction(t.text), t.text, pos)
        if t.kind == "(":
            self.take("(")
            e = self.expr()
            self.take(")")
            return e
        if t.kind == "#":
            self.take("#")
            if not self.adjacent("num") or not self.tok.text.isdigit():
                self.error("expected an argument number after '#'", ("integer",))
            k = int(self.take("num").text)
            if not self.allow_args:
                self.error("argument placeholders are only allowed in symbol rules", tok=t)
            return ArgRef(k, pos)
        if t.kind == "ident":
            return self.name()
        self.error(f"unexpected {t.text or 'end of line'!r}", ("number", "identifier", "(", "-"))

    def _placeholder(self):
        self.take("{")
        v = self.take("ident")
        if v.text not in self.bound:
            self.error(f"{v.text!r} is not a summation index", tuple(self.bound) or ("summation index",), v)
        self.take("}")
        return Bound(v.text)

    def name(self):
        t = self.take("ident")
        pos = (t.line, t.col)
        parts = [t.text]
        while self.adjacent("{"):
            parts.append(self._placeholder())
            if self.adjacent("ident"):
                parts.append(self.take("ident").text)
        plain = set(self.scope.coords) | set(self.scope.fields) | self.scope.params | {"pi"}
        if len(parts) == 1 and self.tok.kind == "(" and t.text not in plain:
            return self.call(t)
        if len(parts) == 1 and self.adjacent("'"):
            return self.call(t)
        items = None
        alpha = None
        if self.adjacent("_"):
            self.take("_")
            items = self.suffix()
        elif self.adjacent("["):
            alpha = self.multi_index(t)
        parts = tuple(_merge_parts(parts))
        if items is not None:
            if all(isinstance(x, str) for x in items):
                alpha = [0] * len(self.scope.coords)
                for x in items:
                    alpha[self.scope.coords.index(x)] += 1
                alpha, items = tuple(alpha), ()
            else:
                items = tuple(items)
        node = Name(parts, alpha, items or (), pos)
        self.check_name(node, t)
        return node

    def check_name(self, node, tok):
        if any(isinstance(p, Bound) for p in node.parts):
            return
        base = node.parts[0]
        if node.alpha is not None or node.items:
            if base not in self.scope.fields and base not in self.scope.params:
                self.error(f"unknown field {base!r}", tuple(sorted(set(self.scope.fields) | self.scope.params)), tok)
            return
        if base in self.scope.coords or base in self.scope.fields or base in self.scope.params or base == "pi":
            return
        if base in self.bound:
            self.error(f"summation index {base!r} used outside braces", ("{" + base + "}",), tok)
        self.error(f"unknown identifier {base!r}", tuple(self.scope.known()), tok)

    def suffix(self):
        coords = self.scope.coords
        if self.adjacent("{"):
            self.take("{")
            out = []
            while self.tok.kind != "}":
                w = self.take("ident")
                if w.text in self.bound:
                    out.append(Bound(w.text))
                else:
                    out.extend(self._split_coords(w))
            self.take("}")
            return out
        if not self.adjacent("ident"):
            self.error("expected a derivative suffix after '_'", ("coordinate", "{"))
        w = self.take("ident")
        out = self._split_coords(w)
        if self.adjacent("["):
            self.take("[")
            k = int(self.take("num").text)
            self.take("]")
            if len(out) != 1:
                self.error("repeat count needs a single coordinate suffix", tok=w)
            out = out * k
        return out

    def _split_coords(self, w):
        coords = self.scope.coords
        s = w.text
        out = []
        while s:
            for c in sorted(coords, key=len, reverse=True):
                if s.startswith(c):
                    out.append(c)
                    s = s[len(c):]
                    break
            else:
                self.error(f"{w.text!r} is not a sequence of coordinates", tuple(coords), w)
        return out

    def multi_index(self, t):
        self.take("[")
        vals = [int(self.take("num").text)]
        while self.tok.kind == ",":
            self.take(",")
            vals.append(int(self.take("num").text))
        self.take("]")
        if len(vals) != len(self.scope.coords):
            self.error(f"multi-index needs {len(self.scope.coords)} entries", tok=t)
        return tuple(vals)

    def call(self, t):
        pos = (t.line, t.col)
        name = t.text
        derivs = ()
        if self.adjacent("'"):
            k = 0
            while self.adjacent("'"):
                self.take("'")
                k += 1
            derivs = (k,)
            if self.adjacent("["):
                self.take("[")
                vals = [int(self.take("num").text)]
                while self.tok.kind == ",":
                    self.take(",")
                    vals.append(int(self.take("num").text))
                self.take("]")
                derivs = tuple(vals)
        self.take("(")
        if name == "sum" and not derivs:
            v = self.take("ident")
            if v.text in self.scope.coords or v.text in RESERVED:
                self.error(f"summation index {v.text!r} clashes with a declared name", tok=v)
            self.take(",")
            self.bound.append(v.text)
            body = self.expr()
            self.bound.pop()
            self.take(")")
            return Sum(v.text, body, pos)
        if name == "d" and not derivs:
            body = self.expr()
            self.take(",")
            if self.tok.kind == "{":
                c = self._placeholder()
            else:
                c = self.take("ident")
                if c.text not in self.scope.coords:
                    self.error(f"{c.text!r} is not a coordinate", self.scope.coords, c)
                c = c.text
            self.take(")")
            return Deriv(body, c, pos)
        args = [self.expr()]
        while self.tok.kind == ",":
            self.take(",")
            args.append(self.expr())
        self.take(")")
        if name in ELEMENTARY:
            if len(args) != 1 or derivs:
                self.error(f"{name} takes one argument", tok=t)
        elif name in self.scope.symbols:
            arity = self.scope.symbols[name].arity
            if len(args) != arity:
                self.error(f"{name} takes {arity} argument(s)", tok=t)
            if derivs and len(derivs) == 1 and arity > 1:
                self.error(f"{name} needs a derivative multi-index", tok=t)
            if derivs and len(derivs) != arity:
                self.error(f"derivative index of {name} needs {arity} entries", tok=t)
        else:
            self.error(f"unknown function {name!r}", tuple(sorted(set(ELEMENTARY) | set(self.scope.symbols))), t)
        return Call(name, tuple(args), tuple(derivs), pos)


def _merge_parts(parts):
    out = []
    for p in parts:
        if out and isinstance(p, str) and isinstance(out[-1], str):
            out[-1] += p
        else:
            out.append(p)
    return out


def parse_expression(text, scope, line=1, col=1, allow_args=False):
    return ExprParser(tokenize(text, line, col), scope, allow_args).parse_all()


# -- evaluation ------------------------------------------------------------


class Evaluator:
    def __init__(self, spec, scope):
        self.spec = spec
        self.scope = scope

    def __call__(self, node, env=None):
        return self.eval(node, env or {})

    def _where(self, node):
        pos = getattr(node, "pos", None) or (None, None)
        return pos

    def eval(self, node, env):
        if isinstance(node, Num):
            return E.const(node.value)
        if isinstance(node, Name):
            return self.name(node, env)
        if isinstance(node, ArgRef):
            return E.arg(node.index)
        if isinstance(node, Neg):
            return -self.eval(node.body, env)
        if isinstance(node, BinOp):
            a = self.eval(node.left, env)
            b = self.eval(node.right, env)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if node.op == "/":
                if not b.terms:
                    raise ParseError("division by zero")
                return a / b
            if not b.is_const():
                raise ParseError("exponents must be rational constants")
            return a ** b.as_const()
        if isinstance(node, Call):
            args = [self.eval(a, env) for a in node.args]
            if node.name in ELEMENTARY:
                return E.FUNCTIONS[node.name](args[0])
            defn = self.scope.symbols[node.name]
            return defn.apply(args, node.derivs or (0,) * defn.arity)
        if isinstance(node, Deriv):
            c = node.coord
            idx = env[c.var] if isinstance(c, Bound) else self.spec.index(c)
            return B.total_derivative(self.eval(node.body, env), idx, self.spec)
        if isinstance(node, Sum):
            total = E.ZERO
            for mu in range(self.spec.n):
                total = total + self.eval(node.body, {**env, node.var: mu})
            return total
        raise TypeError(node)

    def name(self, node, env):
        coords = self.spec.coords
        base = "".join(p if isinstance(p, str) else coords[env[p.var]] for p in node.parts)
        if node.alpha is None and not node.items:
            if base in coords:
                return E.coord(base)
            if base == "pi":
                return E.PI
            alpha = self.spec.zero()
        elif node.alpha is not None:
            alpha = node.alpha
        else:
            a = [0] * self.spec.n
            for x in node.items:
                a[env[x.var] if isinstance(x, Bound) else coords.index(x)] += 1
            alpha = tuple(a)
        if base in self.spec.fields:
            return E.jet(base, alpha)
        if base in self.scope.params:
            return E.param(base, alpha)
        line, col = self._where(node)
        raise ParseError(f"unknown field {base!r}", line, col, tuple(sorted(set(self.spec.fields) | self.scope.params)))


# -- printer ---------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def print_expr(node, coords):
    return _pr(node, coords, 0)


def _pr(node, coords, ctx):
    if isinstance(node, Num):
        return node.text
    if isinstance(node, ArgRef):
        return f"#{node.index}"
    if isinstance(node, Name):
        return _name_text(node, coords)
    if isinstance(node, Neg):
        s = "-" + _pr(node.body, coords, 3)
        return f"({s})" if ctx > 3 else s
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        if node.op == "^":
            s = _pr(node.left, coords, 5) + "^" + _pr(node.right, coords, 3)
        else:
            s = _pr(node.left, coords, p) + f" {node.op} " + _pr(node.right, coords, p + 1)
        return f"({s})" if ctx > p else s
    if isinstance(node, Call):
        head = node.name
        if node.derivs:
            head += "'" * node.derivs[0] if len(node.derivs) == 1 else "'[" + ",".join(map(str, node.derivs)) + "]"
        return head + "(" + ", ".join(_pr(a, coords, 0) for a in node.args) + ")"
    if isinstance(node, Deriv):
        c = "{" + node.coord.var + "}" if isinstance(node.coord, Bound) else node.coord
        return f"d({_pr(node.body, coords, 0)}, {c})"
    if isinstance(node, Sum):
        return f"sum({node.var}, {_pr(node.body, coords, 0)})"
    raise TypeError(node)


def _name_text(node, coords):
    base = "".join(p if isinstance(p, str) else "{" + p.var + "}" for p in node.parts)
    if node.items:
        words = [x.var if isinstance(x, Bound) else x for x in node.items]
        return base + "_{" + " ".join(words) + "}"
    if node.alpha is None:
        return base
    if any(node.alpha) and all(len(c) == 1 for c in coords):
        s = "".join(c * k for c, k in zip(coords, node.alpha))
        return base + ("_" + s if len(s) == 1 else "_{" + s + "}")
    return base + "[" + ",".join(map(str, node.alpha)) + "]"


# -- problem files -----------------------------------------------------------


class ProblemFile:
    """Parsed ``.vp`` file.  ``sections`` is the AST; the remaining
    attributes are the evaluated objects."""

    def __init__(self, sections, spec, lagrangian, symbols, lifts, variations, background, options, samples):
        self.sections = tuple(sections)
        self.spec = spec
        self.lagrangian = lagrangian
        self.symbols = symbols
        self.lifts = lifts
        self.variations = variations
        self.background = background
        self.options = options
        self.samples = samples  # numeric stand-ins for free symbols

    @property
    def ast(self):
        return self.sections

    def numeric_density(self):
        """Lagrangian density with every sampled free symbol replaced by its
        template, ready for the numeric oracle."""
        L = self.lagrangian.L
        for name, tmpl in self.samples.items():
            L = E.substitute_function(L, name, tmpl)
        return L


def _logical_lines(source):
    """Yield (line number, column offset, text) with comments stripped and
    indented continuation lines joined."""
    out = []
    for no, raw in enumerate(source.splitlines(), 1):
        text = re.sub(r"#(?!\d).*$", "", raw).rstrip()
        if not text.strip():
            continue
        if raw[:1] in (" ", "\t") and out and not out[-1][2].lstrip().startswith("["):
            ln, col, prev = out[-1]
            # keep token columns meaningful for the first physical line only
            out[-1] = (ln, col, prev + " " + text.strip())
            continue
        out.append((no, 1, text))
    return out


_HEADER = re.compile(r"^\[\s*([a-z_]+)(?:\s+([A-Za-z][A-Za-z0-9_]*))?\s*\]$")
_DIRECTIVE = re.compile(r"^\s*([A-Za-z][A-Za-z0-9_]*)\s*:(.*)$")
_ASSIGN = re.compile(r"^\s*([A-Za-z][A-Za-z0-9_]*(?:\.[A-Za-z][A-Za-z0-9_]*)?)\s*=(.*)$")
_SYMBOL = re.compile(r"^\s*([A-Za-z][A-Za-z0-9]*)\s*/\s*(\d+)\s*(?:([:~])(.*))?$")


def _split_top(text, line, col):
    """Split at commas outside parentheses/brackets/braces; returns
    (piece, column) pairs."""
    depth = 0
    start = 0
    out = []
    for i, ch in enumerate(text):
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif ch == "," and depth == 0:
            out.append((text[start:i], col + start))
            start = i + 1
    out.append((text[start:], col + start))
    return out


def _words(text):
    return tuple(w for w in re.split(r"[\s,]+", text.strip()) if w)


def parse_problem(source, max_order=None):
    """Parse problem-file text into a :class:`ProblemFile`."""
    raw_sections = []
    current = None
    for no, col, text in _logical_lines(source):
        s = text.strip()
        if s.startswith("["):
            m = _HEADER.match(s)
            if not m or m.group(1) not in SECTIONS:
                raise ParseError(f"bad section header {s!r}", no, 1, tuple(f"[{k}]" for k in SECTIONS))
            current = (m.group(1), m.group(2) or "", no, [])
            raw_sections.append(current)
            continue
        if current is None:
            raise ParseError("content before the first section header", no, 1, ("[bundle]",))
        current[3].append((no, col, text))
    kinds = [k for k, *_ in raw_sections]
    if "bundle" not in kinds:
        raise ParseError("missing [bundle] section", 1, 1, ("[bundle]",))
    if "lagrangian" not in kinds:
        raise ParseError("missing [lagrangian] section", 1, 1, ("[lagrangian]",))
    for k in ("bundle", "symbols", "lagrangian", "fields_of_variation", "background"):
        if kinds.count(k) > 1:
            second = [h for kk, _, h, _ in raw_sections if kk == k][1]
            raise ParseError(f"duplicate [{k}] section", second, 1)

    # pass 1: directives that declare names
    bundle_d = {}
    for kind, name, hline, lines in raw_sections:
        if kind != "bundle":
            continue
        for no, col, text in lines:
            m = _DIRECTIVE.match(text)
            if not m or m.group(1) not in ("coords", "fields", "order", "cap"):
                raise ParseError(f"bad [bundle] entry {text.strip()!r}", no, 1, ("coords:", "fields:", "order:", "cap:"))
            bundle_d[m.group(1)] = (_words(m.group(2)), no)
    if "coords" not in bundle_d or "fields" not in bundle_d:
        raise ParseError("[bundle] needs coords: and fields:", 1, 1, ("coords:", "fields:"))
    coords = bundle_d["coords"][0]
    fields = bundle_d["fields"][0]
    for w in coords + fields:
        if not re.fullmatch(r"[A-Za-z][A-Za-z0-9]*", w) or w in RESERVED:
            raise ParseError(f"bad name {w!r}", bundle_d["coords"][1], 1)
    if len(set(coords + fields)) != len(coords + fields):
        raise ParseError("coordinate and field names must be distinct", bundle_d["coords"][1], 1)

    symbols = {}
    symbol_entries = []
    samples = {}
    sample_src = {}
    scope0 = Scope(coords, fields)
    for kind, name, hline, lines in raw_sections:
        if kind != "symbols":
            continue
        for no, col, text in lines:
            m = _SYMBOL.match(text)
            if not m:
                raise ParseError(f"bad symbol declaration {text.strip()!r}", no, 1, ("NAME/ARITY",))
            sname, arity = m.group(1), int(m.group(2))
            if sname in RESERVED or sname in coords or sname in fields:
                raise ParseError(f"symbol name {sname!r} is taken", no, 1)
            symbols[sname] = (arity, m.group(3), m.group(4), no, text.index(m.group(4)) + 1 if m.group(4) else 1)
    # symbols may reference each other in rules: declare first, parse after
    decl = {s: E.DefinedSymbol(s, a, free=(op != ":")) for s, (a, op, _, _, _) in symbols.items()}
    scope0.symbols = decl
    for s, (arity, op, body, no, col) in symbols.items():
        if op is None:
            symbol_entries.append(Directive(f"{s}/{arity}", ()))
            continue
        pieces = _split_top(body, no, col)
        nodes = tuple(parse_expression(p, scope0, no, c, allow_args=True) for p, c in pieces)
        if op == ":":
            if len(nodes) != arity:
                raise ParseError(f"{s}/{arity} needs {arity} derivative rule(s)", no, col)
        elif len(nodes) != 1:
            raise ParseError(f"{s}/{arity} takes one sample template", no, col)
        symbol_entries.append(Assign(f"{s}/{arity}{op}", nodes))
        sample_src[s] = (op, nodes)

    params = set()
    param_line = {}
    for kind, name, hline, lines in raw_sections:
        if kind not in ("lift", "fields_of_variation"):
            continue
        if kind == "lift" and not name:
            raise ParseError("lift sections need a name: [lift NAME]", hline, 1)
        for no, col, text in lines:
            m = _DIRECTIVE.match(text)
            if m and m.group(1) in ("params", "flow"):
                for p in _words(m.group(2)):
                    params.add(p)
                    param_line.setdefault(p, no)
    scope = Scope(coords, fields, params, decl)
    for p in sorted(params):
        if p in coords or p in fields or p in RESERVED or p in decl:
            raise ParseError(f"parameter name {p!r} is taken", param_line[p], 1)

    prov = B.BundleSpec(coords, fields, max_order=1, order_cap=64)
    ev = Evaluator(prov, scope)
    for s, (op, nodes) in sample_src.items():
        vals = [ev(n) for n in nodes]
        if op == ":":
            decl[s].rules = {j: v for j, v in enumerate(vals)}
        else:
            samples[s] = vals[0]

    sections = []
    lag_node = None
    lifts_raw = {}
    variations_raw = {}
    background_raw = {}
    options = {}
    for kind, name, hline, lines in raw_sections:
        entries = []
        if kind == "bundle":
            for key in ("coords", "fields", "order", "cap"):
                if key in bundle_d:
                    entries.append(Directive(key, bundle_d[key][0]))
        elif kind == "symbols":
            entries = symbol_entries
        elif kind == "lagrangian":
            if not lines:
                raise ParseError("empty [lagrangian] section", hline, 1, ("expression",))
            text = " ".join(t.strip() for _, _, t in lines)
            no, col, first = lines[0]
            try:
                lag_node = parse_expression(text, scope, no, 1)
            except ParseError:
                # re-parse line by line for an accurate position
                if len(lines) > 1:
                    for no2, col2, t2 in lines:
                        tokenize(t2, no2, 1)
                raise
            entries.append(Assign("L", (lag_node,)))
        elif kind == "lift":
            rec = {"xi": None, "Xi": {}, "flow": (), "params": (), "tensor": [], "order": None, "line": hline}
            for no, col, text in lines:
                m = _DIRECTIVE.match(text)
                if m:
                    key, vals = m.group(1), _words(m.group(2))
                    if key not in ("params", "flow", "tensor", "order"):
                        raise ParseError(f"unknown lift directive {key!r}", no, 1, ("params:", "flow:", "tensor:", "order:"))
                    if key == "tensor":
                        rec["tensor"].append(_tensor_type(vals, fields, coords, no))
                    elif key == "order":
                        rec["order"] = int(vals[0])
                    elif key == "flow" and len(vals) != len(coords):
                        raise ParseError(f"flow needs {len(coords)} parameters", no, 1)
                    else:
                        rec[key] = vals
                    entries.append(Directive(key, vals))
                    continue
                m = _ASSIGN.match(text)
                if not m:
                    raise ParseError(f"bad lift entry {text.strip()!r}", no, 1, ("directive", "assignment"))
                target = m.group(1)
                c0 = text.index("=") + 2
                pieces = _split_top(m.group(2), no, c0)
                nodes = tuple(parse_expression(p, scope, no, c) for p, c in pieces)
                if target == "xi":
                    if len(nodes) != len(coords):
                        raise ParseError(f"xi needs {len(coords)} components", no, 1)
                    rec["xi"] = nodes
                elif target in fields:
                    if len(nodes) != 1:
                        raise ParseError("one expression per field", no, 1)
                    rec["Xi"][target] = nodes[0]
                else:
                    raise ParseError(f"unknown lift target {target!r}", no, 1, ("xi",) + tuple(fields))
                entries.append(Assign(target, nodes))
            if name in lifts_raw:
                raise ParseError(f"duplicate lift {name!r}", hline, 1)
            lifts_raw[name] = rec
        elif kind == "fields_of_variation":
            for no, col, text in lines:
                m = _DIRECTIVE.match(text)
                if m and m.group(1) == "params":
                    entries.append(Directive("params", _words(m.group(2))))
                    continue
                m = _ASSIGN.match(text)
                if not m or "." not in m.group(1):
                    raise ParseError(f"bad variation entry {text.strip()!r}", no, 1, ("NAME.FIELD = expr",))
                vname, target = m.group(1).split(".")
                c0 = text.index("=") + 2
                pieces = _split_top(m.group(2), no, c0)
                nodes = tuple(parse_expression(p, scope, no, c) for p, c in pieces)
                rec = variations_raw.setdefault(vname, {"xi": None, "Xi": {}})
                if target == "xi":
                    if len(nodes) != len(coords):
                        raise ParseError(f"xi needs {len(coords)} components", no, 1)
                    rec["xi"] = nodes
                elif target in fields and len(nodes) == 1:
                    rec["Xi"][target] = nodes[0]
                else:
                    raise ParseError(f"unknown variation target {target!r}", no, 1, ("xi",) + tuple(fields))
                entries.append(Assign(m.group(1), nodes))
        elif kind == "background":
            for no, col, text in lines:
                m = _DIRECTIVE.match(text)
                if m:
                    key, vals = m.group(1), _words(m.group(2))
                    if key not in ("interval", "tolerance"):
                        raise ParseError(f"unknown background directive {key!r}", no, 1, ("interval:", "tolerance:"))
                    try:
                        options[key] = tuple(float(Fraction(v)) for v in vals)
                    except ValueError:
                        raise ParseError(f"{key} takes numbers", no, 1) from None
                    want = 2 if key == "interval" else 1
                    if len(vals) != want:
                        raise ParseError(f"{key} takes {want} number(s)", no, 1)
                    entries.append(Directive(key, vals))
                    continue
                m = _ASSIGN.match(text)
                if not m or m.group(1) not in fields:
                    raise ParseError(f"bad background entry {text.strip()!r}", no, 1, tuple(f + " =" for f in fields))
                c0 = text.index("=") + 2
                node = parse_expression(m.group(2), Scope(coords, (), (), decl), no, c0)
                background_raw[m.group(1)] = node
                entries.append(Assign(m.group(1), (node,)))
        sections.append(Section(kind, name, tuple(entries)))

    # evaluation
    L = ev(lag_node)
    order = E.jet_order(L)
    if max_order is None:
        max_order = int(bundle_d["order"][0][0]) if "order" in bundle_d else max(order, 1)
    cap = int(bundle_d["cap"][0][0]) if "cap" in bundle_d else None
    spec = B.BundleSpec(coords, fields, max_order=max_order, order_cap=cap)
    lam = VA.Lagrangian(L, spec)
    ev = Evaluator(spec, scope)
    lifts = {}
    for name, rec in lifts_raw.items():
        xi = [ev(n) for n in rec["xi"]] if rec["xi"] else [E.ZERO] * spec.n
        Xi = {f: ev(n) for f, n in rec["Xi"].items()}
        if rec["tensor"]:
            if len(rec["flow"]) != spec.n:
                raise ParseError(f"lift {name!r}: tensor transport needs flow:", rec["line"], 1, ("flow:",))
            t = V.tensor_lift(spec, rec["tensor"], rec["flow"])
            xi = [a + b for a, b in zip(xi, t.xi)] if rec["xi"] else list(t.xi)
            for f, c in t.Xi.items():
                if c.terms:
                    Xi[f] = Xi.get(f, E.ZERO) + c
        elif rec["flow"] and not rec["xi"]:
            xi = [E.param(p, spec.zero()) for p in rec["flow"]]
        lifts[name] = V.ParamVectorField(spec, xi, Xi, flow=rec["flow"], order=rec["order"], name=name)
    variations = {}
    for name, rec in variations_raw.items():
        xi = [ev(n) for n in rec["xi"]] if rec["xi"] else None
        variations[name] = V.ParamVectorField(spec, xi, {f: ev(n) for f, n in rec["Xi"].items()}, name=name)
    background = {f: ev(n) for f, n in background_raw.items()}
    if background and set(background) != set(fields):
        bline = next(h for k, _, h, _ in raw_sections if k == "background")
        missing = tuple(f for f in fields if f not in background)
        raise ParseError("[background] must give every field", bline, 1, missing)
    return ProblemFile(sections, spec, lam, decl, lifts, variations, background, options, samples)


def _tensor_type(vals, fields, coords, no):
    """``tensor: VARIANCE [sym] f1, f2, ...`` with components in
    lexicographic index order (sorted indices only when symmetric)."""
    if not vals:
        raise ParseError("tensor: needs a variance and component fields", no, 1)
    variance = vals[0] if vals[0] != "scalar" else ""
    if any(c not in "lu" for c in variance):
        raise ParseError(f"bad variance {vals[0]!r}", no, 1, ("scalar", "l", "u", "ll", "uu", "lu"))
    rest = list(vals[1:])
    symmetric = bool(rest) and rest[0] == "sym"
    if symmetric:
        rest = rest[1:]
    n = len(coords)
    idx = [i for i in itertools.product(range(n), repeat=len(variance)) if not symmetric or list(i) == sorted(i)]
    if len(rest) != len(idx):
        raise ParseError(f"tensor of type {vals[0]!r} needs {len(idx)} component fields", no, 1)
    for f in rest:
        if f not in fields:
            raise ParseError(f"unknown field {f!r}", no, 1, tuple(fields))
    return V.TensorType(variance, dict(zip(idx, rest)), symmetric)


def print_problem(pf):
    """Canonical text of a problem file; parses back to the same AST."""
    coords = pf.spec.coords if isinstance(pf, ProblemFile) else None
    sections = pf.sections if isinstance(pf, ProblemFile) else pf
    if coords is None:
        coords = next(e.values for s in sections if s.kind == "bundle" for e in s.entries if e.key == "coords")
    out = []
    for s in sections:
        out.append(f"[{s.kind}{' ' + s.name if s.name else ''}]")
        for e in s.entries:
            if isinstance(e, Directive):
                if s.kind == "symbols":
                    out.append(e.key)
                else:
                    out.append(f"{e.key}: {', '.join(e.values)}")
            elif s.kind == "lagrangian":
                out.append(print_expr(e.exprs[0], coords))
            elif s.kind == "symbols":
                head, op = e.target[:-1], e.target[-1]
                out.append(f"{head} {op} " + ", ".join(print_expr(x, coords) for x in e.exprs))
            else:
                out.append(f"{e.target} = " + ", ".join(print_expr(x, coords) for x in e.exprs))
        out.append("")
    return "\n".join(out)


def load_problem(path, max_order=None):
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read(), max_order=max_order)
