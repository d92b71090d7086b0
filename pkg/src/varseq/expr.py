"""Canonical symbolic expressions over exact rationals.

An :class:`Expr` is a finite sum of monomials with rational coefficients.  A
monomial is a tuple of ``(atom, exponent)`` pairs sorted by the atom's key.
Atoms are variables (base coordinates, jet variables, parameter derivatives,
rule placeholders), the constant ``pi``, applications of elementary or
user-defined functions, and powers of sums that cannot be expanded.

Canonical form is maintained by every constructor:

* integer powers of sums are expanded, so polynomial identities are decided by
  structural comparison;
* a power-of-sum atom ``S`` carries an exponent below one; when the terms of a
  sum disagree on the integer part of their ``S`` exponents, the sum is put
  over the common denominator ``S^k`` with ``k`` the smallest integer part.
  This makes rational and radical identities such as
  ``g11*g22*S^(-1/2) - g12^2*S^(-1/2) - S^(1/2)`` collapse to zero.

Expressions are immutable and hashable; nothing here touches floating point
except the explicit numeric evaluators at the bottom.
"""

from __future__ import annotations

import math
from fractions import Fraction

from .errors import UnknownSymbol

_ARG, _PI, _COORD, _JET, _PARAM, _SYM, _FUNC, _POW = range(8)


def _num(x):
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, int):
        return x
    if isinstance(x, Fraction):
        return x.numerator if x.denominator == 1 else x
    raise TypeError(f"exact rational expected, got {type(x).__name__}")


def _floor(q):
    return q // 1 if isinstance(q, Fraction) else q


class Atom:
    __slots__ = ("key", "_hash", "free")
    rank = -1
    is_var = False

    def _init(self, key, free):
        self.key = key
        self._hash = hash(key)
        self.free = free

    def __eq__(self, other):
        if self is other:
            return True
        return isinstance(other, Atom) and self._hash == other._hash and self.key == other.key

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.key < other.key

    def __repr__(self):
        from .render import atom_text

        return atom_text(self)


class Coord(Atom):
    __slots__ = ("name",)
    rank = _COORD
    is_var = True

    def __init__(self, name):
        self.name = name
        self._init((_COORD, name), None)
        self.free = frozenset((self,))


def _alpha_key(alpha):
    return (sum(alpha), tuple(-a for a in alpha))


class Jet(Atom):
    """Jet variable ``y^i_alpha``; ``alpha`` is a tuple of derivative counts."""

    __slots__ = ("field", "alpha")
    rank = _JET
    is_var = True

    def __init__(self, field, alpha):
        self.field = field
        self.alpha = tuple(alpha)
        self._init((_JET, field) + _alpha_key(self.alpha), None)
        self.free = frozenset((self,))

    @property
    def name(self):
        return self.field

    @property
    def order(self):
        return sum(self.alpha)


class Param(Atom):
    """Derivative ``eps^A_alpha`` of a parameter function."""

    __slots__ = ("name", "alpha")
    rank = _PARAM
    is_var = True

    def __init__(self, name, alpha):
        self.name = name
        self.alpha = tuple(alpha)
        self._init((_PARAM, name) + _alpha_key(self.alpha), None)
        self.free = frozenset((self,))

    @property
    def order(self):
        return sum(self.alpha)


class Arg(Atom):
    """Placeholder ``#k`` for the k-th argument inside derivative rules."""

    __slots__ = ("index",)
    rank = _ARG
    is_var = True

    def __init__(self, index):
        self.index = index
        self._init((_ARG, index), None)
        self.free = frozenset((self,))


class _Pi(Atom):
    __slots__ = ()
    rank = _PI

    def __init__(self):
        self._init((_PI,), frozenset())


PI_ATOM = _Pi()


class Func(Atom):
    __slots__ = ("name", "arg")
    rank = _FUNC

    def __init__(self, name, arg):
        self.name = name
        self.arg = arg
        self._init((_FUNC, name, arg.key), arg.free)


class Sym(Atom):
    """Application of a :class:`DefinedSymbol`; ``derivs`` counts partial
    derivatives per argument (only nonzero for free functions)."""

    __slots__ = ("defn", "args", "derivs")
    rank = _SYM

    def __init__(self, defn, args, derivs):
        self.defn = defn
        self.args = tuple(args)
        self.derivs = tuple(derivs)
        free = frozenset().union(*(a.free for a in self.args)) if self.args else frozenset()
        self._init((_SYM, defn.name, self.derivs, tuple(a.key for a in self.args)), free)

    @property
    def name(self):
        return self.defn.name


class PowerAtom(Atom):
    """A sum (or a non-perfect rational constant) raised to a non-integer or
    negative exponent; the exponent lives in the monomial."""

    __slots__ = ("base",)
    rank = _POW

    def __init__(self, base):
        self.base = base
        self._init((_POW, base.key), base.free)


def _fkey(t):
    return t[0].key


def _mono_key(m):
    return tuple((a.key, e) for a, e in m)


def _mono_mul(m1, m2):
    if not m1:
        return m2
    if not m2:
        return m1
    d = dict(m1)
    for a, e in m2:
        x = d.get(a)
        if x is None:
            d[a] = e
        else:
            s = _num(x + e)
            if s:
                d[a] = s
            else:
                del d[a]
    return tuple(sorted(d.items(), key=_fkey))


def _acc_add(acc, m, c):
    x = acc.get(m)
    acc[m] = c if x is None else x + c


def _acc_mul(acc, mono, c, expr):
    for m2, c2 in expr.terms.items():
        _acc_add(acc, _mono_mul(mono, m2), c * c2)


class Expr:
    __slots__ = ("terms", "_hash", "_key", "_free")

    def __init__(self, terms):
        # terms must already be canonical; use _canon() otherwise
        self.terms = terms
        self._hash = None
        self._key = None
        self._free = None

    # -- identity -------------------------------------------------------
    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def __eq__(self, other):
        if isinstance(other, Expr):
            return self is other or self.terms == other.terms
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return self.terms == const(other).terms
        return NotImplemented

    @property
    def key(self):
        if self._key is None:
            self._key = tuple(sorted((_mono_key(m), c) for m, c in self.terms.items()))
        return self._key

    @property
    def free(self):
        """Variable atoms (coordinates, jets, parameters, placeholders)."""
        if self._free is None:
            s = set()
            for m in self.terms:
                for a, _ in m:
                    if a.free:
                        s |= a.free
            self._free = frozenset(s)
        return self._free

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda t: _mono_key(t[0]))

    def atoms(self):
        out = set()
        for m in self.terms:
            for a, _ in m:
                out.add(a)
        return out

    def is_zero(self):
        return not self.terms

    def is_const(self):
        return not self.terms or (len(self.terms) == 1 and () in self.terms)

    def as_const(self):
        if not self.terms:
            return 0
        if self.is_const():
            return self.terms[()]
        raise ValueError("expression is not a rational constant")

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        from .render import to_text

        return f"Expr({to_text(self)})"

    def __str__(self):
        from .render import to_text

        return to_text(self)

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other):
        other = as_expr(other)
        if not other.terms:
            return self
        if not self.terms:
            return other
        acc = dict(self.terms)
        for m, c in other.terms.items():
            _acc_add(acc, m, c)
        return _canon(acc)

    __radd__ = __add__

    def __neg__(self):
        return Expr({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-as_expr(other))

    def __rsub__(self, other):
        return as_expr(other) + (-self)

    def scale(self, q):
        q = _num(q)
        if q == 0:
            return ZERO
        if q == 1:
            return self
        return Expr({m: _num(c * q) for m, c in self.terms.items()})

    def __mul__(self, other):
        other = as_expr(other)
        if not self.terms or not other.terms:
            return ZERO
        if other.is_const():
            return self.scale(other.terms[()])
        if self.is_const():
            return other.scale(self.terms[()])
        acc = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                _acc_add(acc, _mono_mul(m1, m2), c1 * c2)
        return _canon(acc)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return self.scale(Fraction(1) / other)
        other = as_expr(other)
        if other.is_const():
            return self.scale(Fraction(1) / other.as_const())
        return self * other ** -1

    def __rtruediv__(self, other):
        return as_expr(other) * self ** -1

    def __pow__(self, q):
        q = _num(q)
        if isinstance(q, int) and q >= 0:
            result, base = ONE, self
            while q:
                if q & 1:
                    result = result * base
                q >>= 1
                if q:
                    base = base * base
            return result
        if not self.terms:
            raise ZeroDivisionError("zero raised to a non-positive power")
        if len(self.terms) == 1:
            ((m, c),) = self.terms.items()
            coef = _const_pow(c, q)
            if not m:
                return coef
            newm = tuple((a, _num(e * q)) for a, e in m)
            return coef * _canon({newm: 1})
        lead = self.sorted_terms()[0][1]
        if isinstance(q, int):
            base = self.scale(Fraction(1) / lead)
            coef = const(Fraction(lead) ** q)
        else:
            base = self.scale(Fraction(1) / abs(lead))
            coef = _const_pow(abs(lead), q)
        return coef * _canon({((PowerAtom(base), q),): 1})

    # -- calculus & substitution ---------------------------------------
    def diff(self, v):
        return partial(self, v)

    def subs(self, mapping):
        return substitute(self, mapping)


def as_expr(x):
    if isinstance(x, Expr):
        return x
    return const(x)


def const(q):
    q = _num(q)
    if q == 0:
        return ZERO
    return Expr({(): q})


ZERO = Expr({})
ONE = Expr({(): 1})


def _atom_expr(a, e=1):
    return Expr({((a, e),): 1})


def coord(name):
    return _atom_expr(Coord(name))


def jet(field, alpha):
    return _atom_expr(Jet(field, alpha))


def param(name, alpha):
    return _atom_expr(Param(name, alpha))


def arg(index):
    return _atom_expr(Arg(index))


PI = _atom_expr(PI_ATOM)


def _iroot(n, b):
    """Exact integer b-th root of n >= 0, or None."""
    if n < 2:
        return n
    if b == 2:
        r = math.isqrt(n)
        return r if r * r == n else None
    r = int(round(n ** (1.0 / b)))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand**b == n:
            return cand
    if n.bit_length() > 50:
        # Newton iteration for large integers
        x = 1 << (n.bit_length() // b + 1)
        while True:
            y = ((b - 1) * x + n // x ** (b - 1)) // b
            if y >= x:
                break
            x = y
        if x**b == n:
            return x
    return None


def _const_pow(c, q):
    c = _num(c)
    if c == 1:
        return ONE
    if isinstance(q, int):
        return const(Fraction(c) ** q)
    if c < 0:
        raise ValueError("fractional power of a negative constant is not real")
    if c == 0:
        if q > 0:
            return ZERO
        raise ZeroDivisionError("zero raised to a negative power")
    fc = Fraction(c)
    a, b = q.numerator, q.denominator
    rn, rd = _iroot(fc.numerator, b), _iroot(fc.denominator, b)
    if rn is not None and rd is not None:
        return const(Fraction(rn, rd) ** a)
    k = _floor(q)
    f = _num(q - k)
    return const(fc**k) * Expr({((PowerAtom(const(c)), f),): 1})


# -- canonicalization ---------------------------------------------------


def _canon(acc):
    d = {}
    has_pow = False
    for m, c in acc.items():
        if c:
            d[m] = _num(c)
            if not has_pow:
                for a, _ in m:
                    if a.rank == _POW:
                        has_pow = True
                        break
    if not d:
        return ZERO
    if has_pow:
        d = _expand_powers(d)
        d = _together(d)
        if not d:
            return ZERO
    return Expr(d)


def _expand_powers(d):
    if not any(a.rank == _POW and e >= 1 for m in d for a, e in m):
        return d
    out = {}
    for m, c in d.items():
        if not any(a.rank == _POW and e >= 1 for a, e in m):
            _acc_add(out, m, c)
            continue
        rest = []
        factors = []
        for a, e in m:
            if a.rank == _POW and e >= 1:
                k = _floor(e)
                f = _num(e - k)
                factors.append(a.base ** int(k))
                if f:
                    rest.append((a, f))
            else:
                rest.append((a, e))
        prod = Expr({tuple(rest): c})
        for fac in factors:
            prod = prod * fac
        for mm, cc in prod.terms.items():
            _acc_add(out, mm, cc)
    return {m: _num(c) for m, c in out.items() if c}


def _together(d):
    while True:
        cands = set()
        for m in d:
            for a, e in m:
                if a.rank == _POW and e < 0:
                    cands.add(a)
        if not cands:
            return d
        target = None
        for s in sorted(cands, key=lambda a: a.key):
            floors = set()
            for m in d:
                e = 0
                for a, x in m:
                    if a == s:
                        e = x
                        break
                floors.add(_floor(e))
            if len(floors) > 1:
                target = (s, min(floors))
                break
        if target is None:
            return d
        s, k = target
        numer = {}
        for m, c in d.items():
            e = 0
            rest = []
            for a, x in m:
                if a == s:
                    e = x
                else:
                    rest.append((a, x))
            j = e - k
            ip = int(_floor(j))
            f = _num(j - ip)
            if f:
                rest.append((s, f))
                rest.sort(key=_fkey)
            term = Expr({tuple(rest): c})
            if ip:
                term = term * s.base**ip
            for mm, cc in term.terms.items():
                _acc_add(numer, mm, cc)
        numer = {m: c for m, c in numer.items() if c}
        out = {}
        for m, c in numer.items():
            _acc_add(out, _mono_mul(m, ((s, int(k)),)), c)
        d = {m: _num(c) for m, c in out.items() if c}
        if not d:
            return d


# -- elementary functions -----------------------------------------------

ELEMENTARY = ("sin", "cos", "exp", "ln", "sqrt")


def _pi_multiple(e):
    """Return c if e == c*pi with 2c an integer, else None."""
    if len(e.terms) != 1:
        return None
    ((m, c),) = e.terms.items()
    if m == ((PI_ATOM, 1),) and (2 * Fraction(c)).denominator == 1:
        return Fraction(c)
    return None


def _func(name, a):
    a = as_expr(a)
    if a.is_const():
        v = a.as_const()
        if v == 0:
            if name == "sin":
                return ZERO
            if name in ("cos", "exp"):
                return ONE
        if v == 1 and name == "ln":
            return ZERO
    if name in ("sin", "cos"):
        c = _pi_multiple(a)
        if c is not None:
            k = int(2 * c) % 4
            if name == "sin":
                return const((0, 1, 0, -1)[k])
            return const((1, 0, -1, 0)[k])
    return _atom_expr(Func(name, a))


def sin(a):
    return _func("sin", a)


def cos(a):
    return _func("cos", a)


def exp(a):
    return _func("exp", a)


def ln(a):
    return _func("ln", a)


def sqrt(a):
    return as_expr(a) ** Fraction(1, 2)


FUNCTIONS = {"sin": sin, "cos": cos, "exp": exp, "ln": ln, "sqrt": sqrt}


def _func_derivative(f):
    a = f.arg
    if f.name == "sin":
        return cos(a)
    if f.name == "cos":
        return -sin(a)
    if f.name == "exp":
        return exp(a)
    if f.name == "ln":
        return a**-1
    raise UnknownSymbol(f"no derivative for function {f.name}")


class DefinedSymbol:
    """User-declared function symbol.

    A *free* symbol (e.g. a potential ``V(u)``) differentiates into new
    symbols ``V'``, ``V''``; otherwise each argument position needs a rule,
    an expression template in the placeholders ``#1 .. #arity``.
    """

    def __init__(self, name, arity, rules=None, free=False):
        self.name = name
        self.arity = arity
        self.rules = dict(rules or {})
        self.free = free
        for j in self.rules:
            if not 0 <= j < arity:
                raise ValueError(f"rule for argument {j + 1} of {name}/{arity}")

    def __call__(self, *args):
        if len(args) != self.arity:
            raise TypeError(f"{self.name} takes {self.arity} arguments")
        return _atom_expr(Sym(self, [as_expr(a) for a in args], (0,) * self.arity))

    def apply(self, args, derivs):
        return _atom_expr(Sym(self, [as_expr(a) for a in args], derivs))

    def derivative(self, sym, j):
        """Partial derivative of the application ``sym`` in argument ``j``."""
        if self.free:
            derivs = list(sym.derivs)
            derivs[j] += 1
            return self.apply(sym.args, derivs)
        rule = self.rules.get(j)
        if rule is None:
            raise UnknownSymbol(f"symbol {self.name} has no derivative rule for argument {j + 1}")
        return substitute(rule, {Arg(k + 1): sym.args[k] for k in range(self.arity)})

    def __repr__(self):
        return f"DefinedSymbol({self.name!r}, {self.arity})"


# -- derivations --------------------------------------------------------


def _derive(e, dvar, skip, cache):
    """Apply the derivation fixed by ``dvar`` on variable atoms.

    ``skip(atom)`` returns True when the derivation certainly kills the atom.
    """
    acc = {}
    for m, c in e.terms.items():
        for i, (a, x) in enumerate(m):
            if skip(a):
                continue
            da = _atom_derive(a, dvar, skip, cache)
            if da is None or not da.terms:
                continue
            nx = _num(x - 1)
            base = m[:i] + ((a, nx),) + m[i + 1 :] if nx else m[:i] + m[i + 1 :]
            _acc_mul(acc, base, c * x, da)
    return _canon(acc)


def _atom_derive(a, dvar, skip, cache):
    if a.is_var:
        return dvar(a)
    if not a.free:
        return None
    if a in cache:
        return cache[a]
    if a.rank == _FUNC:
        inner = _derive(a.arg, dvar, skip, cache)
        out = _func_derivative(a) * inner if inner.terms else ZERO
    elif a.rank == _SYM:
        out = ZERO
        for j, sub in enumerate(a.args):
            inner = _derive(sub, dvar, skip, cache)
            if inner.terms:
                out = out + a.defn.derivative(a, j) * inner
    elif a.rank == _POW:
        out = _derive(a.base, dvar, skip, cache)
    else:
        raise TypeError(f"cannot differentiate atom {a!r}")
    cache[a] = out
    return out


def derive(e, dvar, skip=None, cache=None):
    """Public entry to the derivation engine (used by total derivatives)."""
    if skip is None:
        skip = _never
    return _derive(e, dvar, skip, {} if cache is None else cache)


def _never(a):
    return False


def partial(e, v):
    """Exact partial derivative with respect to the variable atom ``v``."""
    if isinstance(v, Expr):
        v = as_atom(v)
    if v not in e.free:
        return ZERO

    def dvar(a):
        return ONE if a == v else None

    def skip(a):
        return a.free is None or v not in a.free

    return _derive(e, dvar, skip, {})


def as_atom(e):
    """The single variable atom of ``e`` (e.g. ``jet('u', (1,))``)."""
    if len(e.terms) == 1:
        ((m, c),) = e.terms.items()
        if c == 1 and len(m) == 1 and m[0][1] == 1:
            return m[0][0]
    raise ValueError(f"{e} is not a single atom")


# -- substitution -------------------------------------------------------


def _rebuild(a, mapping):
    """Expression for atom ``a`` (exponent 1) after substitution."""
    if a.rank == _FUNC:
        return _func(a.name, substitute(a.arg, mapping))
    if a.rank == _SYM:
        return a.defn.apply([substitute(x, mapping) for x in a.args], a.derivs)
    if a.rank == _POW:
        return None
    raise TypeError(a)


def substitute(e, mapping):
    """Simultaneous substitution of variable atoms, then normalization."""
    if not mapping:
        return e
    mapping = {(as_atom(k) if isinstance(k, Expr) else k): as_expr(v) for k, v in mapping.items()}
    keys = mapping.keys()
    if e.free.isdisjoint(keys):
        return e
    total = {}
    for m, c in e.terms.items():
        term = const(c)
        kept = []
        for a, x in m:
            if a.is_var:
                if a in mapping:
                    term = term * mapping[a] ** x
                else:
                    kept.append((a, x))
            elif a.free and not a.free.isdisjoint(keys):
                if a.rank == _POW:
                    term = term * substitute(a.base, mapping) ** x
                else:
                    term = term * _rebuild(a, mapping) ** x
            else:
                kept.append((a, x))
        if kept:
            term = term * _canon({tuple(kept): 1})
        for mm, cc in term.terms.items():
            _acc_add(total, mm, cc)
    return _canon(total)


def substitute_function(e, name, template):
    """Replace every application of the free symbol ``name`` by ``template``
    (an expression in ``#1..#k``), differentiating it for derivative
    applications ``V'``, ``V''``..."""

    def repl(a):
        if a.rank == _SYM and a.name == name:
            t = template
            for j, k in enumerate(a.derivs):
                for _ in range(k):
                    t = partial(t, Arg(j + 1))
            args = [substitute_function(x, name, template) for x in a.args]
            return substitute(t, {Arg(j + 1): x for j, x in enumerate(args)})
        if a.rank == _SYM:
            return a.defn.apply([substitute_function(x, name, template) for x in a.args], a.derivs)
        if a.rank == _FUNC:
            return _func(a.name, substitute_function(a.arg, name, template))
        if a.rank == _POW:
            return None
        return _atom_expr(a)

    if not any(_mentions(a, name) for a in e.atoms()):
        return e
    total = ZERO
    for m, c in e.terms.items():
        term = const(c)
        for a, x in m:
            if a.rank == _POW:
                term = term * substitute_function(a.base, name, template) ** x
            else:
                term = term * repl(a) ** x
        total = total + term
    return total


def _mentions(a, name):
    if a.rank == _SYM:
        return a.name == name or any(_mentions(b, name) for x in a.args for b in x.atoms())
    if a.rank == _FUNC:
        return any(_mentions(b, name) for b in a.arg.atoms())
    if a.rank == _POW:
        return any(_mentions(b, name) for b in a.base.atoms())
    return False


# -- polynomial structure in a bank of variables -------------------------


def bank_degrees(e, in_bank):
    """Map degree -> sub-expression, grading by total degree in the variables
    selected by ``in_bank``.  Returns None if some bank variable occurs inside
    a composite atom or with a non-integer exponent."""
    parts = {}
    for m, c in e.terms.items():
        deg = 0
        for a, x in m:
            if a.is_var:
                if in_bank(a):
                    if not isinstance(x, int) or x < 0:
                        return None
                    deg += x
            elif a.free and any(in_bank(v) for v in a.free):
                return None
        parts.setdefault(deg, {})[m] = c
    return {k: Expr(v) for k, v in parts.items()}


def jet_order(e):
    """Largest derivative order over jets and parameter derivatives in ``e``."""
    best = 0
    for v in e.free:
        if v.rank in (_JET, _PARAM):
            best = max(best, sum(v.alpha))
    return best


# -- numeric evaluation --------------------------------------------------


def evaluate(e, values, functions=None):
    """Float value of ``e``; ``values`` maps variable atoms to floats and
    ``functions`` maps free-symbol names to ``f(args, derivs)``."""
    total = 0.0
    for m, c in e.terms.items():
        t = float(c)
        for a, x in m:
            t *= _atom_value(a, values, functions) ** float(x)
        total += t
    return total


def _atom_value(a, values, functions):
    if a.is_var:
        return float(values[a])
    if a.rank == _PI:
        return math.pi
    if a.rank == _FUNC:
        v = evaluate(a.arg, values, functions)
        return {"sin": math.sin, "cos": math.cos, "exp": math.exp, "ln": math.log}[a.name](v)
    if a.rank == _POW:
        return evaluate(a.base, values, functions)
    if a.rank == _SYM:
        if not functions or a.name not in functions:
            raise UnknownSymbol(f"no numeric implementation for symbol {a.name}")
        args = [evaluate(x, values, functions) for x in a.args]
        return float(functions[a.name](args, a.derivs))
    raise TypeError(a)


def lambdify(e, variables, functions=None):
    """Compile ``e`` into a numpy-vectorized callable of ``variables``.

    Free symbols are looked up in ``functions`` as ``f(args, derivs)`` where
    ``args`` is a list of arrays.
    """
    import numpy as np

    names = {v: f"_v{i}" for i, v in enumerate(variables)}
    ns = {"np": np, "_fn": dict(functions or {})}
    code = _code(e, names)
    src = f"def _f({', '.join(names.values())}):\n    return {code}\n"
    exec(compile(src, "<varseq-lambdify>", "exec"), ns)
    fn = ns["_f"]
    if e.free - set(names):
        missing = ", ".join(sorted(map(repr, e.free - set(names))))
        raise KeyError(f"unbound variables: {missing}")
    return fn


def _code(e, names):
    if not e.terms:
        return "0.0"
    parts = []
    for m, c in e.sorted_terms():
        fs = [repr(float(c))]
        for a, x in m:
            base = _atom_code(a, names)
            if x == 1:
                fs.append(base)
            elif isinstance(x, int) and 0 < x <= 4:
                fs.append("*".join([base] * x))
            else:
                fs.append(f"({base})**({float(x)!r})")
        parts.append("(" + "*".join(fs) + ")")
    return "(" + " + ".join(parts) + ")"


def _atom_code(a, names):
    if a.is_var:
        return names[a]
    if a.rank == _PI:
        return "np.pi"
    if a.rank == _FUNC:
        fn = {"sin": "np.sin", "cos": "np.cos", "exp": "np.exp", "ln": "np.log"}[a.name]
        return f"{fn}({_code(a.arg, names)})"
    if a.rank == _POW:
        return _code(a.base, names)
    if a.rank == _SYM:
        args = ", ".join(_code(x, names) for x in a.args)
        return f"_fn[{a.name!r}]([{args}], {a.derivs!r})"
    raise TypeError(a)
