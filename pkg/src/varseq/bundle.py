"""Fibered chart, multi-indices and the total derivative."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product

from . import expr as E
from .errors import OrderOverflow, check_cancel

# -- multi-indices ----------------------------------------------------------


def order(alpha):
    return sum(alpha)


def unit(n, sigma):
    return tuple(1 if i == sigma else 0 for i in range(n))


def add(alpha, beta):
    return tuple(a + b for a, b in zip(alpha, beta))


def shift(alpha, sigma, k=1):
    """``alpha + sigma``: bump component ``sigma`` by ``k``."""
    out = list(alpha)
    out[sigma] += k
    return tuple(out)


def sub(alpha, beta):
    out = tuple(a - b for a, b in zip(alpha, beta))
    if any(x < 0 for x in out):
        raise ValueError(f"{beta} is not below {alpha}")
    return out


def factorial(alpha):
    return math.prod(math.factorial(a) for a in alpha)


def binom(beta, gamma):
    return math.prod(math.comb(b, g) for b, g in zip(beta, gamma))


def below(beta):
    """All multi-indices gamma <= beta componentwise."""
    return [tuple(g) for g in product(*(range(b + 1) for b in beta))]


def _of_order(n, k):
    if n == 1:
        yield (k,)
        return
    for first in range(k, -1, -1):
        for rest in _of_order(n - 1, k - first):
            yield (first,) + rest


def enumerate_multiindices(n, max_order):
    """All multi-indices of length ``n`` up to ``max_order`` in graded-lex
    order: by order, then lexicographically descending within an order."""
    if max_order < 0:
        raise ValueError("max_order must be non-negative")
    return [a for k in range(max_order + 1) for a in _of_order(n, k)]


# -- bundle specification --------------------------------------------------


@dataclass(frozen=True)
class BundleSpec:
    coords: tuple
    fields: tuple
    max_order: int = 2
    params: tuple = ()
    symbols: tuple = ()  # pairs (name, DefinedSymbol)
    order_cap: int | None = None
    _index: dict = field(default=None, compare=False, hash=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "params", tuple(self.params))
        syms = self.symbols
        if isinstance(syms, dict):
            syms = tuple(syms.items())
        object.__setattr__(self, "symbols", tuple(syms))
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.coords)})
        self.validate()

    # geometry
    @property
    def n(self):
        return len(self.coords)

    @property
    def m(self):
        return len(self.fields)

    @property
    def cap(self):
        return self.order_cap if self.order_cap is not None else 4 * self.max_order + 2

    @property
    def symbol_table(self):
        return dict(self.symbols)

    def index(self, sigma):
        if isinstance(sigma, int):
            if not 0 <= sigma < self.n:
                raise IndexError(f"base direction {sigma} out of range")
            return sigma
        return self._index[sigma]

    def validate(self):
        names = list(self.coords) + list(self.fields) + list(self.params) + [s for s, _ in self.symbols]
        if len(set(names)) != len(names):
            raise ValueError("coordinate, field, parameter and symbol names must be distinct")
        if self.n < 1 or self.m < 1 or self.max_order < 1:
            raise ValueError("need n >= 1, m >= 1 and max_order >= 1")
        declared = {s for s, _ in self.symbols}
        for name, defn in self.symbols:
            for rule in defn.rules.values():
                for v in rule.free:
                    ok = (
                        v.rank == E._ARG
                        or (v.rank == E._COORD and v.name in self._index)
                        or (v.rank == E._JET and v.field in self.fields)
                    )
                    if not ok:
                        raise ValueError(f"rule of {name} mentions undeclared {v!r}")
                for a in _all_atoms(rule):
                    if a.rank == E._SYM and a.name not in declared:
                        raise ValueError(f"rule of {name} mentions undeclared symbol {a.name}")

    def with_cap(self, cap):
        return BundleSpec(self.coords, self.fields, self.max_order, self.params, self.symbols, cap)

    def with_params(self, params):
        return BundleSpec(self.coords, self.fields, self.max_order, tuple(params), self.symbols, self.order_cap)

    # constructors
    def zero(self):
        return (0,) * self.n

    def x(self, name):
        self.index(name)
        return E.coord(name)

    def y(self, fieldname, alpha=None):
        if fieldname not in self.fields:
            raise KeyError(f"undeclared field {fieldname}")
        return E.jet(fieldname, self._alpha(alpha))

    def eps(self, name, alpha=None):
        return E.param(name, self._alpha(alpha))

    def _alpha(self, alpha):
        if alpha is None:
            return self.zero()
        if isinstance(alpha, str):
            out = [0] * self.n
            for ch in alpha:
                out[self.index(ch)] += 1
            return tuple(out)
        alpha = tuple(alpha)
        if len(alpha) != self.n:
            raise ValueError(f"multi-index {alpha} has wrong length for n={self.n}")
        return alpha

    # serialization
    def to_json(self):
        from .render import to_json as expr_json

        return {
            "coords": list(self.coords),
            "fields": list(self.fields),
            "max_order": self.max_order,
            "params": list(self.params),
            "order_cap": self.order_cap,
            "symbols": [
                {
                    "name": name,
                    "arity": d.arity,
                    "free": d.free,
                    "rules": {str(j + 1): expr_json(r) for j, r in sorted(d.rules.items())},
                }
                for name, d in self.symbols
            ],
        }

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, data):
        from .render import from_json as expr_from_json

        if isinstance(data, str):
            data = json.loads(data)
        table = {}
        defs = []
        for s in data.get("symbols", []):
            d = E.DefinedSymbol(s["name"], s["arity"], free=s.get("free", False))
            table[s["name"]] = d
            defs.append((s, d))
        for s, d in defs:
            d.rules = {int(j) - 1: expr_from_json(r, table) for j, r in s.get("rules", {}).items()}
        return cls(
            tuple(data["coords"]),
            tuple(data["fields"]),
            data.get("max_order", 2),
            tuple(data.get("params", ())),
            tuple((d.name, d) for _, d in defs),
            data.get("order_cap"),
        )


def _all_atoms(e):
    out = []
    for a in e.atoms():
        out.append(a)
        if a.rank == E._FUNC:
            out.extend(_all_atoms(a.arg))
        elif a.rank == E._SYM:
            for x in a.args:
                out.extend(_all_atoms(x))
        elif a.rank == E._POW:
            out.extend(_all_atoms(a.base))
    return out


# -- total derivative ------------------------------------------------------

_TD_CACHE = {}
_TD_CACHE_MAX = 200_000


def _total_dvar(spec, sigma):
    cname = spec.coords[sigma]
    cap = spec.cap

    def dvar(a):
        r = a.rank
        if r == E._JET or r == E._PARAM:
            alpha = shift(a.alpha, sigma)
            if sum(alpha) > cap:
                raise OrderOverflow(
                    f"total derivative of {a!r} exceeds the jet order cap {cap}"
                )
            if r == E._JET:
                return E.jet(a.field, alpha)
            return E.param(a.name, alpha)
        if r == E._COORD:
            return E.ONE if a.name == cname else None
        return None

    return dvar


def total_derivative(e, sigma, spec):
    """``D_sigma e``: chain rule through all jets and parameter derivatives.

    ``sigma`` is a coordinate name or a 0-based direction index.
    """
    sigma = spec.index(sigma)
    if not e.terms:
        return e
    key = (spec.coords, sigma, spec.cap)
    cache = _TD_CACHE.setdefault(key, {})
    if len(cache) > _TD_CACHE_MAX:
        cache.clear()
    return E.derive(e, _total_dvar(spec, sigma), _skip_const, cache)


def _skip_const(a):
    return not a.free


def iterated_total_derivative(e, alpha, spec, cancel=None):
    """``D_alpha e``, applying the directions in increasing index order."""
    out = e
    for sigma, k in enumerate(alpha):
        for _ in range(k):
            check_cancel(cancel)
            out = total_derivative(out, sigma, spec)
    return out


def divergence(current, spec):
    """``D_mu P^mu`` for a current given as a sequence of n expressions."""
    total = E.ZERO
    for mu, p in enumerate(current):
        if p.terms:
            total = total + total_derivative(p, mu, spec)
    return total


jet_order = E.jet_order
