"""Forms on jet space in the contact/horizontal basis.

Generators are contact forms ``theta^i_alpha`` and horizontal forms
``dx^sigma``.  A generator is a tuple: ``(0, name, alpha)`` for a contact
form, ``(1, sigma)`` for ``dx^sigma``.  Within a term generators are kept
sorted (contact before horizontal) with the permutation sign absorbed into
the coefficient.

Sign conventions: ``d_H theta^i_alpha = -theta^i_{alpha+l} ^ dx^l`` and
``d_V`` kills every generator; together ``d = d_H + d_V`` reproduces the
exterior derivative after substituting ``dy^i_alpha = theta^i_alpha +
y^i_{alpha+l} dx^l``.
"""

from __future__ import annotations

from . import bundle as B
from . import expr as E


def contact(name, alpha):
    return (0, name, tuple(alpha))


def dx(sigma):
    return (1, sigma)


def _gkey(g):
    if g[0] == 0:
        return (0, g[1], sum(g[2]), tuple(-a for a in g[2]))
    return g


def _sort_sign(gens):
    """Sorted generators and the permutation sign, or (None, 0) on repeats."""
    gens = list(gens)
    keys = [_gkey(g) for g in gens]
    if len(set(keys)) != len(keys):
        return None, 0
    sign = 1
    # insertion sort counting transpositions
    for i in range(1, len(gens)):
        j = i
        while j > 0 and keys[j - 1] > keys[j]:
            keys[j - 1], keys[j] = keys[j], keys[j - 1]
            gens[j - 1], gens[j] = gens[j], gens[j - 1]
            sign = -sign
            j -= 1
    return tuple(gens), sign


class Form:
    __slots__ = ("terms",)

    def __init__(self, terms=None):
        out = {}
        for gens, c in (terms or {}).items() if isinstance(terms, dict) else (terms or ()):
            c = E.as_expr(c)
            if not c.terms:
                continue
            sg, sign = _sort_sign(gens)
            if sg is None:
                continue
            prev = out.get(sg)
            val = c if sign > 0 else -c
            out[sg] = val if prev is None else prev + val
        self.terms = {g: c for g, c in out.items() if c.terms}

    @classmethod
    def function(cls, f):
        return cls({(): f})

    def is_zero(self):
        return not self.terms

    def __eq__(self, other):
        return isinstance(other, Form) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __add__(self, other):
        return Form(list(self.terms.items()) + list(other.terms.items()))

    def __neg__(self):
        return Form({g: -c for g, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, f):
        f = E.as_expr(f)
        return Form([(g, c * f) for g, c in self.terms.items()])

    def __mul__(self, f):
        return self.scale(f)

    __rmul__ = __mul__

    def wedge(self, other):
        return wedge(self, other)

    __xor__ = wedge

    def bidegrees(self):
        return {bidegree(g) for g in self.terms}

    def part(self, c=None, h=None):
        """Terms of contact degree ``c`` and horizontal degree ``h``."""
        return Form(
            [
                (g, x)
                for g, x in self.terms.items()
                if (c is None or bidegree(g)[0] == c) and (h is None or bidegree(g)[1] == h)
            ]
        )

    def coefficient(self, gens):
        sg, sign = _sort_sign(gens)
        if sg is None:
            return E.ZERO
        c = self.terms.get(sg, E.ZERO)
        return c if sign > 0 else -c

    def __repr__(self):
        return f"Form({to_text(self)})"


def bidegree(gens):
    c = sum(1 for g in gens if g[0] == 0)
    return c, len(gens) - c


def wedge(a, b):
    out = []
    for g1, c1 in a.terms.items():
        for g2, c2 in b.terms.items():
            out.append((g1 + g2, c1 * c2))
    return Form(out)


def volume(spec):
    """The top horizontal form ``ds = dx^1 ^ ... ^ dx^n``."""
    return Form({tuple(dx(s) for s in range(spec.n)): E.ONE})


def volume_contracted(spec, mu):
    """``ds_mu = d/dx^mu _| ds``."""
    mu = spec.index(mu)
    gens = tuple(dx(s) for s in range(spec.n) if s != mu)
    return Form({gens: E.ONE if mu % 2 == 0 else -E.ONE})


def density_form(L, spec):
    return volume(spec).scale(L)


def current_form(P, spec):
    """``P^mu ds_mu`` for a current given by its n components."""
    out = Form()
    for mu, p in enumerate(P):
        out = out + volume_contracted(spec, mu).scale(p)
    return out


def density_of(form, spec):
    """Coefficient of ``ds`` in a top horizontal form."""
    return form.coefficient(tuple(dx(s) for s in range(spec.n)))


def current_of(form, spec):
    """Components ``P^mu`` of a horizontal (n-1)-form ``P^mu ds_mu``."""
    out = []
    for mu in range(spec.n):
        gens = tuple(dx(s) for s in range(spec.n) if s != mu)
        c = form.coefficient(gens)
        out.append(c if mu % 2 == 0 else -c)
    return out


def _bank_vars(f, params):
    for v in f.free:
        if v.rank == E._JET or (params and v.rank == E._PARAM):
            yield v


def d_H(form, spec):
    """Horizontal differential, a degree (0,1) graded derivation."""
    out = []
    for gens, f in form.terms.items():
        for sigma in range(spec.n):
            df = B.total_derivative(f, sigma, spec)
            if df.terms:
                out.append(((dx(sigma),) + gens, df))
        for j, g in enumerate(gens):
            if g[0] != 0:
                continue
            sign = -1 if j % 2 else 1
            _, name, alpha = g
            for lam in range(spec.n):
                a2 = B.shift(alpha, lam)
                if sum(a2) > spec.cap:
                    from .errors import OrderOverflow

                    raise OrderOverflow(f"contact form order exceeds cap {spec.cap}")
                # d_H theta = -theta_{alpha+lam} ^ dx^lam
                new = gens[:j] + (contact(name, a2), dx(lam)) + gens[j + 1 :]
                out.append((new, f.scale(-sign)))
    return Form(out)


def d_V(form, spec, params=False):
    """Vertical differential over field jets (and parameter jets if
    ``params``), a degree (1,0) graded derivation."""
    out = []
    for gens, f in form.terms.items():
        for v in _bank_vars(f, params):
            out.append(((contact(v.name, v.alpha),) + gens, E.partial(f, v)))
    return Form(out)


def d(form, spec, params=False):
    return d_H(form, spec) + d_V(form, spec, params)


def horizontalize(form, k=0):
    """Keep exactly the terms of contact degree ``k``."""
    return form.part(c=k)


class VectorData:
    """Components of a vector field on jet space for contraction.

    ``xi`` holds the n horizontal components; ``vertical`` maps
    ``(name, alpha)`` to ``X^name_alpha``.
    """

    def __init__(self, xi, vertical):
        self.xi = tuple(E.as_expr(x) for x in xi)
        self.vertical = dict(vertical)

    def comp(self, name, alpha):
        try:
            return self.vertical[(name, tuple(alpha))]
        except KeyError:
            raise KeyError(f"vector data lacks component {name}{list(alpha)}") from None


def _contract_gen(X, g, spec):
    if g[0] == 1:
        return X.xi[g[1]]
    _, name, alpha = g
    kind = E.jet if name in spec.fields else E.param
    out = X.comp(name, alpha)
    for gamma, xg in enumerate(X.xi):
        if xg.terms:
            out = out - kind(name, B.shift(alpha, gamma)) * xg
    return out


def interior_product(X, form, spec):
    """Graded interior product ``X _| form``."""
    out = []
    for gens, f in form.terms.items():
        for j, g in enumerate(gens):
            c = _contract_gen(X, g, spec)
            if not c.terms:
                continue
            sign = -1 if j % 2 else 1
            out.append((gens[:j] + gens[j + 1 :], f * c if sign > 0 else -(f * c)))
    return Form(out)


def from_exterior(coeffs, spec):
    """Rewrite ``sum f * (dx or dy)`` into the contact basis.

    ``coeffs`` maps ``('x', sigma)`` or ``('y', name, alpha)`` to a
    coefficient; ``dy^i_alpha = theta^i_alpha + y^i_{alpha+l} dx^l``.
    """
    out = []
    for key, f in coeffs.items():
        if key[0] == "x":
            out.append(((dx(key[1]),), f))
        else:
            _, name, alpha = key
            out.append(((contact(name, alpha),), f))
            for lam in range(spec.n):
                out.append(((dx(lam),), f * E.jet(name, B.shift(alpha, lam))))
    return Form(out)


def gen_text(g, spec=None):
    if g[0] == 1:
        return "d" + (spec.coords[g[1]] if spec else f"x{g[1] + 1}")
    _, name, alpha = g
    if not any(alpha):
        return f"theta[{name}]"
    from .render import _suffix

    return f"theta[{name}]" + _suffix(alpha, spec.coords if spec else None)


def to_text(form, spec=None):
    from .render import to_text as expr_text

    if not form.terms:
        return "0"
    coords = spec.coords if spec else None
    parts = []
    for gens in sorted(form.terms, key=lambda gs: [_gkey(g) for g in gs]):
        c = expr_text(form.terms[gens], coords)
        w = "^".join(gen_text(g, spec) for g in gens)
        parts.append(f"({c})" + ("*" + w if w else ""))
    return " + ".join(parts)
