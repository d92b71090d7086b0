"""First variation: Euler-Lagrange expressions, momenta, integration by
parts with exact boundary certificates."""

from __future__ import annotations

from fractions import Fraction

from . import bundle as B
from . import expr as E
from . import fields as V
from .errors import NotLinear, check_cancel


class Lagrangian:
    """Density ``L`` of the top form ``L ds``."""

    def __init__(self, L, spec):
        self.L = E.as_expr(L)
        self.spec = spec
        for v in self.L.free:
            if v.rank == E._PARAM:
                raise ValueError(f"Lagrangian depends on parameter {v!r}")
            if v.rank == E._JET and v.field not in spec.fields:
                raise ValueError(f"Lagrangian mentions undeclared field {v.field}")
        if self.order > spec.max_order:
            from .errors import OrderOverflow

            raise OrderOverflow(f"Lagrangian order {self.order} exceeds declared order {spec.max_order}")

    @property
    def order(self):
        return E.jet_order(self.L)

    def __repr__(self):
        return f"Lagrangian({self.L})"


def _density(lam):
    return lam.L if isinstance(lam, Lagrangian) else E.as_expr(lam)


class SourceExpression:
    """Components ``E_i`` of the source form ``E_i theta^i ^ ds``."""

    def __init__(self, spec, components):
        self.spec = spec
        self.components = dict(components)

    def __getitem__(self, f):
        return self.components[f]

    def items(self):
        return list(self.components.items())

    def is_zero(self):
        return all(not c.terms for c in self.components.values())

    def __eq__(self, other):
        return isinstance(other, SourceExpression) and self.components == other.components

    __hash__ = None

    def __repr__(self):
        return "SourceExpression(" + ", ".join(f"{k}: {v}" for k, v in self.items()) + ")"


class BoundaryCurrent:
    """Horizontal (n-1)-form ``P^mu ds_mu`` by its components."""

    def __init__(self, spec, components):
        self.spec = spec
        self.components = [E.as_expr(c) for c in components]
        if len(self.components) != spec.n:
            raise ValueError("current needs n components")

    def __getitem__(self, mu):
        return self.components[self.spec.index(mu)]

    def __iter__(self):
        return iter(self.components)

    def divergence(self):
        return B.divergence(self.components, self.spec)

    def is_zero(self):
        return all(not c.terms for c in self.components)

    def __add__(self, other):
        return BoundaryCurrent(self.spec, [a + b for a, b in zip(self, other)])

    def __sub__(self, other):
        return BoundaryCurrent(self.spec, [a - b for a, b in zip(self, other)])

    def __neg__(self):
        return BoundaryCurrent(self.spec, [-a for a in self])

    def substitute(self, mapping):
        return BoundaryCurrent(self.spec, [E.substitute(c, mapping) for c in self])

    def __eq__(self, other):
        return isinstance(other, BoundaryCurrent) and self.components == other.components

    __hash__ = None

    def __repr__(self):
        return "BoundaryCurrent(" + ", ".join(map(str, self.components)) + ")"


# -- banks ---------------------------------------------------------------


def bank_var(spec, name, alpha):
    """Jet of a field or derivative of a parameter, by name."""
    if name in spec.fields:
        return E.jet(name, alpha)
    return E.param(name, alpha)


def _in_bank(bank):
    bank = frozenset(bank)

    def pred(v):
        return v.rank in (E._JET, E._PARAM) and v.name in bank

    return pred


def field_bank(spec):
    return frozenset(spec.fields)


def variational_derivative(L, bank, spec, cancel=None):
    """``sum_alpha (-1)^|alpha| D_alpha(dL/dz_alpha)`` for each name in bank."""
    L = _density(L)
    pred = _in_bank(bank)
    groups = {}
    for v in L.free:
        if pred(v):
            groups.setdefault(v.name, []).append(v)
    out = {}
    for name in sorted(bank, key=str):
        total = E.ZERO
        for v in sorted(groups.get(name, ()), key=lambda a: a.key):
            check_cancel(cancel)
            term = B.iterated_total_derivative(E.partial(L, v), v.alpha, spec, cancel)
            total = total - term if sum(v.alpha) % 2 else total + term
        out[name] = total
    return out


def euler_lagrange(lam, spec=None, cancel=None):
    """``E_i = sum_alpha (-1)^|alpha| D_alpha (dL/dy^i_alpha)``."""
    spec = spec or lam.spec
    comps = variational_derivative(lam, spec.fields, spec, cancel)
    return SourceExpression(spec, {f: comps[f] for f in spec.fields})


# -- integration by parts ------------------------------------------------


class IBPResult:
    """``density = sum_A adjoint_A z^A + D_mu boundary^mu`` for a bank of
    variables ``z``."""

    def __init__(self, spec, density, bank, adjoint, boundary):
        self.spec = spec
        self.density = density
        self.bank = frozenset(bank)
        self.adjoint = adjoint
        self.boundary = boundary

    def reexpand(self):
        total = self.boundary.divergence()
        for name, c in self.adjoint.items():
            if c.terms:
                total = total + c * bank_var(self.spec, name, self.spec.zero())
        return total

    def residual(self):
        return self.density - self.reexpand()

    @property
    def certified(self):
        return self.residual().is_zero()

    @property
    def adjoint_zero(self):
        return all(not c.terms for c in self.adjoint.values())


def linear_coefficients(density, bank, spec):
    """Map ``(name, alpha) -> coefficient`` of a density of degree one in
    the bank.  Raises NotLinear otherwise."""
    density = E.as_expr(density)
    pred = _in_bank(bank)
    parts = E.bank_degrees(density, pred)
    if parts is None:
        raise NotLinear("bank variables occur inside a non-polynomial function")
    bad = sorted(k for k, v in parts.items() if k != 1 and v.terms)
    if bad:
        raise NotLinear(f"density has terms of degree {bad} in the bank (need exactly 1)")
    coeff = {}
    for v in density.free:
        if pred(v):
            coeff[(v.name, v.alpha)] = E.partial(density, v)
    return coeff


def _peel_key(item):
    (name, alpha), _ = item
    return (sum(alpha), alpha)


def integrate_by_parts(density, bank, spec, cancel=None):
    """Move every derivative off the bank variables.

    Peeling order: highest order first, lexicographically largest
    multi-index first; a mixed index loses its smallest direction first.
    """
    density = E.as_expr(density)
    coeff = linear_coefficients(density, bank, spec)
    boundary = [E.ZERO] * spec.n
    names = sorted({k[0] for k in coeff} | set(bank), key=str)
    adjoint = {}
    for name in names:
        mine = {a: c for (nm, a), c in coeff.items() if nm == name and c.terms}
        while True:
            check_cancel(cancel)
            pending = [a for a, c in mine.items() if any(a) and c.terms]
            if not pending:
                break
            alpha = max(pending, key=lambda a: (sum(a), a))
            c = mine.pop(alpha)
            sigma = next(i for i, x in enumerate(alpha) if x > 0)
            lower = B.shift(alpha, sigma, -1)
            boundary[sigma] = boundary[sigma] + c * bank_var(spec, name, lower)
            mine[lower] = mine.get(lower, E.ZERO) - B.total_derivative(c, sigma, spec)
        adjoint[name] = mine.get(spec.zero(), E.ZERO)
    return IBPResult(spec, density, bank, adjoint, BoundaryCurrent(spec, boundary))


# -- divergence decision -------------------------------------------------


class DivergenceCertificate:
    """Outcome of deciding whether ``Q = D_mu R^mu``.

    ``obstruction`` is the variational derivative of Q over the bank (zero
    iff Q is a divergence); ``current`` is R when reconstructed, and
    ``remainder`` any part that could not be handled constructively.
    """

    def __init__(self, spec, expr, obstruction, current, remainder):
        self.spec = spec
        self.expr = expr
        self.obstruction = obstruction
        self.current = current
        self.remainder = remainder

    @property
    def is_divergence(self):
        return (
            all(not c.terms for c in self.obstruction.values())
            and self.current is not None
            and not self.remainder.terms
        )

    @property
    def decided(self):
        return self.current is not None and not self.remainder.terms

    def residual(self):
        if self.current is None:
            return None
        return self.expr - self.current.divergence() - self.remainder


def _integrate_x(Q, spec):
    """Antiderivative in the first coordinate of a polynomial in x^1 with
    coefficients free of x^1, or None."""
    x0 = E.Coord(spec.coords[0])
    acc = E.ZERO
    for m, c in Q.terms.items():
        k = 0
        rest = []
        for a, x in m:
            if a == x0:
                k = x
            elif a.free and x0 in a.free:
                return None
            else:
                rest.append((a, x))
        if not isinstance(k, int) or k < 0:
            return None
        if any(a.free for a, _ in rest if a.rank != E._COORD):
            return None
        t = E.Expr({tuple(rest): 1}) if rest else E.ONE
        acc = acc + t * E.coord(spec.coords[0]) ** (k + 1) * Fraction(c, k + 1)
    return acc


def decide_divergence(Q, bank, spec, cancel=None):
    """Decide constructively whether ``Q`` is a total divergence.

    Q is graded by homogeneous degree k in the bank; for k >= 1,
    ``k Q_k = z . E(Q_k) + D B_k`` with ``B_k`` from integrating
    ``sum dQ_k/dz_alpha w_alpha`` by parts over a fresh copy ``w``.
    """
    Q = E.as_expr(Q)
    bank = frozenset(bank)
    pred = _in_bank(bank)
    obstruction = variational_derivative(Q, bank, spec, cancel)
    if any(c.terms for c in obstruction.values()):
        return DivergenceCertificate(spec, Q, obstruction, None, E.ZERO)
    parts = E.bank_degrees(Q, pred)
    if parts is None:
        return DivergenceCertificate(spec, Q, obstruction, None, Q)
    current = [E.ZERO] * spec.n
    remainder = E.ZERO
    fresh = {name: f"{name}__w" for name in bank}
    for k, Qk in sorted(parts.items()):
        if not Qk.terms:
            continue
        if k == 0:
            rest = [v for v in Qk.free if v.rank in (E._JET, E._PARAM)]
            if rest:
                sub = decide_divergence(Qk, {v.name for v in rest}, spec, cancel)
                if sub.is_divergence:
                    current = [a + b for a, b in zip(current, sub.current)]
                    continue
                remainder = remainder + Qk
                continue
            R = _integrate_x(Qk, spec)
            if R is None:
                remainder = remainder + Qk
            else:
                current[0] = current[0] + R
            continue
        lin = E.ZERO
        for v in Qk.free:
            if pred(v):
                lin = lin + E.partial(Qk, v) * E.param(fresh[v.name], v.alpha)
        res = integrate_by_parts(lin, set(fresh.values()), spec, cancel)
        back = {}
        for b in res.boundary:
            for v in b.free:
                if v.rank == E._PARAM and v.name in fresh.values():
                    orig = next(n for n, f in fresh.items() if f == v.name)
                    back[v] = bank_var(spec, orig, v.alpha)
        for mu, b in enumerate(res.boundary):
            current[mu] = current[mu] + E.substitute(b, back).scale(Fraction(1, k))
    return DivergenceCertificate(spec, Q, obstruction, BoundaryCurrent(spec, current), remainder)


# -- momenta and first variation -----------------------------------------


class Momenta:
    """``p^{mu,alpha}_i`` with ``sum_alpha dL/dy^i_alpha w_alpha =
    E_i w + D_mu(p^{mu,alpha}_i w_alpha)`` for arbitrary ``w``."""

    def __init__(self, spec, source, p):
        self.spec = spec
        self.source = source
        self.p = p  # (field, alpha) -> list of n exprs

    def __getitem__(self, key):
        f, alpha = key
        return self.p.get((f, tuple(alpha)), [E.ZERO] * self.spec.n)

    def items(self):
        return sorted(self.p.items(), key=lambda kv: (kv[0][0], sum(kv[0][1]), tuple(-a for a in kv[0][1])))

    def is_zero(self):
        return all(not c.terms for v in self.p.values() for c in v)

    def contract(self, values):
        """``sum p^{mu,alpha}_i values[(i, alpha)]`` for each mu."""
        out = [E.ZERO] * self.spec.n
        for (f, alpha), comps in self.p.items():
            w = values(f, alpha)
            if not w.terms:
                continue
            for mu, c in enumerate(comps):
                if c.terms:
                    out[mu] = out[mu] + c * w
        return out


def momenta_over(L, bank, spec, cancel=None):
    """Momenta and variational derivative of ``L`` over a bank of names."""
    L = _density(L)
    pred = _in_bank(bank)
    fresh = {name: f"{name}__w" for name in bank}
    lin = E.ZERO
    for v in L.free:
        if pred(v):
            lin = lin + E.partial(L, v) * E.param(fresh[v.name], v.alpha)
    res = integrate_by_parts(lin, set(fresh.values()), spec, cancel)
    p = {}
    inverse = {f: n for n, f in fresh.items()}
    for mu, b in enumerate(res.boundary):
        for (wname, alpha), c in linear_coefficients(b, set(fresh.values()), spec).items():
            key = (inverse[wname], alpha)
            p.setdefault(key, [E.ZERO] * spec.n)
            p[key][mu] = p[key][mu] + c
    source = {n: res.adjoint.get(fresh[n], E.ZERO) for n in bank}
    return source, p


def momenta(lam, spec=None, cancel=None):
    spec = spec or lam.spec
    source, p = momenta_over(lam, spec.fields, spec, cancel)
    return Momenta(spec, SourceExpression(spec, {f: source[f] for f in spec.fields}), p)


class FirstVariation:
    """``L_X lambda = (contracted + D_mu boundary^mu) ds`` with
    ``contracted = -L^i E_i``."""

    def __init__(self, spec, lie, contracted, boundary):
        self.spec = spec
        self.lie = lie
        self.contracted = contracted
        self.boundary = boundary

    def residual(self):
        return self.lie - self.contracted - self.boundary.divergence()

    @property
    def certified(self):
        return self.residual().is_zero()


def first_variation(lam, X, spec=None, cancel=None):
    """Split the Lie derivative of ``lambda`` along the prolongation of X:
    ``contracted = -L^i E_i`` and ``P^mu = -p^{mu,alpha}_i D_alpha L^i + xi^mu L``."""
    spec = spec or lam.spec
    L = _density(lam)
    if isinstance(X, V.ProlongedField):
        X = X.base
    lie_sec = V.lie_derivative_section(X, spec)
    mom = momenta(lam, spec, cancel)
    contracted = E.ZERO
    for f, c in lie_sec.items():
        if c.terms:
            contracted = contracted - c * mom.source[f]
    cache = {}

    def dlie(f, alpha):
        key = (f, alpha)
        if key not in cache:
            cache[key] = B.iterated_total_derivative(lie_sec[f], alpha, spec, cancel)
        return cache[key]

    P = [-c for c in mom.contract(dlie)]
    P = [p + x * L if x.terms else p for p, x in zip(P, X.xi)]
    s = max(E.jet_order(L), 0)
    lie = V.lie_derivative_density(L, V.prolong(X, s, spec, cancel), spec)
    return FirstVariation(spec, lie, contracted, BoundaryCurrent(spec, P))
