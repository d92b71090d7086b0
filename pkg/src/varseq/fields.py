"""Projectable and parameter-dependent vector fields.

A :class:`ParamVectorField` has base components ``xi^mu`` and fiber
components ``Xi^i``.  Components may be linear in parameter-function
derivatives ``eps^A_alpha``; a field with no parameters is an ordinary
projectable field.  Lift rules are such fields together with the data
needed to bracket their parameters: which parameters carry the base flow
and, for gauge parameters, optional structure constants.
"""

from __future__ import annotations

from fractions import Fraction

from . import bundle as B
from . import expr as E
from . import forms as F
from .errors import OrderOverflow, check_cancel


def _params_in(e):
    return {v.name for v in e.free if v.rank == E._PARAM}


def _is_param(v):
    return v.rank == E._PARAM


class ParamVectorField:
    """``xi^mu d_mu + Xi^i d_i`` with components linear in parameters.

    ``xi`` is a sequence of n expressions, ``Xi`` a mapping field -> expr
    (missing fields are zero).  ``flow`` names the parameters carrying the
    base flow (``xi^mu = eps^{flow[mu]}``) and ``structure`` maps
    ``(a, b, c)`` to ``f`` meaning ``[z1, z2]^a += f * z1^b * z2^c`` for
    gauge parameters.
    """

    def __init__(self, spec, xi=None, Xi=None, flow=(), structure=None, order=None, name=None):
        self.spec = spec
        xi = [E.ZERO] * spec.n if xi is None else [E.as_expr(c) for c in xi]
        if len(xi) != spec.n:
            raise ValueError(f"need {spec.n} base components, got {len(xi)}")
        self.xi = tuple(xi)
        Xi = dict(Xi or {})
        for f in Xi:
            if f not in spec.fields:
                raise KeyError(f"undeclared field {f}")
        self.Xi = {f: E.as_expr(Xi.get(f, E.ZERO)) for f in spec.fields}
        self.flow = tuple(flow)
        self.structure = dict(structure or {})
        self.name = name
        self.params = tuple(sorted(set().union(*(_params_in(c) for c in self.components()))))
        self.order = order if order is not None else max(
            [0] + [v.order for c in self.components() for v in c.free if _is_param(v)]
        )
        self._check()

    def components(self):
        return list(self.xi) + [self.Xi[f] for f in self.spec.fields]

    def _check(self):
        for c in self.xi:
            for v in c.free:
                if v.rank == E._JET:
                    raise ValueError("base components must not depend on jets (projectability)")
        for c in self.components():
            for v in c.free:
                if _is_param(v) and v.order > self.order:
                    raise ValueError(f"parameter derivative {v!r} exceeds lift order {self.order}")
        if self.flow and len(self.flow) != self.spec.n:
            raise ValueError("flow must name one parameter per base direction")

    @property
    def has_params(self):
        return bool(self.params)

    @property
    def is_vertical(self):
        return not any(c.terms for c in self.xi)

    def linearity_defects(self):
        """Components whose parameter degree is not exactly one."""
        bad = []
        if not self.params:
            return bad
        for label, c in self._labelled():
            if not c.terms:
                continue
            parts = E.bank_degrees(c, _is_param)
            if parts is None or set(parts) != {1}:
                bad.append(label)
        return bad

    def _labelled(self):
        out = [(f"xi^{self.spec.coords[m]}", c) for m, c in enumerate(self.xi)]
        out += [(f"Xi^{f}", self.Xi[f]) for f in self.spec.fields]
        return out

    def rename_params(self, mapping):
        """Rename parameter functions (``{'eps': 'eps1'}``)."""

        def ren(e):
            sub = {}
            for v in e.free:
                if _is_param(v) and v.name in mapping:
                    sub[v] = E.param(mapping[v.name], v.alpha)
            return E.substitute(e, sub)

        structure = {
            tuple(mapping.get(p, p) for p in k): c for k, c in self.structure.items()
        }
        return ParamVectorField(
            self.spec,
            [ren(c) for c in self.xi],
            {f: ren(c) for f, c in self.Xi.items()},
            tuple(mapping.get(p, p) for p in self.flow),
            structure,
            self.order,
            self.name,
        )

    def instantiate(self, values):
        """Substitute parameter functions by expressions: every ``eps^A_alpha``
        becomes ``D_alpha values[A]``."""
        spec = self.spec

        def inst(e):
            sub = {}
            for v in e.free:
                if _is_param(v) and v.name in values:
                    sub[v] = B.iterated_total_derivative(E.as_expr(values[v.name]), v.alpha, spec)
            return E.substitute(e, sub)

        return ParamVectorField(spec, [inst(c) for c in self.xi], {f: inst(c) for f, c in self.Xi.items()})

    def __add__(self, other):
        return ParamVectorField(
            self.spec,
            [a + b for a, b in zip(self.xi, other.xi)],
            {f: self.Xi[f] + other.Xi[f] for f in self.spec.fields},
        )

    def scale(self, c):
        return ParamVectorField(
            self.spec, [x * c for x in self.xi], {f: x * c for f, x in self.Xi.items()}
        )

    def __eq__(self, other):
        return (
            isinstance(other, ParamVectorField)
            and self.xi == other.xi
            and self.Xi == other.Xi
        )

    __hash__ = None

    def __repr__(self):
        from .render import to_text

        cs = self.spec.coords
        parts = [f"xi^{c}={to_text(x, cs)}" for c, x in zip(cs, self.xi) if x.terms]
        parts += [f"Xi^{f}={to_text(x, cs)}" for f, x in self.Xi.items() if x.terms]
        return "ParamVectorField(" + ", ".join(parts) + ")"


def ProjVectorField(spec, xi=None, Xi=None):
    """Ordinary projectable field: base components in x only and fiber
    components in (x, y) of order 0."""
    X = ParamVectorField(spec, xi, Xi)
    if X.params:
        raise ValueError("projectable field must not depend on parameters")
    for f, c in X.Xi.items():
        if any(v.rank == E._JET and v.order > 0 for v in c.free):
            raise ValueError(f"component Xi^{f} depends on derivatives")
    return X


def vertical_field(spec, components):
    """``Phi^i d_i`` for a mapping field -> expression."""
    return ParamVectorField(spec, None, components)


# -- prolongation --------------------------------------------------------


class ProlongedField:
    """Components ``Xi^i_alpha`` for ``|alpha| <= s`` of a prolonged field."""

    def __init__(self, spec, xi, comps, s, base=None):
        self.spec = spec
        self.xi = tuple(xi)
        self.comps = comps
        self.s = s
        self.base = base

    def comp(self, name, alpha):
        try:
            return self.comps[(name, tuple(alpha))]
        except KeyError:
            raise OrderOverflow(
                f"component {name}{list(alpha)} beyond prolongation order {self.s}"
            ) from None

    def vertical(self, name, alpha):
        """``Xi^i_alpha - y^i_{alpha+g} xi^g``."""
        out = self.comp(name, alpha)
        for g, x in enumerate(self.xi):
            if x.terms:
                out = out - E.jet(name, B.shift(alpha, g)) * x
        return out

    def __eq__(self, other):
        return (
            isinstance(other, ProlongedField)
            and self.xi == other.xi
            and self.comps == other.comps
        )

    __hash__ = None


def _parent(alpha):
    sigma = next(i for i, a in enumerate(alpha) if a > 0)
    return sigma, B.shift(alpha, sigma, -1)


def prolong(X, s, spec=None, cancel=None):
    """Prolong ``X`` to order ``s`` with
    ``Xi_{alpha+sigma} = D_sigma Xi_alpha - y_{alpha+mu} D_sigma xi^mu``."""
    spec = spec or X.spec
    if s > spec.cap:
        raise OrderOverflow(f"prolongation order {s} exceeds cap {spec.cap}")
    Dxi = [
        [B.total_derivative(x, sg, spec) if x.terms else E.ZERO for x in X.xi]
        for sg in range(spec.n)
    ]
    comps = {}
    for alpha in B.enumerate_multiindices(spec.n, s):
        for f in spec.fields:
            check_cancel(cancel)
            if not any(alpha):
                comps[(f, alpha)] = X.Xi[f]
                continue
            sigma, par = _parent(alpha)
            val = B.total_derivative(comps[(f, par)], sigma, spec)
            for mu, dx in enumerate(Dxi[sigma]):
                if dx.terms:
                    val = val - E.jet(f, B.shift(par, mu)) * dx
            comps[(f, alpha)] = val
    return ProlongedField(spec, X.xi, comps, s, X)


def split(P, spec=None):
    """Horizontal components ``xi^g`` and vertical components
    ``Xi^i_alpha - y^i_{alpha+g} xi^g`` of a prolonged field."""
    spec = spec or P.spec
    horizontal = list(P.xi)
    vertical = {(f, a): P.vertical(f, a) for (f, a) in P.comps}
    return horizontal, vertical


class LieDerivativeSection:
    """Components ``L^i = xi^mu y^i_mu - Xi^i``."""

    def __init__(self, spec, components):
        self.spec = spec
        self.components = dict(components)

    def __getitem__(self, f):
        return self.components[f]

    def items(self):
        return [(f, self.components[f]) for f in self.spec.fields]

    def is_zero(self):
        return all(not c.terms for c in self.components.values())

    def prolonged(self, alpha):
        """``D_alpha L^i`` for each field."""
        return {f: B.iterated_total_derivative(c, alpha, self.spec) for f, c in self.items()}


def lie_derivative_section(X, spec=None):
    spec = spec or X.spec
    out = {}
    for f in spec.fields:
        val = -X.Xi[f]
        for mu, x in enumerate(X.xi):
            if x.terms:
                val = val + x * E.jet(f, B.unit(spec.n, mu))
        out[f] = val
    return LieDerivativeSection(spec, out)


def lie_derivative_form(P, form, spec=None):
    """Cartan formula ``X _| d form + d(X _| form)``."""
    spec = spec or P.spec
    return F.interior_product(P, F.d(form, spec), spec) + F.d(F.interior_product(P, form, spec), spec)


def lie_derivative_density(L, P, spec=None):
    """Density of ``L_X (L ds)``: ``V_alpha dL/dy_alpha + D_mu(xi^mu L)``."""
    spec = spec or P.spec
    out = E.ZERO
    for v in L.free:
        if v.rank == E._JET:
            if sum(v.alpha) > P.s:
                raise OrderOverflow(f"prolongation order {P.s} below jet order of the density")
            out = out + P.vertical(v.field, v.alpha) * E.partial(L, v)
    for mu, x in enumerate(P.xi):
        if x.terms:
            out = out + B.total_derivative(x * L, mu, spec)
    return out


# -- brackets ------------------------------------------------------------


def _explicit_x(f, sigma, spec):
    """Derivative in x^sigma with jets frozen (parameters follow x)."""
    cname = spec.coords[sigma]

    def dvar(a):
        if a.rank == E._COORD:
            return E.ONE if a.name == cname else None
        if a.rank == E._PARAM:
            return E.param(a.name, B.shift(a.alpha, sigma))
        return None

    return E.derive(f, dvar)


def _apply(xi, comps, f, spec):
    """Act with the vector field ``xi^nu d_nu + comps[(i, a)] d^a_i`` on f."""
    out = E.ZERO
    for nu, x in enumerate(xi):
        if x.terms:
            out = out + x * _explicit_x(f, nu, spec)
    for v in f.free:
        if v.rank == E._JET:
            c = comps.get((v.field, v.alpha))
            if c is None:
                raise OrderOverflow(f"vector field lacks component on {v!r}")
            if c.terms:
                out = out + c * E.partial(f, v)
    return out


def bracket(X, Y, spec=None):
    """Lie bracket.  For two ParamVectorFields of order-0 fiber
    components the result is a ParamVectorField; for prolonged fields of
    equal order the result is a ProlongedField."""
    if isinstance(X, ProlongedField):
        spec = spec or X.spec
        if X.s != Y.s:
            raise ValueError("prolongation orders differ")
        xi = [_apply(X.xi, X.comps, b, spec) - _apply(Y.xi, Y.comps, a, spec) for a, b in zip(X.xi, Y.xi)]
        comps = {
            k: _apply(X.xi, X.comps, Y.comps[k], spec) - _apply(Y.xi, Y.comps, X.comps[k], spec)
            for k in X.comps
        }
        return ProlongedField(spec, xi, comps, X.s)
    spec = spec or X.spec
    cx = {(f, spec.zero()): X.Xi[f] for f in spec.fields}
    cy = {(f, spec.zero()): Y.Xi[f] for f in spec.fields}
    xi = [_apply(X.xi, cx, b, spec) - _apply(Y.xi, cy, a, spec) for a, b in zip(X.xi, Y.xi)]
    Xi = {f: _apply(X.xi, cx, Y.Xi[f], spec) - _apply(Y.xi, cy, X.Xi[f], spec) for f in spec.fields}
    return ParamVectorField(spec, xi, Xi)


def parameter_bracket(rule, bank1, bank2, spec=None):
    """Bracket of two parameter families of a lift rule.

    ``bank1``/``bank2`` map each parameter of ``rule`` to its renamed copy.
    Flow parameters bracket as base vector fields; the others as
    ``z1(flow2) ... : xi1(z2) - xi2(z1) + structure``.
    """
    spec = spec or rule.spec
    p1 = {p: E.param(bank1[p], spec.zero()) for p in rule.params}
    p2 = {p: E.param(bank2[p], spec.zero()) for p in rule.params}
    xi1 = [p1[a] for a in rule.flow] if rule.flow else [E.ZERO] * spec.n
    xi2 = [p2[a] for a in rule.flow] if rule.flow else [E.ZERO] * spec.n

    def along(xi, f):
        out = E.ZERO
        for nu, x in enumerate(xi):
            if x.terms:
                out = out + x * B.total_derivative(f, nu, spec)
        return out

    out = {}
    for a in rule.params:
        z = along(xi1, p2[a]) - along(xi2, p1[a])
        for (c, b, d), k in rule.structure.items():
            if c == a:
                z = z + p1[b] * p2[d] * E.as_expr(k)
        out[a] = z
    return out


class LiftReport:
    def __init__(self, linear, projectable, closure, residuals):
        self.linear = linear
        self.projectable = projectable
        self.closure = closure
        self.residuals = residuals

    @property
    def passed(self):
        return self.linear and self.projectable and self.closure

    def __repr__(self):
        return (
            f"LiftReport(linear={self.linear}, projectable={self.projectable}, "
            f"closure={self.closure})"
        )


def check_lift_properties(rule, spec=None):
    """Linearity, projection compatibility and bracket closure
    ``G([A, B]) - [G(A), G(B)] = 0`` on two renamed parameter banks."""
    spec = spec or rule.spec
    residuals = {}
    linear = not rule.linearity_defects()
    if not linear:
        residuals["linearity"] = rule.linearity_defects()

    projectable = True
    for mu, x in enumerate(rule.xi):
        want = E.param(rule.flow[mu], spec.zero()) if rule.flow else E.ZERO
        diff = x - want
        if diff.terms or any(v.rank == E._JET for v in x.free):
            projectable = False
            residuals[f"xi^{spec.coords[mu]}"] = diff
    for f, c in rule.Xi.items():
        if any(v.rank == E._JET and v.order > 0 for v in c.free):
            projectable = False
            residuals[f"Xi^{f} order"] = c

    bank1 = {p: p + "_1" for p in rule.params}
    bank2 = {p: p + "_2" for p in rule.params}
    G1 = rule.rename_params(bank1)
    G2 = rule.rename_params(bank2)
    lhs = rule.instantiate(parameter_bracket(rule, bank1, bank2, spec))
    rhs = bracket(G1, G2, spec)
    closure = True
    for label, a, b in zip(
        [f"xi^{c}" for c in spec.coords] + [f"Xi^{f}" for f in spec.fields],
        lhs.components(),
        rhs.components(),
    ):
        r = a - b
        if r.terms:
            closure = False
            residuals[f"bracket {label}"] = r
    return LiftReport(linear, projectable, closure, residuals)


# -- built-in lift generators -------------------------------------------


class TensorType:
    """Storage of a tensor-valued field: ``variance`` has one letter per
    slot (``l`` lower, ``u`` upper); ``components`` maps index tuples
    (0-based) to field names.  Symmetric storage keeps sorted indices."""

    def __init__(self, variance, components, symmetric=False):
        self.variance = variance
        self.components = {tuple(k): v for k, v in components.items()}
        self.symmetric = symmetric

    def field(self, idx):
        idx = tuple(sorted(idx)) if self.symmetric else tuple(idx)
        return self.components.get(idx)


def tensor_lift(spec, tensors, flow):
    """Natural lift of ``xi = eps^mu d_mu`` to tensor-valued fields:
    ``Xi_T = -sum_lower T_{..r..} d_mu eps^r + sum_upper T^{..r..} d_r eps^nu``."""
    flow = tuple(flow)
    n = spec.n

    def de(rho, mu):
        return E.param(flow[rho], B.unit(n, mu))

    Xi = {}
    for t in tensors:
        for idx, fname in t.components.items():
            val = E.ZERO
            for slot, kind in enumerate(t.variance):
                for rho in range(n):
                    j = list(idx)
                    j[slot] = rho
                    other = t.field(j)
                    if other is None:
                        continue
                    T = E.jet(other, spec.zero())
                    if kind == "l":
                        val = val - T * de(rho, idx[slot])
                    else:
                        val = val + T * de(idx[slot], rho)
            Xi[fname] = val
    xi = [E.param(p, spec.zero()) for p in flow]
    return ParamVectorField(spec, xi, Xi, flow=flow, order=1, name="tensor")


def abelian_gauge_lift(spec, potentials, gauge, charge=1, flow=None):
    """``delta A_mu = charge * d_mu eps`` on the connection components
    ``potentials`` (one field per base direction); with ``flow`` the
    covector transport ``-A_nu d_mu xi^nu`` is added."""
    n = spec.n
    if len(potentials) != n:
        raise ValueError("one potential component per base direction")
    charge = Fraction(charge)
    Xi = {}
    for mu, a in enumerate(potentials):
        val = E.param(gauge, B.unit(n, mu)).scale(charge)
        if flow:
            for nu in range(n):
                val = val - E.jet(potentials[nu], spec.zero()) * E.param(flow[nu], B.unit(n, mu))
        Xi[a] = val
    xi = [E.param(p, spec.zero()) for p in flow] if flow else None
    return ParamVectorField(
        spec, xi, Xi, flow=tuple(flow or ()), order=1, name="gauge"
    )
