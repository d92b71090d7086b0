"""Second variation, Jacobi operator, formal adjoints and kernel tests."""

from __future__ import annotations

from . import bundle as B
from . import expr as E
from . import fields as V
from . import forms as F
from . import variational as VA
from .errors import BackgroundNotCritical, check_cancel


class LinDiffOp:
    """``(J Phi)_i = sum_{j, beta} J^beta_{ij} D_beta Phi^j``."""

    def __init__(self, spec, rows, cols, coeffs):
        self.spec = spec
        self.rows = tuple(rows)
        self.cols = tuple(cols)
        self.coeffs = {k: c for k, c in coeffs.items() if c.terms}

    @property
    def order(self):
        return max((sum(b) for (_, _, b) in self.coeffs), default=0)

    def coeff(self, i, j, beta):
        return self.coeffs.get((i, j, tuple(beta)), E.ZERO)

    def apply(self, phi, cancel=None):
        """Act on column functions ``phi[j]`` (expressions)."""
        out = {i: E.ZERO for i in self.rows}
        cache = {}
        for (i, j, beta), c in sorted(self.coeffs.items(), key=_ckey):
            check_cancel(cancel)
            key = (j, beta)
            if key not in cache:
                cache[key] = B.iterated_total_derivative(E.as_expr(phi.get(j, E.ZERO)), beta, self.spec)
            if cache[key].terms:
                out[i] = out[i] + c * cache[key]
        return out

    def substitute(self, mapping):
        return LinDiffOp(
            self.spec, self.rows, self.cols, {k: E.substitute(c, mapping) for k, c in self.coeffs.items()}
        )

    def map(self, fn):
        return LinDiffOp(self.spec, self.rows, self.cols, {k: fn(c) for k, c in self.coeffs.items()})

    def __eq__(self, other):
        return (
            isinstance(other, LinDiffOp)
            and self.rows == other.rows
            and self.cols == other.cols
            and self.coeffs == other.coeffs
        )

    __hash__ = None

    def __sub__(self, other):
        keys = set(self.coeffs) | set(other.coeffs)
        return LinDiffOp(
            self.spec, self.rows, self.cols, {k: self.coeff(*k) - other.coeff(*k) for k in keys}
        )

    def items(self):
        return sorted(self.coeffs.items(), key=_ckey)

    def __repr__(self):
        return "LinDiffOp(" + ", ".join(f"{i},{j},{list(b)}: {c}" for (i, j, b), c in self.items()) + ")"


def _ckey(kv):
    (i, j, b), _ = kv
    return (str(i), str(j), sum(b), tuple(-x for x in b))


def linearize_el(lam, spec=None, cancel=None):
    """``J^beta_{ij} = dE_i / dy^j_beta``."""
    spec = spec or lam.spec
    src = VA.euler_lagrange(lam, spec, cancel)
    coeffs = {}
    for i, Ei in src.items():
        for v in Ei.free:
            if v.rank == E._JET:
                check_cancel(cancel)
                coeffs[(i, v.field, v.alpha)] = E.partial(Ei, v)
    return LinDiffOp(spec, spec.fields, spec.fields, coeffs)


def adjoint(J, spec=None, cancel=None):
    """Formal adjoint by the Leibniz formula
    ``J*^g_{ji} = sum_{b >= g} (-1)^|b| C(b, g) D_{b-g} J^b_{ij}``."""
    spec = spec or J.spec
    out = {}
    for (i, j, beta), c in J.items():
        sign = -1 if sum(beta) % 2 else 1
        for gamma in B.below(beta):
            check_cancel(cancel)
            d = B.iterated_total_derivative(c, B.sub(beta, gamma), spec, cancel)
            if not d.terms:
                continue
            k = (j, i, gamma)
            out[k] = out.get(k, E.ZERO) + d.scale(sign * B.binom(beta, gamma))
    return LinDiffOp(spec, J.cols, J.rows, out)


def _bank_names(cols, tag):
    return {c: f"{c}__{tag}" for c in cols}


def adjoint_certificate(J, Jstar, spec=None, cancel=None):
    """Integrate ``Phi . (J Psi)`` by parts over Psi; the adjoint part must
    equal ``Psi . (J* Phi)``.  Returns (IBPResult, mismatch per column)."""
    spec = spec or J.spec
    phi = _bank_names(J.rows, "phi")
    psi = _bank_names(J.cols, "psi")
    JPsi = J.apply({j: E.param(psi[j], spec.zero()) for j in J.cols}, cancel)
    density = E.ZERO
    for i, v in JPsi.items():
        density = density + E.param(phi[i], spec.zero()) * v
    res = VA.integrate_by_parts(density, set(psi.values()), spec, cancel)
    JsPhi = Jstar.apply({i: E.param(phi[i], spec.zero()) for i in J.rows}, cancel)
    mismatch = {j: res.adjoint.get(psi[j], E.ZERO) - JsPhi.get(j, E.ZERO) for j in J.cols}
    return res, mismatch


def is_self_adjoint(J, spec=None):
    return adjoint(J, spec) == J


# -- formal variations ---------------------------------------------------


def formal_variation(alpha, banks, spec, cancel=None):
    """``delta^k alpha = L_{X_1} ... L_{X_k} alpha`` for a density (Expr)
    or a Form; the last field acts first."""
    out = alpha
    for X in reversed(list(banks)):
        check_cancel(cancel)
        if isinstance(out, F.Form):
            order = max((E.jet_order(c) for c in out.terms.values()), default=0) + 1
            out = V.lie_derivative_form(V.prolong(X, order, spec, cancel), out, spec)
        else:
            out = E.as_expr(out)
            P = V.prolong(X, E.jet_order(out), spec, cancel)
            out = V.lie_derivative_density(out, P, spec)
    return out


def _components(X, spec):
    return {f: X.Xi[f] for f in spec.fields}


def _rename_apart(Phi, Psi):
    """Rename Psi's parameters that clash with Phi's."""
    clash = set(Phi.params) & set(Psi.params)
    if not clash:
        return Psi, {}
    mapping = {p: f"{p}__2" for p in clash}
    return Psi.rename_params(mapping), mapping


class SecondVariation:
    """``B = Phi . (J Psi) + source + D_mu G^mu``; ``source`` collects
    ``(delta_Psi Phi) . E`` and vanishes when Phi does not depend on jets."""

    def __init__(self, spec, B_, hpart, source, G, certificate):
        self.spec = spec
        self.B = B_
        self.hpart = hpart
        self.source = source
        self.G = G
        self.certificate = certificate

    def residual(self):
        return self.B - self.hpart - self.source - self.G.divergence()

    @property
    def certified(self):
        return self.certificate.is_divergence and self.residual().is_zero()


def _all_names(exprs, spec):
    names = set(spec.fields)
    for e in exprs:
        names |= {v.name for v in e.free if v.rank == E._PARAM}
    return names


def _contracted_momenta(L, Phi, spec, cancel=None):
    """``p^{mu,alpha}_i(L) D_alpha Phi^i`` for each mu."""
    _, p = VA.momenta_over(L, spec.fields, spec, cancel)
    mom = VA.Momenta(spec, None, p)
    return mom.contract(lambda f, a: B.iterated_total_derivative(Phi.Xi[f], a, spec, cancel))


def _certificate(Q, current, spec, cancel=None):
    """Constructive current plus the independent obstruction over every
    field and parameter name."""
    comps = list(current)
    obstruction = VA.variational_derivative(Q, _all_names([Q], spec), spec, cancel)
    return VA.DivergenceCertificate(spec, Q, obstruction, VA.BoundaryCurrent(spec, comps), E.ZERO)


def second_variation(lam, Phi, Psi, spec=None, cancel=None):
    """``B = delta_Psi delta_Phi lambda`` split as ``Phi . (J Psi) +
    (delta_Psi Phi) . E + D_mu G^mu`` with ``G = delta_Psi(p(lambda) . D Phi)``."""
    spec = spec or lam.spec
    for X in (Phi, Psi):
        if not X.is_vertical:
            raise ValueError("second variation needs vertical fields")
    L = VA._density(lam)
    Psi2, mapping = _rename_apart(Phi, Psi)
    B2 = formal_variation(L, [Psi2, Phi], spec, cancel)
    J = linearize_el(lam, spec, cancel)
    JPsi = J.apply(_components(Psi2, spec), cancel)
    src = VA.euler_lagrange(lam, spec, cancel)
    hpart = E.ZERO
    source = E.ZERO
    P2 = None
    for f in spec.fields:
        phi = Phi.Xi[f]
        if phi.terms and JPsi[f].terms:
            hpart = hpart + phi * JPsi[f]
        if phi.terms and any(v.rank == E._JET for v in phi.free):
            if P2 is None:
                P2 = V.prolong(Psi2, E.jet_order(phi), spec, cancel)
            source = source + V.lie_derivative_density(phi, P2, spec) * src[f]
    pPhi = _contracted_momenta(L, Phi, spec, cancel)
    G = [formal_variation(c, [Psi2], spec, cancel) if c.terms else E.ZERO for c in pPhi]
    cert = _certificate(B2 - hpart - source, G, spec, cancel)
    sv = SecondVariation(spec, B2, hpart, source, cert.current, cert)
    if mapping:
        sub = {}
        for expr_ in [B2, hpart, source] + list(cert.current):
            for v in expr_.free:
                if v.rank == E._PARAM:
                    for old, new in mapping.items():
                        if v.name == new:
                            sub[v] = E.param(old, v.alpha)
        sv = SecondVariation(
            spec,
            E.substitute(B2, sub),
            E.substitute(hpart, sub),
            E.substitute(source, sub),
            cert.current.substitute(sub),
            cert,
        )
        sv.renamed = mapping
    return sv


class ComparisonReport:
    def __init__(self, spec, a, b, certificate):
        self.spec = spec
        self.a = a
        self.b = b
        self.certificate = certificate

    @property
    def residual(self):
        return self.a - self.b

    @property
    def boundary(self):
        return self.certificate.current

    @property
    def passed(self):
        c = self.certificate
        return c.is_divergence and c.residual().is_zero()


def contract_source(X, source, spec):
    """``X _| E``: ``sum_i X^i E_i`` for a vertical field."""
    out = E.ZERO
    for f in spec.fields:
        if X.Xi[f].terms and source[f].terms:
            out = out + X.Xi[f] * source[f]
    return out


def vertical_part(X, spec=None):
    """Vertical part ``Xi^i - y^i_g xi^g = -L^i`` of a lift as a vertical field."""
    spec = spec or X.spec
    lie = V.lie_derivative_section(X, spec)
    return V.ParamVectorField(spec, None, {f: -c for f, c in lie.items()}, order=X.order)


def verify_comparison_theorem(lam, Phi, spec=None, cancel=None):
    """(a) ``Phi _| E(Phi _| E(lambda))`` with parameters held fixed against
    (b) ``delta^2 lambda`` along Phi.

    With ``omega = Phi _| E`` one has ``a - b = -D_mu(p(omega) . D Phi +
    delta_Phi(p(lambda) . D Phi))``; the report passes when that current
    re-expands ``a - b`` exactly and the variational derivative of
    ``a - b`` over all fields and parameters vanishes.
    """
    spec = spec or lam.spec
    if not Phi.is_vertical:
        Phi = vertical_part(Phi, spec)
    L = VA._density(lam)
    src = VA.euler_lagrange(lam, spec, cancel)
    omega1 = contract_source(Phi, src, spec)
    src2 = VA.SourceExpression(spec, VA.variational_derivative(omega1, spec.fields, spec, cancel))
    a = contract_source(Phi, src2, spec)
    b = formal_variation(L, [Phi, Phi], spec, cancel)
    p_omega = _contracted_momenta(omega1, Phi, spec, cancel)
    p_lam = _contracted_momenta(L, Phi, spec, cancel)
    R = []
    for x, y in zip(p_omega, p_lam):
        dy = formal_variation(y, [Phi], spec, cancel) if y.terms else E.ZERO
        R.append(-(x + dy))
    cert = _certificate(a - b, R, spec, cancel)
    return ComparisonReport(spec, a, b, cert)


# -- kernel tests --------------------------------------------------------


def section_jets(background, exprs, spec):
    """Substitution map sending every jet in ``exprs`` to the matching
    derivative of the symbolic background section."""
    sub = {}
    for e in exprs:
        for v in e.free:
            if v.rank == E._JET and v not in sub:
                sub[v] = B.iterated_total_derivative(E.as_expr(background[v.field]), v.alpha, spec)
    return sub


class KernelReport:
    def __init__(self, verdict, residual, numeric=None):
        self.verdict = verdict  # "exact", "numeric" or "nonzero"
        self.residual = residual
        self.numeric = numeric

    @property
    def in_kernel(self):
        return self.verdict in ("exact", "numeric")

    def __repr__(self):
        return f"KernelReport({self.verdict})"


def _sample_points(spec, k=7):
    import numpy as np

    rng = np.random.default_rng(12345)
    return [
        {E.Coord(c): float(x) for c, x in zip(spec.coords, row)}
        for row in rng.uniform(0.1, 1.3, size=(k, spec.n))
    ]


def _numeric_max(e, spec, functions=None):
    pts = _sample_points(spec)
    return max(abs(E.evaluate(e, p, functions)) for p in pts)


def kernel_test(lam, Phi, background, spec=None, tolerance=1e-8, functions=None, cancel=None):
    """Is the vertical field ``Phi`` a Jacobi field along ``background``?

    ``background`` maps fields to expressions in the base coordinates and
    ``Phi`` gives each field's component as such an expression.
    """
    spec = spec or lam.spec
    src = VA.euler_lagrange(lam, spec, cancel)
    sub = section_jets(background, src.components.values(), spec)
    for f, Ei in src.items():
        val = E.substitute(Ei, sub)
        if val.terms and _numeric_max(val, spec, functions) > tolerance:
            raise BackgroundNotCritical(f"E_{f} does not vanish on the background: {val}")
    J = linearize_el(lam, spec, cancel)
    sub = section_jets(background, J.coeffs.values(), spec)
    Jb = J.substitute(sub)
    phi = Phi.Xi if isinstance(Phi, V.ParamVectorField) else dict(Phi)
    res = Jb.apply({f: E.as_expr(phi.get(f, E.ZERO)) for f in spec.fields}, cancel)
    if all(not r.terms for r in res.values()):
        return KernelReport("exact", res, 0.0)
    if any(v.rank in (E._JET, E._PARAM) for r in res.values() for v in r.free):
        return KernelReport("nonzero", res, None)
    m = max(_numeric_max(r, spec, functions) for r in res.values())
    return KernelReport("numeric" if m <= tolerance else "nonzero", res, m)
