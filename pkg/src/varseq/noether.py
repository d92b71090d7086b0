"""Noether currents, Bianchi identities and the Hamiltonian current.

Sign conventions: the Noether current is ``eps = -L . p + xi L`` (minus W
for divergence symmetries), so ``D_mu eps^mu = L^i E_i``; the contracted
Lagrangian is ``omega = L^i E_i``.
"""

from __future__ import annotations

from . import bundle as B
from . import expr as E
from . import fields as V
from . import variational as VA
from .errors import BianchiNonzero, NotASymmetry


class SymmetryVerdict:
    """``kind`` is "exact", "divergence" or "broken"."""

    def __init__(self, kind, residual, current=None, obstruction=None, certificate=None):
        self.kind = kind
        self.residual = residual
        self.current = current
        self.obstruction = obstruction or {}
        self.certificate = certificate

    @property
    def is_symmetry(self):
        return self.kind in ("exact", "divergence")

    def __repr__(self):
        return f"SymmetryVerdict({self.kind})"


def lie_of_lagrangian(lam, X, spec=None, cancel=None):
    spec = spec or lam.spec
    L = VA._density(lam)
    return V.lie_derivative_density(L, V.prolong(X, E.jet_order(L), spec, cancel), spec)


def check_symmetry(lam, X, spec=None, cancel=None):
    spec = spec or lam.spec
    res = lie_of_lagrangian(lam, X, spec, cancel)
    if res.is_zero():
        return SymmetryVerdict("exact", res)
    bank = set(spec.fields) | set(X.params)
    cert = VA.decide_divergence(res, bank, spec, cancel)
    if cert.is_divergence:
        return SymmetryVerdict("divergence", res, cert.current, cert.obstruction, cert)
    return SymmetryVerdict("broken", res, None, cert.obstruction, cert)


class NoetherCurrent:
    def __init__(self, spec, components, field, verdict, omega):
        self.spec = spec
        self.current = VA.BoundaryCurrent(spec, components)
        self.field = field
        self.verdict = verdict
        self.omega = omega  # L^i E_i

    @property
    def components(self):
        return self.current.components

    def residual(self):
        """``D_mu eps^mu - L^i E_i``; the strong Noether identity."""
        return self.current.divergence() - self.omega

    @property
    def certified(self):
        return self.residual().is_zero()


def noether_current(lam, X, spec=None, cancel=None):
    spec = spec or lam.spec
    verdict = check_symmetry(lam, X, spec, cancel)
    if not verdict.is_symmetry:
        raise NotASymmetry(f"not a symmetry: L_X lambda = {verdict.residual}")
    fv = VA.first_variation(lam, X, spec, cancel)
    P = list(fv.boundary)
    if verdict.kind == "divergence":
        P = [p - w for p, w in zip(P, verdict.current)]
    return NoetherCurrent(spec, P, X, verdict, -fv.contracted)


def omega_lagrangian(lam, X, spec=None, cancel=None):
    """``omega = L^i E_i(lambda)``, linear in the parameter bank of X."""
    spec = spec or lam.spec
    lie = V.lie_derivative_section(X, spec)
    src = VA.euler_lagrange(lam, spec, cancel)
    out = E.ZERO
    for f, c in lie.items():
        if c.terms and src[f].terms:
            out = out + c * src[f]
    return out


class BianchiReport:
    """``omega = sum_A beta_A eps^A + D_mu M^mu``."""

    def __init__(self, spec, omega, beta, M, params):
        self.spec = spec
        self.omega = omega
        self.beta = beta
        self.M = M
        self.params = tuple(params)

    @property
    def verdicts(self):
        return {a: not b.terms for a, b in self.beta.items()}

    @property
    def vanishing(self):
        return all(self.verdicts.values())

    def reexpand(self):
        total = self.M.divergence()
        for a, b in self.beta.items():
            if b.terms:
                total = total + b * E.param(a, self.spec.zero())
        return total

    def residual(self):
        return self.omega - self.reexpand()

    @property
    def certified(self):
        return self.residual().is_zero()


def bianchi_decompose(lam, X, spec=None, cancel=None):
    spec = spec or lam.spec
    omega = omega_lagrangian(lam, X, spec, cancel)
    if not X.params:
        return BianchiReport(spec, omega, {}, VA.BoundaryCurrent(spec, [E.ZERO] * spec.n), ())
    res = VA.integrate_by_parts(omega, set(X.params), spec, cancel)
    beta = {a: res.adjoint.get(a, E.ZERO) for a in X.params}
    return BianchiReport(spec, omega, beta, res.boundary, X.params)


class HamiltonianCurrent:
    """``H^mu = -p^{mu,alpha}_i(omega) D_alpha L^i`` with the certificate
    ``D_mu H^mu = L_{X_V} omega + L^i E_i(omega)``."""

    def __init__(self, spec, components, lie_v, source_term, bianchi):
        self.spec = spec
        self.current = VA.BoundaryCurrent(spec, components)
        self.lie_v = lie_v
        self.source_term = source_term
        self.bianchi = bianchi

    @property
    def components(self):
        return self.current.components

    def divergence(self):
        return self.current.divergence()

    def residual(self):
        return self.divergence() - self.lie_v - self.source_term

    @property
    def certified(self):
        return self.residual().is_zero()

    @property
    def conserved(self):
        return self.divergence().is_zero()


def hamiltonian_current(lam, X, spec=None, require_kernel=True, cancel=None):
    """Current built from the momenta of ``omega`` over the field bank
    (parameters held fixed), contracted with the prolonged L."""
    spec = spec or lam.spec
    report = bianchi_decompose(lam, X, spec, cancel)
    if require_kernel and not report.vanishing:
        from .render import to_text

        bad = ", ".join(f"beta[{a}] = {to_text(b, spec.coords)}" for a, b in report.beta.items() if b.terms)
        raise BianchiNonzero(f"Bianchi expressions do not vanish: {bad}")
    omega = report.omega
    lie = V.lie_derivative_section(X, spec)
    source, p = VA.momenta_over(omega, spec.fields, spec, cancel)
    H = [E.ZERO] * spec.n
    cache = {}
    for (f, alpha), comps in p.items():
        key = (f, alpha)
        if key not in cache:
            cache[key] = B.iterated_total_derivative(lie[f], alpha, spec, cancel)
        d = cache[key]
        if not d.terms:
            continue
        for mu, c in enumerate(comps):
            if c.terms:
                H[mu] = H[mu] - c * d
    Xv = V.ParamVectorField(spec, None, {f: -c for f, c in lie.items()}, order=X.order)
    s = E.jet_order(omega)
    lie_v = V.lie_derivative_density(omega, V.prolong(Xv, s, spec, cancel), spec)
    src_term = E.ZERO
    for f, c in lie.items():
        if c.terms and source[f].terms:
            src_term = src_term + c * source[f]
    return HamiltonianCurrent(spec, H, lie_v, src_term, report)


class InvarianceReport:
    """``horizontal + D_mu H^mu + bianchi_term``, where ``bianchi_term =
    -L^i E_i(omega)`` is the contracted Bianchi morphism.  The residual
    equals ``L_X omega`` and vanishes for Lagrangians in the kernel."""

    def __init__(self, horizontal, hamiltonian, bianchi_term):
        self.horizontal = horizontal
        self.hamiltonian = hamiltonian
        self.bianchi_term = bianchi_term
        self.residual = horizontal + hamiltonian.divergence() + bianchi_term

    @property
    def passed(self):
        return self.residual.is_zero()


def verify_horizontal_invariance(lam, X, spec=None, require_kernel=True, cancel=None):
    """Check ``L_{X_H} omega = -D_mu H^mu - beta-term`` with ``L_{X_H}``
    acting on the density as ``D_g(xi^g omega)``."""
    spec = spec or lam.spec
    ham = hamiltonian_current(lam, X, spec, require_kernel, cancel)
    omega = ham.bianchi.omega
    horizontal = E.ZERO
    for g, x in enumerate(X.xi):
        if x.terms:
            horizontal = horizontal + B.total_derivative(x * omega, g, spec)
    return InvarianceReport(horizontal, ham, -ham.source_term)
