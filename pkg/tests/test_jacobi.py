import math

import pytest
from hypothesis import given, settings

from strategies import SPEC2, exprs
from varseq import bundle as B
from varseq import expr as E
from varseq import fields as V
from varseq import jacobi as J
from varseq import oracle as O
from varseq import variational as VA
from varseq.errors import BackgroundNotCritical

S1 = B.BundleSpec(("x",), ("u",), max_order=2)
MECH = B.BundleSpec(("t",), ("u",), max_order=1)
CORPUS = ["half_ux2", "half_uxx2", "wave", "mechanics", "maxwell", "proca", "metric2d", "sphere"]


def half_ux2(spec=S1):
    ux = spec.y("u", "x")
    return VA.Lagrangian(ux * ux / 2, spec)


def phi_field(spec=S1, name="phi"):
    return V.vertical_field(spec, {"u": E.param(name, spec.zero())})


def test_formal_variation_examples():
    lam = half_ux2()
    Phi = phi_field()
    ux = S1.y("u", "x")
    p1 = E.param("phi", (1,))
    assert J.formal_variation(lam.L, [Phi], S1) == p1 * ux
    assert J.formal_variation(lam.L, [Phi, Phi], S1) == p1 * p1
    assert J.formal_variation(lam.L, [V.vertical_field(S1, {"u": E.ZERO})], S1).is_zero()


def test_linearize_examples():
    Jop = J.linearize_el(half_ux2())
    assert Jop.coeffs == {("u", "u", (2,)): -E.ONE}
    Vs = E.DefinedSymbol("V", 1, free=True)
    u, ut = MECH.y("u"), MECH.y("u", "t")
    Jop = J.linearize_el(VA.Lagrangian(ut * ut / 2 - Vs(u), MECH))
    assert Jop.coeff("u", "u", (2,)) == -E.ONE
    assert Jop.coeff("u", "u", (0,)) == -Vs.apply([u], (2,))
    assert Jop.order == 2


def test_sphere_linearization_on_equator(corpus):
    pf = corpus("sphere")
    spec = pf.spec
    Jop = J.linearize_el(pf.lagrangian)
    Jb = Jop.substitute(J.section_jets(pf.background, Jop.coeffs.values(), spec))
    assert Jb.coeff("th", "th", (2,)) == -E.ONE
    assert Jb.coeff("th", "th", (0,)) == -E.ONE
    # numeric second difference of E along perturbed curves th = pi/2 + s w
    src = VA.euler_lagrange(pf.lagrangian)
    t0, s = 0.7, 1e-4
    w = "sin(3*t)/2 + t**2"
    vals = []
    for k in (1, -1):
        sec = O.AnalyticSection(spec, {"th": f"pi/2 + ({k * s})*({w})", "ph": "t"})
        vals.append(O.eval_on_section(src["th"], sec, (t0,)))
    fd = (vals[0] - vals[1]) / (2 * s)
    wsec = O.AnalyticSection(spec, {"th": w, "ph": "0"})
    exact = O.eval_on_section(Jb.apply({"th": spec.y("th"), "ph": E.ZERO})["th"], wsec, (t0,))
    assert abs(fd - exact) < 1e-6


def test_second_variation_example():
    lam = half_ux2()
    sv = J.second_variation(lam, phi_field(), phi_field())
    phi = [E.param("phi", (k,)) for k in range(3)]
    assert sv.B == phi[1] * phi[1]
    assert sv.hpart == -phi[0] * phi[2]
    assert sv.G[0] == phi[0] * phi[1]
    assert sv.certified


def test_second_variation_trivial_cases():
    x = S1.x("x")
    lam = VA.Lagrangian(E.sin(x) * S1.y("u"), S1)
    assert J.second_variation(lam, phi_field(), phi_field()).B.is_zero()
    zero = V.vertical_field(S1, {"u": E.ZERO})
    assert J.second_variation(half_ux2(), zero, phi_field()).B.is_zero()


@settings(max_examples=15)
@given(exprs(SPEC2, max_order=1, max_terms=3))
def test_second_variation_symmetric_mod_divergence(L):
    lam = VA.Lagrangian(L, SPEC2)
    Phi = V.vertical_field(SPEC2, {"u": E.param("a", SPEC2.zero()), "v": SPEC2.x("t") * E.param("b", SPEC2.zero())})
    Psi = V.vertical_field(SPEC2, {"u": E.param("c", SPEC2.zero()), "v": E.sin(SPEC2.x("x")) * E.param("c", SPEC2.zero())})
    s1 = J.second_variation(lam, Phi, Psi)
    s2 = J.second_variation(lam, Psi, Phi)
    assert s1.certified and s2.certified
    cert = VA.decide_divergence(s1.B - s2.B, {"a", "b", "c"} | set(SPEC2.fields), SPEC2)
    assert all(not c.terms for c in cert.obstruction.values())


def test_comparison_examples():
    rep = J.verify_comparison_theorem(half_ux2(), phi_field())
    phi = [E.param("phi", (k,)) for k in range(3)]
    assert rep.a == -phi[0] * phi[2]
    assert rep.b == phi[1] * phi[1]
    assert rep.boundary[0] == -phi[0] * phi[1]
    assert rep.passed
    ut = MECH.y("u", "t")
    rep = J.verify_comparison_theorem(VA.Lagrangian(ut * ut / 2, MECH), phi_field(MECH))
    assert rep.a == -phi[0] * phi[2]
    assert rep.boundary[0] == -phi[0] * phi[1]
    assert rep.passed
    rep = J.verify_comparison_theorem(VA.Lagrangian(S1.y("u", "x"), S1), phi_field())
    assert rep.a.is_zero() and rep.b.is_zero()


@pytest.mark.parametrize("name", CORPUS)
def test_comparison_on_corpus_lifts(corpus, name):
    pf = corpus(name)
    fields = list(pf.lifts.values()) + list(pf.variations.values())
    assert fields
    for X in fields:
        assert J.verify_comparison_theorem(pf.lagrangian, X).passed


@pytest.mark.parametrize("name", CORPUS)
def test_helmholtz_self_adjoint(corpus, name):
    Jop = J.linearize_el(corpus(name).lagrangian)
    assert J.is_self_adjoint(Jop)
    res, mismatch = J.adjoint_certificate(Jop, J.adjoint(Jop))
    assert res.certified and all(not m.terms for m in mismatch.values())


def test_adjoint_examples():
    a = E.sin(S1.x("x"))
    D = J.LinDiffOp(S1, ["u"], ["u"], {("u", "u", (1,)): E.ONE})
    assert J.adjoint(D).coeffs == {("u", "u", (1,)): -E.ONE}
    Dxx = J.LinDiffOp(S1, ["u"], ["u"], {("u", "u", (2,)): -E.ONE})
    assert J.is_self_adjoint(Dxx)
    aD = J.LinDiffOp(S1, ["u"], ["u"], {("u", "u", (1,)): a})
    assert J.adjoint(aD).coeffs == {("u", "u", (1,)): -a, ("u", "u", (0,)): -E.cos(S1.x("x"))}


@settings(max_examples=30)
@given(exprs(SPEC2, max_order=1, max_terms=2), exprs(SPEC2, max_order=1, max_terms=2))
def test_adjoint_is_involutive(c1, c2):
    op = J.LinDiffOp(SPEC2, SPEC2.fields, SPEC2.fields, {("u", "v", (1, 1)): c1, ("v", "u", (0, 2)): c2})
    star = J.adjoint(op)
    assert J.adjoint(star) - op == J.LinDiffOp(SPEC2, SPEC2.fields, SPEC2.fields, {})
    res, mismatch = J.adjoint_certificate(op, star)
    assert res.certified and all(not m.terms for m in mismatch.values())


def test_kernel_sphere(corpus):
    pf = corpus("sphere")
    assert J.kernel_test(pf.lagrangian, pf.variations["Jac"], pf.background).in_kernel
    rep = J.kernel_test(pf.lagrangian, pf.variations["Lin"], pf.background)
    assert not rep.in_kernel and rep.numeric > 0.1
    zero = V.vertical_field(pf.spec, {"th": E.ZERO, "ph": E.ZERO})
    assert J.kernel_test(pf.lagrangian, zero, pf.background).in_kernel


def test_kernel_rejects_noncritical_background(corpus):
    pf = corpus("sphere")
    bg = {"th": E.coord("t"), "ph": E.coord("t")}
    with pytest.raises(BackgroundNotCritical):
        J.kernel_test(pf.lagrangian, pf.variations["Jac"], bg)


def test_conjugate_point_on_sphere(corpus):
    pf = corpus("sphere")
    Jop = J.linearize_el(pf.lagrangian)
    sol = O.jacobi_ode_solve(Jop, pf.background, pf.spec, interval=(0.0, 4.0))
    assert abs(sol.conjugate_points[0] - math.pi) < 1e-6
