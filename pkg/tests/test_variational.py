import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strategies import SPEC2, currents, exprs, polynomials
from varseq import bundle as B
from varseq import expr as E
from varseq import fields as V
from varseq import oracle as O
from varseq import variational as VA
from varseq.errors import NotLinear, OrderOverflow

S1 = B.BundleSpec(("x",), ("u",), max_order=2)
WAVE = B.BundleSpec(("t", "x"), ("u",), max_order=1)


def test_wave_equation():
    ut, ux = WAVE.y("u", "t"), WAVE.y("u", "x")
    src = VA.euler_lagrange(VA.Lagrangian(ut * ut / 2 - ux * ux / 2, WAVE))
    assert src["u"] == -WAVE.y("u", "tt") + WAVE.y("u", "xx")


def test_beam_equation():
    uxx = S1.y("u", "xx")
    assert VA.euler_lagrange(VA.Lagrangian(uxx * uxx / 2, S1))["u"] == S1.y("u", (4,))


def test_order_overflow():
    with pytest.raises(OrderOverflow):
        VA.Lagrangian(S1.y("u", (3,)), S1)


def test_maxwell_matches_sympy_and_grid(corpus):
    pf = corpus("maxwell")
    spec = pf.spec
    src = VA.euler_lagrange(pf.lagrangian)
    ref = O.sympy_euler_lagrange(pf.lagrangian.L, spec)
    for f in spec.fields:
        assert O.sympy_equal(O.to_sympy(src[f], spec), ref[f])
    # E^t = -d_x F_{xt}, E^x = d_t F_{xt} with F_{xt} = Ax_t - At_x
    F = spec.y("Ax", "t") - spec.y("At", "x")
    assert (src["At"] - B.total_derivative(F, 1, spec)).is_zero()
    assert (src["Ax"] + B.total_derivative(F, 0, spec)).is_zero()
    section = O.AnalyticSection(spec, {"At": "sin(t + 2*x) + x**2/3", "Ax": "cos(t - x) * exp(t/4)"})
    rep = O.fd_gradient_check(pf.lagrangian, section, spec, box=[(0, 2), (0, 2)], nodes=40)
    assert rep.max_error < 1e-5


def test_momenta_first_order():
    ux = S1.y("u", "x")
    m = VA.momenta(VA.Lagrangian(ux * ux / 2, S1))
    assert m[("u", (0,))] == [ux]
    assert m.source["u"] == -S1.y("u", "xx")


def test_momenta_second_order():
    uxx = S1.y("u", "xx")
    m = VA.momenta(VA.Lagrangian(uxx * uxx / 2, S1))
    assert m[("u", (0,))] == [-S1.y("u", (3,))]
    assert m[("u", (1,))] == [uxx]


def test_momenta_of_jet_free_density():
    x = S1.x("x")
    assert VA.momenta(VA.Lagrangian(E.sin(x), S1)).is_zero()


@settings(max_examples=40)
@given(exprs(SPEC2, max_order=2, max_terms=3))
def test_momenta_identity(L):
    # sum dL/dy_alpha w_alpha == E w + D_mu(p w) for a generic w
    spec = SPEC2
    source, p = VA.momenta_over(L, spec.fields, spec)
    w = {f: E.sin(spec.x("t") * spec.y(f)) + spec.x("x") for f in spec.fields}
    lhs = E.ZERO
    for v in L.free:
        if v.rank == E._JET:
            lhs = lhs + E.partial(L, v) * B.iterated_total_derivative(w[v.name], v.alpha, spec)
    rhs = E.ZERO
    for f in spec.fields:
        rhs = rhs + source[f] * w[f]
    cur = [E.ZERO] * spec.n
    for (f, alpha), comps in p.items():
        d = B.iterated_total_derivative(w[f], alpha, spec)
        cur = [a + c * d for a, c in zip(cur, comps)]
    rhs = rhs + B.divergence(cur, spec)
    assert (lhs - rhs).is_zero()


def test_ibp_one_step():
    phi1 = E.param("phi", (1,))
    res = VA.integrate_by_parts(phi1 * S1.y("u", "x"), {"phi"}, S1)
    assert res.adjoint["phi"] == -S1.y("u", "xx")
    assert res.boundary.components == [E.param("phi", (0,)) * S1.y("u", "x")]
    assert res.certified


def test_ibp_two_steps():
    spec = B.BundleSpec(("x",), ("w",), max_order=2)
    res = VA.integrate_by_parts(E.param("phi", (2,)) * spec.y("w"), {"phi"}, spec)
    phi, phi1 = E.param("phi", (0,)), E.param("phi", (1,))
    assert res.adjoint["phi"] == spec.y("w", "xx")
    assert (res.boundary[0] - (phi1 * spec.y("w") - phi * spec.y("w", "x"))).is_zero()
    assert res.certified


def test_ibp_divergence_of_current():
    V1, V2 = WAVE.y("u", "t") * WAVE.y("u"), E.sin(WAVE.y("u", "x"))
    eps = lambda a: E.param("eps", a)  # noqa: E731
    res = VA.integrate_by_parts(eps((1, 0)) * V1 + eps((0, 1)) * V2, {"eps"}, WAVE)
    div = B.total_derivative(V1, 0, WAVE) + B.total_derivative(V2, 1, WAVE)
    assert (res.adjoint["eps"] + div).is_zero()
    assert res.boundary.components == [eps((0, 0)) * V1, eps((0, 0)) * V2]


def test_ibp_rejects_nonlinear():
    e = E.param("phi", (1,))
    with pytest.raises(NotLinear):
        VA.integrate_by_parts(e * e, {"phi"}, S1)
    with pytest.raises(NotLinear):
        VA.integrate_by_parts(S1.y("u"), {"phi"}, S1)


@settings(max_examples=100)
@given(currents(SPEC2, max_order=2))
def test_divergences_are_null_lagrangians(W):
    src = VA.euler_lagrange(B.divergence(W, SPEC2), SPEC2)
    assert src.is_zero()


@settings(max_examples=30)
@given(exprs(SPEC2, max_order=1, max_terms=3), currents(SPEC2, max_order=1))
def test_el_invariant_under_divergence_gauge(L, W):
    a = VA.euler_lagrange(L, SPEC2)
    b = VA.euler_lagrange(L + B.divergence(W, SPEC2), SPEC2)
    for f in SPEC2.fields:
        assert (a[f] - b[f]).is_zero()


@settings(max_examples=40)
@given(exprs(SPEC2, max_order=2, max_terms=3))
def test_ibp_certificate_exact(c):
    dens = c * E.param("eps", (1, 1)) + c * c * E.param("eps", (0, 1))
    assert VA.integrate_by_parts(dens, {"eps"}, SPEC2).residual().is_zero()


@settings(max_examples=40)
@given(st.lists(polynomials(SPEC2, max_order=1), min_size=2, max_size=2))
def test_decide_divergence_reconstructs(W):
    Q = B.divergence(W, SPEC2)
    cert = VA.decide_divergence(Q, set(SPEC2.fields), SPEC2)
    assert cert.decided and cert.is_divergence
    assert cert.residual().is_zero()


def test_nonpolynomial_divergence_detected_but_not_rebuilt():
    u = WAVE.y("u")
    cert = VA.decide_divergence(B.total_derivative(E.sin(u), 1, WAVE), {"u"}, WAVE)
    assert all(not c.terms for c in cert.obstruction.values())
    assert not cert.decided


def test_decide_divergence_rejects():
    u = WAVE.y("u")
    cert = VA.decide_divergence(u * u, {"u"}, WAVE)
    assert not cert.is_divergence
    assert cert.obstruction["u"] == 2 * u


def test_first_variation_time_translation():
    mech = B.BundleSpec(("t",), ("u",), max_order=1)
    ut = mech.y("u", "t")
    lam = VA.Lagrangian(ut * ut / 2, mech)
    fv = VA.first_variation(lam, V.ProjVectorField(mech, [E.ONE], {}))
    assert fv.lie.is_zero()
    assert fv.contracted == ut * mech.y("u", "tt")
    assert (fv.boundary[0] - (-ut * ut / 2)).is_zero()
    assert fv.certified


def test_first_variation_vertical():
    ux = S1.y("u", "x")
    phi = E.cos(S1.x("x"))
    fv = VA.first_variation(VA.Lagrangian(ux * ux / 2, S1), V.vertical_field(S1, {"u": phi}))
    assert fv.lie == -E.sin(S1.x("x")) * ux
    assert fv.contracted == -phi * S1.y("u", "xx")
    assert fv.boundary[0] == phi * ux
    assert fv.certified


def test_first_variation_zero_field():
    ux = S1.y("u", "x")
    fv = VA.first_variation(VA.Lagrangian(ux * ux / 2, S1), V.vertical_field(S1, {"u": E.ZERO}))
    assert fv.contracted.is_zero() and fv.boundary.is_zero()


@settings(max_examples=25)
@given(exprs(SPEC2, max_order=1, max_terms=3), st.integers(0, 1000))
def test_first_variation_certificate(L, seed):
    rng = random.Random(seed)
    t, x = SPEC2.x("t"), SPEC2.x("x")
    xi = [E.const(rng.randint(-2, 2)) + x * E.const(rng.randint(-1, 1)), t * E.const(rng.randint(-1, 1))]
    Xi = {"u": SPEC2.y("v") * t, "v": E.sin(x) + SPEC2.y("u")}
    fv = VA.first_variation(VA.Lagrangian(L, SPEC2), V.ProjVectorField(SPEC2, xi, Xi))
    assert fv.residual().is_zero()


@pytest.mark.parametrize("name", ["half_ux2", "half_uxx2", "wave", "mechanics", "maxwell", "proca", "sphere"])
def test_corpus_against_sympy(corpus, name):
    pf = corpus(name)
    spec = pf.spec
    L = pf.numeric_density()
    src = VA.euler_lagrange(L, spec)
    ref = O.sympy_euler_lagrange(L, spec)
    for f in spec.fields:
        assert O.sympy_equal(O.to_sympy(src[f], spec), ref[f])
