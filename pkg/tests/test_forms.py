from hypothesis import given, settings

from strategies import SPEC2, forms
from varseq import bundle as B
from varseq import expr as E
from varseq import forms as F

spec = SPEC2


def test_generators_anticommute():
    t = F.contact("u", (0, 0))
    a = F.Form({(t, F.dx(0)): E.ONE})
    b = F.Form({(F.dx(0), t): E.ONE})
    assert (a + b).is_zero()
    assert F.Form({(F.dx(0), F.dx(0)): E.ONE}).is_zero()


def test_d_H_of_function_is_total_derivative():
    u = spec.y("u")
    f = F.Form.function(u * u)
    out = F.d_H(f, spec)
    for sigma in range(spec.n):
        assert out.coefficient((F.dx(sigma),)) == B.total_derivative(u * u, sigma, spec)


def test_d_H_on_contact_form():
    th = F.Form({(F.contact("u", (0, 0)),): E.ONE})
    out = F.d_H(th, spec)
    expected = F.Form(
        {(F.contact("u", (1, 0)), F.dx(0)): -E.ONE, (F.contact("u", (0, 1)), F.dx(1)): -E.ONE}
    )
    assert (out - expected).is_zero()


def test_exterior_derivative_of_dy_splits():
    # d(y) = theta + y_mu dx^mu in the contact basis
    f = F.Form.function(spec.y("u"))
    total = F.d(f, spec)
    ext = F.from_exterior({("y", "u", (0, 0)): E.ONE}, spec)
    assert (total - ext).is_zero()


def test_density_and_current_forms():
    P = [spec.y("u", "t"), spec.y("u", "x")]
    J = F.current_form(P, spec)
    assert F.current_of(J, spec) == P
    dJ = F.d_H(J, spec)
    assert F.density_of(dJ, spec) == B.divergence(P, spec)


@settings(max_examples=100)
@given(forms())
def test_d_H_squared(w):
    assert F.d_H(F.d_H(w, spec), spec).is_zero()


@settings(max_examples=100)
@given(forms())
def test_d_V_squared(w):
    assert F.d_V(F.d_V(w, spec), spec).is_zero()


@settings(max_examples=100)
@given(forms())
def test_anticommutator(w):
    assert (F.d_H(F.d_V(w, spec), spec) + F.d_V(F.d_H(w, spec), spec)).is_zero()


@settings(max_examples=60)
@given(forms(), forms())
def test_d_H_is_graded_derivation(a, b):
    lhs = F.d_H(a.wedge(b), spec)
    deg_terms = {}
    for gens, c in a.terms.items():
        deg_terms.setdefault(len(gens), []).append((gens, c))
    rhs = F.Form()
    for k, terms in deg_terms.items():
        ak = F.Form(dict(terms))
        sign = -1 if k % 2 else 1
        rhs = rhs + F.d_H(ak, spec).wedge(b) + ak.wedge(F.d_H(b, spec)).scale(E.const(sign))
    assert (lhs - rhs).is_zero()


@settings(max_examples=60)
@given(forms(), forms())
def test_interior_product_is_graded_derivation(a, b):
    X = F.VectorData(
        [spec.y("v"), E.ONE],
        {
            (f, al): spec.y("u") * E.const(1 + sum(al)) + spec.y(f, al)
            for f in spec.fields
            for al in B.enumerate_multiindices(2, 4)
        },
    )
    lhs = F.interior_product(X, a.wedge(b), spec)
    rhs = F.Form()
    for gens, c in a.terms.items():
        ak = F.Form({gens: c})
        sign = -1 if len(gens) % 2 else 1
        rhs = rhs + F.interior_product(X, ak, spec).wedge(b) + ak.wedge(F.interior_product(X, b, spec)).scale(E.const(sign))
    assert (lhs - rhs).is_zero()
