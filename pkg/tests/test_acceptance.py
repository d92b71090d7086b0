"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary.  ``python tests/test_acceptance.py``
runs the same checks without pytest.
"""

import math
import os
import sys
import time

from hypothesis import given, settings

sys.path.insert(0, os.path.dirname(__file__))

from conftest import corpus_path  # noqa: E402
from strategies import SPEC2, currents, exprs, forms  # noqa: E402
from varseq import bundle as B  # noqa: E402
from varseq import cli  # noqa: E402
from varseq import expr as E  # noqa: E402
from varseq import forms as F  # noqa: E402
from varseq import jacobi as J  # noqa: E402
from varseq import noether as N  # noqa: E402
from varseq import oracle as O  # noqa: E402
from varseq import variational as VA  # noqa: E402
from varseq.dsl import load_problem, parse_problem, print_problem  # noqa: E402
from varseq.errors import BianchiNonzero  # noqa: E402

CORPUS = ["half_ux2", "half_uxx2", "wave", "mechanics", "maxwell", "proca", "metric2d", "sphere"]
RESULTS = []


def report(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


_cache = {}


def problem(name):
    if name not in _cache:
        _cache[name] = load_problem(corpus_path(name))
    return _cache[name]


def test_criterion_01_calculus_identities():
    start = time.perf_counter()
    count = {"forms": 0, "exprs": 0}

    @settings(max_examples=100, derandomize=True, database=None)
    @given(forms(SPEC2, max_order=3))
    def complexes(w):
        count["forms"] += 1
        assert F.d_H(F.d_H(w, SPEC2), SPEC2).is_zero()
        assert F.d_V(F.d_V(w, SPEC2), SPEC2).is_zero()
        assert (F.d_H(F.d_V(w, SPEC2), SPEC2) + F.d_V(F.d_H(w, SPEC2), SPEC2)).is_zero()

    @settings(max_examples=100, derandomize=True, database=None)
    @given(exprs(SPEC2, max_order=3))
    def commuting(e):
        count["exprs"] += 1
        a = B.total_derivative(B.total_derivative(e, 0, SPEC2), 1, SPEC2)
        b = B.total_derivative(B.total_derivative(e, 1, SPEC2), 0, SPEC2)
        assert (a - b).is_zero()

    complexes()
    commuting()
    elapsed = time.perf_counter() - start
    ok = count["forms"] >= 100 and count["exprs"] >= 100 and elapsed < 30
    report(1, ok, f"{count['forms']} forms, {count['exprs']} expressions, exact zeros, {elapsed:.1f}s (< 30s)")


def test_criterion_02_euler_lagrange_oracle():
    start = time.perf_counter()
    worst = []
    ok = True
    for name in ["half_ux2", "half_uxx2", "wave", "mechanics", "maxwell", "sphere"]:
        pf = problem(name)
        fd, _, axes = cli._fd_check(pf)
        tol = 1e-5 if pf.lagrangian.order <= 1 else 1e-4
        nodes = max(len(a) for a in axes)
        good = fd.relative and fd.max_error < tol and nodes <= 256
        ok = ok and good
        worst.append(f"{name} {fd.max_error:.1e}/{tol:.0e}")
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 60
    report(2, ok, "relative errors " + ", ".join(worst) + f"; {elapsed:.1f}s (< 60s)")


def test_criterion_03_null_lagrangians():
    count = [0]

    @settings(max_examples=100, derandomize=True, database=None)
    @given(currents(SPEC2, max_order=2))
    def null(W):
        count[0] += 1
        assert VA.euler_lagrange(B.divergence(W, SPEC2), SPEC2).is_zero()

    null()
    report(3, count[0] >= 100, f"E(D_mu W^mu) = 0 exactly for {count[0]} random currents")


def test_criterion_04_strong_noether_identity():
    checked = []
    ok = True
    for name in CORPUS:
        pf = problem(name)
        for lname, X in list(pf.lifts.items()) + list(pf.variations.items()):
            if not N.check_symmetry(pf.lagrangian, X).is_symmetry:
                continue
            cur = N.noether_current(pf.lagrangian, X)
            ok = ok and not cur.residual().terms
            checked.append(f"{name}/{lname}")
    ok = ok and len(checked) >= 8
    report(4, ok, f"D eps - L.E is the zero expression for {len(checked)} symmetries")


def test_criterion_05_self_adjoint():
    ok = True
    for name in CORPUS:
        Jop = J.linearize_el(problem(name).lagrangian)
        ok = ok and J.adjoint(Jop) == Jop
    report(5, ok, f"adjoint(J) == J coefficient-wise for {len(CORPUS)} Lagrangians")


def test_criterion_06_comparison_theorem():
    n = 0
    ok = True
    for name in CORPUS:
        pf = problem(name)
        for X in list(pf.lifts.values()) + list(pf.variations.values()):
            rep = J.verify_comparison_theorem(pf.lagrangian, X)
            adj = VA.variational_derivative(rep.residual, J._all_names([rep.residual], pf.spec), pf.spec)
            ok = ok and rep.passed and all(not c.terms for c in adj.values())
            n += 1
    report(6, ok, f"residual an exact divergence with certified current, {n} vertical fields")


def test_criterion_07_bianchi():
    mx = N.bianchi_decompose(problem("maxwell").lagrangian, problem("maxwell").lifts["gauge"])
    start = time.perf_counter()
    mg = problem("metric2d")
    mt = N.bianchi_decompose(mg.lagrangian, mg.lifts["diffeo"])
    elapsed = time.perf_counter() - start
    pr = problem("proca")
    pb = N.bianchi_decompose(pr.lagrangian, pr.lifts["gauge"])
    spec = pr.spec
    div_A = spec.y("At", "t") - spec.y("Ax", "x")  # D_mu A^mu, A^x = -Ax
    ok = (
        mx.vanishing
        and mt.vanishing
        and elapsed < 120
        and (pb.beta["eps"] + div_A).is_zero()
        and pb.beta["eps"].terms
        and mx.certified
        and mt.certified
        and pb.certified
    )
    report(7, ok, f"Maxwell beta = 0, metric beta = 0 ({elapsed:.2f}s < 120s), Proca beta = -D_mu A^mu")


def test_criterion_08_conjugate_point():
    pf = problem("sphere")
    Jop = J.linearize_el(pf.lagrangian)
    sol = O.jacobi_ode_solve(Jop, pf.background, pf.spec, interval=(0.0, 10.0))
    t_star = sol.conjugate_points[0]
    err = abs(t_star - math.pi)
    report(8, err < 1e-6, f"t* = {t_star:.12f}, |t* - pi| = {err:.1e} (< 1e-6)")


def test_criterion_09_hamiltonian():
    mx = problem("maxwell")
    H = N.hamiltonian_current(mx.lagrangian, mx.lifts["gauge"])
    div = H.divergence()
    pr = problem("proca")
    try:
        N.hamiltonian_current(pr.lagrangian, pr.lifts["gauge"])
        refused = False
    except BianchiNonzero:
        refused = True
    ok = not div.terms and H.certified and refused
    report(9, ok, "Maxwell D_mu H^mu is the zero expression; Proca refused with BianchiNonzero")


def test_criterion_10_certificates():
    counts = {"ibp": 0, "first": 0, "second": 0, "bianchi": 0}
    ok = True
    for name in CORPUS:
        pf = problem(name)
        lam, spec = pf.lagrangian, pf.spec
        L = lam.L
        lin = E.ZERO
        for v in L.free:
            if v.rank == E._JET:
                lin = lin + E.partial(L, v) * E.param(v.field + "__w", v.alpha)
        res = VA.integrate_by_parts(lin, {f + "__w" for f in spec.fields}, spec)
        ok = ok and not res.residual().terms
        counts["ibp"] += 1
        verticals = []
        for X in list(pf.lifts.values()) + list(pf.variations.values()):
            ok = ok and not VA.first_variation(lam, X).residual().terms
            counts["first"] += 1
            verticals.append(X if X.is_vertical else J.vertical_part(X))
            if X.params:
                br = N.bianchi_decompose(lam, X)
                ok = ok and not br.residual().terms
                counts["bianchi"] += 1
                res = VA.integrate_by_parts(br.omega, set(X.params), spec)
                ok = ok and not res.residual().terms
                counts["ibp"] += 1
        for Phi in verticals:
            for Psi in verticals:
                sv = J.second_variation(lam, Phi, Psi)
                ok = ok and not sv.residual().terms
                counts["second"] += 1
    detail = ", ".join(f"{k} {v}" for k, v in counts.items())
    report(10, ok, f"literal zero residuals: {detail}")


def test_criterion_11_cli():
    ok = True
    for name in CORPUS:
        text = open(corpus_path(name), encoding="utf-8").read()
        pf = parse_problem(text)
        ok = ok and parse_problem(print_problem(pf)).ast == pf.ast
    golden = os.path.join(os.path.dirname(__file__), "golden")
    files = sorted(os.listdir(golden))
    for fname in files:
        name, cmd, ext = fname.split(".")
        fmt = {"txt": "text", "tex": "latex", "json": "json"}[ext]
        a = cli.run_command(cmd, corpus_path(name), fmt)[1]
        b = cli.run_command(cmd, corpus_path(name), fmt)[1]
        with open(os.path.join(golden, fname), encoding="utf-8") as fh:
            ok = ok and a == b == fh.read()
    codes = {
        "proca bianchi": cli.main(["bianchi", corpus_path("proca")]),
        "maxwell bianchi": cli.main(["bianchi", corpus_path("maxwell"), "--format", "json"]),
        "proca hamiltonian": cli.main(["hamiltonian", corpus_path("proca")]),
        "overflow": cli.main(["el", corpus_path("half_uxx2"), "--max-order", "1"]),
    }
    ok = ok and codes == {"proca bianchi": 1, "maxwell bianchi": 0, "proca hamiltonian": 4, "overflow": 3}
    report(11, ok, f"round-trip on {len(CORPUS)} files, {len(files)} golden outputs byte-identical, exit codes {codes}")


if __name__ == "__main__":
    failed = 0
    for key, fn in sorted(globals().items()):
        if key.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
